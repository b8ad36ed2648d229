#include <cstdio>
#include <functional>

#include "semtool/errors.hpp"
#include "semtool/evalkit.hpp"

namespace semtool {

namespace {

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

std::string pct(double v) { return fixed(v * 100.0, 1) + "%"; }
std::string mrr(double v) { return fixed(v, 4); }

struct Table {
    std::string title;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> body;
};

std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void emit_markdown(std::string& out, const Table& t) {
    out += "## " + t.title + "\n\n";
    auto row = [&out](const std::vector<std::string>& cells) {
        out += "|";
        for (const auto& c : cells) out += " " + c + " |";
        out += "\n";
    };
    row(t.header);
    out += "|";
    for (size_t i = 0; i < t.header.size(); ++i) out += "---:|";
    out += "\n";
    for (const auto& r : t.body) row(r);
    out += "\n";
}

void emit_csv(std::string& out, const Table& t) {
    out += "# " + t.title + "\n";
    auto row = [&out](const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ",";
            out += csv_cell(cells[i]);
        }
        out += "\n";
    };
    row(t.header);
    for (const auto& r : t.body) row(r);
    out += "\n";
}

Table aggregate_table(const MetricsReport& report, RowScope scope, const std::string& title,
                      const RenderOptions& options) {
    Table t;
    t.title = title;
    t.header = {"K", "Precision@K", "Recall@K", "F1@K", "Hit Rate@K", "MRR", "Token Reduction",
                "Latency (ms)", "Latency p95 (ms)"};
    for (const auto k : report.ks) {
        const auto& r = report.row(k, scope);
        t.body.push_back({std::to_string(k), pct(r.precision), pct(r.recall), pct(r.f1), pct(r.hit_rate),
                          mrr(r.mrr), pct(r.trr),
                          options.include_timing ? fixed(r.latency_ms_mean, 1) : "n/a",
                          options.include_timing ? fixed(r.latency_ms_p95, 1) : "n/a"});
    }
    return t;
}

Table per_server_table(const MetricsReport& report, const std::string& title,
                       const std::function<std::string(const MetricsRow&)>& cell) {
    Table t;
    t.title = title;
    t.header = {"K"};
    for (const auto& tag : report.server_tags) t.header.push_back(tag);
    for (const auto k : report.ks) {
        std::vector<std::string> r{std::to_string(k)};
        for (const auto& tag : report.server_tags) r.push_back(cell(report.row(k, RowScope::PerServer, tag)));
        t.body.push_back(std::move(r));
    }
    return t;
}

std::vector<Table> build_tables(const MetricsReport& report, const RenderOptions& options) {
    std::vector<Table> tables;
    tables.push_back(aggregate_table(report, RowScope::Macro,
                                     "Table 1a: Retrieval performance by K (macro: mean of per-server means)",
                                     options));
    tables.push_back(aggregate_table(report, RowScope::Micro,
                                     "Table 1b: Retrieval performance by K (micro: mean over all queries)",
                                     options));

    Table hr;
    hr.title = "Table 2: Hit Rate@K (%) and MRR per server";
    hr.header = {"K"};
    for (const auto& tag : report.server_tags) {
        hr.header.push_back(tag + " HR");
        hr.header.push_back(tag + " MRR");
    }
    for (const auto k : report.ks) {
        std::vector<std::string> r{std::to_string(k)};
        for (const auto& tag : report.server_tags) {
            const auto& row = report.row(k, RowScope::PerServer, tag);
            r.push_back(pct(row.hit_rate));
            r.push_back(mrr(row.mrr));
        }
        hr.body.push_back(std::move(r));
    }
    tables.push_back(std::move(hr));

    tables.push_back(per_server_table(report, "Table 3: Precision@K (%) per server",
                                      [](const MetricsRow& r) { return pct(r.precision); }));
    tables.push_back(per_server_table(report, "Table 4: Recall@K (%) per server",
                                      [](const MetricsRow& r) { return pct(r.recall); }));
    tables.push_back(per_server_table(report, "Table 5: F1@K (%) per server",
                                      [](const MetricsRow& r) { return pct(r.f1); }));
    tables.push_back(per_server_table(report, "Table 6: Token reduction (%) per server",
                                      [](const MetricsRow& r) { return pct(r.trr); }));
    return tables;
}

const char* scope_name(RowScope scope) {
    switch (scope) {
        case RowScope::Macro: return "macro";
        case RowScope::Micro: return "micro";
        case RowScope::PerServer: return "server";
    }
    return "micro";
}

}  // namespace

ReportFormat parse_report_format(const std::string& text) {
    if (text == "md" || text == "markdown") return ReportFormat::Markdown;
    if (text == "csv") return ReportFormat::Csv;
    throw UsageError("unknown report format '" + text + "' (expected md or csv)");
}

std::string render_report(const MetricsReport& report, ReportFormat format, const RenderOptions& options) {
    const auto tables = build_tables(report, options);
    std::string out;
    if (format == ReportFormat::Markdown) {
        out += "# Tool retrieval evaluation\n\n";
        out += "- Queries: " + std::to_string(report.query_count) + " across " +
               std::to_string(report.server_tags.size()) + " server(s)\n";
        out += "- Catalog: " + std::to_string(report.catalog_size) + " tools, hash `" + report.catalog_hash + "`\n";
        out += "- Threshold: " + (report.threshold ? fixed(*report.threshold, 4) : std::string("none")) + "\n\n";
        for (const auto& t : tables) emit_markdown(out, t);
    } else {
        for (const auto& t : tables) emit_csv(out, t);
    }
    return out;
}

nlohmann::json report_to_json(const MetricsReport& report, const RenderOptions& options) {
    using nlohmann::json;
    json doc;
    doc["catalog_hash"] = report.catalog_hash;
    doc["catalog_size"] = report.catalog_size;
    doc["query_count"] = report.query_count;
    doc["ks"] = report.ks;
    doc["server_tags"] = report.server_tags;
    doc["threshold"] = report.threshold ? json(*report.threshold) : json(nullptr);

    doc["rows"] = json::array();
    for (const auto& r : report.rows) {
        json row = {{"k", r.k},
                    {"scope", scope_name(r.scope)},
                    {"query_count", r.query_count},
                    {"precision", r.precision},
                    {"recall", r.recall},
                    {"f1", r.f1},
                    {"hit_rate", r.hit_rate},
                    {"mrr", r.mrr},
                    {"trr", r.trr}};
        if (r.scope == RowScope::PerServer) row["server_tag"] = r.server_tag;
        if (options.include_timing) {
            row["latency_ms_mean"] = r.latency_ms_mean;
            row["latency_ms_p95"] = r.latency_ms_p95;
        }
        doc["rows"].push_back(std::move(row));
    }

    doc["queries"] = json::array();
    for (const auto& q : report.per_query) {
        json item = {{"query_id", q.query_id},
                     {"server_tag", q.server_tag},
                     {"k", q.k},
                     {"hits", q.hits},
                     {"precision", q.precision},
                     {"recall", q.recall},
                     {"hit", q.hit},
                     {"trr", q.trr},
                     {"fallback_applied", q.fallback_applied}};
        item["first_relevant_rank"] = q.first_relevant_rank ? json(*q.first_relevant_rank) : json(nullptr);
        item["retrieved"] = json::array();
        for (const auto& key : q.retrieved) item["retrieved"].push_back(key.qualified());
        if (options.include_timing) item["latency_ms"] = q.latency_ms;
        doc["queries"].push_back(std::move(item));
    }
    return doc;
}

}  // namespace semtool

#include "semtool/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "semtool/errors.hpp"
#include "semtool/pipeline.hpp"

namespace semtool {

using nlohmann::json;

std::string to_string(QueryType type) {
    switch (type) {
        case QueryType::Simple: return "simple";
        case QueryType::Task: return "task";
        case QueryType::Ambiguous: return "ambiguous";
        case QueryType::Edge: return "edge";
    }
    return "simple";
}

QueryType parse_query_type(const std::string& text) {
    if (text == "simple") return QueryType::Simple;
    if (text == "task") return QueryType::Task;
    if (text == "ambiguous") return QueryType::Ambiguous;
    if (text == "edge") return QueryType::Edge;
    throw ValidationError("unknown query_type '" + text + "'");
}

BenchmarkDataset parse_dataset(const std::string& json_text, const IndexSnapshot* snapshot) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("dataset is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("queries") || !doc["queries"].is_array()) {
        throw ValidationError("dataset must be an object with a 'queries' array");
    }

    BenchmarkDataset ds;
    if (doc.contains("catalog_digest")) {
        if (!doc["catalog_digest"].is_string()) throw ValidationError("catalog_digest must be a string");
        ds.catalog_digest = doc["catalog_digest"].get<std::string>();
    }
    if (snapshot != nullptr && !ds.catalog_digest.empty() && ds.catalog_digest != snapshot->catalog_hash) {
        throw ValidationError("dataset was labelled against catalog " + ds.catalog_digest +
                              " but the index holds catalog " + snapshot->catalog_hash);
    }

    std::vector<std::string> problems;
    std::set<std::string> ids;
    size_t position = 0;
    for (const auto& item : doc["queries"]) {
        ++position;
        const std::string where = "query #" + std::to_string(position);
        if (!item.is_object()) {
            problems.push_back(where + ": not an object");
            continue;
        }
        BenchmarkQuery q;
        auto text_field = [&](const char* name, std::string& out) {
            if (!item.contains(name) || !item[name].is_string() || item[name].get<std::string>().empty()) {
                problems.push_back(where + ": missing or empty '" + name + "'");
                return false;
            }
            out = item[name].get<std::string>();
            return true;
        };
        if (!text_field("query_id", q.query_id)) continue;
        const std::string label = "query " + q.query_id;
        if (!text_field("text", q.text) || !text_field("server_tag", q.server_tag)) continue;
        if (!ids.insert(q.query_id).second) {
            problems.push_back(label + ": duplicate query_id");
            continue;
        }
        try {
            q.query_type = parse_query_type(item.value("query_type", std::string("simple")));
        } catch (const ValidationError& e) {
            problems.push_back(label + ": " + e.what());
        }
        if (!item.contains("relevant") || !item["relevant"].is_array() || item["relevant"].empty()) {
            problems.push_back(label + ": empty relevant set");
            continue;
        }
        for (const auto& r : item["relevant"]) {
            if (!r.is_string()) {
                problems.push_back(label + ": relevant entries must be strings");
                continue;
            }
            try {
                auto key = ToolKey::parse(r.get<std::string>());
                if (snapshot != nullptr && snapshot->find(key) == nullptr) {
                    problems.push_back(label + ": unknown tool " + key.qualified());
                    continue;
                }
                q.relevant.insert(std::move(key));
            } catch (const ValidationError& e) {
                problems.push_back(label + ": " + e.what());
            }
        }
        ds.queries.push_back(std::move(q));
    }

    if (!problems.empty()) {
        std::string text = "dataset validation failed:";
        for (const auto& p : problems) text += "\n  " + p;
        throw ValidationError(text);
    }
    return ds;
}

BenchmarkDataset load_dataset(const std::string& path, const IndexSnapshot* snapshot) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open dataset " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str(), snapshot);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

namespace {

std::size_t count_hits(const std::vector<ToolKey>& retrieved, const std::set<ToolKey>& relevant,
                       std::int64_t k) {
    const auto n = std::min(retrieved.size(), static_cast<size_t>(std::max<std::int64_t>(k, 0)));
    std::size_t hits = 0;
    for (size_t i = 0; i < n; ++i) hits += relevant.count(retrieved[i]);
    return hits;
}

}  // namespace

double precision_at_k(const std::vector<ToolKey>& retrieved, const std::set<ToolKey>& relevant,
                      std::int64_t k) {
    if (k < 1) throw UsageError("k must be at least 1");
    return static_cast<double>(count_hits(retrieved, relevant, k)) / static_cast<double>(k);
}

double recall_at_k(const std::vector<ToolKey>& retrieved, const std::set<ToolKey>& relevant,
                   std::int64_t k) {
    if (relevant.empty()) throw UsageError("recall is undefined for an empty relevant set");
    return static_cast<double>(count_hits(retrieved, relevant, k)) / static_cast<double>(relevant.size());
}

double f1_score(double precision, double recall) {
    const double denom = precision + recall;
    return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

std::optional<std::int64_t> first_relevant_rank(const std::vector<ToolKey>& retrieved,
                                                const std::set<ToolKey>& relevant, std::int64_t k) {
    const auto n = std::min(retrieved.size(), static_cast<size_t>(std::max<std::int64_t>(k, 0)));
    for (size_t i = 0; i < n; ++i) {
        if (relevant.count(retrieved[i])) return static_cast<std::int64_t>(i + 1);
    }
    return std::nullopt;
}

double hit_rate(const std::vector<bool>& hits) {
    if (hits.empty()) throw UsageError("hit rate needs at least one query");
    const auto n = std::count(hits.begin(), hits.end(), true);
    return static_cast<double>(n) / static_cast<double>(hits.size());
}

double mean_reciprocal_rank(const std::vector<std::optional<std::int64_t>>& first_ranks, std::int64_t k) {
    if (first_ranks.empty()) throw UsageError("MRR needs at least one query");
    double sum = 0.0;
    for (const auto& r : first_ranks) {
        if (r && *r >= 1 && *r <= k) sum += 1.0 / static_cast<double>(*r);
    }
    return sum / static_cast<double>(first_ranks.size());
}

double percentile(std::vector<double> samples, double pct) {
    if (samples.empty()) return 0.0;
    std::sort(samples.begin(), samples.end());
    const auto rank = static_cast<size_t>(std::ceil(pct / 100.0 * static_cast<double>(samples.size())));
    return samples[std::clamp<size_t>(rank, 1, samples.size()) - 1];
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

namespace {

MetricsRow summarize(std::int64_t k, RowScope scope, const std::string& tag,
                     const std::vector<const QueryResult*>& results) {
    MetricsRow row;
    row.k = k;
    row.scope = scope;
    row.server_tag = tag;
    row.query_count = results.size();
    if (results.empty()) return row;

    std::vector<double> latencies;
    std::vector<bool> hits;
    std::vector<std::optional<std::int64_t>> ranks;
    for (const auto* r : results) {
        row.precision += r->precision;
        row.recall += r->recall;
        row.trr += r->trr;
        row.latency_ms_mean += r->latency_ms;
        latencies.push_back(r->latency_ms);
        hits.push_back(r->hit);
        ranks.push_back(r->first_relevant_rank);
    }
    const auto n = static_cast<double>(results.size());
    row.precision /= n;
    row.recall /= n;
    row.trr /= n;
    row.latency_ms_mean /= n;
    row.latency_ms_p95 = percentile(latencies, 95.0);
    row.hit_rate = hit_rate(hits);
    row.mrr = mean_reciprocal_rank(ranks, k);
    row.f1 = f1_score(row.precision, row.recall);
    return row;
}

MetricsRow macro_average(std::int64_t k, const std::vector<MetricsRow>& servers,
                         const std::vector<const QueryResult*>& all) {
    MetricsRow row;
    row.k = k;
    row.scope = RowScope::Macro;
    row.query_count = all.size();
    if (servers.empty()) return row;
    for (const auto& s : servers) {
        row.precision += s.precision;
        row.recall += s.recall;
        row.hit_rate += s.hit_rate;
        row.mrr += s.mrr;
        row.trr += s.trr;
        row.latency_ms_mean += s.latency_ms_mean;
    }
    const auto n = static_cast<double>(servers.size());
    row.precision /= n;
    row.recall /= n;
    row.hit_rate /= n;
    row.mrr /= n;
    row.trr /= n;
    row.latency_ms_mean /= n;
    std::vector<double> latencies;
    for (const auto* r : all) latencies.push_back(r->latency_ms);
    row.latency_ms_p95 = percentile(latencies, 95.0);
    row.f1 = f1_score(row.precision, row.recall);
    return row;
}

}  // namespace

const MetricsRow& MetricsReport::row(std::int64_t k, RowScope scope, const std::string& server_tag) const {
    for (const auto& r : rows) {
        if (r.k == k && r.scope == scope && (scope != RowScope::PerServer || r.server_tag == server_tag)) {
            return r;
        }
    }
    throw UsageError("report has no row for k=" + std::to_string(k));
}

MetricsReport aggregate(std::vector<QueryResult> per_query, const std::vector<std::int64_t>& ks) {
    MetricsReport report;
    report.ks = ks;
    std::sort(per_query.begin(), per_query.end(), [](const QueryResult& a, const QueryResult& b) {
        return std::tie(a.k, a.query_id) < std::tie(b.k, b.query_id);
    });
    report.per_query = std::move(per_query);

    std::set<std::string> tags;
    std::set<std::string> ids;
    for (const auto& r : report.per_query) {
        tags.insert(r.server_tag);
        ids.insert(r.query_id);
    }
    report.server_tags.assign(tags.begin(), tags.end());
    report.query_count = ids.size();

    for (const auto k : ks) {
        std::vector<const QueryResult*> all;
        std::map<std::string, std::vector<const QueryResult*>> by_server;
        for (const auto& r : report.per_query) {
            if (r.k != k) continue;
            all.push_back(&r);
            by_server[r.server_tag].push_back(&r);
        }
        std::vector<MetricsRow> servers;
        for (const auto& tag : report.server_tags) {
            servers.push_back(summarize(k, RowScope::PerServer, tag, by_server[tag]));
        }
        report.rows.push_back(macro_average(k, servers, all));
        report.rows.push_back(summarize(k, RowScope::Micro, {}, all));
        for (auto& s : servers) report.rows.push_back(std::move(s));
    }
    return report;
}

MetricsReport evaluate(const IndexSnapshot& snapshot, const Embedder& embedder,
                       const BenchmarkDataset& dataset, const std::vector<std::int64_t>& ks,
                       std::optional<double> threshold) {
    if (dataset.queries.empty()) throw UsageError("dataset has no queries");
    if (ks.empty()) throw UsageError("no k values to evaluate");
    for (const auto k : ks) {
        if (k < 1) throw UsageError("k must be at least 1");
    }

    std::vector<QueryResult> results;
    results.reserve(dataset.queries.size() * ks.size());
    for (const auto k : ks) {
        for (const auto& q : dataset.queries) {
            Selection sel;
            try {
                sel = select_tools(snapshot, embedder, q.text, k, threshold);
            } catch (const Error& e) {
                throw Error("query " + q.query_id + ": " + e.what());
            }
            QueryResult r;
            r.query_id = q.query_id;
            r.server_tag = q.server_tag;
            r.k = k;
            for (const auto& s : sel.ranked) r.retrieved.push_back(s.tool_key);
            r.hits = count_hits(r.retrieved, q.relevant, k);
            r.precision = precision_at_k(r.retrieved, q.relevant, k);
            r.recall = recall_at_k(r.retrieved, q.relevant, k);
            r.first_relevant_rank = first_relevant_rank(r.retrieved, q.relevant, k);
            r.hit = r.first_relevant_rank.has_value();
            r.trr = sel.trr;
            r.latency_ms = sel.retrieval_latency_ms;
            r.fallback_applied = sel.fallback_applied;
            results.push_back(std::move(r));
        }
    }

    auto report = aggregate(std::move(results), ks);
    report.catalog_size = snapshot.entries.size();
    report.catalog_hash = snapshot.catalog_hash;
    report.threshold = threshold;
    return report;
}

}  // namespace semtool

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "semtool/errors.hpp"

namespace testsupport {

std::string fixture(const std::string& relative) { return std::string(SEMTOOL_FIXTURE_DIR) + "/" + relative; }

std::string tool_binary(const std::string& name) { return std::string(SEMTOOL_TOOLS_DIR) + "/" + name; }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << content;
}

TempDir::TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    for (;;) {
        root_ = std::filesystem::temp_directory_path() / ("semtool-test-" + std::to_string(rng()));
        if (std::filesystem::create_directory(root_)) return;
    }
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(root_, ec);
}

nlohmann::ordered_json tool_json(const std::string& name, const std::string& description,
                                 const std::vector<std::string>& required_params) {
    nlohmann::ordered_json props = nlohmann::ordered_json::object();
    for (const auto& p : required_params) props[p] = {{"type", "string"}, {"description", "the " + p}};
    nlohmann::ordered_json schema = {{"type", "object"}, {"properties", props}};
    if (!required_params.empty()) schema["required"] = required_params;
    return {{"name", name}, {"description", description}, {"inputSchema", schema}};
}

semtool::ToolSchema make_tool(const std::string& server_id, const std::string& name,
                              const std::string& description) {
    return semtool::normalize_tool(server_id, tool_json(name, description, {"path"}));
}

TableEmbedder::TableEmbedder(semtool::ProviderSpec spec, std::map<std::string, std::vector<float>> table)
    : spec_(std::move(spec)), table_(std::move(table)) {}

semtool::EmbeddingVector TableEmbedder::embed(std::string_view text) const {
    const auto it = table_.find(std::string(text));
    if (it == table_.end()) throw semtool::UsageError("no vector for '" + std::string(text) + "'");
    return {it->second, spec_.provider_id};
}

std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> gauss;
    std::vector<double> v(dim);
    double sq = 0.0;
    do {
        sq = 0.0;
        for (auto& x : v) {
            x = gauss(rng);
            sq += x * x;
        }
    } while (sq == 0.0);
    std::vector<float> out(dim);
    const double norm = std::sqrt(sq);
    for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
    return out;
}

semtool::IndexSnapshot random_snapshot(std::mt19937_64& rng, std::size_t tools, std::uint32_t dim,
                                       std::size_t servers) {
    semtool::IndexSnapshot snap;
    snap.provider_id = "random";
    snap.tokenizer_id = "whitespace-punct";
    snap.dimension = dim;
    snap.build_timestamp_ms = static_cast<std::int64_t>(rng() % 2'000'000'000'000ULL);
    std::uniform_int_distribution<std::uint64_t> tokens(1, 800);
    std::set<semtool::ToolKey> used;
    while (snap.entries.size() < tools) {
        semtool::IndexedTool t;
        t.tool_key = {"s" + std::to_string(rng() % servers), "t" + std::to_string(rng() % (tools * 4 + 8))};
        if (!used.insert(t.tool_key).second) continue;
        // Every fifth tool copies an earlier vector so score ties occur.
        if (!snap.entries.empty() && rng() % 5 == 0) {
            t.vector = snap.entries[rng() % snap.entries.size()].vector;
        } else {
            t.vector = {random_unit(rng, dim), snap.provider_id};
        }
        t.document_text = "Tool: " + t.tool_key.name;
        t.raw_schema_text = "{\"name\":\"" + t.tool_key.name + "\"}";
        t.schema_token_count = tokens(rng);
        snap.entries.push_back(std::move(t));
    }
    std::sort(snap.entries.begin(), snap.entries.end(),
              [](const auto& a, const auto& b) { return a.tool_key < b.tool_key; });
    snap.catalog_hash = "h" + std::to_string(rng());
    return snap;
}

RandomBenchmark random_benchmark(std::mt19937_64& rng, const semtool::IndexSnapshot& snapshot,
                                 std::size_t queries) {
    RandomBenchmark out;
    out.dataset.catalog_digest = snapshot.catalog_hash;
    const auto n = snapshot.entries.size();
    for (std::size_t i = 0; i < queries; ++i) {
        semtool::BenchmarkQuery q;
        q.query_id = "q" + std::to_string(i);
        q.text = q.query_id;
        q.server_tag = "tag" + std::to_string(rng() % 4);
        const std::size_t want = 1 + rng() % std::min<std::size_t>(n, 5);
        while (q.relevant.size() < want) q.relevant.insert(snapshot.entries[rng() % n].tool_key);
        // Half of the queries point near one of their relevant tools so that
        // hits and early ranks actually occur.
        std::vector<float> v = random_unit(rng, snapshot.dimension);
        if (rng() % 2 == 0) {
            const auto& target = snapshot.find(*q.relevant.begin())->vector.values;
            double sq = 0.0;
            for (std::size_t d = 0; d < v.size(); ++d) {
                v[d] = static_cast<float>(target[d] + 0.3 * v[d]);
                sq += static_cast<double>(v[d]) * v[d];
            }
            for (auto& x : v) x = static_cast<float>(x / std::sqrt(sq));
        }
        out.query_vectors[q.text] = std::move(v);
        out.dataset.queries.push_back(std::move(q));
    }
    return out;
}

namespace oracle {

std::vector<Ranked> brute_force_search(const semtool::IndexSnapshot& snapshot, const std::vector<float>& query,
                                       long long k, std::optional<double> threshold) {
    std::vector<Ranked> all;
    for (const auto& e : snapshot.entries) {
        double dot = 0.0;
        for (std::size_t i = 0; i < query.size(); ++i) {
            dot += static_cast<double>(e.vector.values[i]) * static_cast<double>(query[i]);
        }
        all.push_back({e.tool_key.server_id, e.tool_key.name, dot});
    }
    std::stable_sort(all.begin(), all.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.server_id != b.server_id) return a.server_id < b.server_id;
        return a.name < b.name;
    });
    std::vector<Ranked> out;
    for (const auto& r : all) {
        if (threshold && r.score < *threshold) continue;
        if (static_cast<long long>(out.size()) == k) break;
        out.push_back(r);
    }
    return out;
}

namespace {

RowMetrics mean_row(const std::vector<QueryMetrics>& qs) {
    RowMetrics row{qs.size(), 0, 0, 0, 0, 0, 0};
    for (const auto& q : qs) {
        row.precision += q.precision;
        row.recall += q.recall;
        row.hit_rate += q.hit;
        row.mrr += q.reciprocal_rank;
        row.trr += q.trr;
    }
    const double n = static_cast<double>(qs.size());
    row.precision /= n;
    row.recall /= n;
    row.hit_rate /= n;
    row.mrr /= n;
    row.trr /= n;
    row.f1 = row.precision + row.recall > 0 ? 2 * row.precision * row.recall / (row.precision + row.recall) : 0.0;
    return row;
}

}  // namespace

Report evaluate(const semtool::IndexSnapshot& snapshot, const semtool::BenchmarkDataset& dataset,
                const std::map<std::string, std::vector<float>>& query_vectors, const std::vector<long long>& ks) {
    double baseline = 0;
    std::map<std::pair<std::string, std::string>, double> tokens;
    for (const auto& e : snapshot.entries) {
        baseline += static_cast<double>(e.schema_token_count);
        tokens[{e.tool_key.server_id, e.tool_key.name}] = static_cast<double>(e.schema_token_count);
    }

    // Full ranking once per query; each k reads a prefix of it.
    std::map<std::string, std::vector<Ranked>> full;
    for (const auto& q : dataset.queries) {
        full[q.query_id] = brute_force_search(snapshot, query_vectors.at(q.text),
                                              static_cast<long long>(snapshot.entries.size()), std::nullopt);
    }

    Report report;
    for (const long long k : ks) {
        std::vector<QueryMetrics> all;
        std::map<std::string, std::vector<QueryMetrics>> by_server;
        for (const auto& q : dataset.queries) {
            const auto& ranked = full.at(q.query_id);
            const auto depth = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
            double hits = 0, first_rank = 0, selected = 0;
            for (std::size_t i = 0; i < depth; ++i) {
                selected += tokens.at({ranked[i].server_id, ranked[i].name});
                bool relevant = false;
                for (const auto& key : q.relevant) {
                    if (key.server_id == ranked[i].server_id && key.name == ranked[i].name) relevant = true;
                }
                if (relevant) {
                    hits += 1;
                    if (first_rank == 0) first_rank = static_cast<double>(i + 1);
                }
            }
            QueryMetrics m;
            m.precision = hits / static_cast<double>(k);
            m.recall = hits / static_cast<double>(q.relevant.size());
            m.hit = hits > 0 ? 1.0 : 0.0;
            m.reciprocal_rank = first_rank > 0 ? 1.0 / first_rank : 0.0;
            m.trr = 1.0 - selected / baseline;
            report.per_query[{k, q.query_id}] = m;
            all.push_back(m);
            by_server[q.server_tag].push_back(m);
        }
        report.micro[k] = mean_row(all);

        RowMetrics macro{all.size(), 0, 0, 0, 0, 0, 0};
        for (const auto& [tag, qs] : by_server) {
            const auto row = mean_row(qs);
            report.per_server[{k, tag}] = row;
            macro.precision += row.precision;
            macro.recall += row.recall;
            macro.hit_rate += row.hit_rate;
            macro.mrr += row.mrr;
            macro.trr += row.trr;
        }
        const double servers = static_cast<double>(by_server.size());
        macro.precision /= servers;
        macro.recall /= servers;
        macro.hit_rate /= servers;
        macro.mrr /= servers;
        macro.trr /= servers;
        macro.f1 = macro.precision + macro.recall > 0
                       ? 2 * macro.precision * macro.recall / (macro.precision + macro.recall)
                       : 0.0;
        report.macro[k] = macro;
    }
    return report;
}

}  // namespace oracle

}  // namespace testsupport

namespace testsupport {

TableEmbedder benchmark_embedder(const semtool::IndexSnapshot& snapshot, const RandomBenchmark& bench) {
    semtool::ProviderSpec spec;
    spec.provider_id = snapshot.provider_id;
    spec.dimension = snapshot.dimension;
    return TableEmbedder(spec, bench.query_vectors);
}

std::string compare_to_oracle(const semtool::MetricsReport& got, const oracle::Report& want, double tol) {
    using semtool::RowScope;
    std::ostringstream diffs;
    int n = 0;
    auto check = [&](const std::string& where, double a, double b) {
        if (std::fabs(a - b) <= tol) return;
        if (n++ < 8) diffs << where << ": got " << a << " want " << b << "\n";
    };
    auto rows = [&](const std::string& where, const semtool::MetricsRow& r, const oracle::RowMetrics& w) {
        if (r.query_count != w.count && n++ < 8) diffs << where << ": count " << r.query_count << "\n";
        check(where + " precision", r.precision, w.precision);
        check(where + " recall", r.recall, w.recall);
        check(where + " f1", r.f1, w.f1);
        check(where + " hit_rate", r.hit_rate, w.hit_rate);
        check(where + " mrr", r.mrr, w.mrr);
        check(where + " trr", r.trr, w.trr);
    };
    for (const auto& [k, w] : want.micro) rows("micro k=" + std::to_string(k), got.row(k, RowScope::Micro), w);
    for (const auto& [k, w] : want.macro) rows("macro k=" + std::to_string(k), got.row(k, RowScope::Macro), w);
    for (const auto& [key, w] : want.per_server) {
        rows("server " + key.second + " k=" + std::to_string(key.first),
             got.row(key.first, RowScope::PerServer, key.second), w);
    }
    if (got.per_query.size() != want.per_query.size()) {
        diffs << "per-query count " << got.per_query.size() << " vs " << want.per_query.size() << "\n";
        return diffs.str();
    }
    for (const auto& q : got.per_query) {
        const auto it = want.per_query.find({q.k, q.query_id});
        if (it == want.per_query.end()) {
            diffs << "unexpected query " << q.query_id << "\n";
            continue;
        }
        const auto where = q.query_id + " k=" + std::to_string(q.k);
        check(where + " precision", q.precision, it->second.precision);
        check(where + " recall", q.recall, it->second.recall);
        check(where + " hit", q.hit ? 1.0 : 0.0, it->second.hit);
        check(where + " rr", q.first_relevant_rank ? 1.0 / double(*q.first_relevant_rank) : 0.0,
              it->second.reciprocal_rank);
        check(where + " trr", q.trr, it->second.trr);
    }
    return diffs.str();
}

}  // namespace testsupport

namespace testsupport {

void MutableServers::set(const std::string& server, nlohmann::ordered_json tools) {
    std::lock_guard lock(mutex_);
    servers_[server] = std::move(tools);
}

void MutableServers::add(const std::string& server, nlohmann::ordered_json tool) {
    std::lock_guard lock(mutex_);
    servers_[server].push_back(std::move(tool));
}

void MutableServers::remove(const std::string& server, const std::string& tool_name) {
    std::lock_guard lock(mutex_);
    auto& tools = servers_[server];
    for (auto it = tools.begin(); it != tools.end(); ++it) {
        if ((*it)["name"] == tool_name) {
            tools.erase(it);
            return;
        }
    }
}

void MutableServers::hold() {
    std::lock_guard lock(mutex_);
    held_ = true;
    entered_ = false;
}

void MutableServers::wait_until_held() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [this] { return entered_; });
}

void MutableServers::release() {
    std::lock_guard lock(mutex_);
    held_ = false;
    cv_.notify_all();
}

semtool::TransportFactory MutableServers::factory() {
    return [this](const semtool::ServerEndpoint& ep) -> std::unique_ptr<semtool::Transport> {
        {
            std::unique_lock lock(mutex_);
            if (held_) {
                entered_ = true;
                cv_.notify_all();
                cv_.wait(lock, [this] { return !held_; });
            }
        }
        if (failing_) throw semtool::TransportError("server " + ep.server_id + " is down");
        std::lock_guard lock(mutex_);
        const auto responder = std::make_shared<semtool::CatalogResponder>(servers_.at(ep.server_id));
        return std::make_unique<semtool::InProcessTransport>(
            [responder](const std::string& line) { return responder->handle(line); });
    };
}

semtool::GatewayConfig MutableServers::config(semtool::DiscoveryMode mode) {
    semtool::GatewayConfig cfg;
    std::lock_guard lock(mutex_);
    for (const auto& [id, tools] : servers_) {
        cfg.endpoints.push_back({id, semtool::TransportKind::Replay, "in-process", id});
    }
    cfg.discovery = mode;
    cfg.provider.dimension = 256;
    cfg.port = 0;
    return cfg;
}

}  // namespace testsupport

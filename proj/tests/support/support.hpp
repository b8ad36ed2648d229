#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "semtool/config.hpp"
#include "semtool/embedding.hpp"
#include "semtool/evalkit.hpp"
#include "semtool/index.hpp"
#include "semtool/mcp_client.hpp"

namespace testsupport {

std::string fixture(const std::string& relative);
std::string tool_binary(const std::string& name);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string path(const std::string& name) const { return (root_ / name).string(); }
    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
};

// A tools/list entry as a server would advertise it.
nlohmann::ordered_json tool_json(const std::string& name, const std::string& description,
                                 const std::vector<std::string>& required_params = {});

semtool::ToolSchema make_tool(const std::string& server_id, const std::string& name,
                              const std::string& description);

// Embeds a fixed set of texts to preassigned vectors; anything else is a UsageError.
class TableEmbedder final : public semtool::Embedder {
public:
    TableEmbedder(semtool::ProviderSpec spec, std::map<std::string, std::vector<float>> table);

    const semtool::ProviderSpec& spec() const override { return spec_; }
    semtool::EmbeddingVector embed(std::string_view text) const override;

private:
    semtool::ProviderSpec spec_;
    std::map<std::string, std::vector<float>> table_;
};

std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dim);

// Snapshot with random unit vectors, random token counts and names spread
// over `servers` server ids. Some vectors are duplicated to create ties.
semtool::IndexSnapshot random_snapshot(std::mt19937_64& rng, std::size_t tools, std::uint32_t dim,
                                       std::size_t servers = 3);

// Random benchmark over a snapshot; query texts are "q<N>", embedded by the
// returned table.
struct RandomBenchmark {
    semtool::BenchmarkDataset dataset;
    std::map<std::string, std::vector<float>> query_vectors;
};
RandomBenchmark random_benchmark(std::mt19937_64& rng, const semtool::IndexSnapshot& snapshot,
                                 std::size_t queries);

// ---------------------------------------------------------------------------
// Independent oracles. Straight-line code, no library helpers beyond the
// plain data types.
// ---------------------------------------------------------------------------
namespace oracle {

struct Ranked {
    std::string server_id;
    std::string name;
    double score;
};

// Scores every entry, sorts the whole list by (score desc, server asc, name asc),
// drops entries below the threshold and keeps the first k.
std::vector<Ranked> brute_force_search(const semtool::IndexSnapshot& snapshot, const std::vector<float>& query,
                                       long long k, std::optional<double> threshold);

struct QueryMetrics {
    double precision, recall, hit, reciprocal_rank, trr;
};

struct RowMetrics {
    std::size_t count;
    double precision, recall, f1, hit_rate, mrr, trr;
};

struct Report {
    std::map<long long, RowMetrics> micro;
    std::map<long long, RowMetrics> macro;
    std::map<std::pair<long long, std::string>, RowMetrics> per_server;
    std::map<std::pair<long long, std::string>, QueryMetrics> per_query;  // (k, query_id)
};

// Full evaluation recomputed from scratch: retrieval by brute force, then the
// metric formulas written out directly.
Report evaluate(const semtool::IndexSnapshot& snapshot, const semtool::BenchmarkDataset& dataset,
                const std::map<std::string, std::vector<float>>& query_vectors, const std::vector<long long>& ks);

}  // namespace oracle

// In-process MCP servers whose tool lists can change between discoveries.
// While held, discovery blocks until release() is called.
class MutableServers {
public:
    void set(const std::string& server, nlohmann::ordered_json tools);
    void add(const std::string& server, nlohmann::ordered_json tool);
    void remove(const std::string& server, const std::string& tool_name);
    void fail(bool on) { failing_ = on; }
    void hold();
    void wait_until_held();
    void release();

    semtool::TransportFactory factory();
    // One endpoint per server, reference provider at dimension 256, port 0.
    semtool::GatewayConfig config(semtool::DiscoveryMode mode = semtool::DiscoveryMode::Strict);

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::map<std::string, nlohmann::ordered_json> servers_;
    std::atomic<bool> failing_{false};
    bool held_ = false;
    bool entered_ = false;
};

// Embedder over a random benchmark's query table, tagged with the snapshot's provider.
TableEmbedder benchmark_embedder(const semtool::IndexSnapshot& snapshot, const RandomBenchmark& bench);

// Empty when every row and per-query value agrees within `tol`; otherwise the
// first few differences, one per line.
std::string compare_to_oracle(const semtool::MetricsReport& got, const oracle::Report& want, double tol);

}  // namespace testsupport

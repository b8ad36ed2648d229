#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "semtool/embedding.hpp"
#include "semtool/index.hpp"
#include "semtool/tool_key.hpp"

namespace semtool {

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

enum class QueryType { Simple, Task, Ambiguous, Edge };

std::string to_string(QueryType type);
QueryType parse_query_type(const std::string& text);

struct BenchmarkQuery {
    std::string query_id;
    std::string text;
    std::string server_tag;
    QueryType query_type = QueryType::Simple;
    std::set<ToolKey> relevant;
};

struct BenchmarkDataset {
    std::string catalog_digest;  // catalog_hash of the index the labels refer to
    std::vector<BenchmarkQuery> queries;
};

// Parses the dataset document:
//   {"catalog_digest": "<hex>",
//    "queries": [{"query_id", "text", "server_tag", "query_type", "relevant": ["server.tool", ...]}]}
// When `snapshot` is given, the digest and every relevant key are checked
// against it. All problems are collected into one ValidationError.
BenchmarkDataset parse_dataset(const std::string& json_text, const IndexSnapshot* snapshot = nullptr);
BenchmarkDataset load_dataset(const std::string& path, const IndexSnapshot* snapshot = nullptr);

// ---------------------------------------------------------------------------
// Per-query metrics
// ---------------------------------------------------------------------------

// |top-k(retrieved) ∩ relevant| / k, even when fewer than k were retrieved.
double precision_at_k(const std::vector<ToolKey>& retrieved, const std::set<ToolKey>& relevant,
                      std::int64_t k);

// |top-k(retrieved) ∩ relevant| / |relevant|. Throws UsageError if relevant is empty.
double recall_at_k(const std::vector<ToolKey>& retrieved, const std::set<ToolKey>& relevant,
                   std::int64_t k);

// Harmonic mean; 0 when p + r == 0.
double f1_score(double precision, double recall);

// 1-based rank of the first relevant tool within the top k, if any.
std::optional<std::int64_t> first_relevant_rank(const std::vector<ToolKey>& retrieved,
                                                const std::set<ToolKey>& relevant, std::int64_t k);

// Fraction of true entries. Throws UsageError on an empty list.
double hit_rate(const std::vector<bool>& hits);

// Mean of 1/rank; absent ranks and ranks beyond k contribute 0.
double mean_reciprocal_rank(const std::vector<std::optional<std::int64_t>>& first_ranks, std::int64_t k);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline const std::vector<std::int64_t> kDefaultSweep = {1, 2, 3, 5, 10};

struct QueryResult {
    std::string query_id;
    std::string server_tag;
    std::int64_t k = 0;
    std::vector<ToolKey> retrieved;
    std::size_t hits = 0;
    double precision = 0.0;
    double recall = 0.0;
    bool hit = false;
    std::optional<std::int64_t> first_relevant_rank;
    double trr = 0.0;
    double latency_ms = 0.0;
    bool fallback_applied = false;
};

enum class RowScope { Macro, Micro, PerServer };

struct MetricsRow {
    std::int64_t k = 0;
    RowScope scope = RowScope::Micro;
    std::string server_tag;  // PerServer only
    std::size_t query_count = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;  // from this row's precision and recall
    double hit_rate = 0.0;
    double mrr = 0.0;
    double trr = 0.0;
    double latency_ms_mean = 0.0;
    double latency_ms_p95 = 0.0;
};

struct MetricsReport {
    std::vector<std::int64_t> ks;
    std::vector<std::string> server_tags;  // sorted
    std::size_t query_count = 0;
    std::size_t catalog_size = 0;
    std::string catalog_hash;
    std::optional<double> threshold;
    std::vector<QueryResult> per_query;  // ordered by (k, query_id)
    std::vector<MetricsRow> rows;        // per k: macro, micro, then servers in tag order

    const MetricsRow& row(std::int64_t k, RowScope scope, const std::string& server_tag = {}) const;
};

// Runs every query through select_tools at each k and aggregates per server
// and over the whole set (macro and micro).
MetricsReport evaluate(const IndexSnapshot& snapshot, const Embedder& embedder,
                       const BenchmarkDataset& dataset,
                       const std::vector<std::int64_t>& ks = kDefaultSweep,
                       std::optional<double> threshold = std::nullopt);

// Aggregates already-computed per-query results (used by evaluate).
MetricsReport aggregate(std::vector<QueryResult> per_query, const std::vector<std::int64_t>& ks);

// Nearest-rank percentile over a copy of the samples.
double percentile(std::vector<double> samples, double pct);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

enum class ReportFormat { Markdown, Csv };

// "md"/"markdown" or "csv"; anything else is a UsageError.
ReportFormat parse_report_format(const std::string& text);

struct RenderOptions {
    // Latency values vary run to run; leave them out for byte-stable output.
    bool include_timing = true;
};

// Tables: 1a/1b aggregate by K (macro, micro), 2 per-server hit rate and MRR,
// 3-5 per-server precision/recall/F1, 6 per-server token reduction.
std::string render_report(const MetricsReport& report, ReportFormat format,
                          const RenderOptions& options = {});

nlohmann::json report_to_json(const MetricsReport& report, const RenderOptions& options = {});

}  // namespace semtool

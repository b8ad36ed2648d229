#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "semtool/embedding.hpp"
#include "semtool/index.hpp"

namespace semtool {

struct Selection {
    std::string query_text;
    std::vector<ScoredTool> ranked;
    std::int64_t k_requested = 0;
    std::optional<double> threshold;
    bool fallback_applied = false;  // threshold removed everything; ranked is the plain top-k
    std::uint64_t selected_tokens = 0;
    std::uint64_t baseline_tokens = 0;
    double trr = 0.0;
    double retrieval_latency_ms = 0.0;  // query embedding + search
    std::string catalog_hash;
};

// Embeds the query, searches, and falls back to the unthresholded top-k when
// the threshold leaves nothing. Never returns an empty ranking for a
// non-empty index.
Selection select_tools(const IndexSnapshot& snapshot, const Embedder& embedder,
                       const std::string& query, std::int64_t k,
                       std::optional<double> threshold = std::nullopt);

// Optional reordering stage. It must return a permutation of its input.
using Reranker =
    std::function<std::vector<ScoredTool>(const std::string& query, const std::vector<ScoredTool>& ranked)>;

// Identity when reranker is empty. Throws ValidationError if the reranker
// adds, drops or duplicates a tool.
Selection rerank_hook(Selection selection, const Reranker& reranker = {});

enum class InvocationOutcome { Success, Failure, Unknown };

std::string to_string(InvocationOutcome outcome);

// Append-only JSON-lines log of which selected tools were actually invoked.
// One object per line:
//   {"catalog_hash", "invoked": [...], "outcome", "query", "ranked": [...], "timestamp_ms"}
class InvocationLog {
public:
    // Appends to `path`; throws Error if it cannot be opened.
    explicit InvocationLog(const std::string& path);
    explicit InvocationLog(std::ostream& sink);

    // Rejects invoked keys that are not in the snapshot.
    void log_invocation(const IndexSnapshot& snapshot, const Selection& selection,
                        const std::vector<ToolKey>& invoked, InvocationOutcome outcome);

private:
    std::mutex mutex_;
    std::ofstream file_;
    std::ostream* sink_;
};

}  // namespace semtool

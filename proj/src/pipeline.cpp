#include "semtool/pipeline.hpp"

#include <algorithm>
#include <chrono>

#include <json.hpp>

#include "semtool/errors.hpp"

namespace semtool {

Selection select_tools(const IndexSnapshot& snapshot, const Embedder& embedder, const std::string& query,
                       std::int64_t k, std::optional<double> threshold) {
    if (query.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw UsageError("query must not be empty");
    }
    if (k < 1) throw UsageError("k must be at least 1");
    if (snapshot.entries.empty()) throw UsageError("index is empty");
    if (embedder.spec().provider_id != snapshot.provider_id) {
        throw UsageError("index was built with provider '" + snapshot.provider_id + "' but query uses '" +
                         embedder.spec().provider_id + "'");
    }

    Selection sel;
    sel.query_text = query;
    sel.k_requested = k;
    sel.threshold = threshold;
    sel.catalog_hash = snapshot.catalog_hash;

    const auto start = std::chrono::steady_clock::now();
    const auto qv = embedder.embed(query);
    sel.ranked = search(snapshot, qv, k, threshold);
    if (sel.ranked.empty() && threshold) {
        sel.ranked = search(snapshot, qv, k);
        sel.fallback_applied = true;
    }
    const auto stop = std::chrono::steady_clock::now();
    sel.retrieval_latency_ms = std::chrono::duration<double, std::milli>(stop - start).count();

    sel.baseline_tokens = snapshot.baseline_tokens();
    for (const auto& r : sel.ranked) sel.selected_tokens += snapshot.find(r.tool_key)->schema_token_count;
    sel.trr = sel.baseline_tokens == 0 ? 0.0 : token_reduction(sel.baseline_tokens, sel.selected_tokens);
    return sel;
}

Selection rerank_hook(Selection selection, const Reranker& reranker) {
    if (!reranker) return selection;
    auto reordered = reranker(selection.query_text, selection.ranked);

    auto keys_of = [](const std::vector<ScoredTool>& v) {
        std::vector<ToolKey> keys;
        keys.reserve(v.size());
        for (const auto& s : v) keys.push_back(s.tool_key);
        std::sort(keys.begin(), keys.end());
        return keys;
    };
    if (keys_of(reordered) != keys_of(selection.ranked)) {
        throw ValidationError("reranker changed the selected tool set");
    }
    selection.ranked = std::move(reordered);
    return selection;
}

std::string to_string(InvocationOutcome outcome) {
    switch (outcome) {
        case InvocationOutcome::Success: return "success";
        case InvocationOutcome::Failure: return "failure";
        case InvocationOutcome::Unknown: return "unknown";
    }
    return "unknown";
}

InvocationLog::InvocationLog(const std::string& path) : file_(path, std::ios::app), sink_(&file_) {
    if (!file_) throw Error("cannot open invocation log " + path);
}

InvocationLog::InvocationLog(std::ostream& sink) : sink_(&sink) {}

void InvocationLog::log_invocation(const IndexSnapshot& snapshot, const Selection& selection,
                                   const std::vector<ToolKey>& invoked, InvocationOutcome outcome) {
    nlohmann::json record;
    record["catalog_hash"] = selection.catalog_hash;
    record["query"] = selection.query_text;
    record["outcome"] = to_string(outcome);
    record["ranked"] = nlohmann::json::array();
    for (const auto& r : selection.ranked) record["ranked"].push_back(r.tool_key.qualified());
    record["invoked"] = nlohmann::json::array();
    for (const auto& key : invoked) {
        if (snapshot.find(key) == nullptr) {
            throw ValidationError("invoked tool '" + key.qualified() + "' is not in the catalog");
        }
        record["invoked"].push_back(key.qualified());
    }
    record["timestamp_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::system_clock::now().time_since_epoch())
                                 .count();

    const auto line = record.dump();
    std::lock_guard lock(mutex_);
    *sink_ << line << '\n';
    sink_->flush();
    if (!*sink_) throw Error("failed to write invocation log record");
}

}  // namespace semtool

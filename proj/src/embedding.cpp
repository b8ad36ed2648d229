#include "semtool/embedding.hpp"

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <map>
#include <semaphore>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "semtool/errors.hpp"
#include "url.hpp"

namespace semtool {

namespace {

constexpr std::uint64_t kHashSeed = 0x5eed'7001'c0de'2024ULL;
constexpr double kWordWeight = 1.0;
constexpr double kTrigramWeight = 0.5;

std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// FNV-1a over (tag, feature), finalized with a splitmix step.
std::uint64_t feature_hash(char tag, std::string_view feature) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ kHashSeed;
    auto step = [&h](unsigned char c) {
        h ^= c;
        h *= 0x100000001b3ULL;
    };
    step(static_cast<unsigned char>(tag));
    for (char c : feature) step(static_cast<unsigned char>(c));
    return mix64(h);
}

bool has_content(std::string_view text) {
    for (unsigned char c : text) {
        if (!std::isspace(c)) return true;
    }
    return false;
}

std::vector<std::string> split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c >= 0x80) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) words.push_back(std::move(current));
    return words;
}

// Function words that carry no tool-selection signal. Dropped unless a text
// consists of nothing else.
bool is_stopword(const std::string& w) {
    static const std::set<std::string, std::less<>> words = {
        "a",    "about", "all",  "an",   "and",   "any",  "are",   "as",    "at",   "be",   "by",
        "can",  "did",   "do",   "does", "for",   "from", "has",   "have",  "how",  "i",    "if",
        "in",   "into",  "is",   "it",   "its",   "me",   "my",    "of",    "on",   "or",   "our",
        "so",   "such",  "that", "the",  "their", "them", "there", "these", "this", "those", "to",
        "up",   "was",   "we",   "were", "what",  "when", "where", "which", "who",  "will", "with",
        "you",  "your"};
    return words.count(w) != 0;
}

// Folds simple English plurals so "row" and "rows" share features.
std::string fold_plural(std::string w) {
    const auto n = w.size();
    if (n > 4 && w.compare(n - 3, 3, "ies") == 0) return w.substr(0, n - 3) + "y";
    if (n > 3 && w[n - 1] == 's' && w[n - 2] != 's' && w[n - 2] != 'u' && w[n - 2] != 'i') w.pop_back();
    return w;
}

std::vector<std::string> content_words(std::string_view text) {
    auto words = split_words(text);
    std::vector<std::string> kept;
    for (const auto& w : words) {
        if (!is_stopword(w)) kept.push_back(fold_plural(w));
    }
    if (kept.empty()) return words;
    return kept;
}

}  // namespace

double similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        throw DimensionMismatch("cannot compare vectors of dimension " +
                                std::to_string(a.dimension()) + " and " +
                                std::to_string(b.dimension()));
    }
    double sum = 0.0;
    for (size_t i = 0; i < a.values.size(); ++i) {
        sum += static_cast<double>(a.values[i]) * static_cast<double>(b.values[i]);
    }
    return sum;
}

bool normalize(std::vector<float>& values) {
    double sq = 0.0;
    for (float v : values) sq += static_cast<double>(v) * static_cast<double>(v);
    if (!(sq > 0.0) || !std::isfinite(sq)) return false;
    const double norm = std::sqrt(sq);
    for (float& v : values) v = static_cast<float>(static_cast<double>(v) / norm);
    return true;
}

std::vector<EmbeddingVector> Embedder::embed_batch(const std::vector<std::string>& texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
}

// ---------------------------------------------------------------------------
// ReferenceEmbedder
// ---------------------------------------------------------------------------

ReferenceEmbedder::ReferenceEmbedder(ProviderSpec spec) : spec_(std::move(spec)) {
    if (spec_.dimension == 0) throw UsageError("embedding dimension must be positive");
}

EmbeddingVector ReferenceEmbedder::embed(std::string_view text) const {
    if (!has_content(text)) throw UsageError("cannot embed empty text");

    // Term frequencies per feature, damped as 1 + ln(tf) so words repeated
    // across parameter descriptions do not swamp the distinctive ones.
    std::map<std::string, double> features;
    const auto words = content_words(text);
    for (const auto& w : words) {
        features["w" + w] += 1.0;
        const std::string padded = "^" + w + "$";
        for (size_t i = 0; i + 3 <= padded.size(); ++i) features["c" + padded.substr(i, 3)] += 1.0;
    }
    if (words.empty()) features["r" + std::string(text)] = 1.0;

    std::vector<double> acc(spec_.dimension, 0.0);
    for (const auto& [feature, tf] : features) {
        const char tag = feature[0];
        const double weight = tag == 'w' ? kWordWeight : tag == 'c' ? kTrigramWeight : 1.0;
        const auto h = feature_hash(tag, std::string_view(feature).substr(1));
        const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
        acc[h % spec_.dimension] += sign * weight * (1.0 + std::log(tf));
    }

    EmbeddingVector out;
    out.provider_id = spec_.provider_id;
    out.values.resize(spec_.dimension);
    for (size_t i = 0; i < acc.size(); ++i) out.values[i] = static_cast<float>(acc[i]);
    if (!normalize(out.values)) {
        // Every feature cancelled out; extremely unlikely but keep the unit-norm contract.
        out.values.assign(spec_.dimension, 0.0f);
        out.values[feature_hash('r', text) % spec_.dimension] = 1.0f;
    }
    return out;
}

// ---------------------------------------------------------------------------
// RemoteEmbedder
// ---------------------------------------------------------------------------

struct RemoteEmbedder::Limiter {
    explicit Limiter(std::ptrdiff_t n) : slots(n) {}
    std::counting_semaphore<> slots;
};

RemoteEmbedder::RemoteEmbedder(ProviderSpec spec) : spec_(std::move(spec)) {
    if (spec_.dimension == 0) throw UsageError("embedding dimension must be positive");
    if (spec_.url.empty()) throw UsageError("remote embedding provider needs a url");
    if (spec_.model_name.empty()) throw UsageError("remote embedding provider needs a model name");
    if (spec_.batch_size == 0) spec_.batch_size = 1;
    if (spec_.max_in_flight == 0) spec_.max_in_flight = 1;
    (void)detail::split_url(spec_.url);
    limiter_ = std::make_unique<Limiter>(static_cast<std::ptrdiff_t>(spec_.max_in_flight));
}

RemoteEmbedder::~RemoteEmbedder() = default;

EmbeddingVector RemoteEmbedder::embed(std::string_view text) const {
    auto out = embed_batch({std::string(text)});
    return std::move(out.front());
}

std::vector<EmbeddingVector> RemoteEmbedder::embed_batch(const std::vector<std::string>& texts) const {
    for (const auto& t : texts) {
        if (!has_content(t)) throw UsageError("cannot embed empty text");
    }
    const size_t chunks = (texts.size() + spec_.batch_size - 1) / spec_.batch_size;
    std::vector<std::vector<EmbeddingVector>> results(chunks);
    std::vector<std::exception_ptr> errors(chunks);
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t c; (c = next.fetch_add(1)) < chunks;) {
            const auto start = c * spec_.batch_size;
            const auto end = std::min(texts.size(), start + spec_.batch_size);
            try {
                results[c] = post_batch(std::vector<std::string>(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                                                 texts.begin() + static_cast<std::ptrdiff_t>(end)));
            } catch (...) {
                errors[c] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (size_t i = 1; i < std::min(chunks, spec_.max_in_flight); ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (auto& chunk : results) {
        for (auto& v : chunk) out.push_back(std::move(v));
    }
    return out;
}

std::vector<EmbeddingVector> RemoteEmbedder::post_batch(const std::vector<std::string>& texts) const {
    const auto parts = detail::split_url(spec_.url);
    const nlohmann::json body = {{"model", spec_.model_name}, {"input", texts}};
    const auto payload = body.dump();

    httplib::Headers headers;
    if (!spec_.api_key_env.empty()) {
        const char* token = std::getenv(spec_.api_key_env.c_str());
        if (token == nullptr || *token == '\0') {
            throw UsageError("environment variable " + spec_.api_key_env + " is not set");
        }
        headers.emplace("Authorization", std::string("Bearer ") + token);
    }

    std::string reply;
    for (unsigned attempt = 0;; ++attempt) {
        std::string failure;
        {
            limiter_->slots.acquire();
            httplib::Client client(parts.origin);
            client.set_connection_timeout(spec_.timeout);
            client.set_read_timeout(spec_.timeout);
            client.set_write_timeout(spec_.timeout);
            auto res = client.Post(parts.path, headers, payload, "application/json");
            limiter_->slots.release();

            if (!res) {
                failure = "embedding request failed: " + httplib::to_string(res.error());
            } else if (res->status == 429 || res->status >= 500) {
                failure = "embedding endpoint returned HTTP " + std::to_string(res->status);
            } else if (res->status < 200 || res->status >= 300) {
                throw EmbeddingError("embedding endpoint returned HTTP " +
                                         std::to_string(res->status) + ": " + res->body,
                                     false);
            } else {
                reply = std::move(res->body);
                break;
            }
        }
        if (attempt >= spec_.max_retries) throw EmbeddingError(failure, true);
        std::this_thread::sleep_for(spec_.retry_backoff * (1u << std::min(attempt, 6u)));
    }

    nlohmann::json doc = nlohmann::json::parse(reply, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
        throw EmbeddingError("embedding response is not a JSON object", false);
    }

    std::vector<nlohmann::json> arrays(texts.size());
    if (doc.contains("data") && doc["data"].is_array()) {
        const auto& data = doc["data"];
        if (data.size() != texts.size()) {
            throw EmbeddingError("embedding response has " + std::to_string(data.size()) +
                                     " items for " + std::to_string(texts.size()) + " inputs",
                                 false);
        }
        for (size_t i = 0; i < data.size(); ++i) {
            const auto& item = data[i];
            if (!item.is_object() || !item.contains("embedding")) {
                throw EmbeddingError("embedding response item has no embedding", false);
            }
            size_t slot = i;
            if (item.contains("index")) {
                if (!item["index"].is_number_unsigned() || item["index"].get<size_t>() >= texts.size()) {
                    throw EmbeddingError("embedding response item has a bad index", false);
                }
                slot = item["index"].get<size_t>();
            }
            if (!arrays[slot].is_null()) throw EmbeddingError("duplicate embedding index", false);
            arrays[slot] = item["embedding"];
        }
    } else if (doc.contains("embeddings") && doc["embeddings"].is_array() &&
               doc["embeddings"].size() == texts.size()) {
        for (size_t i = 0; i < texts.size(); ++i) arrays[i] = doc["embeddings"][i];
    } else {
        throw EmbeddingError("embedding response has no data array", false);
    }

    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& arr : arrays) {
        if (!arr.is_array()) throw EmbeddingError("embedding is not an array", false);
        if (arr.size() != spec_.dimension) {
            throw DimensionMismatch("provider " + spec_.provider_id + " returned dimension " +
                                    std::to_string(arr.size()) + ", expected " +
                                    std::to_string(spec_.dimension));
        }
        EmbeddingVector v;
        v.provider_id = spec_.provider_id;
        v.values.reserve(arr.size());
        for (const auto& x : arr) {
            if (!x.is_number()) throw EmbeddingError("embedding holds a non-number", false);
            const double d = x.get<double>();
            if (!std::isfinite(d)) throw EmbeddingError("embedding holds a non-finite value", false);
            v.values.push_back(static_cast<float>(d));
        }
        if (!normalize(v.values)) throw EmbeddingError("embedding is a zero vector", false);
        out.push_back(std::move(v));
    }
    return out;
}

std::unique_ptr<Embedder> make_embedder(const ProviderSpec& spec) {
    switch (spec.kind) {
        case ProviderKind::ReferenceLocal: return std::make_unique<ReferenceEmbedder>(spec);
        case ProviderKind::RemoteHttp: return std::make_unique<RemoteEmbedder>(spec);
    }
    throw UsageError("unknown provider kind");
}

}  // namespace semtool

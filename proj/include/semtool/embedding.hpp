#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace semtool {

struct EmbeddingVector {
    std::vector<float> values;
    std::string provider_id;

    size_t dimension() const { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

enum class ProviderKind { ReferenceLocal, RemoteHttp };

struct ProviderSpec {
    std::string provider_id = "reference-local";
    ProviderKind kind = ProviderKind::ReferenceLocal;
    size_t dimension = 1024;

    // remote-http only
    std::string model_name;
    std::string url;
    std::string api_key_env;  // name of the variable holding the bearer token
    size_t batch_size = 64;
    size_t max_in_flight = 4;
    unsigned max_retries = 3;
    std::chrono::milliseconds timeout{30000};
    std::chrono::milliseconds retry_backoff{200};
};

// Dot product accumulated in double, in index order.
double similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Scales to unit L2 norm in place. Returns false for a zero vector.
bool normalize(std::vector<float>& values);

class Embedder {
public:
    virtual ~Embedder() = default;

    virtual const ProviderSpec& spec() const = 0;

    // Throws UsageError for text that is empty after trimming.
    virtual EmbeddingVector embed(std::string_view text) const = 0;

    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const;
};

// Deterministic offline embedder: hashed word unigrams plus character
// trigrams, weighted by 1 + ln(tf) and L2-normalized. Common English function
// words are dropped and simple plurals folded before features are taken.
// No network, clock, or randomness is involved.
class ReferenceEmbedder final : public Embedder {
public:
    explicit ReferenceEmbedder(ProviderSpec spec);

    const ProviderSpec& spec() const override { return spec_; }
    EmbeddingVector embed(std::string_view text) const override;

private:
    ProviderSpec spec_;
};

// Posts {"model", "input"} batches to an embeddings endpoint. Transport
// failures, 429 and 5xx replies are retried with exponential backoff. At most
// max_in_flight requests are outstanding at once, across all callers.
class RemoteEmbedder final : public Embedder {
public:
    explicit RemoteEmbedder(ProviderSpec spec);
    ~RemoteEmbedder() override;

    const ProviderSpec& spec() const override { return spec_; }
    EmbeddingVector embed(std::string_view text) const override;
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) const override;

private:
    std::vector<EmbeddingVector> post_batch(const std::vector<std::string>& texts) const;

    struct Limiter;
    ProviderSpec spec_;
    std::unique_ptr<Limiter> limiter_;
};

std::unique_ptr<Embedder> make_embedder(const ProviderSpec& spec);

}  // namespace semtool

#include "semtool/index.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "semtool/digest.hpp"
#include "semtool/errors.hpp"

namespace semtool {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'M', 'T', 'I', 'D', 'X', '\0'};
constexpr size_t kDigestSize = 32;
constexpr size_t kPrefixSize = sizeof(kMagic) + 4 + 8;

bool ranks_before(const ScoredTool& a, const ScoredTool& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tool_key < b.tool_key;
}

class Writer {
public:
    void bytes(const void* p, size_t n) { out_.append(static_cast<const char*>(p), n); }

    void u32(std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        bytes(b, 4);
    }

    void u64(std::uint64_t v) {
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
        bytes(b, 8);
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    void str(const std::string& s) {
        if (s.size() > 0xFFFFFFFFu) throw UsageError("string too long for index format");
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }

    std::string& buffer() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}

    void need(size_t n) const {
        if (data_.size() - pos_ < n) {
            throw IndexFormatError(IndexFormatError::Reason::Truncated, "index file is truncated");
        }
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    float f32() { return std::bit_cast<float>(u32()); }

    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }

    size_t remaining() const { return data_.size() - pos_; }

private:
    std::string_view data_;
    size_t pos_ = 0;
};

[[noreturn]] void malformed(const std::string& what) {
    throw IndexFormatError(IndexFormatError::Reason::Malformed, "malformed index file: " + what);
}

}  // namespace

const IndexedTool* IndexSnapshot::find(const ToolKey& key) const {
    const auto it = std::lower_bound(entries.begin(), entries.end(), key,
                                     [](const IndexedTool& e, const ToolKey& k) { return e.tool_key < k; });
    if (it == entries.end() || it->tool_key != key) return nullptr;
    return &*it;
}

std::uint64_t IndexSnapshot::baseline_tokens() const {
    std::uint64_t sum = 0;
    for (const auto& e : entries) sum += e.schema_token_count;
    return sum;
}

std::string compute_catalog_hash(const std::vector<ToolSchema>& tools) {
    std::vector<const ToolSchema*> sorted;
    sorted.reserve(tools.size());
    for (const auto& t : tools) sorted.push_back(&t);
    std::sort(sorted.begin(), sorted.end(),
              [](const ToolSchema* a, const ToolSchema* b) { return a->key() < b->key(); });

    Sha256 h;
    for (const auto* t : sorted) {
        h.update(t->server_id);
        h.update(std::string_view("\0", 1));
        h.update(t->name);
        h.update(std::string_view("\0", 1));
        h.update(t->raw_schema_text);
        h.update(std::string_view("\0", 1));
    }
    return to_hex(h.finish());
}

IndexSnapshot build_index(const std::vector<ToolSchema>& catalog, const Embedder& embedder,
                          const Tokenizer& tokenizer, const BuildOptions& options) {
    if (catalog.empty()) throw UsageError("cannot build an index from an empty catalog");

    std::vector<const ToolSchema*> tools;
    tools.reserve(catalog.size());
    for (const auto& t : catalog) tools.push_back(&t);
    std::sort(tools.begin(), tools.end(),
              [](const ToolSchema* a, const ToolSchema* b) { return a->key() < b->key(); });
    for (size_t i = 1; i < tools.size(); ++i) {
        if (tools[i - 1]->key() == tools[i]->key()) {
            throw ValidationError("duplicate tool '" + tools[i]->key().qualified() + "' in catalog");
        }
    }

    std::vector<std::string> documents;
    documents.reserve(tools.size());
    for (const auto* t : tools) {
        std::optional<std::string> enrichment;
        if (const auto it = options.enrichments.find(t->key()); it != options.enrichments.end()) {
            enrichment = it->second;
        }
        documents.push_back(render_document(*t, enrichment).text);
    }

    auto vectors = embedder.embed_batch(documents);
    const auto& spec = embedder.spec();
    if (vectors.size() != documents.size()) {
        throw EmbeddingError("embedder returned the wrong number of vectors", false);
    }

    IndexSnapshot snap;
    snap.provider_id = spec.provider_id;
    snap.tokenizer_id = tokenizer.spec().id();
    snap.dimension = static_cast<std::uint32_t>(spec.dimension);
    snap.build_timestamp_ms = options.build_timestamp_ms;
    snap.catalog_hash = compute_catalog_hash(catalog);
    snap.entries.reserve(tools.size());
    for (size_t i = 0; i < tools.size(); ++i) {
        if (vectors[i].dimension() != spec.dimension) {
            throw DimensionMismatch("embedding for " + tools[i]->key().qualified() + " has dimension " +
                                    std::to_string(vectors[i].dimension()));
        }
        IndexedTool entry;
        entry.tool_key = tools[i]->key();
        entry.vector = std::move(vectors[i]);
        entry.document_text = std::move(documents[i]);
        entry.raw_schema_text = tools[i]->raw_schema_text;
        entry.schema_token_count = tokenizer.count(entry.raw_schema_text);
        snap.entries.push_back(std::move(entry));
    }
    return snap;
}

std::vector<ScoredTool> search(const IndexSnapshot& snapshot, const EmbeddingVector& query,
                               std::int64_t k, std::optional<double> threshold) {
    if (k <= 0) throw UsageError("k must be at least 1");
    if (query.dimension() != snapshot.dimension) {
        throw DimensionMismatch("query dimension " + std::to_string(query.dimension()) +
                                " does not match index dimension " + std::to_string(snapshot.dimension));
    }

    std::vector<ScoredTool> scored;
    scored.reserve(snapshot.entries.size());
    for (const auto& e : snapshot.entries) {
        const double s = similarity(query, e.vector);
        if (threshold && s < *threshold) continue;
        scored.push_back({e.tool_key, s});
    }

    const auto keep = std::min(scored.size(), static_cast<size_t>(k));
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                      ranks_before);
    scored.resize(keep);
    return scored;
}

std::string serialize_snapshot(const IndexSnapshot& snapshot) {
    Writer w;
    w.bytes(kMagic, sizeof(kMagic));
    w.u32(kIndexFormatVersion);
    w.u64(0);  // total length, patched below
    w.str(snapshot.provider_id);
    w.str(snapshot.tokenizer_id);
    w.u32(snapshot.dimension);
    w.u64(static_cast<std::uint64_t>(snapshot.build_timestamp_ms));
    w.str(snapshot.catalog_hash);
    w.u64(snapshot.entries.size());
    for (const auto& e : snapshot.entries) {
        if (e.vector.dimension() != snapshot.dimension) {
            throw DimensionMismatch("entry " + e.tool_key.qualified() + " does not match index dimension");
        }
        w.str(e.tool_key.server_id);
        w.str(e.tool_key.name);
        w.str(e.document_text);
        w.str(e.raw_schema_text);
        w.u64(e.schema_token_count);
        for (float v : e.vector.values) w.f32(v);
    }

    auto& out = w.buffer();
    const std::uint64_t total = out.size() + kDigestSize;
    for (int i = 0; i < 8; ++i) {
        out[sizeof(kMagic) + 4 + i] = static_cast<char>((total >> (8 * i)) & 0xFF);
    }
    const auto digest = sha256(out);
    out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
    return out;
}

IndexSnapshot deserialize_snapshot(std::string_view bytes) {
    using Reason = IndexFormatError::Reason;
    if (bytes.size() < kPrefixSize) throw IndexFormatError(Reason::Truncated, "index file is truncated");
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
        throw IndexFormatError(Reason::BadMagic, "not an index file (bad magic)");
    }

    Reader prefix(bytes.substr(sizeof(kMagic)));
    const auto version = prefix.u32();
    if (version != kIndexFormatVersion) {
        throw IndexFormatError(Reason::Version, "unsupported index format version " + std::to_string(version) +
                                                    " (expected " + std::to_string(kIndexFormatVersion) + ")");
    }
    const auto declared = prefix.u64();
    if (bytes.size() < declared || bytes.size() < kPrefixSize + kDigestSize) {
        throw IndexFormatError(Reason::Truncated, "index file is truncated (" + std::to_string(bytes.size()) +
                                                      " of " + std::to_string(declared) + " bytes)");
    }
    if (bytes.size() > declared) malformed("trailing bytes after checksum");

    const auto body = bytes.substr(0, bytes.size() - kDigestSize);
    const auto expected = sha256(body);
    if (std::memcmp(expected.data(), bytes.data() + body.size(), kDigestSize) != 0) {
        throw IndexFormatError(Reason::Checksum, "index file checksum mismatch");
    }

    Reader r(body.substr(kPrefixSize));
    IndexSnapshot snap;
    snap.provider_id = r.str();
    snap.tokenizer_id = r.str();
    snap.dimension = r.u32();
    snap.build_timestamp_ms = static_cast<std::int64_t>(r.u64());
    snap.catalog_hash = r.str();
    const auto count = r.u64();
    if (snap.dimension == 0) malformed("zero dimension");
    if (count > r.remaining()) malformed("entry count exceeds file size");

    snap.entries.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        IndexedTool e;
        e.tool_key.server_id = r.str();
        e.tool_key.name = r.str();
        e.document_text = r.str();
        e.raw_schema_text = r.str();
        e.schema_token_count = r.u64();
        e.vector.provider_id = snap.provider_id;
        r.need(static_cast<size_t>(snap.dimension) * 4);
        e.vector.values.resize(snap.dimension);
        for (auto& v : e.vector.values) v = r.f32();
        if (!snap.entries.empty() && !(snap.entries.back().tool_key < e.tool_key)) {
            malformed("entries are not strictly sorted by tool key");
        }
        snap.entries.push_back(std::move(e));
    }
    if (r.remaining() != 0) malformed("unexpected bytes after last entry");
    return snap;
}

void persist_snapshot(const IndexSnapshot& snapshot, const std::string& path) {
    const auto bytes = serialize_snapshot(snapshot);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write index file " + tmp);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("failed writing index file " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw Error("cannot move index file into place: " + ec.message());
}

IndexSnapshot load_snapshot(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open index file " + path);
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_snapshot(bytes);
}

std::string export_text(const IndexSnapshot& snapshot) {
    std::string out;
    char buf[32];
    for (const auto& e : snapshot.entries) {
        out += e.tool_key.qualified();
        out += '\t';
        out += std::to_string(e.schema_token_count);
        out += '\t';
        const auto n = std::min<size_t>(8, e.vector.values.size());
        for (size_t i = 0; i < n; ++i) {
            std::snprintf(buf, sizeof(buf), "%s%.6f", i == 0 ? "" : " ", e.vector.values[i]);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

}  // namespace semtool

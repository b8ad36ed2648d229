#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_set>

namespace semtool {

enum class TokenizerKind { ApproximateChars, WhitespacePunct, ExternalVocab };

struct TokenizerSpec {
    TokenizerKind kind = TokenizerKind::WhitespacePunct;
    unsigned chars_per_token = 4;  // approximate-chars only
    std::string vocab_path;        // external-vocab only

    // Stable identifier stored alongside token counts, e.g. "approximate-chars:4".
    std::string id() const;

    // Accepts "whitespace-punct", "approximate-chars[:N]", "external-vocab:<path>".
    static TokenizerSpec parse(const std::string& text);
};

class Tokenizer {
public:
    // Loads the vocabulary for external-vocab; throws UsageError if unreadable.
    explicit Tokenizer(TokenizerSpec spec);

    std::uint64_t count(std::string_view text) const;
    const TokenizerSpec& spec() const { return spec_; }

private:
    std::uint64_t count_vocab(std::string_view text) const;

    TokenizerSpec spec_;
    std::unordered_set<std::string> vocab_;
    size_t longest_entry_ = 0;
};

std::uint64_t count_tokens(const TokenizerSpec& spec, std::string_view text);

// 1 - selected / baseline. Requires baseline > 0 and selected <= baseline.
double token_reduction(std::uint64_t baseline_tokens, std::uint64_t selected_tokens);

}  // namespace semtool

#include "semtool/tokens.hpp"

#include <fstream>

#include "semtool/errors.hpp"

namespace semtool {

namespace {

bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// ASCII letters/digits and any byte of a multi-byte UTF-8 sequence.
bool is_word(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

}  // namespace

std::string TokenizerSpec::id() const {
    switch (kind) {
        case TokenizerKind::ApproximateChars: return "approximate-chars:" + std::to_string(chars_per_token);
        case TokenizerKind::WhitespacePunct: return "whitespace-punct";
        case TokenizerKind::ExternalVocab: return "external-vocab:" + vocab_path;
    }
    return "unknown";
}

TokenizerSpec TokenizerSpec::parse(const std::string& text) {
    TokenizerSpec spec;
    if (text == "whitespace-punct") {
        spec.kind = TokenizerKind::WhitespacePunct;
    } else if (text.rfind("approximate-chars", 0) == 0) {
        spec.kind = TokenizerKind::ApproximateChars;
        if (text.size() > 17) {
            if (text[17] != ':') throw UsageError("bad tokenizer spec '" + text + "'");
            try {
                const long n = std::stol(text.substr(18));
                if (n <= 0) throw UsageError("chars-per-token must be positive");
                spec.chars_per_token = static_cast<unsigned>(n);
            } catch (const std::logic_error&) {
                throw UsageError("bad tokenizer spec '" + text + "'");
            }
        }
    } else if (text.rfind("external-vocab:", 0) == 0 && text.size() > 15) {
        spec.kind = TokenizerKind::ExternalVocab;
        spec.vocab_path = text.substr(15);
    } else {
        throw UsageError("unknown tokenizer '" + text + "'");
    }
    return spec;
}

Tokenizer::Tokenizer(TokenizerSpec spec) : spec_(std::move(spec)) {
    if (spec_.kind == TokenizerKind::ApproximateChars && spec_.chars_per_token == 0) {
        throw UsageError("chars-per-token must be positive");
    }
    if (spec_.kind != TokenizerKind::ExternalVocab) return;
    std::ifstream in(spec_.vocab_path, std::ios::binary);
    if (!in) throw UsageError("cannot read vocabulary file " + spec_.vocab_path);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        longest_entry_ = std::max(longest_entry_, line.size());
        vocab_.insert(std::move(line));
    }
}

std::uint64_t Tokenizer::count(std::string_view text) const {
    switch (spec_.kind) {
        case TokenizerKind::ApproximateChars: {
            std::uint64_t chars = 0;
            for (unsigned char c : text) {
                if ((c & 0xC0) != 0x80) ++chars;  // count code points, not bytes
            }
            return (chars + spec_.chars_per_token - 1) / spec_.chars_per_token;
        }
        case TokenizerKind::WhitespacePunct: {
            std::uint64_t n = 0;
            bool in_word = false;
            for (unsigned char c : text) {
                if (is_word(c)) {
                    if (!in_word) ++n;
                    in_word = true;
                    continue;
                }
                in_word = false;
                if (!is_space(c)) ++n;
            }
            return n;
        }
        case TokenizerKind::ExternalVocab: return count_vocab(text);
    }
    return 0;
}

// Greedy longest match against the vocabulary; bytes with no match cost one token.
std::uint64_t Tokenizer::count_vocab(std::string_view text) const {
    std::uint64_t n = 0;
    size_t i = 0;
    while (i < text.size()) {
        if (is_space(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        size_t take = 1;
        for (size_t len = std::min(longest_entry_, text.size() - i); len > 1; --len) {
            if (vocab_.count(std::string(text.substr(i, len)))) {
                take = len;
                break;
            }
        }
        i += take;
        ++n;
    }
    return n;
}

std::uint64_t count_tokens(const TokenizerSpec& spec, std::string_view text) {
    return Tokenizer(spec).count(text);
}

double token_reduction(std::uint64_t baseline_tokens, std::uint64_t selected_tokens) {
    if (baseline_tokens == 0) throw UsageError("baseline token count must be positive");
    if (selected_tokens > baseline_tokens) {
        throw UsageError("selected tokens (" + std::to_string(selected_tokens) +
                         ") exceed baseline (" + std::to_string(baseline_tokens) + ")");
    }
    return 1.0 - static_cast<double>(selected_tokens) / static_cast<double>(baseline_tokens);
}

}  // namespace semtool

#pragma once

#include <cctype>
#include <map>
#include <string>

#include "d2ctl/error.hpp"

namespace d2ctl {

// Anything that can report a token count for a piece of text. Backends
// implement this for backend-reported ("remote") counting.
struct TokenCounter {
    virtual ~TokenCounter() = default;
    virtual int count_tokens(const std::string& text) const = 0;
};

enum class TokenizerKind {
    WhitespaceApprox, // word count; the deterministic offline default
    FixedTable,       // per-word counts from a lookup table
    RemoteCount,      // backend-reported
};

struct TokenizerSpec {
    TokenizerKind kind = TokenizerKind::WhitespaceApprox;

    // FixedTable parameters: unknown words cost `default_word_tokens`.
    std::map<std::string, int> table;
    int default_word_tokens = 1;

    // RemoteCount parameter; non-owning.
    const TokenCounter* remote = nullptr;

    static TokenizerSpec whitespace() { return TokenizerSpec{}; }

    static TokenizerSpec fixed_table(std::map<std::string, int> table, int default_word_tokens = 1) {
        TokenizerSpec spec;
        spec.kind = TokenizerKind::FixedTable;
        spec.table = std::move(table);
        spec.default_word_tokens = default_word_tokens;
        return spec;
    }

    static TokenizerSpec remote_count(const TokenCounter& counter) {
        TokenizerSpec spec;
        spec.kind = TokenizerKind::RemoteCount;
        spec.remote = &counter;
        return spec;
    }
};

namespace detail {

template <typename WordFn>
inline void for_each_word(const std::string& text, WordFn&& fn) {
    size_t i = 0;
    const size_t n = text.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        size_t start = i;
        while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) fn(text.substr(start, i - start));
    }
}

} // namespace detail

inline int count_tokens(const std::string& text, const TokenizerSpec& spec) {
    switch (spec.kind) {
    case TokenizerKind::WhitespaceApprox: {
        int count = 0;
        detail::for_each_word(text, [&](const std::string&) { ++count; });
        return count;
    }
    case TokenizerKind::FixedTable: {
        int count = 0;
        detail::for_each_word(text, [&](const std::string& word) {
            auto it = spec.table.find(word);
            count += it != spec.table.end() ? it->second : spec.default_word_tokens;
        });
        return count;
    }
    case TokenizerKind::RemoteCount:
        if (!spec.remote) throw_config("remote_count tokenizer has no backend attached");
        return spec.remote->count_tokens(text);
    }
    throw_internal("unreachable tokenizer kind");
}

} // namespace d2ctl

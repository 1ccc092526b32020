#pragma once

#include <cstdint>
#include <string>

#include "ville/errors.hpp"

namespace ville {

// Reserved token ids shared by the model and the synthetic corpus. The two
// mode tokens switch the backbone between "emit an embedding for the video
// prefix" and "emit an embedding for this text"; they are inputs only and
// never valid generation targets.
namespace tok {
constexpr int64_t PAD = 0;
constexpr int64_t EOS = 1;
constexpr int64_t TXT_EMBED = 2;
constexpr int64_t VID_EMBED = 3;
constexpr int64_t MATCH_PROMPT = 4;  // stands in for "does the video match the caption?"
constexpr int64_t YES = 5;
constexpr int64_t NO = 6;
constexpr int64_t QUERY_AT = 7;      // "what happens at <time>?"
constexpr int64_t ARROW = 8;         // composed-change separator, "X -> Y"
constexpr int64_t FIRST_FREE = 9;
}  // namespace tok

// Token id layout: [reserved | time buckets | event symbols].
struct Vocab {
    int64_t n_time_buckets = 0;
    int64_t n_symbols = 0;

    Vocab() = default;
    Vocab(int64_t time_buckets, int64_t symbols)
        : n_time_buckets(time_buckets), n_symbols(symbols) {
        if (time_buckets < 1 || symbols < 1)
            throw ConfigError("vocab: need at least one time bucket and one symbol");
    }

    int64_t size() const { return tok::FIRST_FREE + n_time_buckets + n_symbols; }

    int64_t time_token(int64_t bucket) const {
        if (bucket < 0 || bucket >= n_time_buckets)
            throw IndexError("vocab: time bucket " + std::to_string(bucket) + " out of " +
                             std::to_string(n_time_buckets));
        return tok::FIRST_FREE + bucket;
    }

    int64_t symbol_token(int64_t sym) const {
        if (sym < 0 || sym >= n_symbols)
            throw IndexError("vocab: symbol " + std::to_string(sym) + " out of " +
                             std::to_string(n_symbols));
        return tok::FIRST_FREE + n_time_buckets + sym;
    }

    bool is_symbol(int64_t id) const {
        return id >= tok::FIRST_FREE + n_time_buckets && id < size();
    }
    int64_t symbol_of(int64_t id) const {
        if (!is_symbol(id)) throw IndexError("vocab: token " + std::to_string(id) + " is not a symbol");
        return id - tok::FIRST_FREE - n_time_buckets;
    }
    bool is_time(int64_t id) const {
        return id >= tok::FIRST_FREE && id < tok::FIRST_FREE + n_time_buckets;
    }

    std::string token_name(int64_t id) const {
        switch (id) {
            case tok::PAD: return "<pad>";
            case tok::EOS: return "<eos>";
            case tok::TXT_EMBED: return "<txt>";
            case tok::VID_EMBED: return "<vid>";
            case tok::MATCH_PROMPT: return "<match?>";
            case tok::YES: return "yes";
            case tok::NO: return "no";
            case tok::QUERY_AT: return "<at>";
            case tok::ARROW: return "->";
            default: break;
        }
        if (is_time(id)) return "t" + std::to_string(id - tok::FIRST_FREE);
        if (is_symbol(id)) return "sym" + std::to_string(symbol_of(id));
        return "?" + std::to_string(id);
    }
};

}  // namespace ville

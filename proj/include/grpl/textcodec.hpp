#pragma once

#include <array>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "grpl/common.hpp"

namespace grpl {

// Reserved token ids. They occupy the front of every vocabulary in this
// exact order; the scene alphabet follows.
enum Special : TokenId {
    kThinkOpen = 0,
    kThinkClose,
    kAnswerOpen,
    kAnswerClose,
    kYes,
    kNo,
    kPad,
    kBos,
    kEos,
    kSep,
    kRef,
    kQry,
    kNumSpecials,
};

inline const std::array<std::string, kNumSpecials>& special_strings() {
    static const std::array<std::string, kNumSpecials> strings = {
        "<think>", "</think>", "<answer>", "</answer>", "yes", "no",
        "<pad>",   "<bos>",    "<eos>",    "<sep>",     "REF", "QRY",
    };
    return strings;
}

// Fixed vocabulary: specials first, scene alphabet after, ids contiguous
// from 0. The four tag tokens are atomic single ids.
class Vocab {
public:
    static Vocab build(const std::vector<std::string>& scene_alphabet) {
        if (scene_alphabet.empty()) throw ValidationError("empty alphabet");
        Vocab v;
        for (const auto& s : special_strings()) v.push(s);
        for (const auto& word : scene_alphabet) {
            if (v.id_of_.count(word)) {
                const bool reserved = v.id_of_.at(word) < kNumSpecials;
                throw ValidationError(std::string(reserved ? "reserved" : "duplicate") +
                                      " token string: \"" + word + "\"");
            }
            v.push(word);
        }
        if (v.size() > 128) throw ValidationError("vocabulary size exceeds 128");
        return v;
    }

    size_t size() const { return tokens_.size(); }

    const std::string& token(TokenId id) const {
        if (id < 0 || static_cast<size_t>(id) >= tokens_.size()) {
            throw ValidationError("token id out of range: " + std::to_string(id));
        }
        return tokens_[static_cast<size_t>(id)];
    }

    std::optional<TokenId> try_id(const std::string& word) const {
        auto it = id_of_.find(word);
        if (it == id_of_.end()) return std::nullopt;
        return it->second;
    }

    TokenId id(const std::string& word) const {
        auto found = try_id(word);
        if (!found) throw ValidationError("unknown token: \"" + word + "\"");
        return *found;
    }

    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    void push(const std::string& s) {
        id_of_[s] = static_cast<TokenId>(tokens_.size());
        tokens_.push_back(s);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> id_of_;
};

inline Vocab build_vocab(const std::vector<std::string>& scene_alphabet) {
    return Vocab::build(scene_alphabet);
}

// Splits on any whitespace run; the decoder joins with single spaces.
inline std::vector<TokenId> encode(const std::string& text, const Vocab& v) {
    std::vector<TokenId> ids;
    std::istringstream in(text);
    std::string word;
    size_t position = 0;
    while (in >> word) {
        auto id = v.try_id(word);
        if (!id) {
            throw ValidationError("unknown token \"" + word + "\" at position " +
                                  std::to_string(position));
        }
        ids.push_back(*id);
        ++position;
    }
    return ids;
}

inline std::string decode(std::span<const TokenId> ids, const Vocab& v) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += v.token(ids[i]);
    }
    return out;
}

enum class Answer { yes, no, malformed };

inline const char* to_string(Answer a) {
    switch (a) {
        case Answer::yes: return "yes";
        case Answer::no: return "no";
        case Answer::malformed: return "malformed";
    }
    return "malformed";
}

struct ParsedResponse {
    bool well_formed = false;
    // Content token range [begin, end) between the think tags, when present.
    std::optional<std::pair<int, int>> think_span;
    Answer answer = Answer::malformed;
};

// Template grammar, shared verbatim by the parser, the decoding constraint
// mask, and the structure reward:
//
//   response := <think> content* </think> <answer> (yes|no) </answer> <eos>?
//   content  := any token except the four tags and <eos>
enum class GrammarState {
    start,           // expect <think>
    think,           // inside think content
    after_think,     // expect <answer>
    answer,          // expect yes or no
    after_decision,  // expect </answer>
    accept,          // template complete, <eos> may follow
    done,            // <eos> consumed, nothing may follow
    dead,            // no completion exists
};

inline bool is_tag(TokenId id) {
    return id == kThinkOpen || id == kThinkClose || id == kAnswerOpen || id == kAnswerClose;
}

inline GrammarState grammar_step(GrammarState s, TokenId id) {
    switch (s) {
        case GrammarState::start:
            return id == kThinkOpen ? GrammarState::think : GrammarState::dead;
        case GrammarState::think:
            if (id == kThinkClose) return GrammarState::after_think;
            if (is_tag(id) || id == kEos) return GrammarState::dead;
            return GrammarState::think;
        case GrammarState::after_think:
            return id == kAnswerOpen ? GrammarState::answer : GrammarState::dead;
        case GrammarState::answer:
            return (id == kYes || id == kNo) ? GrammarState::after_decision : GrammarState::dead;
        case GrammarState::after_decision:
            return id == kAnswerClose ? GrammarState::accept : GrammarState::dead;
        case GrammarState::accept:
            return id == kEos ? GrammarState::done : GrammarState::dead;
        case GrammarState::done:
        case GrammarState::dead:
            return GrammarState::dead;
    }
    return GrammarState::dead;
}

inline GrammarState grammar_state(std::span<const TokenId> prefix) {
    GrammarState s = GrammarState::start;
    for (TokenId id : prefix) {
        s = grammar_step(s, id);
        if (s == GrammarState::dead) break;
    }
    return s;
}

// A sequence parses as well-formed iff it ends in an accepting state.
inline bool grammar_accepts(GrammarState s) {
    return s == GrammarState::accept || s == GrammarState::done;
}

// Total over arbitrary id sequences; never throws on malformed input.
inline ParsedResponse parse_response(std::span<const TokenId> ids, const Vocab& v) {
    ParsedResponse r;
    GrammarState s = GrammarState::start;
    int think_begin = -1;
    TokenId decision = -1;
    for (size_t i = 0; i < ids.size(); ++i) {
        TokenId id = ids[i];
        if (id < 0 || static_cast<size_t>(id) >= v.size()) {
            return r;  // out-of-vocabulary id: malformed
        }
        GrammarState next = grammar_step(s, id);
        if (next == GrammarState::dead) return r;
        if (s == GrammarState::start && next == GrammarState::think) {
            think_begin = static_cast<int>(i) + 1;
        }
        if (s == GrammarState::think && next == GrammarState::after_think) {
            r.think_span = {think_begin, static_cast<int>(i)};
        }
        if (next == GrammarState::after_decision) decision = id;
        s = next;
    }
    if (!grammar_accepts(s)) {
        r.think_span.reset();
        return r;
    }
    r.well_formed = true;
    r.answer = decision == kYes ? Answer::yes : Answer::no;
    return r;
}

enum class MaskMode { off, hard };

// Bitmask of tokens that keep the prefix extendable to a well-formed
// template. In `off` mode every token is allowed regardless of the prefix.
inline std::vector<bool> constraint_mask(std::span<const TokenId> prefix, const Vocab& v,
                                         MaskMode mode) {
    std::vector<bool> mask(v.size(), mode == MaskMode::off);
    if (mode == MaskMode::off) return mask;

    GrammarState s = grammar_state(prefix);
    switch (s) {
        case GrammarState::start:
            mask[kThinkOpen] = true;
            break;
        case GrammarState::think:
            for (size_t id = 0; id < v.size(); ++id) {
                TokenId t = static_cast<TokenId>(id);
                mask[id] = !(t == kThinkOpen || t == kAnswerOpen || t == kAnswerClose || t == kEos);
            }
            break;
        case GrammarState::after_think:
            mask[kAnswerOpen] = true;
            break;
        case GrammarState::answer:
            mask[kYes] = true;
            mask[kNo] = true;
            break;
        case GrammarState::after_decision:
            mask[kAnswerClose] = true;
            break;
        case GrammarState::accept:
            mask[kEos] = true;
            break;
        case GrammarState::done:
            break;  // complete sequence, nothing may follow
        case GrammarState::dead:
            throw ValidationError("dead prefix: no extension reaches a well-formed template");
    }
    return mask;
}

}  // namespace grpl

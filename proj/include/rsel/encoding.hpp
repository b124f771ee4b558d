#pragma once

// Input encoding for the learned ranker.
//
// Layout (one sequence per candidate):
//
//   [CLS] [CUR:topic] [PREV:topic] turn1 [SEP] ... turn4 [SEP] [RG:name] candidate [SEP]
//
// Segment ids mark the region of every token: state (CLS and the two topic
// slots), user turn, system turn, candidate (RG token through final SEP). A
// turn's SEP belongs to that turn. Over-long inputs lose the oldest context
// tokens first.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rsel/core.hpp"
#include "rsel/text.hpp"

namespace rsel {

using TokenId = std::int32_t;

enum class Segment : std::uint8_t { User = 0, System = 1, State = 2, Candidate = 3 };
inline constexpr std::size_t kNumSegments = 4;

enum class TokenKind : std::uint8_t { Pad, Unk, Cls, Sep, StateUnk, CurrentTopic, PreviousTopic, RG, Word };

inline std::string to_string(TokenKind k) {
    switch (k) {
        case TokenKind::Pad: return "pad";
        case TokenKind::Unk: return "unk";
        case TokenKind::Cls: return "cls";
        case TokenKind::Sep: return "sep";
        case TokenKind::StateUnk: return "state_unk";
        case TokenKind::CurrentTopic: return "current_topic";
        case TokenKind::PreviousTopic: return "previous_topic";
        case TokenKind::RG: return "rg";
        case TokenKind::Word: return "word";
    }
    return "";
}

inline TokenKind parse_token_kind(const std::string& s) {
    for (auto k : {TokenKind::Pad, TokenKind::Unk, TokenKind::Cls, TokenKind::Sep, TokenKind::StateUnk,
                   TokenKind::CurrentTopic, TokenKind::PreviousTopic, TokenKind::RG, TokenKind::Word})
        if (to_string(k) == s) return k;
    throw Error(ErrorKind::Parse, "unknown token kind '" + s + "'");
}

// Token inventory: fixed specials, state tokens (one per topic for each of the
// two topic slots, one per RG name) and text words. Each kind has its own
// lookup table, so a word can never alias a state token. Ids are assigned in
// insertion order and never change, which lets fine-tuning extend a
// pretrained vocabulary.
class Vocabulary {
public:
    static constexpr TokenId kPad = 0, kUnk = 1, kCls = 2, kSep = 3, kStateUnk = 4;

    Vocabulary() {
        for (auto k : {TokenKind::Pad, TokenKind::Unk, TokenKind::Cls, TokenKind::Sep, TokenKind::StateUnk})
            push(k, "");
    }

    TokenId add_word(const std::string& w) { return add(words_, TokenKind::Word, w); }
    TokenId add_topic(const std::string& topic) {
        if (topic.empty()) return kStateUnk;
        add(prev_topics_, TokenKind::PreviousTopic, topic);
        return add(cur_topics_, TokenKind::CurrentTopic, topic);
    }
    TokenId add_rg(const std::string& name) { return name.empty() ? kStateUnk : add(rgs_, TokenKind::RG, name); }

    TokenId word(const std::string& w) const { return lookup(words_, w, kUnk); }
    TokenId current_topic(const std::string& t) const { return lookup(cur_topics_, t, kStateUnk); }
    TokenId previous_topic(const std::optional<std::string>& t) const {
        return t ? lookup(prev_topics_, *t, kStateUnk) : kStateUnk;
    }
    TokenId rg(const std::string& name) const { return lookup(rgs_, name, kStateUnk); }

    std::size_t size() const { return kinds_.size(); }
    TokenKind kind(TokenId id) const { return kinds_.at(static_cast<std::size_t>(id)); }
    const std::string& text(TokenId id) const { return texts_.at(static_cast<std::size_t>(id)); }

    // Adds every word, topic and RG name appearing in the inputs.
    void absorb(const std::vector<Turn>& context, const DialogueState& state, const ResponseCandidate& candidate) {
        for (const auto& t : context)
            for (const auto& w : tokenize_words(t.text)) add_word(w);
        for (const auto& w : tokenize_words(candidate.text)) add_word(w);
        add_topic(state.current_topic);
        if (state.previous_topic) add_topic(*state.previous_topic);
        add_rg(candidate.rg.name);
    }

    nlohmann::json to_json() const {
        nlohmann::json tokens = nlohmann::json::array();
        for (std::size_t i = 0; i < kinds_.size(); ++i)
            tokens.push_back({{"kind", to_string(kinds_[i])}, {"text", texts_[i]}});
        return {{"tokens", tokens}};
    }

    static Vocabulary from_json(const nlohmann::json& j) {
        Vocabulary v;
        const auto& tokens = j.at("tokens");
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const TokenKind k = parse_token_kind(tokens[i].at("kind").get<std::string>());
            const auto text = tokens[i].at("text").get<std::string>();
            if (i < v.size()) {
                if (k != v.kinds_[i]) throw Error(ErrorKind::Parse, "vocabulary special tokens out of order");
                continue;
            }
            switch (k) {
                case TokenKind::Word: v.push_into(v.words_, k, text); break;
                case TokenKind::CurrentTopic: v.push_into(v.cur_topics_, k, text); break;
                case TokenKind::PreviousTopic: v.push_into(v.prev_topics_, k, text); break;
                case TokenKind::RG: v.push_into(v.rgs_, k, text); break;
                default: throw Error(ErrorKind::Parse, "unexpected special token in vocabulary body");
            }
        }
        return v;
    }

private:
    using Table = std::unordered_map<std::string, TokenId>;

    TokenId push(TokenKind k, const std::string& text) {
        kinds_.push_back(k);
        texts_.push_back(text);
        return static_cast<TokenId>(kinds_.size() - 1);
    }
    void push_into(Table& table, TokenKind k, const std::string& text) { table.emplace(text, push(k, text)); }
    TokenId add(Table& table, TokenKind k, const std::string& text) {
        auto it = table.find(text);
        if (it != table.end()) return it->second;
        const TokenId id = push(k, text);
        table.emplace(text, id);
        return id;
    }
    static TokenId lookup(const Table& table, const std::string& key, TokenId fallback) {
        auto it = table.find(key);
        return it == table.end() ? fallback : it->second;
    }

    std::vector<TokenKind> kinds_;
    std::vector<std::string> texts_;
    Table words_, cur_topics_, prev_topics_, rgs_;
};

struct EncodedInput {
    std::vector<TokenId> token_ids;
    std::vector<Segment> segment_ids;
    std::vector<bool> attention_mask;

    bool operator==(const EncodedInput&) const = default;
};

struct EncodeOptions {
    std::size_t max_length = 256;
    std::size_t history_turns = 4;
};

inline EncodedInput encode(const std::vector<Turn>& context, const DialogueState& state,
                           const ResponseCandidate& candidate, const Vocabulary& vocab, const EncodeOptions& opt = {}) {
    EncodedInput out;
    auto emit = [&](TokenId id, Segment seg) {
        out.token_ids.push_back(id);
        out.segment_ids.push_back(seg);
    };

    emit(Vocabulary::kCls, Segment::State);
    emit(vocab.current_topic(state.current_topic), Segment::State);
    emit(vocab.previous_topic(state.previous_topic), Segment::State);
    const std::size_t head = out.token_ids.size();

    std::vector<TokenId> ctx_ids;
    std::vector<Segment> ctx_segs;
    const std::size_t first = context.size() > opt.history_turns ? context.size() - opt.history_turns : 0;
    for (std::size_t i = first; i < context.size(); ++i) {
        const Segment seg = context[i].speaker == Speaker::User ? Segment::User : Segment::System;
        for (const auto& w : tokenize_words(context[i].text)) {
            ctx_ids.push_back(vocab.word(w));
            ctx_segs.push_back(seg);
        }
        ctx_ids.push_back(Vocabulary::kSep);
        ctx_segs.push_back(seg);
    }

    std::vector<TokenId> tail{vocab.rg(candidate.rg.name)};
    for (const auto& w : tokenize_words(candidate.text)) tail.push_back(vocab.word(w));
    tail.push_back(Vocabulary::kSep);

    if (head + tail.size() > opt.max_length)
        throw Error(ErrorKind::OverflowAfterTruncation, "candidate " + candidate.candidate_id + " needs " +
                                                            std::to_string(head + tail.size()) + " tokens, max " +
                                                            std::to_string(opt.max_length));
    const std::size_t budget = opt.max_length - head - tail.size();
    const std::size_t drop = ctx_ids.size() > budget ? ctx_ids.size() - budget : 0;
    for (std::size_t i = drop; i < ctx_ids.size(); ++i) emit(ctx_ids[i], ctx_segs[i]);
    for (auto id : tail) emit(id, Segment::Candidate);

    out.attention_mask.assign(out.token_ids.size(), true);
    return out;
}

}  // namespace rsel

#pragma once

// Data model shared by every module: conversations, dialogue state, response
// generators, candidate pools and human annotations.

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "rsel/error.hpp"
#include "rsel/hash.hpp"

namespace rsel {

enum class Speaker { System, User };

enum class RGType { Flow, KG, CenterTrivia, QA, NRG, Intro, Other };

inline constexpr RGType kAllRGTypes[] = {RGType::Flow, RGType::KG,    RGType::CenterTrivia, RGType::QA,
                                         RGType::NRG,  RGType::Intro, RGType::Other};

enum class ContinuationSignal { MustContinue, CanContinue, Ended, None };

enum class Grade { A, B, C, D };

enum class Label { Negative, Positive };

using Timestamp = std::chrono::sys_seconds;

struct RGDescriptor {
    std::string name;
    RGType rg_type = RGType::Other;
    std::string topic;

    bool operator==(const RGDescriptor&) const = default;
};

struct Turn {
    Speaker speaker = Speaker::User;
    std::string text;
    std::optional<RGDescriptor> rg_id;  // present iff speaker == System
    std::uint32_t turn_index = 0;

    bool operator==(const Turn&) const = default;
};

struct DialogueState {
    std::string current_topic;
    std::optional<std::string> previous_topic;
    std::uint32_t system_turn_count = 0;
    std::optional<RGDescriptor> last_rg;
    ContinuationSignal continuation_signal = ContinuationSignal::None;
    bool user_utterance_is_question = false;
    // Dialogue-act tags of the latest user turn; consulted by service gating.
    std::vector<std::string> dialogue_acts;

    bool operator==(const DialogueState&) const = default;
};

struct ResponseCandidate {
    std::string candidate_id;
    std::string text;
    RGDescriptor rg;
    ContinuationSignal continuation_signal = ContinuationSignal::None;

    bool operator==(const ResponseCandidate&) const = default;
};

struct ResponsePool {
    std::string pool_id;
    std::optional<std::string> conversation_id;
    std::vector<Turn> context;  // most recent last
    DialogueState state;
    std::vector<ResponseCandidate> candidates;
    std::optional<int> conversation_rating;  // 1..5

    bool operator==(const ResponsePool&) const = default;

    const ResponseCandidate* find(std::string_view candidate_id) const {
        for (const auto& c : candidates)
            if (c.candidate_id == candidate_id) return &c;
        return nullptr;
    }
};

struct AnnotationRecord {
    std::string pool_id;
    std::map<std::string, Grade> grades;
    bool none_of_the_above = false;
    std::string annotator_id;
    Timestamp timestamp{};

    bool operator==(const AnnotationRecord&) const = default;
};

struct LabeledExample {
    std::string pool_id;
    std::vector<Turn> context;
    DialogueState state;
    ResponseCandidate candidate;
    Label label = Label::Negative;

    bool operator==(const LabeledExample&) const = default;
};

// A pool together with its (single) human judgment; the unit of train/test sets.
struct AnnotatedPool {
    ResponsePool pool;
    AnnotationRecord annotation;

    bool operator==(const AnnotatedPool&) const = default;
};

// Which grades count as "would say next".
struct LabelPolicy {
    std::set<Grade> positive_grades{Grade::A};

    static LabelPolicy a_only() { return {}; }
    static LabelPolicy a_or_b() { return LabelPolicy{{Grade::A, Grade::B}}; }

    bool is_positive(Grade g) const { return positive_grades.count(g) != 0; }
};

// --- helpers ----------------------------------------------------------------

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Content hash of (text, rg.name); repeated candidates across pools share it.
inline std::string content_candidate_id(std::string_view text, std::string_view rg_name) {
    return "c" + Fnv1a().field(text).field(rg_name).hex();
}

inline ResponseCandidate make_candidate(std::string text, RGDescriptor rg,
                                        ContinuationSignal signal = ContinuationSignal::None) {
    ResponseCandidate c;
    c.candidate_id = content_candidate_id(text, rg.name);
    c.text = std::move(text);
    c.rg = std::move(rg);
    c.continuation_signal = signal;
    return c;
}

inline Turn make_user_turn(std::string text, std::uint32_t index) {
    return Turn{Speaker::User, std::move(text), std::nullopt, index};
}

inline Turn make_system_turn(std::string text, RGDescriptor rg, std::uint32_t index) {
    return Turn{Speaker::System, std::move(text), std::move(rg), index};
}

// --- validation ---------------------------------------------------------------

inline void validate(const Turn& t) {
    if (trim(t.text).empty())
        throw Error(ErrorKind::InvalidRecord, "turn " + std::to_string(t.turn_index) + " has empty text");
    if (t.speaker == Speaker::User && t.rg_id)
        throw Error(ErrorKind::InvalidRecord, "user turn " + std::to_string(t.turn_index) + " carries an RG");
    if (t.speaker == Speaker::System && !t.rg_id)
        throw Error(ErrorKind::InvalidRecord, "system turn " + std::to_string(t.turn_index) + " lacks an RG");
}

inline void validate_context(const std::vector<Turn>& context) {
    for (std::size_t i = 0; i < context.size(); ++i) {
        validate(context[i]);
        if (i > 0 && context[i].speaker == context[i - 1].speaker)
            throw Error(ErrorKind::InvalidRecord, "context turns must alternate speakers");
    }
}

inline void validate(const DialogueState& s) {
    const bool none = s.continuation_signal == ContinuationSignal::None;
    if (none == s.last_rg.has_value())
        throw Error(ErrorKind::InvalidRecord, "continuation_signal must be NONE exactly when last_rg is absent");
}

inline void validate_candidates(const std::vector<ResponseCandidate>& candidates) {
    std::unordered_set<std::string> seen;
    for (const auto& c : candidates) {
        if (trim(c.text).empty()) throw Error(ErrorKind::InvalidRecord, "candidate " + c.candidate_id + " has empty text");
        if (c.candidate_id.empty()) throw Error(ErrorKind::InvalidRecord, "candidate with empty id");
        if (!seen.insert(c.candidate_id).second) throw Error(ErrorKind::DuplicateId, c.candidate_id);
    }
}

// min_candidates is 2 for annotation-corpus pools.
inline void validate(const ResponsePool& p, std::size_t min_candidates = 1) {
    if (p.candidates.empty()) throw Error(ErrorKind::EmptyPool, p.pool_id);
    if (p.context.empty()) throw Error(ErrorKind::EmptyContext, p.pool_id);
    if (p.candidates.size() < min_candidates)
        throw Error(ErrorKind::InvalidRecord, p.pool_id + " has fewer than " + std::to_string(min_candidates) +
                                                  " candidates");
    validate_context(p.context);
    validate(p.state);
    validate_candidates(p.candidates);
    if (p.conversation_rating && (*p.conversation_rating < 1 || *p.conversation_rating > 5))
        throw Error(ErrorKind::InvalidRecord, p.pool_id + " rating outside [1,5]");
}

inline void validate(const AnnotationRecord& ann) {
    if (ann.none_of_the_above) {
        for (const auto& [id, g] : ann.grades)
            if (g == Grade::A)
                throw Error(ErrorKind::InvalidGrades, "none_of_the_above with an A grade on " + id);
    }
}

// Checks ids match and every graded candidate exists in the pool.
inline void check_annotation_against(const ResponsePool& pool, const AnnotationRecord& ann) {
    if (ann.pool_id != pool.pool_id)
        throw Error(ErrorKind::MismatchedPool, "annotation for " + ann.pool_id + " applied to " + pool.pool_id);
    for (const auto& [id, g] : ann.grades)
        if (!pool.find(id)) throw Error(ErrorKind::UnknownCandidate, id + " not in pool " + pool.pool_id);
}

// --- operations -----------------------------------------------------------------

inline std::string derive_pool_id(const std::optional<std::string>& conversation_id,
                                  const std::vector<Turn>& context,
                                  const std::vector<ResponseCandidate>& candidates) {
    Fnv1a h;
    h.field(conversation_id.value_or(""));
    for (const auto& t : context) h.field(std::to_string(t.turn_index)).field(t.text);
    for (const auto& c : candidates) h.field(c.candidate_id);
    return "p" + h.hex();
}

inline ResponsePool build_pool(std::vector<Turn> context, DialogueState state,
                               std::vector<ResponseCandidate> candidates,
                               std::optional<std::string> conversation_id = std::nullopt,
                               std::optional<int> rating = std::nullopt) {
    if (candidates.empty()) throw Error(ErrorKind::EmptyPool, "no candidates");
    if (context.empty()) throw Error(ErrorKind::EmptyContext, "no context turns");
    ResponsePool p;
    p.pool_id = derive_pool_id(conversation_id, context, candidates);
    p.conversation_id = std::move(conversation_id);
    p.context = std::move(context);
    p.state = std::move(state);
    p.candidates = std::move(candidates);
    p.conversation_rating = rating;
    validate(p);
    return p;
}

inline std::vector<LabeledExample> derive_labels(const ResponsePool& pool, const AnnotationRecord& ann,
                                                 const LabelPolicy& policy = {}) {
    check_annotation_against(pool, ann);
    std::vector<LabeledExample> out;
    out.reserve(pool.candidates.size());
    for (const auto& c : pool.candidates) {
        Label label = Label::Negative;
        if (!ann.none_of_the_above) {
            auto it = ann.grades.find(c.candidate_id);
            if (it != ann.grades.end() && policy.is_positive(it->second)) label = Label::Positive;
        }
        out.push_back(LabeledExample{pool.pool_id, pool.context, pool.state, c, label});
    }
    return out;
}

inline std::set<std::string> preferred_set(const ResponsePool& pool, const AnnotationRecord& ann,
                                           const LabelPolicy& policy = {}) {
    check_annotation_against(pool, ann);
    std::set<std::string> out;
    if (ann.none_of_the_above) return out;
    for (const auto& [id, g] : ann.grades)
        if (policy.is_positive(g)) out.insert(id);
    return out;
}

}  // namespace rsel

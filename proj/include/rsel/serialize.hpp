#pragma once

// Line-delimited JSON records for pools, annotations and labeled examples.
// Field names follow the data model verbatim; each top-level record carries
// "v": 1.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsel/core.hpp"

namespace rsel {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// --- enums ------------------------------------------------------------------

inline std::string to_string(Speaker s) { return s == Speaker::System ? "SYSTEM" : "USER"; }

inline std::string to_string(RGType t) {
    switch (t) {
        case RGType::Flow: return "FLOW";
        case RGType::KG: return "KG";
        case RGType::CenterTrivia: return "CENTER_TRIVIA";
        case RGType::QA: return "QA";
        case RGType::NRG: return "NRG";
        case RGType::Intro: return "INTRO";
        case RGType::Other: return "OTHER";
    }
    return "OTHER";
}

inline std::string to_string(ContinuationSignal s) {
    switch (s) {
        case ContinuationSignal::MustContinue: return "MUST_CONTINUE";
        case ContinuationSignal::CanContinue: return "CAN_CONTINUE";
        case ContinuationSignal::Ended: return "ENDED";
        case ContinuationSignal::None: return "NONE";
    }
    return "NONE";
}

inline std::string to_string(Grade g) { return std::string(1, static_cast<char>('A' + static_cast<int>(g))); }

inline std::string to_string(Label l) { return l == Label::Positive ? "POSITIVE" : "NEGATIVE"; }

inline Speaker parse_speaker(const std::string& s) {
    if (s == "SYSTEM") return Speaker::System;
    if (s == "USER") return Speaker::User;
    throw Error(ErrorKind::Parse, "unknown speaker '" + s + "'");
}

inline RGType parse_rg_type(const std::string& s) {
    for (RGType t : kAllRGTypes)
        if (to_string(t) == s) return t;
    throw Error(ErrorKind::Parse, "unknown rg_type '" + s + "'");
}

inline ContinuationSignal parse_signal(const std::string& s) {
    for (auto v : {ContinuationSignal::MustContinue, ContinuationSignal::CanContinue, ContinuationSignal::Ended,
                   ContinuationSignal::None})
        if (to_string(v) == s) return v;
    throw Error(ErrorKind::Parse, "unknown continuation_signal '" + s + "'");
}

inline Grade parse_grade(const std::string& s) {
    if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'D') return static_cast<Grade>(s[0] - 'A');
    throw Error(ErrorKind::Parse, "unknown grade '" + s + "'");
}

// Legacy single-select sheets mark a chosen cell without a letter: true, "x"
// or an empty string all mean A.
inline Grade parse_grade_value(const json& v) {
    if (v.is_boolean()) {
        if (v.get<bool>()) return Grade::A;
        throw Error(ErrorKind::Parse, "grade false is not a selection");
    }
    if (!v.is_string()) throw Error(ErrorKind::Parse, "grade must be a string");
    const std::string s = trim(v.get<std::string>());
    if (s.empty() || s == "x" || s == "X") return Grade::A;
    return parse_grade(s);
}

inline Label parse_label(const std::string& s) {
    if (s == "POSITIVE") return Label::Positive;
    if (s == "NEGATIVE") return Label::Negative;
    throw Error(ErrorKind::Parse, "unknown label '" + s + "'");
}

// --- timestamps ---------------------------------------------------------------

inline std::string format_timestamp(Timestamp t) {
    using namespace std::chrono;
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const hh_mm_ss hms{t - day};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

inline Timestamp parse_timestamp(const std::string& s) {
    using namespace std::chrono;
    int y, mo, d, h, mi, sec;
    char z = 0;
    if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &sec, &z) != 7 || z != 'Z')
        throw Error(ErrorKind::Parse, "timestamp '" + s + "' is not YYYY-MM-DDTHH:MM:SSZ");
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) throw Error(ErrorKind::Parse, "timestamp '" + s + "' out of range");
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

// --- records --------------------------------------------------------------------

inline void to_json(json& j, const RGDescriptor& rg) {
    j = json{{"name", rg.name}, {"rg_type", to_string(rg.rg_type)}, {"topic", rg.topic}};
}
inline void from_json(const json& j, RGDescriptor& rg) {
    rg.name = j.at("name").get<std::string>();
    rg.rg_type = parse_rg_type(j.at("rg_type").get<std::string>());
    rg.topic = j.at("topic").get<std::string>();
}

inline void to_json(json& j, const Turn& t) {
    j = json{{"speaker", to_string(t.speaker)}, {"text", t.text}, {"turn_index", t.turn_index}};
    j["rg_id"] = t.rg_id ? json(*t.rg_id) : json(nullptr);
}
inline void from_json(const json& j, Turn& t) {
    t.speaker = parse_speaker(j.at("speaker").get<std::string>());
    t.text = j.at("text").get<std::string>();
    t.turn_index = j.value("turn_index", 0u);
    if (j.contains("rg_id") && !j["rg_id"].is_null()) t.rg_id = j["rg_id"].get<RGDescriptor>();
    else t.rg_id.reset();
}

inline void to_json(json& j, const DialogueState& s) {
    j = json{{"current_topic", s.current_topic},
             {"system_turn_count", s.system_turn_count},
             {"continuation_signal", to_string(s.continuation_signal)},
             {"user_utterance_is_question", s.user_utterance_is_question},
             {"dialogue_acts", s.dialogue_acts}};
    j["previous_topic"] = s.previous_topic ? json(*s.previous_topic) : json(nullptr);
    j["last_rg"] = s.last_rg ? json(*s.last_rg) : json(nullptr);
}
inline void from_json(const json& j, DialogueState& s) {
    s.current_topic = j.at("current_topic").get<std::string>();
    s.previous_topic.reset();
    if (j.contains("previous_topic") && !j["previous_topic"].is_null())
        s.previous_topic = j["previous_topic"].get<std::string>();
    s.system_turn_count = j.value("system_turn_count", 0u);
    s.last_rg.reset();
    if (j.contains("last_rg") && !j["last_rg"].is_null()) s.last_rg = j["last_rg"].get<RGDescriptor>();
    s.continuation_signal = parse_signal(j.value("continuation_signal", std::string("NONE")));
    s.user_utterance_is_question = j.value("user_utterance_is_question", false);
    s.dialogue_acts = j.value("dialogue_acts", std::vector<std::string>{});
}

inline void to_json(json& j, const ResponseCandidate& c) {
    j = json{{"candidate_id", c.candidate_id},
             {"text", c.text},
             {"rg", c.rg},
             {"continuation_signal", to_string(c.continuation_signal)}};
}
inline void from_json(const json& j, ResponseCandidate& c) {
    c.text = j.at("text").get<std::string>();
    c.rg = j.at("rg").get<RGDescriptor>();
    c.continuation_signal = parse_signal(j.value("continuation_signal", std::string("NONE")));
    c.candidate_id = j.value("candidate_id", std::string());
    if (c.candidate_id.empty()) c.candidate_id = content_candidate_id(c.text, c.rg.name);
}

inline void to_json(json& j, const ResponsePool& p) {
    j = json{{"v", kSchemaVersion},
             {"pool_id", p.pool_id},
             {"context", p.context},
             {"state", p.state},
             {"candidates", p.candidates}};
    j["conversation_id"] = p.conversation_id ? json(*p.conversation_id) : json(nullptr);
    j["conversation_rating"] = p.conversation_rating ? json(*p.conversation_rating) : json(nullptr);
}
inline void from_json(const json& j, ResponsePool& p) {
    p.conversation_id.reset();
    if (j.contains("conversation_id") && !j["conversation_id"].is_null())
        p.conversation_id = j["conversation_id"].get<std::string>();
    p.context = j.at("context").get<std::vector<Turn>>();
    p.state = j.at("state").get<DialogueState>();
    p.candidates = j.at("candidates").get<std::vector<ResponseCandidate>>();
    p.conversation_rating.reset();
    if (j.contains("conversation_rating") && !j["conversation_rating"].is_null())
        p.conversation_rating = j["conversation_rating"].get<int>();
    p.pool_id = j.value("pool_id", std::string());
    if (p.pool_id.empty()) p.pool_id = derive_pool_id(p.conversation_id, p.context, p.candidates);
}

inline void to_json(json& j, const AnnotationRecord& a) {
    json grades = json::object();
    for (const auto& [id, g] : a.grades) grades[id] = to_string(g);
    j = json{{"v", kSchemaVersion},
             {"pool_id", a.pool_id},
             {"grades", grades},
             {"none_of_the_above", a.none_of_the_above},
             {"annotator_id", a.annotator_id},
             {"timestamp", format_timestamp(a.timestamp)}};
}
inline void from_json(const json& j, AnnotationRecord& a) {
    a.pool_id = j.at("pool_id").get<std::string>();
    a.grades.clear();
    if (j.contains("grades"))
        for (const auto& [id, v] : j["grades"].items()) a.grades[id] = parse_grade_value(v);
    a.none_of_the_above = j.value("none_of_the_above", false);
    a.annotator_id = j.value("annotator_id", std::string());
    a.timestamp = j.contains("timestamp") ? parse_timestamp(j["timestamp"].get<std::string>()) : Timestamp{};
}

inline void to_json(json& j, const LabeledExample& e) {
    j = json{{"v", kSchemaVersion}, {"pool_id", e.pool_id}, {"context", e.context},
             {"state", e.state},    {"candidate", e.candidate}, {"label", to_string(e.label)}};
}
inline void from_json(const json& j, LabeledExample& e) {
    e.pool_id = j.value("pool_id", std::string());
    e.context = j.at("context").get<std::vector<Turn>>();
    e.state = j.at("state").get<DialogueState>();
    e.candidate = j.at("candidate").get<ResponseCandidate>();
    e.label = parse_label(j.at("label").get<std::string>());
}

inline void to_json(json& j, const AnnotatedPool& a) {
    j = json{{"v", kSchemaVersion}, {"pool", a.pool}, {"annotation", a.annotation}};
}
inline void from_json(const json& j, AnnotatedPool& a) {
    a.pool = j.at("pool").get<ResponsePool>();
    a.annotation = j.at("annotation").get<AnnotationRecord>();
}

// Parses one record, checking the schema version and mapping library errors
// to ErrorKind::Parse.
template <typename T>
T parse_record(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Parse, "record is not a JSON object");
    if (j.contains("v") && j["v"] != kSchemaVersion)
        throw Error(ErrorKind::Parse, "unsupported schema version " + j["v"].dump());
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, e.what());
    }
}

template <typename T>
T parse_record(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, e.what());
    }
    return parse_record<T>(j);
}

// --- JSONL files -------------------------------------------------------------------

inline std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open " + path);
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw Error(ErrorKind::Parse, path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

template <typename T>
std::vector<T> read_records(const std::string& path) {
    std::vector<T> out;
    for (const auto& j : read_jsonl(path)) out.push_back(parse_record<T>(j));
    return out;
}

template <typename T>
void write_records(const std::string& path, const std::vector<T>& records) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::StorageError, "cannot write " + path);
    for (const auto& r : records) out << json(r).dump() << '\n';
}

}  // namespace rsel

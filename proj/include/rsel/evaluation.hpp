#pragma once

// Ranker-agnostic evaluation: Recall@1 against human-preferred sets, paired
// ranker comparison, and the A/B conversation-log analysis.

#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsel/core.hpp"
#include "rsel/ranking.hpp"
#include "rsel/stats.hpp"

namespace rsel {

struct PoolHit {
    std::string pool_id;
    std::string top_candidate;
    bool hit = false;
};

struct RankerResult {
    std::string ranker;
    std::size_t hits = 0;
    std::size_t n = 0;
    double recall_at_1 = 0.0;  // hits / n
    std::vector<PoolHit> per_pool;
};

struct EvalReport {
    std::vector<RankerResult> rankers;
};

// Rejects the whole test set if any pool lacks a preferred candidate.
inline std::vector<std::set<std::string>> preferred_sets(const std::vector<AnnotatedPool>& test, const LabelPolicy& policy) {
    std::vector<std::set<std::string>> out;
    out.reserve(test.size());
    for (const auto& ap : test) {
        auto s = preferred_set(ap.pool, ap.annotation, policy);
        if (s.empty()) throw Error(ErrorKind::NoPreferredResponse, ap.pool.pool_id);
        out.push_back(std::move(s));
    }
    return out;
}

namespace detail {

inline RankerResult score_ranker(const Ranker& ranker, const std::vector<AnnotatedPool>& test,
                                 const std::vector<std::set<std::string>>& preferred) {
    RankerResult r;
    r.ranker = ranker.name();
    r.n = test.size();
    for (std::size_t i = 0; i < test.size(); ++i) {
        const RankedPool ranked = ranker.rank(test[i].pool);
        if (!is_permutation_of(ranked, test[i].pool))
            throw Error(ErrorKind::RankerFailure, ranker.name() + " returned a non-permutation for " + test[i].pool.pool_id);
        const bool hit = preferred[i].count(ranked.top()) != 0;
        r.hits += hit;
        r.per_pool.push_back({test[i].pool.pool_id, ranked.top(), hit});
    }
    r.recall_at_1 = r.n ? static_cast<double>(r.hits) / static_cast<double>(r.n) : 0.0;
    return r;
}

}  // namespace detail

inline EvalReport recall_at_1(const Ranker& ranker, const std::vector<AnnotatedPool>& test, const LabelPolicy& policy = {}) {
    const auto preferred = preferred_sets(test, policy);
    return EvalReport{{detail::score_ranker(ranker, test, preferred)}};
}

struct PairwiseTest {
    std::string a, b;
    std::size_t a_only = 0;  // pools A hit and B missed
    std::size_t b_only = 0;
    double p_value = 1.0;    // exact McNemar (binomial on discordant pairs)
};

struct Comparison {
    EvalReport report;
    std::vector<PairwiseTest> pairwise;
};

inline PairwiseTest mcnemar(const RankerResult& a, const RankerResult& b) {
    if (a.per_pool.size() != b.per_pool.size()) throw Error(ErrorKind::InvalidRecord, "rankers scored different test sets");
    PairwiseTest t{a.ranker, b.ranker};
    for (std::size_t i = 0; i < a.per_pool.size(); ++i) {
        if (a.per_pool[i].hit && !b.per_pool[i].hit) ++t.a_only;
        if (!a.per_pool[i].hit && b.per_pool[i].hit) ++t.b_only;
    }
    t.p_value = stats::exact_sign_test(t.a_only, t.a_only + t.b_only);
    return t;
}

inline Comparison compare(const std::vector<const Ranker*>& rankers, const std::vector<AnnotatedPool>& test,
                          const LabelPolicy& policy = {}) {
    const auto preferred = preferred_sets(test, policy);
    Comparison c;
    for (const auto* r : rankers) c.report.rankers.push_back(detail::score_ranker(*r, test, preferred));
    for (std::size_t i = 0; i < c.report.rankers.size(); ++i)
        for (std::size_t j = i + 1; j < c.report.rankers.size(); ++j)
            c.pairwise.push_back(mcnemar(c.report.rankers[i], c.report.rankers[j]));
    return c;
}

inline std::string format_percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
    return buf;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json rankers = nlohmann::json::array();
    for (const auto& rr : r.rankers) {
        nlohmann::json pools = nlohmann::json::array();
        for (const auto& ph : rr.per_pool)
            pools.push_back({{"pool_id", ph.pool_id}, {"top_candidate", ph.top_candidate}, {"hit", ph.hit}});
        rankers.push_back({{"ranker", rr.ranker},
                           {"hits", rr.hits},
                           {"n", rr.n},
                           {"recall_at_1", rr.recall_at_1},
                           {"per_pool", pools}});
    }
    return {{"rankers", rankers}};
}

inline nlohmann::json to_json(const Comparison& c) {
    nlohmann::json j = to_json(c.report);
    nlohmann::json pw = nlohmann::json::array();
    for (const auto& t : c.pairwise)
        pw.push_back({{"a", t.a}, {"b", t.b}, {"a_only", t.a_only}, {"b_only", t.b_only}, {"p_value", t.p_value}});
    j["pairwise"] = pw;
    return j;
}

inline std::string render_table(const EvalReport& r) {
    std::string out = "ranker                          hits     n  recall@1\n";
    for (const auto& rr : r.rankers) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-30s %5zu %5zu  %s\n", rr.ranker.c_str(), rr.hits, rr.n,
                      format_percent(rr.recall_at_1).c_str());
        out += buf;
    }
    return out;
}

inline std::string render_table(const Comparison& c) {
    std::string out = render_table(c.report);
    if (!c.pairwise.empty()) out += "\npairwise (exact McNemar)\n";
    for (const auto& t : c.pairwise) {
        char buf[192];
        std::snprintf(buf, sizeof buf, "%s vs %s: %zu/%zu discordant, p = %.4g\n", t.a.c_str(), t.b.c_str(), t.a_only,
                      t.b_only, t.p_value);
        out += buf;
    }
    return out;
}

// --- A/B log analysis -----------------------------------------------------------

struct ConversationLog {
    std::string conversation_id;
    std::string arm;  // "A" or "B"
    std::size_t turns = 0;
    std::size_t system_turns = 0;
    std::optional<double> rating;
};

inline void from_json(const nlohmann::json& j, ConversationLog& c) {
    c.conversation_id = j.value("conversation_id", std::string());
    c.arm = j.at("arm").get<std::string>();
    c.turns = j.at("turns").get<std::size_t>();
    c.system_turns = j.value("system_turns", c.turns / 2);
    c.rating.reset();
    if (j.contains("rating") && !j["rating"].is_null()) c.rating = j["rating"].get<double>();
}

inline void to_json(nlohmann::json& j, const ConversationLog& c) {
    j = {{"conversation_id", c.conversation_id}, {"arm", c.arm}, {"turns", c.turns}, {"system_turns", c.system_turns}};
    j["rating"] = c.rating ? nlohmann::json(*c.rating) : nlohmann::json(nullptr);
}

struct ArmStats {
    std::size_t n_conversations = 0;
    std::size_t n_rated = 0;
    double median_turns = 0.0;
    double mean_turns = 0.0;
    double mean_rating = 0.0;
};

struct ABReport {
    ArmStats a, b;
    stats::TestResult turns_welch, turns_mann_whitney, rating_welch, rating_mann_whitney;
    std::size_t excluded_short = 0;
    std::string note = "conversations treated as independent samples";
};

struct ABOptions {
    std::size_t min_system_turns = 4;
};

inline ABReport ab_analyze(const std::vector<ConversationLog>& logs, const ABOptions& opt = {}) {
    std::vector<double> turns_a, turns_b, rating_a, rating_b;
    ABReport r;
    for (const auto& c : logs) {
        if (c.arm != "A" && c.arm != "B")
            throw Error(ErrorKind::InvalidRecord, "conversation " + c.conversation_id + " has arm '" + c.arm + "'");
        if (c.system_turns < opt.min_system_turns) {
            ++r.excluded_short;
            continue;
        }
        const bool is_a = c.arm == "A";
        (is_a ? turns_a : turns_b).push_back(static_cast<double>(c.turns));
        if (c.rating) (is_a ? rating_a : rating_b).push_back(*c.rating);
    }
    if (turns_a.empty()) throw Error(ErrorKind::EmptyArm, "arm A has no eligible conversations");
    if (turns_b.empty()) throw Error(ErrorKind::EmptyArm, "arm B has no eligible conversations");

    auto fill = [](ArmStats& s, const std::vector<double>& turns, const std::vector<double>& ratings) {
        s.n_conversations = turns.size();
        s.n_rated = ratings.size();
        s.median_turns = stats::median(turns);
        s.mean_turns = stats::mean(turns);
        s.mean_rating = stats::mean(ratings);
    };
    fill(r.a, turns_a, rating_a);
    fill(r.b, turns_b, rating_b);

    r.turns_welch = stats::welch_t_test(turns_b, turns_a);
    r.turns_mann_whitney = stats::mann_whitney_u(turns_b, turns_a);
    if (rating_a.size() >= 2 && rating_b.size() >= 2) {
        r.rating_welch = stats::welch_t_test(rating_b, rating_a);
        r.rating_mann_whitney = stats::mann_whitney_u(rating_b, rating_a);
    }
    return r;
}

inline nlohmann::json to_json(const ABReport& r) {
    auto arm = [](const ArmStats& s) {
        return nlohmann::json{{"n_conversations", s.n_conversations}, {"n_rated", s.n_rated},
                              {"median_turns", s.median_turns},       {"mean_turns", s.mean_turns},
                              {"mean_rating", s.mean_rating}};
    };
    auto test = [](const stats::TestResult& t) { return nlohmann::json{{"statistic", t.statistic}, {"p_value", t.p_value}}; };
    return {{"A", arm(r.a)},
            {"B", arm(r.b)},
            {"turns", {{"welch", test(r.turns_welch)}, {"mann_whitney", test(r.turns_mann_whitney)}}},
            {"rating", {{"welch", test(r.rating_welch)}, {"mann_whitney", test(r.rating_mann_whitney)}}},
            {"excluded_short", r.excluded_short},
            {"note", r.note}};
}

inline std::string render_table(const ABReport& r) {
    char buf[768];
    std::snprintf(buf, sizeof buf,
                  "arm        N   median turns   mean turns   mean rating\n"
                  "A    %6zu   %12.1f   %10.2f   %11.2f\n"
                  "B    %6zu   %12.1f   %10.2f   %11.2f\n"
                  "turns:  Welch p = %.3g, Mann-Whitney p = %.3g\n"
                  "rating: Welch p = %.3g, Mann-Whitney p = %.3g\n"
                  "excluded (under min system turns): %zu\n"
                  "note: %s\n",
                  r.a.n_conversations, r.a.median_turns, r.a.mean_turns, r.a.mean_rating, r.b.n_conversations,
                  r.b.median_turns, r.b.mean_turns, r.b.mean_rating, r.turns_welch.p_value,
                  r.turns_mann_whitney.p_value, r.rating_welch.p_value, r.rating_mann_whitney.p_value,
                  r.excluded_short, r.note.c_str());
    return buf;
}

// Ranks by externally computed scores, e.g. from an off-the-shelf evaluator
// run out of process. Missing scores fall to the bottom.
class ExternalScoreRanker final : public Ranker {
public:
    using ScoreTable = std::map<std::pair<std::string, std::string>, double>;  // (pool_id, candidate_id)

    ExternalScoreRanker(std::string name, ScoreTable scores) : name_(std::move(name)), scores_(std::move(scores)) {}

    RankedPool rank(const ResponsePool& pool) const override {
        std::vector<double> s;
        for (const auto& c : pool.candidates) {
            auto it = scores_.find({pool.pool_id, c.candidate_id});
            s.push_back(it == scores_.end() ? -std::numeric_limits<double>::infinity() : it->second);
        }
        return rank_by_scores(pool, s);
    }
    std::string name() const override { return name_; }

private:
    std::string name_;
    ScoreTable scores_;
};

}  // namespace rsel

#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace rsel;
using namespace rsel::testing;

namespace {

class OracleRanker final : public Ranker {
public:
    OracleRanker(const std::vector<AnnotatedPool>& test, bool anti) : anti_(anti) {
        for (const auto& ap : test) preferred_[ap.pool.pool_id] = preferred_set(ap.pool, ap.annotation);
    }
    RankedPool rank(const ResponsePool& pool) const override {
        const auto& pref = preferred_.at(pool.pool_id);
        RankedPool r{pool.pool_id, {}, std::nullopt};
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& c : pool.candidates)
                if ((pref.count(c.candidate_id) != 0) == ((pass == 0) != anti_)) r.order.push_back(c.candidate_id);
        return r;
    }
    std::string name() const override { return anti_ ? "anti-oracle" : "oracle"; }

private:
    bool anti_;
    std::map<std::string, std::set<std::string>> preferred_;
};

double round2(double x) { return std::round(x * 100.0) / 100.0; }

}  // namespace

TEST(Recall, HitCountsGiveExpectedPercentages) {
    const InputOrderRanker ranker;
    const std::pair<std::size_t, const char*> cases[] = {{63, "70.79%"}, {50, "56.18%"}, {42, "47.19%"}};
    for (const auto& [hits, text] : cases) {
        const auto r = recall_at_1(ranker, recall_fixture(89, hits)).rankers.front();
        EXPECT_EQ(r.hits, hits);
        EXPECT_EQ(r.n, 89u);
        EXPECT_DOUBLE_EQ(r.recall_at_1, static_cast<double>(hits) / 89.0);
        EXPECT_EQ(format_percent(r.recall_at_1), text);
    }
}

TEST(Recall, OracleAndAntiOracle) {
    const auto test = KeywordWorld().annotated_pools(50, 4);
    EXPECT_EQ(recall_at_1(OracleRanker(test, false), test).rankers[0].recall_at_1, 1.0);
    EXPECT_EQ(recall_at_1(OracleRanker(test, true), test).rankers[0].recall_at_1, 0.0);
}

TEST(Recall, EmptyTestSetAndPolicy) {
    EXPECT_EQ(recall_at_1(InputOrderRanker(), {}).rankers[0].n, 0u);
    // Grade B at index 1 counts only under the wider policy.
    auto test = recall_fixture(10, 0);
    EXPECT_EQ(recall_at_1(InputOrderRanker(), test).rankers[0].hits, 0u);
    class SecondFirst final : public Ranker {
    public:
        RankedPool rank(const ResponsePool& p) const override {
            RankedPool r{p.pool_id, {p.candidates[1].candidate_id}, std::nullopt};
            for (std::size_t i = 0; i < p.candidates.size(); ++i)
                if (i != 1) r.order.push_back(p.candidates[i].candidate_id);
            return r;
        }
        std::string name() const override { return "second"; }
    };
    EXPECT_EQ(recall_at_1(SecondFirst(), test, LabelPolicy::a_or_b()).rankers[0].hits, 10u);
}

TEST(Recall, IsAlwaysAMultipleOfOneOverN) {
    Rng rng(2);
    KeywordWorld world;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.index(30);
        const auto test = world.annotated_pools(n, rng.index(1u << 20));
        const auto r = recall_at_1(InputOrderRanker(), test).rankers[0];
        const double k = r.recall_at_1 * static_cast<double>(n);
        EXPECT_NEAR(k, std::round(k), 1e-9);
        EXPECT_GE(r.recall_at_1, 0.0);
        EXPECT_LE(r.recall_at_1, 1.0);
    }
}

TEST(Recall, InvariantToTestSetOrder) {
    auto test = KeywordWorld().annotated_pools(40, 6);
    const auto before = recall_at_1(InputOrderRanker(), test).rankers[0].hits;
    Rng rng(1);
    rng.shuffle(test);
    EXPECT_EQ(recall_at_1(InputOrderRanker(), test).rankers[0].hits, before);
}

TEST(Recall, RejectsNonPermutationRankings) {
    class Broken final : public Ranker {
    public:
        RankedPool rank(const ResponsePool& p) const override { return {p.pool_id, {p.candidates[0].candidate_id}, std::nullopt}; }
        std::string name() const override { return "broken"; }
    };
    EXPECT_THROW(recall_at_1(Broken(), recall_fixture(3, 1)), Error);
}

TEST(Compare, McNemarOnDisjointWins) {
    const auto test = recall_fixture(10, 10);
    const OracleRanker oracle(test, false), anti(test, true);
    const auto c = compare({&oracle, &anti}, test);
    ASSERT_EQ(c.pairwise.size(), 1u);
    EXPECT_EQ(c.pairwise[0].a_only, 10u);
    EXPECT_EQ(c.pairwise[0].b_only, 0u);
    EXPECT_DOUBLE_EQ(c.pairwise[0].p_value, 0.001953125);
    const auto j = to_json(c);
    EXPECT_EQ(j["rankers"].size(), 2u);
}

TEST(Compare, ExternalScoresRankAndMissingSinks) {
    auto p = simple_pool(3);
    ExternalScoreRanker::ScoreTable t{{{p.pool_id, p.candidates[1].candidate_id}, 0.9},
                                      {{p.pool_id, p.candidates[0].candidate_id}, 0.1}};
    const ExternalScoreRanker r("ext", t);
    EXPECT_EQ(r.rank(p).order, (std::vector<std::string>{p.candidates[1].candidate_id, p.candidates[0].candidate_id,
                                                         p.candidates[2].candidate_id}));
}

// --- A/B -------------------------------------------------------------------------

TEST(AB, TargetMarginalsReproduce) {
    const auto r = ab_analyze(ab_marginals_fixture());
    EXPECT_EQ(r.excluded_short, 50u);
    EXPECT_EQ(r.a.n_conversations, 3502u);
    EXPECT_EQ(r.b.n_conversations, 2856u);
    EXPECT_EQ(r.a.median_turns, 10.0);
    EXPECT_EQ(r.b.median_turns, 19.0);
    EXPECT_EQ(round2(r.a.mean_turns), 15.02);
    EXPECT_EQ(round2(r.b.mean_turns), 24.77);
    EXPECT_EQ(round2(r.a.mean_rating), 3.64);
    EXPECT_EQ(round2(r.b.mean_rating), 3.77);
    EXPECT_LT(r.turns_welch.p_value, 0.01);
    EXPECT_LT(r.rating_welch.p_value, 0.01);
    EXPECT_GT(r.turns_welch.statistic, 0.0);
}

TEST(AB, IdenticalArmsAreNotDifferent) {
    auto a = ab_arm("A", 200, 12, 2800, 700, 8);
    auto b = ab_arm("B", 200, 12, 2800, 700, 8);
    a.insert(a.end(), b.begin(), b.end());
    const auto r = ab_analyze(a);
    EXPECT_NEAR(r.turns_welch.p_value, 1.0, 1e-12);
    EXPECT_NEAR(r.rating_welch.p_value, 1.0, 1e-12);
}

TEST(AB, SimulatedShiftIsDetected) {
    Rng rng(5);
    std::vector<ConversationLog> logs;
    for (int i = 0; i < 500; ++i) {
        const bool is_a = i % 2 == 0;
        const double t = std::max(8.0, std::round(rng.normal(is_a ? 15 : 25, 3)));
        logs.push_back({"c" + std::to_string(i), is_a ? "A" : "B", static_cast<std::size_t>(t), static_cast<std::size_t>(t) / 2,
                        std::nullopt});
    }
    const auto r = ab_analyze(logs);
    EXPECT_LT(r.turns_welch.p_value, 1e-3);
    EXPECT_LT(r.turns_mann_whitney.p_value, 1e-3);
    EXPECT_EQ(r.a.n_rated, 0u);
    EXPECT_EQ(r.rating_welch.p_value, 1.0);
}

TEST(AB, InvariantToLogOrder) {
    auto logs = ab_marginals_fixture();
    const auto before = ab_analyze(logs);
    Rng rng(3);
    rng.shuffle(logs);
    const auto after = ab_analyze(logs);
    EXPECT_EQ(after.a.mean_turns, before.a.mean_turns);
    EXPECT_NEAR(after.turns_welch.p_value, before.turns_welch.p_value, 1e-15);
    EXPECT_EQ(after.rating_mann_whitney.statistic, before.rating_mann_whitney.statistic);
}

TEST(AB, EmptyArmAndBadArm) {
    std::vector<ConversationLog> logs{{"x", "A", 10, 5, 4.0}, {"y", "B", 4, 2, 3.0}};
    try {
        ab_analyze(logs);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyArm);
    }
    logs[1].arm = "C";
    EXPECT_THROW(ab_analyze(logs), Error);
}

TEST(AB, JsonRoundTripOfLogs) {
    const ConversationLog c{"c1", "B", 12, 6, std::nullopt};
    const auto back = nlohmann::json(c).get<ConversationLog>();
    EXPECT_EQ(back.turns, 12u);
    EXPECT_FALSE(back.rating.has_value());
    EXPECT_EQ(nlohmann::json::parse(R"({"arm":"A","turns":10})").get<ConversationLog>().system_turns, 5u);
}

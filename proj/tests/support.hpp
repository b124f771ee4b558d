#pragma once

// Fixtures shared by the unit tests and the acceptance binary.

#include <atomic>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "rsel/rsel.hpp"

namespace rsel::testing {

inline RGDescriptor rg(const std::string& name, RGType type, const std::string& topic) { return {name, type, topic}; }

inline std::vector<Turn> short_context(std::size_t turns = 2) {
    std::vector<Turn> ctx;
    for (std::size_t i = 0; i < turns; ++i) {
        const auto idx = static_cast<std::uint32_t>(i);
        // Ends with the user.
        if ((turns - 1 - i) % 2 == 0) ctx.push_back(make_user_turn("user says " + std::to_string(i), idx));
        else ctx.push_back(make_system_turn("system says " + std::to_string(i), rg("flow", RGType::Flow, "music"), idx));
    }
    return ctx;
}

inline DialogueState state_on(const std::string& topic, std::uint32_t system_turns = 5) {
    DialogueState s;
    s.current_topic = topic;
    s.system_turn_count = system_turns;
    return s;
}

// Pool whose candidates are "cand0".."candN-1" from distinct RGs.
inline ResponsePool simple_pool(std::size_t n, const std::string& conv = "conv", std::uint32_t system_turns = 5) {
    std::vector<ResponseCandidate> cands;
    for (std::size_t i = 0; i < n; ++i)
        cands.push_back(make_candidate("cand" + std::to_string(i) + " " + conv,
                                       rg("rg" + std::to_string(i), RGType::KG, "music")));
    return build_pool(short_context(), state_on("music", system_turns), cands, conv);
}

inline AnnotationRecord grade(const ResponsePool& p, std::map<std::size_t, Grade> by_index, bool nota = false) {
    AnnotationRecord a;
    a.pool_id = p.pool_id;
    for (auto [i, g] : by_index) a.grades[p.candidates.at(i).candidate_id] = g;
    a.none_of_the_above = nota;
    a.annotator_id = "tester";
    a.timestamp = Timestamp{std::chrono::seconds{1700000000}};
    return a;
}

// Ranker returning the pool's input order.
class InputOrderRanker final : public Ranker {
public:
    RankedPool rank(const ResponsePool& pool) const override {
        RankedPool r{pool.pool_id, {}, std::nullopt};
        for (const auto& c : pool.candidates) r.order.push_back(c.candidate_id);
        return r;
    }
    std::string name() const override { return "input-order"; }
};

// n test pools of 4 candidates; pool i is a hit for input-order ranking iff i < hits.
inline std::vector<AnnotatedPool> recall_fixture(std::size_t n, std::size_t hits) {
    std::vector<AnnotatedPool> out;
    for (std::size_t i = 0; i < n; ++i) {
        auto p = simple_pool(4, "conv" + std::to_string(i));
        out.push_back({p, grade(p, {{i < hits ? 0u : 2u, Grade::A}, {1, Grade::B}})});
    }
    return out;
}

// Counts rank() calls; ranks in reverse input order.
class CountingRanker final : public Ranker {
public:
    explicit CountingRanker(std::string name = "counting") : name_(std::move(name)) {}
    RankedPool rank(const ResponsePool& pool) const override {
        ++calls;
        RankedPool r{pool.pool_id, {}, std::nullopt};
        for (auto it = pool.candidates.rbegin(); it != pool.candidates.rend(); ++it) r.order.push_back(it->candidate_id);
        return r;
    }
    std::string name() const override { return name_; }
    mutable std::atomic<int> calls{0};

private:
    std::string name_;
};

class ThrowingRanker final : public Ranker {
public:
    RankedPool rank(const ResponsePool&) const override { throw Error(ErrorKind::BackendError, "stub failure"); }
    std::string name() const override { return "throwing"; }
};

// LM backend defined by a function of (context, continuation).
class StubLM final : public LMScorer {
public:
    using Fn = std::function<double(std::string_view, std::string_view)>;
    explicit StubLM(Fn fn) : fn_(std::move(fn)) {}
    double conditional_log_likelihood(std::string_view ctx, std::string_view cont) const override {
        ++calls;
        return fn_(ctx, cont);
    }
    std::string identity() const override { return "stub"; }
    std::size_t max_concurrency() const override { return 1; }
    mutable std::atomic<int> calls{0};

private:
    Fn fn_;
};

// Random pools for heuristic checks: up to 6 candidates over a small RG and
// topic inventory, random state and signals.
inline ResponsePool random_heuristic_pool(Rng& rng, std::size_t max_candidates = 6) {
    static const std::vector<std::string> topics{"music", "movies", "sports"};
    std::vector<RGDescriptor> rgs;
    for (const auto& t : topics)
        for (auto type : kAllRGTypes) rgs.push_back(rg(t + "-" + to_string(type), type, t));
    const std::string topic = topics[rng.index(topics.size())];
    DialogueState st = state_on(topic);
    if (rng.index(4) != 0) {
        st.last_rg = rgs[rng.index(rgs.size())];
        static const ContinuationSignal sigs[] = {ContinuationSignal::MustContinue, ContinuationSignal::CanContinue,
                                                  ContinuationSignal::Ended};
        st.continuation_signal = sigs[rng.index(3)];
    }
    const std::size_t n = 1 + rng.index(max_candidates);
    std::vector<ResponseCandidate> cands;
    std::vector<std::size_t> rg_idx = rng.sample_indices(rgs.size(), n);
    // Bias towards including the last RG.
    if (st.last_rg && rng.index(2) == 0) {
        for (std::size_t k = 0; k < rgs.size(); ++k)
            if (rgs[k] == *st.last_rg) rg_idx[rng.index(n)] = k;
        std::sort(rg_idx.begin(), rg_idx.end());
        rg_idx.erase(std::unique(rg_idx.begin(), rg_idx.end()), rg_idx.end());
        rng.shuffle(rg_idx);
    }
    static const ContinuationSignal csigs[] = {ContinuationSignal::MustContinue, ContinuationSignal::CanContinue,
                                               ContinuationSignal::Ended, ContinuationSignal::None};
    for (std::size_t k = 0; k < rg_idx.size(); ++k)
        cands.push_back(make_candidate("response " + std::to_string(k), rgs[rg_idx[k]], csigs[rng.index(4)]));
    return build_pool(short_context(), st, cands, "conv");
}

// --- A/B log fixture --------------------------------------------------------------

// Integer turn counts with given n, median, sum; ratings 1..5 with a given sum.
inline std::vector<ConversationLog> ab_arm(const std::string& arm, std::size_t n, std::size_t median, std::size_t turn_sum,
                                           std::size_t rating_sum, std::size_t min_turns) {
    std::vector<std::size_t> turns(n, median);
    // Lower half sits at min_turns..median, upper half absorbs the remaining sum.
    const std::size_t half = n / 2;
    for (std::size_t i = 0; i < half; ++i) turns[i] = min_turns + i % (median - min_turns + 1);
    std::size_t sum = 0;
    for (auto t : turns) sum += t;
    std::size_t remaining = turn_sum - sum;
    for (std::size_t i = half + 1; remaining > 0; i = (i + 1 < n) ? i + 1 : half + 1) {
        const std::size_t add = std::min<std::size_t>(remaining, 1 + (i * 7) % 23);
        turns[i] += add;
        remaining -= add;
    }
    // Ratings cycle through 1..5 around a per-arm base so both arms have spread.
    std::vector<std::size_t> ratings(n, 3);
    std::size_t rsum = 3 * n;
    for (std::size_t i = 0; i + 1 < n; i += 2) {
        const std::size_t d = i % 4 == 0 ? 2 : 1;
        ratings[i] -= d;
        ratings[i + 1] += d;
    }
    for (std::size_t i = 0; rsum != rating_sum; i = (i + 1) % n) {
        if (rsum < rating_sum && ratings[i] < 5) ++ratings[i], ++rsum;
        else if (rsum > rating_sum && ratings[i] > 1) --ratings[i], --rsum;
    }
    std::vector<ConversationLog> out;
    for (std::size_t i = 0; i < n; ++i)
        out.push_back({arm + std::to_string(i), arm, turns[i], turns[i] / 2, static_cast<double>(ratings[i])});
    return out;
}

// Conversations matching the two arms' target marginals, plus ineligible
// short ones that the analyzer must drop.
inline std::vector<ConversationLog> ab_marginals_fixture() {
    auto logs = ab_arm("A", 3502, 10, 52600, 12747, 8);
    auto b = ab_arm("B", 2856, 19, 70743, 10767, 8);
    logs.insert(logs.end(), b.begin(), b.end());
    for (int i = 0; i < 50; ++i) logs.push_back({"short" + std::to_string(i), i % 2 ? "A" : "B", 4, 2, 1.0});
    return logs;
}

// --- sampler fixture ------------------------------------------------------------

// Per topic and rating: `per_bucket` pools, the first `questions_per_bucket`
// question-final, followed by `extra_questions_per_bucket` more question-final pools.
inline std::vector<ResponsePool> sampler_logs(const std::vector<std::string>& topics, std::size_t per_bucket,
                                              std::size_t questions_per_bucket,
                                              std::size_t extra_questions_per_bucket) {
    std::vector<ResponsePool> logs;
    std::size_t serial = 0;
    for (const auto& topic : topics) {
        for (int rating = 1; rating <= 5; ++rating) {
            for (std::size_t k = 0; k < per_bucket + extra_questions_per_bucket; ++k) {
                DialogueState st = state_on(topic);
                st.user_utterance_is_question = k < questions_per_bucket || k >= per_bucket;
                const std::string conv = "c" + std::to_string(serial++);
                std::vector<ResponseCandidate> cands{
                    make_candidate("a " + conv, rg(topic + "-kg", RGType::KG, topic)),
                    make_candidate("b " + conv, rg(topic + "-flow", RGType::Flow, topic))};
                logs.push_back(build_pool(short_context(), st, cands, conv, rating));
            }
        }
    }
    return logs;
}

inline std::vector<std::string> sixteen_topics() {
    return {"music", "movies", "sports", "books", "games", "food", "travel", "animals",
            "science", "tech", "art", "history", "space", "cars", "fashion", "health"};
}

// --- keyword world for the learned ranker ----------------------------------------

// Each topic owns a keyword list; a good response shares a keyword with the
// last user turn, so lexical topic overlap is the generating rule.
struct KeywordWorld {
    std::vector<std::string> topics{"music", "movies", "sports", "food", "travel", "space", "books", "animals"};
    std::vector<std::vector<std::string>> keywords{
        {"guitar", "jazz", "album", "singer", "concert", "drums"},
        {"film", "actor", "director", "cinema", "oscar", "sequel"},
        {"soccer", "tennis", "goal", "team", "league", "coach"},
        {"pizza", "recipe", "pasta", "chef", "dessert", "spicy"},
        {"paris", "flight", "beach", "hotel", "passport", "island"},
        {"planet", "rocket", "orbit", "nasa", "galaxy", "moon"},
        {"novel", "author", "chapter", "library", "poetry", "fiction"},
        {"dog", "cat", "zoo", "puppy", "wildlife", "bird"}};
    std::vector<std::string> fillers{"i", "think", "really", "the", "a", "you", "is", "so", "my", "about", "that", "love"};

    std::string sentence(Rng& rng, std::size_t topic, std::size_t n_keywords = 2) const {
        std::string s;
        for (std::size_t i = 0; i < 4 + n_keywords; ++i) {
            if (!s.empty()) s += ' ';
            s += i % 3 == 1 && n_keywords > 0 ? keywords[topic][rng.index(keywords[topic].size())]
                                              : fillers[rng.index(fillers.size())];
        }
        s += ' ' + keywords[topic][rng.index(keywords[topic].size())];
        return s;
    }

    std::vector<Turn> context(Rng& rng, std::size_t topic) const {
        const std::size_t other = rng.index(topics.size());
        return {make_user_turn(sentence(rng, other), 0),
                make_system_turn(sentence(rng, other), rg("flow", RGType::Flow, topics[other]), 1),
                make_user_turn(sentence(rng, topic), 2)};
    }

    std::vector<PretrainPair> pretrain_pairs(std::size_t n, std::uint64_t seed) const {
        Rng rng(seed);
        std::vector<PretrainPair> out;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t t = rng.index(topics.size());
            out.push_back({context(rng, t), sentence(rng, t)});
        }
        return out;
    }

    // Annotated pools: one on-topic A candidate, the rest off-topic.
    std::vector<AnnotatedPool> annotated_pools(std::size_t n, std::uint64_t seed, std::size_t min_size = 3,
                                               std::size_t max_size = 6) const {
        Rng rng(seed);
        std::vector<AnnotatedPool> out;
        static const RGType types[] = {RGType::KG, RGType::Flow, RGType::NRG, RGType::CenterTrivia};
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t t = rng.index(topics.size());
            const std::size_t size = min_size + rng.index(max_size - min_size + 1);
            const std::size_t good = rng.index(size);
            std::vector<ResponseCandidate> cands;
            for (std::size_t k = 0; k < size; ++k) {
                std::size_t ct = t;
                if (k != good)
                    while (ct == t) ct = rng.index(topics.size());
                const RGType type = types[rng.index(4)];
                cands.push_back(make_candidate(sentence(rng, ct) + " " + std::to_string(i),
                                               rg(topics[ct] + "-" + to_string(type), type, topics[ct])));
            }
            DialogueState st = state_on(topics[t]);
            auto pool = build_pool(context(rng, t), st, cands, "kw" + std::to_string(i));
            out.push_back({pool, grade(pool, {{good, Grade::A}})});
        }
        return out;
    }
};

inline std::vector<LabeledExample> labels_of(const std::vector<AnnotatedPool>& pools, const LabelPolicy& policy = {}) {
    std::vector<LabeledExample> out;
    for (const auto& ap : pools) {
        auto ex = derive_labels(ap.pool, ap.annotation, policy);
        out.insert(out.end(), ex.begin(), ex.end());
    }
    return out;
}

inline double mean_pool_size(const std::vector<AnnotatedPool>& pools) {
    double s = 0;
    for (const auto& p : pools) s += static_cast<double>(p.pool.candidates.size());
    return s / static_cast<double>(pools.size());
}

}  // namespace rsel::testing

// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <sstream>

#include "../support.hpp"

using namespace rsel;
using namespace rsel::testing;

namespace {

constexpr double kRecallRuntimeLimitS = 1.0;
constexpr int kRationalityTrials = 1000;
constexpr double kRationalityTol = 1e-9;
constexpr int kCapSweepPoints = 10000;
constexpr int kHeuristicTrials = 1000;
constexpr double kUniformProbeTol = 1e-12;
constexpr int kShiftStubs = 200;
constexpr double kNumericTol = 1e-9;
constexpr double kMinBinaryAccuracy = 0.90;
constexpr double kLearnedRuntimeLimitS = 300.0;
constexpr int kEncodingTrials = 500;

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double round2(double x) { return std::round(x * 100.0) / 100.0; }

// --- 1 -------------------------------------------------------------------------

Outcome recall_fidelity() {
    const auto t0 = Clock::now();
    Outcome o;
    const std::pair<std::size_t, std::string> cases[] = {{63, "70.79%"}, {50, "56.18%"}, {42, "47.19%"}};
    std::string got;
    for (const auto& [hits, want] : cases) {
        const auto r = recall_at_1(InputOrderRanker(), recall_fixture(89, hits)).rankers.front();
        const auto text = format_percent(r.recall_at_1);
        got += (got.empty() ? "" : " / ") + text;
        o.pass = o.pass && text == want && r.hits == hits && r.n == 89;
    }
    const double s = seconds_since(t0);
    o.pass = o.pass && s < kRecallRuntimeLimitS;
    o.detail = got + " in " + fmt("%.3f s", s);
    return o;
}

// --- 2 -------------------------------------------------------------------------

class ShuffledRanker final : public Ranker {
public:
    explicit ShuffledRanker(std::uint64_t seed) : seed_(seed) {}
    RankedPool rank(const ResponsePool& pool) const override {
        Rng rng(seed_ ^ Fnv1a().field(pool.pool_id).value());
        RankedPool r{pool.pool_id, {}, std::nullopt};
        for (const auto& c : pool.candidates) r.order.push_back(c.candidate_id);
        rng.shuffle(r.order);
        return r;
    }
    std::string name() const override { return "shuffled"; }

private:
    std::uint64_t seed_;
};

Outcome recall_rationality() {
    Rng rng(2024);
    int bad = 0;
    for (int t = 0; t < kRationalityTrials; ++t) {
        const std::size_t n = 1 + rng.index(120);
        const auto test = recall_fixture(n, rng.index(n + 1));
        const auto r = recall_at_1(ShuffledRanker(rng.index(1u << 30)), test).rankers.front();
        const double k = r.recall_at_1 * static_cast<double>(n);
        if (std::abs(k - std::round(k)) > kRationalityTol || r.recall_at_1 < 0.0 || r.recall_at_1 > 1.0) ++bad;
    }
    return {bad == 0, std::to_string(kRationalityTrials) + " trials, " + std::to_string(bad) + " violations"};
}

// --- 3 -------------------------------------------------------------------------

Outcome negative_cap_formula() {
    Outcome o;
    const bool known = negative_cap(1.0) == 8 && negative_cap(std::exp(4.0)) == 16 && negative_cap(100.0) == 17;
    bool monotone = true;
    std::size_t prev = 0;
    for (int i = 0; i < kCapSweepPoints; ++i) {
        const double c = 1.0 + 1e4 * static_cast<double>(i) / (kCapSweepPoints - 1);
        const std::size_t cap = negative_cap(c);
        monotone = monotone && cap >= prev;
        prev = cap;
    }
    std::size_t violations = 0, capped = 0;
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ResponseCandidate> boilers;
        for (std::size_t b = 0; b < 1 + rng.index(5); ++b)
            boilers.push_back(make_candidate("boiler " + std::to_string(b), rg("flow", RGType::Flow, "music")));
        std::vector<LabeledExample> ex;
        const std::size_t n_pools = 5 + rng.index(400);
        for (std::size_t i = 0; i < n_pools; ++i) {
            std::vector<ResponseCandidate> cands{make_candidate("u" + std::to_string(i), rg("kg", RGType::KG, "m"))};
            for (const auto& b : boilers)
                if (rng.index(3) != 0) cands.push_back(b);
            auto p = build_pool(short_context(), state_on("m"), cands, "n" + std::to_string(i));
            auto labels = derive_labels(p, grade(p, {{0, Grade::A}}));
            ex.insert(ex.end(), labels.begin(), labels.end());
        }
        const auto r = normalize(ex, static_cast<std::uint64_t>(trial));
        std::map<std::string, std::size_t> after;
        for (const auto& e : r.examples)
            if (e.label == Label::Negative) ++after[e.candidate.candidate_id];
        for (const auto& c : r.report.candidates) {
            if (!c.cap) continue;
            ++capped;
            if (after[c.candidate_id] > *c.cap || c.negatives_after > *c.cap) ++violations;
        }
    }
    o.pass = known && monotone && violations == 0 && capped > 0;
    o.detail = std::string("cap(1)=") + std::to_string(negative_cap(1.0)) + " cap(e^4)=" +
               std::to_string(negative_cap(std::exp(4.0))) + " cap(100)=" + std::to_string(negative_cap(100.0)) +
               (monotone ? ", monotone" : ", NOT monotone") + ", " + std::to_string(capped) + " capped candidates, " +
               std::to_string(violations) + " over cap";
    return o;
}

// --- 4 -------------------------------------------------------------------------

// Tier written directly from the preference rules.
int oracle_tier(const ResponseCandidate& c, const DialogueState& s) {
    const bool from_last = s.last_rg.has_value() && s.last_rg->name == c.rg.name;
    if (from_last && s.continuation_signal != ContinuationSignal::Ended) {
        const ContinuationSignal sig =
            c.continuation_signal == ContinuationSignal::None ? s.continuation_signal : c.continuation_signal;
        if (sig == ContinuationSignal::MustContinue) return 1;
        if (sig == ContinuationSignal::CanContinue) return 2;
    }
    if (from_last) return 3;
    return c.rg.topic == s.current_topic ? 3 : 4;
}

std::vector<std::string> brute_force_order(const ResponsePool& p) {
    const std::vector<RGType> fallback{RGType::Flow, RGType::KG,    RGType::CenterTrivia, RGType::QA,
                                       RGType::NRG,  RGType::Intro, RGType::Other};
    auto key = [&](std::size_t i) {
        const int tier = oracle_tier(p.candidates[i], p.state);
        const long fb = tier >= 3 ? std::find(fallback.begin(), fallback.end(), p.candidates[i].rg.rg_type) - fallback.begin() : 0;
        return std::make_tuple(tier, fb, i);
    };
    std::vector<std::size_t> perm(p.candidates.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<std::size_t> found;
    int matches = 0;
    do {
        bool ok = true;
        for (std::size_t k = 1; k < perm.size() && ok; ++k) ok = key(perm[k - 1]) < key(perm[k]);
        if (ok) {
            found = perm;
            ++matches;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::vector<std::string> out;
    if (matches != 1) return out;
    for (auto i : found) out.push_back(p.candidates[i].candidate_id);
    return out;
}

Outcome heuristic_oracle() {
    Rng rng(4242);
    int mismatches = 0, applicable = 0, must_first = 0;
    for (int t = 0; t < kHeuristicTrials; ++t) {
        const auto p = random_heuristic_pool(rng, 6);
        const auto got = heuristic_rank(p);
        if (got.order != brute_force_order(p)) ++mismatches;
        const auto& s = p.state;
        if (!s.last_rg || s.continuation_signal != ContinuationSignal::MustContinue) continue;
        // Applicable: a last-RG candidate that does not override the signal.
        for (const auto& c : p.candidates) {
            if (c.rg.name != s.last_rg->name) continue;
            if (c.continuation_signal != ContinuationSignal::None && c.continuation_signal != ContinuationSignal::MustContinue)
                continue;
            ++applicable;
            must_first += got.top() == c.candidate_id;
            break;
        }
    }
    return {mismatches == 0 && applicable > 0 && must_first == applicable,
            std::to_string(kHeuristicTrials) + " pools, " + std::to_string(mismatches) + " mismatches; MUST_CONTINUE first " +
                std::to_string(must_first) + "/" + std::to_string(applicable)};
}

// --- 5 -------------------------------------------------------------------------

double hash_unit(std::uint64_t seed, std::string_view a, std::string_view b) {
    const auto h = Fnv1a().add(std::to_string(seed)).field(a).field(b).value();
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

Outcome probe_contracts() {
    const auto sets = load_probe_sets(RSEL_DATA_DIR "/probes.json");
    const UniformLM uniform(-3.7);
    double worst = 0.0;
    Rng rng(5);
    for (int i = 0; i < 50; ++i) {
        const auto p = random_heuristic_pool(rng);
        for (const auto& [m, ps] : sets) {
            if (ps.positive.empty() || ps.negative.empty()) continue;
            for (const auto& c : p.candidates) worst = std::max(worst, std::abs(probe_score(p.context, c, ps, uniform)));
        }
    }

    int order_changes = 0;
    for (int s = 0; s < kShiftStubs; ++s) {
        const std::uint64_t seed = 1000 + static_cast<std::uint64_t>(s);
        const double shift = -10.0 + 20.0 * hash_unit(seed, "shift", "");
        StubLM base([seed](std::string_view c, std::string_view x) { return -5.0 * hash_unit(seed, c, x); });
        StubLM moved([seed, shift](std::string_view c, std::string_view x) { return -5.0 * hash_unit(seed, c, x) + shift; });
        const auto p = random_heuristic_pool(rng);
        for (const auto& [m, ps] : sets)
            if (probe_rank(p, ps, base).order != probe_rank(p, ps, moved).order) ++order_changes;
    }

    ProbeSet hand{ProbeMetric::Interesting, {"p1", "p2"}, {"n1", "n2", "n3"}};
    StubLM lm([](std::string_view, std::string_view x) { return x[0] == 'p' ? -1.0 : -3.0; });
    const auto p = simple_pool(1);
    const double hand_score = probe_score(p.context, p.candidates[0], hand, lm);

    return {worst <= kUniformProbeTol && order_changes == 0 && hand_score == 2.0,
            "uniform max |score| " + fmt("%.1e", worst) + ", " + std::to_string(order_changes) + " order changes over " +
                std::to_string(kShiftStubs) + " shifted stubs, -1/-3 -> " + fmt("%g", hand_score)};
}

// --- 6 -------------------------------------------------------------------------

Outcome numerics() {
    // Pearson closed forms: r = Sxy / sqrt(Sxx Syy).
    const std::vector<double> x{1, 2, 3}, y{2, 4, 6.5};
    const double r1 = *stats::pearson(x, y), want1 = 4.5 / std::sqrt(2.0 * 61.0 / 6.0);
    const std::vector<double> a5{1, 2, 3, 4, 5}, b5{2, 1, 4, 3, 5};
    const double r2 = *stats::pearson(a5, b5), want2 = 8.0 / 10.0;
    // Welch: t = (ma - mb) / sqrt(va/na + vb/nb); means 3, 4.5; variances 2.5, 4.
    const std::vector<double> wa{1, 2, 3, 4, 5}, wb{2, 4, 4, 5, 7.5};
    const auto w = stats::welch_t_test(wa, wb);
    const double want_t = -1.5 / std::sqrt(2.5 / 5.0 + 4.0 / 5.0);
    const double want_p = 0.22663227991334678;  // scipy.stats.ttest_ind(equal_var=False)
    const auto same = stats::welch_t_test(wa, wa);
    const double err = std::max({std::abs(r1 - want1), std::abs(r2 - want2), std::abs(w.statistic - want_t),
                                 std::abs(w.p_value - want_p)});
    return {err <= kNumericTol && same.p_value == 1.0,
            "max abs error " + fmt("%.1e", err) + ", identical groups p=" + fmt("%g", same.p_value)};
}

// --- 7 -------------------------------------------------------------------------

Outcome learned_smoke() {
    const auto t0 = Clock::now();
    const KeywordWorld world;
    TrainConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.01;
    cfg.seed = 3;
    cfg.eval_ratio = 0.2;
    cfg.embed_dim = 16;
    cfg.hidden_dim = 16;
    const auto base = pretrain(cfg, world.pretrain_pairs(3000, 21));

    const auto pools = world.annotated_pools(400, 8);
    const std::vector<AnnotatedPool> train(pools.begin(), pools.begin() + 320), test(pools.begin() + 320, pools.end());
    cfg.epochs = 4;
    cfg.learning_rate = 0.02;
    const auto tuned = std::make_shared<const ModelHandle>(fine_tune(base, labels_of(train), cfg));

    const double acc = binary_accuracy(*tuned, labels_of(test));
    const double recall = recall_at_1(LearnedRanker(tuned), test).rankers.front().recall_at_1;
    const double baseline = 1.0 / mean_pool_size(test);
    const double s = seconds_since(t0);
    return {acc >= kMinBinaryAccuracy && recall >= 2.0 * baseline && s < kLearnedRuntimeLimitS,
            "held-out accuracy " + fmt("%.3f", acc) + ", Recall@1 " + fmt("%.3f", recall) + " vs 2x baseline " +
                fmt("%.3f", 2.0 * baseline) + ", " + fmt("%.1f s", s)};
}

// --- 8 -------------------------------------------------------------------------

Outcome encoding_structure() {
    Rng rng(31);
    const KeywordWorld world;
    std::size_t violations = 0, checked = 0;
    for (int t = 0; t < kEncodingTrials; ++t) {
        auto ap = world.annotated_pools(1, rng.index(1u << 30), 1, 4).front();
        auto& p = ap.pool;
        if (rng.index(2)) p.state.previous_topic = world.topics[rng.index(world.topics.size())];
        // Longer histories exercise the turn window.
        const std::size_t extra = rng.index(4);
        std::vector<Turn> ctx;
        for (std::size_t k = 0; k < 2 * extra; ++k)
            ctx.push_back(k % 2 == 0 ? make_user_turn("earlier user words", static_cast<std::uint32_t>(k))
                                     : make_system_turn("earlier system words", rg("flow", RGType::Flow, "music"),
                                                        static_cast<std::uint32_t>(k)));
        for (auto tr : p.context) ctx.push_back(tr);
        Vocabulary v;
        for (const auto& c : p.candidates) v.absorb(ctx, p.state, c);
        const EncodeOptions opt;
        const auto& c = p.candidates[rng.index(p.candidates.size())];
        const auto e = encode(ctx, p.state, c, v, opt);
        ++checked;

        const std::size_t turns = std::min(ctx.size(), opt.history_turns);
        const std::size_t first_turn = ctx.size() - turns;
        std::size_t seps = 0;
        for (auto id : e.token_ids) seps += id == Vocabulary::kSep;
        bool ok = seps == turns + 1;
        ok = ok && e.token_ids[0] == Vocabulary::kCls;
        ok = ok && v.kind(e.token_ids[1]) == (v.current_topic(p.state.current_topic) == Vocabulary::kStateUnk
                                                  ? TokenKind::StateUnk
                                                  : TokenKind::CurrentTopic);
        const auto k2 = v.kind(e.token_ids[2]);
        ok = ok && (p.state.previous_topic ? k2 == TokenKind::PreviousTopic : k2 == TokenKind::StateUnk);
        ok = ok && e.segment_ids[0] == Segment::State && e.segment_ids[1] == Segment::State && e.segment_ids[2] == Segment::State;

        // Expected segment per position, built from the turn structure.
        std::vector<Segment> want{Segment::State, Segment::State, Segment::State};
        for (std::size_t i = first_turn; i < ctx.size(); ++i) {
            const Segment seg = ctx[i].speaker == Speaker::User ? Segment::User : Segment::System;
            want.insert(want.end(), tokenize_words(ctx[i].text).size() + 1, seg);
        }
        const std::size_t rg_pos = want.size();
        want.insert(want.end(), tokenize_words(c.text).size() + 2, Segment::Candidate);
        ok = ok && e.segment_ids == want;
        ok = ok && rg_pos < e.token_ids.size() && v.kind(e.token_ids[rg_pos]) == TokenKind::RG &&
             e.token_ids[rg_pos] == v.rg(c.rg.name);
        ok = ok && e.token_ids.back() == Vocabulary::kSep && e.token_ids.size() <= opt.max_length;
        if (!ok) ++violations;
    }
    return {violations == 0, std::to_string(checked) + " inputs, " + std::to_string(violations) + " violations"};
}

// --- 9 -------------------------------------------------------------------------

Outcome sampler_quotas() {
    const auto topics = sixteen_topics();
    const auto logs = sampler_logs(topics, 20, 8, 20);
    SamplingPlan plan;
    plan.topics = topics;
    const auto a = sample_corpus(logs, plan, 11);
    const auto b = sample_corpus(logs, plan, 11);
    bool quotas = a.pools.size() == 2094 && a.warnings.empty();
    std::size_t min_questions = SIZE_MAX;
    const std::size_t per_topic_total = topics.size() * plan.per_topic;
    for (const auto& t : topics) {
        std::size_t questions = 0;
        for (int rating = 1; rating <= 5; ++rating) {
            std::size_t n = 0;
            for (std::size_t i = 0; i < per_topic_total && i < a.pools.size(); ++i)
                n += a.pools[i].state.current_topic == t && a.pools[i].conversation_rating == rating;
            quotas = quotas && n == plan.per_rating_quota;
        }
        for (std::size_t i = 0; i < per_topic_total && i < a.pools.size(); ++i)
            questions += a.pools[i].state.current_topic == t && a.pools[i].state.user_utterance_is_question;
        min_questions = std::min(min_questions, questions);
    }
    bool same = a.pools.size() == b.pools.size();
    for (std::size_t i = 0; same && i < a.pools.size(); ++i) same = a.pools[i].pool_id == b.pools[i].pool_id;
    return {quotas && min_questions >= 40 && same,
            std::to_string(a.pools.size()) + " pools, " + (quotas ? "20" : "wrong count") +
                " per rating bucket, min question-final per topic " + std::to_string(min_questions) +
                (same ? ", deterministic" : ", NOT deterministic")};
}

// --- 10 ------------------------------------------------------------------------

Outcome ab_fidelity() {
    const auto r = ab_analyze(ab_marginals_fixture());
    const bool stats_ok = r.a.n_conversations == 3502 && r.b.n_conversations == 2856 && round2(r.a.mean_turns) == 15.02 &&
                          round2(r.b.mean_turns) == 24.77 && round2(r.a.mean_rating) == 3.64 &&
                          round2(r.b.mean_rating) == 3.77;
    const bool sig = r.turns_welch.p_value < 0.01 && r.rating_welch.p_value < 0.01;
    std::ostringstream d;
    d << "A n=" << r.a.n_conversations << " turns=" << fmt("%.2f", r.a.mean_turns) << " rating=" << fmt("%.2f", r.a.mean_rating)
      << "; B n=" << r.b.n_conversations << " turns=" << fmt("%.2f", r.b.mean_turns) << " rating=" << fmt("%.2f", r.b.mean_rating)
      << "; p(turns)=" << fmt("%.2g", r.turns_welch.p_value) << " p(rating)=" << fmt("%.2g", r.rating_welch.p_value);
    return {stats_ok && sig, d.str()};
}

// --- 11 ------------------------------------------------------------------------

Outcome service_gating() {
    auto svc = std::make_shared<SelectionService>(GatingRules{}, std::make_shared<MemoryPoolStore>());
    auto counting = std::make_shared<CountingRanker>();
    svc->register_ranker(counting);
    bool ok = true;
    for (std::uint32_t t = 0; t < 4; ++t)
        ok = ok && svc->handle_rank({simple_pool(3, "t" + std::to_string(t), t), "counting", ""}).gate == Gate::BypassTurn;
    ok = ok && svc->handle_rank({simple_pool(1, "single", 5), "counting", ""}).gate == Gate::BypassSingleton;
    for (const std::string act : {"REQUEST_REPEAT", "ADULT_CONTENT_DEFLECT"}) {
        auto p = simple_pool(3, "fa" + act, 5);
        p.state.dialogue_acts = {act};
        ok = ok && svc->handle_rank({p, "counting", ""}).gate == Gate::BypassFunctional;
    }
    const int bypass_calls = counting->calls.load();
    const auto ranked = svc->handle_rank({simple_pool(3, "ranked", 5), "counting", ""});
    ok = ok && bypass_calls == 0 && ranked.gate == Gate::Ranked && counting->calls.load() == 1;
    return {ok, "7 bypassed requests, ranker calls on bypass: " + std::to_string(bypass_calls) +
                    ", on ranked request: " + std::to_string(counting->calls.load() - bypass_calls)};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
        {"recall@1 arithmetic fidelity", recall_fidelity},
        {"recall@1 rationality", recall_rationality},
        {"negative-cap formula", negative_cap_formula},
        {"heuristic oracle equivalence", heuristic_oracle},
        {"probe scorer contracts", probe_contracts},
        {"correlation and t-test numerics", numerics},
        {"learned-ranker smoke", learned_smoke},
        {"encoding structure", encoding_structure},
        {"corpus sampler quotas", sampler_quotas},
        {"A/B analyzer fidelity", ab_fidelity},
        {"service gating", service_gating},
    };
    int failed = 0;
    for (const auto& [name, fn] : checks) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s  %-34s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    }
    return failed == 0 ? 0 : 1;
}

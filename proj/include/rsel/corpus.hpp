#pragma once

// Annotation-corpus construction: quota sampling from pool logs, the
// per-candidate negative-frequency cap, descriptive statistics and a
// conversation-grouped train/test split.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "rsel/core.hpp"
#include "rsel/random.hpp"
#include "rsel/stats.hpp"

namespace rsel {

struct SamplingPlan {
    std::vector<std::string> topics;
    std::size_t per_topic = 100;
    std::size_t per_rating_quota = 20;  // 0 disables rating quotas
    double question_bias = 0.40;
    std::size_t extra_question_instances = 494;
    std::size_t min_pool_size = 2;

    void validate() const {
        if (per_rating_quota * 5 > per_topic)
            throw Error(ErrorKind::InvalidRecord, "per_rating_quota x 5 exceeds per_topic");
        if (!(question_bias >= 0.0 && question_bias <= 1.0))
            throw Error(ErrorKind::InvalidRecord, "question_bias outside [0,1]");
    }
};

// InsufficientData is reported, never thrown.
struct SamplingWarning {
    std::string scope;  // topic id, or "extra-questions"
    std::string what;
    std::size_t requested = 0;
    std::size_t obtained = 0;
};

struct SampleResult {
    std::vector<ResponsePool> pools;
    std::vector<SamplingWarning> warnings;
};

namespace detail {

// Hands out `amount` units one at a time, cycling over slots that still have
// capacity. Returns how many units could not be placed.
inline std::size_t round_robin_fill(std::vector<std::size_t>& alloc, const std::vector<std::size_t>& cap,
                                    std::size_t amount) {
    bool progressed = true;
    while (amount > 0 && progressed) {
        progressed = false;
        for (std::size_t i = 0; i < alloc.size() && amount > 0; ++i) {
            if (alloc[i] < cap[i]) {
                ++alloc[i];
                --amount;
                progressed = true;
            }
        }
    }
    return amount;
}

}  // namespace detail

inline SampleResult sample_corpus(const std::vector<ResponsePool>& logs, const SamplingPlan& plan, std::uint64_t seed) {
    plan.validate();
    Rng rng(seed);
    SampleResult out;
    const bool rating_mode = plan.per_rating_quota > 0;

    std::vector<std::size_t> eligible;
    {
        std::unordered_set<std::string> seen;
        for (std::size_t i = 0; i < logs.size(); ++i) {
            const auto& p = logs[i];
            if (p.candidates.size() < plan.min_pool_size) continue;
            if (rating_mode && !p.conversation_rating) continue;
            if (!seen.insert(p.pool_id).second) continue;
            eligible.push_back(i);
        }
    }
    std::vector<bool> used(logs.size(), false);
    auto is_q = [&](std::size_t i) { return logs[i].state.user_utterance_is_question; };

    for (const auto& topic : plan.topics) {
        if (plan.per_topic == 0) break;
        // One bucket per rating 1..5, or a single bucket with quotas disabled.
        const std::size_t n_buckets = rating_mode ? 5 : 1;
        std::vector<std::vector<std::size_t>> q_pools(n_buckets), other_pools(n_buckets);
        std::size_t available = 0;
        for (auto i : eligible) {
            if (logs[i].state.current_topic != topic) continue;
            const std::size_t b = rating_mode ? static_cast<std::size_t>(*logs[i].conversation_rating - 1) : 0;
            (is_q(i) ? q_pools[b] : other_pools[b]).push_back(i);
            ++available;
        }
        const std::size_t target = std::min(plan.per_topic, available);
        if (available < plan.per_topic)
            out.warnings.push_back({topic, "InsufficientData: fewer pools than per_topic", plan.per_topic, available});

        std::vector<std::size_t> avail(n_buckets), alloc(n_buckets, 0);
        for (std::size_t b = 0; b < n_buckets; ++b) avail[b] = q_pools[b].size() + other_pools[b].size();
        if (rating_mode) {
            for (std::size_t b = 0; b < n_buckets; ++b) {
                alloc[b] = std::min(plan.per_rating_quota, avail[b]);
                if (avail[b] < plan.per_rating_quota)
                    out.warnings.push_back({topic, "InsufficientData: rating " + std::to_string(b + 1) + " under quota",
                                            plan.per_rating_quota, avail[b]});
            }
        }
        std::size_t placed = 0;
        for (auto a : alloc) placed += a;
        detail::round_robin_fill(alloc, avail, target - placed);

        const auto q_target = std::min<std::size_t>(
            static_cast<std::size_t>(std::ceil(plan.question_bias * static_cast<double>(plan.per_topic) - 1e-9)),
            target);
        std::vector<std::size_t> q_cap(n_buckets), q_alloc(n_buckets, 0);
        for (std::size_t b = 0; b < n_buckets; ++b) q_cap[b] = std::min(alloc[b], q_pools[b].size());
        const std::size_t q_short = detail::round_robin_fill(q_alloc, q_cap, q_target);
        if (q_short > 0)
            out.warnings.push_back({topic, "InsufficientData: question-final pools under bias target", q_target,
                                    q_target - q_short});

        for (std::size_t b = 0; b < n_buckets; ++b) {
            rng.shuffle(q_pools[b]);
            std::vector<std::size_t> chosen(q_pools[b].begin(), q_pools[b].begin() + static_cast<long>(q_alloc[b]));
            std::vector<std::size_t> rest(q_pools[b].begin() + static_cast<long>(q_alloc[b]), q_pools[b].end());
            rest.insert(rest.end(), other_pools[b].begin(), other_pools[b].end());
            std::sort(rest.begin(), rest.end());
            rng.shuffle(rest);
            for (std::size_t k = 0; chosen.size() < alloc[b]; ++k) chosen.push_back(rest[k]);
            for (auto i : chosen) {
                used[i] = true;
                out.pools.push_back(logs[i]);
            }
        }
    }

    if (plan.extra_question_instances > 0) {
        std::vector<std::size_t> remaining;
        for (auto i : eligible)
            if (!used[i] && is_q(i)) remaining.push_back(i);
        if (remaining.size() < plan.extra_question_instances)
            out.warnings.push_back({"extra-questions", "InsufficientData: not enough unused question-final pools",
                                    plan.extra_question_instances, remaining.size()});
        for (auto k : rng.sample_indices(remaining.size(), plan.extra_question_instances))
            out.pools.push_back(logs[remaining[k]]);
    }
    return out;
}

// Cap on how often one candidate may appear as a negative example:
// floor(8 + 2 ln c_bar), c_bar = its not-selected opportunities.
inline std::size_t negative_cap(double c_bar) {
    if (!(c_bar >= 1.0)) throw Error(ErrorKind::DomainError, "negative_cap requires c_bar >= 1");
    // The epsilon keeps exact cases such as c_bar = e^4 from flooring to 15.
    return static_cast<std::size_t>(std::floor(8.0 + 2.0 * std::log(c_bar) + 1e-9));
}

inline constexpr std::size_t kNegativeCapThreshold = 8;

struct CandidateNormalization {
    std::string candidate_id;
    std::size_t negatives_before = 0;
    std::size_t negatives_after = 0;
    std::optional<std::size_t> cap;  // set when the candidate exceeded the threshold
};

struct NormalizationReport {
    std::vector<CandidateNormalization> candidates;  // first-appearance order
    std::vector<std::string> pools_dropped;
    std::size_t examples_before = 0;
    std::size_t examples_after = 0;
};

struct NormalizeResult {
    std::vector<LabeledExample> examples;
    NormalizationReport report;
};

inline NormalizeResult normalize(const std::vector<LabeledExample>& examples, std::uint64_t seed) {
    Rng rng(seed);
    NormalizeResult out;
    out.report.examples_before = examples.size();

    std::vector<std::string> order;
    std::unordered_map<std::string, std::vector<std::size_t>> negatives;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (examples[i].label != Label::Negative) continue;
        auto [it, fresh] = negatives.try_emplace(examples[i].candidate.candidate_id);
        if (fresh) order.push_back(it->first);
        it->second.push_back(i);
    }

    std::vector<bool> keep(examples.size(), true);
    for (const auto& id : order) {
        const auto& idx = negatives[id];
        CandidateNormalization rec{id, idx.size(), idx.size(), std::nullopt};
        if (idx.size() > kNegativeCapThreshold) {
            const std::size_t cap = negative_cap(static_cast<double>(idx.size()));
            rec.cap = cap;
            if (cap < idx.size()) {
                for (auto i : idx) keep[i] = false;
                auto picks = rng.sample_indices(idx.size(), cap);
                for (auto k : picks) keep[idx[k]] = true;
                rec.negatives_after = cap;
            }
        }
        out.report.candidates.push_back(rec);
    }

    std::set<std::string> pools_before, pools_after;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        pools_before.insert(examples[i].pool_id);
        if (keep[i]) {
            out.examples.push_back(examples[i]);
            pools_after.insert(examples[i].pool_id);
        }
    }
    for (const auto& p : pools_before)
        if (!pools_after.count(p)) out.report.pools_dropped.push_back(p);
    out.report.examples_after = out.examples.size();
    return out;
}

struct CorpusStats {
    std::size_t n_pools = 0;
    std::size_t n_annotated_pools = 0;
    std::size_t n_annotated_responses = 0;
    double mean_pool_size = 0.0;
    double median_pool_size = 0.0;
    std::size_t n_all_negative_pools = 0;
    std::size_t n_positive_pools = 0;
};

// Pairs annotations with pools by id. Throws DanglingAnnotation for an
// annotation without a pool and InvalidRecord for a second annotation.
inline std::unordered_map<std::string, const AnnotationRecord*> index_annotations(
    const std::vector<ResponsePool>& pools, const std::vector<AnnotationRecord>& annotations) {
    std::unordered_set<std::string> ids;
    for (const auto& p : pools) ids.insert(p.pool_id);
    std::unordered_map<std::string, const AnnotationRecord*> out;
    for (const auto& a : annotations) {
        if (!ids.count(a.pool_id)) throw Error(ErrorKind::DanglingAnnotation, a.pool_id);
        if (!out.emplace(a.pool_id, &a).second)
            throw Error(ErrorKind::InvalidRecord, "pool " + a.pool_id + " has more than one annotation");
    }
    return out;
}

inline CorpusStats corpus_stats(const std::vector<ResponsePool>& pools, const std::vector<AnnotationRecord>& annotations,
                                const LabelPolicy& policy = {}) {
    const auto by_pool = index_annotations(pools, annotations);
    CorpusStats s;
    s.n_pools = pools.size();
    std::vector<double> sizes;
    sizes.reserve(pools.size());
    for (const auto& p : pools) {
        sizes.push_back(static_cast<double>(p.candidates.size()));
        auto it = by_pool.find(p.pool_id);
        if (it == by_pool.end()) continue;
        ++s.n_annotated_pools;
        s.n_annotated_responses += p.candidates.size();
        if (preferred_set(p, *it->second, policy).empty()) ++s.n_all_negative_pools;
        else ++s.n_positive_pools;
    }
    s.mean_pool_size = stats::mean(sizes);
    s.median_pool_size = stats::median(sizes);
    return s;
}

inline nlohmann::json to_json(const CorpusStats& s) {
    return {{"n_pools", s.n_pools},
            {"n_annotated_pools", s.n_annotated_pools},
            {"n_annotated_responses", s.n_annotated_responses},
            {"mean_pool_size", s.mean_pool_size},
            {"median_pool_size", s.median_pool_size},
            {"n_all_negative_pools", s.n_all_negative_pools},
            {"n_positive_pools", s.n_positive_pools}};
}

inline std::string render_table(const CorpusStats& s) {
    auto pct = [&](std::size_t k) {
        char buf[32];
        const double denom = s.n_annotated_pools ? static_cast<double>(s.n_annotated_pools) : 1.0;
        std::snprintf(buf, sizeof buf, " (%.1f%%)", 100.0 * static_cast<double>(k) / denom);
        return std::string(buf);
    };
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "pools                    %zu\n"
                  "annotated pools          %zu\n"
                  "annotated responses      %zu\n"
                  "mean pool size           %.2f\n"
                  "median pool size         %.1f\n",
                  s.n_pools, s.n_annotated_pools, s.n_annotated_responses, s.mean_pool_size, s.median_pool_size);
    return std::string(buf) + "all-negative pools       " + std::to_string(s.n_all_negative_pools) +
           pct(s.n_all_negative_pools) + "\n" + "pools with positives     " + std::to_string(s.n_positive_pools) +
           pct(s.n_positive_pools) + "\n";
}

struct SplitOptions {
    std::size_t test_size = 89;
    std::uint64_t seed = 0;
    bool include_all_negative = false;  // all-negative pools go to train only
    LabelPolicy policy{};
};

struct SplitResult {
    std::vector<AnnotatedPool> train;
    std::vector<AnnotatedPool> test;
    std::size_t test_shortfall = 0;  // requested minus obtained, when grouping prevents an exact fill
};

// Conversation-grouped split. Test pools all have a nonempty preferred set and
// no conversation contributes pools to both sides.
inline SplitResult split(const std::vector<ResponsePool>& pools, const std::vector<AnnotationRecord>& annotations,
                         const SplitOptions& opt) {
    const auto by_pool = index_annotations(pools, annotations);

    struct Item {
        std::size_t pool;
        bool positive;
    };
    std::vector<Item> items;
    std::size_t n_positive = 0;
    for (std::size_t i = 0; i < pools.size(); ++i) {
        auto it = by_pool.find(pools[i].pool_id);
        if (it == by_pool.end()) continue;
        const bool pos = !preferred_set(pools[i], *it->second, opt.policy).empty();
        if (!pos && !opt.include_all_negative) continue;
        items.push_back({i, pos});
        n_positive += pos;
    }
    if (n_positive < opt.test_size)
        throw Error(ErrorKind::NotEnoughPositivePools, std::to_string(n_positive) + " positive pools for a test set of " +
                                                           std::to_string(opt.test_size));

    std::vector<std::string> group_order;
    std::unordered_map<std::string, std::vector<std::size_t>> groups;  // -> indices into items
    for (std::size_t k = 0; k < items.size(); ++k) {
        const auto& p = pools[items[k].pool];
        const std::string key = p.conversation_id ? "conv:" + *p.conversation_id : "pool:" + p.pool_id;
        auto [it, fresh] = groups.try_emplace(key);
        if (fresh) group_order.push_back(key);
        it->second.push_back(k);
    }

    Rng rng(opt.seed);
    rng.shuffle(group_order);
    std::vector<bool> in_test(items.size(), false);
    std::size_t filled = 0;
    for (const auto& key : group_order) {
        if (filled == opt.test_size) break;
        const auto& members = groups[key];
        const bool all_positive =
            std::all_of(members.begin(), members.end(), [&](std::size_t k) { return items[k].positive; });
        if (!all_positive || filled + members.size() > opt.test_size) continue;
        for (auto k : members) in_test[k] = true;
        filled += members.size();
    }

    SplitResult out;
    out.test_shortfall = opt.test_size - filled;
    for (std::size_t k = 0; k < items.size(); ++k) {
        const auto& p = pools[items[k].pool];
        AnnotatedPool ap{p, *by_pool.at(p.pool_id)};
        (in_test[k] ? out.test : out.train).push_back(std::move(ap));
    }
    return out;
}

}  // namespace rsel

#pragma once

// Rule-based topic-coherence ranker.
//
// Candidates fall into four tiers:
//   1. from the RG that held the last turn, signalling MUST_CONTINUE
//   2. from that RG, signalling CAN_CONTINUE
//   3. other RGs on the current topic (and last-RG candidates that ended)
//   4. everything else
// Tiers 3 and 4 are ordered by the configured RG-type fallback order; any
// remaining tie keeps the input position.

#include <algorithm>
#include <numeric>
#include <vector>

#include "rsel/core.hpp"
#include "rsel/ranking.hpp"

namespace rsel {

struct HeuristicConfig {
    std::vector<RGType> rg_type_fallback_order{RGType::Flow, RGType::KG,  RGType::CenterTrivia, RGType::QA,
                                               RGType::NRG,  RGType::Intro, RGType::Other};
    bool obey_must_continue = true;

    void validate() const {
        for (RGType t : kAllRGTypes)
            if (std::find(rg_type_fallback_order.begin(), rg_type_fallback_order.end(), t) ==
                rg_type_fallback_order.end())
                throw Error(ErrorKind::InvalidRecord, "fallback order does not cover every rg_type");
    }

    std::size_t fallback_rank(RGType t) const {
        auto it = std::find(rg_type_fallback_order.begin(), rg_type_fallback_order.end(), t);
        return static_cast<std::size_t>(it - rg_type_fallback_order.begin());
    }
};

namespace detail {

// The signal a last-RG candidate is judged by: the state saying the RG ended
// wins; otherwise the candidate's own signal, falling back to the state's.
inline ContinuationSignal effective_signal(const ResponseCandidate& c, const DialogueState& s) {
    if (s.continuation_signal == ContinuationSignal::Ended) return ContinuationSignal::Ended;
    if (c.continuation_signal != ContinuationSignal::None) return c.continuation_signal;
    return s.continuation_signal;
}

}  // namespace detail

inline int heuristic_tier(const ResponseCandidate& c, const DialogueState& s, const HeuristicConfig& cfg) {
    if (s.last_rg && c.rg.name == s.last_rg->name) {
        switch (detail::effective_signal(c, s)) {
            case ContinuationSignal::MustContinue: return cfg.obey_must_continue ? 1 : 2;
            case ContinuationSignal::CanContinue: return 2;
            default: return 3;
        }
    }
    return c.rg.topic == s.current_topic ? 3 : 4;
}

inline RankedPool heuristic_rank(const ResponsePool& pool, const HeuristicConfig& cfg = {}) {
    if (pool.state.last_rg && pool.state.continuation_signal == ContinuationSignal::None)
        throw Error(ErrorKind::MissingState, pool.pool_id + ": last_rg present without continuation signal");
    cfg.validate();

    struct Key {
        int tier;
        std::size_t fallback;
    };
    std::vector<Key> keys;
    keys.reserve(pool.candidates.size());
    for (const auto& c : pool.candidates) {
        const int tier = heuristic_tier(c, pool.state, cfg);
        keys.push_back({tier, tier >= 3 ? cfg.fallback_rank(c.rg.rg_type) : 0});
    }

    std::vector<std::size_t> idx(pool.candidates.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (keys[a].tier != keys[b].tier) return keys[a].tier < keys[b].tier;
        return keys[a].fallback < keys[b].fallback;
    });

    RankedPool out;
    out.pool_id = pool.pool_id;
    for (auto i : idx) out.order.push_back(pool.candidates[i].candidate_id);
    return out;
}

class HeuristicRanker final : public Ranker {
public:
    explicit HeuristicRanker(HeuristicConfig cfg = {}) : cfg_(std::move(cfg)) { cfg_.validate(); }

    RankedPool rank(const ResponsePool& pool) const override { return heuristic_rank(pool, cfg_); }
    std::string name() const override { return "heuristic"; }

private:
    HeuristicConfig cfg_;
};

}  // namespace rsel

#pragma once

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "rsel/core.hpp"

namespace rsel {

struct RankedPool {
    std::string pool_id;
    std::vector<std::string> order;  // candidate ids, best first
    std::optional<std::vector<double>> scores;  // aligned with order, nonincreasing

    const std::string& top() const { return order.front(); }
};

class Ranker {
public:
    virtual ~Ranker() = default;
    virtual RankedPool rank(const ResponsePool& pool) const = 0;
    virtual std::string name() const = 0;
};

// Orders candidates by score descending; equal scores keep input order.
inline RankedPool rank_by_scores(const ResponsePool& pool, const std::vector<double>& scores) {
    std::vector<std::size_t> idx(pool.candidates.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    RankedPool out;
    out.pool_id = pool.pool_id;
    std::vector<double> sorted;
    for (auto i : idx) {
        out.order.push_back(pool.candidates[i].candidate_id);
        sorted.push_back(scores[i]);
    }
    out.scores = std::move(sorted);
    return out;
}

inline bool is_permutation_of(const RankedPool& r, const ResponsePool& pool) {
    if (r.order.size() != pool.candidates.size()) return false;
    std::unordered_set<std::string> seen;
    for (const auto& id : r.order) {
        if (!pool.find(id) || !seen.insert(id).second) return false;
    }
    return true;
}

}  // namespace rsel

#pragma once

// Reference-free candidate scoring with probe responses.
//
// A candidate is scored by how likely a language model finds canned follow-up
// utterances ("probes") after it: the mean log-likelihood of the positive
// probes minus that of the negative probes. One-sided probe sets use their
// single side, negated for negative-only sets, so higher is always better.

#include <array>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rsel/core.hpp"
#include "rsel/ranking.hpp"
#include "rsel/stats.hpp"

namespace rsel {

enum class ProbeMetric { Interesting, Engaging, Specific, Relevant, Correct, SemanticallyAppropriate, Understandable, Fluent };

inline constexpr std::array<ProbeMetric, 8> kAllProbeMetrics{
    ProbeMetric::Interesting, ProbeMetric::Engaging,  ProbeMetric::Specific, ProbeMetric::Relevant,
    ProbeMetric::Correct,     ProbeMetric::SemanticallyAppropriate, ProbeMetric::Understandable,
    ProbeMetric::Fluent};

inline std::string to_string(ProbeMetric m) {
    switch (m) {
        case ProbeMetric::Interesting: return "Interesting";
        case ProbeMetric::Engaging: return "Engaging";
        case ProbeMetric::Specific: return "Specific";
        case ProbeMetric::Relevant: return "Relevant";
        case ProbeMetric::Correct: return "Correct";
        case ProbeMetric::SemanticallyAppropriate: return "SemanticallyAppropriate";
        case ProbeMetric::Understandable: return "Understandable";
        case ProbeMetric::Fluent: return "Fluent";
    }
    return "";
}

inline ProbeMetric parse_probe_metric(std::string_view s) {
    for (auto m : kAllProbeMetrics)
        if (to_string(m) == s) return m;
    throw Error(ErrorKind::Parse, "unknown probe metric '" + std::string(s) + "'");
}

struct ProbeSet {
    ProbeMetric metric = ProbeMetric::Interesting;
    std::vector<std::string> positive;
    std::vector<std::string> negative;

    void validate() const {
        if (positive.empty() && negative.empty())
            throw Error(ErrorKind::InvalidRecord, to_string(metric) + " has no probes");
    }
};

// Metric name -> {"positive": [...], "negative": [...]}.
inline std::map<ProbeMetric, ProbeSet> parse_probe_sets(const nlohmann::json& j) {
    std::map<ProbeMetric, ProbeSet> out;
    if (!j.is_object()) throw Error(ErrorKind::Parse, "probe file must be a JSON object");
    for (const auto& [name, body] : j.items()) {
        ProbeSet ps;
        ps.metric = parse_probe_metric(name);
        ps.positive = body.value("positive", std::vector<std::string>{});
        ps.negative = body.value("negative", std::vector<std::string>{});
        ps.validate();
        out.emplace(ps.metric, std::move(ps));
    }
    return out;
}

inline std::map<ProbeMetric, ProbeSet> load_probe_sets(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open probe file " + path);
    try {
        return parse_probe_sets(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, path + ": " + e.what());
    }
}

// Language-model likelihood backend.
class LMScorer {
public:
    virtual ~LMScorer() = default;
    // log P(continuation | context); <= 0 for proper probability models.
    virtual double conditional_log_likelihood(std::string_view context, std::string_view continuation) const = 0;
    // Backend name and version, e.g. "bigram/1".
    virtual std::string identity() const = 0;
    // Caller-side parallelism the backend tolerates.
    virtual std::size_t max_concurrency() const { return 1; }
};

inline std::string join_context(const std::vector<Turn>& context, const ResponseCandidate& candidate) {
    std::string out;
    for (const auto& t : context) {
        out += t.text;
        out += '\n';
    }
    out += candidate.text;
    return out;
}

inline double probe_score(const std::vector<Turn>& context, const ResponseCandidate& candidate,
                          const ProbeSet& probes, const LMScorer& lm) {
    if (context.empty()) throw Error(ErrorKind::EmptyContext, "probe scoring needs context");
    probes.validate();
    const std::string ctx = join_context(context, candidate);
    auto side_mean = [&](const std::vector<std::string>& side) {
        double sum = 0.0;
        for (const auto& p : side) {
            try {
                sum += lm.conditional_log_likelihood(ctx, p);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::BackendError) throw;
                throw Error(ErrorKind::BackendError, lm.identity() + ": " + e.what());
            } catch (const std::exception& e) {
                throw Error(ErrorKind::BackendError, lm.identity() + ": " + e.what());
            }
        }
        return sum / static_cast<double>(side.size());
    };
    if (probes.negative.empty()) return side_mean(probes.positive);
    if (probes.positive.empty()) return -side_mean(probes.negative);
    return side_mean(probes.positive) - side_mean(probes.negative);
}

inline RankedPool probe_rank(const ResponsePool& pool, const ProbeSet& probes, const LMScorer& lm) {
    std::vector<double> scores;
    scores.reserve(pool.candidates.size());
    for (const auto& c : pool.candidates) scores.push_back(probe_score(pool.context, c, probes, lm));
    return rank_by_scores(pool, scores);
}

class ProbeRanker final : public Ranker {
public:
    ProbeRanker(ProbeSet probes, std::shared_ptr<const LMScorer> lm) : probes_(std::move(probes)), lm_(std::move(lm)) {
        probes_.validate();
    }

    RankedPool rank(const ResponsePool& pool) const override { return probe_rank(pool, probes_, *lm_); }
    std::string name() const override { return "probe-" + to_string(probes_.metric); }

private:
    ProbeSet probes_;
    std::shared_ptr<const LMScorer> lm_;
};

// --- corpus analytics ---------------------------------------------------------

struct MetricMatrix {
    std::vector<std::string> metrics;        // column names
    std::vector<std::string> row_ids;        // one per scored candidate
    std::vector<std::vector<double>> rows;   // rows[i][j] = score of row i on metric j

    std::vector<double> column(std::size_t j) const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[j]);
        return out;
    }

    void validate() const {
        if (row_ids.size() != rows.size()) throw Error(ErrorKind::InvalidRecord, "row id count mismatch");
        for (const auto& r : rows)
            if (r.size() != metrics.size()) throw Error(ErrorKind::InvalidRecord, "metric matrix is not rectangular");
    }
};

// Scores every example with context under every probe set. The returned mask
// marks POSITIVE (human-preferred) rows.
struct ScoredCorpus {
    MetricMatrix matrix;
    std::vector<bool> preferred;
};

inline ScoredCorpus score_corpus(const std::vector<LabeledExample>& examples,
                                 const std::map<ProbeMetric, ProbeSet>& probe_sets, const LMScorer& lm) {
    ScoredCorpus out;
    for (const auto& [m, ps] : probe_sets) out.matrix.metrics.push_back(to_string(m));
    for (const auto& ex : examples) {
        if (ex.context.empty()) continue;
        std::vector<double> row;
        row.reserve(probe_sets.size());
        for (const auto& [m, ps] : probe_sets) row.push_back(probe_score(ex.context, ex.candidate, ps, lm));
        out.matrix.row_ids.push_back(ex.pool_id + "/" + ex.candidate.candidate_id);
        out.matrix.rows.push_back(std::move(row));
        out.preferred.push_back(ex.label == Label::Positive);
    }
    return out;
}

struct CorrelationMatrix {
    std::vector<std::string> metrics;
    std::vector<std::vector<std::optional<double>>> r;  // nullopt where a column is constant
};

inline CorrelationMatrix metric_correlations(const MetricMatrix& m) {
    m.validate();
    if (m.rows.size() < 2) throw Error(ErrorKind::TooFewRows, "correlation needs at least two rows");
    const std::size_t k = m.metrics.size();
    std::vector<std::vector<double>> cols;
    for (std::size_t j = 0; j < k; ++j) cols.push_back(m.column(j));

    CorrelationMatrix out;
    out.metrics = m.metrics;
    out.r.assign(k, std::vector<std::optional<double>>(k));
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i; j < k; ++j) {
            auto v = stats::pearson(cols[i], cols[j]);
            if (i == j && v) v = 1.0;
            out.r[i][j] = v;
            out.r[j][i] = v;
        }
    }
    return out;
}

enum class Direction { PreferredHigher, PreferredLower, NotSignificant };

inline std::string to_string(Direction d) {
    switch (d) {
        case Direction::PreferredHigher: return "preferred_higher";
        case Direction::PreferredLower: return "preferred_lower";
        case Direction::NotSignificant: return "n.s.";
    }
    return "";
}

struct MetricTest {
    std::string metric;
    double t = 0.0;
    double p = 1.0;
    Direction direction = Direction::NotSignificant;
};

inline std::vector<MetricTest> preferred_vs_dispreferred_test(const MetricMatrix& m, const std::vector<bool>& preferred,
                                                              double alpha = 0.05) {
    m.validate();
    if (preferred.size() != m.rows.size()) throw Error(ErrorKind::InvalidRecord, "mask length mismatch");
    std::vector<MetricTest> out;
    for (std::size_t j = 0; j < m.metrics.size(); ++j) {
        std::vector<double> pref, dispref;
        for (std::size_t i = 0; i < m.rows.size(); ++i) (preferred[i] ? pref : dispref).push_back(m.rows[i][j]);
        const auto res = stats::welch_t_test(pref, dispref);
        MetricTest mt{m.metrics[j], res.statistic, res.p_value, Direction::NotSignificant};
        if (res.p_value < alpha) mt.direction = res.statistic > 0 ? Direction::PreferredHigher : Direction::PreferredLower;
        out.push_back(mt);
    }
    return out;
}

}  // namespace rsel

#pragma once

// A small speaker-aware next-utterance classifier with hand-written
// backpropagation.
//
// Each token embeds as word + segment embedding. Tokens are mean-pooled per
// region (context turns, state slots, candidate); the pooled vectors are
// combined as [ctx*cand, state*cand, cand, ctx] and fed through one tanh
// hidden layer to a single logit for "this candidate is said next".

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "rsel/encoding.hpp"
#include "rsel/random.hpp"

namespace rsel {

struct ModelDims {
    std::size_t vocab = 0;
    std::size_t embed = 32;
    std::size_t hidden = 32;

    std::size_t features() const { return 4 * embed; }
};

struct ModelParams {
    ModelDims dims;
    std::vector<double> word;     // vocab x embed
    std::vector<double> segment;  // kNumSegments x embed
    std::vector<double> w1;       // hidden x features
    std::vector<double> b1;       // hidden
    std::vector<double> w2;       // hidden
    double b2 = 0.0;

    static ModelParams zeros(const ModelDims& d) {
        ModelParams p;
        p.dims = d;
        p.word.assign(d.vocab * d.embed, 0.0);
        p.segment.assign(kNumSegments * d.embed, 0.0);
        p.w1.assign(d.hidden * d.features(), 0.0);
        p.b1.assign(d.hidden, 0.0);
        p.w2.assign(d.hidden, 0.0);
        return p;
    }

    static ModelParams init(const ModelDims& d, Rng& rng) {
        ModelParams p = zeros(d);
        for (auto& x : p.word) x = rng.normal(0.0, 0.3);
        for (auto& x : p.segment) x = rng.normal(0.0, 0.1);
        const double s1 = std::sqrt(2.0 / static_cast<double>(d.features() + d.hidden));
        for (auto& x : p.w1) x = rng.normal(0.0, s1);
        const double s2 = std::sqrt(2.0 / static_cast<double>(d.hidden + 1));
        for (auto& x : p.w2) x = rng.normal(0.0, s2);
        return p;
    }

    // Adds rows for tokens appended to the vocabulary since these were built.
    void grow_vocab(std::size_t new_vocab, Rng& rng) {
        if (new_vocab <= dims.vocab) return;
        for (std::size_t i = dims.vocab * dims.embed; i < new_vocab * dims.embed; ++i) word.push_back(rng.normal(0.0, 0.3));
        dims.vocab = new_vocab;
    }

    nlohmann::json to_json() const {
        return {{"vocab", dims.vocab}, {"embed", dims.embed}, {"hidden", dims.hidden}, {"word", word},
                {"segment", segment},  {"w1", w1},            {"b1", b1},              {"w2", w2},
                {"b2", b2}};
    }

    static ModelParams from_json(const nlohmann::json& j) {
        ModelParams p;
        p.dims.vocab = j.at("vocab").get<std::size_t>();
        p.dims.embed = j.at("embed").get<std::size_t>();
        p.dims.hidden = j.at("hidden").get<std::size_t>();
        p.word = j.at("word").get<std::vector<double>>();
        p.segment = j.at("segment").get<std::vector<double>>();
        p.w1 = j.at("w1").get<std::vector<double>>();
        p.b1 = j.at("b1").get<std::vector<double>>();
        p.w2 = j.at("w2").get<std::vector<double>>();
        p.b2 = j.at("b2").get<double>();
        const auto& d = p.dims;
        if (p.word.size() != d.vocab * d.embed || p.segment.size() != kNumSegments * d.embed ||
            p.w1.size() != d.hidden * d.features() || p.b1.size() != d.hidden || p.w2.size() != d.hidden)
            throw Error(ErrorKind::Parse, "weight shapes do not match dimensions");
        return p;
    }
};

inline double log_sigmoid(double z) { return z >= 0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
inline double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

enum class Region { Context, State, Candidate };

inline Region region_of(Segment s) {
    switch (s) {
        case Segment::User:
        case Segment::System: return Region::Context;
        case Segment::State: return Region::State;
        case Segment::Candidate: return Region::Candidate;
    }
    return Region::Context;
}

class TinyEncoder {
public:
    // Activations kept for the backward pass.
    struct Trace {
        std::vector<double> ctx, state, cand, feat, hidden;
        std::size_t n_ctx = 0, n_state = 0, n_cand = 0;
        double logit = 0.0;
    };

    static double forward(const ModelParams& p, const EncodedInput& in, Trace* trace = nullptr) {
        const std::size_t d = p.dims.embed;
        Trace local;
        Trace& t = trace ? *trace : local;
        t.ctx.assign(d, 0.0);
        t.state.assign(d, 0.0);
        t.cand.assign(d, 0.0);
        t.n_ctx = t.n_state = t.n_cand = 0;
        for (std::size_t i = 0; i < in.token_ids.size(); ++i) {
            if (!in.attention_mask[i]) continue;
            const auto tok = static_cast<std::size_t>(in.token_ids[i]);
            const auto seg = static_cast<std::size_t>(in.segment_ids[i]);
            std::vector<double>* acc = nullptr;
            switch (region_of(in.segment_ids[i])) {
                case Region::Context: acc = &t.ctx, ++t.n_ctx; break;
                case Region::State: acc = &t.state, ++t.n_state; break;
                case Region::Candidate: acc = &t.cand, ++t.n_cand; break;
            }
            const double* we = &p.word[tok * d];
            const double* se = &p.segment[seg * d];
            for (std::size_t k = 0; k < d; ++k) (*acc)[k] += we[k] + se[k];
        }
        auto scale = [](std::vector<double>& v, std::size_t n) {
            if (n)
                for (auto& x : v) x /= static_cast<double>(n);
        };
        scale(t.ctx, t.n_ctx);
        scale(t.state, t.n_state);
        scale(t.cand, t.n_cand);

        t.feat.assign(p.dims.features(), 0.0);
        for (std::size_t k = 0; k < d; ++k) {
            t.feat[k] = t.ctx[k] * t.cand[k];
            t.feat[d + k] = t.state[k] * t.cand[k];
            t.feat[2 * d + k] = t.cand[k];
            t.feat[3 * d + k] = t.ctx[k];
        }
        const std::size_t f = p.dims.features();
        t.hidden.assign(p.dims.hidden, 0.0);
        double z = p.b2;
        for (std::size_t h = 0; h < p.dims.hidden; ++h) {
            double u = p.b1[h];
            const double* row = &p.w1[h * f];
            for (std::size_t k = 0; k < f; ++k) u += row[k] * t.feat[k];
            t.hidden[h] = std::tanh(u);
            z += p.w2[h] * t.hidden[h];
        }
        t.logit = z;
        return z;
    }

    // Accumulates d(loss)/d(params) into grad for binary cross-entropy on one
    // example; returns the loss.
    static double backward(const ModelParams& p, const EncodedInput& in, bool positive, ModelParams& grad) {
        Trace t;
        const double z = forward(p, in, &t);
        const double y = positive ? 1.0 : 0.0;
        const double loss = -(y * log_sigmoid(z) + (1.0 - y) * log_sigmoid(-z));
        const double dz = sigmoid(z) - y;

        const std::size_t d = p.dims.embed, f = p.dims.features();
        grad.b2 += dz;
        std::vector<double> dfeat(f, 0.0);
        for (std::size_t h = 0; h < p.dims.hidden; ++h) {
            grad.w2[h] += dz * t.hidden[h];
            const double du = dz * p.w2[h] * (1.0 - t.hidden[h] * t.hidden[h]);
            grad.b1[h] += du;
            const double* row = &p.w1[h * f];
            double* grow = &grad.w1[h * f];
            for (std::size_t k = 0; k < f; ++k) {
                grow[k] += du * t.feat[k];
                dfeat[k] += du * row[k];
            }
        }
        std::vector<double> dctx(d), dstate(d), dcand(d);
        for (std::size_t k = 0; k < d; ++k) {
            dctx[k] = dfeat[k] * t.cand[k] + dfeat[3 * d + k];
            dstate[k] = dfeat[d + k] * t.cand[k];
            dcand[k] = dfeat[k] * t.ctx[k] + dfeat[d + k] * t.state[k] + dfeat[2 * d + k];
        }
        for (std::size_t i = 0; i < in.token_ids.size(); ++i) {
            if (!in.attention_mask[i]) continue;
            const std::vector<double>* g = nullptr;
            std::size_t n = 0;
            switch (region_of(in.segment_ids[i])) {
                case Region::Context: g = &dctx, n = t.n_ctx; break;
                case Region::State: g = &dstate, n = t.n_state; break;
                case Region::Candidate: g = &dcand, n = t.n_cand; break;
            }
            const double inv = 1.0 / static_cast<double>(n);
            const auto tok = static_cast<std::size_t>(in.token_ids[i]);
            const auto seg = static_cast<std::size_t>(in.segment_ids[i]);
            for (std::size_t k = 0; k < d; ++k) {
                grad.word[tok * d + k] += (*g)[k] * inv;
                grad.segment[seg * d + k] += (*g)[k] * inv;
            }
        }
        return loss;
    }
};

class Adam {
public:
    explicit Adam(const ModelParams& shape, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(ModelParams::zeros(shape.dims)), v_(ModelParams::zeros(shape.dims)), lr_(lr), b1_(beta1), b2_(beta2),
          eps_(eps) {}

    void step(ModelParams& params, ModelParams& grad, double scale) {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
        auto update = [&](std::vector<double>& w, std::vector<double>& g, std::vector<double>& m,
                          std::vector<double>& v) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = g[i] * scale;
                m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
                v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
                w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
            }
        };
        update(params.word, grad.word, m_.word, v_.word);
        update(params.segment, grad.segment, m_.segment, v_.segment);
        update(params.w1, grad.w1, m_.w1, v_.w1);
        update(params.b1, grad.b1, m_.b1, v_.b1);
        update(params.w2, grad.w2, m_.w2, v_.w2);
        std::vector<double> w{params.b2}, g{grad.b2}, m{m_.b2}, v{v_.b2};
        update(w, g, m, v);
        params.b2 = w[0];
        m_.b2 = m[0];
        v_.b2 = v[0];
    }

private:
    ModelParams m_, v_;
    double lr_, b1_, b2_, eps_;
    std::uint64_t t_ = 0;
};

}  // namespace rsel

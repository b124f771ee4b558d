#pragma once

// Self-contained likelihood backends for probe scoring.

#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rsel/probe.hpp"
#include "rsel/text.hpp"

namespace rsel {

// Every continuation gets the same log-probability.
class UniformLM final : public LMScorer {
public:
    explicit UniformLM(double log_prob = -1.0) : log_prob_(log_prob) {}

    double conditional_log_likelihood(std::string_view, std::string_view) const override { return log_prob_; }
    std::string identity() const override { return "uniform/1"; }
    std::size_t max_concurrency() const override { return 64; }

private:
    double log_prob_;
};

// Word bigram model interpolated with an add-one unigram, so every string
// has nonzero probability. Conditions only on the last context word.
class BigramLM final : public LMScorer {
public:
    explicit BigramLM(const std::vector<std::string>& training_texts, double interpolation = 1.0)
        : alpha_(interpolation) {
        for (const auto& text : training_texts) {
            std::string prev = kBoundary;
            for (auto& w : tokenize_words(text)) {
                ++unigram_[w];
                ++total_;
                ++bigram_[prev][w];
                ++context_count_[prev];
                prev = std::move(w);
            }
        }
    }

    static BigramLM from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::NotFound, "cannot open LM corpus " + path);
        std::vector<std::string> lines;
        for (std::string line; std::getline(in, line);) lines.push_back(line);
        return BigramLM(lines);
    }

    double conditional_log_likelihood(std::string_view context, std::string_view continuation) const override {
        const auto ctx = tokenize_words(context);
        std::string prev = ctx.empty() ? std::string(kBoundary) : ctx.back();
        double ll = 0.0;
        for (auto& w : tokenize_words(continuation)) {
            ll += std::log(prob(prev, w));
            prev = std::move(w);
        }
        return ll;
    }

    std::string identity() const override { return "bigram/1"; }
    std::size_t max_concurrency() const override { return 64; }

private:
    static constexpr const char* kBoundary = "<s>";

    double unigram_prob(const std::string& w) const {
        // +1 slot for unseen words.
        const double v = static_cast<double>(unigram_.size()) + 1.0;
        auto it = unigram_.find(w);
        const double c = it == unigram_.end() ? 0.0 : static_cast<double>(it->second);
        return (c + 1.0) / (static_cast<double>(total_) + v);
    }

    double prob(const std::string& prev, const std::string& w) const {
        const double pu = unigram_prob(w);
        auto ctx = context_count_.find(prev);
        if (ctx == context_count_.end()) return pu;
        double cb = 0.0;
        if (auto row = bigram_.find(prev); row != bigram_.end())
            if (auto cell = row->second.find(w); cell != row->second.end()) cb = static_cast<double>(cell->second);
        return (cb + alpha_ * pu) / (static_cast<double>(ctx->second) + alpha_);
    }

    double alpha_;
    std::unordered_map<std::string, std::size_t> unigram_;
    std::unordered_map<std::string, std::unordered_map<std::string, std::size_t>> bigram_;
    std::unordered_map<std::string, std::size_t> context_count_;
    std::size_t total_ = 0;
};

}  // namespace rsel

#pragma once

// Trained next-utterance ranker: two-stage training (pretrain on generic
// (context, next-utterance) pairs with random negatives, then fine-tune on
// labeled pool examples) and per-candidate scoring at inference.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rsel/core.hpp"
#include "rsel/encoding.hpp"
#include "rsel/hash.hpp"
#include "rsel/model.hpp"
#include "rsel/random.hpp"
#include "rsel/ranking.hpp"
#include "rsel/serialize.hpp"

namespace rsel {

enum class NegativeSampling { Random };

struct TrainConfig {
    std::string pretrain_corpus;
    std::string fine_tune_corpus;
    NegativeSampling negative_sampling = NegativeSampling::Random;
    std::size_t epochs = 6;
    std::size_t batch_size = 16;
    double learning_rate = 0.01;
    std::uint64_t seed = 0;
    double eval_ratio = 0.10;
    std::size_t embed_dim = 32;
    std::size_t hidden_dim = 32;
    EncodeOptions encode{};

    void validate() const {
        if (!(eval_ratio > 0.0 && eval_ratio < 1.0)) throw Error(ErrorKind::InvalidRecord, "eval_ratio must be in (0,1)");
        if (batch_size == 0) throw Error(ErrorKind::InvalidRecord, "batch_size must be positive");
    }

    nlohmann::json to_json() const {
        return {{"pretrain_corpus", pretrain_corpus},
                {"fine_tune_corpus", fine_tune_corpus},
                {"negative_sampling", "RANDOM"},
                {"epochs", epochs},
                {"batch_size", batch_size},
                {"learning_rate", learning_rate},
                {"seed", seed},
                {"eval_ratio", eval_ratio},
                {"embed_dim", embed_dim},
                {"hidden_dim", hidden_dim},
                {"max_length", encode.max_length},
                {"history_turns", encode.history_turns}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        c.pretrain_corpus = j.value("pretrain_corpus", c.pretrain_corpus);
        c.fine_tune_corpus = j.value("fine_tune_corpus", c.fine_tune_corpus);
        c.epochs = j.value("epochs", c.epochs);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.seed = j.value("seed", c.seed);
        c.eval_ratio = j.value("eval_ratio", c.eval_ratio);
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
        c.encode.max_length = j.value("max_length", c.encode.max_length);
        c.encode.history_turns = j.value("history_turns", c.encode.history_turns);
        return c;
    }

    std::string hash() const { return Fnv1a().add(to_json().dump()).hex(); }
};

// A generic dialogue snippet: context turns and the utterance that followed.
struct PretrainPair {
    std::vector<Turn> context;
    std::string response;
};

// Lines of {"context": [turn objects or plain strings], "response": str}.
// Plain-string contexts are assumed to alternate and end with the user.
inline std::vector<PretrainPair> load_pretrain_corpus(const std::string& path) {
    if (path.empty() || !std::filesystem::exists(path)) throw Error(ErrorKind::CorpusMissing, "pretrain corpus '" + path + "'");
    std::vector<PretrainPair> out;
    for (const auto& j : read_jsonl(path)) {
        PretrainPair p;
        const auto& ctx = j.at("context");
        for (std::size_t i = 0; i < ctx.size(); ++i) {
            if (ctx[i].is_string()) {
                const bool user = (ctx.size() - 1 - i) % 2 == 0;
                Turn t{user ? Speaker::User : Speaker::System, ctx[i].get<std::string>(), std::nullopt,
                       static_cast<std::uint32_t>(i)};
                p.context.push_back(std::move(t));
            } else {
                p.context.push_back(ctx[i].get<Turn>());
            }
        }
        p.response = j.at("response").get<std::string>();
        out.push_back(std::move(p));
    }
    if (out.empty()) throw Error(ErrorKind::CorpusMissing, "pretrain corpus '" + path + "' is empty");
    return out;
}

struct ModelMetadata {
    std::string config_hash;
    std::string checkpoint_id;
    std::string stage;  // "init", "pretrain", "finetune"
    std::vector<double> val_accuracy;  // per epoch, index 0 = before training
    std::size_t selected_epoch = 0;
};

class ModelHandle {
public:
    ModelHandle() = default;
    ModelHandle(Vocabulary vocab, ModelParams params, EncodeOptions enc, ModelMetadata meta)
        : vocab_(std::move(vocab)), params_(std::move(params)), encode_(enc), meta_(std::move(meta)) {
        refresh_checkpoint_id();
    }

    // log P(POSITIVE | input).
    double score(const EncodedInput& in) const { return log_sigmoid(TinyEncoder::forward(params_, in)); }

    EncodedInput encode(const std::vector<Turn>& ctx, const DialogueState& st, const ResponseCandidate& c) const {
        return rsel::encode(ctx, st, c, vocab_, encode_);
    }

    const Vocabulary& vocab() const { return vocab_; }
    const ModelParams& params() const { return params_; }
    const EncodeOptions& encode_options() const { return encode_; }
    const ModelMetadata& metadata() const { return meta_; }

    void save(const std::string& dir) const {
        std::filesystem::create_directories(dir);
        const nlohmann::json config{{"config_hash", meta_.config_hash},
                                    {"checkpoint_id", meta_.checkpoint_id},
                                    {"stage", meta_.stage},
                                    {"val_accuracy", meta_.val_accuracy},
                                    {"selected_epoch", meta_.selected_epoch},
                                    {"max_length", encode_.max_length},
                                    {"history_turns", encode_.history_turns}};
        write_json(dir + "/config.json", config);
        write_json(dir + "/vocab.json", vocab_.to_json());
        write_json(dir + "/weights.json", params_.to_json());
    }

    static ModelHandle load(const std::string& dir) {
        const auto config = read_json(dir + "/config.json");
        ModelMetadata meta;
        meta.config_hash = config.value("config_hash", std::string());
        meta.stage = config.value("stage", std::string());
        meta.val_accuracy = config.value("val_accuracy", std::vector<double>{});
        meta.selected_epoch = config.value("selected_epoch", std::size_t{0});
        EncodeOptions enc;
        enc.max_length = config.value("max_length", enc.max_length);
        enc.history_turns = config.value("history_turns", enc.history_turns);
        ModelHandle h(Vocabulary::from_json(read_json(dir + "/vocab.json")),
                      ModelParams::from_json(read_json(dir + "/weights.json")), enc, std::move(meta));
        if (h.params_.dims.vocab != h.vocab_.size())
            throw Error(ErrorKind::Parse, "checkpoint vocabulary and weights disagree");
        const auto stored = config.value("checkpoint_id", std::string());
        if (!stored.empty() && stored != h.meta_.checkpoint_id)
            throw Error(ErrorKind::Parse, "checkpoint id mismatch in " + dir);
        return h;
    }

private:
    void refresh_checkpoint_id() { meta_.checkpoint_id = Fnv1a().add(params_.to_json().dump()).hex(); }

    static void write_json(const std::string& path, const nlohmann::json& j) {
        std::ofstream out(path);
        if (!out) throw Error(ErrorKind::StorageError, "cannot write " + path);
        out << j.dump() << '\n';
    }
    static nlohmann::json read_json(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::NotFound, "cannot open " + path);
        try {
            return nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, path + ": " + e.what());
        }
    }

    Vocabulary vocab_;
    ModelParams params_;
    EncodeOptions encode_;
    ModelMetadata meta_;
};

// 1-based index of the first epoch with the highest validation accuracy;
// 0 means no epoch beat the untrained model.
inline std::size_t select_best_epoch(const std::vector<double>& epoch_accuracy, double baseline = -1.0) {
    std::size_t best = 0;
    double best_acc = baseline;
    for (std::size_t i = 0; i < epoch_accuracy.size(); ++i) {
        if (epoch_accuracy[i] > best_acc) {
            best_acc = epoch_accuracy[i];
            best = i + 1;
        }
    }
    return best;
}

namespace detail {

struct TrainItem {
    EncodedInput input;
    bool positive;
};

inline double accuracy(const ModelParams& p, const std::vector<TrainItem>& items) {
    if (items.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& it : items) ok += (TinyEncoder::forward(p, it.input) > 0.0) == it.positive;
    return static_cast<double>(ok) / static_cast<double>(items.size());
}

// One pass of minibatch Adam; returns mean loss.
inline double run_epoch(ModelParams& params, Adam& opt, const std::vector<TrainItem>& items, std::size_t batch_size,
                        Rng& rng) {
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        ModelParams grad = ModelParams::zeros(params.dims);
        for (std::size_t k = start; k < end; ++k)
            total += TinyEncoder::backward(params, items[order[k]].input, items[order[k]].positive, grad);
        opt.step(params, grad, 1.0 / static_cast<double>(end - start));
    }
    const double mean = items.empty() ? 0.0 : total / static_cast<double>(items.size());
    if (!std::isfinite(mean)) throw Error(ErrorKind::DivergenceDetected, "training loss is not finite");
    return mean;
}

struct TrainOutcome {
    ModelParams params;
    std::vector<double> val_accuracy;  // index 0 = before training
    std::size_t selected_epoch = 0;
};

// Trains for cfg.epochs, keeping the parameters from the epoch with the best
// validation accuracy. make_train builds each epoch's training items (so
// negatives can be resampled per epoch).
template <typename MakeTrain>
TrainOutcome train_with_selection(ModelParams params, const std::vector<TrainItem>& val, const TrainConfig& cfg,
                                  Rng& rng, MakeTrain&& make_train) {
    Adam opt(params, cfg.learning_rate);
    TrainOutcome out;
    out.val_accuracy.push_back(accuracy(params, val));
    out.params = params;
    std::vector<double> per_epoch;
    double best = out.val_accuracy[0];
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto items = make_train(e);
        run_epoch(params, opt, items, cfg.batch_size, rng);
        const double acc = val.empty() ? 1.0 : accuracy(params, val);
        out.val_accuracy.push_back(acc);
        per_epoch.push_back(acc);
        // Without a validation split every epoch ties; the last one is kept.
        if (val.empty() || acc > best) {
            best = acc;
            out.params = params;
        }
    }
    out.selected_epoch = val.empty() ? cfg.epochs : select_best_epoch(per_epoch, out.val_accuracy[0]);
    return out;
}

inline DialogueState empty_state() { return DialogueState{}; }

inline ResponseCandidate plain_candidate(const std::string& text) {
    return ResponseCandidate{content_candidate_id(text, ""), text, RGDescriptor{}, ContinuationSignal::None};
}

}  // namespace detail

// Pretraining on (context, true next utterance) pairs. Each positive gets one
// random negative (another pair's response), resampled every epoch.
inline ModelHandle pretrain(const TrainConfig& cfg, const std::vector<PretrainPair>& pairs) {
    cfg.validate();
    if (pairs.empty()) throw Error(ErrorKind::CorpusMissing, "no pretraining pairs");
    Rng rng(cfg.seed);

    Vocabulary vocab;
    for (const auto& p : pairs) vocab.absorb(p.context, detail::empty_state(), detail::plain_candidate(p.response));

    std::vector<std::size_t> idx(pairs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    std::size_t n_val = static_cast<std::size_t>(std::round(cfg.eval_ratio * static_cast<double>(pairs.size())));
    if (pairs.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, pairs.size() - 1);
    else n_val = 0;
    const std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<long>(n_val));
    const std::vector<std::size_t> train_idx(idx.begin() + static_cast<long>(n_val), idx.end());

    auto enc = [&](const PretrainPair& p, const std::string& response) {
        return encode(p.context, detail::empty_state(), detail::plain_candidate(response), vocab, cfg.encode);
    };
    auto random_other = [&](std::size_t self) {
        if (pairs.size() < 2) return self;
        std::size_t j = static_cast<std::size_t>(rng.index(pairs.size() - 1));
        return j >= self ? j + 1 : j;
    };

    std::vector<detail::TrainItem> val;
    for (auto i : val_idx) {
        val.push_back({enc(pairs[i], pairs[i].response), true});
        val.push_back({enc(pairs[i], pairs[random_other(i)].response), false});
    }

    ModelDims dims{vocab.size(), cfg.embed_dim, cfg.hidden_dim};
    ModelParams init = ModelParams::init(dims, rng);
    auto outcome = detail::train_with_selection(std::move(init), val, cfg, rng, [&](std::size_t) {
        std::vector<detail::TrainItem> items;
        items.reserve(2 * train_idx.size());
        for (auto i : train_idx) {
            items.push_back({enc(pairs[i], pairs[i].response), true});
            items.push_back({enc(pairs[i], pairs[random_other(i)].response), false});
        }
        return items;
    });

    ModelMetadata meta{cfg.hash(), "", cfg.epochs == 0 ? "init" : "pretrain", outcome.val_accuracy,
                       outcome.selected_epoch};
    return ModelHandle(std::move(vocab), std::move(outcome.params), cfg.encode, std::move(meta));
}

inline ModelHandle pretrain(const TrainConfig& cfg) { return pretrain(cfg, load_pretrain_corpus(cfg.pretrain_corpus)); }

// Fine-tuning on labeled pool examples. The vocabulary grows to cover new
// words, topics and RG names. Class balance is left to upstream
// normalization; the loss is unweighted. The eval split is by pool so one
// pool's candidates never straddle it.
inline ModelHandle fine_tune(const ModelHandle& base, const std::vector<LabeledExample>& examples,
                             const TrainConfig& cfg) {
    cfg.validate();
    if (examples.empty()) return base;
    Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

    Vocabulary vocab = base.vocab();
    for (const auto& e : examples) vocab.absorb(e.context, e.state, e.candidate);
    ModelParams params = base.params();
    params.grow_vocab(vocab.size(), rng);

    std::vector<std::string> pool_ids;
    {
        std::unordered_map<std::string, bool> seen;
        for (const auto& e : examples)
            if (seen.emplace(e.pool_id, true).second) pool_ids.push_back(e.pool_id);
    }
    rng.shuffle(pool_ids);
    std::size_t n_val = static_cast<std::size_t>(std::round(cfg.eval_ratio * static_cast<double>(pool_ids.size())));
    if (pool_ids.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, pool_ids.size() - 1);
    else n_val = 0;
    std::unordered_map<std::string, bool> is_val;
    for (std::size_t i = 0; i < n_val; ++i) is_val[pool_ids[i]] = true;

    std::vector<detail::TrainItem> train, val;
    for (const auto& e : examples) {
        detail::TrainItem item{encode(e.context, e.state, e.candidate, vocab, base.encode_options()),
                               e.label == Label::Positive};
        (is_val.count(e.pool_id) ? val : train).push_back(std::move(item));
    }

    auto outcome = detail::train_with_selection(std::move(params), val, cfg, rng, [&](std::size_t) { return train; });
    ModelMetadata meta{cfg.hash(), "", "finetune", outcome.val_accuracy, outcome.selected_epoch};
    return ModelHandle(std::move(vocab), std::move(outcome.params), base.encode_options(), std::move(meta));
}

inline RankedPool learned_rank(const ModelHandle& handle, const ResponsePool& pool) {
    std::vector<double> scores;
    scores.reserve(pool.candidates.size());
    for (const auto& c : pool.candidates) {
        try {
            scores.push_back(handle.score(handle.encode(pool.context, pool.state, c)));
        } catch (const Error& e) {
            throw Error(ErrorKind::BackendError, "candidate " + c.candidate_id + ": " + e.what());
        }
    }
    return rank_by_scores(pool, scores);
}

// Fraction of examples whose predicted label (P(POSITIVE) > 0.5) is correct.
inline double binary_accuracy(const ModelHandle& handle, const std::vector<LabeledExample>& examples) {
    if (examples.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& e : examples)
        ok += (handle.score(handle.encode(e.context, e.state, e.candidate)) > std::log(0.5)) == (e.label == Label::Positive);
    return static_cast<double>(ok) / static_cast<double>(examples.size());
}

class LearnedRanker final : public Ranker {
public:
    explicit LearnedRanker(std::shared_ptr<const ModelHandle> handle) : handle_(std::move(handle)) {}

    RankedPool rank(const ResponsePool& pool) const override { return learned_rank(*handle_, pool); }
    std::string name() const override { return "learned"; }

private:
    std::shared_ptr<const ModelHandle> handle_;
};

}  // namespace rsel

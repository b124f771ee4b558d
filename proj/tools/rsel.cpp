// Command-line front end: corpus preparation, ranking, training, evaluation
// and the HTTP service.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "rsel/rsel.hpp"

namespace {

using namespace rsel;

struct RankerOptions {
    std::string kind = "heuristic";
    std::string metric = "Interesting";
    std::string probes = "data/probes.json";
    std::string backend = "uniform";
    std::string checkpoint;
    std::string scores;
};

void add_ranker_options(CLI::App* cmd, RankerOptions& o) {
    cmd->add_option("--ranker", o.kind, "heuristic | probe | learned | scores")
        ->check(CLI::IsMember({"heuristic", "probe", "learned", "scores"}));
    cmd->add_option("--metric", o.metric, "probe metric name");
    cmd->add_option("--probes", o.probes, "probe set JSON file");
    cmd->add_option("--backend", o.backend, "LM backend: uniform | bigram:<path> | http://host:port/path");
    cmd->add_option("--checkpoint", o.checkpoint, "learned ranker checkpoint directory");
    cmd->add_option("--scores", o.scores, "JSONL of {pool_id, candidate_id, score}");
}

std::shared_ptr<const LMScorer> make_backend(const std::string& spec) {
    if (spec == "uniform") return std::make_shared<UniformLM>();
    if (spec.rfind("bigram:", 0) == 0) return std::make_shared<BigramLM>(BigramLM::from_file(spec.substr(7)));
    if (spec.rfind("http://", 0) == 0) return std::make_shared<HttpLM>(HttpLM::from_url(spec));
    throw Error(ErrorKind::UnknownRanker, "unknown LM backend '" + spec + "'");
}

std::shared_ptr<const Ranker> make_ranker(const RankerOptions& o) {
    if (o.kind == "heuristic") return std::make_shared<HeuristicRanker>();
    if (o.kind == "probe") {
        const auto sets = load_probe_sets(o.probes);
        const auto metric = parse_probe_metric(o.metric);
        auto it = sets.find(metric);
        if (it == sets.end()) throw Error(ErrorKind::UnknownRanker, "no probe set for " + o.metric + " in " + o.probes);
        return std::make_shared<ProbeRanker>(it->second, make_backend(o.backend));
    }
    if (o.kind == "learned") {
        if (o.checkpoint.empty()) throw Error(ErrorKind::UnknownRanker, "--checkpoint required for learned ranker");
        return std::make_shared<LearnedRanker>(std::make_shared<const ModelHandle>(ModelHandle::load(o.checkpoint)));
    }
    if (o.kind == "scores") {
        ExternalScoreRanker::ScoreTable table;
        for (const auto& j : read_jsonl(o.scores))
            table[{j.at("pool_id").get<std::string>(), j.at("candidate_id").get<std::string>()}] =
                j.at("score").get<double>();
        return std::make_shared<ExternalScoreRanker>("scores:" + o.scores, std::move(table));
    }
    throw Error(ErrorKind::UnknownRanker, o.kind);
}

LabelPolicy policy_from(const std::string& s) {
    if (s == "A") return LabelPolicy::a_only();
    if (s == "AB") return LabelPolicy::a_or_b();
    throw Error(ErrorKind::InvalidRecord, "policy must be A or AB");
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void emit(const std::string& out, const std::string& text) {
    if (out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(out);
    if (!f) throw Error(ErrorKind::StorageError, "cannot write " + out);
    f << text;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::NotFound, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, path + ": " + e.what());
    }
}

HttpFrontend* g_frontend = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"rsel: response selection for open-domain dialogue"};
    app.require_subcommand(1);

    // corpus ------------------------------------------------------------------
    auto* corpus = app.add_subcommand("corpus", "corpus construction and statistics");
    corpus->require_subcommand(1);

    std::string logs_path, out_path, topics_csv;
    std::uint64_t seed = 0;
    SamplingPlan plan;
    auto* sample = corpus->add_subcommand("sample", "stratified pool sampling for annotation");
    sample->add_option("--logs", logs_path, "ResponsePool JSONL")->required();
    sample->add_option("--topics", topics_csv, "comma-separated topic ids")->required();
    sample->add_option("--seed", seed)->required();
    sample->add_option("--per-topic", plan.per_topic);
    sample->add_option("--per-rating", plan.per_rating_quota, "0 disables rating quotas");
    sample->add_option("--question-bias", plan.question_bias);
    sample->add_option("--extra-questions", plan.extra_question_instances);
    sample->add_option("--min-pool-size", plan.min_pool_size);
    sample->add_option("--out", out_path);

    std::string pools_path, ann_path, policy_name = "A";
    auto* labels = corpus->add_subcommand("labels", "derive labeled examples from annotated pools");
    labels->add_option("--pools", pools_path)->required();
    labels->add_option("--annotations", ann_path)->required();
    labels->add_option("--policy", policy_name, "A | AB");
    labels->add_option("--out", out_path);

    std::string examples_path, report_path;
    auto* norm = corpus->add_subcommand("normalize", "cap negatives per response");
    norm->add_option("--examples", examples_path, "LabeledExample JSONL")->required();
    norm->add_option("--seed", seed)->required();
    norm->add_option("--out", out_path);
    norm->add_option("--report", report_path, "write before/after counts as JSON");

    bool as_json = false;
    auto* cstats = corpus->add_subcommand("stats", "corpus summary table");
    cstats->add_option("--pools", pools_path)->required();
    cstats->add_option("--annotations", ann_path)->required();
    cstats->add_option("--policy", policy_name);
    cstats->add_flag("--json", as_json);

    SplitOptions split_opt;
    std::string train_out, test_out;
    auto* csplit = corpus->add_subcommand("split", "conversation-disjoint train/test split");
    csplit->add_option("--pools", pools_path)->required();
    csplit->add_option("--annotations", ann_path)->required();
    csplit->add_option("--seed", seed)->required();
    csplit->add_option("--test-size", split_opt.test_size);
    csplit->add_flag("--include-all-negative", split_opt.include_all_negative);
    csplit->add_option("--policy", policy_name);
    csplit->add_option("--train-out", train_out)->required();
    csplit->add_option("--test-out", test_out)->required();

    // rank --------------------------------------------------------------------
    RankerOptions ranker_opt;
    auto* rank = app.add_subcommand("rank", "rank every pool in a JSONL file");
    rank->add_option("--pools", pools_path)->required();
    add_ranker_options(rank, ranker_opt);

    // train -------------------------------------------------------------------
    auto* train = app.add_subcommand("train", "train the learned ranker");
    train->require_subcommand(1);
    std::string config_path, checkpoint_in, checkpoint_out;
    auto* pre = train->add_subcommand("pretrain", "pretrain on (context, next utterance) pairs");
    pre->add_option("--config", config_path, "TrainConfig JSON")->required();
    pre->add_option("--out", checkpoint_out)->required();
    auto* ft = train->add_subcommand("finetune", "fine-tune on labeled pool examples");
    ft->add_option("--config", config_path, "TrainConfig JSON")->required();
    ft->add_option("--checkpoint", checkpoint_in)->required();
    ft->add_option("--examples", examples_path, "overrides fine_tune_corpus");
    ft->add_option("--out", checkpoint_out)->required();

    // eval --------------------------------------------------------------------
    auto* eval = app.add_subcommand("eval", "offline evaluation");
    eval->require_subcommand(1);
    std::string test_path;
    auto* r1 = eval->add_subcommand("recall1", "Recall@1 on an annotated test set");
    r1->add_option("--test", test_path, "AnnotatedPool JSONL")->required();
    r1->add_option("--policy", policy_name);
    r1->add_flag("--json", as_json);
    add_ranker_options(r1, ranker_opt);

    std::vector<std::string> compare_specs;
    auto* cmp = eval->add_subcommand("compare", "Recall@1 of several rankers with paired sign tests");
    cmp->add_option("--test", test_path, "AnnotatedPool JSONL")->required();
    cmp->add_option("--policy", policy_name);
    cmp->add_option("--with", compare_specs,
                    "ranker specs: heuristic | probe:<Metric> | learned:<dir> | scores:<file>")
        ->required();
    cmp->add_option("--probes", ranker_opt.probes);
    cmp->add_option("--backend", ranker_opt.backend);
    cmp->add_flag("--json", as_json);

    std::string ab_logs;
    ABOptions ab_opt;
    auto* ab = eval->add_subcommand("ab", "A/B conversation-log analysis");
    ab->add_option("--logs", ab_logs, "ConversationLog JSONL")->required();
    ab->add_option("--min-system-turns", ab_opt.min_system_turns);
    ab->add_flag("--json", as_json);

    std::string probe_examples;
    auto* probe = eval->add_subcommand("probes", "probe metric correlations and preferred-vs-dispreferred tests");
    probe->add_option("--examples", probe_examples, "LabeledExample JSONL")->required();
    probe->add_option("--probes", ranker_opt.probes);
    probe->add_option("--backend", ranker_opt.backend);

    // serve -------------------------------------------------------------------
    std::string serve_config;
    std::vector<std::string> serve_specs;
    auto* serve = app.add_subcommand("serve", "run the selection service");
    serve->add_option("--config", serve_config, "service config JSON");
    serve->add_option("--with", serve_specs, "extra rankers: probe:<Metric> | learned:<dir>");
    serve->add_option("--probes", ranker_opt.probes);
    serve->add_option("--backend", ranker_opt.backend);

    CLI11_PARSE(app, argc, argv);

    auto ranker_from_spec = [&](const std::string& spec) {
        RankerOptions o = ranker_opt;
        const auto colon = spec.find(':');
        o.kind = spec.substr(0, colon);
        const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
        if (o.kind == "probe") o.metric = arg;
        if (o.kind == "learned") o.checkpoint = arg;
        if (o.kind == "scores") o.scores = arg;
        return make_ranker(o);
    };

    try {
        if (*sample) {
            plan.topics = split_csv(topics_csv);
            const auto result = sample_corpus(read_records<ResponsePool>(logs_path), plan, seed);
            for (const auto& w : result.warnings)
                std::cerr << "warning: " << w.scope << ": " << w.what << " (requested " << w.requested << ", got "
                          << w.obtained << ")\n";
            std::string text;
            for (const auto& p : result.pools) text += json(p).dump() + "\n";
            emit(out_path, text);
            std::cerr << result.pools.size() << " pools sampled\n";
        } else if (*labels) {
            const auto pools = read_records<ResponsePool>(pools_path);
            const auto anns = read_records<AnnotationRecord>(ann_path);
            const auto index = index_annotations(pools, anns);
            const auto policy = policy_from(policy_name);
            std::string text;
            for (const auto& p : pools) {
                auto it = index.find(p.pool_id);
                if (it == index.end()) continue;
                for (const auto& e : derive_labels(p, *it->second, policy)) text += json(e).dump() + "\n";
            }
            emit(out_path, text);
        } else if (*norm) {
            const auto result = normalize(read_records<LabeledExample>(examples_path), seed);
            std::string text;
            for (const auto& e : result.examples) text += json(e).dump() + "\n";
            emit(out_path, text);
            const auto& rep = result.report;
            std::cerr << rep.examples_before << " -> " << rep.examples_after << " examples, " << rep.pools_dropped.size()
                      << " pools dropped\n";
            if (!report_path.empty()) {
                json j = {{"examples_before", rep.examples_before},
                          {"examples_after", rep.examples_after},
                          {"pools_dropped", rep.pools_dropped}};
                json per = json::array();
                for (const auto& c : rep.candidates) {
                    json row = {{"candidate_id", c.candidate_id}, {"negatives_before", c.negatives_before}, {"negatives_after", c.negatives_after}};
                    row["cap"] = c.cap ? json(*c.cap) : json(nullptr);
                    per.push_back(row);
                }
                j["candidates"] = per;
                emit(report_path, j.dump(2) + "\n");
            }
        } else if (*cstats) {
            const auto s = corpus_stats(read_records<ResponsePool>(pools_path), read_records<AnnotationRecord>(ann_path),
                                        policy_from(policy_name));
            std::cout << (as_json ? to_json(s).dump(2) + "\n" : render_table(s));
        } else if (*csplit) {
            split_opt.seed = seed;
            split_opt.policy = policy_from(policy_name);
            const auto result =
                split(read_records<ResponsePool>(pools_path), read_records<AnnotationRecord>(ann_path), split_opt);
            write_records(train_out, result.train);
            write_records(test_out, result.test);
            std::cerr << result.train.size() << " train / " << result.test.size() << " test pools";
            if (result.test_shortfall) std::cerr << " (test short by " << result.test_shortfall << ")";
            std::cerr << "\n";
        } else if (*rank) {
            const auto ranker = make_ranker(ranker_opt);
            for (const auto& pool : read_records<ResponsePool>(pools_path)) {
                const auto r = ranker->rank(pool);
                json j = {{"pool_id", r.pool_id}, {"order", r.order}, {"selected", r.top()}};
                if (r.scores) j["scores"] = *r.scores;
                std::cout << j.dump() << "\n";
            }
        } else if (*pre) {
            auto cfg = TrainConfig::from_json(read_json_file(config_path));
            const auto handle = pretrain(cfg);
            handle.save(checkpoint_out);
            std::cerr << "stage " << handle.metadata().stage << ", epoch " << handle.metadata().selected_epoch
                      << ", checkpoint " << handle.metadata().checkpoint_id << "\n";
        } else if (*ft) {
            auto cfg = TrainConfig::from_json(read_json_file(config_path));
            if (!examples_path.empty()) cfg.fine_tune_corpus = examples_path;
            const auto base = ModelHandle::load(checkpoint_in);
            const auto handle = fine_tune(base, read_records<LabeledExample>(cfg.fine_tune_corpus), cfg);
            handle.save(checkpoint_out);
            std::cerr << "stage " << handle.metadata().stage << ", epoch " << handle.metadata().selected_epoch
                      << ", checkpoint " << handle.metadata().checkpoint_id << "\n";
        } else if (*r1) {
            const auto ranker = make_ranker(ranker_opt);
            const auto report = recall_at_1(*ranker, read_records<AnnotatedPool>(test_path), policy_from(policy_name));
            std::cout << (as_json ? to_json(report).dump(2) + "\n" : render_table(report));
        } else if (*cmp) {
            std::vector<std::shared_ptr<const Ranker>> owned;
            std::vector<const Ranker*> rankers;
            for (const auto& s : compare_specs) {
                owned.push_back(ranker_from_spec(s));
                rankers.push_back(owned.back().get());
            }
            const auto c = compare(rankers, read_records<AnnotatedPool>(test_path), policy_from(policy_name));
            std::cout << (as_json ? to_json(c).dump(2) + "\n" : render_table(c));
        } else if (*ab) {
            std::vector<ConversationLog> logs;
            for (const auto& j : read_jsonl(ab_logs)) logs.push_back(j.get<ConversationLog>());
            const auto report = ab_analyze(logs, ab_opt);
            std::cout << (as_json ? to_json(report).dump(2) + "\n" : render_table(report));
        } else if (*probe) {
            const auto sets = load_probe_sets(ranker_opt.probes);
            const auto lm = make_backend(ranker_opt.backend);
            const auto scored = score_corpus(read_records<LabeledExample>(probe_examples), sets, *lm);
            const auto corr = metric_correlations(scored.matrix);
            std::cout << "correlations (" << scored.matrix.rows.size() << " rows)\n";
            for (std::size_t i = 0; i < corr.metrics.size(); ++i) {
                std::printf("  %-24s", corr.metrics[i].c_str());
                for (std::size_t j = 0; j < corr.metrics.size(); ++j) {
                    char buf[32];
                    if (corr.r[i][j]) std::snprintf(buf, sizeof buf, " %7.3f", *corr.r[i][j]);
                    else std::snprintf(buf, sizeof buf, " %7s", "n/a");
                    std::cout << buf;
                }
                std::cout << "\n";
            }
            std::cout << "preferred vs dispreferred\n";
            for (const auto& t : preferred_vs_dispreferred_test(scored.matrix, scored.preferred)) {
                char buf[160];
                std::snprintf(buf, sizeof buf, "  %-24s t=%8.3f p=%.3g %s\n", t.metric.c_str(), t.t,
                              t.p, to_string(t.direction).c_str());
                std::cout << buf;
            }
        } else if (*serve) {
            ServiceConfig cfg = serve_config.empty() ? ServiceConfig{} : ServiceConfig::load(serve_config);
            cfg.apply_env();
            std::shared_ptr<PoolStore> store;
            if (cfg.pool_store.empty()) store = std::make_shared<MemoryPoolStore>();
            else store = std::make_shared<JsonlPoolStore>(cfg.pool_store);
            AnnotationOptions ann;
            ann.lease = std::chrono::minutes(cfg.lease_minutes);
            ann.shuffle_candidates = cfg.shuffle_candidates;
            ann.show_rg = cfg.show_rg;
            ann.shuffle_seed = cfg.shuffle_seed;
            auto service = std::make_shared<SelectionService>(cfg.gating, store, ann, &SelectionService::system_now,
                                                              cfg.annotation_log);
            service->register_ranker(std::make_shared<HeuristicRanker>());
            for (const auto& s : serve_specs) service->register_ranker(ranker_from_spec(s));
            if (!service->has_ranker(cfg.default_ranker))
                throw Error(ErrorKind::UnknownRanker, "default ranker '" + cfg.default_ranker + "' not registered");
            HttpFrontend frontend(service, cfg);
            g_frontend = &frontend;
            std::signal(SIGINT, [](int) {
                if (g_frontend) g_frontend->stop();
            });
            std::cerr << "listening on " << cfg.host << ":" << cfg.port << "\n";
            if (!frontend.listen()) throw Error(ErrorKind::StorageError, "cannot bind port " + std::to_string(cfg.port));
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

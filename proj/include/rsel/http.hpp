#pragma once

// JSON-over-HTTP front end for SelectionService.
//
//   POST /v1/rank              {"pool": {...}, "ranker": "...", "request_id": "..."}
//   POST /v1/pools             ResponsePool
//   GET  /v1/annotation/next   ?annotator=<id>   (204 when nothing is queued)
//   POST /v1/annotation        AnnotationRecord
//
// When a token is configured every /v1 route requires
// "Authorization: Bearer <token>". Anything else is served from the static
// UI directory if one is set.

#include <cstdlib>
#include <fstream>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "rsel/service.hpp"

namespace rsel {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string default_ranker = "heuristic";
    GatingRules gating;
    std::string token;
    std::string pool_store;      // JSONL path; empty keeps pools in memory
    std::string annotation_log;  // JSONL path; empty keeps annotations in memory
    std::string ui_dir;
    bool shuffle_candidates = true;
    bool show_rg = false;
    std::uint64_t shuffle_seed = 0;
    int lease_minutes = 30;

    static ServiceConfig from_json(const nlohmann::json& j) {
        ServiceConfig c;
        c.host = j.value("host", c.host);
        c.port = j.value("port", c.port);
        c.default_ranker = j.value("ranker", c.default_ranker);
        c.token = j.value("token", c.token);
        c.pool_store = j.value("pool_store", c.pool_store);
        c.annotation_log = j.value("annotation_log", c.annotation_log);
        c.ui_dir = j.value("ui_dir", c.ui_dir);
        c.shuffle_candidates = j.value("shuffle_candidates", c.shuffle_candidates);
        c.show_rg = j.value("show_rg", c.show_rg);
        c.shuffle_seed = j.value("shuffle_seed", c.shuffle_seed);
        c.lease_minutes = j.value("lease_minutes", c.lease_minutes);
        if (j.contains("gating")) {
            const auto& g = j.at("gating");
            c.gating.min_system_turn = g.value("min_system_turn", c.gating.min_system_turn);
            c.gating.skip_singleton = g.value("skip_singleton", c.gating.skip_singleton);
            c.gating.functional_act_bypass = g.value("functional_act_bypass", c.gating.functional_act_bypass);
        }
        return c;
    }

    static ServiceConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error(ErrorKind::Parse, "cannot open config " + path);
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, path + ": " + e.what());
        }
    }

    // RSEL_PORT, RSEL_RANKER, RSEL_MIN_SYSTEM_TURN, RSEL_SKIP_SINGLETON, RSEL_TOKEN.
    void apply_env() {
        auto env = [](const char* k) -> std::optional<std::string> {
            const char* v = std::getenv(k);
            return v ? std::optional<std::string>(v) : std::nullopt;
        };
        try {
            if (auto v = env("RSEL_PORT")) port = std::stoi(*v);
            if (auto v = env("RSEL_MIN_SYSTEM_TURN")) gating.min_system_turn = static_cast<std::uint32_t>(std::stoul(*v));
        } catch (const std::exception&) {
            throw Error(ErrorKind::Parse, "non-numeric RSEL_PORT or RSEL_MIN_SYSTEM_TURN");
        }
        if (auto v = env("RSEL_RANKER")) default_ranker = *v;
        if (auto v = env("RSEL_SKIP_SINGLETON")) skip_singleton_from(*v);
        if (auto v = env("RSEL_TOKEN")) token = *v;
    }

private:
    void skip_singleton_from(const std::string& v) {
        if (v == "1" || v == "true") gating.skip_singleton = true;
        else if (v == "0" || v == "false") gating.skip_singleton = false;
        else throw Error(ErrorKind::Parse, "RSEL_SKIP_SINGLETON must be true/false/1/0");
    }
};

inline int http_status(ErrorKind k) {
    switch (k) {
        case ErrorKind::Unauthorized: return 401;
        case ErrorKind::NotFound: return 404;
        case ErrorKind::LeaseExpired: return 409;
        case ErrorKind::InvalidGrades: return 422;
        case ErrorKind::RankerFailure:
        case ErrorKind::StorageError:
        case ErrorKind::BackendError: return 500;
        default: return 400;
    }
}

inline nlohmann::json to_json(const RankResponse& r) {
    nlohmann::json ranking = {{"pool_id", r.ranking.pool_id}, {"order", r.ranking.order}};
    if (r.ranking.scores) ranking["scores"] = *r.ranking.scores;
    nlohmann::json j = {{"request_id", r.request_id}, {"selected", r.selected},   {"ranking", ranking},
                        {"gate", to_string(r.gate)},  {"ranker", r.ranker_used}, {"fallback", r.fallback}};
    if (r.fallback) j["fallback_reason"] = r.fallback_reason;
    return j;
}

class HttpFrontend {
public:
    HttpFrontend(std::shared_ptr<SelectionService> service, ServiceConfig cfg)
        : service_(std::move(service)), cfg_(std::move(cfg)) {
        install_routes();
    }

    httplib::Server& server() { return server_; }

    // Binds and blocks until stop().
    bool listen() { return server_.listen(cfg_.host, cfg_.port); }
    int bind_any_port() { return server_.bind_to_any_port(cfg_.host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }

private:
    template <typename F>
    httplib::Server::Handler guarded(F&& f) {
        return [this, f = std::forward<F>(f)](const httplib::Request& rq, httplib::Response& rs) {
            try {
                authorize(rq);
                f(rq, rs);
            } catch (const Error& e) {
                reply_error(rs, http_status(e.kind()), std::string(to_string(e.kind())), e.what());
            } catch (const nlohmann::json::exception& e) {
                reply_error(rs, 400, "Parse", e.what());
            } catch (const std::exception& e) {
                reply_error(rs, 500, "Internal", e.what());
            }
        };
    }

    void authorize(const httplib::Request& rq) const {
        if (cfg_.token.empty()) return;
        if (rq.get_header_value("Authorization") != "Bearer " + cfg_.token)
            throw Error(ErrorKind::Unauthorized, "missing or wrong bearer token");
    }

    static void reply(httplib::Response& rs, int status, const nlohmann::json& body) {
        rs.status = status;
        rs.set_content(body.dump(), "application/json");
    }

    static void reply_error(httplib::Response& rs, int status, const std::string& kind, const std::string& detail) {
        reply(rs, status, {{"error", kind}, {"detail", detail}});
    }

    static nlohmann::json body_of(const httplib::Request& rq) {
        try {
            return nlohmann::json::parse(rq.body);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, e.what());
        }
    }

    void install_routes() {
        server_.Post("/v1/rank", guarded([this](const httplib::Request& rq, httplib::Response& rs) {
            const auto j = body_of(rq);
            RankRequest req;
            req.pool = parse_record<ResponsePool>(j.at("pool"));
            req.ranker = j.value("ranker", cfg_.default_ranker);
            req.request_id = j.value("request_id", std::string());
            reply(rs, 200, to_json(service_->handle_rank(req)));
        }));

        server_.Post("/v1/pools", guarded([this](const httplib::Request& rq, httplib::Response& rs) {
            const auto pool = parse_record<ResponsePool>(body_of(rq));
            reply(rs, 200, {{"pool_id", service_->log_pool(pool)}});
        }));

        server_.Get("/v1/annotation/next", guarded([this](const httplib::Request& rq, httplib::Response& rs) {
            const auto annotator = rq.get_param_value("annotator");
            if (annotator.empty()) throw Error(ErrorKind::InvalidRecord, "annotator query parameter required");
            const auto payload = service_->annotation_next(annotator);
            if (!payload) {
                rs.status = 204;
                return;
            }
            reply(rs, 200, to_json(*payload));
        }));

        server_.Post("/v1/annotation", guarded([this](const httplib::Request& rq, httplib::Response& rs) {
            auto j = body_of(rq);
            if (!j.contains("v")) j["v"] = kSchemaVersion;
            if (!j.contains("timestamp")) j["timestamp"] = format_timestamp(SelectionService::system_now());
            const auto stored = service_->annotation_submit(parse_record<AnnotationRecord>(j));
            reply(rs, 200, {{"ok", true}, {"pool_id", stored.record.pool_id}, {"shuffle_seed", stored.shuffle_seed}});
        }));

        if (!cfg_.ui_dir.empty() && !server_.set_mount_point("/", cfg_.ui_dir))
            throw Error(ErrorKind::StorageError, "UI directory not found: " + cfg_.ui_dir);
    }

    std::shared_ptr<SelectionService> service_;
    ServiceConfig cfg_;
    httplib::Server server_;
};

}  // namespace rsel

#pragma once

// Adapter for an out-of-process scoring model (e.g. a large LM served
// locally). Protocol: POST {"context": str, "continuation": str} to the
// configured path, reply {"log_likelihood": number}.

#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "rsel/probe.hpp"

namespace rsel {

class HttpLM final : public LMScorer {
public:
    HttpLM(std::string host, int port, std::string path = "/loglik", std::string name = "http")
        : host_(std::move(host)), port_(port), path_(std::move(path)), name_(std::move(name)) {}

    // Accepts "http://host:port/path".
    static HttpLM from_url(const std::string& url) {
        const std::string prefix = "http://";
        if (url.rfind(prefix, 0) != 0) throw Error(ErrorKind::InvalidRecord, "backend url must start with http://");
        const std::string rest = url.substr(prefix.size());
        const auto slash = rest.find('/');
        const std::string hostport = rest.substr(0, slash);
        const std::string path = slash == std::string::npos ? "/loglik" : rest.substr(slash);
        const auto colon = hostport.find(':');
        if (colon == std::string::npos) return HttpLM(hostport, 80, path, url);
        return HttpLM(hostport.substr(0, colon), std::stoi(hostport.substr(colon + 1)), path, url);
    }

    double conditional_log_likelihood(std::string_view context, std::string_view continuation) const override {
        httplib::Client cli(host_, port_);
        cli.set_read_timeout(30, 0);
        const nlohmann::json body{{"context", context}, {"continuation", continuation}};
        auto res = cli.Post(path_, body.dump(), "application/json");
        if (!res) throw Error(ErrorKind::BackendError, identity() + ": " + httplib::to_string(res.error()));
        if (res->status != 200)
            throw Error(ErrorKind::BackendError, identity() + ": HTTP " + std::to_string(res->status));
        try {
            return nlohmann::json::parse(res->body).at("log_likelihood").get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::BackendError, identity() + ": bad reply: " + e.what());
        }
    }

    std::string identity() const override { return name_ + "/1"; }
    std::size_t max_concurrency() const override { return 4; }

private:
    std::string host_;
    int port_;
    std::string path_;
    std::string name_;
};

}  // namespace rsel

#pragma once

// HTTP transport for the external channel and judge clients. Kept in its own
// header so offline translation units never pull in the socket code; include
// this wherever external services are actually wired up.

#include <filesystem>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "xlwm/attack.hpp"
#include "xlwm/net.hpp"

namespace xlwm {

inline std::string ExternalChannelClient::transform(const std::string& text,
                                                    const std::string& src,
                                                    const std::string& dst) const {
    namespace fs = std::filesystem;
    std::string cache_path;
    if (!cache_dir_.empty()) {
        cache_path = cache_file(text, src, dst);
        if (fs::exists(cache_path)) {
            auto j = nlohmann::json::parse(read_file(cache_path));
            return j.at("text").get<std::string>();
        }
    }

    nlohmann::json req{{"text", text}, {"source_lang", src}, {"target_lang", dst}};
    std::string body = req.dump();
    std::string last_error = "no attempts made";
    for (int attempt = 0; attempt <= retries_; ++attempt) {
        net_request_counter().fetch_add(1);
        httplib::Client cli(host_, port_);
        cli.set_connection_timeout(0, timeout_ms_ * 1000);
        cli.set_read_timeout(0, timeout_ms_ * 1000);
        auto res = cli.Post(endpoint_, body, "application/json");
        if (!res) {
            last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        nlohmann::json parsed;
        try {
            parsed = nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("bad response json: ") + e.what();
            continue;
        }
        if (!parsed.contains("text")) {
            last_error = "response missing 'text' field";
            continue;
        }
        if (!cache_path.empty()) {
            fs::create_directories(cache_dir_);
            write_file(cache_path, parsed.dump());
        }
        return parsed.at("text").get<std::string>();
    }
    throw ExternalServiceError("external channel " + endpoint_ + " failed: " + last_error);
}

// Judge transport: POST {system_prompt, user_prompt, seed}; the response
// body is the judge's free text.
class HttpJudgeTransport {
  public:
    HttpJudgeTransport(std::string host, int port, std::string endpoint = "/judge",
                       int timeout_ms = 10000, int retries = 1)
        : host_(std::move(host)), port_(port), endpoint_(std::move(endpoint)),
          timeout_ms_(timeout_ms), retries_(retries) {}

    std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                         std::uint64_t seed) const {
        nlohmann::json req{{"system_prompt", system_prompt},
                           {"user_prompt", user_prompt},
                           {"seed", seed}};
        std::string body = req.dump();
        std::string last_error = "no attempts made";
        for (int attempt = 0; attempt <= retries_; ++attempt) {
            net_request_counter().fetch_add(1);
            httplib::Client cli(host_, port_);
            cli.set_connection_timeout(0, timeout_ms_ * 1000);
            cli.set_read_timeout(0, timeout_ms_ * 1000);
            auto res = cli.Post(endpoint_, body, "application/json");
            if (!res) {
                last_error = "connection failed (" + httplib::to_string(res.error()) + ")";
                continue;
            }
            if (res->status != 200) {
                last_error = "http status " + std::to_string(res->status);
                continue;
            }
            return res->body;
        }
        throw ExternalServiceError("judge service " + endpoint_ + " failed: " + last_error);
    }

  private:
    std::string host_;
    int port_;
    std::string endpoint_;
    int timeout_ms_;
    int retries_;
};

}  // namespace xlwm

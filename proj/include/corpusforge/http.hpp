#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>

#include "corpusforge/errors.hpp"

namespace corpusforge::http {

using Millis = std::chrono::milliseconds;
using Sleeper = std::function<void(Millis)>;

inline Sleeper real_sleeper() {
    return [](Millis d) { std::this_thread::sleep_for(d); };
}

struct Url {
    std::string origin; // scheme://host[:port]
    std::string target; // path + query, at least "/"
};

inline bool is_remote(std::string_view locator) {
    return locator.rfind("http://", 0) == 0 || locator.rfind("https://", 0) == 0;
}

inline Url split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("not an absolute URL: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

// Exponential backoff: base * factor^(attempt-1), server Retry-After wins.
struct RetryPolicy {
    int max_attempts = 5;
    Millis base{1000};
    double factor = 2.0;

    Millis delay_for(int attempt) const {
        const double ms = static_cast<double>(base.count()) * std::pow(factor, attempt - 1);
        return Millis(static_cast<Millis::rep>(ms));
    }
};

// Per-host request spacing. Slots are reserved under the lock and waited on
// outside it, so concurrent callers queue up one interval apart.
class HostRateLimiter {
public:
    explicit HostRateLimiter(Millis min_interval = Millis(3000)) : min_interval_(min_interval) {}

    Millis reserve(const std::string& host) {
        if (min_interval_.count() <= 0) return Millis(0);
        std::lock_guard lock(mu_);
        const auto now = std::chrono::steady_clock::now();
        auto& next = next_slot_[host];
        const auto slot = std::max(now, next);
        next = slot + min_interval_;
        return std::chrono::duration_cast<Millis>(slot - now);
    }

    Millis min_interval() const { return min_interval_; }

private:
    Millis min_interval_;
    std::mutex mu_;
    std::map<std::string, std::chrono::steady_clock::time_point> next_slot_;
};

struct Response {
    int status = 0;
    std::string body;
    std::multimap<std::string, std::string> headers;

    bool ok() const { return status >= 200 && status < 300; }
};

struct ClientOptions {
    RetryPolicy retry;
    std::shared_ptr<HostRateLimiter> limiter = std::make_shared<HostRateLimiter>(Millis(0));
    Sleeper sleep = real_sleeper();
    std::chrono::seconds timeout{120};
    std::string user_agent = "corpusforge/1.0";
};

class Client {
public:
    explicit Client(ClientOptions options = {}) : opt_(std::move(options)) {}

    Response get(const std::string& url, const httplib::Headers& headers = {}) {
        return send(url, headers, nullptr, {});
    }

    Response post(const std::string& url, const std::string& body, const std::string& content_type,
                  const httplib::Headers& headers = {}) {
        return send(url, headers, &body, content_type);
    }

    // Total HTTP attempts issued, retries included.
    std::size_t attempts() const { return attempts_.load(); }

private:
    static std::optional<Millis> retry_after(const httplib::Result& res) {
        if (!res || !res->has_header("Retry-After")) return std::nullopt;
        try {
            return Millis(static_cast<Millis::rep>(std::stod(res->get_header_value("Retry-After")) * 1000));
        } catch (const std::exception&) {
            return std::nullopt; // HTTP-date form is not honoured
        }
    }

    Response send(const std::string& url, const httplib::Headers& headers, const std::string* body,
                  const std::string& content_type) {
        const Url u = split_url(url);
        httplib::Client cli(u.origin);
        cli.set_follow_location(true);
        cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(opt_.timeout).count());
        cli.set_read_timeout(std::chrono::duration_cast<std::chrono::seconds>(opt_.timeout).count());
        httplib::Headers hs = headers;
        hs.emplace("User-Agent", opt_.user_agent);

        enum class Failure { none, transport, throttled, server };
        Failure last = Failure::none;
        std::string last_detail;
        Response last_response;

        const int attempts = std::max(1, opt_.retry.max_attempts);
        for (int attempt = 1; attempt <= attempts; ++attempt) {
            if (const Millis wait = opt_.limiter->reserve(u.origin); wait.count() > 0) opt_.sleep(wait);
            ++attempts_;
            httplib::Result res = body ? cli.Post(u.target, hs, *body, content_type)
                                       : cli.Get(u.target, hs);
            std::optional<Millis> hint;
            if (!res) {
                last = Failure::transport;
                last_detail = httplib::to_string(res.error());
            } else {
                Response r{res->status, res->body, {res->headers.begin(), res->headers.end()}};
                if (r.status == 429 || r.status == 503) {
                    last = Failure::throttled;
                } else if (r.status >= 500) {
                    last = Failure::server;
                } else {
                    return r;
                }
                last_detail = "HTTP " + std::to_string(r.status);
                last_response = std::move(r);
                hint = retry_after(res);
            }
            if (attempt < attempts) opt_.sleep(hint.value_or(opt_.retry.delay_for(attempt)));
        }
        switch (last) {
        case Failure::throttled:
            throw RateLimited(url + ": retry budget of " + std::to_string(attempts) + " attempts exhausted (" +
                              last_detail + ")");
        case Failure::server:
            return last_response;
        default:
            throw NetworkError(url + ": " + last_detail);
        }
    }

    ClientOptions opt_;
    std::atomic<std::size_t> attempts_{0};
};

} // namespace corpusforge::http

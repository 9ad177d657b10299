#pragma once

#include <chrono>
#include <cstdlib>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "d2ctl/backend.hpp"
#include "d2ctl/distribution.hpp"
#include "d2ctl/error.hpp"
#include "d2ctl/synthetic_backend.hpp"

namespace d2ctl {

// OpenAI-compatible completions client. Label scores come from the logprobs
// of the first generated position: an entry scores a verbalizer token when
// its text, after stripping one leading space, is a non-empty prefix of the
// token (first-subword matching without vocabulary access). Requests are
// retried with exponential backoff; reads are idempotent, so a response
// obtained after retries equals an untroubled one.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(BackendDescriptor desc)
        : desc_(std::move(desc)),
          semaphore_(std::max(1, desc_.limits.max_concurrent)) {
        if (desc_.endpoint.empty()) throw_config("http backend requires an endpoint URL");
        if (!desc_.auth_env.empty()) {
            const char* token = std::getenv(desc_.auth_env.c_str());
            if (!token || !*token)
                throw_config("auth environment variable \"" + desc_.auth_env + "\" is not set");
            auth_token_ = token;
        }
    }

    std::string id() const override { return "http:" + desc_.endpoint + ":" + desc_.model_name; }
    std::string model_name() const override { return desc_.model_name; }
    int max_concurrent() const override { return std::max(1, desc_.limits.max_concurrent); }

    LabelDistribution classify(const std::string& prompt,
                               const std::vector<std::string>& verbalizer_tokens) override {
        if (prompt.empty()) throw_usage("empty prompt");
        nlohmann::json body{
            {"model", desc_.model_name}, {"prompt", prompt},    {"max_tokens", 1},
            {"temperature", 0},          {"logprobs", 20},      {"echo", false},
        };
        nlohmann::json resp = post_json(desc_.completions_path, body);
        nlohmann::json top;
        try {
            top = resp.at("choices").at(0).at("logprobs").at("top_logprobs").at(0);
        } catch (const nlohmann::json::exception& e) {
            throw_backend("malformed completions response from " + desc_.endpoint + ": " + e.what());
        }
        std::vector<double> scores(verbalizer_tokens.size(), 0.0);
        for (size_t c = 0; c < verbalizer_tokens.size(); ++c) {
            const std::string& want = verbalizer_tokens[c];
            bool found = false;
            double best = 0.0;
            for (auto it = top.begin(); it != top.end(); ++it) {
                std::string text = it.key();
                if (!text.empty() && text.front() == ' ') text.erase(0, 1);
                if (text.empty() || text.size() > want.size()) continue;
                if (want.compare(0, text.size(), text) != 0) continue;
                double lp = it.value().get<double>();
                if (!found || lp > best) best = lp;
                found = true;
            }
            if (!found)
                throw_config("verbalizer token not scoreable by backend: \"" + want + "\"");
            scores[c] = std::exp(best);
        }
        return normalize_scores(verbalizer_tokens, std::move(scores));
    }

    std::vector<double> embed(const std::string& sentence) override {
        if (sentence.empty()) throw_usage("empty sentence");
        nlohmann::json body{{"model", desc_.model_name}, {"input", sentence}};
        nlohmann::json resp = post_json(desc_.embeddings_path, body);
        try {
            return resp.at("data").at(0).at("embedding").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw_backend("malformed embeddings response from " + desc_.endpoint + ": " + e.what());
        }
    }

    int count_tokens(const std::string& text) const override {
        nlohmann::json body{{"model", desc_.model_name}, {"content", text}};
        nlohmann::json resp = const_cast<HttpBackend*>(this)->post_json(desc_.tokenize_path, body);
        try {
            if (resp.contains("count")) return resp["count"].get<int>();
            return static_cast<int>(resp.at("tokens").size());
        } catch (const nlohmann::json::exception& e) {
            throw_backend("malformed tokenize response from " + desc_.endpoint + ": " + e.what());
        }
    }

private:
    nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
        const int attempts = std::max(0, desc_.limits.retry.max_retries) + 1;
        std::string last_error;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) {
                auto delay = std::chrono::milliseconds(
                    static_cast<long>(desc_.limits.retry.backoff_ms) * (1L << (attempt - 1)));
                std::this_thread::sleep_for(delay);
            }
            semaphore_.acquire();
            record_call();
            httplib::Client client(desc_.endpoint);
            client.set_read_timeout(120, 0);
            httplib::Headers headers;
            if (!auth_token_.empty()) headers.emplace("Authorization", "Bearer " + auth_token_);
            auto res = client.Post(path, headers, body.dump(), "application/json");
            semaphore_.release();
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status != 200) {
                last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
                continue;
            }
            try {
                return nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                last_error = std::string("response parse error: ") + e.what();
            }
        }
        throw_backend("request to " + desc_.endpoint + path + " failed after " +
                      std::to_string(attempts) + " attempts (" + last_error + ")");
    }

    BackendDescriptor desc_;
    std::string auth_token_;
    std::counting_semaphore<> semaphore_;
};

// Builds the backend a descriptor names, wrapped with the persistent cache
// when cache_dir is set.
inline std::unique_ptr<Backend> make_backend(const BackendDescriptor& desc) {
    std::unique_ptr<Backend> inner;
    if (desc.kind == BackendKind::Synthetic) {
        inner = std::make_unique<SyntheticBackend>(desc.synthetic, desc.model_name, desc.limits);
    } else {
        inner = std::make_unique<HttpBackend>(desc);
    }
    if (desc.cache_dir) return std::make_unique<CachedBackend>(std::move(inner), *desc.cache_dir);
    return inner;
}

} // namespace d2ctl

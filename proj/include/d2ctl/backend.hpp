#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2ctl/cache.hpp"
#include "d2ctl/dataset.hpp"
#include "d2ctl/distribution.hpp"
#include "d2ctl/error.hpp"
#include "d2ctl/prompt.hpp"
#include "d2ctl/tokenizer.hpp"

namespace d2ctl {

struct RetryPolicy {
    int max_retries = 3;
    int backoff_ms = 250;
};

struct RequestLimits {
    int max_concurrent = 4;
    RetryPolicy retry;
};

// Parameters of the deterministic stand-in model. Scoring is closed-form:
// keyword hits on the test block carry the class evidence, and the inferred
// demonstration count shifts the evidence weight by
// signal_gain * min(shots, saturation_shots) - length_penalty * prompt_tokens,
// the two competing effects of adding demonstrations. A per-(sentence, class)
// hash term plays the model's fixed prior confusion.
struct SyntheticParams {
    std::uint64_t seed = 1;
    double signal_gain = 0.0;
    double length_penalty = 0.0;
    double saturation_shots = 1e9;
    double keyword_weight = 4.0;
    double noise_scale = 1.0;
    int embed_dim = 8;
    // mapping token -> keywords; a missing entry defaults to {"kw_<token>"}.
    std::map<std::string, std::vector<std::string>> keywords;
};

enum class BackendKind { Synthetic, HttpOpenAiCompatible };

struct BackendDescriptor {
    BackendKind kind = BackendKind::Synthetic;
    std::string model_name = "synthetic";
    std::string endpoint;                              // http kind
    std::string completions_path = "/v1/completions";  // http kind
    std::string tokenize_path = "/tokenize";           // http kind
    std::string embeddings_path = "/v1/embeddings";    // http kind
    std::string auth_env;                              // env var holding the bearer token
    RequestLimits limits;
    std::optional<std::string> cache_dir;
    SyntheticParams synthetic;
};

inline BackendDescriptor load_backend_descriptor(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_config("cannot open backend descriptor: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw_config("backend descriptor " + path + ": " + e.what());
    }
    BackendDescriptor desc;
    try {
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "synthetic") {
            desc.kind = BackendKind::Synthetic;
        } else if (kind == "http_openai_compatible") {
            desc.kind = BackendKind::HttpOpenAiCompatible;
        } else {
            throw_config("backend descriptor " + path + ": unknown kind \"" + kind + "\"");
        }
        desc.model_name = j.value("model", desc.model_name);
        desc.endpoint = j.value("endpoint", std::string());
        desc.completions_path = j.value("completions_path", desc.completions_path);
        desc.tokenize_path = j.value("tokenize_path", desc.tokenize_path);
        desc.embeddings_path = j.value("embeddings_path", desc.embeddings_path);
        desc.auth_env = j.value("auth_env", std::string());
        if (j.contains("limits")) {
            const auto& l = j["limits"];
            desc.limits.max_concurrent = l.value("max_concurrent", desc.limits.max_concurrent);
            desc.limits.retry.max_retries = l.value("max_retries", desc.limits.retry.max_retries);
            desc.limits.retry.backoff_ms = l.value("backoff_ms", desc.limits.retry.backoff_ms);
        }
        if (j.contains("cache_dir") && !j["cache_dir"].is_null())
            desc.cache_dir = j["cache_dir"].get<std::string>();
        if (j.contains("synthetic")) {
            const auto& s = j["synthetic"];
            desc.synthetic.seed = s.value("seed", desc.synthetic.seed);
            desc.synthetic.signal_gain = s.value("signal_gain", desc.synthetic.signal_gain);
            desc.synthetic.length_penalty = s.value("length_penalty", desc.synthetic.length_penalty);
            desc.synthetic.saturation_shots = s.value("saturation_shots", desc.synthetic.saturation_shots);
            desc.synthetic.keyword_weight = s.value("keyword_weight", desc.synthetic.keyword_weight);
            desc.synthetic.noise_scale = s.value("noise_scale", desc.synthetic.noise_scale);
            desc.synthetic.embed_dim = s.value("embed_dim", desc.synthetic.embed_dim);
            if (s.contains("keywords"))
                desc.synthetic.keywords =
                    s["keywords"].get<std::map<std::string, std::vector<std::string>>>();
        }
        if (desc.kind == BackendKind::HttpOpenAiCompatible && desc.endpoint.empty())
            throw_config("backend descriptor " + path + ": http kind requires \"endpoint\"");
        if (desc.limits.max_concurrent < 1) desc.limits.max_concurrent = 1;
    } catch (const nlohmann::json::exception& e) {
        throw_config("backend descriptor " + path + ": " + e.what());
    }
    return desc;
}

// ---------------------------------------------------------------------------
// The model behind two capabilities: scoring the mapping tokens after a
// prompt, and (optionally) embedding a sentence. Implementations must accept
// concurrent calls. call_count() counts actual model invocations, which is
// what the cache is supposed to drive down.
// ---------------------------------------------------------------------------

class Backend : public TokenCounter {
public:
    virtual ~Backend() = default;

    virtual std::string id() const = 0;
    virtual std::string model_name() const = 0;

    virtual LabelDistribution classify(const std::string& prompt,
                                       const std::vector<std::string>& verbalizer_tokens) = 0;

    virtual std::vector<double> embed(const std::string& sentence) {
        (void)sentence;
        throw_config("backend \"" + id() + "\" does not support embeddings");
    }

    virtual int max_concurrent() const { return 4; }

    // Actual model invocations; cache hits do not count.
    virtual std::uint64_t call_count() const { return calls_.load(std::memory_order_relaxed); }

    virtual std::uint64_t cache_hits() const { return 0; }
    virtual std::uint64_t cache_misses() const { return 0; }

protected:
    void record_call() { calls_.fetch_add(1, std::memory_order_relaxed); }

private:
    std::atomic<std::uint64_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Prediction: y = pi^-1(argmax over V of p(v|P)). Ties go to the first
// verbalizer token.
// ---------------------------------------------------------------------------

inline std::string predict(Backend& backend, const Prompt& prompt, const TaskConfig& cfg) {
    LabelDistribution dist = backend.classify(prompt.text, cfg.map_tokens);
    return cfg.labels[argmax_index(dist.probs)];
}

// ---------------------------------------------------------------------------
// Sentence representation. The default extracts the model's own label-token
// distribution under a zero-shot rendering of the sentence, which lives on
// the shared support V by construction; embedding mode converts a
// backend-provided vector via exponential normalization.
// ---------------------------------------------------------------------------

enum class RepresentMode { LabelDistribution, Embedding };

inline Representation represent(Backend& backend, const std::string& sentence, const TaskConfig& cfg,
                                RepresentMode mode = RepresentMode::LabelDistribution) {
    if (sentence.empty()) throw_usage("cannot represent an empty sentence");
    if (mode == RepresentMode::Embedding)
        return representation_from_embedding(backend.embed(sentence));
    LabelDistribution dist = backend.classify(render_query(sentence, cfg), cfg.map_tokens);
    return smooth_distribution(dist);
}

// ---------------------------------------------------------------------------
// Cache decorator. Keys are the canonical JSON of {backend, op, input,
// support}; identical requests share entries across runs and across the
// per-k loops of a run.
// ---------------------------------------------------------------------------

class CachedBackend : public Backend {
public:
    CachedBackend(std::unique_ptr<Backend> inner, std::filesystem::path cache_dir)
        : inner_(std::move(inner)), cache_(std::move(cache_dir)) {}

    std::string id() const override { return inner_->id(); }
    std::string model_name() const override { return inner_->model_name(); }
    int max_concurrent() const override { return inner_->max_concurrent(); }

    LabelDistribution classify(const std::string& prompt,
                               const std::vector<std::string>& verbalizer_tokens) override {
        nlohmann::json req{
            {"backend", inner_->id()}, {"op", "classify"}, {"prompt", prompt}, {"support", verbalizer_tokens}};
        std::string request = req.dump();
        if (auto hit = cache_.lookup(request)) {
            LabelDistribution dist;
            dist.support = hit->at("support").get<std::vector<std::string>>();
            dist.probs = hit->at("probs").get<std::vector<double>>();
            return dist;
        }
        LabelDistribution dist = inner_->classify(prompt, verbalizer_tokens);
        cache_.store(request, nlohmann::json{{"support", dist.support}, {"probs", dist.probs}},
                     inner_->id());
        return dist;
    }

    std::vector<double> embed(const std::string& sentence) override {
        nlohmann::json req{{"backend", inner_->id()}, {"op", "embed"}, {"input", sentence}};
        std::string request = req.dump();
        if (auto hit = cache_.lookup(request)) return hit->at("embedding").get<std::vector<double>>();
        auto vec = inner_->embed(sentence);
        cache_.store(request, nlohmann::json{{"embedding", vec}}, inner_->id());
        return vec;
    }

    int count_tokens(const std::string& text) const override {
        nlohmann::json req{{"backend", inner_->id()}, {"op", "count_tokens"}, {"input", text}};
        std::string request = req.dump();
        if (auto hit = cache_.lookup(request)) return hit->at("count").get<int>();
        int count = inner_->count_tokens(text);
        cache_.store(request, nlohmann::json{{"count", count}}, inner_->id());
        return count;
    }

    std::uint64_t call_count() const override { return inner_->call_count(); }
    std::uint64_t cache_hits() const override { return cache_.hits(); }
    std::uint64_t cache_misses() const override { return cache_.misses(); }

private:
    std::unique_ptr<Backend> inner_;
    mutable ResponseCache cache_;
};

} // namespace d2ctl

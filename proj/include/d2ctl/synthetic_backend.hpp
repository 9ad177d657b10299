#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2ctl/backend.hpp"
#include "d2ctl/distribution.hpp"
#include "d2ctl/error.hpp"
#include "d2ctl/util.hpp"

namespace d2ctl {

// Deterministic stand-in model. The scoring rule, spelled out so tests can
// replay it independently:
//
//   test block  t  = text after the last occurrence of any verbalizer token
//                    (demonstrations end with their label token, the test
//                    block does not, so this isolates the test block)
//   shots       s  = (occurrences of verbalizer tokens in the prompt) / |V|
//   tokens      T  = whitespace token count of the prompt
//   utility     u  = signal_gain * min(s, saturation_shots) - length_penalty * T
//   evidence    w  = max(0, keyword_weight + u)
//   matches   m_c  = occurrences of class-c keywords in t
//   confusion f_c  = noise_scale * unit_hash(seed, t, c)
//   logit_c        = w * m_c + f_c          probs = softmax(logit)
//
// Utility rises while extra shots still add information and falls once the
// prompt length dominates, so accuracy-vs-k profiles with an interior peak
// are directly constructible from (signal_gain, length_penalty,
// saturation_shots).
class SyntheticBackend : public Backend {
public:
    SyntheticBackend(SyntheticParams params, std::string model = "synthetic",
                     RequestLimits limits = {})
        : params_(std::move(params)), model_(std::move(model)), limits_(limits) {
        nlohmann::json fingerprint{
            {"seed", params_.seed},
            {"signal_gain", params_.signal_gain},
            {"length_penalty", params_.length_penalty},
            {"saturation_shots", params_.saturation_shots},
            {"keyword_weight", params_.keyword_weight},
            {"noise_scale", params_.noise_scale},
            {"embed_dim", params_.embed_dim},
            {"keywords", params_.keywords},
        };
        id_ = "synthetic:" + model_ + ":" + hex64(fnv1a64(fingerprint.dump()));
    }

    std::string id() const override { return id_; }
    std::string model_name() const override { return model_; }
    int max_concurrent() const override { return limits_.max_concurrent; }

    LabelDistribution classify(const std::string& prompt,
                               const std::vector<std::string>& verbalizer_tokens) override {
        if (prompt.empty()) throw_usage("empty prompt");
        if (verbalizer_tokens.empty()) throw_usage("empty verbalizer token set");
        record_call();

        size_t last_label_end = 0;
        size_t label_occurrences = 0;
        for (const auto& v : verbalizer_tokens) {
            size_t pos = 0;
            while ((pos = prompt.find(v, pos)) != std::string::npos) {
                ++label_occurrences;
                pos += v.size();
                last_label_end = std::max(last_label_end, pos);
            }
        }
        const std::string test_block = prompt.substr(last_label_end);

        double shots = static_cast<double>(label_occurrences) /
                       static_cast<double>(verbalizer_tokens.size());
        double tokens = static_cast<double>(whitespace_tokens(prompt));
        double utility = params_.signal_gain * std::min(shots, params_.saturation_shots) -
                         params_.length_penalty * tokens;
        double evidence = std::max(0.0, params_.keyword_weight + utility);

        std::vector<double> logits(verbalizer_tokens.size());
        for (size_t c = 0; c < verbalizer_tokens.size(); ++c) {
            double matches = 0.0;
            for (const auto& kw : keywords_for(verbalizer_tokens[c]))
                matches += static_cast<double>(detail::count_occurrences(test_block, kw));
            logits[c] = evidence * matches + confusion(test_block, c);
        }
        return softmax_scores(verbalizer_tokens, logits);
    }

    std::vector<double> embed(const std::string& sentence) override {
        if (sentence.empty()) throw_usage("empty sentence");
        record_call();
        int dim = std::max(2, params_.embed_dim);
        std::vector<double> vec(static_cast<size_t>(dim));
        for (int d = 0; d < dim; ++d) {
            std::uint64_t h = fnv1a64(sentence, fnv1a64_u64(params_.seed, 0x9e3779b9 + static_cast<std::uint64_t>(d)));
            vec[static_cast<size_t>(d)] = 2.0 * unit_from_hash(h) - 1.0;
        }
        // Keyword hits pull the vector toward a class-specific dimension.
        for (const auto& [token, kws] : params_.keywords) {
            size_t slot = fnv1a64(token) % static_cast<size_t>(dim);
            for (const auto& kw : kws)
                vec[slot] += static_cast<double>(detail::count_occurrences(sentence, kw));
        }
        return vec;
    }

    // Backend-reported counting; the synthetic model's notion of length is
    // whitespace tokens, consistent with its own length penalty.
    int count_tokens(const std::string& text) const override { return whitespace_tokens(text); }

    const SyntheticParams& params() const { return params_; }

    // Keyword lists must be configured per mapping token and must not contain
    // any verbalizer token as a substring, or the shot inference would count
    // them as labels. Unconfigured tokens carry no keyword evidence.
    std::vector<std::string> keywords_for(const std::string& token) const {
        auto it = params_.keywords.find(token);
        if (it != params_.keywords.end()) return it->second;
        return {};
    }

    double confusion(const std::string& test_block, size_t class_index) const {
        std::uint64_t h = fnv1a64(test_block, fnv1a64_u64(params_.seed, class_index));
        return params_.noise_scale * unit_from_hash(h);
    }

private:
    static int whitespace_tokens(const std::string& text) {
        int count = 0;
        bool in_word = false;
        for (char ch : text) {
            bool ws = ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' || ch == '\v';
            if (!ws && !in_word) ++count;
            in_word = !ws;
        }
        return count;
    }

    SyntheticParams params_;
    std::string model_;
    RequestLimits limits_;
    std::string id_;
};

} // namespace d2ctl

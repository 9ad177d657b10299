#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "d2ctl/error.hpp"

namespace d2ctl {

constexpr double kSmoothingEps = 1e-9;

// Next-token probabilities restricted to the mapping token space V and
// renormalized. Support order matches the task's verbalizer order.
struct LabelDistribution {
    std::vector<std::string> support;
    std::vector<double> probs;
};

// A sentence's vector representation: a smoothed, strictly positive
// probability vector. Two representations are comparable only on an
// identical support.
struct Representation {
    std::vector<std::string> support;
    std::vector<double> probs;
    double smoothing_eps = kSmoothingEps;
};

// First-wins argmax; the tie rule behind pi^-1(argmax p(v|P)).
inline size_t argmax_index(const std::vector<double>& values) {
    if (values.empty()) throw_usage("argmax of empty vector");
    size_t best = 0;
    for (size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

// Renormalizes non-negative scores over the support. Positive rescaling of
// the scores cannot change the argmax.
inline LabelDistribution normalize_scores(std::vector<std::string> support, std::vector<double> scores) {
    if (support.size() != scores.size()) throw_usage("support/score size mismatch");
    if (support.empty()) throw_usage("empty support");
    double sum = 0.0;
    for (double s : scores) {
        if (s < 0.0 || !std::isfinite(s)) throw_usage("scores must be finite and non-negative");
        sum += s;
    }
    LabelDistribution dist;
    dist.support = std::move(support);
    dist.probs.resize(scores.size());
    if (sum <= 0.0) {
        std::fill(dist.probs.begin(), dist.probs.end(), 1.0 / static_cast<double>(scores.size()));
    } else {
        for (size_t i = 0; i < scores.size(); ++i) dist.probs[i] = scores[i] / sum;
    }
    return dist;
}

inline LabelDistribution softmax_scores(std::vector<std::string> support, const std::vector<double>& logits) {
    if (support.size() != logits.size()) throw_usage("support/logit size mismatch");
    if (support.empty()) throw_usage("empty support");
    double max_logit = *std::max_element(logits.begin(), logits.end());
    std::vector<double> scores(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) scores[i] = std::exp(logits[i] - max_logit);
    return normalize_scores(std::move(support), std::move(scores));
}

// Adds eps to every entry and renormalizes; KL needs strictly positive
// inputs, and 1e-9 sits below every reporting tolerance.
inline Representation smooth_distribution(const LabelDistribution& dist, double eps = kSmoothingEps) {
    Representation rep;
    rep.support = dist.support;
    rep.smoothing_eps = eps;
    double sum = 0.0;
    for (double p : dist.probs) sum += p + eps;
    rep.probs.resize(dist.probs.size());
    for (size_t i = 0; i < dist.probs.size(); ++i) rep.probs[i] = (dist.probs[i] + eps) / sum;
    return rep;
}

// Embedding-mode representation: exponential normalization over dimensions.
inline Representation representation_from_embedding(const std::vector<double>& embedding,
                                                    double eps = kSmoothingEps) {
    if (embedding.empty()) throw_usage("empty embedding");
    std::vector<std::string> support(embedding.size());
    for (size_t i = 0; i < embedding.size(); ++i) support[i] = std::to_string(i);
    return smooth_distribution(softmax_scores(std::move(support), embedding), eps);
}

} // namespace d2ctl

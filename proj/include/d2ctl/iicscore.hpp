#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "d2ctl/dataset.hpp"
#include "d2ctl/distribution.hpp"
#include "d2ctl/error.hpp"
#include "d2ctl/prompt.hpp"
#include "d2ctl/util.hpp"

namespace d2ctl {

enum class DistanceMetric { Kl, Euclidean, NegCosine };

inline const char* metric_name(DistanceMetric m) {
    switch (m) {
    case DistanceMetric::Kl: return "kl";
    case DistanceMetric::Euclidean: return "euclidean";
    case DistanceMetric::NegCosine: return "cosine";
    }
    return "?";
}

namespace detail {

inline void require_shared_support(const Representation& p, const Representation& q) {
    if (p.support != q.support)
        throw_usage("representations are not on a shared support");
    if (p.probs.size() != q.probs.size() || p.probs.size() != p.support.size())
        throw_usage("representation size mismatch");
}

} // namespace detail

// KL(p, q) = sum_i p_i ln(p_i / q_i). Requires smoothed (strictly positive)
// inputs on a shared support.
inline double kl_divergence(const Representation& p, const Representation& q) {
    detail::require_shared_support(p, q);
    double sum = 0.0;
    for (size_t i = 0; i < p.probs.size(); ++i) {
        if (p.probs[i] <= 0.0 || q.probs[i] <= 0.0)
            throw_usage("kl_divergence requires smoothed, strictly positive distributions");
        sum += p.probs[i] * std::log(p.probs[i] / q.probs[i]);
    }
    return sum < 0.0 ? 0.0 : sum; // clamp the tiny negative rounding residue at p == q
}

inline double euclidean_distance(const Representation& p, const Representation& q) {
    detail::require_shared_support(p, q);
    double sum = 0.0;
    for (size_t i = 0; i < p.probs.size(); ++i) {
        double d = p.probs[i] - q.probs[i];
        sum += d * d;
    }
    return std::sqrt(sum);
}

inline double neg_cosine_distance(const Representation& p, const Representation& q) {
    detail::require_shared_support(p, q);
    double dot = 0.0, np = 0.0, nq = 0.0;
    for (size_t i = 0; i < p.probs.size(); ++i) {
        dot += p.probs[i] * q.probs[i];
        np += p.probs[i] * p.probs[i];
        nq += q.probs[i] * q.probs[i];
    }
    if (np <= 0.0 || nq <= 0.0) throw_usage("neg_cosine_distance on a zero vector");
    return -dot / (std::sqrt(np) * std::sqrt(nq));
}

inline double distance(const Representation& p, const Representation& q, DistanceMetric metric) {
    switch (metric) {
    case DistanceMetric::Kl: return kl_divergence(p, q);
    case DistanceMetric::Euclidean: return euclidean_distance(p, q);
    case DistanceMetric::NegCosine: return neg_cosine_distance(p, q);
    }
    throw_internal("unreachable metric");
}

// ---------------------------------------------------------------------------
// Per-group class statistics: the mean representation of each class's
// in-context instances, renormalized (a no-op up to rounding).
// ---------------------------------------------------------------------------

struct GroupClassStats {
    std::vector<Representation> means; // indexed by class position in the config
};

using RepresentationIndex = std::unordered_map<std::string, Representation>; // example id -> x

inline GroupClassStats class_means(const InContextGroup& group, const RepresentationIndex& reps,
                                   const TaskConfig& cfg) {
    GroupClassStats stats;
    stats.means.resize(cfg.num_classes());
    std::vector<size_t> counts(cfg.num_classes(), 0);
    for (const auto& member : group.members) {
        auto it = reps.find(member.id);
        if (it == reps.end()) throw_internal("missing representation for example " + member.id);
        const Representation& rep = it->second;
        size_t c = static_cast<size_t>(cfg.label_index(member.label));
        Representation& mean = stats.means[c];
        if (mean.probs.empty()) {
            mean = rep;
        } else {
            detail::require_shared_support(mean, rep);
            for (size_t i = 0; i < rep.probs.size(); ++i) mean.probs[i] += rep.probs[i];
        }
        ++counts[c];
    }
    for (size_t c = 0; c < stats.means.size(); ++c) {
        if (counts[c] == 0) throw_internal("group has no members of class \"" + cfg.classes[c] + "\"");
        double sum = 0.0;
        for (double& p : stats.means[c].probs) {
            p /= static_cast<double>(counts[c]);
            sum += p;
        }
        for (double& p : stats.means[c].probs) p /= sum;
    }
    return stats;
}

// ---------------------------------------------------------------------------
// IICScore of a candidate of class c against one group:
//   -d(x, mean_c) + sum_{c' != c} (|D'^c'| / |D'|) d(x, mean_c')
// Higher is more similar to the group's class-c demonstrations while staying
// far from the other classes.
// ---------------------------------------------------------------------------

inline double iicscore(const Representation& candidate, size_t class_index, const GroupClassStats& stats,
                       const CandidatePool& pool, const TaskConfig& cfg,
                       DistanceMetric metric = DistanceMetric::Kl) {
    if (class_index >= cfg.num_classes()) throw_usage("unknown class index");
    if (stats.means.size() != cfg.num_classes()) throw_usage("class stats do not cover every class");
    double total = static_cast<double>(pool.size());
    if (total <= 0.0) throw_usage("empty candidate pool");
    double score = -distance(candidate, stats.means[class_index], metric);
    for (size_t c = 0; c < cfg.num_classes(); ++c) {
        if (c == class_index) continue;
        double weight = static_cast<double>(pool.per_class_counts.at(cfg.classes[c])) / total;
        score += weight * distance(candidate, stats.means[c], metric);
    }
    return score;
}

// ---------------------------------------------------------------------------
// Evaluation-set selection: for each group (in index order) and each class
// (in config order), the highest-IICScore candidate not yet taken. Each
// group's own |C| picks are its similar examples; the other groups' picks
// serve as its dissimilar ones.
// ---------------------------------------------------------------------------

struct EvaluationEntry {
    std::string id;
    size_t source_group = 0;
    std::string source_class;
    double score = 0.0;
    std::string runner_up_id;
    double runner_up_score = 0.0;
};

struct EvaluationSet {
    std::vector<EvaluationEntry> entries;

    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        out.reserve(entries.size());
        for (const auto& e : entries) out.push_back(e.id);
        return out;
    }
};

inline EvaluationSet select_eval_examples(const std::vector<InContextGroup>& groups,
                                          const CandidatePool& pool, const RepresentationIndex& reps,
                                          const TaskConfig& cfg,
                                          DistanceMetric metric = DistanceMetric::Kl) {
    for (const auto& cls : cfg.classes) {
        auto it = pool.per_class_counts.find(cls);
        size_t have = it == pool.per_class_counts.end() ? 0 : it->second;
        if (have < groups.size())
            throw_data("candidate pool class \"" + cls + "\" has " + std::to_string(have) +
                       " examples, needs " + std::to_string(groups.size()));
    }

    EvaluationSet result;
    std::set<std::string> taken;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        GroupClassStats stats = class_means(groups[gi], reps, cfg);
        for (size_t c = 0; c < cfg.num_classes(); ++c) {
            const std::string& cls = cfg.classes[c];
            const Representation* best_rep = nullptr;
            EvaluationEntry entry;
            entry.source_group = gi;
            entry.source_class = cls;
            bool has_best = false, has_runner = false;
            auto pit = pool.by_class.find(cls);
            if (pit != pool.by_class.end()) {
                for (size_t idx : pit->second) {
                    const Example& ex = pool.examples[idx];
                    if (taken.count(ex.id)) continue;
                    auto rit = reps.find(ex.id);
                    if (rit == reps.end()) throw_internal("missing representation for candidate " + ex.id);
                    double s = iicscore(rit->second, c, stats, pool, cfg, metric);
                    bool beats_best = !has_best || s > entry.score ||
                                      (s == entry.score && id_less(ex.id, entry.id));
                    if (beats_best) {
                        if (has_best) {
                            entry.runner_up_id = entry.id;
                            entry.runner_up_score = entry.score;
                            has_runner = true;
                        }
                        entry.id = ex.id;
                        entry.score = s;
                        best_rep = &rit->second;
                        has_best = true;
                    } else if (!has_runner || s > entry.runner_up_score ||
                               (s == entry.runner_up_score && id_less(ex.id, entry.runner_up_id))) {
                        entry.runner_up_id = ex.id;
                        entry.runner_up_score = s;
                        has_runner = true;
                    }
                }
            }
            if (!has_best)
                throw_data("evaluation selection exhausted class \"" + cls + "\" at group " +
                           std::to_string(gi));
            (void)best_rep;
            taken.insert(entry.id);
            result.entries.push_back(std::move(entry));
        }
    }
    return result;
}

// Class-stratified uniform draw of the same shape as select_eval_examples;
// the "Random" selection baseline.
inline EvaluationSet random_eval_examples(const CandidatePool& pool, size_t count, std::uint64_t seed,
                                          const TaskConfig& cfg) {
    size_t n_classes = cfg.num_classes();
    if (count == 0 || count % n_classes != 0)
        throw_usage("random selection count must be a positive multiple of the class count");
    size_t per_class = count / n_classes;
    SeededRng rng(seed);
    EvaluationSet result;
    for (size_t c = 0; c < n_classes; ++c) {
        const std::string& cls = cfg.classes[c];
        auto pit = pool.by_class.find(cls);
        size_t have = pit == pool.by_class.end() ? 0 : pit->second.size();
        if (have < per_class)
            throw_data("candidate pool class \"" + cls + "\" has " + std::to_string(have) +
                       " examples, needs " + std::to_string(per_class));
        // Draw over ids in shortlex order so storage order cannot matter.
        std::vector<std::string> ids;
        ids.reserve(have);
        for (size_t idx : pit->second) ids.push_back(pool.examples[idx].id);
        std::sort(ids.begin(), ids.end(), id_less);
        for (size_t draw : rng.pick_indices(ids.size(), per_class)) {
            EvaluationEntry entry;
            entry.id = ids[draw];
            entry.source_group = result.entries.size() % per_class;
            entry.source_class = cls;
            result.entries.push_back(std::move(entry));
        }
    }
    return result;
}

} // namespace d2ctl

#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "d2ctl/dataset.hpp"
#include "d2ctl/error.hpp"
#include "d2ctl/prompt.hpp"
#include "d2ctl/tokenizer.hpp"

namespace d2ctl {

// ---------------------------------------------------------------------------
// Token statistics feeding the shot budget: the mean rendered-demonstration
// length over the training examples and the longest rendered test input over
// the candidate instances.
// ---------------------------------------------------------------------------

struct DemoStats {
    double avg_demo_len = 0.0;
    int max_test_len = 0;
};

inline DemoStats demo_stats(const Dataset& dataset, const TaskConfig& cfg, const TokenizerSpec& tok,
                            const Dataset* test_candidates = nullptr) {
    if (dataset.size() == 0) throw_usage("demo_stats requires a non-empty dataset");
    DemoStats stats;
    double total = 0.0;
    for (const auto& ex : dataset.examples())
        total += count_tokens(render_demonstration(ex, cfg, true), tok);
    stats.avg_demo_len = total / static_cast<double>(dataset.size());
    const Dataset& candidates = test_candidates ? *test_candidates : dataset;
    stats.max_test_len = detail::max_test_render_tokens(candidates.examples(), cfg, tok);
    return stats;
}

// ---------------------------------------------------------------------------
// Shot budget: how many class-balanced demonstrations fit in the window, and
// the feasible set K = {1, 2, 4, ..., k_max} the controller compares.
// ---------------------------------------------------------------------------

struct ShotPlan {
    long upper_bound = 0;
    int k_max = 0;
    std::vector<int> feasible_set;
    bool override_applied = false;
    struct Inputs {
        int context_window = 0;
        int max_test_len = 0;
        double avg_demo_len = 0.0;
        int num_classes = 0;
    } inputs;
};

inline std::vector<int> feasible_shot_set(int k_max) {
    std::vector<int> set;
    for (int k = 1; k <= k_max; k *= 2) set.push_back(k);
    return set;
}

// upper_bound = floor((window - max_test) / (avg_demo * classes)), k_max the
// largest power of two below it. A positive headroom that floors to zero is
// treated as room for a single shot; the published per-dataset budgets count
// it that way, and the per-prompt guard still rejects anything that does not
// actually fit.
inline ShotPlan compute_kmax(int context_window, int max_test_len, double avg_demo_len, int num_classes,
                             std::optional<int> override_kmax = std::nullopt) {
    if (avg_demo_len <= 0.0) throw_usage("avg_demo_len must be positive");
    if (num_classes < 2) throw_usage("num_classes must be >= 2");
    ShotPlan plan;
    plan.inputs = {context_window, max_test_len, avg_demo_len, num_classes};
    if (context_window <= max_test_len)
        throw_data("infeasible task: max test input (" + std::to_string(max_test_len) +
                   " tokens) does not fit the context window (" + std::to_string(context_window) + ")");
    double raw = static_cast<double>(context_window - max_test_len) /
                 (avg_demo_len * static_cast<double>(num_classes));
    plan.upper_bound = std::max<long>(1, static_cast<long>(std::floor(raw)));
    int k = 1;
    while (2L * k <= plan.upper_bound) k *= 2;
    plan.k_max = k;
    if (override_kmax) {
        plan.k_max = *override_kmax;
        plan.override_applied = true;
    }
    plan.feasible_set = feasible_shot_set(plan.k_max);
    return plan;
}

inline ShotPlan compute_shot_plan(const Dataset& dataset, const TaskConfig& cfg, const TokenizerSpec& tok,
                                  const Dataset* test_candidates = nullptr) {
    DemoStats stats = demo_stats(dataset, cfg, tok, test_candidates);
    return compute_kmax(cfg.context_window, stats.max_test_len, stats.avg_demo_len,
                        static_cast<int>(cfg.num_classes()), cfg.kmax_override);
}

} // namespace d2ctl

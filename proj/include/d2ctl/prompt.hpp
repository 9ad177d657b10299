#pragma once

#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "d2ctl/dataset.hpp"
#include "d2ctl/error.hpp"
#include "d2ctl/tokenizer.hpp"
#include "d2ctl/util.hpp"

namespace d2ctl {

// ---------------------------------------------------------------------------
// Template rendering. A demonstration is the template with both slots filled;
// the test form leaves the label slot empty and drops the padding that the
// slot would otherwise have consumed, so "Sentiment: {label}" renders as
// "Sentiment:".
// ---------------------------------------------------------------------------

inline std::string render_demonstration(const Example& ex, const TaskConfig& cfg, bool with_label) {
    std::string out = cfg.prompt_template;
    size_t spos = out.find("{sentence}");
    if (spos == std::string::npos) throw_config("template has no {sentence} slot");
    out.replace(spos, 10, ex.sentence);
    size_t lpos = out.find("{label}");
    if (lpos == std::string::npos) throw_config("template has no {label} slot");
    if (with_label) {
        out.replace(lpos, 7, cfg.token_for_label(ex.label));
    } else {
        size_t erase_from = lpos;
        while (erase_from > 0 && (out[erase_from - 1] == ' ' || out[erase_from - 1] == '\t'))
            --erase_from;
        out.erase(erase_from, lpos + 7 - erase_from);
    }
    return out;
}

// Zero-shot query for a bare sentence, Omega(x, *).
inline std::string render_query(const std::string& sentence, const TaskConfig& cfg) {
    Example probe;
    probe.sentence = sentence;
    return render_demonstration(probe, cfg, false);
}

// ---------------------------------------------------------------------------
// In-context groups and the candidate pool left over after sampling.
// ---------------------------------------------------------------------------

struct InContextGroup {
    int k = 0;
    std::vector<Example> members; // k examples per class, class-major draw order
    std::uint64_t order_seed = 0;

    std::vector<std::string> member_ids() const {
        std::vector<std::string> ids;
        ids.reserve(members.size());
        for (const auto& m : members) ids.push_back(m.id);
        return ids;
    }
};

struct CandidatePool {
    std::vector<Example> examples;                        // dataset order
    std::map<std::string, std::vector<size_t>> by_class;  // class -> indices into examples
    std::map<std::string, size_t> per_class_counts;       // |D'^c|

    size_t size() const { return examples.size(); }
};

struct Prompt {
    std::string text;
    std::vector<std::string> demo_ids; // in rendered order
    std::string test_id;
    int token_len = 0;
};

// ---------------------------------------------------------------------------
// Prompt assembly: demonstrations in a seeded uniform order, one newline
// between blocks, the test block last. token_len is checked against the
// context window here, so no prompt can silently overflow whatever the
// average-based budget allowed.
// ---------------------------------------------------------------------------

inline Prompt build_prompt(const InContextGroup& group, const Example& test, const TaskConfig& cfg,
                           const TokenizerSpec& tok) {
    for (const auto& m : group.members)
        if (m.id == test.id) throw_usage("test example appears in the in-context group: " + test.id);

    std::vector<size_t> order(group.members.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    SeededRng rng(group.order_seed);
    rng.shuffle(order);

    Prompt prompt;
    prompt.test_id = test.id;
    std::string text;
    for (size_t idx : order) {
        const Example& ex = group.members[idx];
        text += render_demonstration(ex, cfg, true);
        text += '\n';
        prompt.demo_ids.push_back(ex.id);
    }
    text += render_demonstration(test, cfg, false);
    prompt.token_len = count_tokens(text, tok);
    if (prompt.token_len > cfg.context_window)
        throw_data("overlong prompt: " + std::to_string(prompt.token_len) + " tokens > context window " +
                   std::to_string(cfg.context_window));
    prompt.text = std::move(text);
    return prompt;
}

namespace detail {

// Longest rendered test form over a set of examples; the worst case a group
// can be paired with.
inline int max_test_render_tokens(const std::vector<Example>& examples, const TaskConfig& cfg,
                                  const TokenizerSpec& tok) {
    int max_len = 0;
    for (const auto& ex : examples)
        max_len = std::max(max_len, count_tokens(render_demonstration(ex, cfg, false), tok));
    return max_len;
}

inline int group_demo_tokens(const std::vector<Example>& members, const TaskConfig& cfg,
                             const TokenizerSpec& tok) {
    std::string text;
    for (const auto& ex : members) {
        text += render_demonstration(ex, cfg, true);
        text += '\n';
    }
    return count_tokens(text, tok);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Group sampling for one k-shot setting: N_s pairwise-disjoint class-balanced
// groups drawn uniformly without replacement per class; everything not drawn
// forms the candidate pool. A group whose worst-case prompt (its own
// demonstrations plus the longest test form in the dataset) would overflow
// the window is redrawn, up to 100 attempts.
// ---------------------------------------------------------------------------

inline std::pair<std::vector<InContextGroup>, CandidatePool>
sample_groups(const Dataset& dataset, int k, int n_groups, std::uint64_t seed, const TaskConfig& cfg,
              const TokenizerSpec& tok) {
    if (k < 1) throw_usage("shot number must be >= 1");
    if (n_groups < 1) throw_usage("group count must be >= 1");
    const size_t per_class_needed = static_cast<size_t>(n_groups) * static_cast<size_t>(k) +
                                    static_cast<size_t>(n_groups);
    for (const auto& cls : cfg.classes) {
        size_t have = dataset.class_ids(cls).size();
        if (have < per_class_needed)
            throw_data("infeasible k=" + std::to_string(k) + ": class \"" + cls + "\" has " +
                       std::to_string(have) + " examples, needs " + std::to_string(per_class_needed));
    }

    SeededRng rng(mix_seed(seed, static_cast<std::uint64_t>(k)));
    const int worst_test = detail::max_test_render_tokens(dataset.examples(), cfg, tok);

    // Per-class working sets of available ids, in record order.
    std::map<std::string, std::vector<std::string>> available;
    for (const auto& cls : cfg.classes) available[cls] = dataset.class_ids(cls);

    std::vector<InContextGroup> groups;
    groups.reserve(static_cast<size_t>(n_groups));
    for (int i = 0; i < n_groups; ++i) {
        InContextGroup group;
        group.k = k;
        group.order_seed = mix_seed(seed, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i) + 1);
        bool accepted = false;
        for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
            group.members.clear();
            std::vector<std::pair<std::string, std::vector<size_t>>> draw;
            for (const auto& cls : cfg.classes) {
                auto& ids = available[cls];
                auto picks = rng.pick_indices(ids.size(), static_cast<size_t>(k));
                for (size_t p : picks) group.members.push_back(dataset.by_id(ids[p]));
                draw.emplace_back(cls, std::move(picks));
            }
            int demo_tokens = detail::group_demo_tokens(group.members, cfg, tok);
            if (demo_tokens + worst_test <= cfg.context_window) {
                // Consume the drawn ids.
                for (auto& [cls, picks] : draw) {
                    auto& ids = available[cls];
                    std::sort(picks.begin(), picks.end(), std::greater<size_t>());
                    for (size_t p : picks) ids.erase(ids.begin() + static_cast<long>(p));
                }
                accepted = true;
            }
        }
        if (!accepted)
            throw_data("infeasible k=" + std::to_string(k) +
                       ": could not sample a group fitting the context window after 100 attempts");
        groups.push_back(std::move(group));
    }

    std::unordered_set<std::string> taken;
    for (const auto& g : groups)
        for (const auto& m : g.members) taken.insert(m.id);

    CandidatePool pool;
    for (const auto& ex : dataset.examples()) {
        if (taken.count(ex.id)) continue;
        size_t idx = pool.examples.size();
        pool.examples.push_back(ex);
        pool.by_class[cfg.class_for_label(ex.label)].push_back(idx);
    }
    for (const auto& cls : cfg.classes) pool.per_class_counts[cls] = pool.by_class[cls].size();
    return {std::move(groups), std::move(pool)};
}

// One class-balanced group with no pool requirement; used by the oracle and
// final evaluation where test instances come from a separate labeled set.
inline InContextGroup sample_single_group(const Dataset& dataset, int k, std::uint64_t seed,
                                          const TaskConfig& cfg, const TokenizerSpec& tok,
                                          int worst_test_tokens) {
    if (k < 1) throw_usage("shot number must be >= 1");
    for (const auto& cls : cfg.classes) {
        size_t have = dataset.class_ids(cls).size();
        if (have < static_cast<size_t>(k))
            throw_data("infeasible k=" + std::to_string(k) + ": class \"" + cls + "\" has " +
                       std::to_string(have) + " examples");
    }
    SeededRng rng(mix_seed(seed, static_cast<std::uint64_t>(k)));
    InContextGroup group;
    group.k = k;
    group.order_seed = mix_seed(seed, static_cast<std::uint64_t>(k), 1);
    for (int attempt = 0; attempt < 100; ++attempt) {
        group.members.clear();
        for (const auto& cls : cfg.classes) {
            const auto& ids = dataset.class_ids(cls);
            for (size_t p : rng.pick_indices(ids.size(), static_cast<size_t>(k)))
                group.members.push_back(dataset.by_id(ids[p]));
        }
        if (detail::group_demo_tokens(group.members, cfg, tok) + worst_test_tokens <= cfg.context_window)
            return group;
    }
    throw_data("infeasible k=" + std::to_string(k) +
               ": could not sample a group fitting the context window after 100 attempts");
}

} // namespace d2ctl

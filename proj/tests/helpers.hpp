#pragma once

// Shared fixtures for the test suites: deterministic toy-task generators, a
// scriptable backend, and independent oracles for the quantities the library
// computes. The oracles are deliberately written with their own loops and
// accumulation so they share no code path with the implementation.

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "d2ctl/d2ctl.hpp"

namespace testkit {

using namespace d2ctl;

// ---------------------------------------------------------------------------
// Toy task generation. Sentences are word salad with exactly one class
// keyword; keywords and filler avoid every verbalizer token as a substring so
// the synthetic backend's shot inference stays exact.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& filler_words() {
    static const std::vector<std::string> words = {
        "lamp",   "river",  "stone",   "window", "garden", "street", "march",  "quiet",
        "bright", "hollow", "ember",   "violet", "copper", "linen",  "harbor", "paper",
        "signal", "meadow", "branch",  "cellar", "attic",  "sparrow", "walnut", "canyon",
        "drift",  "plain",  "summit",  "valley", "orchard", "kettle", "saddle", "timber",
    };
    return words;
}

inline TaskConfig toy_task_config(int context_window = 400, size_t n_classes = 2) {
    static const std::vector<std::string> class_names = {"positive", "negative", "mixed", "other"};
    TaskConfig cfg;
    cfg.name = "toy";
    for (size_t c = 0; c < n_classes; ++c) {
        cfg.classes.push_back(class_names[c]);
        cfg.labels.push_back(class_names[c]);
        cfg.map_tokens.push_back(class_names[c]);
    }
    cfg.prompt_template = "Review: {sentence}\nSentiment: {label}";
    cfg.context_window = context_window;
    return cfg;
}

inline std::string toy_keyword(size_t class_index) {
    static const std::vector<std::string> kws = {"zubwonder", "zubgloom", "zubriddle", "zubmarble"};
    return kws[class_index % kws.size()];
}

inline std::map<std::string, std::vector<std::string>> toy_keywords(const TaskConfig& cfg) {
    std::map<std::string, std::vector<std::string>> out;
    for (size_t c = 0; c < cfg.num_classes(); ++c) out[cfg.map_tokens[c]] = {toy_keyword(c)};
    return out;
}

inline std::vector<Example> toy_examples(const TaskConfig& cfg, size_t per_class, std::uint64_t seed,
                                         int min_fill = 6, int max_fill = 8) {
    SeededRng rng(mix_seed(seed, 0x70b2));
    std::vector<Example> out;
    size_t next_id = 1;
    for (size_t i = 0; i < per_class; ++i) {
        for (size_t c = 0; c < cfg.num_classes(); ++c) {
            size_t n = static_cast<size_t>(min_fill) +
                       static_cast<size_t>(rng.below(static_cast<std::uint64_t>(max_fill - min_fill + 1)));
            std::vector<std::string> words;
            for (size_t w = 0; w < n; ++w)
                words.push_back(filler_words()[rng.below(filler_words().size())]);
            words.insert(words.begin() + static_cast<long>(rng.below(words.size() + 1)),
                         toy_keyword(c));
            std::string sentence;
            for (size_t w = 0; w < words.size(); ++w) {
                if (w) sentence += ' ';
                sentence += words[w];
            }
            out.push_back(Example{std::to_string(next_id++), sentence, cfg.labels[c]});
        }
    }
    return out;
}

inline Dataset toy_dataset(const TaskConfig& cfg, size_t per_class, std::uint64_t seed) {
    return Dataset::from_examples(toy_examples(cfg, per_class, seed), cfg);
}

// Solves (signal_gain, length_penalty, keyword_weight) so the synthetic
// utility profile sits at w(peak)=1.3, w(peak/2)=0.15, w(2*peak)=0.08 and
// clamps to zero further out: a strictly peaked accuracy-vs-k curve.
inline SyntheticParams peaked_params(int peak_k, const Dataset& train, const TaskConfig& cfg,
                                     std::uint64_t seed) {
    TokenizerSpec ws = TokenizerSpec::whitespace();
    DemoStats stats = demo_stats(train, cfg, ws);
    const double d = stats.avg_demo_len;
    const double t = static_cast<double>(stats.max_test_len);
    const double C = static_cast<double>(cfg.num_classes());
    const double w_peak = 1.3, w_next = 0.08, w_prev = 0.15;
    SyntheticParams params;
    params.seed = seed;
    params.saturation_shots = static_cast<double>(peak_k);
    params.length_penalty = (w_peak - w_next) / (d * C * static_cast<double>(peak_k));
    params.signal_gain =
        2.0 * (w_peak - w_prev) / static_cast<double>(peak_k) + params.length_penalty * d * C;
    params.keyword_weight = w_peak - params.signal_gain * static_cast<double>(peak_k) +
                            params.length_penalty * (d * C * static_cast<double>(peak_k) + t);
    params.noise_scale = 1.0;
    params.keywords = toy_keywords(cfg);
    return params;
}

// ---------------------------------------------------------------------------
// A backend whose classify is an arbitrary function of the prompt; handy for
// exact-accuracy fixtures.
// ---------------------------------------------------------------------------

class FnBackend : public Backend {
public:
    using ClassifyFn =
        std::function<LabelDistribution(const std::string&, const std::vector<std::string>&)>;

    explicit FnBackend(ClassifyFn fn, int concurrency = 1)
        : fn_(std::move(fn)), concurrency_(concurrency) {}

    std::string id() const override { return "test:fn"; }
    std::string model_name() const override { return "fn"; }
    int max_concurrent() const override { return concurrency_; }

    LabelDistribution classify(const std::string& prompt,
                               const std::vector<std::string>& tokens) override {
        record_call();
        return fn_(prompt, tokens);
    }

    int count_tokens(const std::string& text) const override {
        int count = 0;
        bool in_word = false;
        for (char ch : text) {
            bool ws = std::isspace(static_cast<unsigned char>(ch)) != 0;
            if (!ws && !in_word) ++count;
            in_word = !ws;
        }
        return count;
    }

private:
    ClassifyFn fn_;
    int concurrency_;
};

// ---------------------------------------------------------------------------
// Independent oracles.
// ---------------------------------------------------------------------------

// Direct-summation KL in extended precision, accumulated high-index-first.
inline long double kl_oracle(const std::vector<double>& p, const std::vector<double>& q) {
    long double sum = 0.0L;
    for (size_t i = p.size(); i-- > 0;)
        sum += static_cast<long double>(p[i]) *
               logl(static_cast<long double>(p[i]) / static_cast<long double>(q[i]));
    return sum;
}

inline double euclidean_oracle(const std::vector<double>& p, const std::vector<double>& q) {
    long double sum = 0.0L;
    for (size_t i = p.size(); i-- > 0;) {
        long double d = static_cast<long double>(p[i]) - static_cast<long double>(q[i]);
        sum += d * d;
    }
    return static_cast<double>(sqrtl(sum));
}

inline double neg_cosine_oracle(const std::vector<double>& p, const std::vector<double>& q) {
    long double dot = 0.0L, np = 0.0L, nq = 0.0L;
    for (size_t i = p.size(); i-- > 0;) {
        dot += static_cast<long double>(p[i]) * static_cast<long double>(q[i]);
        np += static_cast<long double>(p[i]) * static_cast<long double>(p[i]);
        nq += static_cast<long double>(q[i]) * static_cast<long double>(q[i]);
    }
    return static_cast<double>(-dot / (sqrtl(np) * sqrtl(nq)));
}

// Term-by-term IICScore of one candidate against one group's class means,
// with its own double-precision distances (descending-index loops).
inline double iicscore_oracle_distance(const std::vector<double>& a, const std::vector<double>& b,
                                       DistanceMetric metric) {
    switch (metric) {
    case DistanceMetric::Kl: {
        double s = 0.0;
        for (size_t i = a.size(); i-- > 0;) s += a[i] * std::log(a[i] / b[i]);
        return s < 0.0 ? 0.0 : s;
    }
    case DistanceMetric::Euclidean: {
        double s = 0.0;
        for (size_t i = a.size(); i-- > 0;) s += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(s);
    }
    case DistanceMetric::NegCosine: {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (size_t i = a.size(); i-- > 0;) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        return -dot / (std::sqrt(na) * std::sqrt(nb));
    }
    }
    return 0.0;
}

inline double iicscore_oracle(const std::vector<double>& candidate, size_t cls,
                              const std::vector<std::vector<double>>& class_mean_probs,
                              const std::map<std::string, size_t>& pool_counts,
                              const std::vector<std::string>& class_order, DistanceMetric metric) {
    double pool_total = 0.0;
    for (const auto& [name, count] : pool_counts) pool_total += static_cast<double>(count);
    double score = -iicscore_oracle_distance(candidate, class_mean_probs[cls], metric);
    for (size_t c = 0; c < class_order.size(); ++c) {
        if (c == cls) continue;
        double weight = static_cast<double>(pool_counts.at(class_order[c])) / pool_total;
        score += weight * iicscore_oracle_distance(candidate, class_mean_probs[c], metric);
    }
    return score;
}

// Exhaustive re-selection with the exclusion rule: groups in index order,
// classes in config order, argmax with shortlex id tie-break, candidates
// removed once chosen.
inline std::vector<std::string> selection_oracle(const std::vector<InContextGroup>& groups,
                                                 const CandidatePool& pool,
                                                 const RepresentationIndex& reps, const TaskConfig& cfg,
                                                 DistanceMetric metric) {
    // per-group class means recomputed here, mean-then-renormalize.
    std::vector<std::vector<std::vector<double>>> means(groups.size());
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        means[gi].resize(cfg.num_classes());
        std::vector<size_t> counts(cfg.num_classes(), 0);
        for (const auto& m : groups[gi].members) {
            size_t c = static_cast<size_t>(cfg.label_index(m.label));
            const auto& probs = reps.at(m.id).probs;
            if (means[gi][c].empty()) means[gi][c].assign(probs.size(), 0.0);
            for (size_t i = 0; i < probs.size(); ++i) means[gi][c][i] += probs[i];
            ++counts[c];
        }
        for (size_t c = 0; c < cfg.num_classes(); ++c) {
            double sum = 0.0;
            for (double& v : means[gi][c]) {
                v /= static_cast<double>(counts[c]);
                sum += v;
            }
            for (double& v : means[gi][c]) v /= sum;
        }
    }

    std::set<std::string> taken;
    std::vector<std::string> chosen;
    for (size_t gi = 0; gi < groups.size(); ++gi) {
        for (size_t c = 0; c < cfg.num_classes(); ++c) {
            std::string best_id;
            double best_score = 0.0;
            bool have = false;
            for (size_t idx : pool.by_class.at(cfg.classes[c])) {
                const Example& ex = pool.examples[idx];
                if (taken.count(ex.id)) continue;
                double s = iicscore_oracle(reps.at(ex.id).probs, c, means[gi], pool.per_class_counts,
                                           cfg.classes, metric);
                if (!have || s > best_score || (s == best_score && id_less(ex.id, best_id))) {
                    best_id = ex.id;
                    best_score = s;
                    have = true;
                }
            }
            taken.insert(best_id);
            chosen.push_back(best_id);
        }
    }
    return chosen;
}

// String-level replay of the synthetic scoring rule; shares nothing with
// SyntheticBackend but the documented formula.
inline std::vector<double> synthetic_replay_probs(const std::string& prompt,
                                                  const std::vector<std::string>& tokens,
                                                  const SyntheticParams& params) {
    size_t last_end = 0, occurrences = 0;
    for (const auto& v : tokens) {
        for (size_t pos = prompt.find(v); pos != std::string::npos; pos = prompt.find(v, pos + v.size())) {
            ++occurrences;
            if (pos + v.size() > last_end) last_end = pos + v.size();
        }
    }
    std::string tail = prompt.substr(last_end);
    double shots = static_cast<double>(occurrences) / static_cast<double>(tokens.size());
    int words = 0;
    bool in_word = false;
    for (char ch : prompt) {
        bool ws = std::isspace(static_cast<unsigned char>(ch)) != 0;
        if (!ws && !in_word) ++words;
        in_word = !ws;
    }
    double utility = params.signal_gain * std::min(shots, params.saturation_shots) -
                     params.length_penalty * static_cast<double>(words);
    double evidence = std::max(0.0, params.keyword_weight + utility);
    std::vector<double> logits(tokens.size());
    for (size_t c = 0; c < tokens.size(); ++c) {
        double matches = 0.0;
        auto it = params.keywords.find(tokens[c]);
        if (it != params.keywords.end()) {
            for (const auto& kw : it->second) {
                for (size_t pos = tail.find(kw); pos != std::string::npos;
                     pos = tail.find(kw, pos + kw.size()))
                    matches += 1.0;
            }
        }
        std::uint64_t h = fnv1a64(tail, fnv1a64_u64(params.seed, c));
        logits[c] = evidence * matches + params.noise_scale * unit_from_hash(h);
    }
    double max_logit = logits[0];
    for (double l : logits) max_logit = std::max(max_logit, l);
    std::vector<double> probs(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - max_logit);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

inline size_t replay_argmax(const std::vector<double>& probs) {
    size_t best = 0;
    for (size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return best;
}

} // namespace testkit

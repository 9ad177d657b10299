#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2ctl/backend.hpp"
#include "d2ctl/budget.hpp"
#include "d2ctl/dataset.hpp"
#include "d2ctl/error.hpp"
#include "d2ctl/iicscore.hpp"
#include "d2ctl/prompt.hpp"
#include "d2ctl/tokenizer.hpp"
#include "d2ctl/util.hpp"

namespace d2ctl {

enum class SelectionStrategy { IicScore, Random };

struct ControllerOptions {
    TokenizerSpec tokenizer;                                      // whitespace by default
    SelectionStrategy selection = SelectionStrategy::IicScore;
    RepresentMode represent_mode = RepresentMode::LabelDistribution;
    std::string out_dir;                                          // empty: no audit files
};

// One k-shot setting's evaluation, Acc_k = mean over groups of per-group
// accuracy on T^k.
struct KEvaluation {
    int k = 0;
    bool infeasible = false;
    std::string reason;
    double acc = 0.0;
    std::vector<double> per_group_acc;
    size_t eval_set_size = 0;
    std::uint64_t backend_calls = 0; // telemetry
    std::uint64_t prompt_tokens = 0; // telemetry
};

struct RunTelemetry {
    double wall_time_ms = 0.0;
    std::uint64_t backend_calls = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t cache_misses = 0;
};

// k_hat = argmax over feasible evaluations by accuracy, ties to the smallest
// k. Returns 0 when nothing is feasible.
inline int select_best_k(const std::vector<KEvaluation>& evaluations) {
    int best_k = 0;
    double best_acc = -1.0;
    for (const auto& ev : evaluations) {
        if (ev.infeasible) continue;
        if (ev.acc > best_acc || (ev.acc == best_acc && best_k != 0 && ev.k < best_k)) {
            best_acc = ev.acc;
            best_k = ev.k;
        }
    }
    return best_k;
}

struct RunReport {
    std::string task;
    std::string backend_id;
    std::string model;
    std::uint64_t seed = 0;
    int ns = 0;
    std::string metric;
    std::string selection;
    ShotPlan plan;
    std::vector<KEvaluation> evaluations;
    int selected_k = 0;
    RunTelemetry telemetry;
};

// Per-prediction audit record, dumped as one JSONL line per (group, test).
struct PredictionRecord {
    int k = 0;
    size_t group_index = 0;
    std::string test_id;
    std::string prompt_hash;
    LabelDistribution distribution;
    std::string predicted;
    std::string gold;
};

namespace detail {

struct AuditSink {
    std::ofstream selection;
    std::ofstream predictions;
    bool enabled = false;
};

inline void open_audit(AuditSink& sink, const std::string& out_dir) {
    if (out_dir.empty()) return;
    std::filesystem::create_directories(out_dir);
    sink.selection.open(std::filesystem::path(out_dir) / "selection.jsonl");
    sink.predictions.open(std::filesystem::path(out_dir) / "predictions.jsonl");
    sink.enabled = true;
}

inline void audit_selection(AuditSink& sink, int k, const EvaluationSet& eval_set) {
    if (!sink.enabled) return;
    for (const auto& e : eval_set.entries) {
        nlohmann::json j{
            {"k", k},
            {"group_index", e.source_group},
            {"class", e.source_class},
            {"chosen_id", e.id},
            {"score", e.score},
            {"runner_up_id", e.runner_up_id},
            {"runner_up_score", e.runner_up_score},
        };
        sink.selection << j.dump() << "\n";
    }
}

inline void audit_predictions(AuditSink& sink, const std::vector<PredictionRecord>& records) {
    if (!sink.enabled) return;
    for (const auto& r : records) {
        nlohmann::json j{
            {"k", r.k},
            {"group_index", r.group_index},
            {"test_id", r.test_id},
            {"prompt_hash", r.prompt_hash},
            {"distribution", {{"support", r.distribution.support}, {"probs", r.distribution.probs}}},
            {"predicted", r.predicted},
            {"gold", r.gold},
        };
        sink.predictions << j.dump() << "\n";
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Accuracy-based evaluation of one k-shot setting: every group is combined
// with every evaluation example, predictions fan out concurrently, and
// results are aggregated by (group, example) index so completion order is
// irrelevant.
// ---------------------------------------------------------------------------

inline KEvaluation evaluate_k(int k, const std::vector<InContextGroup>& groups,
                              const EvaluationSet& eval_set, const Dataset& dataset, Backend& backend,
                              const TaskConfig& cfg, const TokenizerSpec& tok,
                              std::vector<PredictionRecord>* audit = nullptr) {
    for (const auto& g : groups)
        for (const auto& m : g.members)
            for (const auto& e : eval_set.entries)
                if (m.id == e.id)
                    throw_usage("evaluation set overlaps in-context group member " + m.id);

    KEvaluation result;
    result.k = k;
    result.eval_set_size = eval_set.entries.size();
    const size_t n_groups = groups.size();
    const size_t n_eval = eval_set.entries.size();
    if (n_groups == 0 || n_eval == 0) throw_usage("evaluate_k needs groups and evaluation examples");

    std::vector<char> correct(n_groups * n_eval, 0);
    std::vector<PredictionRecord> records(audit ? n_groups * n_eval : 0);
    std::atomic<std::uint64_t> tokens{0};

    parallel_for(n_groups * n_eval, backend.max_concurrent(), [&](size_t flat) {
        size_t gi = flat / n_eval;
        size_t ei = flat % n_eval;
        const Example& test = dataset.by_id(eval_set.entries[ei].id);
        Prompt prompt = build_prompt(groups[gi], test, cfg, tok);
        tokens.fetch_add(static_cast<std::uint64_t>(prompt.token_len), std::memory_order_relaxed);
        LabelDistribution dist = backend.classify(prompt.text, cfg.map_tokens);
        const std::string& predicted = cfg.labels[argmax_index(dist.probs)];
        correct[flat] = predicted == test.label ? 1 : 0;
        if (audit) {
            PredictionRecord& rec = records[flat];
            rec.k = k;
            rec.group_index = gi;
            rec.test_id = test.id;
            rec.prompt_hash = hex64(fnv1a64(prompt.text));
            rec.distribution = dist;
            rec.predicted = predicted;
            rec.gold = test.label;
        }
    });

    result.per_group_acc.resize(n_groups);
    double acc_sum = 0.0;
    for (size_t gi = 0; gi < n_groups; ++gi) {
        size_t hits = 0;
        for (size_t ei = 0; ei < n_eval; ++ei) hits += static_cast<size_t>(correct[gi * n_eval + ei]);
        result.per_group_acc[gi] = static_cast<double>(hits) / static_cast<double>(n_eval);
        acc_sum += result.per_group_acc[gi];
    }
    result.acc = acc_sum / static_cast<double>(n_groups);
    result.prompt_tokens = tokens.load();
    if (audit) audit->insert(audit->end(), records.begin(), records.end());
    return result;
}

// ---------------------------------------------------------------------------
// The end-to-end controller: for every feasible k, sample groups, represent
// group members and pool candidates, pick T^k, score the setting, then take
// the best k (ties to the smallest). Representations are computed once per
// sentence and shared across all ks.
// ---------------------------------------------------------------------------

inline RunReport select_k(const Dataset& dataset, const TaskConfig& cfg, Backend& backend, int ns,
                          std::uint64_t seed, DistanceMetric metric = DistanceMetric::Kl,
                          const ControllerOptions& options = {}) {
    if (ns < 1) throw_usage("N_s must be >= 1");
    auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t calls0 = backend.call_count();
    const std::uint64_t hits0 = backend.cache_hits();
    const std::uint64_t misses0 = backend.cache_misses();

    RunReport report;
    report.task = cfg.name;
    report.backend_id = backend.id();
    report.model = backend.model_name();
    report.seed = seed;
    report.ns = ns;
    report.metric = metric_name(metric);
    report.selection = options.selection == SelectionStrategy::Random ? "random" : "iicscore";
    report.plan = compute_shot_plan(dataset, cfg, options.tokenizer);

    detail::AuditSink audit;
    detail::open_audit(audit, options.out_dir);

    std::unordered_map<std::string, Representation> memo; // sentence -> x, shared across ks
    std::mutex memo_mu;

    for (int k : report.plan.feasible_set) {
        KEvaluation ev;
        ev.k = k;
        const std::uint64_t calls_k = backend.call_count();
        try {
            auto [groups, pool] = sample_groups(dataset, k, ns, seed, cfg, options.tokenizer);

            std::vector<const Example*> involved;
            for (const auto& g : groups)
                for (const auto& m : g.members) involved.push_back(&m);
            for (const auto& ex : pool.examples) involved.push_back(&ex);

            std::vector<const std::string*> missing;
            {
                std::lock_guard<std::mutex> lock(memo_mu);
                std::set<std::string> queued;
                for (const Example* ex : involved)
                    if (!memo.count(ex->sentence) && queued.insert(ex->sentence).second)
                        missing.push_back(&ex->sentence);
            }
            parallel_for(missing.size(), backend.max_concurrent(), [&](size_t i) {
                Representation rep = represent(backend, *missing[i], cfg, options.represent_mode);
                std::lock_guard<std::mutex> lock(memo_mu);
                memo.emplace(*missing[i], std::move(rep));
            });
            RepresentationIndex reps;
            for (const Example* ex : involved) reps.emplace(ex->id, memo.at(ex->sentence));

            EvaluationSet eval_set =
                options.selection == SelectionStrategy::Random
                    ? random_eval_examples(pool, static_cast<size_t>(ns) * cfg.num_classes(),
                                           mix_seed(seed, static_cast<std::uint64_t>(k), 0x5e1ec7),
                                           cfg)
                    : select_eval_examples(groups, pool, reps, cfg, metric);
            detail::audit_selection(audit, k, eval_set);

            std::vector<PredictionRecord> records;
            ev = evaluate_k(k, groups, eval_set, dataset, backend, cfg, options.tokenizer,
                            audit.enabled ? &records : nullptr);
            detail::audit_predictions(audit, records);
        } catch (const D2Error& e) {
            if (e.kind() != ErrorKind::Data) throw;
            ev.infeasible = true;
            ev.reason = e.what();
        }
        ev.backend_calls = backend.call_count() - calls_k;
        report.evaluations.push_back(std::move(ev));
    }

    report.selected_k = select_best_k(report.evaluations);
    if (report.selected_k == 0)
        throw_data("no feasible k-shot setting for this dataset/backend pair");

    auto t1 = std::chrono::steady_clock::now();
    report.telemetry.wall_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    report.telemetry.backend_calls = backend.call_count() - calls0;
    report.telemetry.cache_hits = backend.cache_hits() - hits0;
    report.telemetry.cache_misses = backend.cache_misses() - misses0;
    return report;
}

// ---------------------------------------------------------------------------
// Oracle: exhaustively evaluate every feasible k on a labeled dev set, one
// group per seed, averaged over seeds. The best entry is the ceiling the
// controller is compared against.
// ---------------------------------------------------------------------------

struct OracleEntry {
    int k = 0;
    bool infeasible = false;
    std::string reason;
    double mean_acc = 0.0;
    std::vector<double> per_seed_acc;
};

struct OracleReport {
    std::vector<OracleEntry> entries;
    int best_k = 0;
    double best_acc = 0.0;
    RunTelemetry telemetry;
};

namespace detail {

inline double accuracy_over(const InContextGroup& group, const Dataset& tests, Backend& backend,
                            const TaskConfig& cfg, const TokenizerSpec& tok) {
    const auto& examples = tests.examples();
    std::vector<char> correct(examples.size(), 0);
    parallel_for(examples.size(), backend.max_concurrent(), [&](size_t i) {
        Prompt prompt = build_prompt(group, examples[i], cfg, tok);
        LabelDistribution dist = backend.classify(prompt.text, cfg.map_tokens);
        correct[i] = cfg.labels[argmax_index(dist.probs)] == examples[i].label ? 1 : 0;
    });
    size_t hits = 0;
    for (char c : correct) hits += static_cast<size_t>(c);
    return static_cast<double>(hits) / static_cast<double>(examples.size());
}

} // namespace detail

inline OracleReport oracle_k(const Dataset& train, const Dataset& dev, const TaskConfig& cfg,
                             Backend& backend, const std::vector<std::uint64_t>& seeds,
                             const ControllerOptions& options = {}) {
    if (seeds.empty()) throw_usage("oracle_k needs at least one seed");
    auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t calls0 = backend.call_count();
    ShotPlan plan = compute_shot_plan(train, cfg, options.tokenizer, &dev);
    const int worst_dev = detail::max_test_render_tokens(dev.examples(), cfg, options.tokenizer);

    OracleReport report;
    for (int k : plan.feasible_set) {
        OracleEntry entry;
        entry.k = k;
        try {
            for (std::uint64_t seed : seeds) {
                InContextGroup group =
                    sample_single_group(train, k, seed, cfg, options.tokenizer, worst_dev);
                entry.per_seed_acc.push_back(
                    detail::accuracy_over(group, dev, backend, cfg, options.tokenizer));
            }
            double sum = 0.0;
            for (double a : entry.per_seed_acc) sum += a;
            entry.mean_acc = sum / static_cast<double>(entry.per_seed_acc.size());
        } catch (const D2Error& e) {
            if (e.kind() != ErrorKind::Data) throw;
            entry.infeasible = true;
            entry.reason = e.what();
            entry.per_seed_acc.clear();
        }
        report.entries.push_back(std::move(entry));
    }
    bool any = false;
    for (const auto& entry : report.entries) {
        if (entry.infeasible) continue;
        if (!any || entry.mean_acc > report.best_acc) {
            report.best_k = entry.k;
            report.best_acc = entry.mean_acc;
        }
        any = true;
    }
    if (!any) throw_data("no feasible k-shot setting for the oracle");
    auto t1 = std::chrono::steady_clock::now();
    report.telemetry.wall_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    report.telemetry.backend_calls = backend.call_count() - calls0;
    return report;
}

// ---------------------------------------------------------------------------
// Final evaluation of one k over a labeled test set: one group per seed,
// mean and population standard deviation of the per-seed accuracies.
// ---------------------------------------------------------------------------

struct FinalEvalReport {
    int k = 0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    std::vector<double> per_seed_acc;
    RunTelemetry telemetry;
};

inline FinalEvalReport final_eval(const Dataset& train, const Dataset& tests, const TaskConfig& cfg,
                                  Backend& backend, int k, const std::vector<std::uint64_t>& seeds,
                                  const ControllerOptions& options = {}) {
    if (seeds.empty()) throw_usage("final_eval needs at least one seed");
    auto t0 = std::chrono::steady_clock::now();
    const std::uint64_t calls0 = backend.call_count();
    const int worst_test = detail::max_test_render_tokens(tests.examples(), cfg, options.tokenizer);
    FinalEvalReport report;
    report.k = k;
    for (std::uint64_t seed : seeds) {
        InContextGroup group = sample_single_group(train, k, seed, cfg, options.tokenizer, worst_test);
        report.per_seed_acc.push_back(
            detail::accuracy_over(group, tests, backend, cfg, options.tokenizer));
    }
    double sum = 0.0;
    for (double a : report.per_seed_acc) sum += a;
    report.mean_acc = sum / static_cast<double>(report.per_seed_acc.size());
    double var = 0.0;
    for (double a : report.per_seed_acc) var += (a - report.mean_acc) * (a - report.mean_acc);
    report.std_acc = std::sqrt(var / static_cast<double>(report.per_seed_acc.size()));
    auto t1 = std::chrono::steady_clock::now();
    report.telemetry.wall_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    report.telemetry.backend_calls = backend.call_count() - calls0;
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization. Telemetry lives under dedicated "telemetry" keys so
// reproducibility checks can compare reports modulo telemetry.
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ShotPlan& plan) {
    return nlohmann::json{
        {"upper_bound", plan.upper_bound},
        {"k_max", plan.k_max},
        {"feasible_set", plan.feasible_set},
        {"override_applied", plan.override_applied},
        {"inputs",
         {{"context_window", plan.inputs.context_window},
          {"max_test_len", plan.inputs.max_test_len},
          {"avg_demo_len", plan.inputs.avg_demo_len},
          {"num_classes", plan.inputs.num_classes}}},
    };
}

inline nlohmann::json to_json(const KEvaluation& ev) {
    nlohmann::json j{
        {"k", ev.k},
        {"infeasible", ev.infeasible},
        {"telemetry", {{"backend_calls", ev.backend_calls}, {"prompt_tokens", ev.prompt_tokens}}},
    };
    if (ev.infeasible) {
        j["reason"] = ev.reason;
    } else {
        j["acc"] = ev.acc;
        j["per_group_acc"] = ev.per_group_acc;
        j["eval_set_size"] = ev.eval_set_size;
    }
    return j;
}

inline nlohmann::json to_json(const RunTelemetry& t) {
    return nlohmann::json{
        {"wall_time_ms", t.wall_time_ms},
        {"backend_calls", t.backend_calls},
        {"cache_hits", t.cache_hits},
        {"cache_misses", t.cache_misses},
    };
}

inline nlohmann::json to_json(const RunReport& report) {
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& ev : report.evaluations) evals.push_back(to_json(ev));
    return nlohmann::json{
        {"schema", "d2ctl/run-report/v1"},
        {"task", report.task},
        {"backend", report.backend_id},
        {"model", report.model},
        {"seed", report.seed},
        {"ns", report.ns},
        {"metric", report.metric},
        {"selection", report.selection},
        {"shot_plan", to_json(report.plan)},
        {"evaluations", evals},
        {"selected_k", report.selected_k},
        {"telemetry", to_json(report.telemetry)},
    };
}

inline nlohmann::json to_json(const OracleReport& report) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : report.entries) {
        nlohmann::json j{{"k", e.k}, {"infeasible", e.infeasible}};
        if (e.infeasible) {
            j["reason"] = e.reason;
        } else {
            j["mean_acc"] = e.mean_acc;
            j["per_seed_acc"] = e.per_seed_acc;
        }
        entries.push_back(std::move(j));
    }
    return nlohmann::json{
        {"schema", "d2ctl/oracle-report/v1"},
        {"entries", entries},
        {"best_k", report.best_k},
        {"best_acc", report.best_acc},
        {"telemetry", to_json(report.telemetry)},
    };
}

inline nlohmann::json to_json(const FinalEvalReport& report) {
    return nlohmann::json{
        {"schema", "d2ctl/final-eval/v1"},
        {"k", report.k},
        {"mean_acc", report.mean_acc},
        {"std_acc", report.std_acc},
        {"per_seed_acc", report.per_seed_acc},
        {"telemetry", to_json(report.telemetry)},
    };
}

// Removes every "telemetry" key, recursively; what remains must be seed-determined.
inline void strip_telemetry(nlohmann::json& j) {
    if (j.is_object()) {
        j.erase("telemetry");
        for (auto& [key, value] : j.items()) strip_telemetry(value);
    } else if (j.is_array()) {
        for (auto& value : j) strip_telemetry(value);
    }
}

inline void write_report(const nlohmann::json& j, const std::string& out_dir,
                         const std::string& filename) {
    std::filesystem::create_directories(out_dir);
    std::ofstream out(std::filesystem::path(out_dir) / filename);
    if (!out) throw_config("cannot write report to " + out_dir + "/" + filename);
    out << j.dump(2) << "\n";
}

} // namespace d2ctl

// d2ctl: dynamic demonstrations controller for in-context classification.
//
// Subcommands:
//   kmax    token budget and feasible shot set for a dataset/window pair
//   select  run the controller and report the chosen k-shot setting
//   oracle  exhaustive per-k evaluation on a labeled dev set
//   eval    evaluate one k over a labeled test set across seeds

#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "d2ctl/d2ctl.hpp"

namespace {

using namespace d2ctl;

DatasetFormat parse_format(const std::string& name) {
    if (name == "jsonl") return DatasetFormat::Jsonl;
    if (name == "csv") return DatasetFormat::Csv;
    throw_usage("unknown dataset format: " + name);
}

DistanceMetric parse_metric(const std::string& name) {
    if (name == "kl") return DistanceMetric::Kl;
    if (name == "euclidean") return DistanceMetric::Euclidean;
    if (name == "cosine") return DistanceMetric::NegCosine;
    throw_usage("unknown metric: " + name);
}

std::vector<std::uint64_t> parse_seeds(const std::string& csv) {
    std::vector<std::uint64_t> seeds;
    size_t pos = 0;
    while (pos <= csv.size()) {
        size_t comma = csv.find(',', pos);
        if (comma == std::string::npos) comma = csv.size();
        std::string part = csv.substr(pos, comma - pos);
        if (!part.empty()) seeds.push_back(std::stoull(part));
        pos = comma + 1;
    }
    if (seeds.empty()) throw_usage("no seeds given");
    return seeds;
}

struct BackendHandle {
    std::unique_ptr<Backend> backend;
};

TokenizerSpec resolve_tokenizer(const std::string& kind, const Backend* backend) {
    if (kind == "whitespace") return TokenizerSpec::whitespace();
    if (kind == "remote") {
        if (!backend) throw_usage("--tokenizer remote requires --backend");
        return TokenizerSpec::remote_count(*backend);
    }
    throw_usage("unknown tokenizer kind: " + kind + " (expected whitespace|remote)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamic demonstrations controller for in-context classification"};
    app.require_subcommand(1);

    std::string dataset_path, task_path, backend_path, out_dir;
    std::string format = "jsonl", tokenizer_kind = "whitespace", metric_name = "kl";
    std::string selection_name = "iicscore";
    std::string dev_path, test_path, seeds_csv = "1";
    int context_window = 0, ns = 25, k_arg = 0;
    std::uint64_t seed = 1;

    auto add_common = [&](CLI::App* cmd, bool needs_backend) {
        cmd->add_option("--dataset", dataset_path, "training dataset path")->required();
        cmd->add_option("--task", task_path, "task config path")->required();
        cmd->add_option("--format", format, "dataset format: jsonl|csv");
        cmd->add_option("--tokenizer", tokenizer_kind, "token counting: whitespace|remote");
        if (needs_backend)
            cmd->add_option("--backend", backend_path, "backend descriptor path")->required();
    };

    auto* kmax_cmd = app.add_subcommand("kmax", "compute the shot budget and feasible set");
    add_common(kmax_cmd, false);
    kmax_cmd->add_option("--backend", backend_path, "backend descriptor (for --tokenizer remote)");
    kmax_cmd->add_option("--context-window", context_window, "model max input length in tokens");

    auto* select_cmd = app.add_subcommand("select", "select the k-shot setting");
    add_common(select_cmd, true);
    select_cmd->add_option("--ns", ns, "number of in-context example groups per k");
    select_cmd->add_option("--seed", seed, "sampling seed");
    select_cmd->add_option("--metric", metric_name, "distance metric: kl|euclidean|cosine");
    select_cmd->add_option("--selection", selection_name, "evaluation example selection: iicscore|random");
    select_cmd->add_option("--out", out_dir, "directory for report and audit records");

    auto* oracle_cmd = app.add_subcommand("oracle", "per-k dev-set accuracy and the best k");
    add_common(oracle_cmd, true);
    oracle_cmd->add_option("--dev", dev_path, "labeled dev set path")->required();
    oracle_cmd->add_option("--seeds", seeds_csv, "comma-separated seeds");
    oracle_cmd->add_option("--out", out_dir, "directory for the report");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate one k over a test set");
    add_common(eval_cmd, true);
    eval_cmd->add_option("--k", k_arg, "shot number to evaluate")->required();
    eval_cmd->add_option("--test", test_path, "labeled test set path")->required();
    eval_cmd->add_option("--seeds", seeds_csv, "comma-separated seeds");
    eval_cmd->add_option("--out", out_dir, "directory for the report");

    CLI11_PARSE(app, argc, argv);

    try {
        TaskConfig cfg = load_task_config(task_path);
        if (context_window > 0) cfg.context_window = context_window;
        Dataset dataset = load_dataset(dataset_path, parse_format(format), cfg);

        BackendHandle handle;
        if (!backend_path.empty()) handle.backend = make_backend(load_backend_descriptor(backend_path));

        ControllerOptions options;
        options.tokenizer = resolve_tokenizer(tokenizer_kind, handle.backend.get());
        options.out_dir = out_dir;

        if (kmax_cmd->parsed()) {
            ShotPlan plan = compute_shot_plan(dataset, cfg, options.tokenizer);
            std::cout << to_json(plan).dump(2) << "\n";
            return 0;
        }

        if (select_cmd->parsed()) {
            options.selection = selection_name == "random" ? SelectionStrategy::Random
                                                           : SelectionStrategy::IicScore;
            RunReport report = select_k(dataset, cfg, *handle.backend, ns, seed,
                                        parse_metric(metric_name), options);
            nlohmann::json j = to_json(report);
            if (!out_dir.empty()) write_report(j, out_dir, "report.json");
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (oracle_cmd->parsed()) {
            Dataset dev = load_dataset(dev_path, parse_format(format), cfg);
            OracleReport report =
                oracle_k(dataset, dev, cfg, *handle.backend, parse_seeds(seeds_csv), options);
            nlohmann::json j = to_json(report);
            if (!out_dir.empty()) write_report(j, out_dir, "oracle.json");
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (eval_cmd->parsed()) {
            Dataset tests = load_dataset(test_path, parse_format(format), cfg);
            FinalEvalReport report =
                final_eval(dataset, tests, cfg, *handle.backend, k_arg, parse_seeds(seeds_csv), options);
            nlohmann::json j = to_json(report);
            if (!out_dir.empty()) write_report(j, out_dir, "eval.json");
            std::cout << j.dump(2) << "\n";
            return 0;
        }
    } catch (const d2ctl::D2Error& e) {
        std::cerr << "d2ctl: error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "d2ctl: error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

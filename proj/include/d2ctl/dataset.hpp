#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "d2ctl/error.hpp"
#include "d2ctl/util.hpp"

namespace d2ctl {

// ---------------------------------------------------------------------------
// Task configuration: label space Y, class set C, verbalizer pi into mapping
// tokens V, and the prompt template with {sentence}/{label} slots. Classes,
// labels, and tokens are index-aligned; class order is the config's order and
// fixes iteration order everywhere downstream.
// ---------------------------------------------------------------------------

struct TaskConfig {
    std::string name;
    std::vector<std::string> classes;    // C
    std::vector<std::string> labels;     // Y, labels[i] belongs to classes[i]
    std::vector<std::string> map_tokens; // V, map_tokens[i] = pi(labels[i])
    std::string prompt_template;         // exactly one {sentence} and one {label} slot
    int context_window = 1024;
    std::optional<int> kmax_override;
    std::string notes;

    size_t num_classes() const { return classes.size(); }

    int label_index(const std::string& label) const {
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) return static_cast<int>(i);
        return -1;
    }

    int token_index(const std::string& token) const {
        for (size_t i = 0; i < map_tokens.size(); ++i)
            if (map_tokens[i] == token) return static_cast<int>(i);
        return -1;
    }

    int class_index(const std::string& cls) const {
        for (size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == cls) return static_cast<int>(i);
        return -1;
    }

    // pi: label -> mapping token
    const std::string& token_for_label(const std::string& label) const {
        int i = label_index(label);
        if (i < 0) throw_usage("label not in label space: \"" + label + "\"");
        return map_tokens[static_cast<size_t>(i)];
    }

    // pi^-1: mapping token -> label
    const std::string& label_for_token(const std::string& token) const {
        int i = token_index(token);
        if (i < 0) throw_usage("token not in mapping token space: \"" + token + "\"");
        return labels[static_cast<size_t>(i)];
    }

    const std::string& class_for_label(const std::string& label) const {
        int i = label_index(label);
        if (i < 0) throw_usage("label not in label space: \"" + label + "\"");
        return classes[static_cast<size_t>(i)];
    }
};

namespace detail {

inline size_t count_occurrences(const std::string& text, const std::string& needle) {
    if (needle.empty()) return 0;
    size_t count = 0;
    size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

} // namespace detail

inline void validate_task_config(const TaskConfig& cfg) {
    if (cfg.classes.empty()) throw_config("task config: empty class set");
    if (cfg.labels.size() != cfg.classes.size())
        throw_config("task config: label/class count mismatch (" + std::to_string(cfg.labels.size()) +
                     " labels vs " + std::to_string(cfg.classes.size()) + " classes)");
    if (cfg.map_tokens.size() != cfg.labels.size())
        throw_config("task config: verbalizer must map every label exactly once");
    for (size_t i = 0; i < cfg.classes.size(); ++i) {
        for (size_t j = i + 1; j < cfg.classes.size(); ++j) {
            if (cfg.classes[i] == cfg.classes[j])
                throw_config("task config: duplicate class \"" + cfg.classes[i] + "\"");
            if (cfg.labels[i] == cfg.labels[j])
                throw_config("task config: duplicate label \"" + cfg.labels[i] + "\"");
            if (cfg.map_tokens[i] == cfg.map_tokens[j])
                throw_config("task config: verbalizer not bijective, token \"" + cfg.map_tokens[i] +
                             "\" mapped from both \"" + cfg.labels[i] + "\" and \"" + cfg.labels[j] + "\"");
        }
        if (cfg.map_tokens[i].empty())
            throw_config("task config: empty verbalizer token for label \"" + cfg.labels[i] + "\"");
    }
    if (detail::count_occurrences(cfg.prompt_template, "{sentence}") != 1)
        throw_config("task config: template must contain exactly one {sentence} slot");
    if (detail::count_occurrences(cfg.prompt_template, "{label}") != 1)
        throw_config("task config: template must contain exactly one {label} slot");
    if (cfg.context_window <= 0) throw_config("task config: context_window must be positive");
    if (cfg.kmax_override && *cfg.kmax_override < 1)
        throw_config("task config: kmax_override must be >= 1");
}

inline TaskConfig load_task_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_config("cannot open task config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw_config("task config " + path + ": " + e.what());
    }
    TaskConfig cfg;
    try {
        cfg.name = j.value("name", std::string());
        cfg.classes = j.at("classes").get<std::vector<std::string>>();
        cfg.labels = j.at("labels").get<std::vector<std::string>>();
        cfg.prompt_template = j.at("template").get<std::string>();
        cfg.context_window = j.value("context_window", 1024);
        if (j.contains("kmax_override") && !j["kmax_override"].is_null())
            cfg.kmax_override = j["kmax_override"].get<int>();
        cfg.notes = j.value("notes", std::string());
        const auto& verb = j.at("verbalizer");
        cfg.map_tokens.resize(cfg.labels.size());
        if (verb.size() != cfg.labels.size())
            throw_config("task config " + path + ": verbalizer must map every label exactly once");
        for (size_t i = 0; i < cfg.labels.size(); ++i) {
            if (!verb.contains(cfg.labels[i]))
                throw_config("task config " + path + ": verbalizer missing label \"" + cfg.labels[i] + "\"");
            cfg.map_tokens[i] = verb.at(cfg.labels[i]).get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw_config("task config " + path + ": " + e.what());
    }
    if (cfg.name.empty()) cfg.name = path;
    validate_task_config(cfg);
    return cfg;
}

// ---------------------------------------------------------------------------
// Examples and datasets. A Dataset is immutable after construction; the class
// index partitions ids exactly and every class named by the config must be
// populated.
// ---------------------------------------------------------------------------

struct Example {
    std::string id;
    std::string sentence; // the instance x_i
    std::string label;    // y_i
};

enum class DatasetFormat { Jsonl, Csv };

class Dataset {
public:
    Dataset() = default;

    static Dataset from_examples(std::vector<Example> examples, const TaskConfig& cfg,
                                 const std::string& origin = "<memory>") {
        if (examples.empty()) throw_data(origin + ": empty dataset");
        Dataset ds;
        ds.examples_ = std::move(examples);
        for (size_t i = 0; i < ds.examples_.size(); ++i) {
            const Example& ex = ds.examples_[i];
            if (ex.sentence.empty())
                throw_data(origin + ": record " + ex.id + ": empty sentence");
            int li = cfg.label_index(ex.label);
            if (li < 0)
                throw_data(origin + ": record " + ex.id + ": unknown label \"" + ex.label + "\"");
            if (!ds.index_.emplace(ex.id, i).second)
                throw_data(origin + ": duplicate id \"" + ex.id + "\"");
            ds.class_index_[cfg.classes[static_cast<size_t>(li)]].push_back(ex.id);
        }
        for (const auto& cls : cfg.classes) {
            auto it = ds.class_index_.find(cls);
            if (it == ds.class_index_.end() || it->second.empty())
                throw_data(origin + ": class \"" + cls + "\" has no examples");
        }
        return ds;
    }

    const std::vector<Example>& examples() const { return examples_; }
    size_t size() const { return examples_.size(); }

    bool contains(const std::string& id) const { return index_.count(id) > 0; }

    const Example& by_id(const std::string& id) const {
        auto it = index_.find(id);
        if (it == index_.end()) throw_usage("unknown example id: \"" + id + "\"");
        return examples_[it->second];
    }

    // Ids of class `cls`, in record order.
    const std::vector<std::string>& class_ids(const std::string& cls) const {
        auto it = class_index_.find(cls);
        if (it == class_index_.end()) throw_usage("unknown class: \"" + cls + "\"");
        return it->second;
    }

    const std::map<std::string, std::vector<std::string>>& class_index() const { return class_index_; }

private:
    std::vector<Example> examples_;
    std::unordered_map<std::string, size_t> index_;
    std::map<std::string, std::vector<std::string>> class_index_;
};

namespace detail {

// Minimal RFC-4180 row parser: quoted fields, doubled-quote escapes.
inline std::vector<std::string> parse_csv_row(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

inline std::string json_id_to_string(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    return v.dump();
}

} // namespace detail

inline Dataset load_dataset(const std::string& path, DatasetFormat format, const TaskConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw_data("cannot open dataset: " + path);
    std::vector<Example> examples;
    std::string line;
    size_t lineno = 0;
    if (format == DatasetFormat::Jsonl) {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw_data(path + ": line " + std::to_string(lineno) + ": " + e.what());
            }
            Example ex;
            if (!j.contains("sentence"))
                throw_data(path + ": line " + std::to_string(lineno) + ": missing field \"sentence\"");
            if (!j.contains("label"))
                throw_data(path + ": line " + std::to_string(lineno) + ": missing field \"label\"");
            ex.sentence = j["sentence"].get<std::string>();
            ex.label = j["label"].get<std::string>();
            ex.id = j.contains("id") ? detail::json_id_to_string(j["id"]) : std::to_string(lineno);
            examples.push_back(std::move(ex));
        }
    } else {
        if (!std::getline(in, line)) throw_data(path + ": empty dataset");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto header = detail::parse_csv_row(line);
        int id_col = -1, sentence_col = -1, label_col = -1;
        for (size_t i = 0; i < header.size(); ++i) {
            if (header[i] == "id") id_col = static_cast<int>(i);
            else if (header[i] == "sentence") sentence_col = static_cast<int>(i);
            else if (header[i] == "label") label_col = static_cast<int>(i);
        }
        if (sentence_col < 0 || label_col < 0)
            throw_data(path + ": csv header must contain \"sentence\" and \"label\" columns");
        size_t record = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            ++record;
            auto row = detail::parse_csv_row(line);
            size_t need = static_cast<size_t>(std::max(sentence_col, label_col)) + 1;
            if (row.size() < need)
                throw_data(path + ": row " + std::to_string(record) + ": missing field");
            Example ex;
            ex.sentence = row[static_cast<size_t>(sentence_col)];
            ex.label = row[static_cast<size_t>(label_col)];
            ex.id = (id_col >= 0 && static_cast<size_t>(id_col) < row.size() && !row[static_cast<size_t>(id_col)].empty())
                        ? row[static_cast<size_t>(id_col)]
                        : std::to_string(record);
            examples.push_back(std::move(ex));
        }
    }
    if (examples.empty()) throw_data(path + ": empty dataset");
    return Dataset::from_examples(std::move(examples), cfg, path);
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw_data("cannot write dataset: " + path);
    for (const auto& ex : ds.examples()) {
        nlohmann::json j{{"id", ex.id}, {"sentence", ex.sentence}, {"label", ex.label}};
        out << j.dump() << "\n";
    }
}

// ---------------------------------------------------------------------------
// Cross-validation of a dataset against a (possibly different) task config.
// Never throws; violations are reported.
// ---------------------------------------------------------------------------

struct ValidationReport {
    std::vector<std::string> violations;
    std::map<std::string, size_t> per_class_counts;

    bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_task(const Dataset& ds, const TaskConfig& cfg) {
    ValidationReport report;
    for (const auto& cls : cfg.classes) report.per_class_counts[cls] = 0;
    for (const auto& ex : ds.examples()) {
        int li = cfg.label_index(ex.label);
        if (li < 0) {
            report.violations.push_back("record " + ex.id + ": label \"" + ex.label +
                                        "\" not in label space");
        } else {
            report.per_class_counts[cfg.classes[static_cast<size_t>(li)]]++;
        }
    }
    for (const auto& [cls, count] : report.per_class_counts) {
        if (count == 0) report.violations.push_back("class \"" + cls + "\" has no examples");
    }
    return report;
}

} // namespace d2ctl

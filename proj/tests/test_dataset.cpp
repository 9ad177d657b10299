#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "d2ctl/dataset.hpp"
#include "helpers.hpp"

using namespace d2ctl;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

TaskConfig two_class() {
    return testkit::toy_task_config();
}

} // namespace

TEST_CASE("jsonl loading builds the class index") {
    auto path = write_temp("d2ctl_ds1.jsonl",
                           R"({"sentence": "zubwonder lamp", "label": "positive"})"
                           "\n"
                           R"({"sentence": "zubgloom stone", "label": "negative"})"
                           "\n"
                           R"({"sentence": "zubwonder river", "label": "positive"})"
                           "\n");
    Dataset ds = load_dataset(path, DatasetFormat::Jsonl, two_class());
    REQUIRE(ds.size() == 3);
    CHECK(ds.class_ids("positive").size() == 2);
    CHECK(ds.class_ids("negative").size() == 1);
    // auto ids come from line numbers
    CHECK(ds.by_id("1").sentence == "zubwonder lamp");
    CHECK(ds.by_id("3").label == "positive");
}

TEST_CASE("loading errors name the offending record") {
    auto unknown = write_temp("d2ctl_ds2.jsonl",
                              R"({"sentence": "a", "label": "positive"})"
                              "\n"
                              R"({"sentence": "b", "label": "neutral"})"
                              "\n"
                              R"({"sentence": "c", "label": "negative"})"
                              "\n");
    REQUIRE_THROWS_MATCHES(load_dataset(unknown, DatasetFormat::Jsonl, two_class()), D2Error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("unknown label \"neutral\"")));

    auto empty = write_temp("d2ctl_ds3.jsonl", "");
    REQUIRE_THROWS_MATCHES(load_dataset(empty, DatasetFormat::Jsonl, two_class()), D2Error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("empty dataset")));

    auto missing = write_temp("d2ctl_ds4.jsonl", R"({"label": "positive"})"
                                                 "\n");
    REQUIRE_THROWS_MATCHES(load_dataset(missing, DatasetFormat::Jsonl, two_class()), D2Error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("missing field \"sentence\"")));

    auto dup = write_temp("d2ctl_ds5.jsonl",
                          R"({"id": "x", "sentence": "a", "label": "positive"})"
                          "\n"
                          R"({"id": "x", "sentence": "b", "label": "negative"})"
                          "\n");
    REQUIRE_THROWS_MATCHES(load_dataset(dup, DatasetFormat::Jsonl, two_class()), D2Error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("duplicate id \"x\"")));

    auto one_class = write_temp("d2ctl_ds6.jsonl", R"({"sentence": "a", "label": "positive"})"
                                                   "\n");
    REQUIRE_THROWS_MATCHES(load_dataset(one_class, DatasetFormat::Jsonl, two_class()), D2Error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("class \"negative\" has no examples")));
}

TEST_CASE("csv loading handles quoting and optional ids") {
    auto path = write_temp("d2ctl_ds7.csv",
                           "id,sentence,label\n"
                           "a1,\"zubwonder, quoted \"\"text\"\"\",positive\n"
                           ",zubgloom plain,negative\n");
    Dataset ds = load_dataset(path, DatasetFormat::Csv, two_class());
    REQUIRE(ds.size() == 2);
    CHECK(ds.by_id("a1").sentence == "zubwonder, quoted \"text\"");
    CHECK(ds.by_id("2").label == "negative"); // record ordinal fallback
}

TEST_CASE("class index partitions the id set") {
    TaskConfig cfg = two_class();
    Dataset ds = testkit::toy_dataset(cfg, 20, 11);
    size_t total = 0;
    std::set<std::string> seen;
    for (const auto& [cls, ids] : ds.class_index()) {
        total += ids.size();
        for (const auto& id : ids) CHECK(seen.insert(id).second);
    }
    CHECK(total == ds.size());
}

TEST_CASE("dataset round-trips through serialization") {
    TaskConfig cfg = two_class();
    Dataset ds = testkit::toy_dataset(cfg, 12, 3);
    auto path = (std::filesystem::temp_directory_path() / "d2ctl_roundtrip.jsonl").string();
    save_dataset(ds, path);
    Dataset back = load_dataset(path, DatasetFormat::Jsonl, cfg);
    REQUIRE(back.size() == ds.size());
    for (size_t i = 0; i < ds.size(); ++i) {
        CHECK(back.examples()[i].id == ds.examples()[i].id);
        CHECK(back.examples()[i].sentence == ds.examples()[i].sentence);
        CHECK(back.examples()[i].label == ds.examples()[i].label);
    }
    CHECK(back.class_index() == ds.class_index());
}

TEST_CASE("task configs load from the bundled files") {
    TaskConfig sst2 = load_task_config(std::string(D2CTL_SOURCE_DIR) + "/tasks/sst2.json");
    CHECK(sst2.classes == std::vector<std::string>{"positive", "negative"});
    CHECK(sst2.token_for_label("positive") == "positive");
    CHECK(sst2.prompt_template == "Review: {sentence}\nSentiment: {label}");

    TaskConfig rte = load_task_config(std::string(D2CTL_SOURCE_DIR) + "/tasks/rte.json");
    CHECK(rte.token_for_label("entailment") == "true");
    CHECK(rte.token_for_label("not_entailment") == "false");
    CHECK(rte.label_for_token("false") == "not_entailment");

    TaskConfig cb = load_task_config(std::string(D2CTL_SOURCE_DIR) + "/tasks/cb.json");
    REQUIRE(cb.kmax_override.has_value());
    CHECK(*cb.kmax_override == 4);
    CHECK(cb.num_classes() == 3);
}

TEST_CASE("all ten bundled task configs validate") {
    for (const char* name : {"sst2", "sst5", "dbpedia", "mr", "cr", "mpqa", "subj", "agnews", "rte", "cb"}) {
        TaskConfig cfg = load_task_config(std::string(D2CTL_SOURCE_DIR) + "/tasks/" + name + ".json");
        CHECK(cfg.num_classes() >= 2);
        // pi round-trips both ways
        for (const auto& label : cfg.labels) CHECK(cfg.label_for_token(cfg.token_for_label(label)) == label);
        for (const auto& token : cfg.map_tokens) CHECK(cfg.token_for_label(cfg.label_for_token(token)) == token);
    }
}

TEST_CASE("config validation rejects broken verbalizers and templates") {
    auto non_bijective = write_temp("d2ctl_cfg1.json", R"({
        "classes": ["a", "b"], "labels": ["a", "b"],
        "verbalizer": {"a": "same", "b": "same"},
        "template": "X: {sentence}\nY: {label}"
    })");
    REQUIRE_THROWS_MATCHES(load_task_config(non_bijective), D2Error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("not bijective")));

    auto count_mismatch = write_temp("d2ctl_cfg2.json", R"({
        "classes": ["a", "b", "c"], "labels": ["a", "b"],
        "verbalizer": {"a": "x", "b": "y"},
        "template": "X: {sentence}\nY: {label}"
    })");
    REQUIRE_THROWS_MATCHES(load_task_config(count_mismatch), D2Error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("count mismatch")));

    auto bad_template = write_temp("d2ctl_cfg3.json", R"({
        "classes": ["a", "b"], "labels": ["a", "b"],
        "verbalizer": {"a": "x", "b": "y"},
        "template": "X: {sentence}"
    })");
    REQUIRE_THROWS_MATCHES(load_task_config(bad_template), D2Error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("{label}")));
}

TEST_CASE("validate_task reports instead of throwing") {
    TaskConfig cfg = two_class();
    Dataset ds = testkit::toy_dataset(cfg, 5, 9);
    ValidationReport ok = validate_task(ds, cfg);
    CHECK(ok.ok());
    CHECK(ok.per_class_counts.at("positive") == 5);

    // validate against a config with an extra class: zero-count violation
    TaskConfig three = testkit::toy_task_config(400, 3);
    ValidationReport missing_class = validate_task(ds, three);
    CHECK_FALSE(missing_class.ok());

    // validate against a config that lacks one of the dataset's labels
    TaskConfig narrow = two_class();
    narrow.classes = {"positive"};
    narrow.labels = {"positive"};
    narrow.map_tokens = {"positive"};
    ValidationReport unknown = validate_task(ds, narrow);
    CHECK_FALSE(unknown.ok());
}

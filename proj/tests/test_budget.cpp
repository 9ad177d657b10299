#include <catch2/catch_amalgamated.hpp>

#include "d2ctl/budget.hpp"
#include "d2ctl/tokenizer.hpp"
#include "helpers.hpp"

using namespace d2ctl;

TEST_CASE("whitespace token counting") {
    TokenizerSpec ws = TokenizerSpec::whitespace();
    CHECK(count_tokens("", ws) == 0);
    CHECK(count_tokens("a b c", ws) == 3);
    CHECK(count_tokens("  a\n\tb  ", ws) == 2);
}

TEST_CASE("fixed table counting with default costs") {
    TokenizerSpec tab = TokenizerSpec::fixed_table({{"demonstration", 3}, {"a", 1}}, 2);
    CHECK(count_tokens("a demonstration word", tab) == 1 + 3 + 2);
    CHECK(count_tokens("", tab) == 0);
}

TEST_CASE("token counts are monotone under concatenation") {
    TokenizerSpec ws = TokenizerSpec::whitespace();
    SeededRng rng(41);
    const auto& words = testkit::filler_words();
    for (int trial = 0; trial < 200; ++trial) {
        std::string a, b;
        for (size_t i = rng.below(8); i-- > 0;) a += words[rng.below(words.size())] + " ";
        for (size_t i = rng.below(8); i-- > 0;) b += words[rng.below(words.size())] + " ";
        int ca = count_tokens(a, ws), cb = count_tokens(b, ws), cab = count_tokens(a + b, ws);
        CHECK(cab >= std::max(ca, cb));
    }
}

TEST_CASE("remote counting delegates to the backend") {
    SyntheticBackend backend(SyntheticParams{});
    TokenizerSpec remote = TokenizerSpec::remote_count(backend);
    CHECK(count_tokens("one two three", remote) == 3);
    TokenizerSpec detached;
    detached.kind = TokenizerKind::RemoteCount;
    CHECK_THROWS_AS(count_tokens("x", detached), D2Error);
}

TEST_CASE("demo_stats averages rendered demonstrations") {
    TaskConfig cfg = testkit::toy_task_config();
    // two sentences: rendered demos have 3 + n tokens under this template
    std::vector<Example> examples = {
        {"1", "zubwonder one two three four five six seven", "positive"}, // demo: 11 tokens
        {"2", "zubgloom one", "negative"},                                 // demo: 5 tokens
    };
    Dataset ds = Dataset::from_examples(examples, cfg);
    DemoStats stats = demo_stats(ds, cfg, TokenizerSpec::whitespace());
    CHECK(stats.avg_demo_len == Catch::Approx(8.0)); // (11 + 5) / 2
    CHECK(stats.max_test_len == 10);                 // longest test form: 11 - 1 (label)
}

TEST_CASE("single-example dataset: average equals that example") {
    TaskConfig cfg = testkit::toy_task_config();
    cfg.classes = {"positive"};
    cfg.labels = {"positive"};
    cfg.map_tokens = {"positive"};
    Dataset ds = Dataset::from_examples({{"1", "zubwonder x y", "positive"}}, cfg);
    DemoStats stats = demo_stats(ds, cfg, TokenizerSpec::whitespace());
    CHECK(stats.avg_demo_len == Catch::Approx(6.0));
}

TEST_CASE("compute_kmax reproduces the published per-dataset budgets") {
    // (window, max_test, avg_demo, classes) -> (upper_bound, k_max)
    ShotPlan sst2 = compute_kmax(1024, 55, 19.1, 2);
    CHECK(sst2.upper_bound == 25);
    CHECK(sst2.k_max == 16);
    CHECK(sst2.feasible_set == std::vector<int>{1, 2, 4, 8, 16});

    ShotPlan mpqa = compute_kmax(1024, 19, 10.4, 2);
    CHECK(mpqa.upper_bound == 48);
    CHECK(mpqa.k_max == 32);

    ShotPlan cb = compute_kmax(1024, 278, 90.8, 3, 4);
    CHECK(cb.k_max == 4);
    CHECK(cb.override_applied);
    CHECK(cb.feasible_set == std::vector<int>{1, 2, 4});

    ShotPlan dbpedia = compute_kmax(2048, 161, 71.6, 14);
    CHECK(dbpedia.upper_bound == 1);
    CHECK(dbpedia.k_max == 1);
    CHECK(dbpedia.feasible_set == std::vector<int>{1});
}

TEST_CASE("infeasible when the test input exceeds the window") {
    REQUIRE_THROWS_MATCHES(compute_kmax(128, 200, 10.0, 2), D2Error,
                           Catch::Matchers::MessageMatches(
                               Catch::Matchers::ContainsSubstring("infeasible task")));
    CHECK_THROWS_AS(compute_kmax(1024, 55, 0.0, 2), D2Error);
    CHECK_THROWS_AS(compute_kmax(1024, 55, 10.0, 1), D2Error);
}

TEST_CASE("shot plan properties over randomized inputs") {
    SeededRng rng(1234);
    for (int trial = 0; trial < 500; ++trial) {
        int window = 256 + static_cast<int>(rng.below(4096));
        int max_test = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(window - 1)));
        double avg = 1.0 + rng.unit() * 99.0;
        int classes = 2 + static_cast<int>(rng.below(13));
        ShotPlan plan = compute_kmax(window, max_test, avg, classes);

        // k_max is a power of two within (upper/2, upper]
        CHECK((plan.k_max & (plan.k_max - 1)) == 0);
        CHECK(plan.k_max <= plan.upper_bound);
        CHECK(plan.upper_bound < 2L * plan.k_max);

        // feasible set is the doubling chain ending at k_max
        REQUIRE_FALSE(plan.feasible_set.empty());
        CHECK(plan.feasible_set.front() == 1);
        CHECK(plan.feasible_set.back() == plan.k_max);
        for (size_t i = 1; i < plan.feasible_set.size(); ++i)
            CHECK(plan.feasible_set[i] == 2 * plan.feasible_set[i - 1]);

        // widening the window never shrinks k_max
        ShotPlan wider = compute_kmax(2 * window, max_test, avg, classes);
        CHECK(wider.k_max >= plan.k_max);
    }
}

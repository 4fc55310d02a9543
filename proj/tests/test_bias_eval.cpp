#include <doctest.h>

#include <cmath>

#include "debias/bias_eval.hpp"
#include "debias/errors.hpp"
#include "debias/stub_model.hpp"
#include "eval_properties.hpp"
#include "helpers.hpp"

using namespace debias;
using namespace debias::test;

namespace {

SequenceScore with_mean(double mean) {
    SequenceScore s;
    s.mean = mean;
    return s;
}

}  // namespace

TEST_CASE("preference compares length-normalized scores with tie credit") {
    PreferenceRule rule;
    CHECK(preference(with_mean(-2.0), with_mean(-3.0), rule) == 1.0);
    CHECK(preference(with_mean(-3.0), with_mean(-2.0), rule) == 0.0);
    CHECK(preference(with_mean(-2.5), with_mean(-2.5), rule) == 0.5);
    PreferenceRule harsh{0.0};
    CHECK(preference(with_mean(-2.5), with_mean(-2.5), harsh) == 0.0);
}

TEST_CASE("icat reproduces the reference base-model rows") {
    // (ss, lms) -> icat, reference values carry two decimals
    CHECK(std::abs(icat(62.74, 92.21) - 68.71) <= 0.02);
    CHECK(std::abs(icat(64.26, 92.49) - 66.12) <= 0.02);
    CHECK(std::abs(icat(65.19, 92.26) - 64.23) <= 0.02);
    CHECK(std::abs(icat(67.69, 94.08) - 60.8) <= 0.02);

    for (double lms : {0.0, 31.4, 100.0}) CHECK(icat(50.0, lms) == doctest::Approx(lms));
    CHECK(icat(100.0, 95.0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(icat(-0.5, 50.0), ConfigError);
    CHECK_THROWS_AS(icat(50.0, 100.5), ConfigError);
}

TEST_CASE("constant scorer lands exactly on 50/50/50") {
    std::vector<StereoInstance> instances = {
        make_instance("g0", "gender", "ctx", "s0", "a0", "u0"),
        make_instance("r0", "race", "ctx", "s1", "a1", "u1"),
        make_instance("r1", "race", "ctx", "s2", "a2", "u2"),
    };
    MeanScoreFn constant = [](const std::string&, const std::string&) { return -1.0; };
    const EvalReport report = stereoset_eval(constant, instances);
    CHECK(report.overall.ss == doctest::Approx(50.0));
    CHECK(report.overall.lms == doctest::Approx(50.0));
    CHECK(report.overall.icat == doctest::Approx(50.0));
    CHECK(report.per_type.at("race").n == 2);
    CHECK(report.per_type.count("religion") == 0);  // absent types are omitted
}

TEST_CASE("two hand-built instances against the brute-force comparison oracle") {
    // stub rows: after "x" the stereotype wins, after "y" the anti wins; both
    // meaningful candidates always beat the unrelated one
    Vocabulary vocab({"x", "y", "s", "a", "u"});
    const int v = vocab.size();
    std::vector<std::vector<double>> table(static_cast<size_t>(v),
                                           std::vector<double>(static_cast<size_t>(v), 1.0 / v));
    auto row = [&](const char* word) -> std::vector<double>& {
        return table[static_cast<size_t>(vocab.id_of(word))];
    };
    auto set_row = [&](const char* word, double s, double a, double u) {
        auto& r = row(word);
        const double rest = (1.0 - s - a - u) / (v - 3);
        for (auto& p : r) p = rest;
        r[static_cast<size_t>(vocab.id_of("s"))] = s;
        r[static_cast<size_t>(vocab.id_of("a"))] = a;
        r[static_cast<size_t>(vocab.id_of("u"))] = u;
    };
    set_row("x", 0.5, 0.3, 0.1);
    set_row("y", 0.3, 0.5, 0.1);
    auto stub = BigramStubModel::from_conditional_table("hand", vocab, table);

    std::vector<StereoInstance> instances = {
        make_instance("i0", "gender", "x", "s", "a", "u"),
        make_instance("i1", "gender", "y", "s", "a", "u"),
    };

    // oracle: enumerate all 6 pairwise comparisons directly from the table
    auto mean_lp = [&](const char* ctx, const char* cand) {
        return std::log(row(ctx)[static_cast<size_t>(vocab.id_of(cand))]);
    };
    double ss_credit = 0.0, lms_credit = 0.0;
    for (const char* ctx : {"x", "y"}) {
        ss_credit += mean_lp(ctx, "s") > mean_lp(ctx, "a")   ? 1.0
                     : mean_lp(ctx, "s") < mean_lp(ctx, "a") ? 0.0
                                                             : 0.5;
        lms_credit += mean_lp(ctx, "s") > mean_lp(ctx, "u") ? 1.0 : 0.0;
        lms_credit += mean_lp(ctx, "a") > mean_lp(ctx, "u") ? 1.0 : 0.0;
    }
    CHECK(ss_credit == doctest::Approx(1.0));   // stereo preferred in 1 of 2
    CHECK(lms_credit == doctest::Approx(4.0));  // meaningful beats unrelated everywhere

    const EvalReport report = stereoset_eval(stub, instances);
    CHECK(report.overall.ss == doctest::Approx(100.0 * ss_credit / 2));
    CHECK(report.overall.lms == doctest::Approx(100.0 * lms_credit / 4));
    CHECK(report.overall.ss == doctest::Approx(50.0));
    CHECK(report.overall.lms == doctest::Approx(100.0));
    CHECK(report.overall.icat == doctest::Approx(100.0));
}

TEST_CASE("an always-stereotypical scorer maxes SS and zeroes ICAT") {
    std::map<std::string, double> scores;
    std::vector<StereoInstance> instances;
    for (int i = 0; i < 5; ++i) {
        auto inst = make_instance("i" + std::to_string(i), "religion", "c",
                                  "s" + std::to_string(i), "a" + std::to_string(i),
                                  "u" + std::to_string(i));
        scores[inst.stereotype] = -1.0;
        scores[inst.anti_stereotype] = -2.0;
        scores[inst.unrelated] = -3.0;
        instances.push_back(std::move(inst));
    }
    MeanScoreFn fn = [&](const std::string& text, const std::string&) { return scores.at(text); };
    const EvalReport report = stereoset_eval(fn, instances);
    CHECK(report.overall.ss == doctest::Approx(100.0));
    CHECK(report.overall.lms == doctest::Approx(100.0));
    CHECK(report.overall.icat == doctest::Approx(0.0));
    CHECK_THROWS_AS(stereoset_eval(fn, {}), ConfigError);
}

TEST_CASE("crows-pairs evaluation counts per-type preferences") {
    std::map<std::string, double> scores;
    std::vector<ContrastPair> pairs;
    auto add = [&](const std::string& id, const BiasType& t, double more, double less) {
        ContrastPair p{id, t, "more-" + id, "less-" + id};
        scores[p.more_stereotypical] = more;
        scores[p.less_stereotypical] = less;
        pairs.push_back(std::move(p));
    };
    add("0", "gender", -1.0, -2.0);
    add("1", "gender", -2.0, -1.0);
    add("2", "gender", -1.5, -2.5);
    MeanScoreFn fn = [&](const std::string& text, const std::string&) { return scores.at(text); };

    const CrowsReport report = crows_pairs_eval(fn, pairs);
    CHECK(report.ss.at("gender") == doctest::Approx(100.0 * 2.0 / 3.0).epsilon(1e-9));
    CHECK(report.ss.at("gender") == doctest::Approx(66.67).epsilon(1e-3));
    CHECK(report.n.at("gender") == 3);

    // degenerate stubs
    MeanScoreFn always_more = [&](const std::string& text, const std::string&) {
        return text.starts_with("more") ? -1.0 : -5.0;
    };
    CHECK(crows_pairs_eval(always_more, pairs).ss.at("gender") == doctest::Approx(100.0));
    MeanScoreFn equal = [](const std::string&, const std::string&) { return -1.0; };
    CHECK(crows_pairs_eval(equal, pairs).ss.at("gender") == doctest::Approx(50.0));
}

TEST_CASE("metric invariants hold on randomized synthetic reports") {
    CHECK_NOTHROW(run_eval_property_suite(120, 909));
}

TEST_CASE("report serialization carries both views") {
    std::vector<StereoInstance> instances = {
        make_instance("g0", "gender", "ctx", "s0", "a0", "u0")};
    MeanScoreFn constant = [](const std::string&, const std::string&) { return -1.0; };
    const EvalReport report = stereoset_eval(constant, instances, PreferenceRule{}, 7);
    const auto j = report.to_json();
    CHECK(j.at("step").get<int>() == 7);
    CHECK(j.at("per_type").contains("gender"));
    CHECK(j.at("overall").at("ss").get<double>() == doctest::Approx(50.0));
    const std::string table = report.to_table();
    CHECK(table.find("gender") != std::string::npos);
    CHECK(table.find("overall") != std::string::npos);
}

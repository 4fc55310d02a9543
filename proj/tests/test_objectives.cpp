#include <doctest.h>

#include <cmath>
#include <random>

#include "debias/errors.hpp"
#include "debias/objectives.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace debias;
using namespace debias::test;

namespace {

SequenceScore score_with_sum(double sum, int tokens = 1) {
    std::vector<double> lps(static_cast<size_t>(tokens), sum / tokens);
    return SequenceScore::from_logprobs(std::move(lps));
}

VocabDistribution dist_from_probs(const std::vector<double>& probs) {
    VocabDistribution d;
    for (double p : probs) d.logprobs.push_back(std::log(p));
    return d;
}

}  // namespace

TEST_CASE("npo forget loss matches the closed form on pinned cases") {
    const double beta = 0.1;
    // theta == ref: sigma(0) = 1/2
    CHECK(npo_forget_loss({score_with_sum(-5.0)}, {score_with_sum(-5.0)}, beta) ==
          doctest::Approx(-20.0 * std::log(0.5)).epsilon(1e-9));
    CHECK(npo_forget_loss({score_with_sum(-5.0)}, {score_with_sum(-5.0)}, beta) ==
          doctest::Approx(13.8629).epsilon(1e-4));
    // theta below ref: ratio favors forgetting already happened, loss smaller
    CHECK(npo_forget_loss({score_with_sum(-10.0)}, {score_with_sum(-8.0)}, beta) ==
          doctest::Approx(11.963).epsilon(1e-4));
    // theta above ref: loss larger, pressure to push theta down
    CHECK(npo_forget_loss({score_with_sum(-8.0)}, {score_with_sum(-10.0)}, beta) ==
          doctest::Approx(15.963).epsilon(1e-4));
}

TEST_CASE("npo forget loss matches the scalar oracle on randomized batches") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> sum_dist(-40.0, -0.5);
    std::uniform_real_distribution<double> beta_dist(0.02, 2.0);
    std::uniform_int_distribution<int> n_dist(1, 16);
    for (int it = 0; it < 150; ++it) {
        const int n = n_dist(rng);
        const double beta = beta_dist(rng);
        std::vector<SequenceScore> theta, ref;
        std::vector<double> ts, rs;
        for (int i = 0; i < n; ++i) {
            ts.push_back(sum_dist(rng));
            rs.push_back(sum_dist(rng));
            theta.push_back(score_with_sum(ts.back(), 1 + it % 4));
            ref.push_back(score_with_sum(rs.back(), 1 + it % 4));
        }
        const double got = npo_forget_loss(theta, ref, beta);
        const double want = npo_oracle(ts, rs, beta);
        CHECK_MESSAGE(close_rel(got, want, 1e-6), got, " vs oracle ", want);
    }
}

TEST_CASE("npo forget loss is bounded and monotone in the log-ratio") {
    const double beta = 0.25;
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> delta(-8.0, 8.0);
    const double m = 8.0;
    const double ceiling = (2.0 / beta) * std::log1p(std::exp(beta * m));
    double prev = -1.0;
    for (double d = -m; d <= m; d += 0.37) {
        const double loss = npo_forget_loss({score_with_sum(-10.0 + d)}, {score_with_sum(-10.0)}, beta);
        CHECK(loss < ceiling);
        CHECK(loss > prev);  // strictly increasing in (sum_theta - sum_ref)
        prev = loss;
    }
    for (int it = 0; it < 50; ++it) {
        std::vector<SequenceScore> theta, ref;
        for (int i = 0; i < 6; ++i) {
            const double r = -20.0;
            theta.push_back(score_with_sum(r + delta(rng)));
            ref.push_back(score_with_sum(r));
        }
        CHECK(npo_forget_loss(theta, ref, beta) < ceiling);
    }
}

TEST_CASE("npo grad matches finite differences of the closed form") {
    const double beta = 0.1;
    std::vector<double> ts = {-9.5, -3.0, -14.0};
    std::vector<double> rs = {-10.0, -3.5, -12.0};
    auto scores = [](const std::vector<double>& sums) {
        std::vector<SequenceScore> out;
        for (double s : sums) out.push_back(score_with_sum(s));
        return out;
    };
    const auto grad = npo_forget_grad(scores(ts), scores(rs), beta);
    const double h = 1e-6;
    for (size_t i = 0; i < ts.size(); ++i) {
        auto up = ts, dn = ts;
        up[i] += h;
        dn[i] -= h;
        const double fd =
            (npo_oracle(up, rs, beta) - npo_oracle(dn, rs, beta)) / (2.0 * h);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("npo rejects misaligned batches") {
    CHECK_THROWS_AS(npo_forget_loss({score_with_sum(-1)}, {}, 0.1), ConfigError);
    std::vector<SequenceScore> a = {SequenceScore::from_logprobs({-1.0, -1.0})};
    std::vector<SequenceScore> b = {SequenceScore::from_logprobs({-1.0})};
    CHECK_THROWS_AS(npo_forget_loss(a, b, 0.1), ConfigError);
}

TEST_CASE("retention loss pinned values") {
    // certain model
    CHECK(retention_loss({SequenceScore::from_logprobs({0.0, 0.0})}) == doctest::Approx(0.0));
    // uniform over vocab V -> ln V per token
    const int v = 7;
    CHECK(retention_loss({SequenceScore::from_logprobs(
              std::vector<double>(3, -std::log(static_cast<double>(v))))}) ==
          doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-12));
    // tokens with probabilities 0.8 and 0.5
    const double got = retention_loss(
        {SequenceScore::from_logprobs({std::log(0.8), std::log(0.5)})});
    CHECK(got == doctest::Approx(0.45815).epsilon(1e-4));
    CHECK(got == doctest::Approx(ce_oracle({{0.8, 0.5}})).epsilon(1e-9));
    CHECK_THROWS_AS(retention_loss({}), ConfigError);
}

TEST_CASE("retention loss matches the chain-rule oracle on randomized batches") {
    std::mt19937_64 rng(202);
    std::uniform_real_distribution<double> p_dist(0.01, 0.999);
    std::uniform_int_distribution<int> n_dist(1, 10);
    for (int it = 0; it < 120; ++it) {
        std::vector<std::vector<double>> probs;
        std::vector<SequenceScore> scores;
        const int n = n_dist(rng);
        for (int i = 0; i < n; ++i) {
            std::vector<double> seq_probs;
            std::vector<double> lps;
            const int toks = 1 + n_dist(rng) % 5;
            for (int t = 0; t < toks; ++t) {
                seq_probs.push_back(p_dist(rng));
                lps.push_back(std::log(seq_probs.back()));
            }
            probs.push_back(std::move(seq_probs));
            scores.push_back(SequenceScore::from_logprobs(std::move(lps)));
        }
        CHECK(close_rel(retention_loss(scores), ce_oracle(probs), 1e-6));
    }
}

TEST_CASE("kl loss pinned values and positivity") {
    auto d1 = dist_from_probs({0.9, 0.1});
    auto d2 = dist_from_probs({0.5, 0.5});
    CHECK(kl_unrelated_loss({{d1}}, {{d1}}) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(kl_unrelated_loss({{d1}}, {{d2}}) == doctest::Approx(0.36807).epsilon(1e-4));

    std::mt19937_64 rng(303);
    for (int it = 0; it < 200; ++it) {
        const int v = 2 + static_cast<int>(rng() % 12);
        auto p = random_distribution(rng, v);
        auto q = random_distribution(rng, v);
        const double kl = kl_unrelated_loss({{dist_from_probs(p)}}, {{dist_from_probs(q)}});
        CHECK(kl >= -1e-12);  // Gibbs
        CHECK(close_rel(kl, kl_oracle({p}, {q}, kKlRefFloor), 1e-6));
    }
}

TEST_CASE("kl loss pools positions across the batch and flags clamped refs") {
    std::mt19937_64 rng(404);
    std::vector<std::vector<VocabDistribution>> theta(2), ref(2);
    std::vector<std::vector<double>> t_rows, r_rows;
    for (int s = 0; s < 2; ++s) {
        for (int pos = 0; pos < 3; ++pos) {
            auto p = random_distribution(rng, 6);
            auto q = random_distribution(rng, 6);
            theta[static_cast<size_t>(s)].push_back(dist_from_probs(p));
            ref[static_cast<size_t>(s)].push_back(dist_from_probs(q));
            t_rows.push_back(p);
            r_rows.push_back(q);
        }
    }
    CHECK(close_rel(kl_unrelated_loss(theta, ref), kl_oracle(t_rows, r_rows, kKlRefFloor), 1e-9));

    // a reference prob below the floor is clamped and reported
    VocabDistribution tiny_ref;
    tiny_ref.logprobs = {std::log(1.0 - 1e-15), std::log(1e-15)};
    KlDiagnostics diag;
    kl_unrelated_loss({{dist_from_probs({0.5, 0.5})}}, {{tiny_ref}}, &diag);
    CHECK(diag.clamped_entries == 1);
}

TEST_CASE("total loss combines linearly with the configured weights") {
    LossWeights w;  // paper defaults 0.4 / 0.4 / 0.2
    const LossBreakdown b = total_loss(10.0, 1.0, 0.5, w);
    CHECK(b.total == doctest::Approx(4.5).epsilon(1e-12));
    CHECK(b.forget == 10.0);
    CHECK(b.retention == 1.0);
    CHECK(b.kl == 0.5);

    LossWeights forget_only;
    forget_only.alpha1 = 1.0;
    forget_only.alpha2 = 0.0;
    forget_only.alpha3 = 0.0;
    CHECK(total_loss(3.25, 9.0, 9.0, forget_only).total == doctest::Approx(3.25));
    CHECK(total_loss(0.0, 0.0, 0.0, w).total == doctest::Approx(0.0));

    CHECK_THROWS_AS(total_loss(std::nan(""), 0.0, 0.0, w), ConfigError);
    CHECK_THROWS_AS(total_loss(0.0, std::numeric_limits<double>::infinity(), 0.0, w), ConfigError);

    // linearity in each component
    std::mt19937_64 rng(505);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int it = 0; it < 50; ++it) {
        const double f = u(rng), r = u(rng), k = u(rng), da = u(rng);
        const double base = total_loss(f, r, k, w).total;
        CHECK(total_loss(f + da, r, k, w).total ==
              doctest::Approx(base + w.alpha1 * da).epsilon(1e-9));
        CHECK(total_loss(f, r + da, k, w).total ==
              doctest::Approx(base + w.alpha2 * da).epsilon(1e-9));
        CHECK(total_loss(f, r, k + da, w).total ==
              doctest::Approx(base + w.alpha3 * da).epsilon(1e-9));
    }
}

TEST_CASE("loss weights validate") {
    LossWeights w;
    w.alpha1 = w.alpha2 = w.alpha3 = 0.0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    w = LossWeights{};
    w.beta = 0.0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
}

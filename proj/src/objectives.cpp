#include "debias/objectives.hpp"

#include <cmath>

#include "debias/errors.hpp"

namespace debias {

namespace {

// ln sigmoid(x), stable for large |x|.
double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check_aligned(const std::vector<SequenceScore>& a, const std::vector<SequenceScore>& b) {
    if (a.size() != b.size() || a.empty())
        throw ConfigError("forget batch misaligned: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].token_logprobs.size() != b[i].token_logprobs.size())
            throw ConfigError("forget batch sequence " + std::to_string(i) +
                              " scored over different target regions");
    }
}

}  // namespace

void LossWeights::validate() const {
    if (alpha1 < 0 || alpha2 < 0 || alpha3 < 0 || alpha1 + alpha2 + alpha3 <= 0.0)
        throw ConfigError("loss weights must be non-negative with a positive sum");
    if (beta <= 0.0) throw ConfigError("beta must be positive");
}

double npo_forget_loss(const std::vector<SequenceScore>& theta_scores,
                       const std::vector<SequenceScore>& ref_scores, double beta) {
    check_aligned(theta_scores, ref_scores);
    if (beta <= 0.0) throw ConfigError("beta must be positive");
    double acc = 0.0;
    for (size_t i = 0; i < theta_scores.size(); ++i) {
        const double z = -beta * (theta_scores[i].sum - ref_scores[i].sum);
        acc += log_sigmoid(z);
    }
    return -(2.0 / beta) * acc / static_cast<double>(theta_scores.size());
}

std::vector<double> npo_forget_grad(const std::vector<SequenceScore>& theta_scores,
                                    const std::vector<SequenceScore>& ref_scores, double beta) {
    check_aligned(theta_scores, ref_scores);
    const double n = static_cast<double>(theta_scores.size());
    std::vector<double> out(theta_scores.size());
    for (size_t i = 0; i < theta_scores.size(); ++i) {
        const double z = -beta * (theta_scores[i].sum - ref_scores[i].sum);
        out[i] = (2.0 / n) * (1.0 - sigmoid(z));
    }
    return out;
}

double retention_loss(const std::vector<SequenceScore>& theta_scores) {
    if (theta_scores.empty()) throw ConfigError("retention loss over empty batch");
    double acc = 0.0;
    for (const auto& s : theta_scores) acc += -s.mean;
    return acc / static_cast<double>(theta_scores.size());
}

std::vector<double> retention_grad(const std::vector<SequenceScore>& theta_scores) {
    if (theta_scores.empty()) throw ConfigError("retention loss over empty batch");
    const double n = static_cast<double>(theta_scores.size());
    std::vector<double> out(theta_scores.size());
    for (size_t i = 0; i < theta_scores.size(); ++i) {
        out[i] = -1.0 / (n * static_cast<double>(theta_scores[i].token_logprobs.size()));
    }
    return out;
}

double kl_unrelated_loss(const std::vector<std::vector<VocabDistribution>>& theta_dists,
                         const std::vector<std::vector<VocabDistribution>>& ref_dists,
                         KlDiagnostics* diag) {
    if (theta_dists.size() != ref_dists.size())
        throw ConfigError("kl batch misaligned");
    double acc = 0.0;
    size_t positions = 0;
    int clamped = 0;
    const double log_floor = std::log(kKlRefFloor);
    for (size_t s = 0; s < theta_dists.size(); ++s) {
        if (theta_dists[s].size() != ref_dists[s].size())
            throw ConfigError("kl sequence " + std::to_string(s) + " position-misaligned");
        for (size_t p = 0; p < theta_dists[s].size(); ++p) {
            const auto& th = theta_dists[s][p].logprobs;
            const auto& rf = ref_dists[s][p].logprobs;
            if (th.size() != rf.size()) throw ConfigError("kl distribution width mismatch");
            double kl = 0.0;
            for (size_t v = 0; v < th.size(); ++v) {
                double lr = rf[v];
                if (lr < log_floor) {
                    lr = log_floor;
                    ++clamped;
                }
                kl += std::exp(th[v]) * (th[v] - lr);
            }
            acc += kl;
            ++positions;
        }
    }
    if (positions == 0) throw ConfigError("kl loss over empty batch");
    if (diag != nullptr) diag->clamped_entries = clamped;
    return acc / static_cast<double>(positions);
}

std::vector<double> kl_position_grad(const VocabDistribution& theta, const VocabDistribution& ref,
                                     double scale) {
    const auto& th = theta.logprobs;
    const auto& rf = ref.logprobs;
    if (th.size() != rf.size()) throw ConfigError("kl distribution width mismatch");
    const double log_floor = std::log(kKlRefFloor);
    double kl = 0.0;
    std::vector<double> ratio(th.size());
    for (size_t v = 0; v < th.size(); ++v) {
        ratio[v] = th[v] - std::max(rf[v], log_floor);
        kl += std::exp(th[v]) * ratio[v];
    }
    std::vector<double> out(th.size());
    for (size_t v = 0; v < th.size(); ++v) {
        out[v] = scale * std::exp(th[v]) * (ratio[v] - kl);
    }
    return out;
}

std::vector<std::vector<double>> logprob_grad_rows(const std::vector<VocabDistribution>& theta,
                                                   const TokenSequence& seq, double coeff) {
    std::vector<std::vector<double>> rows(theta.size());
    for (size_t t = 0; t < theta.size(); ++t) {
        const int target = seq.ids[static_cast<size_t>(seq.prompt_len) + t];
        const int vocab = theta[t].size();
        std::vector<double> row(static_cast<size_t>(vocab));
        for (int v = 0; v < vocab; ++v) row[static_cast<size_t>(v)] = -coeff * theta[t].prob(v);
        row[static_cast<size_t>(target)] += coeff;
        rows[t] = std::move(row);
    }
    return rows;
}

LossBreakdown total_loss(double forget, double retention, double kl, const LossWeights& weights) {
    weights.validate();
    if (!std::isfinite(forget) || !std::isfinite(retention) || !std::isfinite(kl))
        throw ConfigError("non-finite loss component");
    LossBreakdown b;
    b.forget = forget;
    b.retention = retention;
    b.kl = kl;
    b.total = weights.alpha1 * forget + weights.alpha2 * retention + weights.alpha3 * kl;
    return b;
}

}  // namespace debias

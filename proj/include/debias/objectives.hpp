#pragma once

#include <vector>

#include "debias/scoring.hpp"

namespace debias {

struct LossWeights {
    double alpha1 = 0.4;  // forget
    double alpha2 = 0.4;  // retention
    double alpha3 = 0.2;  // kl
    double beta = 0.1;    // preference-ratio regularizer

    void validate() const;  // alpha1+alpha2+alpha3 > 0, beta > 0
};

struct LossBreakdown {
    double forget = 0.0;
    double retention = 0.0;
    double kl = 0.0;
    double total = 0.0;
};

struct KlDiagnostics {
    int clamped_entries = 0;  // reference probs raised to the floor
};

// Reference probabilities are floored here before entering the log ratio.
constexpr double kKlRefFloor = 1e-12;

/**
 * Bounded forgetting loss on the adapter/reference likelihood ratio:
 * -(2/beta) * mean_i ln sigmoid(-beta * (sum_theta_i - sum_ref_i)),
 * using summed sequence log-probabilities. Strictly increasing in
 * (sum_theta - sum_ref) and bounded above for bounded log-ratios, unlike
 * plain gradient ascent.
 */
double npo_forget_loss(const std::vector<SequenceScore>& theta_scores,
                       const std::vector<SequenceScore>& ref_scores, double beta);

// d(forget loss)/d(sum_theta_i); every target token of sequence i shares this
// coefficient.
std::vector<double> npo_forget_grad(const std::vector<SequenceScore>& theta_scores,
                                    const std::vector<SequenceScore>& ref_scores, double beta);

// Mean over the batch of per-sequence mean token negative log-likelihood.
double retention_loss(const std::vector<SequenceScore>& theta_scores);

// d(retention loss)/d(token logprob) for sequence i: -1 / (batch * tokens_i).
std::vector<double> retention_grad(const std::vector<SequenceScore>& theta_scores);

// Forward KL(P_theta || P_ref), mean over positions. Positions are pooled
// across the whole batch; ref distributions carry no gradient.
double kl_unrelated_loss(const std::vector<std::vector<VocabDistribution>>& theta_dists,
                         const std::vector<std::vector<VocabDistribution>>& ref_dists,
                         KlDiagnostics* diag = nullptr);

// d(position KL)/d(theta logits) for one position: p_theta * (log ratio - kl).
// `scale` folds in the position-mean factor and any loss weight.
std::vector<double> kl_position_grad(const VocabDistribution& theta, const VocabDistribution& ref,
                                     double scale);

// d(coeff * sum of target log-probs)/d(logits): one row per target position,
// row_t = coeff * (onehot(target_t) - p_theta_t). Covers both the NPO and the
// retention backward paths.
std::vector<std::vector<double>> logprob_grad_rows(const std::vector<VocabDistribution>& theta,
                                                   const TokenSequence& seq, double coeff);

LossBreakdown total_loss(double forget, double retention, double kl, const LossWeights& weights);

}  // namespace debias

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "debias/scoring.hpp"

namespace debias {

/**
 * Deterministic table-driven backend: the next-token logits for position i
 * are row ids[i-1] of a vocab x vocab logit matrix. Built from an explicit
 * conditional table it reproduces the table rows exactly, which makes it the
 * oracle substrate for loss and metric tests. A low-rank adapter on the
 * logit matrix makes it trainable end to end, so the full unlearning loop
 * and the weight-transfer path run without any pretrained model.
 */
class BigramStubModel : public LanguageModel {
public:
    static constexpr const char* kLogitsName = "bigram.logits";

    BigramStubModel(std::string base_id, Vocabulary vocab, std::vector<float> logits,
                    int context_window = 4096);

    // Rows are conditional distributions P(next | prev); every entry must be
    // positive and each row must sum to 1 within 1e-6.
    static BigramStubModel from_conditional_table(std::string base_id, Vocabulary vocab,
                                                  const std::vector<std::vector<double>>& rows);
    static BigramStubModel uniform(std::string base_id, Vocabulary vocab);

    // Architecture-identical sibling with noise added to the base logits.
    BigramStubModel perturbed(std::string base_id, uint64_t seed, float scale) const;

    const std::string& base_id() const override { return base_id_; }
    int vocab_size() const override { return vocab_size_; }
    int context_window() const override { return context_window_; }
    const Vocabulary& vocab() const override { return vocab_; }

    SequenceScore sequence_logprob(const TokenSequence& seq, bool use_adapter) const override;
    std::vector<VocabDistribution> next_token_distributions(const TokenSequence& seq,
                                                            bool use_adapter) const override;

    void attach_adapter(const AdapterConfig& cfg) override;
    std::vector<MatrixShape> adapter_sites() const override;
    void accumulate_adapter_grad(const TokenSequence& seq,
                                 const std::vector<std::vector<double>>& dlogits) override;
    uint64_t base_digest() const override;

    const std::vector<float>& base_logits() const { return logits_; }

private:
    std::vector<double> logit_row(int prev, bool use_adapter) const;

    std::string base_id_;
    Vocabulary vocab_;
    int vocab_size_ = 0;
    int context_window_ = 4096;
    std::vector<float> logits_;  // vocab x vocab, row-major
};

}  // namespace debias

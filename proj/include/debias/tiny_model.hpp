#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "debias/scoring.hpp"

namespace debias {

/**
 * Small decoder-only transformer trained from scratch: learned token and
 * position embeddings, pre-norm attention + MLP blocks, untied output head.
 * Parameters live in one flat float32 buffer; all forward/backward arithmetic
 * runs in double.
 *
 * Two gradient paths: full-parameter gradients for from-scratch pretraining,
 * and adapter-only gradients (base frozen) for unlearning. Default adapter
 * sites are the attention projections; the output head is available as an
 * extra site.
 */
class TinyTransformerModel : public LanguageModel {
public:
    struct Config {
        int vocab_size = 0;
        int d_model = 48;
        int n_layers = 2;
        int n_heads = 4;
        int d_ff = 192;
        int max_seq = 32;
    };

    TinyTransformerModel(std::string base_id, Vocabulary vocab, Config cfg, uint64_t init_seed);

    const std::string& base_id() const override { return base_id_; }
    int vocab_size() const override { return cfg_.vocab_size; }
    int context_window() const override { return cfg_.max_seq; }
    const Vocabulary& vocab() const override { return vocab_; }
    const Config& config() const { return cfg_; }

    SequenceScore sequence_logprob(const TokenSequence& seq, bool use_adapter) const override;
    std::vector<VocabDistribution> next_token_distributions(const TokenSequence& seq,
                                                            bool use_adapter) const override;

    void attach_adapter(const AdapterConfig& cfg) override;
    std::vector<MatrixShape> adapter_sites() const override;
    void accumulate_adapter_grad(const TokenSequence& seq,
                                 const std::vector<std::vector<double>>& dlogits) override;
    uint64_t base_digest() const override;

    // Default adapter target names for this architecture (attention
    // projections of every layer).
    std::vector<std::string> default_adapter_targets() const;

    // ---- full-parameter training (pretraining) ----
    void enable_full_grads();
    void zero_full_grads();
    // Mean token cross-entropy over the batch target regions; accumulates
    // d(loss)/d(params) into the full gradient buffer.
    double accumulate_full_grad_batch(const std::vector<TokenSequence>& seqs);
    std::span<float> params() { return params_; }
    std::span<const float> params() const { return params_; }
    std::span<const double> full_grads() const { return full_grads_; }

    // Architecture-identical sibling with gaussian noise added to all base
    // parameters.
    TinyTransformerModel perturbed(std::string base_id, uint64_t seed, float scale) const;

    // raw buffer access for model file IO
    void load_params(std::vector<float> params);
    const std::vector<float>& raw_params() const { return params_; }

private:
    struct Cache;
    enum class GradMode { adapter, full };

    // logits for every position (row p predicts ids[p + 1]).
    void forward(const std::vector<int>& ids, bool use_adapter, Cache& cache) const;
    void backward(Cache& cache, const std::vector<std::vector<double>>& dlogits, GradMode mode);

    size_t tensor_offset(const std::string& name) const;
    const LoraMatrix* site_lora(const std::string& name, bool use_adapter) const;

    std::string base_id_;
    Vocabulary vocab_;
    Config cfg_;
    std::vector<float> params_;
    std::vector<double> full_grads_;  // empty until enable_full_grads()

    struct TensorDesc {
        std::string name;
        size_t offset;
        int rows;
        int cols;
    };
    std::vector<TensorDesc> tensors_;
    void build_tensor_table();
};

}  // namespace debias

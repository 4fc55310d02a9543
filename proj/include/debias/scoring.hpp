#pragma once

#include <memory>
#include <string>
#include <vector>

#include "debias/lora.hpp"
#include "debias/vocab.hpp"

namespace debias {

/**
 * Token ids for a (context, continuation) pair. The first prompt_len ids are
 * the conditioning prefix; the remaining ids form the target region that
 * scores and losses apply to.
 */
struct TokenSequence {
    std::vector<int> ids;
    int prompt_len = 0;

    int length() const { return static_cast<int>(ids.size()); }
    int target_len() const { return length() - prompt_len; }
    void validate(int vocab_size) const;  // throws SequenceError
};

// Per-token natural-log probabilities of the target region plus their sum and mean.
struct SequenceScore {
    std::vector<double> token_logprobs;
    double sum = 0.0;
    double mean = 0.0;

    static SequenceScore from_logprobs(std::vector<double> logprobs);
};

// Normalized next-token distribution at one target position, stored as log-probs.
struct VocabDistribution {
    std::vector<double> logprobs;

    int size() const { return static_cast<int>(logprobs.size()); }
    double prob(int id) const;
    double logprob(int id) const { return logprobs.at(static_cast<size_t>(id)); }
};

// token_logprobs[i] = dists[i].logprob(ids[prompt_len + i]).
SequenceScore score_from_distributions(const std::vector<VocabDistribution>& dists,
                                       const TokenSequence& seq);

/**
 * Abstract causal-LM backend.
 *
 * Two forward paths share the base weights: use_adapter=true applies the
 * attached low-rank deltas, use_adapter=false scores the frozen base. The
 * base pass never reads adapter parameters, so it stays constant through
 * adapter training and serves as the reference model.
 *
 * Scoring calls are read-only and may run concurrently; gradient
 * accumulation and optimizer updates require exclusive access.
 */
class LanguageModel {
public:
    LanguageModel() = default;
    LanguageModel(const LanguageModel& other);
    LanguageModel& operator=(const LanguageModel& other);
    LanguageModel(LanguageModel&&) = default;
    LanguageModel& operator=(LanguageModel&&) = default;
    virtual ~LanguageModel() = default;

    virtual const std::string& base_id() const = 0;
    virtual int vocab_size() const = 0;
    virtual int context_window() const = 0;
    virtual const Vocabulary& vocab() const = 0;

    // ids = <bos> ++ encode(context) ++ encode(text); prompt_len covers the
    // <bos>-prefixed context. Throws SequenceError when text has no tokens.
    TokenSequence tokenize(const std::string& text, const std::string& context) const;

    virtual SequenceScore sequence_logprob(const TokenSequence& seq, bool use_adapter) const = 0;
    virtual std::vector<VocabDistribution> next_token_distributions(const TokenSequence& seq,
                                                                    bool use_adapter) const = 0;

    // ---- adapter surface ----
    bool has_adapter() const { return adapter_ != nullptr; }
    bool trainable() const { return has_adapter(); }
    AdapterSet& adapter();
    const AdapterSet& adapter() const;

    // Creates zero-delta adapters (B = 0) on the configured target matrices.
    virtual void attach_adapter(const AdapterConfig& cfg) = 0;

    AdapterCheckpoint export_adapter(CheckpointMeta meta = {}) const;
    // Validates every named matrix against the base parameter of the same
    // name; strict_base additionally requires base_id equality.
    void import_adapter(const AdapterCheckpoint& ckpt, bool strict_base);

    // Names and shapes of the base matrices adapters may attach to.
    virtual std::vector<MatrixShape> adapter_sites() const = 0;

    // Accumulates d(loss)/d(adapter params) for one sequence, given
    // d(loss)/d(logits) rows for each target position. Requires an adapter.
    virtual void accumulate_adapter_grad(const TokenSequence& seq,
                                         const std::vector<std::vector<double>>& dlogits) = 0;

    // Digest of the base parameters; adapter training must not change it.
    virtual uint64_t base_digest() const = 0;

protected:
    std::unique_ptr<AdapterSet> adapter_;
};

}  // namespace debias

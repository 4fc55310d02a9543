#include "debias/stub_model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "debias/errors.hpp"
#include "debias/util.hpp"

namespace debias {

namespace {

// log-softmax with max subtraction, in double.
std::vector<double> log_softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    double z = 0.0;
    for (double v : logits) z += std::exp(v - mx);
    const double log_z = std::log(z) + mx;
    std::vector<double> out(logits.size());
    for (size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_z;
    return out;
}

}  // namespace

BigramStubModel::BigramStubModel(std::string base_id, Vocabulary vocab, std::vector<float> logits,
                                 int context_window)
    : base_id_(std::move(base_id)),
      vocab_(std::move(vocab)),
      vocab_size_(vocab_.size()),
      context_window_(context_window),
      logits_(std::move(logits)) {
    if (logits_.size() != static_cast<size_t>(vocab_size_) * vocab_size_)
        throw ConfigError("stub logits must be vocab x vocab");
}

BigramStubModel BigramStubModel::from_conditional_table(
    std::string base_id, Vocabulary vocab, const std::vector<std::vector<double>>& rows) {
    const int v = vocab.size();
    if (static_cast<int>(rows.size()) != v)
        throw ConfigError("conditional table must have one row per vocab entry");
    std::vector<float> logits(static_cast<size_t>(v) * v);
    for (int r = 0; r < v; ++r) {
        if (static_cast<int>(rows[r].size()) != v)
            throw ConfigError("conditional table row " + std::to_string(r) + " has wrong width");
        double sum = 0.0;
        for (double p : rows[r]) {
            if (p <= 0.0) throw ConfigError("conditional table entries must be positive");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw ConfigError("conditional table row " + std::to_string(r) + " sums to " +
                              std::to_string(sum));
        for (int c = 0; c < v; ++c)
            logits[static_cast<size_t>(r) * v + c] = static_cast<float>(std::log(rows[r][c]));
    }
    return BigramStubModel(std::move(base_id), std::move(vocab), std::move(logits));
}

BigramStubModel BigramStubModel::uniform(std::string base_id, Vocabulary vocab) {
    const int v = vocab.size();
    std::vector<float> logits(static_cast<size_t>(v) * v, 0.0f);
    return BigramStubModel(std::move(base_id), std::move(vocab), std::move(logits));
}

BigramStubModel BigramStubModel::perturbed(std::string base_id, uint64_t seed, float scale) const {
    std::vector<float> logits = logits_;
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, scale);
    for (auto& v : logits) v += noise(rng);
    return BigramStubModel(std::move(base_id), vocab_, std::move(logits), context_window_);
}

std::vector<double> BigramStubModel::logit_row(int prev, bool use_adapter) const {
    std::vector<double> row(static_cast<size_t>(vocab_size_));
    const size_t off = static_cast<size_t>(prev) * vocab_size_;
    for (int c = 0; c < vocab_size_; ++c) row[static_cast<size_t>(c)] = logits_[off + c];
    if (use_adapter && adapter_) {
        const LoraMatrix* m = adapter_->find(kLogitsName);
        if (m != nullptr) {
            for (int c = 0; c < vocab_size_; ++c) row[static_cast<size_t>(c)] += m->delta(prev, c);
        }
    }
    return row;
}

SequenceScore BigramStubModel::sequence_logprob(const TokenSequence& seq, bool use_adapter) const {
    const auto dists = next_token_distributions(seq, use_adapter);
    return score_from_distributions(dists, seq);
}

std::vector<VocabDistribution> BigramStubModel::next_token_distributions(const TokenSequence& seq,
                                                                         bool use_adapter) const {
    seq.validate(vocab_size_);
    if (seq.length() > context_window_)
        throw SequenceError("sequence of length " + std::to_string(seq.length()) +
                            " exceeds context window " + std::to_string(context_window_));
    std::vector<VocabDistribution> out;
    out.reserve(static_cast<size_t>(seq.target_len()));
    for (int pos = seq.prompt_len; pos < seq.length(); ++pos) {
        const int prev = seq.ids[static_cast<size_t>(pos) - 1];
        VocabDistribution d;
        d.logprobs = log_softmax(logit_row(prev, use_adapter));
        out.push_back(std::move(d));
    }
    return out;
}

void BigramStubModel::attach_adapter(const AdapterConfig& cfg) {
    if (cfg.rank < 1) throw ConfigError("adapter rank must be >= 1");
    auto set = std::make_unique<AdapterSet>();
    set->rank = cfg.rank;
    LoraMatrix m;
    m.name = kLogitsName;
    m.rows = vocab_size_;
    m.cols = vocab_size_;
    m.rank = cfg.rank;
    m.init(mix_seed(cfg.seed, 0x10ad));
    set->mats.push_back(std::move(m));
    adapter_ = std::move(set);
}

std::vector<MatrixShape> BigramStubModel::adapter_sites() const {
    return {{kLogitsName, vocab_size_, vocab_size_}};
}

void BigramStubModel::accumulate_adapter_grad(const TokenSequence& seq,
                                              const std::vector<std::vector<double>>& dlogits) {
    LoraMatrix* m = adapter().find(kLogitsName);
    if (m == nullptr) throw ConfigError("stub adapter missing logits matrix");
    if (static_cast<int>(dlogits.size()) != seq.target_len())
        throw ConfigError("dlogits rows must match target length");
    for (int t = 0; t < seq.target_len(); ++t) {
        const int prev = seq.ids[static_cast<size_t>(seq.prompt_len + t) - 1];
        m->accumulate_row_grad(prev, dlogits[static_cast<size_t>(t)]);
    }
}

uint64_t BigramStubModel::base_digest() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (float f : logits_) {
        uint32_t bits;
        std::memcpy(&bits, &f, sizeof(bits));
        for (int i = 0; i < 4; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace debias

#include "debias/scoring.hpp"

#include <cmath>
#include <numeric>

#include "debias/errors.hpp"

namespace debias {

void TokenSequence::validate(int vocab) const {
    if (ids.empty()) throw SequenceError("empty token sequence");
    if (prompt_len < 0 || prompt_len >= length())
        throw SequenceError("prompt_len " + std::to_string(prompt_len) +
                            " leaves no target tokens in sequence of length " +
                            std::to_string(length()));
    for (int id : ids) {
        if (id < 0 || id >= vocab)
            throw SequenceError("token id " + std::to_string(id) + " outside vocab of " +
                                std::to_string(vocab));
    }
}

SequenceScore SequenceScore::from_logprobs(std::vector<double> logprobs) {
    SequenceScore s;
    s.token_logprobs = std::move(logprobs);
    s.sum = std::accumulate(s.token_logprobs.begin(), s.token_logprobs.end(), 0.0);
    s.mean = s.token_logprobs.empty() ? 0.0 : s.sum / static_cast<double>(s.token_logprobs.size());
    return s;
}

double VocabDistribution::prob(int id) const {
    return std::exp(logprobs.at(static_cast<size_t>(id)));
}

SequenceScore score_from_distributions(const std::vector<VocabDistribution>& dists,
                                       const TokenSequence& seq) {
    std::vector<double> lps;
    lps.reserve(dists.size());
    for (size_t i = 0; i < dists.size(); ++i) {
        lps.push_back(dists[i].logprob(seq.ids[static_cast<size_t>(seq.prompt_len) + i]));
    }
    return SequenceScore::from_logprobs(std::move(lps));
}

LanguageModel::LanguageModel(const LanguageModel& other)
    : adapter_(other.adapter_ ? std::make_unique<AdapterSet>(*other.adapter_) : nullptr) {}

LanguageModel& LanguageModel::operator=(const LanguageModel& other) {
    if (this != &other)
        adapter_ = other.adapter_ ? std::make_unique<AdapterSet>(*other.adapter_) : nullptr;
    return *this;
}

TokenSequence LanguageModel::tokenize(const std::string& text, const std::string& context) const {
    TokenSequence seq;
    seq.ids.push_back(Vocabulary::kBos);
    for (int id : vocab().encode(context)) seq.ids.push_back(id);
    seq.prompt_len = static_cast<int>(seq.ids.size());
    for (int id : vocab().encode(text)) seq.ids.push_back(id);
    if (seq.target_len() == 0)
        throw SequenceError("text tokenizes to zero target tokens: \"" + text + "\"");
    return seq;
}

AdapterSet& LanguageModel::adapter() {
    if (!adapter_) throw ConfigError("model has no adapter attached");
    return *adapter_;
}

const AdapterSet& LanguageModel::adapter() const {
    if (!adapter_) throw ConfigError("model has no adapter attached");
    return *adapter_;
}

AdapterCheckpoint LanguageModel::export_adapter(CheckpointMeta meta) const {
    const AdapterSet& set = adapter();
    AdapterCheckpoint ckpt;
    ckpt.base_id = base_id();
    ckpt.rank = set.rank;
    ckpt.meta = std::move(meta);
    if (ckpt.meta.lineage.empty()) ckpt.meta.lineage.push_back(base_id());
    for (const auto& m : set.mats) {
        LoraMatrix copy;
        copy.name = m.name;
        copy.rows = m.rows;
        copy.cols = m.cols;
        copy.rank = m.rank;
        copy.a = m.a;
        copy.b = m.b;
        ckpt.mats.push_back(std::move(copy));
    }
    return ckpt;
}

void LanguageModel::import_adapter(const AdapterCheckpoint& ckpt, bool strict_base) {
    if (strict_base && ckpt.base_id != base_id()) {
        throw BaseIdMismatchError("adapter was trained on base '" + ckpt.base_id +
                                  "' but target base is '" + base_id() + "'");
    }
    const auto sites = adapter_sites();
    std::vector<std::string> bad;
    for (const auto& m : ckpt.mats) {
        const MatrixShape* site = nullptr;
        for (const auto& s : sites)
            if (s.name == m.name) site = &s;
        if (site == nullptr || site->rows != m.rows || site->cols != m.cols) bad.push_back(m.name);
    }
    if (!bad.empty()) {
        std::string msg = "adapter shape mismatch for:";
        for (const auto& n : bad) msg += " " + n;
        throw ShapeMismatchError(msg, bad);
    }
    auto set = std::make_unique<AdapterSet>();
    set->rank = ckpt.rank;
    for (const auto& m : ckpt.mats) {
        LoraMatrix copy;
        copy.name = m.name;
        copy.rows = m.rows;
        copy.cols = m.cols;
        copy.rank = m.rank;
        copy.a = m.a;
        copy.b = m.b;
        copy.zero_grads();
        set->mats.push_back(std::move(copy));
    }
    adapter_ = std::move(set);
}

}  // namespace debias

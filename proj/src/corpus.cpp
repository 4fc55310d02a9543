#include "debias/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "debias/errors.hpp"
#include "debias/util.hpp"

namespace debias {

using nlohmann::json;

const std::vector<BiasType>& stereoset_bias_types() {
    static const std::vector<BiasType> kTypes = {"gender", "profession", "race", "religion"};
    return kTypes;
}

const std::vector<BiasType>& crows_pairs_bias_types() {
    static const std::vector<BiasType> kTypes = {
        "age",      "disability", "gender",   "nationality",        "physical-appearance",
        "race-color", "religion", "sexual-orientation", "socioeconomic"};
    return kTypes;
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
    }
    return "train";
}

bool PartitionState::is_swapped(const BiasType& t) const {
    auto it = swapped.find(t);
    return it != swapped.end() && it->second;
}

std::string PartitionState::digest() const {
    std::ostringstream ss;
    for (const auto& e : swap_log) ss << e.step << ":" << e.bias_type << ":" << e.new_flag << ";";
    return fnv1a_hex(ss.str());
}

PartitionState apply_swap(PartitionState state, const BiasType& bias_type, int step) {
    // several types may swap at one probe step; steps never move backwards
    if (!state.swap_log.empty() && step < state.swap_log.back().step)
        throw ConfigError("swap log steps must not decrease");
    for (const auto& e : state.swap_log) {
        if (e.step == step && e.bias_type == bias_type)
            throw ConfigError("duplicate swap for '" + bias_type + "' at step " +
                              std::to_string(step));
    }
    const bool new_flag = !state.is_swapped(bias_type);
    state.swapped[bias_type] = new_flag;
    state.swap_log.push_back({step, bias_type, new_flag});
    return state;
}

namespace {

std::filesystem::path resolve_split_file(const std::filesystem::path& path, Split split) {
    if (std::filesystem::is_directory(path)) {
        return path / (std::string(split_name(split)) + ".jsonl");
    }
    return path;
}

std::string require_string(const json& j, const char* key, int line) {
    if (!j.contains(key) || !j.at(key).is_string())
        throw DataFormatError(std::string("missing or non-string field '") + key + "'", line);
    return j.at(key).get<std::string>();
}

void check_bias_type(const std::string& t, const std::vector<BiasType>& allowed, int line) {
    if (std::find(allowed.begin(), allowed.end(), t) == allowed.end())
        throw DataFormatError("unknown bias_type '" + t + "'", line);
}

// Applies fn to every non-blank line with its 1-based line number.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& file, Fn&& fn) {
    std::ifstream f(file);
    if (!f) throw DataFormatError("cannot open dataset file: " + file.string());
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        bool blank = true;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
        if (blank) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw DataFormatError(std::string("malformed record: ") + e.what(), line_no);
        }
        fn(j, line_no);
    }
}

}  // namespace

std::vector<StereoInstance> load_stereoset(const std::filesystem::path& path, Split split) {
    const auto file = resolve_split_file(path, split);
    std::vector<StereoInstance> out;
    std::set<std::string> ids;
    for_each_jsonl(file, [&](const json& j, int line) {
        StereoInstance inst;
        inst.id = require_string(j, "id", line);
        inst.bias_type = require_string(j, "bias_type", line);
        inst.context = require_string(j, "context", line);
        inst.stereotype = require_string(j, "stereotype", line);
        inst.anti_stereotype = require_string(j, "anti_stereotype", line);
        inst.unrelated = require_string(j, "unrelated", line);
        check_bias_type(inst.bias_type, stereoset_bias_types(), line);
        if (inst.stereotype.empty() || inst.anti_stereotype.empty() || inst.unrelated.empty())
            throw DataFormatError("candidate texts must be non-empty", line);
        if (inst.stereotype == inst.anti_stereotype)
            throw DataFormatError("stereotype equals anti_stereotype for id '" + inst.id + "'",
                                  line);
        if (!ids.insert(inst.id).second)
            throw DataFormatError("duplicate id '" + inst.id + "'", line);
        out.push_back(std::move(inst));
    });
    return out;
}

std::vector<ContrastPair> load_crows_pairs(const std::filesystem::path& path) {
    std::vector<ContrastPair> out;
    std::set<std::string> ids;
    for_each_jsonl(path, [&](const json& j, int line) {
        ContrastPair pair;
        pair.id = require_string(j, "id", line);
        pair.bias_type = require_string(j, "bias_type", line);
        pair.more_stereotypical = require_string(j, "sent_more", line);
        pair.less_stereotypical = require_string(j, "sent_less", line);
        check_bias_type(pair.bias_type, crows_pairs_bias_types(), line);
        if (pair.more_stereotypical.empty() || pair.less_stereotypical.empty())
            throw DataFormatError("pair texts must be non-empty", line);
        if (pair.more_stereotypical == pair.less_stereotypical)
            throw DataFormatError("degenerate pair '" + pair.id + "'", line);
        if (!ids.insert(pair.id).second)
            throw DataFormatError("duplicate id '" + pair.id + "'", line);
        out.push_back(std::move(pair));
    });
    return out;
}

std::map<BiasType, int> count_by_type(const std::vector<StereoInstance>& instances) {
    std::map<BiasType, int> counts;
    for (const auto& i : instances) ++counts[i.bias_type];
    return counts;
}

std::map<BiasType, int> count_by_type(const std::vector<ContrastPair>& pairs) {
    std::map<BiasType, int> counts;
    for (const auto& p : pairs) ++counts[p.bias_type];
    return counts;
}

Partitions build_partitions(const std::vector<StereoInstance>& instances,
                            const PartitionState& state, double adversarial_fraction) {
    if (instances.empty()) throw ConfigError("cannot build partitions from zero instances");
    if (adversarial_fraction < 0.0 || adversarial_fraction >= 0.5)
        throw ConfigError("adversarial_fraction must lie in [0, 0.5)");
    Partitions p;
    p.adversarial_fraction = adversarial_fraction;
    for (const auto& inst : instances) {
        const bool swapped = state.is_swapped(inst.bias_type);
        const std::string& forget_text = swapped ? inst.anti_stereotype : inst.stereotype;
        const std::string& retain_text = swapped ? inst.stereotype : inst.anti_stereotype;
        p.forget.push_back({inst.id, inst.bias_type, inst.context, forget_text, retain_text});
        p.retain.push_back({inst.id, inst.bias_type, inst.context, retain_text});
        p.unrelated.push_back(inst.unrelated);
    }
    return p;
}

ChunkStream::ChunkStream(Partitions pools, int forget_batch, int retain_batch, int unrelated_batch,
                         uint64_t seed)
    : pools_(std::move(pools)),
      forget_batch_(forget_batch),
      retain_batch_(retain_batch),
      unrelated_batch_(unrelated_batch),
      rng_(seed) {
    if (forget_batch_ < 1) throw ConfigError("forget batch must be >= 1");
    if (retain_batch_ % forget_batch_ != 0 || retain_batch_ / forget_batch_ < 2)
        throw ConfigError("retain batch must be n * forget batch with n > 1");
    if (unrelated_batch_ < 1) throw ConfigError("unrelated batch must be >= 1");
    if (pools_.forget.empty() || pools_.retain.empty() || pools_.unrelated.empty())
        throw ConfigError("chunk stream pools must be non-empty");

    adversarial_count_ =
        static_cast<int>(pools_.adversarial_fraction * static_cast<double>(forget_batch_));
    const int consumed = forget_batch_ - adversarial_count_;
    if (consumed < 1 || static_cast<size_t>(consumed) > pools_.forget.size())
        throw ConfigError("forget pool smaller than one batch");
    chunks_per_epoch_ = static_cast<int>(pools_.forget.size() / static_cast<size_t>(consumed));

    retain_order_.resize(pools_.retain.size());
    for (size_t i = 0; i < retain_order_.size(); ++i) retain_order_[i] = i;
    seeded_shuffle(retain_order_, rng_);
    unrelated_order_.resize(pools_.unrelated.size());
    for (size_t i = 0; i < unrelated_order_.size(); ++i) unrelated_order_[i] = i;
    seeded_shuffle(unrelated_order_, rng_);

    start_epoch();
}

void ChunkStream::start_epoch() {
    forget_order_.resize(pools_.forget.size());
    for (size_t i = 0; i < forget_order_.size(); ++i) forget_order_[i] = i;
    seeded_shuffle(forget_order_, rng_);
    forget_cursor_ = 0;
}

DataChunk ChunkStream::next() {
    const int regular = forget_batch_ - adversarial_count_;
    if (forget_cursor_ + static_cast<size_t>(regular) > forget_order_.size()) {
        ++epoch_;
        start_epoch();
    }

    DataChunk chunk;
    chunk.chunk_index = chunk_index_++;
    chunk.epoch = epoch_;

    std::vector<const ForgetEntry*> picked;
    for (int i = 0; i < regular; ++i) {
        const ForgetEntry& e = pools_.forget[forget_order_[forget_cursor_++]];
        picked.push_back(&e);
        chunk.forget_batch.push_back({e.id, e.bias_type, e.context, e.text, false});
    }
    for (int i = 0; i < adversarial_count_; ++i) {
        const size_t src = static_cast<size_t>(bounded_rand(rng_, picked.size()));
        const ForgetEntry& e = *picked[src];
        chunk.forget_batch.push_back({e.id, e.bias_type, e.context, e.adversarial_text, true});
    }
    if (adversarial_count_ > 0) {
        seeded_shuffle(chunk.forget_batch, rng_);
    }

    for (int i = 0; i < retain_batch_; ++i) {
        const RetainEntry& e = pools_.retain[retain_order_[retain_cursor_ % retain_order_.size()]];
        ++retain_cursor_;
        chunk.retain_batch.push_back({e.id, e.bias_type, e.context, e.text, false});
    }
    for (int i = 0; i < unrelated_batch_; ++i) {
        chunk.unrelated_batch.push_back(
            pools_.unrelated[unrelated_order_[unrelated_cursor_ % unrelated_order_.size()]]);
        ++unrelated_cursor_;
    }
    return chunk;
}

void ChunkStream::skip(int64_t chunks) {
    for (int64_t i = 0; i < chunks; ++i) next();
}

}  // namespace debias

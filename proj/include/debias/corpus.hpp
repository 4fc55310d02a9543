#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace debias {

// Bias category label; the closed set is declared by the dataset schema.
using BiasType = std::string;

const std::vector<BiasType>& stereoset_bias_types();
const std::vector<BiasType>& crows_pairs_bias_types();

enum class Split { train, dev, test };
const char* split_name(Split s);

/**
 * One bias-typed triple sharing a context: a stereotypical candidate, its
 * anti-stereotypical counterpart, and an unrelated candidate.
 */
struct StereoInstance {
    std::string id;
    BiasType bias_type;
    std::string context;  // may be empty
    std::string stereotype;
    std::string anti_stereotype;
    std::string unrelated;
};

struct ContrastPair {
    std::string id;
    BiasType bias_type;
    std::string more_stereotypical;
    std::string less_stereotypical;
};

/**
 * Per-bias-type swap flags. swapped=false keeps the default polarity
 * (stereotype texts on the forget side); swapped=true exchanges the roles.
 * The log is append-only with strictly increasing steps.
 */
struct SwapEvent {
    int step = 0;
    BiasType bias_type;
    bool new_flag = false;
};

struct PartitionState {
    std::map<BiasType, bool> swapped;
    std::vector<SwapEvent> swap_log;

    bool is_swapped(const BiasType& t) const;
    std::string digest() const;  // stable hash of the swap log
};

PartitionState apply_swap(PartitionState state, const BiasType& bias_type, int step);

// Forget-pool entries carry the opposite-role text of the same instance so
// chunk assembly can inject adversarial members.
struct ForgetEntry {
    std::string id;
    BiasType bias_type;
    std::string context;
    std::string text;
    std::string adversarial_text;
};

struct RetainEntry {
    std::string id;
    BiasType bias_type;
    std::string context;
    std::string text;
};

struct Partitions {
    std::vector<ForgetEntry> forget;
    std::vector<RetainEntry> retain;
    std::vector<std::string> unrelated;
    double adversarial_fraction = 0.0;
};

struct ChunkItem {
    std::string id;
    BiasType bias_type;
    std::string context;
    std::string text;
    bool adversarial = false;
};

struct DataChunk {
    std::vector<ChunkItem> forget_batch;
    std::vector<ChunkItem> retain_batch;
    std::vector<std::string> unrelated_batch;
    int chunk_index = 0;
    int epoch = 0;
};

// ---- loaders (JSON lines, UTF-8) ----

// `path` may be a dataset directory holding <split>.jsonl, or a file.
std::vector<StereoInstance> load_stereoset(const std::filesystem::path& path, Split split);
std::vector<ContrastPair> load_crows_pairs(const std::filesystem::path& path);

std::map<BiasType, int> count_by_type(const std::vector<StereoInstance>& instances);
std::map<BiasType, int> count_by_type(const std::vector<ContrastPair>& pairs);

/**
 * Splits instances into forget/retain/unrelated pools under the swap state.
 * Every instance contributes exactly one forget and one retain text; swapping
 * a type only exchanges roles, never the union of texts.
 */
Partitions build_partitions(const std::vector<StereoInstance>& instances,
                            const PartitionState& state, double adversarial_fraction);

/**
 * Deterministic infinite chunk iterator. The forget pool is reshuffled each
 * epoch; retain and unrelated pools are shuffled once and then sampled
 * cyclically so they never exhaust mid-epoch. Each forget batch holds
 * floor(adversarial_fraction * B_f) adversarial members, drawn from the
 * opposite-role text of instances occupying the same batch.
 */
class ChunkStream {
public:
    ChunkStream(Partitions pools, int forget_batch, int retain_batch, int unrelated_batch,
                uint64_t seed);

    DataChunk next();
    void skip(int64_t chunks);

    int adversarial_per_batch() const { return adversarial_count_; }
    int chunks_per_epoch() const { return chunks_per_epoch_; }

private:
    void start_epoch();

    Partitions pools_;
    int forget_batch_;
    int retain_batch_;
    int unrelated_batch_;
    int adversarial_count_;
    int chunks_per_epoch_;

    std::mt19937_64 rng_;
    std::vector<size_t> forget_order_;
    size_t forget_cursor_ = 0;
    size_t retain_cursor_ = 0;
    size_t unrelated_cursor_ = 0;
    std::vector<size_t> retain_order_;
    std::vector<size_t> unrelated_order_;
    int chunk_index_ = 0;
    int epoch_ = 0;
};

}  // namespace debias

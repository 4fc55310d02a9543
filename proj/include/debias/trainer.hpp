#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "debias/bias_eval.hpp"
#include "debias/corpus.hpp"
#include "debias/objectives.hpp"
#include "debias/optimizer.hpp"
#include "debias/scoring.hpp"

namespace debias {

enum class StopReason { none, early_stop, max_steps };
const char* stop_reason_name(StopReason r);

struct TrainingConfig {
    LossWeights weights{};
    int forget_batch = 4;
    int retain_batch = 28;
    int unrelated_batch = 4;
    double learning_rate = 5e-5;
    std::string schedule = "linear";
    std::string optimizer = "adamw";
    double weight_decay = 0.0;
    int probe_every = 50;
    double early_stop_band = 2.0;
    double adversarial_fraction = 0.25;
    int max_steps = 300;
    int checkpoint_every = 0;  // 0 = final checkpoint only; N > 0 also writes step-N subdirs
    uint64_t seed = 0;
    std::string checkpoint_dir;

    void validate() const;  // throws ConfigError naming the offending field
};

struct TrainState {
    int step = 0;
    PartitionState partitions;
    EvalReport last_probe;
    bool stopped = false;
    StopReason stop_reason = StopReason::none;
    int last_stream_rebuild_step = 0;

    nlohmann::json to_json() const;
    static TrainState from_json(const nlohmann::json& j);
};

// Aligns each bias type's swap flag with the side of 50 its dev SS sits on
// (strictly below 50 => exchanged sets), so forgetting pressure keeps
// pointing toward 50. A flag change is one swap event; SS exactly at 50
// leaves the flag untouched.
PartitionState maybe_swap(const EvalReport& report, PartitionState state, int step);

// True when every bias type in the report sits within the band around 50.
bool should_stop(const EvalReport& report, double band);

/**
 * The unlearning loop: per chunk, NPO on the forget batch against the frozen
 * reference, cross-entropy on the retain batch, forward KL on unrelated
 * text, one AdamW step on adapter parameters. Dev probes every probe_every
 * steps drive dataset swapping and early stopping.
 */
class Trainer {
public:
    Trainer(LanguageModel& model, std::vector<StereoInstance> train_instances,
            std::vector<StereoInstance> dev_instances, TrainingConfig config);

    // Test seams: replace the dev probe, observe emitted chunks.
    void set_probe_fn(std::function<EvalReport(const LanguageModel&, int step)> fn);
    void set_chunk_observer(std::function<void(const DataChunk&, int step)> fn);

    TrainState run();
    TrainState resume_and_run(const std::filesystem::path& checkpoint_dir);

    const std::vector<nlohmann::json>& log() const { return log_; }
    void write_log(const std::filesystem::path& path) const;

    void save_checkpoint(const TrainState& state, const std::filesystem::path& dir) const;

private:
    TrainState run_from(TrainState state);
    LossBreakdown train_step(const DataChunk& chunk);
    EvalReport probe(int step) const;
    void rebuild_stream(const TrainState& state, int64_t consumed);

    LanguageModel& model_;
    std::vector<StereoInstance> train_;
    std::vector<StereoInstance> dev_;
    TrainingConfig cfg_;
    std::unique_ptr<ChunkStream> stream_;
    std::unique_ptr<AdamW> opt_;
    std::vector<nlohmann::json> log_;
    std::function<EvalReport(const LanguageModel&, int)> probe_fn_;
    std::function<void(const DataChunk&, int)> chunk_observer_;
};

}  // namespace debias

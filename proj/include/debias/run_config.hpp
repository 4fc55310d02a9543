#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "debias/trainer.hpp"

namespace debias {

/**
 * Flat INI-style run configuration with [model], [train] and [eval]
 * sections. Environment variables override file values under the prefix
 * DEBIAS_<SECTION>_<KEY> (upper-cased key).
 */
struct RunConfig {
    // [model]
    std::string backend = "stub";  // stub | tiny
    std::string model_path;
    int adapter_rank = 8;
    std::string adapter_targets = "default";  // default | attn | attn+head
    // [train]
    std::string train_dataset;
    std::string output_dir = "run";
    TrainingConfig training;
    // [eval]
    std::string eval_dataset;
    std::string eval_split = "test";
    std::string eval_report;  // optional JSON output path

    static RunConfig from_file(const std::filesystem::path& path);

    // Throws ConfigError naming the failing field. Path checks are limited
    // to what the workflow needs.
    void validate_for_train() const;
    void validate_for_eval() const;
};

// Raw section/key access used for diagnostics and tests.
std::map<std::string, std::string> parse_ini(const std::string& text);

}  // namespace debias

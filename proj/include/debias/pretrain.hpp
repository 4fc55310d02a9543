#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "debias/tiny_model.hpp"

namespace debias {

struct PretrainConfig {
    int steps = 2200;
    int batch_size = 32;
    double learning_rate = 2.5e-3;
    double final_lr_fraction = 0.05;  // linear decay floor
    double weight_decay = 0.01;
    uint64_t seed = 1;
    int log_every = 0;  // 0 = silent
};

struct PretrainStats {
    double first_loss = 0.0;
    double last_loss = 0.0;
};

// From-scratch causal-LM training on raw sentences (one sequence each, full
// parameters). Deterministic for a fixed (corpus, config).
PretrainStats pretrain_tiny(TinyTransformerModel& model, const std::vector<std::string>& sentences,
                            const PretrainConfig& cfg);

}  // namespace debias

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace debias {

// Exit codes: 0 success, 2 configuration or data error, 3 adapter/shape
// mismatch, 1 anything else.

int cmd_train(const std::string& config_path);
int cmd_eval(const std::string& config_path, const std::string& benchmark,
             const std::string& adapter_path = "");
int cmd_transfer(const std::string& adapter_path, const std::string& target_model_path,
                 bool strict_base, const std::string& out_path);

struct MakeSyntheticOptions {
    std::string out_dir;
    uint64_t seed = 7;
    bool skip_pretrain = false;  // stub-only setup, no tiny-model pretraining
    int pretrain_steps = 2200;
};
int cmd_make_synthetic(const MakeSyntheticOptions& opts);

// argv-style entry used by the binary and by tests.
int run_cli(const std::vector<std::string>& args);

}  // namespace debias

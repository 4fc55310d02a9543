#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace debias {

struct AdapterSet;

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/**
 * AdamW with decoupled weight decay. One logical step may cover several
 * parameter segments (one per adapter matrix); begin_step resets the segment
 * cursor so the moment layout stays stable across steps and checkpoints.
 */
class AdamW {
public:
    using Config = AdamWConfig;

    AdamW(size_t param_count, Config cfg = {});

    void begin_step(double lr);
    void update(std::span<float> w, std::span<const double> g);

    // Runs one full step over every adapter matrix (A then B, in set order).
    void step(AdapterSet& adapter, double lr);

    int64_t steps_taken() const { return t_; }
    size_t param_count() const { return m_.size(); }

    void save(const std::filesystem::path& path) const;
    static AdamW load(const std::filesystem::path& path, Config cfg = {});

private:
    Config cfg_;
    int64_t t_ = 0;
    double lr_ = 0.0;
    size_t cursor_ = 0;
    std::vector<double> m_;
    std::vector<double> v_;
};

// lr(step) for a linear schedule decaying from lr0 to zero across max_steps.
double linear_lr(double lr0, int step, int max_steps);

}  // namespace debias

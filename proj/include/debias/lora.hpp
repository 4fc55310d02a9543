#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace debias {

struct MatrixShape {
    std::string name;
    int rows = 0;
    int cols = 0;
};

/**
 * One low-rank delta: delta = B * A with A (rank x cols) and B (rows x rank),
 * both row-major float32. B starts at zero so a fresh adapter is the identity.
 */
struct LoraMatrix {
    std::string name;
    int rows = 0;
    int cols = 0;
    int rank = 0;

    std::vector<float> a;  // rank x cols
    std::vector<float> b;  // rows x rank

    std::vector<double> grad_a;
    std::vector<double> grad_b;

    void init(uint64_t seed);  // A ~ N(0, 0.02), B = 0
    void zero_grads();
    double delta(int r, int c) const;
    // Adds g (length cols) scaled into row r of the delta's gradient:
    // dB[r,k] += sum_v g[v] * A[k,v];  dA[k,v] += B[r,k] * g[v].
    void accumulate_row_grad(int r, const std::vector<double>& g);
};

struct AdapterConfig {
    int rank = 8;
    std::vector<std::string> target_names;  // base matrices to adapt
    uint64_t seed = 0;
};

struct CheckpointMeta {
    int64_t training_step = 0;
    double alpha1 = 0.0, alpha2 = 0.0, alpha3 = 0.0, beta = 0.0;
    std::string swap_log_digest;
    uint64_t seed = 0;
    std::vector<std::string> lineage;  // base_id history, oldest first
};

struct AdapterSet {
    int rank = 0;
    std::vector<LoraMatrix> mats;

    LoraMatrix* find(const std::string& name);
    const LoraMatrix* find(const std::string& name) const;
    void zero_grads();
    size_t param_count() const;
};

/**
 * On-disk layout: <dir>/manifest.json plus <name>.A.bin / <name>.B.bin
 * little-endian float32 row-major blobs. Round-trips bit-exactly.
 */
struct AdapterCheckpoint {
    std::string base_id;
    int rank = 0;
    std::vector<LoraMatrix> mats;  // grads empty
    CheckpointMeta meta;

    void save(const std::filesystem::path& dir) const;
    static AdapterCheckpoint load(const std::filesystem::path& dir);
};

}  // namespace debias

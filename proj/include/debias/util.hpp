#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace debias {

// splitmix64 step; used to derive independent stream seeds from (seed, salt).
uint64_t mix_seed(uint64_t base, uint64_t salt);

// Unbiased draw in [0, bound). mt19937_64 output is pinned by the standard,
// so unlike uniform_int_distribution this yields the same sequence on every
// standard library.
uint64_t bounded_rand(std::mt19937_64& rng, uint64_t bound);

// Fisher-Yates on top of bounded_rand; deterministic across toolchains.
template <typename T>
void seeded_shuffle(std::vector<T>& values, std::mt19937_64& rng) {
    for (size_t i = values.size(); i > 1; --i) {
        std::swap(values[i - 1], values[bounded_rand(rng, i)]);
    }
}

// FNV-1a over a byte string, hex-encoded. Used for swap-log digests.
std::string fnv1a_hex(const std::string& bytes);

// Little-endian float32 blob IO, row-major.
void write_f32_blob(const std::filesystem::path& path, std::span<const float> data);
std::vector<float> read_f32_blob(const std::filesystem::path& path, size_t expected_count);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace debias

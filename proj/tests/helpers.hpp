#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "debias/corpus.hpp"
#include "debias/stub_model.hpp"

namespace debias::test {

// Unique scratch directory under the system temp root, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("debias_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline StereoInstance make_instance(const std::string& id, const BiasType& type,
                                    const std::string& context, const std::string& stereo,
                                    const std::string& anti, const std::string& unrelated) {
    return StereoInstance{id, type, context, stereo, anti, unrelated};
}

// Vocabulary over the given words (specials prepended by the constructor).
inline Vocabulary words_vocab(const std::vector<std::string>& words) { return Vocabulary(words); }

// Random normalized row of strictly positive probabilities.
inline std::vector<double> random_distribution(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> row(static_cast<size_t>(n));
    double sum = 0.0;
    for (auto& p : row) {
        p = u(rng);
        sum += p;
    }
    for (auto& p : row) p /= sum;
    return row;
}

// Random bigram stub over `n` words beyond the specials.
inline BigramStubModel random_stub(uint64_t seed, int words, const std::string& base_id = "stub") {
    std::vector<std::string> names;
    for (int i = 0; i < words; ++i) names.push_back("w" + std::to_string(i));
    Vocabulary vocab(names);
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> rows;
    for (int r = 0; r < vocab.size(); ++r) rows.push_back(random_distribution(rng, vocab.size()));
    return BigramStubModel::from_conditional_table(base_id, std::move(vocab), rows);
}

}  // namespace debias::test

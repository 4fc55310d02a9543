#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "debias/corpus.hpp"
#include "debias/stub_model.hpp"
#include "debias/tiny_model.hpp"

namespace debias {

/**
 * Generator for a small synthetic bias world: templated contexts
 * ("the <group> <scene> <linker>") continued by one adjective from a
 * stereo/anti pair, with a per-pair association skew injected into the
 * sampled pretraining corpus. Unrelated candidates are off-topic noun
 * phrases that never follow a context in the corpus, so language-modeling
 * preference stays measurable while the stereo/anti preference is skewed.
 */
struct SyntheticSpec {
    uint64_t seed = 7;
    int pairs_per_type = 12;
    int templates_per_type = 24;  // (scene, linker) combinations per type
    int dev_per_type = 100;
    int test_per_type = 120;
    double min_skew = 0.72;
    double max_skew = 0.95;
    int corpus_samples = 24000;
    double filler_fraction = 0.25;
};

struct SyntheticWorld {
    std::vector<std::string> words;  // stable vocabulary order
    std::vector<StereoInstance> train, dev, test;
    std::vector<std::string> corpus;

    Vocabulary make_vocab() const { return Vocabulary(words); }
};

SyntheticWorld make_synthetic_world(const SyntheticSpec& spec = {});

// Bigram MLE over the world's corpus with add-epsilon smoothing; mirrors the
// skew statistics the tiny model is pretrained on.
BigramStubModel make_skewed_stub(const SyntheticWorld& world, std::string base_id,
                                 double smoothing = 0.05);

// Writes <dir>/train.jsonl, dev.jsonl, test.jsonl in the dataset schema.
void write_stereoset_dir(const SyntheticWorld& world, const std::filesystem::path& dir);
void write_corpus_file(const SyntheticWorld& world, const std::filesystem::path& path);

}  // namespace debias

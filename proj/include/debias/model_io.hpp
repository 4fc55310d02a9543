#pragma once

#include <filesystem>
#include <memory>

#include "debias/scoring.hpp"
#include "debias/stub_model.hpp"
#include "debias/tiny_model.hpp"

namespace debias {

/**
 * Model directory layout: manifest.json (kind, base_id, vocab, dims) plus
 * weights.bin, a little-endian float32 blob in tensor-table order.
 */
void save_model(const BigramStubModel& model, const std::filesystem::path& dir);
void save_model(const TinyTransformerModel& model, const std::filesystem::path& dir);

// Dispatches on manifest "kind" ("stub" or "tiny").
std::unique_ptr<LanguageModel> load_model(const std::filesystem::path& dir);

}  // namespace debias

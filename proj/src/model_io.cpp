#include "debias/model_io.hpp"

#include <json.hpp>

#include "debias/errors.hpp"
#include "debias/util.hpp"

namespace debias {

using nlohmann::json;

namespace {

json base_manifest(const char* kind, const std::string& base_id, const Vocabulary& vocab) {
    // reserved specials are implied; persist only the real words
    std::vector<std::string> words(vocab.tokens().begin() + 2, vocab.tokens().end());
    return json{{"format", "debias-model-v1"}, {"kind", kind}, {"base_id", base_id}, {"vocab", words}};
}

json load_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.json";
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw DataFormatError("corrupt model manifest " + path.string() + ": " + e.what());
    }
}

}  // namespace

void save_model(const BigramStubModel& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest = base_manifest("stub", model.base_id(), model.vocab());
    manifest["context_window"] = model.context_window();
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
    write_f32_blob(dir / "weights.bin", model.base_logits());
}

void save_model(const TinyTransformerModel& model, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json manifest = base_manifest("tiny", model.base_id(), model.vocab());
    const auto& cfg = model.config();
    manifest["config"] = {{"d_model", cfg.d_model},
                          {"n_layers", cfg.n_layers},
                          {"n_heads", cfg.n_heads},
                          {"d_ff", cfg.d_ff},
                          {"max_seq", cfg.max_seq}};
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
    write_f32_blob(dir / "weights.bin", model.raw_params());
}

std::unique_ptr<LanguageModel> load_model(const std::filesystem::path& dir) {
    const json manifest = load_manifest(dir);
    try {
        const std::string kind = manifest.at("kind").get<std::string>();
        const std::string base_id = manifest.at("base_id").get<std::string>();
        Vocabulary vocab(manifest.at("vocab").get<std::vector<std::string>>());
        if (kind == "stub") {
            const int window = manifest.value("context_window", 4096);
            const size_t v = static_cast<size_t>(vocab.size());
            auto logits = read_f32_blob(dir / "weights.bin", v * v);
            return std::make_unique<BigramStubModel>(base_id, std::move(vocab), std::move(logits),
                                                     window);
        }
        if (kind == "tiny") {
            const auto& cj = manifest.at("config");
            TinyTransformerModel::Config cfg;
            cfg.vocab_size = vocab.size();
            cfg.d_model = cj.at("d_model").get<int>();
            cfg.n_layers = cj.at("n_layers").get<int>();
            cfg.n_heads = cj.at("n_heads").get<int>();
            cfg.d_ff = cj.at("d_ff").get<int>();
            cfg.max_seq = cj.at("max_seq").get<int>();
            auto model = std::make_unique<TinyTransformerModel>(base_id, std::move(vocab), cfg, 0);
            model->load_params(read_f32_blob(dir / "weights.bin", model->raw_params().size()));
            return model;
        }
        throw DataFormatError("unknown model kind '" + kind + "' in " + dir.string());
    } catch (const json::exception& e) {
        throw DataFormatError("corrupt model manifest in " + dir.string() + ": " + e.what());
    }
}

}  // namespace debias

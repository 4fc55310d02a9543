#include "debias/lora.hpp"

#include <random>

#include <json.hpp>

#include "debias/errors.hpp"
#include "debias/util.hpp"

namespace debias {

using nlohmann::json;

void LoraMatrix::init(uint64_t seed) {
    a.assign(static_cast<size_t>(rank) * cols, 0.0f);
    b.assign(static_cast<size_t>(rows) * rank, 0.0f);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, 0.02f);
    for (auto& v : a) v = dist(rng);
    zero_grads();
}

void LoraMatrix::zero_grads() {
    grad_a.assign(a.size(), 0.0);
    grad_b.assign(b.size(), 0.0);
}

double LoraMatrix::delta(int r, int c) const {
    double acc = 0.0;
    for (int k = 0; k < rank; ++k) {
        acc += static_cast<double>(b[static_cast<size_t>(r) * rank + k]) *
               static_cast<double>(a[static_cast<size_t>(k) * cols + c]);
    }
    return acc;
}

void LoraMatrix::accumulate_row_grad(int r, const std::vector<double>& g) {
    for (int k = 0; k < rank; ++k) {
        const size_t arow = static_cast<size_t>(k) * cols;
        double gb = 0.0;
        for (int v = 0; v < cols; ++v) gb += g[static_cast<size_t>(v)] * a[arow + v];
        grad_b[static_cast<size_t>(r) * rank + k] += gb;
        const double bk = b[static_cast<size_t>(r) * rank + k];
        if (bk != 0.0) {
            for (int v = 0; v < cols; ++v) grad_a[arow + v] += bk * g[static_cast<size_t>(v)];
        }
    }
}

LoraMatrix* AdapterSet::find(const std::string& name) {
    for (auto& m : mats)
        if (m.name == name) return &m;
    return nullptr;
}

const LoraMatrix* AdapterSet::find(const std::string& name) const {
    for (const auto& m : mats)
        if (m.name == name) return &m;
    return nullptr;
}

void AdapterSet::zero_grads() {
    for (auto& m : mats) m.zero_grads();
}

size_t AdapterSet::param_count() const {
    size_t n = 0;
    for (const auto& m : mats) n += m.a.size() + m.b.size();
    return n;
}

namespace {

std::string blob_name(const std::string& matrix_name, const char* suffix) {
    std::string s = matrix_name;
    for (auto& c : s)
        if (c == '/' || c == '\\') c = '_';
    return s + suffix;
}

}  // namespace

void AdapterCheckpoint::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "debias-adapter-v1";
    manifest["base_id"] = base_id;
    manifest["rank"] = rank;
    json mats_j = json::array();
    for (const auto& m : mats) {
        mats_j.push_back({{"name", m.name}, {"rows", m.rows}, {"cols", m.cols}, {"rank", m.rank}});
        write_f32_blob(dir / blob_name(m.name, ".A.bin"), m.a);
        write_f32_blob(dir / blob_name(m.name, ".B.bin"), m.b);
    }
    manifest["matrices"] = mats_j;
    manifest["metadata"] = {
        {"training_step", meta.training_step},
        {"loss_weights",
         {{"alpha1", meta.alpha1}, {"alpha2", meta.alpha2}, {"alpha3", meta.alpha3}, {"beta", meta.beta}}},
        {"swap_log_digest", meta.swap_log_digest},
        {"seed", meta.seed},
        {"lineage", meta.lineage},
    };
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

AdapterCheckpoint AdapterCheckpoint::load(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    json manifest;
    try {
        manifest = json::parse(read_text_file(manifest_path));
    } catch (const json::parse_error& e) {
        throw DataFormatError("corrupt adapter manifest " + manifest_path.string() + ": " + e.what());
    }
    AdapterCheckpoint ckpt;
    try {
        ckpt.base_id = manifest.at("base_id").get<std::string>();
        ckpt.rank = manifest.at("rank").get<int>();
        for (const auto& mj : manifest.at("matrices")) {
            LoraMatrix m;
            m.name = mj.at("name").get<std::string>();
            m.rows = mj.at("rows").get<int>();
            m.cols = mj.at("cols").get<int>();
            m.rank = mj.at("rank").get<int>();
            if (m.rows <= 0 || m.cols <= 0 || m.rank <= 0)
                throw DataFormatError("non-positive shape for matrix " + m.name);
            m.a = read_f32_blob(dir / blob_name(m.name, ".A.bin"),
                                static_cast<size_t>(m.rank) * m.cols);
            m.b = read_f32_blob(dir / blob_name(m.name, ".B.bin"),
                                static_cast<size_t>(m.rows) * m.rank);
            ckpt.mats.push_back(std::move(m));
        }
        const auto& meta = manifest.at("metadata");
        ckpt.meta.training_step = meta.at("training_step").get<int64_t>();
        const auto& lw = meta.at("loss_weights");
        ckpt.meta.alpha1 = lw.at("alpha1").get<double>();
        ckpt.meta.alpha2 = lw.at("alpha2").get<double>();
        ckpt.meta.alpha3 = lw.at("alpha3").get<double>();
        ckpt.meta.beta = lw.at("beta").get<double>();
        ckpt.meta.swap_log_digest = meta.at("swap_log_digest").get<std::string>();
        ckpt.meta.seed = meta.at("seed").get<uint64_t>();
        ckpt.meta.lineage = meta.at("lineage").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataFormatError("corrupt adapter manifest " + manifest_path.string() + ": " + e.what());
    }
    return ckpt;
}

}  // namespace debias

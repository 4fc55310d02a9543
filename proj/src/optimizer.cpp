#include "debias/optimizer.hpp"

#include <cmath>
#include <fstream>

#include "debias/errors.hpp"
#include "debias/lora.hpp"

namespace debias {

AdamW::AdamW(size_t param_count, Config cfg)
    : cfg_(cfg), m_(param_count, 0.0), v_(param_count, 0.0) {}

void AdamW::begin_step(double lr) {
    ++t_;
    lr_ = lr;
    cursor_ = 0;
}

void AdamW::update(std::span<float> w, std::span<const double> g) {
    if (w.size() != g.size()) throw ConfigError("optimizer segment size mismatch");
    if (cursor_ + w.size() > m_.size()) throw ConfigError("optimizer state overflow");
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < w.size(); ++i) {
        const size_t s = cursor_ + i;
        m_[s] = cfg_.beta1 * m_[s] + (1.0 - cfg_.beta1) * g[i];
        v_[s] = cfg_.beta2 * v_[s] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m_[s] / bc1;
        const double vhat = v_[s] / bc2;
        const double wd = cfg_.weight_decay * static_cast<double>(w[i]);
        w[i] = static_cast<float>(static_cast<double>(w[i]) -
                                  lr_ * (mhat / (std::sqrt(vhat) + cfg_.eps) + wd));
    }
    cursor_ += w.size();
}

void AdamW::step(AdapterSet& adapter, double lr) {
    begin_step(lr);
    for (auto& mat : adapter.mats) {
        update(mat.a, mat.grad_a);
        update(mat.b, mat.grad_b);
    }
}

void AdamW::save(const std::filesystem::path& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write optimizer state: " + path.string());
    const uint64_t n = m_.size();
    f.write(reinterpret_cast<const char*>(&t_), sizeof(t_));
    f.write(reinterpret_cast<const char*>(&n), sizeof(n));
    f.write(reinterpret_cast<const char*>(m_.data()), static_cast<std::streamsize>(n * sizeof(double)));
    f.write(reinterpret_cast<const char*>(v_.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw ConfigError("short write: " + path.string());
}

AdamW AdamW::load(const std::filesystem::path& path, Config cfg) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataFormatError("cannot open optimizer state: " + path.string());
    int64_t t = 0;
    uint64_t n = 0;
    f.read(reinterpret_cast<char*>(&t), sizeof(t));
    f.read(reinterpret_cast<char*>(&n), sizeof(n));
    AdamW opt(static_cast<size_t>(n), cfg);
    opt.t_ = t;
    f.read(reinterpret_cast<char*>(opt.m_.data()), static_cast<std::streamsize>(n * sizeof(double)));
    f.read(reinterpret_cast<char*>(opt.v_.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!f) throw DataFormatError("truncated optimizer state: " + path.string());
    return opt;
}

double linear_lr(double lr0, int step, int max_steps) {
    if (max_steps <= 0) return lr0;
    const double frac = 1.0 - static_cast<double>(step - 1) / static_cast<double>(max_steps);
    return lr0 * std::max(0.0, frac);
}

}  // namespace debias

#include "debias/tiny_model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "debias/errors.hpp"
#include "debias/util.hpp"

namespace debias {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

void layernorm_forward(const float* g, const float* b, const double* x, double* y, double* mean,
                       double* rstd, int n) {
    double mu = 0.0;
    for (int i = 0; i < n; ++i) mu += x[i];
    mu /= n;
    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= n;
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    for (int i = 0; i < n; ++i) y[i] = (x[i] - mu) * rs * g[i] + b[i];
    *mean = mu;
    *rstd = rs;
}

// dg/db may be null (adapter mode: layernorm params frozen).
void layernorm_backward(const float* g, const double* x, double mean, double rstd,
                        const double* dy, double* dx, double* dg, double* db, int n) {
    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
    for (int i = 0; i < n; ++i) {
        const double xhat = (x[i] - mean) * rstd;
        const double dxhat = dy[i] * g[i];
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * xhat;
        if (dg != nullptr) dg[i] += dy[i] * xhat;
        if (db != nullptr) db[i] += dy[i];
    }
    for (int i = 0; i < n; ++i) {
        const double xhat = (x[i] - mean) * rstd;
        const double dxhat = dy[i] * g[i];
        dx[i] += rstd * (dxhat - sum_dxhat / n - xhat * sum_dxhat_xhat / n);
    }
}

double gelu(double x) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
    const double u = kGeluC * (x + 0.044715 * x * x * x);
    const double t = std::tanh(u);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * 0.044715 * x * x);
}

std::vector<double> log_softmax_row(const double* logits, int n) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double z = 0.0;
    for (int i = 0; i < n; ++i) z += std::exp(logits[i] - mx);
    const double log_z = std::log(z) + mx;
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = logits[i] - log_z;
    return out;
}

}  // namespace

struct TinyTransformerModel::Cache {
    std::vector<int> ids;
    int T = 0;
    bool use_adapter = false;

    struct LayerCache {
        std::vector<double> x_in, ln1_out, ln1_mean, ln1_rstd;
        std::vector<double> q, k, v, probs, ctx;  // probs: heads * T * T
        std::vector<double> x_mid, ln2_out, ln2_mean, ln2_rstd;
        std::vector<double> fc1_pre, gelu_out;
        std::vector<double> ax_q, ax_k, ax_v, ax_o;  // T * rank
    };
    std::vector<LayerCache> layers;
    std::vector<double> x_final, lnf_out, lnf_mean, lnf_rstd;
    std::vector<double> ax_head;
    std::vector<double> logits;  // T * vocab
};

TinyTransformerModel::TinyTransformerModel(std::string base_id, Vocabulary vocab, Config cfg,
                                           uint64_t init_seed)
    : base_id_(std::move(base_id)), vocab_(std::move(vocab)), cfg_(cfg) {
    if (cfg_.vocab_size == 0) cfg_.vocab_size = vocab_.size();
    if (cfg_.vocab_size != vocab_.size())
        throw ConfigError("config vocab_size disagrees with vocabulary");
    if (cfg_.d_model % cfg_.n_heads != 0)
        throw ConfigError("d_model must be divisible by n_heads");
    build_tensor_table();
    size_t total = 0;
    for (const auto& t : tensors_) total += static_cast<size_t>(t.rows) * t.cols;
    params_.assign(total, 0.0f);

    std::mt19937_64 rng(init_seed);
    std::normal_distribution<float> w_init(0.0f, 0.02f);
    for (const auto& t : tensors_) {
        float* p = params_.data() + t.offset;
        const size_t n = static_cast<size_t>(t.rows) * t.cols;
        const bool is_ln_gain = t.name.find("ln") != std::string::npos && t.name.ends_with(".g");
        const bool is_bias = t.cols == 1 && !is_ln_gain;
        if (is_ln_gain) {
            for (size_t i = 0; i < n; ++i) p[i] = 1.0f;
        } else if (is_bias) {
            // zero
        } else {
            for (size_t i = 0; i < n; ++i) p[i] = w_init(rng);
        }
    }
}

void TinyTransformerModel::build_tensor_table() {
    const int d = cfg_.d_model, ff = cfg_.d_ff, v = cfg_.vocab_size;
    size_t off = 0;
    auto add = [&](const std::string& name, int rows, int cols) {
        tensors_.push_back({name, off, rows, cols});
        off += static_cast<size_t>(rows) * cols;
    };
    add("wte", v, d);
    add("wpe", cfg_.max_seq, d);
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        add(p + "ln1.g", d, 1);
        add(p + "ln1.b", d, 1);
        add(p + "attn.wq", d, d);
        add(p + "attn.bq", d, 1);
        add(p + "attn.wk", d, d);
        add(p + "attn.bk", d, 1);
        add(p + "attn.wv", d, d);
        add(p + "attn.bv", d, 1);
        add(p + "attn.wo", d, d);
        add(p + "attn.bo", d, 1);
        add(p + "ln2.g", d, 1);
        add(p + "ln2.b", d, 1);
        add(p + "mlp.w1", ff, d);
        add(p + "mlp.b1", ff, 1);
        add(p + "mlp.w2", d, ff);
        add(p + "mlp.b2", d, 1);
    }
    add("lnf.g", d, 1);
    add("lnf.b", d, 1);
    add("head", v, d);
}

size_t TinyTransformerModel::tensor_offset(const std::string& name) const {
    for (const auto& t : tensors_)
        if (t.name == name) return t.offset;
    throw ConfigError("unknown tensor: " + name);
}

std::vector<MatrixShape> TinyTransformerModel::adapter_sites() const {
    std::vector<MatrixShape> sites;
    const int d = cfg_.d_model;
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".attn.";
        for (const char* w : {"wq", "wk", "wv", "wo"}) sites.push_back({p + w, d, d});
    }
    sites.push_back({"head", cfg_.vocab_size, d});
    return sites;
}

std::vector<std::string> TinyTransformerModel::default_adapter_targets() const {
    std::vector<std::string> names;
    for (int l = 0; l < cfg_.n_layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".attn.";
        for (const char* w : {"wq", "wk", "wv", "wo"}) names.push_back(p + w);
    }
    return names;
}

void TinyTransformerModel::attach_adapter(const AdapterConfig& cfg) {
    if (cfg.rank < 1) throw ConfigError("adapter rank must be >= 1");
    std::vector<std::string> targets =
        cfg.target_names.empty() ? default_adapter_targets() : cfg.target_names;
    const auto sites = adapter_sites();
    auto set = std::make_unique<AdapterSet>();
    set->rank = cfg.rank;
    uint64_t salt = 0;
    for (const auto& name : targets) {
        const MatrixShape* site = nullptr;
        for (const auto& s : sites)
            if (s.name == name) site = &s;
        if (site == nullptr) throw ConfigError("no adapter site named '" + name + "'");
        LoraMatrix m;
        m.name = name;
        m.rows = site->rows;
        m.cols = site->cols;
        m.rank = cfg.rank;
        m.init(mix_seed(cfg.seed, ++salt));
        set->mats.push_back(std::move(m));
    }
    adapter_ = std::move(set);
}

const LoraMatrix* TinyTransformerModel::site_lora(const std::string& name, bool use_adapter) const {
    if (!use_adapter || !adapter_) return nullptr;
    return adapter_->find(name);
}

namespace {

// y = W x (+ b) with optional low-rank delta; caches A x when present.
void linear_forward(const float* w, const float* b, const double* x, double* y, int out, int in,
                    const LoraMatrix* lora, double* ax_cache) {
    for (int o = 0; o < out; ++o) {
        double acc = b != nullptr ? static_cast<double>(b[o]) : 0.0;
        const float* row = w + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) acc += static_cast<double>(row[i]) * x[i];
        y[o] = acc;
    }
    if (lora != nullptr) {
        const int r = lora->rank;
        for (int k = 0; k < r; ++k) {
            double acc = 0.0;
            const float* arow = lora->a.data() + static_cast<size_t>(k) * in;
            for (int i = 0; i < in; ++i) acc += static_cast<double>(arow[i]) * x[i];
            ax_cache[k] = acc;
        }
        for (int o = 0; o < out; ++o) {
            double acc = 0.0;
            const float* brow = lora->b.data() + static_cast<size_t>(o) * r;
            for (int k = 0; k < r; ++k) acc += static_cast<double>(brow[k]) * ax_cache[k];
            y[o] += acc;
        }
    }
}

// Backward through the same linear. dw/db are null in adapter mode; lora_grad
// is null in full mode.
void linear_backward(const float* w, const double* x, const double* ax, const double* dy,
                     double* dx, double* dw, double* db, LoraMatrix* lora_grad, int out, int in) {
    for (int o = 0; o < out; ++o) {
        const double g = dy[o];
        if (g == 0.0) continue;
        const float* row = w + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) dx[i] += static_cast<double>(row[i]) * g;
        if (dw != nullptr) {
            double* drow = dw + static_cast<size_t>(o) * in;
            for (int i = 0; i < in; ++i) drow[i] += g * x[i];
        }
        if (db != nullptr) db[o] += g;
    }
    if (lora_grad != nullptr) {
        const int r = lora_grad->rank;
        std::vector<double> dax(static_cast<size_t>(r), 0.0);
        for (int o = 0; o < out; ++o) {
            const double g = dy[o];
            if (g == 0.0) continue;
            const float* brow = lora_grad->b.data() + static_cast<size_t>(o) * r;
            double* dbrow = lora_grad->grad_b.data() + static_cast<size_t>(o) * r;
            for (int k = 0; k < r; ++k) {
                dbrow[k] += g * ax[k];
                dax[static_cast<size_t>(k)] += static_cast<double>(brow[k]) * g;
            }
        }
        for (int k = 0; k < r; ++k) {
            const double gk = dax[static_cast<size_t>(k)];
            if (gk == 0.0) continue;
            const float* arow = lora_grad->a.data() + static_cast<size_t>(k) * in;
            double* darow = lora_grad->grad_a.data() + static_cast<size_t>(k) * in;
            for (int i = 0; i < in; ++i) {
                darow[i] += gk * x[i];
                dx[i] += static_cast<double>(arow[i]) * gk;
            }
        }
    }
}

}  // namespace

void TinyTransformerModel::forward(const std::vector<int>& ids, bool use_adapter,
                                   Cache& cache) const {
    const int T = static_cast<int>(ids.size());
    const int d = cfg_.d_model, ff = cfg_.d_ff, v = cfg_.vocab_size;
    const int nh = cfg_.n_heads, dh = d / nh;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const int rank = adapter_ ? adapter_->rank : 0;

    cache.ids = ids;
    cache.T = T;
    cache.use_adapter = use_adapter;
    cache.layers.assign(static_cast<size_t>(cfg_.n_layers), {});

    const float* wte = params_.data() + tensor_offset("wte");
    const float* wpe = params_.data() + tensor_offset("wpe");

    std::vector<double> x(static_cast<size_t>(T) * d);
    for (int t = 0; t < T; ++t) {
        const float* te = wte + static_cast<size_t>(ids[static_cast<size_t>(t)]) * d;
        const float* pe = wpe + static_cast<size_t>(t) * d;
        for (int i = 0; i < d; ++i)
            x[static_cast<size_t>(t) * d + i] = static_cast<double>(te[i]) + pe[i];
    }

    for (int l = 0; l < cfg_.n_layers; ++l) {
        auto& lc = cache.layers[static_cast<size_t>(l)];
        const std::string p = "layers." + std::to_string(l) + ".";
        lc.x_in = x;
        lc.ln1_out.assign(static_cast<size_t>(T) * d, 0.0);
        lc.ln1_mean.assign(static_cast<size_t>(T), 0.0);
        lc.ln1_rstd.assign(static_cast<size_t>(T), 0.0);
        const float* ln1g = params_.data() + tensor_offset(p + "ln1.g");
        const float* ln1b = params_.data() + tensor_offset(p + "ln1.b");
        for (int t = 0; t < T; ++t) {
            layernorm_forward(ln1g, ln1b, &lc.x_in[static_cast<size_t>(t) * d],
                              &lc.ln1_out[static_cast<size_t>(t) * d], &lc.ln1_mean[static_cast<size_t>(t)],
                              &lc.ln1_rstd[static_cast<size_t>(t)], d);
        }

        lc.q.assign(static_cast<size_t>(T) * d, 0.0);
        lc.k.assign(static_cast<size_t>(T) * d, 0.0);
        lc.v.assign(static_cast<size_t>(T) * d, 0.0);
        if (rank > 0) {
            lc.ax_q.assign(static_cast<size_t>(T) * rank, 0.0);
            lc.ax_k.assign(static_cast<size_t>(T) * rank, 0.0);
            lc.ax_v.assign(static_cast<size_t>(T) * rank, 0.0);
            lc.ax_o.assign(static_cast<size_t>(T) * rank, 0.0);
        }
        const float* wq = params_.data() + tensor_offset(p + "attn.wq");
        const float* bq = params_.data() + tensor_offset(p + "attn.bq");
        const float* wk = params_.data() + tensor_offset(p + "attn.wk");
        const float* bk = params_.data() + tensor_offset(p + "attn.bk");
        const float* wv = params_.data() + tensor_offset(p + "attn.wv");
        const float* bv = params_.data() + tensor_offset(p + "attn.bv");
        const LoraMatrix* lq = site_lora(p + "attn.wq", use_adapter);
        const LoraMatrix* lk = site_lora(p + "attn.wk", use_adapter);
        const LoraMatrix* lv = site_lora(p + "attn.wv", use_adapter);
        for (int t = 0; t < T; ++t) {
            const double* in = &lc.ln1_out[static_cast<size_t>(t) * d];
            linear_forward(wq, bq, in, &lc.q[static_cast<size_t>(t) * d], d, d, lq,
                           rank > 0 ? &lc.ax_q[static_cast<size_t>(t) * rank] : nullptr);
            linear_forward(wk, bk, in, &lc.k[static_cast<size_t>(t) * d], d, d, lk,
                           rank > 0 ? &lc.ax_k[static_cast<size_t>(t) * rank] : nullptr);
            linear_forward(wv, bv, in, &lc.v[static_cast<size_t>(t) * d], d, d, lv,
                           rank > 0 ? &lc.ax_v[static_cast<size_t>(t) * rank] : nullptr);
        }

        lc.probs.assign(static_cast<size_t>(nh) * T * T, 0.0);
        lc.ctx.assign(static_cast<size_t>(T) * d, 0.0);
        for (int h = 0; h < nh; ++h) {
            const int hoff = h * dh;
            for (int i = 0; i < T; ++i) {
                double mx = -1e30;
                std::vector<double> s(static_cast<size_t>(i) + 1);
                for (int j = 0; j <= i; ++j) {
                    double acc = 0.0;
                    const double* qi = &lc.q[static_cast<size_t>(i) * d + hoff];
                    const double* kj = &lc.k[static_cast<size_t>(j) * d + hoff];
                    for (int c = 0; c < dh; ++c) acc += qi[c] * kj[c];
                    s[static_cast<size_t>(j)] = acc * scale;
                    mx = std::max(mx, s[static_cast<size_t>(j)]);
                }
                double z = 0.0;
                for (int j = 0; j <= i; ++j) z += std::exp(s[static_cast<size_t>(j)] - mx);
                double* prow = &lc.probs[(static_cast<size_t>(h) * T + i) * T];
                for (int j = 0; j <= i; ++j)
                    prow[j] = std::exp(s[static_cast<size_t>(j)] - mx) / z;
                double* ci = &lc.ctx[static_cast<size_t>(i) * d + hoff];
                for (int j = 0; j <= i; ++j) {
                    const double* vj = &lc.v[static_cast<size_t>(j) * d + hoff];
                    for (int c = 0; c < dh; ++c) ci[c] += prow[j] * vj[c];
                }
            }
        }

        const float* wo = params_.data() + tensor_offset(p + "attn.wo");
        const float* bo = params_.data() + tensor_offset(p + "attn.bo");
        const LoraMatrix* lo = site_lora(p + "attn.wo", use_adapter);
        lc.x_mid.assign(static_cast<size_t>(T) * d, 0.0);
        std::vector<double> attn_out(static_cast<size_t>(d));
        for (int t = 0; t < T; ++t) {
            linear_forward(wo, bo, &lc.ctx[static_cast<size_t>(t) * d], attn_out.data(), d, d, lo,
                           rank > 0 ? &lc.ax_o[static_cast<size_t>(t) * rank] : nullptr);
            for (int i = 0; i < d; ++i)
                lc.x_mid[static_cast<size_t>(t) * d + i] =
                    lc.x_in[static_cast<size_t>(t) * d + i] + attn_out[static_cast<size_t>(i)];
        }

        lc.ln2_out.assign(static_cast<size_t>(T) * d, 0.0);
        lc.ln2_mean.assign(static_cast<size_t>(T), 0.0);
        lc.ln2_rstd.assign(static_cast<size_t>(T), 0.0);
        const float* ln2g = params_.data() + tensor_offset(p + "ln2.g");
        const float* ln2b = params_.data() + tensor_offset(p + "ln2.b");
        for (int t = 0; t < T; ++t) {
            layernorm_forward(ln2g, ln2b, &lc.x_mid[static_cast<size_t>(t) * d],
                              &lc.ln2_out[static_cast<size_t>(t) * d], &lc.ln2_mean[static_cast<size_t>(t)],
                              &lc.ln2_rstd[static_cast<size_t>(t)], d);
        }

        const float* w1 = params_.data() + tensor_offset(p + "mlp.w1");
        const float* b1 = params_.data() + tensor_offset(p + "mlp.b1");
        const float* w2 = params_.data() + tensor_offset(p + "mlp.w2");
        const float* b2 = params_.data() + tensor_offset(p + "mlp.b2");
        lc.fc1_pre.assign(static_cast<size_t>(T) * ff, 0.0);
        lc.gelu_out.assign(static_cast<size_t>(T) * ff, 0.0);
        std::vector<double> mlp_out(static_cast<size_t>(d));
        for (int t = 0; t < T; ++t) {
            linear_forward(w1, b1, &lc.ln2_out[static_cast<size_t>(t) * d],
                           &lc.fc1_pre[static_cast<size_t>(t) * ff], ff, d, nullptr, nullptr);
            for (int i = 0; i < ff; ++i)
                lc.gelu_out[static_cast<size_t>(t) * ff + i] =
                    gelu(lc.fc1_pre[static_cast<size_t>(t) * ff + i]);
            linear_forward(w2, b2, &lc.gelu_out[static_cast<size_t>(t) * ff], mlp_out.data(), d, ff,
                           nullptr, nullptr);
            for (int i = 0; i < d; ++i)
                x[static_cast<size_t>(t) * d + i] =
                    lc.x_mid[static_cast<size_t>(t) * d + i] + mlp_out[static_cast<size_t>(i)];
        }
    }

    cache.x_final = x;
    cache.lnf_out.assign(static_cast<size_t>(T) * d, 0.0);
    cache.lnf_mean.assign(static_cast<size_t>(T), 0.0);
    cache.lnf_rstd.assign(static_cast<size_t>(T), 0.0);
    const float* lnfg = params_.data() + tensor_offset("lnf.g");
    const float* lnfb = params_.data() + tensor_offset("lnf.b");
    for (int t = 0; t < T; ++t) {
        layernorm_forward(lnfg, lnfb, &cache.x_final[static_cast<size_t>(t) * d],
                          &cache.lnf_out[static_cast<size_t>(t) * d], &cache.lnf_mean[static_cast<size_t>(t)],
                          &cache.lnf_rstd[static_cast<size_t>(t)], d);
    }

    const float* head = params_.data() + tensor_offset("head");
    const LoraMatrix* lh = site_lora("head", use_adapter);
    if (rank > 0) cache.ax_head.assign(static_cast<size_t>(T) * rank, 0.0);
    cache.logits.assign(static_cast<size_t>(T) * v, 0.0);
    for (int t = 0; t < T; ++t) {
        linear_forward(head, nullptr, &cache.lnf_out[static_cast<size_t>(t) * d],
                       &cache.logits[static_cast<size_t>(t) * v], v, d, lh,
                       rank > 0 ? &cache.ax_head[static_cast<size_t>(t) * rank] : nullptr);
    }
}

void TinyTransformerModel::backward(Cache& cache, const std::vector<std::vector<double>>& dlogits,
                                    GradMode mode) {
    const int T = cache.T;
    const int d = cfg_.d_model, ff = cfg_.d_ff, v = cfg_.vocab_size;
    const int nh = cfg_.n_heads, dh = d / nh;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const int rank = adapter_ ? adapter_->rank : 0;
    const bool full = mode == GradMode::full;
    if (full && full_grads_.empty()) throw ConfigError("full gradients not enabled");

    auto grad_of = [&](const std::string& name) -> double* {
        return full ? full_grads_.data() + tensor_offset(name) : nullptr;
    };
    auto lora_of = [&](const std::string& name) -> LoraMatrix* {
        if (full || !adapter_ || !cache.use_adapter) return nullptr;
        return adapter_->find(name);
    };

    // head + final layernorm
    std::vector<double> dlnf_out(static_cast<size_t>(T) * d, 0.0);
    const float* head = params_.data() + tensor_offset("head");
    for (int t = 0; t < T; ++t) {
        if (dlogits[static_cast<size_t>(t)].empty()) continue;
        linear_backward(head, &cache.lnf_out[static_cast<size_t>(t) * d],
                        rank > 0 ? &cache.ax_head[static_cast<size_t>(t) * rank] : nullptr,
                        dlogits[static_cast<size_t>(t)].data(), &dlnf_out[static_cast<size_t>(t) * d],
                        grad_of("head"), nullptr, lora_of("head"), v, d);
    }

    std::vector<double> dx(static_cast<size_t>(T) * d, 0.0);
    const float* lnfg = params_.data() + tensor_offset("lnf.g");
    for (int t = 0; t < T; ++t) {
        layernorm_backward(lnfg, &cache.x_final[static_cast<size_t>(t) * d],
                           cache.lnf_mean[static_cast<size_t>(t)], cache.lnf_rstd[static_cast<size_t>(t)],
                           &dlnf_out[static_cast<size_t>(t) * d], &dx[static_cast<size_t>(t) * d],
                           grad_of("lnf.g"), grad_of("lnf.b"), d);
    }

    for (int l = cfg_.n_layers - 1; l >= 0; --l) {
        auto& lc = cache.layers[static_cast<size_t>(l)];
        const std::string p = "layers." + std::to_string(l) + ".";

        // ---- MLP block: x = x_mid + w2 gelu(w1 ln2(x_mid) + b1) + b2 ----
        const float* w1 = params_.data() + tensor_offset(p + "mlp.w1");
        const float* w2 = params_.data() + tensor_offset(p + "mlp.w2");
        std::vector<double> dgelu(static_cast<size_t>(ff));
        std::vector<double> dfc1(static_cast<size_t>(ff));
        std::vector<double> dln2_out(static_cast<size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t) {
            std::fill(dgelu.begin(), dgelu.end(), 0.0);
            linear_backward(w2, &lc.gelu_out[static_cast<size_t>(t) * ff], nullptr,
                            &dx[static_cast<size_t>(t) * d], dgelu.data(), grad_of(p + "mlp.w2"),
                            grad_of(p + "mlp.b2"), nullptr, d, ff);
            for (int i = 0; i < ff; ++i)
                dfc1[static_cast<size_t>(i)] =
                    dgelu[static_cast<size_t>(i)] * gelu_grad(lc.fc1_pre[static_cast<size_t>(t) * ff + i]);
            linear_backward(w1, &lc.ln2_out[static_cast<size_t>(t) * d], nullptr, dfc1.data(),
                            &dln2_out[static_cast<size_t>(t) * d], grad_of(p + "mlp.w1"),
                            grad_of(p + "mlp.b1"), nullptr, ff, d);
        }
        // residual: d(x_mid) accumulates both paths
        std::vector<double> dx_mid = dx;
        const float* ln2g = params_.data() + tensor_offset(p + "ln2.g");
        for (int t = 0; t < T; ++t) {
            layernorm_backward(ln2g, &lc.x_mid[static_cast<size_t>(t) * d],
                               lc.ln2_mean[static_cast<size_t>(t)], lc.ln2_rstd[static_cast<size_t>(t)],
                               &dln2_out[static_cast<size_t>(t) * d], &dx_mid[static_cast<size_t>(t) * d],
                               grad_of(p + "ln2.g"), grad_of(p + "ln2.b"), d);
        }

        // ---- attention block: x_mid = x_in + wo ctx + bo ----
        const float* wo = params_.data() + tensor_offset(p + "attn.wo");
        std::vector<double> dctx(static_cast<size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t) {
            linear_backward(wo, &lc.ctx[static_cast<size_t>(t) * d],
                            rank > 0 ? &lc.ax_o[static_cast<size_t>(t) * rank] : nullptr,
                            &dx_mid[static_cast<size_t>(t) * d], &dctx[static_cast<size_t>(t) * d],
                            grad_of(p + "attn.wo"), grad_of(p + "attn.bo"), lora_of(p + "attn.wo"),
                            d, d);
        }

        std::vector<double> dq(static_cast<size_t>(T) * d, 0.0);
        std::vector<double> dk(static_cast<size_t>(T) * d, 0.0);
        std::vector<double> dv(static_cast<size_t>(T) * d, 0.0);
        for (int h = 0; h < nh; ++h) {
            const int hoff = h * dh;
            for (int i = 0; i < T; ++i) {
                const double* prow = &lc.probs[(static_cast<size_t>(h) * T + i) * T];
                const double* dctx_i = &dctx[static_cast<size_t>(i) * d + hoff];
                std::vector<double> dp(static_cast<size_t>(i) + 1, 0.0);
                for (int j = 0; j <= i; ++j) {
                    const double* vj = &lc.v[static_cast<size_t>(j) * d + hoff];
                    double* dvj = &dv[static_cast<size_t>(j) * d + hoff];
                    double acc = 0.0;
                    for (int c = 0; c < dh; ++c) {
                        dvj[c] += prow[j] * dctx_i[c];
                        acc += vj[c] * dctx_i[c];
                    }
                    dp[static_cast<size_t>(j)] = acc;
                }
                double dot = 0.0;
                for (int j = 0; j <= i; ++j) dot += prow[j] * dp[static_cast<size_t>(j)];
                for (int j = 0; j <= i; ++j) {
                    const double ds = prow[j] * (dp[static_cast<size_t>(j)] - dot);
                    const double* kj = &lc.k[static_cast<size_t>(j) * d + hoff];
                    const double* qi = &lc.q[static_cast<size_t>(i) * d + hoff];
                    double* dqi = &dq[static_cast<size_t>(i) * d + hoff];
                    double* dkj = &dk[static_cast<size_t>(j) * d + hoff];
                    for (int c = 0; c < dh; ++c) {
                        dqi[c] += ds * kj[c] * scale;
                        dkj[c] += ds * qi[c] * scale;
                    }
                }
            }
        }

        const float* wq = params_.data() + tensor_offset(p + "attn.wq");
        const float* wk = params_.data() + tensor_offset(p + "attn.wk");
        const float* wv = params_.data() + tensor_offset(p + "attn.wv");
        std::vector<double> dln1_out(static_cast<size_t>(T) * d, 0.0);
        for (int t = 0; t < T; ++t) {
            const double* in = &lc.ln1_out[static_cast<size_t>(t) * d];
            double* dout = &dln1_out[static_cast<size_t>(t) * d];
            linear_backward(wq, in, rank > 0 ? &lc.ax_q[static_cast<size_t>(t) * rank] : nullptr,
                            &dq[static_cast<size_t>(t) * d], dout, grad_of(p + "attn.wq"),
                            grad_of(p + "attn.bq"), lora_of(p + "attn.wq"), d, d);
            linear_backward(wk, in, rank > 0 ? &lc.ax_k[static_cast<size_t>(t) * rank] : nullptr,
                            &dk[static_cast<size_t>(t) * d], dout, grad_of(p + "attn.wk"),
                            grad_of(p + "attn.bk"), lora_of(p + "attn.wk"), d, d);
            linear_backward(wv, in, rank > 0 ? &lc.ax_v[static_cast<size_t>(t) * rank] : nullptr,
                            &dv[static_cast<size_t>(t) * d], dout, grad_of(p + "attn.wv"),
                            grad_of(p + "attn.bv"), lora_of(p + "attn.wv"), d, d);
        }

        std::vector<double> dx_in = dx_mid;
        const float* ln1g = params_.data() + tensor_offset(p + "ln1.g");
        for (int t = 0; t < T; ++t) {
            layernorm_backward(ln1g, &lc.x_in[static_cast<size_t>(t) * d],
                               lc.ln1_mean[static_cast<size_t>(t)], lc.ln1_rstd[static_cast<size_t>(t)],
                               &dln1_out[static_cast<size_t>(t) * d], &dx_in[static_cast<size_t>(t) * d],
                               grad_of(p + "ln1.g"), grad_of(p + "ln1.b"), d);
        }
        dx = std::move(dx_in);
    }

    if (full) {
        double* dwte = full_grads_.data() + tensor_offset("wte");
        double* dwpe = full_grads_.data() + tensor_offset("wpe");
        for (int t = 0; t < T; ++t) {
            const int id = cache.ids[static_cast<size_t>(t)];
            for (int i = 0; i < d; ++i) {
                dwte[static_cast<size_t>(id) * d + i] += dx[static_cast<size_t>(t) * d + i];
                dwpe[static_cast<size_t>(t) * d + i] += dx[static_cast<size_t>(t) * d + i];
            }
        }
    }
}

std::vector<VocabDistribution> TinyTransformerModel::next_token_distributions(
    const TokenSequence& seq, bool use_adapter) const {
    seq.validate(cfg_.vocab_size);
    if (seq.length() > cfg_.max_seq)
        throw SequenceError("sequence of length " + std::to_string(seq.length()) +
                            " exceeds context window " + std::to_string(cfg_.max_seq));
    Cache cache;
    forward(seq.ids, use_adapter, cache);
    std::vector<VocabDistribution> out;
    out.reserve(static_cast<size_t>(seq.target_len()));
    const int v = cfg_.vocab_size;
    for (int pos = seq.prompt_len; pos < seq.length(); ++pos) {
        VocabDistribution dist;
        dist.logprobs = log_softmax_row(&cache.logits[static_cast<size_t>(pos - 1) * v], v);
        out.push_back(std::move(dist));
    }
    return out;
}

SequenceScore TinyTransformerModel::sequence_logprob(const TokenSequence& seq,
                                                     bool use_adapter) const {
    return score_from_distributions(next_token_distributions(seq, use_adapter), seq);
}

void TinyTransformerModel::accumulate_adapter_grad(
    const TokenSequence& seq, const std::vector<std::vector<double>>& dlogits) {
    if (!adapter_) throw ConfigError("no adapter attached");
    if (static_cast<int>(dlogits.size()) != seq.target_len())
        throw ConfigError("dlogits rows must match target length");
    Cache cache;
    forward(seq.ids, true, cache);
    std::vector<std::vector<double>> rows(static_cast<size_t>(seq.length()));
    for (int t = 0; t < seq.target_len(); ++t)
        rows[static_cast<size_t>(seq.prompt_len + t - 1)] = dlogits[static_cast<size_t>(t)];
    backward(cache, rows, GradMode::adapter);
}

void TinyTransformerModel::enable_full_grads() {
    full_grads_.assign(params_.size(), 0.0);
}

void TinyTransformerModel::zero_full_grads() {
    std::fill(full_grads_.begin(), full_grads_.end(), 0.0);
}

double TinyTransformerModel::accumulate_full_grad_batch(const std::vector<TokenSequence>& seqs) {
    if (full_grads_.empty()) throw ConfigError("full gradients not enabled");
    const int v = cfg_.vocab_size;
    size_t total_tokens = 0;
    for (const auto& s : seqs) total_tokens += static_cast<size_t>(s.target_len());
    if (total_tokens == 0) throw ConfigError("empty pretraining batch");
    double loss = 0.0;
    Cache cache;
    for (const auto& seq : seqs) {
        seq.validate(v);
        forward(seq.ids, false, cache);
        std::vector<std::vector<double>> rows(static_cast<size_t>(seq.length()));
        for (int pos = seq.prompt_len; pos < seq.length(); ++pos) {
            const int target = seq.ids[static_cast<size_t>(pos)];
            auto lp = log_softmax_row(&cache.logits[static_cast<size_t>(pos - 1) * v], v);
            loss += -lp[static_cast<size_t>(target)] / static_cast<double>(total_tokens);
            std::vector<double> row(static_cast<size_t>(v));
            for (int i = 0; i < v; ++i)
                row[static_cast<size_t>(i)] =
                    std::exp(lp[static_cast<size_t>(i)]) / static_cast<double>(total_tokens);
            row[static_cast<size_t>(target)] -= 1.0 / static_cast<double>(total_tokens);
            rows[static_cast<size_t>(pos) - 1] = std::move(row);
        }
        backward(cache, rows, GradMode::full);
    }
    return loss;
}

TinyTransformerModel TinyTransformerModel::perturbed(std::string base_id, uint64_t seed,
                                                     float scale) const {
    TinyTransformerModel sibling(std::move(base_id), vocab_, cfg_, 0);
    sibling.params_ = params_;
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, scale);
    for (auto& p : sibling.params_) p += noise(rng);
    return sibling;
}

void TinyTransformerModel::load_params(std::vector<float> params) {
    if (params.size() != params_.size())
        throw DataFormatError("parameter blob has " + std::to_string(params.size()) +
                              " floats, model expects " + std::to_string(params_.size()));
    params_ = std::move(params);
}

uint64_t TinyTransformerModel::base_digest() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (float f : params_) {
        uint32_t bits;
        std::memcpy(&bits, &f, sizeof(bits));
        for (int i = 0; i < 4; ++i) {
            h ^= (bits >> (8 * i)) & 0xFF;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace debias

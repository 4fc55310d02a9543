#include "debias/pretrain.hpp"

#include <iostream>
#include <random>

#include "debias/errors.hpp"
#include "debias/optimizer.hpp"

namespace debias {

PretrainStats pretrain_tiny(TinyTransformerModel& model, const std::vector<std::string>& sentences,
                            const PretrainConfig& cfg) {
    if (sentences.empty()) throw ConfigError("pretraining corpus is empty");
    std::vector<TokenSequence> pool;
    pool.reserve(sentences.size());
    for (const auto& s : sentences) pool.push_back(model.tokenize(s, ""));

    model.enable_full_grads();
    AdamW opt(model.params().size(), {.weight_decay = cfg.weight_decay});
    std::mt19937_64 rng(cfg.seed);
    std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);

    PretrainStats stats;
    for (int step = 1; step <= cfg.steps; ++step) {
        std::vector<TokenSequence> batch;
        batch.reserve(static_cast<size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i) batch.push_back(pool[pick(rng)]);

        model.zero_full_grads();
        const double loss = model.accumulate_full_grad_batch(batch);
        const double frac = static_cast<double>(step - 1) / static_cast<double>(cfg.steps);
        const double lr =
            cfg.learning_rate * (1.0 - (1.0 - cfg.final_lr_fraction) * frac);
        opt.begin_step(lr);
        opt.update(model.params(), model.full_grads());

        if (step == 1) stats.first_loss = loss;
        stats.last_loss = loss;
        if (cfg.log_every > 0 && (step % cfg.log_every == 0 || step == 1)) {
            std::cout << "pretrain step " << step << " loss " << loss << "\n";
        }
    }
    return stats;
}

}  // namespace debias

#include "debias/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "debias/errors.hpp"
#include "debias/util.hpp"

namespace debias {

using nlohmann::json;

const char* stop_reason_name(StopReason r) {
    switch (r) {
        case StopReason::none: return "none";
        case StopReason::early_stop: return "early_stop";
        case StopReason::max_steps: return "max_steps";
    }
    return "none";
}

namespace {

StopReason stop_reason_from_name(const std::string& name) {
    if (name == "early_stop") return StopReason::early_stop;
    if (name == "max_steps") return StopReason::max_steps;
    return StopReason::none;
}

}  // namespace

void TrainingConfig::validate() const {
    weights.validate();
    if (forget_batch < 1) throw ConfigError("forget_batch must be >= 1");
    if (retain_batch % forget_batch != 0 || retain_batch / forget_batch < 2)
        throw ConfigError("retain_batch must be n * forget_batch with n > 1");
    if (unrelated_batch < 1) throw ConfigError("unrelated_batch must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (schedule != "linear") throw ConfigError("schedule must be 'linear'");
    if (optimizer != "adamw") throw ConfigError("optimizer must be 'adamw'");
    if (probe_every < 1) throw ConfigError("probe_every must be >= 1");
    if (early_stop_band <= 0.0) throw ConfigError("early_stop_band must be positive");
    if (adversarial_fraction < 0.0 || adversarial_fraction >= 0.5)
        throw ConfigError("adversarial_fraction must lie in [0, 0.5)");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
}

json TrainState::to_json() const {
    json swapped = json::object();
    for (const auto& [t, f] : partitions.swapped) swapped[t] = f;
    json log = json::array();
    for (const auto& e : partitions.swap_log)
        log.push_back({{"step", e.step}, {"bias_type", e.bias_type}, {"new_flag", e.new_flag}});
    return json{{"step", step},
                {"swapped", swapped},
                {"swap_log", log},
                {"stopped", stopped},
                {"stop_reason", stop_reason_name(stop_reason)},
                {"last_stream_rebuild_step", last_stream_rebuild_step}};
}

TrainState TrainState::from_json(const json& j) {
    TrainState s;
    s.step = j.at("step").get<int>();
    for (const auto& [t, f] : j.at("swapped").items()) s.partitions.swapped[t] = f.get<bool>();
    for (const auto& e : j.at("swap_log"))
        s.partitions.swap_log.push_back({e.at("step").get<int>(),
                                         e.at("bias_type").get<std::string>(),
                                         e.at("new_flag").get<bool>()});
    s.stopped = j.at("stopped").get<bool>();
    s.stop_reason = stop_reason_from_name(j.at("stop_reason").get<std::string>());
    s.last_stream_rebuild_step = j.at("last_stream_rebuild_step").get<int>();
    return s;
}

PartitionState maybe_swap(const EvalReport& report, PartitionState state, int step) {
    // The flag tracks which side of 50 the dev SS sits on, so the forgetting
    // pressure always points back toward 50: a type strictly below 50 trains
    // with exchanged sets until it crosses 50 again. Exactly 50 leaves the
    // flag alone. Re-toggling while SS is still recovering would flip the
    // pressure away from 50 and oscillate.
    for (const auto& [type, row] : report.per_type) {
        const bool swapped = state.is_swapped(type);
        const bool want = row.ss < 50.0 ? true : (row.ss > 50.0 ? false : swapped);
        if (want != swapped) state = apply_swap(std::move(state), type, step);
    }
    return state;
}

bool should_stop(const EvalReport& report, double band) {
    for (const auto& [type, row] : report.per_type) {
        if (std::abs(row.ss - 50.0) >= band) return false;
    }
    return true;
}

Trainer::Trainer(LanguageModel& model, std::vector<StereoInstance> train_instances,
                 std::vector<StereoInstance> dev_instances, TrainingConfig config)
    : model_(model), train_(std::move(train_instances)), dev_(std::move(dev_instances)),
      cfg_(std::move(config)) {
    cfg_.validate();
    if (!model_.trainable())
        throw ConfigError("model is not trainable; attach an adapter before training");
    if (train_.empty()) throw ConfigError("training instances are empty");
    std::set<BiasType> train_types, dev_types;
    for (const auto& i : train_) train_types.insert(i.bias_type);
    for (const auto& i : dev_) dev_types.insert(i.bias_type);
    for (const auto& t : train_types) {
        if (!dev_types.count(t))
            throw ConfigError("dev set does not cover bias type '" + t + "'");
    }
    probe_fn_ = [this](const LanguageModel& m, int step) {
        return stereoset_eval(m, dev_, PreferenceRule{}, true, step);
    };
}

void Trainer::set_probe_fn(std::function<EvalReport(const LanguageModel&, int)> fn) {
    probe_fn_ = std::move(fn);
}

void Trainer::set_chunk_observer(std::function<void(const DataChunk&, int)> fn) {
    chunk_observer_ = std::move(fn);
}

EvalReport Trainer::probe(int step) const { return probe_fn_(model_, step); }

void Trainer::rebuild_stream(const TrainState& state, int64_t consumed) {
    Partitions pools = build_partitions(train_, state.partitions, cfg_.adversarial_fraction);
    stream_ = std::make_unique<ChunkStream>(
        std::move(pools), cfg_.forget_batch, cfg_.retain_batch, cfg_.unrelated_batch,
        mix_seed(cfg_.seed, static_cast<uint64_t>(state.last_stream_rebuild_step)));
    if (consumed > 0) stream_->skip(consumed);
}

LossBreakdown Trainer::train_step(const DataChunk& chunk) {
    struct Scored {
        TokenSequence seq;
        std::vector<VocabDistribution> theta;
    };

    // forget batch: theta distributions plus frozen-reference sums
    std::vector<Scored> forget(chunk.forget_batch.size());
    std::vector<SequenceScore> forget_theta, forget_ref;
    for (size_t i = 0; i < chunk.forget_batch.size(); ++i) {
        const auto& item = chunk.forget_batch[i];
        forget[i].seq = model_.tokenize(item.text, item.context);
        forget[i].theta = model_.next_token_distributions(forget[i].seq, true);
        forget_theta.push_back(score_from_distributions(forget[i].theta, forget[i].seq));
        forget_ref.push_back(model_.sequence_logprob(forget[i].seq, false));
    }

    std::vector<Scored> retain(chunk.retain_batch.size());
    std::vector<SequenceScore> retain_theta;
    for (size_t i = 0; i < chunk.retain_batch.size(); ++i) {
        const auto& item = chunk.retain_batch[i];
        retain[i].seq = model_.tokenize(item.text, item.context);
        retain[i].theta = model_.next_token_distributions(retain[i].seq, true);
        retain_theta.push_back(score_from_distributions(retain[i].theta, retain[i].seq));
    }

    std::vector<Scored> unrel(chunk.unrelated_batch.size());
    std::vector<std::vector<VocabDistribution>> unrel_theta, unrel_ref;
    for (size_t i = 0; i < chunk.unrelated_batch.size(); ++i) {
        unrel[i].seq = model_.tokenize(chunk.unrelated_batch[i], "");
        unrel[i].theta = model_.next_token_distributions(unrel[i].seq, true);
        unrel_theta.push_back(unrel[i].theta);
        unrel_ref.push_back(model_.next_token_distributions(unrel[i].seq, false));
    }

    const double forget_loss = npo_forget_loss(forget_theta, forget_ref, cfg_.weights.beta);
    const double ret_loss = retention_loss(retain_theta);
    const double kl_loss = kl_unrelated_loss(unrel_theta, unrel_ref);
    const LossBreakdown breakdown = total_loss(forget_loss, ret_loss, kl_loss, cfg_.weights);

    // ---- gradients ----
    model_.adapter().zero_grads();

    const auto forget_coeffs = npo_forget_grad(forget_theta, forget_ref, cfg_.weights.beta);
    for (size_t i = 0; i < forget.size(); ++i) {
        const double c = cfg_.weights.alpha1 * forget_coeffs[i];
        model_.accumulate_adapter_grad(forget[i].seq,
                                       logprob_grad_rows(forget[i].theta, forget[i].seq, c));
    }
    const auto retain_coeffs = retention_grad(retain_theta);
    for (size_t i = 0; i < retain.size(); ++i) {
        const double c = cfg_.weights.alpha2 * retain_coeffs[i];
        model_.accumulate_adapter_grad(retain[i].seq,
                                       logprob_grad_rows(retain[i].theta, retain[i].seq, c));
    }
    size_t kl_positions = 0;
    for (const auto& dists : unrel_theta) kl_positions += dists.size();
    for (size_t i = 0; i < unrel.size(); ++i) {
        std::vector<std::vector<double>> rows(unrel[i].theta.size());
        for (size_t t = 0; t < unrel[i].theta.size(); ++t) {
            rows[t] = kl_position_grad(unrel[i].theta[t], unrel_ref[i][t],
                                       cfg_.weights.alpha3 / static_cast<double>(kl_positions));
        }
        model_.accumulate_adapter_grad(unrel[i].seq, rows);
    }
    return breakdown;
}

TrainState Trainer::run() {
    TrainState state;
    opt_ = std::make_unique<AdamW>(model_.adapter().param_count(),
                                   AdamW::Config{.weight_decay = cfg_.weight_decay});
    rebuild_stream(state, 0);
    log_.clear();
    return run_from(std::move(state));
}

TrainState Trainer::resume_and_run(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir / "train_state.json"))
        throw DataFormatError("no checkpoint at " + dir.string());
    TrainState state;
    try {
        state = TrainState::from_json(json::parse(read_text_file(dir / "train_state.json")));
    } catch (const json::parse_error& e) {
        throw DataFormatError("corrupt train_state.json: " + std::string(e.what()));
    }
    model_.import_adapter(AdapterCheckpoint::load(dir / "adapter"), /*strict_base=*/true);
    opt_ = std::make_unique<AdamW>(
        AdamW::load(dir / "optimizer.bin", AdamW::Config{.weight_decay = cfg_.weight_decay}));
    if (opt_->param_count() != model_.adapter().param_count())
        throw DataFormatError("optimizer state does not match adapter parameters");
    rebuild_stream(state, state.step - state.last_stream_rebuild_step);
    log_.clear();
    return run_from(std::move(state));
}

TrainState Trainer::run_from(TrainState state) {
    if (state.stopped) return state;
    while (state.step < cfg_.max_steps) {
        state.step += 1;
        const DataChunk chunk = stream_->next();
        if (chunk_observer_) chunk_observer_(chunk, state.step);

        auto abort_with_diagnostic = [&](const char* what) {
            if (!cfg_.checkpoint_dir.empty())
                save_checkpoint(state, std::filesystem::path(cfg_.checkpoint_dir) / "diagnostic");
            throw TrainingAborted(std::string(what) + " at step " + std::to_string(state.step));
        };
        LossBreakdown breakdown;
        try {
            breakdown = train_step(chunk);
        } catch (const ConfigError&) {
            abort_with_diagnostic("loss computation failed");
        }
        if (!std::isfinite(breakdown.total)) abort_with_diagnostic("non-finite loss");

        const double lr = linear_lr(cfg_.learning_rate, state.step, cfg_.max_steps);
        opt_->step(model_.adapter(), lr);
        log_.push_back(json{{"step", state.step},
                            {"forget", breakdown.forget},
                            {"retention", breakdown.retention},
                            {"kl", breakdown.kl},
                            {"total", breakdown.total},
                            {"lr", lr}});

        if (state.step % cfg_.probe_every == 0) {
            const EvalReport report = probe(state.step);
            state.last_probe = report;
            PartitionState swapped = maybe_swap(report, state.partitions, state.step);
            json swaps = json::array();
            if (swapped.swap_log.size() != state.partitions.swap_log.size()) {
                for (size_t i = state.partitions.swap_log.size(); i < swapped.swap_log.size(); ++i) {
                    const auto& e = swapped.swap_log[i];
                    swaps.push_back({{"bias_type", e.bias_type}, {"new_flag", e.new_flag}});
                }
                state.partitions = std::move(swapped);
                state.last_stream_rebuild_step = state.step;
                rebuild_stream(state, 0);
            }
            json probe_line{{"step", state.step}, {"probe", report.to_json()}, {"swaps", swaps}};
            log_.push_back(std::move(probe_line));

            if (should_stop(report, cfg_.early_stop_band)) {
                state.stopped = true;
                state.stop_reason = StopReason::early_stop;
                break;
            }
        }

        if (cfg_.checkpoint_every > 0 && state.step % cfg_.checkpoint_every == 0 &&
            !cfg_.checkpoint_dir.empty()) {
            save_checkpoint(state, std::filesystem::path(cfg_.checkpoint_dir) /
                                       ("step-" + std::to_string(state.step)));
        }
    }
    if (!state.stopped) {
        state.stopped = true;
        state.stop_reason = StopReason::max_steps;
    }
    if (!cfg_.checkpoint_dir.empty()) save_checkpoint(state, cfg_.checkpoint_dir);
    return state;
}

void Trainer::save_checkpoint(const TrainState& state, const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    CheckpointMeta meta;
    meta.training_step = state.step;
    meta.alpha1 = cfg_.weights.alpha1;
    meta.alpha2 = cfg_.weights.alpha2;
    meta.alpha3 = cfg_.weights.alpha3;
    meta.beta = cfg_.weights.beta;
    meta.swap_log_digest = state.partitions.digest();
    meta.seed = cfg_.seed;
    model_.export_adapter(std::move(meta)).save(dir / "adapter");
    if (opt_) opt_->save(dir / "optimizer.bin");
    write_text_file(dir / "train_state.json", state.to_json().dump(2) + "\n");
}

void Trainer::write_log(const std::filesystem::path& path) const {
    std::string out;
    for (const auto& line : log_) out += line.dump() + "\n";
    write_text_file(path, out);
}

}  // namespace debias

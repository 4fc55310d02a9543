#include "debias/commands.hpp"

#include <functional>
#include <iostream>

#include <CLI11.hpp>

#include "debias/bias_eval.hpp"
#include "debias/errors.hpp"
#include "debias/model_io.hpp"
#include "debias/pretrain.hpp"
#include "debias/run_config.hpp"
#include "debias/synthetic.hpp"
#include "debias/trainer.hpp"
#include "debias/util.hpp"

namespace debias {

namespace {

int guarded(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const ShapeMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const BaseIdMismatchError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataFormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

void attach_configured_adapter(LanguageModel& model, const RunConfig& cfg) {
    AdapterConfig acfg;
    acfg.rank = cfg.adapter_rank;
    acfg.seed = cfg.training.seed;
    if (cfg.adapter_targets == "attn+head") {
        if (auto* tiny = dynamic_cast<TinyTransformerModel*>(&model)) {
            acfg.target_names = tiny->default_adapter_targets();
            acfg.target_names.push_back("head");
        }
    }
    model.attach_adapter(acfg);
}

}  // namespace

int cmd_train(const std::string& config_path) {
    return guarded([&] {
        const RunConfig cfg = RunConfig::from_file(config_path);
        cfg.validate_for_train();

        auto model = load_model(cfg.model_path);
        attach_configured_adapter(*model, cfg);

        auto train_set = load_stereoset(cfg.train_dataset, Split::train);
        auto dev_set = load_stereoset(cfg.train_dataset, Split::dev);

        Trainer trainer(*model, std::move(train_set), std::move(dev_set), cfg.training);
        const TrainState state = trainer.run();

        const std::filesystem::path out(cfg.output_dir);
        trainer.write_log(out / "train_log.jsonl");
        const EvalReport final_report =
            stereoset_eval(*model, load_stereoset(cfg.train_dataset, Split::dev),
                           PreferenceRule{}, true, state.step);
        write_text_file(out / "final_dev_report.json", final_report.to_json().dump(2) + "\n");

        std::cout << "training stopped at step " << state.step << " ("
                  << stop_reason_name(state.stop_reason) << ")\n";
        std::cout << final_report.to_table();
        std::cout << "checkpoint: " << cfg.training.checkpoint_dir << "\n";
        return 0;
    });
}

int cmd_eval(const std::string& config_path, const std::string& benchmark,
             const std::string& adapter_path) {
    return guarded([&] {
        if (benchmark != "stereoset" && benchmark != "crowspairs") {
            std::cerr << "error: unknown benchmark '" << benchmark << "'\n";
            return 2;
        }
        const RunConfig cfg = RunConfig::from_file(config_path);
        cfg.validate_for_eval();

        auto model = load_model(cfg.model_path);
        if (!adapter_path.empty()) {
            model->import_adapter(AdapterCheckpoint::load(adapter_path), /*strict_base=*/false);
        }

        nlohmann::json report_json;
        if (benchmark == "stereoset") {
            Split split = Split::test;
            if (cfg.eval_split == "train") split = Split::train;
            if (cfg.eval_split == "dev") split = Split::dev;
            const auto instances = load_stereoset(cfg.eval_dataset, split);
            const EvalReport report = stereoset_eval(*model, instances);
            std::cout << report.to_table();
            report_json = report.to_json();
        } else {
            const auto pairs = load_crows_pairs(cfg.eval_dataset);
            const CrowsReport report = crows_pairs_eval(*model, pairs);
            std::cout << report.to_table();
            report_json = report.to_json();
        }
        if (!cfg.eval_report.empty())
            write_text_file(cfg.eval_report, report_json.dump(2) + "\n");
        return 0;
    });
}

int cmd_transfer(const std::string& adapter_path, const std::string& target_model_path,
                 bool strict_base, const std::string& out_path) {
    return guarded([&] {
        const AdapterCheckpoint donor = AdapterCheckpoint::load(adapter_path);
        auto model = load_model(target_model_path);
        model->import_adapter(donor, strict_base);

        CheckpointMeta meta = donor.meta;
        if (meta.lineage.empty()) meta.lineage.push_back(donor.base_id);
        meta.lineage.push_back(model->base_id());
        model->export_adapter(std::move(meta)).save(out_path);

        std::cout << "transferred adapter from base '" << donor.base_id << "' onto '"
                  << model->base_id() << "' -> " << out_path << "\n";
        return 0;
    });
}

int cmd_make_synthetic(const MakeSyntheticOptions& opts) {
    return guarded([&] {
        if (opts.out_dir.empty()) throw ConfigError("make-synthetic needs --out");
        const std::filesystem::path out(opts.out_dir);
        SyntheticSpec spec;
        spec.seed = opts.seed;
        std::cout << "generating synthetic world (seed " << spec.seed << ")...\n";
        const SyntheticWorld world = make_synthetic_world(spec);
        write_stereoset_dir(world, out / "data");
        write_corpus_file(world, out / "data" / "corpus.txt");

        BigramStubModel stub = make_skewed_stub(world, "synthetic-stub-v1");
        save_model(stub, out / "models" / "stub");

        std::string backend = "stub";
        std::string model_path = (out / "models" / "stub").string();
        std::string lr = "2e-2";
        if (!opts.skip_pretrain) {
            std::cout << "pretraining tiny model on " << world.corpus.size()
                      << " sentences...\n";
            TinyTransformerModel::Config mcfg;
            mcfg.vocab_size = 0;  // derive from vocabulary
            TinyTransformerModel tiny("synthetic-tiny-v1", world.make_vocab(), mcfg,
                                      mix_seed(spec.seed, 0x11));
            PretrainConfig pcfg;
            pcfg.steps = opts.pretrain_steps;
            pcfg.seed = mix_seed(spec.seed, 0x12);
            pcfg.log_every = 200;
            const PretrainStats stats = pretrain_tiny(tiny, world.corpus, pcfg);
            std::cout << "pretraining loss " << stats.first_loss << " -> " << stats.last_loss
                      << "\n";
            save_model(tiny, out / "models" / "base");
            backend = "tiny";
            model_path = (out / "models" / "base").string();
            lr = "5e-4";
        }

        std::string ini;
        ini += "[model]\n";
        ini += "backend = " + backend + "\n";
        ini += "path = " + model_path + "\n";
        ini += "adapter_rank = 8\n";
        ini += "adapter_targets = attn+head\n\n";
        ini += "[train]\n";
        ini += "dataset = " + (out / "data").string() + "\n";
        ini += "output_dir = " + (out / "run").string() + "\n";
        ini += "forget_batch = 4\n";
        ini += "retain_batch = 28\n";
        ini += "unrelated_batch = 4\n";
        ini += "alpha1 = 0.4\nalpha2 = 0.4\nalpha3 = 0.2\nbeta = 0.1\n";
        ini += "learning_rate = " + lr + "\n";
        ini += "probe_every = 10\n";
        ini += "early_stop_band = 2.0\n";
        ini += "adversarial_fraction = 0.25\n";
        ini += "max_steps = 400\n";
        ini += "seed = 17\n\n";
        ini += "[eval]\n";
        ini += "dataset = " + (out / "data").string() + "\n";
        ini += "split = test\n";
        ini += "report = " + (out / "run" / "eval.json").string() + "\n";
        write_text_file(out / "config.ini", ini);
        std::cout << "wrote " << (out / "config.ini").string() << "\n";
        return 0;
    });
}

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"unlearning-based debiasing toolkit for causal language models"};
    app.require_subcommand(1);

    int rc = 0;

    std::string train_config;
    auto* train = app.add_subcommand("train", "run the unlearning loop from a config file");
    train->add_option("--config", train_config, "run configuration (INI)")->required();
    train->callback([&] { rc = cmd_train(train_config); });

    std::string eval_config, benchmark = "stereoset", eval_adapter;
    auto* eval = app.add_subcommand("eval", "evaluate a model on a bias benchmark");
    eval->add_option("--config", eval_config, "run configuration (INI)")->required();
    eval->add_option("--benchmark", benchmark, "stereoset | crowspairs");
    eval->add_option("--adapter", eval_adapter, "adapter checkpoint to import before scoring");
    eval->callback([&] { rc = cmd_eval(eval_config, benchmark, eval_adapter); });

    std::string tr_adapter, tr_target, tr_out;
    bool tr_strict = false;
    auto* transfer = app.add_subcommand("transfer", "move debiasing weights onto a sibling model");
    transfer->add_option("--adapter", tr_adapter, "donor adapter checkpoint")->required();
    transfer->add_option("--target", tr_target, "target model directory")->required();
    transfer->add_flag("--strict-base", tr_strict, "require matching base_id");
    transfer->add_option("--out", tr_out, "output adapter checkpoint")->required();
    transfer->callback([&] { rc = cmd_transfer(tr_adapter, tr_target, tr_strict, tr_out); });

    MakeSyntheticOptions synth_opts;
    auto* synth = app.add_subcommand("make-synthetic",
                                     "generate the synthetic world, models and a ready config");
    synth->add_option("--out", synth_opts.out_dir, "output directory")->required();
    synth->add_option("--seed", synth_opts.seed, "world seed");
    synth->add_option("--pretrain-steps", synth_opts.pretrain_steps, "tiny-model steps");
    synth->add_flag("--skip-pretrain", synth_opts.skip_pretrain, "stub backend only");
    synth->callback([&] { rc = cmd_make_synthetic(synth_opts); });

    std::vector<const char*> argv;
    argv.push_back("debias");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    return rc;
}

}  // namespace debias

#include "debias/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>

#include "debias/errors.hpp"
#include "debias/util.hpp"

namespace debias {

namespace {

std::string trim(const std::string& s) {
    size_t l = 0, r = s.size();
    while (l < r && std::isspace(static_cast<unsigned char>(s[l]))) ++l;
    while (r > l && std::isspace(static_cast<unsigned char>(s[r - 1]))) --r;
    return s.substr(l, r - l);
}

std::string env_key(const std::string& section, const std::string& key) {
    std::string out = "DEBIAS_" + section + "_" + key;
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

struct KvView {
    const std::map<std::string, std::string>& kv;

    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const {
        if (const char* env = std::getenv(env_key(section, key).c_str())) return env;
        auto it = kv.find(section + "." + key);
        return it == kv.end() ? fallback : it->second;
    }
    double get_double(const std::string& section, const std::string& key, double fallback) const {
        const std::string raw = get(section, key, "");
        if (raw.empty()) return fallback;
        try {
            size_t pos = 0;
            const double v = std::stod(raw, &pos);
            if (pos != raw.size()) throw std::invalid_argument(raw);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("field " + section + "." + key + " is not a number: '" + raw + "'");
        }
    }
    int get_int(const std::string& section, const std::string& key, int fallback) const {
        const double v = get_double(section, key, fallback);
        const int i = static_cast<int>(v);
        if (static_cast<double>(i) != v)
            throw ConfigError("field " + section + "." + key + " is not an integer");
        return i;
    }
};

}  // namespace

std::map<std::string, std::string> parse_ini(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::string section;
    int line_no = 0;
    size_t start = 0;
    while (start <= text.size()) {
        const size_t end = std::min(text.find('\n', start), text.size());
        std::string line = trim(text.substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw DataFormatError("unterminated section header", line_no);
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw DataFormatError("expected key = value", line_no);
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw DataFormatError("empty key", line_no);
        kv[section + "." + key] = trim(line.substr(eq + 1));
        if (end == text.size()) break;
    }
    return kv;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw ConfigError("config file not found: " + path.string());
    const auto kv = parse_ini(read_text_file(path));
    const KvView view{kv};

    RunConfig cfg;
    cfg.backend = view.get("model", "backend", cfg.backend);
    cfg.model_path = view.get("model", "path", "");
    cfg.adapter_rank = view.get_int("model", "adapter_rank", cfg.adapter_rank);
    cfg.adapter_targets = view.get("model", "adapter_targets", cfg.adapter_targets);

    cfg.train_dataset = view.get("train", "dataset", "");
    cfg.output_dir = view.get("train", "output_dir", cfg.output_dir);
    TrainingConfig& t = cfg.training;
    t.weights.alpha1 = view.get_double("train", "alpha1", t.weights.alpha1);
    t.weights.alpha2 = view.get_double("train", "alpha2", t.weights.alpha2);
    t.weights.alpha3 = view.get_double("train", "alpha3", t.weights.alpha3);
    t.weights.beta = view.get_double("train", "beta", t.weights.beta);
    t.forget_batch = view.get_int("train", "forget_batch", t.forget_batch);
    t.retain_batch = view.get_int("train", "retain_batch", t.retain_batch);
    t.unrelated_batch = view.get_int("train", "unrelated_batch", t.unrelated_batch);
    t.learning_rate = view.get_double("train", "learning_rate", t.learning_rate);
    t.schedule = view.get("train", "schedule", t.schedule);
    t.optimizer = view.get("train", "optimizer", t.optimizer);
    t.weight_decay = view.get_double("train", "weight_decay", t.weight_decay);
    t.probe_every = view.get_int("train", "probe_every", t.probe_every);
    t.early_stop_band = view.get_double("train", "early_stop_band", t.early_stop_band);
    t.adversarial_fraction =
        view.get_double("train", "adversarial_fraction", t.adversarial_fraction);
    t.max_steps = view.get_int("train", "max_steps", t.max_steps);
    t.checkpoint_every = view.get_int("train", "checkpoint_every", t.checkpoint_every);
    t.seed = static_cast<uint64_t>(view.get_int("train", "seed", static_cast<int>(t.seed)));
    t.checkpoint_dir = cfg.output_dir + "/checkpoint";

    cfg.eval_dataset = view.get("eval", "dataset", "");
    cfg.eval_split = view.get("eval", "split", cfg.eval_split);
    cfg.eval_report = view.get("eval", "report", "");
    return cfg;
}

void RunConfig::validate_for_train() const {
    if (backend != "stub" && backend != "tiny")
        throw ConfigError("field model.backend must be 'stub' or 'tiny'");
    if (model_path.empty() || !std::filesystem::exists(model_path))
        throw ConfigError("model path not found: '" + model_path + "' (field model.path)");
    if (adapter_rank < 1) throw ConfigError("field model.adapter_rank must be >= 1");
    if (adapter_targets != "default" && adapter_targets != "attn" &&
        adapter_targets != "attn+head")
        throw ConfigError("field model.adapter_targets must be default, attn or attn+head");
    if (train_dataset.empty() || !std::filesystem::exists(train_dataset))
        throw ConfigError("dataset path not found: '" + train_dataset +
                          "' (field train.dataset)");
    training.validate();
}

void RunConfig::validate_for_eval() const {
    if (backend != "stub" && backend != "tiny")
        throw ConfigError("field model.backend must be 'stub' or 'tiny'");
    if (model_path.empty() || !std::filesystem::exists(model_path))
        throw ConfigError("model path not found: '" + model_path + "' (field model.path)");
    if (eval_dataset.empty() || !std::filesystem::exists(eval_dataset))
        throw ConfigError("dataset path not found: '" + eval_dataset + "' (field eval.dataset)");
    if (eval_split != "train" && eval_split != "dev" && eval_split != "test")
        throw ConfigError("field eval.split must be train, dev or test");
}

}  // namespace debias

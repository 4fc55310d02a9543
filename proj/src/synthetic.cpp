#include "debias/synthetic.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include <json.hpp>

#include "debias/errors.hpp"
#include "debias/util.hpp"

namespace debias {

namespace {

const std::vector<std::pair<std::string, std::vector<std::string>>>& group_table() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> kGroups = {
        {"gender", {"alphas", "betas"}},
        {"profession", {"smiths", "clerks"}},
        {"race", {"norths", "souths"}},
        {"religion", {"suns", "moons"}},
    };
    return kGroups;
}

const std::vector<std::pair<std::string, std::string>>& adjective_pairs() {
    static const std::vector<std::pair<std::string, std::string>> kPairs = {
        {"timid", "bold"},      {"gentle", "harsh"},    {"quiet", "loud"},
        {"meek", "brash"},      {"soft", "stern"},      {"calm", "wild"},
        {"plain", "fancy"},     {"slow", "swift"},      {"dull", "keen"},
        {"mild", "fierce"},     {"shy", "proud"},       {"tame", "feral"},
        {"neat", "messy"},      {"frail", "sturdy"},    {"humble", "vain"},
        {"sparse", "lush"},     {"light", "heavy"},     {"smooth", "rough"},
        {"tidy", "sloppy"},     {"sweet", "bitter"},    {"warm", "cold"},
        {"bright", "dim"},      {"early", "late"},      {"thrifty", "lavish"},
        {"cautious", "reckless"}, {"patient", "hasty"},  {"somber", "merry"},
        {"rigid", "limber"},    {"rustic", "urbane"},   {"candid", "sly"},
        {"earnest", "flippant"}, {"steady", "jumpy"},   {"modest", "boastful"},
        {"serene", "frantic"},  {"polite", "blunt"},    {"thorough", "careless"},
        {"sober", "giddy"},     {"gruff", "suave"},     {"stoic", "dramatic"},
        {"nimble", "clumsy"},   {"orderly", "chaotic"}, {"mellow", "edgy"},
        {"prudent", "rash"},    {"demure", "brazen"},   {"solemn", "jolly"},
        {"crisp", "soggy"},     {"agile", "stiff"},     {"vivid", "faded"},
    };
    return kPairs;
}

const std::vector<std::string>& scenes() {
    static const std::vector<std::string> kScenes = {
        "at the market", "on the hill",  "in the hall",  "by the river",
        "near the docks", "at the fair", "in the yard",  "on the road",
        "at the mill",   "by the gate",  "in the field", "at the forge"};
    return kScenes;
}

const std::vector<std::string>& linkers() {
    static const std::vector<std::string> kLinkers = {"seemed", "looked",   "stayed",
                                                      "felt",   "acted", "remained"};
    return kLinkers;
}

const std::vector<std::string>& salad_nouns() {
    static const std::vector<std::string> kNouns = {
        "ledger", "cactus",  "pylon",   "marble",  "lantern", "anvil",  "beacon",
        "crate",  "fathom",  "gourd",   "hammock", "ingot",   "jetty",  "kettle",
        "lattice", "mortar", "nozzle",  "orchard", "parapet", "quarry"};
    return kNouns;
}

const std::vector<std::string>& filler_verbs() {
    static const std::vector<std::string> kVerbs = {"sat",    "lay",    "stood",
                                                    "rested", "waited", "lingered"};
    return kVerbs;
}

const std::vector<std::string>& filler_advs() {
    static const std::vector<std::string> kAdvs = {"nearby", "upstairs", "outside",
                                                   "below",  "ahead",    "behind"};
    return kAdvs;
}

struct Combo {
    int type_idx;
    int group_idx;
    int pair_idx;  // index into the type's slice of adjective_pairs()
    int template_idx;
};

std::string combo_context(const Combo& c) {
    const auto& [type, groups] = group_table()[static_cast<size_t>(c.type_idx)];
    const auto& scene = scenes()[static_cast<size_t>(c.template_idx) % scenes().size()];
    const auto& linker =
        linkers()[static_cast<size_t>(c.template_idx / 12 + c.template_idx) % linkers().size()];
    return "the " + groups[static_cast<size_t>(c.group_idx)] + " " + scene + " " + linker;
}

// noun + adverb: neither transition occurs in the corpus, so the phrase stays
// improbable after any context while remaining a plausible-looking candidate
std::string salad_phrase(int idx) {
    const auto& nouns = salad_nouns();
    const auto& advs = filler_advs();
    return nouns[static_cast<size_t>(idx) % nouns.size()] + " " +
           advs[static_cast<size_t>(idx / 3) % advs.size()];
}

}  // namespace

SyntheticWorld make_synthetic_world(const SyntheticSpec& spec) {
    const int n_types = static_cast<int>(group_table().size());
    if (spec.pairs_per_type * n_types > static_cast<int>(adjective_pairs().size()))
        throw ConfigError("not enough adjective pairs for the requested world");
    if (spec.templates_per_type > 72)
        throw ConfigError("at most 72 distinct (scene, linker) templates are available");

    SyntheticWorld world;

    auto pair_skew = [&](int k) {
        if (spec.pairs_per_type == 1) return spec.max_skew;
        return spec.min_skew + (spec.max_skew - spec.min_skew) * static_cast<double>(k) /
                                   static_cast<double>(spec.pairs_per_type - 1);
    };
    auto pair_for = [&](int type_idx, int k) -> const std::pair<std::string, std::string>& {
        return adjective_pairs()[static_cast<size_t>(type_idx * spec.pairs_per_type + k)];
    };

    // ---- instances and splits ----
    int running_id = 0;
    for (int ti = 0; ti < n_types; ++ti) {
        const auto& [type, groups] = group_table()[static_cast<size_t>(ti)];
        std::vector<StereoInstance> of_type;
        for (int gi = 0; gi < static_cast<int>(groups.size()); ++gi) {
            for (int pi = 0; pi < spec.pairs_per_type; ++pi) {
                for (int tmpl = 0; tmpl < spec.templates_per_type; ++tmpl) {
                    const Combo combo{ti, gi, pi, tmpl};
                    const auto& pair = pair_for(ti, pi);
                    StereoInstance inst;
                    inst.id = type + "-" + std::to_string(running_id++);
                    inst.bias_type = type;
                    inst.context = combo_context(combo);
                    inst.stereotype = pair.first;
                    inst.anti_stereotype = pair.second;
                    inst.unrelated = salad_phrase(running_id);
                    of_type.push_back(std::move(inst));
                }
            }
        }
        const int needed = spec.dev_per_type + spec.test_per_type + 1;
        if (static_cast<int>(of_type.size()) < needed)
            throw ConfigError("synthetic world too small for requested dev/test sizes");
        std::mt19937_64 rng(mix_seed(spec.seed, 0x5117ULL + static_cast<uint64_t>(ti)));
        std::shuffle(of_type.begin(), of_type.end(), rng);
        for (int i = 0; i < static_cast<int>(of_type.size()); ++i) {
            if (i < spec.dev_per_type) {
                world.dev.push_back(of_type[static_cast<size_t>(i)]);
            } else if (i < spec.dev_per_type + spec.test_per_type) {
                world.test.push_back(of_type[static_cast<size_t>(i)]);
            } else {
                world.train.push_back(of_type[static_cast<size_t>(i)]);
            }
        }
    }

    // ---- weighted pretraining corpus ----
    std::mt19937_64 rng(mix_seed(spec.seed, 0xc02b05));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<int> type_pick(0, n_types - 1);
    std::uniform_int_distribution<int> group_pick(0, 1);
    std::uniform_int_distribution<int> pair_pick(0, spec.pairs_per_type - 1);
    std::uniform_int_distribution<int> tmpl_pick(0, spec.templates_per_type - 1);
    std::uniform_int_distribution<int> salad_pick(0, static_cast<int>(salad_nouns().size()) - 1);
    std::uniform_int_distribution<int> verb_pick(0, static_cast<int>(filler_verbs().size()) - 1);
    std::uniform_int_distribution<int> adv_pick(0, static_cast<int>(filler_advs().size()) - 1);
    for (int i = 0; i < spec.corpus_samples; ++i) {
        if (coin(rng) < spec.filler_fraction) {
            world.corpus.push_back("the " + salad_nouns()[static_cast<size_t>(salad_pick(rng))] +
                                   " " + filler_verbs()[static_cast<size_t>(verb_pick(rng))] + " " +
                                   filler_advs()[static_cast<size_t>(adv_pick(rng))]);
            continue;
        }
        const Combo combo{type_pick(rng), group_pick(rng), pair_pick(rng), tmpl_pick(rng)};
        const auto& pair = pair_for(combo.type_idx, combo.pair_idx);
        const bool stereo_side = coin(rng) < pair_skew(combo.pair_idx);
        world.corpus.push_back(combo_context(combo) + " " +
                               (stereo_side ? pair.first : pair.second));
    }

    // ---- stable vocabulary ----
    std::set<std::string> seen;
    auto add_words = [&](const std::string& text) {
        for (const auto& w : split_words(text)) {
            if (seen.insert(w).second) world.words.push_back(w);
        }
    };
    for (const auto& s : world.corpus) add_words(s);
    for (const auto* split : {&world.train, &world.dev, &world.test}) {
        for (const auto& inst : *split) {
            add_words(inst.context);
            add_words(inst.stereotype);
            add_words(inst.anti_stereotype);
            add_words(inst.unrelated);
        }
    }
    return world;
}

BigramStubModel make_skewed_stub(const SyntheticWorld& world, std::string base_id,
                                 double smoothing) {
    Vocabulary vocab = world.make_vocab();
    const int v = vocab.size();
    std::vector<std::vector<double>> counts(static_cast<size_t>(v),
                                            std::vector<double>(static_cast<size_t>(v), smoothing));
    for (const auto& sentence : world.corpus) {
        int prev = Vocabulary::kBos;
        for (int id : vocab.encode(sentence)) {
            counts[static_cast<size_t>(prev)][static_cast<size_t>(id)] += 1.0;
            prev = id;
        }
    }
    for (auto& row : counts) {
        double sum = 0.0;
        for (double c : row) sum += c;
        for (double& c : row) c /= sum;
    }
    return BigramStubModel::from_conditional_table(std::move(base_id), std::move(vocab), counts);
}

void write_stereoset_dir(const SyntheticWorld& world, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto write_split = [&](const std::vector<StereoInstance>& instances, const char* name) {
        std::string out;
        for (const auto& inst : instances) {
            nlohmann::json j{{"id", inst.id},
                             {"bias_type", inst.bias_type},
                             {"context", inst.context},
                             {"stereotype", inst.stereotype},
                             {"anti_stereotype", inst.anti_stereotype},
                             {"unrelated", inst.unrelated}};
            out += j.dump() + "\n";
        }
        write_text_file(dir / (std::string(name) + ".jsonl"), out);
    };
    write_split(world.train, "train");
    write_split(world.dev, "dev");
    write_split(world.test, "test");
}

void write_corpus_file(const SyntheticWorld& world, const std::filesystem::path& path) {
    std::string out;
    for (const auto& s : world.corpus) out += s + "\n";
    write_text_file(path, out);
}

}  // namespace debias

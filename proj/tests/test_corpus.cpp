#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "debias/corpus.hpp"
#include "debias/errors.hpp"
#include "debias/util.hpp"
#include "helpers.hpp"

using namespace debias;
using namespace debias::test;
using nlohmann::json;

namespace {

std::string stereoset_line(const std::string& id, const std::string& type,
                           const std::string& context, const std::string& st,
                           const std::string& anti, const std::string& unrel) {
    return json{{"id", id},
                {"bias_type", type},
                {"context", context},
                {"stereotype", st},
                {"anti_stereotype", anti},
                {"unrelated", unrel}}
               .dump() +
           "\n";
}

std::vector<StereoInstance> tiny_instances(int per_type) {
    std::vector<StereoInstance> out;
    int uid = 0;
    for (const auto& t : stereoset_bias_types()) {
        for (int i = 0; i < per_type; ++i) {
            out.push_back(make_instance(t + std::to_string(uid), t, "ctx " + std::to_string(uid),
                                        "st" + std::to_string(uid), "an" + std::to_string(uid),
                                        "un" + std::to_string(uid)));
            ++uid;
        }
    }
    return out;
}

}  // namespace

TEST_CASE("stereoset loader parses, counts and preserves order") {
    TempDir tmp("load");
    std::string body;
    body += stereoset_line("a", "gender", "the ctx", "st a", "an a", "un a");
    body += stereoset_line("b", "race", "", "st b", "an b", "un b");
    body += stereoset_line("c", "gender", "more ctx", "st c", "an c", "un c");
    write_text_file(tmp.path() / "train.jsonl", body);

    const auto instances = load_stereoset(tmp.path(), Split::train);
    REQUIRE(instances.size() == 3);
    CHECK(instances[0].id == "a");
    CHECK(instances[1].id == "b");
    CHECK(instances[1].context.empty());
    CHECK(instances[2].id == "c");
    const auto counts = count_by_type(instances);
    CHECK(counts.at("gender") == 2);
    CHECK(counts.at("race") == 1);

    // can also point at the file directly
    CHECK(load_stereoset(tmp.path() / "train.jsonl", Split::dev).size() == 3);
}

TEST_CASE("stereoset loader reproduces the re-split per-type counts at scale") {
    TempDir tmp("scale");
    const std::map<std::string, int> expected = {
        {"gender", 1471}, {"profession", 4782}, {"race", 5871}, {"religion", 438}};
    std::ostringstream body;
    int uid = 0;
    for (const auto& [type, n] : expected) {
        for (int i = 0; i < n; ++i) {
            body << stereoset_line(type + "-" + std::to_string(uid), type, "c",
                                   "s" + std::to_string(uid), "a" + std::to_string(uid), "u");
            ++uid;
        }
    }
    write_text_file(tmp.path() / "train.jsonl", body.str());
    const auto instances = load_stereoset(tmp.path(), Split::train);
    CHECK(instances.size() == 12562);
    const auto counts = count_by_type(instances);
    for (const auto& [type, n] : expected) CHECK(counts.at(type) == n);
}

TEST_CASE("stereoset loader rejects malformed and schema-violating records") {
    TempDir tmp("bad");
    write_text_file(tmp.path() / "empty.jsonl", "");
    CHECK(load_stereoset(tmp.path() / "empty.jsonl", Split::train).empty());

    write_text_file(tmp.path() / "garbage.jsonl",
                    stereoset_line("a", "gender", "c", "s", "a", "u") + "{not json\n");
    try {
        load_stereoset(tmp.path() / "garbage.jsonl", Split::train);
        FAIL("expected parse error");
    } catch (const DataFormatError& e) {
        CHECK(e.line() == 2);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }

    write_text_file(tmp.path() / "unknown.jsonl",
                    stereoset_line("a", "species", "c", "s", "a", "u"));
    CHECK_THROWS_AS(load_stereoset(tmp.path() / "unknown.jsonl", Split::train), DataFormatError);

    write_text_file(tmp.path() / "dup.jsonl", stereoset_line("a", "gender", "c", "s", "x", "u") +
                                                  stereoset_line("a", "gender", "c", "s2", "x2", "u2"));
    try {
        load_stereoset(tmp.path() / "dup.jsonl", Split::train);
        FAIL("expected duplicate id error");
    } catch (const DataFormatError& e) {
        CHECK(std::string(e.what()).find("duplicate id") != std::string::npos);
    }

    write_text_file(tmp.path() / "equal.jsonl", stereoset_line("a", "gender", "c", "same", "same", "u"));
    CHECK_THROWS_AS(load_stereoset(tmp.path() / "equal.jsonl", Split::train), DataFormatError);

    write_text_file(tmp.path() / "missing.jsonl", "{\"id\": \"a\", \"bias_type\": \"gender\"}\n");
    CHECK_THROWS_AS(load_stereoset(tmp.path() / "missing.jsonl", Split::train), DataFormatError);

    CHECK_THROWS_AS(load_stereoset(tmp.path() / "nope.jsonl", Split::train), DataFormatError);
}

TEST_CASE("crows-pairs loader handles the full-scale file and rejects degenerate pairs") {
    TempDir tmp("crows");
    std::ostringstream body;
    for (int i = 0; i < 1508; ++i) {
        const auto& type = crows_pairs_bias_types()[static_cast<size_t>(i) %
                                                    crows_pairs_bias_types().size()];
        body << json{{"id", "p" + std::to_string(i)},
                     {"bias_type", type},
                     {"sent_more", "more " + std::to_string(i)},
                     {"sent_less", "less " + std::to_string(i)}}
                    .dump()
             << "\n";
    }
    write_text_file(tmp.path() / "crows.jsonl", body.str());
    const auto pairs = load_crows_pairs(tmp.path() / "crows.jsonl");
    CHECK(pairs.size() == 1508);
    int sum = 0;
    for (const auto& [t, n] : count_by_type(pairs)) sum += n;
    CHECK(sum == 1508);

    write_text_file(tmp.path() / "gender.jsonl",
                    json{{"id", "g"}, {"bias_type", "gender"}, {"sent_more", "m"}, {"sent_less", "l"}}
                            .dump() +
                        "\n");
    for (const auto& p : load_crows_pairs(tmp.path() / "gender.jsonl"))
        CHECK(p.bias_type == "gender");

    write_text_file(tmp.path() / "degen.jsonl",
                    json{{"id", "d"}, {"bias_type", "gender"}, {"sent_more", "x"}, {"sent_less", "x"}}
                            .dump() +
                        "\n");
    try {
        load_crows_pairs(tmp.path() / "degen.jsonl");
        FAIL("expected degenerate pair error");
    } catch (const DataFormatError& e) {
        CHECK(std::string(e.what()).find("degenerate pair") != std::string::npos);
    }
}

TEST_CASE("apply_swap toggles one flag and grows the log monotonically") {
    PartitionState state;
    state = apply_swap(state, "gender", 50);
    CHECK(state.is_swapped("gender"));
    CHECK_FALSE(state.is_swapped("race"));
    state = apply_swap(state, "gender", 100);
    CHECK_FALSE(state.is_swapped("gender"));  // involution
    state = apply_swap(state, "race", 150);
    REQUIRE(state.swap_log.size() == 3);
    CHECK(state.swap_log[0].step == 50);
    CHECK(state.swap_log[1].step == 100);
    CHECK(state.swap_log[2].step == 150);
    CHECK(state.swap_log[2].bias_type == "race");
    CHECK_THROWS_AS(apply_swap(state, "race", 150), ConfigError);
    CHECK(state.digest() != PartitionState{}.digest());
}

TEST_CASE("partitions assign roles by swap state and keep the text union invariant") {
    auto instances = tiny_instances(10);
    PartitionState state;
    const auto p = build_partitions(instances, state, 0.0);
    REQUIRE(p.forget.size() == instances.size());
    REQUIRE(p.retain.size() == instances.size());
    REQUIRE(p.unrelated.size() == instances.size());
    for (size_t i = 0; i < instances.size(); ++i) {
        CHECK(p.forget[i].text == instances[i].stereotype);
        CHECK(p.forget[i].adversarial_text == instances[i].anti_stereotype);
        CHECK(p.retain[i].text == instances[i].anti_stereotype);
    }

    state = apply_swap(state, "gender", 1);
    const auto swapped = build_partitions(instances, state, 0.0);
    for (size_t i = 0; i < instances.size(); ++i) {
        if (instances[i].bias_type == "gender") {
            CHECK(swapped.forget[i].text == instances[i].anti_stereotype);
            CHECK(swapped.retain[i].text == instances[i].stereotype);
        } else {
            CHECK(swapped.forget[i].text == instances[i].stereotype);
        }
    }

    // bijectivity: the union of forget/retain texts is unchanged by swapping
    auto union_of = [](const Partitions& parts) {
        std::multiset<std::string> u;
        for (const auto& f : parts.forget) u.insert(f.id + "|" + f.text);
        for (const auto& r : parts.retain) u.insert(r.id + "|" + r.text);
        return u;
    };
    CHECK(union_of(p) == union_of(swapped));

    CHECK_THROWS_AS(build_partitions({}, state, 0.0), ConfigError);
    CHECK_THROWS_AS(build_partitions(instances, state, 0.5), ConfigError);
    CHECK_THROWS_AS(build_partitions(instances, state, -0.1), ConfigError);
}

TEST_CASE("chunk stream cycles the retain pool in post-shuffle order") {
    auto instances = tiny_instances(3);  // 12 total, retain pool 12... need 10
    instances.resize(10);
    const auto pools = build_partitions(instances, PartitionState{}, 0.0);
    ChunkStream stream(pools, 4, 28, 2, 123);
    const DataChunk chunk = stream.next();
    REQUIRE(chunk.retain_batch.size() == 28);
    // positions 10..19 repeat 0..9, positions 20..27 repeat 0..7
    std::set<std::string> first_pass;
    for (int i = 0; i < 10; ++i) first_pass.insert(chunk.retain_batch[static_cast<size_t>(i)].id);
    CHECK(first_pass.size() == 10);  // a permutation of the pool
    for (int i = 10; i < 28; ++i) {
        CHECK(chunk.retain_batch[static_cast<size_t>(i)].id ==
              chunk.retain_batch[static_cast<size_t>(i - 10)].id);
        CHECK(chunk.retain_batch[static_cast<size_t>(i)].text ==
              chunk.retain_batch[static_cast<size_t>(i - 10)].text);
    }
}

TEST_CASE("chunk stream yields floor(pool / batch) chunks per epoch") {
    auto instances = tiny_instances(2);  // 8 instances
    const auto pools = build_partitions(instances, PartitionState{}, 0.0);
    ChunkStream stream(pools, 4, 8, 1, 9);
    CHECK(stream.chunks_per_epoch() == 2);
    const auto c0 = stream.next();
    const auto c1 = stream.next();
    CHECK(c0.epoch == 0);
    CHECK(c1.epoch == 0);
    std::set<std::string> seen;
    for (const auto& item : c0.forget_batch) seen.insert(item.id);
    for (const auto& item : c1.forget_batch) seen.insert(item.id);
    CHECK(seen.size() == 8);  // the whole pool exactly once
    CHECK(stream.next().epoch == 1);
}

TEST_CASE("chunk stream validates the retain ratio") {
    const auto pools = build_partitions(tiny_instances(3), PartitionState{}, 0.0);
    CHECK_THROWS_AS(ChunkStream(pools, 4, 27, 1, 1), ConfigError);  // not a multiple
    CHECK_THROWS_AS(ChunkStream(pools, 4, 4, 1, 1), ConfigError);   // n must exceed 1
    CHECK_NOTHROW(ChunkStream(pools, 4, 8, 1, 1));
}

TEST_CASE("adversarial members appear at the configured fraction with in-batch counterparts") {
    auto instances = tiny_instances(12);
    const auto pools = build_partitions(instances, PartitionState{}, 0.25);
    ChunkStream stream(pools, 4, 8, 1, 77);
    std::map<std::string, const StereoInstance*> by_id;
    for (const auto& inst : instances) by_id[inst.id] = &inst;

    for (int c = 0; c < 24; ++c) {
        const DataChunk chunk = stream.next();
        REQUIRE(chunk.forget_batch.size() == 4);
        int advers = 0;
        for (const auto& item : chunk.forget_batch) {
            if (!item.adversarial) continue;
            ++advers;
            // the adversarial member carries the opposite-role text ...
            CHECK(item.text == by_id.at(item.id)->anti_stereotype);
            // ... and its counterpart sits in the same batch
            bool counterpart = false;
            for (const auto& other : chunk.forget_batch) {
                if (!other.adversarial && other.id == item.id &&
                    other.text == by_id.at(item.id)->stereotype)
                    counterpart = true;
            }
            CHECK(counterpart);
        }
        CHECK(advers == 1);  // floor(0.25 * 4)
    }
}

TEST_CASE("chunk streams are deterministic in the seed") {
    const auto pools = build_partitions(tiny_instances(6), PartitionState{}, 0.25);
    auto serialize = [&](uint64_t seed) {
        ChunkStream stream(pools, 4, 8, 3, seed);
        std::ostringstream ss;
        for (int i = 0; i < 30; ++i) {
            const auto c = stream.next();
            ss << c.chunk_index << "/" << c.epoch << ":";
            for (const auto& f : c.forget_batch) ss << f.id << "," << f.text << "," << f.adversarial << ";";
            for (const auto& r : c.retain_batch) ss << r.id << ";";
            for (const auto& u : c.unrelated_batch) ss << u << ";";
            ss << "\n";
        }
        return ss.str();
    };
    CHECK(serialize(7) == serialize(7));
    CHECK(serialize(7) != serialize(8));
}

TEST_CASE("skip replays the stream to the same position") {
    const auto pools = build_partitions(tiny_instances(5), PartitionState{}, 0.25);
    ChunkStream a(pools, 4, 8, 2, 99);
    ChunkStream b(pools, 4, 8, 2, 99);
    for (int i = 0; i < 13; ++i) a.next();
    b.skip(13);
    for (int i = 0; i < 5; ++i) {
        const auto ca = a.next();
        const auto cb = b.next();
        CHECK(ca.chunk_index == cb.chunk_index);
        REQUIRE(ca.forget_batch.size() == cb.forget_batch.size());
        for (size_t j = 0; j < ca.forget_batch.size(); ++j)
            CHECK(ca.forget_batch[j].text == cb.forget_batch[j].text);
    }
}

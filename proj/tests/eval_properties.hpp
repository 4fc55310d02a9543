#pragma once

// Randomized invariant suite for the evaluation metrics, shared between the
// unit tests and the acceptance run: argmax invariance of preference, the
// pooled-overall identity, ICAT bounds, and stereo/anti relabel symmetry.

#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "debias/bias_eval.hpp"
#include "debias/corpus.hpp"

namespace debias::test {

inline void expect(bool ok, const std::string& what) {
    if (!ok) throw std::runtime_error("eval property violated: " + what);
}

inline void run_eval_property_suite(int n_reports, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mean_dist(-8.0, -0.5);
    std::uniform_int_distribution<int> count_dist(1, 40);
    std::uniform_real_distribution<double> aff_a(0.1, 3.0);
    std::uniform_real_distribution<double> aff_b(-2.0, 2.0);
    const std::vector<BiasType> types = {"gender", "profession", "race", "religion"};

    for (int rep = 0; rep < n_reports; ++rep) {
        std::vector<StereoInstance> instances;
        std::map<std::string, double> score_of;
        const int n_types = 1 + static_cast<int>(rng() % types.size());
        int uid = 0;
        for (int ti = 0; ti < n_types; ++ti) {
            const int n = count_dist(rng);
            for (int i = 0; i < n; ++i) {
                StereoInstance inst;
                inst.id = types[static_cast<size_t>(ti)] + std::to_string(uid);
                inst.bias_type = types[static_cast<size_t>(ti)];
                inst.context = "ctx" + std::to_string(uid);
                inst.stereotype = "s" + std::to_string(uid);
                inst.anti_stereotype = "a" + std::to_string(uid);
                inst.unrelated = "u" + std::to_string(uid);
                double s = mean_dist(rng), a = mean_dist(rng), u = mean_dist(rng);
                if (rng() % 8 == 0) a = s;  // inject exact ties
                if (rng() % 8 == 0) u = s;
                score_of[inst.stereotype] = s;
                score_of[inst.anti_stereotype] = a;
                score_of[inst.unrelated] = u;
                instances.push_back(std::move(inst));
                ++uid;
            }
        }
        MeanScoreFn base = [&score_of](const std::string& text, const std::string&) {
            return score_of.at(text);
        };
        const EvalReport report = stereoset_eval(base, instances, PreferenceRule{});

        // pooled overall equals the count-weighted mean of per-type rows
        double weighted_ss = 0.0, weighted_lms = 0.0;
        int total = 0;
        for (const auto& [t, row] : report.per_type) {
            weighted_ss += row.ss * row.n;
            weighted_lms += row.lms * row.n;
            total += row.n;
        }
        expect(total == report.overall.n, "overall count");
        expect(std::abs(report.overall.ss - weighted_ss / total) < 1e-9, "ss pooling identity");
        expect(std::abs(report.overall.lms - weighted_lms / total) < 1e-9, "lms pooling identity");

        // ICAT bounds, equality with LMS exactly at SS = 50
        for (const auto& [t, row] : report.per_type) {
            expect(row.icat >= -1e-12, "icat lower bound");
            expect(row.icat <= row.lms + 1e-12, "icat upper bound");
            if (std::abs(row.ss - 50.0) < 1e-12) {
                expect(std::abs(row.icat - row.lms) < 1e-9, "icat = lms at ss 50");
            } else if (row.lms > 1e-9) {
                expect(row.icat < row.lms + 1e-12, "icat < lms away from 50");
            }
        }

        // preference is invariant under strictly increasing transforms
        const double a = aff_a(rng), b = aff_b(rng);
        MeanScoreFn affine = [&, a, b](const std::string& text, const std::string& ctx) {
            return a * base(text, ctx) + b;
        };
        MeanScoreFn squash = [&](const std::string& text, const std::string& ctx) {
            return std::tanh(base(text, ctx) / 10.0);
        };
        for (const auto& fn : {affine, squash}) {
            const EvalReport transformed = stereoset_eval(fn, instances, PreferenceRule{});
            expect(std::abs(transformed.overall.ss - report.overall.ss) < 1e-9,
                   "argmax invariance (ss)");
            expect(std::abs(transformed.overall.lms - report.overall.lms) < 1e-9,
                   "argmax invariance (lms)");
        }

        // relabeling stereotype <-> anti-stereotype mirrors SS and keeps LMS
        std::vector<StereoInstance> flipped = instances;
        for (auto& inst : flipped) std::swap(inst.stereotype, inst.anti_stereotype);
        const EvalReport mirror = stereoset_eval(base, flipped, PreferenceRule{});
        expect(std::abs(mirror.overall.ss - (100.0 - report.overall.ss)) < 1e-9,
               "relabel symmetry (ss)");
        expect(std::abs(mirror.overall.lms - report.overall.lms) < 1e-9,
               "relabel symmetry (lms)");
        for (const auto& [t, row] : report.per_type) {
            expect(std::abs(mirror.per_type.at(t).ss - (100.0 - row.ss)) < 1e-9,
                   "relabel symmetry per type");
        }
    }
}

}  // namespace debias::test

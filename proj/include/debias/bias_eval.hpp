#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "debias/corpus.hpp"
#include "debias/scoring.hpp"

namespace debias {

struct PreferenceRule {
    double tie_credit = 0.5;  // a constant model then scores exactly 50
};

struct MetricRow {
    double ss = 0.0;    // percent
    double lms = 0.0;   // percent
    double icat = 0.0;
    int n = 0;
};

/**
 * Per-bias-type and pooled-overall metrics. Overall is computed over the
 * pooled instances, not the mean of the per-type rows.
 */
struct EvalReport {
    std::map<BiasType, MetricRow> per_type;
    MetricRow overall;
    int step = 0;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

struct CrowsReport {
    std::map<BiasType, double> ss;
    std::map<BiasType, int> n;
    double overall_ss = 0.0;
    int total = 0;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

// 1 if a is preferred, 0 if b is, tie_credit on exact equality of the
// length-normalized (mean per-token) log-probabilities.
double preference(const SequenceScore& a, const SequenceScore& b, const PreferenceRule& rule);

// ICAT = LMS * min(SS, 100 - SS) / 50; inputs must be percentages.
double icat(double ss, double lms);

// Mean per-token log-probability of `text` under `context`; the seam that
// lets scripted scorers drive the evaluators in tests.
using MeanScoreFn = std::function<double(const std::string& text, const std::string& context)>;

EvalReport stereoset_eval(const MeanScoreFn& score, const std::vector<StereoInstance>& instances,
                          const PreferenceRule& rule = {}, int step = 0);
EvalReport stereoset_eval(const LanguageModel& model, const std::vector<StereoInstance>& instances,
                          const PreferenceRule& rule = {}, bool use_adapter = true, int step = 0);

CrowsReport crows_pairs_eval(const MeanScoreFn& score, const std::vector<ContrastPair>& pairs,
                             const PreferenceRule& rule = {});
CrowsReport crows_pairs_eval(const LanguageModel& model, const std::vector<ContrastPair>& pairs,
                             const PreferenceRule& rule = {}, bool use_adapter = true);

MeanScoreFn model_score_fn(const LanguageModel& model, bool use_adapter);

}  // namespace debias

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "nliaudit/core.hpp"
#include "nliaudit/rational.hpp"

namespace nliaudit::scoring {

// Per-(label, stance) tallies. Naming follows the e/c x S/A convention:
// n_eS counts entailments on pro-stereotype samples, n_cA contradictions on
// anti-stereotype samples, and so on.
struct MarginalCounts {
    std::int64_t n_eS = 0;
    std::int64_t n_eA = 0;
    std::int64_t n_cS = 0;
    std::int64_t n_cA = 0;
    std::int64_t n_e = 0;
    std::int64_t n_c = 0;
    std::int64_t total = 0;
};

// How one counterfactual pair's predictions are attributed. At most one of
// the three counts is non-zero, and they sum to the pair's mispredictions.
struct PairContribution {
    int pro_count = 0;
    int anti_count = 0;
    int error_count = 0;

    bool operator==(const PairContribution&) const = default;
};

struct SliceKey {
    std::string model_id;
    std::string domain;    // empty = all domains
    std::string subtopic;  // empty = all subtopics

    std::string scope() const {
        if (!subtopic.empty()) return subtopic;
        if (!domain.empty()) return domain;
        return "all";
    }
};

struct BiasReport {
    SliceKey slice;
    std::int64_t sample_count = 0;
    Rat accuracy;
    Rat mispred_rate;         // 1 - accuracy
    Rat aggregate_score;      // pro_marginal - anti_marginal
    Rat pro_marginal;
    Rat anti_marginal;
    Rat pro_cf;               // counterfactual-aware pro-stereotype bias
    Rat anti_cf;
    Rat group_insensitive_error;
};

// One model's predictions, keyed by sample id.
using PredictionIndex = std::map<std::string, NliLabel>;

PredictionIndex index_predictions(const std::vector<Prediction>& predictions,
                                  const std::string& model_id);

// Gold is neutral for every sample, so accuracy is the neutral rate.
// Empty slices and missing predictions are errors.
Rat accuracy(const PredictionIndex& predictions, const std::vector<Sample>& slice);

MarginalCounts marginal_counts(const PredictionIndex& predictions,
                               const std::vector<Sample>& slice);

// (2 (n_eS + n_cA) / (n_e + n_c) - 1) (1 - accuracy); defined as 0 when the
// model made no mispredictions. Equals marginal pro minus marginal anti.
Rat aggregate_bias_score(const MarginalCounts& counts);

// ((n_eS + n_cA) / total, (n_eA + n_cS) / total)
std::pair<Rat, Rat> marginal_bias(const MarginalCounts& counts);

// Attribution table for one counterfactual pair:
//   pro:   (E,N) (N,C) -> 1,  (E,C) -> 2
//   anti:  (C,N) (N,E) -> 1,  (C,E) -> 2
//   error: (E,E) (C,C) -> 2   (same wrong label for both groups)
PairContribution classify_pair(NliLabel label_pro, NliLabel label_anti);

struct CounterfactualMeasures {
    Rat mispred_rate;
    Rat pro_cf;
    Rat anti_cf;
    Rat group_insensitive_error;  // pro_cf + anti_cf + this == mispred_rate, exactly
};

// Denominator is the slice's own sample count, so the three measures plus
// nothing else account for every misprediction.
CounterfactualMeasures disaggregate_counterfactual(const PredictionIndex& predictions,
                                                   const std::vector<CounterfactualPair>& pairs,
                                                   const std::vector<Sample>& slice);

// One report per (model, slice). Slices default to all + every domain +
// every subtopic present in the dataset. Empty slices are skipped through
// the warning sink.
std::vector<BiasReport> score_report(
    const std::vector<Prediction>& predictions, const std::vector<Sample>& dataset,
    const std::vector<CounterfactualPair>& pairs,
    const std::vector<std::string>& slice_scopes = {},
    const std::function<void(const std::string&)>& warn = nullptr);

std::string reports_to_csv(const std::vector<BiasReport>& reports);
std::string reports_to_json(const std::vector<BiasReport>& reports);
std::string reports_to_markdown(const std::vector<BiasReport>& reports);

}  // namespace nliaudit::scoring

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nliaudit/backends.hpp"
#include "nliaudit/core.hpp"

namespace nliaudit::pipeline {

// Simultaneous bidirectional whole-word group-term replacement. Longer terms
// match before their substrings, and a replacement is never rescanned, so
// "men" <-> "women" cannot double-fire and swap(swap(h)) == h for any text
// whose group terms are canonical or sentence-initial capitalized (the only
// forms the pipeline produces).
class GroupSwapper {
public:
    explicit GroupSwapper(const GroupPair& pair);

    struct Result {
        std::string text;
        size_t substitutions = 0;
        std::string first_replacement;  // term substituted first, canonical form
    };
    Result swap(std::string_view text) const;

private:
    struct Rule {
        std::string from;
        std::string to;
    };
    std::vector<Rule> rules_;  // both directions, longest source first
};

struct FilterDecision {
    std::string sample_id;
    std::map<std::string, NliLabel> per_model_labels;
    bool kept = false;  // true iff any per-model label is non-neutral
};

struct FillOutcome {
    std::vector<Sample> samples;
    // Set when a backend call failed; samples then hold the partial progress
    // so the stage can persist a partial-progress checkpoint before aborting.
    std::optional<std::string> error;
};

// Replaces the single mask in each hypothesis with the backend's top-k
// candidate tokens, verbatim. Premises are never altered. Generated samples
// inherit the template stance; human validation may later override it.
FillOutcome fill_hypotheses(const std::vector<Sample>& masked_samples,
                            backends::Backend& fill_backend, int k);

struct FilterOutcome {
    std::vector<Sample> kept;
    std::vector<FilterDecision> decisions;
    std::optional<std::string> error;
};

// Keeps a sample iff at least one filter model predicts non-neutral.
// Backends must all carry role=filter; holdout models never participate.
FilterOutcome adversarial_filter(const std::vector<Sample>& samples,
                                 const std::vector<backends::Backend*>& filter_backends);

struct CounterfactualOutcome {
    std::vector<Sample> samples;  // input plus swapped partners, deduplicated
    struct Flagged {
        std::string sample_id;
        std::string reason;
    };
    std::vector<Flagged> flagged;  // excluded samples, with why
};

// Adds the group-swapped partner of every sample (unconditionally — no
// re-filtering), deduplicates by (premise, hypothesis), links partners with
// a shared pair_id and flips the partner's stance. Idempotent.
CounterfactualOutcome counterfactual_expand(const std::vector<Sample>& samples,
                                            const std::map<std::string, GroupPair>& group_pairs);

// One pair per pair_id with exactly one pro and one anti member; anything
// else (orphans, triples, missing pair ids) is an error listing the ids.
std::vector<CounterfactualPair> build_pairs(const std::vector<Sample>& dataset);

// Stage-output hygiene: sorts by id and drops later samples whose
// (premise, hypothesis) key was already seen.
std::vector<Sample> dedup_by_text(std::vector<Sample> samples);

void write_filter_decisions(const std::vector<FilterDecision>& decisions,
                            const std::filesystem::path& path);
std::vector<FilterDecision> read_filter_decisions(const std::filesystem::path& path);

}  // namespace nliaudit::pipeline

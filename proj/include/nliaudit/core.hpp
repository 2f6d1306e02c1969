#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nliaudit/errors.hpp"
#include "nliaudit/hash.hpp"

namespace nliaudit {

// --------------------------------------------------------------------------
// Labels
// --------------------------------------------------------------------------

enum class NliLabel { entailment, neutral, contradiction };

enum class Stance { pro_stereotype, anti_stereotype };

std::string_view to_string(NliLabel label);
std::string_view to_string(Stance stance);

// Case-insensitive; anything outside the three labels is a ParseError.
NliLabel nli_label_from_string(std::string_view s);
Stance stance_from_string(std::string_view s);

inline Stance flipped(Stance s) {
    return s == Stance::pro_stereotype ? Stance::anti_stereotype : Stance::pro_stereotype;
}

// --------------------------------------------------------------------------
// Domain records
// --------------------------------------------------------------------------

// The two social groups of one bias subtopic. Surface terms are paired by
// index: primary[i] swaps with counterfactual[i].
struct GroupPair {
    std::string subtopic;
    std::vector<std::string> primary;
    std::vector<std::string> counterfactual;

    // Throws InvariantError on empty, mismatched or overlapping term lists.
    void validate() const;
};

struct Sample {
    std::string id;
    std::string domain;        // open set; "gender", "race", "religion" ship as defaults
    std::string subtopic;
    std::string premise;
    std::string hypothesis;
    Stance stance = Stance::pro_stereotype;
    std::string group;         // surface term the hypothesis generalizes about
    std::optional<std::string> pair_id;
    std::string provenance;    // original | generated | counterfactual
    std::optional<std::string> filled_token;
    NliLabel gold_label = NliLabel::neutral;

    bool operator==(const Sample&) const = default;
};

// Content hash of (premise, hypothesis, stance): regeneration is stable and
// duplicates collide by construction.
inline std::string sample_content_id(std::string_view premise, std::string_view hypothesis,
                                     Stance stance) {
    return to_hex(fnv1a64_fields({premise, hypothesis, to_string(stance)}));
}

// Pair id shared by a sample and its group-swapped partner; computed from the
// premise and the unordered hypothesis pair so both members agree on it.
std::string pair_content_id(std::string_view premise, std::string_view hyp_a,
                            std::string_view hyp_b);

struct Prediction {
    std::string sample_id;
    std::string model_id;
    NliLabel label = NliLabel::neutral;
    // entailment/neutral/contradiction probabilities; each in [0,1], sum 1.
    std::optional<std::array<double, 3>> scores;

    void validate() const;
};

struct CounterfactualPair {
    std::string pair_id;
    std::string pro_sample_id;
    std::string anti_sample_id;

    bool operator==(const CounterfactualPair&) const = default;
};

// --------------------------------------------------------------------------
// Dataset / prediction files: UTF-8 JSONL, one flat object per line.
// --------------------------------------------------------------------------

// Throws ParseError with the 1-based line number on malformed records,
// duplicate ids, or non-neutral gold labels.
std::vector<Sample> read_dataset(const std::filesystem::path& path);

// Emits records sorted by id; byte-stable for equal inputs. Throws
// InvariantError on duplicate ids before touching the file.
void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path);

std::string dataset_to_string(std::vector<Sample> samples);

std::vector<Prediction> read_predictions(const std::filesystem::path& path);
void write_predictions(const std::vector<Prediction>& predictions,
                       const std::filesystem::path& path);

std::vector<CounterfactualPair> read_pairs(const std::filesystem::path& path);
void write_pairs(const std::vector<CounterfactualPair>& pairs,
                 const std::filesystem::path& path);

}  // namespace nliaudit

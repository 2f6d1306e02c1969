#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nliaudit/core.hpp"
#include "nliaudit/rational.hpp"

namespace nliaudit::annotation {

enum class Category { valid, invalid, incoherent, unlabeled };

Category category_from_string(std::string_view s);
std::string_view to_string(Category c);

struct AnnotationRecord {
    std::string hypothesis_id;  // content hash of the hypothesis text
    std::string hypothesis;
    Category category = Category::unlabeled;
    // Round-2 stance labels; meaningful only for category=valid rows.
    std::map<std::string, std::optional<Stance>> stance_by_annotator;
};

std::string hypothesis_content_id(std::string_view hypothesis);

// One row per unique hypothesis text, sorted by text, category=unlabeled.
// Labels already present in `existing` are preserved (merge by id), so
// re-exporting after partial labeling loses nothing.
std::vector<AnnotationRecord> export_candidates(const std::vector<Sample>& samples,
                                                const std::vector<AnnotationRecord>& existing = {});

// Keeps only samples whose hypothesis was judged a valid pro-/anti-stereotype
// generalization. Unlabeled or missing hypotheses are an error listing them.
std::vector<Sample> apply_round1(const std::vector<Sample>& samples,
                                 const std::vector<AnnotationRecord>& annotations);

// Fraction of hypotheses both annotators labeled with the same stance.
// An item labeled by exactly one annotator is an error, not a skip.
Rat compute_agreement(const std::vector<AnnotationRecord>& annotations,
                      const std::string& annotator_a, const std::string& annotator_b);

struct Round2Result {
    std::vector<Sample> samples;
    std::vector<std::string> divergent_hypothesis_ids;
    // sample id -> agreed stance that overrode the template stance
    std::vector<std::pair<std::string, Stance>> stance_overrides;
    size_t dropped_by_subtopic = 0;
};

// Removes samples with divergent stance annotations and samples of dropped
// subtopics; where both annotators agree, the human stance wins over the
// template stance (overrides are reported, and ids are recomputed since the
// id hashes the stance).
Round2Result apply_round2(const std::vector<Sample>& samples,
                          const std::vector<AnnotationRecord>& annotations,
                          const std::vector<std::string>& dropped_subtopics,
                          const std::string& annotator_a, const std::string& annotator_b);

// Annotation file: UTF-8 CSV with header
//   hypothesis_id,hypothesis,category,stance_A,stance_B
// editable in any spreadsheet. The two stance columns map onto the caller's
// annotator ids in order.
std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path,
                                               const std::string& annotator_a,
                                               const std::string& annotator_b);
void write_annotations(const std::vector<AnnotationRecord>& records,
                       const std::filesystem::path& path, const std::string& annotator_a,
                       const std::string& annotator_b);

}  // namespace nliaudit::annotation

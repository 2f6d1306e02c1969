#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "nliaudit/config.hpp"
#include "nliaudit/manifest.hpp"

namespace nliaudit::stages {

// A stage failed against healthy configuration (backend died, invariant
// broke mid-run). Maps to exit code 2; ConfigError maps to 1.
class StageError : public std::runtime_error {
public:
    explicit StageError(const std::string& what) : std::runtime_error(what) {}
};

// Checkpoint file names, relative to the out dir.
namespace files {
inline constexpr const char* masked = "01_masked.jsonl";
inline constexpr const char* filled = "02_filled.jsonl";
inline constexpr const char* filtered = "03_filtered.jsonl";
inline constexpr const char* filter_decisions = "03_filter_decisions.jsonl";
inline constexpr const char* annotations = "annotations.csv";
inline constexpr const char* validated = "04_validated.jsonl";
inline constexpr const char* expanded = "05_expanded.jsonl";
inline constexpr const char* flagged = "05_flagged.json";
inline constexpr const char* pairs = "06_pairs.jsonl";
inline constexpr const char* manifest = "manifest.json";
inline constexpr const char* bias_report_csv = "reports/bias_report.csv";
inline constexpr const char* bias_report_json = "reports/bias_report.json";
inline constexpr const char* bias_report_md = "reports/bias_report.md";
}  // namespace files

// Orchestrates the pipeline stages over one out dir, tracking progress in
// the run manifest. Completed stages are no-ops unless forced.
class StageRunner {
public:
    StageRunner(RunConfig config, std::string config_hash, std::filesystem::path out_dir,
                bool force, std::ostream& log);

    void expand();
    void fill();
    void filter();
    void annotate_export();
    // Interactive labeling; reads keystrokes from `in`. round 1 labels
    // categories, round 2 stances for one annotator.
    void annotate_review(const std::string& annotator, int round, std::istream& in);
    void annotate_apply();
    void counterfactual();
    void pair();
    void predict();
    void score();
    void geneval_run();
    void geneval_score();
    void report();

    const Manifest& manifest() const { return manifest_; }
    const std::filesystem::path& out_dir() const { return out_dir_; }

private:
    bool skip_if_current(const std::string& stage);
    void require_stage(const std::string& stage) const;
    void save_manifest();
    std::vector<Sample> load_stage_dataset(const char* file, const std::string& upstream) const;

    RunConfig config_;
    std::filesystem::path out_dir_;
    bool force_;
    std::ostream& log_;
    Manifest manifest_;
};

// Standalone scoring over explicit files, for datasets produced elsewhere.
// Writes bias_report.csv/.json/.md into out_dir and returns the CSV body.
std::string score_files(const std::filesystem::path& dataset_path,
                        const std::filesystem::path& pairs_path,
                        const std::vector<std::filesystem::path>& prediction_paths,
                        const std::filesystem::path& out_dir, std::ostream& log);

// Best-effort importer for upstream benchmark CSV rows; recovers domain,
// subtopic, premise, hypothesis and stance columns (several aliases
// accepted) into a template file, plus group pairs into a lexicon skeleton.
struct ImportResult {
    size_t templates = 0;
    size_t group_pairs = 0;
    size_t skipped_rows = 0;
};
ImportResult import_seed_csv(const std::filesystem::path& csv_path,
                             const std::filesystem::path& templates_out,
                             const std::filesystem::path& lexicon_out);

std::string sanitize_filename(const std::string& name);

}  // namespace nliaudit::stages

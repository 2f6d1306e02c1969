#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "nliaudit/config.hpp"
#include "nliaudit/stages.hpp"

namespace {

namespace fs = std::filesystem;
using nliaudit::RunConfig;
using nliaudit::stages::StageRunner;

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    bool force = false;
};

StageRunner make_runner(const GlobalOptions& opts) {
    if (opts.config_path.empty())
        throw nliaudit::ConfigError("--config is required for this subcommand");
    RunConfig config = nliaudit::load_config(opts.config_path);
    if (opts.seed) config.seed = *opts.seed;
    fs::path out = opts.out_dir ? fs::path(*opts.out_dir) : config.paths.out_dir;
    // The seed override enters the identity hash so resumed runs can't mix
    // outputs produced under different seeds.
    std::string hash = nliaudit::config_file_hash(opts.config_path);
    if (opts.seed) hash += ":seed=" + std::to_string(*opts.seed);
    return StageRunner(std::move(config), hash, out, opts.force, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nliaudit: extend templated NLI bias-audit benchmarks and score predictions"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand (INHERITABLE)

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "Run configuration file (JSON)");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Override the configured seed");
    std::string out_value;
    auto* out_opt = app.add_option("--out", out_value, "Override the configured out dir");
    app.add_flag("--force", opts.force, "Re-run stages even when up to date");

    auto* cmd_import = app.add_subcommand("import-seed",
                                          "Import upstream benchmark CSV into template/lexicon files");
    std::string import_csv, import_templates = "templates.jsonl", import_lexicon = "lexicon.json";
    cmd_import->add_option("csv", import_csv, "Source CSV file")->required();
    cmd_import->add_option("--templates-out", import_templates, "Template file to write");
    cmd_import->add_option("--lexicon-out", import_lexicon, "Lexicon file to write");

    auto* cmd_expand = app.add_subcommand("expand", "Expand templates into masked samples");
    auto* cmd_fill = app.add_subcommand("fill", "Fill masked hypotheses with top-k candidates");
    auto* cmd_filter = app.add_subcommand("filter", "Adversarially filter filled samples");

    auto* cmd_annotate = app.add_subcommand("annotate", "Human validation workflow");
    cmd_annotate->require_subcommand(1);
    auto* cmd_ann_export = cmd_annotate->add_subcommand("export",
                                                        "Export unique hypotheses for labeling");
    auto* cmd_ann_review = cmd_annotate->add_subcommand("review",
                                                        "Label hypotheses in the terminal");
    std::string review_annotator;
    int review_round = 1;
    cmd_ann_review->add_option("--annotator", review_annotator, "Annotator id")->required();
    cmd_ann_review->add_option("--round", review_round, "1 = categories, 2 = stances")
        ->check(CLI::Range(1, 2));
    auto* cmd_ann_apply = cmd_annotate->add_subcommand("apply",
                                                       "Apply both validation rounds");

    auto* cmd_counterfactual =
        app.add_subcommand("counterfactual", "Add group-swapped counterfactual partners");
    auto* cmd_pair = app.add_subcommand("pair", "Build the counterfactual pair index");
    auto* cmd_predict = app.add_subcommand("predict", "Collect NLI predictions per model");
    auto* cmd_score = app.add_subcommand("score", "Compute bias reports from predictions");
    std::string score_dataset, score_pairs, score_out = ".";
    std::vector<std::string> score_predictions;
    cmd_score->add_option("--dataset", score_dataset,
                          "Score an explicit dataset file instead of the pipeline output");
    cmd_score->add_option("--pairs", score_pairs, "Pair index for --dataset");
    cmd_score->add_option("--predictions", score_predictions,
                          "Prediction files for --dataset (repeatable)");
    cmd_score->add_option("--report-dir", score_out, "Where --dataset reports are written");
    auto* cmd_report = app.add_subcommand("report", "Render bias reports as markdown");

    auto* cmd_geneval = app.add_subcommand("geneval", "Generative-LM evaluation");
    cmd_geneval->require_subcommand(1);
    auto* cmd_gen_run = cmd_geneval->add_subcommand("run", "Prompt generative models");
    auto* cmd_gen_score = cmd_geneval->add_subcommand("score", "Score parsed yes/no answers");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (*seed_opt) opts.seed = seed_value;
    if (*out_opt) opts.out_dir = out_value;

    try {
        if (*cmd_import) {
            const auto result =
                nliaudit::stages::import_seed_csv(import_csv, import_templates, import_lexicon);
            std::cout << "import-seed: " << result.templates << " templates, "
                      << result.group_pairs << " group pairs, " << result.skipped_rows
                      << " rows skipped\n";
            return 0;
        }
        if (*cmd_score && !score_dataset.empty()) {
            if (score_pairs.empty() || score_predictions.empty())
                throw nliaudit::ConfigError(
                    "score --dataset also needs --pairs and --predictions");
            std::vector<fs::path> preds(score_predictions.begin(), score_predictions.end());
            std::cout << nliaudit::stages::score_files(score_dataset, score_pairs, preds,
                                                       score_out, std::cout);
            return 0;
        }
        StageRunner runner = make_runner(opts);
        if (*cmd_expand) runner.expand();
        else if (*cmd_fill) runner.fill();
        else if (*cmd_filter) runner.filter();
        else if (*cmd_ann_export) runner.annotate_export();
        else if (*cmd_ann_review) runner.annotate_review(review_annotator, review_round, std::cin);
        else if (*cmd_ann_apply) runner.annotate_apply();
        else if (*cmd_counterfactual) runner.counterfactual();
        else if (*cmd_pair) runner.pair();
        else if (*cmd_predict) runner.predict();
        else if (*cmd_score) runner.score();
        else if (*cmd_report) runner.report();
        else if (*cmd_gen_run) runner.geneval_run();
        else if (*cmd_gen_score) runner.geneval_score();
        return 0;
    } catch (const nliaudit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "nliaudit/config.hpp"
#include "nliaudit/pipeline.hpp"
#include "nliaudit/stages.hpp"
#include "nliaudit/templating.hpp"
#include "testutil.hpp"

using namespace nliaudit;
using namespace nliaudit::stages;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kFixtures = NLIAUDIT_FIXTURE_DIR;
const std::string kCli = NLIAUDIT_CLI_PATH;
const fs::path kConfig = kFixtures / "config_stub.json";

fs::path fresh_out(const std::string& leaf) {
    const auto dir = fs::temp_directory_path() / "nliaudit_cli" / leaf;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

StageRunner make_runner(const fs::path& out, std::ostream& log, bool force = false) {
    RunConfig config = load_config(kConfig);
    return StageRunner(std::move(config), config_file_hash(kConfig), out, force, log);
}

// Runs every stage the way an operator would, labeling annotations between
// export and apply.
void run_full_pipeline(const fs::path& out, std::ostream& log) {
    {
        StageRunner runner = make_runner(out, log);
        runner.expand();
        runner.fill();
        runner.filter();
        runner.annotate_export();
    }
    testutil::label_annotations_deterministically(out / files::annotations, "A", "B");
    {
        StageRunner runner = make_runner(out, log);
        runner.annotate_apply();
        runner.counterfactual();
        runner.pair();
        runner.predict();
        runner.score();
        runner.geneval_run();
        runner.geneval_score();
        runner.report();
    }
}

int run_cli(const std::string& args) {
    const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config loading applies defaults and validates") {
    const RunConfig config = load_config(kConfig);
    CHECK(config.seed == 42);
    CHECK(config.fill_k == 3);
    CHECK(config.backends.size() == 6);
    CHECK(config.backends_with_role(backends::BackendRole::filter).size() == 3);
    CHECK(config.backends_with_role(backends::BackendRole::holdout).size() == 1);
    CHECK(config.dropped_subtopics ==
          std::vector<std::string>{"Catholic_woman_is_to_kids"});
    CHECK(config.effective_ruleset().size() == geneval::default_ruleset().size());
    // Relative paths resolve against the config directory.
    CHECK(fs::exists(config.paths.templates));
    CHECK(fs::exists(config.paths.lexicon));
}

TEST_CASE("full stub pipeline runs through every stage") {
    const auto out = fresh_out("full");
    std::ostringstream log;
    run_full_pipeline(out, log);

    for (const char* f :
         {files::masked, files::filled, files::filtered, files::filter_decisions,
          files::annotations, files::validated, files::expanded, files::flagged, files::pairs,
          files::manifest, files::bias_report_csv, files::bias_report_json,
          files::bias_report_md})
        CHECK(fs::exists(out / f));

    const auto masked = read_dataset(out / files::masked);
    CHECK(masked.size() == 22);  // cartesian products of the bundled templates

    const auto validated = read_dataset(out / files::validated);
    for (const auto& s : validated) CHECK(s.subtopic != "Catholic_woman_is_to_kids");

    const auto expanded = read_dataset(out / files::expanded);
    const auto pairs = read_pairs(out / files::pairs);
    CHECK(expanded.size() == 2 * pairs.size());
    for (const auto& s : expanded) REQUIRE(s.pair_id.has_value());

    // Filter decisions cover the whole filled dataset.
    const auto filled = read_dataset(out / files::filled);
    const auto decisions = pipeline::read_filter_decisions(out / files::filter_decisions);
    CHECK(decisions.size() == filled.size());
    const auto kept = read_dataset(out / files::filtered);
    size_t kept_decisions = 0;
    for (const auto& d : decisions) kept_decisions += d.kept ? 1 : 0;
    CHECK(kept_decisions == kept.size());

    // The manifest records every stage as complete, with counts.
    const auto manifest = json::parse(testutil::read_file(out / files::manifest));
    for (const char* stage : {"expand", "fill", "filter", "annotate_export", "annotate_apply",
                              "counterfactual", "pair", "predict", "score", "geneval_run",
                              "geneval_score", "report"})
        CHECK(manifest.at("stages").at(stage).at("status") == "complete");
    CHECK(manifest.at("stages").at("expand").at("counts").at("masked_samples") == 22);
    // One prediction file per filter/holdout model.
    CHECK(manifest.at("stages").at("predict").at("outputs").size() == 4);

    // Scoring report covers 4 models x (all + domains + subtopics).
    const auto report = json::parse(testutil::read_file(out / files::bias_report_json));
    CHECK(report.size() % 4 == 0);
    CHECK(report.size() >= 16);
}

TEST_CASE("completed stages are no-ops unless forced") {
    const auto out = fresh_out("resume");
    std::ostringstream log;
    {
        StageRunner runner = make_runner(out, log);
        runner.expand();
    }
    const auto bytes = testutil::read_file(out / files::masked);
    {
        std::ostringstream log2;
        StageRunner runner = make_runner(out, log2);
        runner.expand();
        CHECK(log2.str().find("up to date") != std::string::npos);
    }
    {
        std::ostringstream log3;
        StageRunner runner = make_runner(out, log3, /*force=*/true);
        runner.expand();
        CHECK(log3.str().find("up to date") == std::string::npos);
    }
    CHECK(testutil::read_file(out / files::masked) == bytes);
}

TEST_CASE("stages refuse to run before their inputs exist") {
    const auto out = fresh_out("order");
    std::ostringstream log;
    StageRunner runner = make_runner(out, log);
    CHECK_THROWS_AS(runner.fill(), StageError);
    CHECK_THROWS_AS(runner.score(), StageError);
}

TEST_CASE("a manifest from another config or seed is refused") {
    const auto out = fresh_out("mismatch");
    std::ostringstream log;
    {
        StageRunner runner = make_runner(out, log);
        runner.expand();
    }
    RunConfig config = load_config(kConfig);
    config.seed = 43;
    CHECK_THROWS_AS(StageRunner(std::move(config), config_file_hash(kConfig), out, false, log),
                    ConfigError);
    RunConfig config2 = load_config(kConfig);
    CHECK_THROWS_AS(StageRunner(std::move(config2), "different-hash", out, false, log),
                    ConfigError);
}

TEST_CASE("filter without filter-role backends is a config error") {
    const auto out = fresh_out("nofilter");
    std::ostringstream log;
    {
        StageRunner runner = make_runner(out, log);
        runner.expand();
        runner.fill();
    }
    RunConfig config = load_config(kConfig);
    std::erase_if(config.backends, [](const backends::BackendConfig& b) {
        return b.role == backends::BackendRole::filter;
    });
    StageRunner stripped(std::move(config), config_file_hash(kConfig), out, false, log);
    CHECK_THROWS_AS(stripped.filter(), ConfigError);
}

TEST_CASE("fill failure persists partial progress and a failed manifest entry") {
    const auto out = fresh_out("fill_fail");
    const std::string hash = config_file_hash(kConfig);
    {
        RunConfig config = load_config(kConfig);
        StageRunner runner(std::move(config), hash, out, false, std::cout);
        runner.expand();
    }
    // Swap the fill backend for a replay client over an empty cache: every
    // fill call misses, pass-through samples still land in the checkpoint.
    RunConfig config = load_config(kConfig);
    for (auto& b : config.backends) {
        if (b.role != backends::BackendRole::fill) continue;
        b.kind = backends::BackendKind::replay;
        b.replay_dir = out / "empty_replay";
        b.max_parallel = 1;
    }
    std::ostringstream log;
    StageRunner runner(std::move(config), hash, out, false, log);
    CHECK_THROWS_WITH_AS(runner.fill(), doctest::Contains("partial progress"), StageError);
    CHECK(fs::exists(out / files::filled));
    const auto partial = read_dataset(out / files::filled);
    CHECK(partial.size() == 6);  // the mask-free pass-through expansions
    const auto manifest = json::parse(testutil::read_file(out / files::manifest));
    CHECK(manifest.at("stages").at("fill").at("status") == "failed");
    CHECK(manifest.at("stages").at("fill").contains("error"));
    // A failed stage is not "up to date": the next attempt re-runs it.
    std::ostringstream log2;
    RunConfig config2 = load_config(kConfig);
    StageRunner retry(std::move(config2), hash, out, false, log2);
    retry.fill();
    CHECK(json::parse(testutil::read_file(out / files::manifest))
              .at("stages")
              .at("fill")
              .at("status") == "complete");
}

TEST_CASE("predict caches per (model, dataset hash) and honors --force") {
    const auto out = fresh_out("predict_cache");
    std::ostringstream log;
    run_full_pipeline(out, log);
    const fs::path pred_file = out / "predictions_electra-stub.jsonl";
    REQUIRE(fs::exists(pred_file));
    const auto bytes = testutil::read_file(pred_file);
    {
        std::ostringstream log2;
        StageRunner runner = make_runner(out, log2);
        runner.predict();
        CHECK(log2.str().find("cached, skipping") != std::string::npos);
    }
    {
        std::ostringstream log3;
        StageRunner runner = make_runner(out, log3, /*force=*/true);
        runner.predict();
        CHECK(log3.str().find("cached, skipping") == std::string::npos);
    }
    CHECK(testutil::read_file(pred_file) == bytes);  // re-query is deterministic
}

TEST_CASE("cli binary: filter with zero filter backends exits with a config error") {
    const auto out = fresh_out("binary_nofilter");
    // A config whose only backends fill and generate.
    const auto config_path = out / "nofilter.json";
    {
        json config = json::parse(testutil::read_file(kConfig));
        json kept = json::array();
        for (const auto& b : config.at("backends"))
            if (b.at("role") != "filter" && b.at("role") != "holdout") kept.push_back(b);
        config["backends"] = kept;
        config["paths"]["templates"] = (kFixtures / "templates.jsonl").string();
        config["paths"]["lexicon"] = (kFixtures / "lexicon.json").string();
        std::ofstream f(config_path, std::ios::binary);
        f << config.dump(2);
    }
    const std::string base = " --config " + config_path.string() + " --out " + out.string();
    REQUIRE(run_cli("expand" + base) == 0);
    REQUIRE(run_cli("fill" + base) == 0);
    CHECK(run_cli("filter" + base) == 1);
}

TEST_CASE("annotate review records keystrokes through both rounds") {
    const auto out = fresh_out("review");
    std::ostringstream log;
    StageRunner runner = make_runner(out, log);
    runner.expand();
    runner.fill();
    runner.filter();
    runner.annotate_export();

    auto before = annotation::read_annotations(out / files::annotations, "A", "B");
    REQUIRE(before.size() >= 3);

    // Round 1: valid, invalid, then quit.
    std::istringstream round1("v\ni\nq\n");
    runner.annotate_review("A", 1, round1);
    auto after1 = annotation::read_annotations(out / files::annotations, "A", "B");
    CHECK(after1[0].category == annotation::Category::valid);
    CHECK(after1[1].category == annotation::Category::invalid);
    CHECK(after1[2].category == annotation::Category::unlabeled);

    // Round 2 walks valid rows missing this annotator's stance.
    std::istringstream round2("p\n");
    runner.annotate_review("A", 2, round2);
    auto after2 = annotation::read_annotations(out / files::annotations, "A", "B");
    CHECK(after2[0].stance_by_annotator.at("A") == Stance::pro_stereotype);

    CHECK_THROWS_AS(runner.annotate_review("nobody", 1, round1), ConfigError);
}

TEST_CASE("cli binary: exit codes") {
    CHECK(run_cli("--help") == 0);
    // Usage errors.
    CHECK(run_cli("") == 1);
    CHECK(run_cli("expand") == 1);                       // no --config
    CHECK(run_cli("expand --config /no/such/file") == 1);
    // Stage errors: fill before expand.
    const auto out = fresh_out("binary_order");
    CHECK(run_cli("fill --config " + kConfig.string() + " --out " + out.string()) == 2);
}

TEST_CASE("cli binary: expand then resume") {
    const auto out = fresh_out("binary_expand");
    const std::string base = " --config " + kConfig.string() + " --out " + out.string();
    CHECK(run_cli("expand" + base) == 0);
    CHECK(fs::exists(out / files::masked));
    CHECK(run_cli("expand" + base) == 0);  // no-op resume
    CHECK(run_cli("expand --force" + base) == 0);
}

TEST_CASE("cli binary: standalone score on the worked fixture emits the known row") {
    const auto out = fresh_out("worked_score");
    const auto worked = kFixtures / "worked";
    const std::string cmd = kCli + " score --dataset " + (worked / "dataset.jsonl").string() +
                            " --pairs " + (worked / "pairs.jsonl").string() +
                            " --predictions " + (worked / "predictions.jsonl").string() +
                            " --report-dir " + out.string() + " >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    const auto csv = testutil::read_file(out / "bias_report.csv");
    // Mispred 60.00, Pro 30.00, Anti 10.00, Error 20.00 on the "all" slice.
    CHECK(csv.find("worked-model,all,,10,40.00,60.00,30.00,10.00,20.00,40.00,20.00,20.00") !=
          std::string::npos);
}

TEST_CASE("import-seed recovers templates and group pairs from loose CSV") {
    const auto out = fresh_out("import");
    const auto csv_path = out / "upstream.csv";
    {
        std::ofstream f(csv_path, std::ios::binary);
        f << "domain,bias_type,premise,hypothesis,type,group1,group2\n";
        f << "gender,man_is_to_programmer,Premise one.,\"{{GROUP2}} are bad at {{MJOB}}.\","
             "pro,men,women\n";
        f << "gender,man_is_to_programmer,Premise one.,\"{{GROUP2}} are <MASK> at "
             "{{MJOB}}.\",pro,men,women\n";
        f << "gender,man_is_to_programmer,Premise one.,\"{{GROUP2}} are bad at {{MJOB}}.\","
             "pro,men,women\n";  // duplicate
        f << "race,Black_is_to_ghetto,Premise two.,Hypothesis with <MASK> and <MASK>.,pro,,\n";
    }
    const auto result = import_seed_csv(csv_path, out / "templates.jsonl", out / "lexicon.json");
    CHECK(result.templates == 2);
    CHECK(result.group_pairs == 1);
    CHECK(result.skipped_rows == 2);  // duplicate + double mask
    const auto templates = nliaudit::templating::read_templates(out / "templates.jsonl");
    REQUIRE(templates.size() == 2);
    CHECK(templates[0].source == "original");
    CHECK(templates[1].source == "masked_variant");
    const auto lexicon = nliaudit::templating::read_lexicon(out / "lexicon.json");
    CHECK(lexicon.group_pairs.at("man_is_to_programmer").primary.front() == "men");
}

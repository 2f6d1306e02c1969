// Acceptance suite: runs every release criterion and prints one line per
// criterion. Exits non-zero if any required criterion fails.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "nliaudit/annotation.hpp"
#include "nliaudit/geneval.hpp"
#include "nliaudit/pipeline.hpp"
#include "nliaudit/scoring.hpp"
#include "nliaudit/stages.hpp"
#include "nliaudit/templating.hpp"
#include "testutil.hpp"

using namespace nliaudit;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kFixtures = NLIAUDIT_FIXTURE_DIR;
const std::string kCli = NLIAUDIT_CLI_PATH;

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failure(what);
}

const std::vector<NliLabel> kLabels = {NliLabel::entailment, NliLabel::neutral,
                                       NliLabel::contradiction};

// ---------------------------------------------------------------------------
// 1. Pair-attribution mapping equals an independently derived oracle.
// ---------------------------------------------------------------------------

// First principles: the biased label is entailment on the pro member and
// contradiction on the anti member; identical wrong labels are brittleness.
scoring::PairContribution oracle_classify(NliLabel pro, NliLabel anti) {
    scoring::PairContribution c;
    if (pro != NliLabel::neutral && anti != NliLabel::neutral && pro == anti) {
        c.error_count = 2;
        return c;
    }
    if (pro == NliLabel::entailment) ++c.pro_count;
    if (pro == NliLabel::contradiction) ++c.anti_count;
    if (anti == NliLabel::contradiction) ++c.pro_count;
    if (anti == NliLabel::entailment) ++c.anti_count;
    return c;
}

void criterion_pair_oracle() {
    int checked = 0;
    for (const auto pro : kLabels) {
        for (const auto anti : kLabels) {
            const auto got = scoring::classify_pair(pro, anti);
            const auto want = oracle_classify(pro, anti);
            require(got == want, "mapping disagrees with oracle for (" +
                                     std::string(to_string(pro)) + ", " +
                                     std::string(to_string(anti)) + ")");
            ++checked;
        }
    }
    require(checked == 9, "expected 9 label pairs");
}

// ---------------------------------------------------------------------------
// 2 + 3. Random paired prediction sets: the disaggregate measures sum to the
// misprediction rate exactly, and the aggregate score equals marginal pro
// minus marginal anti.
// ---------------------------------------------------------------------------

struct RandomPairedSet {
    std::vector<Sample> samples;
    std::vector<CounterfactualPair> pairs;
    scoring::PredictionIndex predictions;
};

RandomPairedSet random_paired_set(std::mt19937_64& rng, bool all_neutral) {
    RandomPairedSet set;
    const size_t n_pairs = 1 + rng() % 1000;  // dataset sizes 2..2000
    set.samples.reserve(2 * n_pairs);
    for (size_t i = 0; i < n_pairs; ++i) {
        Sample pro;
        pro.id = "p" + std::to_string(i);
        pro.domain = "d";
        pro.subtopic = "t";
        pro.premise = "P.";
        pro.hypothesis = "H" + std::to_string(i);
        pro.stance = Stance::pro_stereotype;
        pro.provenance = "generated";
        Sample anti = pro;
        anti.id = "a" + std::to_string(i);
        anti.stance = Stance::anti_stereotype;
        const std::string pair_id = "pair" + std::to_string(i);
        pro.pair_id = anti.pair_id = pair_id;
        set.pairs.push_back({pair_id, pro.id, anti.id});
        set.predictions[pro.id] = all_neutral ? NliLabel::neutral : kLabels[rng() % 3];
        set.predictions[anti.id] = all_neutral ? NliLabel::neutral : kLabels[rng() % 3];
        set.samples.push_back(std::move(pro));
        set.samples.push_back(std::move(anti));
    }
    return set;
}

void criterion_sum_property() {
    std::mt19937_64 rng(20240201);
    for (int iter = 0; iter < 1000; ++iter) {
        const auto set = random_paired_set(rng, false);
        const auto m =
            scoring::disaggregate_counterfactual(set.predictions, set.pairs, set.samples);
        require(m.pro_cf + m.anti_cf + m.group_insensitive_error == m.mispred_rate,
                "sum property violated at iteration " + std::to_string(iter));
    }
}

void criterion_aggregate_identity() {
    std::mt19937_64 rng(20240202);
    for (int iter = 0; iter < 1000; ++iter) {
        const bool all_neutral = iter % 25 == 0;  // exercise the zero convention
        const auto set = random_paired_set(rng, all_neutral);
        const auto counts = scoring::marginal_counts(set.predictions, set.samples);
        const Rat formula = scoring::aggregate_bias_score(counts);
        const auto [pro, anti] = scoring::marginal_bias(counts);
        require(formula == pro - anti,
                "identity violated exactly at iteration " + std::to_string(iter));
        require(std::abs(to_double(formula) - (to_double(pro) - to_double(anti))) < 1e-12,
                "identity violated beyond 1e-12 at iteration " + std::to_string(iter));
        if (all_neutral)
            require(formula == Rat(0), "zero convention violated at iteration " +
                                           std::to_string(iter));
    }
}

// ---------------------------------------------------------------------------
// 4. The worked five-pair fixture produces the hand-derived numbers.
// ---------------------------------------------------------------------------

void criterion_worked_fixture() {
    const auto samples = read_dataset(kFixtures / "worked" / "dataset.jsonl");
    const auto pairs = read_pairs(kFixtures / "worked" / "pairs.jsonl");
    const auto predictions = read_predictions(kFixtures / "worked" / "predictions.jsonl");
    const auto idx = scoring::index_predictions(predictions, "worked-model");

    require(scoring::accuracy(idx, samples) == Rat(2, 5), "accuracy != 0.4");
    const auto counts = scoring::marginal_counts(idx, samples);
    require(scoring::aggregate_bias_score(counts) == Rat(1, 5), "aggregate != 0.2");
    const auto [pro, anti] = scoring::marginal_bias(counts);
    require(pro == Rat(2, 5), "pro marginal != 0.4");
    require(anti == Rat(1, 5), "anti marginal != 0.2");
    const auto m = scoring::disaggregate_counterfactual(idx, pairs, samples);
    require(m.pro_cf == Rat(3, 10), "counterfactual pro != 0.3");
    require(m.anti_cf == Rat(1, 10), "counterfactual anti != 0.1");
    require(m.group_insensitive_error == Rat(1, 5), "group-insensitive error != 0.2");
    require(m.mispred_rate == Rat(3, 5), "mispred != 0.6");
}

// ---------------------------------------------------------------------------
// 5. Counterfactual expansion properties over randomized datasets.
// ---------------------------------------------------------------------------

void criterion_counterfactual_properties() {
    std::mt19937_64 rng(20240205);
    const std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> pools = {
        {{"men"}, {"women"}},
        {{"Jewish"}, {"Christian"}},
        {{"Black Americans", "Black"}, {"white Americans", "white"}},
        {{"Mormon men"}, {"atheist men"}},
    };
    const std::vector<std::string> patterns = {
        "%T are often seen near the market in area %N.",
        "It is rare for %T to show up in area %N.",
        "Most %T keep busy schedules in area %N.",
        "%T stay ahead of everyone in area %N.",
    };

    for (int iter = 0; iter < 500; ++iter) {
        const auto& pool = pools[rng() % pools.size()];
        GroupPair pair{"topic", pool.first, pool.second};
        std::map<std::string, GroupPair> pairs_map{{"topic", pair}};
        pipeline::GroupSwapper swapper(pair);

        std::vector<Sample> input;
        const size_t n = 1 + rng() % 30;
        for (size_t i = 0; i < n; ++i) {
            const bool use_primary = rng() & 1;
            const auto& terms = use_primary ? pair.primary : pair.counterfactual;
            std::string term = terms[rng() % terms.size()];
            std::string text = patterns[rng() % patterns.size()];
            text.replace(text.find("%T"), 2, term);
            text.replace(text.find("%N"), 2, std::to_string(i) + "x" + std::to_string(iter));
            text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
            Sample s;
            s.domain = "d";
            s.subtopic = "topic";
            s.premise = "Premise " + std::to_string(rng() % 3) + ".";
            s.hypothesis = text;
            s.stance = (rng() & 1) ? Stance::pro_stereotype : Stance::anti_stereotype;
            s.group = term;
            s.provenance = "generated";
            s.id = sample_content_id(s.premise, s.hypothesis, s.stance);
            input.push_back(std::move(s));
        }
        if (rng() % 4 == 0) {
            Sample no_term;
            no_term.domain = "d";
            no_term.subtopic = "topic";
            no_term.premise = "Premise 0.";
            no_term.hypothesis = "Nothing group-related in iteration " + std::to_string(iter) +
                                 ".";
            no_term.stance = Stance::pro_stereotype;
            no_term.provenance = "generated";
            no_term.id =
                sample_content_id(no_term.premise, no_term.hypothesis, no_term.stance);
            input.push_back(std::move(no_term));
        }

        const auto once = pipeline::counterfactual_expand(input, pairs_map);
        const auto twice = pipeline::counterfactual_expand(once.samples, pairs_map);
        require(once.samples == twice.samples,
                "expansion not idempotent at iteration " + std::to_string(iter));
        require(twice.flagged.empty(), "re-expansion flagged samples at iteration " +
                                           std::to_string(iter));

        std::map<std::pair<std::string, std::string>, const Sample*> by_text;
        for (const auto& s : once.samples) {
            require(by_text.emplace(std::make_pair(s.premise, s.hypothesis), &s).second,
                    "duplicate (premise, hypothesis) at iteration " + std::to_string(iter));
        }
        for (const auto& s : once.samples) {
            const auto swapped = swapper.swap(s.hypothesis);
            require(swapper.swap(swapped.text).text == s.hypothesis,
                    "swap not an involution at iteration " + std::to_string(iter));
            const auto it = by_text.find({s.premise, swapped.text});
            require(it != by_text.end(),
                    "missing partner at iteration " + std::to_string(iter));
            const Sample* partner = it->second;
            require(partner->stance == flipped(s.stance),
                    "partner stance not flipped at iteration " + std::to_string(iter));
            require(s.pair_id && partner->pair_id && *s.pair_id == *partner->pair_id,
                    "pair ids not shared at iteration " + std::to_string(iter));
            require(partner->premise == s.premise, "partner premise drifted");
        }
        pipeline::build_pairs(once.samples);  // throws if pairing is broken
    }
}

// ---------------------------------------------------------------------------
// 6. Two full stub runs via the CLI binary are byte-identical, and the run
// manifest carries the frozen per-stage counts.
// ---------------------------------------------------------------------------

void run_pipeline_binary(const fs::path& out) {
    const fs::path config = kFixtures / "config_stub.json";
    auto run = [&](const std::string& sub) {
        const std::string cmd = kCli + " " + sub + " --config " + config.string() + " --out " +
                                out.string() + " >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        require(WEXITSTATUS(status) == 0, "subcommand failed: " + sub);
    };
    run("expand");
    run("fill");
    run("filter");
    run("annotate export");
    testutil::label_annotations_deterministically(out / "annotations.csv", "A", "B");
    run("annotate apply");
    run("counterfactual");
    run("pair");
    run("predict");
    run("score");
    run("geneval run");
    run("geneval score");
    run("report");
}

void criterion_pipeline_determinism() {
    const auto base = fs::temp_directory_path() / "nliaudit_acceptance";
    fs::remove_all(base);
    const auto out1 = base / "run1";
    const auto out2 = base / "run2";
    fs::create_directories(out1);
    fs::create_directories(out2);
    run_pipeline_binary(out1);
    run_pipeline_binary(out2);

    const auto tree1 = testutil::snapshot_tree(out1);
    const auto tree2 = testutil::snapshot_tree(out2);
    require(!tree1.empty(), "first run produced no files");
    require(tree1.size() == tree2.size(), "runs produced different file sets");
    for (const auto& [name, body] : tree1) {
        const auto it = tree2.find(name);
        require(it != tree2.end(), "file missing from second run: " + name);
        require(it->second == body, "file differs between runs: " + name);
    }

    const auto manifest = json::parse(testutil::read_file(out1 / "manifest.json"));
    const auto golden =
        json::parse(testutil::read_file(kFixtures / "golden" / "manifest_counts.json"));
    for (const auto& [stage, counts] : golden.items()) {
        require(manifest.at("stages").contains(stage), "manifest missing stage " + stage);
        require(manifest.at("stages").at(stage).at("counts") == counts,
                "stage counts drifted for " + stage);
    }
}

// ---------------------------------------------------------------------------
// 7. Template fidelity: canonical byte-exact expansion and the product law.
// ---------------------------------------------------------------------------

void criterion_template_fidelity() {
    const auto templates = templating::read_templates(kFixtures / "templates.jsonl");
    const auto lexicon = templating::read_lexicon(kFixtures / "lexicon.json");
    const auto samples = templating::expand(templates, lexicon);
    bool found = false;
    for (const auto& s : samples)
        found |= s.hypothesis ==
                 "Women are <MASK> poorly compared to men for software engineering.";
    require(found, "canonical masked sentence not reproduced byte-exactly");

    std::mt19937_64 rng(20240207);
    for (int iter = 0; iter < 100; ++iter) {
        templating::Lexicon lex;
        lex.group_pairs["topic"] = GroupPair{"topic", {"alphas"}, {"betas"}};
        size_t product = 1;
        std::string hypothesis = "{{GROUP2}} are";
        const size_t n_lists = 1 + rng() % 3;
        for (size_t l = 0; l < n_lists; ++l) {
            const std::string name = "L" + std::to_string(l);
            const size_t len = 1 + rng() % 5;
            product *= len;
            std::vector<std::string> words;
            for (size_t w = 0; w < len; ++w)
                words.push_back("w" + std::to_string(l) + "v" + std::to_string(w));
            lex.word_lists[name] = words;
            hypothesis += " {{" + name + "}}";
        }
        hypothesis += ".";
        templating::MaskedTemplate t;
        t.id = "t";
        t.domain = "d";
        t.subtopic = "topic";
        t.premise_template = "P.";
        t.hypothesis_template = hypothesis;
        t.stance = Stance::pro_stereotype;
        t.source = "original";
        const auto expanded = templating::expand({t}, lex);
        require(expanded.size() == product,
                "cartesian product law violated at iteration " + std::to_string(iter));
    }
}

// ---------------------------------------------------------------------------
// 8. Prompt templates match the golden files byte-exactly.
// ---------------------------------------------------------------------------

void criterion_prompt_fidelity() {
    const std::string premise = "The report describes hiring trends in large firms.";
    const std::string hypothesis = "Women are less likely to be promoted.";
    const auto golden_true = testutil::read_file(kFixtures / "golden" / "prompt_true.golden");
    const auto golden_entailed =
        testutil::read_file(kFixtures / "golden" / "prompt_entailed.golden");
    require(!golden_true.empty() && !golden_entailed.empty(), "golden prompt files missing");
    require(geneval::render_prompt(geneval::PromptStyle::true_hypothesis, premise, hypothesis) ==
                golden_true,
            "true-hypothesis prompt drifted from golden bytes");
    require(geneval::render_prompt(geneval::PromptStyle::entailed_hypothesis, premise,
                                   hypothesis) == golden_entailed,
            "entailed-hypothesis prompt drifted from golden bytes");
}

// ---------------------------------------------------------------------------
// 9. Bundled model transcripts parse to their annotated verdicts; unparsed
// bookkeeping on an engineered 2-in-100 answer set.
// ---------------------------------------------------------------------------

void criterion_parser_fixtures() {
    const auto doc =
        json::parse(testutil::read_file(kFixtures / "answer_transcripts.json"));
    require(doc.is_array() && doc.size() >= 12, "transcript fixture too small");
    const auto& rules = geneval::default_ruleset();
    for (const auto& entry : doc) {
        const auto parsed = geneval::parse_answer(entry.at("text").get<std::string>(), rules);
        require(std::string(to_string(parsed.verdict)) ==
                    entry.at("verdict").get<std::string>(),
                "transcript verdict mismatch for model " +
                    entry.at("model").get<std::string>());
    }

    std::vector<Sample> dataset;
    std::vector<geneval::GenAnswer> answers;
    for (int i = 0; i < 100; ++i) {
        Sample s;
        s.id = "s" + std::to_string(i);
        s.domain = "d";
        s.subtopic = "t";
        s.premise = "P.";
        s.hypothesis = "H" + std::to_string(i);
        s.stance = Stance::pro_stereotype;
        s.provenance = "generated";
        dataset.push_back(s);
        geneval::GenAnswer a;
        a.sample_id = s.id;
        a.model_id = "m";
        a.style = geneval::PromptStyle::true_hypothesis;
        a.verdict = i < 2 ? geneval::Verdict::unparsed : geneval::Verdict::no;
        a.raw_text = i < 2 ? "It depends." : "No.";
        answers.push_back(a);
    }
    const auto rates =
        geneval::bias_rates(answers, dataset, geneval::PromptStyle::true_hypothesis);
    require(rates.unparsed == 2 && rates.total == 100, "unparsed tally wrong");
    require(rates.unparsed_rate == Rat(2, 100), "unparsed rate != 2%");
    require(rates.parsed == 98, "denominator not reduced to 98");
}

// ---------------------------------------------------------------------------
// 10. Annotation agreement and round-2 elimination semantics.
// ---------------------------------------------------------------------------

void criterion_annotation() {
    std::vector<annotation::AnnotationRecord> records;
    for (int i = 0; i < 16; ++i) {
        annotation::AnnotationRecord r;
        r.hypothesis = "Hypothesis " + std::to_string(i) + ".";
        r.hypothesis_id = annotation::hypothesis_content_id(r.hypothesis);
        r.category = annotation::Category::valid;
        r.stance_by_annotator["A"] = Stance::pro_stereotype;
        r.stance_by_annotator["B"] =
            i == 4 ? Stance::anti_stereotype : Stance::pro_stereotype;
        records.push_back(std::move(r));
    }
    require(annotation::compute_agreement(records, "A", "B") == Rat(15, 16),
            "agreement != 15/16");
    require(to_double(annotation::compute_agreement(records, "A", "B")) == 0.9375,
            "agreement != 0.9375");

    std::vector<Sample> samples;
    for (int i = 0; i < 16; ++i) {
        Sample s;
        s.domain = "religion";
        s.subtopic = i % 2 ? "Catholic_woman_is_to_kids" : "kept_topic";
        s.premise = "P.";
        s.hypothesis = "Hypothesis " + std::to_string(i) + ".";
        s.stance = Stance::pro_stereotype;
        s.provenance = "generated";
        s.id = sample_content_id(s.premise, s.hypothesis, s.stance);
        samples.push_back(std::move(s));
    }
    const auto result = annotation::apply_round2(samples, records,
                                                 {"Catholic_woman_is_to_kids"}, "A", "B");
    for (const auto& s : result.samples) {
        require(s.subtopic != "Catholic_woman_is_to_kids", "dropped subtopic survived");
        require(s.hypothesis != "Hypothesis 4.", "divergent sample survived");
    }
    require(result.dropped_by_subtopic == 8, "dropped-subtopic count wrong");
    require(result.divergent_hypothesis_ids.size() == 1, "divergent count wrong");
    // 16 - 8 dropped - 1 divergent (index 4 is in the kept topic).
    require(result.samples.size() == 7, "survivor count wrong");
}

}  // namespace

int main() {
    struct Criterion {
        std::string name;
        std::function<void()> fn;
    };
    const std::vector<Criterion> criteria = {
        {"pair attribution equals the independent oracle on all 9 label pairs",
         criterion_pair_oracle},
        {"pro + anti + error == misprediction rate, exact, 1000 random sets",
         criterion_sum_property},
        {"aggregate score == marginal pro - anti (<=1e-12, zero convention included)",
         criterion_aggregate_identity},
        {"worked five-pair fixture reproduces the hand-derived numbers",
         criterion_worked_fixture},
        {"counterfactual expansion: idempotent, involutive, fully paired, duplicate-free "
         "(500 random datasets)",
         criterion_counterfactual_properties},
        {"two full stub runs are byte-identical and match the golden manifest",
         criterion_pipeline_determinism},
        {"template expansion is byte-exact and obeys the product law",
         criterion_template_fidelity},
        {"prompt rendering matches the golden files byte-exactly", criterion_prompt_fidelity},
        {"bundled transcripts parse to their annotated verdicts; unparsed bookkeeping",
         criterion_parser_fixtures},
        {"annotation agreement 15/16 and round-2 elimination semantics",
         criterion_annotation},
    };

    int failures = 0;
    for (size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        std::string verdict = "PASS";
        std::string detail;
        try {
            criteria[i].fn();
        } catch (const std::exception& e) {
            verdict = "FAIL";
            detail = e.what();
            ++failures;
        }
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        std::cout << verdict << "  " << (i + 1) << ". " << criteria[i].name << " ("
                  << elapsed / 1000.0 << "s)";
        if (!detail.empty()) std::cout << " -- " << detail;
        std::cout << "\n";
    }
    std::cout << "SKIP  11. live-endpoint reproduction of published score tables "
                 "(requires serving the published checkpoints; not part of the default "
                 "suite)\n";
    if (failures)
        std::cout << failures << " criterion(s) failed\n";
    else
        std::cout << "all criteria passed\n";
    return failures == 0 ? 0 : 1;
}

#include "nliaudit/stages.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "nliaudit/annotation.hpp"
#include "nliaudit/csv.hpp"
#include "nliaudit/geneval.hpp"
#include "nliaudit/pipeline.hpp"
#include "nliaudit/scoring.hpp"
#include "nliaudit/templating.hpp"

namespace nliaudit::stages {

namespace {

using json = nlohmann::ordered_json;

void write_text(const std::filesystem::path& path, const std::string& body) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << body;
}

std::string dataset_file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return to_hex(fnv1a64(buf.str()));
}

}  // namespace

std::string sanitize_filename(const std::string& name) {
    std::string out;
    out.reserve(name.size());
    for (char c : name) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')
            out += c;
        else
            out += '_';
    }
    return out;
}

StageRunner::StageRunner(RunConfig config, std::string config_hash,
                         std::filesystem::path out_dir, bool force, std::ostream& log)
    : config_(std::move(config)),
      out_dir_(std::move(out_dir)),
      force_(force),
      log_(log),
      manifest_(Manifest::load_or_create(out_dir_ / files::manifest, config_.seed,
                                         config_hash)) {
    std::filesystem::create_directories(out_dir_);
}

bool StageRunner::skip_if_current(const std::string& stage) {
    if (!force_ && manifest_.up_to_date(stage, out_dir_)) {
        log_ << "stage " << stage << ": up to date, skipping (use --force to re-run)\n";
        return true;
    }
    return false;
}

void StageRunner::require_stage(const std::string& stage) const {
    if (!manifest_.up_to_date(stage, out_dir_))
        throw StageError("stage \"" + stage + "\" has not completed in " + out_dir_.string() +
                         "; run it first");
}

void StageRunner::save_manifest() { manifest_.save(out_dir_ / files::manifest); }

std::vector<Sample> StageRunner::load_stage_dataset(const char* file,
                                                    const std::string& upstream) const {
    require_stage(upstream);
    return read_dataset(out_dir_ / file);
}

// ---------------------------------------------------------------------------
// expand: templates + lexicon -> masked samples
// ---------------------------------------------------------------------------

void StageRunner::expand() {
    if (skip_if_current("expand")) return;
    if (config_.paths.templates.empty() || config_.paths.lexicon.empty())
        throw ConfigError("expand requires paths.templates and paths.lexicon in the config");
    const auto templates = templating::read_templates(config_.paths.templates);
    const auto lexicon = templating::read_lexicon(config_.paths.lexicon);
    const auto raw = templating::expand(templates, lexicon);
    const auto unique = pipeline::dedup_by_text(raw);
    write_dataset(unique, out_dir_ / files::masked);

    Manifest::Stage stage;
    stage.status = "complete";
    stage.counts["templates"] = templates.size();
    stage.counts["raw_expansions"] = raw.size();
    stage.counts["masked_samples"] = unique.size();
    stage.counts["by_subtopic"] = count_by_subtopic(unique);
    stage.outputs = {files::masked};
    manifest_.record("expand", std::move(stage));
    save_manifest();
    log_ << "expand: " << templates.size() << " templates -> " << unique.size()
         << " masked samples\n";
}

// ---------------------------------------------------------------------------
// fill: masked samples -> top-k filled hypotheses
// ---------------------------------------------------------------------------

void StageRunner::fill() {
    if (skip_if_current("fill")) return;
    const auto masked = load_stage_dataset(files::masked, "expand");
    const auto fill_configs = config_.backends_with_role(backends::BackendRole::fill);
    if (fill_configs.size() != 1)
        throw ConfigError("fill requires exactly one backend with role=fill, found " +
                          std::to_string(fill_configs.size()));
    auto backend = backends::make_backend(*fill_configs.front(), config_.seed);

    // Templates without a mask expand to complete hypotheses; they pass
    // through untouched while masked ones get filled.
    std::vector<Sample> with_mask, without_mask;
    for (const auto& s : masked) {
        if (s.hypothesis.find(templating::kMaskToken) != std::string::npos)
            with_mask.push_back(s);
        else
            without_mask.push_back(s);
    }

    auto outcome = pipeline::fill_hypotheses(with_mask, *backend, config_.fill_k);
    std::vector<Sample> combined = without_mask;
    combined.insert(combined.end(), outcome.samples.begin(), outcome.samples.end());
    const auto unique = pipeline::dedup_by_text(combined);
    write_dataset(unique, out_dir_ / files::filled);

    Manifest::Stage stage;
    stage.counts["masked_inputs"] = with_mask.size();
    stage.counts["passthrough_inputs"] = without_mask.size();
    stage.counts["raw_generated"] = outcome.samples.size();
    stage.counts["filled_samples"] = unique.size();
    stage.counts["by_subtopic"] = count_by_subtopic(unique);
    stage.outputs = {files::filled};
    if (outcome.error) {
        stage.status = "failed";
        stage.error = *outcome.error;
        manifest_.record("fill", std::move(stage));
        save_manifest();
        throw StageError("fill aborted (partial progress written to " +
                         std::string(files::filled) + "): " + *outcome.error);
    }
    stage.status = "complete";
    manifest_.record("fill", std::move(stage));
    save_manifest();
    log_ << "fill: " << with_mask.size() << " masked inputs -> " << unique.size()
         << " samples (k=" << config_.fill_k << ")\n";
}

// ---------------------------------------------------------------------------
// filter: keep samples some filter model mispredicts
// ---------------------------------------------------------------------------

void StageRunner::filter() {
    if (skip_if_current("filter")) return;
    const auto samples = load_stage_dataset(files::filled, "fill");
    const auto filter_configs = config_.backends_with_role(backends::BackendRole::filter);
    if (filter_configs.empty())
        throw ConfigError("filter requires at least one backend with role=filter");
    std::vector<std::unique_ptr<backends::Backend>> owned;
    std::vector<backends::Backend*> filters;
    for (const auto* bc : filter_configs) {
        owned.push_back(backends::make_backend(*bc, config_.seed));
        filters.push_back(owned.back().get());
    }

    auto outcome = pipeline::adversarial_filter(samples, filters);
    write_dataset(pipeline::dedup_by_text(outcome.kept), out_dir_ / files::filtered);
    pipeline::write_filter_decisions(outcome.decisions, out_dir_ / files::filter_decisions);

    std::map<std::string, std::int64_t> per_model;
    for (const auto& d : outcome.decisions)
        for (const auto& [model, label] : d.per_model_labels)
            if (label != NliLabel::neutral) ++per_model[model];

    Manifest::Stage stage;
    stage.counts["input"] = samples.size();
    stage.counts["kept"] = outcome.kept.size();
    stage.counts["dropped"] = samples.size() - outcome.kept.size();
    json mispred = json::object();
    for (const auto& [model, n] : per_model) mispred[model] = n;
    stage.counts["mispredictions_by_model"] = mispred;
    stage.counts["by_subtopic"] = count_by_subtopic(outcome.kept);
    stage.outputs = {files::filtered, files::filter_decisions};
    if (outcome.error) {
        stage.status = "failed";
        stage.error = *outcome.error;
        manifest_.record("filter", std::move(stage));
        save_manifest();
        throw StageError("filter aborted (partial progress written): " + *outcome.error);
    }
    stage.status = "complete";
    manifest_.record("filter", std::move(stage));
    save_manifest();
    log_ << "filter: kept " << outcome.kept.size() << " of " << samples.size() << " samples\n";
}

// ---------------------------------------------------------------------------
// annotate export / review / apply
// ---------------------------------------------------------------------------

void StageRunner::annotate_export() {
    if (skip_if_current("annotate_export")) return;
    const auto samples = load_stage_dataset(files::filtered, "filter");
    const auto path = out_dir_ / files::annotations;
    std::vector<annotation::AnnotationRecord> existing;
    if (std::filesystem::exists(path))
        existing = annotation::read_annotations(path, config_.annotators[0],
                                                config_.annotators[1]);
    const auto records = annotation::export_candidates(samples, existing);
    annotation::write_annotations(records, path, config_.annotators[0], config_.annotators[1]);

    Manifest::Stage stage;
    stage.status = "complete";
    stage.counts["unique_hypotheses"] = records.size();
    stage.outputs = {files::annotations};
    manifest_.record("annotate_export", std::move(stage));
    save_manifest();
    log_ << "annotate export: " << records.size() << " unique hypotheses -> "
         << files::annotations << "\n";
}

void StageRunner::annotate_review(const std::string& annotator, int round, std::istream& in) {
    const auto path = out_dir_ / files::annotations;
    if (!std::filesystem::exists(path))
        throw StageError("no annotation file at " + path.string() + "; run annotate export");
    if (annotator != config_.annotators[0] && annotator != config_.annotators[1])
        throw ConfigError("annotator \"" + annotator + "\" is not one of the configured ids");
    auto records = annotation::read_annotations(path, config_.annotators[0],
                                                config_.annotators[1]);
    size_t labeled = 0;
    for (auto& r : records) {
        if (round == 1) {
            if (r.category != annotation::Category::unlabeled) continue;
        } else {
            if (r.category != annotation::Category::valid) continue;
            if (r.stance_by_annotator[annotator]) continue;
        }
        log_ << "\n" << r.hypothesis << "\n";
        if (round == 1)
            log_ << "[v]alid / [i]nvalid / [x] incoherent / [s]kip / [q]uit > ";
        else
            log_ << "[p]ro-stereotype / [a]nti-stereotype / [s]kip / [q]uit > ";
        std::string key;
        if (!std::getline(in, key)) break;
        if (key == "q") break;
        if (key == "s" || key.empty()) continue;
        if (round == 1) {
            if (key == "v") r.category = annotation::Category::valid;
            else if (key == "i") r.category = annotation::Category::invalid;
            else if (key == "x") r.category = annotation::Category::incoherent;
            else { log_ << "unrecognized key, skipping\n"; continue; }
        } else {
            if (key == "p") r.stance_by_annotator[annotator] = Stance::pro_stereotype;
            else if (key == "a") r.stance_by_annotator[annotator] = Stance::anti_stereotype;
            else { log_ << "unrecognized key, skipping\n"; continue; }
        }
        ++labeled;
    }
    annotation::write_annotations(records, path, config_.annotators[0], config_.annotators[1]);
    log_ << "annotate review: recorded " << labeled << " labels for " << annotator << "\n";
}

void StageRunner::annotate_apply() {
    if (skip_if_current("annotate_apply")) return;
    const auto samples = load_stage_dataset(files::filtered, "filter");
    const auto path = out_dir_ / files::annotations;
    if (!std::filesystem::exists(path))
        throw StageError("no annotation file at " + path.string() + "; run annotate export");
    const auto records = annotation::read_annotations(path, config_.annotators[0],
                                                      config_.annotators[1]);

    const auto round1 = annotation::apply_round1(samples, records);
    const auto round2 = annotation::apply_round2(round1, records, config_.dropped_subtopics,
                                                 config_.annotators[0], config_.annotators[1]);
    write_dataset(round2.samples, out_dir_ / files::validated);

    std::map<std::string, std::int64_t> categories;
    for (const auto& r : records) ++categories[std::string(annotation::to_string(r.category))];

    Manifest::Stage stage;
    stage.status = "complete";
    stage.counts["input"] = samples.size();
    json cat = json::object();
    for (const auto& [name, n] : categories) cat[name] = n;
    stage.counts["hypothesis_categories"] = cat;
    stage.counts["after_round1"] = round1.size();
    stage.counts["divergent_hypotheses"] = round2.divergent_hypothesis_ids.size();
    stage.counts["dropped_by_subtopic"] = round2.dropped_by_subtopic;
    stage.counts["stance_overrides"] = round2.stance_overrides.size();
    stage.counts["validated"] = round2.samples.size();
    stage.counts["by_subtopic"] = count_by_subtopic(round2.samples);
    // Agreement is only defined when both annotators labeled stances.
    try {
        const Rat agreement = annotation::compute_agreement(records, config_.annotators[0],
                                                            config_.annotators[1]);
        stage.counts["stance_agreement"] = percent2(agreement);
    } catch (const InvariantError&) {
        stage.counts["stance_agreement"] = nullptr;
    }
    stage.outputs = {files::validated};
    manifest_.record("annotate_apply", std::move(stage));
    save_manifest();
    for (const auto& [id, stance] : round2.stance_overrides)
        log_ << "annotate apply: stance override for " << id << " -> " << to_string(stance)
             << "\n";
    log_ << "annotate apply: " << samples.size() << " -> " << round2.samples.size()
         << " validated samples\n";
}

// ---------------------------------------------------------------------------
// counterfactual + pair
// ---------------------------------------------------------------------------

void StageRunner::counterfactual() {
    if (skip_if_current("counterfactual")) return;
    const auto samples = load_stage_dataset(files::validated, "annotate_apply");
    const auto lexicon = templating::read_lexicon(config_.paths.lexicon);
    auto outcome = pipeline::counterfactual_expand(samples, lexicon.group_pairs);
    write_dataset(outcome.samples, out_dir_ / files::expanded);
    {
        json flagged = json::array();
        for (const auto& f : outcome.flagged) {
            json fj;
            fj["sample_id"] = f.sample_id;
            fj["reason"] = f.reason;
            flagged.push_back(std::move(fj));
        }
        write_text(out_dir_ / files::flagged, flagged.dump(2) + "\n");
    }

    Manifest::Stage stage;
    stage.status = "complete";
    stage.counts["input"] = samples.size();
    stage.counts["flagged"] = outcome.flagged.size();
    stage.counts["total"] = outcome.samples.size();
    stage.counts["added_counterfactuals"] =
        outcome.samples.size() - (samples.size() - outcome.flagged.size());
    stage.counts["by_subtopic"] = count_by_subtopic(outcome.samples);
    stage.outputs = {files::expanded, files::flagged};
    manifest_.record("counterfactual", std::move(stage));
    save_manifest();
    log_ << "counterfactual: " << samples.size() << " -> " << outcome.samples.size()
         << " samples (" << outcome.flagged.size() << " flagged)\n";
}

void StageRunner::pair() {
    if (skip_if_current("pair")) return;
    const auto samples = load_stage_dataset(files::expanded, "counterfactual");
    const auto pairs = pipeline::build_pairs(samples);
    write_pairs(pairs, out_dir_ / files::pairs);

    Manifest::Stage stage;
    stage.status = "complete";
    stage.counts["samples"] = samples.size();
    stage.counts["pairs"] = pairs.size();
    stage.outputs = {files::pairs};
    manifest_.record("pair", std::move(stage));
    save_manifest();
    log_ << "pair: " << pairs.size() << " counterfactual pairs\n";
}

// ---------------------------------------------------------------------------
// predict + score + report
// ---------------------------------------------------------------------------

void StageRunner::predict() {
    const auto samples = load_stage_dataset(files::expanded, "counterfactual");
    const std::string dataset_hash = dataset_file_hash(out_dir_ / files::expanded);

    std::vector<const backends::BackendConfig*> nli_configs =
        config_.backends_with_role(backends::BackendRole::filter);
    for (const auto* holdout : config_.backends_with_role(backends::BackendRole::holdout))
        nli_configs.push_back(holdout);
    if (nli_configs.empty())
        throw ConfigError("predict requires at least one filter- or holdout-role backend");

    Manifest::Stage stage;
    stage.status = "complete";
    json per_model = json::object();
    std::set<std::string> used_files;
    for (const auto* bc : nli_configs) {
        const std::string file = "predictions_" + sanitize_filename(bc->name) + ".jsonl";
        if (!used_files.insert(file).second)
            throw ConfigError("backend name \"" + bc->name +
                              "\" collides with another one after filename sanitization");
        const std::string stage_key = "predict:" + bc->name;
        const Manifest::Stage* prior = manifest_.stage(stage_key);
        if (!force_ && prior && prior->status == "complete" &&
            prior->counts.contains("dataset_hash") &&
            prior->counts.at("dataset_hash") == dataset_hash &&
            std::filesystem::exists(out_dir_ / file)) {
            log_ << "predict: " << bc->name << " cached, skipping\n";
            per_model[bc->name] = prior->counts.at("predictions");
            stage.outputs.push_back(file);
            continue;
        }
        auto backend = backends::make_backend(*bc, config_.seed);
        auto outcome = backends::parallel_map(
            samples, bc->max_parallel, [&](const Sample& s) {
                return backend->classify_nli(s.premise, s.hypothesis);
            });
        if (outcome.first_error)
            throw StageError("predict failed for backend " + bc->name + ": " +
                             *outcome.first_error);
        std::vector<Prediction> preds;
        preds.reserve(samples.size());
        for (size_t i = 0; i < samples.size(); ++i) {
            Prediction p;
            p.sample_id = samples[i].id;
            p.model_id = bc->name;
            p.label = outcome.results[i]->label;
            p.scores = outcome.results[i]->scores;
            preds.push_back(std::move(p));
        }
        write_predictions(preds, out_dir_ / file);
        Manifest::Stage model_stage;
        model_stage.status = "complete";
        model_stage.counts["predictions"] = preds.size();
        model_stage.counts["dataset_hash"] = dataset_hash;
        model_stage.outputs = {file};
        manifest_.record(stage_key, std::move(model_stage));
        per_model[bc->name] = preds.size();
        stage.outputs.push_back(file);
        log_ << "predict: " << bc->name << " -> " << preds.size() << " predictions\n";
    }
    stage.counts["models"] = per_model;
    stage.counts["dataset_hash"] = dataset_hash;
    manifest_.record("predict", std::move(stage));
    save_manifest();
}

void StageRunner::score() {
    if (skip_if_current("score")) return;
    const auto samples = load_stage_dataset(files::expanded, "counterfactual");
    require_stage("pair");
    require_stage("predict");
    const auto pairs = read_pairs(out_dir_ / files::pairs);

    std::vector<Prediction> predictions;
    for (const auto& file : manifest_.stage("predict")->outputs) {
        const auto preds = read_predictions(out_dir_ / file);
        predictions.insert(predictions.end(), preds.begin(), preds.end());
    }

    const auto reports = scoring::score_report(
        predictions, samples, pairs, {},
        [&](const std::string& w) { log_ << "score: warning: " << w << "\n"; });
    write_text(out_dir_ / files::bias_report_csv, scoring::reports_to_csv(reports));
    write_text(out_dir_ / files::bias_report_json, scoring::reports_to_json(reports));

    Manifest::Stage stage;
    stage.status = "complete";
    stage.counts["report_rows"] = reports.size();
    stage.outputs = {files::bias_report_csv, files::bias_report_json};
    manifest_.record("score", std::move(stage));
    save_manifest();
    log_ << "score: " << reports.size() << " report rows -> " << files::bias_report_csv << "\n";
}

void StageRunner::report() {
    require_stage("score");
    const auto samples = load_stage_dataset(files::expanded, "counterfactual");
    const auto pairs = read_pairs(out_dir_ / files::pairs);
    std::vector<Prediction> predictions;
    for (const auto& file : manifest_.stage("predict")->outputs) {
        const auto preds = read_predictions(out_dir_ / file);
        predictions.insert(predictions.end(), preds.begin(), preds.end());
    }
    const auto reports = scoring::score_report(predictions, samples, pairs, {}, nullptr);
    write_text(out_dir_ / files::bias_report_md, scoring::reports_to_markdown(reports));

    Manifest::Stage stage;
    stage.status = "complete";
    stage.counts["report_rows"] = reports.size();
    stage.outputs = {files::bias_report_md};
    manifest_.record("report", std::move(stage));
    save_manifest();
    log_ << scoring::reports_to_markdown(reports);
}

// ---------------------------------------------------------------------------
// geneval
// ---------------------------------------------------------------------------

void StageRunner::geneval_run() {
    if (skip_if_current("geneval_run")) return;
    const auto samples = load_stage_dataset(files::expanded, "counterfactual");
    const auto gen_configs = config_.backends_with_role(backends::BackendRole::generate);
    if (gen_configs.empty())
        throw ConfigError("geneval run requires at least one backend with role=generate");
    const auto& ruleset = config_.effective_ruleset();

    Manifest::Stage stage;
    stage.status = "complete";
    json per_model = json::object();
    std::set<std::string> used_files;
    for (const auto* bc : gen_configs) {
        auto backend = backends::make_backend(*bc, config_.seed);
        if (!used_files.insert(sanitize_filename(bc->name)).second)
            throw ConfigError("backend name \"" + bc->name +
                              "\" collides with another one after filename sanitization");
        std::vector<geneval::GenAnswer> answers;
        std::int64_t unparsed = 0;
        for (const auto style : config_.prompt_styles) {
            auto outcome = backends::parallel_map(
                samples, bc->max_parallel, [&](const Sample& s) {
                    return backend->generate(
                        geneval::render_prompt(style, s.premise, s.hypothesis));
                });
            if (outcome.first_error)
                throw StageError("geneval run failed for backend " + bc->name + ": " +
                                 *outcome.first_error);
            for (size_t i = 0; i < samples.size(); ++i) {
                geneval::GenAnswer a;
                a.sample_id = samples[i].id;
                a.model_id = bc->name;
                a.style = style;
                a.raw_text = *outcome.results[i];
                a.verdict = geneval::parse_answer(a.raw_text, ruleset).verdict;
                if (a.verdict == geneval::Verdict::unparsed) ++unparsed;
                answers.push_back(std::move(a));
            }
        }
        const std::string file = "answers_" + sanitize_filename(bc->name) + ".jsonl";
        geneval::write_answers(answers, out_dir_ / file);
        json mj;
        mj["answers"] = answers.size();
        mj["unparsed"] = unparsed;
        per_model[bc->name] = mj;
        stage.outputs.push_back(file);
        log_ << "geneval run: " << bc->name << " -> " << answers.size() << " answers\n";
    }
    stage.counts["models"] = per_model;
    manifest_.record("geneval_run", std::move(stage));
    save_manifest();
}

void StageRunner::geneval_score() {
    if (skip_if_current("geneval_score")) return;
    const auto samples = load_stage_dataset(files::expanded, "counterfactual");
    require_stage("geneval_run");

    Manifest::Stage stage;
    stage.status = "complete";
    for (const auto& file : manifest_.stage("geneval_run")->outputs) {
        const auto answers = geneval::read_answers(out_dir_ / file);
        if (answers.empty()) continue;
        const std::string model = answers.front().model_id;
        std::string rates_csv, top_csv;
        for (const auto style : config_.prompt_styles) {
            const auto rates = geneval::bias_rates(answers, samples, style);
            const auto top = geneval::top_categories(rates.per_subtopic,
                                                     config_.top_categories_k);
            const std::string rc = geneval::rates_to_csv(model, style, rates);
            const std::string tc = geneval::top_categories_to_csv(model, style, top);
            // Keep one header per file.
            rates_csv += rates_csv.empty() ? rc : rc.substr(rc.find('\n') + 1);
            top_csv += top_csv.empty() ? tc : tc.substr(tc.find('\n') + 1);
        }
        const std::string rates_file =
            "reports/geneval_" + sanitize_filename(model) + ".csv";
        const std::string top_file =
            "reports/geneval_top_" + sanitize_filename(model) + ".csv";
        write_text(out_dir_ / rates_file, rates_csv);
        write_text(out_dir_ / top_file, top_csv);
        stage.outputs.push_back(rates_file);
        stage.outputs.push_back(top_file);
        log_ << "geneval score: " << model << " -> " << rates_file << "\n";
    }
    manifest_.record("geneval_score", std::move(stage));
    save_manifest();
}

std::string score_files(const std::filesystem::path& dataset_path,
                        const std::filesystem::path& pairs_path,
                        const std::vector<std::filesystem::path>& prediction_paths,
                        const std::filesystem::path& out_dir, std::ostream& log) {
    const auto samples = read_dataset(dataset_path);
    const auto pairs = read_pairs(pairs_path);
    std::vector<Prediction> predictions;
    for (const auto& p : prediction_paths) {
        const auto preds = read_predictions(p);
        predictions.insert(predictions.end(), preds.begin(), preds.end());
    }
    const auto reports = scoring::score_report(
        predictions, samples, pairs, {},
        [&](const std::string& w) { log << "score: warning: " << w << "\n"; });
    const std::string csv = scoring::reports_to_csv(reports);
    write_text(out_dir / "bias_report.csv", csv);
    write_text(out_dir / "bias_report.json", scoring::reports_to_json(reports));
    write_text(out_dir / "bias_report.md", scoring::reports_to_markdown(reports));
    log << "score: " << reports.size() << " report rows -> "
        << (out_dir / "bias_report.csv").string() << "\n";
    return csv;
}

// ---------------------------------------------------------------------------
// import-seed
// ---------------------------------------------------------------------------

namespace {

std::optional<size_t> find_column(const std::vector<std::string>& header,
                                  const std::vector<std::string>& aliases) {
    for (size_t i = 0; i < header.size(); ++i) {
        std::string h = header[i];
        std::transform(h.begin(), h.end(), h.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        for (const auto& a : aliases)
            if (h == a) return i;
    }
    return std::nullopt;
}

std::optional<Stance> stance_from_loose(std::string v) {
    std::transform(v.begin(), v.end(), v.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::replace(v.begin(), v.end(), '-', '_');
    if (v == "pro" || v == "pro_stereotype" || v == "pro_stereotypical" || v == "stereotype")
        return Stance::pro_stereotype;
    if (v == "anti" || v == "anti_stereotype" || v == "anti_stereotypical" ||
        v == "counterfactual")
        return Stance::anti_stereotype;
    return std::nullopt;
}

}  // namespace

ImportResult import_seed_csv(const std::filesystem::path& csv_path,
                             const std::filesystem::path& templates_out,
                             const std::filesystem::path& lexicon_out) {
    const auto rows = csv::parse_file(csv_path);
    if (rows.size() < 2) throw ParseError(csv_path.string() + ": no data rows");
    const auto& header = rows.front();

    const auto domain_col = find_column(header, {"domain", "bias_domain"});
    const auto subtopic_col = find_column(header, {"subtopic", "bias_type", "category", "topic"});
    const auto premise_col = find_column(header, {"premise", "premise_template"});
    const auto hypothesis_col = find_column(header, {"hypothesis", "hypothesis_template"});
    const auto stance_col = find_column(header, {"stance", "type", "direction"});
    const auto group1_col = find_column(header, {"group1", "group_1", "primary_group"});
    const auto group2_col = find_column(header, {"group2", "group_2", "counterfactual_group"});
    if (!subtopic_col || !premise_col || !hypothesis_col)
        throw ParseError(csv_path.string() +
                         ": need at least subtopic, premise and hypothesis columns");

    ImportResult result;
    std::vector<templating::MaskedTemplate> templates;
    templating::Lexicon lexicon;
    std::set<std::pair<std::string, std::string>> seen;
    size_t next_id = 1;
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != header.size()) {
            ++result.skipped_rows;
            continue;
        }
        templating::MaskedTemplate t;
        t.subtopic = row[*subtopic_col];
        t.domain = domain_col ? row[*domain_col] : "unknown";
        t.premise_template = row[*premise_col];
        t.hypothesis_template = row[*hypothesis_col];
        if (t.subtopic.empty() || t.premise_template.empty() || t.hypothesis_template.empty()) {
            ++result.skipped_rows;
            continue;
        }
        if (stance_col) {
            const auto stance = stance_from_loose(row[*stance_col]);
            if (!stance) {
                ++result.skipped_rows;
                continue;
            }
            t.stance = *stance;
        }
        try {
            const auto parsed = templating::parse_template(t.hypothesis_template);
            if (parsed.mask_count > 1 ||
                templating::parse_template(t.premise_template).mask_count > 0) {
                ++result.skipped_rows;
                continue;
            }
            t.source = parsed.mask_count == 1 ? "masked_variant" : "original";
        } catch (const ParseError&) {
            ++result.skipped_rows;
            continue;
        }
        if (!seen.emplace(t.premise_template, t.hypothesis_template).second) {
            ++result.skipped_rows;
            continue;
        }
        char buf[16];
        std::snprintf(buf, sizeof buf, "t%04zu", next_id++);
        t.id = buf;
        if (group1_col && group2_col && !row[*group1_col].empty() && !row[*group2_col].empty()) {
            auto& pair = lexicon.group_pairs[t.subtopic];
            if (pair.subtopic.empty()) {
                pair.subtopic = t.subtopic;
                pair.primary.push_back(row[*group1_col]);
                pair.counterfactual.push_back(row[*group2_col]);
            }
        }
        templates.push_back(std::move(t));
    }
    result.templates = templates.size();
    result.group_pairs = lexicon.group_pairs.size();
    templating::write_templates(templates, templates_out);
    templating::write_lexicon(lexicon, lexicon_out);
    return result;
}

}  // namespace nliaudit::stages

#include "nliaudit/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "nliaudit/templating.hpp"

namespace nliaudit::pipeline {

namespace {

using json = nlohmann::ordered_json;

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

char upper(char c) { return static_cast<char>(std::toupper(static_cast<unsigned char>(c))); }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

}  // namespace

GroupSwapper::GroupSwapper(const GroupPair& pair) {
    pair.validate();
    for (size_t i = 0; i < pair.primary.size(); ++i) {
        rules_.push_back({pair.primary[i], pair.counterfactual[i]});
        rules_.push_back({pair.counterfactual[i], pair.primary[i]});
    }
    std::sort(rules_.begin(), rules_.end(), [](const Rule& a, const Rule& b) {
        if (a.from.size() != b.from.size()) return a.from.size() > b.from.size();
        return a.from < b.from;
    });
}

GroupSwapper::Result GroupSwapper::swap(std::string_view text) const {
    Result result;
    std::string& out = result.text;
    out.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) {
        const Rule* match = nullptr;
        if (i == 0 || !is_word_char(text[i - 1])) {
            for (const auto& rule : rules_) {
                const size_t end = i + rule.from.size();
                if (end > text.size()) continue;
                // Sentence-initial occurrences may be capitalized; elsewhere
                // terms must appear in their canonical surface form.
                const bool first_ok = i == 0 ? lower(text[i]) == lower(rule.from[0])
                                             : text[i] == rule.from[0];
                if (!first_ok) continue;
                if (text.compare(i + 1, rule.from.size() - 1, rule.from, 1,
                                 rule.from.size() - 1) != 0)
                    continue;
                if (end < text.size() && is_word_char(text[end])) continue;
                match = &rule;
                break;
            }
        }
        if (match) {
            std::string replacement = match->to;
            // Mirror the matched character's case so sentence-initial
            // occurrences stay capitalized and the swap stays invertible.
            if (i == 0)
                replacement[0] = std::isupper(static_cast<unsigned char>(text[i]))
                                     ? upper(replacement[0])
                                     : lower(replacement[0]);
            if (result.substitutions == 0) result.first_replacement = match->to;
            out += replacement;
            ++result.substitutions;
            i += match->from.size();
        } else {
            out += text[i++];
        }
    }
    return result;
}

FillOutcome fill_hypotheses(const std::vector<Sample>& masked_samples,
                            backends::Backend& fill_backend, int k) {
    if (k < 1) throw InvariantError("fill_hypotheses: k must be >= 1");
    for (const auto& s : masked_samples) {
        size_t masks = 0;
        for (size_t pos = s.hypothesis.find(templating::kMaskToken); pos != std::string::npos;
             pos = s.hypothesis.find(templating::kMaskToken, pos + templating::kMaskToken.size()))
            ++masks;
        if (masks != 1)
            throw InvariantError("fill_hypotheses: sample " + s.id + " has " +
                                 std::to_string(masks) + " mask tokens, expected 1");
    }

    auto fills = backends::parallel_map(
        masked_samples, fill_backend.config().max_parallel,
        [&](const Sample& s) { return fill_backend.fill_mask(s.hypothesis, k); });

    FillOutcome outcome;
    for (size_t i = 0; i < masked_samples.size(); ++i) {
        if (!fills.results[i]) continue;
        const Sample& src = masked_samples[i];
        const size_t mask_pos = src.hypothesis.find(templating::kMaskToken);
        for (const auto& candidate : *fills.results[i]) {
            Sample filled = src;
            filled.hypothesis = src.hypothesis;
            filled.hypothesis.replace(mask_pos, templating::kMaskToken.size(), candidate.token);
            filled.filled_token = candidate.token;
            filled.provenance = "generated";
            filled.pair_id.reset();
            filled.id = sample_content_id(filled.premise, filled.hypothesis, filled.stance);
            outcome.samples.push_back(std::move(filled));
        }
    }
    outcome.error = fills.first_error;
    return outcome;
}

FilterOutcome adversarial_filter(const std::vector<Sample>& samples,
                                 const std::vector<backends::Backend*>& filter_backends) {
    if (filter_backends.empty())
        throw InvariantError("adversarial_filter: filtering with zero models is meaningless");
    for (const auto* b : filter_backends) {
        if (b->config().role != backends::BackendRole::filter)
            throw InvariantError("adversarial_filter: backend \"" + b->name() + "\" has role " +
                                 std::string(to_string(b->config().role)) +
                                 ", only filter-role backends may participate");
    }

    // Fan out per backend under its own parallelism limit.
    std::vector<backends::ParallelOutcome<NliLabel>> per_backend;
    per_backend.reserve(filter_backends.size());
    for (auto* backend : filter_backends) {
        per_backend.push_back(backends::parallel_map(
            samples, backend->config().max_parallel, [&](const Sample& s) {
                return backend->classify_nli(s.premise, s.hypothesis).label;
            }));
    }

    FilterOutcome outcome;
    for (size_t i = 0; i < samples.size(); ++i) {
        bool complete = true;
        FilterDecision d;
        d.sample_id = samples[i].id;
        for (size_t b = 0; b < filter_backends.size(); ++b) {
            if (!per_backend[b].results[i]) {
                complete = false;
                break;
            }
            d.per_model_labels[filter_backends[b]->name()] = *per_backend[b].results[i];
        }
        if (!complete) continue;
        d.kept = std::any_of(d.per_model_labels.begin(), d.per_model_labels.end(),
                             [](const auto& kv) { return kv.second != NliLabel::neutral; });
        if (d.kept) outcome.kept.push_back(samples[i]);
        outcome.decisions.push_back(std::move(d));
    }
    for (const auto& pb : per_backend) {
        if (pb.first_error) {
            outcome.error = pb.first_error;
            break;
        }
    }
    return outcome;
}

std::vector<Sample> dedup_by_text(std::vector<Sample> samples) {
    std::sort(samples.begin(), samples.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });
    std::set<std::pair<std::string, std::string>> seen;
    std::vector<Sample> out;
    out.reserve(samples.size());
    for (auto& s : samples) {
        if (seen.emplace(s.premise, s.hypothesis).second) out.push_back(std::move(s));
    }
    return out;
}

CounterfactualOutcome counterfactual_expand(const std::vector<Sample>& samples,
                                            const std::map<std::string, GroupPair>& group_pairs) {
    std::map<std::string, GroupSwapper> swappers;
    for (const auto& s : samples) {
        if (swappers.count(s.subtopic)) continue;
        auto it = group_pairs.find(s.subtopic);
        if (it == group_pairs.end())
            throw InvariantError("counterfactual_expand: no group pair for subtopic \"" +
                                 s.subtopic + "\" (sample " + s.id + ")");
        swappers.emplace(s.subtopic, GroupSwapper(it->second));
    }

    CounterfactualOutcome outcome;
    struct Entry {
        Sample sample;
        GroupSwapper::Result swapped;
        bool excluded = false;
    };
    std::vector<Entry> entries;
    entries.reserve(samples.size());
    std::map<std::pair<std::string, std::string>, size_t> by_text;  // (premise, hyp) -> entry
    for (const auto& s : samples) {
        auto swapped = swappers.at(s.subtopic).swap(s.hypothesis);
        Entry e{s, std::move(swapped), false};
        if (e.swapped.substitutions == 0) {
            e.excluded = true;
            outcome.flagged.push_back({s.id, "hypothesis contains no group term"});
        }
        auto key = std::make_pair(s.premise, s.hypothesis);
        auto [it, inserted] = by_text.emplace(key, entries.size());
        if (!inserted) {
            // Duplicate text in the input; keep the first occurrence.
            e.excluded = true;
            outcome.flagged.push_back(
                {s.id, "duplicate of sample " + entries[it->second].sample.id});
        }
        entries.push_back(std::move(e));
    }

    // A partner already in the input must carry the opposite stance. When it
    // does not, drop the later member; its surviving partner gets a fresh,
    // consistent counterfactual below.
    for (auto& e : entries) {
        if (e.excluded) continue;
        auto partner_key = std::make_pair(e.sample.premise, e.swapped.text);
        auto it = by_text.find(partner_key);
        if (it == by_text.end()) continue;
        Entry& partner = entries[it->second];
        if (partner.excluded) continue;
        if (partner.sample.stance == e.sample.stance) {
            e.excluded = true;
            outcome.flagged.push_back({e.sample.id, "stance conflict with counterfactual partner " +
                                                        partner.sample.id});
        }
    }

    std::vector<Sample> out;
    std::set<std::pair<std::string, std::string>> have;
    for (const auto& e : entries) {
        if (e.excluded) continue;
        Sample s = e.sample;
        s.pair_id = pair_content_id(s.premise, s.hypothesis, e.swapped.text);
        have.emplace(s.premise, s.hypothesis);
        out.push_back(std::move(s));
    }
    for (const auto& e : entries) {
        if (e.excluded) continue;
        auto key = std::make_pair(e.sample.premise, e.swapped.text);
        if (have.count(key)) continue;  // partner already present; never duplicate
        have.insert(key);
        Sample cf;
        cf.domain = e.sample.domain;
        cf.subtopic = e.sample.subtopic;
        cf.premise = e.sample.premise;
        cf.hypothesis = e.swapped.text;
        cf.stance = flipped(e.sample.stance);
        cf.group = e.swapped.first_replacement;
        cf.pair_id = pair_content_id(cf.premise, e.sample.hypothesis, cf.hypothesis);
        cf.provenance = "counterfactual";
        cf.filled_token = e.sample.filled_token;
        cf.gold_label = NliLabel::neutral;
        cf.id = sample_content_id(cf.premise, cf.hypothesis, cf.stance);
        out.push_back(std::move(cf));
    }
    std::sort(out.begin(), out.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });
    outcome.samples = std::move(out);
    return outcome;
}

std::vector<CounterfactualPair> build_pairs(const std::vector<Sample>& dataset) {
    std::vector<std::string> missing;
    for (const auto& s : dataset)
        if (!s.pair_id) missing.push_back(s.id);
    if (!missing.empty()) {
        std::string msg = "build_pairs: samples without pair_id:";
        for (const auto& id : missing) msg += " " + id;
        throw InvariantError(msg);
    }

    std::map<std::string, std::vector<const Sample*>> groups;
    for (const auto& s : dataset) groups[*s.pair_id].push_back(&s);

    std::vector<std::string> offenders;
    std::vector<CounterfactualPair> pairs;
    for (const auto& [pair_id, members] : groups) {
        const Sample* pro = nullptr;
        const Sample* anti = nullptr;
        bool bad = members.size() != 2;
        for (const Sample* m : members) {
            if (m->stance == Stance::pro_stereotype) {
                bad = bad || pro != nullptr;
                pro = m;
            } else {
                bad = bad || anti != nullptr;
                anti = m;
            }
        }
        if (bad || !pro || !anti) {
            for (const Sample* m : members) offenders.push_back(m->id);
            continue;
        }
        pairs.push_back({pair_id, pro->id, anti->id});
    }
    if (!offenders.empty()) {
        std::string msg = "build_pairs: pair ids without exactly one pro and one anti member;"
                          " offending samples:";
        for (const auto& id : offenders) msg += " " + id;
        throw InvariantError(msg);
    }
    std::sort(pairs.begin(), pairs.end(),
              [](const CounterfactualPair& a, const CounterfactualPair& b) {
                  return a.pair_id < b.pair_id;
              });
    return pairs;
}

void write_filter_decisions(const std::vector<FilterDecision>& decisions,
                            const std::filesystem::path& path) {
    std::vector<FilterDecision> sorted = decisions;
    std::sort(sorted.begin(), sorted.end(),
              [](const FilterDecision& a, const FilterDecision& b) {
                  return a.sample_id < b.sample_id;
              });
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& d : sorted) {
        json j;
        j["sample_id"] = d.sample_id;
        json labels = json::object();
        for (const auto& [model, label] : d.per_model_labels) labels[model] = to_string(label);
        j["per_model_labels"] = labels;
        j["kept"] = d.kept;
        out << j.dump() << '\n';
    }
}

std::vector<FilterDecision> read_filter_decisions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<FilterDecision> out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        FilterDecision d;
        d.sample_id = j.at("sample_id").get<std::string>();
        for (const auto& [model, label] : j.at("per_model_labels").items())
            d.per_model_labels[model] = nli_label_from_string(label.get<std::string>());
        d.kept = j.at("kept").get<bool>();
        out.push_back(std::move(d));
    }
    return out;
}

}  // namespace nliaudit::pipeline

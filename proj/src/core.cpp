#include "nliaudit/core.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace nliaudit {

namespace {

std::string lowercased(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

std::string_view to_string(NliLabel label) {
    switch (label) {
        case NliLabel::entailment: return "entailment";
        case NliLabel::neutral: return "neutral";
        case NliLabel::contradiction: return "contradiction";
    }
    return "neutral";
}

std::string_view to_string(Stance stance) {
    return stance == Stance::pro_stereotype ? "pro_stereotype" : "anti_stereotype";
}

NliLabel nli_label_from_string(std::string_view s) {
    const std::string v = lowercased(s);
    if (v == "entailment") return NliLabel::entailment;
    if (v == "neutral") return NliLabel::neutral;
    if (v == "contradiction") return NliLabel::contradiction;
    throw ParseError("unknown NLI label: \"" + std::string(s) + "\"");
}

Stance stance_from_string(std::string_view s) {
    const std::string v = lowercased(s);
    if (v == "pro_stereotype") return Stance::pro_stereotype;
    if (v == "anti_stereotype") return Stance::anti_stereotype;
    throw ParseError("unknown stance: \"" + std::string(s) + "\"");
}

void GroupPair::validate() const {
    if (primary.empty() || counterfactual.empty())
        throw InvariantError("group pair for subtopic \"" + subtopic + "\" has an empty term list");
    if (primary.size() != counterfactual.size())
        throw InvariantError("group pair for subtopic \"" + subtopic +
                             "\" has mismatched term list sizes");
    std::set<std::string> seen;
    for (const auto& t : primary) {
        if (t.empty()) throw InvariantError("group pair \"" + subtopic + "\" contains an empty term");
        if (!seen.insert(t).second)
            throw InvariantError("group pair \"" + subtopic + "\" repeats term \"" + t + "\"");
    }
    for (const auto& t : counterfactual) {
        if (t.empty()) throw InvariantError("group pair \"" + subtopic + "\" contains an empty term");
        if (!seen.insert(t).second)
            throw InvariantError("group pair \"" + subtopic + "\" repeats term \"" + t +
                                 "\" across the two sides");
    }
}

std::string pair_content_id(std::string_view premise, std::string_view hyp_a,
                            std::string_view hyp_b) {
    std::string_view lo = hyp_a, hi = hyp_b;
    if (hi < lo) std::swap(lo, hi);
    return to_hex(fnv1a64_fields({premise, lo, hi}, 0x9e3779b97f4a7c15ull));
}

void Prediction::validate() const {
    if (!scores) return;
    double sum = 0.0;
    for (double p : *scores) {
        if (!(p >= 0.0 && p <= 1.0))
            throw InvariantError("prediction for sample " + sample_id +
                                 " has a score outside [0,1]");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw InvariantError("prediction scores for sample " + sample_id +
                             " sum to " + std::to_string(sum) + ", expected 1");
}

namespace {

using json = nlohmann::ordered_json;

json sample_to_json(const Sample& s) {
    json j;
    j["id"] = s.id;
    j["domain"] = s.domain;
    j["subtopic"] = s.subtopic;
    j["premise"] = s.premise;
    j["hypothesis"] = s.hypothesis;
    j["stance"] = to_string(s.stance);
    j["group"] = s.group;
    if (s.pair_id) j["pair_id"] = *s.pair_id;
    j["provenance"] = s.provenance;
    if (s.filled_token) j["filled_token"] = *s.filled_token;
    j["gold_label"] = to_string(s.gold_label);
    return j;
}

std::string require_string(const json& j, const char* key, size_t line) {
    if (!j.contains(key) || !j.at(key).is_string())
        throw ParseError("line " + std::to_string(line) + ": missing or non-string field \"" +
                         key + "\"");
    return j.at(key).get<std::string>();
}

Sample sample_from_json(const json& j, size_t line) {
    Sample s;
    s.id = require_string(j, "id", line);
    s.domain = require_string(j, "domain", line);
    s.subtopic = require_string(j, "subtopic", line);
    s.premise = require_string(j, "premise", line);
    s.hypothesis = require_string(j, "hypothesis", line);
    s.stance = stance_from_string(require_string(j, "stance", line));
    s.group = require_string(j, "group", line);
    if (j.contains("pair_id") && !j.at("pair_id").is_null())
        s.pair_id = j.at("pair_id").get<std::string>();
    s.provenance = require_string(j, "provenance", line);
    if (s.provenance != "original" && s.provenance != "generated" &&
        s.provenance != "counterfactual")
        throw ParseError("line " + std::to_string(line) + ": unknown provenance \"" +
                         s.provenance + "\"");
    if (j.contains("filled_token") && !j.at("filled_token").is_null())
        s.filled_token = j.at("filled_token").get<std::string>();
    s.gold_label = nli_label_from_string(require_string(j, "gold_label", line));
    if (s.gold_label != NliLabel::neutral)
        throw ParseError("line " + std::to_string(line) + ": gold label must be neutral, got \"" +
                         std::string(to_string(s.gold_label)) + "\"");
    return s;
}

// Shared JSONL scaffolding: calls fn(parsed object, 1-based line number).
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
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
        if (!j.is_object())
            throw ParseError("line " + std::to_string(lineno) + ": record is not an object");
        fn(j, lineno);
    }
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace

std::vector<Sample> read_dataset(const std::filesystem::path& path) {
    std::vector<Sample> samples;
    std::unordered_set<std::string> ids;
    for_each_record(path, [&](const json& j, size_t lineno) {
        Sample s;
        try {
            s = sample_from_json(j, lineno);
        } catch (const std::exception& e) {
            const std::string what = e.what();
            const std::string prefix = "line " + std::to_string(lineno);
            if (what.rfind(prefix, 0) == 0) throw ParseError(what);
            throw ParseError(prefix + ": " + what);
        }
        if (!ids.insert(s.id).second)
            throw ParseError("line " + std::to_string(lineno) + ": duplicate sample id " + s.id);
        samples.push_back(std::move(s));
    });
    return samples;
}

std::string dataset_to_string(std::vector<Sample> samples) {
    std::unordered_set<std::string> ids;
    for (const auto& s : samples)
        if (!ids.insert(s.id).second)
            throw InvariantError("duplicate sample id " + s.id);
    std::sort(samples.begin(), samples.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });
    std::string out;
    for (const auto& s : samples) {
        out += sample_to_json(s).dump();
        out += '\n';
    }
    return out;
}

void write_dataset(const std::vector<Sample>& samples, const std::filesystem::path& path) {
    const std::string body = dataset_to_string(samples);  // validates before touching the file
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << body;
    if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
    std::vector<Prediction> preds;
    for_each_record(path, [&](const json& j, size_t lineno) {
        Prediction p;
        p.sample_id = require_string(j, "sample_id", lineno);
        p.model_id = require_string(j, "model_id", lineno);
        p.label = nli_label_from_string(require_string(j, "label", lineno));
        if (j.contains("scores") && !j.at("scores").is_null()) {
            const auto& sc = j.at("scores");
            if (!sc.is_object() || !sc.contains("entailment") || !sc.contains("neutral") ||
                !sc.contains("contradiction"))
                throw ParseError("line " + std::to_string(lineno) +
                                 ": scores must carry entailment/neutral/contradiction");
            p.scores = {{sc.at("entailment").get<double>(), sc.at("neutral").get<double>(),
                         sc.at("contradiction").get<double>()}};
        }
        try {
            p.validate();
        } catch (const InvariantError& e) {
            throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
        }
        preds.push_back(std::move(p));
    });
    return preds;
}

void write_predictions(const std::vector<Prediction>& predictions,
                       const std::filesystem::path& path) {
    std::vector<Prediction> sorted = predictions;
    std::sort(sorted.begin(), sorted.end(), [](const Prediction& a, const Prediction& b) {
        return std::tie(a.model_id, a.sample_id) < std::tie(b.model_id, b.sample_id);
    });
    std::vector<std::string> lines;
    lines.reserve(sorted.size());
    for (const auto& p : sorted) {
        p.validate();
        json j;
        j["sample_id"] = p.sample_id;
        j["model_id"] = p.model_id;
        j["label"] = to_string(p.label);
        if (p.scores) {
            json sc;
            sc["entailment"] = (*p.scores)[0];
            sc["neutral"] = (*p.scores)[1];
            sc["contradiction"] = (*p.scores)[2];
            j["scores"] = sc;
        }
        lines.push_back(j.dump());
    }
    write_lines(path, lines);
}

std::vector<CounterfactualPair> read_pairs(const std::filesystem::path& path) {
    std::vector<CounterfactualPair> pairs;
    for_each_record(path, [&](const json& j, size_t lineno) {
        CounterfactualPair p;
        p.pair_id = require_string(j, "pair_id", lineno);
        p.pro_sample_id = require_string(j, "pro_sample_id", lineno);
        p.anti_sample_id = require_string(j, "anti_sample_id", lineno);
        pairs.push_back(std::move(p));
    });
    return pairs;
}

void write_pairs(const std::vector<CounterfactualPair>& pairs,
                 const std::filesystem::path& path) {
    std::vector<CounterfactualPair> sorted = pairs;
    std::sort(sorted.begin(), sorted.end(),
              [](const CounterfactualPair& a, const CounterfactualPair& b) {
                  return a.pair_id < b.pair_id;
              });
    std::vector<std::string> lines;
    lines.reserve(sorted.size());
    for (const auto& p : sorted) {
        json j;
        j["pair_id"] = p.pair_id;
        j["pro_sample_id"] = p.pro_sample_id;
        j["anti_sample_id"] = p.anti_sample_id;
        lines.push_back(j.dump());
    }
    write_lines(path, lines);
}

}  // namespace nliaudit

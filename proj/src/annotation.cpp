#include "nliaudit/annotation.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "nliaudit/csv.hpp"
#include "nliaudit/hash.hpp"

namespace nliaudit::annotation {

Category category_from_string(std::string_view s) {
    if (s == "valid") return Category::valid;
    if (s == "invalid") return Category::invalid;
    if (s == "incoherent") return Category::incoherent;
    if (s == "unlabeled" || s.empty()) return Category::unlabeled;
    throw ParseError("unknown annotation category: \"" + std::string(s) + "\"");
}

std::string_view to_string(Category c) {
    switch (c) {
        case Category::valid: return "valid";
        case Category::invalid: return "invalid";
        case Category::incoherent: return "incoherent";
        case Category::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

std::string hypothesis_content_id(std::string_view hypothesis) {
    return to_hex(fnv1a64(hypothesis));
}

std::vector<AnnotationRecord> export_candidates(const std::vector<Sample>& samples,
                                                const std::vector<AnnotationRecord>& existing) {
    if (samples.empty())
        throw InvariantError("export_candidates: no samples to export");
    std::unordered_map<std::string, const AnnotationRecord*> prior;
    for (const auto& r : existing) prior[r.hypothesis_id] = &r;

    std::set<std::string> hypotheses;
    for (const auto& s : samples) hypotheses.insert(s.hypothesis);

    std::vector<AnnotationRecord> out;
    out.reserve(hypotheses.size());
    for (const auto& h : hypotheses) {
        AnnotationRecord r;
        r.hypothesis = h;
        r.hypothesis_id = hypothesis_content_id(h);
        if (auto it = prior.find(r.hypothesis_id); it != prior.end()) {
            r.category = it->second->category;
            r.stance_by_annotator = it->second->stance_by_annotator;
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<Sample> apply_round1(const std::vector<Sample>& samples,
                                 const std::vector<AnnotationRecord>& annotations) {
    std::unordered_map<std::string, const AnnotationRecord*> by_hyp;
    for (const auto& r : annotations) by_hyp[r.hypothesis] = &r;

    std::vector<std::string> unlabeled;
    std::vector<Sample> kept;
    for (const auto& s : samples) {
        auto it = by_hyp.find(s.hypothesis);
        if (it == by_hyp.end() || it->second->category == Category::unlabeled) {
            unlabeled.push_back(s.id);
            continue;
        }
        if (it->second->category == Category::valid) kept.push_back(s);
    }
    if (!unlabeled.empty()) {
        std::string msg = "apply_round1: unlabeled hypotheses for samples:";
        size_t shown = 0;
        for (const auto& id : unlabeled) {
            if (shown++ == 10) {
                msg += " and " + std::to_string(unlabeled.size() - 10) + " more";
                break;
            }
            msg += " " + id;
        }
        throw InvariantError(msg);
    }
    return kept;
}

Rat compute_agreement(const std::vector<AnnotationRecord>& annotations,
                      const std::string& annotator_a, const std::string& annotator_b) {
    std::int64_t both = 0;
    std::int64_t matching = 0;
    std::vector<std::string> one_sided;
    for (const auto& r : annotations) {
        auto get = [&](const std::string& who) -> std::optional<Stance> {
            auto it = r.stance_by_annotator.find(who);
            if (it == r.stance_by_annotator.end()) return std::nullopt;
            return it->second;
        };
        const auto a = get(annotator_a);
        const auto b = get(annotator_b);
        if (a && b) {
            ++both;
            if (*a == *b) ++matching;
        } else if (a || b) {
            one_sided.push_back(r.hypothesis_id);
        }
    }
    if (!one_sided.empty()) {
        std::string msg = "compute_agreement: hypotheses labeled by only one annotator:";
        for (const auto& id : one_sided) msg += " " + id;
        throw InvariantError(msg);
    }
    if (both == 0)
        throw InvariantError("compute_agreement: annotators " + annotator_a + " and " +
                             annotator_b + " share no labeled hypotheses");
    return Rat(matching, both);
}

Round2Result apply_round2(const std::vector<Sample>& samples,
                          const std::vector<AnnotationRecord>& annotations,
                          const std::vector<std::string>& dropped_subtopics,
                          const std::string& annotator_a, const std::string& annotator_b) {
    std::unordered_map<std::string, const AnnotationRecord*> by_hyp;
    for (const auto& r : annotations) by_hyp[r.hypothesis] = &r;
    const std::set<std::string> dropped(dropped_subtopics.begin(), dropped_subtopics.end());

    Round2Result result;
    std::set<std::string> divergent_seen;
    for (const auto& s : samples) {
        if (dropped.count(s.subtopic)) {
            ++result.dropped_by_subtopic;
            continue;
        }
        std::optional<Stance> a, b;
        const AnnotationRecord* rec = nullptr;
        if (auto it = by_hyp.find(s.hypothesis); it != by_hyp.end()) {
            rec = it->second;
            if (auto sa = rec->stance_by_annotator.find(annotator_a);
                sa != rec->stance_by_annotator.end())
                a = sa->second;
            if (auto sb = rec->stance_by_annotator.find(annotator_b);
                sb != rec->stance_by_annotator.end())
                b = sb->second;
        }
        if (a && b && *a != *b) {
            if (divergent_seen.insert(rec->hypothesis_id).second)
                result.divergent_hypothesis_ids.push_back(rec->hypothesis_id);
            continue;
        }
        Sample kept = s;
        if (a && b && *a == *b && *a != s.stance) {
            kept.stance = *a;
            kept.id = sample_content_id(kept.premise, kept.hypothesis, kept.stance);
            result.stance_overrides.emplace_back(s.id, *a);
        }
        result.samples.push_back(std::move(kept));
    }
    return result;
}

namespace {

std::optional<Stance> stance_from_cell(const std::string& cell, size_t lineno) {
    if (cell.empty()) return std::nullopt;
    try {
        return stance_from_string(cell);
    } catch (const ParseError& e) {
        throw ParseError("annotation row " + std::to_string(lineno) + ": " + e.what());
    }
}

}  // namespace

std::vector<AnnotationRecord> read_annotations(const std::filesystem::path& path,
                                               const std::string& annotator_a,
                                               const std::string& annotator_b) {
    const auto rows = csv::parse_file(path);
    if (rows.empty()) throw ParseError(path.string() + ": missing header row");
    const std::vector<std::string> expected = {"hypothesis_id", "hypothesis", "category",
                                               "stance_A", "stance_B"};
    if (rows.front() != expected)
        throw ParseError(path.string() +
                         ": header must be hypothesis_id,hypothesis,category,stance_A,stance_B");
    std::vector<AnnotationRecord> out;
    std::set<std::string> ids;
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& row = rows[i];
        if (row.size() != 5)
            throw ParseError(path.string() + ": row " + std::to_string(i + 1) + " has " +
                             std::to_string(row.size()) + " fields, expected 5");
        AnnotationRecord r;
        r.hypothesis_id = row[0];
        r.hypothesis = row[1];
        r.category = category_from_string(row[2]);
        r.stance_by_annotator[annotator_a] = stance_from_cell(row[3], i + 1);
        r.stance_by_annotator[annotator_b] = stance_from_cell(row[4], i + 1);
        if (r.hypothesis_id != hypothesis_content_id(r.hypothesis))
            throw ParseError(path.string() + ": row " + std::to_string(i + 1) +
                             ": hypothesis_id does not match the hypothesis text");
        if (!ids.insert(r.hypothesis_id).second)
            throw ParseError(path.string() + ": row " + std::to_string(i + 1) +
                             ": duplicate hypothesis_id " + r.hypothesis_id);
        out.push_back(std::move(r));
    }
    return out;
}

void write_annotations(const std::vector<AnnotationRecord>& records,
                       const std::filesystem::path& path, const std::string& annotator_a,
                       const std::string& annotator_b) {
    std::vector<AnnotationRecord> sorted = records;
    std::sort(sorted.begin(), sorted.end(),
              [](const AnnotationRecord& x, const AnnotationRecord& y) {
                  return x.hypothesis < y.hypothesis;
              });
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"hypothesis_id", "hypothesis", "category", "stance_A", "stance_B"});
    for (const auto& r : sorted) {
        auto cell = [&](const std::string& who) -> std::string {
            auto it = r.stance_by_annotator.find(who);
            if (it == r.stance_by_annotator.end() || !it->second) return "";
            return std::string(to_string(*it->second));
        };
        rows.push_back({r.hypothesis_id, r.hypothesis, std::string(to_string(r.category)),
                        cell(annotator_a), cell(annotator_b)});
    }
    csv::write_file(path, rows);
}

}  // namespace nliaudit::annotation

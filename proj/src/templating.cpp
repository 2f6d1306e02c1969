#include "nliaudit/templating.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <unordered_set>

#include <json.hpp>

namespace nliaudit::templating {

namespace {

using json = nlohmann::ordered_json;

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

void uppercase_first(std::string& s) {
    if (!s.empty())
        s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
}

size_t count_masks(std::string_view text) {
    size_t n = 0;
    for (size_t pos = text.find(kMaskToken); pos != std::string_view::npos;
         pos = text.find(kMaskToken, pos + kMaskToken.size()))
        ++n;
    return n;
}

}  // namespace

ParsedTemplate parse_template(std::string_view text) {
    ParsedTemplate out;
    std::unordered_set<std::string> seen;
    size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, 2, "{{") == 0) {
            const size_t close = text.find("}}", i + 2);
            if (close == std::string_view::npos)
                throw ParseError("unbalanced braces: \"{{\" at offset " + std::to_string(i) +
                                 " has no matching \"}}\"");
            const std::string name(text.substr(i + 2, close - (i + 2)));
            if (name.empty())
                throw ParseError("empty placeholder name at offset " + std::to_string(i));
            if (!std::all_of(name.begin(), name.end(), is_name_char))
                throw ParseError("invalid placeholder name \"" + name + "\"");
            if (seen.insert(name).second) out.placeholders.push_back(name);
            i = close + 2;
        } else if (text.compare(i, 2, "}}") == 0) {
            throw ParseError("unbalanced braces: stray \"}}\" at offset " + std::to_string(i));
        } else {
            ++i;
        }
    }
    out.mask_count = count_masks(text);
    return out;
}

void Lexicon::validate() const {
    for (const auto& [name, words] : word_lists) {
        if (name.empty()) throw InvariantError("lexicon contains an unnamed word list");
        if (words.empty()) throw InvariantError("word list \"" + name + "\" is empty");
        std::set<std::string> seen;
        for (const auto& w : words)
            if (!seen.insert(w).second)
                throw InvariantError("word list \"" + name + "\" repeats \"" + w + "\"");
    }
    for (const auto& [subtopic, pair] : group_pairs) {
        if (subtopic != pair.subtopic)
            throw InvariantError("group pair keyed \"" + subtopic + "\" names subtopic \"" +
                                 pair.subtopic + "\"");
        pair.validate();
    }
}

const GroupPair& Lexicon::group_pair_for(const std::string& subtopic) const {
    auto it = group_pairs.find(subtopic);
    if (it == group_pairs.end())
        throw InvariantError("no group pair defined for subtopic \"" + subtopic + "\"");
    return it->second;
}

namespace {

std::string substitute(std::string_view text,
                       const std::map<std::string, std::string>& bindings) {
    std::string out;
    out.reserve(text.size());
    size_t i = 0;
    while (i < text.size()) {
        if (text.compare(i, 2, "{{") == 0) {
            const size_t close = text.find("}}", i + 2);
            const std::string name(text.substr(i + 2, close - (i + 2)));
            out += bindings.at(name);
            i = close + 2;
        } else {
            out += text[i++];
        }
    }
    return out;
}

// First group placeholder in the hypothesis decides the sample's group term.
std::string hypothesis_group_term(std::string_view hyp_template, const std::string& group1,
                                  const std::string& group2) {
    const size_t p1 = hyp_template.find("{{GROUP1}}");
    const size_t p2 = hyp_template.find("{{GROUP2}}");
    if (p1 == std::string_view::npos && p2 == std::string_view::npos) return "";
    if (p2 == std::string_view::npos) return group1;
    if (p1 == std::string_view::npos) return group2;
    return p1 < p2 ? group1 : group2;
}

}  // namespace

std::vector<Sample> expand(const std::vector<MaskedTemplate>& templates, const Lexicon& lexicon) {
    lexicon.validate();
    std::vector<Sample> out;
    for (const auto& tpl : templates) {
        const ParsedTemplate premise_parsed = parse_template(tpl.premise_template);
        const ParsedTemplate hyp_parsed = parse_template(tpl.hypothesis_template);
        if (premise_parsed.mask_count != 0)
            throw ParseError("template " + tpl.id + ": premises must not carry a mask");
        if (hyp_parsed.mask_count > 1)
            throw ParseError("template " + tpl.id + ": more than one mask in hypothesis");

        // Referenced placeholders in appearance order, premise first.
        std::vector<std::string> names = premise_parsed.placeholders;
        for (const auto& n : hyp_parsed.placeholders)
            if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);

        std::map<std::string, std::string> bindings;
        std::vector<const std::vector<std::string>*> lists;  // product dimensions
        std::vector<std::string> list_names;
        bool uses_groups = false;
        for (const auto& name : names) {
            if (name == kGroup1 || name == kGroup2) {
                uses_groups = true;
                continue;
            }
            auto it = lexicon.word_lists.find(name);
            if (it == lexicon.word_lists.end())
                throw InvariantError("unresolvable placeholder \"" + name + "\" in template " +
                                     tpl.id);
            lists.push_back(&it->second);
            list_names.push_back(name);
        }
        std::string group1, group2, group_term;
        if (uses_groups) {
            const GroupPair& pair = lexicon.group_pair_for(tpl.subtopic);
            group1 = pair.primary.front();
            group2 = pair.counterfactual.front();
            bindings[std::string(kGroup1)] = group1;
            bindings[std::string(kGroup2)] = group2;
            group_term = hypothesis_group_term(tpl.hypothesis_template, group1, group2);
        }

        // Odometer over the word lists, rightmost fastest.
        std::vector<size_t> idx(lists.size(), 0);
        bool done = false;
        while (!done) {
            for (size_t d = 0; d < lists.size(); ++d) bindings[list_names[d]] = (*lists[d])[idx[d]];
            Sample s;
            s.domain = tpl.domain;
            s.subtopic = tpl.subtopic;
            s.premise = substitute(tpl.premise_template, bindings);
            s.hypothesis = substitute(tpl.hypothesis_template, bindings);
            uppercase_first(s.premise);
            uppercase_first(s.hypothesis);
            s.stance = tpl.stance;
            s.group = group_term;
            s.provenance = "original";
            s.gold_label = NliLabel::neutral;
            s.id = sample_content_id(s.premise, s.hypothesis, s.stance);
            out.push_back(std::move(s));

            if (lists.empty()) break;
            size_t d = lists.size() - 1;
            while (true) {
                if (++idx[d] < lists[d]->size()) break;
                idx[d] = 0;
                if (d == 0) {
                    done = true;
                    break;
                }
                --d;
            }
        }
    }
    return out;
}

namespace {

std::string require_string(const json& j, const char* key, size_t line) {
    if (!j.contains(key) || !j.at(key).is_string())
        throw ParseError("line " + std::to_string(line) + ": missing or non-string field \"" +
                         key + "\"");
    return j.at(key).get<std::string>();
}

}  // namespace

std::vector<MaskedTemplate> read_templates(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<MaskedTemplate> out;
    std::unordered_set<std::string> ids;
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
        MaskedTemplate t;
        t.id = require_string(j, "id", lineno);
        t.domain = require_string(j, "domain", lineno);
        t.subtopic = require_string(j, "subtopic", lineno);
        t.premise_template = require_string(j, "premise_template", lineno);
        t.hypothesis_template = require_string(j, "hypothesis_template", lineno);
        t.stance = stance_from_string(require_string(j, "stance", lineno));
        t.source = require_string(j, "source", lineno);
        if (t.source != "original" && t.source != "masked_variant")
            throw ParseError("line " + std::to_string(lineno) + ": unknown source \"" + t.source +
                             "\"");
        if (!ids.insert(t.id).second)
            throw ParseError("line " + std::to_string(lineno) + ": duplicate template id " + t.id);
        try {
            const auto premise_parsed = parse_template(t.premise_template);
            const auto hyp_parsed = parse_template(t.hypothesis_template);
            if (premise_parsed.mask_count != 0)
                throw ParseError("premise template carries a mask");
            if (hyp_parsed.mask_count > 1)
                throw ParseError("hypothesis template carries more than one mask");
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(lineno) + " (template " + t.id + "): " +
                             e.what());
        }
        out.push_back(std::move(t));
    }
    return out;
}

void write_templates(const std::vector<MaskedTemplate>& templates,
                     const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& t : templates) {
        json j;
        j["id"] = t.id;
        j["domain"] = t.domain;
        j["subtopic"] = t.subtopic;
        j["premise_template"] = t.premise_template;
        j["hypothesis_template"] = t.hypothesis_template;
        j["stance"] = to_string(t.stance);
        j["source"] = t.source;
        out << j.dump() << '\n';
    }
}

Lexicon read_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    Lexicon lex;
    if (j.contains("word_lists")) {
        for (const auto& [name, words] : j.at("word_lists").items()) {
            if (!words.is_array()) throw ParseError("word list \"" + name + "\" is not an array");
            lex.word_lists[name] = words.get<std::vector<std::string>>();
        }
    }
    if (j.contains("group_pairs")) {
        for (const auto& [subtopic, spec] : j.at("group_pairs").items()) {
            GroupPair pair;
            pair.subtopic = subtopic;
            if (!spec.contains("primary") || !spec.contains("counterfactual"))
                throw ParseError("group pair \"" + subtopic +
                                 "\" needs primary and counterfactual term lists");
            pair.primary = spec.at("primary").get<std::vector<std::string>>();
            pair.counterfactual = spec.at("counterfactual").get<std::vector<std::string>>();
            lex.group_pairs[subtopic] = std::move(pair);
        }
    }
    lex.validate();
    return lex;
}

void write_lexicon(const Lexicon& lexicon, const std::filesystem::path& path) {
    json j;
    json wl = json::object();
    for (const auto& [name, words] : lexicon.word_lists) wl[name] = words;
    j["word_lists"] = wl;
    json gp = json::object();
    for (const auto& [subtopic, pair] : lexicon.group_pairs) {
        json p;
        p["primary"] = pair.primary;
        p["counterfactual"] = pair.counterfactual;
        gp[subtopic] = p;
    }
    j["group_pairs"] = gp;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

}  // namespace nliaudit::templating

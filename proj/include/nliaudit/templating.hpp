#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nliaudit/core.hpp"

namespace nliaudit::templating {

// The literal mask token in template files. Backend adapters translate it to
// each model's native token; everything upstream sees only this spelling.
inline constexpr std::string_view kMaskToken = "<MASK>";

// GROUP1 binds to the subtopic's primary group, GROUP2 to the counterfactual
// one. Both resolve through the lexicon's group pairs, not its word lists.
inline constexpr std::string_view kGroup1 = "GROUP1";
inline constexpr std::string_view kGroup2 = "GROUP2";

struct MaskedTemplate {
    std::string id;
    std::string domain;
    std::string subtopic;
    std::string premise_template;     // placeholders allowed, masks not
    std::string hypothesis_template;  // placeholders plus at most one mask
    Stance stance = Stance::pro_stereotype;  // for the canonical group binding
    std::string source;               // original | masked_variant
};

struct Lexicon {
    std::map<std::string, std::vector<std::string>> word_lists;
    std::map<std::string, GroupPair> group_pairs;

    void validate() const;
    const GroupPair& group_pair_for(const std::string& subtopic) const;
};

struct ParsedTemplate {
    std::vector<std::string> placeholders;  // distinct, in order of first appearance
    size_t mask_count = 0;
};

// Recognizes {{NAME}} placeholders (NAME in [A-Za-z0-9_]+) and the literal
// mask token. Throws ParseError on unbalanced braces or empty/invalid names.
ParsedTemplate parse_template(std::string_view text);

// Cartesian expansion over the word lists referenced by each template, with
// GROUP1/GROUP2 bound canonically from the subtopic's group pair. Output
// order is deterministic: templates in input order, word lists iterated
// rightmost-fastest in placeholder appearance order.
std::vector<Sample> expand(const std::vector<MaskedTemplate>& templates, const Lexicon& lexicon);

// Template file: JSONL, one MaskedTemplate per line. Load-time validation
// rejects masks in premises and more than one mask per hypothesis.
std::vector<MaskedTemplate> read_templates(const std::filesystem::path& path);
void write_templates(const std::vector<MaskedTemplate>& templates,
                     const std::filesystem::path& path);

// Lexicon file: one JSON document {word_lists: {...}, group_pairs: {...}}.
Lexicon read_lexicon(const std::filesystem::path& path);
void write_lexicon(const Lexicon& lexicon, const std::filesystem::path& path);

}  // namespace nliaudit::templating

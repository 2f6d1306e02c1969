#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nliaudit/core.hpp"
#include "nliaudit/rational.hpp"

namespace nliaudit::geneval {

// The two prompting styles: asking whether the premise makes the hypothesis
// true, or whether it entails it.
enum class PromptStyle { true_hypothesis, entailed_hypothesis };

PromptStyle prompt_style_from_string(std::string_view s);
std::string_view to_string(PromptStyle style);

enum class Verdict { yes, no, unparsed };

Verdict verdict_from_string(std::string_view s);
std::string_view to_string(Verdict v);

struct ParsedAnswer {
    Verdict verdict = Verdict::unparsed;
    std::string raw;
};

// Ordered, data-driven answer extraction rules; first match wins. Patterns
// are ECMAScript regexes, matched case-insensitively anywhere in the text.
struct ParseRule {
    std::string pattern;
    Verdict verdict = Verdict::yes;  // yes or no; unparsed is the fallthrough
};

// Leading yes/no token, "Answer: yes/no", and "the hypothesis is (not)
// true/entailed" forms.
const std::vector<ParseRule>& default_ruleset();

// Byte-exact prompt instantiation; both styles end with the yes/no-plus-
// explanation instruction so answers stay machine-extractable.
std::string render_prompt(PromptStyle style, const std::string& premise,
                          const std::string& hypothesis);

// Total: every text maps to yes, no, or unparsed. Never throws on content.
ParsedAnswer parse_answer(const std::string& text, const std::vector<ParseRule>& ruleset);

struct GenAnswer {
    std::string sample_id;
    std::string model_id;
    PromptStyle style = PromptStyle::true_hypothesis;
    std::string raw_text;
    Verdict verdict = Verdict::unparsed;
};

std::vector<GenAnswer> read_answers(const std::filesystem::path& path);
void write_answers(const std::vector<GenAnswer>& answers, const std::filesystem::path& path);

struct CategoryRate {
    std::int64_t parsed = 0;
    std::int64_t yes = 0;
    Rat rate;  // yes / parsed
};

struct BiasRates {
    std::int64_t total = 0;
    std::int64_t parsed = 0;
    std::int64_t unparsed = 0;
    std::int64_t yes = 0;
    Rat overall;        // yes / parsed; a yes is the biased answer
    Rat unparsed_rate;  // unparsed / total
    CategoryRate pro;   // yes-rate among pro-stereotype samples
    CategoryRate anti;  // yes-rate among anti-stereotype samples
    std::map<std::string, CategoryRate> per_subtopic;
};

// Unparsed answers leave the denominator and are book-kept separately.
// Requires exactly one answer per sample for the given style.
BiasRates bias_rates(const std::vector<GenAnswer>& answers, const std::vector<Sample>& dataset,
                     PromptStyle style);

// Subtopics by descending biased-answer rate, ties alphabetical, first k.
std::vector<std::pair<std::string, Rat>> top_categories(
    const std::map<std::string, CategoryRate>& per_subtopic, int k);

std::string rates_to_csv(const std::string& model_id, PromptStyle style, const BiasRates& rates);
std::string top_categories_to_csv(const std::string& model_id, PromptStyle style,
                                  const std::vector<std::pair<std::string, Rat>>& top);

}  // namespace nliaudit::geneval

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "nliaudit/templating.hpp"

using namespace nliaudit;
using namespace nliaudit::templating;
namespace fs = std::filesystem;

namespace {

Lexicon fixture_lexicon() {
    return read_lexicon(fs::path(NLIAUDIT_FIXTURE_DIR) / "lexicon.json");
}

MaskedTemplate make_template(std::string id, std::string subtopic, std::string premise,
                             std::string hypothesis) {
    MaskedTemplate t;
    t.id = std::move(id);
    t.domain = "gender";
    t.subtopic = std::move(subtopic);
    t.premise_template = std::move(premise);
    t.hypothesis_template = std::move(hypothesis);
    t.stance = Stance::pro_stereotype;
    t.source = "masked_variant";
    return t;
}

}  // namespace

TEST_CASE("parse_template finds placeholders in order and counts masks") {
    const auto parsed =
        parse_template("{{GROUP2}} are <MASK> poorly compared to {{GROUP1}} for {{MJOB}}.");
    CHECK(parsed.placeholders == std::vector<std::string>{"GROUP2", "GROUP1", "MJOB"});
    CHECK(parsed.mask_count == 1);
}

TEST_CASE("parse_template: plain text has no markup") {
    const auto parsed = parse_template("Hello world.");
    CHECK(parsed.placeholders.empty());
    CHECK(parsed.mask_count == 0);
}

TEST_CASE("parse_template deduplicates repeated names") {
    const auto parsed = parse_template("{{GROUP1}} and {{GROUP1}}");
    CHECK(parsed.placeholders == std::vector<std::string>{"GROUP1"});
    CHECK(parsed.mask_count == 0);
}

TEST_CASE("parse_template rejects bad markup") {
    CHECK_THROWS_AS(parse_template("{{GROUP1"), ParseError);
    CHECK_THROWS_AS(parse_template("trailing }} brace"), ParseError);
    CHECK_THROWS_AS(parse_template("{{}}"), ParseError);
    CHECK_THROWS_AS(parse_template("{{BAD NAME}}"), ParseError);
}

TEST_CASE("parse_template: single braces are literal text") {
    const auto parsed = parse_template("a {json: like} thing");
    CHECK(parsed.placeholders.empty());
}

TEST_CASE("expand reproduces the canonical masked sentence byte-exactly") {
    auto t = make_template("t1", "man_is_to_programmer", "Stats about {{MJOB}}.",
                           "{{GROUP2}} are <MASK> poorly compared to {{GROUP1}} for {{MJOB}}.");
    const auto lexicon = fixture_lexicon();
    const auto samples = expand({t}, lexicon);
    REQUIRE(samples.size() == 3);  // one per MJOB entry
    CHECK(samples[0].hypothesis ==
          "Women are <MASK> poorly compared to men for software engineering.");
    CHECK(samples[0].premise == "Stats about software engineering.");
    CHECK(samples[0].group == "women");
    CHECK(samples[0].provenance == "original");
    CHECK(samples[0].gold_label == NliLabel::neutral);
}

TEST_CASE("expand without placeholders emits one capitalized copy") {
    auto t = make_template("t1", "man_is_to_programmer", "A premise.", "a plain hypothesis.");
    const auto samples = expand({t}, fixture_lexicon());
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].hypothesis == "A plain hypothesis.");
    CHECK(samples[0].premise == "A premise.");
    CHECK(samples[0].group.empty());
}

TEST_CASE("expand output count is the product of referenced list sizes") {
    auto t = make_template("t1", "man_is_to_programmer", "P.",
                           "{{GROUP2}} are less {{WORD2}} and <MASK> at {{MJOB}}.");
    const auto samples = expand({t}, fixture_lexicon());
    // Brute-force enumeration of the cartesian product of the two lists.
    const auto lexicon = fixture_lexicon();
    std::set<std::string> expected;
    for (const auto& w2 : lexicon.word_lists.at("WORD2"))
        for (const auto& job : lexicon.word_lists.at("MJOB"))
            expected.insert("Women are less " + w2 + " and <MASK> at " + job + ".");
    CHECK(samples.size() == expected.size());
    std::set<std::string> got;
    for (const auto& s : samples) got.insert(s.hypothesis);
    CHECK(got == expected);
}

TEST_CASE("expand reports unresolvable placeholders with template id") {
    auto t = make_template("t42", "man_is_to_programmer", "P.", "{{NO_SUCH_LIST}} thing.");
    CHECK_THROWS_WITH_AS(expand({t}, fixture_lexicon()),
                         doctest::Contains("NO_SUCH_LIST"), InvariantError);
    CHECK_THROWS_WITH_AS(expand({t}, fixture_lexicon()), doctest::Contains("t42"),
                         InvariantError);
}

TEST_CASE("expand requires a group pair when group placeholders appear") {
    auto t = make_template("t1", "unknown_subtopic", "P.", "{{GROUP1}} do things.");
    CHECK_THROWS_AS(expand({t}, fixture_lexicon()), InvariantError);
}

TEST_CASE("expand is deterministic and leaves no residual markup") {
    auto t1 = make_template("t1", "man_is_to_programmer", "About {{MJOB}}.",
                            "{{GROUP2}} are less {{WORD2}} for {{MJOB}}.");
    auto t2 = make_template("t2", "Black_is_to_drugs", "P.",
                            "Use <MASK> increased within {{GROUP1}}.");
    const auto lexicon = fixture_lexicon();
    const auto a = expand({t1, t2}, lexicon);
    const auto b = expand({t1, t2}, lexicon);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    for (const auto& s : a) {
        CHECK(s.premise.find("{{") == std::string::npos);
        CHECK(s.hypothesis.find("{{") == std::string::npos);
    }
}

TEST_CASE("expansion count law on randomized lexica") {
    std::mt19937_64 rng(777);
    for (int iter = 0; iter < 30; ++iter) {
        Lexicon lex;
        lex.group_pairs["topic"] = GroupPair{"topic", {"alphas"}, {"betas"}};
        const size_t n_lists = 1 + rng() % 3;
        std::vector<std::string> names;
        size_t product = 1;
        for (size_t l = 0; l < n_lists; ++l) {
            const std::string name = "LIST" + std::to_string(l);
            const size_t len = 1 + rng() % 4;
            product *= len;
            std::vector<std::string> words;
            for (size_t w = 0; w < len; ++w)
                words.push_back("w" + std::to_string(l) + "x" + std::to_string(w));
            lex.word_lists[name] = words;
            names.push_back(name);
        }
        std::string hyp = "{{GROUP1}} are";
        for (const auto& n : names) hyp += " {{" + n + "}}";
        hyp += ".";
        auto t = make_template("t", "topic", "P.", hyp);
        const auto samples = expand({t}, lex);
        CHECK(samples.size() == product);
        std::set<std::string> unique;
        for (const auto& s : samples) unique.insert(s.hypothesis);
        CHECK(unique.size() == product);
    }
}

TEST_CASE("template file validation") {
    const auto dir = fs::temp_directory_path() / "nliaudit_tpl_test";
    fs::create_directories(dir);
    const auto path = dir / "templates.jsonl";
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << R"({"id":"a","domain":"d","subtopic":"t","premise_template":"P.",)"
            << R"("hypothesis_template":"H <MASK> and <MASK>.","stance":"pro_stereotype",)"
            << R"("source":"masked_variant"})" << "\n";
    }
    CHECK_THROWS_WITH_AS(read_templates(path), doctest::Contains("more than one mask"),
                         ParseError);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << R"({"id":"a","domain":"d","subtopic":"t","premise_template":"P <MASK>.",)"
            << R"("hypothesis_template":"H.","stance":"pro_stereotype",)"
            << R"("source":"masked_variant"})" << "\n";
    }
    CHECK_THROWS_WITH_AS(read_templates(path), doctest::Contains("premise"), ParseError);
}

TEST_CASE("fixture templates and lexicon load cleanly") {
    const auto templates = read_templates(fs::path(NLIAUDIT_FIXTURE_DIR) / "templates.jsonl");
    CHECK(templates.size() == 8);
    const auto lexicon = fixture_lexicon();
    CHECK(lexicon.word_lists.count("MJOB") == 1);
    CHECK(lexicon.group_pairs.count("Jewish_woman_is_to_kids") == 1);
    CHECK_NOTHROW(expand(templates, lexicon));
}

TEST_CASE("lexicon validation rejects duplicates and empty lists") {
    Lexicon lex;
    lex.word_lists["A"] = {"x", "x"};
    CHECK_THROWS_AS(lex.validate(), InvariantError);
    lex.word_lists["A"] = {};
    CHECK_THROWS_AS(lex.validate(), InvariantError);
}

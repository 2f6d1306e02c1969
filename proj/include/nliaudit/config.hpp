#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "nliaudit/backends.hpp"
#include "nliaudit/geneval.hpp"

namespace nliaudit {

struct RunConfig {
    std::vector<backends::BackendConfig> backends;
    int fill_k = 20;  // top-k mask candidates per hypothesis
    std::vector<std::string> dropped_subtopics;
    std::array<std::string, 2> annotators{"A", "B"};
    std::vector<geneval::PromptStyle> prompt_styles{geneval::PromptStyle::true_hypothesis,
                                                    geneval::PromptStyle::entailed_hypothesis};
    std::vector<geneval::ParseRule> parse_ruleset;  // empty -> default_ruleset()
    int top_categories_k = 4;

    struct Paths {
        std::filesystem::path templates;
        std::filesystem::path lexicon;
        std::filesystem::path out_dir = "out";
    } paths;

    std::uint64_t seed = 0;

    const std::vector<geneval::ParseRule>& effective_ruleset() const {
        return parse_ruleset.empty() ? geneval::default_ruleset() : parse_ruleset;
    }

    std::vector<const backends::BackendConfig*> backends_with_role(backends::BackendRole r) const;
    void validate() const;
};

// Relative paths in the file resolve against the config file's directory.
RunConfig load_config(const std::filesystem::path& path);

// Stable hash of the config file bytes; recorded into manifests so resumed
// runs can detect a changed configuration.
std::string config_file_hash(const std::filesystem::path& path);

}  // namespace nliaudit

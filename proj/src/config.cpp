#include "nliaudit/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "nliaudit/hash.hpp"

namespace nliaudit {

namespace {

using json = nlohmann::ordered_json;

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    if (path.is_absolute()) return path;
    return base / path;
}

}  // namespace

std::vector<const backends::BackendConfig*> RunConfig::backends_with_role(
    backends::BackendRole r) const {
    std::vector<const backends::BackendConfig*> out;
    for (const auto& b : backends)
        if (b.role == r) out.push_back(&b);
    return out;
}

void RunConfig::validate() const {
    std::set<std::string> names;
    for (const auto& b : backends) {
        b.validate();
        if (!names.insert(b.name).second)
            throw ConfigError("duplicate backend name \"" + b.name + "\"");
    }
    if (fill_k < 1) throw ConfigError("fill_k must be >= 1");
    if (top_categories_k < 1) throw ConfigError("top_categories_k must be >= 1");
    if (annotators[0].empty() || annotators[1].empty() || annotators[0] == annotators[1])
        throw ConfigError("annotators must be two distinct non-empty ids");
    if (prompt_styles.empty()) throw ConfigError("at least one prompt style is required");
    for (const auto& rule : parse_ruleset) {
        if (rule.pattern.empty()) throw ConfigError("parse rule with empty pattern");
        if (rule.verdict == geneval::Verdict::unparsed)
            throw ConfigError("parse rules must map to yes or no");
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    const std::filesystem::path base = path.has_parent_path()
                                           ? path.parent_path()
                                           : std::filesystem::path(".");

    RunConfig cfg;
    try {
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("fill_k")) cfg.fill_k = j.at("fill_k").get<int>();
        if (j.contains("top_categories_k"))
            cfg.top_categories_k = j.at("top_categories_k").get<int>();
        if (j.contains("dropped_subtopics"))
            cfg.dropped_subtopics = j.at("dropped_subtopics").get<std::vector<std::string>>();
        if (j.contains("annotators")) {
            const auto ids = j.at("annotators").get<std::vector<std::string>>();
            if (ids.size() != 2) throw ConfigError("annotators must list exactly two ids");
            cfg.annotators = {ids[0], ids[1]};
        }
        if (j.contains("prompt_styles")) {
            cfg.prompt_styles.clear();
            for (const auto& s : j.at("prompt_styles"))
                cfg.prompt_styles.push_back(
                    geneval::prompt_style_from_string(s.get<std::string>()));
        }
        if (j.contains("parse_ruleset")) {
            for (const auto& r : j.at("parse_ruleset")) {
                geneval::ParseRule rule;
                rule.pattern = r.at("pattern").get<std::string>();
                rule.verdict = geneval::verdict_from_string(r.at("verdict").get<std::string>());
                cfg.parse_ruleset.push_back(std::move(rule));
            }
        }
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            if (p.contains("templates"))
                cfg.paths.templates = resolve(base, p.at("templates").get<std::string>());
            if (p.contains("lexicon"))
                cfg.paths.lexicon = resolve(base, p.at("lexicon").get<std::string>());
            if (p.contains("out_dir"))
                cfg.paths.out_dir = resolve(base, p.at("out_dir").get<std::string>());
        }
        if (j.contains("backends")) {
            for (const auto& b : j.at("backends")) {
                backends::BackendConfig bc;
                bc.name = b.at("name").get<std::string>();
                bc.kind = backends::backend_kind_from_string(b.at("kind").get<std::string>());
                bc.role = backends::backend_role_from_string(b.at("role").get<std::string>());
                if (b.contains("endpoint")) bc.endpoint = b.at("endpoint").get<std::string>();
                if (b.contains("max_parallel")) bc.max_parallel = b.at("max_parallel").get<int>();
                if (b.contains("timeout_ms")) bc.timeout_ms = b.at("timeout_ms").get<int>();
                if (b.contains("replay_dir"))
                    bc.replay_dir = resolve(base, b.at("replay_dir").get<std::string>());
                if (b.contains("seed")) bc.seed = b.at("seed").get<std::uint64_t>();
                if (b.contains("neutral_bias")) bc.neutral_bias = b.at("neutral_bias").get<double>();
                if (b.contains("auth_env")) bc.auth_env = b.at("auth_env").get<std::string>();
                cfg.backends.push_back(std::move(bc));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string config_file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return to_hex(fnv1a64(buf.str()));
}

}  // namespace nliaudit

#include "nliaudit/manifest.hpp"

#include <fstream>
#include <map>

namespace nliaudit {

namespace {
using json = nlohmann::ordered_json;
}

Manifest Manifest::load_or_create(const std::filesystem::path& file, std::uint64_t seed,
                                  const std::string& config_hash) {
    if (!std::filesystem::exists(file)) return Manifest(seed, config_hash);
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + file.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(file.string() + ": " + e.what());
    }
    Manifest m(j.at("seed").get<std::uint64_t>(), j.at("config_hash").get<std::string>());
    if (m.seed_ != seed)
        throw ConfigError("out dir was produced with seed " + std::to_string(m.seed_) +
                          ", current run uses " + std::to_string(seed) +
                          "; use a fresh out dir");
    if (m.config_hash_ != config_hash)
        throw ConfigError("out dir was produced with a different config (hash " + m.config_hash_ +
                          "); use a fresh out dir");
    if (j.contains("stages")) {
        for (const auto& [name, sj] : j.at("stages").items()) {
            Stage s;
            s.status = sj.at("status").get<std::string>();
            if (sj.contains("counts")) s.counts = sj.at("counts");
            if (sj.contains("outputs"))
                s.outputs = sj.at("outputs").get<std::vector<std::string>>();
            if (sj.contains("error")) s.error = sj.at("error").get<std::string>();
            m.stages_[name] = std::move(s);
        }
    }
    return m;
}

bool Manifest::stage_complete(const std::string& name) const {
    auto it = stages_.find(name);
    return it != stages_.end() && it->second.status == "complete";
}

const Manifest::Stage* Manifest::stage(const std::string& name) const {
    auto it = stages_.find(name);
    return it == stages_.end() ? nullptr : &it->second;
}

void Manifest::record(const std::string& name, Stage stage) {
    stages_[name] = std::move(stage);
}

bool Manifest::up_to_date(const std::string& name, const std::filesystem::path& out_dir) const {
    const Stage* s = stage(name);
    if (!s || s->status != "complete") return false;
    for (const auto& f : s->outputs)
        if (!std::filesystem::exists(out_dir / f)) return false;
    return true;
}

void Manifest::save(const std::filesystem::path& file) const {
    json j;
    j["seed"] = seed_;
    j["config_hash"] = config_hash_;
    json stages = json::object();
    for (const auto& [name, s] : stages_) {  // std::map: stable key order
        json sj;
        sj["status"] = s.status;
        sj["counts"] = s.counts;
        sj["outputs"] = s.outputs;
        if (s.error) sj["error"] = *s.error;
        stages[name] = std::move(sj);
    }
    j["stages"] = stages;
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + file.string());
    out << j.dump(2) << '\n';
}

nlohmann::ordered_json count_by_subtopic(const std::vector<Sample>& samples) {
    std::map<std::string, std::int64_t> counts;
    for (const auto& s : samples) ++counts[s.domain + "/" + s.subtopic];
    json j = json::object();
    for (const auto& [key, n] : counts) j[key] = n;
    return j;
}

}  // namespace nliaudit

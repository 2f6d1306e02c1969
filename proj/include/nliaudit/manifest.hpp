#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nliaudit/core.hpp"

namespace nliaudit {

// Run manifest: per-stage status and bookkeeping counts, written after every
// stage so interrupted runs resume deterministically. Deliberately carries
// no timestamps or absolute paths — two identical runs must produce
// byte-identical manifests.
class Manifest {
public:
    struct Stage {
        std::string status;  // complete | failed
        nlohmann::ordered_json counts = nlohmann::ordered_json::object();
        std::vector<std::string> outputs;  // file names relative to the out dir
        std::optional<std::string> error;
    };

    Manifest(std::uint64_t seed, std::string config_hash)
        : seed_(seed), config_hash_(std::move(config_hash)) {}

    // Loads an existing manifest or starts a fresh one. A manifest written
    // under a different seed or config is refused.
    static Manifest load_or_create(const std::filesystem::path& file, std::uint64_t seed,
                                   const std::string& config_hash);

    bool stage_complete(const std::string& name) const;
    const Stage* stage(const std::string& name) const;
    void record(const std::string& name, Stage stage);

    // True when the stage is complete and all of its outputs still exist.
    bool up_to_date(const std::string& name, const std::filesystem::path& out_dir) const;

    void save(const std::filesystem::path& file) const;

    std::uint64_t seed() const { return seed_; }
    const std::string& config_hash() const { return config_hash_; }

private:
    std::uint64_t seed_;
    std::string config_hash_;
    std::map<std::string, Stage> stages_;
};

// "domain/subtopic" -> count, mirroring the per-stage dataset statistics.
nlohmann::ordered_json count_by_subtopic(const std::vector<Sample>& samples);

}  // namespace nliaudit

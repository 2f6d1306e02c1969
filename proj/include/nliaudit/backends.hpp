#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "nliaudit/core.hpp"

namespace nliaudit::backends {

enum class BackendKind { http, stub, replay };
enum class BackendRole { filter, holdout, fill, generate };

BackendKind backend_kind_from_string(std::string_view s);
BackendRole backend_role_from_string(std::string_view s);
std::string_view to_string(BackendKind kind);
std::string_view to_string(BackendRole role);

struct BackendConfig {
    std::string name;
    BackendKind kind = BackendKind::stub;
    std::optional<std::string> endpoint;   // required iff kind == http
    BackendRole role = BackendRole::filter;
    int max_parallel = 4;
    int timeout_ms = 30000;
    std::optional<std::filesystem::path> replay_dir;  // required iff kind == replay;
                                                      // write-through cache for http
    std::optional<std::uint64_t> seed;     // stub only; defaults from the run seed
    double neutral_bias = 0.5;             // stub NLI: weight of the neutral label
    std::optional<std::string> auth_env;   // env var holding a bearer token (http)

    void validate() const;
};

struct FillCandidate {
    std::string token;
    double score = 0.0;

    bool operator==(const FillCandidate&) const = default;
};

struct NliResult {
    NliLabel label = NliLabel::neutral;
    std::optional<std::array<double, 3>> scores;  // entailment, neutral, contradiction
};

// On-disk request/response cache. Records are keyed by a stable hash of the
// canonical request body, one JSON file per record.
class ReplayStore {
public:
    explicit ReplayStore(std::filesystem::path dir);

    std::optional<std::string> get(const std::string& request_key) const;
    void put(const std::string& request_key, const std::string& request_body,
             const std::string& response_body);

    static std::string key_for(const std::string& request_body);
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

// One model endpoint with the three capabilities the pipeline needs. The
// public methods enforce the shared contracts (mask arity, non-empty inputs,
// candidate hygiene with 2k over-fetch); subclasses only transport requests.
class Backend {
public:
    explicit Backend(BackendConfig config) : config_(std::move(config)) {}
    virtual ~Backend() = default;

    const BackendConfig& config() const { return config_; }
    const std::string& name() const { return config_.name; }

    // At most k candidates, descending score, deduplicated, never the mask
    // token, tokens restricted to whole words (letters/hyphens).
    std::vector<FillCandidate> fill_mask(const std::string& text, int k);
    NliResult classify_nli(const std::string& premise, const std::string& hypothesis);
    std::string generate(const std::string& prompt);

protected:
    virtual std::vector<FillCandidate> transport_fill_mask(const std::string& text, int k) = 0;
    virtual NliResult transport_classify_nli(const std::string& premise,
                                             const std::string& hypothesis) = 0;
    virtual std::string transport_generate(const std::string& prompt) = 0;

private:
    BackendConfig config_;
};

// Pure function of (seed, input); two runs with the same seed are identical.
class StubBackend final : public Backend {
public:
    StubBackend(BackendConfig config, std::uint64_t run_seed);

    std::uint64_t effective_seed() const { return seed_; }

protected:
    std::vector<FillCandidate> transport_fill_mask(const std::string& text, int k) override;
    NliResult transport_classify_nli(const std::string& premise,
                                     const std::string& hypothesis) override;
    std::string transport_generate(const std::string& prompt) override;

private:
    std::uint64_t seed_;
};

// Serves only what the store holds; an uncached request is an error, never a
// guess.
class ReplayBackend final : public Backend {
public:
    explicit ReplayBackend(BackendConfig config);

protected:
    std::vector<FillCandidate> transport_fill_mask(const std::string& text, int k) override;
    NliResult transport_classify_nli(const std::string& premise,
                                     const std::string& hypothesis) override;
    std::string transport_generate(const std::string& prompt) override;

private:
    std::string fetch(const std::string& request_body);
    ReplayStore store_;
};

// POST JSON client with 3 retry attempts (exponential backoff) and optional
// write-through into a replay store.
class HttpBackend final : public Backend {
public:
    explicit HttpBackend(BackendConfig config);

protected:
    std::vector<FillCandidate> transport_fill_mask(const std::string& text, int k) override;
    NliResult transport_classify_nli(const std::string& premise,
                                     const std::string& hypothesis) override;
    std::string transport_generate(const std::string& prompt) override;

private:
    std::string post(const std::string& path, const std::string& wire_body,
                     const std::string& canonical_body);
    std::unique_ptr<ReplayStore> cache_;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config, std::uint64_t run_seed);

// Canonical request bodies; these define the replay cache keys, so the byte
// layout must not drift.
std::string fill_mask_request(const std::string& text, int k);
std::string nli_request(const std::string& premise, const std::string& hypothesis);
std::string generate_request(const std::string& prompt);

NliResult parse_nli_response(const std::string& body, const std::string& backend_name);
std::vector<FillCandidate> parse_fill_response(const std::string& body,
                                               const std::string& backend_name);
std::string parse_generate_response(const std::string& body, const std::string& backend_name);

// Fan-out helper. Applies fn to every input under a bounded worker count and
// returns results in input order, so concurrency never affects output order.
// Failed items carry no result; the first failure (by input index) is
// reported so callers can persist partial progress.
template <typename T>
struct ParallelOutcome {
    std::vector<std::optional<T>> results;
    std::optional<std::string> first_error;

    bool ok() const { return !first_error; }
};

template <typename In, typename Fn>
auto parallel_map(const std::vector<In>& inputs, int max_parallel, Fn fn)
    -> ParallelOutcome<decltype(fn(inputs.front()))> {
    using Out = decltype(fn(inputs.front()));
    ParallelOutcome<Out> outcome;
    outcome.results.resize(inputs.size());
    if (inputs.empty()) return outcome;

    std::vector<std::string> errors(inputs.size());
    std::vector<char> failed(inputs.size(), 0);
    const size_t workers =
        std::min<size_t>(std::max(max_parallel, 1), inputs.size());
    std::atomic<size_t> next{0};
    auto run = [&] {
        for (size_t i = next.fetch_add(1); i < inputs.size(); i = next.fetch_add(1)) {
            try {
                outcome.results[i] = fn(inputs[i]);
            } catch (const std::exception& e) {
                failed[i] = 1;
                errors[i] = e.what();
            }
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (size_t w = 0; w < workers; ++w) threads.emplace_back(run);
        for (auto& t : threads) t.join();
    }
    for (size_t i = 0; i < inputs.size(); ++i) {
        if (failed[i]) {
            outcome.first_error = errors[i];
            break;
        }
    }
    return outcome;
}

}  // namespace nliaudit::backends

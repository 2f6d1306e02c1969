#include "nliaudit/backends.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <unordered_set>

#include <httplib.h>
#include <json.hpp>

#include "nliaudit/hash.hpp"
#include "nliaudit/templating.hpp"

namespace nliaudit::backends {

namespace {

using json = nlohmann::ordered_json;

constexpr int kRetryAttempts = 3;
constexpr int kRetryBaseDelayMs = 100;

// Whole word: letters, optionally hyphen-joined. Subword fragments ("##ing"),
// punctuation and numerals are rejected.
bool is_clean_token(const std::string& token) {
    if (token.empty()) return false;
    bool prev_hyphen = true;  // also rejects a leading hyphen
    for (char c : token) {
        if (c == '-') {
            if (prev_hyphen) return false;
            prev_hyphen = true;
        } else if (std::isalpha(static_cast<unsigned char>(c))) {
            prev_hyphen = false;
        } else {
            return false;
        }
    }
    return !prev_hyphen;
}

size_t count_masks(const std::string& text) {
    size_t n = 0;
    for (size_t pos = text.find(templating::kMaskToken); pos != std::string::npos;
         pos = text.find(templating::kMaskToken, pos + templating::kMaskToken.size()))
        ++n;
    return n;
}

}  // namespace

BackendKind backend_kind_from_string(std::string_view s) {
    if (s == "http") return BackendKind::http;
    if (s == "stub") return BackendKind::stub;
    if (s == "replay") return BackendKind::replay;
    throw ConfigError("unknown backend kind: \"" + std::string(s) + "\"");
}

BackendRole backend_role_from_string(std::string_view s) {
    if (s == "filter") return BackendRole::filter;
    if (s == "holdout") return BackendRole::holdout;
    if (s == "fill") return BackendRole::fill;
    if (s == "generate") return BackendRole::generate;
    throw ConfigError("unknown backend role: \"" + std::string(s) + "\"");
}

std::string_view to_string(BackendKind kind) {
    switch (kind) {
        case BackendKind::http: return "http";
        case BackendKind::stub: return "stub";
        case BackendKind::replay: return "replay";
    }
    return "stub";
}

std::string_view to_string(BackendRole role) {
    switch (role) {
        case BackendRole::filter: return "filter";
        case BackendRole::holdout: return "holdout";
        case BackendRole::fill: return "fill";
        case BackendRole::generate: return "generate";
    }
    return "filter";
}

void BackendConfig::validate() const {
    if (name.empty()) throw ConfigError("backend has no name");
    if (kind == BackendKind::http && (!endpoint || endpoint->empty()))
        throw ConfigError("backend \"" + name + "\": http kind requires an endpoint");
    if (kind != BackendKind::http && endpoint)
        throw ConfigError("backend \"" + name + "\": endpoint is only valid for http kind");
    if (kind == BackendKind::replay && !replay_dir)
        throw ConfigError("backend \"" + name + "\": replay kind requires replay_dir");
    if (max_parallel < 1)
        throw ConfigError("backend \"" + name + "\": max_parallel must be >= 1");
    if (timeout_ms < 1) throw ConfigError("backend \"" + name + "\": timeout must be positive");
    if (neutral_bias < 0.0 || neutral_bias > 1.0)
        throw ConfigError("backend \"" + name + "\": neutral_bias must be in [0,1]");
}

// ---------------------------------------------------------------------------
// Canonical request bodies
// ---------------------------------------------------------------------------

std::string fill_mask_request(const std::string& text, int k) {
    json j;
    j["op"] = "fill-mask";
    j["text"] = text;
    j["top_k"] = k;
    return j.dump();
}

std::string nli_request(const std::string& premise, const std::string& hypothesis) {
    json j;
    j["op"] = "nli";
    j["premise"] = premise;
    j["hypothesis"] = hypothesis;
    return j.dump();
}

std::string generate_request(const std::string& prompt) {
    json j;
    j["op"] = "generate";
    j["prompt"] = prompt;
    j["greedy"] = true;
    return j.dump();
}

std::vector<FillCandidate> parse_fill_response(const std::string& body,
                                               const std::string& backend_name) {
    json j;
    try {
        j = json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("backend " + backend_name + ": malformed fill-mask response: " +
                           e.what());
    }
    if (!j.contains("candidates") || !j.at("candidates").is_array())
        throw BackendError("backend " + backend_name +
                           ": fill-mask response has no candidates array");
    std::vector<FillCandidate> out;
    for (const auto& c : j.at("candidates")) {
        if (!c.contains("token") || !c.contains("score"))
            throw BackendError("backend " + backend_name + ": candidate missing token or score");
        FillCandidate fc{c.at("token").get<std::string>(), c.at("score").get<double>()};
        if (fc.score < 0.0 || fc.score > 1.0)
            throw BackendError("backend " + backend_name + ": candidate score " +
                               std::to_string(fc.score) + " outside [0,1]");
        out.push_back(std::move(fc));
    }
    return out;
}

NliResult parse_nli_response(const std::string& body, const std::string& backend_name) {
    json j;
    try {
        j = json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("backend " + backend_name + ": malformed nli response: " + e.what());
    }
    if (!j.contains("label") || !j.at("label").is_string())
        throw BackendError("backend " + backend_name + ": nli response has no label");
    NliResult r;
    try {
        r.label = nli_label_from_string(j.at("label").get<std::string>());
    } catch (const ParseError& e) {
        throw BackendError("backend " + backend_name + ": " + e.what());
    }
    if (j.contains("scores") && !j.at("scores").is_null()) {
        const auto& sc = j.at("scores");
        if (!sc.contains("entailment") || !sc.contains("neutral") || !sc.contains("contradiction"))
            throw BackendError("backend " + backend_name +
                               ": nli scores must carry entailment/neutral/contradiction");
        r.scores = {{sc.at("entailment").get<double>(), sc.at("neutral").get<double>(),
                     sc.at("contradiction").get<double>()}};
    }
    return r;
}

std::string parse_generate_response(const std::string& body, const std::string& backend_name) {
    json j;
    try {
        j = json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("backend " + backend_name + ": malformed generate response: " +
                           e.what());
    }
    if (!j.contains("text") || !j.at("text").is_string())
        throw BackendError("backend " + backend_name + ": generate response has no text");
    return j.at("text").get<std::string>();
}

// ---------------------------------------------------------------------------
// Backend base: shared contracts
// ---------------------------------------------------------------------------

std::vector<FillCandidate> Backend::fill_mask(const std::string& text, int k) {
    if (k < 1 || k > 1000000)
        throw InvariantError("fill_mask: k must be in [1, 1000000], got " + std::to_string(k));
    const size_t masks = count_masks(text);
    if (masks != 1)
        throw InvariantError("fill_mask: text must contain exactly one mask token, found " +
                             std::to_string(masks));
    // Over-fetch so candidate hygiene can still honor k.
    auto raw = transport_fill_mask(text, 2 * k);
    std::stable_sort(raw.begin(), raw.end(),
                     [](const FillCandidate& a, const FillCandidate& b) { return a.score > b.score; });
    std::vector<FillCandidate> out;
    std::unordered_set<std::string> seen;
    for (auto& c : raw) {
        if (static_cast<int>(out.size()) == k) break;
        if (c.token == templating::kMaskToken) continue;
        if (!is_clean_token(c.token)) continue;
        if (!seen.insert(c.token).second) continue;
        out.push_back(std::move(c));
    }
    return out;
}

NliResult Backend::classify_nli(const std::string& premise, const std::string& hypothesis) {
    if (premise.empty() || hypothesis.empty())
        throw InvariantError("classify_nli: premise and hypothesis must be non-empty");
    return transport_classify_nli(premise, hypothesis);
}

std::string Backend::generate(const std::string& prompt) {
    if (prompt.empty()) throw InvariantError("generate: prompt must be non-empty");
    return transport_generate(prompt);
}

// ---------------------------------------------------------------------------
// Stub
// ---------------------------------------------------------------------------

namespace {

// Vocabulary for deterministic fill-in; plain lowercase words so candidate
// hygiene always passes.
const std::vector<std::string>& stub_vocabulary() {
    static const std::vector<std::string> words = {
        "equipped",  "prepared", "suited",    "trained",   "qualified", "rated",
        "regarded",  "paid",     "treated",   "performing", "doing",    "faring",
        "competent", "capable",  "talented",  "skilled",   "effective", "productive",
        "motivated", "ambitious", "confident", "assertive", "reliable",  "dedicated",
        "valued",    "respected", "promoted",  "hired",     "ranked",    "reviewed",
        "supported", "mentored",  "funded",    "educated",  "experienced", "prominent",
        "visible",   "common",    "frequent",  "typical",   "likely",    "expected",
        "popular",   "successful", "notable",  "numerous",  "present",   "active",
        "engaged",   "involved",  "employed",  "represented", "studied", "measured",
        "counted",   "observed",  "reported",  "described", "portrayed", "perceived",
        "viewed",    "seen",      "judged",    "assessed"};
    return words;
}

std::uint64_t mix(std::uint64_t seed, std::string_view tag, std::string_view a,
                  std::string_view b = {}) {
    return fnv1a64_fields({tag, a, b}, seed ^ 0x9e3779b97f4a7c15ull);
}

}  // namespace

StubBackend::StubBackend(BackendConfig config, std::uint64_t run_seed)
    : Backend(std::move(config)) {
    seed_ = this->config().seed ? *this->config().seed
                                : fnv1a64(this->config().name, run_seed ^ 0xa5a5a5a5a5a5a5a5ull);
}

std::vector<FillCandidate> StubBackend::transport_fill_mask(const std::string& text, int k) {
    const auto& vocab = stub_vocabulary();
    const std::uint64_t h = mix(seed_, "fill", text);
    std::vector<FillCandidate> out;
    std::unordered_set<size_t> used;
    const size_t want = std::min<size_t>(static_cast<size_t>(k), vocab.size());
    for (size_t i = 0; out.size() < want; ++i) {
        size_t idx = static_cast<size_t>((h >> (i % 48)) + i * 0x9e37u) % vocab.size();
        while (used.count(idx)) idx = (idx + 1) % vocab.size();
        used.insert(idx);
        const double score =
            static_cast<double>(want - out.size()) / static_cast<double>(want + 1);
        out.push_back({vocab[idx], score});
    }
    return out;
}

NliResult StubBackend::transport_classify_nli(const std::string& premise,
                                              const std::string& hypothesis) {
    const std::uint64_t h = mix(seed_, "nli", premise, hypothesis);
    const double u = static_cast<double>(h % 100000ull) / 100000.0;
    NliResult r;
    if (u < config().neutral_bias) {
        r.label = NliLabel::neutral;
    } else {
        r.label = ((h >> 17) & 1) ? NliLabel::entailment : NliLabel::contradiction;
    }
    std::array<double, 3> scores{0.15, 0.15, 0.15};
    scores[r.label == NliLabel::entailment ? 0 : r.label == NliLabel::neutral ? 1 : 2] = 0.70;
    r.scores = scores;
    return r;
}

std::string StubBackend::transport_generate(const std::string& prompt) {
    const std::uint64_t h = mix(seed_, "generate", prompt);
    return ((h >> 23) & 1) ? "Yes.\n\nBecause the stub says so."
                           : "No.\n\nBecause the stub says so.";
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

ReplayStore::ReplayStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::string ReplayStore::key_for(const std::string& request_body) {
    return to_hex(fnv1a64(request_body));
}

std::optional<std::string> ReplayStore::get(const std::string& request_key) const {
    std::lock_guard<std::mutex> lock(mutex_);
    const auto path = dir_ / (request_key + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    json j;
    try {
        j = json::parse(in);
    } catch (const nlohmann::json::exception&) {
        return std::nullopt;
    }
    if (!j.contains("response")) return std::nullopt;
    return j.at("response").dump();
}

void ReplayStore::put(const std::string& request_key, const std::string& request_body,
                      const std::string& response_body) {
    std::lock_guard<std::mutex> lock(mutex_);
    json j;
    j["request"] = json::parse(request_body);
    j["response"] = json::parse(response_body);
    const auto path = dir_ / (request_key + ".json");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write replay record " + path.string());
    out << j.dump(2) << '\n';
}

ReplayBackend::ReplayBackend(BackendConfig config)
    : Backend(std::move(config)), store_(*this->config().replay_dir) {}

std::string ReplayBackend::fetch(const std::string& request_body) {
    const std::string key = ReplayStore::key_for(request_body);
    auto cached = store_.get(key);
    if (!cached)
        throw BackendError("backend " + name() + ": replay cache miss for request " + key +
                           " (" + request_body + ")");
    return *cached;
}

std::vector<FillCandidate> ReplayBackend::transport_fill_mask(const std::string& text, int k) {
    return parse_fill_response(fetch(fill_mask_request(text, k)), name());
}

NliResult ReplayBackend::transport_classify_nli(const std::string& premise,
                                                const std::string& hypothesis) {
    return parse_nli_response(fetch(nli_request(premise, hypothesis)), name());
}

std::string ReplayBackend::transport_generate(const std::string& prompt) {
    return parse_generate_response(fetch(generate_request(prompt)), name());
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(BackendConfig config) : Backend(std::move(config)) {
    if (this->config().replay_dir)
        cache_ = std::make_unique<ReplayStore>(*this->config().replay_dir);
}

// The canonical body (with the op tag) keys the write-through cache; the
// wire body is what actually goes over HTTP.
std::string HttpBackend::post(const std::string& path, const std::string& wire_body,
                              const std::string& canonical_body) {
    const std::string key = ReplayStore::key_for(canonical_body);
    if (cache_) {
        if (auto cached = cache_->get(key)) return *cached;
    }

    std::string last_error;
    for (int attempt = 0; attempt < kRetryAttempts; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(
                std::chrono::milliseconds(kRetryBaseDelayMs << (attempt - 1)));
        // httplib clients are not safe for concurrent requests; one per call.
        httplib::Client client(*config().endpoint);
        const auto timeout = std::chrono::milliseconds(config().timeout_ms);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        httplib::Headers headers;
        if (config().auth_env) {
            if (const char* token = std::getenv(config().auth_env->c_str()))
                headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        auto res = client.Post(path, headers, wire_body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw BackendError("backend " + name() + ": " + path + " returned HTTP " +
                               std::to_string(res->status));
        if (cache_) cache_->put(key, canonical_body, res->body);
        return res->body;
    }
    throw BackendError("backend " + name() + ": " + path + " failed after " +
                       std::to_string(kRetryAttempts) + " attempts: " + last_error);
}

std::vector<FillCandidate> HttpBackend::transport_fill_mask(const std::string& text, int k) {
    json j;
    j["text"] = text;
    j["top_k"] = k;
    const std::string body = post("/fill-mask", j.dump(), fill_mask_request(text, k));
    return parse_fill_response(body, name());
}

NliResult HttpBackend::transport_classify_nli(const std::string& premise,
                                              const std::string& hypothesis) {
    json j;
    j["premise"] = premise;
    j["hypothesis"] = hypothesis;
    const std::string body = post("/nli", j.dump(), nli_request(premise, hypothesis));
    return parse_nli_response(body, name());
}

std::string HttpBackend::transport_generate(const std::string& prompt) {
    json j;
    j["prompt"] = prompt;
    j["greedy"] = true;
    const std::string body = post("/generate", j.dump(), generate_request(prompt));
    return parse_generate_response(body, name());
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config, std::uint64_t run_seed) {
    config.validate();
    switch (config.kind) {
        case BackendKind::stub: return std::make_unique<StubBackend>(config, run_seed);
        case BackendKind::replay: return std::make_unique<ReplayBackend>(config);
        case BackendKind::http: return std::make_unique<HttpBackend>(config);
    }
    throw ConfigError("unreachable backend kind");
}

}  // namespace nliaudit::backends

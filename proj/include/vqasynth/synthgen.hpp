#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqasynth/corpus.hpp"
#include "vqasynth/error.hpp"
#include "vqasynth/promptkit.hpp"

namespace vqasynth::synth {

// ---------------------------------------------------------------------------
// Frame plans

struct FramePlan {
    std::string video_id;
    long total_frames = 0;
    long sample_count = 0;
    std::vector<long> indices;
};

// indices[t] = floor(t * total_frames / sample_count), clamped to the last
// frame. Throws Error{Validation} for non-positive inputs.
FramePlan plan_frames(long total_frames, long sample_count, std::string video_id = {});

// ---------------------------------------------------------------------------
// Requests and records

struct GenerationRequest {
    prompt::RenderedPrompt prompt;
    std::optional<FramePlan> frame_plan;  // present iff prompt.kind == QBC
    std::string video_uri;                // frame-reference target for QBC
    std::string model_id;
    double temperature = 0.0;
    int max_output_words = 250;
};

void validate(const GenerationRequest& request);

// Hash of (model_id, prompt_hash, frame indices, temperature).
std::string cache_key(const GenerationRequest& request);

struct NarrativeRecord {
    std::string dataset_id;
    std::string video_id;
    std::string video_uri;
    std::string text;
    std::vector<std::string> source_qids;
    std::string model_id;
    std::string prompt_hash;
    std::string created_at;

    std::string record_id() const { return dataset_id + "/" + video_id; }
};

struct RationaleRecord {
    std::string dataset_id;
    std::string video_id;
    std::string video_uri;
    std::string qid;
    std::string question;
    std::string answer;
    std::string text;
    std::string model_id;
    std::string prompt_hash;
    std::string created_at;

    std::string record_id() const { return dataset_id + "/" + video_id + "/" + qid; }
};

nlohmann::ordered_json to_json(const NarrativeRecord& r);
nlohmann::ordered_json to_json(const RationaleRecord& r);
NarrativeRecord narrative_from_json(const nlohmann::ordered_json& j);
RationaleRecord rationale_from_json(const nlohmann::ordered_json& j);

void write_narratives(const std::filesystem::path& path, std::span<const NarrativeRecord> records);
void write_rationales(const std::filesystem::path& path, std::span<const RationaleRecord> records);
std::vector<NarrativeRecord> read_narratives(const std::filesystem::path& path);
std::vector<RationaleRecord> read_rationales(const std::filesystem::path& path);

std::string utc_timestamp();

// ---------------------------------------------------------------------------
// Backends

class BackendError : public Error {
public:
    BackendError(const std::string& message, bool retryable, int status = 0,
                 std::optional<std::chrono::milliseconds> retry_after = std::nullopt)
        : Error(ErrorKind::Backend, message), retryable_(retryable), status_(status), retry_after_(retry_after) {}

    bool retryable() const noexcept { return retryable_; }
    int status() const noexcept { return status_; }
    std::optional<std::chrono::milliseconds> retry_after() const noexcept { return retry_after_; }

private:
    bool retryable_;
    int status_;
    std::optional<std::chrono::milliseconds> retry_after_;
};

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    // Returns the generated text or throws BackendError. Must be safe to call
    // from several threads at once.
    virtual std::string generate(const GenerationRequest& request) = 0;
};

// Replay backend keyed by prompt hash. Tracks every call so tests can assert
// call counts and the peak number of concurrent calls.
class MockBackend : public GenerationBackend {
public:
    enum class OnMissing { Fail, Synthetic };

    struct Options {
        OnMissing on_missing = OnMissing::Fail;
        // Prompt hashes that always fail with a retryable error.
        std::set<std::string> poisoned;
        std::chrono::microseconds latency{0};
        // Invoked after each call with the 1-based call number.
        std::function<void(std::size_t)> on_call;
    };

    MockBackend() : MockBackend({}, Options{}) {}
    MockBackend(std::map<std::string, std::string> replay, Options options);

    // Replay file: JSON object {prompt_hash: text} or {"responses": {...}}.
    static std::map<std::string, std::string> load_replay(const std::filesystem::path& path);

    std::string generate(const GenerationRequest& request) override;

    std::size_t calls() const;
    std::size_t max_in_flight() const { return max_in_flight_.load(); }
    std::vector<std::string> call_log() const;

    // Deterministic stand-in text used when a hash has no canned response.
    static std::string synthetic_text(const GenerationRequest& request);

private:
    std::map<std::string, std::string> replay_;
    Options options_;
    mutable std::mutex mu_;
    std::vector<std::string> log_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
};

// Wraps a live backend and captures every successful response so the run can
// be replayed later through MockBackend.
class RecordingBackend : public GenerationBackend {
public:
    explicit RecordingBackend(GenerationBackend& inner) : inner_(inner) {}

    std::string generate(const GenerationRequest& request) override;
    void save(const std::filesystem::path& path) const;
    std::map<std::string, std::string> recorded() const;

private:
    GenerationBackend& inner_;
    mutable std::mutex mu_;
    std::map<std::string, std::string> recorded_;
};

// Chat-completion client. Body:
//   {"model", "messages": [{"role": "user", "content": ...}], "temperature", "max_tokens"}
// QBC requests send content parts: the prompt text plus a frame reference
// (video URI and frame indices). The reply is choices[0].message.content.
struct HttpBackendConfig {
    std::string endpoint;  // e.g. https://api.example.com/v1/chat/completions
    std::string api_key;
    std::chrono::seconds timeout{120};
    // max_tokens sent = ceil(max_output_words * tokens_per_word)
    double tokens_per_word = 2.0;
};

class HttpBackend : public GenerationBackend {
public:
    explicit HttpBackend(HttpBackendConfig config);
    std::string generate(const GenerationRequest& request) override;

    static nlohmann::json request_body(const GenerationRequest& request, double tokens_per_word);
    static std::string parse_response(const std::string& body);

private:
    HttpBackendConfig config_;
    std::string scheme_host_port_;
    std::string path_;
};

// ---------------------------------------------------------------------------
// Retry policy

struct RetryPolicy {
    int max_attempts = 5;
    std::chrono::milliseconds base{1000};
    std::chrono::milliseconds cap{60000};
};

// Full jitter: uniform in [0, min(cap, base * 2^(failed_attempts - 1))].
std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int failed_attempts, double unit_draw);

// ---------------------------------------------------------------------------
// Cache

struct CacheEntry {
    std::string text;
    std::string created_at;
};

// One JSON file per cache key under <dir>/<key[0:2]>/<key>.json.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);
    std::optional<CacheEntry> get(const std::string& key) const;
    void put(const std::string& key, const CacheEntry& entry) const;

private:
    std::filesystem::path path_for(const std::string& key) const;
    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Job state

struct JobState {
    std::string job_id;
    prompt::Kind kind = prompt::Kind::QBP;
    std::set<std::string> pending;
    std::set<std::string> done;
    std::set<std::string> failed;
    std::map<std::string, int> attempt_counts;

    // pending, done, failed pairwise disjoint.
    bool consistent() const;
};

struct CompletedItem {
    std::string text;
    std::string created_at;
};

// Append-only journal at <dir>/<job_id>.journal.jsonl. The first line fixes
// the work set; each later line records one item reaching done or failed.
class JobStore {
public:
    explicit JobStore(std::filesystem::path dir);

    bool exists(const std::string& job_id) const;
    std::filesystem::path journal_path(const std::string& job_id) const;

    // Starts a fresh journal. Throws Error{State} if one already exists.
    JobState create(const std::string& job_id, prompt::Kind kind, const std::vector<std::string>& work);

    // Rebuilds state by replaying the journal. Any unparsable or inconsistent
    // line is an Error{State}; there is no silent restart.
    JobState resume(const std::string& job_id) const;
    JobState resume(const std::string& job_id, std::map<std::string, CompletedItem>& completed) const;

    // Serialized appends; safe to call from worker threads.
    void record_done(const std::string& job_id, const std::string& key, int attempts, const CompletedItem& item);
    void record_failed(const std::string& job_id, const std::string& key, int attempts, const std::string& error);

private:
    void append(const std::string& job_id, const std::string& line);
    std::filesystem::path dir_;
    std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Orchestration

struct SynthConfig {
    std::string model_id = "unset-model";
    double temperature = 0.0;
    int max_output_words_qbp = 250;
    int max_output_words_qbc = 400;
    int concurrency = 4;
    RetryPolicy retry;
    std::optional<std::filesystem::path> cache_dir;
    // Enables resumable runs; the journal lives here.
    std::optional<std::filesystem::path> state_dir;
    std::optional<std::string> job_id;  // derived from the work set when absent
    long sample_count = 16;
    long default_total_frames = 16;
    std::map<std::string, long> frame_counts;  // video_id -> total frames
    // Drop QA pairs whose normalized (question, answer) repeats an earlier
    // pair of the same group before rendering the QBP prompt.
    bool pre_dedup = false;
    std::uint64_t jitter_seed = 0;
    std::function<void(std::chrono::milliseconds)> sleep;  // defaults to sleep_for
    const std::atomic<bool>* stop = nullptr;               // graceful interruption
};

template <typename Record>
struct SynthRun {
    std::vector<Record> records;  // input order, done items only
    JobState state;
    std::size_t backend_calls = 0;
    std::size_t cache_hits = 0;
    bool interrupted = false;
};

using QbpRun = SynthRun<NarrativeRecord>;
using QbcRun = SynthRun<RationaleRecord>;

std::string qbp_work_key(const corpus::QuestionGroup& group);
std::string qbc_work_key(const corpus::QaPair& pair);

// Drops exact normalized (question, answer) repeats, keeping the first.
corpus::QuestionGroup dedup_group(const corpus::QuestionGroup& group);

QbpRun synthesize_qbp(std::span<const corpus::QuestionGroup> groups, GenerationBackend& backend,
                      const prompt::PromptRenderer& renderer, const SynthConfig& config);

QbcRun synthesize_qbc(std::span<const corpus::QaPair> pairs, GenerationBackend& backend,
                      const prompt::PromptRenderer& renderer, const SynthConfig& config);

}  // namespace vqasynth::synth

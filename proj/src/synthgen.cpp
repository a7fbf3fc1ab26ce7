#include "vqasynth/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "vqasynth/evalharness.hpp"
#include "vqasynth/hash.hpp"
#include "vqasynth/jsonl.hpp"
#include "vqasynth/rng.hpp"
#include "vqasynth/text.hpp"

namespace vqasynth::synth {

using nlohmann::ordered_json;

FramePlan plan_frames(long total_frames, long sample_count, std::string video_id) {
    if (total_frames < 1) throw Error(ErrorKind::Validation, "total_frames must be >= 1");
    if (sample_count < 1) throw Error(ErrorKind::Validation, "sample_count must be >= 1");
    FramePlan plan{std::move(video_id), total_frames, sample_count, {}};
    plan.indices.reserve(static_cast<std::size_t>(sample_count));
    for (long t = 0; t < sample_count; ++t) {
        const auto idx = static_cast<long>((static_cast<__int128>(t) * total_frames) / sample_count);
        plan.indices.push_back(std::min(idx, total_frames - 1));
    }
    return plan;
}

void validate(const GenerationRequest& request) {
    const bool qbc = request.prompt.kind == prompt::Kind::QBC;
    if (qbc && !request.frame_plan) throw Error(ErrorKind::Validation, "QBC request requires a frame plan");
    if (!qbc && request.frame_plan) throw Error(ErrorKind::Validation, "QBP requests are text-only");
    if (request.temperature < 0.0) throw Error(ErrorKind::Validation, "temperature must be >= 0");
    if (request.max_output_words < 1) throw Error(ErrorKind::Validation, "max_output_words must be >= 1");
}

std::string cache_key(const GenerationRequest& request) {
    std::string material = request.model_id;
    material.push_back('\0');
    material += request.prompt.prompt_hash;
    material.push_back('\0');
    if (request.frame_plan)
        for (std::size_t i = 0; i < request.frame_plan->indices.size(); ++i) {
            if (i) material.push_back(',');
            material += std::to_string(request.frame_plan->indices[i]);
        }
    material.push_back('\0');
    material += fmt::format("{:.6f}", request.temperature);
    return sha256_hex(material);
}

std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// --- records -------------------------------------------------------------------

ordered_json to_json(const NarrativeRecord& r) {
    ordered_json j;
    j["dataset"] = r.dataset_id;
    j["video_id"] = r.video_id;
    j["video_uri"] = r.video_uri;
    j["text"] = r.text;
    j["source_qids"] = r.source_qids;
    j["model_id"] = r.model_id;
    j["prompt_hash"] = r.prompt_hash;
    j["created_at"] = r.created_at;
    return j;
}

ordered_json to_json(const RationaleRecord& r) {
    ordered_json j;
    j["dataset"] = r.dataset_id;
    j["video_id"] = r.video_id;
    j["video_uri"] = r.video_uri;
    j["qid"] = r.qid;
    j["question"] = r.question;
    j["answer"] = r.answer;
    j["text"] = r.text;
    j["model_id"] = r.model_id;
    j["prompt_hash"] = r.prompt_hash;
    j["created_at"] = r.created_at;
    return j;
}

NarrativeRecord narrative_from_json(const ordered_json& j) {
    NarrativeRecord r;
    r.dataset_id = j.at("dataset").get<std::string>();
    r.video_id = j.at("video_id").get<std::string>();
    r.video_uri = j.at("video_uri").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.source_qids = j.at("source_qids").get<std::vector<std::string>>();
    r.model_id = j.at("model_id").get<std::string>();
    r.prompt_hash = j.at("prompt_hash").get<std::string>();
    r.created_at = j.value("created_at", "");
    return r;
}

RationaleRecord rationale_from_json(const ordered_json& j) {
    RationaleRecord r;
    r.dataset_id = j.at("dataset").get<std::string>();
    r.video_id = j.at("video_id").get<std::string>();
    r.video_uri = j.at("video_uri").get<std::string>();
    r.qid = j.at("qid").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.text = j.at("text").get<std::string>();
    r.model_id = j.at("model_id").get<std::string>();
    r.prompt_hash = j.at("prompt_hash").get<std::string>();
    r.created_at = j.value("created_at", "");
    return r;
}

namespace {
template <typename Record>
void write_records(const std::filesystem::path& path, std::span<const Record> records) {
    std::vector<std::string> lines;
    lines.reserve(records.size());
    for (const auto& r : records) lines.push_back(jsonl::dump(to_json(r)));
    jsonl::write_lines_atomic(path, lines);
}

template <typename Record, typename Fn>
std::vector<Record> read_records_checked(const std::filesystem::path& path, Fn from_json) {
    std::vector<Record> out;
    for (const auto& line : jsonl::read_lines(path)) {
        try {
            out.push_back(from_json(jsonl::parse_line(line, path)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, fmt::format("{}:{}: {}", path.string(), line.number, e.what()));
        }
    }
    return out;
}
}  // namespace

void write_narratives(const std::filesystem::path& path, std::span<const NarrativeRecord> records) {
    write_records(path, records);
}
void write_rationales(const std::filesystem::path& path, std::span<const RationaleRecord> records) {
    write_records(path, records);
}
std::vector<NarrativeRecord> read_narratives(const std::filesystem::path& path) {
    return read_records_checked<NarrativeRecord>(path, narrative_from_json);
}
std::vector<RationaleRecord> read_rationales(const std::filesystem::path& path) {
    return read_records_checked<RationaleRecord>(path, rationale_from_json);
}

// --- mock backend -------------------------------------------------------------------

MockBackend::MockBackend(std::map<std::string, std::string> replay, Options options)
    : replay_(std::move(replay)), options_(std::move(options)) {}

std::map<std::string, std::string> MockBackend::load_replay(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(jsonl::read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, "replay file " + path.string() + ": " + e.what());
    }
    if (j.contains("responses")) j = j["responses"];
    if (!j.is_object()) throw Error(ErrorKind::Parse, "replay file must map prompt hashes to text");
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : j.items()) out[k] = v.get<std::string>();
    return out;
}

std::string MockBackend::synthetic_text(const GenerationRequest& request) {
    const auto& p = request.prompt;
    if (p.kind == prompt::Kind::QBP)
        return fmt::format("A synthetic narrative integrating {} question-answer pairs for prompt {}.",
                           p.source_ids.size(), p.prompt_hash.substr(0, 12));
    return fmt::format("A synthetic visual rationale describing frames {} to {} of the clip for prompt {}.",
                       request.frame_plan ? request.frame_plan->indices.front() : 0,
                       request.frame_plan ? request.frame_plan->indices.back() : 0, p.prompt_hash.substr(0, 12));
}

std::string MockBackend::generate(const GenerationRequest& request) {
    const int now = ++in_flight_;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
        std::atomic<int>& n;
        ~Leave() { --n; }
    } leave{in_flight_};

    std::size_t call_no = 0;
    {
        std::lock_guard lock(mu_);
        log_.push_back(request.prompt.prompt_hash);
        call_no = log_.size();
    }
    if (options_.latency.count() > 0) std::this_thread::sleep_for(options_.latency);
    if (options_.on_call) options_.on_call(call_no);

    if (options_.poisoned.count(request.prompt.prompt_hash))
        throw BackendError("mock: poisoned prompt " + request.prompt.prompt_hash, true, 503);
    if (auto it = replay_.find(request.prompt.prompt_hash); it != replay_.end()) return it->second;
    if (options_.on_missing == OnMissing::Synthetic) return synthetic_text(request);
    throw BackendError("mock: no replay entry for prompt " + request.prompt.prompt_hash, false, 404);
}

std::size_t MockBackend::calls() const {
    std::lock_guard lock(mu_);
    return log_.size();
}

std::vector<std::string> MockBackend::call_log() const {
    std::lock_guard lock(mu_);
    return log_;
}

std::string RecordingBackend::generate(const GenerationRequest& request) {
    auto text = inner_.generate(request);
    std::lock_guard lock(mu_);
    recorded_[request.prompt.prompt_hash] = text;
    return text;
}

std::map<std::string, std::string> RecordingBackend::recorded() const {
    std::lock_guard lock(mu_);
    return recorded_;
}

void RecordingBackend::save(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    j["responses"] = recorded();
    jsonl::write_text_atomic(path, j.dump(2) + "\n");
}

// --- retry ----------------------------------------------------------------------------

std::chrono::milliseconds backoff_delay(const RetryPolicy& policy, int failed_attempts, double unit_draw) {
    const int shift = std::clamp(failed_attempts - 1, 0, 30);
    const double ceiling =
        std::min(static_cast<double>(policy.cap.count()), static_cast<double>(policy.base.count()) * std::ldexp(1.0, shift));
    return std::chrono::milliseconds(static_cast<long long>(std::floor(unit_draw * ceiling)));
}

// --- cache ------------------------------------------------------------------------------

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<CacheEntry> ResponseCache::get(const std::string& key) const {
    const auto p = path_for(key);
    if (!std::filesystem::exists(p)) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(jsonl::read_text(p));
        return CacheEntry{j.at("text").get<std::string>(), j.value("created_at", "")};
    } catch (const nlohmann::json::exception& e) {
        spdlog::warn("ignoring unreadable cache entry {}: {}", p.string(), e.what());
        return std::nullopt;
    }
}

void ResponseCache::put(const std::string& key, const CacheEntry& entry) const {
    nlohmann::ordered_json j;
    j["text"] = entry.text;
    j["created_at"] = entry.created_at;
    const auto p = path_for(key);
    // Unique temp name per thread: two workers may race on identical prompts.
    auto tmp = p;
    tmp += fmt::format(".{}.tmp", std::hash<std::thread::id>{}(std::this_thread::get_id()));
    std::filesystem::create_directories(p.parent_path());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write cache entry " + tmp.string());
        out << jsonl::dump(j);
    }
    std::filesystem::rename(tmp, p);
}

// --- job state ---------------------------------------------------------------------------

bool JobState::consistent() const {
    for (const auto& k : pending)
        if (done.count(k) || failed.count(k)) return false;
    for (const auto& k : done)
        if (failed.count(k)) return false;
    return true;
}

JobStore::JobStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

std::filesystem::path JobStore::journal_path(const std::string& job_id) const {
    return dir_ / (job_id + ".journal.jsonl");
}

bool JobStore::exists(const std::string& job_id) const { return std::filesystem::exists(journal_path(job_id)); }

JobState JobStore::create(const std::string& job_id, prompt::Kind kind, const std::vector<std::string>& work) {
    if (exists(job_id)) throw Error(ErrorKind::State, "job " + job_id + " already exists");
    ordered_json header;
    header["type"] = "header";
    header["job_id"] = job_id;
    header["kind"] = prompt::kind_name(kind);
    header["work"] = work;
    jsonl::write_text_atomic(journal_path(job_id), jsonl::dump(header) + "\n");
    JobState s;
    s.job_id = job_id;
    s.kind = kind;
    s.pending.insert(work.begin(), work.end());
    return s;
}

JobState JobStore::resume(const std::string& job_id) const {
    std::map<std::string, CompletedItem> ignored;
    return resume(job_id, ignored);
}

JobState JobStore::resume(const std::string& job_id, std::map<std::string, CompletedItem>& completed) const {
    const auto path = journal_path(job_id);
    if (!std::filesystem::exists(path)) throw Error(ErrorKind::State, "no persisted state for job " + job_id);
    const std::string content = jsonl::read_text(path);
    if (!content.empty() && content.back() != '\n')
        throw Error(ErrorKind::State, path.string() + ": truncated final record");
    JobState s;
    std::size_t line_no = 0;
    std::istringstream in(content);
    for (std::string line; std::getline(in, line);) {
        ++line_no;
        auto fail = [&](const std::string& why) {
            return Error(ErrorKind::State, fmt::format("{}:{}: corrupted job state: {}", path.string(), line_no, why));
        };
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw fail(e.what());
        }
        try {
            const auto type = j.at("type").get<std::string>();
            if (line_no == 1) {
                if (type != "header") throw fail("first record is not a header");
                s.job_id = j.at("job_id").get<std::string>();
                if (s.job_id != job_id) throw fail("header names job " + s.job_id);
                s.kind = prompt::kind_from_name(j.at("kind").get<std::string>());
                for (const auto& k : j.at("work")) s.pending.insert(k.get<std::string>());
                continue;
            }
            const auto key = j.at("key").get<std::string>();
            const bool known = s.pending.count(key) || s.done.count(key) || s.failed.count(key);
            if (!known) throw fail("event for unknown work item " + key);
            s.attempt_counts[key] += j.at("attempts").get<int>();
            if (type == "done") {
                s.pending.erase(key);
                s.failed.erase(key);
                s.done.insert(key);
                completed[key] = CompletedItem{j.at("text").get<std::string>(), j.value("created_at", "")};
            } else if (type == "failed") {
                if (s.done.count(key)) throw fail("failure recorded after completion for " + key);
                s.pending.erase(key);
                s.failed.insert(key);
            } else {
                throw fail("unknown event type " + type);
            }
        } catch (const nlohmann::json::exception& e) {
            throw fail(e.what());
        }
    }
    if (line_no == 0) throw Error(ErrorKind::State, path.string() + ": empty journal");
    return s;
}

void JobStore::append(const std::string& job_id, const std::string& line) {
    std::lock_guard lock(mu_);
    std::ofstream out(journal_path(job_id), std::ios::binary | std::ios::app);
    if (!out) throw Error(ErrorKind::Io, "cannot append to journal for " + job_id);
    out << line << '\n';
    out.flush();
}

void JobStore::record_done(const std::string& job_id, const std::string& key, int attempts,
                           const CompletedItem& item) {
    ordered_json j;
    j["type"] = "done";
    j["key"] = key;
    j["attempts"] = attempts;
    j["text"] = item.text;
    j["created_at"] = item.created_at;
    append(job_id, jsonl::dump(j));
}

void JobStore::record_failed(const std::string& job_id, const std::string& key, int attempts,
                             const std::string& error) {
    ordered_json j;
    j["type"] = "failed";
    j["key"] = key;
    j["attempts"] = attempts;
    j["error"] = error;
    append(job_id, jsonl::dump(j));
}

// --- orchestration -------------------------------------------------------------------------

std::string qbp_work_key(const corpus::QuestionGroup& group) {
    return "qbp:" + group.dataset_id + "/" + group.video_id;
}

std::string qbc_work_key(const corpus::QaPair& pair) {
    return "qbc:" + pair.dataset_id + "/" + pair.video_id + "/" + pair.qid;
}

corpus::QuestionGroup dedup_group(const corpus::QuestionGroup& group) {
    corpus::QuestionGroup out{group.dataset_id, group.video_id, group.video_uri, {}};
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& p : group.pairs) {
        auto key = std::make_pair(eval::normalize(p.question), eval::normalize(p.answer));
        if (seen.insert(std::move(key)).second) out.pairs.push_back(p);
    }
    return out;
}

namespace {

struct WorkItem {
    std::string key;
    GenerationRequest request;
};

struct EngineResult {
    std::map<std::string, CompletedItem> completed;
    JobState state;
    std::size_t backend_calls = 0;
    std::size_t cache_hits = 0;
    bool interrupted = false;
};

std::string derive_job_id(prompt::Kind kind, const SynthConfig& config, const std::vector<WorkItem>& items) {
    std::string material(prompt::kind_name(kind));
    material += '\0';
    material += config.model_id;
    for (const auto& item : items) {
        material += '\0';
        material += cache_key(item.request);
    }
    return fmt::format("{}-{}", prompt::kind_name(kind), sha256_hex(material).substr(0, 16));
}

EngineResult run_engine(prompt::Kind kind, const std::vector<WorkItem>& items, GenerationBackend& backend,
                        const SynthConfig& config) {
    std::vector<std::string> keys;
    keys.reserve(items.size());
    {
        std::set<std::string> unique;
        for (const auto& item : items) {
            if (!unique.insert(item.key).second)
                throw Error(ErrorKind::Duplicate, "duplicate work item " + item.key);
            keys.push_back(item.key);
        }
    }

    EngineResult result;
    std::optional<JobStore> store;
    std::string job_id;
    if (config.state_dir) {
        store.emplace(*config.state_dir);
        job_id = config.job_id.value_or(derive_job_id(kind, config, items));
        if (store->exists(job_id)) {
            result.state = store->resume(job_id, result.completed);
            std::set<std::string> persisted = result.state.pending;
            persisted.insert(result.state.done.begin(), result.state.done.end());
            persisted.insert(result.state.failed.begin(), result.state.failed.end());
            if (persisted != std::set<std::string>(keys.begin(), keys.end()))
                throw Error(ErrorKind::State, "job " + job_id + " was created for a different work set");
            if (result.state.kind != kind) throw Error(ErrorKind::State, "job " + job_id + " has a different kind");
            spdlog::info("resuming job {}: {} done, {} pending, {} failed", job_id, result.state.done.size(),
                         result.state.pending.size(), result.state.failed.size());
        } else {
            result.state = store->create(job_id, kind, keys);
        }
    } else {
        result.state.job_id = config.job_id.value_or(derive_job_id(kind, config, items));
        result.state.kind = kind;
        result.state.pending.insert(keys.begin(), keys.end());
    }

    std::vector<const WorkItem*> todo;
    for (const auto& item : items)
        if (!result.state.done.count(item.key)) todo.push_back(&item);

    std::optional<ResponseCache> cache;
    if (config.cache_dir) cache.emplace(*config.cache_dir);

    auto sleeper = config.sleep ? config.sleep : [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };

    std::mutex mu;  // guards result.*, serializes journal order with state mutation
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> calls{0}, hits{0};
    std::atomic<bool> interrupted{false};

    auto finish_done = [&](const WorkItem& item, int attempts, CompletedItem done) {
        std::lock_guard lock(mu);
        if (store) store->record_done(job_id, item.key, attempts, done);
        result.state.pending.erase(item.key);
        result.state.failed.erase(item.key);
        result.state.done.insert(item.key);
        result.state.attempt_counts[item.key] += attempts;
        result.completed[item.key] = std::move(done);
    };
    auto finish_failed = [&](const WorkItem& item, int attempts, const std::string& why) {
        std::lock_guard lock(mu);
        if (store) store->record_failed(job_id, item.key, attempts, why);
        result.state.pending.erase(item.key);
        result.state.failed.insert(item.key);
        result.state.attempt_counts[item.key] += attempts;
        spdlog::warn("{} failed after {} attempt(s): {}", item.key, attempts, why);
    };

    auto worker = [&](std::uint64_t worker_seed) {
        Xoshiro256 rng(worker_seed);
        for (;;) {
            if (config.stop && config.stop->load()) {
                interrupted = true;
                return;
            }
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            const WorkItem& item = *todo[i];
            const std::string ckey = cache_key(item.request);
            if (cache) {
                if (auto hit = cache->get(ckey)) {
                    ++hits;
                    finish_done(item, 0, CompletedItem{hit->text, hit->created_at});
                    continue;
                }
            }
            int attempts = 0;
            for (;;) {
                ++attempts;
                ++calls;
                try {
                    std::string text = backend.generate(item.request);
                    if (text::trim(text).empty()) throw BackendError("backend returned empty text", true);
                    CompletedItem done{std::move(text), utc_timestamp()};
                    if (cache) cache->put(ckey, CacheEntry{done.text, done.created_at});
                    finish_done(item, attempts, std::move(done));
                    break;
                } catch (const BackendError& e) {
                    if (!e.retryable() || attempts >= config.retry.max_attempts) {
                        finish_failed(item, attempts, e.what());
                        break;
                    }
                    auto delay = backoff_delay(config.retry, attempts, rng.uniform());
                    if (e.retry_after()) delay = std::min(*e.retry_after(), config.retry.cap);
                    sleeper(delay);
                } catch (const std::exception& e) {
                    // Transport-level failures from adapters are retried like 5xx.
                    if (attempts >= config.retry.max_attempts) {
                        finish_failed(item, attempts, e.what());
                        break;
                    }
                    sleeper(backoff_delay(config.retry, attempts, rng.uniform()));
                }
            }
        }
    };

    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(1, config.concurrency)), std::max<std::size_t>(1, todo.size()));
    if (!todo.empty()) {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker, config.jitter_seed + w);
    }
    result.backend_calls = calls.load();
    result.cache_hits = hits.load();
    result.interrupted = interrupted.load() && !result.state.pending.empty();
    return result;
}

}  // namespace

QbpRun synthesize_qbp(std::span<const corpus::QuestionGroup> groups, GenerationBackend& backend,
                      const prompt::PromptRenderer& renderer, const SynthConfig& config) {
    std::vector<WorkItem> items;
    items.reserve(groups.size());
    for (const auto& g : groups) {
        if (g.pairs.empty()) throw Error(ErrorKind::Validation, "empty question group " + g.video_id);
        GenerationRequest req;
        req.prompt = renderer.render_qbp(config.pre_dedup ? dedup_group(g) : g);
        req.prompt.source_ids = g.qids();
        req.model_id = config.model_id;
        req.temperature = config.temperature;
        req.max_output_words = config.max_output_words_qbp;
        validate(req);
        items.push_back(WorkItem{qbp_work_key(g), std::move(req)});
    }
    auto engine = run_engine(prompt::Kind::QBP, items, backend, config);
    QbpRun run;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        auto it = engine.completed.find(items[i].key);
        if (it == engine.completed.end()) continue;
        const auto& g = groups[i];
        run.records.push_back(NarrativeRecord{g.dataset_id, g.video_id, g.video_uri, it->second.text, g.qids(),
                                              config.model_id, items[i].request.prompt.prompt_hash,
                                              it->second.created_at});
    }
    run.state = std::move(engine.state);
    run.backend_calls = engine.backend_calls;
    run.cache_hits = engine.cache_hits;
    run.interrupted = engine.interrupted;
    return run;
}

QbcRun synthesize_qbc(std::span<const corpus::QaPair> pairs, GenerationBackend& backend,
                      const prompt::PromptRenderer& renderer, const SynthConfig& config) {
    std::vector<WorkItem> items;
    items.reserve(pairs.size());
    for (const auto& p : pairs) {
        GenerationRequest req;
        req.prompt = renderer.render_qbc(p);
        const auto fc = config.frame_counts.find(p.video_id);
        const long total = fc != config.frame_counts.end() ? fc->second : config.default_total_frames;
        req.frame_plan = plan_frames(total, config.sample_count, p.video_id);
        req.video_uri = p.video_uri;
        req.model_id = config.model_id;
        req.temperature = config.temperature;
        req.max_output_words = config.max_output_words_qbc;
        validate(req);
        items.push_back(WorkItem{qbc_work_key(p), std::move(req)});
    }
    auto engine = run_engine(prompt::Kind::QBC, items, backend, config);
    QbcRun run;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto it = engine.completed.find(items[i].key);
        if (it == engine.completed.end()) continue;
        const auto& p = pairs[i];
        run.records.push_back(RationaleRecord{p.dataset_id, p.video_id, p.video_uri, p.qid, p.question, p.answer,
                                              it->second.text, config.model_id,
                                              items[i].request.prompt.prompt_hash, it->second.created_at});
    }
    run.state = std::move(engine.state);
    run.backend_calls = engine.backend_calls;
    run.cache_hits = engine.cache_hits;
    run.interrupted = engine.interrupted;
    return run;
}

}  // namespace vqasynth::synth

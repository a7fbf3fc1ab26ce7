#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <tuple>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqasynth/corpus.hpp"
#include "vqasynth/promptkit.hpp"
#include "vqasynth/synthgen.hpp"

namespace httplib {
class Server;
}

namespace vqasynth::human {

using Method = prompt::Kind;

enum class Dimension { FactualConsistency, LogicalCoherence, VisualGrounding, Fluency };

std::string_view dimension_name(Dimension d);
Dimension dimension_from_name(std::string_view name);

// QBP: factual consistency, logical coherence, fluency.
// QBC: factual consistency, visual grounding, fluency.
bool applicable(Method method, Dimension d);
std::vector<Dimension> applicable_dimensions(Method method);

struct QbcContext {
    std::string question;
    std::string answer;
    std::string video_uri;
    std::vector<std::string> thumbnails;
};

struct EvalItem {
    std::string item_id;
    Method method = Method::QBP;
    std::string text;
    std::optional<corpus::QuestionGroup> group;  // QBP
    std::optional<QbcContext> qbc;               // QBC
    std::vector<std::string> assigned_evaluators;
};

nlohmann::ordered_json to_json(const EvalItem& item);
EvalItem eval_item_from_json(const nlohmann::ordered_json& j);
void write_items(const std::filesystem::path& path, std::span<const EvalItem> items);
std::vector<EvalItem> read_items(const std::filesystem::path& path);

struct SampleConfig {
    std::vector<std::string> evaluators = {"rater1", "rater2", "rater3"};
    std::size_t raters_per_item = 3;
    long thumbnail_sample_count = 16;
    long total_frames = 16;
};

// Thumbnail frame indices shown for QBC items: 0, T/3, 2T/3, T-1 of the plan.
std::vector<long> thumbnail_indices(const synth::FramePlan& plan);

// Uniform sampling without replacement from each pool, deterministic by seed.
// Narratives need their source group, looked up in `groups`.
std::vector<EvalItem> sample_items(std::span<const synth::NarrativeRecord> narratives,
                                   std::span<const synth::RationaleRecord> rationales,
                                   std::span<const corpus::QuestionGroup> groups, std::size_t n_per_method,
                                   std::uint64_t seed, const SampleConfig& config = {});

struct RatingRecord {
    std::string item_id;
    std::string evaluator_id;
    Dimension dimension = Dimension::FactualConsistency;
    int score = 0;
    std::string submitted_at;
};

nlohmann::ordered_json to_json(const RatingRecord& r);
RatingRecord rating_from_json(const nlohmann::ordered_json& j);

// Running moments; merging shards equals aggregating the union.
struct Moments {
    std::size_t n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double x);
    void merge(const Moments& other);
    double mean() const;
    double population_std() const;
};

struct CellSummary {
    double mean = 0.0;
    double std = 0.0;  // population
    std::size_t n_ratings = 0;
    std::optional<double> completion;  // set when the expected count is known
    std::optional<double> mean_pairwise_abs_diff;
};

struct EvalSummary {
    // Only cells with at least one rating are present.
    std::map<std::pair<Method, Dimension>, CellSummary> cells;
    std::optional<double> completion;  // overall
};

// Per-cell moments keyed by (method, dimension). Items supply each rating's
// method; ratings for unknown items are skipped.
std::map<std::pair<Method, Dimension>, Moments> cell_moments(std::span<const RatingRecord> ratings,
                                                             const std::map<std::string, Method>& item_methods);

EvalSummary summary_from_moments(const std::map<std::pair<Method, Dimension>, Moments>& moments);

// Full aggregation; fills completion and the inter-rater supplement when the
// items are known.
EvalSummary aggregate(std::span<const RatingRecord> ratings, std::span<const EvalItem> items);

nlohmann::ordered_json to_json(const EvalSummary& s);
std::string to_table(const EvalSummary& s);

// Guiding questions and 1/3/5 anchors for each dimension.
nlohmann::ordered_json rubric_json();
std::string rubric_text();

struct Ack {
    bool updated = false;  // true when an earlier rating was replaced
};

// Rating persistence: an append-only JSONL file, replayed on open with
// last-write-wins on (item, evaluator, dimension). Writers are serialized;
// readers get immutable snapshots.
class RatingStore {
public:
    RatingStore(std::vector<EvalItem> items, std::optional<std::filesystem::path> ratings_path);

    // Throws Error{Validation} (score range, applicability) or
    // Error{NotFound} (unknown item) or Error{Usage} (evaluator not assigned).
    Ack submit(RatingRecord rating);

    std::vector<RatingRecord> ratings() const;
    std::vector<std::string> audit_log() const;
    const std::vector<EvalItem>& items() const { return items_; }
    const EvalItem* item(const std::string& item_id) const;
    EvalSummary summary() const;

private:
    using Key = std::tuple<std::string, std::string, Dimension>;
    using Snapshot = std::map<Key, RatingRecord>;

    void validate(const RatingRecord& r) const;
    std::shared_ptr<const Snapshot> snapshot() const;

    std::vector<EvalItem> items_;
    std::map<std::string, std::size_t> index_;
    std::optional<std::filesystem::path> path_;
    mutable std::mutex write_mu_;
    mutable std::mutex snap_mu_;
    std::shared_ptr<const Snapshot> snapshot_;
    std::vector<std::string> audit_;
};

struct ServiceConfig {
    // bearer token -> evaluator id; empty disables authentication.
    std::map<std::string, std::string> tokens;
    std::optional<std::filesystem::path> static_dir;
    std::uint64_t order_seed = 0;
};

// HTTP API for the rater UI:
//   GET  /api/items?evaluator=ID   assigned items, seeded per-rater order
//   POST /api/ratings              RatingRecord body -> 201 / 4xx
//   GET  /api/summary              EvalSummary
//   GET  /api/rubric               rubric
class ReviewService {
public:
    ReviewService(RatingStore& store, ServiceConfig config);
    ~ReviewService();

    // Binds and serves on a background thread; returns the bound port.
    int start(const std::string& host, int port);
    // Blocks serving on the calling thread.
    void listen(const std::string& host, int port);
    void stop();

    httplib::Server& server() { return *server_; }

private:
    void install_routes();
    std::optional<std::string> authenticate(const std::string& authorization) const;

    RatingStore& store_;
    ServiceConfig config_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

// Per-evaluator presentation order, seeded by (seed, evaluator).
std::vector<const EvalItem*> items_for(const std::vector<EvalItem>& items, const std::string& evaluator,
                                       std::uint64_t seed);

}  // namespace vqasynth::human

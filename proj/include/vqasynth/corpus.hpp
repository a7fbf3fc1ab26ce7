#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace vqasynth::corpus {

// One annotated question-answer pair.
struct QaPair {
    std::string dataset_id;
    std::string video_id;
    std::string video_uri;
    std::string qid;
    std::string question;
    std::string answer;
    std::optional<std::string> question_type;
    std::optional<std::vector<std::string>> options;
    std::optional<int> answer_index;

    bool operator==(const QaPair&) const = default;
};

// All pairs annotated for one video, in source order.
struct QuestionGroup {
    std::string dataset_id;
    std::string video_id;
    std::string video_uri;
    std::vector<QaPair> pairs;

    std::size_t group_size() const { return pairs.size(); }
    std::vector<std::string> qids() const;
};

// Histogram keyed by bucket label. Buckets are kept as strings so the
// overflow bucket (">30") can live next to the exact integer ones.
using Histogram = std::map<std::string, std::uint64_t>;

struct DatasetStats {
    std::uint64_t video_count = 0;
    std::uint64_t qa_count = 0;
    double mean_qa_per_video = 0.0;
    Histogram qa_per_video_histogram;
    // "answers" / "questions" -> word-count histogram.
    std::map<std::string, std::map<std::size_t, std::uint64_t>> length_histograms;
};

struct CorpusStats {
    std::map<std::string, DatasetStats> per_dataset;
};

inline constexpr int kMaxExactBucket = 30;
inline constexpr const char* kOverflowBucket = ">30";

// Validates the QaPair invariants (non-empty question/answer, option index
// consistency). Throws Error{Validation} with a reason.
void validate(const QaPair& pair);

// Canonical key order: dataset, video_id, video_uri, qid, question, answer,
// question_type, options, answer_index.
nlohmann::ordered_json to_json(const QaPair& pair);
QaPair qa_pair_from_json(const nlohmann::ordered_json& j);
std::string to_line(const QaPair& pair);

// Reads a canonical corpus file. When dataset_id is non-empty every record
// must carry that dataset. Malformed lines and duplicate keys throw with line
// numbers; an empty file yields an empty list.
std::vector<QaPair> ingest(const std::filesystem::path& path, const std::string& dataset_id = {});

// Same, over in-memory lines (line numbers are 1-based positions).
std::vector<QaPair> ingest_lines(std::span<const std::string> lines, const std::string& dataset_id = {},
                                 const std::string& source_name = "<memory>");

void write_corpus(const std::filesystem::path& path, std::span<const QaPair> pairs);

// Groups by (dataset_id, video_id) in order of first appearance.
std::vector<QuestionGroup> group(std::span<const QaPair> pairs);

CorpusStats compute_stats(std::span<const QuestionGroup> groups);

std::string bucket_for(std::size_t group_size);

nlohmann::ordered_json to_json(const CorpusStats& stats);

// Fixed header: dataset,videos,qa_pairs,mean_qa_per_video
std::string to_csv(const CorpusStats& stats);

// One whitespace-separated row per dataset: "<dataset> <videos> <qa> <mean>"
// with the mean printed to two decimals.
std::string to_table(const CorpusStats& stats);

}  // namespace vqasynth::corpus

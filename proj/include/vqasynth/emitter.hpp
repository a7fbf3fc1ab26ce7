#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqasynth/synthgen.hpp"

namespace vqasynth::emit {

enum class Origin { Qbp, Qbc };

std::string_view origin_name(Origin o);
Origin origin_from_name(std::string_view name);

struct TrainingSample {
    std::string sample_id;  // content hash of (origin, dataset, video, text)
    std::string video_uri;
    std::string target_text;
    Origin origin = Origin::Qbp;
    std::string dataset_id;
    std::vector<std::string> source_ids;

    bool operator==(const TrainingSample&) const = default;
};

std::string sample_id_for(Origin origin, std::string_view dataset_id, std::string_view video_uri,
                          std::string_view target_text);

TrainingSample from_narrative(const synth::NarrativeRecord& r);
TrainingSample from_rationale(const synth::RationaleRecord& r);

struct AssembleResult {
    std::vector<TrainingSample> samples;
    // sample_ids dropped as exact duplicates, in encounter order.
    std::vector<std::string> duplicates;
};

// Narratives first, then rationales, each in input order; later exact
// duplicates are dropped (and logged).
AssembleResult assemble(std::span<const synth::NarrativeRecord> narratives,
                        std::span<const synth::RationaleRecord> rationales);

// Uniform sample without replacement; selected samples keep their input
// order, so size == samples.size() returns the input unchanged.
std::vector<TrainingSample> subset(std::span<const TrainingSample> samples, std::size_t size, std::uint64_t seed);

// Concatenate sources in recipe order, then Fisher-Yates shuffle.
std::vector<TrainingSample> mix(const std::map<std::string, std::vector<TrainingSample>>& sources,
                                std::span<const std::string> recipe, std::uint64_t seed);

// Fixed instruction strings of the single-turn training conversation.
inline constexpr std::string_view kVideoToken = "<video>";
inline constexpr std::string_view kQbpInstruction = "Describe the video.";
inline constexpr std::string_view kQbcInstruction = "Describe the visual evidence in the video.";

nlohmann::ordered_json training_line(const TrainingSample& s);

nlohmann::ordered_json to_json(const TrainingSample& s);
TrainingSample sample_from_json(const nlohmann::ordered_json& j);
void write_samples(const std::filesystem::path& path, std::span<const TrainingSample> samples);
std::vector<TrainingSample> read_samples(const std::filesystem::path& path);

struct Manifest {
    std::size_t count = 0;
    std::map<std::string, std::size_t> per_origin;
    std::string file_sha256;
    std::string prng = "xoshiro256**/splitmix64";
    std::map<std::string, std::uint64_t> seeds;
    std::string created_at;
};

nlohmann::ordered_json to_json(const Manifest& m);

// Writes the training file and, next to it, <path>.manifest.json.
Manifest write_training_file(std::span<const TrainingSample> samples, const std::filesystem::path& path,
                             const std::map<std::string, std::uint64_t>& seeds = {});

}  // namespace vqasynth::emit

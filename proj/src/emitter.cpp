#include "vqasynth/emitter.hpp"

#include <algorithm>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "vqasynth/error.hpp"
#include "vqasynth/hash.hpp"
#include "vqasynth/jsonl.hpp"
#include "vqasynth/rng.hpp"

namespace vqasynth::emit {

using nlohmann::ordered_json;

std::string_view origin_name(Origin o) { return o == Origin::Qbp ? "qbp" : "qbc"; }

Origin origin_from_name(std::string_view name) {
    if (name == "qbp") return Origin::Qbp;
    if (name == "qbc") return Origin::Qbc;
    throw Error(ErrorKind::Parse, fmt::format("unknown origin \"{}\"", name));
}

std::string sample_id_for(Origin origin, std::string_view dataset_id, std::string_view video_uri,
                          std::string_view target_text) {
    std::string material(origin_name(origin));
    for (auto part : {dataset_id, video_uri, target_text}) {
        material.push_back('\0');
        material.append(part);
    }
    return sha256_hex(material);
}

TrainingSample from_narrative(const synth::NarrativeRecord& r) {
    return {sample_id_for(Origin::Qbp, r.dataset_id, r.video_uri, r.text), r.video_uri, r.text, Origin::Qbp,
            r.dataset_id, r.source_qids};
}

TrainingSample from_rationale(const synth::RationaleRecord& r) {
    return {sample_id_for(Origin::Qbc, r.dataset_id, r.video_uri, r.text), r.video_uri, r.text, Origin::Qbc,
            r.dataset_id, {r.qid}};
}

AssembleResult assemble(std::span<const synth::NarrativeRecord> narratives,
                        std::span<const synth::RationaleRecord> rationales) {
    AssembleResult out;
    out.samples.reserve(narratives.size() + rationales.size());
    std::set<std::string> seen;
    auto add = [&](TrainingSample s) {
        if (s.target_text.empty()) throw Error(ErrorKind::Validation, "empty target text for " + s.video_uri);
        if (!seen.insert(s.sample_id).second) {
            spdlog::info("dedup: dropping exact duplicate {} sample {} for {}", origin_name(s.origin), s.sample_id,
                         s.video_uri);
            out.duplicates.push_back(s.sample_id);
            return;
        }
        out.samples.push_back(std::move(s));
    };
    for (const auto& n : narratives) add(from_narrative(n));
    for (const auto& r : rationales) add(from_rationale(r));
    return out;
}

std::vector<TrainingSample> subset(std::span<const TrainingSample> samples, std::size_t size, std::uint64_t seed) {
    if (size > samples.size())
        throw Error(ErrorKind::Validation,
                    fmt::format("subset size {} exceeds the {} available samples", size, samples.size()));
    // Partial Fisher-Yates over indices, then restore input order.
    std::vector<std::size_t> idx(samples.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Xoshiro256 rng(seed);
    for (std::size_t i = 0; i < size; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(samples.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(size);
    std::sort(idx.begin(), idx.end());
    std::vector<TrainingSample> out;
    out.reserve(size);
    for (auto i : idx) out.push_back(samples[i]);
    return out;
}

std::vector<TrainingSample> mix(const std::map<std::string, std::vector<TrainingSample>>& sources,
                                std::span<const std::string> recipe, std::uint64_t seed) {
    std::vector<TrainingSample> out;
    std::set<std::string> used;
    for (const auto& name : recipe) {
        auto it = sources.find(name);
        if (it == sources.end()) throw Error(ErrorKind::NotFound, "mix recipe names unknown dataset \"" + name + "\"");
        if (!used.insert(name).second)
            throw Error(ErrorKind::Validation, "mix recipe lists \"" + name + "\" more than once");
        out.insert(out.end(), it->second.begin(), it->second.end());
    }
    Xoshiro256 rng(seed);
    shuffle(std::span<TrainingSample>(out), rng);
    return out;
}

ordered_json training_line(const TrainingSample& s) {
    const auto instruction = s.origin == Origin::Qbp ? kQbpInstruction : kQbcInstruction;
    ordered_json j;
    j["id"] = s.sample_id;
    j["video"] = s.video_uri;
    j["conversations"] = ordered_json::array(
        {ordered_json{{"role", "user"}, {"content", fmt::format("{}\n{}", kVideoToken, instruction)}},
         ordered_json{{"role", "assistant"}, {"content", s.target_text}}});
    j["origin"] = origin_name(s.origin);
    j["dataset"] = s.dataset_id;
    return j;
}

ordered_json to_json(const TrainingSample& s) {
    ordered_json j;
    j["sample_id"] = s.sample_id;
    j["video_uri"] = s.video_uri;
    j["target_text"] = s.target_text;
    j["origin"] = origin_name(s.origin);
    j["dataset"] = s.dataset_id;
    j["source_ids"] = s.source_ids;
    return j;
}

TrainingSample sample_from_json(const ordered_json& j) {
    TrainingSample s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.video_uri = j.at("video_uri").get<std::string>();
    s.target_text = j.at("target_text").get<std::string>();
    s.origin = origin_from_name(j.at("origin").get<std::string>());
    s.dataset_id = j.at("dataset").get<std::string>();
    s.source_ids = j.at("source_ids").get<std::vector<std::string>>();
    return s;
}

void write_samples(const std::filesystem::path& path, std::span<const TrainingSample> samples) {
    std::vector<std::string> lines;
    lines.reserve(samples.size());
    for (const auto& s : samples) lines.push_back(jsonl::dump(to_json(s)));
    jsonl::write_lines_atomic(path, lines);
}

std::vector<TrainingSample> read_samples(const std::filesystem::path& path) {
    std::vector<TrainingSample> out;
    for (const auto& line : jsonl::read_lines(path)) {
        try {
            out.push_back(sample_from_json(jsonl::parse_line(line, path)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, fmt::format("{}:{}: {}", path.string(), line.number, e.what()));
        }
    }
    return out;
}

ordered_json to_json(const Manifest& m) {
    ordered_json j;
    j["count"] = m.count;
    ordered_json per = ordered_json::object();
    for (const auto& [k, v] : m.per_origin) per[k] = v;
    j["per_origin"] = per;
    j["file_sha256"] = m.file_sha256;
    j["prng"] = m.prng;
    ordered_json seeds = ordered_json::object();
    for (const auto& [k, v] : m.seeds) seeds[k] = v;
    j["seeds"] = seeds;
    j["created_at"] = m.created_at;
    return j;
}

Manifest write_training_file(std::span<const TrainingSample> samples, const std::filesystem::path& path,
                             const std::map<std::string, std::uint64_t>& seeds) {
    std::vector<std::string> lines;
    lines.reserve(samples.size());
    Manifest m;
    m.per_origin = {{"qbp", 0}, {"qbc", 0}};
    for (const auto& s : samples) {
        lines.push_back(jsonl::dump(training_line(s)));
        ++m.per_origin[std::string(origin_name(s.origin))];
    }
    jsonl::write_lines_atomic(path, lines);
    m.count = samples.size();
    m.file_sha256 = sha256_file_hex(path);
    m.seeds = seeds;
    m.prng = std::string(Xoshiro256::kName);
    m.created_at = synth::utc_timestamp();
    auto manifest_path = path;
    manifest_path += ".manifest.json";
    jsonl::write_text_atomic(manifest_path, to_json(m).dump(2) + "\n");
    return m;
}

}  // namespace vqasynth::emit

#include "vqasynth/corpus.hpp"

#include <algorithm>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include <fmt/format.h>

#include "vqasynth/error.hpp"
#include "vqasynth/evalharness.hpp"
#include "vqasynth/jsonl.hpp"
#include "vqasynth/text.hpp"

namespace vqasynth::corpus {

using nlohmann::ordered_json;

std::vector<std::string> QuestionGroup::qids() const {
    std::vector<std::string> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.qid);
    return out;
}

void validate(const QaPair& pair) {
    if (pair.dataset_id.empty()) throw Error(ErrorKind::Validation, "empty dataset id");
    if (pair.video_id.empty()) throw Error(ErrorKind::Validation, "empty video_id");
    if (pair.qid.empty()) throw Error(ErrorKind::Validation, "empty qid");
    if (text::trim(pair.question).empty()) throw Error(ErrorKind::Validation, "empty question");
    if (text::trim(pair.answer).empty()) throw Error(ErrorKind::Validation, "empty answer");
    if (pair.answer_index) {
        if (!pair.options) throw Error(ErrorKind::Validation, "answer_index without options");
        const int idx = *pair.answer_index;
        if (idx < 0 || idx >= static_cast<int>(pair.options->size()))
            throw Error(ErrorKind::Validation, fmt::format("answer_index {} out of range for {} options", idx,
                                                           pair.options->size()));
        if (eval::normalize((*pair.options)[idx], true) != eval::normalize(pair.answer, true))
            throw Error(ErrorKind::Validation,
                        fmt::format("options[{}] does not match the answer after normalization", idx));
    }
}

ordered_json to_json(const QaPair& p) {
    ordered_json j;
    j["dataset"] = p.dataset_id;
    j["video_id"] = p.video_id;
    j["video_uri"] = p.video_uri;
    j["qid"] = p.qid;
    j["question"] = p.question;
    j["answer"] = p.answer;
    j["question_type"] = p.question_type ? ordered_json(*p.question_type) : ordered_json(nullptr);
    j["options"] = p.options ? ordered_json(*p.options) : ordered_json(nullptr);
    j["answer_index"] = p.answer_index ? ordered_json(*p.answer_index) : ordered_json(nullptr);
    return j;
}

std::string to_line(const QaPair& pair) { return jsonl::dump(to_json(pair)); }

namespace {

const std::vector<std::string>& known_keys() {
    static const std::vector<std::string> keys = {"dataset", "video_id", "video_uri",     "qid",         "question",
                                                  "answer",  "question_type", "options", "answer_index"};
    return keys;
}

std::string required_string(const ordered_json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw Error(ErrorKind::Parse, fmt::format("missing key \"{}\"", key));
    if (!it->is_string()) throw Error(ErrorKind::Parse, fmt::format("key \"{}\" must be a string", key));
    return it->get<std::string>();
}

}  // namespace

QaPair qa_pair_from_json(const ordered_json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Parse, "record is not a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end())
            throw Error(ErrorKind::Parse, fmt::format("unknown key \"{}\"", key));
    }
    QaPair p;
    p.dataset_id = required_string(j, "dataset");
    p.video_id = required_string(j, "video_id");
    p.video_uri = required_string(j, "video_uri");
    p.qid = required_string(j, "qid");
    p.question = required_string(j, "question");
    p.answer = required_string(j, "answer");
    if (auto it = j.find("question_type"); it != j.end() && !it->is_null()) {
        if (!it->is_string()) throw Error(ErrorKind::Parse, "question_type must be a string or null");
        p.question_type = it->get<std::string>();
    }
    if (auto it = j.find("options"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw Error(ErrorKind::Parse, "options must be a list or null");
        std::vector<std::string> opts;
        for (const auto& o : *it) {
            if (!o.is_string()) throw Error(ErrorKind::Parse, "options entries must be strings");
            opts.push_back(o.get<std::string>());
        }
        p.options = std::move(opts);
    }
    if (auto it = j.find("answer_index"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer()) throw Error(ErrorKind::Parse, "answer_index must be an integer or null");
        p.answer_index = it->get<int>();
    }
    return p;
}

std::vector<QaPair> ingest_lines(std::span<const std::string> lines, const std::string& dataset_id,
                                 const std::string& source_name) {
    std::vector<QaPair> out;
    using Key = std::tuple<std::string, std::string, std::string>;
    std::map<Key, std::size_t> seen;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        if (text::trim(lines[i]).empty()) continue;
        QaPair pair;
        try {
            const auto j = ordered_json::parse(lines[i]);
            pair = qa_pair_from_json(j);
            validate(pair);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::Parse, fmt::format("{}:{}: malformed JSON: {}", source_name, line_no, e.what()));
        } catch (const Error& e) {
            throw Error(ErrorKind::Parse, fmt::format("{}:{}: {}", source_name, line_no, e.what()));
        }
        if (!dataset_id.empty() && pair.dataset_id != dataset_id)
            throw Error(ErrorKind::Parse, fmt::format("{}:{}: dataset \"{}\" does not match expected \"{}\"",
                                                      source_name, line_no, pair.dataset_id, dataset_id));
        Key key{pair.dataset_id, pair.video_id, pair.qid};
        if (auto [it, inserted] = seen.emplace(key, line_no); !inserted)
            throw Error(ErrorKind::Duplicate,
                        fmt::format("{}: duplicate key (dataset={}, video_id={}, qid={}) at lines {} and {}",
                                    source_name, pair.dataset_id, pair.video_id, pair.qid, it->second, line_no));
        out.push_back(std::move(pair));
    }
    return out;
}

std::vector<QaPair> ingest(const std::filesystem::path& path, const std::string& dataset_id) {
    const std::string content = jsonl::read_text(path);
    std::vector<std::string> lines;
    std::istringstream in(content);
    for (std::string l; std::getline(in, l);) {
        if (!l.empty() && l.back() == '\r') l.pop_back();
        lines.push_back(std::move(l));
    }
    return ingest_lines(lines, dataset_id, path.string());
}

void write_corpus(const std::filesystem::path& path, std::span<const QaPair> pairs) {
    std::vector<std::string> lines;
    lines.reserve(pairs.size());
    for (const auto& p : pairs) lines.push_back(to_line(p));
    jsonl::write_lines_atomic(path, lines);
}

std::vector<QuestionGroup> group(std::span<const QaPair> pairs) {
    std::vector<QuestionGroup> groups;
    std::map<std::pair<std::string, std::string>, std::size_t> index;
    for (const auto& p : pairs) {
        auto [it, inserted] = index.emplace(std::make_pair(p.dataset_id, p.video_id), groups.size());
        if (inserted) {
            groups.push_back(QuestionGroup{p.dataset_id, p.video_id, p.video_uri, {}});
        } else if (groups[it->second].video_uri != p.video_uri) {
            throw Error(ErrorKind::Validation,
                        fmt::format("video {}/{} has conflicting video_uri values \"{}\" and \"{}\"", p.dataset_id,
                                    p.video_id, groups[it->second].video_uri, p.video_uri));
        }
        groups[it->second].pairs.push_back(p);
    }
    return groups;
}

std::string bucket_for(std::size_t group_size) {
    if (group_size > static_cast<std::size_t>(kMaxExactBucket)) return kOverflowBucket;
    return std::to_string(group_size);
}

CorpusStats compute_stats(std::span<const QuestionGroup> groups) {
    CorpusStats stats;
    for (const auto& g : groups) {
        auto& ds = stats.per_dataset[g.dataset_id];
        if (ds.qa_per_video_histogram.empty()) {
            for (int b = 1; b <= kMaxExactBucket; ++b) ds.qa_per_video_histogram[std::to_string(b)] = 0;
            ds.qa_per_video_histogram[kOverflowBucket] = 0;
            ds.length_histograms["answers"];
            ds.length_histograms["questions"];
        }
        ++ds.video_count;
        ds.qa_count += g.group_size();
        ++ds.qa_per_video_histogram[bucket_for(g.group_size())];
        for (const auto& p : g.pairs) {
            ++ds.length_histograms["answers"][text::word_count(p.answer)];
            ++ds.length_histograms["questions"][text::word_count(p.question)];
        }
    }
    for (auto& [_, ds] : stats.per_dataset)
        ds.mean_qa_per_video =
            ds.video_count == 0 ? 0.0 : static_cast<double>(ds.qa_count) / static_cast<double>(ds.video_count);
    return stats;
}

namespace {

// Histogram keys sorted numerically with the overflow bucket last.
ordered_json histogram_json(const Histogram& h) {
    std::vector<std::pair<std::string, std::uint64_t>> entries(h.begin(), h.end());
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
        const bool ao = a.first == kOverflowBucket, bo = b.first == kOverflowBucket;
        if (ao != bo) return bo;
        if (ao) return false;
        return std::stoi(a.first) < std::stoi(b.first);
    });
    ordered_json j = ordered_json::object();
    for (const auto& [k, v] : entries) j[k] = v;
    return j;
}

}  // namespace

ordered_json to_json(const CorpusStats& stats) {
    ordered_json doc;
    doc["word_count_rule"] = "whitespace-delimited tokens of trimmed text";
    ordered_json datasets = ordered_json::object();
    for (const auto& [name, ds] : stats.per_dataset) {
        ordered_json d;
        d["video_count"] = ds.video_count;
        d["qa_count"] = ds.qa_count;
        d["mean_qa_per_video"] = ds.mean_qa_per_video;
        d["qa_per_video_histogram"] = histogram_json(ds.qa_per_video_histogram);
        ordered_json lengths = ordered_json::object();
        for (const auto& [series, hist] : ds.length_histograms) {
            ordered_json h = ordered_json::object();
            for (const auto& [words, count] : hist) h[std::to_string(words)] = count;
            lengths[series] = h;
        }
        d["length_histograms"] = lengths;
        datasets[name] = d;
    }
    doc["datasets"] = datasets;
    return doc;
}

std::string to_csv(const CorpusStats& stats) {
    std::string out = "dataset,videos,qa_pairs,mean_qa_per_video\n";
    for (const auto& [name, ds] : stats.per_dataset)
        out += fmt::format("{},{},{},{:.4f}\n", name, ds.video_count, ds.qa_count, ds.mean_qa_per_video);
    return out;
}

std::string to_table(const CorpusStats& stats) {
    std::string out;
    for (const auto& [name, ds] : stats.per_dataset)
        out += fmt::format("{} {} {} {:.2f}\n", name, ds.video_count, ds.qa_count, ds.mean_qa_per_video);
    return out;
}

}  // namespace vqasynth::corpus

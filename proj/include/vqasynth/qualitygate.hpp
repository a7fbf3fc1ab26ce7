#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqasynth/corpus.hpp"
#include "vqasynth/error.hpp"
#include "vqasynth/promptkit.hpp"
#include "vqasynth/synthgen.hpp"

namespace vqasynth::qc {

enum class Status { Pass = 0, Warn = 1, Fail = 2 };

std::string_view status_name(Status s);
Status status_from_name(std::string_view name);

struct CheckResult {
    std::string name;
    Status status = Status::Pass;
    std::string detail;
};

struct QcReport {
    std::string record_id;
    prompt::Kind kind = prompt::Kind::QBP;
    std::vector<CheckResult> checks;
    Status overall = Status::Pass;  // worst check status

    const CheckResult* find(std::string_view name) const;
};

// Thresholds. The defaults are calibration choices, all overridable.
struct QcConfig {
    double answer_coverage_min = 0.8;
    double duplicate_jaccard = 0.8;
    std::size_t qbp_min_words = 15;
    std::size_t qbp_max_words = 400;
    std::size_t qbc_min_words = 10;
    std::size_t qbc_max_words = 500;
    std::size_t restatement_slack_words = 2;
    std::size_t min_added_content_words = 8;
    double question_echo_fraction = 0.9;
};

// Checks: speculative_terms, filler_phrase, answer_coverage, length_bounds,
// duplicate_sentence. Throws Error{Validation} if the group is not the
// record's source group.
QcReport check_qbp(const synth::NarrativeRecord& record, const corpus::QuestionGroup& group,
                   const QcConfig& config = {});

// Checks: nonempty, answer_restatement, question_echo, length_bounds.
QcReport check_qbc(const synth::RationaleRecord& record, const QcConfig& config = {});

enum class Policy { DropFail, DropFailAndWarn, KeepAll };

Policy policy_from_name(std::string_view name);
std::string_view policy_name(Policy p);

struct FilterSummary {
    std::size_t input = 0;
    std::size_t kept = 0;
    std::size_t dropped = 0;
    // check name -> status name -> count
    std::map<std::string, std::map<std::string, std::size_t>> by_check;
};

template <typename Record>
struct Filtered {
    std::vector<Record> records;
    FilterSummary summary;
};

namespace detail {
void tally(FilterSummary& summary, const QcReport& report);
bool keep(Policy policy, Status overall);
}  // namespace detail

// Reports are matched to records by record_id. A record without a report is
// an Error{NotFound}.
template <typename Record>
Filtered<Record> filter(std::span<const Record> records, std::span<const QcReport> reports, Policy policy) {
    std::map<std::string, const QcReport*> by_id;
    for (const auto& r : reports) by_id[r.record_id] = &r;
    Filtered<Record> out;
    out.summary.input = records.size();
    for (const auto& rec : records) {
        auto it = by_id.find(rec.record_id());
        if (it == by_id.end()) throw Error(ErrorKind::NotFound, "no QC report for record " + rec.record_id());
        detail::tally(out.summary, *it->second);
        if (detail::keep(policy, it->second->overall)) out.records.push_back(rec);
    }
    out.summary.kept = out.records.size();
    out.summary.dropped = out.summary.input - out.summary.kept;
    return out;
}

nlohmann::ordered_json to_json(const QcReport& report);
QcReport qc_report_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const FilterSummary& summary);

void write_reports(const std::filesystem::path& path, std::span<const QcReport> reports);

// Sentence split on terminal punctuation, used by duplicate_sentence.
std::vector<std::string> split_sentences(std::string_view text);

// Jaccard similarity of normalized token sets.
double jaccard(std::string_view a, std::string_view b);

// True when the answer's normalized tokens occur contiguously in the text,
// comparing lightly stemmed forms ("poses" ~ "pose").
bool answer_appears(std::string_view answer, std::string_view text);

}  // namespace vqasynth::qc

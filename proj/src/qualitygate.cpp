#include "vqasynth/qualitygate.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>

#include "vqasynth/jsonl.hpp"
#include "vqasynth/text.hpp"

namespace vqasynth::qc {

using nlohmann::ordered_json;

std::string_view status_name(Status s) {
    switch (s) {
        case Status::Pass: return "pass";
        case Status::Warn: return "warn";
        case Status::Fail: return "fail";
    }
    return "pass";
}

Status status_from_name(std::string_view name) {
    if (name == "pass") return Status::Pass;
    if (name == "warn") return Status::Warn;
    if (name == "fail") return Status::Fail;
    throw Error(ErrorKind::Parse, fmt::format("unknown check status \"{}\"", name));
}

const CheckResult* QcReport::find(std::string_view name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

Policy policy_from_name(std::string_view name) {
    if (name == "drop_fail") return Policy::DropFail;
    if (name == "drop_fail_and_warn") return Policy::DropFailAndWarn;
    if (name == "keep_all") return Policy::KeepAll;
    throw Error(ErrorKind::Usage, fmt::format("unknown QC policy \"{}\"", name));
}

std::string_view policy_name(Policy p) {
    switch (p) {
        case Policy::DropFail: return "drop_fail";
        case Policy::DropFailAndWarn: return "drop_fail_and_warn";
        case Policy::KeepAll: return "keep_all";
    }
    return "keep_all";
}

namespace {

const std::set<std::string>& speculative_terms() {
    static const std::set<std::string> terms = {"probably", "might", "seems"};
    return terms;
}

const std::set<std::string>& stopwords() {
    static const std::set<std::string> words = {
        "a",    "an",   "the",  "and",  "or",   "but",  "of",   "to",   "in",   "on",    "at",   "by",   "for",
        "with", "from", "as",   "is",   "are",  "was",  "were", "be",   "been", "being", "it",   "its",  "this",
        "that", "these", "those", "he", "she",  "they", "them", "his",  "her",  "their", "there", "which", "who",
        "has",  "have", "had",  "do",   "does", "did",  "not",  "so",   "than", "then",  "while", "into", "onto"};
    return words;
}

std::string stem(std::string_view w) {
    std::string s(w);
    if (s.size() > 5 && s.ends_with("ing"))
        s.resize(s.size() - 3);
    else if (s.size() > 4 && s.ends_with("ed"))
        s.resize(s.size() - 2);
    else if (s.size() > 3 && s.ends_with('s') && !s.ends_with("ss"))
        s.resize(s.size() - 1);
    // "pose", "posed" and "posing" all reduce to "pos".
    if (s.size() > 3 && s.ends_with('e')) s.pop_back();
    return s;
}

std::vector<std::string> stemmed(const std::vector<std::string>& tokens) {
    std::vector<std::string> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(stem(t));
    return out;
}

// Position of the first contiguous occurrence of needle in hay, or npos.
std::size_t find_span(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
    if (needle.empty() || needle.size() > hay.size()) return std::string::npos;
    for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
        if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) return i;
    return std::string::npos;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

Status worst(const std::vector<CheckResult>& checks) {
    Status s = Status::Pass;
    for (const auto& c : checks) s = std::max(s, c.status);
    return s;
}

CheckResult length_bounds(std::string_view text_in, std::size_t lo, std::size_t hi) {
    const auto n = text::word_count(text_in);
    if (n < lo || n > hi) return {"length_bounds", Status::Warn, fmt::format("{} words outside [{}, {}]", n, lo, hi)};
    return {"length_bounds", Status::Pass, fmt::format("{} words", n)};
}

}  // namespace

std::vector<std::string> split_sentences(std::string_view t) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : t) {
        cur.push_back(c);
        if (c == '.' || c == '!' || c == '?') {
            auto trimmed = text::trim(cur);
            if (!trimmed.empty() && trimmed.find_first_not_of(".!?") != std::string_view::npos)
                out.emplace_back(trimmed);
            cur.clear();
        }
    }
    if (auto trimmed = text::trim(cur); !trimmed.empty()) out.emplace_back(trimmed);
    return out;
}

double jaccard(std::string_view a, std::string_view b) {
    const auto ta = text::loose_tokens(a), tb = text::loose_tokens(b);
    const std::set<std::string> sa(ta.begin(), ta.end()), sb(tb.begin(), tb.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& w : sa) inter += sb.count(w);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

bool answer_appears(std::string_view answer, std::string_view text_in) {
    const auto a = stemmed(text::loose_tokens(answer));
    const auto t = stemmed(text::loose_tokens(text_in));
    return find_span(t, a) != std::string::npos;
}

QcReport check_qbp(const synth::NarrativeRecord& record, const corpus::QuestionGroup& group, const QcConfig& config) {
    if (record.dataset_id != group.dataset_id || record.video_id != group.video_id)
        throw Error(ErrorKind::Validation, fmt::format("record {} checked against group {}/{}", record.record_id(),
                                                       group.dataset_id, group.video_id));
    QcReport r;
    r.record_id = record.record_id();
    r.kind = prompt::Kind::QBP;
    const auto tokens = text::loose_tokens(record.text);

    {
        std::vector<std::string> found;
        for (const auto& t : tokens)
            if (speculative_terms().count(t) && std::find(found.begin(), found.end(), t) == found.end())
                found.push_back(t);
        r.checks.push_back(found.empty() ? CheckResult{"speculative_terms", Status::Pass, ""}
                                         : CheckResult{"speculative_terms", Status::Fail,
                                                       "found: " + text::join(found, ", ")});
    }
    {
        const bool filler = find_span(tokens, text::loose_tokens("the questions ask about")) != std::string::npos;
        r.checks.push_back(filler ? CheckResult{"filler_phrase", Status::Fail, "contains \"the questions ask about\""}
                                  : CheckResult{"filler_phrase", Status::Pass, ""});
    }
    {
        std::vector<std::string> answers;
        for (const auto& p : group.pairs) {
            auto norm = text::normalize_loose(p.answer);
            if (!norm.empty() && std::find(answers.begin(), answers.end(), norm) == answers.end())
                answers.push_back(std::move(norm));
        }
        std::vector<std::string> missing;
        for (const auto& a : answers)
            if (!answer_appears(a, record.text)) missing.push_back(a);
        const double coverage =
            answers.empty() ? 1.0
                            : static_cast<double>(answers.size() - missing.size()) / static_cast<double>(answers.size());
        std::string detail = fmt::format("{:.3f} of {} answers", coverage, answers.size());
        if (!missing.empty()) detail += "; missing: " + text::join(missing, ", ");
        r.checks.push_back({"answer_coverage", coverage < config.answer_coverage_min ? Status::Warn : Status::Pass,
                            detail});
    }
    r.checks.push_back(length_bounds(record.text, config.qbp_min_words, config.qbp_max_words));
    {
        const auto sentences = split_sentences(record.text);
        CheckResult dup{"duplicate_sentence", Status::Pass, ""};
        for (std::size_t i = 0; i < sentences.size() && dup.status == Status::Pass; ++i)
            for (std::size_t j = i + 1; j < sentences.size(); ++j) {
                const double jac = jaccard(sentences[i], sentences[j]);
                if (jac >= config.duplicate_jaccard) {
                    dup = {"duplicate_sentence", Status::Warn,
                           fmt::format("sentences {} and {} overlap (Jaccard {:.2f})", i + 1, j + 1, jac)};
                    break;
                }
            }
        r.checks.push_back(dup);
    }
    r.overall = worst(r.checks);
    return r;
}

QcReport check_qbc(const synth::RationaleRecord& record, const QcConfig& config) {
    QcReport r;
    r.record_id = record.record_id();
    r.kind = prompt::Kind::QBC;

    const bool empty = text::trim(record.text).empty();
    r.checks.push_back(empty ? CheckResult{"nonempty", Status::Fail, "empty rationale"}
                             : CheckResult{"nonempty", Status::Pass, ""});

    {
        const auto text_tokens = text::loose_tokens(record.text);
        const auto answer_tokens = text::loose_tokens(record.answer);
        const auto text_words = text::word_count(record.text);
        const auto answer_words = text::word_count(record.answer);
        CheckResult c{"answer_restatement", Status::Pass, ""};
        if (text::normalize_loose(record.text) == text::normalize_loose(record.answer)) {
            c = {"answer_restatement", Status::Fail, "text equals the answer"};
        } else if (text_words <= answer_words + config.restatement_slack_words) {
            c = {"answer_restatement", Status::Fail,
                 fmt::format("{} words, answer has {}; no room for evidence", text_words, answer_words)};
        } else if (const auto at = find_span(text_tokens, answer_tokens); at != std::string::npos) {
            std::size_t added = 0;
            for (std::size_t i = 0; i < text_tokens.size(); ++i) {
                if (i >= at && i < at + answer_tokens.size()) continue;
                if (!stopwords().count(text_tokens[i])) ++added;
            }
            if (added < config.min_added_content_words)
                c = {"answer_restatement", Status::Warn,
                     fmt::format("answer quoted with only {} additional content words", added)};
        }
        r.checks.push_back(c);
    }
    {
        const auto q = text::loose_tokens(record.question);
        const auto t = text::loose_tokens(record.text);
        CheckResult c{"question_echo", Status::Pass, ""};
        if (!q.empty()) {
            const double frac = static_cast<double>(lcs_length(q, t)) / static_cast<double>(q.size());
            if (frac >= config.question_echo_fraction)
                c = {"question_echo", Status::Warn, fmt::format("{:.0f}% of question tokens in order", frac * 100)};
        }
        r.checks.push_back(c);
    }
    r.checks.push_back(length_bounds(record.text, config.qbc_min_words, config.qbc_max_words));
    r.overall = worst(r.checks);
    return r;
}

namespace detail {

void tally(FilterSummary& summary, const QcReport& report) {
    for (const auto& c : report.checks) ++summary.by_check[c.name][std::string(status_name(c.status))];
}

bool keep(Policy policy, Status overall) {
    switch (policy) {
        case Policy::KeepAll: return true;
        case Policy::DropFail: return overall != Status::Fail;
        case Policy::DropFailAndWarn: return overall == Status::Pass;
    }
    return true;
}

}  // namespace detail

ordered_json to_json(const QcReport& report) {
    ordered_json j;
    j["record_id"] = report.record_id;
    j["kind"] = prompt::kind_name(report.kind);
    ordered_json checks = ordered_json::array();
    for (const auto& c : report.checks)
        checks.push_back(ordered_json{{"name", c.name}, {"status", status_name(c.status)}, {"detail", c.detail}});
    j["checks"] = checks;
    j["overall"] = status_name(report.overall);
    return j;
}

QcReport qc_report_from_json(const ordered_json& j) {
    QcReport r;
    r.record_id = j.at("record_id").get<std::string>();
    r.kind = prompt::kind_from_name(j.at("kind").get<std::string>());
    for (const auto& c : j.at("checks"))
        r.checks.push_back({c.at("name").get<std::string>(), status_from_name(c.at("status").get<std::string>()),
                            c.value("detail", "")});
    r.overall = worst(r.checks);
    return r;
}

ordered_json to_json(const FilterSummary& s) {
    ordered_json j;
    j["input"] = s.input;
    j["kept"] = s.kept;
    j["dropped"] = s.dropped;
    ordered_json by = ordered_json::object();
    for (const auto& [check, statuses] : s.by_check) {
        ordered_json counts = ordered_json::object();
        for (const auto& [status, n] : statuses) counts[status] = n;
        by[check] = counts;
    }
    j["by_check"] = by;
    return j;
}

void write_reports(const std::filesystem::path& path, std::span<const QcReport> reports) {
    std::vector<std::string> lines;
    lines.reserve(reports.size());
    for (const auto& r : reports) lines.push_back(jsonl::dump(to_json(r)));
    jsonl::write_lines_atomic(path, lines);
}

}  // namespace vqasynth::qc

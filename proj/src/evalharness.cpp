#include "vqasynth/evalharness.hpp"

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "vqasynth/error.hpp"
#include "vqasynth/jsonl.hpp"
#include "vqasynth/text.hpp"

namespace vqasynth::eval {

using nlohmann::ordered_json;

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }
bool is_lower_letter(char c) { return c >= 'a' && c <= 'z'; }

std::string collapse_ws(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool gap = false;
    for (char c : s) {
        if (is_space(c)) {
            gap = !out.empty();
            continue;
        }
        if (gap) out.push_back(' ');
        gap = false;
        out.push_back(c);
    }
    return out;
}

std::string_view strip_terminal_punct(std::string_view s) {
    while (!s.empty() && (s.back() == '.' || s.back() == '?' || s.back() == '!')) {
        s.remove_suffix(1);
        s = text::trim(s);
    }
    return s;
}

// "(a) rest", "a. rest", "a) rest", "a: rest" -> "rest". The bare-letter
// forms need whitespace after the punctuation so "e.g." survives.
std::string_view strip_option_label(std::string_view s) {
    if (s.size() >= 3 && s[0] == '(' && is_lower_letter(s[1]) && s[2] == ')') {
        auto rest = text::trim(s.substr(3));
        if (!rest.empty()) return rest;
        return s;
    }
    if (s.size() >= 3 && is_lower_letter(s[0]) && (s[1] == '.' || s[1] == ')' || s[1] == ':') && is_space(s[2])) {
        auto rest = text::trim(s.substr(2));
        if (!rest.empty()) return rest;
    }
    return s;
}

std::string normalize_once(std::string_view in, bool options_present) {
    std::string s = text::nfc_lower(in);
    s = collapse_ws(text::trim(s));
    std::string_view v = strip_terminal_punct(s);
    if (options_present) v = strip_option_label(v);
    return std::string(v);
}

}  // namespace

std::string normalize(std::string_view text_in, bool options_present) {
    std::string cur = normalize_once(text_in, options_present);
    for (int guard = 0; guard < 64; ++guard) {
        std::string next = normalize_once(cur, options_present);
        if (next == cur) break;
        cur = std::move(next);
    }
    return cur;
}

std::string_view normalization_rules() {
    return "exact match after: Unicode NFC; lowercase; trim; drop trailing [.?!]; collapse whitespace; "
           "strip a leading option label (\"A.\", \"a)\", \"(a)\") when options are present. Multiple-choice "
           "resolution: exact option text > option letter > unique option substring > unresolved.";
}

// --- predictions -------------------------------------------------------------

PredictionRecord prediction_from_json(const ordered_json& j) {
    auto str = [&](const char* key) {
        auto it = j.find(key);
        if (it == j.end() || !it->is_string())
            throw Error(ErrorKind::Parse, fmt::format("prediction record: \"{}\" must be a string", key));
        return it->get<std::string>();
    };
    PredictionRecord p;
    p.dataset_id = str("dataset");
    p.video_id = str("video_id");
    p.qid = str("qid");
    p.predicted = str("predicted");
    p.gold = str("gold");
    if (auto it = j.find("options"); it != j.end() && !it->is_null()) p.options = it->get<std::vector<std::string>>();
    if (auto it = j.find("gold_index"); it != j.end() && !it->is_null()) p.gold_index = it->get<int>();
    if (auto it = j.find("question_type"); it != j.end() && !it->is_null())
        p.question_type = it->get<std::string>();
    return p;
}

ordered_json to_json(const PredictionRecord& p) {
    ordered_json j;
    j["dataset"] = p.dataset_id;
    j["video_id"] = p.video_id;
    j["qid"] = p.qid;
    j["predicted"] = p.predicted;
    j["gold"] = p.gold;
    j["options"] = p.options ? ordered_json(*p.options) : ordered_json(nullptr);
    j["gold_index"] = p.gold_index ? ordered_json(*p.gold_index) : ordered_json(nullptr);
    if (p.question_type) j["question_type"] = *p.question_type;
    return j;
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
    std::vector<PredictionRecord> out;
    for (const auto& line : jsonl::read_lines(path)) {
        try {
            out.push_back(prediction_from_json(jsonl::parse_line(line, path)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, fmt::format("{}:{}: {}", path.string(), line.number, e.what()));
        }
    }
    return out;
}

// --- scoring -----------------------------------------------------------------

std::string_view resolution_name(Resolution r) {
    switch (r) {
        case Resolution::ExactOptionText: return "exact_option_text";
        case Resolution::OptionLetter: return "option_letter";
        case Resolution::UniqueSubstring: return "unique_substring";
        case Resolution::Unresolved: return "unresolved";
    }
    return "unresolved";
}

namespace {

// Runs of ASCII letters and digits; bytes outside ASCII count as letters.
std::vector<std::string> words_of(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        const auto u = static_cast<unsigned char>(c);
        if (u >= 0x80 || std::isalnum(u)) {
            cur.push_back(c);
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

}  // namespace

OptionMatch resolve_option(std::string_view predicted, std::span<const std::string> options) {
    const std::string pred = normalize(predicted, true);
    for (std::size_t i = 0; i < options.size(); ++i)
        if (normalize(options[i], true) == pred) return {static_cast<int>(i), Resolution::ExactOptionText};

    // Bare label: "b", "(b)", "b.", "b)", "b:".
    std::string raw = text::nfc_lower(text::trim(predicted));
    std::string_view v = text::trim(raw);
    if (v.size() == 3 && v[0] == '(' && v[2] == ')') v = v.substr(1, 1);
    if (v.size() == 2 && (v[1] == '.' || v[1] == ')' || v[1] == ':')) v = v.substr(0, 1);
    if (v.size() == 1 && is_lower_letter(v[0])) {
        const auto idx = static_cast<std::size_t>(v[0] - 'a');
        if (idx < options.size()) return {static_cast<int>(idx), Resolution::OptionLetter};
    }

    const auto pred_words = words_of(pred);
    std::optional<int> hit;
    int hits = 0;
    for (std::size_t i = 0; i < options.size(); ++i) {
        const auto opt = words_of(normalize(options[i], true));
        if (!opt.empty() && std::search(pred_words.begin(), pred_words.end(), opt.begin(), opt.end()) != pred_words.end()) {
            ++hits;
            hit = static_cast<int>(i);
        }
    }
    if (hits == 1) return {hit, Resolution::UniqueSubstring};
    return {};
}

namespace {

struct Judgement {
    bool correct = false;
    std::optional<Resolution> resolution;  // set when options were present
};

Judgement judge(const PredictionRecord& p) {
    const bool opts = p.options.has_value();
    Judgement j;
    if (opts) {
        const auto match = resolve_option(p.predicted, *p.options);
        j.resolution = match.how;
        if (p.gold_index && match.index && *match.index == *p.gold_index) j.correct = true;
    }
    if (!j.correct && normalize(p.predicted, opts) == normalize(p.gold, opts)) j.correct = true;
    return j;
}

}  // namespace

bool is_correct(const PredictionRecord& p) { return judge(p).correct; }

AccuracyReport score(std::span<const PredictionRecord> preds, std::string train_source, std::string test_target) {
    AccuracyReport r;
    r.train_source = std::move(train_source);
    r.test_target = std::move(test_target);
    std::size_t with_options = 0;
    for (const auto& p : preds) {
        const auto j = judge(p);
        ++r.n;
        if (j.correct) ++r.correct;
        if (j.resolution) {
            ++with_options;
            ++r.resolutions[std::string(resolution_name(*j.resolution))];
            if (*j.resolution == Resolution::Unresolved) {
                r.unresolved_qids.push_back(p.dataset_id + "/" + p.video_id + "/" + p.qid);
                spdlog::debug("unresolved multiple-choice prediction for {}/{}: \"{}\"", p.video_id, p.qid,
                              p.predicted);
            }
        }
        if (p.question_type) {
            auto& t = r.per_question_type[*p.question_type];
            ++t.n;
            if (j.correct) ++t.correct;
        }
    }
    if (!r.unresolved_qids.empty())
        spdlog::info("{} multiple-choice predictions could not be resolved to an option", r.unresolved_qids.size());
    r.accuracy = r.n == 0 ? 0.0 : 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.n);
    for (auto& [_, t] : r.per_question_type)
        t.accuracy = t.n == 0 ? 0.0 : 100.0 * static_cast<double>(t.correct) / static_cast<double>(t.n);
    if (with_options == 0)
        r.match_mode = "string";
    else if (with_options == r.n)
        r.match_mode = "option_index";
    else
        r.match_mode = "mixed";
    return r;
}

ordered_json to_json(const AccuracyReport& r) {
    ordered_json j;
    j["normalization"] = normalization_rules();
    j["train_source"] = r.train_source;
    j["test_target"] = r.test_target;
    j["n"] = r.n;
    j["correct"] = r.correct;
    j["accuracy"] = r.accuracy;
    j["match_mode"] = r.match_mode;
    ordered_json types = ordered_json::object();
    for (const auto& [name, t] : r.per_question_type)
        types[name] = ordered_json{{"n", t.n}, {"correct", t.correct}, {"accuracy", t.accuracy}};
    j["per_question_type"] = types;
    ordered_json res = ordered_json::object();
    for (const auto& [name, c] : r.resolutions) res[name] = c;
    j["resolutions"] = res;
    j["unresolved"] = r.unresolved_qids;
    return j;
}

AccuracyReport accuracy_report_from_json(const ordered_json& j) {
    AccuracyReport r;
    r.train_source = j.value("train_source", "");
    r.test_target = j.value("test_target", "");
    r.n = j.at("n").get<std::size_t>();
    r.correct = j.at("correct").get<std::size_t>();
    r.accuracy = j.at("accuracy").get<double>();
    r.match_mode = j.value("match_mode", "string");
    if (r.correct > r.n) throw Error(ErrorKind::Validation, "accuracy report has correct > n");
    return r;
}

// --- transfer matrix -----------------------------------------------------------

TransferMatrix transfer_matrix(std::span<const AccuracyReport> cells, const std::string& baseline) {
    TransferMatrix m;
    m.baseline = baseline;
    auto index_of = [](std::vector<std::string>& names, const std::string& name) {
        auto it = std::find(names.begin(), names.end(), name);
        if (it != names.end()) return static_cast<std::size_t>(it - names.begin());
        names.push_back(name);
        return names.size() - 1;
    };
    for (const auto& c : cells) {
        index_of(m.rows, c.train_source);
        index_of(m.columns, c.test_target);
    }
    m.cells.assign(m.rows.size(), std::vector<MatrixCell>(m.columns.size()));
    for (const auto& c : cells) {
        auto& cell = m.cells[index_of(m.rows, c.train_source)][index_of(m.columns, c.test_target)];
        if (cell.accuracy)
            throw Error(ErrorKind::Validation,
                        fmt::format("duplicate cell ({}, {})", c.train_source, c.test_target));
        cell.accuracy = c.accuracy;
        cell.n = c.n;
        cell.correct = c.correct;
    }
    if (!baseline.empty()) {
        auto it = std::find(m.rows.begin(), m.rows.end(), baseline);
        if (it == m.rows.end()) throw Error(ErrorKind::Validation, "baseline row \"" + baseline + "\" not present");
        const auto& base = m.cells[static_cast<std::size_t>(it - m.rows.begin())];
        for (auto& row : m.cells)
            for (std::size_t c = 0; c < row.size(); ++c)
                if (row[c].accuracy && base[c].accuracy) row[c].delta = *row[c].accuracy - *base[c].accuracy;
    }
    auto pooled = [](std::size_t correct, std::size_t n, bool any) -> std::optional<double> {
        if (!any) return std::nullopt;
        return n == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(n);
    };
    for (const auto& row : m.cells) {
        std::size_t n = 0, correct = 0;
        bool any = false;
        for (const auto& cell : row)
            if (cell.accuracy) {
                any = true;
                n += cell.n;
                correct += cell.correct;
            }
        m.row_totals.push_back(pooled(correct, n, any));
    }
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
        std::size_t n = 0, correct = 0;
        bool any = false;
        for (const auto& row : m.cells)
            if (row[c].accuracy) {
                any = true;
                n += row[c].n;
                correct += row[c].correct;
            }
        m.column_totals.push_back(pooled(correct, n, any));
    }
    return m;
}

namespace {
std::string format_delta(double d) {
    // Avoid printing "-0.0" for tiny negative deltas.
    if (std::fabs(d) < 0.05) d = 0.0;
    return fmt::format("({:+.1f})", d);
}
ordered_json opt_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }
}  // namespace

ordered_json to_json(const TransferMatrix& m) {
    ordered_json j;
    j["rows"] = m.rows;
    j["columns"] = m.columns;
    j["baseline"] = m.baseline;
    ordered_json grid = ordered_json::array();
    for (const auto& row : m.cells) {
        ordered_json r = ordered_json::array();
        for (const auto& cell : row) {
            if (!cell.accuracy) {
                r.push_back(nullptr);
                continue;
            }
            r.push_back(ordered_json{{"accuracy", *cell.accuracy},
                                     {"delta", opt_json(cell.delta)},
                                     {"n", cell.n},
                                     {"correct", cell.correct}});
        }
        grid.push_back(r);
    }
    j["cells"] = grid;
    ordered_json rt = ordered_json::array(), ct = ordered_json::array();
    for (const auto& v : m.row_totals) rt.push_back(opt_json(v));
    for (const auto& v : m.column_totals) ct.push_back(opt_json(v));
    j["row_totals"] = rt;
    j["column_totals"] = ct;
    return j;
}

std::string to_table(const TransferMatrix& m) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"train \\ test"};
    for (const auto& c : m.columns) header.push_back(c);
    header.push_back("total");
    rows.push_back(header);
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
        std::vector<std::string> line{m.rows[r]};
        for (const auto& cell : m.cells[r]) {
            if (!cell.accuracy) {
                line.push_back("--");
                continue;
            }
            std::string s = fmt::format("{:.1f}", *cell.accuracy);
            if (cell.delta && m.rows[r] != m.baseline) s += " " + format_delta(*cell.delta);
            line.push_back(s);
        }
        line.push_back(m.row_totals[r] ? fmt::format("{:.1f}", *m.row_totals[r]) : "--");
        rows.push_back(line);
    }
    std::vector<std::string> totals{"total"};
    for (const auto& v : m.column_totals) totals.push_back(v ? fmt::format("{:.1f}", *v) : "--");
    totals.push_back("");
    rows.push_back(totals);

    std::vector<std::size_t> widths(header.size(), 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
    std::string out;
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            line += fmt::format("{:<{}}", row[c], widths[c]);
            if (c + 1 < row.size()) line += "  ";
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    return out;
}

std::string to_csv(const TransferMatrix& m) {
    std::string out = "train_source,test_target,accuracy,delta,n,correct\n";
    for (std::size_t r = 0; r < m.rows.size(); ++r)
        for (std::size_t c = 0; c < m.columns.size(); ++c) {
            const auto& cell = m.cells[r][c];
            out += fmt::format("{},{},{},{},{},{}\n", m.rows[r], m.columns[c],
                               cell.accuracy ? fmt::format("{:.4f}", *cell.accuracy) : "",
                               cell.delta ? fmt::format("{:.4f}", *cell.delta) : "", cell.n, cell.correct);
        }
    return out;
}

// --- convergence ------------------------------------------------------------------

namespace {

std::optional<double> parse_double(std::string_view s) {
    s = text::trim(s);
    if (s.empty()) return std::nullopt;
    try {
        std::size_t pos = 0;
        const double v = std::stod(std::string(s), &pos);
        if (pos != s.size()) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::optional<long> parse_long(std::string_view s) {
    s = text::trim(s);
    long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace

std::vector<ConvergencePoint> read_series(const std::filesystem::path& path) {
    std::vector<ConvergencePoint> out;
    bool first = true;
    for (const auto& line : jsonl::read_lines(path)) {
        const auto comma = line.text.find(',');
        std::optional<long> step;
        std::optional<double> acc;
        if (comma != std::string::npos) {
            step = parse_long(std::string_view(line.text).substr(0, comma));
            acc = parse_double(std::string_view(line.text).substr(comma + 1));
        }
        if (!step || !acc) {
            if (first) {
                first = false;
                continue;  // header
            }
            throw Error(ErrorKind::Parse,
                        fmt::format("{}:{}: expected \"step,accuracy\"", path.string(), line.number));
        }
        first = false;
        out.push_back({*step, *acc});
    }
    validate_series(out);
    return out;
}

void validate_series(std::span<const ConvergencePoint> series) {
    for (std::size_t i = 1; i < series.size(); ++i)
        if (series[i].step <= series[i - 1].step)
            throw Error(ErrorKind::Validation,
                        fmt::format("steps must be strictly increasing ({} follows {})", series[i].step,
                                    series[i - 1].step));
}

std::vector<double> smooth(std::span<const ConvergencePoint> series, int window) {
    if (window < 1) throw Error(ErrorKind::Validation, "smoothing window must be >= 1");
    const auto n = static_cast<long>(series.size());
    const long left = (window - 1) / 2;
    const long right = window / 2;
    std::vector<double> out(series.size());
    for (long i = 0; i < n; ++i) {
        const long lo = std::max(0L, i - left), hi = std::min(n - 1, i + right);
        double sum = 0.0;
        for (long k = lo; k <= hi; ++k) sum += series[static_cast<std::size_t>(k)].accuracy;
        out[static_cast<std::size_t>(i)] = sum / static_cast<double>(hi - lo + 1);
    }
    return out;
}

Plateau find_plateau(std::span<const ConvergencePoint> series, int smoothing_window, double delta) {
    if (series.empty()) throw Error(ErrorKind::Validation, "empty convergence series");
    if (smoothing_window < 1) throw Error(ErrorKind::Validation, "smoothing window must be >= 1");
    if (series.size() < static_cast<std::size_t>(smoothing_window))
        throw Error(ErrorKind::Validation, fmt::format("series has {} points, fewer than the smoothing window {}",
                                                       series.size(), smoothing_window));
    validate_series(series);
    const auto s = smooth(series, smoothing_window);
    Plateau p;
    p.final_accuracy = s.back();
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] >= p.final_accuracy - delta) {
            p.plateau_step = series[i].step;
            break;
        }
    return p;
}

ConvergenceReport analyze_convergence(const std::map<std::string, std::vector<ConvergencePoint>>& series,
                                      const std::string& baseline, const std::string& treatment,
                                      int smoothing_window, double delta) {
    ConvergenceReport r;
    r.baseline = baseline;
    r.treatment = treatment;
    r.smoothing_window = smoothing_window;
    r.delta = delta;
    for (const auto& [name, points] : series) r.series[name] = find_plateau(points, smoothing_window, delta);
    if (!baseline.empty() && !treatment.empty()) {
        const auto b = r.series.find(baseline), t = r.series.find(treatment);
        if (b == r.series.end()) throw Error(ErrorKind::NotFound, "no series named \"" + baseline + "\"");
        if (t == r.series.end()) throw Error(ErrorKind::NotFound, "no series named \"" + treatment + "\"");
        if (t->second.plateau_step > 0)
            r.speedup = static_cast<double>(b->second.plateau_step) / static_cast<double>(t->second.plateau_step);
    }
    return r;
}

ordered_json to_json(const ConvergenceReport& r) {
    ordered_json j;
    j["smoothing_window"] = r.smoothing_window;
    j["delta"] = r.delta;
    ordered_json s = ordered_json::object();
    for (const auto& [name, p] : r.series)
        s[name] = ordered_json{{"plateau_step", p.plateau_step}, {"final_accuracy", p.final_accuracy}};
    j["series"] = s;
    j["baseline"] = r.baseline;
    j["treatment"] = r.treatment;
    j["speedup"] = r.speedup ? ordered_json(*r.speedup) : ordered_json(nullptr);
    return j;
}

}  // namespace vqasynth::eval

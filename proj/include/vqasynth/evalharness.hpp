#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace vqasynth::eval {

// Exact-match normalization:
//   NFC, lowercase, trim, drop trailing [.?!], collapse internal whitespace,
//   and, when options are in play, strip a leading option label such as
//   "A." / "b)" / "(c)".
// Steps are repeated until a fixed point so the function is idempotent.
std::string normalize(std::string_view text, bool options_present = false);

// Header text describing the normalization rules, embedded in reports.
std::string_view normalization_rules();

struct PredictionRecord {
    std::string dataset_id;
    std::string video_id;
    std::string qid;
    std::string predicted;
    std::string gold;
    std::optional<std::vector<std::string>> options;
    std::optional<int> gold_index;
    // Not part of the prediction file proper; filled from the corpus when
    // a per-type breakdown is wanted.
    std::optional<std::string> question_type;
};

PredictionRecord prediction_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json to_json(const PredictionRecord& p);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

enum class Resolution { ExactOptionText, OptionLetter, UniqueSubstring, Unresolved };

std::string_view resolution_name(Resolution r);

struct OptionMatch {
    std::optional<int> index;
    Resolution how = Resolution::Unresolved;
};

// Maps a free-form prediction onto an option index: exact option text, then
// option letter, then containment of exactly one option.
OptionMatch resolve_option(std::string_view predicted, std::span<const std::string> options);

struct TypeAccuracy {
    std::size_t n = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
};

struct AccuracyReport {
    std::string train_source;
    std::string test_target;
    std::size_t n = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;  // percent
    std::map<std::string, TypeAccuracy> per_question_type;
    // How records were judged: "string" (no options anywhere), "option_index"
    // (every record had options) or "mixed".
    std::string match_mode = "string";
    std::map<std::string, std::size_t> resolutions;
    std::vector<std::string> unresolved_qids;
};

AccuracyReport score(std::span<const PredictionRecord> preds, std::string train_source = {},
                     std::string test_target = {});

bool is_correct(const PredictionRecord& p);

nlohmann::ordered_json to_json(const AccuracyReport& r);
AccuracyReport accuracy_report_from_json(const nlohmann::ordered_json& j);

// --- transfer matrix --------------------------------------------------------

struct MatrixCell {
    std::optional<double> accuracy;
    std::optional<double> delta;  // vs the baseline row in the same column
    std::size_t n = 0;
    std::size_t correct = 0;
};

struct TransferMatrix {
    std::vector<std::string> rows;     // train sources, first-seen order
    std::vector<std::string> columns;  // test targets, first-seen order
    std::string baseline;
    std::vector<std::vector<MatrixCell>> cells;
    // Pooled accuracy (sum correct / sum n) over the present cells.
    std::vector<std::optional<double>> row_totals;
    std::vector<std::optional<double>> column_totals;
};

// Missing cells are kept as gaps; an empty baseline name disables deltas.
// Throws Error{Validation} when the baseline row is named but absent.
TransferMatrix transfer_matrix(std::span<const AccuracyReport> cells, const std::string& baseline = {});

nlohmann::ordered_json to_json(const TransferMatrix& m);
std::string to_table(const TransferMatrix& m);
std::string to_csv(const TransferMatrix& m);

// --- convergence -------------------------------------------------------------

struct ConvergencePoint {
    long step = 0;
    double accuracy = 0.0;
};

// Parses "step,accuracy" lines; a non-numeric first line is treated as a
// header. Steps must be strictly increasing.
std::vector<ConvergencePoint> read_series(const std::filesystem::path& path);
void validate_series(std::span<const ConvergencePoint> series);

// Centered moving average; the window is truncated at both edges.
std::vector<double> smooth(std::span<const ConvergencePoint> series, int window);

struct Plateau {
    long plateau_step = 0;
    double final_accuracy = 0.0;
};

Plateau find_plateau(std::span<const ConvergencePoint> series, int smoothing_window = 3, double delta = 0.5);

struct ConvergenceReport {
    std::map<std::string, Plateau> series;
    std::optional<double> speedup;  // plateau(baseline) / plateau(treatment)
    std::string baseline;
    std::string treatment;
    int smoothing_window = 3;
    double delta = 0.5;
};

ConvergenceReport analyze_convergence(const std::map<std::string, std::vector<ConvergencePoint>>& series,
                                      const std::string& baseline, const std::string& treatment,
                                      int smoothing_window = 3, double delta = 0.5);

nlohmann::ordered_json to_json(const ConvergenceReport& r);

}  // namespace vqasynth::eval

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vqasynth/corpus.hpp"
#include "vqasynth/evalharness.hpp"
#include "vqasynth/humaneval.hpp"

namespace fixtures {

std::filesystem::path data_dir();
std::filesystem::path golden_dir();
std::string read_file(const std::filesystem::path& p);

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "vqasynth");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// A corpus with exactly `videos` groups and `qa_total` pairs. Group sizes are
// spread around the mean; when with_overflow is set a few groups exceed 30.
std::vector<vqasynth::corpus::QaPair> scaled_corpus(const std::string& dataset, std::size_t videos,
                                                    std::size_t qa_total, std::uint64_t seed,
                                                    bool with_overflow = true);

std::vector<vqasynth::corpus::QaPair> snowmobile_pairs();

// Linear rise of `slope` points per step every `spacing` steps, reaching
// `plateau_acc` exactly at `plateau_step`, then flat until `last_step`.
std::vector<vqasynth::eval::ConvergencePoint> plateau_curve(long plateau_step, double plateau_acc, double slope,
                                                            long spacing, long last_step);

void write_series(const std::filesystem::path& path, const std::vector<vqasynth::eval::ConvergencePoint>& s);

// Integer scores in {3,4,5} drawn from the distribution whose moments are
// (mean, std); redraws with the next seed until the sample's mean and
// population std round to the targets at 2 d.p. Throws if infeasible.
std::vector<int> engineer_scores(double mean, double std, std::size_t n, std::uint64_t seed,
                                 int max_tries = 100000);

// Randomized prediction records: free-form answers with case, spacing and
// punctuation noise, and multiple-choice records answered by option text,
// letter, labelled text, or a sentence embedding one or two options.
std::vector<vqasynth::eval::PredictionRecord> random_predictions(std::size_t n, std::uint64_t seed);

// The 200 evaluation items (100 per method) used by the rating fixtures.
std::vector<vqasynth::human::EvalItem> rating_items(std::size_t per_method = 100);

}  // namespace fixtures

namespace fixtures {

// Runs the quality gate over tests/data/qc and scores "overall != pass"
// against the planted violations listed in its manifest.
struct QcFixtureScore {
    std::size_t records = 0;
    std::size_t planted = 0;
    std::size_t flagged = 0;
    std::size_t true_positives = 0;
    double precision = 0.0;
    double recall = 0.0;
    std::vector<std::string> false_positives;
    std::vector<std::string> misses;  // planted but not flagged, or flagged by another check
};

QcFixtureScore score_qc_fixture();

}  // namespace fixtures

#include "vqasynth/emitter.hpp"

namespace fixtures {

// `n` distinct training samples, alternating origins across a few datasets.
std::vector<vqasynth::emit::TrainingSample> synthetic_samples(std::size_t n);

}  // namespace fixtures

namespace fixtures {

// One QBP factual-consistency rating per (item, rater) over rating_items(),
// scores from engineer_scores(4.21, 0.55, ...) in item-major order.
std::vector<vqasynth::human::RatingRecord> engineered_ratings(const std::vector<vqasynth::human::EvalItem>& items,
                                                              std::uint64_t seed = 7);

}  // namespace fixtures

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fixtures.hpp"
#include "oracle_scorer.hpp"
#include "vqasynth/corpus.hpp"
#include "vqasynth/emitter.hpp"
#include "vqasynth/evalharness.hpp"
#include "vqasynth/humaneval.hpp"
#include "vqasynth/jsonl.hpp"
#include "vqasynth/promptkit.hpp"
#include "vqasynth/synthgen.hpp"

using namespace vqasynth;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kStatsSecondsMax = 5.0;
constexpr double kSynthSecondsMax = 60.0;
constexpr double kSpeedupTarget = 2.73;
constexpr double kSpeedupTolerance = 0.05;
constexpr double kShardTolerance = 1e-9;
constexpr double kQcPrecisionMin = 1.0;
constexpr double kQcRecallMin = 1.0;
constexpr std::size_t kOracleRecords = 1000;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

prompt::PromptRenderer renderer() { return prompt::PromptRenderer(prompt::TemplateSet::load_default()); }

synth::SynthConfig fast_config(int concurrency = 8) {
    synth::SynthConfig c;
    c.model_id = "mock-model";
    c.concurrency = concurrency;
    c.sleep = [](std::chrono::milliseconds) {};
    return c;
}

synth::MockBackend synthetic_backend(std::function<void(std::size_t)> on_call = {}) {
    synth::MockBackend::Options o;
    o.on_missing = synth::MockBackend::OnMissing::Synthetic;
    o.on_call = std::move(on_call);
    return synth::MockBackend({}, o);
}

// [1] Corpus statistics at three scales.
Outcome stats_scales() {
    struct Case {
        const char* name;
        std::size_t videos, qa;
        const char* mean;
    };
    const Case cases[] = {{"NExT-QA", 3800, 34000, "8.95"}, {"STAR", 3000, 45000, "15.00"}, {"CLEVRER", 2000, 7000, "3.50"}};
    std::vector<corpus::QaPair> all;
    for (const auto& c : cases) {
        auto pairs = fixtures::scaled_corpus(c.name, c.videos, c.qa, c.videos);
        all.insert(all.end(), pairs.begin(), pairs.end());
    }
    fixtures::TempDir dir;
    corpus::write_corpus(dir / "corpus.jsonl", all);
    const auto t0 = Clock::now();
    const auto pairs = corpus::ingest(dir / "corpus.jsonl");
    const auto stats = corpus::compute_stats(corpus::group(pairs));
    const auto table = corpus::to_table(stats);
    const double secs = seconds_since(t0);
    bool ok = secs < kStatsSecondsMax;
    for (const auto& c : cases) {
        const auto row = fmt::format("{} {} {} {}", c.name, c.videos, c.qa, c.mean);
        ok = ok && table.find(row) != std::string::npos;
    }
    return {ok, fmt::format("rows match, {:.2f}s (limit {:.0f}s)", secs, kStatsSecondsMax)};
}

// [2] One narrative per group and one rationale per pair.
Outcome synthesis_cardinality() {
    struct Size {
        std::size_t videos, qa;
    };
    const Size sizes[] = {{1, 1}, {250, 2000}, {3800, 34000}};
    std::string detail;
    bool ok = true;
    for (const auto& s : sizes) {
        const auto pairs = fixtures::scaled_corpus("CARD", s.videos, s.qa, 17);
        const auto groups = corpus::group(pairs);
        auto backend = synthetic_backend();
        const auto t0 = Clock::now();
        const auto qbp = synth::synthesize_qbp(groups, backend, renderer(), fast_config());
        const auto qbc = synth::synthesize_qbc(pairs, backend, renderer(), fast_config());
        const double secs = seconds_since(t0);
        const bool this_ok = qbp.records.size() == groups.size() && qbp.records.size() == s.videos &&
                             qbc.records.size() == s.qa && secs < kSynthSecondsMax;
        ok = ok && this_ok;
        detail += fmt::format("{}{}/{} -> {}/{} in {:.1f}s", detail.empty() ? "" : "; ", s.videos, s.qa,
                              qbp.records.size(), qbc.records.size(), secs);
    }
    return {ok, detail};
}

// [3] Snowmobile prompt and replayed narrative match the golden files.
Outcome golden_prompt() {
    const auto groups = corpus::group(fixtures::snowmobile_pairs());
    const auto r = renderer();
    const auto p = r.render_qbp(groups.at(0));
    const auto golden_prompt = fixtures::read_file(fixtures::golden_dir() / "snowmobile_qbp.txt");
    auto golden_narrative = fixtures::read_file(fixtures::golden_dir() / "snowmobile_narrative.txt");
    if (!golden_narrative.empty() && golden_narrative.back() == '\n') golden_narrative.pop_back();
    synth::MockBackend backend(synth::MockBackend::load_replay(fixtures::data_dir() / "snowmobile" / "replay.json"), {});
    const auto run = synth::synthesize_qbp(groups, backend, r, fast_config(1));
    const bool prompt_ok = p.user_text == golden_prompt;
    const bool hash_ok = p.prompt_hash == "3ca5f306cd43e5871861ca1adf7362412e140bb32e2991a37cdf91b667adba04";
    const bool narrative_ok = run.records.size() == 1 && run.records[0].text == golden_narrative;
    return {prompt_ok && hash_ok && narrative_ok,
            fmt::format("prompt {}, hash {}, narrative {}", prompt_ok ? "identical" : "differs",
                        hash_ok ? "matches" : "differs", narrative_ok ? "identical" : "differs")};
}

// [4] Interrupt after 50 of 100 calls, resume, compare with an uninterrupted run.
Outcome resume_after_kill() {
    const auto groups = corpus::group(fixtures::scaled_corpus("RES", 100, 400, 23, false));
    auto ref_backend = synthetic_backend();
    const auto reference = synth::synthesize_qbp(groups, ref_backend, renderer(), fast_config());

    fixtures::TempDir dir;
    std::atomic<bool> stop{false};
    auto first_backend = synthetic_backend([&](std::size_t n) {
        if (n == 50) stop = true;
    });
    auto cfg = fast_config(1);
    cfg.state_dir = dir / "state";
    cfg.stop = &stop;
    const auto first = synth::synthesize_qbp(groups, first_backend, renderer(), cfg);
    auto second_backend = synthetic_backend();
    cfg.stop = nullptr;
    const auto second = synth::synthesize_qbp(groups, second_backend, renderer(), cfg);

    auto strip = [](std::vector<synth::NarrativeRecord> rs) {
        std::string out;
        for (auto& r : rs) {
            r.created_at.clear();
            out += jsonl::dump(synth::to_json(r)) + "\n";
        }
        return out;
    };
    const bool same = strip(second.records) == strip(reference.records);
    const bool ok = first.interrupted && first_backend.calls() == 50 && second_backend.calls() == 50 && same;
    return {ok, fmt::format("first run {} calls, resume {} calls, output {}", first_backend.calls(),
                            second_backend.calls(), same ? "identical" : "differs")};
}

// [5] Planted QC violations.
Outcome qc_planted() {
    const auto s = fixtures::score_qc_fixture();
    const bool ok = s.precision >= kQcPrecisionMin && s.recall >= kQcRecallMin && s.planted == 7 && s.records == 100;
    return {ok, fmt::format("precision {:.2f} recall {:.2f} ({} flagged, {} planted)", s.precision, s.recall,
                            s.flagged, s.planted)};
}

// [6] Scorer agrees with the independent reference scorer.
Outcome oracle_agreement() {
    const auto preds = fixtures::random_predictions(kOracleRecords, 2024);
    std::vector<oracle::Record> ors;
    std::size_t agree = 0;
    for (const auto& p : preds) {
        ors.push_back({p.predicted, p.gold, p.options, p.gold_index});
        agree += eval::is_correct(p) == oracle::correct(ors.back());
    }
    const double lib = eval::score(preds).accuracy;
    const double ref = oracle::accuracy_percent(ors);
    return {agree == preds.size() && lib == ref,
            fmt::format("{}/{} records agree, accuracy {:.2f} vs {:.2f}", agree, preds.size(), lib, ref)};
}

// [7] Convergence speedup on engineered curves.
Outcome convergence_speedup() {
    const std::map<std::string, std::vector<eval::ConvergencePoint>> series = {
        {"baseline", fixtures::plateau_curve(600, 60.0, 0.05, 20, 1000)},
        {"qbp", fixtures::plateau_curve(220, 62.0, 0.05, 20, 1000)}};
    const auto r = eval::analyze_convergence(series, "baseline", "qbp");
    const double speedup = r.speedup.value_or(0.0);
    return {std::abs(speedup - kSpeedupTarget) <= kSpeedupTolerance,
            fmt::format("plateaus {} and {}, speedup {:.3f} (target {:.2f} +/- {:.2f})",
                        r.series.at("baseline").plateau_step, r.series.at("qbp").plateau_step, speedup,
                        kSpeedupTarget, kSpeedupTolerance)};
}

// [8] Human-evaluation aggregation.
Outcome human_eval() {
    using namespace vqasynth::human;
    const auto items = fixtures::rating_items();
    const auto ratings = fixtures::engineered_ratings(items);
    RatingStore store(items, std::nullopt);
    for (const auto& r : ratings) store.submit(r);
    const auto summary = store.summary();
    const auto& cell = summary.cells.at({Method::QBP, Dimension::FactualConsistency});
    const auto shown = fmt::format("{:.2f}\xc2\xb1{:.2f}", cell.mean, cell.std);

    std::map<std::string, Method> methods;
    for (const auto& it : items) methods[it.item_id] = it.method;
    const std::span<const RatingRecord> all(ratings);
    auto merged = cell_moments(all.first(137), methods);
    for (const auto& [k, m] : cell_moments(all.subspan(137), methods)) merged[k].merge(m);
    const auto a = summary_from_moments(merged).cells.at({Method::QBP, Dimension::FactualConsistency});
    const double shard_diff = std::max(std::abs(a.mean - cell.mean), std::abs(a.std - cell.std));

    int rejected = 0;
    for (auto bad : {RatingRecord{"QBP:FIX/v000", "rater1", Dimension::Fluency, 6, ""},
                     RatingRecord{"QBP:FIX/v000", "rater1", Dimension::Fluency, 0, ""},
                     RatingRecord{"QBP:FIX/v000", "rater1", Dimension::VisualGrounding, 3, ""},
                     RatingRecord{"QBC:FIX/v000/q1", "rater1", Dimension::LogicalCoherence, 3, ""}}) {
        try {
            store.submit(bad);
        } catch (const Error& e) {
            rejected += e.kind() == ErrorKind::Validation;
        }
    }
    const bool ok = shown == "4.21\xc2\xb1" "0.55" && shard_diff <= kShardTolerance && rejected == 4 &&
                    store.ratings().size() == ratings.size();
    return {ok, fmt::format("QBP FactualConsistency {}, shard diff {:.1e}, {}/4 invalid ratings rejected", shown,
                            shard_diff, rejected)};
}

// [9] Seeded subsets.
Outcome subsets() {
    const auto all = fixtures::synthetic_samples(30000);
    std::set<std::string> universe;
    for (const auto& s : all) universe.insert(s.sample_id);
    bool ok = true;
    std::string detail;
    for (std::size_t size : {3500u, 5000u, 10000u, 29000u}) {
        const auto a = emit::subset(all, size, 1234);
        const auto b = emit::subset(all, size, 1234);
        bool same = a.size() == size && a == b;
        bool contained = true;
        std::set<std::string> seen;
        for (const auto& s : a) contained = contained && universe.count(s.sample_id) && seen.insert(s.sample_id).second;
        ok = ok && same && contained;
        detail += fmt::format("{}{}:{}", detail.empty() ? "" : " ", size, same && contained ? "ok" : "bad");
    }
    return {ok, detail};
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"corpus statistics at three dataset scales", stats_scales},
        {"synthesis cardinality", synthesis_cardinality},
        {"golden prompt and replayed narrative", golden_prompt},
        {"resume after interruption", resume_after_kill},
        {"quality gate on planted violations", qc_planted},
        {"scorer agrees with reference scorer", oracle_agreement},
        {"convergence speedup", convergence_speedup},
        {"human evaluation aggregation", human_eval},
        {"deterministic training subsets", subsets},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}

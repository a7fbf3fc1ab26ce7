#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vqasynth/qualitygate.hpp"
#include "vqasynth/rng.hpp"
#include "vqasynth/synthgen.hpp"

namespace fs = std::filesystem;
using vqasynth::corpus::QaPair;

namespace fixtures {

fs::path data_dir() { return fs::path(VQASYNTH_TEST_DIR) / "data"; }
fs::path golden_dir() { return fs::path(VQASYNTH_TEST_DIR) / "golden"; }

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TempDir::TempDir(const std::string& tag) {
    std::random_device rd;
    for (int i = 0; i < 100; ++i) {
        auto p = fs::temp_directory_path() / fmt::format("{}-{:08x}{:08x}", tag, rd(), rd());
        if (fs::create_directory(p)) {
            path_ = p;
            return;
        }
    }
    throw std::runtime_error("cannot create temp dir");
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

namespace {

const char* kSubjects[] = {"the man",  "the woman", "the boy",    "the girl", "the dog",
                           "the chef", "the baby",  "the driver", "the cat",  "the player"};
const char* kVerbs[] = {"holding", "doing", "looking at", "carrying", "pointing at", "eating", "watching"};
const char* kAnswers[] = {"a ball",        "a cup",      "the camera", "running",   "a red bag",  "sitting down",
                          "to get food",   "a toy car",  "laughing",   "the table", "his friend", "a blue kite",
                          "playing games", "the window", "a book",     "waving"};
const char* kTypes[] = {"descriptive", "temporal", "causal"};

}  // namespace

std::vector<QaPair> scaled_corpus(const std::string& dataset, std::size_t videos, std::size_t qa_total,
                                  std::uint64_t seed, bool with_overflow) {
    if (videos == 0 || qa_total < videos) throw std::invalid_argument("need qa_total >= videos > 0");
    std::vector<std::size_t> sizes(videos, qa_total / videos);
    for (std::size_t i = 0; i < qa_total % videos; ++i) ++sizes[i];
    vqasynth::Xoshiro256 rng(seed);
    // Spread: move single pairs between random videos, keeping every size >= 1.
    for (std::size_t k = 0; k < videos * 2; ++k) {
        auto a = rng.below(videos), b = rng.below(videos);
        if (a != b && sizes[a] > 1) {
            --sizes[a];
            ++sizes[b];
        }
    }
    if (with_overflow && videos > 100) {
        for (std::size_t v = 0; v < 3; ++v) {
            std::size_t need = 35 + v * 3;
            std::size_t donor = 3;
            while (sizes[v] < need) {
                if (sizes[donor] > 1) {
                    --sizes[donor];
                    ++sizes[v];
                }
                ++donor;
            }
        }
    }
    std::vector<QaPair> out;
    out.reserve(qa_total);
    for (std::size_t v = 0; v < videos; ++v) {
        const auto vid = fmt::format("v{:05d}", v);
        for (std::size_t q = 0; q < sizes[v]; ++q) {
            QaPair p;
            p.dataset_id = dataset;
            p.video_id = vid;
            p.video_uri = fmt::format("file:///videos/{}/{}.mp4", dataset, vid);
            p.qid = fmt::format("q{}", q + 1);
            p.question = fmt::format("What is {} {} at moment {}?", kSubjects[rng.below(10)], kVerbs[rng.below(7)], q);
            p.answer = kAnswers[rng.below(16)];
            p.question_type = kTypes[rng.below(3)];
            out.push_back(std::move(p));
        }
    }
    return out;
}

std::vector<QaPair> snowmobile_pairs() { return vqasynth::corpus::ingest(data_dir() / "snowmobile" / "corpus.jsonl"); }

std::vector<vqasynth::eval::ConvergencePoint> plateau_curve(long plateau_step, double plateau_acc, double slope,
                                                            long spacing, long last_step) {
    std::vector<vqasynth::eval::ConvergencePoint> out;
    for (long s = spacing; s <= last_step; s += spacing) {
        const double acc = s >= plateau_step ? plateau_acc : plateau_acc - slope * static_cast<double>(plateau_step - s);
        out.push_back({s, acc});
    }
    return out;
}

void write_series(const fs::path& path, const std::vector<vqasynth::eval::ConvergencePoint>& s) {
    std::ofstream out(path);
    out << "step,accuracy\n";
    for (const auto& p : s) out << p.step << ',' << fmt::format("{:.4f}", p.accuracy) << '\n';
}

std::vector<int> engineer_scores(double mean, double std, std::size_t n, std::uint64_t seed, int max_tries) {
    // With d = x - 4 in {-1, 0, 1}: E[d] = p5 - p3, E[d^2] = p5 + p3.
    const double ed = mean - 4.0;
    const double ed2 = std * std + ed * ed;
    const double p5 = (ed2 + ed) / 2.0, p3 = (ed2 - ed) / 2.0, p4 = 1.0 - p5 - p3;
    if (p5 < 0 || p3 < 0 || p4 < 0) throw std::invalid_argument("moments not reachable on {3,4,5}");
    auto round2 = [](double x) { return std::round(x * 100.0) / 100.0; };
    for (int t = 0; t < max_tries; ++t) {
        vqasynth::Xoshiro256 rng(seed + static_cast<std::uint64_t>(t));
        std::vector<int> scores(n);
        double sum = 0, sq = 0;
        for (auto& s : scores) {
            const double u = rng.uniform();
            s = u < p3 ? 3 : (u < p3 + p4 ? 4 : 5);
            sum += s;
            sq += static_cast<double>(s) * s;
        }
        const double m = sum / static_cast<double>(n);
        const double sd = std::sqrt(std::max(0.0, sq / static_cast<double>(n) - m * m));
        if (round2(m) == round2(mean) && round2(sd) == round2(std)) return scores;
    }
    throw std::runtime_error("no sample matched the target moments");
}

namespace {

const char* kWords[] = {"red", "ball", "dog", "running", "kitchen", "to eat", "the man", "a cup", "sits", "blue car",
                        "yes", "no", "two", "three", "left", "right"};

std::string noisy(const std::string& s, vqasynth::Xoshiro256& rng) {
    std::string out;
    if (rng.below(4) == 0) out += "  ";
    for (char c : s) {
        if (c == ' ' && rng.below(3) == 0) {
            out += rng.below(2) ? "\t " : "   ";
            continue;
        }
        out.push_back(rng.below(3) == 0 ? static_cast<char>(std::toupper(static_cast<unsigned char>(c))) : c);
    }
    switch (rng.below(6)) {
    case 0: out += "."; break;
    case 1: out += " ?"; break;
    case 2: out += "!!"; break;
    case 3: out += " "; break;
    default: break;
    }
    return out;
}

}  // namespace

std::vector<vqasynth::eval::PredictionRecord> random_predictions(std::size_t n, std::uint64_t seed) {
    vqasynth::Xoshiro256 rng(seed);
    std::vector<vqasynth::eval::PredictionRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        vqasynth::eval::PredictionRecord p;
        p.dataset_id = "RAND";
        p.video_id = fmt::format("v{}", i / 5);
        p.qid = fmt::format("q{}", i);
        if (rng.below(3) == 0) {
            p.gold = kWords[rng.below(16)];
            p.predicted = noisy(rng.below(2) ? p.gold : std::string(kWords[rng.below(16)]), rng);
        } else {
            const auto k = 2 + rng.below(4);
            std::vector<std::string> opts;
            while (opts.size() < k) {
                std::string w = kWords[rng.below(16)];
                if (rng.below(3) == 0) w += std::string(" ") + kWords[rng.below(16)];
                if (std::find(opts.begin(), opts.end(), w) == opts.end()) opts.push_back(w);
            }
            const int gold = static_cast<int>(rng.below(k));
            const int pick = rng.below(3) == 0 ? static_cast<int>(rng.below(k)) : gold;
            const char letter = static_cast<char>('a' + pick);
            const std::string upper(1, static_cast<char>('A' + pick));
            switch (rng.below(9)) {
            case 0: p.predicted = noisy(opts[pick], rng); break;
            case 1: p.predicted = std::string(1, letter); break;
            case 2: p.predicted = "(" + upper + ")"; break;
            case 3: p.predicted = upper + "."; break;
            case 4: p.predicted = std::string(1, letter) + ") " + noisy(opts[pick], rng); break;
            case 5: p.predicted = "I think it is " + opts[pick]; break;
            case 6: p.predicted = "either " + opts[0] + " or " + opts[1]; break;
            case 7: p.predicted = std::string(1, static_cast<char>('a' + k + rng.below(3))); break;
            default: p.predicted = "(" + upper + ") " + opts[pick] + "?"; break;
            }
            p.options = opts;
            p.gold_index = gold;
            p.gold = opts[gold];
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<vqasynth::human::EvalItem> rating_items(std::size_t per_method) {
    using namespace vqasynth::human;
    std::vector<EvalItem> items;
    for (std::size_t i = 0; i < per_method; ++i) {
        EvalItem it;
        it.item_id = fmt::format("QBP:FIX/v{:03d}", i);
        it.method = Method::QBP;
        it.text = "A narrative.";
        vqasynth::corpus::QuestionGroup g{"FIX", fmt::format("v{:03d}", i), "file:///v.mp4", {}};
        g.pairs.push_back({"FIX", g.video_id, g.video_uri, "q1", "What?", "This.", {}, {}, {}});
        it.group = g;
        it.assigned_evaluators = {"rater1", "rater2", "rater3"};
        items.push_back(std::move(it));
    }
    for (std::size_t i = 0; i < per_method; ++i) {
        EvalItem it;
        it.item_id = fmt::format("QBC:FIX/v{:03d}/q1", i);
        it.method = Method::QBC;
        it.text = "A rationale.";
        it.qbc = QbcContext{"What?", "This.", "file:///v.mp4", {}};
        it.assigned_evaluators = {"rater1", "rater2", "rater3"};
        items.push_back(std::move(it));
    }
    return items;
}

}  // namespace fixtures

namespace fixtures {

QcFixtureScore score_qc_fixture() {
    namespace qc = vqasynth::qc;
    const auto dir = data_dir() / "qc";
    const auto pairs = vqasynth::corpus::ingest(dir / "corpus.jsonl");
    const auto groups = vqasynth::corpus::group(pairs);
    std::map<std::string, const vqasynth::corpus::QuestionGroup*> by_id;
    for (const auto& g : groups) by_id[g.dataset_id + "/" + g.video_id] = &g;

    std::vector<qc::QcReport> reports;
    for (const auto& n : vqasynth::synth::read_narratives(dir / "narratives.jsonl"))
        reports.push_back(qc::check_qbp(n, *by_id.at(n.record_id())));
    for (const auto& r : vqasynth::synth::read_rationales(dir / "rationales.jsonl")) reports.push_back(qc::check_qbc(r));

    const auto manifest = nlohmann::json::parse(read_file(dir / "manifest.json"));
    std::map<std::string, std::string> planted;
    for (const auto& v : manifest.at("violations"))
        planted[v.at("record_id").get<std::string>()] = v.at("violation").get<std::string>();

    QcFixtureScore s;
    s.records = reports.size();
    s.planted = planted.size();
    for (const auto& r : reports) {
        if (r.overall == qc::Status::Pass) continue;
        ++s.flagged;
        auto it = planted.find(r.record_id);
        const auto* check = it == planted.end() ? nullptr : r.find(it->second);
        if (check && check->status != qc::Status::Pass)
            ++s.true_positives;
        else
            s.false_positives.push_back(r.record_id);
    }
    for (const auto& [id, kind] : planted) {
        bool hit = false;
        for (const auto& r : reports)
            if (r.record_id == id) {
                const auto* c = r.find(kind);
                hit = c && c->status != qc::Status::Pass;
            }
        if (!hit) s.misses.push_back(id + ":" + kind);
    }
    s.precision = s.flagged ? static_cast<double>(s.true_positives) / static_cast<double>(s.flagged) : 0.0;
    s.recall = s.planted ? static_cast<double>(s.true_positives) / static_cast<double>(s.planted) : 0.0;
    return s;
}

}  // namespace fixtures

namespace fixtures {

std::vector<vqasynth::emit::TrainingSample> synthetic_samples(std::size_t n) {
    namespace emit = vqasynth::emit;
    static const std::vector<std::string> datasets = {"NExT-QA", "STAR", "CLEVRER"};
    std::vector<emit::TrainingSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto origin = i % 2 ? emit::Origin::Qbc : emit::Origin::Qbp;
        const auto& ds = datasets[i % datasets.size()];
        const auto uri = fmt::format("file:///videos/{}/{:06}.mp4", ds, i / 4);
        const auto text = fmt::format("Sample text number {} describing clip {}.", i, i / 4);
        out.push_back({emit::sample_id_for(origin, ds, uri, text), uri, text, origin, ds, {fmt::format("q{}", i)}});
    }
    return out;
}

}  // namespace fixtures

namespace fixtures {

std::vector<vqasynth::human::RatingRecord> engineered_ratings(const std::vector<vqasynth::human::EvalItem>& items,
                                                              std::uint64_t seed) {
    using namespace vqasynth::human;
    std::vector<const EvalItem*> qbp;
    std::size_t slots = 0;
    for (const auto& it : items)
        if (it.method == Method::QBP) {
            qbp.push_back(&it);
            slots += it.assigned_evaluators.size();
        }
    const auto scores = engineer_scores(4.21, 0.55, slots, seed);
    std::vector<RatingRecord> out;
    std::size_t k = 0;
    for (const auto* it : qbp)
        for (const auto& ev : it->assigned_evaluators)
            out.push_back({it->item_id, ev, Dimension::FactualConsistency, scores[k++], "2026-01-01T00:00:00Z"});
    return out;
}

}  // namespace fixtures

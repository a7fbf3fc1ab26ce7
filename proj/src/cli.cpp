#include "vqasynth/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "vqasynth/corpus.hpp"
#include "vqasynth/emitter.hpp"
#include "vqasynth/error.hpp"
#include "vqasynth/evalharness.hpp"
#include "vqasynth/hash.hpp"
#include "vqasynth/humaneval.hpp"
#include "vqasynth/jsonl.hpp"
#include "vqasynth/promptkit.hpp"
#include "vqasynth/qualitygate.hpp"
#include "vqasynth/synthgen.hpp"
#include "vqasynth/text.hpp"

namespace vqasynth::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_sigint(int) {
    g_stop.store(true);
    std::signal(SIGINT, SIG_DFL);  // a second Ctrl-C kills immediately
}

// Values shared by every subcommand. Resolved as flag > VQASYNTH_* env >
// config file > built-in default.
struct Globals {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string backend = "mock:synthetic";
    std::string model = "unset-model";
    std::string endpoint;
    std::string api_key_env = "VQASYNTH_API_KEY";
    int concurrency = 4;
    std::string cache_dir;
    std::string run_dir;
    std::string log_level = "info";
    bool strict = false;
    double temperature = 0.0;
    std::string template_dir;
    std::string record_replay;
};

struct Outputs {
    ordered_json manifest = ordered_json::object();
    std::vector<std::pair<std::string, fs::path>> files;

    void add(const std::string& name, const fs::path& p) { files.emplace_back(name, p); }
};

class Context {
public:
    Globals g;
    std::string subcommand;
    fs::path run_dir;
    Outputs out;

    fs::path output(const std::string& explicit_path, const std::string& default_name) const {
        return explicit_path.empty() ? run_dir / default_name : fs::path(explicit_path);
    }
};

std::optional<std::string> env(const std::string& name) {
    const char* v = std::getenv(name.c_str());
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

template <typename T>
T parse_as(const std::string& key, const std::string& raw) {
    T value{};
    if (!CLI::detail::lexical_cast(raw, value))
        throw Error(ErrorKind::Usage, fmt::format("cannot parse {}=\"{}\"", key, raw));
    return value;
}

// Applies one setting using the precedence chain.
template <typename T>
void resolve(T& target, const CLI::Option* flag, const std::string& key, const ordered_json& config) {
    if (flag != nullptr && flag->count() > 0) return;  // CLI11 already stored the flag value
    std::string env_name = "VQASYNTH_";
    for (char c : key) env_name.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (auto v = env(env_name)) {
        target = parse_as<T>(key, *v);
        return;
    }
    std::string json_key = key;
    std::replace(json_key.begin(), json_key.end(), '-', '_');
    if (config.contains(json_key)) {
        try {
            target = config.at(json_key).get<T>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Usage, fmt::format("config key {}: {}", json_key, e.what()));
        }
    }
}

ordered_json load_config(const std::string& path) {
    if (path.empty()) return ordered_json::object();
    try {
        auto j = ordered_json::parse(jsonl::read_text(path));
        if (!j.is_object()) throw Error(ErrorKind::Usage, "config file must hold a JSON object");
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, "config file " + path + ": " + e.what());
    }
}

ordered_json globals_json(const Globals& g) {
    ordered_json j;
    j["config"] = g.config_path;
    j["seed"] = g.seed;
    j["backend"] = g.backend;
    j["model"] = g.model;
    j["endpoint"] = g.endpoint;
    j["api_key_env"] = g.api_key_env;
    j["concurrency"] = g.concurrency;
    j["cache_dir"] = g.cache_dir;
    j["run_dir"] = g.run_dir;
    j["log_level"] = g.log_level;
    j["strict"] = g.strict;
    j["temperature"] = g.temperature;
    j["template_dir"] = g.template_dir;
    j["record_replay"] = g.record_replay;
    return j;
}

ordered_json options_json(const CLI::App* sub) {
    ordered_json j = ordered_json::object();
    for (const auto* opt : sub->get_options()) {
        if (opt->get_name() == "--help" || opt->get_name() == "-h") continue;
        std::string name = opt->get_single_name();
        auto res = opt->count() > 0 ? opt->results() : std::vector<std::string>{};
        if (res.empty()) {
            const auto& def = opt->get_default_str();
            if (!def.empty()) res.push_back(def);
        }
        if (opt->get_expected_max() > 1 || opt->get_items_expected_max() > 1)
            j[name] = res;
        else if (opt->get_type_size() == 0)
            j[name] = opt->count() > 0;
        else
            j[name] = res.empty() ? ordered_json(nullptr) : ordered_json(res.back());
    }
    return j;
}

// --- helpers ------------------------------------------------------------------------

std::vector<corpus::QuestionGroup> load_groups(const std::string& path) {
    auto pairs = corpus::ingest(path);
    return corpus::group(pairs);
}

std::map<std::string, long> load_frame_counts(const std::string& path) {
    std::map<std::string, long> out;
    if (path.empty()) return out;
    try {
        auto j = nlohmann::json::parse(jsonl::read_text(path));
        for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.value().get<long>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, "frame-count manifest " + path + ": " + e.what());
    }
    return out;
}

prompt::PromptRenderer make_renderer(const Globals& g) {
    auto set = g.template_dir.empty() ? prompt::TemplateSet::load_default() : prompt::TemplateSet::load(g.template_dir);
    return prompt::PromptRenderer(std::move(set));
}

struct BackendHolder {
    std::unique_ptr<synth::GenerationBackend> inner;
    std::unique_ptr<synth::RecordingBackend> recorder;

    synth::GenerationBackend& get() { return recorder ? *recorder : *inner; }
};

BackendHolder make_backend(const Globals& g) {
    BackendHolder h;
    if (g.backend == "mock:synthetic") {
        synth::MockBackend::Options o;
        o.on_missing = synth::MockBackend::OnMissing::Synthetic;
        h.inner = std::make_unique<synth::MockBackend>(std::map<std::string, std::string>{}, o);
    } else if (g.backend.rfind("mock:", 0) == 0) {
        auto replay = synth::MockBackend::load_replay(g.backend.substr(5));
        h.inner = std::make_unique<synth::MockBackend>(std::move(replay), synth::MockBackend::Options{});
    } else if (g.backend == "http") {
        if (g.endpoint.empty()) throw Error(ErrorKind::Usage, "--backend http needs --endpoint");
        synth::HttpBackendConfig cfg;
        cfg.endpoint = g.endpoint;
        cfg.api_key = env(g.api_key_env).value_or("");
        if (cfg.api_key.empty()) spdlog::warn("environment variable {} is empty; sending no API key", g.api_key_env);
        h.inner = std::make_unique<synth::HttpBackend>(cfg);
    } else {
        throw Error(ErrorKind::Usage, "unknown backend \"" + g.backend + "\" (mock:synthetic, mock:<file>, http)");
    }
    if (!g.record_replay.empty()) h.recorder = std::make_unique<synth::RecordingBackend>(*h.inner);
    return h;
}

synth::SynthConfig synth_config(const Context& ctx, const std::string& frame_counts, long sample_count,
                                long total_frames, bool pre_dedup, const std::string& job_id) {
    synth::SynthConfig c;
    c.model_id = ctx.g.model;
    c.temperature = ctx.g.temperature;
    c.concurrency = ctx.g.concurrency;
    c.cache_dir = ctx.g.cache_dir.empty() ? ctx.run_dir / "cache" : fs::path(ctx.g.cache_dir);
    c.state_dir = ctx.run_dir / "state";
    if (!job_id.empty()) c.job_id = job_id;
    c.sample_count = sample_count;
    c.default_total_frames = total_frames;
    c.frame_counts = load_frame_counts(frame_counts);
    c.pre_dedup = pre_dedup;
    c.jitter_seed = ctx.g.seed;
    c.stop = &g_stop;
    return c;
}

template <typename Run>
void record_run(Context& ctx, const Run& run, std::size_t work_items) {
    auto& m = ctx.out.manifest;
    m["job_id"] = run.state.job_id;
    m["work_items"] = work_items;
    m["done"] = run.state.done.size();
    m["failed"] = run.state.failed.size();
    m["pending"] = run.state.pending.size();
    m["failed_keys"] = std::vector<std::string>(run.state.failed.begin(), run.state.failed.end());
    m["backend_calls"] = run.backend_calls;
    m["cache_hits"] = run.cache_hits;
    m["interrupted"] = run.interrupted;
}

void finish_backend(Context& ctx, BackendHolder& backend) {
    if (backend.recorder) {
        backend.recorder->save(ctx.g.record_replay);
        ctx.out.add("replay", ctx.g.record_replay);
    }
}

// --- subcommands ----------------------------------------------------------------------

struct IngestArgs {
    std::vector<std::string> inputs;
    std::string dataset;
    std::string out;
};

int do_ingest(Context& ctx, const IngestArgs& a) {
    std::vector<corpus::QaPair> all;
    std::set<std::tuple<std::string, std::string, std::string>> keys;
    for (const auto& in : a.inputs) {
        for (auto& p : corpus::ingest(in, a.dataset)) {
            if (!keys.emplace(p.dataset_id, p.video_id, p.qid).second)
                throw Error(ErrorKind::Duplicate,
                            fmt::format("{}: pair {}/{}/{} already read from an earlier input", in, p.dataset_id,
                                        p.video_id, p.qid));
            all.push_back(std::move(p));
        }
    }
    const auto out = ctx.output(a.out, "corpus.jsonl");
    corpus::write_corpus(out, all);
    ctx.out.add("corpus", out);
    ctx.out.manifest["qa_pairs"] = all.size();
    ctx.out.manifest["videos"] = corpus::group(all).size();
    fmt::print("ingested {} pairs into {}\n", all.size(), out.string());
    return 0;
}

struct StatsArgs {
    std::string corpus;
    std::string format = "table";
};

int do_stats(Context& ctx, const StatsArgs& a) {
    const auto stats = corpus::compute_stats(load_groups(a.corpus));
    const auto json_path = ctx.run_dir / "stats.json";
    const auto csv_path = ctx.run_dir / "stats.csv";
    jsonl::write_text_atomic(json_path, corpus::to_json(stats).dump(2) + "\n");
    jsonl::write_text_atomic(csv_path, corpus::to_csv(stats));
    ctx.out.add("stats_json", json_path);
    ctx.out.add("stats_csv", csv_path);
    if (a.format == "json")
        fmt::print("{}\n", corpus::to_json(stats).dump(2));
    else if (a.format == "csv")
        fmt::print("{}", corpus::to_csv(stats));
    else
        fmt::print("{}", corpus::to_table(stats));
    return 0;
}

struct SynthArgs {
    std::string corpus;
    std::string out;
    std::string frame_counts;
    long sample_count = 16;
    long total_frames = 16;
    bool pre_dedup = false;
    std::string job_id;
};

int synth_exit(const Context& ctx, bool interrupted, std::size_t failed) {
    if (interrupted) {
        spdlog::warn("interrupted; progress is checkpointed, rerun the same command to resume");
        return 130;
    }
    if (failed > 0 && ctx.g.strict) {
        std::cerr << fmt::format("error: {}: {} item(s) failed\n", error_kind_name(ErrorKind::Backend), failed);
        return 1;
    }
    return 0;
}

int do_synth_qbp(Context& ctx, const SynthArgs& a) {
    const auto groups = load_groups(a.corpus);
    const auto renderer = make_renderer(ctx.g);
    auto backend = make_backend(ctx.g);
    auto cfg = synth_config(ctx, a.frame_counts, a.sample_count, a.total_frames, a.pre_dedup, a.job_id);
    auto run = synth::synthesize_qbp(groups, backend.get(), renderer, cfg);
    record_run(ctx, run, groups.size());
    finish_backend(ctx, backend);
    if (!run.interrupted) {
        const auto out = ctx.output(a.out, "narratives.jsonl");
        synth::write_narratives(out, run.records);
        ctx.out.add("narratives", out);
        fmt::print("narratives {} failed {} backend_calls {} cache_hits {}\n", run.records.size(),
                   run.state.failed.size(), run.backend_calls, run.cache_hits);
    }
    return synth_exit(ctx, run.interrupted, run.state.failed.size());
}

int do_synth_qbc(Context& ctx, const SynthArgs& a) {
    const auto pairs = corpus::ingest(a.corpus);
    const auto renderer = make_renderer(ctx.g);
    auto backend = make_backend(ctx.g);
    auto cfg = synth_config(ctx, a.frame_counts, a.sample_count, a.total_frames, false, a.job_id);
    auto run = synth::synthesize_qbc(pairs, backend.get(), renderer, cfg);
    record_run(ctx, run, pairs.size());
    finish_backend(ctx, backend);
    if (!run.interrupted) {
        const auto out = ctx.output(a.out, "rationales.jsonl");
        synth::write_rationales(out, run.records);
        ctx.out.add("rationales", out);
        fmt::print("rationales {} failed {} backend_calls {} cache_hits {}\n", run.records.size(),
                   run.state.failed.size(), run.backend_calls, run.cache_hits);
    }
    return synth_exit(ctx, run.interrupted, run.state.failed.size());
}

struct QcArgs {
    std::string narratives;
    std::string rationales;
    std::string corpus;
    std::string policy = "drop_fail";
};

int do_qc(Context& ctx, const QcArgs& a) {
    if (a.narratives.empty() && a.rationales.empty())
        throw Error(ErrorKind::Usage, "qc needs --narratives and/or --rationales");
    const auto policy = qc::policy_from_name(a.policy);
    std::vector<qc::QcReport> reports;
    ordered_json summary = ordered_json::object();
    summary["policy"] = qc::policy_name(policy);
    if (!a.narratives.empty()) {
        if (a.corpus.empty()) throw Error(ErrorKind::Usage, "checking narratives needs --corpus for the source groups");
        const auto groups = load_groups(a.corpus);
        std::map<std::string, const corpus::QuestionGroup*> by_id;
        for (const auto& g : groups) by_id[g.dataset_id + "/" + g.video_id] = &g;
        const auto records = synth::read_narratives(a.narratives);
        std::vector<qc::QcReport> mine;
        for (const auto& r : records) {
            auto it = by_id.find(r.record_id());
            if (it == by_id.end()) throw Error(ErrorKind::NotFound, "no corpus group for narrative " + r.record_id());
            mine.push_back(qc::check_qbp(r, *it->second));
        }
        auto kept = qc::filter<synth::NarrativeRecord>(records, mine, policy);
        const auto out = ctx.run_dir / "narratives.filtered.jsonl";
        synth::write_narratives(out, kept.records);
        ctx.out.add("narratives_filtered", out);
        summary["qbp"] = qc::to_json(kept.summary);
        fmt::print("qbp input {} kept {} dropped {}\n", kept.summary.input, kept.summary.kept, kept.summary.dropped);
        reports.insert(reports.end(), mine.begin(), mine.end());
    }
    if (!a.rationales.empty()) {
        const auto records = synth::read_rationales(a.rationales);
        std::vector<qc::QcReport> mine;
        for (const auto& r : records) mine.push_back(qc::check_qbc(r));
        auto kept = qc::filter<synth::RationaleRecord>(records, mine, policy);
        const auto out = ctx.run_dir / "rationales.filtered.jsonl";
        synth::write_rationales(out, kept.records);
        ctx.out.add("rationales_filtered", out);
        summary["qbc"] = qc::to_json(kept.summary);
        fmt::print("qbc input {} kept {} dropped {}\n", kept.summary.input, kept.summary.kept, kept.summary.dropped);
        reports.insert(reports.end(), mine.begin(), mine.end());
    }
    const auto rep = ctx.run_dir / "qc_reports.jsonl";
    qc::write_reports(rep, reports);
    ctx.out.add("qc_reports", rep);
    const auto sum = ctx.run_dir / "qc_summary.json";
    jsonl::write_text_atomic(sum, summary.dump(2) + "\n");
    ctx.out.add("qc_summary", sum);
    return 0;
}

struct EmitArgs {
    std::string narratives;
    std::string rationales;
    std::string out;
};

int do_emit(Context& ctx, const EmitArgs& a) {
    std::vector<synth::NarrativeRecord> narratives;
    std::vector<synth::RationaleRecord> rationales;
    if (!a.narratives.empty()) narratives = synth::read_narratives(a.narratives);
    if (!a.rationales.empty()) rationales = synth::read_rationales(a.rationales);
    if (narratives.empty() && rationales.empty()) throw Error(ErrorKind::Usage, "emit needs at least one input");
    auto result = emit::assemble(narratives, rationales);
    const auto samples_path = ctx.run_dir / "samples.jsonl";
    emit::write_samples(samples_path, result.samples);
    ctx.out.add("samples", samples_path);
    const auto out = ctx.output(a.out, "train.jsonl");
    auto m = emit::write_training_file(result.samples, out);
    ctx.out.add("train", out);
    ctx.out.manifest["count"] = m.count;
    ctx.out.manifest["per_origin"] = m.per_origin;
    ctx.out.manifest["duplicates_dropped"] = result.duplicates;
    fmt::print("emitted {} samples (qbp {}, qbc {}), dropped {} duplicates\n", m.count, m.per_origin["qbp"],
               m.per_origin["qbc"], result.duplicates.size());
    return 0;
}

std::size_t parse_size(const std::string& raw) {
    std::string s = text::ascii_lower(raw);
    double mult = 1;
    if (!s.empty() && s.back() == 'k') {
        mult = 1000;
        s.pop_back();
    }
    double v = parse_as<double>("size", s) * mult;
    if (v < 0 || v != std::floor(v)) throw Error(ErrorKind::Usage, "subset size must be a whole number: " + raw);
    return static_cast<std::size_t>(v);
}

struct SubsetArgs {
    std::string samples;
    std::vector<std::string> sizes;
};

int do_subset(Context& ctx, const SubsetArgs& a) {
    const auto samples = emit::read_samples(a.samples);
    ordered_json sizes = ordered_json::object();
    for (const auto& raw : a.sizes) {
        const auto n = parse_size(raw);
        auto picked = emit::subset(samples, n, ctx.g.seed);
        const auto out = ctx.run_dir / fmt::format("subset-{}.jsonl", n);
        emit::write_samples(out, picked);
        const auto train = ctx.run_dir / fmt::format("subset-{}.train.jsonl", n);
        emit::write_training_file(picked, train, {{"subset", ctx.g.seed}});
        ctx.out.add(fmt::format("subset_{}", n), out);
        ctx.out.add(fmt::format("subset_{}_train", n), train);
        sizes[std::to_string(n)] = picked.size();
        fmt::print("subset {} -> {}\n", n, out.string());
    }
    ctx.out.manifest["input"] = samples.size();
    ctx.out.manifest["sizes"] = sizes;
    return 0;
}

struct MixArgs {
    std::vector<std::string> sources;
    std::vector<std::string> recipe;
    std::string out;
};

int do_mix(Context& ctx, const MixArgs& a) {
    std::map<std::string, std::vector<emit::TrainingSample>> sources;
    for (const auto& s : a.sources) {
        auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::Usage, "--source expects name=path, got " + s);
        sources[s.substr(0, eq)] = emit::read_samples(s.substr(eq + 1));
    }
    auto mixed = emit::mix(sources, a.recipe, ctx.g.seed);
    const auto out = ctx.output(a.out, "mix.train.jsonl");
    emit::write_training_file(mixed, out, {{"mix", ctx.g.seed}});
    const auto samples = ctx.run_dir / "mix.jsonl";
    emit::write_samples(samples, mixed);
    ctx.out.add("train", out);
    ctx.out.add("samples", samples);
    ctx.out.manifest["count"] = mixed.size();
    ctx.out.manifest["recipe"] = a.recipe;
    fmt::print("mixed {} samples from {}\n", mixed.size(), text::join(a.recipe, "+"));
    return 0;
}

struct ScoreArgs {
    std::string predictions;
    std::string corpus;
    std::string train_source;
    std::string test_target;
};

int do_score(Context& ctx, const ScoreArgs& a) {
    auto preds = eval::read_predictions(a.predictions);
    if (!a.corpus.empty()) {
        std::map<std::tuple<std::string, std::string, std::string>, std::string> types;
        for (const auto& p : corpus::ingest(a.corpus))
            if (p.question_type) types[{p.dataset_id, p.video_id, p.qid}] = *p.question_type;
        for (auto& p : preds)
            if (!p.question_type)
                if (auto it = types.find({p.dataset_id, p.video_id, p.qid}); it != types.end())
                    p.question_type = it->second;
    }
    const auto report = eval::score(preds, a.train_source, a.test_target);
    const auto out = ctx.run_dir / "accuracy.json";
    jsonl::write_text_atomic(out, eval::to_json(report).dump(2) + "\n");
    ctx.out.add("report", out);
    fmt::print("accuracy {:.2f}\n", report.accuracy);
    fmt::print("n {} correct {} match_mode {}\n", report.n, report.correct, report.match_mode);
    for (const auto& [type, t] : report.per_question_type)
        fmt::print("type {} {:.2f} ({}/{})\n", type, t.accuracy, t.correct, t.n);
    return 0;
}

struct MatrixArgs {
    std::vector<std::string> reports;
    std::string baseline;
};

int do_matrix(Context& ctx, const MatrixArgs& a) {
    std::vector<eval::AccuracyReport> cells;
    for (const auto& path : a.reports) {
        try {
            cells.push_back(eval::accuracy_report_from_json(ordered_json::parse(jsonl::read_text(path))));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, path + ": " + e.what());
        }
    }
    const auto m = eval::transfer_matrix(cells, a.baseline);
    const auto json_path = ctx.run_dir / "matrix.json";
    const auto csv_path = ctx.run_dir / "matrix.csv";
    jsonl::write_text_atomic(json_path, eval::to_json(m).dump(2) + "\n");
    jsonl::write_text_atomic(csv_path, eval::to_csv(m));
    ctx.out.add("matrix_json", json_path);
    ctx.out.add("matrix_csv", csv_path);
    fmt::print("{}", eval::to_table(m));
    return 0;
}

struct ConvergenceArgs {
    std::vector<std::string> series;
    std::string baseline;
    std::string treatment;
    int window = 3;
    double delta = 0.5;
};

int do_convergence(Context& ctx, const ConvergenceArgs& a) {
    std::map<std::string, std::vector<eval::ConvergencePoint>> series;
    for (const auto& s : a.series) {
        auto eq = s.find('=');
        if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::Usage, "--series expects name=path, got " + s);
        series[s.substr(0, eq)] = eval::read_series(s.substr(eq + 1));
    }
    const auto report = eval::analyze_convergence(series, a.baseline, a.treatment, a.window, a.delta);
    const auto out = ctx.run_dir / "convergence.json";
    jsonl::write_text_atomic(out, eval::to_json(report).dump(2) + "\n");
    ctx.out.add("report", out);
    for (const auto& [name, p] : report.series)
        fmt::print("plateau {} step {} final {:.2f}\n", name, p.plateau_step, p.final_accuracy);
    if (report.speedup) fmt::print("speedup {:.2f}\n", *report.speedup);
    return 0;
}

struct SampleArgs {
    std::string narratives;
    std::string rationales;
    std::string corpus;
    std::size_t n = 100;
    std::vector<std::string> evaluators = {"rater1", "rater2", "rater3"};
    std::size_t raters_per_item = 3;
    std::string out;
};

int do_eval_sample(Context& ctx, const SampleArgs& a) {
    const auto narratives = synth::read_narratives(a.narratives);
    const auto rationales = synth::read_rationales(a.rationales);
    const auto groups = load_groups(a.corpus);
    human::SampleConfig cfg;
    cfg.evaluators = a.evaluators;
    cfg.raters_per_item = a.raters_per_item;
    const auto items = human::sample_items(narratives, rationales, groups, a.n, ctx.g.seed, cfg);
    const auto out = ctx.output(a.out, "items.jsonl");
    human::write_items(out, items);
    ctx.out.add("items", out);
    ctx.out.manifest["items"] = items.size();
    fmt::print("sampled {} items ({} per method) into {}\n", items.size(), a.n, out.string());
    return 0;
}

struct ServeArgs {
    std::string items;
    std::string ratings;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string static_dir;
    std::string tokens;
    bool issue_tokens = false;
};

std::string random_token() {
    std::random_device rd;
    std::string material;
    for (int i = 0; i < 8; ++i) material += std::to_string(rd());
    return sha256_hex(material).substr(0, 32);
}

int do_serve_review(Context& ctx, const ServeArgs& a) {
    auto items = human::read_items(a.items);
    const fs::path ratings = a.ratings.empty() ? ctx.run_dir / "ratings.jsonl" : fs::path(a.ratings);
    human::RatingStore store(items, ratings);
    human::ServiceConfig cfg;
    cfg.order_seed = ctx.g.seed;
    if (!a.static_dir.empty()) cfg.static_dir = a.static_dir;
    if (!a.tokens.empty()) {
        try {
            auto j = nlohmann::json::parse(jsonl::read_text(a.tokens));
            for (auto it = j.begin(); it != j.end(); ++it) cfg.tokens[it.key()] = it.value().get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, "token file " + a.tokens + ": " + e.what());
        }
    } else if (a.issue_tokens) {
        std::set<std::string> evaluators;
        for (const auto& it : items) evaluators.insert(it.assigned_evaluators.begin(), it.assigned_evaluators.end());
        ordered_json j = ordered_json::object();
        for (const auto& e : evaluators) {
            auto t = random_token();
            cfg.tokens[t] = e;
            j[t] = e;
        }
        const auto path = ctx.run_dir / "tokens.json";
        jsonl::write_text_atomic(path, j.dump(2) + "\n");
        fmt::print("issued {} bearer tokens in {}\n", evaluators.size(), path.string());
    } else {
        spdlog::warn("no tokens configured; the review API accepts unauthenticated requests");
    }
    human::ReviewService service(store, cfg);
    const int port = service.start(a.host, a.port);
    fmt::print("serving {} items on http://{}:{}/ (ratings: {})\n", items.size(), a.host, port, ratings.string());
    std::fflush(stdout);
    while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    service.stop();
    ctx.out.add("ratings", ratings);
    ctx.out.manifest["ratings"] = store.ratings().size();
    return 0;
}

struct AggregateArgs {
    std::string items;
    std::vector<std::string> ratings;
};

int do_eval_aggregate(Context& ctx, const AggregateArgs& a) {
    const auto items = human::read_items(a.items);
    human::RatingStore store(items, std::nullopt);
    for (const auto& path : a.ratings) {
        for (const auto& line : jsonl::read_lines(path)) {
            try {
                store.submit(human::rating_from_json(jsonl::parse_line(line, path)));
            } catch (const Error& e) {
                throw Error(e.kind(), fmt::format("{}:{}: {}", path, line.number, e.what()));
            }
        }
    }
    const auto summary = store.summary();
    const auto out = ctx.run_dir / "eval_summary.json";
    jsonl::write_text_atomic(out, human::to_json(summary).dump(2) + "\n");
    ctx.out.add("summary", out);
    ctx.out.manifest["replaced"] = store.audit_log().size();
    fmt::print("{}", human::to_table(summary));
    return 0;
}

void setup_logging(const std::string& level) {
    spdlog::drop("vqasynth");
    auto logger = spdlog::stderr_color_mt("vqasynth");
    spdlog::set_default_logger(logger);
    const auto lvl = spdlog::level::from_str(level);
    if (lvl == spdlog::level::off && level != "off")
        throw Error(ErrorKind::Usage, "unknown log level \"" + level + "\"");
    spdlog::set_level(lvl);
}

void write_run_records(const Context& ctx, const CLI::App* sub) {
    ordered_json config;
    config["subcommand"] = ctx.subcommand;
    config["globals"] = globals_json(ctx.g);
    config["options"] = options_json(sub);
    jsonl::write_text_atomic(ctx.run_dir / "config.json", config.dump(2) + "\n");

    ordered_json m = ctx.out.manifest;
    m["subcommand"] = ctx.subcommand;
    m["seed"] = ctx.g.seed;
    ordered_json files = ordered_json::object();
    for (const auto& [name, path] : ctx.out.files)
        if (fs::exists(path)) files[name] = {{"path", path.string()}, {"sha256", sha256_file_hex(path)}};
    m["outputs"] = files;
    m["created_at"] = synth::utc_timestamp();
    jsonl::write_text_atomic(ctx.run_dir / "manifest.json", m.dump(2) + "\n");
}

}  // namespace

int run(int argc, char** argv) {
    CLI::App app{"vqasynth: synthesize narrative and rationale supervision from VideoQA annotations"};
    app.require_subcommand(1);
    app.fallthrough();

    Context ctx;
    auto& g = ctx.g;
    std::map<std::string, CLI::Option*> flags;
    flags["config"] = app.add_option("--config", g.config_path, "JSON config file");
    flags["seed"] = app.add_option("--seed", g.seed, "seed for every sampling and shuffling step");
    flags["backend"] = app.add_option("--backend", g.backend, "mock:synthetic | mock:<replay.json> | http");
    flags["model"] = app.add_option("--model", g.model, "model id sent to the backend");
    flags["endpoint"] = app.add_option("--endpoint", g.endpoint, "chat-completion endpoint URL");
    flags["api-key-env"] = app.add_option("--api-key-env", g.api_key_env, "environment variable holding the API key");
    flags["concurrency"] = app.add_option("--concurrency", g.concurrency, "maximum in-flight backend requests")
                               ->check(CLI::PositiveNumber);
    flags["cache-dir"] = app.add_option("--cache-dir", g.cache_dir, "response cache (default <run-dir>/cache)");
    flags["run-dir"] = app.add_option("--run-dir", g.run_dir, "output directory (default runs/<subcommand>)");
    flags["log-level"] = app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off");
    flags["strict"] = app.add_flag("--strict", g.strict, "exit nonzero when any synthesis item failed");
    flags["temperature"] = app.add_option("--temperature", g.temperature, "sampling temperature");
    flags["template-dir"] = app.add_option("--template-dir", g.template_dir, "prompt templates with templates.lock");
    flags["record-replay"] =
        app.add_option("--record-replay", g.record_replay, "save every backend response as a replay file");

    std::function<int()> action;

    IngestArgs ingest;
    auto* s_ingest = app.add_subcommand("ingest", "validate QA files and write a canonical corpus");
    s_ingest->add_option("inputs", ingest.inputs, "canonical JSONL files")->required()->check(CLI::ExistingFile);
    s_ingest->add_option("--dataset", ingest.dataset, "require this dataset id");
    s_ingest->add_option("--out", ingest.out, "output corpus (default <run-dir>/corpus.jsonl)");
    s_ingest->callback([&] { action = [&] { return do_ingest(ctx, ingest); }; });

    StatsArgs stats;
    auto* s_stats = app.add_subcommand("stats", "per-dataset counts and histograms");
    s_stats->add_option("corpus", stats.corpus)->required()->check(CLI::ExistingFile);
    s_stats->add_option("--format", stats.format)->check(CLI::IsMember({"table", "json", "csv"}))
        ->capture_default_str();
    s_stats->callback([&] { action = [&] { return do_stats(ctx, stats); }; });

    SynthArgs qbp, qbc;
    auto add_synth = [&](const char* name, const char* help, SynthArgs& a, bool is_qbp) {
        auto* s = app.add_subcommand(name, help);
        s->add_option("corpus", a.corpus)->required()->check(CLI::ExistingFile);
        s->add_option("--out", a.out, "output records");
        s->add_option("--frame-counts", a.frame_counts, "JSON object video_id -> total frames");
        s->add_option("--sample-count", a.sample_count, "frames sampled per video")->capture_default_str();
        s->add_option("--total-frames", a.total_frames, "frame count when a video is not in --frame-counts")
            ->capture_default_str();
        s->add_option("--job-id", a.job_id, "journal name (default derived from the work set)");
        if (is_qbp) s->add_flag("--pre-dedup", a.pre_dedup, "drop repeated QA pairs before rendering");
        return s;
    };
    auto* s_qbp = add_synth("synth-qbp", "one narrative per question group", qbp, true);
    s_qbp->callback([&] { action = [&] { return do_synth_qbp(ctx, qbp); }; });
    auto* s_qbc = add_synth("synth-qbc", "one visual rationale per QA pair", qbc, false);
    s_qbc->callback([&] { action = [&] { return do_synth_qbc(ctx, qbc); }; });

    QcArgs qca;
    auto* s_qc = app.add_subcommand("qc", "quality checks and filtering");
    s_qc->add_option("--narratives", qca.narratives)->check(CLI::ExistingFile);
    s_qc->add_option("--rationales", qca.rationales)->check(CLI::ExistingFile);
    s_qc->add_option("--corpus", qca.corpus, "source corpus for narrative checks")->check(CLI::ExistingFile);
    s_qc->add_option("--policy", qca.policy)->check(CLI::IsMember({"drop_fail", "drop_fail_and_warn", "keep_all"}))
        ->capture_default_str();
    s_qc->callback([&] { action = [&] { return do_qc(ctx, qca); }; });

    EmitArgs em;
    auto* s_emit = app.add_subcommand("emit", "assemble training samples");
    s_emit->add_option("--narratives", em.narratives)->check(CLI::ExistingFile);
    s_emit->add_option("--rationales", em.rationales)->check(CLI::ExistingFile);
    s_emit->add_option("--out", em.out, "training file (default <run-dir>/train.jsonl)");
    s_emit->callback([&] { action = [&] { return do_emit(ctx, em); }; });

    SubsetArgs sub;
    auto* s_subset = app.add_subcommand("subset", "seeded subsets of a samples file");
    s_subset->add_option("samples", sub.samples)->required()->check(CLI::ExistingFile);
    s_subset->add_option("--size", sub.sizes, "sizes such as 3500 or 3.5k")->required();
    s_subset->callback([&] { action = [&] { return do_subset(ctx, sub); }; });

    MixArgs mx;
    auto* s_mix = app.add_subcommand("mix", "concatenate and shuffle sample sets");
    s_mix->add_option("--source", mx.sources, "name=samples.jsonl")->required();
    s_mix->add_option("--recipe", mx.recipe, "source names to include")->required()->delimiter(',');
    s_mix->add_option("--out", mx.out);
    s_mix->callback([&] { action = [&] { return do_mix(ctx, mx); }; });

    ScoreArgs sc;
    auto* s_score = app.add_subcommand("score", "exact-match accuracy of predictions");
    s_score->add_option("predictions", sc.predictions)->required()->check(CLI::ExistingFile);
    s_score->add_option("--corpus", sc.corpus, "corpus supplying question types")->check(CLI::ExistingFile);
    s_score->add_option("--train-source", sc.train_source);
    s_score->add_option("--test-target", sc.test_target);
    s_score->callback([&] { action = [&] { return do_score(ctx, sc); }; });

    MatrixArgs mt;
    auto* s_matrix = app.add_subcommand("matrix", "cross-dataset transfer matrix from accuracy reports");
    s_matrix->add_option("reports", mt.reports)->required()->check(CLI::ExistingFile);
    s_matrix->add_option("--baseline", mt.baseline, "train source used for deltas");
    s_matrix->callback([&] { action = [&] { return do_matrix(ctx, mt); }; });

    ConvergenceArgs cv;
    auto* s_conv = app.add_subcommand("convergence", "plateau steps and speedup of training curves");
    s_conv->add_option("--series", cv.series, "name=curve.csv")->required();
    s_conv->add_option("--baseline", cv.baseline);
    s_conv->add_option("--treatment", cv.treatment);
    s_conv->add_option("--window", cv.window, "smoothing window")->capture_default_str()->check(CLI::PositiveNumber);
    s_conv->add_option("--delta", cv.delta, "plateau tolerance in accuracy points")->capture_default_str();
    s_conv->callback([&] { action = [&] { return do_convergence(ctx, cv); }; });

    SampleArgs sa;
    auto* s_sample = app.add_subcommand("eval-sample", "sample items for human evaluation");
    s_sample->add_option("--narratives", sa.narratives)->required()->check(CLI::ExistingFile);
    s_sample->add_option("--rationales", sa.rationales)->required()->check(CLI::ExistingFile);
    s_sample->add_option("--corpus", sa.corpus)->required()->check(CLI::ExistingFile);
    s_sample->add_option("--n", sa.n, "items per method")->capture_default_str();
    s_sample->add_option("--evaluators", sa.evaluators)->delimiter(',')->capture_default_str();
    s_sample->add_option("--raters-per-item", sa.raters_per_item)->capture_default_str();
    s_sample->add_option("--out", sa.out);
    s_sample->callback([&] { action = [&] { return do_eval_sample(ctx, sa); }; });

    ServeArgs sv;
    auto* s_serve = app.add_subcommand("serve-review", "HTTP review service for raters");
    s_serve->add_option("--items", sv.items)->required()->check(CLI::ExistingFile);
    s_serve->add_option("--ratings", sv.ratings, "append-only ratings file (default <run-dir>/ratings.jsonl)");
    s_serve->add_option("--host", sv.host)->capture_default_str();
    s_serve->add_option("--port", sv.port, "0 picks a free port")->capture_default_str();
    s_serve->add_option("--static-dir", sv.static_dir, "rater UI bundle")->check(CLI::ExistingDirectory);
    s_serve->add_option("--tokens", sv.tokens, "JSON object token -> evaluator id")->check(CLI::ExistingFile);
    s_serve->add_flag("--issue-tokens", sv.issue_tokens, "generate one token per evaluator");
    s_serve->callback([&] { action = [&] { return do_serve_review(ctx, sv); }; });

    AggregateArgs ag;
    auto* s_agg = app.add_subcommand("eval-aggregate", "mean and population std per method and dimension");
    s_agg->add_option("--items", ag.items)->required()->check(CLI::ExistingFile);
    s_agg->add_option("--ratings", ag.ratings, "one or more rating files (shards)")->required()
        ->check(CLI::ExistingFile);
    s_agg->callback([&] { action = [&] { return do_eval_aggregate(ctx, ag); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const CLI::App* chosen = app.get_subcommands().front();
    ctx.subcommand = chosen->get_name();
    try {
        const auto config = load_config(g.config_path);
        resolve(g.seed, flags["seed"], "seed", config);
        resolve(g.backend, flags["backend"], "backend", config);
        resolve(g.model, flags["model"], "model", config);
        resolve(g.endpoint, flags["endpoint"], "endpoint", config);
        resolve(g.api_key_env, flags["api-key-env"], "api-key-env", config);
        resolve(g.concurrency, flags["concurrency"], "concurrency", config);
        resolve(g.cache_dir, flags["cache-dir"], "cache-dir", config);
        resolve(g.run_dir, flags["run-dir"], "run-dir", config);
        resolve(g.log_level, flags["log-level"], "log-level", config);
        resolve(g.strict, flags["strict"], "strict", config);
        resolve(g.temperature, flags["temperature"], "temperature", config);
        resolve(g.template_dir, flags["template-dir"], "template-dir", config);
        resolve(g.record_replay, flags["record-replay"], "record-replay", config);
        if (g.concurrency < 1) throw Error(ErrorKind::Usage, "concurrency must be positive");
        setup_logging(g.log_level);

        ctx.run_dir = g.run_dir.empty() ? fs::path("runs") / ctx.subcommand : fs::path(g.run_dir);
        fs::create_directories(ctx.run_dir);

        g_stop.store(false);
        auto previous = std::signal(SIGINT, on_sigint);
        int code = 0;
        try {
            code = action();
        } catch (...) {
            std::signal(SIGINT, previous);
            throw;
        }
        std::signal(SIGINT, previous);
        write_run_records(ctx, chosen);
        return code;
    } catch (const Error& e) {
        std::cerr << fmt::format("error: {}: {}\n", error_kind_name(e.kind()), e.what());
        return e.kind() == ErrorKind::Usage ? 2 : 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << fmt::format("error: {}: {}\n", error_kind_name(ErrorKind::Io), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::cerr << fmt::format("error: internal_error: {}\n", e.what());
        return 1;
    }
}

}  // namespace vqasynth::cli

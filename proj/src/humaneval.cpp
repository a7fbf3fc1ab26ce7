#include "vqasynth/humaneval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "vqasynth/error.hpp"
#include "vqasynth/hash.hpp"
#include "vqasynth/jsonl.hpp"
#include "vqasynth/rng.hpp"

namespace vqasynth::human {

using nlohmann::ordered_json;

std::string_view dimension_name(Dimension d) {
    switch (d) {
    case Dimension::FactualConsistency: return "FactualConsistency";
    case Dimension::LogicalCoherence: return "LogicalCoherence";
    case Dimension::VisualGrounding: return "VisualGrounding";
    case Dimension::Fluency: return "Fluency";
    }
    return "?";
}

Dimension dimension_from_name(std::string_view name) {
    for (auto d : {Dimension::FactualConsistency, Dimension::LogicalCoherence, Dimension::VisualGrounding,
                   Dimension::Fluency})
        if (dimension_name(d) == name) return d;
    throw Error(ErrorKind::Validation, fmt::format("unknown dimension \"{}\"", name));
}

bool applicable(Method method, Dimension d) {
    if (d == Dimension::LogicalCoherence) return method == Method::QBP;
    if (d == Dimension::VisualGrounding) return method == Method::QBC;
    return true;
}

std::vector<Dimension> applicable_dimensions(Method method) {
    std::vector<Dimension> out;
    for (auto d : {Dimension::FactualConsistency, Dimension::LogicalCoherence, Dimension::VisualGrounding,
                   Dimension::Fluency})
        if (applicable(method, d)) out.push_back(d);
    return out;
}

// ---------------------------------------------------------------------------
// Items

ordered_json to_json(const EvalItem& item) {
    ordered_json j;
    j["item_id"] = item.item_id;
    j["method"] = prompt::kind_name(item.method);
    j["text"] = item.text;
    ordered_json ctx = ordered_json::object();
    if (item.group) {
        ctx["dataset_id"] = item.group->dataset_id;
        ctx["video_id"] = item.group->video_id;
        ctx["video_uri"] = item.group->video_uri;
        ordered_json pairs = ordered_json::array();
        for (const auto& p : item.group->pairs) pairs.push_back(corpus::to_json(p));
        ctx["pairs"] = pairs;
    }
    if (item.qbc) {
        ctx["question"] = item.qbc->question;
        ctx["answer"] = item.qbc->answer;
        ctx["video_uri"] = item.qbc->video_uri;
        ctx["thumbnails"] = item.qbc->thumbnails;
    }
    j["context"] = ctx;
    ordered_json dims = ordered_json::array();
    for (auto d : applicable_dimensions(item.method)) dims.push_back(dimension_name(d));
    j["dimensions"] = dims;
    j["assigned_evaluators"] = item.assigned_evaluators;
    return j;
}

EvalItem eval_item_from_json(const ordered_json& j) {
    EvalItem item;
    item.item_id = j.at("item_id").get<std::string>();
    item.method = prompt::kind_from_name(j.at("method").get<std::string>());
    item.text = j.at("text").get<std::string>();
    const auto& ctx = j.at("context");
    if (item.method == Method::QBP) {
        corpus::QuestionGroup g;
        g.dataset_id = ctx.at("dataset_id").get<std::string>();
        g.video_id = ctx.at("video_id").get<std::string>();
        g.video_uri = ctx.at("video_uri").get<std::string>();
        for (const auto& p : ctx.at("pairs")) g.pairs.push_back(corpus::qa_pair_from_json(p));
        if (g.pairs.empty()) throw Error(ErrorKind::Validation, "QBP item " + item.item_id + " has an empty group");
        item.group = std::move(g);
    } else {
        QbcContext c;
        c.question = ctx.at("question").get<std::string>();
        c.answer = ctx.at("answer").get<std::string>();
        c.video_uri = ctx.at("video_uri").get<std::string>();
        c.thumbnails = ctx.at("thumbnails").get<std::vector<std::string>>();
        item.qbc = std::move(c);
    }
    item.assigned_evaluators = j.at("assigned_evaluators").get<std::vector<std::string>>();
    return item;
}

void write_items(const std::filesystem::path& path, std::span<const EvalItem> items) {
    std::vector<std::string> lines;
    lines.reserve(items.size());
    for (const auto& it : items) lines.push_back(jsonl::dump(to_json(it)));
    jsonl::write_lines_atomic(path, lines);
}

std::vector<EvalItem> read_items(const std::filesystem::path& path) {
    std::vector<EvalItem> out;
    for (const auto& line : jsonl::read_lines(path)) {
        try {
            out.push_back(eval_item_from_json(jsonl::parse_line(line, path)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, fmt::format("{}:{}: {}", path.string(), line.number, e.what()));
        }
    }
    return out;
}

std::vector<long> thumbnail_indices(const synth::FramePlan& plan) {
    const auto& idx = plan.indices;
    if (idx.empty()) return {};
    const auto t = idx.size();
    std::vector<long> out;
    for (auto pos : {std::size_t{0}, t / 3, 2 * t / 3, t - 1})
        if (out.empty() || out.back() != idx[pos]) out.push_back(idx[pos]);
    return out;
}

namespace {

std::vector<std::size_t> pick(std::size_t pool, std::size_t n, Xoshiro256& rng) {
    std::vector<std::size_t> idx(pool);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(pool - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    return idx;
}

std::vector<std::string> assign(std::size_t k, const SampleConfig& cfg) {
    std::vector<std::string> out;
    const auto e = cfg.evaluators.size();
    for (std::size_t r = 0; r < cfg.raters_per_item; ++r) out.push_back(cfg.evaluators[(k + r) % e]);
    return out;
}

}  // namespace

std::vector<EvalItem> sample_items(std::span<const synth::NarrativeRecord> narratives,
                                   std::span<const synth::RationaleRecord> rationales,
                                   std::span<const corpus::QuestionGroup> groups, std::size_t n_per_method,
                                   std::uint64_t seed, const SampleConfig& config) {
    if (config.raters_per_item == 0 || config.evaluators.size() < config.raters_per_item)
        throw Error(ErrorKind::Validation, fmt::format("need at least {} evaluators, have {}", config.raters_per_item,
                                                       config.evaluators.size()));
    if (std::set<std::string>(config.evaluators.begin(), config.evaluators.end()).size() != config.evaluators.size())
        throw Error(ErrorKind::Validation, "evaluator ids must be unique");
    if (narratives.size() < n_per_method)
        throw Error(ErrorKind::Validation,
                    fmt::format("narrative pool has {} records, {} requested", narratives.size(), n_per_method));
    if (rationales.size() < n_per_method)
        throw Error(ErrorKind::Validation,
                    fmt::format("rationale pool has {} records, {} requested", rationales.size(), n_per_method));

    std::map<std::pair<std::string, std::string>, const corpus::QuestionGroup*> by_video;
    for (const auto& g : groups) by_video[{g.dataset_id, g.video_id}] = &g;

    Xoshiro256 rng(seed);
    std::vector<EvalItem> out;
    out.reserve(2 * n_per_method);
    std::size_t k = 0;
    for (auto i : pick(narratives.size(), n_per_method, rng)) {
        const auto& r = narratives[i];
        auto it = by_video.find({r.dataset_id, r.video_id});
        if (it == by_video.end()) throw Error(ErrorKind::NotFound, "no source group for narrative " + r.record_id());
        EvalItem item;
        item.item_id = "QBP:" + r.record_id();
        item.method = Method::QBP;
        item.text = r.text;
        item.group = *it->second;
        item.assigned_evaluators = assign(k++, config);
        out.push_back(std::move(item));
    }
    const auto plan = synth::plan_frames(config.total_frames, config.thumbnail_sample_count);
    const auto thumbs = thumbnail_indices(plan);
    for (auto i : pick(rationales.size(), n_per_method, rng)) {
        const auto& r = rationales[i];
        EvalItem item;
        item.item_id = "QBC:" + r.record_id();
        item.method = Method::QBC;
        item.text = r.text;
        QbcContext c{r.question, r.answer, r.video_uri, {}};
        for (auto f : thumbs) c.thumbnails.push_back(fmt::format("{}#frame={}", r.video_uri, f));
        item.qbc = std::move(c);
        item.assigned_evaluators = assign(k++, config);
        out.push_back(std::move(item));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Ratings and aggregation

ordered_json to_json(const RatingRecord& r) {
    ordered_json j;
    j["item_id"] = r.item_id;
    j["evaluator_id"] = r.evaluator_id;
    j["dimension"] = dimension_name(r.dimension);
    j["score"] = r.score;
    j["submitted_at"] = r.submitted_at;
    return j;
}

RatingRecord rating_from_json(const ordered_json& j) {
    RatingRecord r;
    try {
        r.item_id = j.at("item_id").get<std::string>();
        r.evaluator_id = j.at("evaluator_id").get<std::string>();
        r.dimension = dimension_from_name(j.at("dimension").get<std::string>());
        const auto& s = j.at("score");
        if (!s.is_number_integer()) throw Error(ErrorKind::Validation, "score must be an integer");
        r.score = s.get<int>();
        if (j.contains("submitted_at")) r.submitted_at = j.at("submitted_at").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("bad rating: ") + e.what());
    }
    return r;
}

void Moments::add(double x) {
    ++n;
    sum += x;
    sum_sq += x * x;
}

void Moments::merge(const Moments& other) {
    n += other.n;
    sum += other.sum;
    sum_sq += other.sum_sq;
}

double Moments::mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }

double Moments::population_std() const {
    if (n == 0) return 0.0;
    const double m = mean();
    const double var = sum_sq / static_cast<double>(n) - m * m;
    return var <= 0.0 ? 0.0 : std::sqrt(var);
}

std::map<std::pair<Method, Dimension>, Moments> cell_moments(std::span<const RatingRecord> ratings,
                                                             const std::map<std::string, Method>& item_methods) {
    std::map<std::pair<Method, Dimension>, Moments> out;
    for (const auto& r : ratings) {
        auto it = item_methods.find(r.item_id);
        if (it == item_methods.end()) continue;
        out[{it->second, r.dimension}].add(r.score);
    }
    return out;
}

EvalSummary summary_from_moments(const std::map<std::pair<Method, Dimension>, Moments>& moments) {
    EvalSummary s;
    for (const auto& [key, m] : moments) {
        if (m.n == 0) continue;
        CellSummary c;
        c.mean = m.mean();
        c.std = m.population_std();
        c.n_ratings = m.n;
        s.cells[key] = c;
    }
    return s;
}

EvalSummary aggregate(std::span<const RatingRecord> ratings, std::span<const EvalItem> items) {
    std::map<std::string, Method> methods;
    std::map<Method, std::size_t> expected_per_dim;
    std::size_t expected_total = 0;
    for (const auto& it : items) {
        methods[it.item_id] = it.method;
        expected_per_dim[it.method] += it.assigned_evaluators.size();
        expected_total += it.assigned_evaluators.size() * applicable_dimensions(it.method).size();
    }
    auto summary = summary_from_moments(cell_moments(ratings, methods));

    // Pairwise absolute differences between raters of the same item.
    std::map<std::pair<std::string, Dimension>, std::vector<int>> per_item;
    std::size_t counted = 0;
    for (const auto& r : ratings) {
        if (!methods.count(r.item_id)) continue;
        per_item[{r.item_id, r.dimension}].push_back(r.score);
        ++counted;
    }
    std::map<std::pair<Method, Dimension>, std::pair<double, std::size_t>> diffs;
    for (const auto& [key, scores] : per_item) {
        auto& acc = diffs[{methods[key.first], key.second}];
        for (std::size_t a = 0; a < scores.size(); ++a)
            for (std::size_t b = a + 1; b < scores.size(); ++b) {
                acc.first += std::abs(scores[a] - scores[b]);
                ++acc.second;
            }
    }
    for (auto& [key, cell] : summary.cells) {
        const auto exp = expected_per_dim[key.first];
        if (exp > 0) cell.completion = static_cast<double>(cell.n_ratings) / static_cast<double>(exp);
        const auto& d = diffs[key];
        if (d.second > 0) cell.mean_pairwise_abs_diff = d.first / static_cast<double>(d.second);
    }
    if (expected_total > 0) summary.completion = static_cast<double>(counted) / static_cast<double>(expected_total);
    return summary;
}

ordered_json to_json(const EvalSummary& s) {
    ordered_json j;
    j["std"] = "population";
    ordered_json cells = ordered_json::array();
    for (const auto& [key, c] : s.cells) {
        ordered_json cell;
        cell["method"] = prompt::kind_name(key.first);
        cell["dimension"] = dimension_name(key.second);
        cell["mean"] = c.mean;
        cell["std"] = c.std;
        cell["n_ratings"] = c.n_ratings;
        cell["completion"] = c.completion ? ordered_json(*c.completion) : ordered_json(nullptr);
        cell["mean_pairwise_abs_diff"] =
            c.mean_pairwise_abs_diff ? ordered_json(*c.mean_pairwise_abs_diff) : ordered_json(nullptr);
        cells.push_back(cell);
    }
    j["cells"] = cells;
    j["completion"] = s.completion ? ordered_json(*s.completion) : ordered_json(nullptr);
    return j;
}

std::string to_table(const EvalSummary& s) {
    std::string out = "dimension QBP QBC\n";
    for (auto d : {Dimension::FactualConsistency, Dimension::LogicalCoherence, Dimension::VisualGrounding,
                   Dimension::Fluency}) {
        out += dimension_name(d);
        for (auto m : {Method::QBP, Method::QBC}) {
            auto it = s.cells.find({m, d});
            if (it == s.cells.end())
                out += " -";
            else
                out += fmt::format(" {:.2f}±{:.2f}", it->second.mean, it->second.std);
        }
        out += "\n";
    }
    if (s.completion) out += fmt::format("completion {:.3f}\n", *s.completion);
    out += "std: population\n";
    return out;
}

namespace {

struct RubricEntry {
    Dimension dimension;
    const char* title;
    const char* question;
    const char* anchor5;
    const char* anchor3;
    const char* anchor1;
};

const RubricEntry kRubric[] = {
    {Dimension::FactualConsistency, "Factual Consistency",
     "Does the generated text contradict any of the facts provided in the source information (the QA pairs for "
     "Task A; the video and correct answer for Task B)?",
     "The text is perfectly consistent with all source facts.",
     "The text contains minor inaccuracies or makes claims that are plausible but not directly supported by the "
     "source.",
     "The text directly contradicts a key fact from the source (e.g., says \"the person is running\" when the answer "
     "is \"walking\")."},
    {Dimension::LogicalCoherence, "Logical Coherence (Task A - QBP only)",
     "Does the narrative describe events in a logical and coherent order? Does the story make sense?",
     "The sequence of events is clear, logical, and easy to follow. Causal and temporal relationships are sensible.",
     "The narrative is generally understandable, but the ordering of some events might be slightly awkward or "
     "ambiguous.",
     "The narrative is confusing, jumbled, or illogical (e.g., describes an effect before its cause, or confuses the "
     "identities of different people)."},
    {Dimension::VisualGrounding, "Visual Grounding (Task B - QBC only)",
     "Does the rationale describe specific, observable evidence from the video that helps to justify the given "
     "answer?",
     "The rationale perfectly describes tangible visual details that serve as strong, direct evidence for the answer.",
     "The rationale is relevant but somewhat generic, describing the general scene rather than the specific "
     "evidence.",
     "The rationale is irrelevant, describes something not visible in the video (fabrication), or simply rephrases "
     "the question without providing visual evidence."},
    {Dimension::Fluency, "Fluency",
     "Is the generated text well-written, grammatically correct, and easy for a native speaker to read?",
     "Flawless grammar and natural, fluent phrasing.",
     "Contains minor grammatical errors or awkward phrasing that do not impede understanding.",
     "The text is ungrammatical, nonsensical, or very difficult to understand."},
};

}  // namespace

ordered_json rubric_json() {
    ordered_json j;
    j["scale"] = {{"min", 1}, {"max", 5}};
    ordered_json dims = ordered_json::array();
    for (const auto& e : kRubric) {
        ordered_json methods = ordered_json::array();
        for (auto m : {Method::QBP, Method::QBC})
            if (applicable(m, e.dimension)) methods.push_back(prompt::kind_name(m));
        dims.push_back({{"dimension", dimension_name(e.dimension)},
                        {"title", e.title},
                        {"guiding_question", e.question},
                        {"methods", methods},
                        {"anchors", {{"5", fmt::format("Excellent: {}", e.anchor5)},
                                     {"3", fmt::format("Moderate: {}", e.anchor3)},
                                     {"1", fmt::format("Poor: {}", e.anchor1)}}}});
    }
    j["dimensions"] = dims;
    return j;
}

std::string rubric_text() {
    std::string out;
    int n = 1;
    for (const auto& e : kRubric) {
        out += fmt::format("{}. {}\nGuiding Question: {}\n", n++, e.title, e.question);
        out += fmt::format("  5 (Excellent): {}\n  3 (Moderate): {}\n  1 (Poor): {}\n\n", e.anchor5, e.anchor3,
                           e.anchor1);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Store

RatingStore::RatingStore(std::vector<EvalItem> items, std::optional<std::filesystem::path> ratings_path)
    : items_(std::move(items)), path_(std::move(ratings_path)) {
    for (std::size_t i = 0; i < items_.size(); ++i)
        if (!index_.emplace(items_[i].item_id, i).second)
            throw Error(ErrorKind::Duplicate, "duplicate item_id " + items_[i].item_id);
    auto snap = std::make_shared<Snapshot>();
    if (path_ && std::filesystem::exists(*path_)) {
        for (const auto& line : jsonl::read_lines(*path_)) {
            auto r = rating_from_json(jsonl::parse_line(line, *path_));
            validate(r);
            Key key{r.item_id, r.evaluator_id, r.dimension};
            auto it = snap->find(key);
            if (it != snap->end())
                audit_.push_back(fmt::format("{} replaced {} {} {}: {} -> {}", r.submitted_at, r.item_id,
                                             r.evaluator_id, dimension_name(r.dimension), it->second.score, r.score));
            (*snap)[key] = std::move(r);
        }
    }
    snapshot_ = std::move(snap);
}

const EvalItem* RatingStore::item(const std::string& item_id) const {
    auto it = index_.find(item_id);
    return it == index_.end() ? nullptr : &items_[it->second];
}

void RatingStore::validate(const RatingRecord& r) const {
    const auto* it = item(r.item_id);
    if (!it) throw Error(ErrorKind::NotFound, "unknown item " + r.item_id);
    const auto& ev = it->assigned_evaluators;
    if (std::find(ev.begin(), ev.end(), r.evaluator_id) == ev.end())
        throw Error(ErrorKind::Usage, fmt::format("evaluator {} is not assigned to {}", r.evaluator_id, r.item_id));
    if (r.score < 1 || r.score > 5)
        throw Error(ErrorKind::Validation, fmt::format("score {} outside 1..5", r.score));
    if (!applicable(it->method, r.dimension))
        throw Error(ErrorKind::Validation, fmt::format("{} does not apply to {} items", dimension_name(r.dimension),
                                                       prompt::kind_name(it->method)));
}

std::shared_ptr<const RatingStore::Snapshot> RatingStore::snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snapshot_;
}

Ack RatingStore::submit(RatingRecord rating) {
    validate(rating);
    if (rating.submitted_at.empty()) rating.submitted_at = synth::utc_timestamp();
    std::lock_guard lock(write_mu_);
    auto next = std::make_shared<Snapshot>(*snapshot());
    Key key{rating.item_id, rating.evaluator_id, rating.dimension};
    Ack ack;
    if (auto it = next->find(key); it != next->end()) {
        ack.updated = true;
        audit_.push_back(fmt::format("{} replaced {} {} {}: {} -> {}", rating.submitted_at, rating.item_id,
                                     rating.evaluator_id, dimension_name(rating.dimension), it->second.score,
                                     rating.score));
    }
    if (path_) {
        std::ofstream out(*path_, std::ios::app | std::ios::binary);
        out << jsonl::dump(to_json(rating)) << '\n';
        out.flush();
        if (!out) throw Error(ErrorKind::Io, "cannot append to " + path_->string());
    }
    (*next)[key] = std::move(rating);
    std::lock_guard slock(snap_mu_);
    snapshot_ = std::move(next);
    return ack;
}

std::vector<RatingRecord> RatingStore::ratings() const {
    auto snap = snapshot();
    std::vector<RatingRecord> out;
    out.reserve(snap->size());
    for (const auto& [k, r] : *snap) out.push_back(r);
    return out;
}

std::vector<std::string> RatingStore::audit_log() const {
    std::lock_guard lock(write_mu_);
    return audit_;
}

EvalSummary RatingStore::summary() const {
    auto rs = ratings();
    return aggregate(rs, items_);
}

std::vector<const EvalItem*> items_for(const std::vector<EvalItem>& items, const std::string& evaluator,
                                       std::uint64_t seed) {
    std::vector<const EvalItem*> out;
    for (const auto& it : items)
        if (std::find(it.assigned_evaluators.begin(), it.assigned_evaluators.end(), evaluator) !=
            it.assigned_evaluators.end())
            out.push_back(&it);
    std::string material = std::to_string(seed);
    material.push_back('\0');
    material += evaluator;
    const auto h = sha256_hex(material);
    Xoshiro256 rng(std::stoull(h.substr(0, 16), nullptr, 16));
    shuffle(std::span<const EvalItem*>(out), rng);
    return out;
}

// ---------------------------------------------------------------------------
// HTTP service

namespace {

void send_json(httplib::Response& res, int status, const ordered_json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, ordered_json{{"error", message}});
}

int status_for(const Error& e) {
    switch (e.kind()) {
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Usage: return 403;
    case ErrorKind::Io: return 500;
    default: return 400;
    }
}

}  // namespace

ReviewService::ReviewService(RatingStore& store, ServiceConfig config)
    : store_(store), config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
    install_routes();
}

ReviewService::~ReviewService() { stop(); }

std::optional<std::string> ReviewService::authenticate(const std::string& authorization) const {
    constexpr std::string_view prefix = "Bearer ";
    if (authorization.rfind(prefix, 0) != 0) return std::nullopt;
    auto it = config_.tokens.find(authorization.substr(prefix.size()));
    if (it == config_.tokens.end()) return std::nullopt;
    return it->second;
}

void ReviewService::install_routes() {
    auto& srv = *server_;
    const bool auth = !config_.tokens.empty();

    srv.Get("/api/items", [this, auth](const httplib::Request& req, httplib::Response& res) {
        const auto evaluator = req.get_param_value("evaluator");
        if (evaluator.empty()) return send_error(res, 400, "missing evaluator parameter");
        if (auth) {
            auto who = authenticate(req.get_header_value("Authorization"));
            if (!who) return send_error(res, 401, "missing or invalid bearer token");
            if (*who != evaluator) return send_error(res, 403, "token does not belong to " + evaluator);
        }
        auto snap = store_.ratings();
        std::map<std::string, ordered_json> mine;
        for (const auto& r : snap)
            if (r.evaluator_id == evaluator) mine[r.item_id][std::string(dimension_name(r.dimension))] = r.score;
        ordered_json items = ordered_json::array();
        std::size_t done = 0;
        for (const auto* it : items_for(store_.items(), evaluator, config_.order_seed)) {
            auto j = to_json(*it);
            auto found = mine.find(it->item_id);
            j["rated"] = found == mine.end() ? ordered_json::object() : found->second;
            if (j["rated"].size() == applicable_dimensions(it->method).size()) ++done;
            items.push_back(std::move(j));
        }
        ordered_json body;
        body["evaluator"] = evaluator;
        body["progress"] = {{"rated", done}, {"assigned", items.size()}};
        body["items"] = std::move(items);
        send_json(res, 200, body);
    });

    srv.Post("/api/ratings", [this, auth](const httplib::Request& req, httplib::Response& res) {
        std::optional<std::string> who;
        if (auth) {
            who = authenticate(req.get_header_value("Authorization"));
            if (!who) return send_error(res, 401, "missing or invalid bearer token");
        }
        try {
            auto body = ordered_json::parse(req.body);
            auto rating = rating_from_json(body);
            if (who && *who != rating.evaluator_id)
                return send_error(res, 403, "token does not belong to " + rating.evaluator_id);
            rating.submitted_at.clear();
            auto ack = store_.submit(rating);
            send_json(res, 201, ordered_json{{"status", ack.updated ? "updated" : "created"}});
        } catch (const nlohmann::json::exception& e) {
            send_error(res, 400, std::string("malformed JSON: ") + e.what());
        } catch (const Error& e) {
            send_error(res, status_for(e), e.what());
        }
    });

    srv.Get("/api/summary", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, to_json(store_.summary()));
    });

    srv.Get("/api/rubric", [](const httplib::Request&, httplib::Response& res) {
        auto j = rubric_json();
        j["text"] = rubric_text();
        send_json(res, 200, j);
    });

    if (config_.static_dir) {
        if (!srv.set_mount_point("/", config_.static_dir->string()))
            throw Error(ErrorKind::Io, "static directory not found: " + config_.static_dir->string());
    }
}

int ReviewService::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0)
        bound = server_->bind_to_any_port(host);
    else if (!server_->bind_to_port(host, port))
        bound = -1;
    if (bound < 0) throw Error(ErrorKind::Io, fmt::format("cannot bind {}:{}", host, port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    spdlog::info("review service listening on {}:{}", host, bound);
    return bound;
}

void ReviewService::listen(const std::string& host, int port) {
    spdlog::info("review service listening on {}:{}", host, port);
    if (!server_->listen(host, port)) throw Error(ErrorKind::Io, fmt::format("cannot listen on {}:{}", host, port));
}

void ReviewService::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace vqasynth::human

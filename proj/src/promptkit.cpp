#include "vqasynth/promptkit.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "vqasynth/error.hpp"
#include "vqasynth/hash.hpp"
#include "vqasynth/jsonl.hpp"

#ifndef VQASYNTH_TEMPLATE_DIR
#define VQASYNTH_TEMPLATE_DIR "templates"
#endif

namespace vqasynth::prompt {

std::string_view kind_name(Kind kind) { return kind == Kind::QBP ? "QBP" : "QBC"; }

Kind kind_from_name(std::string_view name) {
    if (name == "QBP" || name == "qbp") return Kind::QBP;
    if (name == "QBC" || name == "qbc") return Kind::QBC;
    throw Error(ErrorKind::Parse, fmt::format("unknown prompt kind \"{}\"", name));
}

std::string prompt_hash(Kind kind, std::string_view user_text) {
    std::string material(kind_name(kind));
    material.push_back('\0');
    material.append(user_text);
    return sha256_hex(material);
}

std::filesystem::path TemplateSet::default_dir() {
    if (const char* env = std::getenv("VQASYNTH_TEMPLATE_DIR"); env != nullptr && *env != '\0') return env;
    return VQASYNTH_TEMPLATE_DIR;
}

TemplateSet TemplateSet::load_default() { return load(default_dir()); }

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    const auto lock_path = dir / "templates.lock";
    nlohmann::json lock;
    try {
        lock = nlohmann::json::parse(jsonl::read_text(lock_path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Template, "unreadable lockfile " + lock_path.string() + ": " + e.what());
    }
    auto read_pinned = [&](const char* name, std::string& text, std::string& hash) {
        if (!lock.contains("templates") || !lock["templates"].contains(name))
            throw Error(ErrorKind::Template, fmt::format("lockfile has no entry for template \"{}\"", name));
        const auto& entry = lock["templates"][name];
        const auto file = dir / entry.at("file").get<std::string>();
        text = jsonl::read_text(file);
        hash = sha256_hex(text);
        const auto expected = entry.at("sha256").get<std::string>();
        if (hash != expected)
            throw Error(ErrorKind::Template, fmt::format("template {} hash {} does not match lockfile hash {}",
                                                         file.string(), hash, expected));
    };
    TemplateSet t;
    read_pinned("qbp", t.qbp_, t.qbp_hash_);
    read_pinned("qbc", t.qbc_, t.qbc_hash_);
    if (t.qbp_.find(kQaGroupPlaceholder) == std::string::npos)
        throw Error(ErrorKind::Template, "QBP template lacks the {QA Group} placeholder");
    return t;
}

std::string serialize_group(const corpus::QuestionGroup& group) {
    std::string out;
    for (std::size_t k = 0; k < group.pairs.size(); ++k) {
        if (k) out += '\n';
        out += fmt::format("Q{}: {} ({})", k + 1, group.pairs[k].question, group.pairs[k].answer);
    }
    return out;
}

RenderedPrompt PromptRenderer::render_qbp(const corpus::QuestionGroup& group) const {
    const std::string& tpl = templates_.qbp();
    const auto at = tpl.find(kQaGroupPlaceholder);
    RenderedPrompt p;
    p.kind = Kind::QBP;
    // Single splice; substituted text is never re-scanned for placeholders.
    p.user_text.reserve(tpl.size() + 64 * group.pairs.size());
    p.user_text.append(tpl, 0, at);
    p.user_text += serialize_group(group);
    p.user_text.append(tpl, at + kQaGroupPlaceholder.size());
    p.prompt_hash = prompt_hash(p.kind, p.user_text);
    p.source_ids = group.qids();
    return p;
}

RenderedPrompt PromptRenderer::render_qbc(const corpus::QaPair& pair) const {
    RenderedPrompt p;
    p.kind = Kind::QBC;
    p.user_text = templates_.qbc();
    if (!p.user_text.empty() && p.user_text.back() != '\n') p.user_text += '\n';
    p.user_text += "\nQuestion: ";
    p.user_text += pair.question;
    p.user_text += "\nAnswer: ";
    p.user_text += pair.answer;
    p.prompt_hash = prompt_hash(p.kind, p.user_text);
    p.source_ids = {pair.qid};
    return p;
}

}  // namespace vqasynth::prompt

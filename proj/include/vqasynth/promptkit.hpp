#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vqasynth/corpus.hpp"

namespace vqasynth::prompt {

enum class Kind { QBP, QBC };

std::string_view kind_name(Kind kind);
Kind kind_from_name(std::string_view name);

struct RenderedPrompt {
    Kind kind = Kind::QBP;
    std::optional<std::string> system_text;  // always empty: single-block prompts
    std::string user_text;
    std::string prompt_hash;  // sha256 hex over kind name, NUL, user_text
    std::vector<std::string> source_ids;
};

std::string prompt_hash(Kind kind, std::string_view user_text);

inline constexpr std::string_view kQaGroupPlaceholder = "{QA Group}";

// Template files plus the lockfile that pins their hashes. Loading fails
// (Error{Template}) if any template's bytes differ from the recorded hash,
// so nothing downstream can render with a drifted prompt.
class TemplateSet {
public:
    static TemplateSet load(const std::filesystem::path& dir);

    // Templates that ship with the source tree.
    static TemplateSet load_default();
    static std::filesystem::path default_dir();

    const std::string& qbp() const { return qbp_; }
    const std::string& qbc() const { return qbc_; }
    const std::string& qbp_hash() const { return qbp_hash_; }
    const std::string& qbc_hash() const { return qbc_hash_; }

private:
    std::string qbp_, qbc_;
    std::string qbp_hash_, qbc_hash_;
};

// "Q{k}: {question} ({answer})" lines, k = 1-based position in the group.
std::string serialize_group(const corpus::QuestionGroup& group);

class PromptRenderer {
public:
    explicit PromptRenderer(TemplateSet templates) : templates_(std::move(templates)) {}

    RenderedPrompt render_qbp(const corpus::QuestionGroup& group) const;
    RenderedPrompt render_qbc(const corpus::QaPair& pair) const;

    const TemplateSet& templates() const { return templates_; }

private:
    TemplateSet templates_;
};

}  // namespace vqasynth::prompt

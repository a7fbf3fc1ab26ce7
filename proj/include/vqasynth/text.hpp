#pragma once

#include <string>
#include <string_view>
#include <vector>

// Small text utilities shared by the corpus statistics, quality gates and the
// scorer. Everything here works on UTF-8 byte strings.
namespace vqasynth::text {

std::string_view trim(std::string_view s);

// Whitespace-delimited tokens of the trimmed text.
std::vector<std::string> split_words(std::string_view s);

// Canonical word count used for all length statistics and bounds.
std::size_t word_count(std::string_view s);

std::string ascii_lower(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Lowercase, NFC, punctuation stripped (replaced by a space), whitespace
// collapsed. Used for fuzzy containment checks, not for exact match scoring.
std::string normalize_loose(std::string_view s);

// Tokens of normalize_loose(s).
std::vector<std::string> loose_tokens(std::string_view s);

// Unicode NFC composition followed by full lowercase mapping.
std::string nfc_lower(std::string_view s);

}  // namespace vqasynth::text

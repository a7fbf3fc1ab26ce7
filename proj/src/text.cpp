#include "vqasynth/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include "vqasynth/error.hpp"

namespace vqasynth::text {

namespace {
constexpr std::string_view kSpace = " \t\n\r\f\v";
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(kSpace);
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(kSpace);
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        i = s.find_first_not_of(kSpace, i);
        if (i == std::string_view::npos) break;
        auto j = s.find_first_of(kSpace, i);
        if (j == std::string_view::npos) j = s.size();
        out.emplace_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

std::size_t word_count(std::string_view s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        const bool space = kSpace.find(c) != std::string_view::npos;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

namespace {

icu::UnicodeString nfc_lower_u(std::string_view s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error(ErrorKind::Validation, "ICU NFC normalizer unavailable");
    auto u = icu::UnicodeString::fromUTF8(icu::StringPiece(s.data(), static_cast<int32_t>(s.size())));
    icu::UnicodeString composed = nfc->normalize(u, status);
    if (U_FAILURE(status)) throw Error(ErrorKind::Validation, "NFC normalization failed");
    composed.toLower(icu::Locale::getRoot());
    // Lowercasing can produce decomposed sequences (e.g. dotted capital I).
    return nfc->normalize(composed, status);
}

std::string to_utf8(const icu::UnicodeString& u) {
    std::string out;
    u.toUTF8String(out);
    return out;
}

}  // namespace

std::string nfc_lower(std::string_view s) { return to_utf8(nfc_lower_u(s)); }

std::string normalize_loose(std::string_view s) {
    const icu::UnicodeString u = nfc_lower_u(s);
    icu::UnicodeString out;
    bool pending_space = false;
    for (int32_t i = 0; i < u.length();) {
        const UChar32 c = u.char32At(i);
        i += U16_LENGTH(c);
        if (u_ispunct(c) || u_isUWhiteSpace(c) || c == '`' || c == '^' || c == '|' || c == '~' ||
            c == '+' || c == '<' || c == '>' || c == '=' || c == '$') {
            pending_space = !out.isEmpty();
            continue;
        }
        if (pending_space) out.append(static_cast<UChar>(' '));
        pending_space = false;
        out.append(c);
    }
    return to_utf8(out);
}

std::vector<std::string> loose_tokens(std::string_view s) { return split_words(normalize_loose(s)); }

}  // namespace vqasynth::text

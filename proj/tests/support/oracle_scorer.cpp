#include "oracle_scorer.hpp"

#include <cctype>
#include <regex>

namespace oracle {

namespace {

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::string step(const std::string& in, bool options_present) {
    static const std::regex lead(R"(^\s+)"), trail(R"(\s+$)"), runs(R"(\s+)"), punct(R"([\s.?!]+$)");
    static const std::regex paren_label(R"(^\([a-z]\)\s*(\S.*)$)"), dot_label(R"(^[a-z][.):]\s+(\S.*)$)");
    std::string s = lower(in);
    s = std::regex_replace(s, lead, "");
    s = std::regex_replace(s, trail, "");
    s = std::regex_replace(s, runs, " ");
    s = std::regex_replace(s, punct, "");
    if (options_present) {
        std::smatch m;
        if (std::regex_match(s, m, paren_label) || std::regex_match(s, m, dot_label)) s = m[1].str();
    }
    return s;
}

std::optional<int> letter_of(const std::string& predicted, std::size_t n_options) {
    // Accepted shapes are exactly: x, (x), x., x), x:
    static const std::regex plain(R"(^\s*([a-z])\s*$)"), paren(R"(^\s*\(([a-z])\)\s*$)"),
        suffix(R"(^\s*([a-z])[.):]\s*$)");
    const std::string s = lower(predicted);
    std::smatch m;
    if (!std::regex_match(s, m, plain) && !std::regex_match(s, m, paren) && !std::regex_match(s, m, suffix))
        return std::nullopt;
    const int idx = m[1].str()[0] - 'a';
    if (static_cast<std::size_t>(idx) >= n_options) return std::nullopt;
    return idx;
}

// Alphanumeric runs joined by single spaces, with a leading and trailing space.
std::string words(const std::string& s) {
    static const std::regex word(R"([a-z0-9]+)");
    std::string out = " ";
    for (auto it = std::sregex_iterator(s.begin(), s.end(), word); it != std::sregex_iterator(); ++it)
        out += it->str() + " ";
    return out;
}

}  // namespace

std::string normalize(const std::string& s, bool options_present) {
    std::string cur = s;
    for (;;) {
        std::string next = step(cur, options_present);
        if (next == cur) return cur;
        cur = next;
    }
}

bool correct(const Record& r) {
    const bool opts = r.options.has_value();
    if (opts && r.gold_index) {
        const auto& options = *r.options;
        const std::string pred = normalize(r.predicted, true);
        std::optional<int> chosen;
        // Every option whose normalized text equals the prediction; the first wins.
        for (std::size_t i = 0; i < options.size() && !chosen; ++i)
            if (normalize(options[i], true) == pred) chosen = static_cast<int>(i);
        if (!chosen) chosen = letter_of(r.predicted, options.size());
        if (!chosen) {
            std::vector<int> containing;
            for (std::size_t i = 0; i < options.size(); ++i) {
                const std::string o = words(normalize(options[i], true));
                if (o != " " && words(pred).find(o) != std::string::npos)
                    containing.push_back(static_cast<int>(i));
            }
            if (containing.size() == 1) chosen = containing[0];
        }
        if (chosen && *chosen == *r.gold_index) return true;
    }
    return normalize(r.predicted, opts) == normalize(r.gold, opts);
}

double accuracy_percent(const std::vector<Record>& records) {
    if (records.empty()) return 0.0;
    std::size_t ok = 0;
    for (const auto& r : records) ok += correct(r) ? 1 : 0;
    return 100.0 * static_cast<double>(ok) / static_cast<double>(records.size());
}

}  // namespace oracle

#include "frameprobe/matcher.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <nlohmann/json.hpp>

#include "frameprobe/corpus.hpp"
#include "frameprobe/error.hpp"

namespace frameprobe {

using namespace std::string_view_literals;

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::exact: return "exact";
    case Verdict::alias: return "alias";
    case Verdict::fuzzy: return "fuzzy";
    case Verdict::none: return "none";
  }
  return "none";
}

Verdict parse_verdict(std::string_view s) {
  if (s == "exact") return Verdict::exact;
  if (s == "alias") return Verdict::alias;
  if (s == "fuzzy") return Verdict::fuzzy;
  if (s == "none") return Verdict::none;
  throw Error(Errc::ParseError, "unknown verdict '" + std::string(s) + "'");
}

namespace {

// ---------------------------------------------------------------------------
// UTF-8 helpers

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size();) {
    const auto b = static_cast<unsigned char>(s[i]);
    int len = 1;
    char32_t cp = b;
    if (b >= 0xF0 && b < 0xF8) {
      len = 4;
      cp = b & 0x07;
    } else if (b >= 0xE0) {
      len = 3;
      cp = b & 0x0F;
    } else if (b >= 0xC0) {
      len = 2;
      cp = b & 0x1F;
    } else if (b >= 0x80) {
      cp = 0xFFFD;  // stray continuation byte
    }
    if (len > 1) {
      if (i + len > s.size()) {
        out.push_back(0xFFFD);
        break;
      }
      for (int k = 1; k < len; ++k) {
        cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
      }
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Base letters for U+00C0..U+00FF; '\0' marks non-letters, '*' multi-letter folds.
constexpr std::string_view kLatin1Fold =
    "aaaaaa*ceeeeiiiidnooooo\0ouuuuy**"
    "aaaaaa*ceeeeiiiidnooooo\0ouuuuy*y"sv;
static_assert(kLatin1Fold.size() == 64);

// Base letters for U+0100..U+017F.
constexpr std::string_view kLatinExtAFold =
    "aaaaaaccccccccddddeeeeeeeeeegggggggghhhhiiiiiiiiii**jjkkkllllllllllnnnnnnnnn"
    "oooooo**rrrrrrssssssssttttttuuuuuuuuuuuuwwyyyzzzzzzs"sv;
static_assert(kLatinExtAFold.size() == 128);

/// Appends the case-folded, accent-stripped form of `cp`. Non-alphanumeric
/// symbols become a space, apostrophes vanish, combining marks are dropped.
void fold(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    const char c = static_cast<char>(cp);
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (c == '\'' || c == '`') {
      // "Schindler's" == "Schindlers"
    } else if (c == '&') {
      out += " and ";
    } else {
      out.push_back(' ');
    }
    return;
  }
  if (cp >= 0x300 && cp <= 0x36F) return;  // combining diacritics
  if (cp == 0x2018 || cp == 0x2019 || cp == 0x02BC || cp == 0x00B4) return;
  if (cp >= 0xC0 && cp <= 0xFF) {
    const char base = kLatin1Fold[cp - 0xC0];
    if (base == '*') {
      switch (cp) {
        case 0xC6: case 0xE6: out += "ae"; break;
        case 0xDE: case 0xFE: out += "th"; break;
        case 0xDF: out += "ss"; break;
        default: out.push_back(' ');
      }
    } else if (base == '\0') {
      out.push_back(' ');
    } else {
      out.push_back(base);
    }
    return;
  }
  if (cp >= 0x100 && cp <= 0x17F) {
    const char base = kLatinExtAFold[cp - 0x100];
    if (base == '*') {
      out += (cp == 0x132 || cp == 0x133) ? "ij" : "oe";
    } else {
      out.push_back(base);
    }
    return;
  }
  // General punctuation, Latin-1 symbols, spacing/quotes and full-width forms.
  if ((cp >= 0x80 && cp < 0xC0) || (cp >= 0x2000 && cp <= 0x206F) ||
      (cp >= 0x3000 && cp <= 0x303F) || cp == 0xFFFD) {
    out.push_back(' ');
    return;
  }
  append_utf8(out, cp);
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool istarts_with(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(s[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i]))) {
      return false;
    }
  }
  return true;
}

/// Removes a trailing "(1999)" or "[1999]".
std::string_view drop_trailing_year(std::string_view s) {
  s = trim(s);
  if (s.size() < 6) return s;
  const char close = s.back();
  const char open = s[s.size() - 6];
  if (!((open == '(' && close == ')') || (open == '[' && close == ']'))) return s;
  for (std::size_t i = s.size() - 5; i < s.size() - 1; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return s;
  }
  return trim(s.substr(0, s.size() - 6));
}

}  // namespace

std::string canonicalize(std::string_view title) {
  std::string folded;
  for (char32_t cp : decode_utf8(drop_trailing_year(title))) fold(folded, cp);

  std::vector<std::string_view> words;
  std::string_view rest = folded;
  while (!rest.empty()) {
    const auto start = rest.find_first_not_of(' ');
    if (start == std::string_view::npos) break;
    rest.remove_prefix(start);
    const auto end = rest.find(' ');
    words.push_back(rest.substr(0, end));
    if (end == std::string_view::npos) break;
    rest.remove_prefix(end);
  }

  std::size_t first = 0;
  while (words.size() - first > 1 &&
         (words[first] == "the" || words[first] == "a" || words[first] == "an")) {
    ++first;
  }

  std::string out;
  for (std::size_t i = first; i < words.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += words[i];
  }
  return out;
}

namespace {

std::optional<std::string> structured_title(std::string_view text) {
  static constexpr std::string_view kKey = "\"movie_title\"";
  const auto pos = text.find(kKey);
  if (pos == std::string_view::npos) return std::nullopt;
  std::size_t i = pos + kKey.size();
  while (i < text.size() && is_space(text[i])) ++i;
  if (i >= text.size() || text[i] != ':') return std::nullopt;
  ++i;
  while (i < text.size() && is_space(text[i])) ++i;
  if (i >= text.size() || text[i] != '"') return std::nullopt;
  // Find the closing quote, honoring escapes, then let the JSON parser decode.
  std::size_t j = i + 1;
  while (j < text.size() && text[j] != '"') j += (text[j] == '\\') ? 2 : 1;
  if (j >= text.size()) return std::nullopt;
  try {
    return nlohmann::json::parse(text.substr(i, j - i + 1)).get<std::string>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

// Longest first so "the movie is called" wins over "the movie is".
constexpr std::array<std::string_view, 24> kBoilerplate = {
    "this frame is from the movie",
    "this image is from the movie",
    "this is a frame from the movie",
    "this scene is from the movie",
    "the movie in the image is",
    "the movie in this frame is",
    "the movie is called",
    "the correct answer is",
    "this frame is from",
    "this image is from",
    "this scene is from",
    "the movie shown is",
    "my guess is",
    "final answer:",
    "the answer is",
    "movie title:",
    "the movie is",
    "the film is",
    "movie name:",
    "the movie ",
    "the film ",
    "answer:",
    "title:",
    "movie:",
};

bool is_quote(char32_t c) {
  return c == U'"' || c == U'\'' || c == U'“' || c == U'”' || c == U'‘' ||
         c == U'’' || c == U'«' || c == U'»';
}

std::string strip_once(std::string_view s) {
  s = trim(s);
  // Markdown emphasis / inline code.
  for (std::string_view mark : {"**", "__", "*", "_", "`"}) {
    if (s.size() > 2 * mark.size() && s.substr(0, mark.size()) == mark &&
        s.substr(s.size() - mark.size()) == mark) {
      s = s.substr(mark.size(), s.size() - 2 * mark.size());
      return std::string(s);
    }
  }
  for (auto prefix : kBoilerplate) {
    if (istarts_with(s, prefix) && s.size() > prefix.size()) {
      const char next = s[prefix.size()];
      // Require a word boundary after prefixes that end inside a word.
      if (prefix.back() == ' ' || prefix.back() == ':' || is_space(next) || next == ':' ||
          next == '"' || next == '\'' || next == '*') {
        auto rest = s.substr(prefix.size());
        while (!rest.empty() && (is_space(rest.front()) || rest.front() == ':')) {
          rest.remove_prefix(1);
        }
        if (!rest.empty()) return std::string(rest);
      }
    }
  }
  // Surrounding quotes.
  const auto cps = decode_utf8(s);
  if (cps.size() >= 2 && is_quote(cps.front()) && is_quote(cps.back())) {
    std::string out;
    for (std::size_t i = 1; i + 1 < cps.size(); ++i) append_utf8(out, cps[i]);
    return out;
  }
  // Trailing sentence punctuation.
  if (s.size() > 1 && std::string_view(".!?,;:").find(s.back()) != std::string_view::npos) {
    return std::string(s.substr(0, s.size() - 1));
  }
  return std::string(s);
}

}  // namespace

std::string extract_title(std::string_view raw_text) {
  if (auto t = structured_title(raw_text)) return std::string(trim(*t));

  // First non-empty line that is not a code fence.
  std::string_view line;
  std::string_view rest = raw_text;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    auto candidate = trim(rest.substr(0, nl));
    if (!candidate.empty() && candidate.substr(0, 3) != "```") {
      line = candidate;
      break;
    }
    if (nl == std::string_view::npos) break;
    rest.remove_prefix(nl + 1);
  }
  if (line.empty()) return std::string(trim(raw_text));

  std::string current(line);
  for (int guard = 0; guard < 32; ++guard) {
    std::string next = strip_once(current);
    if (next == current) break;
    current = std::move(next);
  }
  return current;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const auto x = decode_utf8(a);
  const auto y = decode_utf8(b);
  std::vector<std::size_t> row(y.size() + 1);
  for (std::size_t j = 0; j <= y.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= x.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= y.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (x[i - 1] == y[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[y.size()];
}

double edit_similarity(std::string_view a, std::string_view b) {
  const std::size_t longest = std::max(decode_utf8(a).size(), decode_utf8(b).size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(longest);
}

namespace {

/// Numbers and roman numerals II..XX, as digits, in order of appearance.
std::vector<std::string> sequel_markers(std::string_view canon) {
  static constexpr std::array<std::string_view, 19> kRoman = {
      "ii", "iii", "iv", "v", "vi", "vii", "viii", "ix", "x", "xi",
      "xii", "xiii", "xiv", "xv", "xvi", "xvii", "xviii", "xix", "xx"};
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < canon.size()) {
    const auto end = std::min(canon.find(' ', pos), canon.size());
    const auto word = canon.substr(pos, end - pos);
    if (!word.empty() && std::all_of(word.begin(), word.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      out.emplace_back(word);
    } else if (auto it = std::find(kRoman.begin(), kRoman.end(), word); it != kRoman.end()) {
      out.push_back(std::to_string(it - kRoman.begin() + 2));
    }
    pos = end + 1;
  }
  return out;
}

/// Edit similarity, held below the threshold when sequel numbers differ.
double pair_similarity(const std::string& candidate, const std::string& target, double threshold) {
  const double sim = edit_similarity(candidate, target);
  if (sim >= threshold && sequel_markers(candidate) != sequel_markers(target)) {
    return std::nextafter(threshold, 0.0);
  }
  return sim;
}

}  // namespace

MatchOutcome match_title(std::string_view raw_text, std::string_view title,
                         std::span<const std::string> aliases, double fuzzy_threshold) {
  if (!(fuzzy_threshold > 0.0 && fuzzy_threshold <= 1.0)) {
    throw Error(Errc::InvalidParam, "fuzzy threshold must lie in (0, 1]");
  }
  MatchOutcome out;
  out.extracted_candidate = extract_title(raw_text);
  const std::string candidate = canonicalize(out.extracted_candidate);

  const std::string canon_title = canonicalize(title);
  if (!candidate.empty() && candidate == canon_title) {
    out.verdict = Verdict::exact;
    out.similarity = 1.0;
    return out;
  }
  std::vector<std::string> canon_aliases;
  canon_aliases.reserve(aliases.size());
  for (const auto& a : aliases) {
    canon_aliases.push_back(canonicalize(a));
    if (!candidate.empty() && candidate == canon_aliases.back()) {
      out.verdict = Verdict::alias;
      out.similarity = 1.0;
      return out;
    }
  }
  if (candidate.empty()) return out;

  double best = pair_similarity(candidate, canon_title, fuzzy_threshold);
  for (const auto& a : canon_aliases) best = std::max(best, pair_similarity(candidate, a, fuzzy_threshold));
  out.similarity = best;
  out.verdict = best >= fuzzy_threshold ? Verdict::fuzzy : Verdict::none;
  return out;
}

MatchOutcome match_title(std::string_view raw_text, const Movie& movie, double fuzzy_threshold) {
  return match_title(raw_text, movie.title, movie.aliases, fuzzy_threshold);
}

namespace {

constexpr std::array<std::string_view, 9> kMcqaPrefixes = {
    "the correct answer is", "the correct option is", "the answer is", "correct answer:",
    "final answer:", "answer:", "option", "choice", "the movie is",
};

std::optional<std::size_t> letter_index(char c) {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u >= 'A' && u <= 'D') return static_cast<std::size_t>(u - 'A');
  return std::nullopt;
}

std::optional<std::size_t> match_option_text(std::string_view text,
                                             std::span<const std::string> options,
                                             double fuzzy_threshold) {
  std::optional<std::size_t> best;
  double best_sim = -1.0;
  bool tied = false;
  for (std::size_t i = 0; i < options.size(); ++i) {
    const auto m = match_title(text, options[i], {}, fuzzy_threshold);
    if (m.verdict == Verdict::none) continue;
    if (m.similarity > best_sim) {
      best = i;
      best_sim = m.similarity;
      tied = false;
    } else if (m.similarity == best_sim) {
      tied = true;
    }
  }
  if (tied) return std::nullopt;
  return best;
}

}  // namespace

std::optional<std::size_t> parse_mcqa(std::string_view raw_text,
                                      std::span<const std::string> options,
                                      double fuzzy_threshold) {
  if (options.size() != 4) throw Error(Errc::InvalidParam, "MCQA needs exactly 4 options");

  std::string text(trim(raw_text));
  if (auto t = structured_title(text)) text = *t;

  // Peel emphasis, quotes and answer prefixes.
  for (int guard = 0; guard < 16; ++guard) {
    std::string_view s = trim(text);
    std::string next(s);
    for (std::string_view mark : {"**", "__", "*", "`", "\"", "'"}) {
      if (s.size() > 2 * mark.size() && s.substr(0, mark.size()) == mark &&
          s.substr(s.size() - mark.size()) == mark) {
        next = std::string(s.substr(mark.size(), s.size() - 2 * mark.size()));
        break;
      }
    }
    if (next == s) {
      for (auto prefix : kMcqaPrefixes) {
        if (istarts_with(s, prefix) && s.size() > prefix.size()) {
          auto rest = trim(s.substr(prefix.size()));
          while (!rest.empty() && rest.front() == ':') rest = trim(rest.substr(1));
          if (!rest.empty()) next = std::string(rest);
          break;
        }
      }
    }
    if (next == text) break;
    text = std::move(next);
  }

  std::string_view s = trim(text);
  if (s.empty()) return std::nullopt;

  // "(B)" / "[B]"
  if (s.size() >= 3 && (s[0] == '(' || s[0] == '[') && (s[2] == ')' || s[2] == ']')) {
    if (auto idx = letter_index(s[1])) return idx;
  }

  if (auto idx = letter_index(s[0])) {
    if (s.size() == 1) return idx;
    const char next = s[1];
    if (std::string_view(".):]-").find(next) != std::string_view::npos) return idx;
    // "A Beautiful Mind" is option text, "B Frozen" is a letter.
    if (is_space(next)) {
      if (auto by_text = match_option_text(s, options, fuzzy_threshold)) return by_text;
      if (std::isupper(static_cast<unsigned char>(s[0]))) return idx;
    }
  }

  return match_option_text(s, options, fuzzy_threshold);
}

}  // namespace frameprobe

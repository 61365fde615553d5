#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace frameprobe {

struct Movie;

inline constexpr double kDefaultFuzzyThreshold = 0.9;

enum class Verdict { exact, alias, fuzzy, none };

std::string_view to_string(Verdict v);
Verdict parse_verdict(std::string_view s);

struct MatchOutcome {
  Verdict verdict = Verdict::none;
  double similarity = 0.0;
  std::string extracted_candidate;

  bool correct() const { return verdict != Verdict::none; }
};

/// Folds Latin accents and case, strips punctuation, a trailing "(YYYY)" and
/// leading articles, and collapses spaces.
std::string canonicalize(std::string_view title);

/// Pulls the title out of a free-form answer. A JSON `movie_title` field wins.
std::string extract_title(std::string_view raw_text);

/// Levenshtein distance over Unicode code points.
std::size_t edit_distance(std::string_view a, std::string_view b);

/// 1 - distance / max(len); 1.0 for two empty strings.
double edit_similarity(std::string_view a, std::string_view b);

MatchOutcome match_title(std::string_view raw_text, std::string_view title,
                         std::span<const std::string> aliases,
                         double fuzzy_threshold = kDefaultFuzzyThreshold);
MatchOutcome match_title(std::string_view raw_text, const Movie& movie,
                         double fuzzy_threshold = kDefaultFuzzyThreshold);

/// Returns the 0-based option index named by the answer, if any.
std::optional<std::size_t> parse_mcqa(std::string_view raw_text,
                                      std::span<const std::string> options,
                                      double fuzzy_threshold = kDefaultFuzzyThreshold);

}  // namespace frameprobe

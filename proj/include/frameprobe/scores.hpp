#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace frameprobe {

/// Declaration order is the report row order.
enum class Detector { captions, mcqa, renyi, floor_disco, disco };

std::string_view to_string(Detector d);
/// Display label used in report tables.
std::string_view display_name(Detector d);
Detector parse_detector(std::string_view s);

/// Which accuracy a score table or AUC is computed over.
enum class ScoreView { weighted, main, neutral };
std::string_view to_string(ScoreView v);
ScoreView parse_score_view(std::string_view s);

/// Per-k Rényi membership scores (negated aggregated entropy, mean over frames).
/// NaN marks a view with no frames.
struct RenyiScores {
  std::vector<double> k_grid;
  std::vector<double> all;
  std::vector<double> main;
  std::vector<double> neutral;

  const std::vector<double>& view(ScoreView v) const;
};

struct MovieScore {
  std::string movie_title;
  Detector detector = Detector::disco;
  double acc_main = 0.0;
  double acc_neutral = 0.0;
  double acc_weighted = 0.0;
  std::size_t n_main = 0;
  std::size_t n_neutral = 0;
  std::size_t correct_main = 0;
  std::size_t correct_neutral = 0;
  std::optional<double> renyi_score;
  std::optional<RenyiScores> renyi;

  double accuracy(ScoreView v) const;
  /// The value fed to AUC: accuracy for accuracy-based detectors, the Rényi
  /// score at `k_index` for the Rényi detector.
  double detection_score(ScoreView v, std::optional<std::size_t> k_index = std::nullopt) const;
};

/// Accuracies from raw counts; the weighted value is pooled over both kinds.
MovieScore make_accuracy_score(std::string title, Detector detector, std::size_t correct_main,
                               std::size_t n_main, std::size_t correct_neutral,
                               std::size_t n_neutral);

}  // namespace frameprobe

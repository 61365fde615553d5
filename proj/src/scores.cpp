#include "frameprobe/scores.hpp"

#include <cmath>
#include <limits>

#include "frameprobe/error.hpp"

namespace frameprobe {

std::string_view to_string(Detector d) {
  switch (d) {
    case Detector::captions: return "captions";
    case Detector::mcqa: return "mcqa";
    case Detector::renyi: return "renyi";
    case Detector::floor_disco: return "floor_disco";
    case Detector::disco: return "disco";
  }
  return "disco";
}

std::string_view display_name(Detector d) {
  switch (d) {
    case Detector::captions: return "Captions";
    case Detector::mcqa: return "MCQA";
    case Detector::renyi: return "Renyi";
    case Detector::floor_disco: return "floor(DIS-CO)";
    case Detector::disco: return "DIS-CO";
  }
  return "DIS-CO";
}

Detector parse_detector(std::string_view s) {
  if (s == "captions") return Detector::captions;
  if (s == "mcqa") return Detector::mcqa;
  if (s == "renyi") return Detector::renyi;
  if (s == "floor_disco") return Detector::floor_disco;
  if (s == "disco") return Detector::disco;
  throw Error(Errc::InvalidParam, "unknown detector '" + std::string(s) + "'");
}

std::string_view to_string(ScoreView v) {
  switch (v) {
    case ScoreView::weighted: return "weighted";
    case ScoreView::main: return "main";
    case ScoreView::neutral: return "neutral";
  }
  return "weighted";
}

ScoreView parse_score_view(std::string_view s) {
  if (s == "weighted") return ScoreView::weighted;
  if (s == "main") return ScoreView::main;
  if (s == "neutral") return ScoreView::neutral;
  throw Error(Errc::InvalidParam, "unknown score view '" + std::string(s) + "'");
}

const std::vector<double>& RenyiScores::view(ScoreView v) const {
  switch (v) {
    case ScoreView::main: return main;
    case ScoreView::neutral: return neutral;
    case ScoreView::weighted: return all;
  }
  return all;
}

double MovieScore::accuracy(ScoreView v) const {
  switch (v) {
    case ScoreView::main: return acc_main;
    case ScoreView::neutral: return acc_neutral;
    case ScoreView::weighted: return acc_weighted;
  }
  return acc_weighted;
}

double MovieScore::detection_score(ScoreView v, std::optional<std::size_t> k_index) const {
  if (detector != Detector::renyi) return accuracy(v);
  if (!renyi) {
    return renyi_score.value_or(std::numeric_limits<double>::quiet_NaN());
  }
  const auto& values = renyi->view(v);
  const std::size_t i = k_index.value_or(values.empty() ? 0 : values.size() - 1);
  if (i >= values.size()) throw Error(Errc::InvalidParam, "k index out of range");
  return values[i];
}

MovieScore make_accuracy_score(std::string title, Detector detector, std::size_t correct_main,
                               std::size_t n_main, std::size_t correct_neutral,
                               std::size_t n_neutral) {
  MovieScore s;
  s.movie_title = std::move(title);
  s.detector = detector;
  s.n_main = n_main;
  s.n_neutral = n_neutral;
  s.correct_main = correct_main;
  s.correct_neutral = correct_neutral;
  s.acc_main = n_main ? static_cast<double>(correct_main) / static_cast<double>(n_main) : 0.0;
  s.acc_neutral =
      n_neutral ? static_cast<double>(correct_neutral) / static_cast<double>(n_neutral) : 0.0;
  const std::size_t n = n_main + n_neutral;
  s.acc_weighted = n ? static_cast<double>(correct_main + correct_neutral) / static_cast<double>(n) : 0.0;
  return s;
}

}  // namespace frameprobe

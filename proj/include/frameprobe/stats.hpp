#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "frameprobe/corpus.hpp"
#include "frameprobe/scores.hpp"

namespace frameprobe {

inline constexpr int kDefaultBootstrapIterations = 10;

struct McqaChance {
  int options = 4;
};

/// Free-form guessing over `output_space` titles, with a popularity multiplier.
struct FreeformChance {
  double output_space = 10000;
  double bias = 1.0;
};

using ChanceMode = std::variant<McqaChance, FreeformChance>;

double chance_baseline(const ChanceMode& mode);

/// Mann-Whitney AUC: P(s > c) + P(s == c) / 2 over all suspect/clean pairs.
double auc(std::span<const double> suspect, std::span<const double> clean);

struct ThresholdChoice {
  double threshold = 0.0;
  double balanced_accuracy = 0.5;
};

/// Scores >= threshold are called suspect. Candidates are the midpoints between
/// adjacent distinct pooled values plus -inf/+inf; ties go to the smallest.
ThresholdChoice best_threshold(std::span<const double> suspect, std::span<const double> clean);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Population mean and standard deviation.
MeanStd mean_std(std::span<const double> values);

struct DetectionReport {
  std::string detector;
  std::string view;
  double auc_mean = 0.0;
  double auc_std = 0.0;
  std::vector<double> per_iteration_auc;
  std::vector<double> per_iteration_threshold;
  std::vector<double> per_iteration_balanced_accuracy;
  /// Threshold and balanced accuracy on the full (non-resampled) groups.
  double best_threshold = 0.0;
  double threshold_balanced_accuracy = 0.5;
  MeanStd suspect_accuracy;
  MeanStd clean_accuracy;
  std::uint64_t seed = 0;
  std::optional<double> k_selected;
};

/// Uniform index in [0, n) by rejection sampling; portable across standard libraries.
std::size_t uniform_index(std::mt19937_64& rng, std::size_t n);

/// Engine for one bootstrap iteration, derived from (seed, iteration).
std::mt19937_64 iteration_engine(std::uint64_t seed, int iteration);

/// Returns n indices into a group of size n.
using IndexSampler = std::function<std::vector<std::size_t>(std::size_t n, std::mt19937_64& rng)>;

/// With-replacement draw of n indices.
std::vector<std::size_t> resample_with_replacement(std::size_t n, std::mt19937_64& rng);

DetectionReport bootstrap_auc(std::span<const double> suspect, std::span<const double> clean,
                              int iterations = kDefaultBootstrapIterations, std::uint64_t seed = 0);

/// Same procedure with a custom index sampler (identity, stratified, ...).
DetectionReport bootstrap_auc(std::span<const double> suspect, std::span<const double> clean,
                              int iterations, std::uint64_t seed, const IndexSampler& sampler);

/// Bootstrap mean and std of a group's average value.
MeanStd group_accuracy(std::span<const double> values, int iterations = kDefaultBootstrapIterations,
                       std::uint64_t seed = 0);
MeanStd group_accuracy(std::span<const MovieScore> scores, ScoreView view,
                       int iterations = kDefaultBootstrapIterations, std::uint64_t seed = 0);

enum class Covariate { box_office, imdb_rating };
std::string_view to_string(Covariate c);
Covariate parse_covariate(std::string_view s);
std::vector<double> default_bin_edges(Covariate c);

struct CovariateSample {
  std::optional<double> value;
  double accuracy = 0.0;
};

struct CovariateBinReport {
  Covariate covariate = Covariate::box_office;
  std::vector<double> bin_edges;
  /// Empty optional marks a bin with no movies.
  std::vector<std::optional<double>> per_bin_accuracy;
  std::vector<std::size_t> per_bin_counts;
  std::size_t missing = 0;
};

/// Bins are [e_i, e_{i+1}) with the last bin closed.
CovariateBinReport bin_by_covariate(std::span<const CovariateSample> samples, Covariate covariate,
                                    std::span<const double> bin_edges);

std::optional<double> covariate_value(const Movie& movie, Covariate c);

}  // namespace frameprobe

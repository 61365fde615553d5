#include "frameprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "frameprobe/error.hpp"

namespace frameprobe {

double chance_baseline(const ChanceMode& mode) {
  if (const auto* m = std::get_if<McqaChance>(&mode)) {
    if (m->options < 2) throw Error(Errc::InvalidParam, "MCQA needs at least 2 options");
    return 1.0 / m->options;
  }
  const auto& f = std::get<FreeformChance>(mode);
  if (!(f.output_space >= 1.0)) throw Error(Errc::InvalidParam, "output space must be >= 1");
  if (!(f.bias >= 1.0)) throw Error(Errc::InvalidParam, "bias must be >= 1");
  return std::min(1.0, f.bias / f.output_space);
}

namespace {

void require_scores(std::span<const double> values, const char* name) {
  if (values.empty()) throw Error(Errc::EmptyInput, std::string(name) + " scores are empty");
  for (double v : values) {
    if (std::isnan(v)) throw Error(Errc::InvalidParam, std::string(name) + " scores contain NaN");
  }
}

}  // namespace

double auc(std::span<const double> suspect, std::span<const double> clean) {
  require_scores(suspect, "suspect");
  require_scores(clean, "clean");
  std::vector<double> sorted(clean.begin(), clean.end());
  std::sort(sorted.begin(), sorted.end());
  // Twice the Mann-Whitney U, kept integral so ties are exact.
  std::uint64_t twice_u = 0;
  for (double s : suspect) {
    const auto [lo, hi] = std::equal_range(sorted.begin(), sorted.end(), s);
    twice_u += 2 * static_cast<std::uint64_t>(lo - sorted.begin()) + static_cast<std::uint64_t>(hi - lo);
  }
  const double pairs = static_cast<double>(suspect.size()) * static_cast<double>(clean.size());
  return static_cast<double>(twice_u) / (2.0 * pairs);
}

ThresholdChoice best_threshold(std::span<const double> suspect, std::span<const double> clean) {
  require_scores(suspect, "suspect");
  require_scores(clean, "clean");
  std::vector<double> s(suspect.begin(), suspect.end());
  std::vector<double> c(clean.begin(), clean.end());
  std::sort(s.begin(), s.end());
  std::sort(c.begin(), c.end());
  std::vector<double> pooled(s);
  pooled.insert(pooled.end(), c.begin(), c.end());
  std::sort(pooled.begin(), pooled.end());
  pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

  std::vector<double> candidates;
  candidates.reserve(pooled.size() + 1);
  candidates.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i + 1 < pooled.size(); ++i) {
    candidates.push_back((pooled[i] + pooled[i + 1]) / 2.0);
  }
  candidates.push_back(std::numeric_limits<double>::infinity());

  const double ns = static_cast<double>(s.size());
  const double nc = static_cast<double>(c.size());
  ThresholdChoice best{candidates.front(), -1.0};
  for (double theta : candidates) {
    const auto s_below = std::lower_bound(s.begin(), s.end(), theta) - s.begin();
    const auto c_below = std::lower_bound(c.begin(), c.end(), theta) - c.begin();
    const double tpr = (ns - static_cast<double>(s_below)) / ns;
    const double tnr = static_cast<double>(c_below) / nc;
    const double balanced = (tpr + tnr) / 2.0;
    if (balanced > best.balanced_accuracy) best = {theta, balanced};
  }
  return best;
}

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw Error(Errc::EmptyInput, "no values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / n)};
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw Error(Errc::EmptyInput, "cannot draw from an empty range");
  const std::uint64_t range = n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % range);
}

std::mt19937_64 iteration_engine(std::uint64_t seed, int iteration) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(iteration)};
  return std::mt19937_64(seq);
}

std::vector<std::size_t> resample_with_replacement(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  for (auto& i : idx) i = uniform_index(rng, n);
  return idx;
}

DetectionReport bootstrap_auc(std::span<const double> suspect, std::span<const double> clean,
                              int iterations, std::uint64_t seed) {
  return bootstrap_auc(suspect, clean, iterations, seed, resample_with_replacement);
}

DetectionReport bootstrap_auc(std::span<const double> suspect, std::span<const double> clean,
                              int iterations, std::uint64_t seed, const IndexSampler& sampler) {
  require_scores(suspect, "suspect");
  require_scores(clean, "clean");
  if (iterations < 1) throw Error(Errc::InvalidParam, "iterations must be >= 1");

  DetectionReport report;
  report.seed = seed;
  std::vector<double> s(suspect.size());
  std::vector<double> c(clean.size());
  for (int it = 0; it < iterations; ++it) {
    auto rng = iteration_engine(seed, it);
    const auto si = sampler(suspect.size(), rng);
    const auto ci = sampler(clean.size(), rng);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = suspect[si[i]];
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = clean[ci[i]];
    report.per_iteration_auc.push_back(auc(s, c));
    const auto t = best_threshold(s, c);
    report.per_iteration_threshold.push_back(t.threshold);
    report.per_iteration_balanced_accuracy.push_back(t.balanced_accuracy);
  }
  const auto ms = mean_std(report.per_iteration_auc);
  report.auc_mean = ms.mean;
  report.auc_std = ms.std;
  const auto full = best_threshold(suspect, clean);
  report.best_threshold = full.threshold;
  report.threshold_balanced_accuracy = full.balanced_accuracy;
  return report;
}

MeanStd group_accuracy(std::span<const double> values, int iterations, std::uint64_t seed) {
  if (values.empty()) throw Error(Errc::EmptyInput, "group has no movies");
  if (iterations < 1) throw Error(Errc::InvalidParam, "iterations must be >= 1");
  std::vector<double> means;
  means.reserve(static_cast<std::size_t>(iterations));
  for (int it = 0; it < iterations; ++it) {
    auto rng = iteration_engine(seed, it);
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) sum += values[uniform_index(rng, values.size())];
    means.push_back(sum / static_cast<double>(values.size()));
  }
  return mean_std(means);
}

MeanStd group_accuracy(std::span<const MovieScore> scores, ScoreView view, int iterations,
                       std::uint64_t seed) {
  std::vector<double> values;
  values.reserve(scores.size());
  for (const auto& s : scores) values.push_back(s.accuracy(view));
  return group_accuracy(values, iterations, seed);
}

std::string_view to_string(Covariate c) {
  return c == Covariate::box_office ? "box_office" : "imdb_rating";
}

Covariate parse_covariate(std::string_view s) {
  if (s == "box_office") return Covariate::box_office;
  if (s == "imdb_rating") return Covariate::imdb_rating;
  throw Error(Errc::InvalidParam, "unknown covariate '" + std::string(s) + "'");
}

std::vector<double> default_bin_edges(Covariate c) {
  if (c == Covariate::box_office) return {0.0, 1e8, 3e8, 5e8, 1e9, 1e11};
  return {1.0, 6.0, 7.0, 8.0, 10.0};
}

std::optional<double> covariate_value(const Movie& movie, Covariate c) {
  if (c == Covariate::box_office) {
    if (movie.box_office_usd) return static_cast<double>(*movie.box_office_usd);
    return std::nullopt;
  }
  return movie.imdb_rating;
}

CovariateBinReport bin_by_covariate(std::span<const CovariateSample> samples, Covariate covariate,
                                    std::span<const double> bin_edges) {
  if (bin_edges.size() < 2) throw Error(Errc::InvalidParam, "need at least two bin edges");
  if (!std::is_sorted(bin_edges.begin(), bin_edges.end()) ||
      std::adjacent_find(bin_edges.begin(), bin_edges.end()) != bin_edges.end()) {
    throw Error(Errc::InvalidParam, "bin edges must be strictly increasing");
  }
  const std::size_t bins = bin_edges.size() - 1;
  CovariateBinReport report;
  report.covariate = covariate;
  report.bin_edges.assign(bin_edges.begin(), bin_edges.end());
  report.per_bin_counts.assign(bins, 0);
  std::vector<double> sums(bins, 0.0);

  std::size_t with_value = 0;
  for (const auto& s : samples) {
    if (!s.value) {
      ++report.missing;
      continue;
    }
    const double v = *s.value;
    if (v < bin_edges.front() || v > bin_edges.back()) {
      throw Error(Errc::InvalidParam, "covariate value " + std::to_string(v) + " outside bin edges");
    }
    ++with_value;
    auto upper = std::upper_bound(bin_edges.begin(), bin_edges.end(), v);
    std::size_t bin = static_cast<std::size_t>(upper - bin_edges.begin()) - 1;
    if (bin >= bins) bin = bins - 1;  // v equals the last edge
    ++report.per_bin_counts[bin];
    sums[bin] += s.accuracy;
  }
  if (with_value == 0) throw Error(Errc::NoCovariateData, std::string(to_string(covariate)));

  for (std::size_t b = 0; b < bins; ++b) {
    if (report.per_bin_counts[b] == 0) {
      report.per_bin_accuracy.emplace_back(std::nullopt);
    } else {
      report.per_bin_accuracy.emplace_back(sums[b] / static_cast<double>(report.per_bin_counts[b]));
    }
  }
  return report;
}

}  // namespace frameprobe

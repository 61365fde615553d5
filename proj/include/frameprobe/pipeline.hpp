#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "frameprobe/corpus.hpp"
#include "frameprobe/detectors.hpp"
#include "frameprobe/gateway.hpp"
#include "frameprobe/prompts.hpp"
#include "frameprobe/scores.hpp"
#include "frameprobe/stats.hpp"

namespace frameprobe {

namespace fs = std::filesystem;

struct RunConfig {
  fs::path manifest_path;
  fs::path backend_config_path;
  std::string backend_name;
  std::vector<Detector> detectors{Detector::captions, Detector::floor_disco, Detector::disco};
  KindSet kinds = kAllKinds;
  int frames_per_prompt = 1;
  Placement placement;
  RenyiConfig renyi;
  std::optional<ResizeTarget> resolution;
  std::string prompt_variant = "default";
  std::optional<fs::path> prompt_registry_path;
  std::uint64_t seed = 0;
  fs::path out_dir;
  /// Defaults to `<out_dir>/cache`.
  std::optional<fs::path> cache_dir;
  int workers = 4;
  int iterations = kDefaultBootstrapIterations;
  double fuzzy_threshold = kDefaultFuzzyThreshold;
  FloorDenominator floor_denominator = FloorDenominator::all_frames;
  int max_output_tokens = 64;

  bool wants(Detector d) const;
  /// Score views implied by the kind filter; weighted first.
  std::vector<ScoreView> views() const;
  /// Throws InvalidParam on out-of-range values.
  void validate() const;

  /// Snapshot written to config.json. Leaves out the output and cache paths
  /// so identical runs in different directories match byte for byte.
  std::string to_json() const;
  static RunConfig from_json(std::string_view text);
};

std::vector<Detector> parse_detector_list(std::string_view csv);
KindSet parse_kind_list(std::string_view csv);

/// One backend query as written to predictions.jsonl.
struct LogRecord {
  std::string pass;  // image, caption, mcqa or renyi
  std::string movie;
  Group group = Group::suspect;
  FrameKind kind = FrameKind::main;
  std::vector<std::string> frame_ids;
  std::string raw_text;
  std::string extracted;
  std::optional<Verdict> verdict;
  double similarity = 0.0;
  std::vector<std::string> options;
  std::optional<std::size_t> truth_index;
  std::optional<std::size_t> chosen;
  bool correct = false;
  std::int64_t latency_ms = 0;
  std::vector<double> renyi_scores;

  std::string to_json_line() const;
  static LogRecord parse(std::string_view line);
};

struct ScoredMovie {
  std::string title;
  Group group = Group::suspect;
  std::map<Detector, MovieScore> scores;
};

/// Rebuilds per-movie scores from log records alone. Movies keep their order
/// of first appearance.
std::vector<ScoredMovie> score_records(const std::vector<LogRecord>& records,
                                       const RunConfig& config);

/// One report per requested detector and view, in row order. Rényi reports
/// carry the k with the highest AUC mean. Empty when either group has no movies.
std::vector<DetectionReport> detection_reports(const std::vector<ScoredMovie>& movies,
                                               const RunConfig& config);

struct RunResult {
  std::vector<LogRecord> records;
  std::vector<ScoredMovie> movies;
  std::vector<DetectionReport> reports;
  std::size_t backend_calls = 0;
  std::size_t cache_hits = 0;
};

/// Everything `cmd_run` does except file output. All checks that can fail
/// without a query run before the first query.
RunResult run_experiment(const RunConfig& config, std::shared_ptr<const CorpusManifest> corpus,
                         std::shared_ptr<Backend> backend,
                         std::shared_ptr<ResponseCache> cache = nullptr,
                         const PromptRegistry& prompts = PromptRegistry::builtin());

/// Full pipeline: loads inputs named in `config`, runs, writes the run directory.
RunResult cmd_run(const RunConfig& config);

struct ReportFiles {
  std::vector<fs::path> written;
};

/// Recomputes tables from one or more run directories into `out_dir`.
ReportFiles cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir);

struct CaptionResult {
  std::size_t generated = 0;
  std::size_t nonconforming = 0;
  ValidationReport validation;
};

/// Fills missing captions and writes `out_manifest`; the input is never modified.
CaptionResult cmd_caption(const fs::path& manifest_path, const fs::path& backend_config_path,
                          std::string_view backend_name, const fs::path& out_manifest,
                          std::optional<fs::path> cache_dir = std::nullopt);

struct TimingRow {
  Detector detector = Detector::disco;
  std::int64_t total_ms = 0;
  std::size_t queries = 0;
  std::size_t movies = 0;
  double per_movie_ms = 0.0;
};

/// Per-detector latency totals from a run directory's prediction log.
std::vector<TimingRow> cmd_timing(const fs::path& run_dir);
std::string format_timing(const std::vector<TimingRow>& rows);

std::vector<LogRecord> read_prediction_log(const fs::path& path);

}  // namespace frameprobe

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace frameprobe {

enum class Group { suspect, clean, excluded };
enum class FrameKind { main, neutral };
enum class CaptionProvenance { supplied, generated };

std::string_view to_string(Group g);
std::string_view to_string(FrameKind k);
std::string_view to_string(CaptionProvenance p);
Group parse_group(std::string_view s);
FrameKind parse_frame_kind(std::string_view s);
CaptionProvenance parse_caption_provenance(std::string_view s);

using Date = std::chrono::year_month_day;

/// Accepts `YYYY`, `YYYY-MM` or `YYYY-MM-DD`; missing components default to 1.
Date parse_date(std::string_view iso);
std::string format_date(Date d);

struct Frame {
  std::string frame_id;
  std::filesystem::path image_path;  // relative to the manifest directory
  FrameKind kind = FrameKind::main;
  std::string caption;
  CaptionProvenance caption_provenance = CaptionProvenance::supplied;
  int width_px = 0;
  int height_px = 0;

  bool operator==(const Frame&) const = default;
};

struct Movie {
  std::string title;
  std::vector<std::string> aliases;
  std::optional<Date> release_date;
  Group group = Group::excluded;
  std::vector<std::string> genre_tags;
  std::optional<std::int64_t> box_office_usd;
  std::optional<double> imdb_rating;
  std::vector<Frame> frames;

  bool operator==(const Movie&) const = default;

  std::size_t count(FrameKind kind) const;
};

struct CorpusManifest {
  int schema_version = 1;
  std::vector<Movie> movies;
  std::string source_note;
  /// Directory that relative image paths resolve against. Not serialized.
  std::filesystem::path base_dir;

  bool operator==(const CorpusManifest& o) const {
    return schema_version == o.schema_version && movies == o.movies &&
           source_note == o.source_note;
  }

  std::filesystem::path resolve(const Frame& f) const { return base_dir / f.image_path; }
  const Movie* find(std::string_view title) const;
};

struct LoadOptions {
  /// Strict mode requires every image to exist and decode.
  bool strict = false;
};

CorpusManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                              const LoadOptions& opts = {});
CorpusManifest load_manifest(const std::filesystem::path& path, const LoadOptions& opts = {});
std::string serialize_manifest(const CorpusManifest& manifest);
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

/// Boundary dates of the temporal membership split. Dates are inclusive.
struct PartitionPolicy {
  Date suspect_last{std::chrono::year{2022}, std::chrono::December, std::chrono::day{31}};
  Date excluded_first{std::chrono::year{2023}, std::chrono::January, std::chrono::day{1}};
  Date excluded_last{std::chrono::year{2023}, std::chrono::September, std::chrono::day{30}};
  /// Anything on or after this date is clean.
  Date clean_first{std::chrono::year{2023}, std::chrono::October, std::chrono::day{1}};
};

Group classify(Date release, const PartitionPolicy& policy = {});

struct Partition {
  std::vector<const Movie*> suspect;
  std::vector<const Movie*> clean;
  std::vector<const Movie*> excluded;
};

/// Pointers borrow from `manifest`, which must outlive the result.
Partition partition(const CorpusManifest& manifest, const PartitionPolicy& policy = {});

struct ValidationIssue {
  enum class Type {
    group_inconsistent,
    missing_caption,
    missing_covariate,
    missing_date,
    missing_asset,
    nonconforming_caption,
    unexpected_frame_counts,
  };
  Type type;
  std::string movie;
  std::string frame_id;  // empty for movie-level issues
  std::string detail;
};

std::string_view to_string(ValidationIssue::Type t);

struct ValidationReport {
  std::map<std::string, std::map<FrameKind, std::size_t>> frame_counts;
  std::vector<ValidationIssue> issues;

  bool ok() const { return issues.empty(); }
};

struct ValidateOptions {
  bool strict = false;
  PartitionPolicy policy;
  /// Expected per-movie frame counts; zero disables the check.
  std::size_t expected_main = 0;
  std::size_t expected_neutral = 0;
  /// Flag captions that do not start with the generation prefix.
  bool check_caption_prefix = false;
};

ValidationReport validate(const CorpusManifest& manifest, const ValidateOptions& opts = {});

}  // namespace frameprobe

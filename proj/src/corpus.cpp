#include "frameprobe/corpus.hpp"

#include <charconv>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "frameprobe/error.hpp"
#include "frameprobe/image.hpp"
#include "frameprobe/matcher.hpp"

namespace frameprobe {

using nlohmann::json;

std::string_view to_string(Group g) {
  switch (g) {
    case Group::suspect: return "suspect";
    case Group::clean: return "clean";
    case Group::excluded: return "excluded";
  }
  return "excluded";
}

std::string_view to_string(FrameKind k) { return k == FrameKind::main ? "main" : "neutral"; }

std::string_view to_string(CaptionProvenance p) {
  return p == CaptionProvenance::supplied ? "supplied" : "generated";
}

Group parse_group(std::string_view s) {
  if (s == "suspect") return Group::suspect;
  if (s == "clean") return Group::clean;
  if (s == "excluded") return Group::excluded;
  throw Error(Errc::ParseError, "unknown group '" + std::string(s) + "'");
}

FrameKind parse_frame_kind(std::string_view s) {
  if (s == "main") return FrameKind::main;
  if (s == "neutral") return FrameKind::neutral;
  throw Error(Errc::ParseError, "unknown frame kind '" + std::string(s) + "'");
}

CaptionProvenance parse_caption_provenance(std::string_view s) {
  if (s == "supplied") return CaptionProvenance::supplied;
  if (s == "generated") return CaptionProvenance::generated;
  throw Error(Errc::ParseError, "unknown caption provenance '" + std::string(s) + "'");
}

Date parse_date(std::string_view iso) {
  int parts[3] = {0, 1, 1};
  std::size_t n = 0;
  const char* p = iso.data();
  const char* end = iso.data() + iso.size();
  while (p < end && n < 3) {
    auto [next, ec] = std::from_chars(p, end, parts[n]);
    if (ec != std::errc{} || next == p) break;
    ++n;
    p = next;
    if (p < end && *p == '-') ++p;
    else break;
  }
  if (n == 0 || p != end) throw Error(Errc::ParseError, "bad date '" + std::string(iso) + "'");
  Date d{std::chrono::year{parts[0]}, std::chrono::month{static_cast<unsigned>(parts[1])},
         std::chrono::day{static_cast<unsigned>(parts[2])}};
  if (!d.ok()) throw Error(Errc::ParseError, "invalid calendar date '" + std::string(iso) + "'");
  return d;
}

std::string format_date(Date d) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

std::size_t Movie::count(FrameKind kind) const {
  std::size_t n = 0;
  for (const auto& f : frames) n += f.kind == kind ? 1 : 0;
  return n;
}

const Movie* CorpusManifest::find(std::string_view title) const {
  for (const auto& m : movies) {
    if (m.title == title) return &m;
  }
  return nullptr;
}

Group classify(Date release, const PartitionPolicy& policy) {
  if (release <= policy.suspect_last) return Group::suspect;
  if (release >= policy.excluded_first && release <= policy.excluded_last) return Group::excluded;
  if (release >= policy.clean_first) return Group::clean;
  // Gaps between configured windows are not assigned to either side.
  return Group::excluded;
}

Partition partition(const CorpusManifest& manifest, const PartitionPolicy& policy) {
  Partition out;
  for (const auto& m : manifest.movies) {
    if (!m.release_date) throw Error(Errc::MissingDate, "movie '" + m.title + "' has no release date");
    switch (classify(*m.release_date, policy)) {
      case Group::suspect: out.suspect.push_back(&m); break;
      case Group::clean: out.clean.push_back(&m); break;
      case Group::excluded: out.excluded.push_back(&m); break;
    }
  }
  return out;
}

namespace {

template <typename T>
T required(const json& j, const char* key, std::string_view where) {
  if (!j.contains(key)) {
    throw Error(Errc::ParseError, std::string(where) + ": missing field '" + key + "'");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string(where) + "." + key + ": " + e.what());
  }
}

template <typename T>
T optional_field(const json& j, const char* key, T fallback, std::string_view where) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return required<T>(j, key, where);
}

Frame frame_from_json(const json& j, std::string_view where) {
  Frame f;
  f.frame_id = required<std::string>(j, "frame_id", where);
  const std::string here = std::string(where) + "/" + f.frame_id;
  f.image_path = required<std::string>(j, "image_path", here);
  f.kind = parse_frame_kind(required<std::string>(j, "kind", here));
  f.caption = optional_field<std::string>(j, "caption", "", here);
  f.caption_provenance =
      parse_caption_provenance(optional_field<std::string>(j, "caption_provenance", "supplied", here));
  f.width_px = optional_field<int>(j, "width_px", 0, here);
  f.height_px = optional_field<int>(j, "height_px", 0, here);
  return f;
}

Movie movie_from_json(const json& j, std::size_t index) {
  Movie m;
  m.title = required<std::string>(j, "title", "movies[" + std::to_string(index) + "]");
  const std::string where = "movie '" + m.title + "'";
  m.aliases = optional_field<std::vector<std::string>>(j, "aliases", {}, where);
  if (j.contains("release_date") && !j["release_date"].is_null()) {
    m.release_date = parse_date(required<std::string>(j, "release_date", where));
  }
  m.group = parse_group(required<std::string>(j, "group", where));
  m.genre_tags = optional_field<std::vector<std::string>>(j, "genre_tags", {}, where);
  if (j.contains("box_office_usd") && !j["box_office_usd"].is_null()) {
    const auto v = required<std::int64_t>(j, "box_office_usd", where);
    if (v < 0) throw Error(Errc::ParseError, where + ": box_office_usd must be non-negative");
    m.box_office_usd = v;
  }
  if (j.contains("imdb_rating") && !j["imdb_rating"].is_null()) {
    const auto v = required<double>(j, "imdb_rating", where);
    if (!(v >= 1.0 && v <= 10.0)) throw Error(Errc::ParseError, where + ": imdb_rating outside [1, 10]");
    m.imdb_rating = v;
  }
  if (j.contains("frames")) {
    if (!j["frames"].is_array()) throw Error(Errc::ParseError, where + ": frames must be an array");
    for (const auto& fj : j["frames"]) m.frames.push_back(frame_from_json(fj, where));
  }
  return m;
}

json to_json(const Frame& f) {
  json j = {{"frame_id", f.frame_id},
            {"image_path", f.image_path.generic_string()},
            {"kind", to_string(f.kind)},
            {"caption", f.caption},
            {"caption_provenance", to_string(f.caption_provenance)}};
  if (f.width_px > 0) j["width_px"] = f.width_px;
  if (f.height_px > 0) j["height_px"] = f.height_px;
  return j;
}

json to_json(const Movie& m) {
  json j;
  j["title"] = m.title;
  j["aliases"] = m.aliases;
  j["release_date"] = m.release_date ? json(format_date(*m.release_date)) : json(nullptr);
  j["group"] = to_string(m.group);
  j["genre_tags"] = m.genre_tags;
  j["box_office_usd"] = m.box_office_usd ? json(*m.box_office_usd) : json(nullptr);
  j["imdb_rating"] = m.imdb_rating ? json(*m.imdb_rating) : json(nullptr);
  j["frames"] = json::array();
  for (const auto& f : m.frames) j["frames"].push_back(to_json(f));
  return j;
}

}  // namespace

CorpusManifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                              const LoadOptions& opts) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::ParseError, e.what());
  }
  if (!root.is_object()) throw Error(Errc::ParseError, "manifest root must be an object");

  CorpusManifest manifest;
  manifest.base_dir = base_dir;
  manifest.schema_version = required<int>(root, "schema_version", "manifest");
  manifest.source_note = optional_field<std::string>(root, "source_note", "", "manifest");
  const json& movies = root.contains("movies") ? root["movies"] : json::array();
  if (!movies.is_array()) throw Error(Errc::ParseError, "movies must be an array");

  std::set<std::string> titles;
  std::set<std::string> frame_ids;
  for (std::size_t i = 0; i < movies.size(); ++i) {
    Movie m = movie_from_json(movies[i], i);
    if (!titles.insert(canonicalize(m.title)).second) {
      throw Error(Errc::DuplicateId, "title '" + m.title + "' repeats after canonicalization");
    }
    for (auto& f : m.frames) {
      if (!frame_ids.insert(f.frame_id).second) {
        throw Error(Errc::DuplicateId, "frame_id '" + f.frame_id + "' repeats");
      }
      if (opts.strict) {
        const auto path = manifest.resolve(f);
        if (!std::filesystem::exists(path)) {
          throw Error(Errc::MissingAsset, "image " + path.string() + " for frame '" + f.frame_id + "'");
        }
        const auto payload = load_image(path);
        f.width_px = payload.width;
        f.height_px = payload.height;
      }
    }
    manifest.movies.push_back(std::move(m));
  }
  return manifest;
}

CorpusManifest load_manifest(const std::filesystem::path& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ParseError, "cannot read manifest " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path(), opts);
}

std::string serialize_manifest(const CorpusManifest& manifest) {
  json root;
  root["schema_version"] = manifest.schema_version;
  root["source_note"] = manifest.source_note;
  root["movies"] = json::array();
  for (const auto& m : manifest.movies) root["movies"].push_back(to_json(m));
  return root.dump(2) + "\n";
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::ConfigError, "cannot write manifest " + path.string());
  out << serialize_manifest(manifest);
}

std::string_view to_string(ValidationIssue::Type t) {
  using T = ValidationIssue::Type;
  switch (t) {
    case T::group_inconsistent: return "group_inconsistent";
    case T::missing_caption: return "missing_caption";
    case T::missing_covariate: return "missing_covariate";
    case T::missing_date: return "missing_date";
    case T::missing_asset: return "missing_asset";
    case T::nonconforming_caption: return "nonconforming_caption";
    case T::unexpected_frame_counts: return "unexpected_frame_counts";
  }
  return "unknown";
}

ValidationReport validate(const CorpusManifest& manifest, const ValidateOptions& opts) {
  using T = ValidationIssue::Type;
  ValidationReport report;
  for (const auto& m : manifest.movies) {
    auto& counts = report.frame_counts[m.title];
    counts[FrameKind::main] = m.count(FrameKind::main);
    counts[FrameKind::neutral] = m.count(FrameKind::neutral);

    if (!m.release_date) {
      report.issues.push_back({T::missing_date, m.title, "", "no release_date"});
    } else if (const Group expected = classify(*m.release_date, opts.policy); expected != m.group) {
      report.issues.push_back({T::group_inconsistent, m.title, "",
                               "labeled " + std::string(to_string(m.group)) + " but release " +
                                   format_date(*m.release_date) + " implies " +
                                   std::string(to_string(expected))});
    }
    if (!m.box_office_usd) report.issues.push_back({T::missing_covariate, m.title, "", "box_office_usd"});
    if (!m.imdb_rating) report.issues.push_back({T::missing_covariate, m.title, "", "imdb_rating"});

    if ((opts.expected_main && counts[FrameKind::main] != opts.expected_main) ||
        (opts.expected_neutral && counts[FrameKind::neutral] != opts.expected_neutral)) {
      report.issues.push_back({T::unexpected_frame_counts, m.title, "",
                               "main=" + std::to_string(counts[FrameKind::main]) +
                                   " neutral=" + std::to_string(counts[FrameKind::neutral])});
    }

    for (const auto& f : m.frames) {
      if (f.caption.empty()) {
        report.issues.push_back({T::missing_caption, m.title, f.frame_id, ""});
      } else if (opts.check_caption_prefix && f.caption.rfind("The image depicts", 0) != 0) {
        report.issues.push_back({T::nonconforming_caption, m.title, f.frame_id,
                                 "caption does not start with 'The image depicts'"});
      }
      if (opts.strict) {
        const auto path = manifest.resolve(f);
        try {
          (void)load_image(path);
        } catch (const Error& e) {
          report.issues.push_back({T::missing_asset, m.title, f.frame_id, e.what()});
        }
      }
    }
  }
  return report;
}

}  // namespace frameprobe

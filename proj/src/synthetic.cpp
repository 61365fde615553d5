#include "frameprobe/synthetic.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "frameprobe/error.hpp"
#include "frameprobe/image.hpp"
#include "frameprobe/stats.hpp"

namespace frameprobe {

namespace {

constexpr std::array<std::string_view, 20> kFirst{
    "Silent", "Crimson", "Hollow", "Golden", "Broken", "Distant", "Velvet", "Frozen", "Burning", "Restless",
    "Paper",  "Iron",    "Hidden", "Lonely", "Wild",   "Glass",   "Midnight", "Scarlet", "Quiet", "Northern"};
constexpr std::array<std::string_view, 20> kSecond{
    "Harbor",  "Orchard", "Lantern", "Meridian", "Canyon", "Promise", "Circuit", "Tide",  "Garden", "Signal",
    "Compass", "Valley",  "Empire",  "Voyage",   "Mirror", "Thunder", "Archive", "Ember", "Bridge", "Frontier"};

constexpr std::array<std::string_view, 6> kSubjects{
    "a narrow street under rain", "a table set for dinner", "a field at sunrise",
    "a train platform at night",  "a cluttered workshop",   "a shoreline with rocks"};

std::string pad(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d", width, v);
  return buf;
}

}  // namespace

CorpusManifest write_synthetic_corpus(const SyntheticSpec& spec, const std::filesystem::path& dir) {
  const int total = spec.suspect + spec.clean + spec.excluded;
  if (total > static_cast<int>(kFirst.size() * kSecond.size())) {
    throw Error(Errc::InvalidParam, "synthetic corpus supports at most 400 movies");
  }
  if (spec.genres.empty()) throw Error(Errc::InvalidParam, "synthetic corpus needs at least one genre");
  if (spec.suspect < 0 || spec.clean < 0 || spec.excluded < 0 || spec.main_frames < 0 ||
      spec.neutral_frames < 0 || spec.width < 1 || spec.height < 1) {
    throw Error(Errc::InvalidParam, "synthetic corpus sizes must be non-negative");
  }

  std::vector<std::string> titles;
  for (auto a : kFirst) {
    for (auto b : kSecond) titles.push_back(std::string(a) + " " + std::string(b));
  }
  std::mt19937_64 rng(spec.seed ^ 0x5eedf11e5ull);
  for (std::size_t i = 0; i + 1 < titles.size(); ++i) {
    std::swap(titles[i], titles[i + uniform_index(rng, titles.size() - i)]);
  }
  auto unit = [&rng] { return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0); };

  CorpusManifest manifest;
  manifest.source_note = "synthetic corpus, seed " + std::to_string(spec.seed);
  manifest.base_dir = dir;
  std::filesystem::create_directories(dir);

  for (int i = 0; i < total; ++i) {
    Movie m;
    m.title = titles[static_cast<std::size_t>(i)];
    const std::string mid = "m" + pad(i, 3);
    if (i < spec.suspect) {
      m.group = Group::suspect;
      m.release_date = Date{std::chrono::year{1995 + i % 28}, std::chrono::month{static_cast<unsigned>(i % 12 + 1)},
                            std::chrono::day{15}};
    } else if (i < spec.suspect + spec.clean) {
      m.group = Group::clean;
      m.release_date = Date{std::chrono::year{2024}, std::chrono::month{static_cast<unsigned>(i % 12 + 1)},
                            std::chrono::day{10}};
    } else {
      m.group = Group::excluded;
      m.release_date = Date{std::chrono::year{2023}, std::chrono::June, std::chrono::day{1}};
    }
    m.genre_tags = {spec.genres[static_cast<std::size_t>(i) % spec.genres.size()]};
    if (spec.covariates) {
      m.box_office_usd = static_cast<std::int64_t>(std::pow(10.0, 7.0 + 2.3 * unit()));
      m.imdb_rating = std::round((5.0 + 4.0 * unit()) * 10.0) / 10.0;
    }

    std::filesystem::create_directories(dir / "frames" / mid);
    auto add = [&](FrameKind kind, int j) {
      Frame f;
      f.frame_id = mid + "-" + std::string(to_string(kind)) + "-" + pad(j, 3);
      f.kind = kind;
      f.image_path = std::filesystem::path("frames") / mid / (f.frame_id + ".png");
      if (spec.captions) {
        f.caption = std::string(kCaptionPrefix) + " " +
                    std::string(kSubjects[static_cast<std::size_t>(j) % kSubjects.size()]) + ", shot " +
                    f.frame_id + ".";
      }
      const std::string png = synthetic_png(std::to_string(spec.seed) + "|" + f.frame_id, spec.width, spec.height);
      std::ofstream(dir / f.image_path, std::ios::binary) << png;
      f.width_px = spec.width;
      f.height_px = spec.height;
      m.frames.push_back(std::move(f));
    };
    for (int j = 0; j < spec.main_frames; ++j) add(FrameKind::main, j);
    for (int j = 0; j < spec.neutral_frames; ++j) add(FrameKind::neutral, j);
    manifest.movies.push_back(std::move(m));
  }
  save_manifest(manifest, dir / "manifest.json");
  return manifest;
}

MockProfile synthetic_profile(const std::vector<std::string>& genres, const MockRecall& r,
                              std::uint64_t seed) {
  MockProfile p;
  p.seed = seed;
  for (QueryMode mode : {QueryMode::freeform_image, QueryMode::mcqa_image}) {
    const bool mcqa = mode == QueryMode::mcqa_image;
    p.recall[{Group::suspect, FrameKind::main, mode}] = mcqa ? r.suspect_mcqa : r.suspect_main;
    p.recall[{Group::suspect, FrameKind::neutral, mode}] = mcqa ? r.suspect_mcqa : r.suspect_neutral;
    for (Group g : {Group::clean, Group::excluded}) {
      p.recall[{g, FrameKind::main, mode}] = mcqa ? r.clean_mcqa : r.clean_main;
      p.recall[{g, FrameKind::neutral, mode}] = mcqa ? r.clean_mcqa : r.clean_neutral;
    }
  }
  p.caption_recall = {{Group::suspect, r.suspect_caption},
                      {Group::clean, r.clean_caption},
                      {Group::excluded, r.clean_caption}};
  p.logit_sharpness = {{Group::suspect, r.suspect_sharpness},
                       {Group::clean, r.clean_sharpness},
                       {Group::excluded, r.clean_sharpness}};
  for (const auto& g : genres) {
    auto& pool = p.confusion_pool[g];
    for (int i = 1; i <= 12; ++i) pool.push_back("Decoy " + g + " Picture " + pad(i, 2));
  }
  p.validate();
  return p;
}

BackendDescriptor synthetic_descriptor(std::string name, int max_images) {
  BackendDescriptor d;
  d.name = std::move(name);
  d.kind = BackendKind::mock;
  d.capabilities = {Capability::freeform, Capability::logits, Capability::multi_image};
  d.max_images_per_prompt = max_images;
  d.max_inflight = 8;
  d.model = "mock";
  d.validate();
  return d;
}

BackendConfig synthetic_backend_config(const std::string& name, const MockProfile& profile, int max_images) {
  BackendConfig c;
  c.backends.push_back(synthetic_descriptor(name, max_images));
  c.mock_profiles[name] = profile;
  return c;
}

}  // namespace frameprobe

#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "frameprobe/error.hpp"
#include "frameprobe/pipeline.hpp"
#include "frameprobe/synthetic.hpp"
#include "test_util.hpp"

using namespace frameprobe;
using testutil::TempDir;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::ConfigError;
}

/// Small synthetic corpus plus a backend file with a multi-image and a
/// single-image mock.
struct Fixture {
  TempDir dir{"pipe"};
  fs::path manifest;
  fs::path backends;

  explicit Fixture(int movies_per_group = 4, int main_frames = 5, int neutral_frames = 3, bool captions = true) {
    SyntheticSpec spec;
    spec.suspect = movies_per_group;
    spec.clean = movies_per_group;
    spec.main_frames = main_frames;
    spec.neutral_frames = neutral_frames;
    spec.captions = captions;
    spec.seed = 5;
    write_synthetic_corpus(spec, dir / "corpus");
    manifest = dir / "corpus" / "manifest.json";

    auto config = synthetic_backend_config("mock-vlm", synthetic_profile(spec.genres, MockRecall{}, 5), 4);
    auto single = synthetic_descriptor("mock-single", 1);
    single.capabilities = {Capability::freeform};
    config.backends.push_back(single);
    config.mock_profiles["mock-single"] = config.mock_profiles.at("mock-vlm");
    backends = dir / "backends.json";
    testutil::write_file(backends, serialize_backend_config(config));
  }

  RunConfig config(const std::string& out) const {
    RunConfig c;
    c.manifest_path = manifest;
    c.backend_config_path = backends;
    c.backend_name = "mock-vlm";
    c.seed = 7;
    c.out_dir = dir / out;
    c.workers = 3;
    return c;
  }
};

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

std::size_t count_files(const fs::path& dir) {
  std::size_t n = 0;
  if (!fs::exists(dir)) return 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) n += e.is_regular_file();
  return n;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("run directory is complete and reproducible") {
    Fixture fx;
    const auto a = cmd_run(fx.config("a"));
    const auto b = cmd_run(fx.config("b"));
    for (const char* name : {"config.json", "prompts.json", "movies.tsv", "predictions.jsonl", "scores.tsv",
                             "reports.tsv", "summary.md"}) {
      INFO(name);
      CHECK(fs::exists(fx.dir / "a" / name));
      CHECK(testutil::read_file(fx.dir / "a" / name) == testutil::read_file(fx.dir / "b" / name));
    }
    // 8 movies x 8 frames, image and caption passes.
    CHECK(a.backend_calls == 128);
    CHECK(a.records.size() == 128);
    CHECK(count_lines(testutil::read_file(fx.dir / "a" / "predictions.jsonl")) == 128);
    CHECK(a.reports.size() == 9);
    CHECK(a.reports.front().detector == "captions");
    CHECK(a.reports.front().view == "weighted");
  }

  TEST_CASE("rerun reuses the cache") {
    Fixture fx;
    auto config = fx.config("r");
    const auto first = cmd_run(config);
    const auto log = testutil::read_file(fx.dir / "r" / "predictions.jsonl");
    const auto second = cmd_run(config);
    CHECK(first.backend_calls == 128);
    CHECK(second.backend_calls == 0);
    CHECK(second.cache_hits == 128);
    CHECK(testutil::read_file(fx.dir / "r" / "predictions.jsonl") == log);

    // Dropping part of the cache re-issues only the missing queries.
    std::size_t removed = 0;
    for (const auto& e : fs::recursive_directory_iterator(fx.dir / "r" / "cache")) {
      if (e.is_regular_file() && removed < 10) {
        fs::remove(e.path());
        ++removed;
      }
    }
    const auto third = cmd_run(config);
    CHECK(third.backend_calls == removed);
    CHECK(testutil::read_file(fx.dir / "r" / "predictions.jsonl") == log);
  }

  TEST_CASE("suspect-only run scores movies without detection reports") {
    Fixture fx;
    auto corpus = load_manifest(fx.manifest);
    std::erase_if(corpus.movies, [](const Movie& m) { return m.group != Group::suspect; });
    for (auto& m : corpus.movies) {
      for (auto& f : m.frames) f.image_path = fs::absolute(corpus.resolve(f));
    }
    save_manifest(corpus, fx.dir / "suspect.json");
    auto config = fx.config("s");
    config.manifest_path = fx.dir / "suspect.json";
    config.detectors = {Detector::disco};
    const auto run = cmd_run(config);
    CHECK(run.movies.size() == 4);
    CHECK(run.reports.empty());
    CHECK(count_lines(testutil::read_file(fx.dir / "s" / "scores.tsv")) == 5);
    CHECK(testutil::read_file(fx.dir / "s" / "summary.md").find("No detection reports") != std::string::npos);
  }

  TEST_CASE("multi-frame run on a single-image backend fails before any query") {
    Fixture fx;
    auto config = fx.config("single");
    config.backend_name = "mock-single";
    config.frames_per_prompt = 4;
    CHECK(code_of([&] { cmd_run(config); }) == Errc::CapabilityUnsupported);
    CHECK_FALSE(fs::exists(fx.dir / "single"));
  }

  TEST_CASE("config validation") {
    Fixture fx;
    auto config = fx.config("bad");
    config.backend_name = "nobody";
    CHECK(code_of([&] { cmd_run(config); }) == Errc::ConfigError);
    config = fx.config("bad");
    config.prompt_variant = "missing-variant";
    CHECK(code_of([&] { cmd_run(config); }) == Errc::ConfigError);
    config = fx.config("bad");
    config.iterations = 0;
    CHECK(code_of([&] { config.validate(); }) == Errc::InvalidParam);
  }

  TEST_CASE("config snapshot round-trips") {
    RunConfig c;
    c.manifest_path = "m.json";
    c.backend_config_path = "b.json";
    c.backend_name = "mock";
    c.detectors = parse_detector_list("disco,renyi,mcqa");
    c.kinds = parse_kind_list("neutral");
    c.frames_per_prompt = 3;
    c.placement = Placement::fixed(2);
    c.renyi.alpha = 2.0;
    c.renyi.k_percent_grid = {10, 100};
    c.renyi.slice = PositionSlice::text_positions;
    c.resolution = PixelSize{563, 256};
    c.seed = 123456789012345ull;
    c.iterations = 7;
    c.floor_denominator = FloorDenominator::surviving;
    const auto back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
    CHECK(back.detectors == std::vector{Detector::mcqa, Detector::renyi, Detector::disco});
    CHECK(back.kinds == c.kinds);
    CHECK(back.seed == c.seed);
    CHECK(back.views() == std::vector<ScoreView>{ScoreView::weighted, ScoreView::neutral});
    CHECK(parse_kind_list("all") == kAllKinds);
    CHECK(code_of([] { parse_detector_list("disco,bogus"); }) == Errc::InvalidParam);
  }

  TEST_CASE("log records round-trip") {
    LogRecord r;
    r.pass = "mcqa";
    r.movie = "Tab\tTitle";
    r.group = Group::clean;
    r.kind = FrameKind::neutral;
    r.frame_ids = {"a", "b"};
    r.raw_text = "line\nbreak";
    r.options = {"w", "x", "y", "z"};
    r.truth_index = 2;
    r.chosen = 1;
    r.latency_ms = 350;
    r.renyi_scores = {-0.5, -1.25};
    const auto line = r.to_json_line();
    CHECK(line.find('\n') == std::string::npos);
    CHECK(LogRecord::parse(line).to_json_line() == line);
  }

  TEST_CASE("every reported number is recomputable from the log") {
    Fixture fx(8);
    auto config = fx.config("audit");
    config.detectors = {Detector::captions, Detector::mcqa, Detector::renyi, Detector::floor_disco, Detector::disco};
    const auto run = cmd_run(config);
    const auto records = read_prediction_log(fx.dir / "audit" / "predictions.jsonl");
    const auto movies = score_records(records, config);
    const auto reports = detection_reports(movies, config);
    REQUIRE(reports.size() == run.reports.size());
    for (std::size_t i = 0; i < reports.size(); ++i) {
      CHECK(reports[i].detector == run.reports[i].detector);
      CHECK(reports[i].per_iteration_auc == run.reports[i].per_iteration_auc);
      CHECK(reports[i].best_threshold == run.reports[i].best_threshold);
      CHECK(reports[i].k_selected == run.reports[i].k_selected);
    }
    const auto& renyi = *std::find_if(reports.begin(), reports.end(), [](const auto& r) { return r.detector == "renyi"; });
    CHECK(renyi.k_selected.has_value());
  }

  TEST_CASE("report tables") {
    Fixture fx;
    auto config = fx.config("two");
    config.detectors = {Detector::disco, Detector::captions};
    cmd_run(config);
    const auto files = cmd_report({fx.dir / "two"}, fx.dir / "report");
    CHECK(files.written.size() == 7);

    std::istringstream auc(testutil::read_file(fx.dir / "report" / "auc_table.tsv"));
    std::string line;
    std::getline(auc, line);
    CHECK(line == "view\tdetector\tmock-vlm_auc_mean\tmock-vlm_auc_std");
    std::vector<std::string> rows;
    while (std::getline(auc, line)) rows.push_back(line);
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].rfind("main\tcaptions\t", 0) == 0);
    CHECK(rows[1].rfind("main\tdisco\t", 0) == 0);

    const auto cov = testutil::read_file(fx.dir / "report" / "covariate_box_office.tsv");
    CHECK(cov.rfind("backend\tdetector\tgroup\tbin_edge\tbin_upper\taccuracy\tcount\tmissing\n", 0) == 0);
    CHECK(count_lines(cov) > 1);

    CHECK(code_of([&] { cmd_report({fx.dir / "nowhere"}, fx.dir / "r2"); }) == Errc::MissingArtifacts);
  }

  TEST_CASE("detector rows follow the fixed order") {
    Fixture fx(8);
    auto config = fx.config("all");
    config.detectors = {Detector::disco, Detector::floor_disco, Detector::renyi, Detector::mcqa, Detector::captions};
    config.kinds = {FrameKind::main};
    cmd_run(config);
    cmd_report({fx.dir / "all"}, fx.dir / "rep");
    const auto md = testutil::read_file(fx.dir / "rep" / "auc_table.md");
    const std::vector<std::string> order = {"Captions", "MCQA", "Renyi", "floor(DIS-CO)", "| main | DIS-CO"};
    std::size_t pos = 0;
    for (const auto& label : order) {
      const auto at = md.find(label, pos);
      INFO(label);
      REQUIRE(at != std::string::npos);
      pos = at;
    }
  }

  TEST_CASE("timing adds the two floor passes") {
    Fixture fx;
    cmd_run(fx.config("t"));
    const auto rows = cmd_timing(fx.dir / "t");
    REQUIRE(rows.size() == 3);
    std::map<Detector, TimingRow> by;
    for (const auto& r : rows) by[r.detector] = r;
    CHECK(by.at(Detector::floor_disco).total_ms == by.at(Detector::captions).total_ms + by.at(Detector::disco).total_ms);
    CHECK(by.at(Detector::disco).movies == 8);
    CHECK(by.at(Detector::disco).per_movie_ms == doctest::Approx(by.at(Detector::disco).total_ms / 8.0));
    CHECK_FALSE(format_timing(rows).empty());
    CHECK(code_of([&] { cmd_timing(fx.dir / "absent"); }) == Errc::MissingArtifacts);
  }

  TEST_CASE("caption filling") {
    Fixture fx(2, 2, 1, true);
    const auto cache = fx.dir / "capcache";

    // Nothing missing: no calls, output equals input.
    auto res = cmd_caption(fx.manifest, fx.backends, "mock-vlm", fx.dir / "corpus" / "same.json", cache);
    CHECK(res.generated == 0);
    CHECK(count_files(cache) == 0);
    CHECK(load_manifest(fx.dir / "corpus" / "same.json") == load_manifest(fx.manifest));

    // Three blanks: three generation calls, a complete manifest elsewhere.
    auto m = load_manifest(fx.manifest);
    m.movies[0].frames[0].caption.clear();
    m.movies[1].frames[2].caption.clear();
    m.movies[3].frames[1].caption.clear();
    save_manifest(m, fx.dir / "corpus" / "holes.json");
    fs::create_directories(fx.dir / "out");
    res = cmd_caption(fx.dir / "corpus" / "holes.json", fx.backends, "mock-vlm", fx.dir / "out" / "filled.json", cache);
    CHECK(res.generated == 3);
    CHECK(res.nonconforming == 0);
    CHECK(count_files(cache) == 3);
    CHECK(res.validation.ok());
    const auto filled = load_manifest(fx.dir / "out" / "filled.json", {.strict = true});
    CHECK(filled.movies[0].frames[0].caption_provenance == CaptionProvenance::generated);
    CHECK(filled.movies[0].frames[1].caption_provenance == CaptionProvenance::supplied);
    CHECK(load_manifest(fx.dir / "corpus" / "holes.json").movies[0].frames[0].caption.empty());

    CHECK(code_of([&] { cmd_caption(fx.manifest, fx.backends, "mock-vlm", fx.manifest); }) == Errc::InvalidParam);
  }

  TEST_CASE("nonconforming captions surface as validation issues") {
    Fixture fx(1, 1, 0, false);
    auto config = load_backend_config(fx.backends);
    config.mock_profiles.at("mock-vlm").conforming_captions = false;
    testutil::write_file(fx.backends, serialize_backend_config(config));
    const auto res = cmd_caption(fx.manifest, fx.backends, "mock-vlm", fx.dir / "corpus" / "nc.json");
    CHECK(res.generated == 2);
    CHECK(res.nonconforming == 2);
    CHECK(std::count_if(res.validation.issues.begin(), res.validation.issues.end(), [](const auto& i) {
            return i.type == ValidationIssue::Type::nonconforming_caption;
          }) == 2);
  }

  TEST_CASE("missing captions stop a caption run before querying") {
    Fixture fx(2, 2, 0, false);
    auto config = fx.config("nocap");
    CHECK(code_of([&] { cmd_run(config); }) == Errc::MissingCaption);
    config.detectors = {Detector::disco};
    CHECK(cmd_run(config).backend_calls == 8);
  }
}

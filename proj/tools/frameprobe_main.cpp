// frameprobe: command-line front end for corpus checks, detector runs and reports.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "frameprobe/error.hpp"
#include "frameprobe/pipeline.hpp"
#include "frameprobe/synthetic.hpp"

namespace fp = frameprobe;

namespace {

int do_validate(const std::string& manifest, bool strict, std::size_t expect_main,
                std::size_t expect_neutral) {
  fp::LoadOptions lo;
  lo.strict = strict;
  const auto corpus = fp::load_manifest(manifest, lo);
  fp::ValidateOptions vo;
  vo.strict = strict;
  vo.expected_main = expect_main;
  vo.expected_neutral = expect_neutral;
  vo.check_caption_prefix = true;
  const auto report = fp::validate(corpus, vo);
  std::cout << "movie\tmain\tneutral\n";
  for (const auto& [title, counts] : report.frame_counts) {
    auto get = [&](fp::FrameKind k) {
      auto it = counts.find(k);
      return it == counts.end() ? std::size_t{0} : it->second;
    };
    std::cout << title << "\t" << get(fp::FrameKind::main) << "\t" << get(fp::FrameKind::neutral) << "\n";
  }
  for (const auto& issue : report.issues) {
    std::cerr << "issue\t" << fp::to_string(issue.type) << "\t" << issue.movie << "\t" << issue.frame_id << "\t"
              << issue.detail << "\n";
  }
  return report.ok() ? 0 : 1;
}

int do_partition(const std::string& manifest) {
  const auto corpus = fp::load_manifest(manifest);
  const auto part = fp::partition(corpus);
  auto dump = [](std::string_view name, const std::vector<const fp::Movie*>& movies) {
    for (const auto* m : movies) std::cout << name << "\t" << m->title << "\n";
  };
  dump("suspect", part.suspect);
  dump("clean", part.clean);
  dump("excluded", part.excluded);
  std::cerr << part.suspect.size() << " suspect, " << part.clean.size() << " clean, " << part.excluded.size()
            << " excluded\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Detect copyrighted film frames in vision-language model training data"};
  app.require_subcommand(1);

  fp::RunConfig cfg;
  std::string detectors = "captions,floor_disco,disco";
  std::string kinds = "main,neutral";
  std::string placement = "random";
  std::string resolution;
  std::string floor_den = "all_frames";
  std::string renyi_slice = "all", renyi_dir = "max";
  std::string k_grid;
  std::string prompt_file, cache_dir;
  auto* run = app.add_subcommand("run", "Run detectors over the partitioned corpus");
  run->add_option("--manifest", cfg.manifest_path, "Corpus manifest")->required();
  run->add_option("--backend-config", cfg.backend_config_path, "Backend config file")->required();
  run->add_option("--backend", cfg.backend_name, "Backend name from the config")->required();
  run->add_option("--detectors", detectors, "Comma list: captions,mcqa,renyi,floor_disco,disco");
  run->add_option("--kinds", kinds, "Comma list: main,neutral");
  run->add_option("--frames-per-prompt", cfg.frames_per_prompt, "Frames sent per free-form query");
  run->add_option("--placement", placement, "MCQA truth placement: random or fixed:A..D");
  run->add_option("--resolution", resolution, "Resize target, WxH or a scale factor");
  run->add_option("--prompt-variant", cfg.prompt_variant, "Prompt variant id");
  run->add_option("--prompts", prompt_file, "Prompt registry file (default: built-in)");
  run->add_option("--seed", cfg.seed, "Seed for placement, distractors and bootstrap");
  run->add_option("--out", cfg.out_dir, "Run directory")->required();
  run->add_option("--cache", cache_dir, "Response cache directory (default: <out>/cache)");
  run->add_option("--workers", cfg.workers, "Worker threads over movies");
  run->add_option("--iterations", cfg.iterations, "Bootstrap iterations");
  run->add_option("--fuzzy-threshold", cfg.fuzzy_threshold, "Edit similarity accepted as a match");
  run->add_option("--floor-denominator", floor_den, "all_frames or surviving");
  run->add_option("--renyi-alpha", cfg.renyi.alpha, "Renyi order");
  run->add_option("--renyi-k", k_grid, "Comma list of K percentages");
  run->add_option("--renyi-slice", renyi_slice, "all, image or text positions");
  run->add_option("--renyi-direction", renyi_dir, "max or min aggregation");
  run->add_flag("--accept-partial", cfg.renyi.accept_partial_vectors, "Renormalize top-k logprob vectors");

  std::vector<std::string> report_runs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Build tables from one or more run directories");
  report->add_option("runs", report_runs, "Run directories")->required();
  report->add_option("--out", report_out, "Output directory")->required();

  std::string cap_manifest, cap_config, cap_backend, cap_out, cap_cache;
  auto* caption = app.add_subcommand("caption", "Generate missing captions into a new manifest");
  caption->add_option("--manifest", cap_manifest)->required();
  caption->add_option("--backend-config", cap_config)->required();
  caption->add_option("--backend", cap_backend)->required();
  caption->add_option("--out", cap_out, "New manifest path")->required();
  caption->add_option("--cache", cap_cache, "Response cache directory");

  std::string timing_dir, timing_out;
  auto* timing = app.add_subcommand("timing", "Per-detector latency totals of a run");
  timing->add_option("run", timing_dir)->required();
  timing->add_option("--out", timing_out, "Write the table here instead of stdout");

  std::string val_manifest;
  bool strict = false;
  std::size_t expect_main = 0, expect_neutral = 0;
  auto* val = app.add_subcommand("validate", "Check a manifest");
  val->add_option("--manifest", val_manifest)->required();
  val->add_flag("--strict", strict, "Require every image to exist and decode");
  val->add_option("--expect-main", expect_main);
  val->add_option("--expect-neutral", expect_neutral);

  std::string part_manifest;
  auto* part = app.add_subcommand("partition", "Show the suspect/clean/excluded split");
  part->add_option("--manifest", part_manifest)->required();

  fp::SyntheticSpec synth_spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write an offline synthetic corpus and mock backend config");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--suspect", synth_spec.suspect);
  synth->add_option("--clean", synth_spec.clean);
  synth->add_option("--excluded", synth_spec.excluded);
  synth->add_option("--main-frames", synth_spec.main_frames);
  synth->add_option("--neutral-frames", synth_spec.neutral_frames);
  synth->add_option("--seed", synth_spec.seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      cfg.detectors = fp::parse_detector_list(detectors);
      cfg.kinds = fp::parse_kind_list(kinds);
      cfg.placement = fp::parse_placement(placement);
      if (!resolution.empty() && resolution != "native") cfg.resolution = fp::parse_resize_target(resolution);
      if (!prompt_file.empty()) cfg.prompt_registry_path = prompt_file;
      if (!cache_dir.empty()) cfg.cache_dir = cache_dir;
      if (floor_den == "surviving") {
        cfg.floor_denominator = fp::FloorDenominator::surviving;
      } else if (floor_den != "all_frames") {
        throw fp::Error(fp::Errc::InvalidParam, "floor denominator must be all_frames or surviving");
      }
      cfg.renyi.slice = fp::parse_position_slice(renyi_slice);
      cfg.renyi.direction = fp::parse_aggregate(renyi_dir);
      if (!k_grid.empty()) {
        cfg.renyi.k_percent_grid.clear();
        std::size_t start = 0;
        while (start <= k_grid.size()) {
          const auto comma = k_grid.find(',', start);
          cfg.renyi.k_percent_grid.push_back(std::stod(k_grid.substr(start, comma - start)));
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
      }
      const auto result = fp::cmd_run(cfg);
      std::cerr << result.records.size() << " queries logged, " << result.backend_calls << " sent, "
                << result.cache_hits << " from cache\n";
      std::cout << (cfg.out_dir / "summary.md").string() << "\n";
    } else if (*report) {
      std::vector<fp::fs::path> dirs(report_runs.begin(), report_runs.end());
      for (const auto& p : fp::cmd_report(dirs, report_out).written) std::cout << p.string() << "\n";
    } else if (*caption) {
      std::optional<fp::fs::path> cache;
      if (!cap_cache.empty()) cache = cap_cache;
      const auto r = fp::cmd_caption(cap_manifest, cap_config, cap_backend, cap_out, cache);
      std::cerr << r.generated << " captions generated, " << r.nonconforming << " nonconforming\n";
      for (const auto& issue : r.validation.issues) {
        if (issue.type == fp::ValidationIssue::Type::nonconforming_caption) {
          std::cerr << "warning\tnonconforming caption\t" << issue.movie << "\t" << issue.frame_id << "\n";
        }
      }
    } else if (*timing) {
      const auto table = fp::format_timing(fp::cmd_timing(timing_dir));
      if (timing_out.empty()) {
        std::cout << table;
      } else {
        std::ofstream(timing_out) << table;
      }
    } else if (*val) {
      return do_validate(val_manifest, strict, expect_main, expect_neutral);
    } else if (*part) {
      return do_partition(part_manifest);
    } else if (*synth) {
      const auto corpus = fp::write_synthetic_corpus(synth_spec, synth_out);
      auto config = fp::synthetic_backend_config(
          "mock-vlm", fp::synthetic_profile(synth_spec.genres, fp::MockRecall{}, synth_spec.seed));
      auto single = fp::synthetic_descriptor("mock-single", 1);
      single.capabilities = {fp::Capability::freeform};
      config.backends.push_back(single);
      config.mock_profiles["mock-single"] = config.mock_profiles.at("mock-vlm");
      std::ofstream(fp::fs::path(synth_out) / "backends.json") << fp::serialize_backend_config(config);
      std::cerr << corpus.movies.size() << " movies written to " << synth_out << "\n";
    }
  } catch (const fp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return fp::exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

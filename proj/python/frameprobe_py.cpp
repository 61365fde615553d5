#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>

#include "frameprobe/corpus.hpp"
#include "frameprobe/detectors.hpp"
#include "frameprobe/error.hpp"
#include "frameprobe/matcher.hpp"
#include "frameprobe/pipeline.hpp"
#include "frameprobe/stats.hpp"
#include "frameprobe/synthetic.hpp"

namespace py = pybind11;
using namespace frameprobe;

namespace {

py::dict report_dict(const DetectionReport& r) {
  py::dict d;
  d["detector"] = r.detector;
  d["view"] = r.view;
  d["auc_mean"] = r.auc_mean;
  d["auc_std"] = r.auc_std;
  d["per_iteration_auc"] = r.per_iteration_auc;
  d["best_threshold"] = r.best_threshold;
  d["threshold_balanced_accuracy"] = r.threshold_balanced_accuracy;
  d["suspect_accuracy"] = py::make_tuple(r.suspect_accuracy.mean, r.suspect_accuracy.std);
  d["clean_accuracy"] = py::make_tuple(r.clean_accuracy.mean, r.clean_accuracy.std);
  d["seed"] = r.seed;
  d["k_selected"] = r.k_selected;
  return d;
}

std::vector<std::string> titles(const std::vector<const Movie*>& movies) {
  std::vector<std::string> out;
  for (const auto* m : movies) out.push_back(m->title);
  return out;
}

}  // namespace

PYBIND11_MODULE(_frameprobe, m) {
  m.doc() = "Bindings for the frameprobe membership-inference toolkit";

  static py::exception<Error> error(m, "FrameprobeError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  // matcher
  m.def("canonicalize", [](const std::string& s) { return canonicalize(s); });
  m.def("extract_title", [](const std::string& s) { return extract_title(s); });
  m.def("edit_similarity", [](const std::string& a, const std::string& b) { return edit_similarity(a, b); });
  m.def(
      "match_title",
      [](const std::string& raw, const std::string& title, const std::vector<std::string>& aliases, double threshold) {
        const auto o = match_title(raw, title, aliases, threshold);
        py::dict d;
        d["verdict"] = std::string(to_string(o.verdict));
        d["similarity"] = o.similarity;
        d["candidate"] = o.extracted_candidate;
        d["correct"] = o.correct();
        return d;
      },
      py::arg("raw_text"), py::arg("title"), py::arg("aliases") = std::vector<std::string>{},
      py::arg("fuzzy_threshold") = kDefaultFuzzyThreshold);
  m.def(
      "parse_mcqa",
      [](const std::string& raw, const std::vector<std::string>& options, double threshold) {
        return parse_mcqa(raw, options, threshold);
      },
      py::arg("raw_text"), py::arg("options"), py::arg("fuzzy_threshold") = kDefaultFuzzyThreshold);

  // stats
  m.def("auc", [](const std::vector<double>& s, const std::vector<double>& c) { return auc(s, c); },
        py::arg("suspect"), py::arg("clean"));
  m.def(
      "best_threshold",
      [](const std::vector<double>& s, const std::vector<double>& c) {
        const auto t = best_threshold(s, c);
        return py::make_tuple(t.threshold, t.balanced_accuracy);
      },
      py::arg("suspect"), py::arg("clean"));
  m.def(
      "bootstrap_auc",
      [](const std::vector<double>& s, const std::vector<double>& c, int iterations, std::uint64_t seed) {
        return report_dict(bootstrap_auc(s, c, iterations, seed));
      },
      py::arg("suspect"), py::arg("clean"), py::arg("iterations") = kDefaultBootstrapIterations,
      py::arg("seed") = 0);
  m.def("chance_mcqa", [](int options) { return chance_baseline(McqaChance{options}); }, py::arg("options") = 4);
  m.def(
      "chance_freeform",
      [](double output_space, double bias) { return chance_baseline(FreeformChance{output_space, bias}); },
      py::arg("output_space") = 10000.0, py::arg("bias") = 1.0);

  // Rényi
  m.def("renyi_entropy", [](const std::vector<double>& p, double alpha) { return renyi_entropy(p, alpha); },
        py::arg("p"), py::arg("alpha"));
  m.def(
      "max_renyi_k",
      [](const std::vector<double>& entropies, double k_percent, const std::string& direction) {
        return max_renyi_k(entropies, k_percent, parse_aggregate(direction));
      },
      py::arg("entropies"), py::arg("k_percent"), py::arg("direction") = "max");

  // corpus
  m.def("classify", [](const std::string& date) { return std::string(to_string(classify(parse_date(date)))); });
  m.def("partition", [](const fs::path& manifest) {
    const auto c = load_manifest(manifest);
    const auto p = partition(c);
    py::dict d;
    d["suspect"] = titles(p.suspect);
    d["clean"] = titles(p.clean);
    d["excluded"] = titles(p.excluded);
    return d;
  });
  m.def(
      "validate",
      [](const fs::path& manifest, bool strict) {
        const auto c = load_manifest(manifest);
        ValidateOptions opts;
        opts.strict = strict;
        py::list issues;
        for (const auto& i : validate(c, opts).issues) {
          py::dict d;
          d["type"] = std::string(to_string(i.type));
          d["movie"] = i.movie;
          d["frame_id"] = i.frame_id;
          d["detail"] = i.detail;
          issues.append(d);
        }
        return issues;
      },
      py::arg("manifest"), py::arg("strict") = false);

  // synthetic data
  m.def(
      "write_synthetic_corpus",
      [](const fs::path& dir, int suspect, int clean, int main_frames, int neutral_frames, std::uint64_t seed) {
        SyntheticSpec spec;
        spec.suspect = suspect;
        spec.clean = clean;
        spec.main_frames = main_frames;
        spec.neutral_frames = neutral_frames;
        spec.seed = seed;
        write_synthetic_corpus(spec, dir);
        return dir / "manifest.json";
      },
      py::arg("dir"), py::arg("suspect") = 50, py::arg("clean") = 50, py::arg("main_frames") = 100,
      py::arg("neutral_frames") = 40, py::arg("seed") = 0);
  m.def(
      "write_mock_backends",
      [](const fs::path& path, const std::string& name, std::uint64_t seed) {
        const auto profile = synthetic_profile(SyntheticSpec{}.genres, MockRecall{}, seed);
        std::ofstream(path) << serialize_backend_config(synthetic_backend_config(name, profile));
        return path;
      },
      py::arg("path"), py::arg("name") = "mock-vlm", py::arg("seed") = 0);

  // pipeline
  m.def(
      "run",
      [](const fs::path& manifest, const fs::path& backends, const std::string& backend, const fs::path& out_dir,
         const std::string& detectors, std::uint64_t seed, int workers, int iterations, int frames_per_prompt) {
        RunConfig config;
        config.manifest_path = manifest;
        config.backend_config_path = backends;
        config.backend_name = backend;
        config.out_dir = out_dir;
        config.detectors = parse_detector_list(detectors);
        config.seed = seed;
        config.workers = workers;
        config.iterations = iterations;
        config.frames_per_prompt = frames_per_prompt;
        RunResult r;
        {
          py::gil_scoped_release release;
          r = cmd_run(config);
        }
        py::list reports;
        for (const auto& rep : r.reports) reports.append(report_dict(rep));
        py::dict d;
        d["reports"] = reports;
        d["queries"] = r.records.size();
        d["movies"] = r.movies.size();
        d["backend_calls"] = r.backend_calls;
        d["cache_hits"] = r.cache_hits;
        return d;
      },
      py::arg("manifest"), py::arg("backends"), py::arg("backend"), py::arg("out_dir"),
      py::arg("detectors") = "captions,floor_disco,disco", py::arg("seed") = 0, py::arg("workers") = 4,
      py::arg("iterations") = kDefaultBootstrapIterations, py::arg("frames_per_prompt") = 1);
  m.def(
      "report",
      [](const std::vector<fs::path>& run_dirs, const fs::path& out_dir) { return cmd_report(run_dirs, out_dir).written; },
      py::arg("run_dirs"), py::arg("out_dir"));
}

#include "frameprobe/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "frameprobe/error.hpp"

namespace frameprobe {

using nlohmann::ordered_json;

namespace {

std::string num(double v, int precision = 6) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  return buf;
}

std::string cell(std::string_view s) {
  std::string out(s);
  std::replace_if(out.begin(), out.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
  return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingArtifacts, "cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::ConfigError, "cannot write " + path.string());
    out << content;
  }
  fs::rename(tmp, path);
}

constexpr std::array<Detector, 5> kRowOrder{Detector::captions, Detector::mcqa, Detector::renyi,
                                            Detector::floor_disco, Detector::disco};

LogRecord record_from(const FramePrediction& p, const Movie& movie, Group group) {
  LogRecord r;
  r.pass = std::string(to_string(p.mode));
  r.movie = movie.title;
  r.group = group;
  r.kind = p.kind;
  r.frame_ids = p.group_frame_ids;
  r.raw_text = p.raw_text;
  r.correct = p.correct;
  r.latency_ms = p.latency_ms;
  if (const auto* m = std::get_if<MatchOutcome>(&p.match)) {
    r.extracted = m->extracted_candidate;
    r.verdict = m->verdict;
    r.similarity = m->similarity;
  } else {
    const auto& q = std::get<McqaOutcome>(p.match);
    r.options = q.options;
    r.truth_index = q.truth_index;
    r.chosen = q.chosen;
  }
  return r;
}

/// One record per query: group members share the record of the group's first frame.
void append_records(std::vector<LogRecord>& out, const std::vector<FramePrediction>& preds,
                    const Movie& movie, Group group) {
  for (const auto& p : preds) {
    if (p.group_frame_ids.empty() || p.frame_id == p.group_frame_ids.front()) {
      out.push_back(record_from(p, movie, group));
    }
  }
}

std::vector<LogRecord> probe_movie(ProbeContext& ctx, const Movie& movie, Group group,
                                   const RunConfig& config, std::span<const Movie> pool) {
  std::vector<LogRecord> out;
  if (config.wants(Detector::disco) || config.wants(Detector::floor_disco)) {
    append_records(out, run_freeform(ctx, movie, config.kinds, config.frames_per_prompt), movie, group);
  }
  if (config.wants(Detector::captions) || config.wants(Detector::floor_disco)) {
    append_records(out, run_captions(ctx, movie, config.kinds), movie, group);
  }
  if (config.wants(Detector::mcqa)) {
    append_records(out, run_mcqa(ctx, movie, config.kinds, pool, config.placement, config.seed), movie,
                   group);
  }
  if (config.wants(Detector::renyi)) {
    for (auto& f : renyi_frames(ctx, movie, config.renyi, config.kinds)) {
      LogRecord r;
      r.pass = "renyi";
      r.movie = movie.title;
      r.group = group;
      r.kind = f.kind;
      r.frame_ids = {f.frame_id};
      r.raw_text = std::move(f.raw_text);
      r.latency_ms = f.latency_ms;
      r.renyi_scores = std::move(f.scores);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<FramePrediction> frame_predictions(const std::vector<const LogRecord*>& records,
                                               std::string_view pass, PredictionMode mode) {
  std::vector<FramePrediction> out;
  for (const auto* r : records) {
    if (r->pass != pass) continue;
    for (const auto& id : r->frame_ids) {
      FramePrediction p;
      p.frame_id = id;
      p.kind = r->kind;
      p.mode = mode;
      p.correct = r->correct;
      p.group_frame_ids = r->frame_ids;
      p.latency_ms = r->latency_ms;
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// RunConfig

bool RunConfig::wants(Detector d) const {
  return std::find(detectors.begin(), detectors.end(), d) != detectors.end();
}

std::vector<ScoreView> RunConfig::views() const {
  std::vector<ScoreView> v{ScoreView::weighted};
  if (kinds.contains(FrameKind::main)) v.push_back(ScoreView::main);
  if (kinds.contains(FrameKind::neutral)) v.push_back(ScoreView::neutral);
  return v;
}

void RunConfig::validate() const {
  if (detectors.empty()) throw Error(Errc::InvalidParam, "no detectors selected");
  if (kinds.empty()) throw Error(Errc::InvalidParam, "no frame kinds selected");
  if (frames_per_prompt < 1) throw Error(Errc::InvalidParam, "frames per prompt must be >= 1");
  if (workers < 1) throw Error(Errc::InvalidParam, "workers must be >= 1");
  if (iterations < 1) throw Error(Errc::InvalidParam, "iterations must be >= 1");
  if (!(fuzzy_threshold > 0.0 && fuzzy_threshold <= 1.0)) {
    throw Error(Errc::InvalidParam, "fuzzy threshold must lie in (0, 1]");
  }
  if (max_output_tokens < 1) throw Error(Errc::InvalidParam, "max output tokens must be >= 1");
  if (backend_name.empty()) throw Error(Errc::InvalidParam, "no backend named");
  if (wants(Detector::renyi)) renyi.validate();
}

std::string RunConfig::to_json() const {
  ordered_json j;
  j["manifest"] = manifest_path.generic_string();
  j["backend_config"] = backend_config_path.generic_string();
  j["backend"] = backend_name;
  j["detectors"] = ordered_json::array();
  for (Detector d : kRowOrder) {
    if (wants(d)) j["detectors"].push_back(to_string(d));
  }
  j["kinds"] = ordered_json::array();
  for (FrameKind k : kinds) j["kinds"].push_back(to_string(k));
  j["frames_per_prompt"] = frames_per_prompt;
  j["placement"] = to_string(placement);
  j["renyi"] = {{"alpha", renyi.alpha},
                {"k_percent_grid", renyi.k_percent_grid},
                {"slice", to_string(renyi.slice)},
                {"direction", to_string(renyi.direction)},
                {"accept_partial_vectors", renyi.accept_partial_vectors}};
  j["resolution"] = resolution ? ordered_json(to_string(*resolution)) : ordered_json(nullptr);
  j["prompt_variant"] = prompt_variant;
  j["prompt_registry"] =
      prompt_registry_path ? ordered_json(prompt_registry_path->generic_string()) : ordered_json(nullptr);
  j["seed"] = seed;
  j["workers"] = workers;
  j["iterations"] = iterations;
  j["fuzzy_threshold"] = fuzzy_threshold;
  j["floor_denominator"] =
      floor_denominator == FloorDenominator::all_frames ? "all_frames" : "surviving";
  j["max_output_tokens"] = max_output_tokens;
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(std::string_view text) {
  RunConfig c;
  try {
    const auto j = ordered_json::parse(text);
    c.manifest_path = j.at("manifest").get<std::string>();
    c.backend_config_path = j.at("backend_config").get<std::string>();
    c.backend_name = j.at("backend").get<std::string>();
    c.detectors.clear();
    for (const auto& d : j.at("detectors")) c.detectors.push_back(parse_detector(d.get<std::string>()));
    c.kinds.clear();
    for (const auto& k : j.at("kinds")) c.kinds.insert(parse_frame_kind(k.get<std::string>()));
    c.frames_per_prompt = j.at("frames_per_prompt").get<int>();
    c.placement = parse_placement(j.at("placement").get<std::string>());
    const auto& r = j.at("renyi");
    c.renyi.alpha = r.at("alpha").get<double>();
    c.renyi.k_percent_grid = r.at("k_percent_grid").get<std::vector<double>>();
    c.renyi.slice = parse_position_slice(r.at("slice").get<std::string>());
    c.renyi.direction = parse_aggregate(r.at("direction").get<std::string>());
    c.renyi.accept_partial_vectors = r.at("accept_partial_vectors").get<bool>();
    if (!j.at("resolution").is_null()) {
      c.resolution = parse_resize_target(j.at("resolution").get<std::string>());
    }
    c.prompt_variant = j.at("prompt_variant").get<std::string>();
    if (!j.at("prompt_registry").is_null()) {
      c.prompt_registry_path = j.at("prompt_registry").get<std::string>();
    }
    c.seed = j.at("seed").get<std::uint64_t>();
    c.workers = j.value("workers", 1);
    c.iterations = j.at("iterations").get<int>();
    c.fuzzy_threshold = j.at("fuzzy_threshold").get<double>();
    c.floor_denominator = j.at("floor_denominator").get<std::string>() == "surviving"
                              ? FloorDenominator::surviving
                              : FloorDenominator::all_frames;
    c.max_output_tokens = j.value("max_output_tokens", 64);
  } catch (const ordered_json::exception& e) {
    throw Error(Errc::ParseError, std::string("run config: ") + e.what());
  }
  return c;
}

std::vector<Detector> parse_detector_list(std::string_view csv) {
  std::vector<Detector> out;
  for (const auto& part : split(csv, ',')) {
    const auto name = trim(part);
    if (name.empty()) continue;
    const Detector d = parse_detector(name);
    if (std::find(out.begin(), out.end(), d) == out.end()) out.push_back(d);
  }
  if (out.empty()) throw Error(Errc::InvalidParam, "empty detector list");
  return out;
}

KindSet parse_kind_list(std::string_view csv) {
  KindSet out;
  for (const auto& part : split(csv, ',')) {
    const auto name = trim(part);
    if (name.empty()) continue;
    if (name == "all") return kAllKinds;
    out.insert(parse_frame_kind(name));
  }
  if (out.empty()) throw Error(Errc::InvalidParam, "empty kind list");
  return out;
}

// ---------------------------------------------------------------------------
// Prediction log

std::string LogRecord::to_json_line() const {
  ordered_json j;
  j["pass"] = pass;
  j["movie"] = movie;
  j["group"] = to_string(group);
  j["kind"] = to_string(kind);
  j["frame_ids"] = frame_ids;
  j["raw_text"] = raw_text;
  if (verdict) {
    j["extracted"] = extracted;
    j["verdict"] = to_string(*verdict);
    j["similarity"] = similarity;
  }
  if (truth_index) {
    j["options"] = options;
    j["truth_index"] = *truth_index;
    j["chosen"] = chosen ? ordered_json(*chosen) : ordered_json(nullptr);
  }
  if (!renyi_scores.empty()) j["renyi_scores"] = renyi_scores;
  j["correct"] = correct;
  j["latency_ms"] = latency_ms;
  return j.dump();
}

LogRecord LogRecord::parse(std::string_view line) {
  LogRecord r;
  try {
    const auto j = ordered_json::parse(line);
    r.pass = j.at("pass").get<std::string>();
    r.movie = j.at("movie").get<std::string>();
    r.group = parse_group(j.at("group").get<std::string>());
    r.kind = parse_frame_kind(j.at("kind").get<std::string>());
    r.frame_ids = j.at("frame_ids").get<std::vector<std::string>>();
    r.raw_text = j.at("raw_text").get<std::string>();
    if (j.contains("verdict")) {
      r.extracted = j.at("extracted").get<std::string>();
      r.verdict = parse_verdict(j.at("verdict").get<std::string>());
      r.similarity = j.at("similarity").get<double>();
    }
    if (j.contains("truth_index")) {
      r.options = j.at("options").get<std::vector<std::string>>();
      r.truth_index = j.at("truth_index").get<std::size_t>();
      if (!j.at("chosen").is_null()) r.chosen = j.at("chosen").get<std::size_t>();
    }
    if (j.contains("renyi_scores")) r.renyi_scores = j.at("renyi_scores").get<std::vector<double>>();
    r.correct = j.at("correct").get<bool>();
    r.latency_ms = j.at("latency_ms").get<std::int64_t>();
  } catch (const ordered_json::exception& e) {
    throw Error(Errc::ParseError, std::string("prediction record: ") + e.what());
  }
  return r;
}

std::vector<LogRecord> read_prediction_log(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<LogRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(LogRecord::parse(line));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Scoring

std::vector<ScoredMovie> score_records(const std::vector<LogRecord>& records, const RunConfig& config) {
  std::vector<std::pair<std::string, std::vector<const LogRecord*>>> by_movie;
  std::map<std::string, std::size_t> index;
  for (const auto& r : records) {
    auto [it, inserted] = index.try_emplace(r.movie, by_movie.size());
    if (inserted) by_movie.push_back({r.movie, {}});
    by_movie[it->second].second.push_back(&r);
  }

  std::vector<ScoredMovie> out;
  for (const auto& [title, recs] : by_movie) {
    ScoredMovie sm;
    sm.title = title;
    sm.group = recs.front()->group;
    const auto image = frame_predictions(recs, "image", PredictionMode::image);
    const auto caption = frame_predictions(recs, "caption", PredictionMode::caption);
    for (Detector d : kRowOrder) {
      if (!config.wants(d)) continue;
      switch (d) {
        case Detector::disco:
          sm.scores.emplace(d, disco_score(image, title));
          break;
        case Detector::captions:
          sm.scores.emplace(d, accuracy_score(caption, Detector::captions, title));
          break;
        case Detector::floor_disco:
          sm.scores.emplace(d, floor_disco(image, caption, config.floor_denominator, title));
          break;
        case Detector::mcqa:
          sm.scores.emplace(
              d, accuracy_score(frame_predictions(recs, "mcqa", PredictionMode::mcqa), Detector::mcqa, title));
          break;
        case Detector::renyi: {
          std::vector<RenyiFrameResult> frames;
          for (const auto* r : recs) {
            if (r->pass != "renyi") continue;
            RenyiFrameResult f;
            f.frame_id = r->frame_ids.front();
            f.kind = r->kind;
            f.scores = r->renyi_scores;
            frames.push_back(std::move(f));
          }
          sm.scores.emplace(d, renyi_movie_score(frames, config.renyi, title));
          break;
        }
      }
    }
    out.push_back(std::move(sm));
  }
  return out;
}

std::vector<DetectionReport> detection_reports(const std::vector<ScoredMovie>& movies,
                                               const RunConfig& config) {
  std::vector<DetectionReport> out;
  const auto has = [&](Group g) {
    return std::any_of(movies.begin(), movies.end(), [g](const ScoredMovie& m) { return m.group == g; });
  };
  // A one-group run still yields accuracies, but no AUC.
  if (!has(Group::suspect) || !has(Group::clean)) return out;
  auto values = [&](Detector d, ScoreView v, Group g, std::optional<std::size_t> k) {
    std::vector<double> xs;
    for (const auto& m : movies) {
      if (m.group == g) xs.push_back(m.scores.at(d).detection_score(v, k));
    }
    return xs;
  };
  auto finish = [&](DetectionReport rep, Detector d, ScoreView v, const std::vector<double>& s,
                    const std::vector<double>& c) {
    rep.detector = std::string(to_string(d));
    rep.view = std::string(to_string(v));
    rep.suspect_accuracy = group_accuracy(s, config.iterations, config.seed);
    rep.clean_accuracy = group_accuracy(c, config.iterations, config.seed);
    return rep;
  };

  for (Detector d : kRowOrder) {
    if (!config.wants(d)) continue;
    for (ScoreView v : config.views()) {
      if (d != Detector::renyi) {
        const auto s = values(d, v, Group::suspect, std::nullopt);
        const auto c = values(d, v, Group::clean, std::nullopt);
        if (s.empty() || c.empty()) {
          throw Error(Errc::EmptyInput, "detection needs both suspect and clean movies");
        }
        out.push_back(finish(bootstrap_auc(s, c, config.iterations, config.seed), d, v, s, c));
        continue;
      }
      std::optional<DetectionReport> best;
      std::vector<double> best_s, best_c;
      for (std::size_t k = 0; k < config.renyi.k_percent_grid.size(); ++k) {
        const auto s = values(d, v, Group::suspect, k);
        const auto c = values(d, v, Group::clean, k);
        if (s.empty() || c.empty()) {
          throw Error(Errc::EmptyInput, "detection needs both suspect and clean movies");
        }
        auto rep = bootstrap_auc(s, c, config.iterations, config.seed);
        if (!best || rep.auc_mean > best->auc_mean) {
          rep.k_selected = config.renyi.k_percent_grid[k];
          best = std::move(rep);
          best_s = s;
          best_c = c;
        }
      }
      out.push_back(finish(std::move(*best), d, v, best_s, best_c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Run

RunResult run_experiment(const RunConfig& config, std::shared_ptr<const CorpusManifest> corpus,
                         std::shared_ptr<Backend> backend, std::shared_ptr<ResponseCache> cache,
                         const PromptRegistry& prompts) {
  config.validate();
  const PromptTemplates& templates = prompts.get(config.prompt_variant);
  Gateway gateway(std::move(backend), std::move(cache));
  const BackendDescriptor& desc = gateway.descriptor();

  // Everything below up to the worker pool fails without touching the backend.
  check_frames_per_prompt(desc, config.frames_per_prompt);
  if (config.wants(Detector::renyi) && !desc.has(Capability::logits)) {
    throw Error(Errc::CapabilityUnsupported, desc.name + " does not expose token distributions");
  }

  const auto report = validate(*corpus);
  for (const auto& issue : report.issues) {
    if (issue.type == ValidationIssue::Type::group_inconsistent ||
        issue.type == ValidationIssue::Type::missing_date) {
      throw Error(Errc::ConfigError, "corpus fails validation: " + std::string(to_string(issue.type)) +
                                         " for '" + issue.movie + "' (" + issue.detail + ")");
    }
  }
  const Partition part = partition(*corpus);
  std::map<const Movie*, Group> groups;
  for (const Movie* m : part.suspect) groups[m] = Group::suspect;
  for (const Movie* m : part.clean) groups[m] = Group::clean;
  std::vector<const Movie*> movies;
  for (const auto& m : corpus->movies) {
    if (groups.contains(&m)) movies.push_back(&m);
  }

  for (const Movie* m : movies) {
    if (config.wants(Detector::captions) || config.wants(Detector::floor_disco)) {
      for (const auto& f : m->frames) {
        if (config.kinds.contains(f.kind) && f.caption.empty()) {
          throw Error(Errc::MissingCaption, "frame '" + f.frame_id + "' of '" + m->title + "'");
        }
      }
    }
    if (config.wants(Detector::mcqa)) build_distractors(*m, corpus->movies, config.seed);
  }

  std::vector<std::vector<LogRecord>> per_movie(movies.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto work = [&] {
    ProbeContext ctx{gateway,         *corpus, templates, config.resolution, config.fuzzy_threshold,
                     config.max_output_tokens};
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= movies.size()) break;
      try {
        per_movie[i] = probe_movie(ctx, *movies[i], groups.at(movies[i]), config, corpus->movies);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        stop = true;
      }
    }
  };
  {
    const auto n = std::max<std::size_t>(1, std::min<std::size_t>(config.workers, movies.size()));
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(work);
  }
  if (first_error) std::rethrow_exception(first_error);

  RunResult result;
  for (auto& recs : per_movie) {
    std::move(recs.begin(), recs.end(), std::back_inserter(result.records));
  }
  result.movies = score_records(result.records, config);
  result.reports = detection_reports(result.movies, config);
  result.backend_calls = gateway.backend_calls();
  result.cache_hits = gateway.cache_hits();
  return result;
}

namespace {

std::string movies_table(const std::vector<ScoredMovie>& scored, const CorpusManifest& corpus) {
  std::string out = "title\tgroup\trelease_date\tgenre_tags\tbox_office_usd\timdb_rating\tn_main\tn_neutral\n";
  for (const auto& sm : scored) {
    const Movie* m = corpus.find(sm.title);
    if (!m) continue;
    std::string genres;
    for (const auto& g : m->genre_tags) genres += (genres.empty() ? "" : "|") + cell(g);
    out += cell(m->title) + "\t" + std::string(to_string(sm.group)) + "\t" +
           (m->release_date ? format_date(*m->release_date) : "NA") + "\t" + genres + "\t" +
           (m->box_office_usd ? std::to_string(*m->box_office_usd) : "NA") + "\t" +
           (m->imdb_rating ? num(*m->imdb_rating, 1) : "NA") + "\t" +
           std::to_string(m->count(FrameKind::main)) + "\t" +
           std::to_string(m->count(FrameKind::neutral)) + "\n";
  }
  return out;
}

std::string scores_table(const std::vector<ScoredMovie>& scored) {
  std::string out =
      "movie\tgroup\tdetector\tn_main\tn_neutral\tcorrect_main\tcorrect_neutral\tacc_main\tacc_neutral\t"
      "acc_weighted\n";
  for (Detector d : kRowOrder) {
    if (d == Detector::renyi) continue;
    for (const auto& sm : scored) {
      auto it = sm.scores.find(d);
      if (it == sm.scores.end()) continue;
      const auto& s = it->second;
      out += cell(sm.title) + "\t" + std::string(to_string(sm.group)) + "\t" + std::string(to_string(d)) +
             "\t" + std::to_string(s.n_main) + "\t" + std::to_string(s.n_neutral) + "\t" +
             std::to_string(s.correct_main) + "\t" + std::to_string(s.correct_neutral) + "\t" +
             num(s.acc_main) + "\t" + num(s.acc_neutral) + "\t" + num(s.acc_weighted) + "\n";
    }
  }
  return out;
}

std::string renyi_table(const std::vector<ScoredMovie>& scored) {
  std::string out = "movie\tgroup\tk_percent\tscore_all\tscore_main\tscore_neutral\n";
  for (const auto& sm : scored) {
    auto it = sm.scores.find(Detector::renyi);
    if (it == sm.scores.end() || !it->second.renyi) continue;
    const auto& r = *it->second.renyi;
    for (std::size_t k = 0; k < r.k_grid.size(); ++k) {
      out += cell(sm.title) + "\t" + std::string(to_string(sm.group)) + "\t" + num(r.k_grid[k], 1) + "\t" +
             num(r.all[k], 9) + "\t" + num(r.main[k], 9) + "\t" + num(r.neutral[k], 9) + "\n";
    }
  }
  return out;
}

std::string reports_table(const std::vector<DetectionReport>& reports) {
  std::string out =
      "detector\tview\tauc_mean\tauc_std\tper_iteration_auc\tbest_threshold\tthreshold_balanced_accuracy\t"
      "suspect_mean\tsuspect_std\tclean_mean\tclean_std\tseed\tk_selected\n";
  for (const auto& r : reports) {
    std::string iters;
    for (double a : r.per_iteration_auc) iters += (iters.empty() ? "" : ",") + num(a);
    out += r.detector + "\t" + r.view + "\t" + num(r.auc_mean) + "\t" + num(r.auc_std) + "\t" + iters + "\t" +
           num(r.best_threshold) + "\t" + num(r.threshold_balanced_accuracy) + "\t" +
           num(r.suspect_accuracy.mean) + "\t" + num(r.suspect_accuracy.std) + "\t" +
           num(r.clean_accuracy.mean) + "\t" + num(r.clean_accuracy.std) + "\t" + std::to_string(r.seed) +
           "\t" + (r.k_selected ? num(*r.k_selected, 1) : "NA") + "\n";
  }
  return out;
}

std::string summary_markdown(const RunConfig& config, const RunResult& r) {
  std::size_t n_suspect = 0, n_clean = 0;
  for (const auto& m : r.movies) (m.group == Group::suspect ? n_suspect : n_clean) += 1;
  std::string out = "# Run summary\n\n";
  out += "- backend: `" + config.backend_name + "`\n";
  out += "- movies: " + std::to_string(n_suspect) + " suspect, " + std::to_string(n_clean) + " clean\n";
  out += "- queries logged: " + std::to_string(r.records.size()) + "\n";
  out += "- frames per prompt: " + std::to_string(config.frames_per_prompt) + "\n";
  out += "- resolution: " + (config.resolution ? to_string(*config.resolution) : std::string("native")) + "\n";
  out += "- prompt variant: `" + config.prompt_variant + "`\n";
  out += "- seed: " + std::to_string(config.seed) + ", bootstrap iterations: " +
         std::to_string(config.iterations) + "\n\n";
  if (r.reports.empty()) {
    out += "No detection reports: AUC needs both suspect and clean movies.\n";
    return out;
  }
  out += "| detector | view | AUC | suspect acc | clean acc | threshold | bal. acc |\n";
  out += "|---|---|---|---|---|---|---|\n";
  for (const auto& rep : r.reports) {
    std::string name(display_name(parse_detector(rep.detector)));
    if (rep.k_selected) name += " K=" + num(*rep.k_selected, 0) + "%";
    out += "| " + name + " | " + rep.view + " | " + num(rep.auc_mean, 3) + " ± " + num(rep.auc_std, 3) +
           " | " + num(rep.suspect_accuracy.mean, 3) + " ± " + num(rep.suspect_accuracy.std, 3) + " | " +
           num(rep.clean_accuracy.mean, 3) + " ± " + num(rep.clean_accuracy.std, 3) + " | " +
           num(rep.best_threshold, 3) + " | " + num(rep.threshold_balanced_accuracy, 3) + " |\n";
  }
  return out;
}

}  // namespace

RunResult cmd_run(const RunConfig& config) {
  config.validate();
  if (config.out_dir.empty()) throw Error(Errc::InvalidParam, "no output directory");
  auto corpus = std::make_shared<const CorpusManifest>(load_manifest(config.manifest_path));
  const auto backends = load_backend_config(config.backend_config_path);
  const PromptRegistry prompts = config.prompt_registry_path
                                     ? PromptRegistry::load(*config.prompt_registry_path)
                                     : PromptRegistry::builtin();
  prompts.get(config.prompt_variant);
  auto backend = make_backend(backends, config.backend_name, corpus);
  check_frames_per_prompt(backend->descriptor(), config.frames_per_prompt);

  fs::create_directories(config.out_dir);
  auto cache = std::make_shared<ResponseCache>(config.cache_dir.value_or(config.out_dir / "cache"));
  RunResult r = run_experiment(config, corpus, backend, cache, prompts);

  std::string log;
  for (const auto& rec : r.records) log += rec.to_json_line() + "\n";
  write_text(config.out_dir / "config.json", config.to_json());
  write_text(config.out_dir / "prompts.json", prompts.to_json());
  write_text(config.out_dir / "movies.tsv", movies_table(r.movies, *corpus));
  write_text(config.out_dir / "predictions.jsonl", log);
  write_text(config.out_dir / "scores.tsv", scores_table(r.movies));
  if (config.wants(Detector::renyi)) write_text(config.out_dir / "renyi_scores.tsv", renyi_table(r.movies));
  write_text(config.out_dir / "reports.tsv", reports_table(r.reports));
  write_text(config.out_dir / "summary.md", summary_markdown(config, r));
  return r;
}

// ---------------------------------------------------------------------------
// Report

namespace {

struct LoadedRun {
  fs::path dir;
  std::string label;
  RunConfig config;
  std::vector<ScoredMovie> movies;
  std::vector<DetectionReport> reports;
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> covariates;
};

LoadedRun load_run(const fs::path& dir) {
  LoadedRun run;
  run.dir = dir;
  run.config = RunConfig::from_json(read_text(dir / "config.json"));
  const auto records = read_prediction_log(dir / "predictions.jsonl");
  if (records.empty()) throw Error(Errc::MissingArtifacts, "empty prediction log in " + dir.string());
  run.movies = score_records(records, run.config);
  run.reports = detection_reports(run.movies, run.config);

  std::istringstream in(read_text(dir / "movies.tsv"));
  std::string line;
  std::getline(in, line);
  auto opt = [](const std::string& s) -> std::optional<double> {
    if (s.empty() || s == "NA") return std::nullopt;
    return std::stod(s);
  };
  while (std::getline(in, line)) {
    const auto cols = split(line, '\t');
    if (cols.size() < 6) continue;
    run.covariates[cols[0]] = {opt(cols[4]), opt(cols[5])};
  }
  return run;
}

const DetectionReport* find_report(const LoadedRun& run, Detector d, ScoreView v) {
  for (const auto& r : run.reports) {
    if (r.detector == to_string(d) && r.view == to_string(v)) return &r;
  }
  return nullptr;
}

}  // namespace

ReportFiles cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw Error(Errc::MissingArtifacts, "no run directories given");
  std::vector<LoadedRun> runs;
  for (const auto& dir : run_dirs) runs.push_back(load_run(dir));
  std::map<std::string, int> label_uses;
  for (const auto& r : runs) ++label_uses[r.config.backend_name];
  for (auto& r : runs) {
    r.label = r.config.backend_name;
    if (label_uses[r.label] > 1) r.label += "@" + r.dir.filename().string();
  }

  ReportFiles files;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_text(out_dir / name, content);
    files.written.push_back(out_dir / name);
  };

  // AUC table: rows are frame kind x detector, columns are backends.
  {
    std::string tsv = "view\tdetector";
    std::string md = "| frames | detector |";
    std::string rule = "|---|---|";
    for (const auto& r : runs) {
      tsv += "\t" + r.label + "_auc_mean\t" + r.label + "_auc_std";
      md += " " + r.label + " |";
      rule += "---|";
    }
    tsv += "\n";
    md += "\n" + rule + "\n";
    for (ScoreView v : {ScoreView::main, ScoreView::neutral, ScoreView::weighted}) {
      for (Detector d : kRowOrder) {
        bool any = false;
        for (const auto& r : runs) any = any || find_report(r, d, v);
        if (!any) continue;
        tsv += std::string(to_string(v)) + "\t" + std::string(to_string(d));
        md += "| " + std::string(to_string(v)) + " | " + std::string(display_name(d)) + " |";
        for (const auto& r : runs) {
          const auto* rep = find_report(r, d, v);
          tsv += rep ? "\t" + num(rep->auc_mean) + "\t" + num(rep->auc_std) : "\tNA\tNA";
          md += rep ? " " + num(rep->auc_mean, 3) + " ± " + num(rep->auc_std, 3) + " |" : " - |";
        }
        tsv += "\n";
        md += "\n";
      }
    }
    emit("auc_table.tsv", tsv);
    emit("auc_table.md", md);
  }

  // Accuracy tables: suspect and clean group accuracies per detector and view.
  {
    std::string tsv = "backend\tdetector\tview\tsuspect_mean\tsuspect_std\tclean_mean\tclean_std\n";
    for (const auto& r : runs) {
      for (const auto& rep : r.reports) {
        if (rep.detector == to_string(Detector::renyi)) continue;
        tsv += r.label + "\t" + rep.detector + "\t" + rep.view + "\t" + num(rep.suspect_accuracy.mean) + "\t" +
               num(rep.suspect_accuracy.std) + "\t" + num(rep.clean_accuracy.mean) + "\t" +
               num(rep.clean_accuracy.std) + "\n";
      }
    }
    emit("accuracy_table.tsv", tsv);
  }

  // Sweeps over frames per prompt and resolution, one row per run, detector, view and group.
  {
    std::vector<const LoadedRun*> order;
    for (const auto& r : runs) order.push_back(&r);
    auto sweep = [&](const std::string& key_name, auto key) {
      std::stable_sort(order.begin(), order.end(), [&](const LoadedRun* a, const LoadedRun* b) {
        return std::make_pair(a->config.backend_name, key(*a)) < std::make_pair(b->config.backend_name, key(*b));
      });
      std::string tsv = "backend\t" + key_name + "\tdetector\tview\tgroup\taccuracy_mean\taccuracy_std\tauc_mean\tauc_std\n";
      for (const auto* r : order) {
        for (const auto& rep : r->reports) {
          if (rep.detector == to_string(Detector::renyi)) continue;
          for (Group g : {Group::suspect, Group::clean}) {
            const auto& acc = g == Group::suspect ? rep.suspect_accuracy : rep.clean_accuracy;
            tsv += r->config.backend_name + "\t" + key(*r).second + "\t" + rep.detector + "\t" + rep.view + "\t" +
                   std::string(to_string(g)) + "\t" + num(acc.mean) + "\t" + num(acc.std) + "\t" +
                   num(rep.auc_mean) + "\t" + num(rep.auc_std) + "\n";
          }
        }
      }
      return tsv;
    };
    emit("sweep_frames_per_prompt.tsv", sweep("frames_per_prompt", [](const LoadedRun& r) {
           return std::make_pair(static_cast<double>(r.config.frames_per_prompt),
                                 std::to_string(r.config.frames_per_prompt));
         }));
    emit("sweep_resolution.tsv", sweep("resolution", [](const LoadedRun& r) {
           // Native resolution sorts last; explicit sizes sort by width.
           if (!r.config.resolution) return std::make_pair(1e18, std::string("native"));
           double rank = 0.0;
           if (const auto* p = std::get_if<PixelSize>(&*r.config.resolution)) {
             rank = p->width;
           } else {
             rank = 1e12 * std::get<double>(*r.config.resolution);
           }
           return std::make_pair(rank, to_string(*r.config.resolution));
         }));
  }

  // Covariate bins of weighted accuracy.
  for (Covariate cov : {Covariate::box_office, Covariate::imdb_rating}) {
    const auto edges = default_bin_edges(cov);
    std::string tsv = "backend\tdetector\tgroup\tbin_edge\tbin_upper\taccuracy\tcount\tmissing\n";
    for (const auto& r : runs) {
      for (Detector d : kRowOrder) {
        if (d == Detector::renyi || !r.config.wants(d)) continue;
        for (Group g : {Group::suspect, Group::clean}) {
          std::vector<CovariateSample> samples;
          for (const auto& m : r.movies) {
            if (m.group != g) continue;
            CovariateSample s;
            auto it = r.covariates.find(cell(m.title));
            if (it != r.covariates.end()) {
              s.value = cov == Covariate::box_office ? it->second.first : it->second.second;
            }
            s.accuracy = m.scores.at(d).acc_weighted;
            samples.push_back(s);
          }
          CovariateBinReport bins;
          try {
            bins = bin_by_covariate(samples, cov, edges);
          } catch (const Error& e) {
            if (e.code() == Errc::NoCovariateData) continue;
            throw;
          }
          for (std::size_t b = 0; b < bins.per_bin_counts.size(); ++b) {
            const auto& acc = bins.per_bin_accuracy[b];
            tsv += r.label + "\t" + std::string(to_string(d)) + "\t" + std::string(to_string(g)) + "\t" +
                   num(bins.bin_edges[b], 1) + "\t" + num(bins.bin_edges[b + 1], 1) + "\t" +
                   (acc ? num(*acc) : "NA") + "\t" + std::to_string(bins.per_bin_counts[b]) + "\t" +
                   std::to_string(bins.missing) + "\n";
          }
        }
      }
    }
    emit("covariate_" + std::string(to_string(cov)) + ".tsv", tsv);
  }
  return files;
}

// ---------------------------------------------------------------------------
// Caption and timing

CaptionResult cmd_caption(const fs::path& manifest_path, const fs::path& backend_config_path,
                          std::string_view backend_name, const fs::path& out_manifest,
                          std::optional<fs::path> cache_dir) {
  const fs::path in_abs = fs::weakly_canonical(fs::absolute(manifest_path));
  const fs::path out_abs = fs::weakly_canonical(fs::absolute(out_manifest));
  if (in_abs == out_abs) throw Error(Errc::InvalidParam, "refusing to overwrite the input manifest");

  auto corpus = std::make_shared<CorpusManifest>(load_manifest(manifest_path));
  const auto backends = load_backend_config(backend_config_path);
  auto backend = make_backend(backends, backend_name, corpus);
  if (!backend->descriptor().has(Capability::freeform)) {
    throw Error(Errc::CapabilityUnsupported, std::string(backend_name) + " cannot generate free-form text");
  }
  std::shared_ptr<ResponseCache> cache;
  if (cache_dir) cache = std::make_shared<ResponseCache>(*cache_dir);
  Gateway gateway(backend, cache);

  CorpusManifest updated = *corpus;
  CaptionResult result;
  for (auto& movie : updated.movies) {
    for (auto& frame : movie.frames) {
      if (!frame.caption.empty()) continue;
      const auto image = load_image(corpus->resolve(frame));
      const auto caption = generate_caption(gateway, image, {frame.frame_id});
      frame.caption = caption.text;
      frame.caption_provenance = CaptionProvenance::generated;
      ++result.generated;
      if (!caption.conforming) ++result.nonconforming;
    }
  }

  // Image paths stay relative, now to the output manifest's directory.
  const fs::path new_base = out_abs.parent_path();
  const fs::path old_base = fs::weakly_canonical(fs::absolute(corpus->base_dir));
  if (new_base != old_base) {
    for (auto& movie : updated.movies) {
      for (auto& frame : movie.frames) {
        if (frame.image_path.is_absolute()) continue;
        frame.image_path = (old_base / frame.image_path).lexically_normal().lexically_relative(new_base);
      }
    }
  }
  updated.base_dir = new_base;
  save_manifest(updated, out_manifest);

  ValidateOptions opts;
  opts.check_caption_prefix = true;
  result.validation = validate(updated, opts);
  return result;
}

std::vector<TimingRow> cmd_timing(const fs::path& run_dir) {
  const auto config = RunConfig::from_json(read_text(run_dir / "config.json"));
  const auto records = read_prediction_log(run_dir / "predictions.jsonl");
  std::vector<TimingRow> rows;
  for (Detector d : kRowOrder) {
    if (!config.wants(d)) continue;
    std::set<std::string> passes;
    switch (d) {
      case Detector::disco: passes = {"image"}; break;
      case Detector::captions: passes = {"caption"}; break;
      case Detector::floor_disco: passes = {"image", "caption"}; break;
      case Detector::mcqa: passes = {"mcqa"}; break;
      case Detector::renyi: passes = {"renyi"}; break;
    }
    TimingRow row;
    row.detector = d;
    std::set<std::string> movies;
    for (const auto& r : records) {
      if (!passes.contains(r.pass)) continue;
      row.total_ms += r.latency_ms;
      ++row.queries;
      movies.insert(r.movie);
    }
    row.movies = movies.size();
    row.per_movie_ms = row.movies ? static_cast<double>(row.total_ms) / static_cast<double>(row.movies) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

std::string format_timing(const std::vector<TimingRow>& rows) {
  std::string out = "detector\ttotal_ms\tqueries\tmovies\tper_movie_ms\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.detector)) + "\t" + std::to_string(r.total_ms) + "\t" +
           std::to_string(r.queries) + "\t" + std::to_string(r.movies) + "\t" + num(r.per_movie_ms, 1) + "\n";
  }
  return out;
}

}  // namespace frameprobe

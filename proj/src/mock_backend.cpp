#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "frameprobe/error.hpp"
#include "frameprobe/gateway.hpp"
#include "frameprobe/matcher.hpp"

namespace frameprobe {

namespace {

std::uint64_t digest_u64(std::string_view text) {
  const std::string hex = sha256_hex(text);
  std::uint64_t v = 0;
  for (int i = 0; i < 16; ++i) {
    const char c = hex[static_cast<std::size_t>(i)];
    v = (v << 4) | static_cast<std::uint64_t>(c <= '9' ? c - '0' : c - 'a' + 10);
  }
  return v;
}

std::string draw_material(std::uint64_t seed, QueryMode mode, const std::vector<std::string>& ids,
                          std::string_view salt) {
  std::string s = std::to_string(seed);
  s += '|';
  s += to_string(mode);
  s += '|';
  s += salt;
  for (const auto& id : ids) {
    s += '\x1f';
    s += id;
  }
  return s;
}

void check_probability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw Error(Errc::ProfileIncomplete, what + " must lie in [0, 1]");
  }
}

FrameKind kind_of(const Movie& truth, const std::vector<std::string>& ids) {
  if (!ids.empty()) {
    for (const auto& f : truth.frames) {
      if (f.frame_id == ids.front()) return f.kind;
    }
  }
  return FrameKind::main;
}

double image_recall(const MockProfile& p, const Movie& truth, FrameKind kind, QueryMode mode) {
  if (auto it = p.title_recall.find(truth.title); it != p.title_recall.end()) return it->second;
  auto it = p.recall.find({truth.group, kind, mode});
  if (it == p.recall.end()) {
    throw Error(Errc::ProfileIncomplete,
                "no recall for (" + std::string(to_string(truth.group)) + ", " +
                    std::string(to_string(kind)) + ", " + std::string(to_string(mode)) + ")");
  }
  return it->second;
}

std::string wrong_title(const MockProfile& p, const Movie& truth, QueryMode mode,
                        const std::vector<std::string>& ids) {
  std::vector<std::string> candidates;
  const std::string canon_truth = canonicalize(truth.title);
  for (const auto& genre : truth.genre_tags) {
    auto it = p.confusion_pool.find(genre);
    if (it == p.confusion_pool.end()) continue;
    for (const auto& t : it->second) {
      if (canonicalize(t) != canon_truth) candidates.push_back(t);
    }
  }
  if (candidates.empty()) {
    throw Error(Errc::ProfileIncomplete, "no confusion titles for the genres of '" + truth.title + "'");
  }
  const double u = mock_draw(p.seed, mode, ids, "confuse");
  return candidates[static_cast<std::size_t>(u * static_cast<double>(candidates.size()))];
}

/// Box-Muller on a 64-bit engine; std::normal_distribution is not portable.
double standard_normal(std::mt19937_64& rng) {
  constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
  const double u1 = (static_cast<double>(rng() >> 11) + 1.0) * scale;
  const double u2 = static_cast<double>(rng() >> 11) * scale;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::vector<TokenDistribution> mock_distributions(const MockProfile& p, const QueryRequest& req,
                                                  const Movie& truth) {
  auto it = p.logit_sharpness.find(truth.group);
  if (it == p.logit_sharpness.end()) {
    throw Error(Errc::ProfileIncomplete,
                "no logit_sharpness for group " + std::string(to_string(truth.group)));
  }
  const double sharpness = it->second;
  std::mt19937_64 rng(digest_u64(draw_material(p.seed, req.mode, req.frame_ids, "logits")));

  const int image_positions = p.image_positions_per_image * static_cast<int>(req.images.size());
  const int total = image_positions + p.text_positions;
  std::vector<TokenDistribution> out;
  out.reserve(static_cast<std::size_t>(total));
  for (int pos = 0; pos < total; ++pos) {
    std::vector<double> logits(static_cast<std::size_t>(p.vocab_size));
    for (auto& l : logits) l = sharpness * standard_normal(rng);
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (auto& l : logits) {
      l = std::exp(l - top);
      sum += l;
    }
    for (auto& l : logits) l /= sum;

    TokenDistribution d;
    d.segment = pos < image_positions ? TokenSegment::image : TokenSegment::text;
    if (p.top_k > 0 && p.top_k < p.vocab_size) {
      std::sort(logits.begin(), logits.end(), std::greater<>());
      logits.resize(static_cast<std::size_t>(p.top_k));
      d.partial = true;
    }
    d.probs = std::move(logits);
    out.push_back(std::move(d));
  }
  return out;
}

constexpr std::string_view kSceneSubjects[] = {
    "a quiet street at dusk",   "two people talking in a kitchen", "a wide mountain landscape",
    "a crowded market square",  "a dimly lit corridor",            "a car parked beside a river",
    "a child holding a lantern", "an empty theater stage",
};

}  // namespace

double mock_draw(std::uint64_t seed, QueryMode mode, const std::vector<std::string>& frame_ids,
                 std::string_view salt) {
  const std::uint64_t v = digest_u64(draw_material(seed, mode, frame_ids, salt));
  return static_cast<double>(v >> 11) * (1.0 / 9007199254740992.0);
}

void MockProfile::validate() const {
  for (const auto& [key, p] : recall) check_probability(p, "recall");
  for (const auto& [g, p] : caption_recall) check_probability(p, "caption_recall");
  for (const auto& [t, p] : title_recall) check_probability(p, "title_recall[" + t + "]");
  if (mcqa_fixed_answer && *mcqa_fixed_answer > 3) {
    throw Error(Errc::ProfileIncomplete, "mcqa_fixed_answer must be in 0..3");
  }
  if (vocab_size < 2) throw Error(Errc::ProfileIncomplete, "vocab_size must be >= 2");
  if (text_positions < 0 || image_positions_per_image < 0) {
    throw Error(Errc::ProfileIncomplete, "position counts must be non-negative");
  }
}

void MockProfile::check_covers(const CorpusManifest& manifest) const {
  for (const auto& m : manifest.movies) {
    for (const auto& g : m.genre_tags) {
      auto it = confusion_pool.find(g);
      if (it == confusion_pool.end() || it->second.empty()) {
        throw Error(Errc::ProfileIncomplete, "confusion_pool has no titles for genre '" + g + "'");
      }
    }
  }
}

QueryResponse mock_complete(const MockProfile& p, const QueryRequest& req, const Movie& truth) {
  QueryResponse out;
  const FrameKind kind = kind_of(truth, req.frame_ids);
  const double u = mock_draw(p.seed, req.mode, req.frame_ids);

  switch (req.mode) {
    case QueryMode::caption_generation: {
      const auto& subject = kSceneSubjects[static_cast<std::size_t>(u * std::size(kSceneSubjects))];
      out.raw_text = p.conforming_captions
                         ? std::string(kCaptionPrefix) + " " + std::string(subject) + "."
                         : "A scene showing " + std::string(subject) + ".";
      break;
    }
    case QueryMode::freeform_caption: {
      auto it = p.caption_recall.find(truth.group);
      if (it == p.caption_recall.end()) {
        throw Error(Errc::ProfileIncomplete,
                    "no caption_recall for group " + std::string(to_string(truth.group)));
      }
      out.raw_text = u < it->second ? truth.title : wrong_title(p, truth, req.mode, req.frame_ids);
      break;
    }
    case QueryMode::freeform_image: {
      const double recall = image_recall(p, truth, kind, req.mode);
      out.raw_text = u < recall ? truth.title : wrong_title(p, truth, req.mode, req.frame_ids);
      break;
    }
    case QueryMode::mcqa_image: {
      std::size_t answer = 0;
      if (p.mcqa_fixed_answer) {
        answer = *p.mcqa_fixed_answer;
      } else {
        const auto truth_at = std::find(req.options.begin(), req.options.end(), truth.title);
        const auto truth_index = static_cast<std::size_t>(truth_at - req.options.begin());
        if (u < image_recall(p, truth, kind, req.mode) && truth_at != req.options.end()) {
          answer = truth_index;
        } else {
          const double w = mock_draw(p.seed, req.mode, req.frame_ids, "mcqa_wrong");
          answer = static_cast<std::size_t>(w * 3.0);
          if (truth_at != req.options.end() && answer >= truth_index) ++answer;
        }
      }
      out.raw_text = std::string(1, static_cast<char>('A' + answer));
      break;
    }
  }

  if (req.want_distributions) out.token_distributions = mock_distributions(p, req, truth);
  out.latency_ms = p.latency_ms_per_image * static_cast<std::int64_t>(req.images.size()) +
                   p.latency_ms_per_text;
  return out;
}

MockBackend::MockBackend(BackendDescriptor descriptor, MockProfile profile,
                         std::shared_ptr<const CorpusManifest> corpus)
    : descriptor_(std::move(descriptor)), profile_(std::move(profile)), corpus_(std::move(corpus)) {
  descriptor_.validate();
  profile_.validate();
  if (corpus_) {
    for (const auto& m : corpus_->movies) {
      for (const auto& f : m.frames) by_frame_[f.frame_id] = &m;
    }
  }
}

QueryResponse MockBackend::send(const QueryRequest& request) {
  if (request.frame_ids.empty()) {
    throw Error(Errc::ProfileIncomplete, "mock backend needs frame ids to resolve ground truth");
  }
  auto it = by_frame_.find(request.frame_ids.front());
  if (it == by_frame_.end()) {
    throw Error(Errc::ProfileIncomplete, "unknown frame '" + request.frame_ids.front() + "'");
  }
  auto response = mock_complete(profile_, request, *it->second);
  response.backend_name = descriptor_.name;
  return response;
}

}  // namespace frameprobe

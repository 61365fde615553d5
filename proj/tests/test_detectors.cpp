#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "frameprobe/detectors.hpp"
#include "frameprobe/error.hpp"
#include "test_util.hpp"

using namespace frameprobe;
using testutil::MockWorld;

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

FramePrediction pred(const std::string& id, bool correct, FrameKind kind = FrameKind::main,
                     PredictionMode mode = PredictionMode::image) {
  FramePrediction p;
  p.frame_id = id;
  p.kind = kind;
  p.mode = mode;
  p.correct = correct;
  return p;
}

Movie titled(const std::string& title, const std::vector<std::string>& genres) {
  Movie m;
  m.title = title;
  m.genre_tags = genres;
  return m;
}

CorpusManifest one_movie(int n_main, int n_neutral, Group group = Group::suspect,
                         const std::string& genre = "drama") {
  CorpusManifest c;
  c.movies.push_back(testutil::movie("Silent Harbor", group, group == Group::suspect ? "2001-01-01" : "2024-02-02",
                                     n_main, n_neutral, "sh", {genre}));
  return c;
}

}  // namespace

TEST_SUITE("detectors") {
  TEST_CASE("free-form query counts follow frames per prompt") {
    MockWorld w(one_movie(0, 40), testutil::flat_profile(0.5));
    auto ctx = w.context();
    const auto& movie = w.corpus->movies[0];

    auto preds = run_freeform(ctx, movie, {FrameKind::neutral}, 1);
    CHECK(preds.size() == 40);
    CHECK(w.gateway->backend_calls() == 40);

    preds = run_freeform(ctx, movie, {FrameKind::neutral}, 4);
    CHECK(preds.size() == 40);
    CHECK(w.gateway->backend_calls() == 50);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      CHECK(preds[i].group_frame_ids.size() == 4);
      CHECK(preds[i].correct == preds[i - i % 4].correct);
      CHECK(preds[i].group_frame_ids == preds[i - i % 4].group_frame_ids);
    }
  }

  TEST_CASE("multi-frame prompts need a multi-image backend") {
    auto single = synthetic_descriptor("single", 1);
    single.capabilities = {Capability::freeform};
    MockWorld w(one_movie(0, 4), testutil::flat_profile(0.5), single);
    auto ctx = w.context();
    CHECK(code_of([&] { run_freeform(ctx, w.corpus->movies[0], kAllKinds, 2); }) == Errc::CapabilityUnsupported);
    CHECK(w.gateway->backend_calls() == 0);
  }

  TEST_CASE("group_frames keeps main before neutral") {
    const auto m = testutil::movie("Order Test", Group::suspect, "2000-01-01", 3, 2, "ot");
    const auto groups = group_frames(m, kAllKinds, 2);
    REQUIRE(groups.size() == 3);
    CHECK(groups[0].size() == 2);
    CHECK(groups[1].size() == 1);
    CHECK(groups[1][0]->frame_id == "ot-m2");
    CHECK(groups[2][0]->kind == FrameKind::neutral);
    CHECK(group_frames(m, {FrameKind::main}, 1).size() == 3);
  }

  TEST_CASE("caption baseline") {
    MockWorld w(one_movie(100, 40), testutil::flat_profile(0.5, 0.0));
    auto ctx = w.context();
    const auto preds = run_captions(ctx, w.corpus->movies[0], kAllKinds);
    CHECK(preds.size() == 140);
    CHECK(std::none_of(preds.begin(), preds.end(), [](const auto& p) { return p.correct; }));
    CHECK(std::all_of(preds.begin(), preds.end(), [](const auto& p) { return p.mode == PredictionMode::caption; }));

    auto missing = one_movie(2, 0);
    missing.movies[0].frames[1].caption.clear();
    MockWorld w2(missing, testutil::flat_profile(0.5, 1.0));
    auto ctx2 = w2.context();
    CHECK(code_of([&] { run_captions(ctx2, w2.corpus->movies[0], kAllKinds); }) == Errc::MissingCaption);
    CHECK(w2.gateway->backend_calls() == 0);
  }

  TEST_CASE("distractors share a genre and never repeat the truth") {
    std::vector<Movie> pool;
    for (int i = 0; i < 10; ++i) pool.push_back(titled("Animated " + std::to_string(i), {"animation"}));
    for (int i = 0; i < 10; ++i) pool.push_back(titled("Horror " + std::to_string(i), {"horror"}));
    const Movie truth = titled("Frozen", {"animation", "musical"});
    pool.push_back(truth);
    pool.push_back(titled("frozen!", {"animation"}));

    const auto d = build_distractors(truth, pool, 1);
    for (const auto& t : d) CHECK(t.rfind("Animated", 0) == 0);
    CHECK(std::set<std::string>(d.begin(), d.end()).size() == 3);

    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
      for (const auto& t : build_distractors(truth, pool, seed)) {
        REQUIRE(canonicalize(t) != canonicalize(truth.title));
      }
    }
    CHECK(build_distractors(truth, pool, 5) == build_distractors(truth, pool, 5));
  }

  TEST_CASE("distractor pool boundaries") {
    const Movie truth = titled("Moana", {"animation"});
    std::vector<Movie> three = {titled("Encanto", {"animation"}), titled("Tangled", {"animation"}),
                                titled("Coco", {"animation"}), titled("Saw", {"horror"})};
    const auto d = build_distractors(truth, three, 3);
    CHECK(std::set<std::string>(d.begin(), d.end()) == std::set<std::string>{"Encanto", "Tangled", "Coco"});

    three.pop_back();
    three.pop_back();
    CHECK(code_of([&] { build_distractors(truth, three, 3); }) == Errc::InsufficientPool);
  }

  TEST_CASE("placement parsing and uniformity") {
    CHECK(parse_placement("fixed:A").index == 0);
    CHECK(parse_placement("fixed:3").index == 3);
    CHECK(parse_placement("random").kind == Placement::Kind::randomized);
    CHECK(code_of([] { parse_placement("fixed:E"); }) == Errc::InvalidParam);
    CHECK(truth_position(Placement::fixed(2), 9, "x") == 2);

    std::array<int, 4> counts{};
    const int n = 8000;
    for (int seed = 0; seed < 8; ++seed) {
      for (int i = 0; i < n / 8; ++i) counts[truth_position(Placement::randomized(), seed, "f" + std::to_string(i))]++;
    }
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - n / 4.0) * (c - n / 4.0) / (n / 4.0);
    // 99.9th percentile of chi-square with 3 degrees of freedom.
    CHECK(chi2 < 16.266);
  }

  TEST_CASE("mcqa with perfect recall at a fixed slot") {
    CorpusManifest c;
    for (int i = 0; i < 4; ++i) {
      c.movies.push_back(testutil::movie("Picture " + std::string(1, static_cast<char>('A' + i)), Group::suspect,
                                         "2001-01-01", 5, 5, "p" + std::to_string(i), {"drama"}));
    }
    MockWorld w(c, testutil::flat_profile(1.0));
    auto ctx = w.context();
    const auto preds = run_mcqa(ctx, w.corpus->movies[0], kAllKinds, w.corpus->movies, Placement::fixed(0), 3);
    CHECK(accuracy_score(preds, Detector::mcqa).acc_weighted == 1.0);
    for (const auto& p : preds) {
      const auto& o = std::get<McqaOutcome>(p.match);
      CHECK(o.truth_index == 0);
      CHECK(o.options[0] == "Picture A");
    }
  }

  TEST_CASE("disco score arithmetic") {
    std::vector<FramePrediction> preds;
    for (int i = 0; i < 10; ++i) preds.push_back(pred("f" + std::to_string(i), i < 3));
    CHECK(disco_score(preds).acc_weighted == doctest::Approx(0.3));
    for (auto& p : preds) p.correct = true;
    CHECK(disco_score(preds).acc_weighted == 1.0);

    preds.clear();
    for (int i = 0; i < 100; ++i) preds.push_back(pred("m" + std::to_string(i), i < 50, FrameKind::main));
    for (int i = 0; i < 40; ++i) preds.push_back(pred("n" + std::to_string(i), i < 8, FrameKind::neutral));
    const auto s = disco_score(preds);
    CHECK(s.acc_main == 0.5);
    CHECK(s.acc_neutral == doctest::Approx(0.2));
    CHECK(s.acc_weighted == doctest::Approx(58.0 / 140.0));

    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
      std::shuffle(preds.begin(), preds.end(), rng);
      const auto again = disco_score(preds);
      CHECK(again.acc_weighted == s.acc_weighted);
      CHECK(again.acc_main == s.acc_main);
    }
    CHECK(code_of([] { disco_score(std::vector<FramePrediction>{}); }) == Errc::EmptyInput);
  }

  TEST_CASE("floor disco set arithmetic") {
    std::vector<FramePrediction> image, caption;
    for (int i = 1; i <= 10; ++i) {
      const std::string id = "f" + std::to_string(i);
      image.push_back(pred(id, i <= 3));
      caption.push_back(pred(id, i == 2, FrameKind::main, PredictionMode::caption));
    }
    CHECK(disco_score(image).acc_weighted == doctest::Approx(0.3));
    CHECK(floor_disco(image, caption).acc_weighted == doctest::Approx(0.2));
    const auto surviving = floor_disco(image, caption, FloorDenominator::surviving);
    CHECK(surviving.acc_weighted == doctest::Approx(2.0 / 9.0));

    for (auto& p : caption) p.correct = false;
    CHECK(floor_disco(image, caption).acc_weighted == disco_score(image).acc_weighted);
    for (auto& p : caption) p.correct = true;
    CHECK(floor_disco(image, caption).acc_weighted == 0.0);

    caption.pop_back();
    CHECK(code_of([&] { floor_disco(image, caption); }) == Errc::KeyMismatch);
  }

  TEST_CASE("floor never exceeds disco") {
    std::mt19937_64 rng(12);
    for (int t = 0; t < 500; ++t) {
      std::vector<FramePrediction> image, caption;
      const int n = 1 + static_cast<int>(rng() % 30);
      for (int i = 0; i < n; ++i) {
        const auto kind = rng() % 3 == 0 ? FrameKind::neutral : FrameKind::main;
        image.push_back(pred("f" + std::to_string(i), rng() % 2, kind));
        caption.push_back(pred("f" + std::to_string(i), rng() % 3 == 0, kind, PredictionMode::caption));
      }
      const auto d = disco_score(image);
      for (auto mode : {FloorDenominator::all_frames, FloorDenominator::surviving}) {
        const auto f = floor_disco(image, caption, mode);
        CHECK(f.acc_weighted <= d.acc_weighted + 1e-15);
        CHECK(f.acc_main <= d.acc_main + 1e-15);
        CHECK(f.acc_neutral <= d.acc_neutral + 1e-15);
      }
    }
  }

  TEST_CASE("weighted accuracy lies between the per-kind values") {
    for (std::size_t nm = 0; nm <= 6; ++nm) {
      for (std::size_t nn = 0; nn <= 6; ++nn) {
        if (nm + nn == 0) continue;
        for (std::size_t cm = 0; cm <= nm; ++cm) {
          for (std::size_t cn = 0; cn <= nn; ++cn) {
            const auto s = make_accuracy_score("x", Detector::disco, cm, nm, cn, nn);
            CHECK(s.acc_weighted * static_cast<double>(nm + nn) ==
                  doctest::Approx(static_cast<double>(nm) * s.acc_main + static_cast<double>(nn) * s.acc_neutral));
            if (nm && nn) {
              CHECK(s.acc_weighted >= std::min(s.acc_main, s.acc_neutral) - 1e-15);
              CHECK(s.acc_weighted <= std::max(s.acc_main, s.acc_neutral) + 1e-15);
            }
          }
        }
      }
    }
  }

  TEST_CASE("renyi entropy examples") {
    CHECK(renyi_entropy(std::vector{0.25, 0.25, 0.25, 0.25}, 0.5) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    CHECK(renyi_entropy(std::vector{1.0, 0.0, 0.0}, 0.5) == 0.0);
    const double expected = 2.0 * std::log(std::sqrt(0.5) + 2.0 * std::sqrt(0.25));
    CHECK(renyi_entropy(std::vector{0.5, 0.25, 0.25}, 0.5) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(std::abs(expected - 1.0695999934791407) < 1e-12);
    CHECK(code_of([] { renyi_entropy(std::vector{0.5, 0.4}, 0.5); }) == Errc::InvalidDistribution);
    CHECK(code_of([] { renyi_entropy(std::vector{1.0}, 0.0); }) == Errc::InvalidAlpha);
    CHECK(code_of([] { renyi_entropy(std::vector<double>{}, 2.0); }) == Errc::InvalidDistribution);
  }

  TEST_CASE("renyi entropy bounds and permutation invariance") {
    std::mt19937_64 rng(21);
    std::exponential_distribution<double> expo;
    for (int t = 0; t < 1000; ++t) {
      const std::size_t n = 1 + rng() % 40;
      std::vector<double> p(n);
      for (auto& v : p) v = expo(rng);
      const double total = std::accumulate(p.begin(), p.end(), 0.0);
      for (auto& v : p) v /= total;
      for (double alpha : {0.3, 0.5, 0.9, 2.0, 5.0}) {
        const double h = renyi_entropy(p, alpha);
        CHECK(h >= -1e-12);
        CHECK(h <= std::log(static_cast<double>(n)) + 1e-12);
        auto q = p;
        std::shuffle(q.begin(), q.end(), rng);
        CHECK(renyi_entropy(q, alpha) == doctest::Approx(h).epsilon(1e-12));
      }
      const std::vector<double> uniform(n, 1.0 / static_cast<double>(n));
      CHECK(std::abs(renyi_entropy(uniform, 0.5) - std::log(static_cast<double>(n))) < 1e-12);
    }
  }

  TEST_CASE("max_renyi_k aggregation") {
    const std::vector<double> e = {3, 1, 2};
    CHECK(max_renyi_k(e, 100, Aggregate::max_aggregate) == 2.0);
    CHECK(max_renyi_k(e, 33, Aggregate::max_aggregate) == 3.0);
    CHECK(max_renyi_k(e, 33, Aggregate::min_aggregate) == 1.0);
    for (double k : {5.0, 33.0, 50.0, 100.0}) CHECK(max_renyi_k(std::vector(7, 1.25), k, Aggregate::max_aggregate) == 1.25);

    std::mt19937_64 rng(6);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> v(1 + rng() % 50);
      for (auto& x : v) x = static_cast<double>(rng() % 1000) / 100.0;
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      CHECK(max_renyi_k(v, 100, Aggregate::max_aggregate) == doctest::Approx(mean).epsilon(1e-12));
      CHECK(max_renyi_k(v, 100, Aggregate::min_aggregate) == doctest::Approx(mean).epsilon(1e-12));
    }
    CHECK(code_of([&] { max_renyi_k(e, 0, Aggregate::max_aggregate); }) == Errc::InvalidParam);
  }

  TEST_CASE("renyi separates sharper suspect streams") {
    CorpusManifest c;
    c.movies.push_back(testutil::movie("Known Film", Group::suspect, "2001-01-01", 6, 4, "kf"));
    c.movies.push_back(testutil::movie("Fresh Film", Group::clean, "2024-05-01", 6, 4, "ff"));
    MockRecall r;
    r.suspect_sharpness = 6.0;
    r.clean_sharpness = 1.0;
    MockWorld w(c, synthetic_profile({"drama"}, r, 4));
    auto ctx = w.context();
    const RenyiConfig config;
    const auto suspect = run_renyi(ctx, w.corpus->movies[0], config);
    const auto clean = run_renyi(ctx, w.corpus->movies[1], config);
    CHECK(*suspect.renyi_score > *clean.renyi_score);
    for (std::size_t k = 0; k < config.k_percent_grid.size(); ++k) CHECK(suspect.renyi->all[k] > clean.renyi->all[k]);
  }

  TEST_CASE("single frame, single position gives the negated entropy") {
    auto profile = testutil::flat_profile(0.5);
    profile.image_positions_per_image = 0;
    profile.text_positions = 1;
    MockWorld w(one_movie(1, 0), profile);
    auto ctx = w.context();
    const auto score = run_renyi(ctx, w.corpus->movies[0], RenyiConfig{});

    QueryRequest req;
    req.mode = QueryMode::freeform_image;
    req.images = {load_frame_image(ctx, w.corpus->movies[0].frames[0])};
    req.frame_ids = {"sh-m0"};
    const auto stream = w.gateway->logit_stream(req);
    REQUIRE(stream.size() == 1);
    const double h = renyi_entropy(stream[0].probs, 0.5);
    for (double s : score.renyi->all) CHECK(s == doctest::Approx(-h).epsilon(1e-14));
  }

  TEST_CASE("partial vectors are refused unless accepted") {
    auto profile = testutil::flat_profile(0.5);
    profile.top_k = 5;
    MockWorld w(one_movie(2, 0), profile);
    auto ctx = w.context();
    RenyiConfig config;
    CHECK(code_of([&] { run_renyi(ctx, w.corpus->movies[0], config); }) == Errc::PartialVectorsRejected);
    config.accept_partial_vectors = true;
    CHECK(run_renyi(ctx, w.corpus->movies[0], config).renyi_score.has_value());
  }

  TEST_CASE("renyi needs the logits capability and a valid config") {
    auto text_only = synthetic_descriptor("text", 1);
    text_only.capabilities = {Capability::freeform};
    MockWorld w(one_movie(1, 0), testutil::flat_profile(0.5), text_only);
    auto ctx = w.context();
    CHECK(code_of([&] { run_renyi(ctx, w.corpus->movies[0], RenyiConfig{}); }) == Errc::CapabilityUnsupported);
    RenyiConfig bad;
    bad.k_percent_grid = {0.0};
    CHECK(code_of([&] { bad.validate(); }) == Errc::InvalidParam);
    bad = RenyiConfig{};
    bad.alpha = -1;
    CHECK(code_of([&] { bad.validate(); }) == Errc::InvalidAlpha);
  }
}

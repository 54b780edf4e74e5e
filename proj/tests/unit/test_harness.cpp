#include <doctest.h>

#include <cmath>
#include <regex>
#include <set>

#include "lipres/error.hpp"
#include "lipres/harness.hpp"
#include "lipres/log.hpp"
#include "test_util.hpp"

using namespace lipres;

namespace {

ScoreRow row(int fold, int h, const std::string& net, const std::string& feat, double A, int N = 10, int S = 0,
             int D = 0, int I = 0) {
  ScoreRow r;
  r.fold = fold;
  r.resolution_w = h * 4 / 3;
  r.resolution_h = h;
  r.lip_height_px = 26.0 * h / 1080.0;
  r.network = net;
  r.feature = feat;
  r.N = N;
  r.S = S;
  r.D = D;
  r.I = I;
  r.H = N - S - D;
  r.A = A;
  r.C = A + 0.05;
  return r;
}

// A corpus small enough to run the whole pipeline in a unit test.
CorpusConfig tiny_corpus() {
  CorpusConfig c;
  c.n_lines = 8;
  c.words_per_line = {1, 2};
  c.vocabulary = {"raven", "door", "bird", "soul", "thee"};
  c.min_viseme_count = 0;
  c.n_key_frames = 6;
  return c;
}

ExperimentConfig tiny_experiment() {
  ExperimentConfig e;
  e.synth = tiny_corpus();
  e.folds = 2;
  e.test_lines = 3;
  e.resolutions = {{1440, 1080}, {360, 270}, {90, 67}};
  e.hmm.emitting_states = 3;
  e.hmm.mixtures = 1;
  e.schedule = {2, 1, 1};
  return e;
}

}  // namespace

TEST_CASE("make_folds draws 42 of 108 lines per fold, reproducibly") {
  const auto a = make_folds(108, 42, 5, 42);
  const auto b = make_folds(108, 42, 5, 42);
  CHECK(a == b);
  REQUIRE(a.size() == 5);
  for (const auto& f : a) {
    CHECK(f.test_lines.size() == 42);
    CHECK(f.train_lines.size() == 66);
    std::set<int> all(f.test_lines.begin(), f.test_lines.end());
    all.insert(f.train_lines.begin(), f.train_lines.end());
    CHECK(all.size() == 108);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == 107);
  }
  // Independent draws, not a partition.
  CHECK(a[0].test_lines != a[1].test_lines);
  CHECK(make_folds(108, 42, 5, 43) != a);
  CHECK_THROWS_AS(make_folds(108, 108, 5, 1), Error);
  CHECK_THROWS_AS(make_folds(108, 0, 5, 1), Error);
  CHECK_THROWS_AS(make_folds(108, 42, 0, 1), Error);
}

TEST_CASE("summarize: mean and standard error over folds") {
  const auto s = summarize({row(0, 1080, "bwn", "combined", 0.2), row(1, 1080, "bwn", "combined", 0.4)});
  REQUIRE(s.rows.size() == 1);
  CHECK(s.rows[0].mean_A == doctest::Approx(0.3));
  // sample std 0.1414..., divided by sqrt(2)
  CHECK(s.rows[0].stderr_A == doctest::Approx(0.1));
  CHECK(s.rows[0].mean_C == doctest::Approx(0.35));
  CHECK(s.rows[0].folds == 2);
  CHECK_THROWS_WITH_AS(summarize({row(0, 1080, "bwn", "combined", 0.2)}), doctest::Contains("single fold"), Error);
  CHECK_THROWS_AS(summarize({}), Error);
  CHECK_THROWS_AS(summarize({row(0, 1080, "bwn", "shape", 0.2), row(0, 1080, "bwn", "shape", 0.3)}), Error);
}

TEST_CASE("summarize: rows ordered by lip height, error rates split at 4 px") {
  std::vector<ScoreRow> rows;
  for (int f = 0; f < 2; ++f) {
    rows.push_back(row(f, 135, "uwn", "shape", 0.1, 10, 2, 1, 3));  // 3.25 px
    rows.push_back(row(f, 1080, "uwn", "shape", 0.5, 10, 1, 0, 1));  // 26 px
    rows.push_back(row(f, 270, "uwn", "shape", 0.4, 20, 2, 2, 0));   // 6.5 px
  }
  const auto s = summarize(rows);
  REQUIRE(s.rows.size() == 3);
  CHECK(s.rows[0].resolution_h == 1080);
  CHECK(s.rows[1].resolution_h == 270);
  CHECK(s.rows[2].resolution_h == 135);
  REQUIRE(s.errors.size() == 2);
  const auto& above = s.errors[0].band == "at_or_above_4px" ? s.errors[0] : s.errors[1];
  const auto& below = s.errors[0].band == "below_4px" ? s.errors[0] : s.errors[1];
  CHECK(above.cells == 4);
  // (1/10 + 2/20) / 2 substitution rate, (1/10 + 0) / 2 insertions
  CHECK(above.substitutions == doctest::Approx(0.1));
  CHECK(above.insertions == doctest::Approx(0.05));
  CHECK(above.deletions == doctest::Approx(0.05));
  CHECK(below.cells == 2);
  CHECK(below.insertions == doctest::Approx(0.3));
  CHECK(below.deletions == doctest::Approx(0.1));
}

TEST_CASE("emit_outputs: CSV round trip and one SVG point per resolution") {
  std::vector<ScoreRow> rows;
  const auto ladder = resolution_ladder();
  for (int f = 0; f < 2; ++f)
    for (const auto& r : ladder)
      for (const char* net : {"uwn", "bwn"}) {
        ScoreRow x = row(f, r.height, net, "appearance", 0.1 * f + r.height / 2000.0, 17, 3, 1, 2);
        x.resolution_w = r.width;
        x.lip_height_px = 26.0 * r.height / 1080.0 + 1.0 / 3.0;
        rows.push_back(x);
      }
  TempDir dir;
  emit_outputs(rows, dir.path);
  CHECK(parse_results_csv(read_text_file(dir.path / "results.csv")) == rows);
  const std::string svg = read_text_file(dir.path / "accuracy_vs_lipheight.svg");
  const std::regex group("<g class=\"series\"[^>]*>([^]*?)</g>");
  int series = 0;
  for (auto it = std::sregex_iterator(svg.begin(), svg.end(), group); it != std::sregex_iterator(); ++it) {
    ++series;
    const std::string body = (*it)[1];
    int points = 0, bars = 0;
    for (std::size_t p = body.find("class=\"point\""); p != std::string::npos; p = body.find("class=\"point\"", p + 1))
      ++points;
    for (std::size_t p = body.find("class=\"errorbar\""); p != std::string::npos;
         p = body.find("class=\"errorbar\"", p + 1))
      ++bars;
    CHECK(points == 18);
    CHECK(bars == 18);
  }
  CHECK(series == 2);
  CHECK(std::filesystem::exists(dir.path / "summary.csv"));
  CHECK(std::filesystem::exists(dir.path / "error_split.csv"));
  CHECK_THROWS_AS(emit_outputs({}, dir.path), Error);
}

TEST_CASE("experiment config parsing") {
  const auto c = parse_experiment_config(
      "# comment\nfolds = 3\nresolutions = 1440x1080, 90x67\nnetworks = bwn\nfeatures = shape combined\n"
      "schedule = 3 2 1\nhtk_costs = true\ncorpus.seed = 9\ncorpus.n_lines = 50\n");
  CHECK(c.folds == 3);
  CHECK(c.resolutions == std::vector<Resolution>{{1440, 1080}, {90, 67}});
  CHECK(c.networks == std::vector<std::string>{"bwn"});
  CHECK(c.features == std::vector<FeatureSet>{FeatureSet::shape, FeatureSet::combined});
  CHECK(c.schedule.initial == 3);
  CHECK(c.schedule.after_alignment == 1);
  CHECK(c.htk_costs);
  CHECK(c.synth.seed == 9);
  CHECK(c.synth.n_lines == 50);
  CHECK(parse_experiment_config("resolutions = ladder\n").resolutions.size() == 18);
  CHECK(parse_experiment_config("resolutions = default\n").resolutions == default_sweep_resolutions());
  CHECK(format_experiment_config(parse_experiment_config(format_experiment_config(c))) ==
        format_experiment_config(c));
  CHECK_THROWS_WITH_AS(parse_experiment_config("folds = 2\nfoo = 1\n"), doctest::Contains("line 2"), Error);
  CHECK_THROWS_AS(parse_experiment_config("folds = two\n"), Error);
  CHECK_THROWS_AS(parse_experiment_config("networks = trigram\n"), Error);
}

TEST_CASE("default sweep spans 26 px down to about 1.6 px") {
  const auto r = default_sweep_resolutions();
  CHECK(r.size() == 8);
  const Shape rest = synthetic_corpus_data(CorpusConfig{}).key_shapes.front();
  const auto lips = MouthModel::lip_indices();
  const double top = resting_lip_height(rest, lips, {1440, 1080}, r.front());
  const double bottom = resting_lip_height(rest, lips, {1440, 1080}, r.back());
  CHECK(top > 24.0);
  CHECK(bottom < 2.0);
  CHECK(bottom > 1.2);
}

TEST_CASE("a corpus directory loads as the corpus that wrote it") {
  TempDir dir;
  const CorpusConfig cfg = tiny_corpus();
  generate_corpus(cfg, dir.path);
  const CorpusData disk = load_corpus(dir.path);
  const CorpusData mem = synthetic_corpus_data(cfg);
  CHECK(disk.native == mem.native);
  CHECK(disk.frame_rate == mem.frame_rate);
  CHECK(disk.n_frames == mem.n_frames);
  CHECK(disk.line_start == mem.line_start);
  CHECK(disk.line_length == mem.line_length);
  CHECK(disk.key_frames == mem.key_frames);
  CHECK(disk.lip_indices == mem.lip_indices);
  CHECK(disk.vocabulary() == mem.vocabulary());
  for (std::size_t i = 0; i < disk.words.size(); ++i) CHECK(disk.words[i] == mem.words[i]);
  for (int f : {0, disk.n_frames / 2, disk.n_frames - 1}) {
    const Frame a = disk.frame(f), b = mem.frame(f);
    CHECK(a.window == b.window);
    CHECK(a.x0 == b.x0);
    CHECK(a.y0 == b.y0);
    CHECK(a.background == b.background);
  }
  for (std::size_t k = 0; k < disk.key_shapes.size(); ++k)
    for (std::size_t i = 0; i < disk.key_shapes[k].size(); ++i)
      CHECK(disk.key_shapes[k].points[i].x == doctest::Approx(mem.key_shapes[k].points[i].x).epsilon(1e-9));
}

TEST_CASE("fits file round trip") {
  TempDir dir;
  const std::vector<Shape> fits{Shape{{{1.25, 2.0}, {3.0, 1.0 / 3.0}}}, Shape{{{0.1, 0.2}, {0.3, 0.4}}}};
  write_fits(dir.path / "fits.txt", fits);
  CHECK(read_fits(dir.path / "fits.txt") == fits);
}

TEST_CASE("run_experiment: one row per cell, shape rows resolution-invariant") {
  const ExperimentConfig cfg = tiny_experiment();
  const SweepResult r = run_experiment(cfg);
  CHECK(r.errors.empty());
  // 2 folds x 3 resolutions x 2 networks x 3 feature sets
  REQUIRE(r.rows.size() == 36);
  std::set<std::tuple<int, int, std::string, std::string>> cells;
  for (const auto& row : r.rows) cells.insert({row.fold, row.resolution_h, row.network, row.feature});
  CHECK(cells.size() == 36);
  CHECK(r.rows.front().fold == 0);
  CHECK(r.rows.front().resolution_h == 1080);
  CHECK(r.rows.back().fold == 1);
  CHECK(r.rows.back().resolution_h == 67);
  for (const auto& a : r.rows)
    for (const auto& b : r.rows)
      if (a.feature == "shape" && b.feature == "shape" && a.fold == b.fold && a.network == b.network) {
        CHECK(a.A == b.A);
        CHECK(a.N == b.N);
        CHECK(a.S == b.S);
        CHECK(a.I == b.I);
      }
  for (const auto& row : r.rows) {
    CHECK(row.N > 0);
    CHECK(row.H + row.S + row.D == row.N);
  }
  // A second run is identical.
  CHECK(format_results_csv(run_experiment(cfg).rows) == format_results_csv(r.rows));
}

TEST_CASE("run_experiment reports failing cells and carries on") {
  ExperimentConfig cfg = tiny_experiment();
  cfg.resolutions = {{1440, 1080}};
  cfg.features = {FeatureSet::shape};
  cfg.hmm.mixtures = 0;  // training cannot start
  std::vector<std::string> warnings;
  const auto old = set_warning_sink([&](const std::string& m) { warnings.push_back(m); });
  const SweepResult r = run_experiment(cfg);
  set_warning_sink(old);
  CHECK(r.rows.empty());
  REQUIRE(r.errors.size() == 2);
  CHECK(r.errors[0].fold == 0);
  CHECK(r.errors[1].fold == 1);
  CHECK(r.errors[0].stage == "train shape");
  REQUIRE(warnings.size() == 2);
  CHECK(warnings[0].find("fold 0, resolution 1440x1080, stage train shape") != std::string::npos);
  cfg.fail_fast = true;
  CHECK_THROWS_WITH_AS(run_experiment(cfg), doctest::Contains("fold 0"), Error);
}

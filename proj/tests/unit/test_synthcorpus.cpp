#include <doctest.h>

#include <cmath>
#include <set>

#include "lipres/error.hpp"
#include "lipres/synthcorpus.hpp"
#include "test_util.hpp"

using namespace lipres;

namespace {

FrameState pure(const std::string& label) {
  FrameState s;
  s.blend = {{label, 1.0}};
  return s;
}

CorpusConfig small_config() {
  CorpusConfig c;
  c.n_lines = 3;
  c.min_viseme_count = 0;
  c.native_resolution = {360, 270};
  c.lip_height_rest = 13.0;
  c.n_key_frames = 4;
  return c;
}

}  // namespace

TEST_CASE("same seed, same corpus; other seed, other corpus") {
  CorpusConfig cfg;
  const SyntheticCorpus a(cfg), b(cfg);
  REQUIRE(a.n_frames() == b.n_frames());
  CHECK(a.key_frames() == b.key_frames());
  for (std::size_t i = 0; i < a.lines().size(); ++i) {
    CHECK(a.lines()[i].words == b.lines()[i].words);
    CHECK(a.lines()[i].segments.labels == b.lines()[i].segments.labels);
  }
  for (int f : {0, 17, a.n_frames() / 2, a.n_frames() - 1}) {
    const auto ra = a.render(f), rb = b.render(f);
    CHECK(ra.frame.window == rb.frame.window);
    CHECK(ra.frame.x0 == rb.frame.x0);
    CHECK(ra.shape == rb.shape);
  }
  cfg.seed = 43;
  const SyntheticCorpus c(cfg);
  bool differs = c.n_frames() != a.n_frames();
  for (std::size_t i = 0; i < a.lines().size() && !differs; ++i) differs = a.lines()[i].words != c.lines()[i].words;
  CHECK(differs);
}

TEST_CASE("default corpus: 108 lines, every viseme at least 20 times") {
  const SyntheticCorpus c{CorpusConfig{}};
  CHECK(c.lines().size() == 108);
  const auto counts = c.viseme_counts();
  for (const auto& v : viseme_labels()) {
    CAPTURE(v);
    REQUIRE(counts.count(v) == 1);
    CHECK(counts.at(v) >= 20);
  }
  // Segments tile each line and match the per-frame labels.
  int next = 0;
  for (const auto& lt : c.lines()) {
    CHECK(lt.first_frame == next);
    CHECK(lt.visemes.tokens.front() == kSil);
    CHECK(lt.visemes.tokens.back() == kSil);
    CHECK(lt.segments.untimed().tokens == lt.visemes.tokens);
    int t = 0;
    for (const auto& s : lt.segments.labels) {
      CHECK(s.start == t);
      CHECK(s.end > s.start);
      for (int f = s.start; f < s.end; ++f) CHECK(c.label(lt.first_frame + f) == s.label);
      t = s.end;
    }
    CHECK(t == lt.n_frames);
    next += lt.n_frames;
  }
  CHECK(next == c.n_frames());
  CHECK(c.key_frames().size() == 11);
  CHECK(c.key_frames().front() == 0);
  CHECK(std::set<int>(c.key_frames().begin(), c.key_frames().end()).size() == 11);
}

TEST_CASE("a pure viseme frame is its prototype") {
  CorpusConfig cfg;
  cfg.texture_noise_std = 0.0;
  cfg.pattern_amplitude = 0.0;
  const MouthModel m(cfg);
  const Shape rest = m.shape(pure(kSil));
  REQUIRE(rest.size() == 20);
  // Lip extent at rest is the configured height.
  CHECK(resting_lip_height(rest, MouthModel::lip_indices(), cfg.native_resolution, cfg.native_resolution) ==
        doctest::Approx(26.0).epsilon(0.02));
  // Outer corners sit on the anchor's horizontal, symmetric about it.
  CHECK(rest.points[0].y == doctest::Approx(m.anchor().y));
  CHECK(rest.points[6].y == doctest::Approx(m.anchor().y));
  CHECK(rest.points[0].x - m.anchor().x == doctest::Approx(m.anchor().x - rest.points[6].x));

  const auto r = m.render(pure("v12"));
  const auto& p = m.prototype("v12");
  // Midway between the outer top and the inner top lies on the lip; with no
  // texture pattern and no noise it shows the lip tone exactly.
  const Shape s = r.shape;
  const Point q{0.5 * (s.points[3].x + s.points[14].x), 0.5 * (s.points[3].y + s.points[14].y)};
  CHECK(r.frame.view().at(static_cast<int>(std::lround(q.x)), static_cast<int>(std::lround(q.y))) ==
        quantize8(p.lip_tone));
  // Far from the mouth: skin.
  CHECK(r.frame.view().at(5, 5) == r.frame.background);
  CHECK(r.frame.view().at(r.frame.x0, r.frame.y0) == r.frame.background);
}

TEST_CASE("a 50/50 blend has midpoint landmarks") {
  const MouthModel m{CorpusConfig{}};
  for (const auto& [a, b] : std::vector<std::pair<std::string, std::string>>{{"v01", "v12"}, {"v09", "v16"}}) {
    FrameState mid;
    mid.blend = {{a, 0.5}, {b, 0.5}};
    const Shape sa = m.shape(pure(a)), sb = m.shape(pure(b)), sm = m.shape(mid);
    for (std::size_t i = 0; i < sm.size(); ++i) {
      CHECK(sm.points[i].x == doctest::Approx(0.5 * (sa.points[i].x + sb.points[i].x)).epsilon(1e-12));
      CHECK(sm.points[i].y == doctest::Approx(0.5 * (sa.points[i].y + sb.points[i].y)).epsilon(1e-12));
    }
  }
  FrameState bad;
  bad.blend = {{"v01", 0.7}, {"v02", 0.7}};
  CHECK_THROWS_AS(m.shape(bad), Error);
  bad.blend = {{"v99", 1.0}};
  CHECK_THROWS_AS(m.shape(bad), Error);
}

TEST_CASE("prototypes respect the minimum separation") {
  CorpusConfig cfg;
  const MouthModel m(cfg);
  double closest = 1e9;
  for (const auto& a : m.prototypes())
    for (const auto& b : m.prototypes()) {
      if (a.label >= b.label) continue;
      const Shape sa = m.shape(pure(a.label)), sb = m.shape(pure(b.label));  // default rest height is 26 px
      double ss = 0.0;
      for (std::size_t i = 0; i < sa.size(); ++i)
        ss += std::pow(sa.points[i].x - sb.points[i].x, 2) + std::pow(sa.points[i].y - sb.points[i].y, 2);
      closest = std::min(closest, std::sqrt(ss / sa.size()));
    }
  CHECK(closest >= cfg.min_separation);
  cfg.min_separation = closest + 0.01;
  CHECK_THROWS_WITH_AS(MouthModel{cfg}, doctest::Contains("apart"), Error);
}

TEST_CASE("lip height scales with the configured rest height") {
  const CorpusConfig cfg = small_config();
  const MouthModel m(cfg);
  CHECK(resting_lip_height(m.shape(pure(kSil)), MouthModel::lip_indices(), cfg.native_resolution,
                           cfg.native_resolution) == doctest::Approx(13.0));
}

TEST_CASE("corpus config errors") {
  CorpusConfig cfg;
  cfg.vocabulary = {"raven", "xyzzy"};
  CHECK_THROWS_WITH_AS(SyntheticCorpus{cfg}, doctest::Contains("xyzzy"), Error);
  cfg.vocabulary = {"raven", "door"};
  CHECK_THROWS_WITH_AS(SyntheticCorpus{cfg}, doctest::Contains("fewer than 20"), Error);
  CHECK_THROWS_WITH_AS(parse_corpus_config("seed = 1\nbogus = 2\n"), doctest::Contains("line 2"), Error);
  CHECK_THROWS_AS(parse_corpus_config("n_lines = many\n"), Error);
}

TEST_CASE("corpus config text round trip") {
  CorpusConfig c;
  c.seed = 7;
  c.vocabulary = {"raven", "door"};
  c.texture_noise_std = 0.1;
  c.words_per_line = {2, 9};
  const CorpusConfig back = parse_corpus_config(format_corpus_config(c));
  CHECK(format_corpus_config(back) == format_corpus_config(c));
  CHECK(back.vocabulary == c.vocabulary);
  CHECK(back.texture_noise_std == 0.1);
  CHECK(back.words_per_line == std::pair<int, int>{2, 9});
}

TEST_CASE("sha256 test vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("generated corpus directory is complete and checksummed") {
  TempDir dir;
  const CorpusConfig cfg = small_config();
  const auto manifest = generate_corpus(cfg, dir.path);
  const SyntheticCorpus corpus(cfg);

  std::set<std::string> paths;
  for (const auto& e : manifest.entries) {
    paths.insert(e.path);
    const std::string bytes = read_text_file(dir.path / e.path);
    CHECK(bytes.size() == e.bytes);
    CHECK(sha256_hex(bytes) == e.sha256);
  }
  CHECK(read_text_file(dir.path / "manifest.txt") == manifest.text());
  for (const char* p : {"config.txt", "dictionary.dict", "text.txt", "words.mlf", "visemes.mlf", "frames/index.txt",
                        "landmarks/truth.txt", "landmarks/keyframes.txt", "landmarks/lips.txt"})
    CHECK(paths.count(p) == 1);
  CHECK(static_cast<int>(paths.size()) == 9 + corpus.n_frames() + static_cast<int>(corpus.key_frames().size()));

  // Frames on disk are the rendered frames.
  const auto r = corpus.render(5);
  CHECK(read_pgm(dir.path / "frames/line000/000005.pgm") == r.frame.window);
  // Transcripts.
  const auto words = read_mlf(dir.path / "words.mlf");
  REQUIRE(words.size() == 3);
  CHECK(words[1] == corpus.lines()[1].words);
  const auto timed = parse_timed_mlf(read_text_file(dir.path / "visemes.mlf"), cfg.frame_rate);
  CHECK(timed[2].labels == corpus.lines()[2].segments.labels);
  const auto dict = load_dictionary(dir.path / "dictionary.dict");
  for (const auto& lt : corpus.lines())
    for (const auto& w : lt.words.tokens) CHECK(dict.contains(w));
  CHECK(parse_corpus_config(read_text_file(dir.path / "config.txt")).seed == cfg.seed);
  const Shape key = read_pts(dir.path / "landmarks/key_000000.pts");
  for (std::size_t i = 0; i < key.size(); ++i) CHECK(key.points[i].x == doctest::Approx(corpus.shape(0).points[i].x));

  // A second run writes identical bytes.
  TempDir again;
  CHECK(generate_corpus(cfg, again.path).text() == manifest.text());
}

#include "lipres/synthcorpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <set>
#include <sstream>

#include <openssl/evp.h>

#include "lipres/error.hpp"
#include "rng.hpp"

namespace lipres {

MouthParams MouthParams::operator+(const MouthParams& o) const {
  return {half_width + o.half_width, upper + o.upper, lower + o.lower, gap + o.gap, inner + o.inner};
}

MouthParams MouthParams::operator*(double s) const {
  return {half_width * s, upper * s, lower * s, gap * s, inner * s};
}

using detail::hash_normal;
using detail::Rng;
using detail::splitmix64;

namespace {

constexpr double kRefHeight = 26.0;
constexpr double kSkin = 0.62;
const MouthParams kRest{35.0, 12.0, 13.0, 1.0, 26.25};

// Rough articulation of each viseme class at a 26 px lip height.
const std::vector<std::pair<std::string, MouthParams>>& shape_table() {
  static const std::vector<std::pair<std::string, MouthParams>> t = {
      {"v01", {35, 9.5, 10.5, 1, 26.25}},  // lips pressed
      {"v02", {35, 12, 9, 2.5, 26.25}},   // lower lip tucked
      {"v03", {33, 12, 12, 4, 23.76}},
      {"v04", {34, 12, 13, 5.5, 25.5}},
      {"v05", {36.5, 11.5, 12, 3, 29.2}},
      {"v06", {34, 11.5, 12.5, 8, 23.8}},
      {"v07", {31, 12.5, 13, 4, 21.7}},
      {"v08", {30, 13, 13.5, 5, 18}},
      {"v09", {27, 13, 13, 3, 13.5}},
      {"v10", {36, 11.5, 12.5, 6, 28.8}},
      {"v11", {37, 11.5, 12.5, 9, 29.6}},
      {"v12", {35, 11.5, 12.5, 12, 26.25}},
      {"v13", {32, 12, 13, 6.5, 22.4}},
      {"v14", {28, 13, 13.5, 4, 15.4}},
      {"v15", {29, 12.5, 13, 7, 15.95}},
      {"v16", {38, 11, 12, 4.5, 32.3}},
      {"v17", {31, 12, 13, 10.5, 20.15}},
      {"v18", kRest},
  };
  return t;
}

MouthParams clamp_mouth(MouthParams m, double scale) {
  m.half_width = std::max(m.half_width, 12.0 * scale);
  m.upper = std::max(m.upper, 3.0 * scale);
  m.lower = std::max(m.lower, 3.0 * scale);
  m.gap = std::max(m.gap, 0.5 * scale);
  m.inner = std::clamp(m.inner, 0.4 * m.half_width, 0.95 * m.half_width);
  return m;
}

// Landmarks around the origin: 12 outer points then 8 inner points.
std::vector<Point> mouth_points(const MouthParams& m) {
  std::vector<Point> pts;
  const double pi = std::numbers::pi;
  for (int k = 0; k < MouthModel::kOuterPoints; ++k) {
    const double th = 2.0 * pi * k / MouthModel::kOuterPoints;
    const double s = std::sin(th);
    const double b = (s >= 0.0 ? m.upper : m.lower) + 0.5 * m.gap;
    pts.push_back({m.half_width * std::cos(th), -b * s});
  }
  for (int k = 0; k < MouthModel::kInnerPoints; ++k) {
    const double th = 2.0 * pi * k / MouthModel::kInnerPoints;
    pts.push_back({m.inner * std::cos(th), -0.5 * m.gap * std::sin(th)});
  }
  // exact zeros keep the corners on the axis
  for (auto& p : pts) {
    if (std::abs(p.x) < 1e-12) p.x = 0.0;
    if (std::abs(p.y) < 1e-12) p.y = 0.0;
  }
  return pts;
}

// Approximate signed distance (px, positive outside) to the ellipse with semi-axes a, b.
double ellipse_distance(double x, double y, double a, double b) {
  const double g = x * x / (a * a) + y * y / (b * b) - 1.0;
  const double gx = 2.0 * x / (a * a);
  const double gy = 2.0 * y / (b * b);
  const double grad = std::sqrt(gx * gx + gy * gy);
  if (grad < 1e-9) return -std::min(a, b);
  return std::max(g / grad, -std::min(a, b));
}

double coverage(double d) { return std::clamp(0.5 - d, 0.0, 1.0); }

double rms_distance(const std::vector<Point>& a, const std::vector<Point>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(a[i].x - b[i].x, 2) + std::pow(a[i].y - b[i].y, 2);
  return std::sqrt(s / static_cast<double>(a.size()));
}

}  // namespace

const std::vector<std::string>& default_vocabulary() {
  static const std::vector<std::string> v = {
      "raven",  "nevermore", "chamber", "door",   "shadow",  "voice",  "volume", "joy",     "noise",
      "point",  "boy",       "thee",    "there",  "thy",     "this",   "through", "to",     "you",
      "soon",   "doom",      "tomb",    "once",   "weak",    "weary",  "while",  "whispered", "quaint",
      "word",   "bird",      "fowl",    "ghost",  "over",    "soul",   "sorrow", "lenore",  "velvet",
      "violet", "purple",    "curtain", "perched", "just",   "gently", "midnight", "beast", "bleak"};
  return v;
}

// --- MouthModel ----------------------------------------------------------------

MouthModel::MouthModel(const CorpusConfig& cfg) : cfg_(cfg) {
  if (cfg.native_resolution.width <= 0 || cfg.native_resolution.height <= 0)
    throw Error("corpus config: bad native resolution");
  if (!(cfg.lip_height_rest > 0.0)) throw Error("corpus config: lip_height_rest must be positive");
  if (cfg.n_patterns < 0) throw Error("corpus config: n_patterns must be >= 0");
  const double scale = cfg.lip_height_rest / kRefHeight;
  anchor_ = {0.5 * cfg.native_resolution.width, 0.6 * cfg.native_resolution.height};

  Rng rng(splitmix64(cfg.seed ^ 0x70726f746fULL));
  const double pi = std::numbers::pi;
  for (int j = 0; j < cfg.n_patterns; ++j) {
    const double period = rng.uniform(cfg.pattern_period_min, cfg.pattern_period_max);
    const double angle = pi * (j + rng.uniform(0.0, 0.5)) / std::max(cfg.n_patterns, 1);
    const double k = 2.0 * pi / period;
    waves_.push_back({k * std::cos(angle), k * std::sin(angle)});
    phases_.push_back(rng.uniform(0.0, 2.0 * pi));
  }

  // Lip tones: 18 evenly spaced levels, randomly assigned.
  const auto& table = shape_table();
  std::vector<double> tones;
  for (std::size_t i = 0; i < table.size(); ++i) tones.push_back(0.22 + 0.20 * i / (table.size() - 1));
  for (std::size_t i = tones.size() - 1; i > 0; --i)
    std::swap(tones[i], tones[static_cast<std::size_t>(rng.range(0, static_cast<int>(i)))]);

  for (std::size_t i = 0; i < table.size(); ++i) {
    VisemePrototype p;
    p.label = table[i].first;
    const MouthParams& t = table[i].second;
    p.mouth = (kRest + (t + kRest * -1.0) * cfg.shape_scale) * scale;
    p.lip_tone = tones[i];
    p.interior = rng.uniform(0.04, 0.14);
    for (int j = 0; j < cfg.n_patterns; ++j) p.pattern.push_back(rng.normal());
    index_[p.label] = prototypes_.size();
    prototypes_.push_back(std::move(p));
  }
  for (std::size_t i = 0; i < prototypes_.size(); ++i)
    for (std::size_t j = i + 1; j < prototypes_.size(); ++j) {
      const double d = rms_distance(mouth_points(prototypes_[i].mouth), mouth_points(prototypes_[j].mouth));
      if (d / scale < cfg.min_separation) {
        std::ostringstream msg;
        msg << "corpus config: prototypes " << prototypes_[i].label << " and " << prototypes_[j].label
            << " are " << d / scale << " px apart at a 26 px lip height (minimum " << cfg.min_separation << ")";
        throw Error(msg.str());
      }
    }
}

const VisemePrototype& MouthModel::prototype(const std::string& label) const {
  const auto it = index_.find(label);
  if (it == index_.end()) throw Error("unknown viseme '" + label + "'");
  return prototypes_[it->second];
}

std::vector<std::size_t> MouthModel::lip_indices() {
  std::vector<std::size_t> idx(kOuterPoints + kInnerPoints);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

void MouthModel::check_blend(const FrameState& state) const {
  if (state.blend.empty()) throw Error("frame state: empty blend");
  double total = 0.0;
  for (const auto& [label, w] : state.blend) {
    prototype(label);
    if (w < 0.0) throw Error("frame state: negative blend weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error("frame state: blend weights must sum to 1");
}

MouthParams MouthModel::blended_mouth(const FrameState& state) const {
  check_blend(state);
  MouthParams m{0, 0, 0, 0, 0};
  for (const auto& [label, w] : state.blend) m = m + prototype(label).mouth * w;
  return clamp_mouth(m + state.jitter, cfg_.lip_height_rest / kRefHeight);
}

Shape MouthModel::shape(const FrameState& state) const {
  const auto local = mouth_points(blended_mouth(state));
  const double c = std::cos(state.angle), s = std::sin(state.angle);
  const Point o{anchor_.x + state.offset.x, anchor_.y + state.offset.y};
  Shape out;
  for (const auto& p : local) out.points.push_back({o.x + c * p.x - s * p.y, o.y + s * p.x + c * p.y});
  return out;
}

RenderedFrame MouthModel::render(const FrameState& state) const {
  const MouthParams m = blended_mouth(state);
  double tone = 0.0, interior = 0.0;
  std::vector<double> coef(static_cast<std::size_t>(cfg_.n_patterns), 0.0);
  for (const auto& [label, w] : state.blend) {
    const auto& p = prototype(label);
    tone += w * p.lip_tone;
    interior += w * p.interior;
    for (std::size_t j = 0; j < coef.size(); ++j) coef[j] += w * p.pattern[j];
  }

  RenderedFrame out;
  out.shape = shape(state);
  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const auto& p : out.shape.points) {
    x_lo = std::min(x_lo, p.x);
    x_hi = std::max(x_hi, p.x);
    y_lo = std::min(y_lo, p.y);
    y_hi = std::max(y_hi, p.y);
  }
  const int margin = static_cast<int>(std::ceil(0.6 * cfg_.lip_height_rest)) + 2;
  const Resolution canvas = cfg_.native_resolution;
  const int x0 = std::clamp(static_cast<int>(std::floor(x_lo)) - margin, 0, canvas.width - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(y_lo)) - margin, 0, canvas.height - 1);
  const int x1 = std::clamp(static_cast<int>(std::ceil(x_hi)) + margin, x0, canvas.width - 1);
  const int y1 = std::clamp(static_cast<int>(std::ceil(y_hi)) + margin, y0, canvas.height - 1);

  const double scale = cfg_.lip_height_rest / kRefHeight;
  const double ref_w = kRest.half_width * scale;
  const double ref_up = (kRest.upper + 0.5 * kRest.gap) * scale;
  const double ref_lo = (kRest.lower + 0.5 * kRest.gap) * scale;
  const double c = std::cos(state.angle), s = std::sin(state.angle);
  const Point o{anchor_.x + state.offset.x, anchor_.y + state.offset.y};
  const double b_up = m.upper + 0.5 * m.gap;
  const double b_lo = m.lower + 0.5 * m.gap;
  const double a_in = m.inner;
  const double b_in = 0.5 * m.gap;

  Image img(x1 - x0 + 1, y1 - y0 + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - o.x, dy = y - o.y;
      const double px = c * dx + s * dy;
      const double py = -s * dx + c * dy;
      const double b = py < 0.0 ? b_up : b_lo;
      const double lip = coverage(ellipse_distance(px, py, m.half_width, b));
      double v = kSkin;
      if (lip > 0.0) {
        // Texture coordinates follow the mouth so the pattern is part of the
        // shape-free appearance.
        const double qx = px / m.half_width * ref_w;
        const double qy = py < 0.0 ? py / b_up * ref_up : py / b_lo * ref_lo;
        double lipv = tone;
        for (std::size_t j = 0; j < coef.size(); ++j)
          lipv += cfg_.pattern_amplitude * coef[j] *
                  std::cos(waves_[j].first * qx + waves_[j].second * qy + phases_[j]);
        const double in = coverage(ellipse_distance(px, py, a_in, b_in));
        v = (1.0 - lip) * kSkin + lip * ((1.0 - in) * lipv + in * interior);
      }
      if (cfg_.texture_noise_std > 0.0)
        v += cfg_.texture_noise_std *
             hash_normal(cfg_.seed, state.frame_index,
                         static_cast<std::uint64_t>(y) * static_cast<std::uint64_t>(canvas.width) + x);
      img.at(x - x0, y - y0) = quantize8(std::clamp(v, 0.0, 1.0));
    }
  out.frame.window = std::move(img);
  out.frame.x0 = x0;
  out.frame.y0 = y0;
  out.frame.canvas = canvas;
  out.frame.background = quantize8(kSkin);
  return out;
}

RenderedFrame render_frame(const FrameState& state, const CorpusConfig& cfg) { return MouthModel(cfg).render(state); }

// --- Corpus ------------------------------------------------------------------------

namespace {

std::vector<std::string> first_visemes(const std::string& word, const PronDict& dict) {
  return map_phones_to_visemes(dict.lookup(word).front());
}

struct Script {
  std::vector<Transcript> lines;
};

Script sample_lines(const CorpusConfig& cfg, const std::vector<std::string>& vocab, const PronDict& dict, Rng& rng) {
  const std::size_t V = vocab.size();
  // Words carrying rare visemes are drawn more often.
  std::map<std::string, int> carriers;
  std::vector<std::set<std::string>> word_visemes(V);
  for (std::size_t i = 0; i < V; ++i) {
    for (const auto& v : first_visemes(vocab[i], dict)) word_visemes[i].insert(v);
    for (const auto& v : word_visemes[i]) ++carriers[v];
  }
  std::vector<double> weight(V, 0.0);
  for (std::size_t i = 0; i < V; ++i)
    for (const auto& v : word_visemes[i]) weight[i] += 1.0 / carriers[v];

  const int K = std::clamp(cfg.successors, 1, static_cast<int>(V));
  std::vector<std::vector<std::size_t>> next(V);
  std::vector<std::vector<double>> prob(V);
  for (std::size_t i = 0; i < V; ++i) {
    std::vector<double> w = weight;
    if (V > 1) w[i] = 0.0;
    while (static_cast<int>(next[i].size()) < std::min<int>(K, static_cast<int>(V) - (V > 1 ? 1 : 0))) {
      const std::size_t j = rng.weighted(w);
      next[i].push_back(j);
      prob[i].push_back(rng.uniform(0.5, 1.5));
      w[j] = 0.0;
    }
  }
  Script s;
  for (int l = 0; l < cfg.n_lines; ++l) {
    Transcript t;
    t.line_id = l;
    const int n = rng.range(cfg.words_per_line.first, cfg.words_per_line.second);
    std::size_t w = rng.weighted(weight);
    for (int k = 0; k < n; ++k) {
      t.tokens.push_back(vocab[w]);
      w = next[w][rng.weighted(prob[w])];
    }
    s.lines.push_back(std::move(t));
  }
  return s;
}

void check_config(const CorpusConfig& cfg) {
  auto bad_range = [](std::pair<int, int> r, int lo) { return r.first < lo || r.second < r.first; };
  if (cfg.n_lines <= 0) throw Error("corpus config: n_lines must be positive");
  if (bad_range(cfg.words_per_line, 1)) throw Error("corpus config: bad words_per_line");
  if (bad_range(cfg.frames_per_viseme, 1)) throw Error("corpus config: bad frames_per_viseme");
  if (bad_range(cfg.silence_frames, 1)) throw Error("corpus config: bad silence_frames");
  if (!(cfg.frame_rate > 0.0)) throw Error("corpus config: frame_rate must be positive");
  if (cfg.n_key_frames < 1) throw Error("corpus config: need at least one key frame");
  if (cfg.transition_frames < 0) throw Error("corpus config: transition_frames must be >= 0");
}

}  // namespace

SyntheticCorpus::SyntheticCorpus(const CorpusConfig& cfg) : cfg_(cfg), model_(cfg) {
  check_config(cfg);
  dict_ = parse_dictionary(shipped_dictionary());
  std::vector<std::string> vocab = cfg.vocabulary.empty() ? default_vocabulary() : cfg.vocabulary;
  for (auto& w : vocab) {
    w = normalize_word(w);
    if (!dict_.contains(w)) throw Error("corpus config: word '" + w + "' is not in the dictionary");
  }
  if (std::set<std::string>(vocab.begin(), vocab.end()).size() != vocab.size())
    throw Error("corpus config: duplicate vocabulary word");

  Rng rng(splitmix64(cfg.seed ^ 0x6c696e6573ULL));
  // Redraw the script until every viseme is frequent enough.
  Script script;
  constexpr int kAttempts = 200;
  for (int attempt = 0;; ++attempt) {
    script = sample_lines(cfg, vocab, dict_, rng);
    lines_.clear();
    for (const auto& t : script.lines) {
      LineTruth lt;
      lt.words = t;
      lt.visemes = transcribe_line(t, dict_);
      lines_.push_back(std::move(lt));
    }
    const auto counts = viseme_counts();
    std::string missing;
    for (const auto& v : viseme_labels())
      if ((counts.count(v) ? counts.at(v) : 0) < cfg.min_viseme_count) missing = v;
    if (missing.empty()) break;
    if (attempt + 1 == kAttempts)
      throw Error("corpus config: viseme " + missing + " occurs fewer than " + std::to_string(cfg.min_viseme_count) +
                  " times in every script drawn; enlarge the corpus or the vocabulary");
  }

  // Timing, blends, articulation noise and pose.
  const int tr = cfg.transition_frames;
  for (auto& lt : lines_) {
    lt.first_frame = n_frames();
    lt.segments.line_id = lt.words.line_id;
    std::vector<MouthParams> seg_jitter;
    int t = 0;
    for (std::size_t i = 0; i < lt.visemes.tokens.size(); ++i) {
      const std::string& v = lt.visemes.tokens[i];
      const auto range = v == kSil ? cfg.silence_frames : cfg.frames_per_viseme;
      const int len = rng.range(range.first, range.second);
      lt.segments.labels.push_back({v, t, t + len});
      t += len;
      const double j = cfg.articulation_jitter * cfg.lip_height_rest / kRefHeight;
      seg_jitter.push_back({j * rng.normal(), j * rng.normal(), j * rng.normal(), j * rng.normal(), 0.5 * j * rng.normal()});
    }
    lt.n_frames = t;

    const double range = cfg.pose_range;
    Point off{rng.uniform(-0.5, 0.5) * range, rng.uniform(-0.5, 0.5) * range};
    double angle = rng.uniform(-0.03, 0.03);
    const auto& segs = lt.segments.labels;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      for (int f = segs[i].start; f < segs[i].end; ++f) {
        FrameState st;
        const double u_prev = f + 0.5 - segs[i].start;
        const double u_next = segs[i].end - (f + 0.5);
        std::size_t other = i;
        double w_other = 0.0;
        if (tr > 0) {
          if (i > 0 && u_prev < tr && (u_prev <= u_next || i + 1 == segs.size())) {
            other = i - 1;
            w_other = 0.5 * (1.0 - u_prev / tr);
          } else if (i + 1 < segs.size() && u_next < tr) {
            other = i + 1;
            w_other = 0.5 * (1.0 - u_next / tr);
          }
        }
        st.blend.push_back({segs[i].label, 1.0 - w_other});
        st.jitter = seg_jitter[i] * (1.0 - w_other);
        if (w_other > 0.0) {
          if (segs[other].label == segs[i].label)
            st.blend[0].second = 1.0;
          else
            st.blend.push_back({segs[other].label, w_other});
          st.jitter = st.jitter + seg_jitter[other] * w_other;
        }
        off.x = std::clamp(off.x + cfg.pose_drift * rng.normal(), -range, range);
        off.y = std::clamp(off.y + cfg.pose_drift * rng.normal(), -range, range);
        angle = std::clamp(angle + 0.002 * rng.normal(), -0.05, 0.05);
        st.offset = off;
        st.angle = angle;
        st.frame_index = states_.size();
        states_.push_back(std::move(st));
        labels_.push_back(segs[i].label);
        line_of_.push_back(lt.words.line_id);
      }
    }
  }

  key_frames_.push_back(0);
  const int want = std::min(cfg.n_key_frames, n_frames());
  while (static_cast<int>(key_frames_.size()) < want) {
    const int f = rng.range(1, n_frames() - 1);
    if (std::find(key_frames_.begin(), key_frames_.end(), f) == key_frames_.end()) key_frames_.push_back(f);
  }
}

std::map<std::string, int> SyntheticCorpus::viseme_counts() const {
  std::map<std::string, int> counts;
  for (const auto& lt : lines_)
    for (const auto& v : lt.visemes.tokens) ++counts[v];
  return counts;
}

// --- Files ------------------------------------------------------------------------

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  if (EVP_Digest(data.data(), data.size(), md, &n, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < n; ++i) out << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return out.str();
}

std::string CorpusManifest::text() const {
  std::ostringstream out;
  for (const auto& e : entries) out << e.sha256 << "  " << e.bytes << "  " << e.path << '\n';
  return out.str();
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

}  // namespace

std::string format_corpus_config(const CorpusConfig& c) {
  std::ostringstream out;
  auto pair = [](std::pair<int, int> p) { return std::to_string(p.first) + " " + std::to_string(p.second); };
  out << "seed = " << c.seed << '\n'
      << "native_resolution = " << c.native_resolution.str() << '\n'
      << "n_lines = " << c.n_lines << '\n'
      << "words_per_line = " << pair(c.words_per_line) << '\n'
      << "vocabulary =";
  for (const auto& w : c.vocabulary) out << ' ' << w;
  out << '\n'
      << "frame_rate = " << fmt_double(c.frame_rate) << '\n'
      << "frames_per_viseme = " << pair(c.frames_per_viseme) << '\n'
      << "silence_frames = " << pair(c.silence_frames) << '\n'
      << "transition_frames = " << c.transition_frames << '\n'
      << "lip_height_rest = " << fmt_double(c.lip_height_rest) << '\n'
      << "texture_noise_std = " << fmt_double(c.texture_noise_std) << '\n'
      << "articulation_jitter = " << fmt_double(c.articulation_jitter) << '\n'
      << "pose_drift = " << fmt_double(c.pose_drift) << '\n'
      << "pose_range = " << fmt_double(c.pose_range) << '\n'
      << "shape_scale = " << fmt_double(c.shape_scale) << '\n'
      << "pattern_amplitude = " << fmt_double(c.pattern_amplitude) << '\n'
      << "pattern_period_min = " << fmt_double(c.pattern_period_min) << '\n'
      << "pattern_period_max = " << fmt_double(c.pattern_period_max) << '\n'
      << "n_patterns = " << c.n_patterns << '\n'
      << "min_separation = " << fmt_double(c.min_separation) << '\n'
      << "min_viseme_count = " << c.min_viseme_count << '\n'
      << "n_key_frames = " << c.n_key_frames << '\n'
      << "successors = " << c.successors << '\n';
  return out.str();
}

CorpusConfig parse_corpus_config(std::string_view text) {
  CorpusConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) throw Error("corpus config line " + std::to_string(lineno) + ": expected key = value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    std::istringstream vs(value);
    auto fail = [&]() { throw Error("corpus config line " + std::to_string(lineno) + ": bad value for " + key); };
    auto num = [&](auto& x) {
      if (!(vs >> x)) fail();
      std::string rest;
      if (vs >> rest) fail();
    };
    auto pair = [&](std::pair<int, int>& p) {
      if (!(vs >> p.first >> p.second)) fail();
      std::string rest;
      if (vs >> rest) fail();
    };
    if (key == "seed") num(c.seed);
    else if (key == "native_resolution") c.native_resolution = parse_resolution(value);
    else if (key == "n_lines") num(c.n_lines);
    else if (key == "words_per_line") pair(c.words_per_line);
    else if (key == "vocabulary") {
      c.vocabulary.clear();
      for (std::string w; vs >> w;) c.vocabulary.push_back(w);
    } else if (key == "frame_rate") num(c.frame_rate);
    else if (key == "frames_per_viseme") pair(c.frames_per_viseme);
    else if (key == "silence_frames") pair(c.silence_frames);
    else if (key == "transition_frames") num(c.transition_frames);
    else if (key == "lip_height_rest") num(c.lip_height_rest);
    else if (key == "texture_noise_std") num(c.texture_noise_std);
    else if (key == "articulation_jitter") num(c.articulation_jitter);
    else if (key == "pose_drift") num(c.pose_drift);
    else if (key == "pose_range") num(c.pose_range);
    else if (key == "shape_scale") num(c.shape_scale);
    else if (key == "pattern_amplitude") num(c.pattern_amplitude);
    else if (key == "pattern_period_min") num(c.pattern_period_min);
    else if (key == "pattern_period_max") num(c.pattern_period_max);
    else if (key == "n_patterns") num(c.n_patterns);
    else if (key == "min_separation") num(c.min_separation);
    else if (key == "min_viseme_count") num(c.min_viseme_count);
    else if (key == "n_key_frames") num(c.n_key_frames);
    else if (key == "successors") num(c.successors);
    else throw Error("corpus config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  return c;
}

namespace {

class CorpusWriter {
 public:
  explicit CorpusWriter(std::filesystem::path root) : root_(std::move(root)) {}

  void text(const std::string& rel, std::string_view content) {
    const auto path = root_ / rel;
    std::filesystem::create_directories(path.parent_path());
    write_text_file(path, content);
    record(rel, content);
  }
  void pgm(const std::string& rel, const Image& img) {
    const auto path = root_ / rel;
    std::filesystem::create_directories(path.parent_path());
    write_pgm(path, img);
    record(rel, read_text_file(path));
  }
  void pts(const std::string& rel, const Shape& s) {
    const auto path = root_ / rel;
    std::filesystem::create_directories(path.parent_path());
    write_pts(path, s);
    record(rel, read_text_file(path));
  }
  CorpusManifest manifest;

 private:
  void record(const std::string& rel, std::string_view content) {
    manifest.entries.push_back({rel, content.size(), sha256_hex(content)});
  }
  std::filesystem::path root_;
};

std::string shape_line(const Shape& s) {
  std::string out;
  for (const auto& p : s.points) out += ' ' + fmt_double(p.x) + ' ' + fmt_double(p.y);
  return out;
}

}  // namespace

CorpusManifest generate_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir) {
  const SyntheticCorpus corpus(cfg);
  std::filesystem::create_directories(out_dir);
  CorpusWriter w(out_dir);

  w.text("config.txt", format_corpus_config(cfg));

  // Only the words the corpus uses, so the dictionary is self-contained.
  PronDict used;
  std::vector<Transcript> words;
  std::vector<TimedTranscript> segments;
  std::string text;
  for (const auto& lt : corpus.lines()) {
    for (const auto& t : lt.words.tokens) used.entries[t] = corpus.dictionary().lookup(t);
    words.push_back(lt.words);
    segments.push_back(lt.segments);
    for (std::size_t i = 0; i < lt.words.tokens.size(); ++i) text += (i ? " " : "") + lt.words.tokens[i];
    text += '\n';
  }
  const std::vector<std::string> vocab = cfg.vocabulary.empty() ? default_vocabulary() : cfg.vocabulary;
  for (const auto& t : vocab) used.entries[normalize_word(t)] = corpus.dictionary().lookup(t);
  w.text("dictionary.dict", format_dictionary(used));
  w.text("text.txt", text);
  w.text("words.mlf", format_mlf(words));
  w.text("visemes.mlf", format_mlf(segments, cfg.frame_rate));

  std::ostringstream index;
  index << "# frame line file x0 y0 canvas_w canvas_h background\n";
  std::ostringstream truth;
  truth << "# frame line viseme x1 y1 ... x" << MouthModel::lip_indices().size() << " y"
        << MouthModel::lip_indices().size() << '\n';
  for (int f = 0; f < corpus.n_frames(); ++f) {
    const RenderedFrame r = corpus.render(f);
    const int line = corpus.line_of(f);
    std::ostringstream rel;
    rel << "frames/" << line_name(line) << '/' << std::setw(6) << std::setfill('0') << f << ".pgm";
    w.pgm(rel.str(), r.frame.window);
    index << f << ' ' << line << ' ' << rel.str() << ' ' << r.frame.x0 << ' ' << r.frame.y0 << ' '
          << r.frame.canvas.width << ' ' << r.frame.canvas.height << ' '
          << static_cast<int>(std::lround(r.frame.background * 255.0f)) << '\n';
    truth << f << ' ' << line << ' ' << corpus.label(f) << shape_line(r.shape) << '\n';
  }
  w.text("frames/index.txt", index.str());
  w.text("landmarks/truth.txt", truth.str());

  std::string keys;
  for (int f : corpus.key_frames()) {
    std::ostringstream rel;
    rel << "landmarks/key_" << std::setw(6) << std::setfill('0') << f << ".pts";
    w.pts(rel.str(), corpus.shape(f));
    keys += std::to_string(f) + ' ' + rel.str() + '\n';
  }
  w.text("landmarks/keyframes.txt", keys);
  {
    std::string lips;
    for (auto i : MouthModel::lip_indices()) lips += (lips.empty() ? "" : " ") + std::to_string(i);
    w.text("landmarks/lips.txt", lips + '\n');
  }

  std::sort(w.manifest.entries.begin(), w.manifest.entries.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.path < b.path; });
  write_text_file(out_dir / "manifest.txt", w.manifest.text());
  return w.manifest;
}

}  // namespace lipres

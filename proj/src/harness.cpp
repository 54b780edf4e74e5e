#include "lipres/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "lipres/error.hpp"
#include "lipres/log.hpp"
#include "rng.hpp"

namespace lipres {

// --- Corpus access ------------------------------------------------------------

std::vector<LabelledFrame> CorpusData::labelled_key_frames() const {
  std::vector<LabelledFrame> out;
  for (std::size_t i = 0; i < key_frames.size(); ++i) out.push_back({frame(key_frames[i]), key_shapes[i]});
  return out;
}

std::vector<std::string> CorpusData::vocabulary() const {
  std::set<std::string> v;
  for (const auto& t : words)
    for (const auto& w : t.tokens) v.insert(normalize_word(w));
  return {v.begin(), v.end()};
}

CorpusData synthetic_corpus_data(const CorpusConfig& cfg) {
  auto corpus = std::make_shared<const SyntheticCorpus>(cfg);
  CorpusData d;
  d.native = cfg.native_resolution;
  d.frame_rate = cfg.frame_rate;
  for (const auto& lt : corpus->lines()) {
    d.words.push_back(lt.words);
    d.line_start.push_back(lt.first_frame);
    d.line_length.push_back(lt.n_frames);
  }
  d.key_frames = corpus->key_frames();
  for (int k : d.key_frames) d.key_shapes.push_back(corpus->shape(k));
  d.lip_indices = MouthModel::lip_indices();
  d.dict = corpus->dictionary();
  d.n_frames = corpus->n_frames();
  d.frame = [corpus](int i) { return corpus->render(i).frame; };
  return d;
}

CorpusData load_corpus(const std::filesystem::path& dir) {
  CorpusData d;
  const auto config_path = dir / "config.txt";
  if (std::filesystem::exists(config_path)) d.frame_rate = parse_corpus_config(read_text_file(config_path)).frame_rate;
  d.dict = load_dictionary(dir / "dictionary.dict");
  d.words = read_mlf(dir / "words.mlf");
  for (std::size_t i = 0; i < d.words.size(); ++i)
    if (d.words[i].line_id != static_cast<int>(i))
      throw Error(dir.string() + "/words.mlf: lines must be numbered 0.. in order");

  struct Entry {
    std::filesystem::path file;
    int x0, y0, cw, ch, bg;
  };
  auto entries = std::make_shared<std::vector<Entry>>();
  {
    std::istringstream in(read_text_file(dir / "frames/index.txt"));
    std::string line;
    int lineno = 0;
    int prev_line = -1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      std::istringstream ls(line);
      int f, l;
      std::string file;
      Entry e{};
      if (!(ls >> f >> l >> file >> e.x0 >> e.y0 >> e.cw >> e.ch >> e.bg))
        throw Error(dir.string() + "/frames/index.txt line " + std::to_string(lineno) + ": malformed");
      if (f != static_cast<int>(entries->size()))
        throw Error(dir.string() + "/frames/index.txt line " + std::to_string(lineno) + ": frames out of order");
      if (l != prev_line) {
        if (l != prev_line + 1)
          throw Error(dir.string() + "/frames/index.txt line " + std::to_string(lineno) + ": lines out of order");
        d.line_start.push_back(f);
        d.line_length.push_back(0);
        prev_line = l;
      }
      ++d.line_length.back();
      e.file = dir / file;
      if (entries->empty()) d.native = {e.cw, e.ch};
      if (Resolution{e.cw, e.ch} != d.native)
        throw Error(dir.string() + "/frames/index.txt line " + std::to_string(lineno) + ": canvas size changes");
      entries->push_back(std::move(e));
    }
  }
  if (d.line_start.size() != d.words.size())
    throw Error(dir.string() + ": " + std::to_string(d.line_start.size()) + " lines of frames but " +
                std::to_string(d.words.size()) + " transcripts");
  d.n_frames = static_cast<int>(entries->size());
  d.frame = [entries](int i) {
    const Entry& e = entries->at(static_cast<std::size_t>(i));
    Frame f;
    f.window = read_image(e.file);
    f.x0 = e.x0;
    f.y0 = e.y0;
    f.canvas = {e.cw, e.ch};
    f.background = quantize8(e.bg / 255.0);
    return f;
  };

  std::istringstream keys(read_text_file(dir / "landmarks/keyframes.txt"));
  for (std::string line; std::getline(keys, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    int f;
    std::string file;
    if (!(ls >> f >> file)) throw Error(dir.string() + "/landmarks/keyframes.txt: malformed line '" + line + "'");
    if (f < 0 || f >= d.n_frames) throw Error(dir.string() + "/landmarks/keyframes.txt: frame out of range");
    d.key_frames.push_back(f);
    d.key_shapes.push_back(read_pts(dir / file));
  }
  if (d.key_frames.empty()) throw Error(dir.string() + ": no key frames");
  const auto lips_path = dir / "landmarks/lips.txt";
  if (std::filesystem::exists(lips_path)) {
    std::istringstream ls(read_text_file(lips_path));
    for (std::size_t i; ls >> i;) d.lip_indices.push_back(i);
  } else {
    for (std::size_t i = 0; i < d.key_shapes[0].size(); ++i) d.lip_indices.push_back(i);
  }
  return d;
}

// --- Folds ----------------------------------------------------------------------

std::vector<FoldSpec> make_folds(int n_lines, int n_test, int n_folds, std::uint64_t seed) {
  if (n_lines <= 0 || n_folds <= 0 || n_test <= 0 || n_test >= n_lines)
    throw Error("make_folds: need 0 < n_test < n_lines and at least one fold (n_lines=" + std::to_string(n_lines) +
                ", n_test=" + std::to_string(n_test) + ", n_folds=" + std::to_string(n_folds) + ")");
  std::vector<FoldSpec> folds;
  for (int f = 0; f < n_folds; ++f) {
    detail::Rng rng(detail::splitmix64(seed ^ detail::splitmix64(static_cast<std::uint64_t>(f) + 1)));
    std::vector<int> idx(static_cast<std::size_t>(n_lines));
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < n_test; ++i) std::swap(idx[i], idx[rng.range(i, n_lines - 1)]);
    FoldSpec spec;
    spec.fold_id = f;
    spec.test_lines.assign(idx.begin(), idx.begin() + n_test);
    spec.train_lines.assign(idx.begin() + n_test, idx.end());
    std::sort(spec.test_lines.begin(), spec.test_lines.end());
    std::sort(spec.train_lines.begin(), spec.train_lines.end());
    folds.push_back(std::move(spec));
  }
  return folds;
}

// --- Pipeline stages ------------------------------------------------------------

std::string feature_name(FeatureSet f) {
  switch (f) {
    case FeatureSet::shape: return "shape";
    case FeatureSet::appearance: return "appearance";
    case FeatureSet::combined: return "combined";
  }
  return "?";
}

FeatureSet parse_feature_set(const std::string& name) {
  if (name == "shape") return FeatureSet::shape;
  if (name == "appearance") return FeatureSet::appearance;
  if (name == "combined") return FeatureSet::combined;
  throw Error("unknown feature set '" + name + "' (shape, appearance, combined)");
}

Aam build_corpus_model(const CorpusData& corpus, const AamOptions& options) {
  return build_aam(corpus.labelled_key_frames(), options);
}

std::vector<Shape> fit_corpus(const CorpusData& corpus, const Aam& aam, const FitOptions& options,
                              const std::function<void(int)>& progress) {
  const Fitter fitter(aam);
  std::vector<Shape> fits(static_cast<std::size_t>(corpus.n_frames));
  auto attempt = [&](const Frame& frame, const Shape& init) -> std::optional<FitResult> {
    try {
      FitResult r = fitter.fit(frame, init, options.max_iters, options.tol);
      bool ok = std::isfinite(r.residual_rms);
      for (const auto& p : r.fitted_shape.points) ok = ok && std::isfinite(p.x) && std::isfinite(p.y);
      if (ok) return r;
    } catch (const Error&) {
    }
    return std::nullopt;
  };
  Shape init = corpus.key_shapes.front();
  double typical = -1.0;  // running residual level
  for (int i = 0; i < corpus.n_frames; ++i) {
    // Key frames carry landmarks: use them to (re)start the track.
    const auto k = std::find(corpus.key_frames.begin(), corpus.key_frames.end(), i);
    if (k != corpus.key_frames.end()) init = corpus.key_shapes[static_cast<std::size_t>(k - corpus.key_frames.begin())];
    const Frame frame = corpus.frame(i);
    auto r = attempt(frame, init);
    // A poor fit usually means the previous shape led it astray; retry from the
    // mean shape at the previous pose and keep whichever explains the image better.
    if (!r || (typical > 0.0 && r->residual_rms > options.restart_ratio * typical)) {
      Eigen::VectorXd p = fitter.params_for(init);
      p.tail(p.size() - 4).setZero();
      auto again = attempt(frame, fitter.shape_for(p));
      if (again && (!r || again->residual_rms < r->residual_rms)) r = std::move(again);
    }
    if (!r) {
      warn("fit failed at frame " + std::to_string(i) + "; keeping the previous shape");
      fits[static_cast<std::size_t>(i)] = init;
    } else {
      fits[static_cast<std::size_t>(i)] = r->fitted_shape;
      init = r->fitted_shape;
      typical = typical < 0.0 ? r->residual_rms : 0.95 * typical + 0.05 * r->residual_rms;
    }
    if (progress) progress(i);
  }
  return fits;
}

void write_fits(const std::filesystem::path& path, const std::vector<Shape>& fits) {
  std::ostringstream out;
  out.precision(17);
  out << "# frame x1 y1 x2 y2 ...\n";
  for (std::size_t i = 0; i < fits.size(); ++i) {
    out << i;
    for (const auto& p : fits[i].points) out << ' ' << p.x << ' ' << p.y;
    out << '\n';
  }
  write_text_file(path, out.str());
}

std::vector<Shape> read_fits(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::vector<Shape> fits;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::size_t f;
    if (!(ls >> f) || f != fits.size()) throw Error(path.string() + ": frames must be numbered 0.. in order");
    Shape s;
    for (double x, y; ls >> x >> y;) s.points.push_back({x, y});
    fits.push_back(std::move(s));
  }
  return fits;
}

std::vector<LineFeatures> extract_corpus_features(const CorpusData& corpus, const Aam& lips,
                                                  const std::vector<Shape>& fits,
                                                  const std::vector<Resolution>& resolutions, AppearanceBasis basis) {
  if (static_cast<int>(fits.size()) != corpus.n_frames)
    throw Error("extract_corpus_features: " + std::to_string(fits.size()) + " fits for " +
                std::to_string(corpus.n_frames) + " frames");
  const auto keys = corpus.labelled_key_frames();
  std::vector<ResolutionFeatureExtractor> extractors;
  for (const auto& r : resolutions) extractors.emplace_back(lips, keys, r, basis);

  const int L = corpus.n_lines();
  std::vector<LineFeatures> out(resolutions.size());
  const Eigen::Index ds = lips.shape_model.size();
  for (auto& lf : out) {
    lf.shape.resize(static_cast<std::size_t>(L));
    lf.appearance.resize(static_cast<std::size_t>(L));
  }
  for (int l = 0; l < L; ++l) {
    const int T = corpus.line_length[static_cast<std::size_t>(l)];
    Eigen::MatrixXd shape(ds, T);
    std::vector<Eigen::MatrixXd> app(resolutions.size());
    for (std::size_t r = 0; r < resolutions.size(); ++r) app[r].resize(extractors[r].basis().size(), T);
    for (int t = 0; t < T; ++t) {
      const int f = corpus.line_start[static_cast<std::size_t>(l)] + t;
      const Frame frame = corpus.frame(f);
      const Shape& s = fits[static_cast<std::size_t>(f)];
      shape.col(t) = shape_features(lips, s);
      for (std::size_t r = 0; r < resolutions.size(); ++r) app[r].col(t) = extractors[r].appearance(frame, s);
    }
    for (std::size_t r = 0; r < resolutions.size(); ++r) {
      out[r].shape[static_cast<std::size_t>(l)] = shape;
      out[r].appearance[static_cast<std::size_t>(l)] = std::move(app[r]);
    }
  }
  return out;
}

std::vector<ObservationSequence> observations(const LineFeatures& f, FeatureSet set, const std::vector<int>& lines,
                                              double frame_rate) {
  std::vector<ObservationSequence> out;
  for (int l : lines) {
    ObservationSequence o;
    o.frame_rate = frame_rate;
    const auto& s = f.shape.at(static_cast<std::size_t>(l));
    const auto& a = f.appearance.at(static_cast<std::size_t>(l));
    switch (set) {
      case FeatureSet::shape: o.frames = s; break;
      case FeatureSet::appearance: o.frames = a; break;
      case FeatureSet::combined:
        o.frames.resize(s.rows() + a.rows(), s.cols());
        o.frames << s, a;
        break;
    }
    out.push_back(std::move(o));
  }
  return out;
}

// --- Config -------------------------------------------------------------------------

std::vector<Resolution> default_sweep_resolutions() {
  return {{1440, 1080}, {720, 540}, {360, 270}, {240, 180}, {180, 135}, {144, 108}, {120, 90}, {90, 67}};
}

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error("expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string tok;
  for (char c : v + " ") {
    if (c == ' ' || c == ',' || c == '\t') {
      if (!tok.empty()) out.push_back(tok);
      tok.clear();
    } else {
      tok += c;
    }
  }
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig c;
  std::istringstream in{std::string(text)};
  std::string line, corpus_lines;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "experiment config line " + std::to_string(lineno);
    if (eq == std::string::npos) throw Error(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      auto num = [&]() {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw Error("trailing characters");
        return v;
      };
      auto integer = [&]() {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw Error("trailing characters");
        return v;
      };
      if (key.rfind("corpus.", 0) == 0) {
        corpus_lines += key.substr(7) + " = " + value + "\n";
      } else if (key == "corpus") {
        c.corpus = value;
      } else if (key == "seed") {
        c.seed = static_cast<std::uint64_t>(integer());
      } else if (key == "folds") {
        c.folds = static_cast<int>(integer());
      } else if (key == "test_lines") {
        c.test_lines = static_cast<int>(integer());
      } else if (key == "resolutions") {
        c.resolutions.clear();
        if (value == "ladder") {
          c.resolutions = resolution_ladder();
        } else if (value == "default") {
          c.resolutions = default_sweep_resolutions();
        } else {
          for (const auto& r : split_list(value)) c.resolutions.push_back(parse_resolution(r));
        }
      } else if (key == "networks") {
        c.networks = value == "both" ? std::vector<std::string>{"uwn", "bwn"} : split_list(value);
        for (const auto& n : c.networks)
          if (n != "uwn" && n != "bwn") throw Error("unknown network '" + n + "'");
      } else if (key == "features") {
        c.features.clear();
        if (value == "all")
          c.features = {FeatureSet::shape, FeatureSet::appearance, FeatureSet::combined};
        else
          for (const auto& f : split_list(value)) c.features.push_back(parse_feature_set(f));
      } else if (key == "states") {
        c.hmm.emitting_states = static_cast<int>(integer());
      } else if (key == "mixtures") {
        c.hmm.mixtures = static_cast<int>(integer());
      } else if (key == "variance_floor") {
        c.hmm.variance_floor_fraction = num();
      } else if (key == "schedule") {
        std::istringstream vs(value);
        if (!(vs >> c.schedule.initial >> c.schedule.after_tying >> c.schedule.after_alignment))
          throw Error("expected three counts");
      } else if (key == "lm_scale") {
        c.lm_scale = num();
      } else if (key == "word_insertion_penalty") {
        c.word_insertion_penalty = num();
      } else if (key == "discount") {
        c.discount = num();
      } else if (key == "score_units") {
        if (value != "viseme" && value != "word") throw Error("expected viseme or word");
        c.score_units = value;
      } else if (key == "htk_costs") {
        c.htk_costs = parse_bool(value);
      } else if (key == "train_once") {
        c.train_once = parse_bool(value);
      } else if (key == "fail_fast") {
        c.fail_fast = parse_bool(value);
      } else if (key == "shape_retain") {
        c.aam.shape_retain = num();
      } else if (key == "appearance_retain") {
        c.aam.appearance_retain = num();
      } else if (key == "reference_scale") {
        c.aam.reference_scale = num();
      } else if (key == "fit_iters") {
        c.fit.max_iters = static_cast<int>(integer());
      } else if (key == "fit_tol") {
        c.fit.tol = num();
      } else if (key == "appearance_basis") {
        if (value == "per_resolution")
          c.basis = AppearanceBasis::per_resolution;
        else if (value == "native")
          c.basis = AppearanceBasis::native;
        else
          throw Error("expected per_resolution or native");
      } else if (key == "threads") {
        c.threads = static_cast<int>(integer());
      } else {
        throw Error("unknown key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw Error(where + ": bad value for " + key + ": '" + value + "'");
    } catch (const Error& e) {
      throw Error(where + ": " + e.what());
    }
  }
  if (!corpus_lines.empty()) c.synth = parse_corpus_config(corpus_lines);
  return c;
}

std::string format_experiment_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out.precision(17);
  auto join = [](const auto& xs, auto f) {
    std::string s;
    for (const auto& x : xs) s += (s.empty() ? "" : " ") + f(x);
    return s;
  };
  out << "corpus = " << c.corpus << '\n'
      << "seed = " << c.seed << '\n'
      << "folds = " << c.folds << '\n'
      << "test_lines = " << c.test_lines << '\n'
      << "resolutions = "
      << (c.resolutions.empty() ? std::string("ladder") : join(c.resolutions, [](const Resolution& r) { return r.str(); }))
      << '\n'
      << "networks = " << join(c.networks, [](const std::string& s) { return s; }) << '\n'
      << "features = " << join(c.features, [](FeatureSet f) { return feature_name(f); }) << '\n'
      << "states = " << c.hmm.emitting_states << '\n'
      << "mixtures = " << c.hmm.mixtures << '\n'
      << "variance_floor = " << c.hmm.variance_floor_fraction << '\n'
      << "schedule = " << c.schedule.initial << ' ' << c.schedule.after_tying << ' ' << c.schedule.after_alignment
      << '\n'
      << "lm_scale = " << c.lm_scale << '\n'
      << "word_insertion_penalty = " << c.word_insertion_penalty << '\n'
      << "discount = " << c.discount << '\n'
      << "score_units = " << c.score_units << '\n'
      << "htk_costs = " << (c.htk_costs ? "true" : "false") << '\n'
      << "train_once = " << (c.train_once ? "true" : "false") << '\n'
      << "fail_fast = " << (c.fail_fast ? "true" : "false") << '\n'
      << "shape_retain = " << c.aam.shape_retain << '\n'
      << "appearance_retain = " << c.aam.appearance_retain << '\n'
      << "reference_scale = " << c.aam.reference_scale << '\n'
      << "fit_iters = " << c.fit.max_iters << '\n'
      << "fit_tol = " << c.fit.tol << '\n'
      << "appearance_basis = " << (c.basis == AppearanceBasis::native ? "native" : "per_resolution") << '\n'
      << "threads = " << c.threads << '\n';
  std::istringstream synth(format_corpus_config(c.synth));
  for (std::string line; std::getline(synth, line);) out << "corpus." << line << '\n';
  return out.str();
}

// --- Experiment -------------------------------------------------------------------

AlignmentResult score_lines(const HmmSet& set, const WordNetwork& net, const std::vector<ObservationSequence>& obs,
                            const std::vector<Transcript>& words, const PronDict& dict, const ExperimentConfig& cfg,
                            std::vector<DecodeResult>* decoded) {
  if (obs.size() != words.size()) throw Error("score_lines: observation/transcript count mismatch");
  const VisemeDict vdict = viseme_dictionary(dict);
  const AlignCosts costs = cfg.htk_costs ? AlignCosts::htk() : AlignCosts::unit();
  const std::vector<std::string> drop{kSil, kSp};
  AlignmentResult total;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const DecodeResult d = decode(set, net, obs[i], cfg.lm_scale, cfg.word_insertion_penalty, vdict);
    std::vector<std::string> ref, hyp;
    if (cfg.score_units == "word") {
      for (const auto& w : words[i].tokens) ref.push_back(normalize_word(w));
      hyp = d.words.tokens;
    } else {
      ref = strip_labels(transcribe_line(words[i], dict).tokens, drop);
      hyp = strip_labels(d.visemes.tokens, drop);
    }
    total += align_sequences(ref, hyp, costs);
    if (decoded) decoded->push_back(d);
  }
  return total;
}

namespace {

std::string cell_context(int fold, Resolution r, const std::string& stage) {
  return "fold " + std::to_string(fold) + ", resolution " + r.str() + ", stage " + stage;
}

int rank_of(const std::vector<std::string>& order, const std::string& s) {
  const auto it = std::find(order.begin(), order.end(), s);
  return it == order.end() ? static_cast<int>(order.size()) : static_cast<int>(it - order.begin());
}

}  // namespace

SweepResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress) {
  if (cfg.corpus == "synthetic") return run_experiment(cfg, synthetic_corpus_data(cfg.synth), progress);
  return run_experiment(cfg, load_corpus(cfg.corpus), progress);
}

SweepResult run_experiment(const ExperimentConfig& cfg, const CorpusData& corpus, const ProgressFn& progress) {
  std::mutex log_mutex;
  auto say = [&](const std::string& msg) {
    if (!progress) return;
    std::lock_guard lock(log_mutex);
    progress(msg);
  };
  if (cfg.networks.empty() || cfg.features.empty()) throw Error("run_experiment: no networks or feature sets selected");
  if (cfg.score_units != "viseme" && cfg.score_units != "word")
    throw Error("run_experiment: score_units must be viseme or word");
  const auto folds = make_folds(corpus.n_lines(), cfg.test_lines, cfg.folds, cfg.seed);
  const std::vector<Resolution> resolutions = cfg.resolutions.empty() ? resolution_ladder() : cfg.resolutions;
  const AppearanceBasis basis = cfg.train_once ? AppearanceBasis::native : cfg.basis;

  // The model depends only on the key frames, so one fit serves every fold.
  say("building appearance model from " + std::to_string(corpus.key_frames.size()) + " key frames");
  const Aam aam = build_corpus_model(corpus, cfg.aam);
  const bool has_sub = corpus.lip_indices.size() < aam.n_points();
  const Aam lips = has_sub ? extract_sub_model(aam, corpus.lip_indices, corpus.labelled_key_frames(), cfg.aam) : aam;
  say("fitting " + std::to_string(corpus.n_frames) + " frames");
  const auto fits = fit_corpus(corpus, aam, cfg.fit);
  say("extracting features at " + std::to_string(resolutions.size()) + " resolutions");
  const auto features = extract_corpus_features(corpus, lips, fits, resolutions, basis);

  std::vector<double> lip_height;
  for (const auto& r : resolutions)
    lip_height.push_back(resting_lip_height(corpus.key_shapes.front(), corpus.lip_indices, corpus.native, r));
  const auto vocab = corpus.vocabulary();

  struct Cell {
    std::vector<ScoreRow> rows;
    std::vector<CellError> errors;
  };
  const std::size_t R = resolutions.size();
  std::vector<Cell> cells(folds.size() * R);
  // With train_once the first resolution's models serve all others.
  std::vector<std::map<FeatureSet, HmmSet>> once(folds.size());

  auto run_cell = [&](std::size_t fi, std::size_t ri) {
    const FoldSpec& fold = folds[fi];
    const Resolution res = resolutions[ri];
    Cell& cell = cells[fi * R + ri];
    std::vector<Transcript> train_words, test_words;
    for (int l : fold.train_lines) train_words.push_back(corpus.words[static_cast<std::size_t>(l)]);
    for (int l : fold.test_lines) test_words.push_back(corpus.words[static_cast<std::size_t>(l)]);
    std::string stage = "network";
    try {
      std::map<std::string, WordNetwork> nets;
      for (const auto& n : cfg.networks)
        nets[n] = build_network(train_words, n == "bwn" ? 2 : 1, vocab, cfg.discount);
      for (FeatureSet fs : cfg.features) {
        stage = "train " + feature_name(fs);
        HmmSet set;
        if (cfg.train_once && ri > 0) {
          set = once[fi].at(fs);
        } else {
          set = train_viseme_models(observations(features[ri], fs, fold.train_lines, corpus.frame_rate), train_words,
                                    corpus.dict, cfg.hmm, cfg.schedule);
          if (cfg.train_once) once[fi][fs] = set;
        }
        const auto test_obs = observations(features[ri], fs, fold.test_lines, corpus.frame_rate);
        for (const auto& n : cfg.networks) {
          stage = "decode " + n + " " + feature_name(fs);
          const AlignmentResult total = score_lines(set, nets.at(n), test_obs, test_words, corpus.dict, cfg);
          cell.rows.push_back(
              make_score_row(fold.fold_id, res.width, res.height, lip_height[ri], n, feature_name(fs), total));
        }
      }
      say("fold " + std::to_string(fold.fold_id) + " " + res.str() + " done");
    } catch (const std::exception& e) {
      if (cfg.fail_fast) throw Error(cell_context(fold.fold_id, res, stage) + ": " + e.what());
      warn(cell_context(fold.fold_id, res, stage) + ": " + e.what());
      cell.errors.push_back({fold.fold_id, res, stage, e.what()});
    }
  };

  const int threads = std::max(1, cfg.threads);
  if (threads == 1 || cfg.train_once) {
    for (std::size_t fi = 0; fi < folds.size(); ++fi)
      for (std::size_t ri = 0; ri < R; ++ri) run_cell(fi, ri);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&]() {
        for (std::size_t i; (i = next++) < cells.size();) {
          try {
            run_cell(i / R, i % R);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
            next = cells.size();
          }
        }
      });
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  SweepResult out;
  for (auto& c : cells) {
    std::vector<ScoreRow> rows = std::move(c.rows);
    std::stable_sort(rows.begin(), rows.end(), [&](const ScoreRow& a, const ScoreRow& b) {
      const int na = rank_of(cfg.networks, a.network), nb = rank_of(cfg.networks, b.network);
      if (na != nb) return na < nb;
      return static_cast<int>(parse_feature_set(a.feature)) < static_cast<int>(parse_feature_set(b.feature));
    });
    out.rows.insert(out.rows.end(), rows.begin(), rows.end());
    out.errors.insert(out.errors.end(), c.errors.begin(), c.errors.end());
  }
  return out;
}

}  // namespace lipres

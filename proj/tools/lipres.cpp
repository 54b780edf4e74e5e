// lipres: synthetic corpus generation, model building, fitting and the
// resolution sweep, one subcommand per stage.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>

#include "lipres/error.hpp"
#include "lipres/harness.hpp"

using namespace lipres;

namespace {

struct Common {
  std::string config;
  std::string corpus;
  std::optional<std::uint64_t> seed;
  std::optional<int> folds;
  std::string resolutions;
  std::string network;
  std::string features;
  bool fail_fast = false;
  bool train_once = false;
  bool quiet = false;
};

void add_experiment_flags(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config file (key = value lines)");
  cmd->add_option("--corpus", c.corpus, "corpus directory, or 'synthetic'");
  cmd->add_option("--seed", c.seed, "fold seed");
  cmd->add_option("--folds", c.folds, "number of folds");
  cmd->add_option("--resolutions", c.resolutions, "'default', 'ladder' or a list like 1440x1080,360x270");
  cmd->add_option("--network", c.network, "uwn, bwn or both")->check(CLI::IsMember({"uwn", "bwn", "both"}));
  cmd->add_option("--features", c.features, "shape, appearance, combined or all");
  cmd->add_flag("--fail-fast", c.fail_fast, "stop at the first failing cell");
  cmd->add_flag("--train-once", c.train_once, "train at the first resolution and test the models at all");
  cmd->add_flag("-q,--quiet", c.quiet, "no progress messages");
}

// Config file first, flags on top (through the same parser so the values are
// validated identically).
ExperimentConfig experiment_config(const Common& c) {
  std::string text = c.config.empty() ? std::string() : read_text_file(c.config);
  text += '\n';
  if (!c.corpus.empty()) text += "corpus = " + c.corpus + '\n';
  if (c.seed) text += "seed = " + std::to_string(*c.seed) + '\n';
  if (c.folds) text += "folds = " + std::to_string(*c.folds) + '\n';
  if (!c.resolutions.empty()) text += "resolutions = " + c.resolutions + '\n';
  if (!c.network.empty()) text += "networks = " + c.network + '\n';
  if (!c.features.empty()) text += "features = " + c.features + '\n';
  if (c.fail_fast) text += "fail_fast = true\n";
  if (c.train_once) text += "train_once = true\n";
  return parse_experiment_config(text);
}

CorpusData open_corpus(const ExperimentConfig& cfg) {
  return cfg.corpus == "synthetic" ? synthetic_corpus_data(cfg.synth) : load_corpus(cfg.corpus);
}

ProgressFn progress_printer(bool quiet) {
  if (quiet) return {};
  const auto t0 = std::chrono::steady_clock::now();
  return [t0](const std::string& msg) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::fprintf(stderr, "[%7.1fs] %s\n", s, msg.c_str());
  };
}

// Lines for a stage: a fold's train or test side, or every line.
std::vector<int> stage_lines(const ExperimentConfig& cfg, const CorpusData& corpus, int fold, bool test) {
  if (fold < 0) {
    std::vector<int> all(static_cast<std::size_t>(corpus.n_lines()));
    for (int i = 0; i < corpus.n_lines(); ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
  }
  const auto folds = make_folds(corpus.n_lines(), cfg.test_lines, cfg.folds, cfg.seed);
  if (fold >= static_cast<int>(folds.size())) throw Error("fold " + std::to_string(fold) + " out of range");
  return test ? folds[static_cast<std::size_t>(fold)].test_lines : folds[static_cast<std::size_t>(fold)].train_lines;
}

// Features of one resolution from saved fits (or a fresh fit).
struct StageData {
  CorpusData corpus;
  LineFeatures features;
};

StageData stage_features(const ExperimentConfig& cfg, const std::string& fits_path, Resolution res,
                         const ProgressFn& say) {
  StageData d{open_corpus(cfg), {}};
  const Aam aam = build_corpus_model(d.corpus, cfg.aam);
  const bool has_sub = d.corpus.lip_indices.size() < aam.n_points();
  const Aam lips =
      has_sub ? extract_sub_model(aam, d.corpus.lip_indices, d.corpus.labelled_key_frames(), cfg.aam) : aam;
  std::vector<Shape> fits;
  if (!fits_path.empty()) {
    fits = read_fits(fits_path);
    if (static_cast<int>(fits.size()) != d.corpus.n_frames)
      throw Error(fits_path + ": " + std::to_string(fits.size()) + " fits for " + std::to_string(d.corpus.n_frames) +
                  " frames");
  } else {
    if (say) say("fitting " + std::to_string(d.corpus.n_frames) + " frames");
    fits = fit_corpus(d.corpus, aam, cfg.fit);
  }
  if (say) say("extracting features at " + res.str());
  d.features = std::move(extract_corpus_features(d.corpus, lips, fits, {res}, cfg.basis).front());
  return d;
}

std::vector<Transcript> pick(const std::vector<Transcript>& all, const std::vector<int>& lines) {
  std::vector<Transcript> out;
  for (int l : lines) out.push_back(all[static_cast<std::size_t>(l)]);
  return out;
}

void print_alignment(const AlignmentResult& r) {
  const ScoreRow row = make_score_row(0, 0, 0, 0.0, "", "", r);
  std::printf("N=%d H=%d S=%d D=%d I=%d Correct=%.2f%% Accuracy=%.2f%%\n", r.N, r.H, r.S, r.D, r.I, 100.0 * row.C,
              100.0 * row.A);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lipres: lip-reading accuracy versus video resolution"};
  app.require_subcommand(1);
  Common common;

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus directory");
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--config", synth_config, "corpus config file (key = value lines)");
  synth->add_option("--seed", synth_seed, "corpus seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  // build-model
  auto* build = app.add_subcommand("build-model", "build the appearance model from the key frames");
  std::string model_out;
  add_experiment_flags(build, common);
  build->add_option("--out", model_out, "model file")->required();

  // fit
  auto* fit = app.add_subcommand("fit", "fit the model to every frame");
  std::string fit_model, fit_out;
  add_experiment_flags(fit, common);
  fit->add_option("--model", fit_model, "model file (default: build from the key frames)");
  fit->add_option("--out", fit_out, "fitted landmarks file")->required();

  // degrade
  auto* degrade_cmd = app.add_subcommand("degrade", "degrade an image to a resolution and back");
  std::string degrade_in, degrade_corpus, degrade_out, degrade_res;
  int degrade_frame = -1;
  auto* in_opt = degrade_cmd->add_option("--in", degrade_in, "PGM or PNG image");
  auto* corpus_opt = degrade_cmd->add_option("--corpus", degrade_corpus, "corpus directory (with --frame)");
  degrade_cmd->add_option("--frame", degrade_frame, "corpus frame number; the whole canvas is written")
      ->needs(corpus_opt);
  in_opt->excludes(corpus_opt);
  degrade_cmd->add_option("--resolution", degrade_res, "WxH")->required();
  degrade_cmd->add_option("--out", degrade_out, "output PGM")->required();

  // train
  auto* train = app.add_subcommand("train", "train viseme models at one resolution");
  std::string train_fits, train_res, train_out;
  int train_fold = -1;
  add_experiment_flags(train, common);
  train->add_option("--fits", train_fits, "fitted landmarks (default: fit now)");
  train->add_option("--resolution", train_res, "WxH")->required();
  train->add_option("--fold", train_fold, "train on this fold's training lines (default: all lines)");
  train->add_option("--out", train_out, "model set file")->required();

  // decode
  auto* dec = app.add_subcommand("decode", "decode lines with trained viseme models");
  std::string dec_fits, dec_res, dec_models, dec_out;
  int dec_fold = -1;
  add_experiment_flags(dec, common);
  dec->add_option("--fits", dec_fits, "fitted landmarks (default: fit now)");
  dec->add_option("--resolution", dec_res, "WxH")->required();
  dec->add_option("--models", dec_models, "model set file from 'train'")->required();
  dec->add_option("--fold", dec_fold, "decode this fold's test lines (default: all lines)");
  dec->add_option("--out", dec_out, "output MLF of recognized words")->required();

  // score
  auto* score = app.add_subcommand("score", "align recognized against reference transcripts");
  std::string score_ref, score_hyp, score_dict, score_units = "viseme";
  bool score_htk = false;
  score->add_option("--ref", score_ref, "reference word MLF")->required();
  score->add_option("--hyp", score_hyp, "recognized word MLF")->required();
  score->add_option("--dict", score_dict, "pronunciation dictionary (default: the shipped one)");
  score->add_option("--units", score_units, "viseme or word")->check(CLI::IsMember({"viseme", "word"}));
  score->add_flag("--htk-costs", score_htk, "HTK alignment costs instead of unit costs");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "cross-validated sweep over resolutions");
  std::string sweep_out;
  add_experiment_flags(sweep, common);
  sweep->add_option("--out", sweep_out, "output directory")->required();

  // plot
  auto* plot = app.add_subcommand("plot", "summary tables and plot from results.csv");
  std::string plot_in, plot_out;
  plot->add_option("--results", plot_in, "results.csv")->required();
  plot->add_option("--out", plot_out, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      CorpusConfig cfg = synth_config.empty() ? CorpusConfig{} : parse_corpus_config(read_text_file(synth_config));
      if (synth_seed) cfg.seed = *synth_seed;
      const auto manifest = generate_corpus(cfg, synth_out);
      std::printf("wrote %zu files to %s\n", manifest.entries.size(), synth_out.c_str());
    } else if (*build) {
      const ExperimentConfig cfg = experiment_config(common);
      const Aam aam = build_corpus_model(open_corpus(cfg), cfg.aam);
      save_aam(model_out, aam);
      std::printf("%zu shape modes, %zu appearance modes\n", static_cast<std::size_t>(aam.shape_model.size()),
                  static_cast<std::size_t>(aam.appearance_model.size()));
    } else if (*fit) {
      const ExperimentConfig cfg = experiment_config(common);
      const CorpusData corpus = open_corpus(cfg);
      const Aam aam = fit_model.empty() ? build_corpus_model(corpus, cfg.aam) : load_aam(fit_model);
      const auto say = progress_printer(common.quiet);
      const auto fits = fit_corpus(corpus, aam, cfg.fit, [&](int i) {
        if (say && (i + 1) % 1000 == 0) say("fitted " + std::to_string(i + 1) + " frames");
      });
      write_fits(fit_out, fits);
    } else if (*degrade_cmd) {
      const Resolution target = parse_resolution(degrade_res);
      if (!degrade_corpus.empty()) {
        const CorpusData corpus = load_corpus(degrade_corpus);
        if (degrade_frame < 0 || degrade_frame >= corpus.n_frames) throw Error("degrade: --frame out of range");
        const Frame f = corpus.frame(degrade_frame);
        write_pgm(degrade_out, degrade_region(f.view(), target, {0, 0, f.canvas.width, f.canvas.height}));
      } else if (!degrade_in.empty()) {
        write_pgm(degrade_out, degrade(read_image(degrade_in), target));
      } else {
        throw Error("degrade: give --in IMAGE or --corpus DIR --frame N");
      }
    } else if (*train) {
      const ExperimentConfig cfg = experiment_config(common);
      const auto say = progress_printer(common.quiet);
      const Resolution res = parse_resolution(train_res);
      const StageData d = stage_features(cfg, train_fits, res, say);
      const auto lines = stage_lines(cfg, d.corpus, train_fold, false);
      if (cfg.features.size() != 1) throw Error("train: choose one feature set with --features");
      if (say) say("training on " + std::to_string(lines.size()) + " lines");
      const HmmSet set = train_viseme_models(observations(d.features, cfg.features.front(), lines, d.corpus.frame_rate),
                                             pick(d.corpus.words, lines), d.corpus.dict, cfg.hmm, cfg.schedule);
      save_hmm_set(train_out, set);
    } else if (*dec) {
      const ExperimentConfig cfg = experiment_config(common);
      const auto say = progress_printer(common.quiet);
      const Resolution res = parse_resolution(dec_res);
      if (cfg.features.size() != 1) throw Error("decode: choose one feature set with --features");
      if (cfg.networks.size() != 1) throw Error("decode: choose one network with --network");
      const StageData d = stage_features(cfg, dec_fits, res, say);
      const HmmSet set = load_hmm_set(dec_models);
      // The language model comes from the lines the models were trained on.
      const auto train_lines = stage_lines(cfg, d.corpus, dec_fold, false);
      const auto test_lines = stage_lines(cfg, d.corpus, dec_fold, true);
      const WordNetwork net = build_network(pick(d.corpus.words, train_lines), cfg.networks.front() == "bwn" ? 2 : 1,
                                            d.corpus.vocabulary(), cfg.discount);
      std::vector<DecodeResult> decoded;
      const auto refs = pick(d.corpus.words, test_lines);
      const AlignmentResult total =
          score_lines(set, net, observations(d.features, cfg.features.front(), test_lines, d.corpus.frame_rate), refs,
                      d.corpus.dict, cfg, &decoded);
      std::vector<Transcript> hyp;
      for (std::size_t i = 0; i < decoded.size(); ++i) {
        hyp.push_back(decoded[i].words);
        hyp.back().line_id = refs[i].line_id;
      }
      write_mlf(dec_out, hyp);
      print_alignment(total);
    } else if (*score) {
      const PronDict dict =
          score_dict.empty() ? parse_dictionary(shipped_dictionary()) : load_dictionary(score_dict);
      const auto ref = read_mlf(score_ref), hyp = read_mlf(score_hyp);
      const AlignCosts costs = score_htk ? AlignCosts::htk() : AlignCosts::unit();
      const std::vector<std::string> drop{kSil, kSp};
      AlignmentResult total;
      for (const auto& h : hyp) {
        const auto r = std::find_if(ref.begin(), ref.end(), [&](const Transcript& t) { return t.line_id == h.line_id; });
        if (r == ref.end()) throw Error("score: no reference for line " + std::to_string(h.line_id));
        if (score_units == "word") {
          std::vector<std::string> rw, hw;
          for (const auto& w : r->tokens) rw.push_back(normalize_word(w));
          for (const auto& w : h.tokens) hw.push_back(normalize_word(w));
          total += align_sequences(rw, hw, costs);
        } else {
          total += align_sequences(strip_labels(transcribe_line(*r, dict).tokens, drop),
                                   strip_labels(transcribe_line(h, dict).tokens, drop), costs);
        }
      }
      print_alignment(total);
    } else if (*sweep) {
      const ExperimentConfig cfg = experiment_config(common);
      const SweepResult result = run_experiment(cfg, progress_printer(common.quiet));
      std::filesystem::create_directories(sweep_out);
      write_text_file(std::filesystem::path(sweep_out) / "config.txt", format_experiment_config(cfg));
      if (!result.rows.empty()) emit_outputs(result.rows, sweep_out);
      for (const auto& e : result.errors)
        std::fprintf(stderr, "failed: fold %d, resolution %s, stage %s: %s\n", e.fold, e.resolution.str().c_str(),
                     e.stage.c_str(), e.message.c_str());
      std::printf("%zu rows, %zu failed cells; outputs in %s\n", result.rows.size(), result.errors.size(),
                  sweep_out.c_str());
      if (!result.errors.empty()) return 2;
    } else if (*plot) {
      emit_outputs(parse_results_csv(read_text_file(plot_in)), plot_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "lipres: %s\n", e.what());
    return 1;
  }
  return 0;
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lipres/aam.hpp"
#include "lipres/hmm.hpp"
#include "lipres/imaging.hpp"
#include "lipres/lexicon.hpp"
#include "lipres/scoring.hpp"
#include "lipres/synthcorpus.hpp"

namespace lipres {

// --- Corpus access ------------------------------------------------------------

/// Everything the pipeline needs from a corpus, real or synthetic.
struct CorpusData {
  Resolution native;
  double frame_rate = 60.0;
  std::vector<Transcript> words;  // one per line, line_id = index
  std::vector<int> line_start;    // first frame of each line
  std::vector<int> line_length;
  std::vector<int> key_frames;
  std::vector<Shape> key_shapes;  // hand (or ground-truth) landmarks of the key frames
  std::vector<std::size_t> lip_indices;
  PronDict dict;
  int n_frames = 0;
  std::function<Frame(int)> frame;

  int n_lines() const { return static_cast<int>(words.size()); }
  std::vector<LabelledFrame> labelled_key_frames() const;
  /// Sorted distinct words of all line transcripts.
  std::vector<std::string> vocabulary() const;
};

/// In-memory synthetic corpus; frames are rendered on request.
CorpusData synthetic_corpus_data(const CorpusConfig& cfg);

/// A corpus directory in the layout written by generate_corpus.
CorpusData load_corpus(const std::filesystem::path& dir);

// --- Folds ----------------------------------------------------------------------

struct FoldSpec {
  int fold_id = 0;
  std::vector<int> test_lines;   // sorted
  std::vector<int> train_lines;  // sorted

  bool operator==(const FoldSpec&) const = default;
};

/// Each fold's test set is an independent seeded draw without replacement.
std::vector<FoldSpec> make_folds(int n_lines, int n_test, int n_folds, std::uint64_t seed);

// --- Pipeline stages ------------------------------------------------------------

enum class FeatureSet { shape, appearance, combined };
std::string feature_name(FeatureSet f);
FeatureSet parse_feature_set(const std::string& name);

struct FitOptions {
  int max_iters = 40;
  double tol = 1e-4;
  double restart_ratio = 1.5;  // residual above this times the running level triggers a restart
};

/// Native AAM from the key frames.
Aam build_corpus_model(const CorpusData& corpus, const AamOptions& options);

/// Fits every frame in order, each initialized from the previous fit (the first
/// from the first key frame's landmarks, or the mean-shape instance there).
std::vector<Shape> fit_corpus(const CorpusData& corpus, const Aam& aam, const FitOptions& options,
                              const std::function<void(int)>& progress = {});

void write_fits(const std::filesystem::path& path, const std::vector<Shape>& fits);
std::vector<Shape> read_fits(const std::filesystem::path& path);

/// Shape and appearance feature streams of every line at one resolution.
struct LineFeatures {
  std::vector<Eigen::MatrixXd> shape;       // per line, dim x T
  std::vector<Eigen::MatrixXd> appearance;  // per line, dim x T
};

/// Features for several resolutions in one pass over the frames.
std::vector<LineFeatures> extract_corpus_features(const CorpusData& corpus, const Aam& lips,
                                                  const std::vector<Shape>& fits,
                                                  const std::vector<Resolution>& resolutions, AppearanceBasis basis);

std::vector<ObservationSequence> observations(const LineFeatures& f, FeatureSet set, const std::vector<int>& lines,
                                              double frame_rate);

// --- Experiment -------------------------------------------------------------------

struct ExperimentConfig {
  // corpus: "synthetic" uses `synth`; anything else is a corpus directory
  std::string corpus = "synthetic";
  CorpusConfig synth;
  std::uint64_t seed = 42;  // fold draws
  int folds = 5;
  int test_lines = 42;
  std::vector<Resolution> resolutions;  // empty = full ladder
  std::vector<std::string> networks{"uwn", "bwn"};
  std::vector<FeatureSet> features{FeatureSet::shape, FeatureSet::appearance, FeatureSet::combined};
  HmmOptions hmm;
  TrainingSchedule schedule;
  double lm_scale = 1.0;
  double word_insertion_penalty = 0.0;
  double discount = 0.5;
  std::string score_units = "viseme";  // viseme | word
  bool htk_costs = false;
  bool train_once = false;  // train at the first resolution, test at all
  bool fail_fast = false;
  AamOptions aam;
  FitOptions fit;
  AppearanceBasis basis = AppearanceBasis::per_resolution;
  int threads = 1;
};

/// Eight ladder points from 26 px down to about 1.6 px lip height (at a
/// 26 px native lip height).
std::vector<Resolution> default_sweep_resolutions();

/// "key = value" lines; unknown keys are errors. Keys prefixed "corpus." go to
/// the synthetic corpus config.
ExperimentConfig parse_experiment_config(std::string_view text);
std::string format_experiment_config(const ExperimentConfig& cfg);

struct CellError {
  int fold = 0;
  Resolution resolution;
  std::string stage;
  std::string message;
};

struct SweepResult {
  std::vector<ScoreRow> rows;
  std::vector<CellError> errors;
};

using ProgressFn = std::function<void(const std::string&)>;

SweepResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {});
/// Same, on an already loaded corpus.
SweepResult run_experiment(const ExperimentConfig& cfg, const CorpusData& corpus, const ProgressFn& progress = {});

/// Decodes `lines` and scores them against the reference transcripts.
AlignmentResult score_lines(const HmmSet& set, const WordNetwork& net, const std::vector<ObservationSequence>& obs,
                            const std::vector<Transcript>& words, const PronDict& dict, const ExperimentConfig& cfg,
                            std::vector<DecodeResult>* decoded = nullptr);

// --- Summary and outputs ------------------------------------------------------------

struct SummaryRow {
  int resolution_w = 0;
  int resolution_h = 0;
  double lip_height_px = 0.0;
  std::string network;
  std::string feature;
  int folds = 0;
  double mean_A = 0.0;
  double stderr_A = 0.0;
  double mean_C = 0.0;
  double stderr_C = 0.0;
};

/// Mean error rates (count / N) on each side of the 4 px lip-height boundary.
struct ErrorSplitRow {
  std::string network;
  std::string feature;
  std::string band;  // "below_4px" | "at_or_above_4px"
  int cells = 0;
  double insertions = 0.0;
  double deletions = 0.0;
  double substitutions = 0.0;
};

struct Summary {
  std::vector<SummaryRow> rows;        // ordered by lip height (descending), network, feature
  std::vector<ErrorSplitRow> errors;
};

Summary summarize(const std::vector<ScoreRow>& rows);

std::string format_summary_csv(const Summary& s);
std::string format_error_split_csv(const Summary& s);
std::string render_svg(const Summary& s);

/// results.csv, summary.csv, error_split.csv, accuracy_vs_lipheight.svg.
void emit_outputs(const std::vector<ScoreRow>& rows, const std::filesystem::path& out_dir);

}  // namespace lipres

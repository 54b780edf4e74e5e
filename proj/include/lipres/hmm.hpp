#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lipres/lexicon.hpp"

namespace lipres {

/// Feature vectors as columns (dim x T).
struct ObservationSequence {
  Eigen::MatrixXd frames;
  double frame_rate = 60.0;

  int size() const { return static_cast<int>(frames.cols()); }
  int dim() const { return static_cast<int>(frames.rows()); }
};

/// Diagonal-covariance mixture. Columns of means/variances are components.
struct Gmm {
  Eigen::VectorXd weights;
  Eigen::MatrixXd means;
  Eigen::MatrixXd variances;

  int dim() const { return static_cast<int>(means.rows()); }
  int n_mix() const { return static_cast<int>(weights.size()); }

  /// log w_k + log N(x; mu_k, var_k) per component (-inf for zero weight).
  Eigen::VectorXd component_log_likelihoods(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  double log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  bool operator==(const Gmm&) const = default;
};

/// Left-to-right HMM. Row/column 0 is the non-emitting entry, n_emitting+1 the
/// non-emitting exit; states[i] is the pool index of emitting state i+1.
struct Hmm {
  std::string label;
  int n_emitting = 0;
  Eigen::MatrixXd transitions;
  std::vector<int> states;

  bool is_tee() const { return transitions(0, n_emitting + 1) > 0.0; }
  bool operator==(const Hmm&) const = default;
};

/// Models share emissions through the pool: tied states hold the same index.
struct HmmSet {
  std::vector<Gmm> pool;
  std::map<std::string, Hmm> models;
  std::vector<std::vector<std::string>> tied;  // e.g. {"v18[3]", "sp[1]"}, informational
  Eigen::VectorXd variance_floor;

  int dim() const { return static_cast<int>(variance_floor.size()); }
  const Hmm& model(const std::string& label) const;
  const Gmm& emission(const std::string& label, int state) const;  // state is 1-based
  bool operator==(const HmmSet&) const = default;
};

struct HmmOptions {
  int emitting_states = 5;
  int mixtures = 5;
  double variance_floor_fraction = 1e-6;
};

struct LabelledSequence {
  ObservationSequence obs;
  Transcript labels;
};

struct BaumWelchResult {
  HmmSet set;
  std::vector<double> log_likelihood;  // total over used utterances, before each update
  std::vector<int> skipped;            // indices of utterances too short for their transcript
};

HmmSet flat_start(const std::vector<ObservationSequence>& data, const std::vector<std::string>& labels,
                  const HmmOptions& options = {});

BaumWelchResult baum_welch(const HmmSet& set, const std::vector<LabelledSequence>& data, int iterations);

/// Adds sp: one emitting state tied to the centre state of sil, with an
/// entry->exit skip.
HmmSet tie_silence(const HmmSet& set);

/// Forward/backward totals and best-path score of a fixed label sequence.
struct SequenceScores {
  double forward = 0.0;
  double backward = 0.0;
  double viterbi = 0.0;
};
SequenceScores score_sequence(const HmmSet& set, const ObservationSequence& obs, const std::vector<std::string>& labels);

struct Alignment {
  TimedTranscript visemes;  // includes sil and any sp that took frames
  std::vector<int> pronunciations;  // chosen alternative per word
  double log_likelihood = 0.0;
};

/// Viterbi over sil w1 [sp] w2 ... wn sil with every pronunciation alternative.
Alignment force_align(const HmmSet& set, const ObservationSequence& obs, const Transcript& words,
                      const VisemeDict& vdict);

/// Word loop language model. Index 0..V-1 are words. For order 2, bigram
/// rows are histories (<s>, w_0..w_{V-1}), columns targets (w_0..w_{V-1}, </s>).
struct WordNetwork {
  int order = 1;
  std::vector<std::string> vocabulary;
  Eigen::VectorXd unigram;  // log P(w)
  Eigen::MatrixXd bigram;   // log P(target | history); -inf where disallowed

  int index_of(const std::string& word) const;  // -1 when absent
  /// LM log-prob of `word` after `history` (-1 = sentence start). word = V is </s>.
  double log_prob(int history, int word) const;
};

/// Vocabulary defaults to the sorted set of words in the transcripts.
WordNetwork build_network(const std::vector<Transcript>& transcripts, int order,
                          std::vector<std::string> vocabulary = {}, double discount = 0.5);

struct DecodeResult {
  Transcript words;
  Transcript visemes;  // sil/sp stripped
  double log_score = 0.0;  // acoustic + lm_scale * LM + penalty per word
};

DecodeResult decode(const HmmSet& set, const WordNetwork& network, const ObservationSequence& obs,
                    double lm_scale, double word_insertion_penalty, const VisemeDict& vdict);

/// sil + visemes with sp between words; the post-tying training transcript.
Transcript transcribe_with_pauses(const Transcript& words, const PronDict& dict);

struct TrainingSchedule {
  int initial = 4;
  int after_tying = 2;
  int after_alignment = 2;
};

/// flat start, re-estimate, tie sil/sp, re-estimate, force-align, re-estimate.
HmmSet train_viseme_models(const std::vector<ObservationSequence>& obs, const std::vector<Transcript>& words,
                           const PronDict& dict, const HmmOptions& options = {}, const TrainingSchedule& schedule = {});

void save_hmm_set(const std::filesystem::path& path, const HmmSet& set);
HmmSet load_hmm_set(const std::filesystem::path& path);

/// Plain-text token/arc listing of the network.
std::string dump_network(const WordNetwork& network);

}  // namespace lipres

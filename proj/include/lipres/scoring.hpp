#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lipres/lexicon.hpp"

namespace lipres {

struct AlignCosts {
  int substitution = 1;
  int insertion = 1;
  int deletion = 1;

  static AlignCosts unit() { return {}; }
  /// HResults' internal weights.
  static AlignCosts htk() { return {10, 7, 7}; }
};

struct AlignedPair {
  std::optional<std::string> ref;  // nullopt = insertion
  std::optional<std::string> hyp;  // nullopt = deletion
};

struct AlignmentResult {
  int N = 0, H = 0, S = 0, D = 0, I = 0;
  std::vector<AlignedPair> pairs;

  AlignmentResult& operator+=(const AlignmentResult& o);
};

/// Minimum edit-cost alignment. Ties: more hits, then fewer substitutions,
/// then the insertion placed earliest.
AlignmentResult align_sequences(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                                AlignCosts costs = {});
inline AlignmentResult align_sequences(const Transcript& ref, const Transcript& hyp, AlignCosts costs = {}) {
  return align_sequences(ref.tokens, hyp.tokens, costs);
}

double correctness(const AlignmentResult& a);  // (N-D-S)/N
double accuracy(const AlignmentResult& a);     // (N-D-S-I)/N, may be negative

/// Removes every occurrence of the given labels (silence, short pause).
std::vector<std::string> strip_labels(const std::vector<std::string>& tokens, const std::vector<std::string>& drop);

// One scored cell of an experiment.
struct ScoreRow {
  int fold = 0;
  int resolution_w = 0;
  int resolution_h = 0;
  double lip_height_px = 0.0;
  std::string network;  // uwn | bwn
  std::string feature;   // shape | appearance | combined
  int N = 0, H = 0, S = 0, D = 0, I = 0;
  double C = 0.0;
  double A = 0.0;

  bool operator==(const ScoreRow&) const = default;
};

ScoreRow make_score_row(int fold, int w, int h, double lip_height_px, std::string network, std::string feature,
                        const AlignmentResult& totals);

std::string format_results_csv(const std::vector<ScoreRow>& rows);
std::vector<ScoreRow> parse_results_csv(std::string_view text);

}  // namespace lipres

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lipres/imaging.hpp"
#include "lipres/lexicon.hpp"
#include "lipres/shape.hpp"

namespace lipres {

/// Mouth geometry in native pixels. Landmarks are linear in these values.
struct MouthParams {
  double half_width = 35.0;
  double upper = 12.0;   // upper lip thickness
  double lower = 13.0;   // lower lip thickness
  double gap = 1.0;      // inner opening
  double inner = 26.25;  // inner contour half-width

  MouthParams operator+(const MouthParams& o) const;
  MouthParams operator*(double s) const;
};

struct VisemePrototype {
  std::string label;
  MouthParams mouth;
  double lip_tone = 0.45;         // coarse intensity of the lips
  double interior = 0.15;         // mouth interior intensity
  std::vector<double> pattern;    // coefficients of the fine texture patterns
};

struct CorpusConfig {
  std::uint64_t seed = 42;
  Resolution native_resolution{1440, 1080};
  int n_lines = 108;
  std::pair<int, int> words_per_line{3, 6};
  std::vector<std::string> vocabulary;  // empty = built-in list
  double frame_rate = 60.0;
  std::pair<int, int> frames_per_viseme{5, 12};
  std::pair<int, int> silence_frames{8, 16};
  int transition_frames = 2;            // blend ramp on each side of a boundary
  double lip_height_rest = 26.0;
  double texture_noise_std = 0.02;
  double articulation_jitter = 0.8;     // px, per segment on every mouth parameter
  double pose_drift = 0.25;             // px per frame random walk
  double pose_range = 8.0;              // px, bound on the offset from the canvas anchor
  double shape_scale = 0.5;             // prototype distance from rest, relative to the built-in table
  double pattern_amplitude = 0.04;
  double pattern_period_min = 10.0;     // native px
  double pattern_period_max = 14.0;
  int n_patterns = 4;
  double min_separation = 0.5;          // RMS landmark distance between prototypes, px at a 26 px lip height
  int min_viseme_count = 20;
  int n_key_frames = 11;                // the first frame plus random others
  int successors = 4;                   // Markov chain out-degree of each word
};

/// Built-in synthetic vocabulary (words of the shipped dictionary).
const std::vector<std::string>& default_vocabulary();

/// Text of the pronunciation dictionary shipped with the sources (data/raven.dict).
const std::string& shipped_dictionary();

/// What one frame shows: up to two visemes blended, a pose and articulation noise.
struct FrameState {
  std::vector<std::pair<std::string, double>> blend;
  Point offset;             // from the canvas anchor
  double angle = 0.0;       // radians
  MouthParams jitter{0.0, 0.0, 0.0, 0.0, 0.0};
  std::uint64_t frame_index = 0;  // selects the pixel-noise stream
};

struct RenderedFrame {
  Frame frame;
  Shape shape;
};

/// Prototypes and renderer derived from a config.
class MouthModel {
 public:
  explicit MouthModel(const CorpusConfig& cfg);

  const VisemePrototype& prototype(const std::string& label) const;
  const std::vector<VisemePrototype>& prototypes() const { return prototypes_; }
  MouthParams blended_mouth(const FrameState& state) const;
  Shape shape(const FrameState& state) const;
  /// Deterministic image (8-bit quantized) plus exact landmarks.
  RenderedFrame render(const FrameState& state) const;
  Point anchor() const { return anchor_; }
  /// Outer lip landmarks (all 20 points are lip points).
  static std::vector<std::size_t> lip_indices();
  static constexpr int kOuterPoints = 12;
  static constexpr int kInnerPoints = 8;

 private:
  void check_blend(const FrameState& state) const;

  CorpusConfig cfg_;
  std::vector<VisemePrototype> prototypes_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::pair<double, double>> waves_;  // (kx, ky) in reference pixels
  std::vector<double> phases_;
  Point anchor_;
};

/// Convenience wrapper over MouthModel.
RenderedFrame render_frame(const FrameState& state, const CorpusConfig& cfg);

struct LineTruth {
  Transcript words;
  Transcript visemes;        // sil + visemes + sil
  TimedTranscript segments;  // frame spans relative to the line's first frame
  int first_frame = 0;
  int n_frames = 0;
};

/// A generated corpus. Frames are rendered on demand.
class SyntheticCorpus {
 public:
  explicit SyntheticCorpus(const CorpusConfig& cfg);

  const CorpusConfig& config() const { return cfg_; }
  const MouthModel& model() const { return model_; }
  const PronDict& dictionary() const { return dict_; }
  const std::vector<LineTruth>& lines() const { return lines_; }
  int n_frames() const { return static_cast<int>(states_.size()); }
  const FrameState& state(int frame) const { return states_.at(static_cast<std::size_t>(frame)); }
  const std::string& label(int frame) const { return labels_.at(static_cast<std::size_t>(frame)); }
  int line_of(int frame) const { return line_of_.at(static_cast<std::size_t>(frame)); }
  Shape shape(int frame) const { return model_.shape(state(frame)); }
  RenderedFrame render(int frame) const { return model_.render(state(frame)); }
  const std::vector<int>& key_frames() const { return key_frames_; }
  /// Occurrences of each viseme label in the line transcripts.
  std::map<std::string, int> viseme_counts() const;

 private:
  CorpusConfig cfg_;
  MouthModel model_;
  PronDict dict_;
  std::vector<LineTruth> lines_;
  std::vector<FrameState> states_;
  std::vector<std::string> labels_;
  std::vector<int> line_of_;
  std::vector<int> key_frames_;
};

struct ManifestEntry {
  std::string path;  // relative to the corpus directory
  std::uintmax_t bytes = 0;
  std::string sha256;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  std::string text() const;  // one "sha256  bytes  path" line per entry
};

std::string sha256_hex(std::string_view data);

/// Writes the corpus directory: frames, landmarks, transcripts, dictionary,
/// config and manifest.
CorpusManifest generate_corpus(const CorpusConfig& cfg, const std::filesystem::path& out_dir);

/// Corpus config as "key = value" lines, and back.
std::string format_corpus_config(const CorpusConfig& cfg);
CorpusConfig parse_corpus_config(std::string_view text);

}  // namespace lipres

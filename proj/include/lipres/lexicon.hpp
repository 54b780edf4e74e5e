#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace lipres {

/// Silence viseme; also the label of the silence HMM.
inline const std::string kSil = "v18";
/// Optional inter-word short pause. Never part of a reference transcript.
inline const std::string kSp = "sp";

using Pronunciation = std::vector<std::string>;  // lowercase phones, no stress

struct PronDict {
  // word (lowercase) -> pronunciations in file order
  std::map<std::string, std::vector<Pronunciation>> entries;

  bool contains(const std::string& word) const;
  /// Case-insensitive. Throws for unknown words.
  const std::vector<Pronunciation>& lookup(const std::string& word) const;
  std::size_t size() const { return entries.size(); }
};

/// An ordered token list (words or visemes) for one poem line.
struct Transcript {
  std::vector<std::string> tokens;
  int line_id = 0;

  bool operator==(const Transcript&) const = default;
};

/// Viseme label with frame span [start, end).
struct TimedLabel {
  std::string label;
  int start = 0;
  int end = 0;

  bool operator==(const TimedLabel&) const = default;
};

struct TimedTranscript {
  std::vector<TimedLabel> labels;
  int line_id = 0;

  Transcript untimed() const;
};

/// word -> distinct viseme strings of its pronunciations, in file order.
using VisemeDict = std::map<std::string, std::vector<std::vector<std::string>>>;

/// Known CMU phones (lowercase, stress stripped).
const std::vector<std::string>& phone_inventory();
/// v01..v18.
const std::vector<std::string>& viseme_labels();
bool is_viseme_label(const std::string& label);  // v01..v18 or sp

std::string normalize_word(std::string_view word);

PronDict parse_dictionary(std::string_view text);
PronDict load_dictionary(const std::filesystem::path& path);
/// Writes CMU format (uppercase, no stress digits).
std::string format_dictionary(const PronDict& dict);

std::string phone_to_viseme(const std::string& phone);
std::vector<std::string> map_phones_to_visemes(const std::vector<std::string>& phones);

/// sil + first pronunciation of each word mapped to visemes + sil.
Transcript transcribe_line(const Transcript& words, const PronDict& dict);

VisemeDict viseme_dictionary(const PronDict& dict);

/// One transcript per non-empty line: lowercase, punctuation stripped,
/// apostrophes kept. line_id counts from 0 over non-empty lines.
std::vector<Transcript> parse_ground_truth(std::string_view text);
std::vector<Transcript> load_ground_truth(const std::filesystem::path& path);

std::string line_name(int line_id);  // "line007"

// MLF: optional `#!MLF!#`, then per transcript a `"*/lineNNN.lab"` header,
// one label per line (optionally `start end label` in 100ns units), and `.`.
std::string format_mlf(const std::vector<Transcript>& transcripts);
std::string format_mlf(const std::vector<TimedTranscript>& transcripts, double frame_rate);
std::vector<Transcript> parse_mlf(std::string_view text);
std::vector<TimedTranscript> parse_timed_mlf(std::string_view text, double frame_rate);
void write_mlf(const std::filesystem::path& path, const std::vector<Transcript>& transcripts);
std::vector<Transcript> read_mlf(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace lipres

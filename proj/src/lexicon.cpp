#include "lipres/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "lipres/error.hpp"

namespace lipres {

namespace {

// The one place the phone -> viseme classes live. CMU has no /h/, /j/, /i/,
// /u/ or /ax/; they stay in the table but are unreachable from a CMU
// dictionary. HH lands in v16 per the table's own row.
const std::map<std::string, std::string>& viseme_table() {
  static const std::map<std::string, std::string> table = [] {
    const std::vector<std::pair<std::string, std::vector<std::string>>> rows = {
        {"v01", {"p", "b", "m"}},
        {"v02", {"f", "v"}},
        {"v03", {"th", "dh"}},
        {"v04", {"t", "d", "n", "k", "g", "h", "j", "ng", "y"}},
        {"v05", {"s", "z"}},
        {"v06", {"l"}},
        {"v07", {"r"}},
        {"v08", {"sh", "zh", "ch", "jh"}},
        {"v09", {"w"}},
        {"v10", {"i", "ih"}},
        {"v11", {"eh", "ae", "ey", "ay"}},
        {"v12", {"aa", "ao", "ah"}},
        {"v13", {"uh", "er", "ax"}},
        {"v14", {"u", "uw"}},
        {"v15", {"oy"}},
        {"v16", {"iy", "hh"}},
        {"v17", {"aw", "ow"}},
        {"v18", {"sil"}},
    };
    std::map<std::string, std::string> t;
    for (const auto& [v, phones] : rows)
      for (const auto& p : phones) t.emplace(p, v);
    return t;
  }();
  return table;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> split_ws(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream in{std::string(line)};
  for (std::string tok; in >> tok;) out.push_back(tok);
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return lines;
}

int parse_line_id(const std::string& header, std::size_t lineno) {
  // "*/line012.lab" -> 12
  const auto q0 = header.find('"'), q1 = header.rfind('"');
  if (q0 != 0 || q1 == q0) throw Error("mlf line " + std::to_string(lineno) + ": malformed header " + header);
  const std::string name = header.substr(q0 + 1, q1 - q0 - 1);
  const auto slash = name.find_last_of('/');
  std::string base = slash == std::string::npos ? name : name.substr(slash + 1);
  if (base.size() > 4 && base.substr(base.size() - 4) == ".lab") base.resize(base.size() - 4);
  std::size_t i = base.size();
  while (i > 0 && std::isdigit(static_cast<unsigned char>(base[i - 1]))) --i;
  if (i == base.size()) throw Error("mlf line " + std::to_string(lineno) + ": no line number in " + header);
  return std::stoi(base.substr(i));
}

}  // namespace

bool PronDict::contains(const std::string& word) const { return entries.count(normalize_word(word)) > 0; }

const std::vector<Pronunciation>& PronDict::lookup(const std::string& word) const {
  const auto it = entries.find(normalize_word(word));
  if (it == entries.end()) throw Error("dictionary: unknown word '" + word + "'");
  return it->second;
}

Transcript TimedTranscript::untimed() const {
  Transcript t;
  t.line_id = line_id;
  for (const auto& l : labels) t.tokens.push_back(l.label);
  return t;
}

const std::vector<std::string>& phone_inventory() {
  static const std::vector<std::string> phones = {
      "aa", "ae", "ah", "ao", "aw", "ay", "b",  "ch", "d",  "dh", "eh", "er", "ey",
      "f",  "g",  "hh", "ih", "iy", "jh", "k",  "l",  "m",  "n",  "ng", "ow", "oy",
      "p",  "r",  "s",  "sh", "t",  "th", "uh", "uw", "v",  "w",  "y",  "z",  "zh"};
  return phones;
}

const std::vector<std::string>& viseme_labels() {
  static const std::vector<std::string> labels = [] {
    std::vector<std::string> v;
    for (int i = 1; i <= 18; ++i) v.push_back((i < 10 ? "v0" : "v") + std::to_string(i));
    return v;
  }();
  return labels;
}

bool is_viseme_label(const std::string& label) {
  if (label == kSp) return true;
  const auto& v = viseme_labels();
  return std::find(v.begin(), v.end(), label) != v.end();
}

std::string normalize_word(std::string_view word) { return lower(word); }

PronDict parse_dictionary(std::string_view text) {
  const std::set<std::string> known(phone_inventory().begin(), phone_inventory().end());
  PronDict dict;
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t lineno = n + 1;
    const std::string_view line = lines[n];
    if (line.substr(0, 3) == ";;;") continue;
    const auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() < 2) throw Error("dictionary line " + std::to_string(lineno) + ": no pronunciation for '" + toks[0] + "'");
    std::string word = toks[0];
    // WORD(2) -> alternative pronunciation of WORD
    if (const auto p = word.find('('); p != std::string::npos) {
      if (word.back() != ')' || p == 0 || p + 2 >= word.size())
        throw Error("dictionary line " + std::to_string(lineno) + ": malformed word '" + word + "'");
      const std::string idx = word.substr(p + 1, word.size() - p - 2);
      if (!std::all_of(idx.begin(), idx.end(), [](unsigned char c) { return std::isdigit(c); }))
        throw Error("dictionary line " + std::to_string(lineno) + ": malformed alternative '" + word + "'");
      word.resize(p);
    }
    Pronunciation pron;
    for (std::size_t i = 1; i < toks.size(); ++i) {
      std::string ph = lower(toks[i]);
      while (!ph.empty() && std::isdigit(static_cast<unsigned char>(ph.back()))) ph.pop_back();
      if (!known.count(ph))
        throw Error("dictionary line " + std::to_string(lineno) + ": unknown phone '" + toks[i] + "'");
      pron.push_back(ph);
    }
    dict.entries[normalize_word(word)].push_back(std::move(pron));
  }
  return dict;
}

PronDict load_dictionary(const std::filesystem::path& path) {
  try {
    return parse_dictionary(read_text_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string format_dictionary(const PronDict& dict) {
  std::ostringstream out;
  for (const auto& [word, prons] : dict.entries)
    for (std::size_t i = 0; i < prons.size(); ++i) {
      out << upper(word);
      if (i > 0) out << '(' << i + 1 << ')';
      out << ' ';
      for (const auto& p : prons[i]) out << ' ' << upper(p);
      out << '\n';
    }
  return out.str();
}

std::string phone_to_viseme(const std::string& phone) {
  const auto& t = viseme_table();
  const auto it = t.find(phone);
  if (it == t.end()) throw Error("no viseme for phone '" + phone + "'");
  return it->second;
}

std::vector<std::string> map_phones_to_visemes(const std::vector<std::string>& phones) {
  std::vector<std::string> out;
  out.reserve(phones.size());
  for (const auto& p : phones) out.push_back(phone_to_viseme(p));
  return out;
}

Transcript transcribe_line(const Transcript& words, const PronDict& dict) {
  if (words.tokens.empty()) throw Error("transcribe_line: line " + std::to_string(words.line_id) + " is empty");
  Transcript out;
  out.line_id = words.line_id;
  out.tokens.push_back(kSil);
  for (const auto& w : words.tokens) {
    const auto it = dict.entries.find(normalize_word(w));
    if (it == dict.entries.end() || it->second.empty())
      throw Error("transcribe_line: out-of-vocabulary word '" + w + "' in line " + std::to_string(words.line_id));
    for (auto& v : map_phones_to_visemes(it->second.front())) out.tokens.push_back(std::move(v));
  }
  out.tokens.push_back(kSil);
  return out;
}

VisemeDict viseme_dictionary(const PronDict& dict) {
  VisemeDict out;
  for (const auto& [word, prons] : dict.entries) {
    auto& strings = out[word];
    for (const auto& p : prons) {
      auto v = map_phones_to_visemes(p);
      // Identical alternatives add nothing to alignment; keep one.
      if (std::find(strings.begin(), strings.end(), v) == strings.end()) strings.push_back(std::move(v));
    }
  }
  return out;
}

std::vector<Transcript> parse_ground_truth(std::string_view text) {
  std::vector<Transcript> out;
  for (const auto line : split_lines(text)) {
    std::string cleaned;
    for (char c : line) {
      const auto u = static_cast<unsigned char>(c);
      if (std::isalnum(u) || c == '\'')
        cleaned += static_cast<char>(std::tolower(u));
      else if (std::isspace(u))
        cleaned += ' ';
      // other punctuation dropped; "--" between words is usually spaced
      else if (c == '-')
        cleaned += ' ';
    }
    Transcript t;
    for (auto& tok : split_ws(cleaned)) {
      // quotes used as punctuation ('tis keeps its apostrophe, 'lenore' does not)
      while (tok.size() > 1 && tok.back() == '\'') tok.pop_back();
      if (tok == "'") continue;
      t.tokens.push_back(tok);
    }
    if (t.tokens.empty()) continue;
    t.line_id = static_cast<int>(out.size());
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Transcript> load_ground_truth(const std::filesystem::path& path) {
  return parse_ground_truth(read_text_file(path));
}

std::string line_name(int line_id) {
  std::string n = std::to_string(line_id);
  if (n.size() < 3) n.insert(0, 3 - n.size(), '0');
  return "line" + n;
}

std::string format_mlf(const std::vector<Transcript>& transcripts) {
  std::ostringstream out;
  out << "#!MLF!#\n";
  for (const auto& t : transcripts) {
    out << "\"*/" << line_name(t.line_id) << ".lab\"\n";
    for (const auto& tok : t.tokens) out << tok << '\n';
    out << ".\n";
  }
  return out.str();
}

std::string format_mlf(const std::vector<TimedTranscript>& transcripts, double frame_rate) {
  const double unit = 1e7 / frame_rate;
  std::ostringstream out;
  out << "#!MLF!#\n";
  for (const auto& t : transcripts) {
    out << "\"*/" << line_name(t.line_id) << ".lab\"\n";
    for (const auto& l : t.labels)
      out << std::llround(l.start * unit) << ' ' << std::llround(l.end * unit) << ' ' << l.label << '\n';
    out << ".\n";
  }
  return out.str();
}

std::vector<TimedTranscript> parse_timed_mlf(std::string_view text, double frame_rate) {
  std::vector<TimedTranscript> out;
  TimedTranscript* cur = nullptr;
  const auto lines = split_lines(text);
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::size_t lineno = n + 1;
    const auto toks = split_ws(lines[n]);
    if (toks.empty()) continue;
    if (n == 0 && toks[0] == "#!MLF!#") continue;
    if (!cur) {
      if (toks.size() != 1 || toks[0].front() != '"')
        throw Error("mlf line " + std::to_string(lineno) + ": expected a quoted label file name");
      out.push_back({{}, parse_line_id(toks[0], lineno)});
      cur = &out.back();
      continue;
    }
    if (toks.size() == 1 && toks[0] == ".") {
      if (cur->labels.empty()) throw Error("mlf line " + std::to_string(lineno) + ": empty transcript");
      cur = nullptr;
      continue;
    }
    TimedLabel l;
    if (toks.size() == 1) {
      l.label = toks[0];
    } else if (toks.size() >= 3) {
      try {
        l.start = static_cast<int>(std::llround(std::stod(toks[0]) * frame_rate / 1e7));
        l.end = static_cast<int>(std::llround(std::stod(toks[1]) * frame_rate / 1e7));
      } catch (const std::exception&) {
        throw Error("mlf line " + std::to_string(lineno) + ": bad times");
      }
      l.label = toks[2];
    } else {
      throw Error("mlf line " + std::to_string(lineno) + ": malformed label line");
    }
    cur->labels.push_back(std::move(l));
  }
  if (cur) throw Error("mlf: missing '.' terminator for " + line_name(cur->line_id));
  return out;
}

std::vector<Transcript> parse_mlf(std::string_view text) {
  std::vector<Transcript> out;
  for (const auto& t : parse_timed_mlf(text, 60.0)) out.push_back(t.untimed());
  return out;
}

void write_mlf(const std::filesystem::path& path, const std::vector<Transcript>& transcripts) {
  write_text_file(path, format_mlf(transcripts));
}

std::vector<Transcript> read_mlf(const std::filesystem::path& path) {
  try {
    return parse_mlf(read_text_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace lipres

#include "lipres/scoring.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <sstream>
#include <tuple>

#include "lipres/error.hpp"

namespace lipres {

namespace {

// Lexicographic key for a partial alignment: cost, then hits (more is
// better, stored negated), then substitutions.
struct Key {
  long cost = 0;
  int neg_hits = 0;
  int subs = 0;

  auto operator<=>(const Key&) const = default;
  Key plus(long c, int h, int s) const { return {cost + c, neg_hits - h, subs + s}; }
};

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s, std::size_t lineno) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error("results csv line " + std::to_string(lineno) + ": bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s, std::size_t lineno) {
  int v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error("results csv line " + std::to_string(lineno) + ": bad integer '" + s + "'");
  return v;
}

const char* const kHeader = "fold,resolution_w,resolution_h,lip_height_px,network,feature,N,H,S,D,I,C,A";

}  // namespace

AlignmentResult& AlignmentResult::operator+=(const AlignmentResult& o) {
  N += o.N;
  H += o.H;
  S += o.S;
  D += o.D;
  I += o.I;
  pairs.insert(pairs.end(), o.pairs.begin(), o.pairs.end());
  return *this;
}

AlignmentResult align_sequences(const std::vector<std::string>& ref, const std::vector<std::string>& hyp,
                                AlignCosts costs) {
  const std::size_t n = ref.size(), m = hyp.size();
  // Suffix table: best[i][j] aligns ref[i:] with hyp[j:], so the forward
  // trace can take an insertion at the first position where one is optimal.
  std::vector<Key> best((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> Key& { return best[i * (m + 1) + j]; };
  for (std::size_t i = n + 1; i-- > 0;)
    for (std::size_t j = m + 1; j-- > 0;) {
      if (i == n && j == m) continue;
      Key k{std::numeric_limits<long>::max(), 0, 0};
      if (i < n && j < m) {
        const bool hit = ref[i] == hyp[j];
        k = std::min(k, at(i + 1, j + 1).plus(hit ? 0 : costs.substitution, hit ? 1 : 0, hit ? 0 : 1));
      }
      if (j < m) k = std::min(k, at(i, j + 1).plus(costs.insertion, 0, 0));
      if (i < n) k = std::min(k, at(i + 1, j).plus(costs.deletion, 0, 0));
      at(i, j) = k;
    }

  AlignmentResult r;
  r.N = static_cast<int>(n);
  std::size_t i = 0, j = 0;
  while (i < n || j < m) {
    const Key here = at(i, j);
    if (j < m && at(i, j + 1).plus(costs.insertion, 0, 0) == here) {
      r.pairs.push_back({std::nullopt, hyp[j]});
      ++r.I;
      ++j;
      continue;
    }
    if (i < n && j < m) {
      const bool hit = ref[i] == hyp[j];
      if (at(i + 1, j + 1).plus(hit ? 0 : costs.substitution, hit ? 1 : 0, hit ? 0 : 1) == here) {
        r.pairs.push_back({ref[i], hyp[j]});
        ++(hit ? r.H : r.S);
        ++i;
        ++j;
        continue;
      }
    }
    r.pairs.push_back({ref[i], std::nullopt});
    ++r.D;
    ++i;
  }
  return r;
}

double correctness(const AlignmentResult& a) {
  if (a.N <= 0) throw Error("correctness: reference is empty (N = 0)");
  return static_cast<double>(a.N - a.D - a.S) / a.N;
}

double accuracy(const AlignmentResult& a) {
  if (a.N <= 0) throw Error("accuracy: reference is empty (N = 0)");
  return static_cast<double>(a.N - a.D - a.S - a.I) / a.N;
}

std::vector<std::string> strip_labels(const std::vector<std::string>& tokens, const std::vector<std::string>& drop) {
  std::vector<std::string> out;
  for (const auto& t : tokens)
    if (std::find(drop.begin(), drop.end(), t) == drop.end()) out.push_back(t);
  return out;
}

ScoreRow make_score_row(int fold, int w, int h, double lip_height_px, std::string network, std::string feature,
                        const AlignmentResult& totals) {
  ScoreRow r;
  r.fold = fold;
  r.resolution_w = w;
  r.resolution_h = h;
  r.lip_height_px = lip_height_px;
  r.network = std::move(network);
  r.feature = std::move(feature);
  r.N = totals.N;
  r.H = totals.H;
  r.S = totals.S;
  r.D = totals.D;
  r.I = totals.I;
  r.C = correctness(totals);
  r.A = accuracy(totals);
  return r;
}

std::string format_results_csv(const std::vector<ScoreRow>& rows) {
  std::ostringstream out;
  out << kHeader << '\n';
  for (const auto& r : rows)
    out << r.fold << ',' << r.resolution_w << ',' << r.resolution_h << ',' << fmt_double(r.lip_height_px) << ','
        << r.network << ',' << r.feature << ',' << r.N << ',' << r.H << ',' << r.S << ',' << r.D << ',' << r.I << ','
        << fmt_double(r.C) << ',' << fmt_double(r.A) << '\n';
  return out.str();
}

std::vector<ScoreRow> parse_results_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || (line != kHeader && line != std::string(kHeader) + "\r"))
    throw Error("results csv: unexpected header");
  std::vector<ScoreRow> rows;
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 13) throw Error("results csv line " + std::to_string(lineno) + ": expected 13 fields");
    ScoreRow r;
    r.fold = parse_int(f[0], lineno);
    r.resolution_w = parse_int(f[1], lineno);
    r.resolution_h = parse_int(f[2], lineno);
    r.lip_height_px = parse_double(f[3], lineno);
    r.network = f[4];
    r.feature = f[5];
    r.N = parse_int(f[6], lineno);
    r.H = parse_int(f[7], lineno);
    r.S = parse_int(f[8], lineno);
    r.D = parse_int(f[9], lineno);
    r.I = parse_int(f[10], lineno);
    r.C = parse_double(f[11], lineno);
    r.A = parse_double(f[12], lineno);
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace lipres

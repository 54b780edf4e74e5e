#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "lipres/error.hpp"
#include "lipres/harness.hpp"

namespace lipres {

namespace {

int network_rank(const std::string& n) { return n == "uwn" ? 0 : n == "bwn" ? 1 : 2; }
int feature_rank(const std::string& f) { return f == "shape" ? 0 : f == "appearance" ? 1 : f == "combined" ? 2 : 3; }

std::string num(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

struct Stats {
  double mean = 0.0;
  double se = 0.0;
};

Stats stats(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double m = 0.0;
  for (double x : xs) m += x;
  m /= n;
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

}  // namespace

Summary summarize(const std::vector<ScoreRow>& rows) {
  if (rows.empty()) throw Error("summarize: no results");
  // key: (-lip height, w, h, network rank, network, feature rank, feature)
  using Key = std::tuple<double, int, int, int, std::string, int, std::string>;
  std::map<Key, std::vector<const ScoreRow*>> cells;
  for (const auto& r : rows)
    cells[{-r.lip_height_px, r.resolution_w, r.resolution_h, network_rank(r.network), r.network,
           feature_rank(r.feature), r.feature}]
        .push_back(&r);

  Summary s;
  for (const auto& [key, group] : cells) {
    std::set<int> folds;
    for (const auto* r : group) {
      if (!folds.insert(r->fold).second)
        throw Error("summarize: fold " + std::to_string(r->fold) + " appears twice in cell " +
                    std::to_string(r->resolution_w) + "x" + std::to_string(r->resolution_h) + " " + r->network + " " +
                    r->feature);
    }
    if (group.size() < 2)
      throw Error("summarize: cell " + std::to_string(group[0]->resolution_w) + "x" +
                  std::to_string(group[0]->resolution_h) + " " + group[0]->network + " " + group[0]->feature +
                  " has a single fold; the standard error needs at least two");
    std::vector<double> a, c;
    for (const auto* r : group) {
      a.push_back(r->A);
      c.push_back(r->C);
    }
    const Stats sa = stats(a), sc = stats(c);
    SummaryRow row;
    row.resolution_w = group[0]->resolution_w;
    row.resolution_h = group[0]->resolution_h;
    row.lip_height_px = group[0]->lip_height_px;
    row.network = group[0]->network;
    row.feature = group[0]->feature;
    row.folds = static_cast<int>(group.size());
    row.mean_A = sa.mean;
    row.stderr_A = sa.se;
    row.mean_C = sc.mean;
    row.stderr_C = sc.se;
    s.rows.push_back(std::move(row));
  }

  // Error-type rates either side of a 4 px lip height.
  using SplitKey = std::tuple<int, std::string, int, std::string, int>;
  std::map<SplitKey, ErrorSplitRow> split;
  for (const auto& r : rows) {
    if (r.N == 0) continue;
    const bool below = r.lip_height_px < 4.0;
    auto& e = split[{network_rank(r.network), r.network, feature_rank(r.feature), r.feature, below ? 1 : 0}];
    e.network = r.network;
    e.feature = r.feature;
    e.band = below ? "below_4px" : "at_or_above_4px";
    ++e.cells;
    e.insertions += static_cast<double>(r.I) / r.N;
    e.deletions += static_cast<double>(r.D) / r.N;
    e.substitutions += static_cast<double>(r.S) / r.N;
  }
  for (auto& [key, e] : split) {
    e.insertions /= e.cells;
    e.deletions /= e.cells;
    e.substitutions /= e.cells;
    s.errors.push_back(e);
  }
  return s;
}

std::string format_summary_csv(const Summary& s) {
  std::ostringstream out;
  out << "resolution_w,resolution_h,lip_height_px,network,feature,folds,mean_A,stderr_A,mean_C,stderr_C\n";
  for (const auto& r : s.rows)
    out << r.resolution_w << ',' << r.resolution_h << ',' << num(r.lip_height_px) << ',' << r.network << ','
        << r.feature << ',' << r.folds << ',' << num(r.mean_A) << ',' << num(r.stderr_A) << ',' << num(r.mean_C)
        << ',' << num(r.stderr_C) << '\n';
  return out.str();
}

std::string format_error_split_csv(const Summary& s) {
  std::ostringstream out;
  out << "network,feature,band,cells,insertion_rate,deletion_rate,substitution_rate\n";
  for (const auto& e : s.errors)
    out << e.network << ',' << e.feature << ',' << e.band << ',' << e.cells << ',' << num(e.insertions) << ','
        << num(e.deletions) << ',' << num(e.substitutions) << '\n';
  return out.str();
}

std::string render_svg(const Summary& s) {
  if (s.rows.empty()) throw Error("render_svg: empty summary");
  const double W = 900, H = 560, left = 70, right = 190, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;

  double hmin = 1e300, hmax = 0, amin = 0.0, amax = 1.0;
  for (const auto& r : s.rows) {
    hmin = std::min(hmin, r.lip_height_px);
    hmax = std::max(hmax, r.lip_height_px);
    amin = std::min(amin, r.mean_A - r.stderr_A);
    amax = std::max(amax, r.mean_A + r.stderr_A);
  }
  const double lx0 = std::floor(std::log2(hmin)), lx1 = std::max(std::ceil(std::log2(hmax)), lx0 + 1.0);
  const double y0 = std::floor(amin * 10.0) / 10.0, y1 = std::ceil(amax * 10.0) / 10.0;
  auto X = [&](double h) { return left + (std::log2(h) - lx0) / (lx1 - lx0) * pw; };
  auto Y = [&](double a) { return top + (y1 - a) / (y1 - y0) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<g stroke=\"#ddd\">\n";
  for (double k = lx0; k <= lx1 + 1e-9; k += 1.0)
    o << "<line x1=\"" << fixed(X(std::exp2(k)), 2) << "\" y1=\"" << top << "\" x2=\"" << fixed(X(std::exp2(k)), 2)
      << "\" y2=\"" << top + ph << "\"/>\n";
  for (double a = y0; a <= y1 + 1e-9; a += 0.1)
    o << "<line x1=\"" << left << "\" y1=\"" << fixed(Y(a), 2) << "\" x2=\"" << left + pw << "\" y2=\"" << fixed(Y(a), 2)
      << "\"/>\n";
  o << "</g>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double k = lx0; k <= lx1 + 1e-9; k += 1.0)
    o << "<text x=\"" << fixed(X(std::exp2(k)), 2) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
      << num(std::exp2(k)) << "</text>\n";
  for (double a = y0; a <= y1 + 1e-9; a += 0.1)
    o << "<text x=\"" << left - 8 << "\" y=\"" << fixed(Y(a) + 4, 2) << "\" text-anchor=\"end\">"
      << std::lround(a * 100.0) << "</text>\n";
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 15
    << "\" text-anchor=\"middle\">resting lip height (pixels, log scale)</text>\n";
  o << "<text transform=\"translate(18," << top + ph / 2
    << ") rotate(-90)\" text-anchor=\"middle\">accuracy (%)</text>\n";

  const std::map<std::string, std::string> colour = {
      {"shape", "#1b9e77"}, {"appearance", "#d95f02"}, {"combined", "#7570b3"}};
  std::map<std::pair<int, std::string>, std::vector<const SummaryRow*>> series;
  for (const auto& r : s.rows) series[{network_rank(r.network) * 10 + feature_rank(r.feature), r.network + " " + r.feature}].push_back(&r);
  int legend = 0;
  for (auto& [key, pts] : series) {
    std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->lip_height_px < b->lip_height_px; });
    const std::string& feature = pts[0]->feature;
    const std::string c = colour.count(feature) ? colour.at(feature) : "#444";
    const bool dashed = pts[0]->network == "uwn";
    o << "<g class=\"series\" data-network=\"" << pts[0]->network << "\" data-feature=\"" << feature << "\">\n";
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\""
      << (dashed ? " stroke-dasharray=\"5,3\"" : "") << " points=\"";
    for (const auto* p : pts) o << fixed(X(p->lip_height_px), 2) << ',' << fixed(Y(p->mean_A), 2) << ' ';
    o << "\"/>\n";
    for (const auto* p : pts) {
      const double x = X(p->lip_height_px);
      o << "<line class=\"errorbar\" stroke=\"" << c << "\" x1=\"" << fixed(x, 2) << "\" y1=\""
        << fixed(Y(p->mean_A - p->stderr_A), 2) << "\" x2=\"" << fixed(x, 2) << "\" y2=\""
        << fixed(Y(p->mean_A + p->stderr_A), 2) << "\"/>\n";
      o << "<circle class=\"point\" cx=\"" << fixed(x, 2) << "\" cy=\"" << fixed(Y(p->mean_A), 2) << "\" r=\"3\" fill=\""
        << c << "\"><title>" << p->resolution_w << 'x' << p->resolution_h << ", " << fixed(p->lip_height_px, 2)
        << " px: " << fixed(100.0 * p->mean_A, 1) << " +/- " << fixed(100.0 * p->stderr_A, 1) << "</title></circle>\n";
    }
    o << "</g>\n";
    const double ly = top + 10 + 18 * legend++;
    o << "<line x1=\"" << left + pw + 15 << "\" y1=\"" << ly << "\" x2=\"" << left + pw + 45 << "\" y2=\"" << ly
      << "\" stroke=\"" << c << "\" stroke-width=\"1.5\"" << (dashed ? " stroke-dasharray=\"5,3\"" : "") << "/>\n";
    std::string label = pts[0]->network;
    for (auto& ch : label) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    label += " " + feature;
    o << "<text x=\"" << left + pw + 52 << "\" y=\"" << ly + 4 << "\">" << label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void emit_outputs(const std::vector<ScoreRow>& rows, const std::filesystem::path& out_dir) {
  if (rows.empty()) throw Error("emit_outputs: no results to write");
  const Summary s = summarize(rows);
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "results.csv", format_results_csv(rows));
  write_text_file(out_dir / "summary.csv", format_summary_csv(s));
  write_text_file(out_dir / "error_split.csv", format_error_split_csv(s));
  write_text_file(out_dir / "accuracy_vs_lipheight.svg", render_svg(s));
}

}  // namespace lipres

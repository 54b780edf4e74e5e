#include "hmm_graph.hpp"

#include <cmath>
#include <deque>
#include <queue>

#include "lipres/error.hpp"

namespace lipres::detail {

void Graph::finalize() {
  const int n = static_cast<int>(nodes.size());
  if (start < 0 || end < 0 || is_emitting(start) || is_emitting(end))
    throw Error("hmm graph: start and end must be non-emitting nodes");

  in_begin.assign(n + 1, 0);
  out_begin.assign(n + 1, 0);
  for (const auto& a : arcs) {
    ++in_begin[a.to + 1];
    ++out_begin[a.from + 1];
  }
  for (int i = 0; i < n; ++i) {
    in_begin[i + 1] += in_begin[i];
    out_begin[i + 1] += out_begin[i];
  }
  in_arcs.assign(arcs.size(), 0);
  out_arcs.assign(arcs.size(), 0);
  std::vector<int> fill_in(in_begin.begin(), in_begin.end() - 1), fill_out(out_begin.begin(), out_begin.end() - 1);
  for (int a = 0; a < static_cast<int>(arcs.size()); ++a) {
    in_arcs[fill_in[arcs[a].to]++] = a;
    out_arcs[fill_out[arcs[a].from]++] = a;
  }

  emitting.clear();
  for (int i = 0; i < n; ++i)
    if (is_emitting(i)) emitting.push_back(i);

  // Kahn over null->null arcs, lowest id first so the order is reproducible.
  std::vector<int> indeg(n, 0);
  int n_null = 0;
  for (const auto& a : arcs)
    if (!is_emitting(a.from) && !is_emitting(a.to)) ++indeg[a.to];
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (int i = 0; i < n; ++i)
    if (!is_emitting(i)) {
      ++n_null;
      if (indeg[i] == 0) ready.push(i);
    }
  null_order.clear();
  while (!ready.empty()) {
    const int u = ready.top();
    ready.pop();
    null_order.push_back(u);
    for (int k = out_begin[u]; k < out_begin[u + 1]; ++k) {
      const int v = arcs[out_arcs[k]].to;
      if (!is_emitting(v) && --indeg[v] == 0) ready.push(v);
    }
  }
  if (static_cast<int>(null_order.size()) != n_null) throw Error("hmm graph: cycle through non-emitting nodes");
}

int Graph::min_frames() const {
  // 0-1 BFS: entering an emitting node costs one frame.
  const int n = static_cast<int>(nodes.size());
  std::vector<int> dist(n, std::numeric_limits<int>::max());
  std::deque<int> dq;
  dist[start] = 0;
  dq.push_back(start);
  while (!dq.empty()) {
    const int u = dq.front();
    dq.pop_front();
    for (int k = out_begin[u]; k < out_begin[u + 1]; ++k) {
      const int v = arcs[out_arcs[k]].to;
      const int w = is_emitting(v) ? 1 : 0;
      if (dist[u] + w < dist[v]) {
        dist[v] = dist[u] + w;
        if (w == 0)
          dq.push_front(v);
        else
          dq.push_back(v);
      }
    }
  }
  return dist[end] == std::numeric_limits<int>::max() ? -1 : dist[end];
}

Instance add_model(Graph& g, const Hmm& hmm, int tag, int trans_base) {
  const int n = hmm.n_emitting;
  std::vector<int> ids(n + 2);
  ids[0] = g.add_node(-1, tag);
  for (int i = 1; i <= n; ++i) ids[i] = g.add_node(hmm.states[i - 1], tag);
  ids[n + 1] = g.add_node(-1, -1);
  for (int i = 0; i <= n; ++i)
    for (int j = 1; j <= n + 1; ++j) {
      const double a = hmm.transitions(i, j);
      if (a > 0.0) g.add_arc(ids[i], ids[j], std::log(a), trans_base >= 0 ? trans_base + i * (n + 2) + j : -1);
    }
  return {ids[0], ids[n + 1]};
}

Eigen::MatrixXd emission_table(const HmmSet& set, const Graph& g, const ObservationSequence& obs) {
  const int T = obs.size();
  Eigen::MatrixXd logb = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(set.pool.size()), T, kLogZero);
  std::vector<char> used(set.pool.size(), 0);
  for (int node : g.emitting) used[g.nodes[node].gmm] = 1;
  const double log2pi = std::log(2.0 * M_PI);
  for (std::size_t p = 0; p < set.pool.size(); ++p) {
    if (!used[p]) continue;
    const Gmm& m = set.pool[p];
    if (m.dim() != obs.dim())
      throw Error("hmm: observation dimension " + std::to_string(obs.dim()) + " does not match model dimension " +
                  std::to_string(m.dim()));
    Eigen::MatrixXd comp(m.n_mix(), T);
    for (int k = 0; k < m.n_mix(); ++k) {
      if (m.weights[k] <= 0.0) {
        comp.row(k).setConstant(kLogZero);
        continue;
      }
      const Eigen::ArrayXd var = m.variances.col(k).array();
      const double gconst = std::log(m.weights[k]) - 0.5 * (var.log().sum() + log2pi * m.dim());
      const Eigen::ArrayXd iv = var.inverse();
      comp.row(k) =
          (gconst - 0.5 * ((obs.frames.colwise() - m.means.col(k)).array().square().colwise() * iv).colwise().sum())
              .matrix();
    }
    for (int t = 0; t < T; ++t) {
      const double mx = comp.col(t).maxCoeff();
      logb(static_cast<Eigen::Index>(p), t) =
          mx == kLogZero ? kLogZero : mx + std::log((comp.col(t).array() - mx).exp().sum());
    }
  }
  return logb;
}

Lattice forward(const Graph& g, const Eigen::MatrixXd& logb, int T) {
  const int n = static_cast<int>(g.nodes.size());
  Lattice L{T, n, std::vector<double>(static_cast<std::size_t>(T + 1) * n, kLogZero)};
  for (int t = 0; t <= T; ++t) {
    if (t > 0)
      for (int j : g.emitting) {
        double s = kLogZero;
        for (int k = g.in_begin[j]; k < g.in_begin[j + 1]; ++k) {
          const auto& a = g.arcs[g.in_arcs[k]];
          s = log_add(s, L.at(t - 1, a.from) + a.logp);
        }
        if (s != kLogZero) L.at(t, j) = s + logb(g.nodes[j].gmm, t - 1);
      }
    if (t == 0) L.at(0, g.start) = 0.0;
    for (int u : g.null_order) {
      double s = L.at(t, u);
      for (int k = g.in_begin[u]; k < g.in_begin[u + 1]; ++k) {
        const auto& a = g.arcs[g.in_arcs[k]];
        s = log_add(s, L.at(t, a.from) + a.logp);
      }
      L.at(t, u) = s;
    }
  }
  return L;
}

Lattice backward(const Graph& g, const Eigen::MatrixXd& logb, int T) {
  const int n = static_cast<int>(g.nodes.size());
  Lattice L{T, n, std::vector<double>(static_cast<std::size_t>(T + 1) * n, kLogZero)};
  auto out_sum = [&](int t, int u) {
    double s = (t == T && u == g.end) ? 0.0 : kLogZero;
    for (int k = g.out_begin[u]; k < g.out_begin[u + 1]; ++k) {
      const auto& a = g.arcs[g.out_arcs[k]];
      if (g.is_emitting(a.to)) {
        if (t < T) s = log_add(s, a.logp + logb(g.nodes[a.to].gmm, t) + L.at(t + 1, a.to));
      } else {
        s = log_add(s, a.logp + L.at(t, a.to));
      }
    }
    return s;
  };
  for (int t = T; t >= 0; --t) {
    for (auto it = g.null_order.rbegin(); it != g.null_order.rend(); ++it) L.at(t, *it) = out_sum(t, *it);
    if (t > 0)
      for (int j : g.emitting) L.at(t, j) = out_sum(t, j);
  }
  return L;
}

ViterbiPath viterbi(const Graph& g, const Eigen::MatrixXd& logb, int T) {
  const int n = static_cast<int>(g.nodes.size());
  Lattice L{T, n, std::vector<double>(static_cast<std::size_t>(T + 1) * n, kLogZero)};
  std::vector<int> bp(static_cast<std::size_t>(T + 1) * n, -1);
  auto back = [&](int t, int u) -> int& { return bp[static_cast<std::size_t>(t) * n + u]; };
  // Ties keep the first incoming arc in insertion order.
  for (int t = 0; t <= T; ++t) {
    if (t > 0)
      for (int j : g.emitting) {
        double best = kLogZero;
        int arg = -1;
        for (int k = g.in_begin[j]; k < g.in_begin[j + 1]; ++k) {
          const auto& a = g.arcs[g.in_arcs[k]];
          const double s = L.at(t - 1, a.from) + a.logp;
          if (s > best) {
            best = s;
            arg = g.in_arcs[k];
          }
        }
        if (arg >= 0) {
          L.at(t, j) = best + logb(g.nodes[j].gmm, t - 1);
          back(t, j) = arg;
        }
      }
    if (t == 0) L.at(0, g.start) = 0.0;
    for (int u : g.null_order) {
      double best = L.at(t, u);
      int arg = -1;
      for (int k = g.in_begin[u]; k < g.in_begin[u + 1]; ++k) {
        const auto& a = g.arcs[g.in_arcs[k]];
        const double s = L.at(t, a.from) + a.logp;
        if (s > best) {
          best = s;
          arg = g.in_arcs[k];
        }
      }
      L.at(t, u) = best;
      back(t, u) = arg;
    }
  }
  ViterbiPath path;
  path.score = L.at(T, g.end);
  if (path.score == kLogZero) return path;
  int t = T, u = g.end;
  path.steps.push_back({t, u});
  while (!(t == 0 && u == g.start)) {
    const int a = back(t, u);
    if (a < 0) throw Error("hmm graph: broken traceback");
    if (g.is_emitting(u)) --t;
    u = g.arcs[a].from;
    path.steps.push_back({t, u});
  }
  std::reverse(path.steps.begin(), path.steps.end());
  return path;
}

}  // namespace lipres::detail

#pragma once

// State graph shared by training, alignment and decoding. Emitting nodes
// carry a pool index; non-emitting ("null") nodes glue models together and
// are processed in topological order inside each time step.

#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "lipres/hmm.hpp"

namespace lipres::detail {

constexpr double kLogZero = -std::numeric_limits<double>::infinity();

inline double log_add(double a, double b) {
  if (a == kLogZero) return b;
  if (b == kLogZero) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

struct Graph {
  struct Node {
    int gmm = -1;   // < 0: non-emitting
    int tag = -1;   // model instance (emitting nodes and instance entries)
    int word = -1;  // word-start marker for decoding
  };
  struct Arc {
    int from = 0;
    int to = 0;
    double logp = 0.0;
    int trans = -1;  // transition accumulator slot, -1 for glue
  };

  std::vector<Node> nodes;
  std::vector<Arc> arcs;
  int start = -1;
  int end = -1;

  // filled by finalize()
  std::vector<int> emitting;
  std::vector<int> null_order;
  std::vector<int> in_begin, in_arcs;
  std::vector<int> out_begin, out_arcs;

  int add_node(int gmm = -1, int tag = -1) {
    nodes.push_back({gmm, tag, -1});
    return static_cast<int>(nodes.size()) - 1;
  }
  void add_arc(int from, int to, double logp, int trans = -1) {
    if (logp == kLogZero) return;
    arcs.push_back({from, to, logp, trans});
  }
  bool is_emitting(int n) const { return nodes[n].gmm >= 0; }

  void finalize();
  /// Fewest frames on any start->end path; -1 if end is unreachable.
  int min_frames() const;
};

/// A model instance inside a graph.
struct Instance {
  int entry = 0;
  int exit = 0;
};

/// Adds entry, emitting states and exit for `hmm`. Transition slots are
/// trans_base + i*(n+2) + j when trans_base >= 0.
Instance add_model(Graph& g, const Hmm& hmm, int tag, int trans_base = -1);

/// log b_g(o_t) for every pool entry the graph uses (rows = pool, cols = frames).
Eigen::MatrixXd emission_table(const HmmSet& set, const Graph& g, const ObservationSequence& obs);

/// Values laid out [t * n_nodes + node], t = 0..T. Emitting nodes at t hold
/// frame t (1-based); null nodes at t sit after frame t.
struct Lattice {
  int T = 0;
  int n = 0;
  std::vector<double> v;
  double& at(int t, int node) { return v[static_cast<std::size_t>(t) * n + node]; }
  double at(int t, int node) const { return v[static_cast<std::size_t>(t) * n + node]; }
};

Lattice forward(const Graph& g, const Eigen::MatrixXd& logb, int T);
Lattice backward(const Graph& g, const Eigen::MatrixXd& logb, int T);

struct ViterbiPath {
  double score = kLogZero;
  std::vector<std::pair<int, int>> steps;  // (t, node) from start to end, nulls included
};

ViterbiPath viterbi(const Graph& g, const Eigen::MatrixXd& logb, int T);

}  // namespace lipres::detail

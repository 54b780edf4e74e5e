#pragma once

// Exhaustive decoding oracle and random toy problems for the HMM code.

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "lipres/hmm.hpp"

namespace oracle {

struct DecodeOracle {
  double score = -std::numeric_limits<double>::infinity();
  std::vector<std::string> words;
  std::vector<std::string> visemes;
  double runner_up = -std::numeric_limits<double>::infinity();  // best score of a different word/viseme sequence
};

// Enumerates every word sequence, pronunciation choice and state path through
// sil w1 [sp] w2 ... wn sil, scoring each path term by term.
inline DecodeOracle brute_force_decode(const lipres::HmmSet& set, const lipres::WordNetwork& net,
                                       const lipres::ObservationSequence& obs, double lm_scale, double wip,
                                       const lipres::VisemeDict& vdict) {
  using lipres::Hmm;
  const int T = obs.size();
  const int V = static_cast<int>(net.vocabulary.size());
  const bool has_sp = set.models.count(lipres::kSp) > 0;
  DecodeOracle best;

  struct Step {
    const Hmm* hmm;
    double bonus;  // added when the model is entered
  };

  auto score_chain = [&](const std::vector<Step>& chain) {
    double top = -std::numeric_limits<double>::infinity();
    const int K = static_cast<int>(chain.size());
    std::function<void(int, int, int, double)> at_state;
    std::function<void(int, int, double)> enter = [&](int k, int t, double s) {
      if (k == K) {
        if (t == T) top = std::max(top, s);
        return;
      }
      s += chain[k].bonus;
      const Hmm& h = *chain[k].hmm;
      for (int j = 1; j <= h.n_emitting + 1; ++j) {
        const double a = h.transitions(0, j);
        if (a <= 0.0) continue;
        if (j == h.n_emitting + 1)
          enter(k + 1, t, s + std::log(a));
        else if (t < T)
          at_state(k, j, t + 1, s + std::log(a) + set.pool[h.states[j - 1]].log_likelihood(obs.frames.col(t)));
      }
    };
    at_state = [&](int k, int i, int t, double s) {
      const Hmm& h = *chain[k].hmm;
      for (int j = i; j <= h.n_emitting + 1; ++j) {
        const double a = h.transitions(i, j);
        if (a <= 0.0) continue;
        if (j == h.n_emitting + 1)
          enter(k + 1, t, s + std::log(a));
        else if (t < T)
          at_state(k, j, t + 1, s + std::log(a) + set.pool[h.states[j - 1]].log_likelihood(obs.frames.col(t)));
      }
    };
    enter(0, 0, 0.0);
    return top;
  };

  const Hmm& sil = set.model(lipres::kSil);
  std::vector<int> seq;
  std::vector<int> prons;
  std::function<void()> expand_prons;
  auto evaluate = [&]() {
    std::vector<Step> chain{{&sil, 0.0}};
    std::vector<std::string> vis;
    int prev = -1;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const auto& pron = vdict.at(net.vocabulary[seq[i]])[prons[i]];
      if (i > 0 && has_sp) chain.push_back({&set.model(lipres::kSp), 0.0});
      for (std::size_t v = 0; v < pron.size(); ++v) {
        const double bonus = v == 0 ? lm_scale * net.log_prob(prev, seq[i]) + wip : 0.0;
        chain.push_back({&set.model(pron[v]), bonus});
        vis.push_back(pron[v]);
      }
      prev = seq[i];
    }
    chain.push_back({&sil, lm_scale * net.log_prob(prev, V)});
    const double s = score_chain(chain);
    std::vector<std::string> words;
    for (int w : seq) words.push_back(net.vocabulary[w]);
    if (s > best.score) {
      if (words != best.words || vis != best.visemes) best.runner_up = std::max(best.runner_up, best.score);
      best.score = s;
      best.words = words;
      best.visemes = vis;
    } else if (words != best.words || vis != best.visemes) {
      best.runner_up = std::max(best.runner_up, s);
    }
  };
  expand_prons = [&]() {
    if (prons.size() == seq.size()) {
      evaluate();
      return;
    }
    const auto n = vdict.at(net.vocabulary[seq[prons.size()]]).size();
    for (std::size_t p = 0; p < n; ++p) {
      prons.push_back(static_cast<int>(p));
      expand_prons();
      prons.pop_back();
    }
  };
  // Each word takes at least one frame and the two silences at least one
  // each, so sequences longer than T - 2 cannot fit.
  std::function<void()> grow = [&]() {
    if (!seq.empty()) expand_prons();
    if (static_cast<int>(seq.size()) >= T - 2) return;
    for (int w = 0; w < V; ++w) {
      seq.push_back(w);
      grow();
      seq.pop_back();
    }
  };
  grow();
  return best;
}

// Random left-to-right model with n emitting states.
inline lipres::Hmm random_hmm(std::mt19937& rng, lipres::HmmSet& set, const std::string& label, int n, int dim,
                              int mixtures) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  lipres::Hmm h;
  h.label = label;
  h.n_emitting = n;
  h.transitions = Eigen::MatrixXd::Zero(n + 2, n + 2);
  h.transitions(0, 1) = 1.0;
  if (n > 1 && u(rng) < 0.3) {
    h.transitions(0, 1) = 0.7;
    h.transitions(0, 2) = 0.3;
  }
  for (int i = 1; i <= n; ++i) {
    const double self = 0.2 + 0.6 * u(rng);
    h.transitions(i, i) = self;
    h.transitions(i, i + 1) = 1.0 - self;
  }
  for (int i = 0; i < n; ++i) {
    lipres::Gmm m;
    m.weights = Eigen::VectorXd::Constant(mixtures, 1.0 / mixtures);
    m.means.resize(dim, mixtures);
    m.variances.resize(dim, mixtures);
    for (int k = 0; k < mixtures; ++k)
      for (int d = 0; d < dim; ++d) {
        m.means(d, k) = 2.0 * g(rng);
        m.variances(d, k) = 0.3 + u(rng);
      }
    h.states.push_back(static_cast<int>(set.pool.size()));
    set.pool.push_back(m);
  }
  return h;
}

struct ToyProblem {
  lipres::HmmSet set;
  lipres::WordNetwork net;
  lipres::VisemeDict vdict;
  lipres::ObservationSequence obs;
  double lm_scale = 1.0;
  double wip = 0.0;
};

// At most 2 emitting states per model, 2-3 words, 4-6 frames.
inline ToyProblem random_toy_problem(std::mt19937& rng) {
  std::uniform_int_distribution<int> coin(0, 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ToyProblem p;
  const int dim = 1 + coin(rng);
  const int mix = 1 + coin(rng);
  p.set.variance_floor = Eigen::VectorXd::Constant(dim, 1e-6);
  for (const std::string& label : std::vector<std::string>{"v01", "v02", "v03", lipres::kSil}) {
    const int n = 1 + coin(rng);
    p.set.models[label] = random_hmm(rng, p.set, label, n, dim, mix);
  }
  if (coin(rng)) p.set = lipres::tie_silence(p.set);

  const int V = 2 + coin(rng);
  const std::vector<std::string> names = {"ka", "lo", "mi"};
  const std::vector<std::string> vis = {"v01", "v02", "v03"};
  std::uniform_int_distribution<int> pick(0, 2);
  std::vector<std::string> vocab(names.begin(), names.begin() + V);
  for (const auto& w : vocab) {
    auto& prons = p.vdict[w];
    const int n_alt = u(rng) < 0.3 ? 2 : 1;
    while (static_cast<int>(prons.size()) < n_alt) {
      std::vector<std::string> pron;
      const int len = 1 + (u(rng) < 0.3 ? 1 : 0);
      for (int i = 0; i < len; ++i) pron.push_back(vis[pick(rng)]);
      if (std::find(prons.begin(), prons.end(), pron) == prons.end()) prons.push_back(pron);
    }
  }
  std::vector<lipres::Transcript> train;
  for (int i = 0; i < 4; ++i) {
    lipres::Transcript t;
    const int len = 1 + pick(rng);
    for (int k = 0; k < len; ++k) t.tokens.push_back(vocab[static_cast<std::size_t>(pick(rng)) % vocab.size()]);
    train.push_back(t);
  }
  p.net = lipres::build_network(train, 1 + coin(rng), vocab);
  p.lm_scale = coin(rng) ? 1.0 : 0.5 + 4.0 * u(rng);
  p.wip = coin(rng) ? 0.0 : -2.0 + 4.0 * u(rng);

  std::normal_distribution<double> g(0.0, 1.5);
  const int T = 4 + std::uniform_int_distribution<int>(0, 2)(rng);
  p.obs.frames.resize(dim, T);
  for (int t = 0; t < T; ++t)
    for (int d = 0; d < dim; ++d) p.obs.frames(d, t) = g(rng);
  return p;
}

}  // namespace oracle

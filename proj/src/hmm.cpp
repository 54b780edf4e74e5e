#include "lipres/hmm.hpp"

#include <algorithm>
#include <cmath>

#include "hmm_graph.hpp"
#include "lipres/error.hpp"
#include "lipres/log.hpp"

namespace lipres {

using detail::Graph;
using detail::kLogZero;

Eigen::VectorXd Gmm::component_log_likelihoods(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != dim()) throw Error("gmm: dimension mismatch");
  Eigen::VectorXd out(n_mix());
  const double log2pi = std::log(2.0 * M_PI);
  for (int k = 0; k < n_mix(); ++k) {
    if (weights[k] <= 0.0) {
      out[k] = kLogZero;
      continue;
    }
    const Eigen::ArrayXd var = variances.col(k).array();
    out[k] = std::log(weights[k]) -
             0.5 * (var.log().sum() + log2pi * dim() + ((x - means.col(k)).array().square() / var).sum());
  }
  return out;
}

double Gmm::log_likelihood(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  const Eigen::VectorXd c = component_log_likelihoods(x);
  const double mx = c.maxCoeff();
  if (mx == kLogZero) return kLogZero;
  return mx + std::log((c.array() - mx).exp().sum());
}

const Hmm& HmmSet::model(const std::string& label) const {
  const auto it = models.find(label);
  if (it == models.end()) throw Error("hmm set has no model '" + label + "'");
  return it->second;
}

const Gmm& HmmSet::emission(const std::string& label, int state) const {
  const Hmm& h = model(label);
  if (state < 1 || state > h.n_emitting) throw Error("hmm '" + label + "' has no emitting state " + std::to_string(state));
  return pool[h.states[state - 1]];
}

namespace {

void check_dims(const std::vector<const ObservationSequence*>& data) {
  if (data.empty()) throw Error("hmm: no training data");
  const int d = data.front()->dim();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i]->size() < 1) throw Error("hmm: observation sequence " + std::to_string(i) + " is empty");
    if (data[i]->dim() != d)
      throw Error("hmm: sequence " + std::to_string(i) + " has dimension " + std::to_string(data[i]->dim()) +
                  ", expected " + std::to_string(d));
  }
}

// Slots for transition counts: every model's (n+2)^2 matrix laid end to end.
std::map<std::string, int> transition_slots(const HmmSet& set, int* total) {
  std::map<std::string, int> base;
  int next = 0;
  for (const auto& [label, h] : set.models) {
    base[label] = next;
    next += (h.n_emitting + 2) * (h.n_emitting + 2);
  }
  *total = next;
  return base;
}

// start -> m1 -> m2 ... -> end. Instance tags are positions in `labels`.
Graph linear_graph(const HmmSet& set, const std::vector<std::string>& labels,
                   const std::map<std::string, int>* slots = nullptr) {
  if (labels.empty()) throw Error("hmm: empty label sequence");
  Graph g;
  g.start = g.add_node();
  int prev = g.start;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Hmm& h = set.model(labels[i]);
    const auto inst = detail::add_model(g, h, static_cast<int>(i), slots ? slots->at(labels[i]) : -1);
    g.add_arc(prev, inst.entry, 0.0);
    prev = inst.exit;
  }
  g.end = g.add_node();
  g.add_arc(prev, g.end, 0.0);
  g.finalize();
  return g;
}

struct GmmStats {
  Eigen::VectorXd occ;
  Eigen::MatrixXd s1;  // sum post * (x - mu_old)
  Eigen::MatrixXd s2;  // sum post * (x - mu_old)^2
};

// Posteriors below exp(-50) contribute nothing measurable to the sums.
constexpr double kMinLogPosterior = -50.0;

}  // namespace

HmmSet flat_start(const std::vector<ObservationSequence>& data, const std::vector<std::string>& labels,
                  const HmmOptions& options) {
  std::vector<const ObservationSequence*> ptrs;
  for (const auto& d : data) ptrs.push_back(&d);
  check_dims(ptrs);
  if (labels.empty()) throw Error("flat_start: no labels");
  if (options.emitting_states < 1 || options.mixtures < 1) throw Error("flat_start: need >= 1 state and mixture");

  const int D = data.front().dim();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(D);
  double count = 0.0;
  for (const auto& s : data) {
    sum += s.frames.rowwise().sum();
    count += s.size();
  }
  const Eigen::VectorXd mean = sum / count;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(D);
  for (const auto& s : data) var += (s.frames.colwise() - mean).array().square().matrix().rowwise().sum();
  var /= count;

  HmmSet set;
  set.variance_floor.resize(D);
  bool zero = false;
  for (int d = 0; d < D; ++d) {
    if (var[d] > 0.0) {
      set.variance_floor[d] = options.variance_floor_fraction * var[d];
    } else {
      set.variance_floor[d] = options.variance_floor_fraction;
      zero = true;
    }
  }
  if (zero) warn("flat_start: training data has zero variance in some dimension; variance floored");
  const Eigen::VectorXd v0 = var.cwiseMax(set.variance_floor);
  const Eigen::VectorXd sd = var.cwiseSqrt();

  // Mixture-splitting offsets in units of the global std.
  static const double offsets[] = {0.0, 0.2, -0.2, 0.4, -0.4};
  Gmm proto;
  const int M = options.mixtures;
  proto.weights = Eigen::VectorXd::Constant(M, 1.0 / M);
  proto.means.resize(D, M);
  proto.variances.resize(D, M);
  for (int k = 0; k < M; ++k) {
    const double off = k < 5 ? offsets[k] : 0.2 * ((k + 1) / 2) * (k % 2 ? 1.0 : -1.0);
    proto.means.col(k) = mean + off * sd;
    proto.variances.col(k) = v0;
  }

  const int n = options.emitting_states;
  for (const auto& label : labels) {
    Hmm h;
    h.label = label;
    h.n_emitting = n;
    h.transitions = Eigen::MatrixXd::Zero(n + 2, n + 2);
    h.transitions(0, 1) = 1.0;
    for (int i = 1; i <= n; ++i) {
      h.transitions(i, i) = 0.6;
      h.transitions(i, i + 1) = 0.4;
    }
    for (int i = 0; i < n; ++i) {
      h.states.push_back(static_cast<int>(set.pool.size()));
      set.pool.push_back(proto);
    }
    if (!set.models.emplace(label, std::move(h)).second) throw Error("flat_start: duplicate label '" + label + "'");
  }
  return set;
}

BaumWelchResult baum_welch(const HmmSet& set, const std::vector<LabelledSequence>& data, int iterations) {
  if (iterations < 0) throw Error("baum_welch: negative iteration count");
  BaumWelchResult res{set, {}, {}};
  if (iterations == 0) return res;
  {
    std::vector<const ObservationSequence*> ptrs;
    for (const auto& d : data) ptrs.push_back(&d.obs);
    check_dims(ptrs);
  }
  if (data.front().obs.dim() != set.dim()) throw Error("baum_welch: data dimension does not match the model set");
  for (const auto& d : data)
    for (const auto& l : d.labels.tokens) (void)set.model(l);

  int n_slots = 0;
  const auto slots = transition_slots(set, &n_slots);

  // Too-short utterances never change; decide once.
  std::vector<char> use(data.size(), 1);
  for (std::size_t u = 0; u < data.size(); ++u) {
    const Graph g = linear_graph(set, data[u].labels.tokens);
    const int need = g.min_frames();
    if (need < 0 || need > data[u].obs.size()) {
      use[u] = 0;
      res.skipped.push_back(static_cast<int>(u));
      warn("baum_welch: utterance " + std::to_string(u) + " (line " + std::to_string(data[u].labels.line_id) +
           ") has " + std::to_string(data[u].obs.size()) + " frames but its transcript needs " + std::to_string(need) +
           "; skipped");
    }
  }

  HmmSet& cur = res.set;
  const int D = cur.dim();
  for (int it = 0; it < iterations; ++it) {
    std::vector<GmmStats> stats(cur.pool.size());
    for (std::size_t p = 0; p < cur.pool.size(); ++p) {
      const int M = cur.pool[p].n_mix();
      stats[p] = {Eigen::VectorXd::Zero(M), Eigen::MatrixXd::Zero(D, M), Eigen::MatrixXd::Zero(D, M)};
    }
    std::vector<double> trans(n_slots, 0.0);
    double total = 0.0;

    for (std::size_t u = 0; u < data.size(); ++u) {
      if (!use[u]) continue;
      const auto& obs = data[u].obs;
      const int T = obs.size();
      const Graph g = linear_graph(cur, data[u].labels.tokens, &slots);
      const Eigen::MatrixXd logb = detail::emission_table(cur, g, obs);
      const auto A = detail::forward(g, logb, T);
      const auto B = detail::backward(g, logb, T);
      const double logP = A.at(T, g.end);
      if (!std::isfinite(logP)) {
        warn("baum_welch: utterance " + std::to_string(u) + " has zero likelihood; skipped this iteration");
        continue;
      }
      total += logP;

      for (int j : g.emitting) {
        const int p = g.nodes[j].gmm;
        const Gmm& m = cur.pool[p];
        auto& st = stats[p];
        for (int t = 1; t <= T; ++t) {
          const double lg = A.at(t, j) + B.at(t, j) - logP;
          if (lg < kMinLogPosterior) continue;
          const double gamma = std::exp(lg);
          const auto x = obs.frames.col(t - 1);
          const Eigen::VectorXd c = m.component_log_likelihoods(x);
          const double lb = logb(p, t - 1);
          for (int k = 0; k < m.n_mix(); ++k) {
            if (c[k] == kLogZero) continue;
            const double post = gamma * std::exp(c[k] - lb);
            const Eigen::ArrayXd dx = (x - m.means.col(k)).array();
            st.occ[k] += post;
            st.s1.col(k).array() += post * dx;
            st.s2.col(k).array() += post * dx.square();
          }
        }
      }

      for (const auto& a : g.arcs) {
        if (a.trans < 0) continue;
        double acc = 0.0;
        if (g.is_emitting(a.to)) {
          const int p = g.nodes[a.to].gmm;
          for (int t = 1; t <= T; ++t) {
            const double lg = A.at(t - 1, a.from) + a.logp + logb(p, t - 1) + B.at(t, a.to) - logP;
            if (lg > kMinLogPosterior) acc += std::exp(lg);
          }
        } else {
          for (int t = 0; t <= T; ++t) {
            const double lg = A.at(t, a.from) + a.logp + B.at(t, a.to) - logP;
            if (lg > kMinLogPosterior) acc += std::exp(lg);
          }
        }
        trans[a.trans] += acc;
      }
    }
    res.log_likelihood.push_back(total);

    // M-step. Unvisited states and rows keep their parameters.
    for (std::size_t p = 0; p < cur.pool.size(); ++p) {
      Gmm& m = cur.pool[p];
      const auto& st = stats[p];
      const double occ = st.occ.sum();
      if (occ < 1e-10) continue;
      for (int k = 0; k < m.n_mix(); ++k) {
        m.weights[k] = st.occ[k] / occ;
        if (st.occ[k] < 1e-10) continue;
        const Eigen::VectorXd shift = st.s1.col(k) / st.occ[k];
        const Eigen::VectorXd v = (st.s2.col(k) / st.occ[k]).array() - shift.array().square();
        m.means.col(k) += shift;
        m.variances.col(k) = v.cwiseMax(cur.variance_floor);
      }
    }
    for (auto& [label, h] : cur.models) {
      const int n = h.n_emitting;
      const int base = slots.at(label);
      for (int i = 0; i <= n; ++i) {
        double row = 0.0;
        for (int j = 1; j <= n + 1; ++j) row += trans[base + i * (n + 2) + j];
        if (row < 1e-10) continue;
        for (int j = 1; j <= n + 1; ++j) h.transitions(i, j) = trans[base + i * (n + 2) + j] / row;
      }
    }
  }
  return res;
}

HmmSet tie_silence(const HmmSet& set) {
  const auto it = set.models.find(kSil);
  if (it == set.models.end()) throw Error("tie_silence: set has no silence model '" + kSil + "'");
  const Hmm& sil = it->second;
  const int centre = sil.n_emitting / 2;  // 0-based; state 3 of 5
  HmmSet out = set;
  Hmm sp;
  sp.label = kSp;
  sp.n_emitting = 1;
  sp.transitions = Eigen::MatrixXd::Zero(3, 3);
  sp.transitions(0, 1) = 0.5;
  sp.transitions(0, 2) = 0.5;
  sp.transitions(1, 1) = 0.6;
  sp.transitions(1, 2) = 0.4;
  sp.states = {sil.states[centre]};
  out.models[kSp] = sp;
  std::erase_if(out.tied, [](const auto& grp) {
    return std::any_of(grp.begin(), grp.end(), [](const std::string& s) { return s.rfind(kSp + "[", 0) == 0; });
  });
  out.tied.push_back({kSil + "[" + std::to_string(centre + 1) + "]", kSp + "[1]"});
  return out;
}

SequenceScores score_sequence(const HmmSet& set, const ObservationSequence& obs,
                              const std::vector<std::string>& labels) {
  if (obs.size() < 1) throw Error("score_sequence: empty observation");
  const Graph g = linear_graph(set, labels);
  const Eigen::MatrixXd logb = detail::emission_table(set, g, obs);
  const int T = obs.size();
  SequenceScores s;
  s.forward = detail::forward(g, logb, T).at(T, g.end);
  s.backward = detail::backward(g, logb, T).at(0, g.start);
  s.viterbi = detail::viterbi(g, logb, T).score;
  return s;
}

Alignment force_align(const HmmSet& set, const ObservationSequence& obs, const Transcript& words,
                      const VisemeDict& vdict) {
  if (words.tokens.empty()) throw Error("force_align: empty transcript for line " + std::to_string(words.line_id));
  if (obs.size() < 1) throw Error("force_align: empty observation for line " + std::to_string(words.line_id));
  const Hmm& sil = set.model(kSil);
  const Hmm* sp = set.models.count(kSp) ? &set.models.at(kSp) : nullptr;

  struct Info {
    std::string label;
    int word;
    int pron;
  };
  std::vector<Info> info;
  Graph g;
  g.start = g.add_node();
  auto instance = [&](const Hmm& h, int word, int pron, int from) {
    const auto inst = detail::add_model(g, h, static_cast<int>(info.size()));
    info.push_back({h.label, word, pron});
    g.add_arc(from, inst.entry, 0.0);
    return inst.exit;
  };

  int cur = instance(sil, -1, -1, g.start);
  const int n_words = static_cast<int>(words.tokens.size());
  for (int w = 0; w < n_words; ++w) {
    const auto it = vdict.find(normalize_word(words.tokens[w]));
    if (it == vdict.end() || it->second.empty())
      throw Error("force_align: out-of-vocabulary word '" + words.tokens[w] + "' in line " +
                  std::to_string(words.line_id));
    const int out = g.add_node();
    for (int p = 0; p < static_cast<int>(it->second.size()); ++p) {
      int node = cur;
      for (const auto& v : it->second[p]) node = instance(set.model(v), w, p, node);
      g.add_arc(node, out, 0.0);
    }
    cur = out;
    if (sp && w + 1 < n_words) cur = instance(*sp, w, -1, cur);
  }
  cur = instance(sil, -1, -1, cur);
  g.end = g.add_node();
  g.add_arc(cur, g.end, 0.0);
  g.finalize();

  const int T = obs.size();
  const int need = g.min_frames();
  if (need > T)
    throw Error("force_align: line " + std::to_string(words.line_id) + " has " + std::to_string(T) +
                " frames, transcript needs " + std::to_string(need));
  const auto path = detail::viterbi(g, detail::emission_table(set, g, obs), T);
  if (path.score == kLogZero) throw Error("force_align: no path for line " + std::to_string(words.line_id));

  Alignment out;
  out.log_likelihood = path.score;
  out.visemes.line_id = words.line_id;
  out.pronunciations.assign(n_words, 0);
  int last = -1;
  for (const auto& [t, node] : path.steps) {
    if (!g.is_emitting(node)) continue;
    const int tag = g.nodes[node].tag;
    if (tag != last) {
      out.visemes.labels.push_back({info[tag].label, t - 1, t});
      if (info[tag].word >= 0 && info[tag].pron >= 0) out.pronunciations[info[tag].word] = info[tag].pron;
      last = tag;
    } else {
      out.visemes.labels.back().end = t;
    }
  }
  return out;
}

DecodeResult decode(const HmmSet& set, const WordNetwork& network, const ObservationSequence& obs, double lm_scale,
                    double word_insertion_penalty, const VisemeDict& vdict) {
  if (obs.size() < 1) throw Error("decode: empty observation");
  const int V = static_cast<int>(network.vocabulary.size());
  if (V == 0) throw Error("decode: empty network");
  const Hmm& sil = set.model(kSil);
  const Hmm* sp = set.models.count(kSp) ? &set.models.at(kSp) : nullptr;

  std::vector<std::string> inst_label;
  Graph g;
  auto instance = [&](const Hmm& h, int from) {
    const auto inst = detail::add_model(g, h, static_cast<int>(inst_label.size()));
    inst_label.push_back(h.label);
    g.add_arc(from, inst.entry, 0.0);
    return inst.exit;
  };

  g.start = g.add_node();
  const int s0 = g.add_node();
  g.add_arc(instance(sil, g.start), s0, 0.0);

  std::vector<int> entry(V), done(V), after(V);
  for (int w = 0; w < V; ++w) {
    const auto it = vdict.find(normalize_word(network.vocabulary[w]));
    if (it == vdict.end() || it->second.empty())
      throw Error("decode: network word '" + network.vocabulary[w] + "' has no viseme pronunciation");
    entry[w] = g.add_node();
    g.nodes[entry[w]].word = w;
    done[w] = g.add_node();
    for (const auto& pron : it->second) {
      if (pron.empty()) throw Error("decode: empty pronunciation for '" + network.vocabulary[w] + "'");
      int node = entry[w];
      for (const auto& v : pron) node = instance(set.model(v), node);
      g.add_arc(node, done[w], 0.0);
    }
    after[w] = sp ? instance(*sp, done[w]) : done[w];
  }
  const int fin = g.add_node();
  // Entry arcs grouped per target so ties resolve in vocabulary order.
  for (int w = 0; w < V; ++w) g.add_arc(s0, entry[w], lm_scale * network.log_prob(-1, w) + word_insertion_penalty);
  for (int h = 0; h < V; ++h)
    for (int w = 0; w < V; ++w)
      g.add_arc(after[h], entry[w], lm_scale * network.log_prob(h, w) + word_insertion_penalty);
  for (int h = 0; h < V; ++h) g.add_arc(done[h], fin, lm_scale * network.log_prob(h, V));
  g.end = g.add_node();
  g.add_arc(instance(sil, fin), g.end, 0.0);
  g.finalize();

  const auto path = detail::viterbi(g, detail::emission_table(set, g, obs), obs.size());
  if (path.score == kLogZero)
    throw Error("decode: no path (observation of " + std::to_string(obs.size()) + " frames too short)");

  DecodeResult res;
  res.log_score = path.score;
  for (const auto& [t, node] : path.steps) {
    const auto& nd = g.nodes[node];
    if (nd.word >= 0) res.words.tokens.push_back(network.vocabulary[nd.word]);
    if (!g.is_emitting(node) && nd.tag >= 0) {
      const auto& l = inst_label[nd.tag];
      if (l != kSil && l != kSp) res.visemes.tokens.push_back(l);
    }
  }
  return res;
}

Transcript transcribe_with_pauses(const Transcript& words, const PronDict& dict) {
  if (words.tokens.empty()) throw Error("transcribe: line " + std::to_string(words.line_id) + " is empty");
  Transcript out;
  out.line_id = words.line_id;
  out.tokens.push_back(kSil);
  for (std::size_t i = 0; i < words.tokens.size(); ++i) {
    const auto one = transcribe_line({{words.tokens[i]}, words.line_id}, dict);
    out.tokens.insert(out.tokens.end(), one.tokens.begin() + 1, one.tokens.end() - 1);
    if (i + 1 < words.tokens.size()) out.tokens.push_back(kSp);
  }
  out.tokens.push_back(kSil);
  return out;
}

HmmSet train_viseme_models(const std::vector<ObservationSequence>& obs, const std::vector<Transcript>& words,
                           const PronDict& dict, const HmmOptions& options, const TrainingSchedule& schedule) {
  if (obs.size() != words.size())
    throw Error("train: " + std::to_string(obs.size()) + " sequences but " + std::to_string(words.size()) +
                " transcripts");
  std::vector<LabelledSequence> data;
  for (std::size_t i = 0; i < obs.size(); ++i) data.push_back({obs[i], transcribe_line(words[i], dict)});

  HmmSet set = flat_start(obs, viseme_labels(), options);
  set = baum_welch(set, data, schedule.initial).set;
  set = tie_silence(set);
  for (std::size_t i = 0; i < obs.size(); ++i) data[i].labels = transcribe_with_pauses(words[i], dict);
  set = baum_welch(set, data, schedule.after_tying).set;

  const VisemeDict vdict = viseme_dictionary(dict);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    try {
      data[i].labels = force_align(set, obs[i], words[i], vdict).visemes.untimed();
    } catch (const Error& e) {
      warn(std::string("train: keeping unaligned transcript: ") + e.what());
    }
  }
  return baum_welch(set, data, schedule.after_alignment).set;
}

}  // namespace lipres

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "lipres/error.hpp"
#include "lipres/hmm.hpp"

namespace lipres {

int WordNetwork::index_of(const std::string& word) const {
  const auto it = std::find(vocabulary.begin(), vocabulary.end(), word);
  return it == vocabulary.end() ? -1 : static_cast<int>(it - vocabulary.begin());
}

double WordNetwork::log_prob(int history, int word) const {
  const int V = static_cast<int>(vocabulary.size());
  if (word < 0 || word > V || history < -1 || history >= V) throw Error("word network: index out of range");
  if (order == 1) return word == V ? 0.0 : unigram[word];
  return bigram(history + 1, word);
}

WordNetwork build_network(const std::vector<Transcript>& transcripts, int order, std::vector<std::string> vocabulary,
                          double discount) {
  if (transcripts.empty()) throw Error("build_network: no transcripts");
  if (order != 1 && order != 2) throw Error("build_network: order must be 1 or 2");
  if (!(discount > 0.0 && discount < 1.0)) throw Error("build_network: discount must lie in (0, 1)");
  WordNetwork net;
  net.order = order;
  if (vocabulary.empty()) {
    std::set<std::string> words;
    for (const auto& t : transcripts)
      for (const auto& w : t.tokens) words.insert(normalize_word(w));
    vocabulary.assign(words.begin(), words.end());
  } else {
    for (auto& w : vocabulary) w = normalize_word(w);
    if (std::set<std::string>(vocabulary.begin(), vocabulary.end()).size() != vocabulary.size())
      throw Error("build_network: duplicate vocabulary word");
  }
  net.vocabulary = std::move(vocabulary);
  const int V = static_cast<int>(net.vocabulary.size());
  if (V == 0) throw Error("build_network: empty vocabulary");

  // Column V counts sentence ends; row 0 of `big` is <s>.
  Eigen::VectorXd uni = Eigen::VectorXd::Zero(V + 1);
  Eigen::MatrixXd big = Eigen::MatrixXd::Zero(V + 1, V + 1);
  double n_words = 0.0;
  for (const auto& t : transcripts) {
    if (t.tokens.empty()) throw Error("build_network: empty transcript for line " + std::to_string(t.line_id));
    int prev = -1;
    for (const auto& w : t.tokens) {
      const int i = net.index_of(normalize_word(w));
      if (i < 0) throw Error("build_network: word '" + w + "' in line " + std::to_string(t.line_id) + " not in vocabulary");
      uni[i] += 1.0;
      big(prev + 1, i) += 1.0;
      n_words += 1.0;
      prev = i;
    }
    uni[V] += 1.0;
    big(prev + 1, V) += 1.0;
  }

  // Add-one over the vocabulary.
  net.unigram.resize(V);
  for (int w = 0; w < V; ++w) net.unigram[w] = std::log((uni[w] + 1.0) / (n_words + V));
  if (order == 1) return net;

  // Back-off target distribution: add-one over words and </s>.
  const double denom = n_words + uni[V] + V + 1;
  Eigen::VectorXd backoff = (uni.array() + 1.0) / denom;

  net.bigram = Eigen::MatrixXd::Constant(V + 1, V + 1, -std::numeric_limits<double>::infinity());
  for (int h = 0; h <= V; ++h) {
    // <s> cannot be followed directly by </s>.
    const int n_targets = h == 0 ? V : V + 1;
    const double ch = big.row(h).head(n_targets).sum();
    double unseen_mass = 0.0;
    int n_seen = 0;
    for (int w = 0; w < n_targets; ++w) {
      if (big(h, w) > 0.0)
        ++n_seen;
      else
        unseen_mass += backoff[w];
    }
    double allowed_mass = backoff.head(n_targets).sum();
    for (int w = 0; w < n_targets; ++w) {
      double p;
      if (ch == 0.0)
        p = backoff[w] / allowed_mass;  // unseen history
      else if (unseen_mass == 0.0)
        p = big(h, w) / ch;  // nothing to back off to
      else if (big(h, w) > 0.0)
        p = (big(h, w) - discount) / ch;
      else
        p = discount * n_seen / ch * backoff[w] / unseen_mass;
      net.bigram(h, w) = std::log(p);
    }
  }
  return net;
}

std::string dump_network(const WordNetwork& net) {
  std::ostringstream out;
  out.precision(10);
  const int V = static_cast<int>(net.vocabulary.size());
  out << "order " << net.order << "\ntokens " << V + 2 << "\n";
  out << "0 <s>\n";
  for (int w = 0; w < V; ++w) out << w + 1 << ' ' << net.vocabulary[w] << '\n';
  out << V + 1 << " </s>\n";
  out << "arcs from to logp\n";
  for (int h = -1; h < V; ++h)
    for (int w = 0; w <= V; ++w) {
      if (h == -1 && w == V) continue;
      const double lp = net.log_prob(h, w);
      if (std::isfinite(lp)) out << h + 1 << ' ' << w + 1 << ' ' << lp << '\n';
    }
  return out.str();
}

}  // namespace lipres

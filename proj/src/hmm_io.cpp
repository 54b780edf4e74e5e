#include <fstream>

#include <nlohmann/json.hpp>

#include "lipres/error.hpp"
#include "lipres/hmm.hpp"

namespace lipres {

namespace {

using nlohmann::json;

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd json_mat(const json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw Error("hmm file: bad matrix shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = j.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols) throw Error("hmm file: bad matrix shape");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

Eigen::VectorXd json_vec(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void save_hmm_set(const std::filesystem::path& path, const HmmSet& set) {
  json j;
  j["format"] = "lipres-hmm";
  j["version"] = 1;
  j["dim"] = set.dim();
  j["variance_floor"] = std::vector<double>(set.variance_floor.data(), set.variance_floor.data() + set.dim());
  json pool = json::array();
  for (const auto& g : set.pool)
    pool.push_back({{"weights", std::vector<double>(g.weights.data(), g.weights.data() + g.n_mix())},
                    {"means", mat_json(g.means.transpose())},
                    {"variances", mat_json(g.variances.transpose())}});
  j["pool"] = std::move(pool);
  json models = json::array();
  for (const auto& [label, h] : set.models)
    models.push_back(
        {{"label", label}, {"n_emitting", h.n_emitting}, {"transitions", mat_json(h.transitions)}, {"states", h.states}});
  j["models"] = std::move(models);
  j["tied"] = set.tied;
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

HmmSet load_hmm_set(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    const json j = json::parse(in);
    if (j.at("format") != "lipres-hmm") throw Error("not an hmm set");
    if (j.at("version") != 1) throw Error("unsupported version");
    HmmSet set;
    const int D = j.at("dim").get<int>();
    set.variance_floor = json_vec(j.at("variance_floor"));
    if (set.variance_floor.size() != D) throw Error("variance floor size mismatch");
    for (const auto& g : j.at("pool")) {
      Gmm m;
      m.weights = json_vec(g.at("weights"));
      m.means = json_mat(g.at("means"), m.n_mix(), D).transpose();
      m.variances = json_mat(g.at("variances"), m.n_mix(), D).transpose();
      if ((m.variances.array() <= 0.0).any()) throw Error("non-positive variance");
      set.pool.push_back(std::move(m));
    }
    for (const auto& mj : j.at("models")) {
      Hmm h;
      h.label = mj.at("label").get<std::string>();
      h.n_emitting = mj.at("n_emitting").get<int>();
      h.transitions = json_mat(mj.at("transitions"), h.n_emitting + 2, h.n_emitting + 2);
      h.states = mj.at("states").get<std::vector<int>>();
      if (static_cast<int>(h.states.size()) != h.n_emitting) throw Error("model " + h.label + ": state count mismatch");
      for (int s : h.states)
        if (s < 0 || s >= static_cast<int>(set.pool.size())) throw Error("model " + h.label + ": bad pool index");
      set.models.emplace(h.label, std::move(h));
    }
    set.tied = j.at("tied").get<std::vector<std::vector<std::string>>>();
    return set;
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace lipres

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "propdistill/graph.hpp"
#include "propdistill/nn.hpp"

namespace propdistill {

namespace io_detail {

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc())
    throw std::runtime_error("bad numeric field: '" + s + "'");
  return v;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("missing file: " + p.string());
  return f;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream f(p);
  if (!f) throw std::runtime_error("cannot write: " + p.string());
  return f;
}

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  return out;
}

}  // namespace io_detail

inline void write_matrix_csv(const std::filesystem::path& path,
                             const Matrix& m) {
  auto f = io_detail::open_out(path);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) f << ',';
      f << io_detail::format_double(m(i, j));
    }
    f << '\n';
  }
}

inline Matrix read_matrix_csv(const std::filesystem::path& path) {
  auto f = io_detail::open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    for (const std::string& field : io_detail::split(line, ','))
      row.push_back(io_detail::parse_double(field));
    if (!rows.empty() && rows.back().size() != row.size())
      throw std::runtime_error("ragged csv: " + path.string());
    rows.push_back(std::move(row));
  }
  Matrix m(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

// ---------------------------------------------------------------------
// Neutral dataset bundle: edges.tsv + features.csv + labels.csv + meta.json

inline void save_dataset(const std::filesystem::path& dir, const Graph& g) {
  std::filesystem::create_directories(dir);
  {
    auto f = io_detail::open_out(dir / "edges.tsv");
    for (const auto& [u, v] : g.edges) f << u << '\t' << v << '\n';
  }
  write_matrix_csv(dir / "features.csv", g.features);
  {
    auto f = io_detail::open_out(dir / "labels.csv");
    for (int y : g.labels) f << y << '\n';
  }
  nlohmann::json meta;
  meta["num_nodes"] = g.num_nodes;
  meta["num_classes"] = g.num_classes;
  meta["feature_dim"] = g.feature_dim();
  meta["num_edges"] = g.num_edges();
  io_detail::open_out(dir / "meta.json") << meta.dump(2) << '\n';
}

inline Graph load_dataset(const std::filesystem::path& dir) {
  nlohmann::json meta;
  io_detail::open_in(dir / "meta.json") >> meta;
  const int num_nodes = meta.at("num_nodes").get<int>();
  const int num_classes = meta.at("num_classes").get<int>();
  const int feature_dim = meta.at("feature_dim").get<int>();

  std::vector<Edge> edges;
  {
    auto f = io_detail::open_in(dir / "edges.tsv");
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto fields = io_detail::split(line, '\t');
      if (fields.size() != 2)
        throw std::runtime_error("edges.tsv: expected two fields per line");
      edges.push_back({static_cast<int>(io_detail::parse_double(fields[0])),
                       static_cast<int>(io_detail::parse_double(fields[1]))});
    }
  }

  Matrix features = read_matrix_csv(dir / "features.csv");
  if (features.rows() != num_nodes || features.cols() != feature_dim)
    throw std::runtime_error("features.csv: shape does not match meta.json");

  std::vector<int> labels;
  {
    auto f = io_detail::open_in(dir / "labels.csv");
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      labels.push_back(static_cast<int>(io_detail::parse_double(line)));
    }
  }
  if (static_cast<int>(labels.size()) != num_nodes)
    throw std::runtime_error("labels.csv: count does not match meta.json");

  Graph g = build_graph(num_nodes, edges, std::move(features),
                        std::move(labels), num_classes);
  if (meta.contains("num_edges") &&
      g.num_edges() != meta.at("num_edges").get<int>())
    throw std::runtime_error("edges.tsv: count does not match meta.json");
  return g;
}

// ---------------------------------------------------------------------
// Model checkpoints (versioned JSON; doubles round-trip exactly)

namespace io_detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j.at(0).size() : 0;
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_header(const std::string& arch) {
  nlohmann::json j;
  j["format"] = "propdistill-checkpoint";
  j["version"] = kCheckpointVersion;
  j["arch"] = arch;
  return j;
}

inline nlohmann::json read_checkpoint(const std::filesystem::path& path,
                                      const std::string& arch) {
  nlohmann::json j;
  open_in(path) >> j;
  if (j.at("format") != "propdistill-checkpoint" ||
      j.at("version").get<int>() != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint: " + path.string());
  if (j.at("arch") != arch)
    throw std::runtime_error("checkpoint arch mismatch: expected " + arch);
  return j;
}

}  // namespace io_detail

inline void save_checkpoint(const std::filesystem::path& path,
                            const MlpModel& m) {
  nlohmann::json j = io_detail::checkpoint_header("mlp");
  j["dropout"] = m.dropout_rate;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : m.layers)
    j["layers"].push_back({{"w", io_detail::matrix_to_json(l.w)},
                           {"b", io_detail::matrix_to_json(l.b)}});
  io_detail::open_out(path) << j.dump() << '\n';
}

inline MlpModel load_mlp_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json j = io_detail::read_checkpoint(path, "mlp");
  MlpModel m;
  m.dropout_rate = j.at("dropout").get<double>();
  for (const auto& l : j.at("layers"))
    m.layers.push_back({io_detail::matrix_from_json(l.at("w")),
                        io_detail::matrix_from_json(l.at("b"))});
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const SageModel& m) {
  nlohmann::json j = io_detail::checkpoint_header("sage");
  j["dropout"] = m.dropout_rate;
  auto layer = [](const SageLayer& l) {
    return nlohmann::json{{"w_self", io_detail::matrix_to_json(l.w_self)},
                          {"w_neigh", io_detail::matrix_to_json(l.w_neigh)},
                          {"b", io_detail::matrix_to_json(l.b)}};
  };
  j["l1"] = layer(m.l1);
  j["l2"] = layer(m.l2);
  io_detail::open_out(path) << j.dump() << '\n';
}

inline SageModel load_sage_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json j = io_detail::read_checkpoint(path, "sage");
  SageModel m;
  m.dropout_rate = j.at("dropout").get<double>();
  auto layer = [](const nlohmann::json& l) {
    return SageLayer{io_detail::matrix_from_json(l.at("w_self")),
                     io_detail::matrix_from_json(l.at("w_neigh")),
                     io_detail::matrix_from_json(l.at("b"))};
  };
  m.l1 = layer(j.at("l1"));
  m.l2 = layer(j.at("l2"));
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const AppnpModel& m) {
  nlohmann::json j = io_detail::checkpoint_header("appnp");
  j["gamma"] = m.gamma;
  j["power_steps"] = m.power_steps;
  j["dropout"] = m.base.dropout_rate;
  j["layers"] = nlohmann::json::array();
  for (const auto& l : m.base.layers)
    j["layers"].push_back({{"w", io_detail::matrix_to_json(l.w)},
                           {"b", io_detail::matrix_to_json(l.b)}});
  io_detail::open_out(path) << j.dump() << '\n';
}

inline AppnpModel load_appnp_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json j = io_detail::read_checkpoint(path, "appnp");
  AppnpModel m;
  m.gamma = j.at("gamma").get<double>();
  m.power_steps = j.at("power_steps").get<int>();
  m.base.dropout_rate = j.at("dropout").get<double>();
  for (const auto& l : j.at("layers"))
    m.base.layers.push_back({io_detail::matrix_from_json(l.at("w")),
                             io_detail::matrix_from_json(l.at("b"))});
  return m;
}

}  // namespace propdistill

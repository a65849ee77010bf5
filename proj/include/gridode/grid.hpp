#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridode/common.hpp"

namespace gridode::grid {

using Complex = std::complex<double>;

/// Electrical network as an undirected graph with complex edge admittances.
/// Series edges (i,j), i != j, carry line admittances y = g + jb with g >= 0;
/// self edges (i,i) are shunts to ground and may carry admittance of any
/// sign (reactors, capacitors, transformer tap equivalents).
/// Node identifiers are arbitrary ints; all matrix/vector layouts order
/// nodes by ascending identifier.
class NetworkGraph {
 public:
  void add_node(int id) {
    if (index_of(id)) fail("duplicate node id " + std::to_string(id));
    nodes_.push_back(id);
    std::sort(nodes_.begin(), nodes_.end());
  }

  void add_series_edge(int i, int j, Complex y) {
    require(i != j, "series edge endpoints must differ");
    require(index_of(i).has_value(), "unknown node " + std::to_string(i));
    require(index_of(j).has_value(), "unknown node " + std::to_string(j));
    require(y.real() >= 0.0, "series edge conductance must be >= 0");
    auto key = std::minmax(i, j);
    if (edge_map_.count(key))
      fail("duplicate edge between nodes " + std::to_string(i) + " and " +
           std::to_string(j));
    edge_map_[key] = y;
  }

  /// Adds to (not replaces) the shunt admittance at node i.
  void add_shunt(int i, Complex y) {
    require(index_of(i).has_value(), "unknown node " + std::to_string(i));
    shunt_map_[i] += y;
  }

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<int>& nodes() const { return nodes_; }

  std::optional<std::size_t> index_of(int id) const {
    auto it = std::lower_bound(nodes_.begin(), nodes_.end(), id);
    if (it == nodes_.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - nodes_.begin());
  }

  struct SeriesEdge {
    std::size_t a, b;  // node indices, a < b
    Complex y;
  };

  std::vector<SeriesEdge> series_edges() const {
    std::vector<SeriesEdge> out;
    out.reserve(edge_map_.size());
    for (const auto& [key, y] : edge_map_)
      out.push_back({*index_of(key.first), *index_of(key.second), y});
    return out;
  }

  Complex shunt_at(std::size_t idx) const {
    const auto it = shunt_map_.find(nodes_.at(idx));
    return it == shunt_map_.end() ? Complex(0.0, 0.0) : it->second;
  }

 private:
  std::vector<int> nodes_;                            // ascending ids
  std::map<std::pair<int, int>, Complex> edge_map_;   // key: (min,max)
  std::map<int, Complex> shunt_map_;                  // key: node id
};

/// Dense bus admittance matrix in per-unit, node order ascending by id.
struct AdmittanceMatrix {
  Eigen::MatrixXcd Y;
};

/// Voltage magnitudes and angles relative to the reference frame.
struct BusElectricalState {
  Eigen::VectorXd v;      // per-unit, >= 0
  Eigen::VectorXd delta;  // radians
};

inline AdmittanceMatrix build_admittance(const NetworkGraph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.node_count());
  Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    Y(i, i) = graph.shunt_at(static_cast<std::size_t>(i));
  for (const auto& e : graph.series_edges()) {
    const auto a = static_cast<Eigen::Index>(e.a);
    const auto b = static_cast<Eigen::Index>(e.b);
    Y(a, a) += e.y;
    Y(b, b) += e.y;
    Y(a, b) -= e.y;
    Y(b, a) -= e.y;
  }
  return {std::move(Y)};
}

/// Active/reactive power injected at every node, trigonometric form.
inline std::pair<Eigen::VectorXd, Eigen::VectorXd> power_injections(
    const BusElectricalState& state, const NetworkGraph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.node_count());
  require(state.v.size() == n && state.delta.size() == n,
          "state dimension does not match node count");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Complex ysh = graph.shunt_at(static_cast<std::size_t>(i));
    p(i) += state.v(i) * state.v(i) * ysh.real();
    q(i) -= state.v(i) * state.v(i) * ysh.imag();
  }
  for (const auto& e : graph.series_edges()) {
    const auto a = static_cast<Eigen::Index>(e.a);
    const auto b = static_cast<Eigen::Index>(e.b);
    const double g = e.y.real();
    const double bb = e.y.imag();
    const double dab = state.delta(a) - state.delta(b);
    const double c = std::cos(dab);
    const double s = std::sin(dab);
    // node a looking at b (delta_ab) and node b looking at a (delta_ba = -dab)
    p(a) += state.v(a) * (state.v(a) * g - state.v(b) * (g * c + bb * s));
    q(a) -= state.v(a) * (state.v(a) * bb + state.v(b) * (g * s - bb * c));
    p(b) += state.v(b) * (state.v(b) * g - state.v(a) * (g * c - bb * s));
    q(b) -= state.v(b) * (state.v(b) * bb + state.v(a) * (-g * s - bb * c));
  }
  return {std::move(p), std::move(q)};
}

// ---------------------------------------------------------------------------
// JSON import/export
// ---------------------------------------------------------------------------

inline nlohmann::json graph_to_json(const NetworkGraph& graph) {
  nlohmann::json doc;
  doc["nodes"] = graph.nodes();
  auto& edges = doc["edges"] = nlohmann::json::array();
  for (const auto& e : graph.series_edges()) {
    edges.push_back({{"i", graph.nodes()[e.a]},
                     {"j", graph.nodes()[e.b]},
                     {"g", e.y.real()},
                     {"b", e.y.imag()}});
  }
  for (std::size_t i = 0; i < graph.node_count(); ++i) {
    const Complex ysh = graph.shunt_at(i);
    if (ysh != Complex(0.0, 0.0)) {
      edges.push_back({{"i", graph.nodes()[i]},
                       {"j", graph.nodes()[i]},
                       {"g", ysh.real()},
                       {"b", ysh.imag()}});
    }
  }
  return doc;
}

inline NetworkGraph graph_from_json(const nlohmann::json& doc) {
  NetworkGraph g;
  for (int id : doc.at("nodes")) g.add_node(id);
  for (const auto& e : doc.at("edges")) {
    const int i = e.at("i");
    const int j = e.at("j");
    const Complex y(e.at("g").get<double>(), e.at("b").get<double>());
    if (i == j)
      g.add_shunt(i, y);
    else
      g.add_series_edge(i, j, y);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Matpower-subset case parsing
// ---------------------------------------------------------------------------

/// Result of ingesting a Matpower-style ".m" case file.
/// Setpoint vectors follow ascending node-id order; nodes without a
/// generator entry get zero nominal setpoints.
struct MatpowerCase {
  NetworkGraph graph;
  Eigen::VectorXd p_d_nom;      // per-unit nominal active setpoints
  Eigen::VectorXd q_d_nom;      // per-unit nominal reactive setpoints
  std::vector<int> gen_nodes;   // bus ids that host a generator
  double base_mva = 100.0;
  std::vector<std::string> warnings;
};

namespace detail {

struct MatrixTable {
  std::vector<std::vector<double>> rows;
  std::vector<int> row_lines;  // source line of each row
};

inline std::size_t line_of(const std::string& text, std::size_t pos) {
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

inline std::size_t col_of(const std::string& text, std::size_t pos) {
  const auto nl = text.rfind('\n', pos == 0 ? 0 : pos - 1);
  return nl == std::string::npos ? pos + 1 : pos - nl;
}

[[noreturn]] inline void parse_fail(const std::string& text, std::size_t pos,
                                    const std::string& what) {
  fail("matpower parse error at line " + std::to_string(line_of(text, pos)) +
       ", column " + std::to_string(col_of(text, pos)) + ": " + what);
}

inline MatrixTable parse_matrix(const std::string& text, const std::string& name) {
  const std::string key = "mpc." + name;
  std::size_t pos = text.find(key);
  if (pos == std::string::npos) fail("matpower parse error: missing table mpc." + name);
  pos = text.find('[', pos);
  if (pos == std::string::npos)
    parse_fail(text, text.find(key), "expected '[' after " + key);
  ++pos;
  MatrixTable table;
  std::vector<double> row;
  while (pos < text.size() && text[pos] != ']') {
    const char c = text[pos];
    if (c == '%') {  // comment to end of line
      while (pos < text.size() && text[pos] != '\n') ++pos;
    } else if (c == ';' || c == '\n') {
      if (!row.empty()) {
        table.rows.push_back(std::move(row));
        table.row_lines.push_back(static_cast<int>(line_of(text, pos)));
        row.clear();
      }
      ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      ++pos;
    } else {
      const char* begin = text.c_str() + pos;
      char* end = nullptr;
      const double value = std::strtod(begin, &end);
      if (end == begin) parse_fail(text, pos, "non-numeric entry");
      row.push_back(value);
      pos += static_cast<std::size_t>(end - begin);
    }
  }
  if (pos >= text.size()) parse_fail(text, text.size() - 1, "unterminated table mpc." + name);
  if (!row.empty()) {
    table.rows.push_back(std::move(row));
    table.row_lines.push_back(static_cast<int>(line_of(text, pos)));
  }
  return table;
}

inline double parse_scalar(const std::string& text, const std::string& name) {
  const std::string key = "mpc." + name;
  std::size_t pos = text.find(key);
  if (pos == std::string::npos) fail("matpower parse error: missing mpc." + name);
  pos = text.find('=', pos);
  if (pos == std::string::npos) parse_fail(text, text.find(key), "expected '='");
  ++pos;
  while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  const char* begin = text.c_str() + pos;
  char* end = nullptr;
  const double value = std::strtod(begin, &end);
  if (end == begin) parse_fail(text, pos, "non-numeric value for mpc." + name);
  return value;
}

}  // namespace detail

inline MatpowerCase parse_matpower_case(const std::string& text) {
  MatpowerCase result;
  result.base_mva = detail::parse_scalar(text, "baseMVA");
  require(result.base_mva > 0.0, "baseMVA must be positive");

  const auto bus = detail::parse_matrix(text, "bus");
  const auto branch = detail::parse_matrix(text, "branch");
  const auto gen = detail::parse_matrix(text, "gen");

  for (std::size_t r = 0; r < bus.rows.size(); ++r) {
    const auto& row = bus.rows[r];
    if (row.empty())
      fail("matpower parse error at line " + std::to_string(bus.row_lines[r]) +
           ": empty bus row");
    result.graph.add_node(static_cast<int>(row[0]));
  }
  // bus columns: BUS_I TYPE PD QD GS BS ...; Gs/Bs are MW/MVAr at v = 1 pu
  for (std::size_t r = 0; r < bus.rows.size(); ++r) {
    const auto& row = bus.rows[r];
    const double gs = row.size() > 4 ? row[4] : 0.0;
    const double bs = row.size() > 5 ? row[5] : 0.0;
    if (gs != 0.0 || bs != 0.0)
      result.graph.add_shunt(static_cast<int>(row[0]),
                             Complex(gs, bs) / result.base_mva);
  }

  // branch columns: F_BUS T_BUS BR_R BR_X BR_B RATE_A RATE_B RATE_C TAP SHIFT STATUS
  for (std::size_t r = 0; r < branch.rows.size(); ++r) {
    const auto& row = branch.rows[r];
    const int line = branch.row_lines[r];
    if (row.size() < 4)
      fail("matpower parse error at line " + std::to_string(line) +
           ": branch row needs at least 4 columns");
    const int fbus = static_cast<int>(row[0]);
    const int tbus = static_cast<int>(row[1]);
    const double rr = row[2];
    const double xx = row[3];
    const double charging = row.size() > 4 ? row[4] : 0.0;
    const double tap_raw = row.size() > 8 ? row[8] : 0.0;
    const double shift = row.size() > 9 ? row[9] : 0.0;
    const double status = row.size() > 10 ? row[10] : 1.0;
    if (status == 0.0) continue;
    if (rr == 0.0 && xx == 0.0)
      fail("matpower parse error at line " + std::to_string(line) +
           ", column 3: zero-impedance branch");
    const Complex y_series = 1.0 / Complex(rr, xx);
    const Complex y_charge(0.0, charging / 2.0);
    const double tap = tap_raw == 0.0 ? 1.0 : tap_raw;
    if (shift != 0.0)
      result.warnings.push_back("branch " + std::to_string(fbus) + "-" +
                                std::to_string(tbus) +
                                ": phase shift ignored (not representable as a "
                                "symmetric admittance)");
    if (tap != 1.0) {
      // exact pi-equivalent of a real off-nominal tap: series y/tap plus
      // corrective shunts at both terminals
      result.graph.add_series_edge(fbus, tbus, y_series / tap);
      result.graph.add_shunt(fbus, (y_series + y_charge) / (tap * tap) - y_series / tap);
      result.graph.add_shunt(tbus, (y_series + y_charge) - y_series / tap);
    } else {
      result.graph.add_series_edge(fbus, tbus, y_series);
      if (charging != 0.0) {
        result.graph.add_shunt(fbus, y_charge);
        result.graph.add_shunt(tbus, y_charge);
      }
    }
  }

  const auto n = static_cast<Eigen::Index>(result.graph.node_count());
  result.p_d_nom = Eigen::VectorXd::Zero(n);
  result.q_d_nom = Eigen::VectorXd::Zero(n);
  // gen columns: GEN_BUS PG QG ...
  for (std::size_t r = 0; r < gen.rows.size(); ++r) {
    const auto& row = gen.rows[r];
    const int line = gen.row_lines[r];
    if (row.size() < 3)
      fail("matpower parse error at line " + std::to_string(line) +
           ": gen row needs at least 3 columns");
    const int bus_id = static_cast<int>(row[0]);
    const auto idx = result.graph.index_of(bus_id);
    if (!idx)
      fail("matpower parse error at line " + std::to_string(line) +
           ": gen references unknown bus " + std::to_string(bus_id));
    result.p_d_nom(static_cast<Eigen::Index>(*idx)) += row[1] / result.base_mva;
    result.q_d_nom(static_cast<Eigen::Index>(*idx)) += row[2] / result.base_mva;
    if (std::find(result.gen_nodes.begin(), result.gen_nodes.end(), bus_id) ==
        result.gen_nodes.end())
      result.gen_nodes.push_back(bus_id);
  }
  std::sort(result.gen_nodes.begin(), result.gen_nodes.end());
  return result;
}

}  // namespace gridode::grid

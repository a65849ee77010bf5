#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridode/common.hpp"
#include "gridode/grid.hpp"

namespace gridode::dynamics {

/// Grid-forming inverter with active-power droop and first-order filters.
struct GfiParams {
  double omega_d;  // desired electrical frequency [rad/s]
  double k_p;      // frequency droop gain [rad/s per pu]
  double k_q;      // voltage droop gain [pu per pu]
  double tau;      // measurement filter time constant [s]
  double v_d;      // desired voltage magnitude [pu]
  double q_d;      // reactive power setpoint [pu]
};

/// Synchronous generator in swing form with governor droop.
struct SgParams {
  double omega_d;  // desired electrical frequency [rad/s]
  double k_p;      // governor droop gain; 1/k_p acts as damping
  double m;        // rotor inertia constant
  double k_q;      // voltage droop gain via the excitation loop
  double tau;      // voltage time constant [s]
  double v_d;      // desired voltage magnitude [pu]
  double q_d;      // reactive power setpoint [pu]
};

using UnitParams = std::variant<GfiParams, SgParams>;

inline void validate_params(const GfiParams& p) {
  require(p.omega_d > 0.0 && p.k_p > 0.0 && p.tau > 0.0 && p.v_d > 0.0 &&
              p.k_q >= 0.0,
          "gfi parameters out of range");
}

inline void validate_params(const SgParams& p) {
  require(p.omega_d > 0.0 && p.k_p > 0.0 && p.m > 0.0 && p.tau > 0.0 &&
              p.v_d > 0.0 && p.k_q >= 0.0,
          "sg parameters out of range");
}

/// One droop-controlled unit per network node. State is packed per node as
/// (delta_i, a_i, v_i) where a_i is the filtered power p_m for an inverter
/// and the rotor frequency omega for a generator. Inputs are the active
/// power setpoints p_d; outputs are every non-angle state.
struct SystemModel {
  grid::NetworkGraph graph;
  std::vector<UnitParams> units;  // by node index (ascending node id)
  int reference_node = 0;         // node id whose angle frame is used
  Eigen::VectorXd p_d_nom;        // nominal active setpoints, by node index

  Eigen::Index n_nodes() const {
    return static_cast<Eigen::Index>(graph.node_count());
  }
  Eigen::Index n_states() const { return 3 * n_nodes(); }
  Eigen::Index n_inputs() const { return n_nodes(); }
  Eigen::Index n_outputs() const { return 2 * n_nodes(); }

  static Eigen::Index delta_index(Eigen::Index node) { return 3 * node; }
  static Eigen::Index aux_index(Eigen::Index node) { return 3 * node + 1; }
  static Eigen::Index voltage_index(Eigen::Index node) { return 3 * node + 2; }

  Eigen::Index reference_index() const {
    const auto idx = graph.index_of(reference_node);
    require(idx.has_value(), "reference node not in graph");
    return static_cast<Eigen::Index>(*idx);
  }

  bool is_gfi(Eigen::Index node) const {
    return std::holds_alternative<GfiParams>(units.at(
        static_cast<std::size_t>(node)));
  }

  /// State positions visible at the output, ascending: every a_i and v_i.
  std::vector<Eigen::Index> measured_indices() const {
    std::vector<Eigen::Index> out;
    out.reserve(static_cast<std::size_t>(n_outputs()));
    for (Eigen::Index i = 0; i < n_nodes(); ++i) {
      out.push_back(aux_index(i));
      out.push_back(voltage_index(i));
    }
    return out;
  }

  /// Output channel labels in measurement order, e.g. p_m_2 / omega_3 / v_1.
  std::vector<std::string> output_names() const {
    std::vector<std::string> names;
    for (Eigen::Index i = 0; i < n_nodes(); ++i) {
      const std::string id = std::to_string(graph.nodes()[static_cast<std::size_t>(i)]);
      names.push_back((is_gfi(i) ? "p_m_" : "omega_") + id);
      names.push_back("v_" + id);
    }
    return names;
  }

  void validate() const {
    require(static_cast<Eigen::Index>(units.size()) == n_nodes(),
            "one unit per node required");
    require(graph.index_of(reference_node).has_value(),
            "reference node not in graph");
    require(p_d_nom.size() == n_nodes(), "p_d_nom size mismatch");
    for (const auto& u : units)
      std::visit([](const auto& p) { validate_params(p); }, u);
  }
};

/// Inverter frequency implied by its droop law.
inline double gfi_frequency(const GfiParams& prm, double p_m, double p_d) {
  return prm.omega_d - prm.k_p * (p_m - p_d);
}

/// Time derivatives (delta_dot, p_m_dot, v_dot) of one inverter node given
/// its electrical power injection (p, q) and the frame frequency omega_ref.
inline std::array<double, 3> gfi_rhs(const GfiParams& prm, double p_m,
                                     double v, double p, double q, double p_d,
                                     double omega_ref) {
  const double delta_dot = gfi_frequency(prm, p_m, p_d) - omega_ref;
  const double p_m_dot = (-p_m + p) / prm.tau;
  const double v_dot = (-v + prm.v_d - prm.k_q * (q - prm.q_d)) / prm.tau;
  return {delta_dot, p_m_dot, v_dot};
}

/// Time derivatives (delta_dot, omega_dot, v_dot) of one generator node.
inline std::array<double, 3> sg_rhs(const SgParams& prm, double omega,
                                    double v, double p, double q, double p_d,
                                    double omega_ref) {
  const double delta_dot = omega - omega_ref;
  const double omega_dot =
      (-(omega - prm.omega_d) / prm.k_p + p_d - p) / prm.m;
  const double v_dot = (-v + prm.v_d - prm.k_q * (q - prm.q_d)) / prm.tau;
  return {delta_dot, omega_dot, v_dot};
}

/// Frequency of the reference unit; the angle frame rotates with it, so the
/// reference node's delta_dot is identically zero.
inline double reference_frequency(const SystemModel& model,
                                  const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u) {
  const Eigen::Index r = model.reference_index();
  const auto& unit = model.units[static_cast<std::size_t>(r)];
  if (const auto* gfi = std::get_if<GfiParams>(&unit))
    return gfi_frequency(*gfi, x(SystemModel::aux_index(r)), u(r));
  return x(SystemModel::aux_index(r));  // SG: frequency is a state
}

inline double reference_frequency(const SystemModel& model,
                                  const Eigen::VectorXd& x) {
  return reference_frequency(model, x, model.p_d_nom);
}

inline grid::BusElectricalState bus_state(const SystemModel& model,
                                          const Eigen::VectorXd& x) {
  const Eigen::Index n = model.n_nodes();
  grid::BusElectricalState bus;
  bus.v.resize(n);
  bus.delta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    bus.delta(i) = x(SystemModel::delta_index(i));
    bus.v(i) = x(SystemModel::voltage_index(i));
  }
  return bus;
}

/// Full network vector field: couples every unit through the admittance
/// network's power injections.
inline Eigen::VectorXd system_rhs(const SystemModel& model,
                                  const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u) {
  const Eigen::Index n = model.n_nodes();
  require(x.size() == model.n_states(), "state size mismatch");
  require(u.size() == model.n_inputs(), "input size mismatch");
  const auto bus = bus_state(model, x);
  const auto [p, q] = grid::power_injections(bus, model.graph);
  const double omega_ref = reference_frequency(model, x, u);
  Eigen::VectorXd dx(model.n_states());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& unit = model.units[static_cast<std::size_t>(i)];
    const double a = x(SystemModel::aux_index(i));
    const double v = x(SystemModel::voltage_index(i));
    std::array<double, 3> d{};
    if (const auto* gfi = std::get_if<GfiParams>(&unit))
      d = gfi_rhs(*gfi, a, v, p(i), q(i), u(i), omega_ref);
    else
      d = sg_rhs(std::get<SgParams>(unit), a, v, p(i), q(i), u(i), omega_ref);
    dx(SystemModel::delta_index(i)) = d[0];
    dx(SystemModel::aux_index(i)) = d[1];
    dx(SystemModel::voltage_index(i)) = d[2];
  }
  return dx;
}

/// Measured output: the state with angles removed.
inline Eigen::VectorXd output_map(const SystemModel& model,
                                  const Eigen::VectorXd& x) {
  require(x.size() == model.n_states(), "state size mismatch");
  Eigen::VectorXd y(model.n_outputs());
  Eigen::Index k = 0;
  for (const auto idx : model.measured_indices()) y(k++) = x(idx);
  return y;
}

/// Setpoints that make the flat profile (delta = 0, v = v_d) an exact
/// steady state, together with that state. Requires every unit to share
/// the same desired frequency, otherwise no common rotating frame exists.
struct EquilibriumResult {
  Eigen::VectorXd x;    // steady state
  Eigen::VectorXd p_d;  // active setpoints realising it
  Eigen::VectorXd q_d;  // reactive setpoints realising it
};

inline EquilibriumResult equilibrium_setpoints(const SystemModel& model) {
  const Eigen::Index n = model.n_nodes();
  double omega_common = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = std::visit([](const auto& p) { return p.omega_d; },
                                model.units[static_cast<std::size_t>(i)]);
    if (i == 0)
      omega_common = w;
    else
      require(w == omega_common,
              "equilibrium construction needs a common desired frequency");
  }
  grid::BusElectricalState bus;
  bus.delta = Eigen::VectorXd::Zero(n);
  bus.v.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    bus.v(i) = std::visit([](const auto& p) { return p.v_d; },
                          model.units[static_cast<std::size_t>(i)]);
  const auto [p, q] = grid::power_injections(bus, model.graph);
  EquilibriumResult result;
  result.p_d = p;
  result.q_d = q;
  result.x.resize(model.n_states());
  for (Eigen::Index i = 0; i < n; ++i) {
    result.x(SystemModel::delta_index(i)) = 0.0;
    // inverters filter power, generators hold frequency
    result.x(SystemModel::aux_index(i)) =
        model.is_gfi(i) ? p(i) : omega_common;
    result.x(SystemModel::voltage_index(i)) = bus.v(i);
  }
  return result;
}

/// Writes the equilibrium setpoints back into the model (p_d_nom and each
/// unit's q_d) and returns the corresponding steady state.
inline Eigen::VectorXd apply_equilibrium_setpoints(SystemModel& model) {
  const auto eq = equilibrium_setpoints(model);
  model.p_d_nom = eq.p_d;
  for (Eigen::Index i = 0; i < model.n_nodes(); ++i) {
    std::visit([&](auto& p) { p.q_d = eq.q_d(i); },
               model.units[static_cast<std::size_t>(i)]);
  }
  return eq.x;
}

// ---------------------------------------------------------------------------
// JSON round trip
// ---------------------------------------------------------------------------

inline nlohmann::json model_to_json(const SystemModel& model) {
  nlohmann::json doc;
  doc["graph"] = grid::graph_to_json(model.graph);
  doc["reference_node"] = model.reference_node;
  doc["p_d_nom"] = std::vector<double>(
      model.p_d_nom.data(), model.p_d_nom.data() + model.p_d_nom.size());
  auto& units = doc["units"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.n_nodes(); ++i) {
    nlohmann::json u;
    u["node"] = model.graph.nodes()[static_cast<std::size_t>(i)];
    const auto& unit = model.units[static_cast<std::size_t>(i)];
    if (const auto* gfi = std::get_if<GfiParams>(&unit)) {
      u["kind"] = "gfi";
      u["omega_d"] = gfi->omega_d;
      u["k_p"] = gfi->k_p;
      u["k_q"] = gfi->k_q;
      u["tau"] = gfi->tau;
      u["v_d"] = gfi->v_d;
      u["q_d"] = gfi->q_d;
    } else {
      const auto& sg = std::get<SgParams>(unit);
      u["kind"] = "sg";
      u["omega_d"] = sg.omega_d;
      u["k_p"] = sg.k_p;
      u["m"] = sg.m;
      u["k_q"] = sg.k_q;
      u["tau"] = sg.tau;
      u["v_d"] = sg.v_d;
      u["q_d"] = sg.q_d;
    }
    units.push_back(std::move(u));
  }
  return doc;
}

inline SystemModel model_from_json(const nlohmann::json& doc) {
  SystemModel model;
  model.graph = grid::graph_from_json(doc.at("graph"));
  model.reference_node = doc.at("reference_node");
  const auto pd = doc.at("p_d_nom").get<std::vector<double>>();
  model.p_d_nom = Eigen::Map<const Eigen::VectorXd>(
      pd.data(), static_cast<Eigen::Index>(pd.size()));
  model.units.resize(model.graph.node_count());
  std::vector<bool> seen(model.graph.node_count(), false);
  for (const auto& u : doc.at("units")) {
    const int node_id = u.at("node");
    const auto idx = model.graph.index_of(node_id);
    require(idx.has_value(), "unit references unknown node");
    const std::string kind = u.at("kind");
    if (kind == "gfi") {
      model.units[*idx] = GfiParams{u.at("omega_d"), u.at("k_p"), u.at("k_q"),
                                    u.at("tau"),     u.at("v_d"), u.at("q_d")};
    } else if (kind == "sg") {
      model.units[*idx] =
          SgParams{u.at("omega_d"), u.at("k_p"), u.at("m"),  u.at("k_q"),
                   u.at("tau"),     u.at("v_d"), u.at("q_d")};
    } else {
      fail("unknown unit kind '" + kind + "'");
    }
    seen[*idx] = true;
  }
  for (bool s : seen) require(s, "every node needs a unit definition");
  model.validate();
  return model;
}

}  // namespace gridode::dynamics

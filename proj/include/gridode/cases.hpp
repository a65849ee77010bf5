#pragma once

#include <numbers>
#include <string>

#include "gridode/common.hpp"
#include "gridode/dynamics.hpp"

namespace gridode::cases {

struct BuiltinCase {
  dynamics::SystemModel model;
  Eigen::VectorXd x_eq;  // exact steady state of the shipped setpoints
};

/// Three-node meshed network: one grid-forming inverter (node 1, reference)
/// and two synchronous generators. Medium-voltage lines (R/X = 0.4), 2-6 %
/// frequency droop at nominal 50 Hz and machine inertias of 6-8 s give the
/// classic lightly damped ~1 Hz swing mode (about 10 % damping ratio), so a
/// step response stays dynamically alive for several seconds. Setpoints are
/// constructed so that the flat voltage profile is an exact equilibrium.
inline BuiltinCase three_unit_case() {
  using grid::Complex;
  const double omega_n = 100.0 * std::numbers::pi;  // 50 Hz system

  dynamics::SystemModel model;
  model.graph.add_node(1);
  model.graph.add_node(2);
  model.graph.add_node(3);
  model.graph.add_series_edge(1, 2, 1.0 / Complex(0.14, 0.35));
  model.graph.add_series_edge(1, 3, 1.0 / Complex(0.18, 0.45));
  model.graph.add_series_edge(2, 3, 1.0 / Complex(0.16, 0.40));
  model.graph.add_shunt(1, Complex(0.0, 0.02));
  model.graph.add_shunt(2, Complex(0.0, 0.02));
  model.graph.add_shunt(3, Complex(0.0, 0.02));

  model.units.resize(3);
  // q_d values are placeholders until the equilibrium pass below
  model.units[0] = dynamics::GfiParams{omega_n, 0.02 * omega_n, 0.20, 0.10, 1.00, 0.0};
  model.units[1] = dynamics::SgParams{omega_n, 0.06 * omega_n, 0.051, 0.20, 0.20, 1.03, 0.0};
  model.units[2] = dynamics::SgParams{omega_n, 0.05 * omega_n, 0.038, 0.20, 0.15, 0.97, 0.0};
  model.reference_node = 1;
  model.p_d_nom = Eigen::VectorXd::Zero(3);

  BuiltinCase result;
  result.x_eq = dynamics::apply_equilibrium_setpoints(model);
  result.model = std::move(model);
  result.model.validate();
  return result;
}

inline BuiltinCase builtin_case(const std::string& name) {
  if (name == "three-unit" || name == "default") return three_unit_case();
  fail("unknown builtin case '" + name + "' (available: three-unit)");
}

}  // namespace gridode::cases

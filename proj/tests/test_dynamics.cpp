#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "gridode/cases.hpp"
#include "gridode/dynamics.hpp"

using gridode::Rng;
using namespace gridode::dynamics;
using gridode::grid::Complex;

namespace {

constexpr double kOmegaNom = 100.0 * M_PI;

GfiParams some_gfi() { return {kOmegaNom, 0.02 * kOmegaNom, 0.1, 0.1, 1.0, 0.0}; }
SgParams some_sg() {
  return {kOmegaNom, 0.02 * kOmegaNom, 0.0255, 0.1, 0.2, 1.02, 0.0};
}

SystemModel two_node_model() {
  SystemModel m;
  m.graph.add_node(1);
  m.graph.add_node(2);
  m.graph.add_series_edge(1, 2, Complex(0.2, -2.0));
  m.graph.add_shunt(2, Complex(0.0, 0.05));
  m.units = {some_gfi(), some_sg()};
  m.reference_node = 1;
  m.p_d_nom = Eigen::Vector2d(0.3, -0.2);
  m.validate();
  return m;
}

Eigen::VectorXd random_state(Rng& rng, const SystemModel& m) {
  Eigen::VectorXd x(m.n_states());
  for (Eigen::Index i = 0; i < m.n_nodes(); ++i) {
    x(SystemModel::delta_index(i)) = rng.uniform(-0.5, 0.5);
    x(SystemModel::aux_index(i)) =
        m.is_gfi(i) ? rng.uniform(-1.0, 1.0) : kOmegaNom + rng.uniform(-2.0, 2.0);
    x(SystemModel::voltage_index(i)) = rng.uniform(0.9, 1.1);
  }
  return x;
}

}  // namespace

TEST_CASE("inverter rhs vanishes at its operating point") {
  const GfiParams prm = some_gfi();
  const auto d = gfi_rhs(prm, 0.4, prm.v_d, 0.4, prm.q_d, 0.4, prm.omega_d);
  REQUIRE(d[0] == 0.0);
  REQUIRE(d[1] == 0.0);
  REQUIRE(d[2] == 0.0);
}

TEST_CASE("inverter droop slows the angle by k_p per unit of excess power") {
  GfiParams prm = some_gfi();
  prm.k_p = 0.05;
  // p_m exceeds the setpoint by one per-unit and the frame tracks omega_d
  const auto d = gfi_rhs(prm, 1.5, prm.v_d, 1.5, prm.q_d, 0.5, prm.omega_d);
  // cancellation of the ~314 rad/s frame terms leaves ~1e-14 of noise
  REQUIRE_THAT(d[0], Catch::Matchers::WithinAbs(-0.05, 1e-12));
}

TEST_CASE("inverter rhs matches its defining expressions term by term") {
  Rng rng(5);
  const GfiParams prm = some_gfi();
  for (int i = 0; i < 100; ++i) {
    const double p_m = rng.uniform(-1, 1), v = rng.uniform(0.9, 1.1);
    const double p = rng.uniform(-1, 1), q = rng.uniform(-1, 1);
    const double p_d = rng.uniform(-1, 1), w = kOmegaNom + rng.uniform(-1, 1);
    const auto d = gfi_rhs(prm, p_m, v, p, q, p_d, w);
    REQUIRE(d[0] == prm.omega_d - prm.k_p * (p_m - p_d) - w);
    REQUIRE(d[1] == (-p_m + p) / prm.tau);
    REQUIRE(d[2] == (-v + prm.v_d - prm.k_q * (q - prm.q_d)) / prm.tau);
  }
}

TEST_CASE("generator rhs vanishes at its operating point and damps excess speed") {
  const SgParams prm = some_sg();
  const auto eq =
      sg_rhs(prm, prm.omega_d, prm.v_d, 0.7, prm.q_d, 0.7, prm.omega_d);
  REQUIRE(eq[0] == 0.0);
  REQUIRE(eq[1] == 0.0);
  REQUIRE(eq[2] == 0.0);

  SgParams drp = some_sg();
  drp.m = 2.0;
  drp.k_p = 0.05;
  // 0.1 rad/s over speed with balanced power: omega_dot = -0.1/0.05/2 = -1
  const auto d = sg_rhs(drp, drp.omega_d + 0.1, drp.v_d, 0.7, drp.q_d, 0.7,
                        drp.omega_d);
  REQUIRE_THAT(d[1], Catch::Matchers::WithinAbs(-1.0, 1e-12));
}

TEST_CASE("inverter frequency follows the droop law") {
  GfiParams prm = some_gfi();
  prm.omega_d = 314.159;
  prm.k_p = 0.05;
  REQUIRE(gfi_frequency(prm, 0.6, 0.6) == 314.159);
  REQUIRE_THAT(gfi_frequency(prm, 1.0, 0.6),
               Catch::Matchers::WithinAbs(314.139, 1e-12));
}

TEST_CASE("reference frequency: generator state passes through, inverter uses droop") {
  SystemModel m = two_node_model();
  m.reference_node = 2;  // the SG
  Eigen::VectorXd x = Eigen::VectorXd::Zero(6);
  x(SystemModel::aux_index(1)) = 314.16;
  x(SystemModel::voltage_index(0)) = 1.0;
  x(SystemModel::voltage_index(1)) = 1.0;
  REQUIRE(reference_frequency(m, x, m.p_d_nom) == 314.16);

  m.reference_node = 1;  // the GFI
  x(SystemModel::aux_index(0)) = m.p_d_nom(0);
  REQUIRE(reference_frequency(m, x, m.p_d_nom) == some_gfi().omega_d);

  GfiParams prm = some_gfi();
  prm.k_p = 0.1;
  m.units[0] = prm;
  x(SystemModel::aux_index(0)) = m.p_d_nom(0) + 0.2;
  REQUIRE_THAT(reference_frequency(m, x, m.p_d_nom),
               Catch::Matchers::WithinAbs(prm.omega_d - 0.02, 1e-12));
}

TEST_CASE("built-in three-unit case is an exact equilibrium") {
  const auto bc = gridode::cases::three_unit_case();
  const Eigen::VectorXd dx =
      system_rhs(bc.model, bc.x_eq, bc.model.p_d_nom);
  REQUIRE(dx.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("reference node angle never drifts, whatever the state") {
  Rng rng(6);
  const auto bc = gridode::cases::three_unit_case();
  for (int i = 0; i < 50; ++i) {
    Eigen::VectorXd x = random_state(rng, bc.model);
    Eigen::VectorXd u = bc.model.p_d_nom;
    for (Eigen::Index k = 0; k < u.size(); ++k) u(k) += rng.uniform(-0.2, 0.2);
    const Eigen::VectorXd dx = system_rhs(bc.model, x, u);
    REQUIRE(dx(SystemModel::delta_index(bc.model.reference_index())) == 0.0);
  }
}

TEST_CASE("system rhs composes unit laws with network injections") {
  Rng rng(7);
  const SystemModel m = two_node_model();
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::VectorXd x = random_state(rng, m);
    Eigen::VectorXd u(2);
    u << rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5);

    // independent power computation through the complex form
    const Eigen::MatrixXcd Y = gridode::grid::build_admittance(m.graph).Y;
    Eigen::VectorXcd vt(2);
    for (int i = 0; i < 2; ++i)
      vt(i) = std::polar(x(SystemModel::voltage_index(i)),
                         x(SystemModel::delta_index(i)));
    const Eigen::VectorXcd s = vt.cwiseProduct((Y * vt).conjugate());

    const GfiParams g = std::get<GfiParams>(m.units[0]);
    const SgParams sg = std::get<SgParams>(m.units[1]);
    const double w_ref = gfi_frequency(g, x(SystemModel::aux_index(0)), u(0));
    const auto d0 = gfi_rhs(g, x(1), x(2), s(0).real(), s(0).imag(), u(0), w_ref);
    const auto d1 = sg_rhs(sg, x(4), x(5), s(1).real(), s(1).imag(), u(1), w_ref);

    const Eigen::VectorXd dx = system_rhs(m, x, u);
    Eigen::VectorXd expect(6);
    expect << d0[0], d0[1], d0[2], d1[0], d1[1], d1[2];
    REQUIRE((dx - expect).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("dynamics are invariant to a rigid angle shift") {
  Rng rng(8);
  const auto bc = gridode::cases::three_unit_case();
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd x = random_state(rng, bc.model);
    Eigen::VectorXd shifted = x;
    const double c = rng.uniform(-2.0, 2.0);
    for (Eigen::Index i = 0; i < bc.model.n_nodes(); ++i)
      shifted(SystemModel::delta_index(i)) += c;
    const Eigen::VectorXd a = system_rhs(bc.model, x, bc.model.p_d_nom);
    const Eigen::VectorXd b = system_rhs(bc.model, shifted, bc.model.p_d_nom);
    REQUIRE((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("output map drops angles and keeps measurement order") {
  SystemModel m;
  m.graph.add_node(4);
  m.units = {some_gfi()};
  m.reference_node = 4;
  m.p_d_nom = Eigen::VectorXd::Zero(1);
  Eigen::VectorXd x(3);
  x << 0.3, 0.5, 1.0;
  const Eigen::VectorXd y = output_map(m, x);
  REQUIRE(y.size() == 2);
  REQUIRE(y(0) == 0.5);
  REQUIRE(y(1) == 1.0);

  const SystemModel m2 = two_node_model();
  Rng rng(9);
  const Eigen::VectorXd x2 = random_state(rng, m2);
  const Eigen::VectorXd y2 = output_map(m2, x2);
  REQUIRE(y2.size() == 4);
  const auto idx = m2.measured_indices();
  for (Eigen::Index k = 0; k < y2.size(); ++k)
    REQUIRE(y2(k) == x2(idx[static_cast<std::size_t>(k)]));
  REQUIRE(m2.output_names() ==
          std::vector<std::string>{"p_m_1", "v_1", "omega_2", "v_2"});
}

TEST_CASE("three-unit case dimensions and labels") {
  const auto bc = gridode::cases::three_unit_case();
  REQUIRE(bc.model.n_states() == 9);
  REQUIRE(bc.model.n_inputs() == 3);
  REQUIRE(bc.model.n_outputs() == 6);
  REQUIRE(bc.model.is_gfi(0));
  REQUIRE_FALSE(bc.model.is_gfi(1));
  REQUIRE(bc.model.output_names() ==
          std::vector<std::string>{"p_m_1", "v_1", "omega_2", "v_2", "omega_3",
                                   "v_3"});
  REQUIRE(gridode::cases::builtin_case("default").model.n_states() == 9);
  REQUIRE_THROWS_AS(gridode::cases::builtin_case("nope"), gridode::Error);
}

TEST_CASE("equilibrium setpoints reproduce flat-profile injections") {
  SystemModel m = two_node_model();
  const Eigen::VectorXd x_eq = apply_equilibrium_setpoints(m);
  REQUIRE(system_rhs(m, x_eq, m.p_d_nom).lpNorm<Eigen::Infinity>() == 0.0);
  for (Eigen::Index i = 0; i < m.n_nodes(); ++i) {
    REQUIRE(x_eq(SystemModel::delta_index(i)) == 0.0);
    const double v_d =
        std::visit([](const auto& p) { return p.v_d; },
                   m.units[static_cast<std::size_t>(i)]);
    REQUIRE(x_eq(SystemModel::voltage_index(i)) == v_d);
  }

  SystemModel bad = two_node_model();
  SgParams off = some_sg();
  off.omega_d = kOmegaNom * 1.01;
  bad.units[1] = off;
  REQUIRE_THROWS_AS(equilibrium_setpoints(bad), gridode::Error);
}

TEST_CASE("parameter validation rejects out-of-range values") {
  GfiParams g = some_gfi();
  g.tau = 0.0;
  REQUIRE_THROWS_AS(validate_params(g), gridode::Error);
  g = some_gfi();
  g.k_p = -1.0;
  REQUIRE_THROWS_AS(validate_params(g), gridode::Error);
  g = some_gfi();
  g.k_q = 0.0;  // allowed: no voltage droop
  validate_params(g);
  SgParams s = some_sg();
  s.m = 0.0;
  REQUIRE_THROWS_AS(validate_params(s), gridode::Error);
}

TEST_CASE("model json round trip preserves the vector field") {
  const auto bc = gridode::cases::three_unit_case();
  const SystemModel back = model_from_json(model_to_json(bc.model));
  REQUIRE(back.reference_node == bc.model.reference_node);
  REQUIRE((back.p_d_nom - bc.model.p_d_nom).cwiseAbs().maxCoeff() == 0.0);
  Rng rng(10);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = random_state(rng, bc.model);
    Eigen::VectorXd u = bc.model.p_d_nom;
    for (Eigen::Index k = 0; k < u.size(); ++k) u(k) += rng.uniform(-0.2, 0.2);
    const Eigen::VectorXd a = system_rhs(bc.model, x, u);
    const Eigen::VectorXd b = system_rhs(back, x, u);
    REQUIRE((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

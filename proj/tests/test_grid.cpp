#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <set>
#include <utility>

#include "gridode/grid.hpp"

using gridode::Rng;
using namespace gridode::grid;

namespace {

// Independent oracle: s = diag(v~) (Y v~)* with v~_i = v_i e^{j delta_i}.
// The library computes injections trigonometrically edge by edge; the two
// must agree on every graph.
std::pair<Eigen::VectorXd, Eigen::VectorXd> complex_power_oracle(
    const NetworkGraph& g, const BusElectricalState& st) {
  const Eigen::MatrixXcd Y = build_admittance(g).Y;
  Eigen::VectorXcd vt(st.v.size());
  for (Eigen::Index i = 0; i < st.v.size(); ++i)
    vt(i) = std::polar(st.v(i), st.delta(i));
  const Eigen::VectorXcd s = vt.cwiseProduct((Y * vt).conjugate());
  return {s.real(), s.imag()};
}

NetworkGraph random_graph(Rng& rng, int n, bool lossless) {
  NetworkGraph g;
  for (int i = 1; i <= n; ++i) g.add_node(i);
  std::set<std::pair<int, int>> used;
  for (int i = 2; i <= n; ++i) {
    const int j = 1 + static_cast<int>(rng.uniform_index(
                          static_cast<std::size_t>(i - 1)));
    used.insert({std::min(i, j), std::max(i, j)});
  }
  for (int e = 0; e < 3; ++e) {
    const int a = 1 + static_cast<int>(rng.uniform_index(
                          static_cast<std::size_t>(n)));
    const int b = 1 + static_cast<int>(rng.uniform_index(
                          static_cast<std::size_t>(n)));
    if (a != b) used.insert({std::min(a, b), std::max(a, b)});
  }
  for (const auto& [a, b] : used) {
    const double gc = lossless ? 0.0 : rng.uniform(0.0, 1.0);
    g.add_series_edge(a, b, Complex(gc, rng.uniform(-5.0, 5.0)));
  }
  for (int i = 1; i <= n; ++i)
    if (rng.uniform01() < 0.4)
      g.add_shunt(i, Complex(lossless ? 0.0 : rng.uniform(-0.2, 0.3),
                             rng.uniform(-0.5, 0.5)));
  return g;
}

BusElectricalState random_state(Rng& rng, Eigen::Index n) {
  BusElectricalState st;
  st.v.resize(n);
  st.delta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    st.v(i) = rng.uniform(0.85, 1.15);
    st.delta(i) = rng.uniform(-3.0, 3.0);
  }
  return st;
}

}  // namespace

TEST_CASE("admittance matrix: two nodes, one series element") {
  NetworkGraph g;
  g.add_node(1);
  g.add_node(2);
  g.add_series_edge(1, 2, Complex(0.5, -2.0));
  const Eigen::MatrixXcd Y = build_admittance(g).Y;
  REQUIRE(Y(0, 0) == Complex(0.5, -2.0));
  REQUIRE(Y(1, 1) == Complex(0.5, -2.0));
  REQUIRE(Y(0, 1) == Complex(-0.5, 2.0));
  REQUIRE(Y(1, 0) == Complex(-0.5, 2.0));
}

TEST_CASE("admittance matrix: lone shunt appears on the diagonal") {
  NetworkGraph g;
  g.add_node(7);
  g.add_shunt(7, Complex(0.0, 0.1));
  const Eigen::MatrixXcd Y = build_admittance(g).Y;
  REQUIRE(Y.rows() == 1);
  REQUIRE(Y(0, 0) == Complex(0.0, 0.1));
}

TEST_CASE("admittance matrix: three-node chain, element-level oracle") {
  const Complex y12(0.4, -1.2), y23(0.1, -2.0), sh2(0.0, 0.05);
  NetworkGraph g;
  for (int i : {1, 2, 3}) g.add_node(i);
  g.add_series_edge(1, 2, y12);
  g.add_series_edge(2, 3, y23);
  g.add_shunt(2, sh2);
  const Eigen::MatrixXcd Y = build_admittance(g).Y;
  REQUIRE(Y(0, 0) == y12);
  // summation order on the shared diagonal is unspecified
  REQUIRE(std::abs(Y(1, 1) - (y12 + y23 + sh2)) < 1e-15);
  REQUIRE(Y(2, 2) == y23);
  REQUIRE(Y(0, 1) == -y12);
  REQUIRE(Y(1, 2) == -y23);
  REQUIRE(Y(0, 2) == Complex(0.0, 0.0));
  REQUIRE(Y == Y.transpose().eval());
}

TEST_CASE("power injections: worked two-node example") {
  // Pure susceptance b = -1, unit voltages, 90 degree angle difference:
  // one per-unit of active power flows 1 -> 2 and both ends absorb
  // one per-unit reactive.
  NetworkGraph g;
  g.add_node(1);
  g.add_node(2);
  g.add_series_edge(1, 2, Complex(0.0, -1.0));
  BusElectricalState st;
  st.v = Eigen::Vector2d(1.0, 1.0);
  st.delta = Eigen::Vector2d(M_PI / 2.0, 0.0);
  const auto [p, q] = power_injections(st, g);
  REQUIRE_THAT(p(0), Catch::Matchers::WithinAbs(1.0, 1e-12));
  REQUIRE_THAT(p(1), Catch::Matchers::WithinAbs(-1.0, 1e-12));
  REQUIRE_THAT(q(0), Catch::Matchers::WithinAbs(1.0, 1e-12));
  REQUIRE_THAT(q(1), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("power injections agree with the complex-power oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(9));
    const NetworkGraph g = random_graph(rng, n, false);
    const BusElectricalState st = random_state(rng, n);
    const auto [p, q] = power_injections(st, g);
    const auto [po, qo] = complex_power_oracle(g, st);
    REQUIRE((p - po).cwiseAbs().maxCoeff() < 1e-10);
    REQUIRE((q - qo).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("lossless networks conserve active power") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(9));
    const NetworkGraph g = random_graph(rng, n, true);
    const BusElectricalState st = random_state(rng, n);
    const auto [p, q] = power_injections(st, g);
    (void)q;
    REQUIRE(std::abs(p.sum()) < 1e-10);
  }
}

TEST_CASE("dissipative networks never create active power") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(9));
    NetworkGraph g;
    for (int i = 1; i <= n; ++i) g.add_node(i);
    for (int i = 2; i <= n; ++i)
      g.add_series_edge(i - 1, i,
                        Complex(rng.uniform(0.0, 1.0), rng.uniform(-5.0, 5.0)));
    for (int i = 1; i <= n; ++i)
      if (rng.uniform01() < 0.5)
        g.add_shunt(i, Complex(rng.uniform(0.0, 0.3), rng.uniform(-0.5, 0.5)));
    const BusElectricalState st = random_state(rng, n);
    const auto [p, q] = power_injections(st, g);
    (void)q;
    REQUIRE(p.sum() >= -1e-12);
  }
}

TEST_CASE("node relabeling permutes the admittance matrix") {
  const Complex y12(0.4, -1.2), y23(0.1, -2.0), sh2(0.0, 0.05);
  NetworkGraph a;
  for (int i : {1, 2, 3}) a.add_node(i);
  a.add_series_edge(1, 2, y12);
  a.add_series_edge(2, 3, y23);
  a.add_shunt(2, sh2);
  // old ids 1,2,3 -> new ids 20,5,11; sorted new order [5,11,20] = old [2,3,1]
  NetworkGraph b;
  for (int i : {20, 5, 11}) b.add_node(i);
  b.add_series_edge(20, 5, y12);
  b.add_series_edge(5, 11, y23);
  b.add_shunt(5, sh2);
  const Eigen::MatrixXcd Ya = build_admittance(a).Y;
  const Eigen::MatrixXcd Yb = build_admittance(b).Y;
  const int perm[3] = {1, 2, 0};  // new index -> old index
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) REQUIRE(Yb(r, c) == Ya(perm[r], perm[c]));

  Rng rng(21);
  BusElectricalState sa = random_state(rng, 3);
  BusElectricalState sb;
  sb.v.resize(3);
  sb.delta.resize(3);
  for (int i = 0; i < 3; ++i) {
    sb.v(i) = sa.v(perm[i]);
    sb.delta(i) = sa.delta(perm[i]);
  }
  const auto [pa, qa] = power_injections(sa, a);
  const auto [pb, qb] = power_injections(sb, b);
  for (int i = 0; i < 3; ++i) {
    REQUIRE(pb(i) == pa(perm[i]));
    REQUIRE(qb(i) == qa(perm[i]));
  }
}

TEST_CASE("graph validation rejects malformed input") {
  NetworkGraph g;
  g.add_node(1);
  g.add_node(2);
  REQUIRE_THROWS_AS(g.add_node(1), gridode::Error);
  REQUIRE_THROWS_AS(g.add_series_edge(1, 1, Complex(0.0, -1.0)),
                    gridode::Error);
  REQUIRE_THROWS_AS(g.add_series_edge(1, 9, Complex(0.0, -1.0)),
                    gridode::Error);
  REQUIRE_THROWS_AS(g.add_series_edge(1, 2, Complex(-0.1, -1.0)),
                    gridode::Error);
  g.add_series_edge(1, 2, Complex(0.0, -1.0));
  REQUIRE_THROWS_AS(g.add_series_edge(2, 1, Complex(0.0, -2.0)),
                    gridode::Error);
  // shunts accumulate instead of erroring
  g.add_shunt(2, Complex(0.0, 0.1));
  g.add_shunt(2, Complex(0.05, -0.02));
  REQUIRE(g.shunt_at(1) == Complex(0.05, 0.08));
}

namespace {

const char* kCase3 = R"(function mpc = case3
mpc.version = '2';
mpc.baseMVA = 100;

%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin
mpc.bus = [
  1  3  0   0   0  0   1  1.0  0  230  1  1.1  0.9;
  2  2  0   0   0  0   1  1.0  0  230  1  1.1  0.9;
  3  1  90  30  0  20  1  1.0  0  230  1  1.1  0.9;
];

%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin
mpc.gen = [
  1  71.6  27.0  300  -300  1.0  100  1  250  10;
  2  163   6.5   300  -300  1.0  100  1  300  10;
  2  20    1.0   300  -300  1.0  100  1  300  10;
];

%% fbus tbus r x b rateA rateB rateC ratio angle status
mpc.branch = [
  1  2  0     0.1  0      250  250  250  0  0  1;
  2  3  0.01  0.2  0.025  250  250  250  0  0  1;
  1  3  0.02  0.3  0      250  250  250  0  0  0;
];
)";

}  // namespace

TEST_CASE("matpower import: buses, branches, generators") {
  const MatpowerCase mc = parse_matpower_case(kCase3);
  REQUIRE(mc.base_mva == 100.0);
  REQUIRE(mc.graph.node_count() == 3);
  REQUIRE(mc.graph.nodes() == std::vector<int>{1, 2, 3});

  const Eigen::MatrixXcd Y = build_admittance(mc.graph).Y;
  // r=0, x=0.1 -> series admittance -10j, so the off-diagonal is +10j
  REQUIRE_THAT(Y(0, 1).real(), Catch::Matchers::WithinAbs(0.0, 1e-12));
  REQUIRE_THAT(Y(0, 1).imag(), Catch::Matchers::WithinAbs(10.0, 1e-12));
  // opened branch 1-3 contributes nothing
  REQUIRE(Y(0, 2) == Complex(0.0, 0.0));
  // line charging b=0.025 splits evenly; bus 3 also carries Bs=20 MVAr
  const Complex y23 = 1.0 / Complex(0.01, 0.2);
  REQUIRE_THAT(std::abs(Y(2, 2) - (y23 + Complex(0.0, 0.0125) +
                                   Complex(0.0, 0.2))),
               Catch::Matchers::WithinAbs(0.0, 1e-12));

  // generation is aggregated per bus and rescaled to per-unit
  REQUIRE_THAT(mc.p_d_nom(0), Catch::Matchers::WithinAbs(0.716, 1e-12));
  REQUIRE_THAT(mc.p_d_nom(1), Catch::Matchers::WithinAbs(1.83, 1e-12));
  REQUIRE_THAT(mc.q_d_nom(1), Catch::Matchers::WithinAbs(0.075, 1e-12));
  REQUIRE(mc.gen_nodes == std::vector<int>{1, 2});
  REQUIRE(mc.warnings.empty());
}

TEST_CASE("matpower import: off-nominal tap folds into a pi-equivalent") {
  const std::string text = R"(mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0;
  2 1 0 0 0 0;
];
mpc.gen = [
  1 50 0;
];
mpc.branch = [
  1 2 0 0.25 0.06 0 0 0 2 0 1;
];
)";
  const MatpowerCase mc = parse_matpower_case(text);
  const Eigen::MatrixXcd Y = build_admittance(mc.graph).Y;
  const Complex y = 1.0 / Complex(0.0, 0.25);
  const Complex ych(0.0, 0.03);
  const double tap = 2.0;
  REQUIRE(std::abs(Y(0, 0) - (y + ych) / (tap * tap)) < 1e-12);
  REQUIRE(std::abs(Y(1, 1) - (y + ych)) < 1e-12);
  REQUIRE(std::abs(Y(0, 1) - (-y / tap)) < 1e-12);
}

TEST_CASE("matpower import: phase shift produces a warning") {
  const std::string text = R"(mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0;
  2 1 0 0 0 0;
];
mpc.gen = [
  1 50 0;
];
mpc.branch = [
  1 2 0 0.25 0 0 0 0 0 30 1;
];
)";
  const MatpowerCase mc = parse_matpower_case(text);
  REQUIRE(mc.warnings.size() == 1);
  REQUIRE_THAT(mc.warnings[0],
               Catch::Matchers::ContainsSubstring("phase shift ignored"));
}

TEST_CASE("matpower import: errors carry line and column positions") {
  const std::string bad = R"(mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0;
  2 1 0 0 0 0;
];
mpc.gen = [
  1 50 0;
];
mpc.branch = [
  1 2 0 0 0.01 0 0 0 0 0 1;
];
)";
  // the zero-impedance row sits on this source line
  const std::size_t pos = bad.find("1 2 0 0 0.01");
  const auto line =
      1 + std::count(bad.begin(), bad.begin() + static_cast<long>(pos), '\n');
  try {
    parse_matpower_case(bad);
    FAIL("expected a parse error");
  } catch (const gridode::Error& e) {
    REQUIRE_THAT(e.what(),
                 Catch::Matchers::ContainsSubstring("zero-impedance branch"));
    REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring(
                               "line " + std::to_string(line)));
    REQUIRE_THAT(e.what(), Catch::Matchers::ContainsSubstring("column 3"));
  }

  REQUIRE_THROWS_WITH(parse_matpower_case("mpc.baseMVA = 100;\nmpc.bus = [ 1 "
                                          "3 0 0 0 0; ];\nmpc.gen = [ 1 0 0; "
                                          "];\n"),
                      Catch::Matchers::ContainsSubstring(
                          "missing table mpc.branch"));
  REQUIRE_THROWS_WITH(
      parse_matpower_case("mpc.baseMVA = 100;\nmpc.bus = [ 1 3 zz; ];\n"),
      Catch::Matchers::ContainsSubstring("non-numeric entry"));
}

TEST_CASE("graph json round trip preserves the admittance matrix") {
  Rng rng(31);
  const NetworkGraph g = random_graph(rng, 6, false);
  const NetworkGraph h = graph_from_json(graph_to_json(g));
  const Eigen::MatrixXcd Yg = build_admittance(g).Y;
  const Eigen::MatrixXcd Yh = build_admittance(h).Y;
  REQUIRE(Yg.rows() == Yh.rows());
  REQUIRE((Yg - Yh).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE(g.nodes() == h.nodes());
}

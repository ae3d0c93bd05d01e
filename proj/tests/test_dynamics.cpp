#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "scmarket/dynamics.hpp"
#include "scmarket/equilibrium.hpp"
#include "scmarket/stability.hpp"
#include "test_support.hpp"

using namespace scmarket;
using namespace scmarket::testing;

TEST_CASE("state layout ordering and labels") {
  const auto s2 = make_s2();
  const StateLayout layout(s2);
  REQUIRE(layout.size() == 5);
  const auto labels = layout.labels();
  CHECK(labels[0] == "vm_r:SC1");
  CHECK(labels[1] == "vm_b:SC1");
  CHECK(labels[2] == "vm_pc:SC1");
  CHECK(labels[3] == "vm_ag:C1");
  CHECK(labels[4] == "rho:SC1");
  // pack/unpack round trip
  MarketState st = MarketState::zero(s2);
  st.vm_supply["SC1"][Channel::borrowed] = 7;
  st.vm_demand["C1"] = 3;
  st.rho["SC1"] = -2;
  const auto x = layout.pack(st);
  CHECK(x[1] == 7);
  CHECK(x[3] == 3);
  CHECK(x[4] == -2);
  const auto back = layout.unpack(x);
  CHECK(back.vm_supply.at("SC1").at(Channel::borrowed) == 7);
  CHECK(back.rho.at("SC1") == -2);
}

TEST_CASE("rhs vanishes at the closed-form equilibrium") {
  for (const auto& s : {make_s1(), make_s1(0.02, 0.02), make_s2()}) {
    const auto eq = solve_kkt_closed_form(s);
    const auto d = rhs(make_dynamic_state(s, eq.state), s);
    CHECK(d.market.cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("rhs hand values on S1") {
  const auto s1 = make_s1();
  DynamicState x = make_dynamic_state(s1, MarketState::zero(s1));
  const StateLayout layout(s1);
  x.market[layout.price_index(0)] = 90.0;
  const auto d = rhs(x, s1);
  // supply: (90 - 90) / 0.6 = 0; demand: (168 - 90) / 0.1 = 780; price: 0
  CHECK(d.market[0] == doctest::Approx(0.0));
  CHECK(d.market[1] == doctest::Approx(0.0));
  CHECK(d.market[2] == doctest::Approx(0.0));
  CHECK(d.market[layout.demand_index(0)] == doctest::Approx(780.0));
  CHECK(d.market[layout.price_index(0)] == doctest::Approx(0.0));
}

TEST_CASE("doubling every time constant halves the rhs") {
  auto s = make_s2();
  DynamicState x = make_dynamic_state(s, MarketState::zero(s));
  x.market << 10, 20, 30, 40, 50;
  const auto d1 = rhs(x, s);
  auto slow = s;
  for (auto& sc : slow.scs) {
    sc.tau_rho *= 2;
    for (auto& ch : sc.channels) ch.tau *= 2;
  }
  for (auto& c : slow.customers) c.tau_ag *= 2;
  const auto d2 = rhs(x, slow);
  CHECK((d2.market - 0.5 * d1.market).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rhs is affine: rhs(x) - rhs(y) = A1 (x - y)") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-10, 10);
  for (int k = 0; k < 20; ++k) {
    const auto s = random_scenario(rng);
    const auto sys = assemble_linearization(s);
    const StateLayout layout(s);
    DynamicState x, y;
    x.market.resize(static_cast<Eigen::Index>(layout.size()));
    y.market.resize(static_cast<Eigen::Index>(layout.size()));
    for (Eigen::Index i = 0; i < x.market.size(); ++i) {
      x.market[i] = u(rng);
      y.market[i] = u(rng);
    }
    const Eigen::VectorXd lhs = rhs(x, s).market - rhs(y, s).market;
    const Eigen::VectorXd rhs_lin = sys.a1 * (x.market - y.market);
    CHECK((lhs - rhs_lin).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("equilibrium correspondence on random scenarios including kappa > 0") {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 30; ++k) {
    const auto s = random_scenario(rng);
    const auto eq = solve_kkt_closed_form(s);
    const auto d = rhs(make_dynamic_state(s, eq.state), s);
    CHECK(d.market.cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("project_multiplier_rhs follows the two projection cases") {
  CHECK(project_multiplier_rhs(-3, 0) == 0.0);
  CHECK(project_multiplier_rhs(-3, 1) == -3.0);
  CHECK(project_multiplier_rhs(5, 0) == 5.0);
  CHECK(project_multiplier_rhs(0, 0) == 0.0);
}

TEST_CASE("dimension mismatch is rejected") {
  const auto s1 = make_s1();
  DynamicState x;
  x.market = Eigen::VectorXd::Zero(3);  // S1 needs 5
  CHECK_THROWS_AS(rhs(x, s1), std::invalid_argument);
}

TEST_CASE("integrate stays at the equilibrium") {
  const auto s1 = make_s1();
  const auto eq = solve_kkt_closed_form(s1);
  const auto x0 = make_dynamic_state(s1, eq.state);
  const auto traj = integrate(s1, x0, 10.0, 1e-3, IntegrationMethod::rk4, {}, 1000);
  REQUIRE(!traj.states.empty());
  const Eigen::VectorXd drift = traj.states.back().market - x0.market;
  CHECK(drift.cwiseAbs().maxCoeff() < 1e-10);
  CHECK(traj.terminal_status == TerminalStatus::converged);
  CHECK(traj.times.front() == 0.0);
  for (std::size_t k = 1; k < traj.times.size(); ++k) CHECK(traj.times[k] > traj.times[k - 1]);
}

TEST_CASE("S2 relaxation agrees with the eigenvalue oracle") {
  // S2's system matrix is not Hurwitz (positive real eigenvalues), so a
  // perturbed equilibrium must diverge; the stability module is the oracle.
  const auto s2 = make_s2();
  const auto [hurwitz, max_re] = hurwitz_check(assemble_linearization(s2));
  const auto eq = solve_kkt_closed_form(s2);
  auto x0 = perturb_state(make_dynamic_state(s2, eq.state), 0.01, 42);
  const auto traj = integrate(s2, x0, 50.0, 1e-3, IntegrationMethod::rk4, {}, 1000);
  if (hurwitz) {
    CHECK(traj.terminal_status != TerminalStatus::diverged);
    CHECK((traj.states.back().market - make_dynamic_state(s2, eq.state).market)
              .cwiseAbs()
              .maxCoeff() < 1e-4);
  } else {
    CHECK(traj.terminal_status == TerminalStatus::diverged);
  }
  // for the record: S2 is the unstable case
  CHECK(!hurwitz);
  CHECK(max_re > 0);
}

TEST_CASE("S1-single relaxes back to the equilibrium") {
  const auto s = make_s1_single();
  const auto eq = solve_kkt_closed_form(s);
  auto x0 = perturb_state(make_dynamic_state(s, eq.state), 0.01, 7);
  const auto traj = integrate(s, x0, 100.0, 1e-3, IntegrationMethod::rk4, {}, 100);
  CHECK(traj.terminal_status == TerminalStatus::converged);
  CHECK((traj.states.back().market - make_dynamic_state(s, eq.state).market)
            .cwiseAbs()
            .maxCoeff() < 1e-4);
}

TEST_CASE("rk4 with dt matches euler with dt/100 at t = 1") {
  const auto s1 = make_s1();
  auto x0 = make_dynamic_state(s1, MarketState::zero(s1));
  x0.market << 10, 20, 30, 100, 50;
  const auto a = integrate(s1, x0, 1.0, 1e-3, IntegrationMethod::rk4, {}, 1000000);
  const auto b = integrate(s1, x0, 1.0, 1e-5, IntegrationMethod::euler, {}, 1000000);
  const Eigen::VectorXd xa = a.states.back().market;
  const Eigen::VectorXd xb = b.states.back().market;
  CHECK((xa - xb).cwiseAbs().maxCoeff() / xa.cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("invalid step arguments") {
  const auto s1 = make_s1();
  const auto x0 = make_dynamic_state(s1, MarketState::zero(s1));
  CHECK_THROWS_AS(integrate(s1, x0, -1.0, 1e-3, IntegrationMethod::euler), std::invalid_argument);
  CHECK_THROWS_AS(integrate(s1, x0, 1.0, 0.0, IntegrationMethod::euler), std::invalid_argument);
}

TEST_CASE("perturb_state") {
  const auto s1 = make_s1();
  DynamicState x = make_dynamic_state(s1, MarketState::zero(s1));
  x.market << 1, 2, 3, 4, 5;
  SUBCASE("zero magnitude is the identity") {
    const auto y = perturb_state(x, 0.0, 123);
    CHECK((y.market - x.market).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("same seed, same output") {
    const auto a = perturb_state(x, 0.05, 99);
    const auto b = perturb_state(x, 0.05, 99);
    CHECK((a.market - b.market).cwiseAbs().maxCoeff() == 0.0);
    const auto c = perturb_state(x, 0.05, 100);
    CHECK((a.market - c.market).cwiseAbs().maxCoeff() > 0.0);
  }
  SUBCASE("componentwise within the bound") {
    const auto y = perturb_state(x, 0.01, 4);
    for (Eigen::Index i = 0; i < x.market.size(); ++i)
      CHECK(std::abs(y.market[i] - x.market[i]) <= 0.01 * std::abs(x.market[i]) + 1e-15);
  }
}

TEST_CASE("multiplier nonnegativity is preserved along trajectories") {
  auto s = make_s1_single();
  // shrink the capacity so the constraint binds along the relaxation
  s.scs[0].channels[0].vm_max = 50;
  const auto eq = solve_kkt_closed_form(s);
  auto x0 = make_dynamic_state(s, eq.state, /*capacity_dynamics=*/true);
  x0.multipliers[0] = 2.0;
  const auto traj = integrate(s, x0, 5.0, 1e-3, IntegrationMethod::euler, {}, 50);
  for (const auto& st : traj.states) {
    REQUIRE(st.multipliers.size() == 1);
    CHECK(st.multipliers[0] >= 0.0);
  }
}

TEST_CASE("time reversal returns to the start") {
  // a few backward steps followed by forward steps using the library rhs
  const auto s = make_s1_single();
  const auto eq = solve_kkt_closed_form(s);
  auto x = make_dynamic_state(s, eq.state);
  x = perturb_state(x, 0.05, 3);
  const Eigen::VectorXd start = x.market;
  const double h = 1e-4;
  auto step = [&](double dir) {
    DynamicState probe = x;
    const Eigen::VectorXd k1 = dir * rhs(probe, s).market;
    probe.market = x.market + 0.5 * h * k1;
    const Eigen::VectorXd k2 = dir * rhs(probe, s).market;
    probe.market = x.market + 0.5 * h * k2;
    const Eigen::VectorXd k3 = dir * rhs(probe, s).market;
    probe.market = x.market + h * k3;
    const Eigen::VectorXd k4 = dir * rhs(probe, s).market;
    x.market += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
  };
  for (int k = 0; k < 100; ++k) step(-1.0);
  for (int k = 0; k < 100; ++k) step(+1.0);
  CHECK((x.market - start).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("perturbation spec validation and effect") {
  const auto s = make_s1_single();
  PerturbationSpec spec;
  spec.supply_factors["SC1"] = 0.98;
  SUBCASE("declared bounds must cover the induced norms") {
    spec.pi_sc = 1e-6;  // too tight
    CHECK_THROWS_AS(validate_perturbation(s, spec), std::invalid_argument);
    const auto [dsc, dc] = perturbation_matrices(s, spec);
    spec.pi_sc = dsc.jacobiSvd().singularValues()(0);
    spec.pi_c = 0.0;
    CHECK_NOTHROW(validate_perturbation(s, spec));
  }
  SUBCASE("supply factor scales the supply response") {
    const auto [dsc, dc] = perturbation_matrices(s, spec);
    spec.pi_sc = dsc.jacobiSvd().singularValues()(0) + 1e-9;
    DynamicState x = make_dynamic_state(s, MarketState::zero(s));
    x.market << 100.0, 0.0, 0.0;
    const auto base = rhs(x, s);
    const auto pert = rhs(x, s, spec);
    // supply rhs: (rho - g*beta*vm - alpha)/tau changes by (1-g)*beta*vm/tau
    const double expected = (1.0 - 0.98) * (-0.3) * 100.0 / 0.6;
    CHECK(pert.market[0] - base.market[0] == doctest::Approx(expected).epsilon(1e-9));
    // price rhs: -(g * vm)/tau_rho instead of -vm/tau_rho
    CHECK(pert.market[2] - base.market[2] == doctest::Approx(0.02 * 100.0).epsilon(1e-9));
  }
}

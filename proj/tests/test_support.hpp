#pragma once

// Shared fixtures and independent oracles for the test suites. The oracles
// here (finite differences, characteristic polynomial, Routh table, grid
// search) deliberately avoid the library's own computation paths.

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "scmarket/dynamics.hpp"
#include "scmarket/equilibrium.hpp"
#include "scmarket/model.hpp"

namespace scmarket::testing {

inline SupplyChannelParams make_channel(Channel kind, double alpha, double beta, double tau,
                                        double vm_min = 0.0, double vm_max = 200.0) {
  SupplyChannelParams ch;
  ch.channel = kind;
  ch.coeffs = {alpha, beta};
  ch.tau = tau;
  ch.vm_min = vm_min;
  ch.vm_max = vm_max;
  return ch;
}

inline CustomerParams make_customer(const std::string& id, const std::string& sc_id, double alpha,
                                    double beta, double tau_ag, double vm_min = 60.0,
                                    double vm_max = 100.0, double kappa1 = 0.0,
                                    double kappa2 = 0.0) {
  CustomerParams c;
  c.id = id;
  c.sc_id = sc_id;
  c.coeffs_ag = {alpha, beta};
  c.tau_ag = tau_ag;
  c.vm_min = vm_min;
  c.vm_max = vm_max;
  c.kappa1 = kappa1;
  c.kappa2 = kappa2;
  return c;
}

/// One SC, three identical channels from the SC1 table row, one C1 customer.
inline MarketScenario make_s1(double kappa1 = 0.0, double kappa2 = 0.0) {
  MarketScenario s;
  SmallCloudParams sc;
  sc.id = "SC1";
  sc.tau_rho = 1.0;
  sc.channels = {make_channel(Channel::reserved, 90, -0.3, 0.6),
                 make_channel(Channel::borrowed, 90, -0.3, 0.6),
                 make_channel(Channel::public_cloud, 90, -0.3, 0.6)};
  s.scs.push_back(sc);
  s.customers.push_back(make_customer("C1", "SC1", 168, -0.5, 0.1, 60, 100, kappa1, kappa2));
  return s;
}

/// S1 with only the reserved channel enabled; its system matrix is Hurwitz.
inline MarketScenario make_s1_single() {
  MarketScenario s = make_s1();
  s.scs[0].channels = {make_channel(Channel::reserved, 90, -0.3, 0.6)};
  return s;
}

/// S1 variant with distinct per-channel coefficients.
inline MarketScenario make_s2() {
  MarketScenario s;
  SmallCloudParams sc;
  sc.id = "SC1";
  sc.tau_rho = 1.0;
  sc.channels = {make_channel(Channel::reserved, 90, -0.3, 0.6),
                 make_channel(Channel::borrowed, 102, -0.6, 0.2),
                 make_channel(Channel::public_cloud, 80, -0.25, 0.6, 0, 250)};
  s.scs.push_back(sc);
  s.customers.push_back(make_customer("C1", "SC1", 168, -0.5, 0.1));
  return s;
}

/// Random valid scenario within the documented generator bounds: 1-5 SCs,
/// 1-5 customers each, alpha in [10, 200], beta in [-1, -0.01]. Subproblems
/// with a near-cancelling balance slope or an extreme equilibrium magnitude
/// are redrawn so residual tolerances stay meaningful in double precision.
inline MarketScenario random_scenario(std::mt19937_64& rng, bool with_kappa = true) {
  std::uniform_real_distribution<double> alpha_d(10.0, 200.0);
  std::uniform_real_distribution<double> beta_d(-1.0, -0.01);
  std::uniform_real_distribution<double> tau_d(0.1, 2.0);
  std::uniform_real_distribution<double> tau_rho_d(0.2, 5.0);
  std::uniform_real_distribution<double> tau_ag_d(0.05, 0.2);
  std::uniform_real_distribution<double> kappa_d(0.0, 0.05);
  std::uniform_int_distribution<int> nsc_d(1, 5), ncust_d(1, 5), nchan_d(1, 3), coin(0, 1);

  for (int attempt = 0; attempt < 1000; ++attempt) {
    MarketScenario s;
    const int nsc = nsc_d(rng);
    const bool use_kappa = with_kappa && coin(rng) == 1;
    for (int i = 0; i < nsc; ++i) {
      SmallCloudParams sc;
      sc.id = "SC" + std::to_string(i + 1);
      sc.tau_rho = tau_rho_d(rng);
      const int nchan = nchan_d(rng);
      const Channel kinds[] = {Channel::reserved, Channel::borrowed, Channel::public_cloud};
      for (int k = 0; k < nchan; ++k)
        sc.channels.push_back(
            make_channel(kinds[k], alpha_d(rng), beta_d(rng), tau_d(rng), 0.0, 500.0));
      s.scs.push_back(sc);
      const int ncust = ncust_d(rng);
      for (int j = 0; j < ncust; ++j) {
        auto c = make_customer("C" + std::to_string(i + 1) + "_" + std::to_string(j + 1), sc.id,
                               alpha_d(rng), beta_d(rng), tau_ag_d(rng), 0.0, 500.0);
        if (use_kappa) {
          c.kappa1 = kappa_d(rng);
          c.kappa2 = kappa_d(rng);
        }
        s.customers.push_back(c);
      }
    }
    bool ok = true;
    for (std::size_t i = 0; i < s.scs.size() && ok; ++i) {
      double slope = 0.0;
      for (std::size_t j : s.customers_of(i)) {
        const auto& c = s.customers[j];
        slope += c.demand_factor() / c.coeffs_ag.beta;
      }
      for (const auto* ch : s.scs[i].enabled_channels()) slope -= 1.0 / ch->coeffs.beta;
      if (std::abs(slope) < 0.5) ok = false;
    }
    if (!ok) continue;
    try {
      const auto eq = solve_kkt_closed_form(s);
      for (const auto& [id, rho] : eq.state.rho)
        if (std::abs(rho) > 2e3) ok = false;
      for (const auto& [id, v] : eq.state.vm_demand)
        if (std::abs(v) > 1e4) ok = false;
      for (const auto& [id, per] : eq.state.vm_supply)
        for (const auto& [ch, v] : per)
          if (std::abs(v) > 1e4) ok = false;
    } catch (const std::exception&) {
      ok = false;
    }
    if (ok) return s;
  }
  throw std::runtime_error("random_scenario: rejection loop failed to produce a scenario");
}

/// Central finite-difference Jacobian of the dynamics rhs (market part).
inline Eigen::MatrixXd finite_difference_jacobian(const MarketScenario& scenario,
                                                  const Eigen::VectorXd& x, double h = 1e-4) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd jac(n, n);
  DynamicState plus, minus;
  for (Eigen::Index k = 0; k < n; ++k) {
    plus.market = x;
    minus.market = x;
    plus.market[k] += h;
    minus.market[k] -= h;
    jac.col(k) = (rhs(plus, scenario).market - rhs(minus, scenario).market) / (2.0 * h);
  }
  return jac;
}

/// Characteristic polynomial coefficients (monic, highest power first) via
/// the Faddeev-LeVerrier recurrence.
inline std::vector<double> faddeev_leverrier(const Eigen::MatrixXd& a) {
  const Eigen::Index n = a.rows();
  std::vector<double> c(static_cast<std::size_t>(n) + 1, 0.0);
  c[0] = 1.0;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    m = a * m + c[static_cast<std::size_t>(k - 1)] * Eigen::MatrixXd::Identity(n, n);
    c[static_cast<std::size_t>(k)] = -(a * m).trace() / static_cast<double>(k);
  }
  return c;  // p(x) = c0 x^n + c1 x^(n-1) + ... + cn, c0 = 1
}

/// Routh-Hurwitz test on monic polynomial coefficients (highest first):
/// true iff all roots have strictly negative real parts.
inline bool routh_hurwitz(const std::vector<double>& coeffs) {
  const std::size_t n = coeffs.size() - 1;  // degree
  if (n == 0) return true;
  for (double c : coeffs)
    if (!(c > 0)) return false;  // necessary for a monic Hurwitz polynomial
  std::vector<std::vector<double>> rows(2);
  for (std::size_t i = 0; i < coeffs.size(); i += 2) rows[0].push_back(coeffs[i]);
  for (std::size_t i = 1; i < coeffs.size(); i += 2) rows[1].push_back(coeffs[i]);
  rows[1].resize(rows[0].size(), 0.0);
  for (std::size_t r = 2; r <= n; ++r) {
    const auto& a = rows[r - 2];
    const auto& b = rows[r - 1];
    if (b[0] == 0.0) return false;
    std::vector<double> next(a.size(), 0.0);
    for (std::size_t i = 0; i + 1 < a.size(); ++i)
      next[i] = (b[0] * a[i + 1] - a[0] * b[i + 1]) / b[0];
    rows.push_back(next);
  }
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (!(rows[r][0] > 0)) return false;
  return true;
}

}  // namespace scmarket::testing

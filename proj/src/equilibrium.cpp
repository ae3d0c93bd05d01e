#include "scmarket/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "scmarket/clearing.hpp"

namespace scmarket {

namespace {

constexpr double kDivergenceLimit = 1e12;

std::string format_warning_bounds(const std::string& label, double v, double lo, double hi) {
  std::ostringstream os;
  os << label << " = " << v << " outside [" << lo << ", " << hi << "]";
  return os.str();
}

void collect_warnings(const MarketScenario& scenario, const MarketState& state,
                      std::vector<std::string>& warnings) {
  for (const auto& sc : scenario.scs) {
    const double rho = state.rho.at(sc.id);
    if (rho < 0) {
      std::ostringstream os;
      os << "negative price rho[" << sc.id << "] = " << rho;
      warnings.push_back(os.str());
    }
    for (const auto* ch : sc.enabled_channels()) {
      const double v = state.vm_supply.at(sc.id).at(ch->channel);
      if (v < ch->vm_min || v > ch->vm_max)
        warnings.push_back(format_warning_bounds(
            "vm_" + std::string(channel_tag(ch->channel)) + "[" + sc.id + "]", v, ch->vm_min,
            ch->vm_max));
    }
  }
  for (const auto& c : scenario.customers) {
    const double v = state.vm_demand.at(c.id);
    if (v < c.vm_min || v > c.vm_max)
      warnings.push_back(format_warning_bounds("vm_ag[" + c.id + "]", v, c.vm_min, c.vm_max));
  }
}

/// Residual variant for bound-enforcing solves: stationarity is measured as
/// the distance from the clamped best response, so complementarity at active
/// bounds contributes zero.
double bounded_kkt_residual(const MarketState& state, const MarketScenario& scenario) {
  double r = 0.0;
  for (std::size_t i = 0; i < scenario.scs.size(); ++i) {
    const auto& sc = scenario.scs[i];
    const double rho = state.rho.at(sc.id);
    double balance = 0.0;
    for (const auto* ch : sc.enabled_channels()) {
      const double v = state.vm_supply.at(sc.id).at(ch->channel);
      r = std::max(r, std::abs(v - clamped_best_response(rho, ch->coeffs, ch->vm_min, ch->vm_max)));
      balance -= v;
    }
    for (std::size_t j : scenario.customers_of(i)) {
      const auto& c = scenario.customers[j];
      const double v = state.vm_demand.at(c.id);
      r = std::max(r, std::abs(v - clamped_best_response(rho, c.coeffs_ag, c.vm_min, c.vm_max)));
      balance += c.demand_factor() * v;
    }
    r = std::max(r, std::abs(balance));
  }
  return r;
}

double result_residual(const MarketState& state, const MarketScenario& scenario,
                       bool enforce_bounds) {
  return enforce_bounds ? bounded_kkt_residual(state, scenario) : kkt_residual(state, scenario);
}

/// Unbounded closed-form price of one SC: the balance equation collapses to
/// one linear scalar equation in rho once every quantity is replaced by its
/// best response.
double closed_form_price(const MarketScenario& scenario, std::size_t i) {
  const auto& sc = scenario.scs[i];
  const auto chans = sc.enabled_channels();
  if (chans.empty())
    throw unsolvable_error("SC " + sc.id + " has no enabled channels");
  double slope = 0.0, rhs = 0.0, scale = 0.0;
  for (std::size_t j : scenario.customers_of(i)) {
    const auto& c = scenario.customers[j];
    const double f = c.demand_factor();
    slope += f / c.coeffs_ag.beta;
    rhs += f * c.coeffs_ag.alpha / c.coeffs_ag.beta;
    scale += std::abs(f / c.coeffs_ag.beta);
  }
  for (const auto* ch : chans) {
    slope -= 1.0 / ch->coeffs.beta;
    rhs -= ch->coeffs.alpha / ch->coeffs.beta;
    scale += std::abs(1.0 / ch->coeffs.beta);
  }
  if (std::abs(slope) <= 1e-12 * std::max(scale, 1.0))
    throw degenerate_scenario_error("SC " + sc.id +
                                    ": supply and demand slopes cancel, no unique price");
  return rhs / slope;
}

MarketState state_at_prices(const MarketScenario& scenario, const std::vector<double>& rho,
                            bool enforce_bounds) {
  MarketState s;
  for (std::size_t i = 0; i < scenario.scs.size(); ++i) {
    const auto& sc = scenario.scs[i];
    s.rho[sc.id] = rho[i];
    for (const auto* ch : sc.enabled_channels()) {
      double v = (rho[i] - ch->coeffs.alpha) / ch->coeffs.beta;
      if (enforce_bounds) v = std::clamp(v, ch->vm_min, ch->vm_max);
      s.vm_supply[sc.id][ch->channel] = v;
    }
  }
  for (const auto& c : scenario.customers) {
    double v = (rho[scenario.sc_index(c.sc_id)] - c.coeffs_ag.alpha) / c.coeffs_ag.beta;
    if (enforce_bounds) v = std::clamp(v, c.vm_min, c.vm_max);
    s.vm_demand[c.id] = v;
  }
  return s;
}

}  // namespace

const char* method_name(SolveMethod m) {
  switch (m) {
    case SolveMethod::closed_form: return "closed_form";
    case SolveMethod::tatonnement: return "tatonnement";
    case SolveMethod::interior_point: return "interior_point";
  }
  return "?";
}

double kkt_residual(const MarketState& state, const MarketScenario& scenario) {
  double r = 0.0;
  for (std::size_t i = 0; i < scenario.scs.size(); ++i) {
    const auto& sc = scenario.scs[i];
    const double rho = state.rho.at(sc.id);
    double balance = 0.0;
    for (const auto* ch : sc.enabled_channels()) {
      const double v = state.vm_supply.at(sc.id).at(ch->channel);
      r = std::max(r, std::abs(marginal_cost(v, ch->coeffs) - rho));
      balance -= v;
    }
    for (std::size_t j : scenario.customers_of(i)) {
      const auto& c = scenario.customers[j];
      const double v = state.vm_demand.at(c.id);
      r = std::max(r, std::abs(marginal_utility(v, c.coeffs_ag) - rho));
      balance += c.demand_factor() * v;
    }
    r = std::max(r, std::abs(balance));
  }
  return r;
}

EquilibriumResult solve_kkt_closed_form(const MarketScenario& scenario,
                                        const SolverOptions& options) {
  EquilibriumResult res;
  res.method = SolveMethod::closed_form;
  std::vector<double> rho(scenario.scs.size());
  for (std::size_t i = 0; i < scenario.scs.size(); ++i) {
    if (!options.enforce_bounds) {
      rho[i] = closed_form_price(scenario, i);
      continue;
    }
    // With bounds enforced the excess is piecewise linear; take the clearing
    // price nearest the unbounded solution (falling back to the first
    // candidate if the unbounded system is degenerate).
    const auto candidates = clamped_clearing_prices(scenario, i);
    if (candidates.empty())
      throw unsolvable_error("SC " + scenario.scs[i].id +
                             ": no market-clearing price within bounds");
    double anchor;
    try {
      anchor = closed_form_price(scenario, i);
    } catch (const degenerate_scenario_error&) {
      anchor = candidates.front();
    }
    rho[i] = *std::min_element(candidates.begin(), candidates.end(),
                               [&](double a, double b) {
                                 return std::abs(a - anchor) < std::abs(b - anchor);
                               });
  }
  res.state = state_at_prices(scenario, rho, options.enforce_bounds);
  collect_warnings(scenario, res.state, res.warnings);
  res.kkt_residual = result_residual(res.state, scenario, options.enforce_bounds);
  res.converged = res.kkt_residual <= options.effective_tolerance(SolveMethod::closed_form);
  return res;
}

EquilibriumResult tatonnement(const MarketScenario& scenario, const SolverOptions& options) {
  const double tol = options.effective_tolerance(SolveMethod::tatonnement);
  EquilibriumResult res;
  res.method = SolveMethod::tatonnement;

  const std::size_t n = scenario.scs.size();
  std::vector<double> rho(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto chans = scenario.scs[i].enabled_channels();
    if (chans.empty()) throw unsolvable_error("SC " + scenario.scs[i].id + " has no enabled channels");
    rho[i] = chans.front()->coeffs.alpha;
  }

  std::vector<double> excess(n);
  auto fill_excess = [&] {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (options.enforce_bounds) {
        excess[i] = clamped_excess_demand(scenario, i, rho[i]);
      } else {
        double e = 0.0;
        for (std::size_t j : scenario.customers_of(i)) {
          const auto& c = scenario.customers[j];
          e += c.demand_factor() * (rho[i] - c.coeffs_ag.alpha) / c.coeffs_ag.beta;
        }
        for (const auto* ch : scenario.scs[i].enabled_channels())
          e -= (rho[i] - ch->coeffs.alpha) / ch->coeffs.beta;
        excess[i] = e;
      }
      worst = std::max(worst, std::abs(excess[i]));
    }
    return worst;
  };

  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    const double worst = fill_excess();
    if (worst <= tol) {
      res.converged = true;
      break;
    }
    if (!std::isfinite(worst) || worst > kDivergenceLimit) {
      res.diverged = true;
      break;
    }
    // Supply slopes steeper than demand slopes make excess demand increase
    // with price here, so the contracting move is against the excess.
    for (std::size_t i = 0; i < n; ++i) rho[i] -= options.step_scale * excess[i];
  }

  res.state = state_at_prices(scenario, rho, options.enforce_bounds);
  collect_warnings(scenario, res.state, res.warnings);
  res.kkt_residual = result_residual(res.state, scenario, options.enforce_bounds);
  if (res.diverged) res.warnings.push_back("tatonnement diverged");
  return res;
}

EquilibriumResult interior_point_iterate(const MarketScenario& scenario,
                                         const SolverOptions& options) {
  const double tol = options.effective_tolerance(SolveMethod::interior_point);
  EquilibriumResult res;
  res.method = SolveMethod::interior_point;

  struct SupplyVar {
    std::size_t sc;
    const SupplyChannelParams* ch;
    double vm = 0.0;
  };
  struct DemandVar {
    std::size_t sc;
    const CustomerParams* cust;
    double vm = 0.0;
  };
  std::vector<SupplyVar> supply;
  std::vector<DemandVar> demand;
  const std::size_t n = scenario.scs.size();
  std::vector<double> rho(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto chans = scenario.scs[i].enabled_channels();
    if (chans.empty()) throw unsolvable_error("SC " + scenario.scs[i].id + " has no enabled channels");
    for (const auto* ch : chans) supply.push_back({i, ch, 0.0});
  }
  for (const auto& c : scenario.customers) demand.push_back({scenario.sc_index(c.sc_id), &c, 0.0});

  auto residual = [&] {
    double r = 0.0;
    std::vector<double> balance(n, 0.0);
    for (const auto& s : supply) {
      r = std::max(r, std::abs(s.ch->coeffs.alpha + s.ch->coeffs.beta * s.vm - rho[s.sc]));
      balance[s.sc] -= s.vm;
    }
    for (const auto& d : demand) {
      r = std::max(r, std::abs(d.cust->coeffs_ag.alpha + d.cust->coeffs_ag.beta * d.vm - rho[d.sc]));
      balance[d.sc] += d.cust->demand_factor() * d.vm;
    }
    for (double b : balance) r = std::max(r, std::abs(b));
    return r;
  };

  const double dt = options.step_scale;
  std::vector<double> balance(n);
  for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
    const double r = residual();
    if (r <= tol) {
      res.converged = true;
      break;
    }
    if (!std::isfinite(r) || r > kDivergenceLimit) {
      res.diverged = true;
      break;
    }
    // Jacobi update: all moves computed from the current iterate, each scaled
    // by step_scale / tau, matching the ODE semantics of the gradient play.
    std::fill(balance.begin(), balance.end(), 0.0);
    for (const auto& s : supply) balance[s.sc] -= s.vm;
    for (const auto& d : demand) balance[d.sc] += d.cust->demand_factor() * d.vm;
    for (auto& s : supply) {
      s.vm += dt * (rho[s.sc] - s.ch->coeffs.beta * s.vm - s.ch->coeffs.alpha) / s.ch->tau;
      if (options.enforce_bounds) s.vm = std::clamp(s.vm, s.ch->vm_min, s.ch->vm_max);
    }
    for (auto& d : demand) {
      d.vm += dt * (d.cust->coeffs_ag.beta * d.vm + d.cust->coeffs_ag.alpha - rho[d.sc]) /
              d.cust->tau_ag;
      if (options.enforce_bounds) d.vm = std::clamp(d.vm, d.cust->vm_min, d.cust->vm_max);
    }
    for (std::size_t i = 0; i < n; ++i) rho[i] += dt * balance[i] / scenario.scs[i].tau_rho;
  }

  for (std::size_t i = 0; i < n; ++i) res.state.rho[scenario.scs[i].id] = rho[i];
  for (const auto& s : supply)
    res.state.vm_supply[scenario.scs[s.sc].id][s.ch->channel] = s.vm;
  for (const auto& d : demand) res.state.vm_demand[d.cust->id] = d.vm;
  collect_warnings(scenario, res.state, res.warnings);
  res.kkt_residual = result_residual(res.state, scenario, options.enforce_bounds);
  if (res.diverged) res.warnings.push_back("interior point iteration diverged");
  return res;
}

std::vector<std::pair<char, double>> recover_type_splits(const CustomerParams& customer,
                                                         double rho) {
  std::vector<std::pair<char, double>> out;
  auto add = [&](char tag, const std::optional<QuadraticCoefficients>& c) {
    if (c) out.emplace_back(tag, (rho - c->alpha) / c->beta);
  };
  add('e', customer.coeffs_e);
  add('c', customer.coeffs_c);
  add('s', customer.coeffs_s);
  return out;
}

}  // namespace scmarket

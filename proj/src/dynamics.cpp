#include "scmarket/dynamics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace scmarket {

StateLayout::StateLayout(const MarketScenario& scenario) {
  supply_of_sc_.resize(scenario.scs.size());
  for (std::size_t i = 0; i < scenario.scs.size(); ++i) {
    const auto& sc = scenario.scs[i];
    for (const auto* ch : sc.enabled_channels()) {
      supply_of_sc_[i].push_back(components_.size());
      components_.push_back({Component::Kind::supply, sc.id, ch->channel, "",
                             "vm_" + std::string(channel_tag(ch->channel)) + ":" + sc.id});
    }
  }
  n_supply_ = components_.size();
  for (const auto& c : scenario.customers) {
    demand_of_customer_.push_back(components_.size());
    components_.push_back(
        {Component::Kind::demand, c.sc_id, Channel::reserved, c.id, "vm_ag:" + c.id});
  }
  n_demand_ = components_.size() - n_supply_;
  for (const auto& sc : scenario.scs) {
    price_of_sc_.push_back(components_.size());
    components_.push_back({Component::Kind::price, sc.id, Channel::reserved, "", "rho:" + sc.id});
  }
  n_price_ = scenario.scs.size();
}

std::vector<std::string> StateLayout::labels() const {
  std::vector<std::string> out;
  out.reserve(components_.size());
  for (const auto& c : components_) out.push_back(c.label);
  return out;
}

std::size_t StateLayout::supply_index(std::size_t sc, std::size_t enabled_channel) const {
  return supply_of_sc_.at(sc).at(enabled_channel);
}

std::size_t StateLayout::demand_index(std::size_t customer) const {
  return demand_of_customer_.at(customer);
}

std::size_t StateLayout::price_index(std::size_t sc) const { return price_of_sc_.at(sc); }

Eigen::VectorXd StateLayout::pack(const MarketState& state) const {
  Eigen::VectorXd x(components_.size());
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    switch (c.kind) {
      case Component::Kind::supply: x[k] = state.vm_supply.at(c.sc_id).at(c.channel); break;
      case Component::Kind::demand: x[k] = state.vm_demand.at(c.customer_id); break;
      case Component::Kind::price: x[k] = state.rho.at(c.sc_id); break;
    }
  }
  return x;
}

MarketState StateLayout::unpack(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != components_.size())
    throw std::invalid_argument("state vector length does not match layout");
  MarketState s;
  for (std::size_t k = 0; k < components_.size(); ++k) {
    const auto& c = components_[k];
    switch (c.kind) {
      case Component::Kind::supply: s.vm_supply[c.sc_id][c.channel] = x[k]; break;
      case Component::Kind::demand: s.vm_demand[c.customer_id] = x[k]; break;
      case Component::Kind::price: s.rho[c.sc_id] = x[k]; break;
    }
  }
  return s;
}

namespace {

/// Flattened coefficient tables for the gradient-play rhs.
struct CompiledDynamics {
  StateLayout layout;
  // per supply component
  std::vector<double> sup_beta_over_tau, sup_alpha_over_tau, sup_inv_tau, sup_price_coeff;
  std::vector<std::size_t> sup_sc;
  // per demand component
  std::vector<double> dem_beta_over_tau, dem_alpha_over_tau, dem_inv_tau, dem_factor;
  std::vector<std::size_t> dem_sc;
  std::vector<double> inv_tau_rho;   // per SC
  std::vector<double> vm_max_total;  // per SC, capacity cap

  CompiledDynamics(const MarketScenario& scenario, const std::optional<PerturbationSpec>& pert)
      : layout(scenario) {
    if (pert) validate_perturbation(scenario, *pert);
    for (std::size_t i = 0; i < scenario.scs.size(); ++i) {
      const auto& sc = scenario.scs[i];
      const double g = pert ? pert->factor_for(sc.id) : 1.0;
      double cap = 0.0;
      for (const auto* ch : sc.enabled_channels()) {
        sup_beta_over_tau.push_back(g * ch->coeffs.beta / ch->tau);
        sup_alpha_over_tau.push_back(ch->coeffs.alpha / ch->tau);
        sup_inv_tau.push_back(1.0 / ch->tau);
        sup_price_coeff.push_back(g);
        sup_sc.push_back(i);
        cap += ch->vm_max;
      }
      inv_tau_rho.push_back(1.0 / sc.tau_rho);
      vm_max_total.push_back(cap);
    }
    for (const auto& c : scenario.customers) {
      dem_beta_over_tau.push_back(c.coeffs_ag.beta / c.tau_ag);
      dem_alpha_over_tau.push_back(c.coeffs_ag.alpha / c.tau_ag);
      dem_inv_tau.push_back(1.0 / c.tau_ag);
      dem_factor.push_back(c.demand_factor());
      dem_sc.push_back(scenario.sc_index(c.sc_id));
    }
  }

  void eval(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, Eigen::VectorXd& dx,
            Eigen::VectorXd& dmu) const {
    const std::size_t ns = sup_sc.size(), nd = dem_sc.size(), np = inv_tau_rho.size();
    const std::size_t price0 = ns + nd;
    dx.resize(static_cast<Eigen::Index>(ns + nd + np));
    Eigen::VectorXd balance = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
    Eigen::VectorXd committed = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(np));
    for (std::size_t k = 0; k < ns; ++k) {
      const std::size_t i = sup_sc[k];
      double d =
          x[price0 + i] * sup_inv_tau[k] - sup_beta_over_tau[k] * x[k] - sup_alpha_over_tau[k];
      if (mu.size() > 0) d -= mu[static_cast<Eigen::Index>(i)] * sup_inv_tau[k];
      dx[static_cast<Eigen::Index>(k)] = d;
      balance[static_cast<Eigen::Index>(i)] -= sup_price_coeff[k] * x[k];
      committed[static_cast<Eigen::Index>(i)] += x[k];
    }
    for (std::size_t k = 0; k < nd; ++k) {
      const std::size_t i = dem_sc[k];
      dx[static_cast<Eigen::Index>(ns + k)] = dem_beta_over_tau[k] * x[ns + k] +
                                              dem_alpha_over_tau[k] -
                                              x[price0 + i] * dem_inv_tau[k];
      balance[static_cast<Eigen::Index>(i)] += dem_factor[k] * x[ns + k];
    }
    for (std::size_t i = 0; i < np; ++i)
      dx[static_cast<Eigen::Index>(price0 + i)] = balance[static_cast<Eigen::Index>(i)] * inv_tau_rho[i];
    dmu.resize(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i)
      dmu[i] = project_multiplier_rhs(committed[i] - vm_max_total[static_cast<std::size_t>(i)],
                                      mu[i]);
  }
};

void check_dimensions(const CompiledDynamics& model, const DynamicState& state) {
  if (static_cast<std::size_t>(state.market.size()) != model.layout.size())
    throw std::invalid_argument("market state dimension does not match the scenario");
  if (state.multipliers.size() != 0 &&
      static_cast<std::size_t>(state.multipliers.size()) != model.inv_tau_rho.size())
    throw std::invalid_argument("multiplier dimension does not match the number of SCs");
}

}  // namespace

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> perturbation_matrices(
    const MarketScenario& scenario, const PerturbationSpec& spec) {
  const StateLayout layout(scenario);
  const Eigen::Index n = static_cast<Eigen::Index>(layout.size());
  Eigen::MatrixXd delta_sc = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd delta_c = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < scenario.scs.size(); ++i) {
    const auto& sc = scenario.scs[i];
    const double g = spec.factor_for(sc.id);
    const auto chans = sc.enabled_channels();
    const Eigen::Index p = static_cast<Eigen::Index>(layout.price_index(i));
    for (std::size_t k = 0; k < chans.size(); ++k) {
      const Eigen::Index s = static_cast<Eigen::Index>(layout.supply_index(i, k));
      // Supply response scaled by g: diagonal moves from -beta/tau to
      // -g*beta/tau, the price-row entry from -1/tau_rho to -g/tau_rho.
      delta_sc(s, s) = (1.0 - g) * chans[k]->coeffs.beta / chans[k]->tau;
      delta_sc(p, s) = (g - 1.0) / sc.tau_rho;
    }
  }
  for (std::size_t j = 0; j < scenario.customers.size(); ++j) {
    const auto& c = scenario.customers[j];
    const std::size_t i = scenario.sc_index(c.sc_id);
    const Eigen::Index p = static_cast<Eigen::Index>(layout.price_index(i));
    const Eigen::Index d = static_cast<Eigen::Index>(layout.demand_index(j));
    // Demand-side perturbation relative to the kappa-free balance.
    delta_c(p, d) = -(c.kappa1 + c.kappa2) / scenario.scs[i].tau_rho;
  }
  return {delta_sc, delta_c};
}

void validate_perturbation(const MarketScenario& scenario, const PerturbationSpec& spec) {
  for (const auto& [id, g] : spec.supply_factors) {
    if (!scenario.find_sc(id))
      throw std::invalid_argument("perturbation names unknown SC: " + id);
    if (!std::isfinite(g)) throw std::invalid_argument("non-finite supply factor for SC " + id);
  }
  auto [dsc, dc] = perturbation_matrices(scenario, spec);
  const double nsc = dsc.operatorNorm();
  const double nc = dc.operatorNorm();
  std::ostringstream os;
  if (nsc > spec.pi_sc + 1e-12) {
    os << "supply perturbation norm " << nsc << " exceeds declared bound pi_sc = " << spec.pi_sc;
    throw std::invalid_argument(os.str());
  }
  if (nc > spec.pi_c + 1e-12) {
    os << "demand perturbation norm " << nc << " exceeds declared bound pi_c = " << spec.pi_c;
    throw std::invalid_argument(os.str());
  }
}

DynamicState rhs(const DynamicState& state, const MarketScenario& scenario,
                 const std::optional<PerturbationSpec>& perturbation) {
  const CompiledDynamics model(scenario, perturbation);
  check_dimensions(model, state);
  DynamicState d;
  model.eval(state.market, state.multipliers, d.market, d.multipliers);
  return d;
}

double project_multiplier_rhs(double cx1_minus_max, double multiplier) {
  if (multiplier == 0.0) return std::max(0.0, cx1_minus_max);
  return cx1_minus_max;
}

const char* status_name(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::converged: return "converged";
    case TerminalStatus::max_time: return "max_time";
    case TerminalStatus::diverged: return "diverged";
  }
  return "?";
}

TrajectoryRecord integrate(const MarketScenario& scenario, const DynamicState& initial,
                           double t_end, double dt, IntegrationMethod method,
                           const std::optional<PerturbationSpec>& perturbation,
                           std::size_t record_every) {
  if (!(dt > 0) || !(t_end > 0)) throw std::invalid_argument("dt and t_end must be positive");
  if (record_every == 0) record_every = 1;
  const CompiledDynamics model(scenario, perturbation);
  check_dimensions(model, initial);

  TrajectoryRecord traj;
  traj.labels = model.layout.labels();
  if (initial.capacity_enabled())
    for (const auto& sc : scenario.scs) traj.multiplier_labels.push_back("mu:" + sc.id);
  DynamicState x = initial;
  const std::size_t steps = static_cast<std::size_t>(std::ceil(t_end / dt - 1e-12));

  Eigen::VectorXd k1, k2, k3, k4, m1, m2, m3, m4;
  DynamicState probe;

  auto magnitude_ok = [](const DynamicState& s) {
    return s.market.allFinite() && s.multipliers.allFinite() &&
           s.market.cwiseAbs().maxCoeff() <= 1e12 &&
           (s.multipliers.size() == 0 || s.multipliers.cwiseAbs().maxCoeff() <= 1e12);
  };
  auto record = [&](double t) {
    if (!traj.times.empty() && t <= traj.times.back()) return;
    traj.times.push_back(t);
    traj.states.push_back(x);
  };
  auto rhs_norm_at = [&](const DynamicState& s) {
    model.eval(s.market, s.multipliers, k1, m1);
    return std::max(k1.size() ? k1.cwiseAbs().maxCoeff() : 0.0,
                    m1.size() ? m1.cwiseAbs().maxCoeff() : 0.0);
  };

  traj.times.push_back(0.0);
  traj.states.push_back(x);
  traj.terminal_status = TerminalStatus::max_time;
  double t_now = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    if (rhs_norm_at(x) < 1e-8) {  // leaves k1/m1 holding the slopes
      traj.terminal_status = TerminalStatus::converged;
      break;
    }
    const double h = std::min(dt, t_end - t_now);
    if (method == IntegrationMethod::euler) {
      x.market += h * k1;
      x.multipliers += h * m1;
    } else {
      probe.market = x.market + 0.5 * h * k1;
      probe.multipliers = x.multipliers + 0.5 * h * m1;
      model.eval(probe.market, probe.multipliers, k2, m2);
      probe.market = x.market + 0.5 * h * k2;
      probe.multipliers = x.multipliers + 0.5 * h * m2;
      model.eval(probe.market, probe.multipliers, k3, m3);
      probe.market = x.market + h * k3;
      probe.multipliers = x.multipliers + h * m3;
      model.eval(probe.market, probe.multipliers, k4, m4);
      x.market += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      x.multipliers += (h / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
    }
    x.multipliers = x.multipliers.cwiseMax(0.0);
    t_now = std::min((step + 1) * dt, t_end);
    if (!magnitude_ok(x)) {
      traj.terminal_status = TerminalStatus::diverged;
      record(t_now);
      return traj;
    }
    if ((step + 1) % record_every == 0) record(t_now);
  }
  if (traj.terminal_status == TerminalStatus::max_time && rhs_norm_at(x) < 1e-8)
    traj.terminal_status = TerminalStatus::converged;
  record(t_now);
  return traj;
}

DynamicState perturb_state(const DynamicState& state, double relative_magnitude,
                           std::uint64_t seed) {
  // splitmix64 stream; uniform in [-m, m] from the top 53 bits.
  std::uint64_t s = seed;
  auto next = [&s]() {
    s += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  };
  auto uniform = [&]() {
    const double u01 = static_cast<double>(next() >> 11) * 0x1.0p-53;
    return (2.0 * u01 - 1.0) * relative_magnitude;
  };
  DynamicState out = state;
  for (Eigen::Index i = 0; i < out.market.size(); ++i) out.market[i] *= 1.0 + uniform();
  for (Eigen::Index i = 0; i < out.multipliers.size(); ++i)
    out.multipliers[i] = std::max(0.0, out.multipliers[i] * (1.0 + uniform()));
  return out;
}

DynamicState make_dynamic_state(const MarketScenario& scenario, const MarketState& market,
                                bool capacity_dynamics) {
  const StateLayout layout(scenario);
  DynamicState s;
  s.market = layout.pack(market);
  s.multipliers = capacity_dynamics
                      ? Eigen::VectorXd::Zero(static_cast<Eigen::Index>(scenario.scs.size()))
                      : Eigen::VectorXd();
  return s;
}

}  // namespace scmarket

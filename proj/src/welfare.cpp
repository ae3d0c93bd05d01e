#include "scmarket/welfare.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "scmarket/clearing.hpp"
#include "scmarket/equilibrium.hpp"

namespace scmarket {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Demand-parameterized feasible set: demands live in their boxes and each
/// SC's total effective demand must stay inside its supply range (the supply
/// side is then the equal-marginal split, so balance holds by construction).
struct Problem {
  const MarketScenario* scenario;
  std::vector<double> lo, hi, f;               // per customer
  std::vector<std::vector<std::size_t>> cust;  // per SC
  std::vector<std::pair<double, double>> sup;  // per SC supply range

  explicit Problem(const MarketScenario& s) : scenario(&s) {
    for (const auto& c : s.customers) {
      lo.push_back(c.vm_min);
      hi.push_back(c.vm_max);
      f.push_back(c.demand_factor());
    }
    for (std::size_t i = 0; i < s.scs.size(); ++i) {
      cust.push_back(s.customers_of(i));
      sup.push_back(supply_range(s.scs[i]));
    }
  }

  double total(const std::vector<double>& d, std::size_t i) const {
    double t = 0.0;
    for (std::size_t j : cust[i]) t += f[j] * d[j];
    return t;
  }

  bool feasible(const std::vector<double>& d) const {
    for (std::size_t j = 0; j < d.size(); ++j)
      if (d[j] < lo[j] || d[j] > hi[j]) return false;
    for (std::size_t i = 0; i < cust.size(); ++i) {
      const double t = total(d, i);
      const double slack = 1e-9 * std::max(1.0, std::abs(sup[i].second));
      if (t < sup[i].first - slack || t > sup[i].second + slack) return false;
    }
    return true;
  }

  double sc_cost(const std::vector<double>& d, std::size_t i) const {
    return split_supply(scenario->scs[i], std::clamp(total(d, i), sup[i].first, sup[i].second))
        .cost;
  }

  double customer_utility(const std::vector<double>& d, std::size_t j) const {
    return utility(d[j], scenario->customers[j].coeffs_ag);
  }

  double social_welfare_of(const std::vector<double>& d) const {
    double sw = 0.0;
    for (std::size_t j = 0; j < d.size(); ++j) sw += customer_utility(d, j);
    for (std::size_t i = 0; i < cust.size(); ++i) sw -= sc_cost(d, i);
    return sw;
  }

  double min_payoff(const std::vector<double>& d) const {
    double m = kInf;
    for (std::size_t j = 0; j < d.size(); ++j) m = std::min(m, customer_utility(d, j));
    for (std::size_t i = 0; i < cust.size(); ++i) m = std::min(m, -sc_cost(d, i));
    return m;
  }

  // (customer payoff spread, SC payoff spread)
  std::array<double, 2> spreads(const std::vector<double>& d) const {
    double clo = kInf, chi = -kInf, slo = kInf, shi = -kInf;
    for (std::size_t j = 0; j < d.size(); ++j) {
      const double u = customer_utility(d, j);
      clo = std::min(clo, u);
      chi = std::max(chi, u);
    }
    for (std::size_t i = 0; i < cust.size(); ++i) {
      const double p = -sc_cost(d, i);
      slo = std::min(slo, p);
      shi = std::max(shi, p);
    }
    return {d.empty() ? 0.0 : chi - clo, cust.empty() ? 0.0 : shi - slo};
  }

  /// Pulls each SC's total into its supply range by shrinking the demands
  /// toward their lower bounds (or stretching toward the upper ones).
  std::vector<double> project(std::vector<double> d) const {
    for (std::size_t j = 0; j < d.size(); ++j) d[j] = std::clamp(d[j], lo[j], hi[j]);
    for (std::size_t i = 0; i < cust.size(); ++i) {
      double t = total(d, i);
      auto blend = [&](double target_t, bool up) {
        double limit = 0.0;
        for (std::size_t j : cust[i]) limit += f[j] * (up ? hi[j] : lo[j]);
        const double denom = limit - t;
        if (denom == 0.0) return;
        const double w = std::clamp((target_t - t) / denom, 0.0, 1.0);
        for (std::size_t j : cust[i]) d[j] += w * ((up ? hi[j] : lo[j]) - d[j]);
      };
      if (t < sup[i].first) blend(sup[i].first, true);
      t = total(d, i);
      if (t > sup[i].second) blend(sup[i].second, false);
    }
    return d;
  }
};

/// Lexicographic objective value, minimized.
using Objective = std::function<std::array<double, 2>(const std::vector<double>&)>;

bool lex_less(const std::array<double, 2>& a, const std::array<double, 2>& b) {
  if (a[0] != b[0]) return a[0] < b[0];
  return a[1] < b[1];
}

/// Deterministic projected pattern search over the demand coordinates of the
/// listed customers, with same-SC exchange moves that hold the SC totals
/// fixed. Starts must be feasible.
std::vector<double> pattern_search(const Problem& prob, const std::vector<std::size_t>& coords,
                                   std::vector<double> d, const Objective& objective,
                                   const WelfareOptions& opt) {
  std::array<double, 2> best = objective(d);
  double step0 = 0.0;
  for (std::size_t j : coords) step0 = std::max(step0, prob.hi[j] - prob.lo[j]);
  if (step0 == 0.0) return d;

  // exchange pairs within an SC keep its total fixed
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (const auto& group : prob.cust)
    for (std::size_t a = 0; a < group.size(); ++a)
      for (std::size_t b = a + 1; b < group.size(); ++b) {
        const bool in_a = std::find(coords.begin(), coords.end(), group[a]) != coords.end();
        const bool in_b = std::find(coords.begin(), coords.end(), group[b]) != coords.end();
        if (in_a && in_b) pairs.emplace_back(group[a], group[b]);
      }

  for (double step = step0 / 2.0; step >= opt.min_step; step /= 2.0) {
    for (int pass = 0; pass < opt.max_passes; ++pass) {
      bool improved = false;
      auto try_candidate = [&](std::vector<double>& cand) {
        if (!prob.feasible(cand)) return false;
        const auto v = objective(cand);
        if (lex_less(v, best)) {
          d = cand;
          best = v;
          return true;
        }
        return false;
      };
      for (std::size_t j : coords) {
        for (double dir : {+1.0, -1.0}) {
          std::vector<double> cand = d;
          cand[j] = std::clamp(cand[j] + dir * step, prob.lo[j], prob.hi[j]);
          if (cand[j] != d[j] && try_candidate(cand)) improved = true;
        }
      }
      for (auto [a, b] : pairs) {
        for (double dir : {+1.0, -1.0}) {
          std::vector<double> cand = d;
          cand[a] += dir * step / prob.f[a];
          cand[b] -= dir * step / prob.f[b];
          if (cand[a] >= prob.lo[a] && cand[a] <= prob.hi[a] && cand[b] >= prob.lo[b] &&
              cand[b] <= prob.hi[b] && try_candidate(cand))
            improved = true;
        }
      }
      if (!improved) break;
    }
  }
  return d;
}

/// Always-feasible seed: per SC, demands blended between bounds so the total
/// sits mid-range of what both sides allow.
std::vector<double> midpoint_seed(const Problem& prob) {
  std::vector<double> d(prob.lo.size());
  for (std::size_t i = 0; i < prob.cust.size(); ++i) {
    double tl = 0.0, th = 0.0;
    for (std::size_t j : prob.cust[i]) {
      tl += prob.f[j] * prob.lo[j];
      th += prob.f[j] * prob.hi[j];
    }
    const double lo_t = std::max(tl, prob.sup[i].first);
    const double hi_t = std::min(th, prob.sup[i].second);
    if (lo_t > hi_t)
      throw infeasible_error("SC " + prob.scenario->scs[i].id +
                             ": demand range is disjoint from the supply range");
    const double target = 0.5 * (lo_t + hi_t);
    const double w = th > tl ? (target - tl) / (th - tl) : 0.0;
    for (std::size_t j : prob.cust[i]) d[j] = prob.lo[j] + w * (prob.hi[j] - prob.lo[j]);
  }
  return d;
}

/// Clearing-based seed: clamped best responses at each SC's best clearing
/// price (best by social welfare among the piecewise-linear roots).
std::vector<double> clearing_seed(const Problem& prob) {
  std::vector<double> d = midpoint_seed(prob);
  const auto& scenario = *prob.scenario;
  for (std::size_t i = 0; i < prob.cust.size(); ++i) {
    double best_sw = -kInf;
    std::vector<double> best_d;
    for (double rho : clamped_clearing_prices(scenario, i)) {
      std::vector<double> cand = d;
      for (std::size_t j : prob.cust[i]) {
        const auto& c = scenario.customers[j];
        cand[j] = clamped_best_response(rho, c.coeffs_ag, c.vm_min, c.vm_max);
      }
      if (!prob.feasible(cand)) continue;
      double sw = -prob.sc_cost(cand, i);
      for (std::size_t j : prob.cust[i]) sw += prob.customer_utility(cand, j);
      if (sw > best_sw) {
        best_sw = sw;
        best_d = cand;
      }
    }
    if (!best_d.empty()) d = best_d;
  }
  return d;
}

std::vector<std::vector<double>> common_seeds(const Problem& prob, const WelfareOptions& opt) {
  std::vector<std::vector<double>> seeds;
  seeds.push_back(midpoint_seed(prob));
  seeds.push_back(clearing_seed(prob));
  seeds.push_back(prob.project(prob.lo));
  seeds.push_back(prob.project(prob.hi));
  std::mt19937 rng(opt.seed);
  for (int k = 0; k < opt.random_starts; ++k) {
    std::vector<double> d(prob.lo.size());
    for (std::size_t j = 0; j < d.size(); ++j) {
      const double u = static_cast<double>(rng()) / static_cast<double>(rng.max());
      d[j] = prob.lo[j] + u * (prob.hi[j] - prob.lo[j]);
    }
    seeds.push_back(prob.project(d));
  }
  std::erase_if(seeds, [&](const auto& s) { return !prob.feasible(s); });
  return seeds;
}

std::vector<double> run_solver(const Problem& prob, const Objective& objective,
                               const WelfareOptions& opt,
                               const std::vector<std::vector<double>>& extra_starts) {
  auto seeds = common_seeds(prob, opt);
  for (const auto& s : extra_starts)
    if (prob.feasible(s)) seeds.push_back(s);
  if (seeds.empty()) throw infeasible_error("no feasible allocation exists");

  std::vector<std::size_t> coords(prob.lo.size());
  for (std::size_t j = 0; j < coords.size(); ++j) coords[j] = j;

  std::vector<double> best;
  std::array<double, 2> best_v = {kInf, kInf};
  for (const auto& s : seeds) {
    auto r = pattern_search(prob, coords, s, objective, opt);
    const auto v = objective(r);
    if (best.empty() || lex_less(v, best_v)) {
      best = r;
      best_v = v;
    }
  }
  return best;
}

MarketState to_state(const Problem& prob, const std::vector<double>& d) {
  MarketState s;
  const auto& scenario = *prob.scenario;
  for (std::size_t j = 0; j < d.size(); ++j) s.vm_demand[scenario.customers[j].id] = d[j];
  for (std::size_t i = 0; i < prob.cust.size(); ++i) {
    const auto& sc = scenario.scs[i];
    const double t = std::clamp(prob.total(d, i), prob.sup[i].first, prob.sup[i].second);
    const auto split = split_supply(sc, t);
    const auto chans = sc.enabled_channels();
    for (std::size_t k = 0; k < chans.size(); ++k) s.vm_supply[sc.id][chans[k]->channel] = split.vm[k];
    s.rho[sc.id] = split.marginal;
  }
  return s;
}

std::vector<double> demands_of(const Problem& prob, const MarketState& s) {
  std::vector<double> d(prob.lo.size());
  for (std::size_t j = 0; j < d.size(); ++j)
    d[j] = s.vm_demand.at(prob.scenario->customers[j].id);
  return d;
}

Objective utilitarian_objective(const Problem& prob) {
  return [&prob](const std::vector<double>& d) -> std::array<double, 2> {
    return {-prob.social_welfare_of(d), 0.0};
  };
}

Objective rawlsian_objective(const Problem& prob) {
  return [&prob](const std::vector<double>& d) -> std::array<double, 2> {
    return {-prob.min_payoff(d), -prob.social_welfare_of(d)};
  };
}

Objective egalitarian_objective(const Problem& prob) {
  return [&prob](const std::vector<double>& d) -> std::array<double, 2> {
    const auto s = prob.spreads(d);
    return {s[0], s[1]};
  };
}

std::vector<double> solve_type(const Problem& prob, WelfareType type, const WelfareOptions& opt,
                               const std::vector<std::vector<double>>& extra) {
  switch (type) {
    case WelfareType::utilitarian: return run_solver(prob, utilitarian_objective(prob), opt, extra);
    case WelfareType::rawlsian: return run_solver(prob, rawlsian_objective(prob), opt, extra);
    case WelfareType::egalitarian: return run_solver(prob, egalitarian_objective(prob), opt, extra);
  }
  throw std::logic_error("unknown welfare type");
}

}  // namespace

const char* welfare_name(WelfareType t) {
  switch (t) {
    case WelfareType::utilitarian: return "utilitarian";
    case WelfareType::egalitarian: return "egalitarian";
    case WelfareType::rawlsian: return "rawlsian";
  }
  return "?";
}

MarketState bounded_utilitarian(const MarketScenario& scenario, const WelfareOptions& options) {
  require_valid(scenario);
  Problem prob(scenario);
  return to_state(prob, solve_type(prob, WelfareType::utilitarian, options, {}));
}

MarketState rawlsian_allocation(const MarketScenario& scenario, const WelfareOptions& options) {
  require_valid(scenario);
  Problem prob(scenario);
  return to_state(prob, solve_type(prob, WelfareType::rawlsian, options, {}));
}

MarketState egalitarian_allocation(const MarketScenario& scenario, const WelfareOptions& options) {
  require_valid(scenario);
  Problem prob(scenario);
  return to_state(prob, solve_type(prob, WelfareType::egalitarian, options, {}));
}

std::vector<double> allocation_ratios(const std::vector<double>& values) {
  double max_abs = 0.0, max_v = -kInf;
  for (double v : values) {
    max_abs = std::max(max_abs, std::abs(v));
    max_v = std::max(max_v, v);
  }
  if (!(max_abs > 0)) throw std::invalid_argument("allocation_ratios: all values are zero");
  std::vector<double> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(v / max_v);
  return out;
}

WelfareReport compare(const MarketScenario& scenario, const WelfareOptions& options) {
  require_valid(scenario);
  Problem prob(scenario);

  auto du = solve_type(prob, WelfareType::utilitarian, options, {});
  auto dr = solve_type(prob, WelfareType::rawlsian, options, {du});
  auto de = solve_type(prob, WelfareType::egalitarian, options, {du});

  // The three objectives share one feasible set, so the utilitarian entry
  // must dominate in social welfare; fold any better point back in.
  for (int round = 0; round < 4; ++round) {
    const double swu = prob.social_welfare_of(du);
    if (prob.social_welfare_of(dr) <= swu + 1e-12 * std::abs(swu) &&
        prob.social_welfare_of(de) <= swu + 1e-12 * std::abs(swu))
      break;
    du = solve_type(prob, WelfareType::utilitarian, options, {du, dr, de});
    dr = solve_type(prob, WelfareType::rawlsian, options, {du, dr});
    de = solve_type(prob, WelfareType::egalitarian, options, {du, de});
  }

  WelfareReport rep;
  rep.allocations[WelfareType::utilitarian] = to_state(prob, du);
  rep.allocations[WelfareType::rawlsian] = to_state(prob, dr);
  rep.allocations[WelfareType::egalitarian] = to_state(prob, de);

  const double sw_util = prob.social_welfare_of(du);
  for (auto type : {WelfareType::utilitarian, WelfareType::egalitarian, WelfareType::rawlsian}) {
    const auto d = demands_of(prob, rep.allocations.at(type));
    const double sw = prob.social_welfare_of(d);
    rep.utilitarian_sw[type] = sw;
    rep.sw_ratio[type] = sw_util != 0.0 ? sw / sw_util : 1.0;
    std::vector<double> costs, utils;
    for (std::size_t i = 0; i < scenario.scs.size(); ++i) costs.push_back(prob.sc_cost(d, i));
    for (std::size_t j = 0; j < scenario.customers.size(); ++j)
      utils.push_back(prob.customer_utility(d, j));
    rep.sc_cost_ratios[type] = allocation_ratios(costs);
    rep.customer_utility_ratios[type] = allocation_ratios(utils);
  }
  return rep;
}

}  // namespace scmarket

#include "scmarket/clearing.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scmarket {

double clamped_best_response(double m, const QuadraticCoefficients& coeffs, double lo, double hi) {
  return std::clamp((m - coeffs.alpha) / coeffs.beta, lo, hi);
}

double clamped_excess_demand(const MarketScenario& scenario, std::size_t sc, double rho) {
  double excess = 0.0;
  for (std::size_t j : scenario.customers_of(sc)) {
    const auto& c = scenario.customers[j];
    excess += c.demand_factor() * clamped_best_response(rho, c.coeffs_ag, c.vm_min, c.vm_max);
  }
  for (const auto* ch : scenario.scs[sc].enabled_channels())
    excess -= clamped_best_response(rho, ch->coeffs, ch->vm_min, ch->vm_max);
  return excess;
}

std::vector<double> clamped_clearing_prices(const MarketScenario& scenario, std::size_t sc) {
  // Breakpoints where some best response hits a bound. Between breakpoints
  // the excess is linear in rho.
  std::vector<double> bps;
  auto add_bp = [&](const QuadraticCoefficients& c, double lo, double hi) {
    bps.push_back(c.alpha + c.beta * lo);
    bps.push_back(c.alpha + c.beta * hi);
  };
  for (std::size_t j : scenario.customers_of(sc)) {
    const auto& c = scenario.customers[j];
    add_bp(c.coeffs_ag, c.vm_min, c.vm_max);
  }
  for (const auto* ch : scenario.scs[sc].enabled_channels())
    add_bp(ch->coeffs, ch->vm_min, ch->vm_max);
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());
  if (bps.empty()) return {};

  std::vector<double> roots;
  auto push = [&](double r) {
    for (double q : roots)
      if (std::abs(q - r) <= 1e-12 * std::max(1.0, std::abs(r))) return;
    roots.push_back(r);
  };
  auto excess = [&](double r) { return clamped_excess_demand(scenario, sc, r); };

  // Outside the breakpoint span everything is clamped and the excess is
  // constant; a zero there means the boundary itself clears.
  if (excess(bps.front() - 1.0) == 0.0) push(bps.front());
  if (excess(bps.back() + 1.0) == 0.0) push(bps.back());

  for (std::size_t k = 0; k + 1 < bps.size(); ++k) {
    const double a = bps[k], b = bps[k + 1];
    if (b - a <= 0) continue;
    const double ea = excess(a), eb = excess(b);
    if (ea == 0.0 && eb == 0.0) {
      push(a);
      push(0.5 * (a + b));
      push(b);
    } else if (ea == 0.0) {
      push(a);
    } else if (eb == 0.0) {
      push(b);
    } else if ((ea < 0) != (eb < 0)) {
      push(a + (b - a) * ea / (ea - eb));
    }
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

std::pair<double, double> supply_range(const SmallCloudParams& sc) {
  double lo = 0.0, hi = 0.0;
  for (const auto* ch : sc.enabled_channels()) {
    lo += ch->vm_min;
    hi += ch->vm_max;
  }
  return {lo, hi};
}

SupplySplit split_supply(const SmallCloudParams& sc, double total) {
  const auto chans = sc.enabled_channels();
  if (chans.empty()) throw std::domain_error("split_supply: SC has no enabled channels");
  auto [lo, hi] = supply_range(sc);
  const double slack = 1e-9 * std::max({1.0, std::abs(lo), std::abs(hi)});
  if (total < lo - slack || total > hi + slack)
    throw std::domain_error("split_supply: total outside feasible supply range");
  total = std::clamp(total, lo, hi);

  // Total clamped best response is strictly decreasing in the marginal m
  // wherever any channel is unclamped (1/beta < 0), so walk the m-segments.
  std::vector<double> bps;
  for (const auto* ch : chans) {
    bps.push_back(ch->coeffs.alpha + ch->coeffs.beta * ch->vm_min);
    bps.push_back(ch->coeffs.alpha + ch->coeffs.beta * ch->vm_max);
  }
  std::sort(bps.begin(), bps.end());
  bps.erase(std::unique(bps.begin(), bps.end()), bps.end());

  auto total_at = [&](double m) {
    double t = 0.0;
    for (const auto* ch : chans) t += clamped_best_response(m, ch->coeffs, ch->vm_min, ch->vm_max);
    return t;
  };

  double marginal = bps.front();
  if (total_at(bps.front()) <= total) {
    marginal = bps.front();
  } else if (total_at(bps.back()) >= total) {
    marginal = bps.back();
  } else {
    for (std::size_t k = 0; k + 1 < bps.size(); ++k) {
      const double ta = total_at(bps[k]), tb = total_at(bps[k + 1]);
      if (!(ta >= total && total >= tb)) continue;
      if (ta == tb) {
        marginal = bps[k];
      } else {
        marginal = bps[k] + (bps[k + 1] - bps[k]) * (ta - total) / (ta - tb);
      }
      break;
    }
  }

  SupplySplit out;
  out.marginal = marginal;
  for (const auto* ch : chans)
    out.vm.push_back(clamped_best_response(marginal, ch->coeffs, ch->vm_min, ch->vm_max));
  // Absorb the segment-solve rounding into an unclamped channel so the split
  // sums to the requested total exactly.
  double sum = 0.0;
  for (double v : out.vm) sum += v;
  double resid = total - sum;
  if (resid != 0.0) {
    for (std::size_t k = 0; k < out.vm.size(); ++k) {
      const auto* ch = chans[k];
      const double adj = out.vm[k] + resid;
      if (adj >= ch->vm_min && adj <= ch->vm_max) {
        out.vm[k] = adj;
        break;
      }
    }
  }
  for (std::size_t k = 0; k < out.vm.size(); ++k) out.cost += cost(out.vm[k], chans[k]->coeffs);
  return out;
}

}  // namespace scmarket

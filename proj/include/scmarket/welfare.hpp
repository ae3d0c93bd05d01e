#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "scmarket/model.hpp"

namespace scmarket {

enum class WelfareType { utilitarian, egalitarian, rawlsian };

const char* welfare_name(WelfareType t);

struct infeasible_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct WelfareOptions {
  double tolerance = 1e-6;  // balance and comparison tolerance
  double min_step = 1e-7;   // terminal coordinate-search step
  unsigned seed = 0;        // seeds the extra random starts
  int random_starts = 4;
  int max_passes = 400;
};

/// Comparison of regulator objectives over the same feasible set (per-SC
/// balance plus box bounds), with allocation- and welfare-ratio summaries.
struct WelfareReport {
  std::map<WelfareType, MarketState> allocations;
  /// Utilitarian social welfare evaluated at each optimum.
  std::map<WelfareType, double> utilitarian_sw;
  /// utilitarian_sw[t] / utilitarian_sw[utilitarian]; 1 for utilitarian and
  /// <= 1 for the others.
  std::map<WelfareType, double> sw_ratio;
  std::map<WelfareType, std::vector<double>> sc_cost_ratios;
  std::map<WelfareType, std::vector<double>> customer_utility_ratios;
};

/// Maximizes social welfare subject to per-SC balance and box bounds.
/// Demands are the decision variables; each SC's supply follows the
/// equal-marginal clamped split of its total, which keeps the balance exact.
MarketState bounded_utilitarian(const MarketScenario& scenario, const WelfareOptions& options = {});

/// Maximizes the minimum stakeholder payoff (customer gross utilities and
/// per-SC negative total cost) over the same feasible set.
MarketState rawlsian_allocation(const MarketScenario& scenario, const WelfareOptions& options = {});

/// Minimizes the payoff spread within each stakeholder class, customers
/// first, SCs second (lexicographically), over the same feasible set.
MarketState egalitarian_allocation(const MarketScenario& scenario,
                                   const WelfareOptions& options = {});

/// Each entry divided by the maximum entry. Requires max |value| > 0.
std::vector<double> allocation_ratios(const std::vector<double>& values);

/// Runs all three allocations and assembles the ratio report. The
/// utilitarian entry is guaranteed to dominate the others in social welfare.
WelfareReport compare(const MarketScenario& scenario, const WelfareOptions& options = {});

}  // namespace scmarket

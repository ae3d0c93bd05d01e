#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace scmarket {

/// VM supply channels available to a small cloud.
enum class Channel { reserved, borrowed, public_cloud };

const char* channel_name(Channel c);  // "reserved" / "borrowed" / "public_cloud"
const char* channel_tag(Channel c);   // "r" / "b" / "pc"
std::optional<Channel> channel_from_name(const std::string& name);

/// (alpha, beta) pair of a quadratic cost or utility curve
/// q -> alpha*q + (beta/2)*q^2, with alpha > 0 and beta < 0 so that the
/// marginal is a decreasing linear function alpha + beta*q.
struct QuadraticCoefficients {
  double alpha = 0.0;  // currency per VM-unit
  double beta = 0.0;   // currency per VM-unit^2
};

struct SupplyChannelParams {
  Channel channel = Channel::reserved;
  QuadraticCoefficients coeffs;
  double vm_min = 0.0;
  double vm_max = 0.0;
  double tau = 1.0;  // adjustment time constant, seconds
  bool enabled = true;
};

struct SmallCloudParams {
  std::string id;
  std::vector<SupplyChannelParams> channels;  // up to one per channel kind
  double tau_rho = 1.0;                       // price adjustment time constant

  std::vector<const SupplyChannelParams*> enabled_channels() const;
};

struct CustomerParams {
  std::string id;
  std::string sc_id;  // serving small cloud
  QuadraticCoefficients coeffs_ag;
  std::optional<QuadraticCoefficients> coeffs_e;
  std::optional<QuadraticCoefficients> coeffs_c;
  std::optional<QuadraticCoefficients> coeffs_s;
  double kappa1 = 0.0;  // curtailment fractions, kappa1 + kappa2 < 1
  double kappa2 = 0.0;
  double tau_ag = 1.0;
  double vm_min = 0.0;
  double vm_max = 0.0;

  /// Fraction of aggregate demand that reaches the market-clearing balance.
  double demand_factor() const { return 1.0 - kappa1 - kappa2; }
};

struct MarketScenario {
  std::vector<SmallCloudParams> scs;
  std::vector<CustomerParams> customers;

  const SmallCloudParams* find_sc(const std::string& id) const;
  std::size_t sc_index(const std::string& id) const;  // throws if unknown
  /// Customer indices served by scs[sc].
  std::vector<std::size_t> customers_of(std::size_t sc) const;
  /// customer-id -> sc-id, derived from the customers' sc_id fields.
  std::map<std::string, std::string> assignment() const;
};

/// All VM quantities and per-SC prices. Keys must match the scenario's
/// enabled channels and customers exactly; quantities are continuous.
struct MarketState {
  std::map<std::string, std::map<Channel, double>> vm_supply;  // sc-id, channel
  std::map<std::string, double> vm_demand;                     // customer-id
  std::map<std::string, double> rho;                           // sc-id

  static MarketState zero(const MarketScenario& scenario);
};

// Cost / utility primitives. Non-finite quantities raise std::domain_error.
double cost(double q, const QuadraticCoefficients& coeffs);
double marginal_cost(double q, const QuadraticCoefficients& coeffs);
double utility(double q, const QuadraticCoefficients& coeffs);
double marginal_utility(double q, const QuadraticCoefficients& coeffs);

/// vm_c = (kappa1 + kappa2) * vm_e. Requires kappa1, kappa2 >= 0 and
/// kappa1 + kappa2 < 1.
double curtailed_demand(double vm_e, double kappa1, double kappa2);

double sc_profit(double rho, double q, const QuadraticCoefficients& coeffs);
double customer_net_utility(double rho, double q, const QuadraticCoefficients& coeffs);

/// Utilitarian social welfare: sum of customer utilities minus all supply
/// channel costs.
double social_welfare(const MarketState& state, const MarketScenario& scenario);

/// Demand entering the balance equation: vm_ag * (1 - kappa1 - kappa2).
double effective_demand(const CustomerParams& customer, const MarketState& state);

/// Empty iff all type invariants hold; each entry names the offending field
/// and the violated rule.
std::vector<std::string> validate_scenario(const MarketScenario& scenario);

/// Throws std::invalid_argument listing all violations if the scenario is
/// invalid.
void require_valid(const MarketScenario& scenario);

}  // namespace scmarket

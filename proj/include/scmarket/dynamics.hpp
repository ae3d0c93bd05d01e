#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scmarket/model.hpp"

namespace scmarket {

/// Ordered flat view of the market state: all supplies by SC and channel,
/// then all demands by customer, then all prices by SC.
class StateLayout {
 public:
  struct Component {
    enum class Kind { supply, demand, price };
    Kind kind;
    std::string sc_id;       // supply, price
    Channel channel;         // supply
    std::string customer_id; // demand
    std::string label;       // "vm_r:SC1", "vm_ag:C1", "rho:SC1"
  };

  explicit StateLayout(const MarketScenario& scenario);

  std::size_t size() const { return components_.size(); }
  const std::vector<Component>& components() const { return components_; }
  std::vector<std::string> labels() const;

  std::size_t supply_index(std::size_t sc, std::size_t enabled_channel) const;
  std::size_t demand_index(std::size_t customer) const;
  std::size_t price_index(std::size_t sc) const;
  std::size_t num_supplies() const { return n_supply_; }
  std::size_t num_demands() const { return n_demand_; }
  std::size_t num_prices() const { return n_price_; }

  Eigen::VectorXd pack(const MarketState& state) const;
  MarketState unpack(const Eigen::VectorXd& x) const;

 private:
  std::vector<Component> components_;
  std::vector<std::vector<std::size_t>> supply_of_sc_;  // sc -> component indices
  std::vector<std::size_t> demand_of_customer_;
  std::vector<std::size_t> price_of_sc_;
  std::size_t n_supply_ = 0, n_demand_ = 0, n_price_ = 0;
};

/// Market state plus capacity-constraint multipliers (one per SC when
/// capacity dynamics are enabled, empty otherwise). Multipliers stay in the
/// nonnegative orthant.
struct DynamicState {
  Eigen::VectorXd market;       // StateLayout ordering
  Eigen::VectorXd multipliers;  // per SC, or empty

  bool capacity_enabled() const { return multipliers.size() > 0; }
};

/// Supply/demand perturbation bounds. Each SC's supply response is scaled by
/// its factor (1 = unperturbed); demand perturbations are the scenario's own
/// (1 - kappa1 - kappa2) factors. pi_sc / pi_c bound the spectral norms of
/// the induced matrices; construction is rejected if either bound is
/// exceeded.
struct PerturbationSpec {
  std::map<std::string, double> supply_factors;  // sc-id -> factor, missing = 1
  double pi_sc = 0.0;
  double pi_c = 0.0;

  double factor_for(const std::string& sc_id) const {
    auto it = supply_factors.find(sc_id);
    return it == supply_factors.end() ? 1.0 : it->second;
  }
};

/// Induced perturbation matrices over the ordered state: the supply-side
/// difference from factor 1 and the demand-side difference from kappa = 0.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> perturbation_matrices(
    const MarketScenario& scenario, const PerturbationSpec& spec);

/// Throws std::invalid_argument when an induced spectral norm exceeds its
/// declared bound.
void validate_perturbation(const MarketScenario& scenario, const PerturbationSpec& spec);

/// Gradient-play right-hand side. Supplies move toward their best response to
/// the price, demands toward theirs, and each price follows its SC's excess
/// effective demand; all scaled by the respective time constants. Multiplier
/// components follow the projected capacity dynamics when present.
DynamicState rhs(const DynamicState& state, const MarketScenario& scenario,
                 const std::optional<PerturbationSpec>& perturbation = {});

/// One row of the projection onto the nonnegative orthant: max(0, arg) on the
/// boundary, the raw argument in the interior.
double project_multiplier_rhs(double cx1_minus_max, double multiplier);

enum class IntegrationMethod { euler, rk4 };
enum class TerminalStatus { converged, max_time, diverged };

const char* status_name(TerminalStatus s);

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<DynamicState> states;
  TerminalStatus terminal_status = TerminalStatus::max_time;
  std::vector<std::string> labels;             // market component labels
  std::vector<std::string> multiplier_labels;  // per SC, when capacity dynamics are on
};

/// Fixed-step integration; multipliers are clamped to the nonnegative orthant
/// after every step. Converged when the rhs max-norm drops below 1e-8,
/// diverged when any state magnitude exceeds 1e12.
TrajectoryRecord integrate(const MarketScenario& scenario, const DynamicState& initial,
                           double t_end, double dt, IntegrationMethod method,
                           const std::optional<PerturbationSpec>& perturbation = {},
                           std::size_t record_every = 1);

/// Componentwise multiplicative perturbation by (1 + u), u uniform in
/// [-relative_magnitude, relative_magnitude], deterministic in seed.
DynamicState perturb_state(const DynamicState& state, double relative_magnitude,
                           std::uint64_t seed);

/// DynamicState at a market state with zero multipliers (sized per the
/// capacity flag).
DynamicState make_dynamic_state(const MarketScenario& scenario, const MarketState& market,
                                bool capacity_dynamics = false);

}  // namespace scmarket

#include "scmarket/model.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace scmarket {

const char* channel_name(Channel c) {
  switch (c) {
    case Channel::reserved: return "reserved";
    case Channel::borrowed: return "borrowed";
    case Channel::public_cloud: return "public_cloud";
  }
  return "?";
}

const char* channel_tag(Channel c) {
  switch (c) {
    case Channel::reserved: return "r";
    case Channel::borrowed: return "b";
    case Channel::public_cloud: return "pc";
  }
  return "?";
}

std::optional<Channel> channel_from_name(const std::string& name) {
  if (name == "reserved" || name == "r") return Channel::reserved;
  if (name == "borrowed" || name == "b") return Channel::borrowed;
  if (name == "public_cloud" || name == "pc") return Channel::public_cloud;
  return std::nullopt;
}

std::vector<const SupplyChannelParams*> SmallCloudParams::enabled_channels() const {
  std::vector<const SupplyChannelParams*> out;
  for (const auto& ch : channels)
    if (ch.enabled) out.push_back(&ch);
  return out;
}

const SmallCloudParams* MarketScenario::find_sc(const std::string& id) const {
  for (const auto& sc : scs)
    if (sc.id == id) return &sc;
  return nullptr;
}

std::size_t MarketScenario::sc_index(const std::string& id) const {
  for (std::size_t i = 0; i < scs.size(); ++i)
    if (scs[i].id == id) return i;
  throw std::invalid_argument("unknown SC id: " + id);
}

std::vector<std::size_t> MarketScenario::customers_of(std::size_t sc) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < customers.size(); ++j)
    if (customers[j].sc_id == scs[sc].id) out.push_back(j);
  return out;
}

std::map<std::string, std::string> MarketScenario::assignment() const {
  std::map<std::string, std::string> out;
  for (const auto& c : customers) out[c.id] = c.sc_id;
  return out;
}

MarketState MarketState::zero(const MarketScenario& scenario) {
  MarketState s;
  for (const auto& sc : scenario.scs) {
    for (const auto* ch : sc.enabled_channels()) s.vm_supply[sc.id][ch->channel] = 0.0;
    s.rho[sc.id] = 0.0;
  }
  for (const auto& c : scenario.customers) s.vm_demand[c.id] = 0.0;
  return s;
}

namespace {

void check_finite(double q) {
  if (!std::isfinite(q)) throw std::domain_error("non-finite VM quantity");
}

double quadratic(double q, const QuadraticCoefficients& c) {
  check_finite(q);
  return c.alpha * q + 0.5 * c.beta * q * q;
}

}  // namespace

double cost(double q, const QuadraticCoefficients& coeffs) { return quadratic(q, coeffs); }

double marginal_cost(double q, const QuadraticCoefficients& coeffs) {
  check_finite(q);
  return coeffs.alpha + coeffs.beta * q;
}

double utility(double q, const QuadraticCoefficients& coeffs) { return quadratic(q, coeffs); }

double marginal_utility(double q, const QuadraticCoefficients& coeffs) {
  return marginal_cost(q, coeffs);
}

double curtailed_demand(double vm_e, double kappa1, double kappa2) {
  check_finite(vm_e);
  if (kappa1 < 0 || kappa2 < 0 || kappa1 + kappa2 >= 1.0)
    throw std::domain_error("curtailment fractions must satisfy kappa1, kappa2 >= 0 and kappa1 + kappa2 < 1");
  return (kappa1 + kappa2) * vm_e;
}

double sc_profit(double rho, double q, const QuadraticCoefficients& coeffs) {
  check_finite(rho);
  return rho * q - cost(q, coeffs);
}

double customer_net_utility(double rho, double q, const QuadraticCoefficients& coeffs) {
  check_finite(rho);
  return utility(q, coeffs) - rho * q;
}

double social_welfare(const MarketState& state, const MarketScenario& scenario) {
  double sw = 0.0;
  for (const auto& c : scenario.customers) {
    auto it = state.vm_demand.find(c.id);
    if (it == state.vm_demand.end())
      throw std::invalid_argument("state is missing demand for customer " + c.id);
    sw += utility(it->second, c.coeffs_ag);
  }
  for (const auto& sc : scenario.scs) {
    auto it = state.vm_supply.find(sc.id);
    if (it == state.vm_supply.end())
      throw std::invalid_argument("state is missing supplies for SC " + sc.id);
    for (const auto* ch : sc.enabled_channels()) {
      auto jt = it->second.find(ch->channel);
      if (jt == it->second.end())
        throw std::invalid_argument("state is missing channel " + std::string(channel_name(ch->channel)) +
                                    " of SC " + sc.id);
      sw -= cost(jt->second, ch->coeffs);
    }
  }
  return sw;
}

double effective_demand(const CustomerParams& customer, const MarketState& state) {
  auto it = state.vm_demand.find(customer.id);
  if (it == state.vm_demand.end())
    throw std::invalid_argument("state is missing demand for customer " + customer.id);
  return it->second * customer.demand_factor();
}

namespace {

void check_coeffs(std::vector<std::string>& out, const std::string& where,
                  const QuadraticCoefficients& c) {
  if (!(c.alpha > 0))
    out.push_back(where + ".alpha: must be positive");
  if (!(c.beta < 0))
    out.push_back(where + ".beta: must be negative");
}

}  // namespace

std::vector<std::string> validate_scenario(const MarketScenario& scenario) {
  std::vector<std::string> v;
  std::set<std::string> sc_ids;
  for (const auto& sc : scenario.scs) {
    const std::string where = "sc[" + sc.id + "]";
    if (!sc_ids.insert(sc.id).second) v.push_back(where + ".id: duplicate SC id");
    if (!(sc.tau_rho > 0)) v.push_back(where + ".tau_rho: must be positive");
    std::set<Channel> kinds;
    std::size_t enabled = 0;
    for (const auto& ch : sc.channels) {
      const std::string cw = where + ".channels[" + channel_name(ch.channel) + "]";
      if (!kinds.insert(ch.channel).second) v.push_back(cw + ": duplicate channel kind");
      check_coeffs(v, cw, ch.coeffs);
      if (!(ch.vm_min <= ch.vm_max)) v.push_back(cw + ".vm_min: must not exceed vm_max");
      if (!(ch.tau > 0)) v.push_back(cw + ".tau: must be positive");
      if (ch.vm_max == 0 && ch.enabled)
        v.push_back(cw + ".enabled: channel with vm_max = 0 must be disabled");
      if (ch.enabled) ++enabled;
    }
    if (enabled == 0) v.push_back(where + ".channels: at least one enabled channel required");
  }
  std::set<std::string> cust_ids;
  for (const auto& c : scenario.customers) {
    const std::string where = "customer[" + c.id + "]";
    if (!cust_ids.insert(c.id).second) v.push_back(where + ".id: duplicate customer id");
    if (!scenario.find_sc(c.sc_id)) v.push_back(where + ".sc_id: names no existing SC");
    check_coeffs(v, where + ".coeffs_ag", c.coeffs_ag);
    if (c.coeffs_e) check_coeffs(v, where + ".coeffs_e", *c.coeffs_e);
    if (c.coeffs_c) check_coeffs(v, where + ".coeffs_c", *c.coeffs_c);
    if (c.coeffs_s) check_coeffs(v, where + ".coeffs_s", *c.coeffs_s);
    if (c.kappa1 < 0 || c.kappa2 < 0 || !(c.kappa1 + c.kappa2 < 1.0))
      v.push_back(where + ".kappa: kappa1, kappa2 >= 0 and kappa1 + kappa2 < 1 required");
    if (!(c.tau_ag > 0)) v.push_back(where + ".tau_ag: must be positive");
    if (!(c.vm_min <= c.vm_max)) v.push_back(where + ".vm_min: must not exceed vm_max");
  }
  return v;
}

void require_valid(const MarketScenario& scenario) {
  auto v = validate_scenario(scenario);
  if (v.empty()) return;
  std::ostringstream msg;
  msg << "invalid scenario:";
  for (const auto& s : v) msg << "\n  " << s;
  throw std::invalid_argument(msg.str());
}

}  // namespace scmarket

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "scmarket/clearing.hpp"
#include "scmarket/equilibrium.hpp"
#include "scmarket/scenario_io.hpp"
#include "scmarket/welfare.hpp"
#include "test_support.hpp"

using namespace scmarket;
using namespace scmarket::testing;

namespace {

/// S1 with bounds wide enough that the unconstrained KKT point is interior.
MarketScenario s1_wide() {
  auto s = make_s1();
  for (auto& ch : s.scs[0].channels) ch.vm_max = 1000;
  s.customers[0].vm_min = 0;
  s.customers[0].vm_max = 1000;
  return s;
}

/// One SC (three S1 channels), two customers with distinct curves.
MarketScenario asymmetric_pair() {
  auto s = make_s1();
  s.customers[0].vm_min = 20;
  s.customers[0].vm_max = 90;
  s.customers.push_back(make_customer("C2", "SC1", 120, -0.2, 0.1, 10, 80));
  return s;
}

double sc_total_cost(const MarketScenario& s, const MarketState& st, std::size_t i) {
  double c = 0.0;
  for (const auto* ch : s.scs[i].enabled_channels())
    c += cost(st.vm_supply.at(s.scs[i].id).at(ch->channel), ch->coeffs);
  return c;
}

double balance_residual(const MarketScenario& s, const MarketState& st) {
  double worst = 0.0;
  for (std::size_t i = 0; i < s.scs.size(); ++i) {
    double b = 0.0;
    for (const auto* ch : s.scs[i].enabled_channels())
      b -= st.vm_supply.at(s.scs[i].id).at(ch->channel);
    for (std::size_t j : s.customers_of(i))
      b += s.customers[j].demand_factor() * st.vm_demand.at(s.customers[j].id);
    worst = std::max(worst, std::abs(b));
  }
  return worst;
}

void check_within_bounds(const MarketScenario& s, const MarketState& st) {
  for (const auto& sc : s.scs)
    for (const auto* ch : sc.enabled_channels()) {
      const double v = st.vm_supply.at(sc.id).at(ch->channel);
      CHECK(v >= ch->vm_min - 1e-12);
      CHECK(v <= ch->vm_max + 1e-12);
    }
  for (const auto& c : s.customers) {
    const double v = st.vm_demand.at(c.id);
    CHECK(v >= c.vm_min - 1e-12);
    CHECK(v <= c.vm_max + 1e-12);
  }
}

/// Dense grid-search oracle over the two-customer demand space, using the
/// same supply-split rule. Returns the best objective value found.
template <typename F>
double grid_oracle(const MarketScenario& s, int steps, F&& objective) {
  const auto& c1 = s.customers[0];
  const auto& c2 = s.customers[1];
  auto [sup_lo, sup_hi] = supply_range(s.scs[0]);
  double best = -1e300;
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; j <= steps; ++j) {
      const double d1 = c1.vm_min + (c1.vm_max - c1.vm_min) * i / steps;
      const double d2 = c2.vm_min + (c2.vm_max - c2.vm_min) * j / steps;
      const double t = c1.demand_factor() * d1 + c2.demand_factor() * d2;
      if (t < sup_lo || t > sup_hi) continue;
      best = std::max(best, objective(d1, d2, t));
    }
  return best;
}

}  // namespace

TEST_CASE("supply split equalizes marginal costs") {
  const auto s = make_s1();
  const auto split = split_supply(s.scs[0], 100.0);
  REQUIRE(split.vm.size() == 3);
  for (double v : split.vm) CHECK(v == doctest::Approx(100.0 / 3.0).epsilon(1e-12));
  CHECK(split.marginal == doctest::Approx(80.0).epsilon(1e-12));
  CHECK_THROWS_AS(split_supply(s.scs[0], 1e9), std::domain_error);
}

TEST_CASE("bounded utilitarian") {
  SUBCASE("wide bounds reproduce the closed-form equilibrium") {
    const auto s = s1_wide();
    const auto alloc = bounded_utilitarian(s);
    const auto eq = solve_kkt_closed_form(s);
    CHECK(std::abs(alloc.vm_demand.at("C1") - eq.state.vm_demand.at("C1")) < 1e-5);
    for (auto ch : {Channel::reserved, Channel::borrowed, Channel::public_cloud})
      CHECK(std::abs(alloc.vm_supply.at("SC1").at(ch) - eq.state.vm_supply.at("SC1").at(ch)) <
            1e-5);
  }
  SUBCASE("demand cap binds and supply splits at equal marginals") {
    auto s = make_s1();
    s.customers[0].vm_min = 0;
    s.customers[0].vm_max = 100;
    const auto alloc = bounded_utilitarian(s);
    CHECK(alloc.vm_demand.at("C1") == doctest::Approx(100.0).epsilon(1e-9));
    for (auto& [ch, v] : alloc.vm_supply.at("SC1"))
      CHECK(v == doctest::Approx(100.0 / 3.0).epsilon(1e-9));
  }
  SUBCASE("zero customers give the all-zero allocation") {
    auto s = make_s1();
    s.customers.clear();
    const auto alloc = bounded_utilitarian(s);
    for (auto& [ch, v] : alloc.vm_supply.at("SC1")) CHECK(v == 0.0);
  }
  SUBCASE("disjoint ranges are infeasible") {
    auto s = make_s1();
    s.customers[0].vm_min = 700;  // supply caps at 3 * 200
    s.customers[0].vm_max = 900;
    CHECK_THROWS_AS(bounded_utilitarian(s), infeasible_error);
  }
}

TEST_CASE("rawlsian allocation") {
  SUBCASE("identical customers get a symmetric allocation") {
    auto s = make_s1();
    s.customers[0].vm_min = 60;
    s.customers[0].vm_max = 100;
    s.customers.push_back(s.customers[0]);
    s.customers[1].id = "C2";
    const auto alloc = rawlsian_allocation(s);
    CHECK(std::abs(alloc.vm_demand.at("C1") - alloc.vm_demand.at("C2")) < 1e-6);
  }
  SUBCASE("matches the dense grid oracle on an asymmetric pair") {
    const auto s = asymmetric_pair();
    const auto alloc = rawlsian_allocation(s);
    const double got = [&] {
      double m = 1e300;
      for (std::size_t j = 0; j < 2; ++j)
        m = std::min(m, utility(alloc.vm_demand.at(s.customers[j].id), s.customers[j].coeffs_ag));
      return std::min(m, -sc_total_cost(s, alloc, 0));
    }();
    const double oracle = grid_oracle(s, 160, [&](double d1, double d2, double t) {
      const double u1 = utility(d1, s.customers[0].coeffs_ag);
      const double u2 = utility(d2, s.customers[1].coeffs_ag);
      return std::min({u1, u2, -split_supply(s.scs[0], t).cost});
    });
    // within the oracle's own grid resolution
    CHECK(got >= oracle - 5.0);
  }
  SUBCASE("utilitarian SW at the rawlsian point does not exceed the optimum") {
    const auto s = asymmetric_pair();
    const auto r = rawlsian_allocation(s);
    const auto u = bounded_utilitarian(s);
    CHECK(social_welfare(r, s) <= social_welfare(u, s) + 1e-6);
  }
}

TEST_CASE("egalitarian allocation") {
  SUBCASE("identical customers reach zero spread") {
    auto s = make_s1();
    s.customers.push_back(s.customers[0]);
    s.customers[1].id = "C2";
    const auto alloc = egalitarian_allocation(s);
    const double u1 = utility(alloc.vm_demand.at("C1"), s.customers[0].coeffs_ag);
    const double u2 = utility(alloc.vm_demand.at("C2"), s.customers[1].coeffs_ag);
    CHECK(std::abs(u1 - u2) < 1e-6);
  }
  SUBCASE("spread no worse than utilitarian and the grid oracle") {
    const auto s = asymmetric_pair();
    const auto e = egalitarian_allocation(s);
    const auto u = bounded_utilitarian(s);
    auto spread = [&](const MarketState& st) {
      const double u1 = utility(st.vm_demand.at("C1"), s.customers[0].coeffs_ag);
      const double u2 = utility(st.vm_demand.at("C2"), s.customers[1].coeffs_ag);
      return std::abs(u1 - u2);
    };
    CHECK(spread(e) <= spread(u) + 1e-6);
    const double oracle_best = -grid_oracle(s, 160, [&](double d1, double d2, double) {
      return -std::abs(utility(d1, s.customers[0].coeffs_ag) -
                       utility(d2, s.customers[1].coeffs_ag));
    });
    CHECK(spread(e) <= oracle_best + 5.0);
  }
  SUBCASE("utilitarian SW ratio at most one") {
    const auto s = asymmetric_pair();
    const auto e = egalitarian_allocation(s);
    const auto u = bounded_utilitarian(s);
    CHECK(social_welfare(e, s) <= social_welfare(u, s) + 1e-6);
  }
}

TEST_CASE("allocation ratios") {
  CHECK(allocation_ratios({10, 5, 10}) == std::vector<double>{1.0, 0.5, 1.0});
  CHECK(allocation_ratios({7, 7, 7}) == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(allocation_ratios({42}) == std::vector<double>{1.0});
  CHECK_THROWS_AS(allocation_ratios({0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("compare") {
  SUBCASE("symmetric scenario collapses all three allocations") {
    auto s = make_s1();
    s.customers[0].vm_min = 60;
    s.customers[0].vm_max = 60;  // the only feasible demand
    const auto rep = compare(s);
    for (auto t : {WelfareType::utilitarian, WelfareType::egalitarian, WelfareType::rawlsian}) {
      CHECK(rep.sw_ratio.at(t) == doctest::Approx(1.0).epsilon(1e-9));
      CHECK(rep.customer_utility_ratios.at(t) == std::vector<double>{1.0});
    }
  }
  SUBCASE("tables scenario: utilitarian dominance and report shape") {
    const auto tables = load_scenario(TABLES_JSON_PATH);
    WelfareOptions opt;
    const auto rep = compare(tables, opt);
    CHECK(rep.sw_ratio.at(WelfareType::utilitarian) == doctest::Approx(1.0));
    CHECK(rep.sw_ratio.at(WelfareType::egalitarian) <= 1.0 + 1e-9);
    CHECK(rep.sw_ratio.at(WelfareType::rawlsian) <= 1.0 + 1e-9);
    for (auto t : {WelfareType::utilitarian, WelfareType::egalitarian, WelfareType::rawlsian}) {
      CHECK(rep.sc_cost_ratios.at(t).size() == 5);
      CHECK(rep.customer_utility_ratios.at(t).size() == 15);
      const auto& st = rep.allocations.at(t);
      CHECK(balance_residual(tables, st) < 1e-6);
      check_within_bounds(tables, st);
    }
    SUBCASE("deterministic under a fixed seed") {
      const auto rep2 = compare(tables, opt);
      for (auto t : {WelfareType::utilitarian, WelfareType::egalitarian, WelfareType::rawlsian})
        CHECK(rep.utilitarian_sw.at(t) == rep2.utilitarian_sw.at(t));
    }
  }
}

TEST_CASE("welfare allocations respect balance and bounds everywhere") {
  const auto s = asymmetric_pair();
  for (const auto& alloc :
       {bounded_utilitarian(s), rawlsian_allocation(s), egalitarian_allocation(s)}) {
    CHECK(balance_residual(s, alloc) < 1e-6);
    check_within_bounds(s, alloc);
  }
}

#include "scmarket/scenario_io.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "scmarket/stability.hpp"

namespace scmarket {

using nlohmann::json;

namespace {

std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

void reject_unknown_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw parse_error(where + ": unknown key \"" + key + "\"");
  }
}

double get_number(const json& obj, const char* key, const std::string& where,
                  std::optional<double> fallback = {}) {
  if (!obj.contains(key)) {
    if (fallback) return *fallback;
    throw parse_error(where + ": missing key \"" + key + "\"");
  }
  if (!obj[key].is_number()) throw parse_error(where + "." + key + ": expected a number");
  return obj[key].get<double>();
}

std::string get_string(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw parse_error(where + ": missing key \"" + key + "\"");
  if (!obj[key].is_string()) throw parse_error(where + "." + key + ": expected a string");
  return obj[key].get<std::string>();
}

SupplyChannelParams make_channel(Channel kind, const QuadraticCoefficients& coeffs, double tau,
                                 double vm_min, double vm_max) {
  SupplyChannelParams ch;
  ch.channel = kind;
  ch.coeffs = coeffs;
  ch.tau = tau;
  ch.vm_min = vm_min;
  ch.vm_max = vm_max;
  return ch;
}

}  // namespace

MarketScenario parse_scenario(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    auto [line, col] = line_col(text, e.byte > 0 ? e.byte - 1 : 0);
    std::ostringstream os;
    os << origin << ":" << line << ":" << col << ": " << e.what();
    throw parse_error(os.str());
  }
  if (!doc.is_object()) throw parse_error(origin + ": top level must be an object");
  reject_unknown_keys(doc, {"version", "scs", "customers"}, origin);
  if (doc.contains("version") && !(doc["version"].is_number_integer() && doc["version"] == 1))
    throw parse_error(origin + ".version: unsupported schema version");
  if (!doc.contains("scs") || !doc["scs"].is_array())
    throw parse_error(origin + ": missing \"scs\" array");
  if (!doc.contains("customers") || !doc["customers"].is_array())
    throw parse_error(origin + ": missing \"customers\" array");

  MarketScenario scenario;
  for (const auto& row : doc["scs"]) {
    const std::string id = get_string(row, "id", origin + ".scs[]");
    const std::string where = origin + ".scs[" + id + "]";
    reject_unknown_keys(
        row, {"id", "alpha", "beta", "tau", "vm_min", "vm_max", "tau_rho", "channels"}, where);
    SmallCloudParams sc;
    sc.id = id;
    sc.tau_rho = get_number(row, "tau_rho", where, 1.0);
    QuadraticCoefficients coeffs{get_number(row, "alpha", where), get_number(row, "beta", where)};
    const double tau = get_number(row, "tau", where);
    const double vm_min = get_number(row, "vm_min", where, 0.0);
    const double vm_max = get_number(row, "vm_max", where, 0.0);

    if (!row.contains("channels")) {
      // Default rule: the row's coefficients apply to every channel kind.
      for (Channel kind : {Channel::reserved, Channel::borrowed, Channel::public_cloud})
        sc.channels.push_back(make_channel(kind, coeffs, tau, vm_min, vm_max));
    } else {
      if (!row["channels"].is_object())
        throw parse_error(where + ".channels: expected an object keyed by channel name");
      for (const auto& [name, over] : row["channels"].items()) {
        const auto kind = channel_from_name(name);
        if (!kind) throw parse_error(where + ".channels: unknown channel \"" + name + "\"");
        const std::string cw = where + ".channels." + name;
        reject_unknown_keys(over, {"alpha", "beta", "tau", "vm_min", "vm_max", "enabled"}, cw);
        SupplyChannelParams ch = make_channel(
            *kind,
            QuadraticCoefficients{get_number(over, "alpha", cw, coeffs.alpha),
                                  get_number(over, "beta", cw, coeffs.beta)},
            get_number(over, "tau", cw, tau), get_number(over, "vm_min", cw, vm_min),
            get_number(over, "vm_max", cw, vm_max));
        if (over.contains("enabled")) {
          if (!over["enabled"].is_boolean()) throw parse_error(cw + ".enabled: expected a boolean");
          ch.enabled = over["enabled"].get<bool>();
        }
        sc.channels.push_back(ch);
      }
      // keep deterministic channel order r, b, pc
      std::sort(sc.channels.begin(), sc.channels.end(),
                [](const auto& a, const auto& b) { return a.channel < b.channel; });
    }
    scenario.scs.push_back(std::move(sc));
  }

  for (const auto& row : doc["customers"]) {
    const std::string id = get_string(row, "id", origin + ".customers[]");
    const std::string where = origin + ".customers[" + id + "]";
    reject_unknown_keys(row,
                        {"id", "sc_id", "alpha", "beta", "tau", "vm_min", "vm_max", "kappa1",
                         "kappa2"},
                        where);
    CustomerParams c;
    c.id = id;
    c.sc_id = get_string(row, "sc_id", where);
    c.coeffs_ag = {get_number(row, "alpha", where), get_number(row, "beta", where)};
    c.tau_ag = get_number(row, "tau", where);
    c.vm_min = get_number(row, "vm_min", where, 0.0);
    c.vm_max = get_number(row, "vm_max", where, 0.0);
    c.kappa1 = get_number(row, "kappa1", where, 0.0);
    c.kappa2 = get_number(row, "kappa2", where, 0.0);
    scenario.customers.push_back(std::move(c));
  }

  const auto violations = validate_scenario(scenario);
  if (scenario.scs.empty()) throw parse_error(origin + ".scs: at least one SC required");
  if (!violations.empty()) {
    std::ostringstream os;
    os << origin << ": scenario validation failed:";
    for (const auto& v : violations) os << "\n  " << v;
    throw parse_error(os.str());
  }
  return scenario;
}

MarketScenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw parse_error("cannot open scenario file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path.string());
}

std::string serialize_scenario(const MarketScenario& scenario) {
  json doc;
  doc["version"] = 1;
  doc["scs"] = json::array();
  for (const auto& sc : scenario.scs) {
    json row;
    row["id"] = sc.id;
    row["tau_rho"] = sc.tau_rho;
    // emit the first channel's curve as the row default, all channels explicit
    const auto& first = sc.channels.front();
    row["alpha"] = first.coeffs.alpha;
    row["beta"] = first.coeffs.beta;
    row["tau"] = first.tau;
    row["vm_min"] = first.vm_min;
    row["vm_max"] = first.vm_max;
    json chans = json::object();
    for (const auto& ch : sc.channels) {
      json c;
      c["alpha"] = ch.coeffs.alpha;
      c["beta"] = ch.coeffs.beta;
      c["tau"] = ch.tau;
      c["vm_min"] = ch.vm_min;
      c["vm_max"] = ch.vm_max;
      c["enabled"] = ch.enabled;
      chans[channel_name(ch.channel)] = c;
    }
    row["channels"] = chans;
    doc["scs"].push_back(row);
  }
  doc["customers"] = json::array();
  for (const auto& c : scenario.customers) {
    json row;
    row["id"] = c.id;
    row["sc_id"] = c.sc_id;
    row["alpha"] = c.coeffs_ag.alpha;
    row["beta"] = c.coeffs_ag.beta;
    row["tau"] = c.tau_ag;
    row["vm_min"] = c.vm_min;
    row["vm_max"] = c.vm_max;
    row["kappa1"] = c.kappa1;
    row["kappa2"] = c.kappa2;
    doc["customers"].push_back(row);
  }
  return doc.dump(2) + "\n";
}

void save_scenario(const MarketScenario& scenario, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write scenario file: " + path.string());
  out << serialize_scenario(scenario);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

std::string csv_field(const std::string& raw) {
  if (raw.find_first_of(",\"\n\r") == std::string::npos) return raw;
  std::string out = "\"";
  for (char c : raw) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string equilibrium_csv(const EquilibriumResult& result, const MarketScenario& scenario) {
  std::ostringstream os;
  os << "component,id,value\n";
  for (const auto& sc : scenario.scs)
    for (const auto* ch : sc.enabled_channels())
      os << "vm_" << channel_tag(ch->channel) << "," << csv_field(sc.id) << ","
         << format_double(result.state.vm_supply.at(sc.id).at(ch->channel)) << "\n";
  for (const auto& c : scenario.customers)
    os << "vm_ag," << csv_field(c.id) << "," << format_double(result.state.vm_demand.at(c.id))
       << "\n";
  for (const auto& sc : scenario.scs)
    os << "rho," << csv_field(sc.id) << "," << format_double(result.state.rho.at(sc.id)) << "\n";
  os << "kkt_residual,," << format_double(result.kkt_residual) << "\n";
  os << "iterations,," << result.iterations << "\n";
  os << "converged,," << (result.converged ? 1 : 0) << "\n";
  for (const auto& w : result.warnings) os << "warning,," << csv_field(w) << "\n";
  return os.str();
}

std::string trajectory_csv(const TrajectoryRecord& trajectory) {
  std::ostringstream os;
  os << "t";
  for (const auto& l : trajectory.labels) os << "," << csv_field(l);
  const bool with_mu =
      !trajectory.states.empty() && trajectory.states.front().capacity_enabled();
  if (with_mu)
    for (const auto& l : trajectory.multiplier_labels) os << "," << csv_field(l);
  os << "\n";
  for (std::size_t k = 0; k < trajectory.states.size(); ++k) {
    os << format_double(trajectory.times[k]);
    const auto& s = trajectory.states[k];
    for (Eigen::Index i = 0; i < s.market.size(); ++i) os << "," << format_double(s.market[i]);
    if (with_mu)
      for (Eigen::Index i = 0; i < s.multipliers.size(); ++i)
        os << "," << format_double(s.multipliers[i]);
    os << "\n";
  }
  return os.str();
}

std::string welfare_csv(const WelfareReport& report, const MarketScenario& scenario) {
  std::ostringstream os;
  os << "welfare_type,quantity,id,value\n";
  for (auto type : {WelfareType::utilitarian, WelfareType::egalitarian, WelfareType::rawlsian}) {
    const std::string t = welfare_name(type);
    os << t << ",utilitarian_sw,," << format_double(report.utilitarian_sw.at(type)) << "\n";
    os << t << ",sw_ratio,," << format_double(report.sw_ratio.at(type)) << "\n";
    const auto& costs = report.sc_cost_ratios.at(type);
    for (std::size_t i = 0; i < costs.size(); ++i)
      os << t << ",sc_cost_ratio," << csv_field(scenario.scs[i].id) << ","
         << format_double(costs[i]) << "\n";
    const auto& utils = report.customer_utility_ratios.at(type);
    for (std::size_t j = 0; j < utils.size(); ++j)
      os << t << ",customer_utility_ratio," << csv_field(scenario.customers[j].id) << ","
         << format_double(utils[j]) << "\n";
  }
  return os.str();
}

std::string stability_map_csv(const std::vector<StabilityCell>& cells) {
  std::ostringstream os;
  os << "tau_rho,tau_ag,kappa1,kappa2,max_real_eig,is_hurwitz\n";
  for (const auto& c : cells)
    os << format_double(c.tau_rho) << "," << format_double(c.tau_ag) << ","
       << format_double(c.kappa1) << "," << format_double(c.kappa2) << ","
       << format_double(c.max_real_eig) << "," << (c.is_hurwitz ? 1 : 0) << "\n";
  return os.str();
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> out;
  out.reserve(n);
  if (n == 1) {
    out.push_back(lo);
    return out;
  }
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1));
  return out;
}

SweepGrid SweepGrid::defaults() {
  SweepGrid g;
  g.tau_rho_values = linspace(0.05, 5.0, 25);
  g.tau_ag_values = linspace(0.05, 0.2, 16);
  g.kappa_values = {{0.0, 0.0}, {0.02, 0.02}, {0.05, 0.05}};
  return g;
}

void validate_grid(const SweepGrid& grid) {
  if (grid.tau_rho_values.empty() || grid.tau_ag_values.empty() || grid.kappa_values.empty())
    throw std::invalid_argument("sweep grid must not be empty");
  for (double v : grid.tau_rho_values)
    if (!(v > 0)) throw std::invalid_argument("tau_rho grid values must be positive");
  for (double v : grid.tau_ag_values)
    if (!(v > 0)) throw std::invalid_argument("tau_ag grid values must be positive");
  for (auto [k1, k2] : grid.kappa_values)
    if (k1 < 0 || k2 < 0 || !(k1 + k2 < 1.0))
      throw std::invalid_argument("kappa grid values must satisfy kappa1 + kappa2 < 1");
}

MarketScenario apply_cell(const MarketScenario& scenario, double tau_rho, double tau_ag,
                          double kappa1, double kappa2) {
  MarketScenario out = scenario;
  for (auto& sc : out.scs) sc.tau_rho = tau_rho;
  for (auto& c : out.customers) {
    c.tau_ag = tau_ag;
    c.kappa1 = kappa1;
    c.kappa2 = kappa2;
  }
  return out;
}

std::vector<StabilityCell> run_stability_map(const MarketScenario& scenario, const SweepGrid& grid,
                                             unsigned jobs) {
  validate_grid(grid);
  struct CellSpec {
    double tau_rho, tau_ag, kappa1, kappa2;
  };
  std::vector<CellSpec> specs;
  specs.reserve(grid.cells());
  for (auto [k1, k2] : grid.kappa_values)
    for (double tr : grid.tau_rho_values)
      for (double ta : grid.tau_ag_values) specs.push_back({tr, ta, k1, k2});

  std::vector<StabilityCell> cells(specs.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, std::thread::hardware_concurrency()
                                                                     ? std::thread::hardware_concurrency()
                                                                     : 1u));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= specs.size()) break;
      const auto& s = specs[k];
      const auto cell = apply_cell(scenario, s.tau_rho, s.tau_ag, s.kappa1, s.kappa2);
      const auto sys = assemble_linearization(cell);
      auto [hurwitz, max_re] = hurwitz_check(sys);
      cells[k] = {s.tau_rho, s.tau_ag, s.kappa1, s.kappa2, max_re, hurwitz};
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return cells;
}

std::string manifest_json(const RunManifest& manifest) {
  json doc;
  doc["scenario"] = manifest.scenario_path;
  doc["command"] = manifest.command;
  doc["seed"] = manifest.seed;
  doc["outputs"] = manifest.outputs;
  doc["tool_version"] = manifest.tool_version;
  if (!manifest.notes.empty()) doc["notes"] = manifest.notes;
  if (manifest.grid) {
    json g;
    g["tau_rho_values"] = manifest.grid->tau_rho_values;
    g["tau_ag_values"] = manifest.grid->tau_ag_values;
    json kv = json::array();
    for (auto [k1, k2] : manifest.grid->kappa_values) kv.push_back({k1, k2});
    g["kappa_values"] = kv;
    doc["grid"] = g;
  }
  return doc.dump(2) + "\n";
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  out << manifest_json(manifest);
}

}  // namespace scmarket

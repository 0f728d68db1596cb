#include "uavmm/io.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "uavmm/version.hpp"

namespace uavmm {

namespace {

using Json = nlohmann::ordered_json;

void reject_unknown_keys(const Json& obj, const char* where,
                         std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* key : allowed)
      if (item.key() == key) known = true;
    if (!known)
      throw ValidationError(std::string("unknown key \"") + item.key() +
                            "\" in " + where);
  }
}

double require_number(const Json& obj, const char* where, const char* key) {
  if (!obj.contains(key))
    throw ValidationError(std::string("missing key \"") + key + "\" in " +
                          where);
  if (!obj[key].is_number())
    throw ValidationError(std::string("key \"") + key + "\" in " + where +
                          " must be a number");
  return obj[key].get<double>();
}

Json scenario_json(const Scenario& sc) {
  Json uav;
  uav["altitude_m"] = sc.uav.altitude;
  uav["v_max_mps"] = sc.uav.v_max;
  uav["p_max_w"] = sc.uav.p_max;
  uav["period_s"] = sc.uav.period;
  uav["slots"] = sc.uav.slots;
  uav["bandwidth_hz"] = sc.uav.bandwidth;
  uav["noise_psd_dbm"] = sc.uav.noise_psd_dbm;
  uav["ref_gain_db"] = sc.uav.ref_gain_db;
  Json users = Json::array();
  for (const auto& u : sc.users) {
    Json user;
    user["x_m"] = u.position.x();
    user["y_m"] = u.position.y();
    user["mrr"] = u.mrr;
    users.push_back(user);
  }
  Json out;
  out["uav"] = uav;
  out["users"] = users;
  return out;
}

ScenarioLoad scenario_from_json(const Json& root) {
  if (!root.is_object()) throw ValidationError("scenario root must be an object");
  reject_unknown_keys(root, "scenario", {"uav", "users"});
  if (!root.contains("uav")) throw ValidationError("missing key \"uav\"");
  if (!root.contains("users")) throw ValidationError("missing key \"users\"");
  const Json& uav = root["uav"];
  reject_unknown_keys(uav, "uav",
                      {"altitude_m", "v_max_mps", "p_max_w", "period_s", "slots",
                       "bandwidth_hz", "noise_psd_dbm", "ref_gain_db"});
  ScenarioLoad out;
  Scenario& sc = out.scenario;
  sc.uav.altitude = require_number(uav, "uav", "altitude_m");
  sc.uav.v_max = require_number(uav, "uav", "v_max_mps");
  sc.uav.p_max = require_number(uav, "uav", "p_max_w");
  sc.uav.period = require_number(uav, "uav", "period_s");
  const double slots = require_number(uav, "uav", "slots");
  if (slots != static_cast<int>(slots))
    throw ValidationError("key \"slots\" in uav must be an integer");
  sc.uav.slots = static_cast<int>(slots);
  sc.uav.bandwidth = require_number(uav, "uav", "bandwidth_hz");
  sc.uav.noise_psd_dbm = require_number(uav, "uav", "noise_psd_dbm");
  sc.uav.ref_gain_db = require_number(uav, "uav", "ref_gain_db");

  if (!root["users"].is_array())
    throw ValidationError("key \"users\" must be an array");
  int index = 0;
  for (const Json& user : root["users"]) {
    const std::string where = "users[" + std::to_string(index) + "]";
    reject_unknown_keys(user, where.c_str(), {"x_m", "y_m", "mrr"});
    UserSpec spec;
    spec.position.x() = require_number(user, where.c_str(), "x_m");
    spec.position.y() = require_number(user, where.c_str(), "y_m");
    spec.mrr = require_number(user, where.c_str(), "mrr");
    sc.users.push_back(spec);
    ++index;
  }
  sc.validate();
  for (size_t i = 0; i < sc.users.size(); ++i)
    for (size_t j = i + 1; j < sc.users.size(); ++j)
      if (sc.users[i].position == sc.users[j].position)
        out.warnings.push_back("users " + std::to_string(i) + " and " +
                               std::to_string(j) +
                               " share the same position");
  return out;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json out = Json::array();
  for (int k = 0; k < m.rows(); ++k)
    for (int n = 0; n < m.cols(); ++n) out.push_back(m(k, n));
  return out;
}

Eigen::MatrixXd matrix_from_json(const Json& arr, int rows, int cols,
                                 const char* name) {
  if (!arr.is_array() || static_cast<int>(arr.size()) != rows * cols)
    throw ValidationError(std::string("field \"") + name + "\" must hold " +
                          std::to_string(rows * cols) + " numbers");
  Eigen::MatrixXd out(rows, cols);
  int i = 0;
  for (int k = 0; k < rows; ++k)
    for (int n = 0; n < cols; ++n) out(k, n) = arr[i++].get<double>();
  return out;
}

Json bundle_json(const ResultBundle& bundle) {
  Json out;
  out["scenario"] = scenario_json(bundle.scenario);
  Json traj = Json::array();
  for (const auto& q : bundle.trajectory.waypoints)
    traj.push_back(Json::array({q.x(), q.y()}));
  out["trajectory_m"] = traj;
  out["bandwidth_fraction"] = matrix_json(bundle.allocation.bandwidth);
  out["power_w"] = matrix_json(bundle.allocation.power);
  out["eta_bps_per_hz"] = bundle.eta;
  out["dual_bound_bps_per_hz"] = bundle.dual_bound;
  Json thr = Json::array();
  for (int k = 0; k < bundle.user_throughput.size(); ++k)
    thr.push_back(bundle.user_throughput[k]);
  out["user_throughput_bps_per_hz"] = thr;
  out["slot_rates_bps_per_hz"] = matrix_json(bundle.slot_rates);
  out["eta_history"] = bundle.eta_history;
  out["iterations"] = bundle.iterations;
  out["termination"] = bundle.termination;
  out["wall_time_s"] = bundle.wall_time;
  out["tool_version"] = bundle.tool_version;
  out["determinism_hash"] = bundle.determinism_hash;
  return out;
}

}  // namespace

ScenarioLoad parse_scenario(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("scenario parse error: ") + e.what());
  }
  return scenario_from_json(root);
}

ScenarioLoad load_scenario(const std::string& path) {
  return parse_scenario(read_file(path));
}

std::string scenario_to_json(const Scenario& sc) {
  return scenario_json(sc).dump(2) + "\n";
}

ResultBundle make_bundle(const Scenario& sc, const SolveReport& report) {
  ResultBundle out;
  out.scenario = sc;
  out.trajectory = report.trajectory;
  out.allocation = report.allocation;
  out.eta = report.eta;
  out.dual_bound = report.dual_bound;
  const int k_count = sc.user_count();
  const int n_count = sc.uav.slots;
  out.user_throughput.resize(k_count);
  out.slot_rates.resize(k_count, n_count);
  for (int k = 0; k < k_count; ++k) {
    for (int n = 0; n < n_count; ++n)
      out.slot_rates(k, n) = instantaneous_rate(
          report.allocation.bandwidth(k, n), report.allocation.power(k, n),
          gain_over_noise(sc, report.trajectory, k, n));
    out.user_throughput[k] = out.slot_rates.row(k).mean();
  }
  out.eta_history = report.eta_history;
  out.iterations = report.iterations;
  out.termination = report.termination;
  out.wall_time = report.wall_time;
  out.tool_version = UAVMM_VERSION_STRING;
  return out;
}

std::string bundle_to_json(const ResultBundle& bundle) {
  // Hash the canonical text with timing and the hash slot blanked.
  ResultBundle hashed = bundle;
  hashed.wall_time = 0.0;
  hashed.determinism_hash.clear();
  ResultBundle final = bundle;
  final.determinism_hash = fnv1a_hex(bundle_json(hashed).dump(2));
  return bundle_json(final).dump(2) + "\n";
}

ResultBundle parse_bundle(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("bundle parse error: ") + e.what());
  }
  ResultBundle out;
  out.scenario = scenario_from_json(root.at("scenario")).scenario;
  const int k_count = out.scenario.user_count();
  const int n_count = out.scenario.uav.slots;
  const Json& traj = root.at("trajectory_m");
  if (static_cast<int>(traj.size()) != n_count)
    throw ValidationError("trajectory_m length must equal slots");
  for (const Json& q : traj)
    out.trajectory.waypoints.emplace_back(q.at(0).get<double>(),
                                          q.at(1).get<double>());
  out.allocation.bandwidth = matrix_from_json(root.at("bandwidth_fraction"),
                                              k_count, n_count,
                                              "bandwidth_fraction");
  out.allocation.power =
      matrix_from_json(root.at("power_w"), k_count, n_count, "power_w");
  out.eta = root.at("eta_bps_per_hz").get<double>();
  out.dual_bound = root.at("dual_bound_bps_per_hz").get<double>();
  const Json& thr = root.at("user_throughput_bps_per_hz");
  out.user_throughput.resize(thr.size());
  for (size_t k = 0; k < thr.size(); ++k)
    out.user_throughput[k] = thr[k].get<double>();
  out.slot_rates = matrix_from_json(root.at("slot_rates_bps_per_hz"), k_count,
                                    n_count, "slot_rates_bps_per_hz");
  out.eta_history = root.at("eta_history").get<std::vector<double>>();
  out.iterations = root.at("iterations").get<int>();
  out.termination = root.at("termination").get<std::string>();
  out.wall_time = root.at("wall_time_s").get<double>();
  out.tool_version = root.at("tool_version").get<std::string>();
  out.determinism_hash = root.at("determinism_hash").get<std::string>();
  return out;
}

std::string trajectory_csv(const Scenario& sc, const Trajectory& traj,
                           double sample_interval) {
  if (sample_interval <= 0.0)
    throw ValidationError("sample interval must be positive");
  std::ostringstream out;
  out << "t_seconds,x_m,y_m\n";
  out.precision(17);
  const int n_count = traj.slot_count();
  const double span = sc.uav.period / (n_count - 1);
  for (double t = 0.0; t <= sc.uav.period + 1e-9; t += sample_interval) {
    const double f = std::min(t / span, double(n_count - 1));
    const int lo = std::min(static_cast<int>(f), n_count - 2);
    const double w = f - lo;
    const Vec2 q =
        (1.0 - w) * traj.waypoints[lo] + w * traj.waypoints[lo + 1];
    out << t << ',' << q.x() << ',' << q.y() << '\n';
  }
  return out.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace uavmm

#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "evrpeps/instance.hpp"
#include "evrpeps/metrics.hpp"
#include "evrpeps/rollout.hpp"

namespace evrpeps {

inline constexpr int kRouteLogSchemaVersion = 1;

inline std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline nlohmann::ordered_json route_log_to_json(const RouteLog& log) {
  using json = nlohmann::ordered_json;
  json doc;
  doc["schema_version"] = kRouteLogSchemaVersion;
  doc["horizon_h"] = log.horizon_h;
  doc["final_time_h"] = log.final_time_h;
  doc["n_bs"] = log.n_bs;
  doc["n_cs"] = log.n_cs;
  doc["n_evs"] = log.n_evs;
  doc["evs"] = json::array();
  for (int k = 0; k < log.n_evs; ++k) {
    json actions = json::array();
    for (const auto& rec : log.ev_actions[k]) {
      actions.push_back({{"action_index", rec.action_index},
                         {"node", rec.node},
                         {"depart_h", rec.depart_h},
                         {"arrive_h", rec.arrive_h},
                         {"distance_km", rec.distance_km},
                         {"prepare_h", rec.prepare_h},
                         {"wait_h", rec.wait_h},
                         {"service_h", rec.service_h},
                         {"cleanup_h", rec.cleanup_h},
                         {"energy_kwh", rec.energy_kwh}});
    }
    doc["evs"].push_back({{"ev_index", k}, {"actions", std::move(actions)}});
  }
  doc["downed_intervals"] = json::array();
  for (int i = 0; i < log.n_bs; ++i) {
    json spans = json::array();
    for (const auto& [t0, t1] : log.downed_spans[i]) spans.push_back({t0, t1});
    doc["downed_intervals"].push_back({{"station", i}, {"spans", std::move(spans)}});
  }
  doc["final_bs_battery_kwh"] = log.final_bs_battery_kwh;
  doc["final_ev_battery_kwh"] = log.final_ev_battery_kwh;
  return doc;
}

inline void write_route_log(const RouteLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << route_log_to_json(log).dump(2) << '\n';
}

/// Step series (time_h, n_downed) from the downed spans.
inline void write_downed_series_csv(const RouteLog& log, const std::string& path) {
  std::vector<std::pair<double, int>> events;
  for (const auto& spans : log.downed_spans)
    for (const auto& [t0, t1] : spans) {
      events.push_back({t0, +1});
      events.push_back({t1, -1});
    }
  std::sort(events.begin(), events.end());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "time_h,n_downed\n";
  int level = 0;
  out << "0," << 0 << '\n';
  for (std::size_t i = 0; i < events.size();) {
    const double t = events[i].first;
    while (i < events.size() && events[i].first == t) level += events[i++].second;
    out << csv_num(t) << ',' << level << '\n';
  }
}

/// Wide battery table on the union of all breakpoint times, one column per
/// entity, linearly interpolated between breakpoints.
inline void write_battery_series_csv(
    const std::vector<std::vector<std::pair<double, double>>>& series, const std::string& prefix,
    const std::string& path) {
  std::set<double> grid;
  for (const auto& s : series)
    for (const auto& [t, v] : s) grid.insert(t);
  auto value_at = [](const std::vector<std::pair<double, double>>& s, double t) {
    auto it = std::upper_bound(s.begin(), s.end(), std::pair<double, double>{
                                                       t, std::numeric_limits<double>::infinity()});
    if (it == s.begin()) return s.front().second;
    if (it == s.end()) return s.back().second;
    const auto [t1, v1] = *it;
    const auto [t0, v0] = *(it - 1);
    return t1 == t0 ? v1 : v0 + (v1 - v0) * (t - t0) / (t1 - t0);
  };
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "time_h";
  for (std::size_t i = 0; i < series.size(); ++i) out << ',' << prefix << '_' << i;
  out << '\n';
  for (const double t : grid) {
    out << csv_num(t);
    for (const auto& s : series) out << ',' << csv_num(value_at(s, t));
    out << '\n';
  }
}

}  // namespace evrpeps

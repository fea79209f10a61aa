#pragma once

#include <utility>
#include <vector>

namespace evrpeps {

/// One committed action of one EV: the move plus the sub-actions it entails.
/// Durations are hours; energy_kwh is the base-station battery gain for a
/// discharge visit and the EV battery gain for a charge visit.
struct ActionRecord {
  int action_index = 0;
  int node = -1;
  double depart_h = 0.0;
  double arrive_h = 0.0;
  double distance_km = 0.0;
  double prepare_h = 0.0;
  double wait_h = 0.0;
  double service_h = 0.0;
  double cleanup_h = 0.0;
  double energy_kwh = 0.0;
};

/// Replayable record of one rollout. Spans and final values cover the whole
/// simulated range (committed actions run to completion even past the
/// horizon); scoring clips at the horizon.
struct RouteLog {
  int n_bs = 0;
  int n_cs = 0;
  int n_evs = 0;
  double horizon_h = 0.0;
  double final_time_h = 0.0;
  std::vector<std::vector<ActionRecord>> ev_actions;
  std::vector<std::vector<std::pair<double, double>>> downed_spans;  // per base station
  std::vector<double> final_bs_battery_kwh;
  std::vector<double> final_ev_battery_kwh;
};

}  // namespace evrpeps

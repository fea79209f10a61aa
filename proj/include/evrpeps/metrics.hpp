#pragma once

#include <algorithm>

#include "evrpeps/instance.hpp"
#include "evrpeps/route_log.hpp"

namespace evrpeps {

struct Metrics {
  double dist_km = 0.0;   // mean travel distance per EV
  double down = 0.0;      // time-average number of downed base stations
  double obj = 0.0;       // dist/coord_scale + alpha * down / n_bs
  double wall_time_s = 0.0;
};

/// Time-average downed fraction over [0, up_to], horizon-normalized.
inline double downed_integral(const RouteLog& log, double up_to) {
  double total = 0.0;
  for (const auto& spans : log.downed_spans)
    for (const auto& [t0, t1] : spans) total += std::max(0.0, std::min(t1, up_to) - t0);
  return total / (log.horizon_h * log.n_bs);
}

inline Metrics compute_metrics(const RouteLog& log, const Instance& inst) {
  if (log.final_time_h < inst.horizon_h)
    throw ValidationError("compute_metrics: log does not cover the horizon");
  Metrics m;
  double km = 0.0;
  for (const auto& route : log.ev_actions)
    for (const auto& rec : route) km += rec.distance_km;
  m.dist_km = inst.n_evs() > 0 ? km / inst.n_evs() : 0.0;
  m.down = inst.n_bs() * downed_integral(log, inst.horizon_h);
  m.obj = m.dist_km / inst.coord_scale_km + inst.alpha * m.down / inst.n_bs();
  return m;
}

}  // namespace evrpeps

#pragma once

#include <limits>
#include <vector>

#include "evrpeps/rng.hpp"
#include "evrpeps/sim.hpp"

namespace evrpeps {

/// EV that finishes clean-up the soonest: argmin of the unmovable duration,
/// ties broken by the lowest index.
inline int select_vehicle(const Simulation& sim) {
  const int n = sim.instance().n_evs();
  if (n == 0) throw SimError("select_vehicle: no EVs");
  int best = 0;
  double best_u = sim.unmovable_h(0);
  for (int k = 1; k < n; ++k) {
    const double u = sim.unmovable_h(k);
    if (u < best_u) {
      best = k;
      best_u = u;
    }
  }
  return best;
}

/// Uniform over visitable nodes.
inline int random_node_selector(const Simulation& sim, int k, Rng& rng) {
  const auto mask = sim.visitable_mask(k);
  std::vector<int> options;
  options.reserve(mask.size());
  for (int n = 0; n < static_cast<int>(mask.size()); ++n)
    if (mask[n]) options.push_back(n);
  if (options.empty()) throw SimError("random_node_selector: empty feasibility mask");
  return options[rng.uniform_index(options.size())];
}

/// Visitable base station with the lowest current battery; if none, the
/// nearest visitable charge station. Ties go to the lowest index.
inline int greedy_node_selector(const Simulation& sim, int k) {
  const auto mask = sim.visitable_mask(k);
  const Instance& inst = sim.instance();

  int best_bs = -1;
  double best_battery = std::numeric_limits<double>::infinity();
  for (int i = 0; i < inst.n_bs(); ++i) {
    if (!mask[i]) continue;
    const double b = sim.bs_battery(i);
    if (b < best_battery) {
      best_bs = i;
      best_battery = b;
    }
  }
  if (best_bs >= 0) return best_bs;

  const Point2 at = sim.ev_position(k);
  int best_cs = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int j = 0; j < inst.n_cs(); ++j) {
    const int node = inst.cs_node(j);
    if (!mask[node]) continue;
    const double d = euclidean_distance(at, inst.charge_stations[j].position);
    if (d < best_dist) {
      best_cs = node;
      best_dist = d;
    }
  }
  if (best_cs < 0) throw SimError("greedy_node_selector: empty feasibility mask");
  return best_cs;
}

}  // namespace evrpeps

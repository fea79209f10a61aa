#pragma once

#include <utility>

#include "evrpeps/metrics.hpp"
#include "evrpeps/selectors.hpp"
#include "evrpeps/sim.hpp"

namespace evrpeps {

struct RolloutResult {
  RouteLog log;
  Metrics metrics;
  int decisions = 0;
};

/// Drives one rollout: alternate the vehicle selector with the supplied node
/// selector until no EV can start a move before the horizon. The node
/// selector is called as select(sim, ev_index) -> node.
template <typename NodeSelect>
RolloutResult run_rollout(const Instance& inst, NodeSelect&& select, SimOptions options = {}) {
  Simulation sim(inst, options);
  RolloutResult out;
  while (true) {
    const int k = select_vehicle(sim);
    const double t = sim.movable_at(k);
    if (t >= inst.horizon_h) break;
    sim.advance_to(t);
    const int node = select(sim, k);
    sim.commit_move(k, node);
    ++out.decisions;
  }
  sim.finalize();
  out.log = sim.route_log();
  out.metrics = compute_metrics(out.log, inst);
  return out;
}

/// Feeds a recorded log back through the dynamics and returns the finished
/// simulation. Throws if the recorded decisions diverge from what the vehicle
/// selector dictates.
inline Simulation replay_simulation(const Instance& inst, const RouteLog& log,
                                    SimOptions options = {}) {
  std::vector<std::size_t> next(log.ev_actions.size(), 0);
  Simulation sim(inst, options);
  while (true) {
    const int k = select_vehicle(sim);
    const double t = sim.movable_at(k);
    if (t >= inst.horizon_h) break;
    sim.advance_to(t);
    if (next[k] >= log.ev_actions[k].size())
      throw SimError("replay diverged: EV " + std::to_string(k) + " has no recorded action left");
    sim.commit_move(k, log.ev_actions[k][next[k]++].node);
  }
  sim.finalize();
  for (std::size_t k = 0; k < next.size(); ++k)
    if (next[k] != log.ev_actions[k].size())
      throw SimError("replay diverged: EV " + std::to_string(k) + " has unused recorded actions");
  return sim;
}

/// Replay returning just the log and metrics.
inline RolloutResult replay_rollout(const Instance& inst, const RouteLog& log,
                                    SimOptions options = {}) {
  Simulation sim = replay_simulation(inst, log, options);
  RolloutResult out;
  out.log = sim.route_log();
  for (const auto& route : out.log.ev_actions) out.decisions += static_cast<int>(route.size());
  out.metrics = compute_metrics(out.log, inst);
  return out;
}

}  // namespace evrpeps

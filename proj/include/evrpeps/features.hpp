#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "evrpeps/errors.hpp"
#include "evrpeps/sim.hpp"

namespace evrpeps {

/// Per-entity feature layouts and normalizers. Coordinates are divided by the
/// instance coord_scale, batteries by the owning entity's capacity, times by
/// the horizon, and capacities/rates by the reference constants below.
struct FeatureConfig {
  double energy_ref_kwh = 60.0;
  double rate_ref_kwh_per_h = 50.0;

  static constexpr int kBsDim = 6;
  static constexpr int kCsDim = 4;
  static constexpr int kEvDim = 14;

  static constexpr std::array<const char*, kBsDim> bs_feature_names = {
      "x", "y", "capacity", "consumption", "battery", "time_to_down"};
  static constexpr std::array<const char*, kCsDim> cs_feature_names = {
      "x", "y", "discharge_rate", "occupied"};
  static constexpr std::array<const char*, kEvDim> ev_feature_names = {
      "x",        "y",        "at_cs",    "phase_move", "phase_prepare",
      "phase_serve", "phase_cleanup", "dur_move", "dur_prepare", "dur_serve",
      "dur_cleanup", "unmovable", "capacity", "battery"};

  void validate() const {
    if (energy_ref_kwh <= 0.0 || rate_ref_kwh_per_h <= 0.0)
      throw ValidationError("FeatureConfig normalizers must be strictly positive");
  }
};

/// Everything the policy needs to reproduce one decision: the feature
/// matrices at the decision time, the selected EV, and the feasibility mask.
struct DecisionContext {
  Eigen::MatrixXd bs_feats;  // n_bs x kBsDim
  Eigen::MatrixXd cs_feats;  // n_cs x kCsDim
  Eigen::MatrixXd ev_feats;  // n_evs x kEvDim
  std::vector<char> mask;    // n_nodes
  int selected_ev = -1;
  int chosen_node = -1;  // filled once the action is drawn
};

inline DecisionContext encode_features(const Simulation& sim, int selected_ev,
                                       const FeatureConfig& cfg) {
  cfg.validate();
  const Instance& inst = sim.instance();
  const double scale = inst.coord_scale_km;
  const double horizon = inst.horizon_h;

  DecisionContext ctx;
  ctx.selected_ev = selected_ev;
  ctx.mask = sim.visitable_mask(selected_ev);

  ctx.bs_feats.resize(inst.n_bs(), FeatureConfig::kBsDim);
  for (int i = 0; i < inst.n_bs(); ++i) {
    const auto& bs = inst.base_stations[i];
    const double battery = sim.bs_battery(i);
    const double ttd = std::min(battery / bs.consumption_kwh_per_h, horizon);
    ctx.bs_feats(i, 0) = bs.position.x / scale;
    ctx.bs_feats(i, 1) = bs.position.y / scale;
    ctx.bs_feats(i, 2) = bs.capacity_kwh / cfg.energy_ref_kwh;
    ctx.bs_feats(i, 3) = bs.consumption_kwh_per_h / cfg.rate_ref_kwh_per_h;
    ctx.bs_feats(i, 4) = battery / bs.capacity_kwh;
    ctx.bs_feats(i, 5) = ttd / horizon;
  }

  ctx.cs_feats.resize(inst.n_cs(), FeatureConfig::kCsDim);
  for (int j = 0; j < inst.n_cs(); ++j) {
    const auto& cs = inst.charge_stations[j];
    ctx.cs_feats(j, 0) = cs.position.x / scale;
    ctx.cs_feats(j, 1) = cs.position.y / scale;
    ctx.cs_feats(j, 2) = cs.discharge_rate_kwh_per_h / cfg.rate_ref_kwh_per_h;
    ctx.cs_feats(j, 3) = sim.node_held_by_other(inst.cs_node(j), selected_ev) ? 1.0 : 0.0;
  }

  ctx.ev_feats.resize(inst.n_evs(), FeatureConfig::kEvDim);
  for (int k = 0; k < inst.n_evs(); ++k) {
    const auto& spec = inst.evs[k];
    const EvPhase& phase = sim.ev_phase(k);
    const Point2 at = sim.ev_position(k);
    const auto dur = sim.phase_durations(k);
    const bool at_cs = phase.tag == PhaseTag::Idle
                           ? inst.is_cs_node(sim.ev_node(k))
                           : phase.tag != PhaseTag::Move && inst.is_cs_node(phase.target_node);
    ctx.ev_feats(k, 0) = at.x / scale;
    ctx.ev_feats(k, 1) = at.y / scale;
    ctx.ev_feats(k, 2) = at_cs ? 1.0 : 0.0;
    ctx.ev_feats(k, 3) = phase.tag == PhaseTag::Move ? 1.0 : 0.0;
    ctx.ev_feats(k, 4) = phase.tag == PhaseTag::Prepare ? 1.0 : 0.0;
    ctx.ev_feats(k, 5) = phase.tag == PhaseTag::Discharge || phase.tag == PhaseTag::Charge ||
                                 phase.tag == PhaseTag::QueueWait
                             ? 1.0
                             : 0.0;
    ctx.ev_feats(k, 6) = phase.tag == PhaseTag::Cleanup ? 1.0 : 0.0;
    ctx.ev_feats(k, 7) = dur.move_h / horizon;
    ctx.ev_feats(k, 8) = dur.prepare_h / horizon;
    ctx.ev_feats(k, 9) = dur.service_h / horizon;
    ctx.ev_feats(k, 10) = dur.cleanup_h / horizon;
    ctx.ev_feats(k, 11) = sim.unmovable_h(k) / horizon;
    ctx.ev_feats(k, 12) = spec.capacity_kwh / cfg.energy_ref_kwh;
    ctx.ev_feats(k, 13) = sim.ev_battery(k) / spec.capacity_kwh;
  }

  return ctx;
}

}  // namespace evrpeps

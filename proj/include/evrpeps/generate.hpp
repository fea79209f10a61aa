#pragma once

#include <vector>

#include "evrpeps/instance.hpp"
#include "evrpeps/rng.hpp"

namespace evrpeps {

/// Physical constants shared by the synthetic generator defaults.
struct PhysicalDefaults {
  double ev_capacity_kwh = 60.0;       // Q(ev)
  double ev_drive_kwh_per_km = 0.161;  // C(ev)
  double ev_discharge_kwh_per_h = 10.0;  // D(ev)
  double ev_initial_ratio = 0.8;
  double discharge_floor_ratio = 0.1;  // mu
  double speed_kmh = 41.0;             // V
  double beta = 0.8;
  double gamma = 0.8;
  double cs_rate_normal_kwh_per_h = 3.0;
  double cs_rate_rapid_kwh_per_h = 50.0;
  double prep_bs_h = 0.5;
  double prep_cs_h = 1.0 / 6.0;  // 10 minutes
  double cleanup_bs_h = 0.5;
  double cleanup_cs_h = 1.0 / 6.0;
  double alpha = 100.0;
};

inline PhysicalDefaults default_parameters() { return {}; }

/// Synthetic-instance recipe. Station parameter distributions are explicit so
/// non-default fleets remain expressible.
struct GenConfig {
  int n_bs = 50;
  int n_cs = 12;
  int n_ev = 6;
  double horizon_h = 12.0;
  double side_km = 100.0;  // square side; also the objective's coord_scale

  // Base stations: capacity drawn from tiers, consumption = capacity /
  // backup_hours, initial battery uniform in [initial_lo, initial_hi] * Q.
  std::vector<double> bs_capacity_tiers_kwh = {3.0, 6.0, 12.0, 24.0};
  double bs_backup_hours = 3.0;
  double bs_initial_lo = 0.5;
  double bs_initial_hi = 1.0;

  // Charge stations: rate drawn uniformly from the choice list.
  std::vector<double> cs_rate_choices_kwh_per_h = {3.0, 50.0};

  PhysicalDefaults physical;
};

/// Pure function of (config, seed): positions i.i.d. uniform over the square,
/// base-station initial batteries uniform in [lo, hi] * capacity, EVs start at
/// uniformly drawn charge stations with initial_ratio * capacity on board.
inline Instance generate_instance(const GenConfig& config, std::uint64_t seed) {
  if (config.n_cs < 1) throw ValidationError("generate_instance: n_cs must be >= 1");
  if (config.n_bs < 0 || config.n_ev < 0)
    throw ValidationError("generate_instance: counts must be non-negative");
  if (config.bs_capacity_tiers_kwh.empty() || config.cs_rate_choices_kwh_per_h.empty())
    throw ValidationError("generate_instance: empty parameter choice list");

  Rng rng(seed);
  const PhysicalDefaults& phys = config.physical;

  Instance inst;
  inst.horizon_h = config.horizon_h;
  inst.speed_kmh = phys.speed_kmh;
  inst.alpha = phys.alpha;
  inst.beta = phys.beta;
  inst.gamma = phys.gamma;
  inst.mu = phys.discharge_floor_ratio;
  inst.coord_scale_km = config.side_km;
  inst.prep_bs_h = phys.prep_bs_h;
  inst.prep_cs_h = phys.prep_cs_h;
  inst.cleanup_bs_h = phys.cleanup_bs_h;
  inst.cleanup_cs_h = phys.cleanup_cs_h;

  inst.base_stations.reserve(config.n_bs);
  for (int i = 0; i < config.n_bs; ++i) {
    BaseStationSpec bs;
    bs.position = {rng.uniform(0.0, config.side_km), rng.uniform(0.0, config.side_km)};
    bs.capacity_kwh = config.bs_capacity_tiers_kwh[rng.uniform_index(config.bs_capacity_tiers_kwh.size())];
    bs.consumption_kwh_per_h = bs.capacity_kwh / config.bs_backup_hours;
    bs.initial_battery_kwh =
        bs.capacity_kwh * rng.uniform(config.bs_initial_lo, config.bs_initial_hi);
    inst.base_stations.push_back(bs);
  }

  inst.charge_stations.reserve(config.n_cs);
  for (int j = 0; j < config.n_cs; ++j) {
    ChargeStationSpec cs;
    cs.position = {rng.uniform(0.0, config.side_km), rng.uniform(0.0, config.side_km)};
    cs.discharge_rate_kwh_per_h =
        config.cs_rate_choices_kwh_per_h[rng.uniform_index(config.cs_rate_choices_kwh_per_h.size())];
    inst.charge_stations.push_back(cs);
  }

  inst.evs.reserve(config.n_ev);
  for (int k = 0; k < config.n_ev; ++k) {
    EvSpec ev;
    ev.capacity_kwh = phys.ev_capacity_kwh;
    ev.drive_kwh_per_km = phys.ev_drive_kwh_per_km;
    ev.discharge_rate_kwh_per_h = phys.ev_discharge_kwh_per_h;
    ev.initial_battery_kwh = phys.ev_initial_ratio * phys.ev_capacity_kwh;
    ev.start_cs_index = static_cast<int>(rng.uniform_index(config.n_cs));
    inst.evs.push_back(ev);
  }

  validate_instance(inst);
  return inst;
}

}  // namespace evrpeps

#pragma once

#include <string>
#include <vector>

#include "evrpeps/errors.hpp"
#include "evrpeps/geometry.hpp"

namespace evrpeps {

enum class NodeKind { BaseStation, ChargeStation };

struct BaseStationSpec {
  Point2 position;                  // km
  double capacity_kwh = 0.0;        // Q(bs)
  double consumption_kwh_per_h = 0.0;  // C(bs)
  double initial_battery_kwh = 0.0;

  friend bool operator==(const BaseStationSpec&, const BaseStationSpec&) = default;
};

struct ChargeStationSpec {
  Point2 position;                    // km
  double discharge_rate_kwh_per_h = 0.0;  // D(cs)

  friend bool operator==(const ChargeStationSpec&, const ChargeStationSpec&) = default;
};

struct EvSpec {
  double capacity_kwh = 0.0;           // Q(ev)
  double drive_kwh_per_km = 0.0;       // C(ev)
  double discharge_rate_kwh_per_h = 0.0;  // D(ev)
  double initial_battery_kwh = 0.0;
  int start_cs_index = 0;              // charge-station index, 0-based

  friend bool operator==(const EvSpec&, const EvSpec&) = default;
};

/// Static problem description. Node indexing is global: base stations occupy
/// [0, n_bs), charge stations [n_bs, n_bs + n_cs).
struct Instance {
  std::vector<BaseStationSpec> base_stations;
  std::vector<ChargeStationSpec> charge_stations;
  std::vector<EvSpec> evs;

  double horizon_h = 0.0;   // T
  double speed_kmh = 0.0;   // V
  double alpha = 0.0;       // objective weight on downed term
  double beta = 0.0;        // EV charge target ratio
  double gamma = 0.0;       // base-station discharge target ratio
  double mu = 0.0;          // EV discharge floor ratio
  double coord_scale_km = 0.0;  // distance normalizer in the objective

  double prep_bs_h = 0.0;
  double prep_cs_h = 0.0;
  double cleanup_bs_h = 0.0;
  double cleanup_cs_h = 0.0;

  int n_bs() const { return static_cast<int>(base_stations.size()); }
  int n_cs() const { return static_cast<int>(charge_stations.size()); }
  int n_nodes() const { return n_bs() + n_cs(); }
  int n_evs() const { return static_cast<int>(evs.size()); }

  bool is_cs_node(int node) const { return node >= n_bs(); }
  int cs_index(int node) const { return node - n_bs(); }
  int cs_node(int cs) const { return n_bs() + cs; }
  NodeKind node_kind(int node) const {
    return is_cs_node(node) ? NodeKind::ChargeStation : NodeKind::BaseStation;
  }

  const Point2& node_position(int node) const {
    return is_cs_node(node) ? charge_stations[cs_index(node)].position
                            : base_stations[node].position;
  }

  double prep_h(NodeKind kind) const {
    return kind == NodeKind::BaseStation ? prep_bs_h : prep_cs_h;
  }
  double cleanup_h(NodeKind kind) const {
    return kind == NodeKind::BaseStation ? cleanup_bs_h : cleanup_cs_h;
  }
};

/// Checks every type invariant; throws ValidationError naming the offending
/// field the way the instance files spell it.
inline void validate_instance(const Instance& inst) {
  auto fail = [](const std::string& msg) { throw ValidationError(msg); };

  if (inst.charge_stations.empty()) fail("instance requires at least one charge station");
  if (inst.n_nodes() < 1) fail("instance requires at least one node");
  if (inst.horizon_h <= 0.0) fail("horizon_h must be positive");
  if (inst.speed_kmh <= 0.0) fail("speed_kmh must be positive");
  if (inst.coord_scale_km <= 0.0) fail("coord_scale_km must be positive");
  if (!(0.0 <= inst.mu && inst.mu <= inst.beta && inst.beta <= 1.0))
    fail("require 0 <= mu <= beta <= 1");
  if (!(0.0 < inst.gamma && inst.gamma <= 1.0)) fail("require 0 < gamma <= 1");
  if (inst.prep_bs_h < 0.0 || inst.prep_cs_h < 0.0 || inst.cleanup_bs_h < 0.0 ||
      inst.cleanup_cs_h < 0.0)
    fail("prepare/cleanup durations must be non-negative");

  double max_bs_consumption = 0.0;
  for (int i = 0; i < inst.n_bs(); ++i) {
    const auto& bs = inst.base_stations[i];
    const std::string at = "base_stations[" + std::to_string(i) + "]";
    if (!(bs.capacity_kwh > 0.0)) fail(at + ".capacity_kwh must be positive");
    if (!(bs.consumption_kwh_per_h > 0.0)) fail(at + ".consumption_kwh_per_h must be positive");
    if (bs.initial_battery_kwh < 0.0 || bs.initial_battery_kwh > bs.capacity_kwh)
      fail(at + ".initial_battery_kwh must lie in [0, capacity_kwh]");
    max_bs_consumption = std::max(max_bs_consumption, bs.consumption_kwh_per_h);
  }
  for (int j = 0; j < inst.n_cs(); ++j) {
    const auto& cs = inst.charge_stations[j];
    const std::string at = "charge_stations[" + std::to_string(j) + "]";
    if (!(cs.discharge_rate_kwh_per_h > 0.0)) fail(at + ".discharge_rate_kwh_per_h must be positive");
  }
  for (int k = 0; k < inst.n_evs(); ++k) {
    const auto& ev = inst.evs[k];
    const std::string at = "evs[" + std::to_string(k) + "]";
    if (!(ev.capacity_kwh > 0.0)) fail(at + ".capacity_kwh must be positive");
    if (!(ev.drive_kwh_per_km > 0.0)) fail(at + ".drive_kwh_per_km must be positive");
    if (ev.initial_battery_kwh < 0.0 || ev.initial_battery_kwh > ev.capacity_kwh)
      fail(at + ".initial_battery_kwh must lie in [0, capacity_kwh]");
    if (ev.start_cs_index < 0 || ev.start_cs_index >= inst.n_cs())
      fail(at + ".start_cs_index out of range");
    if (!(ev.discharge_rate_kwh_per_h > max_bs_consumption))
      fail(at + ".discharge_rate_kwh_per_h must exceed every base station's consumption");
  }
}

}  // namespace evrpeps

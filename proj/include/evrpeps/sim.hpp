#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "evrpeps/errors.hpp"
#include "evrpeps/instance.hpp"
#include "evrpeps/route_log.hpp"

namespace evrpeps {

enum class PhaseTag { Idle, Move, Prepare, Discharge, Charge, QueueWait, Cleanup };

inline const char* phase_name(PhaseTag tag) {
  switch (tag) {
    case PhaseTag::Idle: return "idle";
    case PhaseTag::Move: return "move";
    case PhaseTag::Prepare: return "prepare";
    case PhaseTag::Discharge: return "discharge";
    case PhaseTag::Charge: return "charge";
    case PhaseTag::QueueWait: return "queue_wait";
    case PhaseTag::Cleanup: return "cleanup";
  }
  return "?";
}

struct EvPhase {
  PhaseTag tag = PhaseTag::Idle;
  double started_at = 0.0;
  double ends_at = 0.0;
  int target_node = -1;  // node of the ongoing action; -1 while Idle
};

struct SimOptions {
  /// Record per-entity battery breakpoints for time-series export.
  bool record_trajectories = false;
  /// Discharge floor computed as V * min-distance-to-depot instead of the
  /// drive-energy form C(ev) * min-distance.
  bool speed_scaled_discharge_floor = false;
};

struct Action {
  enum class Kind { Move, Charge, Discharge, Prepare, Cleanup };
  Kind kind;
  int node = -1;
};

/// Exact continuous-time dynamics of one rollout: battery fluctuation,
/// the move/prepare/(dis)charge/cleanup cycle, charge-station FIFO queues,
/// feasibility masks, and the downed-time integral. Single-writer; distinct
/// rollouts are independent.
class Simulation {
 public:
  explicit Simulation(const Instance& inst, SimOptions options = {})
      : inst_(inst), options_(options) {
    validate_instance(inst_);
    const int nb = inst_.n_bs(), nc = inst_.n_cs(), ne = inst_.n_evs();

    min_return_km_.resize(nb);
    for (int i = 0; i < nb; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < nc; ++j)
        best = std::min(best, euclidean_distance(inst_.base_stations[i].position,
                                                 inst_.charge_stations[j].position));
      min_return_km_[i] = best;
    }

    bs_.resize(nb);
    for (int i = 0; i < nb; ++i) bs_[i].battery = inst_.base_stations[i].initial_battery_kwh;
    cs_.resize(nc);
    ev_.resize(ne);
    for (int k = 0; k < ne; ++k) {
      ev_[k].node = inst_.cs_node(inst_.evs[k].start_cs_index);
      ev_[k].battery = inst_.evs[k].initial_battery_kwh;
    }

    log_.n_bs = nb;
    log_.n_cs = nc;
    log_.n_evs = ne;
    log_.horizon_h = inst_.horizon_h;
    log_.ev_actions.resize(ne);
    log_.downed_spans.resize(nb);

    if (options_.record_trajectories) {
      bs_series_.resize(nb);
      ev_series_.resize(ne);
      for (int i = 0; i < nb; ++i) bs_series_[i].push_back({0.0, bs_[i].battery});
      for (int k = 0; k < ne; ++k) ev_series_[k].push_back({0.0, ev_[k].battery});
    }
    for (int i = 0; i < nb; ++i)
      if (bs_[i].battery <= 0.0) bs_[i].downed_since = 0.0;
  }

  const Instance& instance() const { return inst_; }
  const SimOptions& options() const { return options_; }
  double now() const { return now_; }

  // --- battery queries ------------------------------------------------

  /// Battery of base station i at t, assuming no event for i in (now, t].
  double bs_battery_at(int i, double t) const {
    if (t < now_) throw SimError("bs_battery_at: query before last event");
    const auto& s = bs_[i];
    const double rate = bs_rate(i);
    return std::clamp(s.battery + rate * (t - now_), 0.0, inst_.base_stations[i].capacity_kwh);
  }

  /// Battery of EV k at t, assuming no event for k in (now, t].
  double ev_battery_at(int k, double t) const {
    if (t < now_) throw SimError("ev_battery_at: query before last event");
    const auto& s = ev_[k];
    const double b = s.battery + ev_rate(k) * (t - now_);
    return std::clamp(b, 0.0, inst_.evs[k].capacity_kwh);
  }

  double bs_battery(int i) const { return bs_[i].battery; }
  double ev_battery(int k) const { return ev_[k].battery; }

  // --- static geometry helpers ----------------------------------------

  double min_return_km(int bs_index) const { return min_return_km_[bs_index]; }

  /// Energy floor below which EV k must stop discharging at base station i.
  double discharge_limit_kwh(int k, int i) const {
    const auto& ev = inst_.evs[k];
    const double reach = options_.speed_scaled_discharge_floor
                             ? inst_.speed_kmh * min_return_km_[i]
                             : ev.drive_kwh_per_km * min_return_km_[i];
    return std::max(inst_.mu * ev.capacity_kwh, reach);
  }

  // --- EV state queries -------------------------------------------------

  const EvPhase& ev_phase(int k) const { return ev_[k].phase; }

  /// Node the EV is at (its origin while moving).
  int ev_node(int k) const { return ev_[k].node; }

  Point2 ev_position(int k) const {
    const auto& s = ev_[k];
    if (s.phase.tag != PhaseTag::Move) {
      return inst_.node_position(s.phase.tag == PhaseTag::Idle ? s.node : s.phase.target_node);
    }
    const Point2 a = inst_.node_position(s.node);
    const Point2 b = inst_.node_position(s.phase.target_node);
    const double span = s.phase.ends_at - s.phase.started_at;
    const double f = span > 0.0 ? (now_ - s.phase.started_at) / span : 1.0;
    return {a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)};
  }

  /// Absolute time at which EV k can accept its next move decision.
  double movable_at(int k) const { return std::max(now_, ev_[k].movable_at); }

  /// Unmovable duration U at the current time.
  double unmovable_h(int k) const { return std::max(0.0, ev_[k].movable_at - now_); }

  /// Scheduled phase durations of EV k's current action (zeros while idle):
  /// move, prepare, service (queue wait folded in for charge visits), cleanup.
  struct PhaseDurations {
    double move_h = 0, prepare_h = 0, service_h = 0, cleanup_h = 0;
  };
  PhaseDurations phase_durations(int k) const {
    const auto& s = ev_[k];
    if (s.phase.tag == PhaseTag::Idle) return {};
    return {s.sched_move_h, s.sched_prep_h, s.sched_wait_h + s.sched_service_h, s.sched_clean_h};
  }

  /// True when any EV other than `except_ev` is at node n or committed to it.
  bool node_held_by_other(int n, int except_ev) const {
    for (int k = 0; k < inst_.n_evs(); ++k) {
      if (k == except_ev) continue;
      const auto& s = ev_[k];
      const int at = s.phase.tag == PhaseTag::Idle ? s.node : s.phase.target_node;
      if (at == n) return true;
    }
    return false;
  }

  // --- feasibility -----------------------------------------------------

  /// Reachability plus occupancy rules, one flag per node. The comparison
  /// carries a 1e-9 kWh slack so round-off in chained battery updates cannot
  /// starve an EV of its provably reachable depot.
  std::vector<char> visitable_mask(int k) const {
    std::vector<char> mask(inst_.n_nodes(), 0);
    const auto& ev = inst_.evs[k];
    const Point2 at = ev_position(k);
    const double budget = ev_[k].battery + kReachSlackKwh;
    const int current = current_node_of(k);
    for (int n = 0; n < inst_.n_nodes(); ++n) {
      if (n == current) continue;
      const double d = euclidean_distance(at, inst_.node_position(n));
      if (inst_.is_cs_node(n)) {
        mask[n] = ev.drive_kwh_per_km * d <= budget;
      } else {
        if (node_held_by_other(n, k)) continue;
        mask[n] = ev.drive_kwh_per_km * (d + min_return_km_[n]) <= budget;
      }
    }
    return mask;
  }

  /// Duration of a single (sub-)action started from the current state.
  double action_duration(int k, Action a) const {
    const auto& ev = inst_.evs[k];
    switch (a.kind) {
      case Action::Kind::Move:
        return euclidean_distance(ev_position(k), inst_.node_position(a.node)) / inst_.speed_kmh;
      case Action::Kind::Charge: {
        const auto& cs = inst_.charge_stations[inst_.cs_index(a.node)];
        return charge_duration(k, cs.discharge_rate_kwh_per_h, ev_[k].battery);
      }
      case Action::Kind::Discharge:
        return discharge_duration(k, a.node, bs_[a.node].battery, ev_[k].battery);
      case Action::Kind::Prepare:
        return inst_.prep_h(inst_.node_kind(a.node));
      case Action::Kind::Cleanup:
        return inst_.cleanup_h(inst_.node_kind(a.node));
    }
    return 0.0;
  }

  /// True once no EV can start a move before the horizon.
  bool is_terminal() const {
    for (int k = 0; k < inst_.n_evs(); ++k)
      if (movable_at(k) < inst_.horizon_h) return false;
    return true;
  }

  // --- mutation ----------------------------------------------------------

  /// Processes all pending events with time <= t and advances the clock to t.
  void advance_to(double t) {
    if (t < now_) throw SimError("advance_to: time must not decrease");
    while (true) {
      const int k = next_event_ev(t);
      if (k < 0) break;
      const double te = ev_[k].event_time;
      const EventKind kind = ev_[k].event_kind;
      account_world(te);
      ev_[k].event_time = kInf;
      ev_[k].event_kind = EventKind::None;
      handle_event(k, kind);
    }
    account_world(t);
  }

  /// Starts EV k's next action toward `node` at the current time. The node
  /// must be visitable and the EV movable; schedules the whole sub-action
  /// cycle and updates unmovable durations.
  void commit_move(int k, int node) {
    if (unmovable_h(k) > 0.0) throw SimError("commit_move: EV is not movable yet");
    if (ev_[k].phase.tag != PhaseTag::Idle) throw SimError("commit_move: EV has a pending action");
    if (node < 0 || node >= inst_.n_nodes()) throw SimError("commit_move: node out of range");
    if (!visitable_mask(k)[node])
      throw SimError("commit_move: node " + std::to_string(node) + " is not visitable for EV " +
                     std::to_string(k));

    auto& s = ev_[k];
    const auto& ev = inst_.evs[k];
    const int origin = s.node;
    const double dist = euclidean_distance(inst_.node_position(origin), inst_.node_position(node));
    const double move_h = dist / inst_.speed_kmh;
    const double arrive = now_ + move_h;
    const NodeKind kind = inst_.node_kind(node);

    s.phase = {PhaseTag::Move, now_, arrive, node};
    s.battery_on_arrival = s.battery - ev.drive_kwh_per_km * dist;
    if (s.battery_on_arrival < -1e-9)
      throw SimError("commit_move: move would drain EV battery below zero");
    s.sched_move_h = move_h;
    s.sched_prep_h = inst_.prep_h(kind);
    s.sched_clean_h = inst_.cleanup_h(kind);
    s.sched_wait_h = 0.0;

    ActionRecord rec;
    rec.action_index = static_cast<int>(log_.ev_actions[k].size());
    rec.node = node;
    rec.depart_h = now_;
    rec.arrive_h = arrive;
    rec.distance_km = dist;
    rec.prepare_h = s.sched_prep_h;
    rec.cleanup_h = s.sched_clean_h;
    log_.ev_actions[k].push_back(rec);

    if (kind == NodeKind::BaseStation) {
      // The station is exclusively ours from commit to departure, so the whole
      // schedule is exact now. End batteries are pinned to whichever bound
      // binds, which keeps the discharge floor bit-exact.
      const auto& bs = inst_.base_stations[node];
      const double bs_at_service =
          std::max(0.0, bs_[node].battery - bs.consumption_kwh_per_h * (move_h + s.sched_prep_h));
      const double net = ev.discharge_rate_kwh_per_h - bs.consumption_kwh_per_h;
      if (net <= 0.0)
        throw SimError("discharge at a station whose consumption exceeds the EV discharge rate");
      const double lim = discharge_limit_kwh(k, node);
      const double fill = (inst_.gamma * bs.capacity_kwh - bs_at_service) / net;
      const double drain = (s.battery_on_arrival - lim) / ev.discharge_rate_kwh_per_h;
      if (fill <= drain) {
        s.sched_service_h = std::max(0.0, fill);
        s.sched_bs_end_kwh = fill > 0.0 ? inst_.gamma * bs.capacity_kwh : bs_at_service;
        s.sched_ev_end_kwh = s.battery_on_arrival - ev.discharge_rate_kwh_per_h * s.sched_service_h;
      } else {
        s.sched_service_h = std::max(0.0, drain);
        s.sched_bs_end_kwh = bs_at_service + net * s.sched_service_h;
        s.sched_ev_end_kwh = drain > 0.0 ? lim : s.battery_on_arrival;
      }
      s.movable_at = arrive + s.sched_prep_h + s.sched_service_h + s.sched_clean_h;
    } else {
      const int j = inst_.cs_index(node);
      cs_[j].arrivals.push_back({arrive, k});
      std::sort(cs_[j].arrivals.begin(), cs_[j].arrivals.end());
      project_cs_schedule(j);
    }

    schedule(k, arrive, EventKind::Arrival);
  }

  /// Drains every scheduled event, then extends battery accounting to at
  /// least the horizon so the downed integral over [0, T] is complete.
  void finalize() {
    advance_to(now_);
    while (true) {
      int k = -1;
      for (int e = 0; e < inst_.n_evs(); ++e) {
        if (ev_[e].event_kind == EventKind::None) continue;
        if (k < 0 || tie_before(e, k)) k = e;
      }
      if (k < 0) break;
      advance_to(ev_[k].event_time);
    }
    if (now_ < inst_.horizon_h) advance_to(inst_.horizon_h);
    close_downed_spans();
    log_.final_time_h = now_;
    log_.final_bs_battery_kwh.resize(inst_.n_bs());
    for (int i = 0; i < inst_.n_bs(); ++i) log_.final_bs_battery_kwh[i] = bs_[i].battery;
    log_.final_ev_battery_kwh.resize(inst_.n_evs());
    for (int k = 0; k < inst_.n_evs(); ++k) log_.final_ev_battery_kwh[k] = ev_[k].battery;
  }

  // --- scoring ----------------------------------------------------------

  /// (1/T) * integral over [0, up_to] of (downed station count) / n_bs.
  /// Valid for up_to <= the accounted time (now).
  double downed_integral(double up_to) const {
    if (up_to > now_ + 1e-9)
      throw SimError("downed_integral: simulation not advanced that far");
    double total = 0.0;
    for (int i = 0; i < inst_.n_bs(); ++i) {
      for (const auto& [t0, t1] : log_.downed_spans[i])
        total += std::max(0.0, std::min(t1, up_to) - t0);
      if (!std::isnan(bs_[i].downed_since))
        total += std::max(0.0, up_to - bs_[i].downed_since);
    }
    return total / (inst_.horizon_h * inst_.n_bs());
  }

  const RouteLog& route_log() const { return log_; }

  const std::vector<std::pair<double, double>>& bs_series(int i) const { return bs_series_[i]; }
  const std::vector<std::pair<double, double>>& ev_series(int k) const { return ev_series_[k]; }

  /// Cross-checks the structural invariants; throws SimError on violation.
  void check_invariants() const {
    for (int i = 0; i < inst_.n_bs(); ++i) {
      const double q = inst_.base_stations[i].capacity_kwh;
      if (bs_[i].battery < -1e-9 || bs_[i].battery > q + 1e-9)
        throw SimError("invariant: base station battery out of [0, Q]");
    }
    for (int k = 0; k < inst_.n_evs(); ++k) {
      const double q = inst_.evs[k].capacity_kwh;
      if (ev_[k].battery < -1e-9 || ev_[k].battery > q + 1e-9)
        throw SimError("invariant: EV battery out of [0, Q]");
    }
    for (int i = 0; i < inst_.n_bs(); ++i) {
      int holders = 0;
      for (int k = 0; k < inst_.n_evs(); ++k) {
        const auto& s = ev_[k];
        const int at = s.phase.tag == PhaseTag::Idle ? s.node : s.phase.target_node;
        if (at == i) ++holders;
      }
      if (holders > 1) throw SimError("invariant: two EVs hold one base station");
    }
    for (int j = 0; j < inst_.n_cs(); ++j) {
      const auto& cs = cs_[j];
      if (!std::is_sorted(cs.arrivals.begin(), cs.arrivals.end()))
        throw SimError("invariant: charge-station queue out of arrival order");
      // The charging EV, if any, must be the earliest arrival not yet served.
      for (const auto& [t, k] : cs.arrivals) {
        const PhaseTag tag = ev_[k].phase.tag;
        if (tag == PhaseTag::Charge) {
          if (cs.charging_ev != k) throw SimError("invariant: charger bookkeeping mismatch");
          break;
        }
        if (tag == PhaseTag::Move || tag == PhaseTag::Prepare || tag == PhaseTag::QueueWait) {
          if (cs.charging_ev >= 0) {
            // someone is charging; they must have arrived before every waiter
            bool seen = false;
            for (const auto& [t2, k2] : cs.arrivals) {
              if (k2 == cs.charging_ev) { seen = t2 <= t; break; }
            }
            if (!seen) throw SimError("invariant: FIFO service order violated");
          }
          break;
        }
      }
    }
  }

 private:
  enum class EventKind { None, Arrival, PrepareEnd, DischargeEnd, ChargeEnd, QueueWaitEnd, CleanupEnd };

  struct BsState {
    double battery = 0.0;
    int discharging_ev = -1;
    double downed_since = std::numeric_limits<double>::quiet_NaN();  // open downed span
  };

  struct CsState {
    std::vector<std::pair<double, int>> arrivals;  // (arrival time, ev), sorted
    int charging_ev = -1;
  };

  struct EvState {
    EvPhase phase;
    int node = -1;  // current node; origin while moving
    double battery = 0.0;
    double movable_at = 0.0;
    double battery_on_arrival = 0.0;
    double service_start_bs_kwh = 0.0;  // bs battery when discharge began
    double sched_bs_end_kwh = 0.0;      // pinned discharge end levels
    double sched_ev_end_kwh = 0.0;
    double sched_move_h = 0, sched_prep_h = 0, sched_wait_h = 0, sched_service_h = 0,
           sched_clean_h = 0;
    double event_time = std::numeric_limits<double>::infinity();
    EventKind event_kind = EventKind::None;
  };

  static constexpr double kInf = std::numeric_limits<double>::infinity();
  static constexpr double kReachSlackKwh = 1e-9;

  double bs_rate(int i) const {
    const auto& spec = inst_.base_stations[i];
    return bs_[i].discharging_ev >= 0
               ? inst_.evs[bs_[i].discharging_ev].discharge_rate_kwh_per_h - spec.consumption_kwh_per_h
               : -spec.consumption_kwh_per_h;
  }

  double ev_rate(int k) const {
    const auto& s = ev_[k];
    const auto& spec = inst_.evs[k];
    switch (s.phase.tag) {
      case PhaseTag::Move: return -spec.drive_kwh_per_km * inst_.speed_kmh;
      case PhaseTag::Discharge: return -spec.discharge_rate_kwh_per_h;
      case PhaseTag::Charge:
        return inst_.charge_stations[inst_.cs_index(s.phase.target_node)].discharge_rate_kwh_per_h;
      default: return 0.0;
    }
  }

  int current_node_of(int k) const {
    const auto& s = ev_[k];
    return s.phase.tag == PhaseTag::Idle ? s.node : s.phase.target_node;
  }

  double charge_duration(int k, double cs_rate, double battery) const {
    const auto& ev = inst_.evs[k];
    return std::max(0.0, (inst_.beta * ev.capacity_kwh - battery) / cs_rate);
  }

  double discharge_duration(int k, int i, double bs_battery, double ev_battery) const {
    const auto& ev = inst_.evs[k];
    const auto& bs = inst_.base_stations[i];
    const double net = ev.discharge_rate_kwh_per_h - bs.consumption_kwh_per_h;
    if (net <= 0.0)
      throw SimError("discharge at a station whose consumption exceeds the EV discharge rate");
    const double fill = (inst_.gamma * bs.capacity_kwh - bs_battery) / net;
    const double drain = (ev_battery - discharge_limit_kwh(k, i)) / ev.discharge_rate_kwh_per_h;
    return std::max(0.0, std::min(fill, drain));
  }

  bool tie_before(int a, int b) const {
    if (ev_[a].event_time != ev_[b].event_time) return ev_[a].event_time < ev_[b].event_time;
    if (ev_[a].event_kind != ev_[b].event_kind) return ev_[a].event_kind < ev_[b].event_kind;
    return a < b;
  }

  int next_event_ev(double limit) const {
    int best = -1;
    for (int k = 0; k < inst_.n_evs(); ++k) {
      if (ev_[k].event_kind == EventKind::None || ev_[k].event_time > limit) continue;
      if (best < 0 || tie_before(k, best)) best = k;
    }
    return best;
  }

  void schedule(int k, double t, EventKind kind) {
    ev_[k].event_time = t;
    ev_[k].event_kind = kind;
  }

  /// Linear battery bookkeeping from now_ to t for every entity, including
  /// zero-crossing/clamp handling and downed-span accrual.
  void account_world(double t) {
    if (t <= now_) { now_ = std::max(now_, t); return; }
    for (int i = 0; i < inst_.n_bs(); ++i) account_bs(i, t);
    for (int k = 0; k < inst_.n_evs(); ++k) {
      auto& s = ev_[k];
      const double rate = ev_rate(k);
      if (rate != 0.0) {
        s.battery += rate * (t - now_);
        const double cap = inst_.evs[k].capacity_kwh;
        if (s.battery > cap) s.battery = cap;
        if (s.battery < 0.0 && s.battery > -1e-9) s.battery = 0.0;
        if (s.battery < 0.0) throw SimError("EV battery driven below zero");
        if (options_.record_trajectories) ev_series_[k].push_back({t, s.battery});
      }
    }
    now_ = t;
  }

  void account_bs(int i, double t) {
    auto& s = bs_[i];
    const double cap = inst_.base_stations[i].capacity_kwh;
    const double rate = bs_rate(i);
    const double dt = t - now_;
    if (rate < 0.0) {
      if (s.battery <= 0.0) {
        s.battery = 0.0;  // stays down, span already open
      } else {
        const double cross = s.battery / -rate;
        if (cross < dt) {
          s.battery = 0.0;
          s.downed_since = now_ + cross;
          if (options_.record_trajectories) bs_series_[i].push_back({now_ + cross, 0.0});
        } else {
          s.battery += rate * dt;
          if (s.battery <= 0.0) {  // exact touch at t
            s.battery = 0.0;
            s.downed_since = t;
          }
        }
      }
    } else if (rate > 0.0) {
      if (!std::isnan(s.downed_since)) {
        log_.downed_spans[i].push_back({s.downed_since, now_});
        s.downed_since = std::numeric_limits<double>::quiet_NaN();
      }
      s.battery = std::min(cap, s.battery + rate * dt);
    }
    if (options_.record_trajectories && rate != 0.0) bs_series_[i].push_back({t, s.battery});
  }

  void close_downed_spans() {
    for (int i = 0; i < inst_.n_bs(); ++i) {
      auto& s = bs_[i];
      if (!std::isnan(s.downed_since)) {
        log_.downed_spans[i].push_back({s.downed_since, now_});
        // reopen at the boundary if still down so later queries stay consistent
        s.downed_since = s.battery <= 0.0 ? now_ : std::numeric_limits<double>::quiet_NaN();
      }
    }
  }

  ActionRecord& open_record(int k) { return log_.ev_actions[k].back(); }

  void handle_event(int k, EventKind kind) {
    auto& s = ev_[k];
    switch (kind) {
      case EventKind::Arrival: {
        const int node = s.phase.target_node;
        s.node = node;
        s.battery = s.battery_on_arrival;  // exact, kills per-span rounding
        const double prep = s.sched_prep_h;
        s.phase = {PhaseTag::Prepare, now_, now_ + prep, node};
        schedule(k, now_ + prep, EventKind::PrepareEnd);
        if (options_.record_trajectories) ev_series_[k].push_back({now_, s.battery});
        break;
      }
      case EventKind::PrepareEnd: {
        const int node = s.phase.target_node;
        if (inst_.node_kind(node) == NodeKind::BaseStation) {
          s.service_start_bs_kwh = bs_[node].battery;
          const double dur = s.sched_service_h;  // fixed at commit; station untouched since
          bs_[node].discharging_ev = k;
          s.phase = {PhaseTag::Discharge, now_, now_ + dur, node};
          schedule(k, now_ + dur, EventKind::DischargeEnd);
        } else {
          begin_charge_or_wait(k, inst_.cs_index(node));
        }
        break;
      }
      case EventKind::DischargeEnd: {
        const int node = s.phase.target_node;
        auto& bs = bs_[node];
        bs.discharging_ev = -1;
        bs.battery = std::min(inst_.base_stations[node].capacity_kwh, s.sched_bs_end_kwh);
        s.battery = s.sched_ev_end_kwh;
        open_record(k).service_h = s.sched_service_h;
        open_record(k).energy_kwh = bs.battery - s.service_start_bs_kwh;
        if (options_.record_trajectories) {
          ev_series_[k].push_back({now_, s.battery});
          bs_series_[node].push_back({now_, bs.battery});
        }
        start_cleanup(k, node);
        break;
      }
      case EventKind::QueueWaitEnd: {
        const int j = inst_.cs_index(s.phase.target_node);
        if (cs_[j].charging_ev >= 0) throw SimError("queue wait ended while server busy");
        open_record(k).wait_h = now_ - s.phase.started_at;
        start_charge(k, j);
        break;
      }
      case EventKind::ChargeEnd: {
        const int node = s.phase.target_node;
        const int j = inst_.cs_index(node);
        if (s.sched_service_h > 0.0) s.battery = inst_.beta * inst_.evs[k].capacity_kwh;
        cs_[j].charging_ev = -1;
        open_record(k).service_h = s.sched_service_h;
        open_record(k).energy_kwh = s.battery - s.battery_on_arrival;
        if (options_.record_trajectories) ev_series_[k].push_back({now_, s.battery});
        start_cleanup(k, node);
        break;
      }
      case EventKind::CleanupEnd: {
        const int node = s.phase.target_node;
        if (inst_.node_kind(node) == NodeKind::ChargeStation) {
          auto& arr = cs_[inst_.cs_index(node)].arrivals;
          std::erase_if(arr, [k](const auto& e) { return e.second == k; });
        }
        s.phase = {PhaseTag::Idle, now_, now_, -1};
        s.node = node;
        s.movable_at = now_;
        break;
      }
      case EventKind::None:
        throw SimError("empty event dispatched");
    }
  }

  void begin_charge_or_wait(int k, int j) {
    auto& cs = cs_[j];
    if (cs.charging_ev < 0 && first_unserved(j) == k) {
      start_charge(k, j);
      return;
    }
    // Every EV ahead of us has arrived, so the wait end is exact now.
    const double start = projected_charge_start(j, k);
    ev_[k].phase = {PhaseTag::QueueWait, now_, start, inst_.cs_node(j)};
    ev_[k].sched_wait_h = start - now_;
    schedule(k, start, EventKind::QueueWaitEnd);
  }

  void start_charge(int k, int j) {
    auto& s = ev_[k];
    const double dur =
        charge_duration(k, inst_.charge_stations[j].discharge_rate_kwh_per_h, s.battery);
    s.sched_service_h = dur;
    s.phase = {PhaseTag::Charge, now_, now_ + dur, inst_.cs_node(j)};
    cs_[j].charging_ev = k;
    s.movable_at = now_ + dur + s.sched_clean_h;
    schedule(k, now_ + dur, EventKind::ChargeEnd);
  }

  void start_cleanup(int k, int node) {
    auto& s = ev_[k];
    const double dur = s.sched_clean_h;
    s.phase = {PhaseTag::Cleanup, now_, now_ + dur, node};
    s.movable_at = now_ + dur;
    schedule(k, now_ + dur, EventKind::CleanupEnd);
  }

  /// Earliest-arrival EV at cs j that has not started (or finished) charging.
  int first_unserved(int j) const {
    for (const auto& [t, k] : cs_[j].arrivals) {
      const PhaseTag tag = ev_[k].phase.tag;
      if (tag == PhaseTag::Charge || tag == PhaseTag::Cleanup) continue;
      return k;
    }
    return -1;
  }

  double projected_charge_start(int j, int target_ev) const {
    double server_free = 0.0;
    for (const auto& [arrive, k] : cs_[j].arrivals) {
      const auto& s = ev_[k];
      if (s.phase.tag == PhaseTag::Charge) {
        server_free = std::max(server_free, s.phase.ends_at);
        continue;
      }
      if (s.phase.tag == PhaseTag::Cleanup) continue;  // done charging
      const double prep_end = arrive + inst_.prep_cs_h;
      const double start = std::max(prep_end, server_free);
      if (k == target_ev) return start;
      server_free =
          start + charge_duration(k, inst_.charge_stations[j].discharge_rate_kwh_per_h,
                                  s.phase.tag == PhaseTag::Move ? s.battery_on_arrival : s.battery);
    }
    throw SimError("projected_charge_start: EV not queued at station");
  }

  /// Recomputes movable-at projections for every EV at cs j that has not yet
  /// started charging; called when a new arrival is committed (queue-induced
  /// unmovable-duration extension).
  void project_cs_schedule(int j) {
    double server_free = 0.0;
    const double rate = inst_.charge_stations[j].discharge_rate_kwh_per_h;
    for (const auto& [arrive, k] : cs_[j].arrivals) {
      auto& s = ev_[k];
      if (s.phase.tag == PhaseTag::Charge) {
        server_free = std::max(server_free, s.phase.ends_at);
        continue;
      }
      if (s.phase.tag == PhaseTag::Cleanup) continue;
      const double battery = s.phase.tag == PhaseTag::Move || s.phase.tag == PhaseTag::Prepare ||
                                     s.phase.tag == PhaseTag::QueueWait
                                 ? s.battery_on_arrival
                                 : s.battery;
      const double prep_end = arrive + inst_.prep_cs_h;
      const double start = std::max(prep_end, server_free);
      const double dur = charge_duration(k, rate, battery);
      s.sched_wait_h = start - prep_end;
      s.sched_service_h = dur;
      s.movable_at = start + dur + s.sched_clean_h;
      server_free = start + dur;
    }
  }

  Instance inst_;
  SimOptions options_;
  double now_ = 0.0;
  std::vector<double> min_return_km_;
  std::vector<BsState> bs_;
  std::vector<CsState> cs_;
  std::vector<EvState> ev_;
  RouteLog log_;
  std::vector<std::vector<std::pair<double, double>>> bs_series_;
  std::vector<std::vector<std::pair<double, double>>> ev_series_;
};

}  // namespace evrpeps

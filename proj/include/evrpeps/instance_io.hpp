#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "evrpeps/instance.hpp"

namespace evrpeps {

inline constexpr int kInstanceSchemaVersion = 1;

namespace detail {

inline double require_number(const nlohmann::ordered_json& obj, const std::string& key,
                             const std::string& context) {
  if (!obj.contains(key))
    throw SchemaError("missing field " + context + "." + key);
  if (!obj[key].is_number())
    throw SchemaError("field " + context + "." + key + " must be a number");
  return obj[key].get<double>();
}

}  // namespace detail

inline nlohmann::ordered_json instance_to_json(const Instance& inst) {
  using json = nlohmann::ordered_json;
  json doc;
  doc["schema_version"] = kInstanceSchemaVersion;
  doc["horizon_h"] = inst.horizon_h;
  doc["speed_kmh"] = inst.speed_kmh;
  doc["alpha"] = inst.alpha;
  doc["beta"] = inst.beta;
  doc["gamma"] = inst.gamma;
  doc["mu"] = inst.mu;
  doc["coord_scale_km"] = inst.coord_scale_km;
  doc["prep_h"] = {{"bs", inst.prep_bs_h}, {"cs", inst.prep_cs_h}};
  doc["cleanup_h"] = {{"bs", inst.cleanup_bs_h}, {"cs", inst.cleanup_cs_h}};

  doc["base_stations"] = json::array();
  for (const auto& bs : inst.base_stations) {
    doc["base_stations"].push_back({{"x_km", bs.position.x},
                                    {"y_km", bs.position.y},
                                    {"capacity_kwh", bs.capacity_kwh},
                                    {"consumption_kwh_per_h", bs.consumption_kwh_per_h},
                                    {"initial_battery_kwh", bs.initial_battery_kwh}});
  }
  doc["charge_stations"] = json::array();
  for (const auto& cs : inst.charge_stations) {
    doc["charge_stations"].push_back({{"x_km", cs.position.x},
                                      {"y_km", cs.position.y},
                                      {"discharge_rate_kwh_per_h", cs.discharge_rate_kwh_per_h}});
  }
  doc["evs"] = json::array();
  for (const auto& ev : inst.evs) {
    doc["evs"].push_back({{"capacity_kwh", ev.capacity_kwh},
                          {"drive_kwh_per_km", ev.drive_kwh_per_km},
                          {"discharge_rate_kwh_per_h", ev.discharge_rate_kwh_per_h},
                          {"initial_battery_kwh", ev.initial_battery_kwh},
                          {"start_cs_index", ev.start_cs_index}});
  }
  return doc;
}

inline Instance instance_from_json(const nlohmann::ordered_json& doc) {
  using detail::require_number;
  if (!doc.contains("schema_version"))
    throw SchemaError("missing field schema_version");
  const int version = doc["schema_version"].get<int>();
  if (version != kInstanceSchemaVersion)
    throw SchemaError("unsupported instance schema_version " + std::to_string(version) +
                      " (expected " + std::to_string(kInstanceSchemaVersion) + ")");

  Instance inst;
  inst.horizon_h = require_number(doc, "horizon_h", "instance");
  inst.speed_kmh = require_number(doc, "speed_kmh", "instance");
  inst.alpha = require_number(doc, "alpha", "instance");
  inst.beta = require_number(doc, "beta", "instance");
  inst.gamma = require_number(doc, "gamma", "instance");
  inst.mu = require_number(doc, "mu", "instance");
  inst.coord_scale_km = require_number(doc, "coord_scale_km", "instance");
  if (!doc.contains("prep_h") || !doc.contains("cleanup_h"))
    throw SchemaError("missing field instance.prep_h / instance.cleanup_h");
  inst.prep_bs_h = require_number(doc["prep_h"], "bs", "prep_h");
  inst.prep_cs_h = require_number(doc["prep_h"], "cs", "prep_h");
  inst.cleanup_bs_h = require_number(doc["cleanup_h"], "bs", "cleanup_h");
  inst.cleanup_cs_h = require_number(doc["cleanup_h"], "cs", "cleanup_h");

  if (!doc.contains("base_stations") || !doc["base_stations"].is_array())
    throw SchemaError("missing field instance.base_stations");
  int i = 0;
  for (const auto& item : doc["base_stations"]) {
    const std::string at = "base_stations[" + std::to_string(i++) + "]";
    BaseStationSpec bs;
    bs.position = {require_number(item, "x_km", at), require_number(item, "y_km", at)};
    bs.capacity_kwh = require_number(item, "capacity_kwh", at);
    bs.consumption_kwh_per_h = require_number(item, "consumption_kwh_per_h", at);
    bs.initial_battery_kwh = require_number(item, "initial_battery_kwh", at);
    inst.base_stations.push_back(bs);
  }
  if (!doc.contains("charge_stations") || !doc["charge_stations"].is_array())
    throw SchemaError("missing field instance.charge_stations");
  int j = 0;
  for (const auto& item : doc["charge_stations"]) {
    const std::string at = "charge_stations[" + std::to_string(j++) + "]";
    ChargeStationSpec cs;
    cs.position = {require_number(item, "x_km", at), require_number(item, "y_km", at)};
    cs.discharge_rate_kwh_per_h = require_number(item, "discharge_rate_kwh_per_h", at);
    inst.charge_stations.push_back(cs);
  }
  if (!doc.contains("evs") || !doc["evs"].is_array())
    throw SchemaError("missing field instance.evs");
  int k = 0;
  for (const auto& item : doc["evs"]) {
    const std::string at = "evs[" + std::to_string(k++) + "]";
    EvSpec ev;
    ev.capacity_kwh = require_number(item, "capacity_kwh", at);
    ev.drive_kwh_per_km = require_number(item, "drive_kwh_per_km", at);
    ev.discharge_rate_kwh_per_h = require_number(item, "discharge_rate_kwh_per_h", at);
    ev.initial_battery_kwh = require_number(item, "initial_battery_kwh", at);
    if (!item.contains("start_cs_index"))
      throw SchemaError("missing field " + at + ".start_cs_index");
    ev.start_cs_index = item["start_cs_index"].get<int>();
    inst.evs.push_back(ev);
  }

  validate_instance(inst);
  return inst;
}

inline void save_instance(const Instance& inst, const std::string& path) {
  validate_instance(inst);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << instance_to_json(inst).dump(2) << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline Instance load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open instance file: " + path);
  nlohmann::ordered_json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError("instance file " + path + " is not valid JSON: " + e.what());
  }
  return instance_from_json(doc);
}

}  // namespace evrpeps

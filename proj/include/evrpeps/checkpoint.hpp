#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "evrpeps/policy_params.hpp"

namespace evrpeps {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[4] = {'E', 'V', 'P', 'C'};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  return static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

inline void put_f32(std::ostream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(out, bits);
}

inline float get_f32(std::istream& in) {
  const std::uint32_t bits = get_u32(in);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace detail

/// Versioned container: a JSON header (architecture + feature normalizers +
/// array manifest) followed by every parameter array as little-endian float32
/// in manifest order.
inline void save_checkpoint(const PolicyParams& params, const std::string& path) {
  using json = nlohmann::ordered_json;
  json header;
  header["hidden"] = params.config.hidden;
  header["layers"] = params.config.layers;
  header["heads"] = params.config.heads;
  header["logit_clip"] = params.config.logit_clip;
  header["features"] = {{"energy_ref_kwh", params.config.features.energy_ref_kwh},
                        {"rate_ref_kwh_per_h", params.config.features.rate_ref_kwh_per_h}};
  header["arrays"] = json::array();
  params.for_each_array([&](const std::string& name, const Matrix& m) {
    header["arrays"].push_back(
        {{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  params.for_each_array([&](const std::string&, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        detail::put_f32(out, static_cast<float>(m(r, c)));
  });
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw SchemaError("not a policy checkpoint: " + path);
  const std::uint32_t version = detail::get_u32(in);
  if (version != kCheckpointVersion)
    throw SchemaError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t header_len = detail::get_u32(in);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), header_len);
  if (!in) throw SchemaError("truncated checkpoint header: " + path);
  const auto header = nlohmann::ordered_json::parse(header_str);

  PolicyConfig config;
  config.hidden = header.at("hidden").get<int>();
  config.layers = header.at("layers").get<int>();
  config.heads = header.at("heads").get<int>();
  config.logit_clip = header.at("logit_clip").get<double>();
  config.features.energy_ref_kwh = header.at("features").at("energy_ref_kwh").get<double>();
  config.features.rate_ref_kwh_per_h =
      header.at("features").at("rate_ref_kwh_per_h").get<double>();

  PolicyParams params = make_policy_shell(config);
  std::size_t index = 0;
  const auto& manifest = header.at("arrays");
  params.for_each_array([&](const std::string& name, Matrix& m) {
    if (index >= manifest.size()) throw SchemaError("checkpoint manifest too short: " + path);
    const auto& entry = manifest[index++];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("rows").get<Eigen::Index>() != m.rows() ||
        entry.at("cols").get<Eigen::Index>() != m.cols())
      throw SchemaError("checkpoint array mismatch at " + name);
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = detail::get_f32(in);
  });
  if (index != manifest.size()) throw SchemaError("checkpoint manifest too long: " + path);
  if (!in) throw SchemaError("truncated checkpoint data: " + path);
  return params;
}

}  // namespace evrpeps

#pragma once

// Checkpoint container:
//
//   offset 0   8 bytes  magic "PPRGNNCK"
//   offset 8   u32 LE   format version (1)
//   offset 12  u64 LE   header length H in bytes
//   offset 20  H bytes  UTF-8 JSON header
//   offset 20+H         tensor payload
//
// The header holds {"format", "version", "dtype", "spec", "tensors", "extra"}.
// Each tensor entry is {"name", "shape": [rows, cols], "offset", "nbytes"} with
// `offset` relative to the payload start. Values are little-endian IEEE-754
// ("f64" or "f32"), row-major.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "pprgnn/error.hpp"
#include "pprgnn/model.hpp"

namespace pprgnn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'P', 'P', 'R', 'G', 'N', 'N', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json to_json(const ModelSpec& s) {
  nlohmann::json j = {
      {"layer_kind", std::string(to_string(s.layer_kind))},
      {"n_layers", s.n_layers},
      {"input_dim", s.input_dim},
      {"hidden_dim", s.hidden_dim},
      {"epsilon", s.epsilon},
      {"self_loops", s.self_loops},
      {"readout", std::string(to_string(s.readout))},
      {"n_classes", s.n_classes},
      {"w_init_scale", s.w_init_scale},
  };
  if (s.appnp_alpha) j["appnp_alpha"] = *s.appnp_alpha;
  if (s.appnp_k) j["appnp_k"] = *s.appnp_k;
  return j;
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
  ModelSpec s;
  s.layer_kind = parse_layer_kind(j.at("layer_kind").get<std::string>());
  s.n_layers = j.at("n_layers").get<std::size_t>();
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  s.epsilon = j.at("epsilon").get<double>();
  s.self_loops = j.at("self_loops").get<bool>();
  s.readout = parse_readout(j.at("readout").get<std::string>());
  s.n_classes = j.at("n_classes").get<std::size_t>();
  s.w_init_scale = j.value("w_init_scale", 1.0);
  if (j.contains("appnp_alpha")) s.appnp_alpha = j["appnp_alpha"].get<double>();
  if (j.contains("appnp_k")) s.appnp_k = j["appnp_k"].get<std::size_t>();
  s.validate();
  return s;
}

template <typename T>
constexpr const char* dtype_name() {
  static_assert(std::is_same_v<T, double> || std::is_same_v<T, float>);
  return std::is_same_v<T, double> ? "f64" : "f32";
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ModelSpec& spec,
                     const ModelState<T>& state, const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json header = {{"format", "pprgnn-checkpoint"},
                           {"version", kCheckpointVersion},
                           {"dtype", dtype_name<T>()},
                           {"spec", to_json(spec)},
                           {"extra", extra}};
  nlohmann::json tensors = nlohmann::json::array();
  std::vector<char> payload;
  state.visit([&](std::string_view name, std::size_t rows, std::size_t cols,
                  std::span<const T> values) {
    const std::size_t nbytes = values.size() * sizeof(T);
    tensors.push_back({{"name", std::string(name)},
                       {"shape", {rows, cols}},
                       {"offset", payload.size()},
                       {"nbytes", nbytes}});
    const auto* bytes = reinterpret_cast<const char*>(values.data());
    payload.insert(payload.end(), bytes, bytes + nbytes);
  });
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::uint64_t header_len = text.size();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  out.write(reinterpret_cast<const char*>(&kCheckpointVersion), sizeof(kCheckpointVersion));
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("short write to checkpoint " + path.string());
}

template <typename T>
struct Checkpoint {
  ModelSpec spec;
  ModelState<T> state;
  nlohmann::json extra;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a checkpoint file: " + path.string());
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  const auto header = nlohmann::json::parse(text);
  if (header.at("dtype").get<std::string>() != dtype_name<T>())
    throw std::runtime_error("checkpoint dtype " + header.at("dtype").get<std::string>() +
                             " does not match requested " + dtype_name<T>());
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Checkpoint<T> ck;
  ck.spec = model_spec_from_json(header.at("spec"));
  ck.extra = header.value("extra", nlohmann::json::object());
  ck.state = init_model_state<T>(ck.spec, 0);
  std::map<std::string, nlohmann::json> by_name;
  for (const auto& t : header.at("tensors")) by_name[t.at("name").get<std::string>()] = t;
  ck.state.visit([&](std::string_view name, std::size_t rows, std::size_t cols, std::span<T> dst) {
    const auto it = by_name.find(std::string(name));
    if (it == by_name.end()) throw std::runtime_error("checkpoint lacks tensor " + std::string(name));
    const auto& t = it->second;
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != rows || shape[1] != cols)
      throw std::runtime_error("checkpoint tensor " + std::string(name) + " has wrong shape");
    const auto offset = t.at("offset").get<std::size_t>();
    const auto nbytes = t.at("nbytes").get<std::size_t>();
    if (nbytes != dst.size() * sizeof(T) || offset + nbytes > payload.size())
      throw std::runtime_error("checkpoint tensor " + std::string(name) + " is truncated");
    std::memcpy(dst.data(), payload.data() + offset, nbytes);
  });
  return ck;
}

}  // namespace pprgnn

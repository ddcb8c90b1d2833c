#pragma once

// Flat experiment config: one `dotted.key = value` per line, `#` starts a
// comment. Unknown keys and malformed values raise ConfigError.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "pprgnn/data.hpp"
#include "pprgnn/error.hpp"
#include "pprgnn/model.hpp"
#include "pprgnn/training.hpp"

namespace pprgnn {

struct ExperimentConfig {
  ModelSpec model;
  TrainConfig train;
  std::size_t degree_cap = kDegreeCap;
  std::size_t jobs = 1;

  /// Model spec for a dataset: input width and class count come from the
  /// data, epsilon and self-loops from the training section.
  ModelSpec model_for(const DatasetMeta& meta) const {
    ModelSpec s = train.apply(model);
    s.input_dim = meta.feature_dim;
    s.n_classes = meta.n_classes;
    s.validate();
    return s;
  }
};

namespace detail {

template <typename N>
N parse_number(std::string_view key, std::string_view v) {
  N out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ConfigError("config key '" + std::string(key) + "': bad number '" + std::string(v) + "'");
  return out;
}

inline bool parse_flag(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + std::string(key) + "': bad flag '" + std::string(v) + "'");
}

using Setter = std::function<void(ExperimentConfig&, std::string_view key, std::string_view value)>;

template <typename N, typename Member>
Setter number(Member m) {
  return [m](ExperimentConfig& c, std::string_view k, std::string_view v) {
    std::invoke(m, c) = parse_number<N>(k, v);
  };
}

inline const std::map<std::string, Setter, std::less<>>& config_setters() {
  static const std::map<std::string, Setter, std::less<>> table = {
      {"model.layer_kind",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         try {
           c.model.layer_kind = parse_layer_kind(v);
         } catch (const ValueError& e) {
           throw ConfigError("config key '" + std::string(k) + "': " + e.what());
         }
       }},
      {"model.readout",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         try {
           c.model.readout = parse_readout(v);
         } catch (const ValueError& e) {
           throw ConfigError("config key '" + std::string(k) + "': " + e.what());
         }
       }},
      {"model.n_layers", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.model.n_layers; })},
      {"model.hidden_dim", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.model.hidden_dim; })},
      {"model.w_init_scale", number<double>([](ExperimentConfig& c) -> auto& { return c.model.w_init_scale; })},
      {"model.appnp_alpha",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.model.appnp_alpha = parse_number<double>(k, v);
       }},
      {"model.appnp_k",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.model.appnp_k = parse_number<std::size_t>(k, v);
       }},
      {"train.lr", number<double>([](ExperimentConfig& c) -> auto& { return c.train.lr; })},
      {"train.weight_decay", number<double>([](ExperimentConfig& c) -> auto& { return c.train.weight_decay; })},
      {"train.grad_clip",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         if (v == "none")
           c.train.grad_clip.reset();
         else
           c.train.grad_clip = parse_number<double>(k, v);
       }},
      {"train.epochs", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.train.epochs; })},
      {"train.batch_size", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.train.batch_size; })},
      {"train.folds", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.train.folds; })},
      {"train.plateau_patience", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.train.plateau_patience; })},
      {"train.plateau_factor", number<double>([](ExperimentConfig& c) -> auto& { return c.train.plateau_factor; })},
      {"train.seed", number<std::uint64_t>([](ExperimentConfig& c) -> auto& { return c.train.seed; })},
      {"train.tol", number<double>([](ExperimentConfig& c) -> auto& { return c.train.tol; })},
      {"train.n_terms", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.train.n_terms; })},
      {"train.epsilon", number<double>([](ExperimentConfig& c) -> auto& { return c.train.epsilon; })},
      {"train.self_loops",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.train.self_loops = parse_flag(k, v);
       }},
      {"train.max_iter", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.train.max_iter; })},
      {"train.checkpointing",
       [](ExperimentConfig& c, std::string_view k, std::string_view v) {
         c.train.checkpointing = parse_flag(k, v);
       }},
      {"train.adam_beta1", number<double>([](ExperimentConfig& c) -> auto& { return c.train.adam_beta1; })},
      {"train.adam_beta2", number<double>([](ExperimentConfig& c) -> auto& { return c.train.adam_beta2; })},
      {"train.adam_eps", number<double>([](ExperimentConfig& c) -> auto& { return c.train.adam_eps; })},
      {"train.jobs", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.jobs; })},
      {"data.degree_cap", number<std::size_t>([](ExperimentConfig& c) -> auto& { return c.degree_cap; })},
  };
  return table;
}

/// Shortest text that parses back to the same double.
inline std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace detail

/// Applies one `key = value` assignment. Used for config lines and CLI overrides.
inline void set_config_value(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  const auto& table = detail::config_setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second(cfg, key, value);
}

inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig cfg = {}) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");
    set_config_value(cfg, key, value);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Checks every range constraint; raises ConfigError.
inline void validate_config(const ExperimentConfig& cfg) {
  try {
    cfg.train.validate();
    if (cfg.model.layer_kind == LayerKind::appnp)
      detail::require(cfg.model.appnp_alpha && cfg.model.appnp_k,
                      "appnp layers need model.appnp_alpha and model.appnp_k");
    detail::require(cfg.model.n_layers >= 1 && cfg.model.hidden_dim >= 1,
                    "model.n_layers and model.hidden_dim must be >= 1");
    detail::require(cfg.jobs >= 1, "train.jobs must be >= 1");
  } catch (const ValueError& e) {
    throw ConfigError(e.what());
  }
}

/// Serializes back into the same flat format; parse_config(to_config_text(c)) == c.
inline std::string to_config_text(const ExperimentConfig& c) {
  std::ostringstream o;
  o << "model.layer_kind = " << to_string(c.model.layer_kind) << '\n'
    << "model.readout = " << to_string(c.model.readout) << '\n'
    << "model.n_layers = " << c.model.n_layers << '\n'
    << "model.hidden_dim = " << c.model.hidden_dim << '\n'
    << "model.w_init_scale = " << detail::shortest(c.model.w_init_scale) << '\n';
  if (c.model.appnp_alpha) o << "model.appnp_alpha = " << detail::shortest(*c.model.appnp_alpha) << '\n';
  if (c.model.appnp_k) o << "model.appnp_k = " << *c.model.appnp_k << '\n';
  o << "train.lr = " << detail::shortest(c.train.lr) << '\n'
    << "train.weight_decay = " << detail::shortest(c.train.weight_decay) << '\n'
    << "train.grad_clip = ";
  if (c.train.grad_clip)
    o << detail::shortest(*c.train.grad_clip) << '\n';
  else
    o << "none\n";
  o << "train.epochs = " << c.train.epochs << '\n'
    << "train.batch_size = " << c.train.batch_size << '\n'
    << "train.folds = " << c.train.folds << '\n'
    << "train.plateau_patience = " << c.train.plateau_patience << '\n'
    << "train.plateau_factor = " << detail::shortest(c.train.plateau_factor) << '\n'
    << "train.seed = " << c.train.seed << '\n'
    << "train.tol = " << detail::shortest(c.train.tol) << '\n'
    << "train.n_terms = " << c.train.n_terms << '\n'
    << "train.epsilon = " << detail::shortest(c.train.epsilon) << '\n'
    << "train.self_loops = " << (c.train.self_loops ? "true" : "false") << '\n'
    << "train.max_iter = " << c.train.max_iter << '\n'
    << "train.checkpointing = " << (c.train.checkpointing ? "true" : "false") << '\n'
    << "train.adam_beta1 = " << detail::shortest(c.train.adam_beta1) << '\n'
    << "train.adam_beta2 = " << detail::shortest(c.train.adam_beta2) << '\n'
    << "train.adam_eps = " << detail::shortest(c.train.adam_eps) << '\n'
    << "train.jobs = " << c.jobs << '\n'
    << "data.degree_cap = " << c.degree_cap << '\n';
  return o.str();
}

}  // namespace pprgnn

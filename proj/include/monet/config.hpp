#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "monet/datasets.hpp"
#include "monet/error.hpp"
#include "monet/model.hpp"
#include "monet/training.hpp"

namespace monet {

/// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  for (int prec = 6; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, x);
    if (std::strtod(buf, nullptr) == x) break;
  }
  return buf;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline double parse_double(const std::string& key, const std::string& value) {
  char* end = nullptr;
  const double x = std::strtod(value.c_str(), &end);
  if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(x)) {
    throw ConfigError(key + ": '" + value + "' is not a finite number");
  }
  return x;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t x = 0;
  if (!parse_int(value, x)) throw ConfigError(key + ": '" + value + "' is not a non-negative integer");
  return x;
}

inline bool parse_switch(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1" || value == "yes") return true;
  if (value == "off" || value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected on/off, got '" + value + "'");
}

}  // namespace detail

/// Flat `key = value` lines; `#` starts a comment line.
inline std::vector<std::pair<std::string, std::string>> parse_kv(std::istream& in,
                                                                 const std::string& what) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(what + ": expected key = value", line_no);
    std::string key = detail::trim(std::string_view(line).substr(0, eq));
    std::string value = detail::trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ParseError(what + ": empty key", line_no);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

/// Applies one hyperparameter key; returns false if the key is not a
/// hyperparameter.
inline bool set_hyperparam(HyperParams& hp, const std::string& key, const std::string& value) {
  if (key == "d") {
    hp.d = detail::parse_unsigned(key, value);
  } else if (key == "layers") {
    hp.layers = detail::parse_unsigned(key, value);
  } else if (key == "alpha") {
    hp.alpha = detail::parse_double(key, value);
  } else if (key == "beta") {
    hp.beta = detail::parse_double(key, value);
  } else if (key == "lambda") {
    hp.lambda = detail::parse_double(key, value);
  } else if (key == "propagation") {
    if (value == "linear") hp.propagation = Propagation::Linear;
    else if (value == "nonlinear") hp.propagation = Propagation::Nonlinear;
    else throw ConfigError("propagation: expected linear|nonlinear, got '" + value + "'");
  } else if (key == "self_connection") {
    hp.self_connection = detail::parse_switch(key, value);
  } else if (key == "layer_aggregation") {
    if (value == "last") hp.aggregation = LayerAggregation::Last;
    else if (value == "mean" || value == "mean_combination") hp.aggregation = LayerAggregation::Mean;
    else throw ConfigError("layer_aggregation: expected last|mean, got '" + value + "'");
  } else if (key == "attention") {
    hp.attention = detail::parse_switch(key, value);
  } else if (key == "mask_target_history") {
    hp.mask_target_history = detail::parse_switch(key, value);
  } else {
    return false;
  }
  return true;
}

inline std::vector<std::pair<std::string, std::string>> hyperparam_entries(const HyperParams& hp) {
  return {
      {"d", std::to_string(hp.d)},
      {"layers", std::to_string(hp.layers)},
      {"alpha", format_double(hp.alpha)},
      {"beta", format_double(hp.beta)},
      {"lambda", format_double(hp.lambda)},
      {"propagation", hp.propagation == Propagation::Linear ? "linear" : "nonlinear"},
      {"self_connection", hp.self_connection ? "on" : "off"},
      {"layer_aggregation", hp.aggregation == LayerAggregation::Last ? "last" : "mean"},
      {"attention", hp.attention ? "on" : "off"},
      {"mask_target_history", hp.mask_target_history ? "on" : "off"},
  };
}

struct RunConfig {
  std::filesystem::path interactions;
  std::filesystem::path textual;
  std::filesystem::path visual;
  std::filesystem::path item_list;
  std::filesystem::path data_dir;  // prepared artifacts; defaults to out_dir
  std::filesystem::path out_dir = "monet_out";
  HyperParams hp;
  TrainConfig tc;
  std::string variant = "default";
  std::size_t k_core = 5;
  std::size_t cutoff = 20;
  std::uint64_t seed = 0;
  std::string avg_diff_mode = "auto";  // auto | exact | sampled
  std::size_t avg_diff_samples = 100000;
  std::string similarity_mode = "exact";  // exact | sampled
  std::size_t similarity_samples = kDefaultNegativeSample;

  std::filesystem::path data() const { return data_dir.empty() ? out_dir : data_dir; }

  /// Hyperparameters with the variant preset applied.
  HyperParams effective_hp() const { return apply_variant(hp, variant); }

  TrainConfig effective_tc() const {
    TrainConfig t = tc;
    t.seed = seed;
    t.cutoff = cutoff;
    return t;
  }

  void set(const std::string& key, const std::string& value) {
    if (set_hyperparam(hp, key, value)) return;
    if (key == "interactions") interactions = value;
    else if (key == "textual") textual = value;
    else if (key == "visual") visual = value;
    else if (key == "item_list") item_list = value;
    else if (key == "data") data_dir = value;
    else if (key == "out") out_dir = value;
    else if (key == "variant") variant = value;
    else if (key == "learning_rate" || key == "lr") tc.learning_rate = detail::parse_double(key, value);
    else if (key == "batch_size") tc.batch_size = detail::parse_unsigned(key, value);
    else if (key == "max_epochs" || key == "epochs") tc.max_epochs = detail::parse_unsigned(key, value);
    else if (key == "patience") tc.patience = detail::parse_unsigned(key, value);
    else if (key == "eval_every") tc.eval_every = detail::parse_unsigned(key, value);
    else if (key == "k_core") k_core = detail::parse_unsigned(key, value);
    else if (key == "cutoff" || key == "n") cutoff = detail::parse_unsigned(key, value);
    else if (key == "seed") seed = detail::parse_unsigned(key, value);
    else if (key == "avg_diff_mode") avg_diff_mode = value;
    else if (key == "avg_diff_samples") avg_diff_samples = detail::parse_unsigned(key, value);
    else if (key == "similarity_mode") similarity_mode = value;
    else if (key == "similarity_samples") similarity_samples = detail::parse_unsigned(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }

  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path.string());
    for (const auto& [k, v] : parse_kv(in, path.string())) set(k, v);
  }

  void validate() const {
    effective_hp().validate();
    effective_tc().validate();
    if (k_core < 1) throw ConfigError("k_core must be >= 1");
    if (avg_diff_mode != "auto" && avg_diff_mode != "exact" && avg_diff_mode != "sampled") {
      throw ConfigError("avg_diff_mode: expected auto|exact|sampled");
    }
    if (avg_diff_mode != "exact" && avg_diff_samples == 0) {
      throw ConfigError("avg_diff_samples must be positive");
    }
    if (similarity_mode != "exact" && similarity_mode != "sampled") {
      throw ConfigError("similarity_mode: expected exact|sampled");
    }
    if (similarity_mode == "sampled" && similarity_samples == 0) {
      throw ConfigError("similarity_samples must be positive");
    }
  }

  /// Items above which `auto` switches avg.diff to sampling.
  static constexpr std::size_t kExactAvgDiffLimit = 4000;

  SampleMode avg_diff_sample_mode(std::size_t num_items) const {
    const bool exact = avg_diff_mode == "exact" ||
                       (avg_diff_mode == "auto" && num_items <= kExactAvgDiffLimit);
    return exact ? SampleMode::exact_mode() : SampleMode::sampled(avg_diff_samples, seed);
  }

  SampleMode similarity_sample_mode() const {
    return similarity_mode == "exact" ? SampleMode::exact_mode()
                                      : SampleMode::sampled(similarity_samples, seed);
  }
};

}  // namespace monet

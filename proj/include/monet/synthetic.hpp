#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "monet/config.hpp"
#include "monet/datasets.hpp"
#include "monet/error.hpp"
#include "monet/linalg.hpp"
#include "monet/mmfv.hpp"
#include "monet/rng.hpp"

namespace monet {

/// Planted-preference generator: items belong to latent clusters whose
/// centres shape both modality features; each user favours one cluster.
struct SyntheticSpec {
  std::size_t users = 200;
  std::size_t items = 100;
  std::size_t dim = 16;
  std::uint64_t seed = 0;
  std::size_t clusters = 5;
  std::size_t min_per_user = 10;
  std::size_t max_per_user = 20;
  double affinity = 0.85;  // probability an interaction falls in the favoured cluster
  double noise = 1.0;      // feature noise norm relative to the unit cluster centre
  bool null_features = false;  // features carry no cluster signal

  void validate() const {
    if (users < 1 || items < 2 || dim < 1) throw ConfigError("synthetic: users, items, dim too small");
    if (clusters < 1 || clusters > items) throw ConfigError("synthetic: clusters must be in [1, items]");
    if (min_per_user < 1 || min_per_user > max_per_user || max_per_user > items) {
      throw ConfigError("synthetic: need 1 <= min_per_user <= max_per_user <= items");
    }
    if (!(affinity >= 0.0 && affinity <= 1.0)) throw ConfigError("synthetic: affinity in [0,1]");
    if (!(noise >= 0.0)) throw ConfigError("synthetic: noise must be >= 0");
  }
};

/// Parses "users=U items=I dim=D seed=S [clusters=C ...]"; separators may
/// be spaces or commas.
inline SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec spec;
  std::string normalized = text;
  for (auto& ch : normalized) {
    if (ch == ',') ch = ' ';
  }
  std::istringstream in(normalized);
  for (std::string tok; in >> tok;) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("synthetic: expected key=value, got '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string value = tok.substr(eq + 1);
    if (key == "users") spec.users = detail::parse_unsigned(key, value);
    else if (key == "items") spec.items = detail::parse_unsigned(key, value);
    else if (key == "dim") spec.dim = detail::parse_unsigned(key, value);
    else if (key == "seed") spec.seed = detail::parse_unsigned(key, value);
    else if (key == "clusters") spec.clusters = detail::parse_unsigned(key, value);
    else if (key == "min_per_user") spec.min_per_user = detail::parse_unsigned(key, value);
    else if (key == "max_per_user") spec.max_per_user = detail::parse_unsigned(key, value);
    else if (key == "affinity") spec.affinity = detail::parse_double(key, value);
    else if (key == "noise") spec.noise = detail::parse_double(key, value);
    else if (key == "null") spec.null_features = detail::parse_switch(key, value);
    else throw ConfigError("synthetic: unknown key '" + key + "'");
  }
  spec.validate();
  return spec;
}

struct SyntheticData {
  std::vector<RawInteraction> interactions;
  std::vector<std::string> item_ids;  // row order of the feature matrices
  std::vector<std::size_t> item_cluster;
  std::vector<std::size_t> user_cluster;
  Matrix<float> textual;
  Matrix<float> visual;
};

inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData data;
  const auto n_items = static_cast<Index>(spec.items);
  const auto dim = static_cast<Index>(spec.dim);
  data.item_cluster.resize(spec.items);
  for (std::size_t i = 0; i < spec.items; ++i) {
    data.item_cluster[i] = i % spec.clusters;
    data.item_ids.push_back("i" + std::to_string(i));
  }
  std::vector<std::vector<std::uint32_t>> members(spec.clusters);
  for (std::size_t i = 0; i < spec.items; ++i) {
    members[data.item_cluster[i]].push_back(static_cast<std::uint32_t>(i));
  }

  for (int m = 0; m < 2; ++m) {
    Rng rng(derive_seed(spec.seed, 0xFEA7 + static_cast<std::uint64_t>(m)));
    Matrix<double> centers(static_cast<Index>(spec.clusters), dim);
    for (Index k = 0; k < centers.size(); ++k) centers.data()[k] = rng.normal();
    for (Index c = 0; c < centers.rows(); ++c) centers.row(c).normalize();
    Matrix<float> feats(n_items, dim);
    const double scale = spec.noise / std::sqrt(static_cast<double>(spec.dim));
    for (Index i = 0; i < n_items; ++i) {
      for (Index j = 0; j < dim; ++j) {
        double x = scale * rng.normal();
        if (!spec.null_features) x += centers(static_cast<Index>(data.item_cluster[i]), j);
        feats(i, j) = static_cast<float>(x);
      }
    }
    (m == 0 ? data.textual : data.visual) = std::move(feats);
  }

  Rng rng(derive_seed(spec.seed, 0x05E45));
  data.user_cluster.resize(spec.users);
  for (std::size_t u = 0; u < spec.users; ++u) {
    const std::size_t fav = rng.below(spec.clusters);
    data.user_cluster[u] = fav;
    const std::size_t count =
        spec.min_per_user + rng.below(spec.max_per_user - spec.min_per_user + 1);
    std::unordered_set<std::uint32_t> chosen;
    std::vector<std::uint32_t> order;
    while (order.size() < count) {
      std::uint32_t item;
      if (rng.uniform() < spec.affinity) {
        const auto& pool = members[fav];
        item = pool[rng.below(pool.size())];
      } else {
        item = static_cast<std::uint32_t>(rng.below(spec.items));
      }
      if (chosen.insert(item).second) order.push_back(item);
      // A saturated favourite cluster falls back to uniform draws.
      if (chosen.size() >= members[fav].size() && spec.affinity >= 1.0 && order.size() < count) {
        for (std::uint32_t i = 0; i < spec.items && order.size() < count; ++i) {
          if (chosen.insert(i).second) order.push_back(i);
        }
      }
    }
    for (const auto i : order) {
      data.interactions.push_back({"u" + std::to_string(u), data.item_ids[i], std::nullopt});
    }
  }
  return data;
}

inline constexpr const char* kSyntheticInteractions = "interactions.tsv";
inline constexpr const char* kSyntheticItems = "items.txt";
inline constexpr const char* kSyntheticTextual = "textual.mmfv";
inline constexpr const char* kSyntheticVisual = "visual.mmfv";

inline void write_synthetic(const std::filesystem::path& dir, const SyntheticData& data) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / kSyntheticInteractions, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / kSyntheticInteractions).string());
    out << "# user\titem\n";
    for (const auto& r : data.interactions) out << r.user << '\t' << r.item << '\n';
  }
  {
    std::ofstream out(dir / kSyntheticItems, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / kSyntheticItems).string());
    for (const auto& id : data.item_ids) out << id << '\n';
  }
  mmfv::write_file(dir / kSyntheticTextual, data.textual);
  mmfv::write_file(dir / kSyntheticVisual, data.visual);
}

}  // namespace monet

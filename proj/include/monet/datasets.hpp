#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "monet/error.hpp"
#include "monet/linalg.hpp"
#include "monet/mmfv.hpp"
#include "monet/rng.hpp"

namespace monet {

enum class Modality : int { Textual = 0, Visual = 1 };

inline constexpr std::array<Modality, 2> kModalities{Modality::Textual, Modality::Visual};

inline const char* modality_suffix(Modality m) { return m == Modality::Textual ? "t" : "v"; }

inline const char* modality_name(Modality m) {
  return m == Modality::Textual ? "textual" : "visual";
}

struct RawInteraction {
  std::string user;
  std::string item;
  std::optional<std::int64_t> timestamp;

  bool operator==(const RawInteraction&) const = default;
};

/// A dense-index (user, item) pair.
struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;

  auto operator<=>(const Interaction&) const = default;
};

struct InteractionKeyHash {
  std::size_t operator()(const std::pair<std::string, std::string>& p) const noexcept {
    const std::size_t h1 = std::hash<std::string>{}(p.first);
    const std::size_t h2 = std::hash<std::string>{}(p.second);
    return h1 ^ (h2 + 0x9E3779B97F4A7C15ULL + (h1 << 6) + (h1 >> 2));
  }
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

template <class Int>
bool parse_int(std::string_view s, Int& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline std::string_view chomp(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace detail

/// Parses `user <TAB> item [<TAB> timestamp]` lines. `#` lines and blank
/// lines are skipped. Duplicate (user, item) pairs keep the first occurrence.
inline std::vector<RawInteraction> parse_interactions(std::istream& in) {
  std::vector<RawInteraction> rows;
  std::unordered_set<std::pair<std::string, std::string>, InteractionKeyHash> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = detail::chomp(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto fields = detail::split_tabs(line);
    if (fields.size() < 2 || fields.size() > 3) {
      throw ParseError("expected 2 or 3 tab-separated fields, got " +
                           std::to_string(fields.size()),
                       line_no);
    }
    if (fields[0].empty() || fields[1].empty()) {
      throw ParseError("empty user or item id", line_no);
    }
    RawInteraction row{std::string(fields[0]), std::string(fields[1]), std::nullopt};
    if (fields.size() == 3) {
      std::int64_t ts = 0;
      if (!detail::parse_int(fields[2], ts)) {
        throw ParseError("timestamp is not an integer", line_no);
      }
      row.timestamp = ts;
    }
    if (seen.emplace(row.user, row.item).second) rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("interaction file contains no interactions");
  return rows;
}

inline std::vector<RawInteraction> load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open interactions: " + path.string());
  try {
    return parse_interactions(in);
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e);
  }
}

/// Iteratively drops users and items with fewer than k interactions until
/// every survivor has at least k. Survivors keep their input order.
inline std::vector<RawInteraction> kcore_filter(std::vector<RawInteraction> rows, std::size_t k) {
  if (k < 1) throw ConfigError("k-core requires k >= 1");
  {
    std::unordered_set<std::pair<std::string, std::string>, InteractionKeyHash> seen;
    std::erase_if(rows, [&](const RawInteraction& r) { return !seen.emplace(r.user, r.item).second; });
  }
  while (true) {
    std::unordered_map<std::string, std::size_t> user_deg, item_deg;
    for (const auto& r : rows) {
      ++user_deg[r.user];
      ++item_deg[r.item];
    }
    const std::size_t before = rows.size();
    std::erase_if(rows, [&](const RawInteraction& r) {
      return user_deg[r.user] < k || item_deg[r.item] < k;
    });
    if (rows.size() == before) break;
  }
  if (rows.empty()) throw DataError("k-core is empty");
  return rows;
}

/// Bijection between raw string ids and dense indices, in first-seen order.
class IdMap {
 public:
  std::uint32_t intern(const std::string& raw) {
    const auto [it, inserted] = index_.emplace(raw, static_cast<std::uint32_t>(ids_.size()));
    if (inserted) ids_.push_back(raw);
    return it->second;
  }

  std::optional<std::uint32_t> find(const std::string& raw) const {
    const auto it = index_.find(raw);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& raw(std::uint32_t index) const { return ids_.at(index); }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  bool operator==(const IdMap& other) const { return ids_ == other.ids_; }

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct InteractionDataset {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::vector<Interaction> train;
  std::vector<Interaction> validation;
  std::vector<Interaction> test;
  IdMap user_ids;
  IdMap item_ids;

  /// train ∪ validation ∪ test, i.e. the filtered log.
  std::vector<Interaction> all_interactions() const {
    std::vector<Interaction> all;
    all.reserve(train.size() + validation.size() + test.size());
    all.insert(all.end(), train.begin(), train.end());
    all.insert(all.end(), validation.begin(), validation.end());
    all.insert(all.end(), test.begin(), test.end());
    return all;
  }

  std::size_t num_interactions() const { return train.size() + validation.size() + test.size(); }
};

/// Per-user item lists for one partition, indexed by user.
inline std::vector<std::vector<std::uint32_t>> items_by_user(
    std::size_t num_users, const std::vector<Interaction>& pairs) {
  std::vector<std::vector<std::uint32_t>> out(num_users);
  for (const auto& p : pairs) out[p.user].push_back(p.item);
  for (auto& items : out) std::sort(items.begin(), items.end());
  return out;
}

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

/// Per-user seeded split with floor rounding and a train minimum of one.
/// Validation/test interactions whose item never occurs in train are moved
/// into train; the user's last-shuffled train interaction whose item stays
/// covered is demoted into the vacated partition.
inline InteractionDataset split_dataset(const std::vector<RawInteraction>& rows,
                                        SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.validation < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  InteractionDataset ds;
  std::vector<std::vector<std::uint32_t>> per_user;
  for (const auto& r : rows) {
    const std::uint32_t u = ds.user_ids.intern(r.user);
    const std::uint32_t i = ds.item_ids.intern(r.item);
    if (u >= per_user.size()) per_user.resize(u + 1);
    per_user[u].push_back(i);
  }
  ds.num_users = ds.user_ids.size();
  ds.num_items = ds.item_ids.size();
  if (ds.num_users == 0) throw DataError("no interactions to split");

  // Per-user partitions in shuffled order: 0 train, 1 validation, 2 test.
  std::vector<std::array<std::vector<std::uint32_t>, 3>> parts(ds.num_users);
  std::vector<std::size_t> train_count(ds.num_items, 0);
  for (std::uint32_t u = 0; u < ds.num_users; ++u) {
    auto items = per_user[u];
    {
      std::unordered_set<std::uint32_t> uniq;
      std::erase_if(items, [&](std::uint32_t i) { return !uniq.insert(i).second; });
    }
    Rng rng(derive_seed(seed, u));
    rng.shuffle(std::span<std::uint32_t>(items));
    const std::size_t n = items.size();
    const auto floor_count = [n](double r) {
      return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
    };
    const std::size_t n_train = std::min(n, std::max<std::size_t>(1, floor_count(ratios.train)));
    const std::size_t n_val = std::min(n - n_train, floor_count(ratios.validation));
    parts[u][0].assign(items.begin(), items.begin() + static_cast<Index>(n_train));
    parts[u][1].assign(items.begin() + static_cast<Index>(n_train),
                       items.begin() + static_cast<Index>(n_train + n_val));
    parts[u][2].assign(items.begin() + static_cast<Index>(n_train + n_val), items.end());
    for (const auto i : parts[u][0]) ++train_count[i];
  }

  for (std::uint32_t u = 0; u < ds.num_users; ++u) {
    for (int p = 1; p <= 2; ++p) {
      auto& held = parts[u][p];
      for (std::size_t k = 0; k < held.size(); ++k) {
        const std::uint32_t item = held[k];
        if (train_count[item] > 0) continue;
        auto& tr = parts[u][0];
        tr.push_back(item);
        ++train_count[item];
        held.erase(held.begin() + static_cast<Index>(k));
        // Demote the last-shuffled train interaction that keeps coverage;
        // the newly promoted one sits at the back and is skipped.
        bool demoted = false;
        for (std::size_t back = tr.size() - 1; back-- > 0;) {
          if (train_count[tr[back]] >= 2) {
            --train_count[tr[back]];
            held.insert(held.begin() + static_cast<Index>(k), tr[back]);
            tr.erase(tr.begin() + static_cast<Index>(back));
            demoted = true;
            break;
          }
        }
        // Without a demotion, slot k now holds the next unchecked item.
        if (!demoted) --k;
      }
    }
  }

  for (std::uint32_t u = 0; u < ds.num_users; ++u) {
    for (const auto i : parts[u][0]) ds.train.push_back({u, i});
    for (const auto i : parts[u][1]) ds.validation.push_back({u, i});
    for (const auto i : parts[u][2]) ds.test.push_back({u, i});
  }
  return ds;
}

struct DatasetStats {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t interactions = 0;
  double sparsity = 0.0;
};

inline DatasetStats dataset_stats(const InteractionDataset& ds) {
  DatasetStats s{ds.num_users, ds.num_items, ds.num_interactions(), 0.0};
  s.sparsity = 1.0 - static_cast<double>(s.interactions) /
                         (static_cast<double>(s.users) * static_cast<double>(s.items));
  return s;
}

struct ModalityFeatureMatrix {
  Modality modality = Modality::Textual;
  Matrix<float> values;

  std::size_t num_items() const { return static_cast<std::size_t>(values.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
};

inline void validate_features(const ModalityFeatureMatrix& f, std::size_t expected_items,
                              const std::string& what) {
  if (f.num_items() != expected_items) {
    throw DataError(what + ": row count " + std::to_string(f.num_items()) +
                    " does not match " + std::to_string(expected_items) + " items");
  }
  if (f.dim() == 0) throw DataError(what + ": zero feature dimension");
  for (Index r = 0; r < f.values.rows(); ++r) {
    bool nonzero = false;
    for (Index c = 0; c < f.values.cols(); ++c) {
      const float x = f.values(r, c);
      if (!std::isfinite(x)) {
        throw DataError(what + ": non-finite entry at item " + std::to_string(r));
      }
      nonzero = nonzero || x != 0.0f;
    }
    if (!nonzero) throw DataError(what + ": all-zero feature row at item " + std::to_string(r));
  }
}

inline void write_features(const std::filesystem::path& path, const ModalityFeatureMatrix& f) {
  mmfv::write_file(path, f.values);
}

inline ModalityFeatureMatrix load_features(const std::filesystem::path& path,
                                           std::size_t expected_items,
                                           Modality modality = Modality::Textual) {
  ModalityFeatureMatrix f{modality, mmfv::read_file(path)};
  validate_features(f, expected_items, path.string());
  return f;
}

/// Reorders raw feature rows (one per entry of `raw_item_order`) into the
/// dense item order of `item_ids`. Rows for items dropped by filtering are
/// discarded.
inline ModalityFeatureMatrix align_features(const Matrix<float>& raw,
                                            const std::vector<std::string>& raw_item_order,
                                            const IdMap& item_ids, Modality modality) {
  if (static_cast<std::size_t>(raw.rows()) != raw_item_order.size()) {
    throw DataError(std::string(modality_name(modality)) + " features: " +
                    std::to_string(raw.rows()) + " rows but item list has " +
                    std::to_string(raw_item_order.size()) + " entries");
  }
  std::unordered_map<std::string, Index> row_of;
  for (std::size_t r = 0; r < raw_item_order.size(); ++r) {
    row_of.emplace(raw_item_order[r], static_cast<Index>(r));
  }
  ModalityFeatureMatrix out{modality, Matrix<float>(static_cast<Index>(item_ids.size()), raw.cols())};
  for (std::uint32_t i = 0; i < item_ids.size(); ++i) {
    const auto it = row_of.find(item_ids.raw(i));
    if (it == row_of.end()) {
      throw DataError(std::string(modality_name(modality)) + " features: no row for item '" +
                      item_ids.raw(i) + "'");
    }
    out.values.row(i) = raw.row(it->second);
  }
  return out;
}

inline std::vector<std::string> load_item_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open item list: " + path.string());
  std::vector<std::string> ids;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = detail::chomp(raw);
    if (line.empty() || line.front() == '#') continue;
    ids.emplace_back(detail::split_tabs(line).front());
  }
  return ids;
}

// Prepared artifacts ------------------------------------------------------

inline constexpr const char* kUserIdsFile = "user_ids.tsv";
inline constexpr const char* kItemIdsFile = "item_ids.tsv";
inline constexpr const char* kTrainFile = "train.tsv";
inline constexpr const char* kValidationFile = "val.tsv";
inline constexpr const char* kTestFile = "test.tsv";

namespace detail {

inline void write_id_map(const std::filesystem::path& path, const IdMap& ids) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (std::uint32_t k = 0; k < ids.size(); ++k) out << ids.raw(k) << '\t' << k << '\n';
}

inline void write_pairs(const std::filesystem::path& path, const std::vector<Interaction>& pairs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) out << p.user << '\t' << p.item << '\n';
}

inline IdMap read_id_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  IdMap ids;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto fields = split_tabs(chomp(raw));
    std::uint32_t index = 0;
    if (fields.size() != 2 || fields[0].empty() || !parse_int(fields[1], index)) {
      throw ParseError(path.string() + ": malformed id map line", line_no);
    }
    if (ids.intern(std::string(fields[0])) != index) {
      throw ParseError(path.string() + ": id map indices must be dense and ordered", line_no);
    }
  }
  return ids;
}

inline std::vector<Interaction> read_pairs(const std::filesystem::path& path, std::size_t users,
                                           std::size_t items) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Interaction> pairs;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = chomp(raw);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    Interaction p;
    if (fields.size() != 2 || !parse_int(fields[0], p.user) || !parse_int(fields[1], p.item)) {
      throw ParseError(path.string() + ": malformed index pair", line_no);
    }
    if (p.user >= users || p.item >= items) {
      throw DataError(path.string() + ": index out of range at line " + std::to_string(line_no));
    }
    pairs.push_back(p);
  }
  return pairs;
}

}  // namespace detail

inline void write_prepared(const std::filesystem::path& dir, const InteractionDataset& ds) {
  std::filesystem::create_directories(dir);
  detail::write_id_map(dir / kUserIdsFile, ds.user_ids);
  detail::write_id_map(dir / kItemIdsFile, ds.item_ids);
  detail::write_pairs(dir / kTrainFile, ds.train);
  detail::write_pairs(dir / kValidationFile, ds.validation);
  detail::write_pairs(dir / kTestFile, ds.test);
}

inline InteractionDataset read_prepared(const std::filesystem::path& dir) {
  InteractionDataset ds;
  ds.user_ids = detail::read_id_map(dir / kUserIdsFile);
  ds.item_ids = detail::read_id_map(dir / kItemIdsFile);
  ds.num_users = ds.user_ids.size();
  ds.num_items = ds.item_ids.size();
  ds.train = detail::read_pairs(dir / kTrainFile, ds.num_users, ds.num_items);
  ds.validation = detail::read_pairs(dir / kValidationFile, ds.num_users, ds.num_items);
  ds.test = detail::read_pairs(dir / kTestFile, ds.num_users, ds.num_items);
  return ds;
}

}  // namespace monet

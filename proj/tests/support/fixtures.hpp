#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "monet/monet.hpp"

namespace fixture {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("monet_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline monet::RawInteraction raw(const std::string& u, const std::string& i) {
  return {u, i, std::nullopt};
}

/// Tiny prepared dataset built directly from index pairs.
inline monet::InteractionDataset dataset(std::size_t users, std::size_t items,
                                         std::vector<monet::Interaction> train,
                                         std::vector<monet::Interaction> validation = {},
                                         std::vector<monet::Interaction> test = {}) {
  monet::InteractionDataset ds;
  ds.num_users = users;
  ds.num_items = items;
  ds.train = std::move(train);
  ds.validation = std::move(validation);
  ds.test = std::move(test);
  for (std::size_t u = 0; u < users; ++u) ds.user_ids.intern("u" + std::to_string(u));
  for (std::size_t i = 0; i < items; ++i) ds.item_ids.intern("i" + std::to_string(i));
  return ds;
}

inline monet::Matrix<double> random_matrix(monet::Index rows, monet::Index cols, monet::Rng& rng) {
  monet::Matrix<double> m(rows, cols);
  for (monet::Index k = 0; k < m.size(); ++k) m.data()[k] = rng.normal();
  return m;
}

}  // namespace fixture

#pragma once

// Checkpoint layout: a UTF-8 header of `key = value` lines opened by
// "MONET-CHECKPOINT 1" and closed by "end", followed by one MMFV block per
// parameter group in the order listed under `groups`.

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "monet/config.hpp"
#include "monet/error.hpp"
#include "monet/mmfv.hpp"
#include "monet/model.hpp"

namespace monet {

inline constexpr const char* kCheckpointMagic = "MONET-CHECKPOINT 1";

struct Checkpoint {
  HyperParams hp;
  std::uint64_t seed = 0;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::array<std::size_t, 2> feature_dims{};
  std::size_t best_epoch = 0;
  ModelParameters<float> params;
};

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::ostringstream out(std::ios::binary);
  out << kCheckpointMagic << '\n';
  for (const auto& [k, v] : hyperparam_entries(ck.hp)) out << k << " = " << v << '\n';
  out << "seed = " << ck.seed << '\n';
  out << "num_users = " << ck.num_users << '\n';
  out << "num_items = " << ck.num_items << '\n';
  out << "dim_t = " << ck.feature_dims[0] << '\n';
  out << "dim_v = " << ck.feature_dims[1] << '\n';
  out << "best_epoch = " << ck.best_epoch << '\n';
  std::string groups;
  ck.params.for_each_group([&](const std::string& name, const Matrix<float>&) {
    if (!groups.empty()) groups += ' ';
    groups += name;
  });
  out << "groups = " << groups << '\n';
  out << "end\n";
  ck.params.for_each_group([&](const std::string&, const Matrix<float>& m) { mmfv::write(out, m); });
  return out.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::string bytes = serialize_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("checkpoint write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) {
    throw DataError(path.string() + ": bad checkpoint magic");
  }
  std::map<std::string, std::string> header;
  std::size_t line_no = 1;
  bool closed = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line == "end") {
      closed = true;
      break;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError(path.string() + ": bad header line", line_no);
    header[line.substr(0, eq)] = line.substr(eq + 3);
  }
  if (!closed) throw DataError(path.string() + ": truncated checkpoint header");

  Checkpoint ck;
  const auto take = [&](const std::string& key) -> const std::string& {
    const auto it = header.find(key);
    if (it == header.end()) throw DataError(path.string() + ": header lacks '" + key + "'");
    return it->second;
  };
  for (const auto& [k, v] : hyperparam_entries(HyperParams{})) {
    (void)v;
    set_hyperparam(ck.hp, k, take(k));
  }
  ck.seed = detail::parse_unsigned("seed", take("seed"));
  ck.num_users = detail::parse_unsigned("num_users", take("num_users"));
  ck.num_items = detail::parse_unsigned("num_items", take("num_items"));
  ck.feature_dims[0] = detail::parse_unsigned("dim_t", take("dim_t"));
  ck.feature_dims[1] = detail::parse_unsigned("dim_v", take("dim_v"));
  ck.best_epoch = detail::parse_unsigned("best_epoch", take("best_epoch"));

  // Build the expected layout and read each block into it.
  ck.params = init_parameters<float>(ck.hp, ck.feature_dims, ck.num_users, ck.num_items, 0);
  std::vector<std::string> expected;
  ck.params.for_each_group(
      [&](const std::string& name, const Matrix<float>&) { expected.push_back(name); });
  std::istringstream names(take("groups"));
  std::vector<std::string> listed;
  for (std::string n; names >> n;) listed.push_back(n);
  if (listed != expected) throw DataError(path.string() + ": parameter group manifest mismatch");
  ck.params.for_each_group([&](const std::string& name, Matrix<float>& m) {
    Matrix<float> block = mmfv::read(in, path.string() + " [" + name + "]");
    require_shape(name, block.rows(), block.cols(), m.rows(), m.cols());
    m = std::move(block);
  });
  return ck;
}

}  // namespace monet

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "monet/datasets.hpp"
#include "monet/error.hpp"
#include "monet/linalg.hpp"

namespace monet {

/// Compressed sparse adjacency of the training interactions, stored in both
/// directions. Each stored edge carries 1/sqrt(|N_u| |N_i|).
class BipartiteGraph {
 public:
  BipartiteGraph() = default;

  std::size_t num_users() const { return num_users_; }
  std::size_t num_items() const { return num_items_; }
  std::size_t num_edges() const { return user_items_.size(); }

  std::span<const std::uint32_t> user_items(std::uint32_t u) const {
    return {user_items_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
  }
  std::span<const double> user_coeffs(std::uint32_t u) const {
    return {user_coeffs_.data() + user_offsets_[u], user_offsets_[u + 1] - user_offsets_[u]};
  }
  std::span<const std::uint32_t> item_users(std::uint32_t i) const {
    return {item_users_.data() + item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]};
  }
  std::span<const double> item_coeffs(std::uint32_t i) const {
    return {item_coeffs_.data() + item_offsets_[i], item_offsets_[i + 1] - item_offsets_[i]};
  }

  std::size_t user_degree(std::uint32_t u) const { return user_offsets_[u + 1] - user_offsets_[u]; }
  std::size_t item_degree(std::uint32_t i) const { return item_offsets_[i + 1] - item_offsets_[i]; }

  bool has_edge(std::uint32_t u, std::uint32_t i) const {
    const auto items = user_items(u);
    return std::binary_search(items.begin(), items.end(), i);
  }

  /// Builds the graph over `edges`. Duplicates are ignored; every user in
  /// [0, num_users) and item in [0, num_items) needs at least one edge.
  static BipartiteGraph from_edges(std::size_t num_users, std::size_t num_items,
                                   std::vector<Interaction> edges) {
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    BipartiteGraph g;
    g.num_users_ = num_users;
    g.num_items_ = num_items;
    g.user_offsets_.assign(num_users + 1, 0);
    g.item_offsets_.assign(num_items + 1, 0);
    for (const auto& e : edges) {
      if (e.user >= num_users || e.item >= num_items) {
        throw DataError("edge (" + std::to_string(e.user) + "," + std::to_string(e.item) +
                        ") out of range");
      }
      ++g.user_offsets_[e.user + 1];
      ++g.item_offsets_[e.item + 1];
    }
    for (std::size_t u = 0; u < num_users; ++u) {
      if (g.user_offsets_[u + 1] == 0) {
        throw DataError("user " + std::to_string(u) + " has no training interactions");
      }
      g.user_offsets_[u + 1] += g.user_offsets_[u];
    }
    for (std::size_t i = 0; i < num_items; ++i) {
      if (g.item_offsets_[i + 1] == 0) {
        throw DataError("item " + std::to_string(i) + " has no training interactions");
      }
      g.item_offsets_[i + 1] += g.item_offsets_[i];
    }

    // Edges are sorted by (user, item), so user rows come out ascending and
    // filling item rows in the same pass keeps those ascending by user too.
    g.user_items_.resize(edges.size());
    g.user_coeffs_.resize(edges.size());
    g.item_users_.resize(edges.size());
    g.item_coeffs_.resize(edges.size());
    std::vector<std::size_t> item_fill(g.item_offsets_.begin(), g.item_offsets_.end() - 1);
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto [u, i] = edges[k];
      const double du = static_cast<double>(g.user_offsets_[u + 1] - g.user_offsets_[u]);
      const double di = static_cast<double>(g.item_offsets_[i + 1] - g.item_offsets_[i]);
      const double c = 1.0 / std::sqrt(du * di);
      g.user_items_[k] = i;
      g.user_coeffs_[k] = c;
      const std::size_t slot = item_fill[i]++;
      g.item_users_[slot] = u;
      g.item_coeffs_[slot] = c;
    }
    return g;
  }

 private:
  std::size_t num_users_ = 0;
  std::size_t num_items_ = 0;
  std::vector<std::size_t> user_offsets_;
  std::vector<std::uint32_t> user_items_;
  std::vector<double> user_coeffs_;
  std::vector<std::size_t> item_offsets_;
  std::vector<std::uint32_t> item_users_;
  std::vector<double> item_coeffs_;
};

inline BipartiteGraph build_graph(const InteractionDataset& ds) {
  if (ds.train.empty()) throw DataError("training partition is empty");
  return BipartiteGraph::from_edges(ds.num_users, ds.num_items, ds.train);
}

template <class T>
struct NodeEmbeddings {
  Matrix<T> users;
  Matrix<T> items;
};

/// One simultaneous propagation layer:
///   item_i' = sum_{u in N_i} c_ui user_u + alpha item_i
///   user_u' = sum_{i in N_u} c_ui item_i + alpha user_u
/// Neighbours are summed in ascending index order. The operator is
/// symmetric on the stacked (user; item) space, so it is also its own
/// adjoint for backpropagation.
template <class T>
NodeEmbeddings<T> propagate(const BipartiteGraph& g, const Matrix<T>& users,
                            const Matrix<T>& items, double alpha) {
  if (static_cast<std::size_t>(users.rows()) != g.num_users() ||
      static_cast<std::size_t>(items.rows()) != g.num_items() || users.cols() != items.cols()) {
    throw ShapeError("propagate: embeddings " + std::to_string(users.rows()) + "x" +
                     std::to_string(users.cols()) + " / " + std::to_string(items.rows()) + "x" +
                     std::to_string(items.cols()) + " do not match graph " +
                     std::to_string(g.num_users()) + "/" + std::to_string(g.num_items()));
  }
  const Index d = users.cols();
  const T a = static_cast<T>(alpha);
  NodeEmbeddings<T> out{Matrix<T>(users.rows(), d), Matrix<T>(items.rows(), d)};
  for (std::uint32_t u = 0; u < g.num_users(); ++u) {
    auto row = out.users.row(u);
    row.setZero();
    const auto nbrs = g.user_items(u);
    const auto coeffs = g.user_coeffs(u);
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      row += static_cast<T>(coeffs[k]) * items.row(nbrs[k]);
    }
    row += a * users.row(u);
  }
  for (std::uint32_t i = 0; i < g.num_items(); ++i) {
    auto row = out.items.row(i);
    row.setZero();
    const auto nbrs = g.item_users(i);
    const auto coeffs = g.item_coeffs(i);
    for (std::size_t k = 0; k < nbrs.size(); ++k) {
      row += static_cast<T>(coeffs[k]) * users.row(nbrs[k]);
    }
    row += a * items.row(i);
  }
  return out;
}

}  // namespace monet

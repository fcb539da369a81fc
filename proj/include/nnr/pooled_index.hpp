#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "nnr/kdtree.hpp"
#include "nnr/points.hpp"

namespace nnr {

enum class SampleLabel : std::uint8_t { X, Y };

struct Neighbor {
  SampleLabel label;
  double distance;
  std::size_t position;  // index into the pooled sample Z
};

//! Immutable index over the pooled sample Z = X ∪ Y. X points occupy pooled
//! positions [0, N), Y points [N, N+M). Tree-accelerated for coordinate-wise
//! metrics, linear scan otherwise; safe for concurrent queries.
class PooledIndex {
public:
  PooledIndex(const PointSet& x, const PointSet& y, Metric metric)
      : dim_(x.dim()), n_(x.size()), m_(y.size()), metric_(std::move(metric)) {
    if (x.empty()) throw std::invalid_argument("PooledIndex: X sample is empty");
    if (y.empty()) throw std::invalid_argument("PooledIndex: Y sample is empty");
    if (x.dim() != y.dim())
      throw std::invalid_argument("PooledIndex: X and Y dimensions differ");

    coords_.reserve((n_ + m_) * dim_);
    coords_.insert(coords_.end(), x.flat().begin(), x.flat().end());
    coords_.insert(coords_.end(), y.flat().begin(), y.flat().end());

    if (metric_.coordinate_wise())
      tree_ = std::make_unique<KdTree>(coords_.data(), n_ + m_, dim_, metric_);
  }

  std::size_t size() const { return n_ + m_; }
  std::size_t x_count() const { return n_; }
  std::size_t y_count() const { return m_; }
  std::size_t dim() const { return dim_; }
  const Metric& metric() const { return metric_; }

  SampleLabel label(std::size_t position) const {
    return position < n_ ? SampleLabel::X : SampleLabel::Y;
  }

  //! Index of the pooled point within its source set.
  std::size_t source_index(std::size_t position) const {
    return position < n_ ? position : position - n_;
  }

  std::span<const double> point(std::size_t position) const {
    return {coords_.data() + position * dim_, dim_};
  }

  std::size_t y_position(std::size_t y_index) const { return n_ + y_index; }

  //! Exact k nearest pooled points, sorted by nondecreasing distance with
  //! ties broken by ascending pooled position.
  std::vector<Neighbor> k_nearest(std::span<const double> query, std::size_t k,
                                  std::size_t exclude_position = npos) const {
    check_query(query, k, exclude_position);
    if (tree_) return to_neighbors(tree_->query(query, k, exclude_position));
    return brute_force_k_nearest(query, k, exclude_position);
  }

  //! Linear-scan reference with the identical contract; used as the oracle in
  //! equivalence tests and as the only path for custom metrics.
  std::vector<Neighbor> brute_force_k_nearest(std::span<const double> query, std::size_t k,
                                              std::size_t exclude_position = npos) const {
    check_query(query, k, exclude_position);
    detail::KBestHeap heap(k);
    const bool coord = metric_.coordinate_wise();
    for (std::size_t i = 0; i < size(); ++i) {
      if (i == exclude_position) continue;
      const double r = coord ? metric_.reduced(query.data(), coords_.data() + i * dim_, dim_)
                             : metric_.distance(query, point(i));
      heap.offer(r, i);
    }
    return to_neighbors(std::move(heap).sorted());
  }

private:
  void check_query(std::span<const double> query, std::size_t k,
                   std::size_t exclude_position) const {
    if (query.size() != dim_)
      throw std::invalid_argument("PooledIndex: query dimension mismatch");
    const std::size_t available = size() - (exclude_position != npos ? 1 : 0);
    if (k == 0 || k > available)
      throw std::invalid_argument("PooledIndex: k out of range (k=" + std::to_string(k) +
                                  ", available=" + std::to_string(available) + ")");
  }

  std::vector<Neighbor> to_neighbors(std::vector<NeighborHit> hits) const {
    std::vector<Neighbor> out;
    out.reserve(hits.size());
    const bool coord = metric_.coordinate_wise();
    for (const NeighborHit& h : hits)
      out.push_back({label(h.index), coord ? metric_.finish(h.reduced) : h.reduced, h.index});
    return out;
  }

  std::size_t dim_;
  std::size_t n_;
  std::size_t m_;
  Metric metric_;
  std::vector<double> coords_;
  std::unique_ptr<KdTree> tree_;
};

inline PooledIndex build_index(const PointSet& x, const PointSet& y,
                               Metric metric = Metric::euclidean()) {
  return PooledIndex(x, y, std::move(metric));
}

}  // namespace nnr

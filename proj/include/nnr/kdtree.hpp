#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "nnr/points.hpp"

namespace nnr {

//! Neighbor candidate ordered by (reduced distance, index). The index order
//! makes tied distances resolve deterministically.
struct NeighborHit {
  double reduced = 0.0;
  std::size_t index = 0;

  bool operator<(const NeighborHit& o) const {
    return reduced < o.reduced || (reduced == o.reduced && index < o.index);
  }
};

namespace detail {

//! Fixed-capacity max-heap keeping the k best (smallest) NeighborHits.
class KBestHeap {
public:
  explicit KBestHeap(std::size_t k) : k_(k) { heap_.reserve(k); }

  double worst_reduced() const {
    return heap_.size() < k_ ? std::numeric_limits<double>::infinity() : heap_.front().reduced;
  }

  void offer(double reduced, std::size_t index) {
    NeighborHit hit{reduced, index};
    if (heap_.size() < k_) {
      heap_.push_back(hit);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (hit < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = hit;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  //! Extracts the hits in ascending (reduced, index) order.
  std::vector<NeighborHit> sorted() && {
    std::sort(heap_.begin(), heap_.end());
    return std::move(heap_);
  }

private:
  std::size_t k_;
  std::vector<NeighborHit> heap_;
};

}  // namespace detail

//! Exact k-nearest-neighbor tree over a flat row-major coordinate array.
//!
//! Build is a recursive median split on the widest-spread axis. Queries use
//! the standard side-distance pruning bound; the bound test carries a small
//! relative slack so rounding in partial per-axis sums can never prune a
//! candidate that the canonical full-distance computation would keep. This is
//! what makes tree output match the linear scan bit for bit.
class KdTree {
public:
  KdTree() = default;

  KdTree(const double* data, std::size_t count, std::size_t dim, Metric metric,
         std::size_t leaf_size = 16)
      : data_(data), count_(count), dim_(dim), metric_(std::move(metric)), leaf_size_(leaf_size) {
    if (!metric_.coordinate_wise())
      throw std::invalid_argument("KdTree: requires a coordinate-wise metric");
    order_.resize(count_);
    for (std::size_t i = 0; i < count_; ++i) order_[i] = static_cast<std::uint32_t>(i);
    if (count_ > 0) build(0, count_);
  }

  std::size_t size() const { return count_; }

  //! k smallest (reduced distance, index) pairs, optionally excluding one index.
  std::vector<NeighborHit> query(std::span<const double> q, std::size_t k,
                                 std::size_t exclude = npos) const {
    detail::KBestHeap heap(k);
    std::vector<double> side(dim_, 0.0);
    search(0, q.data(), exclude, 0.0, side, heap);
    return std::move(heap).sorted();
  }

  const Metric& metric() const { return metric_; }

private:
  struct Node {
    std::uint32_t axis = 0;
    double split = 0.0;
    std::int32_t left = -1;    // child node id, or -1 for leaf
    std::int32_t right = -1;
    std::uint32_t begin = 0;   // leaf range into order_
    std::uint32_t end = 0;
    bool leaf() const { return left < 0; }
  };

  double coord(std::uint32_t idx, std::size_t axis) const { return data_[idx * dim_ + axis]; }

  std::int32_t build(std::size_t begin, std::size_t end) {
    const std::int32_t id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= leaf_size_) {
      nodes_[id].begin = static_cast<std::uint32_t>(begin);
      nodes_[id].end = static_cast<std::uint32_t>(end);
      return id;
    }

    std::size_t axis = 0;
    double best_spread = -1.0;
    for (std::size_t a = 0; a < dim_; ++a) {
      double lo = coord(order_[begin], a), hi = lo;
      for (std::size_t i = begin + 1; i < end; ++i) {
        const double v = coord(order_[i], a);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (hi - lo > best_spread) {
        best_spread = hi - lo;
        axis = a;
      }
    }
    if (best_spread <= 0.0) {  // all points identical: keep as one leaf
      nodes_[id].begin = static_cast<std::uint32_t>(begin);
      nodes_[id].end = static_cast<std::uint32_t>(end);
      return id;
    }

    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return coord(a, axis) < coord(b, axis); });

    nodes_[id].axis = static_cast<std::uint32_t>(axis);
    nodes_[id].split = coord(order_[mid], axis);
    const std::int32_t left = build(begin, mid);
    const std::int32_t right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(std::int32_t id, const double* q, std::size_t exclude, double bound,
              std::vector<double>& side, detail::KBestHeap& heap) const {
    const Node& node = nodes_[id];
    if (node.leaf()) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const std::uint32_t idx = order_[i];
        if (idx == exclude) continue;
        heap.offer(metric_.reduced(q, data_ + idx * dim_, dim_), idx);
      }
      return;
    }

    const std::size_t axis = node.axis;
    const double diff = q[axis] - node.split;
    const std::int32_t near = diff < 0.0 ? node.left : node.right;
    const std::int32_t far = diff < 0.0 ? node.right : node.left;

    search(near, q, exclude, bound, side, heap);

    const double axis_dist = metric_.reduced_axis(diff);
    const double prev = side[axis];
    double far_bound;
    if (metric_.additive()) {
      far_bound = bound - prev + axis_dist;
    } else {  // L_inf: recompute the max over crossed axes
      side[axis] = axis_dist;
      far_bound = 0.0;
      for (double s : side) far_bound = std::max(far_bound, s);
      side[axis] = prev;
    }
    if (far_bound <= heap.worst_reduced() * (1.0 + kPruneSlack)) {
      side[axis] = axis_dist;
      search(far, q, exclude, far_bound, side, heap);
      side[axis] = prev;
    }
  }

  static constexpr double kPruneSlack = 1e-12;

  const double* data_ = nullptr;
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  Metric metric_ = Metric::euclidean();
  std::size_t leaf_size_ = 16;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace nnr

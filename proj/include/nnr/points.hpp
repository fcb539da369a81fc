#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nnr {

inline constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

//! Ordered collection of d-dimensional points, stored row-major.
class PointSet {
public:
  PointSet() = default;

  explicit PointSet(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw std::invalid_argument("PointSet: dimension must be >= 1");
  }

  PointSet(std::size_t dim, std::vector<double> flat) : dim_(dim), data_(std::move(flat)) {
    if (dim == 0) throw std::invalid_argument("PointSet: dimension must be >= 1");
    if (data_.size() % dim_ != 0)
      throw std::invalid_argument("PointSet: flat data size is not a multiple of dim");
  }

  static PointSet from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    if (rows.size() == 0) throw std::invalid_argument("PointSet: no rows");
    PointSet ps(rows.begin()->size());
    for (const auto& r : rows) ps.add(std::vector<double>(r));
    return ps;
  }

  void add(std::span<const double> p) {
    if (p.size() != dim_) throw std::invalid_argument("PointSet: point dimension mismatch");
    data_.insert(data_.end(), p.begin(), p.end());
  }

  std::span<const double> operator[](std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }

  std::size_t size() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return data_.empty(); }
  const std::vector<double>& flat() const { return data_; }
  double* raw() { return data_.data(); }

  void reserve(std::size_t n) { data_.reserve(n * dim_); }

private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

enum class MetricKind { Euclidean, Minkowski, Chebyshev, Custom };

using DistanceFn = std::function<double(std::span<const double>, std::span<const double>)>;

//! Distance metric on R^d. Coordinate-wise metrics support tree-accelerated
//! search; custom functions fall back to a linear scan.
class Metric {
public:
  static Metric euclidean() { return Metric(MetricKind::Euclidean, 2.0); }

  static Metric minkowski(double p) {
    if (!(p >= 1.0)) throw std::invalid_argument("Metric: L_p exponent must be >= 1");
    return Metric(MetricKind::Minkowski, p);
  }

  static Metric chebyshev() { return Metric(MetricKind::Chebyshev, 0.0); }

  static Metric custom(DistanceFn fn) {
    Metric m(MetricKind::Custom, 0.0);
    m.fn_ = std::move(fn);
    return m;
  }

  //! Parses "euclidean", "linf" or "lp:<p>".
  static Metric parse(const std::string& name) {
    if (name == "euclidean" || name == "l2") return euclidean();
    if (name == "linf" || name == "chebyshev") return chebyshev();
    if (name.rfind("lp:", 0) == 0) return minkowski(std::stod(name.substr(3)));
    throw std::invalid_argument("Metric: unknown metric '" + name + "'");
  }

  MetricKind kind() const { return kind_; }
  double exponent() const { return p_; }
  bool coordinate_wise() const { return kind_ != MetricKind::Custom; }

  double distance(std::span<const double> a, std::span<const double> b) const {
    if (kind_ == MetricKind::Custom) return fn_(a, b);
    return finish(reduced(a.data(), b.data(), a.size()));
  }

  // Rank-preserving "reduced" distance: squared L2, p-th power sums for L_p,
  // plain max for L_inf. Accumulation runs in ascending axis order so tree and
  // linear-scan paths produce bit-identical values.
  double reduced(const double* a, const double* b, std::size_t d) const {
    switch (kind_) {
      case MetricKind::Euclidean: {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
          const double diff = a[i] - b[i];
          s += diff * diff;
        }
        return s;
      }
      case MetricKind::Minkowski: {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += std::pow(std::abs(a[i] - b[i]), p_);
        return s;
      }
      case MetricKind::Chebyshev: {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s = std::max(s, std::abs(a[i] - b[i]));
        return s;
      }
      default:
        throw std::logic_error("Metric: reduced() not available for custom metrics");
    }
  }

  double reduced_axis(double diff) const {
    switch (kind_) {
      case MetricKind::Euclidean: return diff * diff;
      case MetricKind::Minkowski: return std::pow(std::abs(diff), p_);
      case MetricKind::Chebyshev: return std::abs(diff);
      default: throw std::logic_error("Metric: reduced_axis() not available for custom metrics");
    }
  }

  double finish(double reduced_value) const {
    switch (kind_) {
      case MetricKind::Euclidean: return std::sqrt(reduced_value);
      case MetricKind::Minkowski: return std::pow(reduced_value, 1.0 / p_);
      case MetricKind::Chebyshev: return reduced_value;
      default: throw std::logic_error("Metric: finish() not available for custom metrics");
    }
  }

  //! True when the reduced distance combines per-axis terms by addition.
  bool additive() const { return kind_ == MetricKind::Euclidean || kind_ == MetricKind::Minkowski; }

private:
  Metric(MetricKind kind, double p) : kind_(kind), p_(p) {}

  MetricKind kind_;
  double p_;
  DistanceFn fn_;
};

}  // namespace nnr

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "conflab/manifold.hpp"

namespace conflab {

/// Scalar field sampled on the nodes of a Torus or Box.
///
/// Torus node j on axis i sits at j * period_i / shape_i; Box nodes include
/// both endpoints, lo + j * length / (shape_i - 1). Values are row-major
/// (last axis fastest) and hold f itself, not e^{nf}.
class GridField {
 public:
  GridField() = default;
  GridField(Manifold m, std::vector<std::size_t> shape, std::vector<double> values);
  /// Samples fn(x) at every node.
  template <typename Fn>
  static GridField sample(const Manifold& m, std::vector<std::size_t> shape, Fn&& fn);

  const Manifold& manifold() const noexcept { return manifold_; }
  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t dim() const noexcept { return shape_.size(); }

  double spacing(std::size_t axis) const;
  /// Coordinates of node `flat`.
  void node(std::size_t flat, std::span<double> out) const;
  std::size_t flat_index(std::span<const std::size_t> idx) const;
  double at(std::span<const std::size_t> idx) const { return values_[flat_index(idx)]; }

  friend bool operator==(const GridField&, const GridField&) = default;

 private:
  Manifold manifold_ = Manifold::torus(2);
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

template <typename Fn>
GridField GridField::sample(const Manifold& m, std::vector<std::size_t> shape, Fn&& fn) {
  std::size_t total = 1;
  for (auto s : shape) total *= s;
  GridField g(m, shape, std::vector<double>(total, 0.0));
  std::vector<double> x(shape.size());
  for (std::size_t k = 0; k < total; ++k) {
    g.node(k, x);
    g.values_[k] = fn(std::span<const double>(x));
  }
  return g;
}

/// Writes `<path>` (JSON manifest) and `<path stem>.f64` (payload) next to it.
void write_grid(const std::filesystem::path& manifest, const GridField& grid);
GridField read_grid(const std::filesystem::path& manifest);

/// CSV fallback: one "x1,...,xn,f" row per node, header included.
void write_grid_csv(const std::filesystem::path& path, const GridField& grid);
GridField read_grid_csv(const std::filesystem::path& path, const Manifold& m);

/// Little-endian float64 helpers shared with matrix export.
void write_f64le(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f64le(const std::filesystem::path& path, std::size_t expected_count);

}  // namespace conflab

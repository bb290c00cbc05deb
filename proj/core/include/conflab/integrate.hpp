#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "conflab/manifold.hpp"
#include "conflab/weight.hpp"

namespace conflab {

/// Evaluated at a quadrature node x with f = f(x) already computed.
using Integrand = std::function<double(std::span<const double> x, double f)>;

/// Fraction of non-finite integrand samples tolerated before failing.
inline constexpr double kMaxNonFiniteFraction = 1e-3;

/// Integrals over a ball of each integrand against dmu0.
///
/// Monte Carlo on one shared sample (sample_ball with `seed`, `budget`
/// points), so ratios of the returned integrals are exact under rescaling of
/// the integrands. On the sphere, when the field is zonal and `field_local`
/// says the integrands depend on x only through the field, nested adaptive
/// Gauss-Kronrod quadrature is used instead and std_error is zero.
std::vector<Measure> integrate_ball(const Manifold& m, const WeightField& field,
                                    const BallSpec& ball, std::span<const Integrand> integrands,
                                    std::size_t budget, std::uint64_t seed,
                                    bool field_local = true);

/// Same over the whole manifold.
std::vector<Measure> integrate_manifold(const Manifold& m, const WeightField& field,
                                        std::span<const Integrand> integrands,
                                        std::size_t budget, std::uint64_t seed,
                                        bool field_local = true);

/// Monte Carlo over an explicit sample with precomputed field values.
std::vector<Measure> integrate_sample(const SampleSet& sample, std::span<const double> f,
                                      std::span<const Integrand> integrands);

/// Field values at every sample point.
std::vector<double> eval_on(const Manifold& m, const WeightField& field, const SampleSet& sample);

}  // namespace conflab

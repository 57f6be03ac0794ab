#ifndef LATTE_THEORY_HPP
#define LATTE_THEORY_HPP

#include <cstdint>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "latte/core_math.hpp"
#include "latte/data.hpp"

namespace latte {

/// Volume of the d-dimensional unit ball, pi^{d/2} / Gamma(d/2 + 1),
/// evaluated through log-gamma.
double sphere_volume(std::size_t d);

/// Volume of the d-dimensional unit-ball cap with polar angle theta:
/// pi^{(d-1)/2} / Gamma((d+1)/2) * integral_0^theta sin^d(phi) dphi.
double cap_volume(std::size_t d, double theta);

/// cap_volume / sphere_volume.
double cap_ratio(std::size_t d, double theta);

/// Closed-form lower and upper bounds on the cap/sphere volume ratio for
/// theta in [0, pi/2]. Raises DomainError outside that range.
std::pair<double, double> cap_ratio_bounds(std::size_t d, double theta);

/// Polar angle of the cap that holds all memory entries with probability
/// 1 - delta after N observed samples at shot capacity k:
///   (pi/2) * (8/sqrt(pi) * sqrt(2d+4) * (ln(2/delta) + k) / N)^{1/(d+1)}.
/// Strictly decreasing in N, increasing in k and d.
double theta_radius(double num_samples, double k, std::size_t d, double delta);

/// Exhaustive nearest-neighbor class over (embedding, class) entries by L2
/// distance; distance ties resolve to the lowest class id. Raises
/// EmptyMemory.
std::size_t onenn_oracle(const Vec& f,
                         const std::vector<std::pair<Vec, std::size_t>>& entries);

/// Expected error of the zero-bias linear classifier sign(w^T f) on the
/// two-ball mixture with centers +-mu: 0 once mu^T w > 1, otherwise the
/// cap/sphere volume ratio at polar angle arccos(mu^T w).
double analytic_error(const Vec& mu, const Vec& w);

struct ErrorReport {
  double estimate = 0.0;
  double half_width = 0.0;  // 1.96 * sqrt(p(1-p)/n)
  std::uint64_t n = 0;
};

/// Monte-Carlo error of `predict` on fresh balanced samples from the world
/// (or from its ood_index-th shifted copy). Raises InvalidArgument when
/// n < 100.
ErrorReport mc_error(const std::function<std::size_t(const Vec&)>& predict,
                     const TheoryWorld& world, std::uint64_t n,
                     std::mt19937_64& rng,
                     std::optional<std::size_t> ood_index = std::nullopt);

/// Limit points of the per-class memories: (-mu - w_pre, +mu + w_pre).
std::pair<Vec, Vec> asymptotic_targets(const TheoryWorld& world);

}  // namespace latte

#endif  // LATTE_THEORY_HPP

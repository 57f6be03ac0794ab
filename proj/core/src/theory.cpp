#include "latte/theory.hpp"

#include <algorithm>
#include <cmath>

namespace latte {

double sphere_volume(std::size_t d) {
  if (d < 1) raise(ErrorCode::InvalidArgument, "dimension must be >= 1");
  const double dd = static_cast<double>(d);
  return std::exp(0.5 * dd * std::log(M_PI) - std::lgamma(0.5 * dd + 1.0));
}

namespace {

// Adaptive Simpson on [a, b] with relative tolerance per panel.
double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double fa, double fm, double fb,
                        double whole, double rel_tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 ||
      std::abs(delta) <= 15.0 * rel_tol * std::abs(left + right)) {
    return left + right + delta / 15.0;
  }
  return adaptive_simpson(f, a, m, fa, flm, fm, left, rel_tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, rel_tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b,
                 double rel_tol) {
  if (b <= a) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, rel_tol, 48);
}

}  // namespace

double cap_volume(std::size_t d, double theta) {
  if (d < 1) raise(ErrorCode::InvalidArgument, "dimension must be >= 1");
  if (!(theta >= 0.0 && theta <= M_PI)) {
    raise(ErrorCode::DomainError, "polar angle must lie in [0, pi]");
  }
  if (theta == 0.0) return 0.0;
  const double dd = static_cast<double>(d);
  const double coeff =
      std::exp(0.5 * (dd - 1.0) * std::log(M_PI) - std::lgamma(0.5 * (dd + 1.0)));
  const double integral = integrate(
      [dd](double phi) { return std::pow(std::sin(phi), dd); }, 0.0, theta,
      1e-12);
  return coeff * integral;
}

double cap_ratio(std::size_t d, double theta) {
  return cap_volume(d, theta) / sphere_volume(d);
}

std::pair<double, double> cap_ratio_bounds(std::size_t d, double theta) {
  if (d < 1) raise(ErrorCode::InvalidArgument, "dimension must be >= 1");
  if (!(theta >= 0.0 && theta <= M_PI / 2.0)) {
    raise(ErrorCode::DomainError,
          "cap ratio bounds hold for polar angle in [0, pi/2]");
  }
  const double dd = static_cast<double>(d);
  const double theta_pow = std::pow(theta, dd + 1.0);
  const double inv_sqrt_pi = 1.0 / std::sqrt(M_PI);
  const double lower = inv_sqrt_pi / std::sqrt(2.0 * dd + 4.0) *
                       std::pow(2.0 / M_PI, dd) * theta_pow;
  const double upper = inv_sqrt_pi / std::sqrt(2.0 * dd + 2.0) * theta_pow;
  return {lower, upper};
}

double theta_radius(double num_samples, double k, std::size_t d,
                    double delta) {
  if (num_samples <= 0.0) {
    raise(ErrorCode::InvalidArgument, "sample count must be positive");
  }
  if (k < 1.0) raise(ErrorCode::InvalidArgument, "shot capacity must be >= 1");
  if (!(delta > 0.0 && delta < 1.0)) {
    raise(ErrorCode::InvalidArgument, "delta must lie in (0, 1)");
  }
  const double dd = static_cast<double>(d);
  const double inner = 8.0 / std::sqrt(M_PI) * std::sqrt(2.0 * dd + 4.0) *
                       (std::log(2.0 / delta) + k) / num_samples;
  return 0.5 * M_PI * std::pow(inner, 1.0 / (dd + 1.0));
}

std::size_t onenn_oracle(
    const Vec& f, const std::vector<std::pair<Vec, std::size_t>>& entries) {
  if (entries.empty()) {
    raise(ErrorCode::EmptyMemory, "nearest-neighbor query on empty memory");
  }
  double best_dist = sq_dist(f, entries.front().first);
  std::size_t best_class = entries.front().second;
  for (std::size_t i = 1; i < entries.size(); ++i) {
    const double dist = sq_dist(f, entries[i].first);
    if (dist < best_dist ||
        (dist == best_dist && entries[i].second < best_class)) {
      best_dist = dist;
      best_class = entries[i].second;
    }
  }
  return best_class;
}

double analytic_error(const Vec& mu, const Vec& w) {
  if (mu.size() != w.size()) {
    raise(ErrorCode::DimMismatch, "mu and w dimensions disagree");
  }
  if (std::abs(l2_norm(w) - 1.0) > 1e-9) {
    raise(ErrorCode::InvalidArgument, "classifier direction must be unit-norm");
  }
  const double align = dot(mu, w);
  if (align > 1.0) return 0.0;
  if (align <= -1.0) return 1.0;
  return cap_ratio(mu.size(), std::acos(align));
}

ErrorReport mc_error(const std::function<std::size_t(const Vec&)>& predict,
                     const TheoryWorld& world, std::uint64_t n,
                     std::mt19937_64& rng,
                     std::optional<std::size_t> ood_index) {
  if (n < 100) {
    raise(ErrorCode::InvalidArgument,
          "need at least 100 Monte-Carlo samples for a meaningful estimate");
  }
  std::bernoulli_distribution label(0.5);
  std::uint64_t wrong = 0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const int y = label(rng) ? 1 : 0;
    const Vec f = sample_theory(world, y, ood_index, rng);
    if (predict(f) != static_cast<std::size_t>(y)) ++wrong;
  }
  ErrorReport report;
  report.n = n;
  report.estimate = static_cast<double>(wrong) / static_cast<double>(n);
  report.half_width =
      1.96 * std::sqrt(report.estimate * (1.0 - report.estimate) /
                       static_cast<double>(n));
  return report;
}

std::pair<Vec, Vec> asymptotic_targets(const TheoryWorld& world) {
  world.validate();
  Vec m1(world.dim());
  Vec m0(world.dim());
  for (std::size_t i = 0; i < world.dim(); ++i) {
    m1[i] = world.mu[i] + world.w_pre[i];
    m0[i] = -m1[i];
  }
  return {m0, m1};
}

}  // namespace latte

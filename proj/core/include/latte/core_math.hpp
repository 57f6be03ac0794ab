#ifndef LATTE_CORE_MATH_HPP
#define LATTE_CORE_MATH_HPP

#include <cstddef>
#include <string>
#include <vector>

#include "latte/error.hpp"

namespace latte {

using Vec = std::vector<double>;

// Below this L2 norm a vector is treated as zero; normalizing it would only
// amplify noise.
inline constexpr double kNormEps = 1e-12;

// Unit-norm validation tolerance for stored embeddings and classifier rows.
inline constexpr double kUnitTol = 1e-6;

double dot(const Vec& a, const Vec& b);
double l2_norm(const Vec& v);
double sq_dist(const Vec& a, const Vec& b);
bool all_finite(const Vec& v);
bool is_unit(const Vec& v, double tol = kUnitTol);

/// v / ||v||_2. Raises ZeroVector when ||v||_2 <= kNormEps.
Vec normalize(const Vec& v);

/// Index of the largest element; ties resolve to the lowest index.
std::size_t argmax(const std::vector<double>& values);

enum class LogitKind { pre, mem, post };

struct Logits {
  std::vector<double> values;
  LogitKind kind = LogitKind::pre;

  std::size_t size() const { return values.size(); }
};

// Linear classifier built from unit-norm class embeddings. Scores are
// scale * <f, row_y>; scale 100 matches the usual CLIP logit multiplier.
struct TextClassifier {
  std::vector<Vec> rows;
  std::vector<std::string> class_names;
  double scale = 100.0;

  std::size_t num_classes() const { return rows.size(); }
  std::size_t dim() const { return rows.empty() ? 0 : rows.front().size(); }

  // Checks c >= 2, d >= 1, consistent row dims, unit rows, finite scale.
  void validate() const;
};

/// scale * f^T T^T for a normalized embedding f. Raises DimMismatch.
Logits zero_shot_logits(const Vec& f, const TextClassifier& clf);

/// Max-subtracted softmax.
std::vector<double> softmax(const std::vector<double>& values);

/// Shannon entropy (natural log) of the softmax of the logits.
/// Lies in [0, ln c]; the uniform distribution attains ln c.
double entropy(const Logits& logits);

}  // namespace latte

#endif  // LATTE_CORE_MATH_HPP

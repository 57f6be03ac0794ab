#include "latte/core_math.hpp"

#include <algorithm>
#include <cmath>

namespace latte {

double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    raise(ErrorCode::DimMismatch, "dot: " + std::to_string(a.size()) +
                                      " vs " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double sq_dist(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) {
    raise(ErrorCode::DimMismatch, "sq_dist: " + std::to_string(a.size()) +
                                      " vs " + std::to_string(b.size()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

bool all_finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(),
                     [](double x) { return std::isfinite(x); });
}

bool is_unit(const Vec& v, double tol) {
  return std::abs(l2_norm(v) - 1.0) <= tol;
}

Vec normalize(const Vec& v) {
  const double n = l2_norm(v);
  if (!std::isfinite(n)) {
    raise(ErrorCode::InvalidArgument, "normalize: non-finite input");
  }
  if (n <= kNormEps) {
    raise(ErrorCode::ZeroVector,
          "normalize: input norm " + std::to_string(n) + " below threshold");
  }
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / n;
  return out;
}

std::size_t argmax(const std::vector<double>& values) {
  if (values.empty()) {
    raise(ErrorCode::InvalidArgument, "argmax of empty vector");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void TextClassifier::validate() const {
  if (rows.size() < 2) {
    raise(ErrorCode::InvalidArgument, "classifier needs at least 2 classes");
  }
  const std::size_t d = rows.front().size();
  if (d < 1) {
    raise(ErrorCode::InvalidArgument, "classifier dimension must be >= 1");
  }
  for (std::size_t y = 0; y < rows.size(); ++y) {
    if (rows[y].size() != d) {
      raise(ErrorCode::DimMismatch,
            "classifier row " + std::to_string(y) + " has dim " +
                std::to_string(rows[y].size()) + ", expected " +
                std::to_string(d));
    }
    if (!all_finite(rows[y])) {
      raise(ErrorCode::InvalidArgument,
            "classifier row " + std::to_string(y) + " is not finite");
    }
    if (!is_unit(rows[y])) {
      raise(ErrorCode::InvalidArgument,
            "classifier row " + std::to_string(y) + " is not unit-norm");
    }
  }
  if (!class_names.empty() && class_names.size() != rows.size()) {
    raise(ErrorCode::InvalidArgument, "class_names size mismatch");
  }
  if (!std::isfinite(scale) || scale < 0.0) {
    raise(ErrorCode::InvalidArgument, "classifier scale must be finite & >= 0");
  }
}

Logits zero_shot_logits(const Vec& f, const TextClassifier& clf) {
  if (f.size() != clf.dim()) {
    raise(ErrorCode::DimMismatch, "embedding dim " + std::to_string(f.size()) +
                                      " vs classifier dim " +
                                      std::to_string(clf.dim()));
  }
  Logits out;
  out.kind = LogitKind::pre;
  out.values.resize(clf.num_classes());
  for (std::size_t y = 0; y < clf.num_classes(); ++y) {
    out.values[y] = clf.scale * dot(f, clf.rows[y]);
  }
  return out;
}

std::vector<double> softmax(const std::vector<double>& values) {
  if (values.empty()) {
    raise(ErrorCode::InvalidArgument, "softmax of empty vector");
  }
  const double m = *std::max_element(values.begin(), values.end());
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = std::exp(values[i] - m);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

double entropy(const Logits& logits) {
  if (logits.size() < 2) {
    raise(ErrorCode::InvalidArgument, "entropy needs at least 2 logits");
  }
  if (!all_finite(logits.values)) {
    raise(ErrorCode::InvalidArgument, "entropy: non-finite logits");
  }
  // H = ln(sum e^{a_i - a_max}) - sum p_i (a_i - a_max), exact for the
  // softmax distribution and stable for widely spread logits.
  const double m =
      *std::max_element(logits.values.begin(), logits.values.end());
  double sum = 0.0;
  double weighted = 0.0;
  for (double a : logits.values) {
    const double e = std::exp(a - m);
    sum += e;
    weighted += e * (a - m);
  }
  const double h = std::log(sum) - weighted / sum;
  return h < 0.0 ? 0.0 : h;  // clamp tiny negative round-off
}

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::BadClass: return "BadClass";
    case ErrorCode::BadClient: return "BadClient";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyMemory: return "EmptyMemory";
    case ErrorCode::EmptyDomain: return "EmptyDomain";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "UnknownError";
}

}  // namespace latte

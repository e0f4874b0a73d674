#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "memse/error.hpp"

namespace memse {

enum class ActivationKind { identity, softplus };

inline std::string_view to_string(ActivationKind k) {
  return k == ActivationKind::softplus ? "softplus" : "identity";
}

inline ActivationKind parse_activation(std::string_view name) {
  if (name == "softplus") return ActivationKind::softplus;
  if (name == "identity") return ActivationKind::identity;
  throw FormatError("unsupported activation kind '" + std::string(name) + "'");
}

// f, f' and f'' at a point. Softplus is evaluated in its overflow-safe form.
struct ActivationValue {
  double f;
  double d1;
  double d2;
};

inline ActivationValue evaluate(ActivationKind kind, double x) {
  if (kind == ActivationKind::identity) return {x, 1.0, 0.0};
  const double f = std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
  const double s = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return {f, s, s * (1.0 - s)};
}

inline double apply(ActivationKind kind, double x) { return evaluate(kind, x).f; }

}  // namespace memse

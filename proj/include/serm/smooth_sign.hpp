#pragma once

#include <cmath>

#include "serm/errors.hpp"

namespace serm {

// Smooth sign with temperature tau:
//   sigma(z) = 1/2 sqrt((z/tau + 1)^2 + 1) - 1/2 sqrt((z/tau - 1)^2 + 1)
// split into a convex part (first term) and a concave part (second term).
// Derivatives are with respect to z.
template <typename Scalar>
class SmoothSign {
 public:
  explicit SmoothSign(Scalar tau) : tau_(tau) {
    if (!(tau > Scalar(0)) || !std::isfinite(static_cast<double>(tau)))
      throw InvalidConfig("smooth sign temperature must be positive and finite");
  }

  Scalar tau() const { return tau_; }

  // Evaluated as 2s / (A + B) so that large |z| does not cancel to zero.
  Scalar operator()(Scalar z) const {
    const Scalar s = z / tau_;
    const Scalar a = std::hypot(s + Scalar(1), Scalar(1));
    const Scalar b = std::hypot(s - Scalar(1), Scalar(1));
    return Scalar(2) * s / (a + b);
  }

  Scalar convex_part(Scalar z) const {
    return Scalar(0.5) * std::hypot(z / tau_ + Scalar(1), Scalar(1));
  }
  Scalar concave_part(Scalar z) const {
    return Scalar(-0.5) * std::hypot(z / tau_ - Scalar(1), Scalar(1));
  }

  Scalar convex_d1(Scalar z) const {
    const Scalar u = z / tau_ + Scalar(1);
    return u / (Scalar(2) * tau_ * std::hypot(u, Scalar(1)));
  }
  Scalar concave_d1(Scalar z) const {
    const Scalar u = z / tau_ - Scalar(1);
    return -u / (Scalar(2) * tau_ * std::hypot(u, Scalar(1)));
  }

  Scalar convex_d2(Scalar z) const {
    const Scalar u = z / tau_ + Scalar(1);
    const Scalar r = std::hypot(u, Scalar(1));
    return Scalar(1) / (Scalar(2) * tau_ * tau_ * r * r * r);
  }
  Scalar concave_d2(Scalar z) const {
    const Scalar u = z / tau_ - Scalar(1);
    const Scalar r = std::hypot(u, Scalar(1));
    return Scalar(-1) / (Scalar(2) * tau_ * tau_ * r * r * r);
  }

  Scalar d1(Scalar z) const { return convex_d1(z) + concave_d1(z); }
  Scalar d2(Scalar z) const { return convex_d2(z) + concave_d2(z); }

 private:
  Scalar tau_;
};

template <typename Scalar>
Scalar smooth_sign(Scalar z, Scalar tau) {
  return SmoothSign<Scalar>(tau)(z);
}
template <typename Scalar>
Scalar smooth_sign_convex_part(Scalar z, Scalar tau) {
  return SmoothSign<Scalar>(tau).convex_part(z);
}
template <typename Scalar>
Scalar smooth_sign_concave_part(Scalar z, Scalar tau) {
  return SmoothSign<Scalar>(tau).concave_part(z);
}

// Hard sign with sign(0) = +1.
template <typename Scalar>
int hard_sign(Scalar z) {
  return z >= Scalar(0) ? 1 : -1;
}

}  // namespace serm

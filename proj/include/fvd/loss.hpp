#pragma once

#include <cmath>

#include <fmt/core.h>

#include "fvd/error.hpp"

namespace fvd::divergence
{

template <typename Scalar>
struct FocalParams
{
  Scalar alpha = Scalar(0.25);
  Scalar gamma = Scalar(2);

  void validate() const
  {
    if (!(alpha > Scalar(0) && alpha <= Scalar(1))) {
      throw InvalidParameter(fmt::format("focal alpha must be in (0,1], got {}",
                                         static_cast<double>(alpha)));
    }
    if (!(gamma >= Scalar(0)) || !std::isfinite(static_cast<double>(gamma))) {
      throw InvalidParameter(fmt::format("focal gamma must be >= 0, got {}",
                                         static_cast<double>(gamma)));
    }
  }
};

/// -alpha (1 - p_t)^gamma ln(p_t) for the probability p_t of the true class.
template <typename Scalar>
Scalar focal_loss(Scalar p_t, const FocalParams<Scalar> & params = {})
{
  using std::log;
  using std::pow;
  params.validate();
  if (!(p_t > Scalar(0)) || p_t > Scalar(1)) {
    throw DomainError(fmt::format("focal_loss: p_t must be in (0,1], got {}",
                                  static_cast<double>(p_t)));
  }
  if (p_t == Scalar(1)) {
    return Scalar(0);
  }
  return -params.alpha * pow(Scalar(1) - p_t, params.gamma) * log(p_t);
}

/// Unweighted sum of the classification and localization terms.
template <typename Scalar>
Scalar overall_loss(Scalar focal_total, Scalar divergence_total)
{
  auto check = [](Scalar v, const char * name) {
    if (!std::isfinite(static_cast<double>(v)) || v < Scalar(0)) {
      throw InvalidParameter(fmt::format("overall_loss: {} must be finite and >= 0, got {}",
                                         name, static_cast<double>(v)));
    }
  };
  check(focal_total, "focal term");
  check(divergence_total, "divergence term");
  return focal_total + divergence_total;
}

}  // namespace fvd::divergence

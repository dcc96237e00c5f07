#pragma once

// Box coordinates as univariate Gaussians and the divergences between them.
//
// Each of the four box coordinates (x, y, w, h) is modelled as N(mu, sigma)
// with sigma = k * max(w, h). Kullback-Leibler uses the closed Gaussian form;
// Jensen-Shannon compares both distributions against their pointwise mixture,
// which is not Gaussian, so it is integrated with a composite Simpson rule.
// kl_quadrature integrates the same grid and serves as an independent check of
// kl_closed.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Core>
#include <fmt/core.h>

#include "fvd/box.hpp"
#include "fvd/error.hpp"

namespace fvd::divergence
{

template <typename Scalar>
struct CoordinateGaussian
{
  Scalar mu = Scalar(0);
  Scalar sigma = Scalar(1);
};

enum class Coordinate : int { x = 0, y = 1, w = 2, h = 3 };

template <typename Scalar>
struct GaussianBox
{
  using Vector4 = Eigen::Matrix<Scalar, 4, 1>;

  Vector4 mu = Vector4::Zero();
  Vector4 sigma = Vector4::Ones();

  CoordinateGaussian<Scalar> operator[](int i) const { return {mu[i], sigma[i]}; }
  CoordinateGaussian<Scalar> operator[](Coordinate c) const { return (*this)[static_cast<int>(c)]; }
};

template <typename Scalar>
struct SigmaRule
{
  Scalar k = Scalar(0.1);
};

struct QuadratureConfig
{
  double half_width = 8.0;  // in units of the larger sigma
  int nodes = 4097;         // odd, Simpson rule

  void validate() const
  {
    if (!(half_width > 0.0) || !std::isfinite(half_width)) {
      throw InvalidParameter(fmt::format("quadrature half_width must be > 0, got {}", half_width));
    }
    if (nodes < 3 || nodes % 2 == 0) {
      throw InvalidParameter(fmt::format("quadrature nodes must be odd and >= 3, got {}", nodes));
    }
  }
};

enum class DivergenceKind { jsd, kld };

inline const char * to_string(DivergenceKind kind) noexcept
{
  return kind == DivergenceKind::jsd ? "jsd" : "kld";
}

namespace detail
{

template <typename Scalar>
void require_positive_sigma(Scalar sigma, const char * what)
{
  if (!(sigma > Scalar(0)) || !std::isfinite(static_cast<double>(sigma))) {
    throw InvalidParameter(fmt::format("{}: sigma must be > 0, got {}", what,
                                       static_cast<double>(sigma)));
  }
}

template <typename Scalar>
Scalar log_pdf_unchecked(Scalar x, const CoordinateGaussian<Scalar> & g)
{
  using std::log;
  const Scalar z = (x - g.mu) / g.sigma;
  const Scalar log_sqrt_2pi = Scalar(0.5) * log(Scalar(2) * std::numbers::pi_v<Scalar>);
  return -Scalar(0.5) * z * z - log(g.sigma) - log_sqrt_2pi;
}

// Composite Simpson rule for a callable over [a, b] with `nodes` points.
template <typename Scalar, typename F>
Scalar simpson(F && f, Scalar a, Scalar b, int nodes)
{
  const Scalar step = (b - a) / Scalar(nodes - 1);
  Scalar odd = Scalar(0);
  Scalar even = Scalar(0);
  for (int i = 1; i < nodes - 1; ++i) {
    const Scalar v = f(a + step * Scalar(i));
    if (i % 2 == 1) {
      odd += v;
    } else {
      even += v;
    }
  }
  return step / Scalar(3) * (f(a) + f(b) + Scalar(4) * odd + Scalar(2) * even);
}

template <typename Scalar>
std::pair<Scalar, Scalar> integration_span(const CoordinateGaussian<Scalar> & p,
                                           const CoordinateGaussian<Scalar> & q,
                                           const QuadratureConfig & cfg)
{
  const Scalar reach = Scalar(cfg.half_width) * std::max(p.sigma, q.sigma);
  return {std::min(p.mu, q.mu) - reach, std::max(p.mu, q.mu) + reach};
}

// Densities below this contribute nothing to the integrands.
template <typename Scalar>
constexpr Scalar density_floor() { return Scalar(1e-300); }

}  // namespace detail

template <typename Scalar>
Scalar sigma_for(Scalar width, Scalar height, const SigmaRule<Scalar> & rule)
{
  if (!(rule.k > Scalar(0))) {
    throw InvalidParameter(fmt::format("sigma rule k must be > 0, got {}",
                                       static_cast<double>(rule.k)));
  }
  if (!(width > Scalar(0)) || !(height > Scalar(0))) {
    throw InvalidGeometry("sigma_for: box with non-positive width or height");
  }
  return rule.k * std::max(width, height);
}

inline double sigma_for(const BoundingBox & box, const SigmaRule<double> & rule)
{
  return sigma_for(box.w, box.h, rule);
}

/// Gaussian view of a box: means are the box coordinates, one shared sigma.
inline GaussianBox<double> gaussian_box(const BoundingBox & box, const SigmaRule<double> & rule)
{
  GaussianBox<double> g;
  g.mu = box.as_vector();
  g.sigma.setConstant(sigma_for(box, rule));
  return g;
}

template <typename Scalar>
Scalar pdf(Scalar x, const CoordinateGaussian<Scalar> & g)
{
  using std::exp;
  detail::require_positive_sigma(g.sigma, "pdf");
  return exp(detail::log_pdf_unchecked(x, g));
}

/// KL(p || q) for two univariate Gaussians, closed form.
template <typename Scalar>
Scalar kl_closed(const CoordinateGaussian<Scalar> & p, const CoordinateGaussian<Scalar> & q)
{
  using std::log;
  detail::require_positive_sigma(p.sigma, "kl_closed");
  detail::require_positive_sigma(q.sigma, "kl_closed");
  const Scalar d = p.mu - q.mu;
  const Scalar value = log(q.sigma / p.sigma) +
                       (p.sigma * p.sigma + d * d) / (Scalar(2) * q.sigma * q.sigma) -
                       Scalar(0.5);
  // Rounding can leave a tiny negative residue when p == q.
  return std::max(value, Scalar(0));
}

/// KL(p || q) by Simpson quadrature of p log(p/q).
template <typename Scalar>
Scalar kl_quadrature(const CoordinateGaussian<Scalar> & p, const CoordinateGaussian<Scalar> & q,
                     const QuadratureConfig & cfg = {})
{
  using std::exp;
  cfg.validate();
  detail::require_positive_sigma(p.sigma, "kl_quadrature");
  detail::require_positive_sigma(q.sigma, "kl_quadrature");
  const auto [a, b] = detail::integration_span(p, q, cfg);
  auto integrand = [&](Scalar x) {
    const Scalar log_p = detail::log_pdf_unchecked(x, p);
    const Scalar density = exp(log_p);
    if (density < detail::density_floor<Scalar>()) {
      return Scalar(0);
    }
    return density * (log_p - detail::log_pdf_unchecked(x, q));
  };
  return detail::simpson<Scalar>(integrand, a, b, cfg.nodes);
}

/// Jensen-Shannon divergence 0.5 KL(p||m) + 0.5 KL(q||m), m = (p + q) / 2.
/// The integrand is symmetric in (p, q) and so is the grid, which makes the
/// result exactly symmetric.
template <typename Scalar>
Scalar jsd(const CoordinateGaussian<Scalar> & p, const CoordinateGaussian<Scalar> & q,
           const QuadratureConfig & cfg = {})
{
  using std::exp;
  using std::log;
  using std::log1p;
  cfg.validate();
  detail::require_positive_sigma(p.sigma, "jsd");
  detail::require_positive_sigma(q.sigma, "jsd");
  const auto [a, b] = detail::integration_span(p, q, cfg);
  const Scalar log_half = log(Scalar(0.5));
  auto integrand = [&](Scalar x) {
    const Scalar log_p = detail::log_pdf_unchecked(x, p);
    const Scalar log_q = detail::log_pdf_unchecked(x, q);
    const Scalar hi = std::max(log_p, log_q);
    const Scalar lo = std::min(log_p, log_q);
    const Scalar log_m = log_half + hi + log1p(exp(lo - hi));
    const Scalar dp = exp(log_p);
    const Scalar dq = exp(log_q);
    const Scalar tp = dp < detail::density_floor<Scalar>() ? Scalar(0) : dp * (log_p - log_m);
    const Scalar tq = dq < detail::density_floor<Scalar>() ? Scalar(0) : dq * (log_q - log_m);
    return Scalar(0.5) * (tp + tq);
  };
  const Scalar value = detail::simpson<Scalar>(integrand, a, b, cfg.nodes);
  return std::clamp(value, Scalar(0), std::numbers::ln2_v<Scalar>);
}

template <typename Scalar>
Scalar coordinate_divergence(const CoordinateGaussian<Scalar> & pred,
                             const CoordinateGaussian<Scalar> & gt, DivergenceKind kind,
                             const QuadratureConfig & cfg = {})
{
  return kind == DivergenceKind::jsd ? jsd(pred, gt, cfg) : kl_closed(pred, gt);
}

/// Per-coordinate divergences (x, y, w, h).
template <typename Scalar>
Eigen::Matrix<Scalar, 4, 1> box_divergence_terms(const GaussianBox<Scalar> & pred,
                                                 const GaussianBox<Scalar> & gt,
                                                 DivergenceKind kind,
                                                 const QuadratureConfig & cfg = {})
{
  Eigen::Matrix<Scalar, 4, 1> terms;
  for (int i = 0; i < 4; ++i) {
    terms[i] = coordinate_divergence(pred[i], gt[i], kind, cfg);
  }
  return terms;
}

/// Sum of the four per-coordinate divergences. JSD by default; KLD is KL(pred||gt).
template <typename Scalar>
Scalar box_divergence(const GaussianBox<Scalar> & pred, const GaussianBox<Scalar> & gt,
                      DivergenceKind kind = DivergenceKind::jsd, const QuadratureConfig & cfg = {})
{
  return box_divergence_terms(pred, gt, kind, cfg).sum();
}

}  // namespace fvd::divergence

#pragma once

// Gradient descent on the box divergence objective.
//
// The optimized parameters are the predicted coordinate means and the sigma
// scale k, packed as (mu_x, mu_y, mu_w, mu_h, k). The predicted sigma is
// k * max(mu_w, mu_h) for all four coordinates; the ground-truth Gaussians are
// fixed. Gradients are central finite differences of the objective.

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include <Eigen/Core>
#include <fmt/core.h>

#include "fvd/divergence.hpp"
#include "fvd/error.hpp"

namespace fvd::divergence
{

template <typename Scalar>
using BoxParams = Eigen::Matrix<Scalar, 5, 1>;

enum BoxParam : int { mu_x = 0, mu_y = 1, mu_w = 2, mu_h = 3, scale_k = 4 };

template <typename Scalar>
BoxParams<Scalar> box_params(const GaussianBox<Scalar> & means, Scalar k)
{
  BoxParams<Scalar> p;
  p << means.mu, k;
  return p;
}

/// Gaussian box implied by the parameters. Throws InvalidParameter when the
/// implied sigma is not positive.
template <typename Scalar>
GaussianBox<Scalar> predicted_box(const BoxParams<Scalar> & params)
{
  GaussianBox<Scalar> g;
  g.mu = params.template head<4>();
  const Scalar sigma = params[scale_k] * std::max(params[mu_w], params[mu_h]);
  detail::require_positive_sigma(sigma, "predicted_box");
  g.sigma.setConstant(sigma);
  return g;
}

template <typename Scalar>
Scalar box_objective(const BoxParams<Scalar> & params, const GaussianBox<Scalar> & gt,
                     DivergenceKind kind, const QuadratureConfig & cfg = {})
{
  return box_divergence(predicted_box(params), gt, kind, cfg);
}

/// Closed-form gradient of the KLD objective.
template <typename Scalar>
BoxParams<Scalar> kld_gradient_analytic(const BoxParams<Scalar> & params,
                                        const GaussianBox<Scalar> & gt)
{
  const GaussianBox<Scalar> pred = predicted_box(params);
  const Scalar s = pred.sigma[0];
  BoxParams<Scalar> grad = BoxParams<Scalar>::Zero();
  Scalar d_sigma = Scalar(0);
  for (int c = 0; c < 4; ++c) {
    const Scalar t2 = gt.sigma[c] * gt.sigma[c];
    grad[c] = (pred.mu[c] - gt.mu[c]) / t2;
    d_sigma += -Scalar(1) / s + s / t2;
  }
  const bool width_is_max = params[mu_w] > params[mu_h];
  grad[width_is_max ? mu_w : mu_h] += params[scale_k] * d_sigma;
  grad[scale_k] = std::max(params[mu_w], params[mu_h]) * d_sigma;
  return grad;
}

/// Finite-difference step for one parameter.
template <typename Scalar>
Scalar fd_step(Scalar theta)
{
  using std::abs;
  return std::max(Scalar(1e-6), Scalar(1e-4) * abs(theta));
}

/// Central finite-difference gradient of box_objective. Perturbing a mean
/// that does not set the sigma only touches its own coordinate term, so only
/// that term is re-evaluated.
template <typename Scalar>
BoxParams<Scalar> box_divergence_gradient(const BoxParams<Scalar> & params,
                                          const GaussianBox<Scalar> & gt, DivergenceKind kind,
                                          const QuadratureConfig & cfg = {})
{
  using Vector4 = Eigen::Matrix<Scalar, 4, 1>;
  auto terms_at = [&](const BoxParams<Scalar> & p) -> Vector4 {
    Vector4 terms;
    try {
      terms = box_divergence_terms(predicted_box(p), gt, kind, cfg);
    } catch (const InvalidParameter & e) {
      throw GradientEvaluationError(fmt::format("objective undefined at perturbed point: {}",
                                                e.what()));
    }
    if (!terms.allFinite()) {
      throw GradientEvaluationError("non-finite objective at perturbed point");
    }
    return terms;
  };

  const Vector4 base = terms_at(params);
  const Scalar max_side = std::max(params[mu_w], params[mu_h]);
  BoxParams<Scalar> grad;
  for (int i = 0; i < 5; ++i) {
    const Scalar h = fd_step(params[i]);
    BoxParams<Scalar> plus = params;
    BoxParams<Scalar> minus = params;
    plus[i] += h;
    minus[i] -= h;
    const bool sigma_changes = i == scale_k ||
                               std::max(plus[mu_w], plus[mu_h]) != max_side ||
                               std::max(minus[mu_w], minus[mu_h]) != max_side;
    Scalar f_plus;
    Scalar f_minus;
    if (sigma_changes) {
      f_plus = terms_at(plus).sum();
      f_minus = terms_at(minus).sum();
    } else {
      // Only coordinate i moved and the shared sigma is unchanged.
      const GaussianBox<Scalar> pred = predicted_box(params);
      auto term = [&](Scalar mu) {
        Vector4 t = base;
        t[i] = coordinate_divergence<Scalar>({mu, pred.sigma[i]}, gt[i], kind, cfg);
        return t.sum();
      };
      f_plus = term(plus[i]);
      f_minus = term(minus[i]);
    }
    grad[i] = (f_plus - f_minus) / (Scalar(2) * h);
    if (!std::isfinite(static_cast<double>(grad[i]))) {
      throw GradientEvaluationError("non-finite finite-difference gradient");
    }
  }
  return grad;
}

template <typename Scalar>
struct FitConfig
{
  Scalar learning_rate = Scalar(1e-3);
  int max_steps = 5000;
  Scalar tolerance = Scalar(1e-10);
  int max_halvings = 20;
  QuadratureConfig quadrature;

  void validate() const
  {
    if (!(learning_rate > Scalar(0))) {
      throw InvalidParameter("fit learning_rate must be > 0");
    }
    if (max_steps < 1) {
      throw InvalidParameter("fit max_steps must be >= 1");
    }
    if (!(tolerance > Scalar(0))) {
      throw InvalidParameter("fit tolerance must be > 0");
    }
    quadrature.validate();
  }
};

template <typename Scalar>
struct FitStep
{
  int step = 0;
  Scalar loss = Scalar(0);
  Scalar learning_rate = Scalar(0);
  BoxParams<Scalar> params = BoxParams<Scalar>::Zero();
};

template <typename Scalar>
struct FitResult
{
  BoxParams<Scalar> theta_star = BoxParams<Scalar>::Zero();
  Scalar initial_loss = Scalar(0);
  Scalar final_loss = Scalar(0);
  int steps_used = 0;
  bool converged = false;
  std::vector<FitStep<Scalar>> trace;
};

template <typename Scalar>
std::string format_trace(const std::vector<FitStep<Scalar>> & trace)
{
  std::ostringstream out;
  out << fmt::format("{:>6} {:>14} {:>11} {:>11} {:>11} {:>11} {:>11} {:>11}\n", "step", "loss",
                     "lr", "mu_x", "mu_y", "mu_w", "mu_h", "k");
  for (const auto & s : trace) {
    out << fmt::format("{:>6} {:>14.6e} {:>11.3e} {:>11.6f} {:>11.6f} {:>11.6f} {:>11.6f} {:>11.6f}\n",
                       s.step, static_cast<double>(s.loss),
                       static_cast<double>(s.learning_rate),
                       static_cast<double>(s.params[mu_x]), static_cast<double>(s.params[mu_y]),
                       static_cast<double>(s.params[mu_w]), static_cast<double>(s.params[mu_h]),
                       static_cast<double>(s.params[scale_k]));
  }
  return out.str();
}

/// Minimizes box_objective from `init`. A step that would raise the loss is
/// retried with half the learning rate; the reduced rate is kept. The loss
/// trace is therefore non-increasing.
template <typename Scalar>
FitResult<Scalar> fit_box(const BoxParams<Scalar> & init, const GaussianBox<Scalar> & gt,
                          DivergenceKind kind, const FitConfig<Scalar> & cfg = {})
{
  cfg.validate();
  auto loss_at = [&](const BoxParams<Scalar> & p) {
    try {
      const Scalar v = box_objective(p, gt, kind, cfg.quadrature);
      return std::isfinite(static_cast<double>(v)) ? v : std::numeric_limits<Scalar>::infinity();
    } catch (const InvalidParameter &) {
      return std::numeric_limits<Scalar>::infinity();
    }
  };

  FitResult<Scalar> result;
  BoxParams<Scalar> params = init;
  Scalar loss = box_objective(init, gt, kind, cfg.quadrature);
  Scalar lr = cfg.learning_rate;
  result.initial_loss = loss;
  result.trace.push_back({0, loss, lr, params});

  int step = 0;
  while (loss >= cfg.tolerance && step < cfg.max_steps) {
    const BoxParams<Scalar> grad = box_divergence_gradient(params, gt, kind, cfg.quadrature);
    int halvings = 0;
    BoxParams<Scalar> next = params - lr * grad;
    Scalar next_loss = loss_at(next);
    while (next_loss > loss) {
      if (++halvings > cfg.max_halvings) {
        throw OptimizationFailure(
          fmt::format("fit_box: loss still increasing after {} step halvings at step {}",
                      cfg.max_halvings, step + 1),
          format_trace(result.trace));
      }
      lr /= Scalar(2);
      next = params - lr * grad;
      next_loss = loss_at(next);
    }
    ++step;
    params = next;
    loss = next_loss;
    result.trace.push_back({step, loss, lr, params});
  }

  result.theta_star = params;
  result.final_loss = loss;
  result.steps_used = step;
  result.converged = loss < cfg.tolerance;
  return result;
}

}  // namespace fvd::divergence

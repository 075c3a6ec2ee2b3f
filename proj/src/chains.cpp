#include "freelunch/chains.hpp"

#include <cmath>
#include <deque>

#include "freelunch/errors.hpp"

namespace freelunch {

long default_burn(double gamma) {
  if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("default_burn requires gamma in (0,1]");
  if (gamma == 1.0) return 1;  // one step removes the initialization exactly
  return 1 + std::lround(std::log(0.01) / std::log(1.0 - gamma));
}

void ChainConfig::validate(const ObjectiveModel& model) const {
  if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("learning rate gamma must lie in (0,1]");
  if (B < 1) throw ConfigError("chain needs B >= 1 retained draws");
  if (burn < -1) throw ConfigError("burn must be nonnegative (or -1 for the default)");
  if (theta0.size() != model.dimension()) throw ConfigError("theta0 has wrong dimension");
  if (plan.n != model.sample_size()) throw ConfigError("resampling plan does not match the sample size");
  if (hessian_every_k < 1) throw ConfigError("hessian_every_k must be >= 1");
  if (!(rejection_factor > 0.0)) throw ConfigError("rejection factor must be positive (inf disables)");
  plan.validate();
}

Matrix DrawHistory::all_draws() const {
  Matrix all(burn_draws.rows() + draws.rows(), draws.cols());
  if (burn_draws.rows() > 0) all.topRows(burn_draws.rows()) = burn_draws;
  all.bottomRows(draws.rows()) = draws;
  return all;
}

DrawHistory run_resampled_chain(const ObjectiveModel& model, const ChainConfig& config) {
  config.validate(model);
  const long d = model.dimension();
  const long burn = config.resolved_burn();
  const long total_iters = burn + config.B;
  const bool reject_enabled = std::isfinite(config.rejection_factor);
  const bool needs_hessian = config.conditioning != ConditioningKind::Identity &&
                             config.conditioning != ConditioningKind::BFGSApprox;

  DrawHistory history;
  history.config = config;
  history.config.burn = burn;
  history.n = model.sample_size();
  history.m = config.plan.effective_m();
  history.draws.resize(config.B, d);
  history.burn_draws.resize(burn, d);
  history.batch_stream_ids.reserve(static_cast<size_t>(total_iters));

  Vector theta = config.theta0;
  double q_current = reject_enabled ? model.value_full(theta) : 0.0;

  BFGSState bfgs;
  bool bfgs_ready = false;
  if (config.conditioning == ConditioningKind::BFGSApprox) {
    const Evaluation full = model.evaluate_full(theta, false, true);
    bfgs.approximation = full.hessian;
  }

  Matrix cached_hessian;
  std::deque<bool> window;
  long window_rejections = 0;

  for (long t = 1; t <= total_iters; ++t) {
    const std::uint64_t stream_id = config.stream + static_cast<std::uint64_t>(t);
    history.batch_stream_ids.push_back(stream_id);
    RngStream rng(config.seed, stream_id);
    const BatchSelector batch = draw_batch(config.plan, rng);

    const bool refresh = needs_hessian && ((t - 1) % config.hessian_every_k == 0 || cached_hessian.size() == 0);
    Evaluation eval;
    try {
      eval = model.evaluate(theta, batch, true, refresh);
    } catch (const EvaluationError& err) {
      throw EvaluationError("iteration " + std::to_string(t) + ": " + err.what(), err.theta(),
                            err.observation());
    }
    if (refresh) cached_hessian = eval.hessian;

    Vector step;
    if (config.conditioning == ConditioningKind::BFGSApprox) {
      if (bfgs_ready) {
        bfgs = bfgs_update(bfgs, theta, eval.gradient);
      } else {
        bfgs.theta = theta;
        bfgs.gradient = eval.gradient;
        bfgs_ready = true;
      }
      step = direction(config.conditioning, bfgs.approximation, eval.gradient,
                       config.conditioning_options);
    } else if (needs_hessian) {
      step = direction(config.conditioning, cached_hessian, eval.gradient,
                       config.conditioning_options);
    } else {
      step = eval.gradient;
    }

    Vector proposal = theta - config.gamma * step;
    bool rejected = false;
    if (reject_enabled) {
      double q_new = std::numeric_limits<double>::infinity();
      if (proposal.allFinite()) {
        try {
          q_new = model.value_full(proposal);
        } catch (const EvaluationError&) {
          // an unevaluable proposal counts as an infinite objective
        }
      }
      if (!(q_new <= config.rejection_factor * q_current)) {
        rejected = true;
        ++history.rejection_count;
        if (config.conditioning == ConditioningKind::BFGSApprox) {
          // Reset the approximation at the current draw; the chain stays put.
          bfgs.approximation = model.evaluate_full(theta, false, true).hessian;
          bfgs_ready = false;
        }
      } else {
        theta = std::move(proposal);
        q_current = q_new;
      }
    } else {
      theta = std::move(proposal);
    }

    window.push_back(rejected);
    if (rejected) ++window_rejections;
    if (window.size() > 100) {
      if (window.front()) --window_rejections;
      window.pop_front();
    }
    if (window.size() == 100 && window_rejections > 50)
      throw DivergenceError("more than half of the last 100 proposals rejected; decrease gamma");

    if (!theta.allFinite())
      throw DivergenceError("chain diverged to non-finite values at iteration " + std::to_string(t) +
                            "; decrease gamma");

    if (t <= burn)
      history.burn_draws.row(t - 1) = theta;
    else
      history.draws.row(t - burn - 1) = theta;
  }
  return history;
}

std::pair<DrawHistory, InferenceReport> run_free_lunch(const ObjectiveModel& model,
                                                       const ChainConfig& config, double alpha) {
  ChainConfig cfg = config;
  if (cfg.conditioning == ConditioningKind::Identity)
    cfg.conditioning = ConditioningKind::InverseHessian;
  DrawHistory history = run_resampled_chain(model, cfg);

  SummarizeInputs inputs;
  inputs.m = history.m;
  inputs.n = history.n;
  inputs.gamma = cfg.gamma;
  inputs.alpha = alpha;
  inputs.method = std::string("rnr_") + to_string(cfg.conditioning);
  inputs.seed = cfg.seed;
  InferenceReport report = summarize(history.draws, inputs);
  if (history.draws.rows() >= 30) report.ar1 = ar1_diagnostic(history.draws, cfg.gamma);
  return {std::move(history), std::move(report)};
}

namespace {

// Batch objective value that treats a blow-up as +inf for step control.
double guarded_value(const ObjectiveModel& model, const Vector& theta, const BatchSelector& batch) {
  if (!theta.allFinite()) return std::numeric_limits<double>::infinity();
  try {
    return model.evaluate(theta, batch, false, false).value;
  } catch (const EvaluationError&) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace

ClassicalResult minimize_batch(const ObjectiveModel& model, const BatchSelector& batch,
                               const Vector& theta0, const OptimizerConfig& optimizer,
                               ConditioningKind kind) {
  if (optimizer.tol <= 0.0) throw ConfigError("classical optimizer needs tol > 0");
  ClassicalResult result;
  result.theta = theta0;
  const bool needs_hessian = kind != ConditioningKind::Identity;
  double value = guarded_value(model, theta0, batch);
  for (long k = 0; k < optimizer.max_iter; ++k) {
    const Evaluation eval = model.evaluate(result.theta, batch, true, needs_hessian);
    if (eval.gradient.norm() <= optimizer.tol * (1.0 + result.theta.norm())) {
      result.converged = true;
      return result;
    }
    Vector step;
    if (!needs_hessian) {
      step = eval.gradient;
    } else {
      step = direction(kind, eval.hessian, eval.gradient, optimizer.conditioning_options);
      // Outside the convex region the repaired Newton direction can point
      // uphill; the symmetrized square root restores a descent direction.
      if (kind == ConditioningKind::InverseHessian && step.dot(eval.gradient) <= 0.0)
        step = direction(ConditioningKind::InverseSqrtSymmetrized, eval.hessian, eval.gradient,
                         optimizer.conditioning_options);
    }
    // Monotone damping: halve the step until the objective stops increasing.
    double rate = optimizer.gamma;
    Vector proposal = result.theta - rate * step;
    double proposed = guarded_value(model, proposal, batch);
    int halvings = 0;
    while (proposed > value + 1e-12 * (1.0 + std::abs(value)) && halvings < 60) {
      rate *= 0.5;
      proposal = result.theta - rate * step;
      proposed = guarded_value(model, proposal, batch);
      ++halvings;
    }
    if (halvings >= 60) return result;  // stuck: report the last iterate
    result.theta = std::move(proposal);
    value = proposed;
    ++result.iterations;
  }
  const Evaluation last = model.evaluate(result.theta, batch, true, false);
  result.converged = last.gradient.norm() <= optimizer.tol * (1.0 + result.theta.norm());
  return result;
}

ClassicalResult classical_newton(const ObjectiveModel& model, const Vector& theta0, double gamma,
                                 long max_iter, double tol, const ConditioningOptions& options) {
  OptimizerConfig optimizer;
  optimizer.gamma = gamma;
  optimizer.max_iter = max_iter;
  optimizer.tol = tol;
  optimizer.conditioning_options = options;
  return minimize_batch(model, BatchSelector::full_sample(model.sample_size()), theta0, optimizer,
                        ConditioningKind::InverseHessian);
}

ClassicalResult classical_gd(const ObjectiveModel& model, const Vector& theta0, double gamma,
                             long max_iter, double tol) {
  OptimizerConfig optimizer;
  optimizer.gamma = gamma;
  optimizer.max_iter = max_iter;
  optimizer.tol = tol;
  return minimize_batch(model, BatchSelector::full_sample(model.sample_size()), theta0, optimizer,
                        ConditioningKind::Identity);
}

SgdResult sgd_polyak(const ObjectiveModel& model, const Vector& theta0, double gamma, double delta,
                     long m, long K, std::uint64_t seed, std::uint64_t stream) {
  if (delta <= 0.5 || delta > 1.0) throw ConfigError("sgd_polyak requires delta in (1/2, 1]");
  if (K < 1) throw ConfigError("sgd_polyak needs K >= 1");
  const ResamplePlan plan = ResamplePlan::iid(model.sample_size(), m);
  SgdResult result;
  result.trace.resize(K, model.dimension());
  Vector theta = theta0;
  Vector sum = Vector::Zero(model.dimension());
  for (long k = 1; k <= K; ++k) {
    RngStream rng(seed, stream + static_cast<std::uint64_t>(k));
    const BatchSelector batch = draw_batch(plan, rng);
    const Evaluation eval = model.evaluate(theta, batch, true, false);
    const double rate = gamma * std::pow(static_cast<double>(k), -delta);
    theta -= rate * eval.gradient;
    if (!theta.allFinite())
      throw DivergenceError("sgd diverged at iteration " + std::to_string(k) + "; decrease gamma");
    result.trace.row(k - 1) = theta;
    sum += theta;
  }
  result.theta_bar = sum / static_cast<double>(K);
  return result;
}

ContractionReport contraction_factor(const ObjectiveModel& model, const std::vector<Vector>& grid,
                                     double gamma, ConditioningKind kind) {
  if (grid.empty()) throw ConfigError("contraction_factor needs a nonempty grid");
  std::vector<Matrix> hessians;
  hessians.reserve(grid.size());
  double lmin = std::numeric_limits<double>::infinity();
  double lmax = -std::numeric_limits<double>::infinity();
  for (const Vector& theta : grid) {
    hessians.push_back(model.evaluate_full(theta, false, true).hessian);
    Eigen::SelfAdjointEigenSolver<Matrix> es(hessians.back(), Eigen::EigenvaluesOnly);
    lmin = std::min(lmin, es.eigenvalues().minCoeff());
    lmax = std::max(lmax, es.eigenvalues().maxCoeff());
  }
  ContractionReport rep;
  rep.lambda_min_H = lmin;
  rep.lambda_max_H = lmax;
  if (kind == ConditioningKind::Identity) {
    rep.product_min = lmin;
    rep.product_max = lmax;
  } else if (lmin <= 0.0) {
    // conditioning undefined outside the convex region: no finite bound
    rep.product_min = 0.0;
    rep.product_max = std::numeric_limits<double>::infinity();
  } else {
    // bounds on eig(H(a)^{-1} H(b)) across grid pairs; the same-point
    // product is the identity
    rep.product_min = 1.0;
    rep.product_max = 1.0;
    for (size_t a = 0; a < hessians.size(); ++a) {
      for (size_t b = 0; b < hessians.size(); ++b) {
        if (a == b) continue;
        Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(hessians[b], hessians[a],
                                                             Eigen::EigenvaluesOnly);
        rep.product_min = std::min(rep.product_min, ges.eigenvalues().minCoeff());
        rep.product_max = std::max(rep.product_max, ges.eigenvalues().maxCoeff());
      }
    }
  }
  rep.A = 1.0 - 2.0 * gamma * rep.product_min + gamma * gamma * rep.product_max * rep.product_max;
  rep.contraction = rep.A >= 0.0 && rep.A < 1.0;
  rep.rate = rep.A >= 0.0 ? std::sqrt(rep.A) : 0.0;
  return rep;
}

}  // namespace freelunch

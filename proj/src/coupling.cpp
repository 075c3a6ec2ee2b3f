#include "freelunch/coupling.hpp"

#include "freelunch/errors.hpp"

namespace freelunch {

CouplingReport coupling_sequence(const ObjectiveModel& model, const Vector& theta_hat,
                                 const DrawHistory& history) {
  const ChainConfig& config = history.config;
  const long burn = config.resolved_burn();
  const long total = burn + config.B;
  if (static_cast<long>(history.batch_stream_ids.size()) != total)
    throw ConfigError("coupling replay metadata is missing or incomplete");
  const bool newton = config.conditioning == ConditioningKind::InverseHessian;
  if (!newton && config.conditioning != ConditioningKind::Identity)
    throw ConfigError("coupling sequence is defined for identity and inverse-Hessian conditioning");

  const long d = model.dimension();
  const double gamma = config.gamma;
  const Matrix chain = history.all_draws();

  Matrix psi;  // companion AR coefficient for identity conditioning
  if (!newton) {
    const Matrix H_full = model.evaluate_full(theta_hat, false, true).hessian;
    psi = Matrix::Identity(d, d) - gamma * H_full;
  }

  CouplingReport rep;
  rep.linearized.resize(total, d);
  rep.distance.resize(total);

  Vector dev = config.theta0 - theta_hat;
  for (long t = 0; t < total; ++t) {
    RngStream rng(config.seed, history.batch_stream_ids[static_cast<size_t>(t)]);
    const BatchSelector batch = draw_batch(config.plan, rng);
    const Evaluation eval = model.evaluate(theta_hat, batch, true, newton);
    Vector innovation;
    if (newton) {
      innovation = -gamma * direction(ConditioningKind::InverseHessian, eval.hessian,
                                      eval.gradient, config.conditioning_options);
      dev = (1.0 - gamma) * dev + innovation;
    } else {
      dev = psi * dev - gamma * eval.gradient;
    }
    rep.linearized.row(t) = (theta_hat + dev).transpose();
    rep.distance[t] = (chain.row(t).transpose() - (theta_hat + dev)).norm();
  }

  double dist = 0.0, devn = 0.0;
  for (long t = burn; t < total; ++t) {
    dist += rep.distance[t];
    devn += (chain.row(t).transpose() - theta_hat).norm();
  }
  rep.mean_post_burn_distance = dist / static_cast<double>(config.B);
  rep.mean_post_burn_deviation = devn / static_cast<double>(config.B);
  return rep;
}

}  // namespace freelunch

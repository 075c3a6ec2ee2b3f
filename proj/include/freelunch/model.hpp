#pragma once

#include <memory>

#include "freelunch/batch.hpp"
#include "freelunch/dataset.hpp"

namespace freelunch {

/// Result of one objective evaluation on a batch. `value` is the
/// batch-averaged objective; gradient/hessian are filled when requested.
/// `clamp_events` counts probability clamps (probit underflow guard).
struct Evaluation {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
  long clamp_events = 0;
};

/// An extremum-estimation objective Q with subsample-aware evaluation.
///
/// Evaluation is read-only and safe to call concurrently; models are
/// immutable after construction. The batch-averaged convention: index mode
/// divides the summed per-observation terms by m, weight mode by the total
/// weight, so indices (1..n) and unit weights both reproduce the full-sample
/// objective exactly.
class ObjectiveModel {
 public:
  virtual ~ObjectiveModel() = default;

  long dimension() const { return dimension_; }
  long sample_size() const { return sample_size_; }

  bool has_analytic_gradient() const { return analytic_gradient_; }
  bool has_analytic_hessian() const { return analytic_hessian_; }
  bool has_observation_scores() const { return per_observation_scores_; }

  /// Batch-averaged value, gradient and Hessian at theta. The returned
  /// Hessian is symmetric as stored.
  Evaluation evaluate(const Vector& theta, const BatchSelector& batch,
                      bool want_gradient = true, bool want_hessian = true) const;

  Evaluation evaluate_full(const Vector& theta, bool want_gradient = true,
                           bool want_hessian = true) const;

  /// Full-sample objective value only (rejection-safeguard path).
  double value_full(const Vector& theta) const;

  /// Per-observation gradient contributions g_i at theta, one column per
  /// observation, such that the full-sample gradient is their mean.
  /// Throws CapabilityError when the model cannot decompose its score.
  virtual Matrix observation_scores(const Vector& theta) const;

 protected:
  ObjectiveModel(long dimension, long sample_size) : dimension_(dimension), sample_size_(sample_size) {}

  virtual Evaluation evaluate_impl(const Vector& theta, const BatchSelector& batch,
                                   bool want_gradient, bool want_hessian) const = 0;

  void set_capabilities(bool analytic_gradient, bool analytic_hessian, bool per_observation_scores) {
    analytic_gradient_ = analytic_gradient;
    analytic_hessian_ = analytic_hessian;
    per_observation_scores_ = per_observation_scores;
  }

 private:
  long dimension_;
  long sample_size_;
  bool analytic_gradient_ = false;
  bool analytic_hessian_ = false;
  bool per_observation_scores_ = false;
};

using ModelPtr = std::shared_ptr<const ObjectiveModel>;

}  // namespace freelunch

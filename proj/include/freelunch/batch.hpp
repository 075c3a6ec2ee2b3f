#pragma once

#include <cstdint>
#include <vector>

#include "freelunch/dataset.hpp"

namespace freelunch {

/// One realized resampling draw: either a list of row indices (0-based,
/// repeats allowed, size m >= 1) or a nonnegative weight per row (finite,
/// not all zero). Index mode averages the selected per-observation terms by
/// m; weight mode averages all terms by the total weight.
class BatchSelector {
 public:
  static BatchSelector indices(std::vector<long> idx);
  static BatchSelector weights(Vector w);
  static BatchSelector full_sample(long n);

  bool is_weighted() const { return weighted_; }
  const std::vector<long>& index_list() const { return idx_; }
  const Vector& weight_vector() const { return w_; }

  /// m in index mode, row count in weight mode.
  long size() const { return weighted_ ? w_.size() : static_cast<long>(idx_.size()); }

  /// Throws ConfigError when invalid for a sample of n rows.
  void validate(long n) const;

  /// True when the index list is t, t+1, ..., t+m-1 (a single block).
  bool is_contiguous_block() const;

 private:
  bool weighted_ = false;
  std::vector<long> idx_;
  Vector w_;
};

}  // namespace freelunch

#include "freelunch/batch.hpp"

#include <cmath>
#include <numeric>

#include "freelunch/errors.hpp"

namespace freelunch {

BatchSelector BatchSelector::indices(std::vector<long> idx) {
  BatchSelector b;
  b.weighted_ = false;
  b.idx_ = std::move(idx);
  return b;
}

BatchSelector BatchSelector::weights(Vector w) {
  BatchSelector b;
  b.weighted_ = true;
  b.w_ = std::move(w);
  return b;
}

BatchSelector BatchSelector::full_sample(long n) {
  std::vector<long> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0L);
  return indices(std::move(idx));
}

void BatchSelector::validate(long n) const {
  if (weighted_) {
    if (w_.size() != n) throw ConfigError("weight vector length must equal the sample size");
    double total = 0.0;
    for (long i = 0; i < w_.size(); ++i) {
      if (!std::isfinite(w_[i]) || w_[i] < 0.0) throw ConfigError("weights must be finite and nonnegative");
      total += w_[i];
    }
    if (total <= 0.0) throw ConfigError("weights must not all be zero");
  } else {
    if (idx_.empty()) throw ConfigError("index batch must contain at least one index");
    for (long i : idx_)
      if (i < 0 || i >= n) throw ConfigError("batch index out of range");
  }
}

bool BatchSelector::is_contiguous_block() const {
  if (weighted_ || idx_.empty()) return false;
  for (size_t k = 1; k < idx_.size(); ++k)
    if (idx_[k] != idx_[k - 1] + 1) return false;
  return true;
}

}  // namespace freelunch

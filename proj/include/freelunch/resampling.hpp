#pragma once

#include <string>
#include <vector>

#include "freelunch/batch.hpp"
#include "freelunch/rng.hpp"

namespace freelunch {

enum class ResampleScheme {
  IIDWithReplacement,       // m indices uniform on the rows, with replacement
  MovingBlock,              // contiguous run of m rows, random start
  ClusterWithReplacement,   // m_clusters whole clusters, with replacement
  ExponentialWeights,       // n iid Exponential(1) weights
};

const char* to_string(ResampleScheme scheme);
ResampleScheme scheme_from_string(const std::string& name);

/// A resampling scheme bound to a sample. Cluster plans carry the row ids of
/// each cluster level so a drawn cluster contributes all and only its rows.
struct ResamplePlan {
  ResampleScheme scheme = ResampleScheme::IIDWithReplacement;
  long n = 0;          // sample size
  long m = 0;          // batch size (rows for IID/block, clusters for cluster)
  std::vector<std::vector<long>> cluster_rows;  // cluster scheme only

  static ResamplePlan iid(long n, long m);
  static ResamplePlan moving_block(long n, long m);
  static ResamplePlan cluster(const std::vector<int>& cluster_ids, long m_clusters = -1);
  static ResamplePlan exponential_weights(long n);

  /// Effective batch size entering the variance adjustment: m for index
  /// schemes, n for exponential reweighting.
  long effective_m() const;

  void validate() const;
};

/// One realized batch. IID and block draws emit indices, the cluster scheme
/// concatenates the rows of the drawn clusters, exponential weights emit a
/// weight per row.
BatchSelector draw_batch(const ResamplePlan& plan, RngStream& rng);

/// n iid Exponential(1) weights.
Vector exponential_weights(long n, RngStream& rng);

}  // namespace freelunch

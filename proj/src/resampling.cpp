#include "freelunch/resampling.hpp"

#include <algorithm>

#include "freelunch/errors.hpp"

namespace freelunch {

const char* to_string(ResampleScheme scheme) {
  switch (scheme) {
    case ResampleScheme::IIDWithReplacement: return "iid";
    case ResampleScheme::MovingBlock: return "block";
    case ResampleScheme::ClusterWithReplacement: return "cluster";
    case ResampleScheme::ExponentialWeights: return "expweights";
  }
  return "unknown";
}

ResampleScheme scheme_from_string(const std::string& name) {
  if (name == "iid") return ResampleScheme::IIDWithReplacement;
  if (name == "block") return ResampleScheme::MovingBlock;
  if (name == "cluster") return ResampleScheme::ClusterWithReplacement;
  if (name == "expweights") return ResampleScheme::ExponentialWeights;
  throw ConfigError("unknown resampling scheme: " + name);
}

ResamplePlan ResamplePlan::iid(long n, long m) {
  ResamplePlan p;
  p.scheme = ResampleScheme::IIDWithReplacement;
  p.n = n;
  p.m = m;
  p.validate();
  return p;
}

ResamplePlan ResamplePlan::moving_block(long n, long m) {
  ResamplePlan p;
  p.scheme = ResampleScheme::MovingBlock;
  p.n = n;
  p.m = m;
  p.validate();
  return p;
}

ResamplePlan ResamplePlan::cluster(const std::vector<int>& cluster_ids, long m_clusters) {
  if (cluster_ids.empty()) throw ConfigError("cluster resampling requires cluster ids");
  ResamplePlan p;
  p.scheme = ResampleScheme::ClusterWithReplacement;
  p.n = static_cast<long>(cluster_ids.size());
  std::vector<int> levels;
  for (size_t i = 0; i < cluster_ids.size(); ++i) {
    auto it = std::find(levels.begin(), levels.end(), cluster_ids[i]);
    size_t level;
    if (it == levels.end()) {
      levels.push_back(cluster_ids[i]);
      p.cluster_rows.emplace_back();
      level = levels.size() - 1;
    } else {
      level = static_cast<size_t>(it - levels.begin());
    }
    p.cluster_rows[level].push_back(static_cast<long>(i));
  }
  // Batch size is measured in clusters; the default is all of them.
  p.m = (m_clusters > 0) ? m_clusters : static_cast<long>(p.cluster_rows.size());
  p.validate();
  return p;
}

ResamplePlan ResamplePlan::exponential_weights(long n) {
  ResamplePlan p;
  p.scheme = ResampleScheme::ExponentialWeights;
  p.n = n;
  p.m = n;
  p.validate();
  return p;
}

long ResamplePlan::effective_m() const {
  if (scheme == ResampleScheme::ExponentialWeights) return n;
  if (scheme == ResampleScheme::ClusterWithReplacement) {
    // average rows per cluster times clusters drawn
    return std::max<long>(1, m * n / static_cast<long>(cluster_rows.size()));
  }
  return m;
}

void ResamplePlan::validate() const {
  if (n < 1) throw ConfigError("resampling plan needs n >= 1");
  switch (scheme) {
    case ResampleScheme::IIDWithReplacement:
    case ResampleScheme::MovingBlock:
      if (m < 1 || m > n) throw ConfigError("batch size m must satisfy 1 <= m <= n");
      break;
    case ResampleScheme::ClusterWithReplacement: {
      if (cluster_rows.empty()) throw ConfigError("cluster plan has no clusters");
      const long levels = static_cast<long>(cluster_rows.size());
      if (m < 1 || m > levels)
        throw ConfigError("cluster batch size must satisfy 1 <= m_clusters <= #clusters");
      break;
    }
    case ResampleScheme::ExponentialWeights:
      break;
  }
}

BatchSelector draw_batch(const ResamplePlan& plan, RngStream& rng) {
  plan.validate();
  switch (plan.scheme) {
    case ResampleScheme::IIDWithReplacement: {
      std::vector<long> idx(static_cast<size_t>(plan.m));
      for (auto& i : idx) i = static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(plan.n)));
      return BatchSelector::indices(std::move(idx));
    }
    case ResampleScheme::MovingBlock: {
      const long starts = plan.n - plan.m + 1;
      const long t = static_cast<long>(rng.uniform_index(static_cast<std::uint64_t>(starts)));
      std::vector<long> idx(static_cast<size_t>(plan.m));
      for (long k = 0; k < plan.m; ++k) idx[static_cast<size_t>(k)] = t + k;
      return BatchSelector::indices(std::move(idx));
    }
    case ResampleScheme::ClusterWithReplacement: {
      std::vector<long> idx;
      const auto levels = static_cast<std::uint64_t>(plan.cluster_rows.size());
      for (long k = 0; k < plan.m; ++k) {
        const auto c = rng.uniform_index(levels);
        const auto& rows = plan.cluster_rows[static_cast<size_t>(c)];
        idx.insert(idx.end(), rows.begin(), rows.end());
      }
      return BatchSelector::indices(std::move(idx));
    }
    case ResampleScheme::ExponentialWeights:
      return BatchSelector::weights(exponential_weights(plan.n, rng));
  }
  throw Error("unreachable resampling scheme");
}

Vector exponential_weights(long n, RngStream& rng) {
  if (n < 1) throw ConfigError("exponential weights need n >= 1");
  Vector w(n);
  for (long i = 0; i < n; ++i) w[i] = rng.exponential();
  return w;
}

}  // namespace freelunch

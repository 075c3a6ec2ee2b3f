#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace freelunch {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A rectangular sample of n observations by p variables, plus the roles
/// needed by the estimation problems: an optional response column, optional
/// cluster ids (must cover every row), and a time-series flag (row order is
/// meaningful and block resampling applies).
struct DataSet {
  Matrix rows;                             // n x p
  std::vector<std::string> columns;        // p names
  std::optional<int> response_col;
  std::vector<int> cluster_ids;            // empty or length n
  bool is_time_series = false;

  long n() const { return rows.rows(); }
  long p() const { return rows.cols(); }
  bool has_clusters() const { return !cluster_ids.empty(); }

  /// Throws ConfigError if the invariants above are violated.
  void validate() const;

  /// Response vector / remaining columns as a design matrix, in column order.
  Vector response() const;
  Matrix design() const;

  int column_index(const std::string& name) const;

  /// Distinct cluster ids in order of first appearance.
  std::vector<int> cluster_levels() const;

  /// Rows whose cluster id differs from `excluded`.
  DataSet excluding_cluster(int excluded) const;
};

struct CsvOptions {
  std::optional<std::string> response;  // column name
  std::optional<std::string> cluster;   // column name
  bool time_series = false;
};

/// Reads a comma-separated file: UTF-8, header row, '.' decimal.
/// The cluster column (when named) is parsed to integer ids and excluded from
/// the numeric data columns.
DataSet read_csv(const std::string& path, const CsvOptions& options = {});

}  // namespace freelunch

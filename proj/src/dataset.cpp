#include "freelunch/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "freelunch/errors.hpp"

namespace freelunch {

void DataSet::validate() const {
  if (rows.rows() < 1) throw ConfigError("dataset must contain at least one row");
  if (static_cast<long>(columns.size()) != rows.cols())
    throw ConfigError("column name count does not match data width");
  if (!cluster_ids.empty() && static_cast<long>(cluster_ids.size()) != rows.rows())
    throw ConfigError("cluster ids must cover every row");
  if (response_col && (*response_col < 0 || *response_col >= rows.cols()))
    throw ConfigError("response column index out of range");
}

Vector DataSet::response() const {
  if (!response_col) throw ConfigError("dataset has no response column");
  return rows.col(*response_col);
}

Matrix DataSet::design() const {
  if (!response_col) return rows;
  Matrix X(rows.rows(), rows.cols() - 1);
  long j = 0;
  for (long c = 0; c < rows.cols(); ++c) {
    if (c == *response_col) continue;
    X.col(j++) = rows.col(c);
  }
  return X;
}

int DataSet::column_index(const std::string& name) const {
  auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw ConfigError("unknown column: " + name);
  return static_cast<int>(it - columns.begin());
}

std::vector<int> DataSet::cluster_levels() const {
  std::vector<int> levels;
  for (int id : cluster_ids)
    if (std::find(levels.begin(), levels.end(), id) == levels.end()) levels.push_back(id);
  return levels;
}

DataSet DataSet::excluding_cluster(int excluded) const {
  if (cluster_ids.empty()) throw ConfigError("dataset has no cluster ids");
  std::vector<long> keep;
  for (long i = 0; i < n(); ++i)
    if (cluster_ids[static_cast<size_t>(i)] != excluded) keep.push_back(i);
  DataSet out;
  out.columns = columns;
  out.response_col = response_col;
  out.is_time_series = is_time_series;
  out.rows.resize(static_cast<long>(keep.size()), p());
  out.cluster_ids.reserve(keep.size());
  for (size_t r = 0; r < keep.size(); ++r) {
    out.rows.row(static_cast<long>(r)) = rows.row(keep[r]);
    out.cluster_ids.push_back(cluster_ids[static_cast<size_t>(keep[r])]);
  }
  return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_number(const std::string& s, long line_no, const std::string& col) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    std::ostringstream msg;
    msg << "line " << line_no << ", column '" << col << "': cannot parse '" << s << "'";
    throw ParseError(msg.str());
  }
  return value;
}

}  // namespace

DataSet read_csv(const std::string& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const auto header = split_line(line);

  int cluster_col = -1;
  if (options.cluster) {
    auto it = std::find(header.begin(), header.end(), *options.cluster);
    if (it == header.end()) throw ConfigError("cluster column '" + *options.cluster + "' not in header");
    cluster_col = static_cast<int>(it - header.begin());
  }

  std::vector<std::vector<double>> data;
  std::vector<int> clusters;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_line(line);
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << "line " << line_no << ": expected " << header.size() << " fields, got " << fields.size();
      throw ParseError(msg.str());
    }
    std::vector<double> row;
    row.reserve(header.size());
    for (size_t c = 0; c < fields.size(); ++c) {
      if (static_cast<int>(c) == cluster_col) {
        clusters.push_back(static_cast<int>(std::llround(parse_number(fields[c], line_no, header[c]))));
      } else {
        row.push_back(parse_number(fields[c], line_no, header[c]));
      }
    }
    data.push_back(std::move(row));
  }
  if (data.empty()) throw ParseError(path + ": no data rows");

  DataSet out;
  for (size_t c = 0; c < header.size(); ++c)
    if (static_cast<int>(c) != cluster_col) out.columns.push_back(header[c]);
  out.rows.resize(static_cast<long>(data.size()), static_cast<long>(out.columns.size()));
  for (size_t r = 0; r < data.size(); ++r)
    for (size_t c = 0; c < data[r].size(); ++c)
      out.rows(static_cast<long>(r), static_cast<long>(c)) = data[r][c];
  out.cluster_ids = std::move(clusters);
  out.is_time_series = options.time_series;
  if (options.response) out.response_col = out.column_index(*options.response);
  out.validate();
  return out;
}

}  // namespace freelunch

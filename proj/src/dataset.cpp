#include "sparsevb/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "sparsevb/vbl.hpp"

namespace sparsevb {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

}  // namespace

VectorXd TabularDataset::coefficients_raw(const VectorXd& beta_std) const {
  return beta_std.cwiseQuotient(col_scale);
}

double TabularDataset::predict_raw(const VectorXd& beta_std, const VectorXd& x_raw) const {
  const VectorXd xs = (x_raw - col_center).cwiseQuotient(col_scale);
  return xs.dot(beta_std) + y_center;
}

TabularDataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file", 0, 0);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_csv_line(line);
  const long ncol = long(header.size());
  if (ncol < 2) throw ParseError("need at least two columns", 0, ncol);

  long label_idx = -1;
  for (long j = 0; j < ncol; ++j)
    if (header[j] == label_column) label_idx = j;
  if (label_idx < 0) {
    try {
      const long as_index = std::stol(label_column);
      if (as_index >= 0 && as_index < ncol) label_idx = as_index;
    } catch (...) {
    }
  }
  if (label_idx < 0)
    throw std::invalid_argument("load_csv: label column '" + label_column + "' not found");

  std::vector<std::vector<double>> rows;
  long rowno = 0;
  while (std::getline(in, line)) {
    ++rowno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_line(line);
    if (long(cells.size()) != ncol)
      throw ParseError("ragged row: expected " + std::to_string(ncol) + " cells, got " +
                           std::to_string(cells.size()),
                       rowno, long(cells.size()));
    std::vector<double> vals(ncol);
    for (long j = 0; j < ncol; ++j) {
      try {
        std::size_t used = 0;
        vals[std::size_t(j)] = std::stod(cells[std::size_t(j)], &used);
        if (used != cells[std::size_t(j)].size()) throw std::invalid_argument("trailing");
      } catch (...) {
        throw ParseError("non-numeric cell '" + cells[std::size_t(j)] + "'", rowno, j);
      }
      if (!std::isfinite(vals[std::size_t(j)])) throw ParseError("non-finite cell", rowno, j);
    }
    rows.push_back(std::move(vals));
  }
  const long n = long(rows.size());
  if (n < 2) throw ParseError("need at least two data rows", n, 0);

  TabularDataset d;
  const long p = ncol - 1;
  d.X.resize(n, p);
  d.Y.resize(n);
  long jj = 0;
  for (long j = 0; j < ncol; ++j) {
    if (j == label_idx) continue;
    d.feature_names.push_back(header[std::size_t(j)]);
    for (long i = 0; i < n; ++i) d.X(i, jj) = rows[std::size_t(i)][std::size_t(j)];
    ++jj;
  }
  for (long i = 0; i < n; ++i) d.Y(i) = rows[std::size_t(i)][std::size_t(label_idx)];

  d.col_center = d.X.colwise().mean();
  d.X.rowwise() -= d.col_center.transpose();
  d.col_scale = d.X.colwise().norm();
  for (Eigen::Index j = 0; j < p; ++j)
    if (d.col_scale(j) == 0.0) d.col_scale(j) = 1.0;  // constant column left centered
  d.X.array().rowwise() /= d.col_scale.transpose().array();
  d.y_center = d.Y.mean();
  d.Y.array() -= d.y_center;
  return d;
}

double kfold_rmse(const TabularDataset& data, const HyperParams& hp, int k,
                  std::uint64_t seed, int max_iter) {
  if (k < 2) throw std::invalid_argument("kfold_rmse: k must be >= 2");
  const Eigen::Index n = data.n();
  if (n / k < 1) throw std::invalid_argument("kfold_rmse: fold smaller than one row");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[std::size_t(i)] = i;
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Eigen::Index> u(0, i);
    std::swap(idx[std::size_t(i)], idx[std::size_t(u(rng))]);
  }
  double sse = 0.0;
  long cnt = 0;
  for (int fold = 0; fold < k; ++fold) {
    const Eigen::Index lo = n * fold / k, hi = n * (fold + 1) / k;
    const Eigen::Index ntr = n - (hi - lo);
    MatrixXd Xtr(ntr, data.p()), Xte(hi - lo, data.p());
    VectorXd Ytr(ntr), Yte(hi - lo);
    Eigen::Index a = 0, b = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index r = idx[std::size_t(i)];
      if (i >= lo && i < hi) {
        Xte.row(b) = data.X.row(r);
        Yte(b++) = data.Y(r);
      } else {
        Xtr.row(a) = data.X.row(r);
        Ytr(a++) = data.Y(r);
      }
    }
    const DesignBlock block(Xtr, Ytr);
    StoppingRule stop{max_iter, 1e-10, StopMetric::iterate_delta};
    VblOptions opts;
    opts.record_trace = false;
    const VblResult fit = vbl_iterate(block, hp, default_init(data.p()), stop, opts);
    sse += (Yte - Xte * fit.triple.m).squaredNorm();
    cnt += hi - lo;
  }
  return std::sqrt(sse / double(cnt));
}

}  // namespace sparsevb

#ifndef SPARSEVB_DATASET_HPP
#define SPARSEVB_DATASET_HPP

#include <string>
#include <vector>

#include "sparsevb/types.hpp"

namespace sparsevb {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, long row, long col)
      : std::runtime_error(what + " at row " + std::to_string(row) + ", column " +
                           std::to_string(col)),
        row(row),
        col(col) {}
  long row, col;
};

// Tabular regression data with an invertible standardization record:
// feature columns are centered and scaled to unit Euclidean norm, the
// label is centered only.
struct TabularDataset {
  std::vector<std::string> feature_names;
  MatrixXd X;   // standardized
  VectorXd Y;   // centered
  VectorXd col_center, col_scale;  // per feature
  double y_center = 0.0;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
  DesignBlock block() const { return DesignBlock(X, Y); }

  // De-standardize a coefficient vector back to raw-feature units.
  VectorXd coefficients_raw(const VectorXd& beta_std) const;
  double predict_raw(const VectorXd& beta_std, const VectorXd& x_raw) const;
};

// Header CSV with numeric cells; label_column by name or 0-based index
// string. Ragged rows and non-numeric cells fail with row/column info.
TabularDataset load_csv(const std::string& path, const std::string& label_column);

// Seeded k-fold split; per-fold VBL fit at the given hyper-parameters with
// the VBEM mean as predictor; pooled root mean squared prediction error.
double kfold_rmse(const TabularDataset& data, const HyperParams& hp, int k,
                  std::uint64_t seed, int max_iter = 100);

}  // namespace sparsevb

#endif

#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"

namespace sep {

struct CategoryLabel {
  std::string variable;
  std::string category;

  bool operator==(const CategoryLabel& o) const {
    return variable == o.variable && category == o.category;
  }
};

// Disjunctive (one-hot per variable) coding of the asset table.
struct IndicatorMatrix {
  Eigen::MatrixXd z;                  // n x J, entries 0/1, each row sums to Q
  std::vector<CategoryLabel> labels;  // J column labels
  std::vector<HouseholdId> ids;       // n row ids
  int num_variables = 0;              // Q
  std::vector<std::string> warnings;  // dropped zero-variance variables
};

struct McaModel {
  Eigen::VectorXd singular_values;     // descending, trivial dimension excluded
  Eigen::MatrixXd row_standard;        // D_r^{-1/2} U
  Eigen::MatrixXd row_principal;       // D_r^{-1/2} U S
  Eigen::MatrixXd col_principal;       // D_c^{-1/2} V S
  Eigen::VectorXd inertia_shares;      // sigma_k^2 / sum sigma^2
  Eigen::VectorXd row_masses;
  Eigen::VectorXd col_masses;
  std::vector<CategoryLabel> labels;
  std::vector<HouseholdId> ids;
  int num_variables = 0;

  // Benzecri-adjusted inertia shares over dimensions with sigma^2 > 1/Q.
  // Off by default in reports; exposed because published MCA inertia values
  // are often the adjusted ones.
  Eigen::VectorXd benzecri_adjusted_shares() const;

  int find_column(const CategoryLabel& label) const;  // -1 when absent
};

// Builds the 0/1 indicator matrix; requires fully imputed assets. Variables
// with a single observed category are dropped with a warning.
IndicatorMatrix indicator_matrix(const Cohort& cohort, const AssetSchema& schema);

McaModel fit_mca(const IndicatorMatrix& z);

// Dimension-1 row principal coordinates, sign-oriented so that the anchor
// category's column coordinate is positive.
std::map<HouseholdId, double> first_dimension_scores(const McaModel& model,
                                                     const CategoryLabel& anchor);

// Interpretation report: column principal coordinates as CSV plus inertia
// shares as JSON.
void write_mca_report(const McaModel& model, const std::string& coords_csv_path,
                      const std::string& inertia_json_path, bool include_adjusted);

}  // namespace sep

#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <set>

#include "dataset.hpp"
#include "mca.hpp"
#include "metrics.hpp"
#include "rng.hpp"

using namespace sep;

namespace {

// Cohort from an explicit categorical table: one row per household.
Cohort table_cohort(const std::vector<std::vector<std::string>>& rows,
                    const std::vector<std::string>& variables) {
  Cohort cohort;
  for (size_t i = 0; i < rows.size(); ++i) {
    HouseholdRecord rec;
    rec.id = "h" + std::to_string(i < 10 ? 100 + i : i);  // keep ids sortable
    for (size_t v = 0; v < variables.size(); ++v) rec.assets[variables[v]] = rows[i][v];
    cohort.push_back(rec);
  }
  return cohort;
}

AssetSchema schema_for(const std::vector<std::string>& variables,
                       const std::vector<std::vector<std::string>>& categories) {
  AssetSchema schema;
  for (size_t v = 0; v < variables.size(); ++v) schema.variables.push_back({variables[v], categories[v]});
  return schema;
}

Cohort random_cohort(Rng& rng, int n, int num_vars, int max_cats, AssetSchema* schema_out) {
  std::vector<std::string> variables;
  std::vector<std::vector<std::string>> categories;
  for (int v = 0; v < num_vars; ++v) {
    variables.push_back("v" + std::to_string(v));
    const int k = 2 + static_cast<int>(rng.uniform_index(static_cast<uint64_t>(max_cats - 1)));
    std::vector<std::string> cats;
    for (int c = 0; c < k; ++c) cats.push_back("c" + std::to_string(c));
    categories.push_back(cats);
  }
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < n; ++i) {
    std::vector<std::string> row;
    for (int v = 0; v < num_vars; ++v) {
      row.push_back(categories[v][rng.uniform_index(categories[v].size())]);
    }
    rows.push_back(row);
  }
  *schema_out = schema_for(variables, categories);
  return table_cohort(rows, variables);
}

// Drops degenerate draws (a variable with a single observed category).
bool usable(const IndicatorMatrix& z) { return z.warnings.empty() && z.z.cols() >= 2; }

}  // namespace

TEST_CASE("indicator matrix implements disjunctive coding") {
  const auto schema = schema_for({"v1", "v2"}, {{"A", "B"}, {"X", "Y"}});
  const Cohort cohort = table_cohort({{"A", "X"}, {"B", "Y"}, {"A", "Y"}}, {"v1", "v2"});
  const IndicatorMatrix z = indicator_matrix(cohort, schema);
  CHECK(z.z.rows() == 3);
  CHECK(z.z.cols() == 4);
  CHECK(z.num_variables == 2);
  for (int i = 0; i < 3; ++i) CHECK(z.z.row(i).sum() == doctest::Approx(2.0));
  // Household 0 with (A, X) hits exactly the (v1=A) and (v2=X) columns.
  CHECK(z.z(0, 0) == 1.0);  // v1=A
  CHECK(z.z(0, 1) == 0.0);  // v1=B
  CHECK(z.z(0, 2) == 1.0);  // v2=X
  CHECK(z.z(0, 3) == 0.0);  // v2=Y
  CHECK(z.labels[0].variable == "v1");
  CHECK(z.labels[0].category == "A");
}

TEST_CASE("indicator matrix column sums equal category frequencies") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    AssetSchema schema;
    const Cohort cohort = random_cohort(rng, 30, 4, 4, &schema);
    const IndicatorMatrix z = indicator_matrix(cohort, schema);
    for (size_t j = 0; j < z.labels.size(); ++j) {
      int count = 0;
      for (const auto& rec : cohort) {
        if (*rec.assets.at(z.labels[j].variable) == z.labels[j].category) ++count;
      }
      CHECK(z.z.col(static_cast<Eigen::Index>(j)).sum() == doctest::Approx(count));
    }
  }
}

TEST_CASE("indicator matrix drops single-category variables with a warning") {
  const auto schema = schema_for({"v1", "v2"}, {{"A", "B"}, {"X", "Y"}});
  const Cohort cohort = table_cohort({{"A", "X"}, {"A", "Y"}}, {"v1", "v2"});
  const IndicatorMatrix z = indicator_matrix(cohort, schema);
  CHECK(z.num_variables == 1);
  REQUIRE(z.warnings.size() == 1);
  CHECK(z.warnings[0].find("v1") != std::string::npos);
}

TEST_CASE("indicator matrix requires imputed assets") {
  const auto schema = schema_for({"v1"}, {{"A", "B"}});
  Cohort cohort = table_cohort({{"A"}, {"B"}}, {"v1"});
  cohort[1].assets["v1"] = std::nullopt;
  CHECK_THROWS_AS(indicator_matrix(cohort, schema), ValidationError);
}

TEST_CASE("fit_mca singular values match the eigendecomposition of StS") {
  Rng rng(17);
  int done = 0;
  while (done < 12) {
    AssetSchema schema;
    const Cohort cohort = random_cohort(rng, 2 + static_cast<int>(rng.uniform_index(9)), 3, 3,
                                        &schema);
    const IndicatorMatrix z = indicator_matrix(cohort, schema);
    if (!usable(z)) continue;
    McaModel model;
    try {
      model = fit_mca(z);
    } catch (const NumericalError&) {
      continue;  // all-identical rows
    }
    ++done;

    // Oracle: rebuild S directly and eigendecompose S^T S.
    const double total = z.z.sum();
    const Eigen::MatrixXd p = z.z / total;
    const Eigen::VectorXd r = p.rowwise().sum();
    const Eigen::VectorXd c = p.colwise().sum();
    Eigen::MatrixXd s = p - r * c.transpose();
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      for (Eigen::Index j = 0; j < s.cols(); ++j) {
        s(i, j) /= std::sqrt(r(i) * c(j));
      }
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.transpose() * s);
    std::vector<double> ev(eig.eigenvalues().data(),
                           eig.eigenvalues().data() + eig.eigenvalues().size());
    std::sort(ev.rbegin(), ev.rend());
    for (Eigen::Index k = 0; k < model.singular_values.size(); ++k) {
      CHECK(std::abs(model.singular_values(k) * model.singular_values(k) -
                     ev[static_cast<size_t>(k)]) <= 1e-10);
    }
    CHECK(model.inertia_shares.sum() == doctest::Approx(1.0).epsilon(1e-10));

    // Reconstruction and total inertia.
    const Eigen::MatrixXd u = model.row_standard.array().colwise() * r.array().sqrt();
    const Eigen::MatrixXd v = model.col_principal.array().rowwise() /
                              model.singular_values.transpose().array();
    const Eigen::MatrixXd v_scaled = v.array().colwise() * c.array().sqrt();
    const Eigen::MatrixXd recon =
        u * model.singular_values.asDiagonal() * v_scaled.transpose();
    CHECK((recon - s).norm() <= 1e-8);
    CHECK(model.singular_values.array().square().sum() ==
          doctest::Approx(s.squaredNorm()).epsilon(1e-10));
  }
}

TEST_CASE("households with identical response patterns share row scores") {
  const auto schema = schema_for({"v1", "v2"}, {{"A", "B"}, {"X", "Y"}});
  const Cohort cohort =
      table_cohort({{"A", "X"}, {"B", "Y"}, {"A", "X"}, {"B", "X"}}, {"v1", "v2"});
  const McaModel model = fit_mca(indicator_matrix(cohort, schema));
  for (Eigen::Index k = 0; k < model.singular_values.size(); ++k) {
    CHECK(model.row_principal(0, k) == doctest::Approx(model.row_principal(2, k)).epsilon(1e-12));
  }
}

TEST_CASE("two identical balanced binary variables give two distinct dim-1 scores") {
  const auto schema = schema_for({"v1", "v2"}, {{"A", "B"}, {"A", "B"}});
  const Cohort cohort =
      table_cohort({{"A", "A"}, {"A", "A"}, {"B", "B"}, {"B", "B"}}, {"v1", "v2"});
  const McaModel model = fit_mca(indicator_matrix(cohort, schema));
  std::set<double> distinct;
  for (Eigen::Index i = 0; i < 4; ++i) {
    distinct.insert(std::round(model.row_principal(i, 0) * 1e9) / 1e9);
  }
  CHECK(distinct.size() == 2);
}

TEST_CASE("fit_mca rejects a cohort with no variance") {
  const auto schema = schema_for({"v1", "v2"}, {{"A", "B"}, {"X", "Y"}});
  const Cohort cohort = table_cohort({{"A", "X"}, {"A", "X"}, {"A", "X"}}, {"v1", "v2"});
  CHECK_THROWS_AS(fit_mca(indicator_matrix(cohort, schema)), std::exception);
}

TEST_CASE("row principal coordinates have zero weighted mean") {
  Rng rng(23);
  AssetSchema schema;
  const Cohort cohort = random_cohort(rng, 40, 5, 3, &schema);
  const McaModel model = fit_mca(indicator_matrix(cohort, schema));
  for (Eigen::Index k = 0; k < model.singular_values.size(); ++k) {
    CHECK(std::abs(model.row_masses.dot(model.row_principal.col(k))) <= 1e-10);
  }
}

TEST_CASE("duplicating every household leaves row scores unchanged") {
  Rng rng(31);
  AssetSchema schema;
  const Cohort cohort = random_cohort(rng, 20, 4, 3, &schema);
  Cohort doubled = cohort;
  for (const auto& rec : cohort) {
    HouseholdRecord copy = rec;
    copy.id = rec.id + "_dup";
    doubled.push_back(copy);
  }
  const McaModel a = fit_mca(indicator_matrix(cohort, schema));
  const McaModel b = fit_mca(indicator_matrix(doubled, schema));
  REQUIRE(a.singular_values.size() == b.singular_values.size());
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(cohort.size()); ++i) {
    // SVD sign is arbitrary per dimension; compare absolute values.
    CHECK(std::abs(b.row_principal(i, 0)) ==
          doctest::Approx(std::abs(a.row_principal(i, 0))).epsilon(1e-8));
  }
}

TEST_CASE("permuting variable order leaves row scores unchanged") {
  Rng rng(37);
  AssetSchema schema;
  const Cohort cohort = random_cohort(rng, 25, 4, 3, &schema);
  AssetSchema reversed;
  reversed.variables.assign(schema.variables.rbegin(), schema.variables.rend());
  const McaModel a = fit_mca(indicator_matrix(cohort, schema));
  const McaModel b = fit_mca(indicator_matrix(cohort, reversed));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(cohort.size()); ++i) {
    CHECK(std::abs(b.row_principal(i, 0)) ==
          doctest::Approx(std::abs(a.row_principal(i, 0))).epsilon(1e-10));
  }
}

TEST_CASE("first_dimension_scores orients the anchor positive") {
  Rng rng(41);
  AssetSchema schema;
  const Cohort cohort = random_cohort(rng, 30, 4, 3, &schema);
  const McaModel model = fit_mca(indicator_matrix(cohort, schema));
  const CategoryLabel anchor = model.labels[0];
  const auto scores = first_dimension_scores(model, anchor);

  const int col = model.find_column(anchor);
  const double sign = model.col_principal(col, 0) < 0.0 ? -1.0 : 1.0;
  for (size_t i = 0; i < model.ids.size(); ++i) {
    const double unoriented = model.row_principal(static_cast<Eigen::Index>(i), 0);
    CHECK(scores.at(model.ids[i]) == doctest::Approx(sign * unoriented));
    CHECK(std::abs(scores.at(model.ids[i])) == doctest::Approx(std::abs(unoriented)));
  }

  // Orientation preserves ratios between households.
  const auto& ids = model.ids;
  const double a0 = model.row_principal(0, 0), a1 = model.row_principal(1, 0);
  if (std::abs(a1) > 1e-12) {
    CHECK(scores.at(ids[0]) / scores.at(ids[1]) == doctest::Approx(a0 / a1));
  }
}

TEST_CASE("first_dimension_scores rejects unknown anchors") {
  const auto schema = schema_for({"v1", "v2"}, {{"A", "B"}, {"X", "Y"}});
  const Cohort cohort = table_cohort({{"A", "X"}, {"B", "Y"}, {"A", "Y"}}, {"v1", "v2"});
  const McaModel model = fit_mca(indicator_matrix(cohort, schema));
  CHECK_THROWS_AS(first_dimension_scores(model, {"v1", "missing_cat"}), ValidationError);
}

TEST_CASE("balanced binary variable has symmetric column coordinates") {
  const auto schema = schema_for({"v1", "v2"}, {{"A", "B"}, {"X", "Y"}});
  const Cohort cohort =
      table_cohort({{"A", "X"}, {"A", "Y"}, {"B", "X"}, {"B", "Y"}, {"A", "X"}, {"B", "Y"}},
                   {"v1", "v2"});
  const McaModel model = fit_mca(indicator_matrix(cohort, schema));
  // v1 is balanced 3/3: its two categories mirror each other on dim 1.
  CHECK(model.col_principal(0, 0) == doctest::Approx(-model.col_principal(1, 0)).epsilon(1e-8));
}

TEST_CASE("column principal coordinates satisfy the transition formula and centering") {
  Rng rng(43);
  AssetSchema schema;
  const Cohort cohort = random_cohort(rng, 30, 4, 3, &schema);
  const IndicatorMatrix z = indicator_matrix(cohort, schema);
  const McaModel model = fit_mca(z);

  // Recompute G from the SVD factors: G = D_c^{-1/2} V Sigma where
  // V = S^T U Sigma^{-1}.
  const double total = z.z.sum();
  const Eigen::MatrixXd p = z.z / total;
  const Eigen::VectorXd r = p.rowwise().sum();
  const Eigen::VectorXd c = p.colwise().sum();
  Eigen::MatrixXd s = p - r * c.transpose();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) s(i, j) /= std::sqrt(r(i) * c(j));
  }
  const Eigen::MatrixXd u = model.row_standard.array().colwise() * r.array().sqrt();
  const Eigen::MatrixXd v = s.transpose() * u * model.singular_values.cwiseInverse().asDiagonal();
  const Eigen::MatrixXd g =
      (v.array().colwise() / c.array().sqrt()).matrix() * model.singular_values.asDiagonal();
  CHECK((g - model.col_principal).norm() <= 1e-8);

  // Weighted mean of dim-1 column coordinates under column masses is 0.
  CHECK(std::abs(model.col_masses.dot(model.col_principal.col(0))) <= 1e-10);
}

TEST_CASE("benzecri adjusted shares sum to 1 and favor leading dimensions") {
  Rng rng(47);
  AssetSchema schema;
  const Cohort cohort = random_cohort(rng, 60, 6, 3, &schema);
  const McaModel model = fit_mca(indicator_matrix(cohort, schema));
  const Eigen::VectorXd adjusted = model.benzecri_adjusted_shares();
  if (adjusted.sum() > 0.0) {
    CHECK(adjusted.sum() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(adjusted(0) >= model.inertia_shares(0) - 1e-12);
  }
}

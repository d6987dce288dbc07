#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rddclust {

struct CovariateSchema {
  std::vector<std::string> cont_names;
  std::vector<std::string> cat_names;
  std::vector<int> cat_levels;  // number of levels per categorical covariate
};

// Column-oriented study cohort. Unit i is (id[i], x[i], t[i], y[i],
// cont[j][i]..., cat[j][i]...); x is the forcing variable and x0 the
// threshold that splits sides: above means x >= x0, below means x < x0.
struct Cohort {
  std::vector<std::string> id;
  std::vector<double> x;
  std::vector<std::uint8_t> t;  // received treatment, 0/1
  std::vector<double> y;
  std::vector<std::vector<double>> cont;        // cont[j] has length n
  std::vector<std::vector<std::int32_t>> cat;   // 1-based level codes
  CovariateSchema schema;
  double x0 = 0.0;

  std::size_t size() const { return x.size(); }
};

// Centered view of the running variable: xc = x - x0 and the assignment
// indicator z = 1{x >= x0} (side a above, side b below).
struct CenteredView {
  std::vector<double> xc;
  std::vector<std::uint8_t> z;
};

// Continuous covariates standardized to mean 0 / sample sd 1, stored
// column-major (column j occupies [j*n, (j+1)*n)) for the batch kernels.
struct StandardizedMatrix {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> data;
  std::vector<double> means;
  std::vector<double> sds;

  const double* col(std::size_t j) const { return data.data() + j * n; }
};

//! Checks all cohort invariants; throws Error(validation) on the first
//! violation with the offending unit/covariate named.
void validate_cohort(const Cohort& cohort);

CenteredView center_forcing(const Cohort& cohort);

//! Sample-sd standardization; throws when a covariate has zero variance.
StandardizedMatrix standardize_covariates(const Cohort& cohort);

}  // namespace rddclust

#include "rddclust/cohort.hpp"

#include <cmath>
#include <unordered_set>

#include "rddclust/error.hpp"

namespace rddclust {

void validate_cohort(const Cohort& cohort) {
  const std::size_t n = cohort.size();
  if (n < 2) fail(ErrorCode::validation, "cohort must contain at least 2 units");
  if (!std::isfinite(cohort.x0))
    fail(ErrorCode::validation, "threshold x0 must be finite");
  if (cohort.id.size() != n || cohort.t.size() != n || cohort.y.size() != n)
    fail(ErrorCode::validation, "cohort columns have inconsistent lengths");
  if (cohort.cont.size() != cohort.schema.cont_names.size() ||
      cohort.cat.size() != cohort.schema.cat_names.size() ||
      cohort.schema.cat_levels.size() != cohort.schema.cat_names.size())
    fail(ErrorCode::validation, "cohort covariates do not match schema");

  std::unordered_set<std::string> seen;
  seen.reserve(n);
  bool any_above = false, any_below = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(cohort.x[i]))
      fail(ErrorCode::validation,
           "non-finite forcing value for unit " + cohort.id[i]);
    if (!std::isfinite(cohort.y[i]))
      fail(ErrorCode::validation,
           "non-finite outcome for unit " + cohort.id[i]);
    if (cohort.t[i] > 1)
      fail(ErrorCode::validation,
           "treatment must be 0/1 for unit " + cohort.id[i]);
    if (!seen.insert(cohort.id[i]).second)
      fail(ErrorCode::validation, "duplicate unit id " + cohort.id[i]);
    (cohort.x[i] >= cohort.x0 ? any_above : any_below) = true;
  }
  if (!any_above || !any_below)
    fail(ErrorCode::validation, "cohort must have units on both sides of x0");

  for (std::size_t j = 0; j < cohort.cont.size(); ++j) {
    if (cohort.cont[j].size() != n)
      fail(ErrorCode::validation,
           "covariate " + cohort.schema.cont_names[j] + " has wrong length");
    for (std::size_t i = 0; i < n; ++i)
      if (!std::isfinite(cohort.cont[j][i]))
        fail(ErrorCode::validation, "non-finite covariate " +
                                        cohort.schema.cont_names[j] +
                                        " for unit " + cohort.id[i]);
  }
  for (std::size_t j = 0; j < cohort.cat.size(); ++j) {
    if (cohort.cat[j].size() != n)
      fail(ErrorCode::validation,
           "covariate " + cohort.schema.cat_names[j] + " has wrong length");
    const int levels = cohort.schema.cat_levels[j];
    if (levels < 2)
      fail(ErrorCode::validation, "categorical covariate " +
                                      cohort.schema.cat_names[j] +
                                      " needs at least 2 levels");
    for (std::size_t i = 0; i < n; ++i)
      if (cohort.cat[j][i] < 1 || cohort.cat[j][i] > levels)
        fail(ErrorCode::validation, "out-of-range level of " +
                                        cohort.schema.cat_names[j] +
                                        " for unit " + cohort.id[i]);
  }
}

CenteredView center_forcing(const Cohort& cohort) {
  const std::size_t n = cohort.size();
  CenteredView view;
  view.xc.resize(n);
  view.z.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    view.xc[i] = cohort.x[i] - cohort.x0;
    view.z[i] = cohort.x[i] >= cohort.x0 ? 1 : 0;
  }
  return view;
}

StandardizedMatrix standardize_covariates(const Cohort& cohort) {
  const std::size_t n = cohort.size();
  const std::size_t dim = cohort.cont.size();
  StandardizedMatrix out;
  out.n = n;
  out.dim = dim;
  out.data.resize(n * dim);
  out.means.resize(dim);
  out.sds.resize(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    const auto& col = cohort.cont[j];
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : col) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0))
      fail(ErrorCode::validation, "covariate " + cohort.schema.cont_names[j] +
                                      " has zero variance");
    out.means[j] = mean;
    out.sds[j] = sd;
    double* dst = out.data.data() + j * n;
    for (std::size_t i = 0; i < n; ++i) dst[i] = (col[i] - mean) / sd;
  }
  return out;
}

}  // namespace rddclust

#pragma once

#include <string>
#include <vector>

#include "rddclust/cohort.hpp"

namespace rddclust {

//! Shortest round-trip decimal form of v; non-finite values become "NA".
std::string fmt_double(double v);

//! Writes `id,x,t,y,<covariates...>` with exact round-trip formatting.
void write_cohort_csv(const Cohort& cohort, const std::string& path);

//! Loads a cohort CSV. Columns id,x,t,y are required; every other column is
//! a continuous covariate unless its name appears in cat_names. Parse errors
//! cite the 1-based data row.
Cohort load_cohort_csv(const std::string& path, double x0,
                       const std::vector<std::string>& cat_names = {});

}  // namespace rddclust

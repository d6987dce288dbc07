#include "rddclust/kernels.hpp"

namespace rddclust::kernels::detail {

// Canonical evaluation order: acc += dx[j] * (sum_k m[j][k] * dx[k]) with the
// inner sum accumulated left to right. The AVX2 variant runs the same op
// sequence per lane, so both produce bitwise-identical values.
void quadform_batch_scalar(const double* x, std::size_t n, std::size_t dim,
                           const double* mu, const double* m, double* out) {
  constexpr std::size_t kMaxDim = 64;
  double dx[kMaxDim];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < dim; ++j) dx[j] = x[j * n + i] - mu[j];
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      double s = 0.0;
      const double* row = m + j * dim;
      for (std::size_t k = 0; k < dim; ++k) s += row[k] * dx[k];
      acc += dx[j] * s;
    }
    out[i] = acc;
  }
}

void coclust_accumulate_scalar(const std::int32_t* labels, std::size_t n,
                               std::uint32_t* counts) {
  for (std::size_t l = 0; l + 1 < n; ++l) {
    const std::int32_t lab = labels[l];
    std::uint32_t* row = counts + l * n;
    for (std::size_t v = l + 1; v < n; ++v)
      row[v] += static_cast<std::uint32_t>(labels[v] == lab);
  }
}

void gather_add_scalar(const std::int32_t* idx, std::size_t n,
                       const double* table, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] += table[idx[i]];
}

double agreement_row_scalar(std::int32_t label, const std::int32_t* labels,
                            const double* p, std::size_t begin,
                            std::size_t end) {
  double sum = 0.0;
  for (std::size_t v = begin; v < end; ++v)
    sum += labels[v] == label ? p[v] : 1.0 - p[v];
  return sum;
}

}  // namespace rddclust::kernels::detail

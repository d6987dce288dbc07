#pragma once

#include <cstddef>
#include <cstdint>

// Data-parallel inner loops used by the sampler and partition code. Each
// kernel has a scalar reference implementation and, on x86-64, an AVX2
// variant compiled separately and selected at runtime. quadform_batch and
// gather_add perform identical per-lane arithmetic in both variants and are
// bitwise equal; agreement_row reduces across lanes and agrees to rounding.
namespace rddclust::kernels {

struct Ops {
  // out[i] = sum_{j,k} (x[j*n+i]-mu[j]) * m[j*dim+k] * (x[k*n+i]-mu[k]);
  // x is column-major with column stride n, m is a dim x dim matrix.
  void (*quadform_batch)(const double* x, std::size_t n, std::size_t dim,
                         const double* mu, const double* m, double* out);
  // counts[l*n+v] += (labels[l] == labels[v]) for all pairs l < v.
  void (*coclust_accumulate)(const std::int32_t* labels, std::size_t n,
                             std::uint32_t* counts);
  // out[i] += table[idx[i]].
  void (*gather_add)(const std::int32_t* idx, std::size_t n,
                     const double* table, double* out);
  // sum over v in [begin, end) of (labels[v]==label ? p[v] : 1-p[v]).
  double (*agreement_row)(std::int32_t label, const std::int32_t* labels,
                          const double* p, std::size_t begin, std::size_t end);
  const char* name;
};

//! Active implementation (AVX2 when the CPU supports it, else scalar).
const Ops& ops();

//! Reference implementation, always available.
const Ops& scalar_ops();

//! AVX2 implementation, or nullptr when unsupported on this CPU/build.
const Ops* avx2_ops();

//! Force the scalar path (used by equivalence tests); false restores detection.
void force_scalar(bool on);

}  // namespace rddclust::kernels

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include "rddclust/kernels.hpp"

namespace rddclust::kernels::detail {

namespace {

// Scalar tail sharing the canonical op order of quadform_batch_scalar.
inline double quadform_one(const double* x, std::size_t n, std::size_t dim,
                           const double* mu, const double* m, std::size_t i) {
  double dx[64];
  for (std::size_t j = 0; j < dim; ++j) dx[j] = x[j * n + i] - mu[j];
  double acc = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    double s = 0.0;
    const double* row = m + j * dim;
    for (std::size_t k = 0; k < dim; ++k) s += row[k] * dx[k];
    acc += dx[j] * s;
  }
  return acc;
}

}  // namespace

void quadform_batch_avx2(const double* x, std::size_t n, std::size_t dim,
                         const double* mu, const double* m, double* out) {
  __m256d dx[64];
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t j = 0; j < dim; ++j)
      dx[j] = _mm256_sub_pd(_mm256_loadu_pd(x + j * n + i),
                            _mm256_set1_pd(mu[j]));
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t j = 0; j < dim; ++j) {
      __m256d s = _mm256_setzero_pd();
      const double* row = m + j * dim;
      for (std::size_t k = 0; k < dim; ++k)
        s = _mm256_add_pd(s, _mm256_mul_pd(_mm256_set1_pd(row[k]), dx[k]));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(dx[j], s));
    }
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < n; ++i) out[i] = quadform_one(x, n, dim, mu, m, i);
}

void coclust_accumulate_avx2(const std::int32_t* labels, std::size_t n,
                             std::uint32_t* counts) {
  for (std::size_t l = 0; l + 1 < n; ++l) {
    const __m256i lab = _mm256_set1_epi32(labels[l]);
    std::uint32_t* row = counts + l * n;
    std::size_t v = l + 1;
    for (; v + 8 <= n; v += 8) {
      const __m256i lv = _mm256_loadu_si256(
          reinterpret_cast<const __m256i*>(labels + v));
      const __m256i eq = _mm256_cmpeq_epi32(lv, lab);  // 0 or -1 per lane
      __m256i cnt = _mm256_loadu_si256(reinterpret_cast<__m256i*>(row + v));
      cnt = _mm256_sub_epi32(cnt, eq);
      _mm256_storeu_si256(reinterpret_cast<__m256i*>(row + v), cnt);
    }
    const std::int32_t lab_s = labels[l];
    for (; v < n; ++v) row[v] += static_cast<std::uint32_t>(labels[v] == lab_s);
  }
}

void gather_add_avx2(const std::int32_t* idx, std::size_t n,
                     const double* table, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m128i ix =
        _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i));
    const __m256d vals = _mm256_i32gather_pd(table, ix, 8);
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(out + i), vals));
  }
  for (; i < n; ++i) out[i] += table[idx[i]];
}

double agreement_row_avx2(std::int32_t label, const std::int32_t* labels,
                          const double* p, std::size_t begin,
                          std::size_t end) {
  const __m256d one = _mm256_set1_pd(1.0);
  const __m128i lab = _mm_set1_epi32(label);
  __m256d acc = _mm256_setzero_pd();
  std::size_t v = begin;
  for (; v + 4 <= end; v += 4) {
    const __m128i lv =
        _mm_loadu_si128(reinterpret_cast<const __m128i*>(labels + v));
    const __m256i mask = _mm256_cvtepi32_epi64(_mm_cmpeq_epi32(lv, lab));
    const __m256d pv = _mm256_loadu_pd(p + v);
    const __m256d sel = _mm256_blendv_pd(_mm256_sub_pd(one, pv), pv,
                                         _mm256_castsi256_pd(mask));
    acc = _mm256_add_pd(acc, sel);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double sum = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; v < end; ++v) sum += labels[v] == label ? p[v] : 1.0 - p[v];
  return sum;
}

}  // namespace rddclust::kernels::detail

#endif  // x86-64

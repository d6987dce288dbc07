#include "rddclust/kernels.hpp"

#include <atomic>

namespace rddclust::kernels {

namespace detail {

void quadform_batch_scalar(const double*, std::size_t, std::size_t,
                           const double*, const double*, double*);
void coclust_accumulate_scalar(const std::int32_t*, std::size_t,
                               std::uint32_t*);
void gather_add_scalar(const std::int32_t*, std::size_t, const double*,
                       double*);
double agreement_row_scalar(std::int32_t, const std::int32_t*, const double*,
                            std::size_t, std::size_t);

#if defined(__x86_64__) || defined(_M_X64)
void quadform_batch_avx2(const double*, std::size_t, std::size_t,
                         const double*, const double*, double*);
void coclust_accumulate_avx2(const std::int32_t*, std::size_t, std::uint32_t*);
void gather_add_avx2(const std::int32_t*, std::size_t, const double*, double*);
double agreement_row_avx2(std::int32_t, const std::int32_t*, const double*,
                          std::size_t, std::size_t);
#endif

}  // namespace detail

namespace {

constexpr Ops kScalar{detail::quadform_batch_scalar,
                      detail::coclust_accumulate_scalar,
                      detail::gather_add_scalar, detail::agreement_row_scalar,
                      "scalar"};

#if defined(__x86_64__) || defined(_M_X64)
constexpr Ops kAvx2{detail::quadform_batch_avx2,
                    detail::coclust_accumulate_avx2, detail::gather_add_avx2,
                    detail::agreement_row_avx2, "avx2"};
#endif

std::atomic<bool> g_force_scalar{false};

const Ops* detect() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2")) return &kAvx2;
#endif
  return &kScalar;
}

}  // namespace

const Ops& ops() {
  static const Ops* detected = detect();
  return g_force_scalar.load(std::memory_order_relaxed) ? kScalar : *detected;
}

const Ops& scalar_ops() { return kScalar; }

const Ops* avx2_ops() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2")) return &kAvx2;
#endif
  return nullptr;
}

void force_scalar(bool on) {
  g_force_scalar.store(on, std::memory_order_relaxed);
}

}  // namespace rddclust::kernels

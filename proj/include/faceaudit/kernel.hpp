#pragma once

// Dot-product kernel with a pinned floating-point contract.
//
// Storage is binary32; accumulation is double. Every entry point computes
//
//     acc[l] = fma(double(a[d]) * double(b[d]) + acc[l]),   l = d mod 8
//
// for d ascending, then reduces ((a0+a1)+(a2+a3))+((a4+a5)+(a6+a7)).
// float->double conversion is exact and fma is correctly rounded, so the
// scalar and SIMD paths below are bit-identical by construction: the AVX2
// path keeps lanes 0-3 / 4-7 in two ymm accumulators and performs the very
// same fused operations per lane. For the same reason the dot_dd variants,
// which take operands widened to double ahead of time, produce the exact
// bits dot_ff produces on the original floats: widening is exact whenever
// it happens. Results therefore do not depend on which path was compiled
// in, on chunking, or on thread count. Do not "optimize" the association;
// it is part of the reproducibility contract.

#include <cmath>
#include <cstddef>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define FACEAUDIT_KERNEL_AVX2 1
#endif

namespace faceaudit::kernel {

inline double reduce8(const double* a) {
    return ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]));
}

// Scalar reference. Also the portable fallback.
inline double dot_ff_scalar(const float* a, const float* b, std::size_t n) {
    double acc[8] = {};
    for (std::size_t d = 0; d < n; ++d)
        acc[d & 7] = std::fma(static_cast<double>(a[d]), static_cast<double>(b[d]), acc[d & 7]);
    return reduce8(acc);
}

inline double dot_dd_scalar(const double* a, const double* b, std::size_t n) {
    double acc[8] = {};
    for (std::size_t d = 0; d < n; ++d) acc[d & 7] = std::fma(a[d], b[d], acc[d & 7]);
    return reduce8(acc);
}

#ifdef FACEAUDIT_KERNEL_AVX2

namespace detail {
// Tail elements continue the lane rotation: the vector body covers a
// multiple of 8, so the tail's lane index restarts at 0.
inline double finish(__m256d lo, __m256d hi, const double* qtail, const double* ttail,
                     std::size_t tail) {
    alignas(32) double acc[8];
    _mm256_store_pd(acc, lo);
    _mm256_store_pd(acc + 4, hi);
    for (std::size_t d = 0; d < tail; ++d) acc[d] = std::fma(qtail[d], ttail[d], acc[d]);
    return reduce8(acc);
}
}  // namespace detail

inline double dot_ff(const float* a, const float* b, std::size_t n) {
    const std::size_t n8 = n & ~std::size_t(7);
    __m256d lo = _mm256_setzero_pd(), hi = lo;
    for (std::size_t d = 0; d < n8; d += 8) {
        lo = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + d)),
                             _mm256_cvtps_pd(_mm_loadu_ps(b + d)), lo);
        hi = _mm256_fmadd_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + d + 4)),
                             _mm256_cvtps_pd(_mm_loadu_ps(b + d + 4)), hi);
    }
    alignas(32) double acc[8];
    _mm256_store_pd(acc, lo);
    _mm256_store_pd(acc + 4, hi);
    for (std::size_t d = n8; d < n; ++d)
        acc[d & 7] = std::fma(static_cast<double>(a[d]), static_cast<double>(b[d]), acc[d & 7]);
    return reduce8(acc);
}

inline double dot_dd(const double* a, const double* b, std::size_t n) {
    const std::size_t n8 = n & ~std::size_t(7);
    __m256d lo = _mm256_setzero_pd(), hi = lo;
    for (std::size_t d = 0; d < n8; d += 8) {
        lo = _mm256_fmadd_pd(_mm256_loadu_pd(a + d), _mm256_loadu_pd(b + d), lo);
        hi = _mm256_fmadd_pd(_mm256_loadu_pd(a + d + 4), _mm256_loadu_pd(b + d + 4), hi);
    }
    return detail::finish(lo, hi, a + n8, b + n8, n - n8);
}

// Four targets against one query. The hot path of block scans: one query
// load feeds four accumulator pairs, and pre-widened operands keep the
// fma ports free of conversion work.
inline void dot_dd4(const double* q, const double* t0, const double* t1, const double* t2,
                    const double* t3, std::size_t n, double out[4]) {
    const std::size_t n8 = n & ~std::size_t(7);
    __m256d a0l = _mm256_setzero_pd(), a0h = a0l, a1l = a0l, a1h = a0l;
    __m256d a2l = a0l, a2h = a0l, a3l = a0l, a3h = a0l;
    for (std::size_t d = 0; d < n8; d += 8) {
        const __m256d ql = _mm256_loadu_pd(q + d);
        const __m256d qh = _mm256_loadu_pd(q + d + 4);
        a0l = _mm256_fmadd_pd(ql, _mm256_loadu_pd(t0 + d), a0l);
        a0h = _mm256_fmadd_pd(qh, _mm256_loadu_pd(t0 + d + 4), a0h);
        a1l = _mm256_fmadd_pd(ql, _mm256_loadu_pd(t1 + d), a1l);
        a1h = _mm256_fmadd_pd(qh, _mm256_loadu_pd(t1 + d + 4), a1h);
        a2l = _mm256_fmadd_pd(ql, _mm256_loadu_pd(t2 + d), a2l);
        a2h = _mm256_fmadd_pd(qh, _mm256_loadu_pd(t2 + d + 4), a2h);
        a3l = _mm256_fmadd_pd(ql, _mm256_loadu_pd(t3 + d), a3l);
        a3h = _mm256_fmadd_pd(qh, _mm256_loadu_pd(t3 + d + 4), a3h);
    }
    const double* qt = q + n8;
    const std::size_t tail = n - n8;
    out[0] = detail::finish(a0l, a0h, qt, t0 + n8, tail);
    out[1] = detail::finish(a1l, a1h, qt, t1 + n8, tail);
    out[2] = detail::finish(a2l, a2h, qt, t2 + n8, tail);
    out[3] = detail::finish(a3l, a3h, qt, t3 + n8, tail);
}

#else  // portable fallback

inline double dot_ff(const float* a, const float* b, std::size_t n) {
    return dot_ff_scalar(a, b, n);
}

inline double dot_dd(const double* a, const double* b, std::size_t n) {
    return dot_dd_scalar(a, b, n);
}

inline void dot_dd4(const double* q, const double* t0, const double* t1, const double* t2,
                    const double* t3, std::size_t n, double out[4]) {
    out[0] = dot_dd_scalar(q, t0, n);
    out[1] = dot_dd_scalar(q, t1, n);
    out[2] = dot_dd_scalar(q, t2, n);
    out[3] = dot_dd_scalar(q, t3, n);
}

#endif

}  // namespace faceaudit::kernel

#include "hwgen/tensor.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hwgen {

// ikj order: the inner j loop runs over contiguous B and C rows and
// autovectorizes. Each C row belongs to exactly one thread.
void matmul_acc(const float* A, const float* B, float* C, int m, int k, int n) {
    const int64_t big = int64_t(m) * k * n;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (big > 65536)
#endif
    for (int i = 0; i < m; ++i) {
        const float* a = A + int64_t(i) * k;
        float* c = C + int64_t(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const float av = a[kk];
            if (av == 0.f) continue;
            const float* b = B + int64_t(kk) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
    (void)big;
}

void matmul_nt_acc(const float* A, const float* B, float* C, int m, int k, int n) {
    const int64_t big = int64_t(m) * k * n;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (big > 65536)
#endif
    for (int i = 0; i < m; ++i) {
        const float* a = A + int64_t(i) * k;
        float* c = C + int64_t(i) * n;
        for (int j = 0; j < n; ++j) {
            const float* b = B + int64_t(j) * k;
            float acc = 0.f;
            for (int kk = 0; kk < k; ++kk) acc += a[kk] * b[kk];
            c[j] += acc;
        }
    }
    (void)big;
}

void matmul_tn_acc(const float* A, const float* B, float* C, int m, int k, int n) {
    const int64_t big = int64_t(m) * k * n;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (big > 65536)
#endif
    for (int i = 0; i < m; ++i) {
        float* c = C + int64_t(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const float av = A[int64_t(kk) * m + i];
            if (av == 0.f) continue;
            const float* b = B + int64_t(kk) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
    (void)big;
}

}  // namespace hwgen

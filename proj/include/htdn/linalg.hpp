#pragma once

#include <cstddef>

namespace htdn::linalg {

// Row-major GEMM kernels: C (m x n) += op(A) * op(B). Loop orders keep the
// innermost loop contiguous so the compiler can vectorize it.

// A: m x k, B: k x n
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    T* c_row = c + i * n;
    const T* a_row = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const T a_ip = a_row[p];
      if (a_ip == T{0}) continue;
      const T* b_row = b + p * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_ip * b_row[j];
    }
  }
}

// A: m x k, B: n x k (B transposed)
template <typename T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* a_row = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* b_row = b + j * k;
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
      c[i * n + j] += acc;
    }
  }
}

// A: k x m (A transposed), B: k x n
template <typename T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* a, const T* b, T* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* a_row = a + p * m;
    const T* b_row = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T a_pi = a_row[i];
      if (a_pi == T{0}) continue;
      T* c_row = c + i * n;
      for (std::size_t j = 0; j < n; ++j) c_row[j] += a_pi * b_row[j];
    }
  }
}

}  // namespace htdn::linalg

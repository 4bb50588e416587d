#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "hwgen/common.hpp"

namespace hwgen {

// Dense float32 tensor, row-major, value semantics.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) { v.assign(size_t(numel_of(shape)), 0.f); }
    Tensor(std::vector<int> s, std::vector<float> data) : shape(std::move(s)), v(std::move(data)) {
        if (numel_of(shape) != int64_t(v.size()))
            throw NumericError("tensor data size does not match shape " + shape_str());
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }
    int64_t numel() const { return int64_t(v.size()); }
    int dim(int i) const { return shape[size_t(i)]; }
    int ndim() const { return int(shape.size()); }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, float value) {
        Tensor t(std::move(s));
        std::fill(t.v.begin(), t.v.end(), value);
        return t;
    }
    static Tensor scalar(float value) { return full({1}, value); }
    static Tensor randn(std::vector<int> s, Rng& rng, float stddev = 1.f) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = float(rng.normal()) * stddev;
        return t;
    }
    static Tensor uniform(std::vector<int> s, Rng& rng, float lo, float hi) {
        Tensor t(std::move(s));
        for (auto& x : t.v) x = float(rng.uniform(lo, hi));
        return t;
    }

    float& operator[](int64_t i) { return v[size_t(i)]; }
    float operator[](int64_t i) const { return v[size_t(i)]; }

    // 4-D accessor (N,C,H,W)
    float& at4(int n, int c, int h, int w) {
        return v[size_t(((int64_t(n) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    float at4(int n, int c, int h, int w) const {
        return v[size_t(((int64_t(n) * shape[1] + c) * shape[2] + h) * shape[3] + w)];
    }
    float& at2(int i, int j) { return v[size_t(int64_t(i) * shape[1] + j)]; }
    float at2(int i, int j) const { return v[size_t(int64_t(i) * shape[1] + j)]; }
    float& at3(int i, int j, int k) {
        return v[size_t((int64_t(i) * shape[1] + j) * shape[2] + k)];
    }
    float at3(int i, int j, int k) const {
        return v[size_t((int64_t(i) * shape[1] + j) * shape[2] + k)];
    }

    Tensor reshaped(std::vector<int> s) const {
        if (numel_of(s) != numel()) throw NumericError("reshape: element count mismatch");
        return Tensor(std::move(s), v);
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const {
        for (float x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
        return s + ")";
    }
};

// C[m,n] += A[m,k] * B[k,n]; the hot loops of the library.
// Each output row is owned by one thread, so results do not depend on thread count.
void matmul_acc(const float* A, const float* B, float* C, int m, int k, int n);
// C[m,n] += A[m,k] * B[n,k]^T
void matmul_nt_acc(const float* A, const float* B, float* C, int m, int k, int n);
// C[m,n] += A[k,m]^T * B[k,n]
void matmul_tn_acc(const float* A, const float* B, float* C, int m, int k, int n);

inline Tensor matmul(const Tensor& A, const Tensor& B) {
    if (A.ndim() != 2 || B.ndim() != 2 || A.shape[1] != B.shape[0])
        throw NumericError("matmul: bad shapes " + A.shape_str() + " x " + B.shape_str());
    Tensor C({A.shape[0], B.shape[1]});
    matmul_acc(A.v.data(), B.v.data(), C.v.data(), A.shape[0], A.shape[1], B.shape[1]);
    return C;
}

}  // namespace hwgen

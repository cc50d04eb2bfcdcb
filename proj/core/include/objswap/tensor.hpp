#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace objswap {

// Dense row-major tensor of doubles. Shapes follow the CHW / NCHW convention
// used throughout: images are [C,H,W], batches [B,C,H,W], videos [N,C,H,W].
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data((size_t)numel_of(shape), 0.0) {}
    Tensor(std::initializer_list<int> s) : Tensor(std::vector<int>(s)) {}

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s)
            n *= d;
        return n;
    }

    int64_t numel() const { return (int64_t)data.size(); }
    int ndim() const { return (int)shape.size(); }
    int dim(int i) const { return shape[(size_t)i]; }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](int64_t i) { return data[(size_t)i]; }
    double operator[](int64_t i) const { return data[(size_t)i]; }

    double& at(int i, int j) {
        assert(ndim() == 2);
        return data[(size_t)(i * shape[1] + j)];
    }
    double at(int i, int j) const {
        assert(ndim() == 2);
        return data[(size_t)(i * shape[1] + j)];
    }
    double& at(int i, int j, int k) {
        assert(ndim() == 3);
        return data[(size_t)((i * shape[1] + j) * (int64_t)shape[2] + k)];
    }
    double at(int i, int j, int k) const {
        assert(ndim() == 3);
        return data[(size_t)((i * shape[1] + j) * (int64_t)shape[2] + k)];
    }
    double& at(int i, int j, int k, int l) {
        assert(ndim() == 4);
        return data[(size_t)(((i * (int64_t)shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }
    double at(int i, int j, int k, int l) const {
        assert(ndim() == 4);
        return data[(size_t)(((i * (int64_t)shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(0.0); }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape); }

    Tensor reshaped(std::vector<int> s) const {
        Tensor t;
        t.shape = std::move(s);
        assert(numel_of(t.shape) == numel());
        t.data = data;
        return t;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + "]";
    }
};

// In-place and reduction helpers used all over the numeric code.
void axpy(Tensor& y, double a, const Tensor& x);  // y += a*x
double dot(const Tensor& a, const Tensor& b);
double mse(const Tensor& a, const Tensor& b);
double linf(const Tensor& a);
bool all_finite(const Tensor& a);

}  // namespace objswap

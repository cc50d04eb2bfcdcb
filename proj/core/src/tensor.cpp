#include "objswap/tensor.hpp"

#include <cassert>
#include <cmath>

namespace objswap {

void axpy(Tensor& y, double a, const Tensor& x) {
    assert(y.numel() == x.numel());
    for (int64_t i = 0; i < y.numel(); ++i)
        y[i] += a * x[i];
}

double dot(const Tensor& a, const Tensor& b) {
    assert(a.numel() == b.numel());
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        s += a[i] * b[i];
    return s;
}

double mse(const Tensor& a, const Tensor& b) {
    assert(a.numel() == b.numel());
    if (a.numel() == 0)
        return 0.0;
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s / (double)a.numel();
}

double linf(const Tensor& a) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(a[i]));
    return m;
}

bool all_finite(const Tensor& a) {
    for (int64_t i = 0; i < a.numel(); ++i)
        if (!std::isfinite(a[i]))
            return false;
    return true;
}

}  // namespace objswap

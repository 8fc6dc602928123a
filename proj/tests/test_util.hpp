#ifndef TCMGAN_TEST_UTIL_HPP
#define TCMGAN_TEST_UTIL_HPP

#include <cmath>
#include <functional>
#include <vector>

#include "tcmgan/rng.hpp"
#include "tcmgan/tensor.hpp"

namespace tcmgan::testutil {

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

inline Tensor random_normal_tensor(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    rng.fill_normal(t.data(), t.size(), 0.0, stddev);
    return t;
}

// Central finite difference of f w.r.t. entry `idx` of `param` (mutated in place
// and restored). f must re-evaluate the full computation from host tensors.
inline double central_diff(Tensor& param, size_t idx, const std::function<double()>& f,
                           double h = 1e-5) {
    const double orig = param[idx];
    param[idx] = orig + h;
    const double fp = f();
    param[idx] = orig - h;
    const double fm = f();
    param[idx] = orig;
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

// Checks `n_coords` sampled coordinates of `param` against finite differences.
// `analytic` holds the full analytic gradient for the tensor; `f` recomputes
// the scalar loss from current host values. Returns the worst relative error.
inline double gradcheck_tensor(Tensor& param, const Tensor& analytic,
                               const std::function<double()>& f, int n_coords, Rng& rng,
                               double h = 1e-5) {
    double worst = 0.0;
    for (int k = 0; k < n_coords; ++k) {
        const size_t idx = static_cast<size_t>(rng.uniform_int(static_cast<int>(param.size())));
        const double fd = central_diff(param, idx, f, h);
        const double an = analytic[idx];
        // absolute comparison when both are tiny
        if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
        worst = std::max(worst, rel_err(fd, an));
    }
    return worst;
}

}  // namespace tcmgan::testutil

#endif

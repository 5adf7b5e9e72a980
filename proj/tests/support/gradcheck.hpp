#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vsal/tensor.hpp"

namespace vsal::test {

// Central finite differences against analytic gradients. `eval` must build a
// fresh graph from the (possibly perturbed) tensors and return the scalar
// loss; `analytic` returns the gradient tensor for the same parameters.
struct GradCheckResult {
    double max_rel_err = 0.0;
    std::string worst;
};

inline double rel_err(double a, double f) {
    return std::abs(a - f) / std::max({std::abs(a), std::abs(f), 1e-6});
}

// Checks d(eval)/d(param) for every entry of `param` against `analytic`.
inline GradCheckResult fd_check(Tensor& param, const std::function<double()>& eval,
                                const Tensor& analytic, const std::string& tag,
                                double step = 1e-4) {
    GradCheckResult r;
    for (std::int64_t i = 0; i < param.size(); ++i) {
        const double keep = param[i];
        param[i] = keep + step;
        const double up = eval();
        param[i] = keep - step;
        const double dn = eval();
        param[i] = keep;
        const double fd = (up - dn) / (2.0 * step);
        const double e = rel_err(analytic[i], fd);
        if (e > r.max_rel_err) {
            r.max_rel_err = e;
            r.worst = tag + "[" + std::to_string(i) + "] analytic=" + std::to_string(analytic[i]) +
                      " fd=" + std::to_string(fd);
        }
    }
    return r;
}

}  // namespace vsal::test

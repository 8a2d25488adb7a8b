#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "flockrl/nn.hpp"
#include "flockrl/rng.hpp"

namespace flockrl::testing {

// |a-b| <= max(abs_floor, tol * max(|a|,|b|))
inline bool close_rel(double a, double b, double tol = 1e-4, double abs_floor = 1e-8) {
    return std::abs(a - b) <= std::max(abs_floor, tol * std::max(std::abs(a), std::abs(b)));
}

// Central finite differences of an arbitrary scalar loss with respect to
// every parameter of `net`. The loss closure re-reads the mutated network.
inline MlpGrad fd_param_gradient(Mlp& net, const std::function<double()>& loss,
                                 double h = 1e-5) {
    MlpGrad fd = make_grad(net);
    auto bump = [&](std::vector<double>& params, std::vector<double>& out) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double saved = params[i];
            params[i] = saved + h;
            const double up = loss();
            params[i] = saved - h;
            const double down = loss();
            params[i] = saved;
            out[i] = (up - down) / (2.0 * h);
        }
    };
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        bump(net.weights[k], fd.weights[k]);
        bump(net.biases[k], fd.biases[k]);
    }
    return fd;
}

// worst relative mismatch between an analytic gradient and its FD oracle
inline double max_grad_mismatch(const MlpGrad& analytic, const MlpGrad& fd, double tol = 1e-4,
                                double abs_floor = 1e-8) {
    double worst = 0.0;
    auto scan = [&](const std::vector<double>& a, const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double denom = std::max(abs_floor, tol * std::max(std::abs(a[i]), std::abs(b[i])));
            worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
        }
    };
    for (std::size_t k = 0; k < analytic.weights.size(); ++k) {
        scan(analytic.weights[k], fd.weights[k]);
        scan(analytic.biases[k], fd.biases[k]);
    }
    return worst;  // <= 1.0 means every entry within tolerance
}

inline std::vector<double> random_vector(std::size_t len, Rng& rng, double lo = -1.0,
                                         double hi = 1.0) {
    std::vector<double> v(len);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

// scales all parameters in place (small weights keep tanh outputs away from
// saturation and squash kinks, where finite differences lose accuracy)
inline void scale_params(Mlp& net, double s) {
    for (auto& w : net.weights)
        for (double& x : w) x *= s;
    for (auto& b : net.biases)
        for (double& x : b) x *= s;
}

}  // namespace flockrl::testing

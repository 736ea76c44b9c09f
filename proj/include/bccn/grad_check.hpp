#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "bccn/tensor.hpp"

namespace bccn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::size_t worst_param = 0;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients against central finite differences.
/// `fn` must rebuild its graph from the current leaf values on every call and
/// return a scalar; non-determinism is caught by evaluating twice up front.
/// `max_coords_per_param` == 0 checks every coordinate; otherwise evenly
/// spaced coordinates are probed (each probe costs two forward passes).
template <typename Fn>
GradCheckReport grad_check(Fn&& fn, std::vector<Tensor> params, double eps = 1e-5,
                           std::size_t max_coords_per_param = 0) {
    {
        const double a = fn().value();
        const double b = fn().value();
        if (a != b) {
            throw NumericError("grad_check: fn is not deterministic (" + std::to_string(a) +
                               " vs " + std::to_string(b) + ")");
        }
    }

    for (Tensor& p : params) p.zero_grad();
    Tensor loss = fn();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (const Tensor& p : params) analytic.push_back(p.grad());

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        std::vector<double>& values = params[pi].leaf_data();
        const std::size_t n = values.size();
        const std::size_t step =
            max_coords_per_param == 0 ? 1 : std::max<std::size_t>(1, n / max_coords_per_param);
        for (std::size_t j = 0; j < n; j += step) {
            const double saved = values[j];
            values[j] = saved + eps;
            const double f_plus = fn().value();
            values[j] = saved - eps;
            const double f_minus = fn().value();
            values[j] = saved;
            const double numeric = (f_plus - f_minus) / (2.0 * eps);
            const double a = analytic[pi][j];
            const double rel =
                std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = pi;
                report.worst_coord = j;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace bccn

// Copyright 2026 The PA-Net Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "panet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace panet {

double relative_error(double analytic, double numeric, double scale)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3 * scale, 1e-300});
    return std::abs(analytic - numeric) / denom;
}

std::vector<std::size_t> sample_coordinates(std::size_t n, std::size_t limit, std::uint64_t seed)
{
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (n <= limit)
        return idx;
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates keeps the draw reproducible and duplicate-free.
    for (std::size_t i = 0; i < limit; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(limit);
    std::sort(idx.begin(), idx.end());
    return idx;
}

static double max_abs(std::span<const double> v)
{
    double m = 0.0;
    for (double x : v)
        m = std::max(m, std::abs(x));
    return m;
}

GradCheckResult check_gradient(DiffOp& op, std::vector<TensorGrid> inputs, double h, std::uint64_t seed)
{
    if (!(h > 0.0))
        throw std::invalid_argument("check_gradient: step h must be positive");
    const auto out = op.forward(inputs);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    TensorGrid weight(out.shape());
    for (auto& w : weight.data())
        w = normal(rng);
    const auto analytic = op.backward(weight);

    auto objective = [&]() { return dot(op.forward(inputs).data(), weight.data()); };

    GradCheckResult res;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const double scale = max_abs(analytic[k].data());
        double worst = 0.0;
        for (auto i : sample_coordinates(inputs[k].size(), kGradCheckMaxCoords, seed + 1 + k)) {
            const double saved = inputs[k][i];
            inputs[k][i] = saved + h;
            const double fp = objective();
            inputs[k][i] = saved - h;
            const double fm = objective();
            inputs[k][i] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            worst = std::max(worst, relative_error(analytic[k][i], numeric, scale));
            ++res.coords_checked;
        }
        res.per_input.push_back(worst);
        res.max_relative_error = std::max(res.max_relative_error, worst);
    }
    return res;
}

double check_function_gradient(const std::function<double(std::span<const double>)>& f, std::span<double> x,
                               std::span<const double> analytic, double h, std::uint64_t seed)
{
    if (!(h > 0.0))
        throw std::invalid_argument("check_function_gradient: step h must be positive");
    if (analytic.size() != x.size())
        throw ShapeError("check_function_gradient: gradient length does not match parameters");
    const double scale = max_abs(analytic);
    double worst = 0.0;
    for (auto i : sample_coordinates(x.size(), kGradCheckMaxCoords, seed)) {
        const double saved = x[i];
        x[i] = saved + h;
        const double fp = f(x);
        x[i] = saved - h;
        const double fm = f(x);
        x[i] = saved;
        worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * h), scale));
    }
    return worst;
}

}  // namespace panet

#pragma once

// Central finite differences against the tape, f64 only.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ilrm/ops.hpp"

namespace ilrm {

struct GradCheck {
    std::string name;
    double rel_err = 0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
    std::size_t checked = 0;
};

// `loss` must build a scalar from the current values of `leaves`. Up to
// `max_entries` coordinates per leaf are probed (all of them when 0).
inline std::vector<GradCheck> gradcheck(const std::function<Tensor<double>()>& loss,
                                        std::vector<std::pair<std::string, Tensor<double>>> leaves,
                                        double h = 1e-6, std::size_t max_entries = 0, std::uint64_t seed = 1) {
    for (auto& [name, t] : leaves) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    {
        Tape<double> tape;
        TapeScope<double> scope(tape);
        tape.backward(loss());
    }
    std::mt19937_64 rng(seed);
    std::vector<GradCheck> out;
    for (auto& [name, t] : leaves) {
        std::vector<std::size_t> idx(t.numel());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        if (max_entries && idx.size() > max_entries) {
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(max_entries);
        }
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        double diff2 = 0, a2 = 0, n2 = 0;
        auto data = t.mutable_data();
        for (std::size_t i : idx) {
            const double x0 = data[i];
            data[i] = x0 + h;
            const double fp = loss().item();
            data[i] = x0 - h;
            const double fm = loss().item();
            data[i] = x0;
            const double num = (fp - fm) / (2 * h);
            const double a = analytic.empty() ? 0.0 : analytic[i];
            diff2 += (a - num) * (a - num);
            a2 += a * a;
            n2 += num * num;
        }
        const double denom = std::sqrt(std::max({a2, n2, 1e-300}));
        out.push_back({name, (a2 == 0 && n2 == 0) ? 0.0 : std::sqrt(diff2) / denom, idx.size()});
    }
    return out;
}

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> d(shape_numel(shape));
    for (auto& v : d) v = u(rng);
    return Tensor<double>(std::move(shape), std::move(d), true);
}

// sum(y * r) for a fixed random r shaped like y, so every output entry matters.
inline Tensor<double> weighted_sum(const Tensor<double>& y, std::uint64_t seed = 99) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> r(y.numel());
    for (auto& v : r) v = u(rng);
    return sum(mul(y, Tensor<double>(y.shape(), std::move(r))));
}

} // namespace ilrm

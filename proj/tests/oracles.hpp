#pragma once

// Reference computations written independently of the library, used as
// ground truth by unit and acceptance tests.

#include <slaq/core.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

inline double sublinear(double a, double b, double c, double d, double k) {
    return 1.0 / (a * k * k + b * k + c) + d;
}

inline double exponential(double mu, double b, double c, double k) { return std::pow(mu, k - b) + c; }

inline slaq::LossHistory history_of(const std::function<double(double)>& f, std::uint64_t first,
                                    std::uint64_t last) {
    slaq::LossHistory h;
    for (std::uint64_t k = first; k <= last; ++k) {
        h.append({k, static_cast<double>(k), f(static_cast<double>(k))});
    }
    return h;
}

inline double relative_error(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

struct BruteForceResult {
    double best_total = -1.0;
    std::vector<std::vector<int>> argmax;  // every allocation reaching best_total
};

/// Exhaustive search over allocations with a_j in [1, cap_j] summing to
/// min(C, sum cap_j). `value(j, a)` is job j's total reduction with a cores.
inline BruteForceResult brute_force(std::size_t jobs, int capacity, const std::vector<int>& caps,
                                    const std::function<double(std::size_t, int)>& value) {
    int total_cap = 0;
    for (int c : caps) total_cap += c;
    const int budget = std::min(capacity, total_cap);

    BruteForceResult out;
    std::vector<int> alloc(jobs, 1);
    std::function<void(std::size_t, int)> rec = [&](std::size_t j, int left) {
        if (j + 1 == jobs) {
            if (left < 1 || left > caps[j]) return;
            alloc[j] = left;
            double total = 0.0;
            for (std::size_t i = 0; i < jobs; ++i) total += value(i, alloc[i]);
            if (total > out.best_total + 1e-12) {
                out.best_total = total;
                out.argmax = {alloc};
            } else if (std::abs(total - out.best_total) <= 1e-12) {
                out.argmax.push_back(alloc);
            }
            return;
        }
        for (int a = 1; a <= std::min(caps[j], left); ++a) {
            alloc[j] = a;
            rec(j + 1, left - a);
        }
    };
    rec(0, budget);
    return out;
}

}  // namespace oracle

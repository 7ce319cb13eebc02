#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "switchsynth/types.hpp"

namespace testutil {

using switchsynth::Mat;
using switchsynth::Vec;

inline std::mt19937_64& rng() {
    static std::mt19937_64 g(20240611);
    return g;
}

inline double uni(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng()); }

inline int uint_in(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng()); }

inline double gauss() { return std::normal_distribution<double>(0.0, 1.0)(rng()); }

inline Vec uni_vec(int m, double a, double b) {
    Vec v(m);
    for (int i = 0; i < m; ++i) v(i) = uni(a, b);
    return v;
}

inline Mat rotation2(double th) {
    Mat R(2, 2);
    R << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    return R;
}

// Standard normal CDF in long double, used as an independent reference.
inline long double Phi(long double x) { return 0.5L * std::erfc(-x / std::sqrt(2.0L)); }

// Separating axis test for two convex polygons given by vertices (any order, hull taken implicitly by
// projecting every vertex). Closed sets: touching counts as intersecting.
inline bool sat_intersect(const std::vector<Vec>& P, const std::vector<Vec>& Q, double tol = 1e-9) {
    auto axes = [](const std::vector<Vec>& A) {
        std::vector<Vec> out;
        for (std::size_t i = 0; i < A.size(); ++i)
            for (std::size_t j = i + 1; j < A.size(); ++j) {
                Vec d = A[j] - A[i];
                if (d.norm() < 1e-14) continue;
                Vec n(2);
                n << -d(1), d(0);
                out.push_back(n / n.norm());
            }
        return out;
    };
    std::vector<Vec> all = axes(P);
    const auto q = axes(Q);
    all.insert(all.end(), q.begin(), q.end());
    for (const auto& n : all) {
        double pmin = 1e300, pmax = -1e300, qmin = 1e300, qmax = -1e300;
        for (const auto& v : P) {
            pmin = std::min(pmin, n.dot(v));
            pmax = std::max(pmax, n.dot(v));
        }
        for (const auto& v : Q) {
            qmin = std::min(qmin, n.dot(v));
            qmax = std::max(qmax, n.dot(v));
        }
        if (pmax < qmin - tol || qmax < pmin - tol) return false;
    }
    return true;
}

// Monte Carlo proportion with its standard error.
struct Proportion {
    double p;
    double se;
};

inline Proportion proportion(long hits, long n) {
    const double p = static_cast<double>(hits) / n;
    return {p, std::sqrt(std::max(p * (1 - p), 1.0 / n) / n)};
}

}  // namespace testutil

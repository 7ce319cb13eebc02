#include <doctest.h>

#include <algorithm>
#include <numbers>

#include "switchsynth/gaussian_kernel.hpp"
#include "test_util.hpp"

using namespace switchsynth;
using namespace testutil;

namespace {

Vec v1(double a) { return Vec::Constant(1, a); }

Vec v2(double a, double b) {
    Vec v(2);
    v << a, b;
    return v;
}

// Independent erf product in long double.
long double ref_f(const Vec& y, const HyperRectangle& r) {
    long double p = 1;
    for (int i = 0; i < y.size(); ++i) p *= Phi(y(i) - r.lower(i)) - Phi(y(i) - r.upper(i));
    return p;
}

Mat random_pd(int m) {
    Mat A(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) A(i, j) = gauss();
    return A * A.transpose() + 0.05 * Mat::Identity(m, m);
}

HyperRectangle random_rect(int m, double c, double w0, double w1) {
    const Vec lo = uni_vec(m, -c, c);
    return HyperRectangle(lo, lo + uni_vec(m, w0, w1));
}

Parallelotope random_par(int m, double c, double s) {
    Mat G(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) G(i, j) = uni(-s, s);
    G += 0.3 * s * Mat::Identity(m, m);
    return Parallelotope{uni_vec(m, -c, c), G};
}

// Grid scan of f over a 2D parallelotope in its unit-box coordinates.
std::pair<double, double> scan2(const HyperRectangle& r, const Parallelotope& p, int n = 200) {
    double mx = 0, mn = 1;
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j) {
            const Vec y = p.base + p.generators * v2(double(i) / n, double(j) / n);
            const double f = static_cast<double>(ref_f(y, r));
            mx = std::max(mx, f);
            mn = std::min(mn, f);
        }
    return {mx, mn};
}

}  // namespace

TEST_CASE("whitening examples") {
    const Whitening wi = whitening_of_covariance(Mat::Identity(2, 2));
    CHECK((wi.T * wi.T.transpose() - Mat::Identity(2, 2)).norm() < 1e-12);

    Mat D = Mat::Zero(2, 2);
    D.diagonal() << 4, 1;
    const Whitening wd = whitening_of_covariance(D);
    CHECK(wd.lambda(0) == doctest::Approx(4));
    CHECK(wd.T.cwiseAbs().isApprox((Mat(2, 2) << 0.5, 0, 0, 1).finished()));

    Mat C(2, 2);
    C << 2, 1, 1, 2;
    const Whitening wc = whitening_of_covariance(C);
    CHECK((wc.T * C * wc.T.transpose() - Mat::Identity(2, 2)).norm() < 1e-8);
    CHECK((wc.T * wc.T_inv - Mat::Identity(2, 2)).norm() < 1e-12);

    Mat S = Mat::Zero(2, 2);
    S(0, 0) = 1;
    CHECK_THROWS_AS(whitening_of_covariance(S), SingularCovariance);
}

TEST_CASE("whitening identity on random covariances") {
    for (int k = 0; k < 1000; ++k) {
        const int m = uint_in(1, 4);
        const Mat C = random_pd(m);
        const Whitening w = whitening_of_covariance(C);
        CHECK((w.T * C * w.T.transpose() - Mat::Identity(m, m)).norm() < 1e-8);
        CHECK((w.V.transpose() * w.V - Mat::Identity(m, m)).norm() < 1e-10);
        for (int i = 0; i + 1 < m; ++i) CHECK(w.lambda(i) >= w.lambda(i + 1));
        for (int j = 0; j < m; ++j) {
            int i = 0;
            while (i < m && std::abs(w.V(i, j)) < 1e-14) ++i;
            CHECK(w.V(i, j) > 0);
        }
    }
}

TEST_CASE("mode covariance is G Cov_w G^T") {
    ModeDynamics d{Mat::Identity(2, 2), (Mat(2, 1) << 1, 2).finished(), Mat::Identity(1, 1) * 3};
    CHECK(d.cov_x().isApprox((Mat(2, 2) << 3, 6, 6, 12).finished()));
}

TEST_CASE("normal factor and erf product against a long double reference") {
    const HyperRectangle r1(v1(-1), v1(1));
    CHECK(erf_product(v1(0), r1) == doctest::Approx(0.6826894921370859).epsilon(1e-14));
    CHECK(erf_product(v1(0), HyperRectangle(v1(0.3), v1(0.3))) == 0.0);
    double prev = 1;
    for (double y = 0; y < 40; y += 0.5) {
        const double f = erf_product(v1(y), r1);
        CHECK(f <= prev);
        prev = f;
    }
    CHECK(prev < 1e-300);

    for (int k = 0; k < 2000; ++k) {
        const double y = uni(-8, 8), l = uni(-8, 8), u = l + uni(0, 4);
        const double ref = static_cast<double>(Phi(y - l) - Phi(y - u));
        CHECK(std::abs(normal_factor(y, l, u) - ref) <= 1e-15 + 1e-12 * ref);
    }
    for (int k = 0; k < 300; ++k) {
        const Vec y = uni_vec(3, -2, 2);
        const HyperRectangle r = random_rect(3, 2, 0.1, 3);
        const double ref = static_cast<double>(ref_f(y, r));
        CHECK(erf_product(y, r) == doctest::Approx(ref).epsilon(1e-12));
        CHECK(log_erf_product(y, r) == doctest::Approx(std::log(ref)).epsilon(1e-12));
    }
}

TEST_CASE("log normal factor in the far tails") {
    // References computed with 50-digit arithmetic.
    CHECK(log_normal_factor(-40, 0, 1e300) == doctest::Approx(-804.6084420137538).epsilon(1e-12));
    CHECK(log_normal_factor(-3, 0, 42) == doctest::Approx(-6.607726221510349).epsilon(1e-12));
    CHECK(log_normal_factor(40, 41, 1e300) == doctest::Approx(-1.8410216450092635).epsilon(1e-12));
    CHECK(std::isfinite(log_normal_factor(60, -1, 1)));
    CHECK(std::isfinite(log_normal_factor(-60, -1, 1)));
    CHECK(log_normal_factor(60, -1, 1) == doctest::Approx(log_normal_factor(-60, -1, 1)).epsilon(1e-12));
}

TEST_CASE("gradient of log f") {
    const HyperRectangle sym(v2(-1, -2), v2(1, 2));
    CHECK(grad_log_f(v2(0, 0), sym).norm() < 1e-15);
    CHECK(grad_log_f(v1(-3), HyperRectangle(v1(0), v1(1)))(0) > 0);
    CHECK_THROWS_AS(grad_log_f(v1(-60), HyperRectangle(v1(0), v1(1))), UnderflowedFactor);
    CHECK(grad_log_f_stable(v1(-60), HyperRectangle(v1(0), v1(1)))(0) > 0);

    for (int k = 0; k < 500; ++k) {
        const int m = uint_in(1, 3);
        const HyperRectangle r = random_rect(m, 2, 0.2, 3);
        const Vec y = uni_vec(m, -4, 4);
        const Vec g = grad_log_f(y, r), gs = grad_log_f_stable(y, r);
        for (int i = 0; i < m; ++i) {
            const double h = 1e-5;
            Vec yp = y, ym = y;
            yp(i) += h;
            ym(i) -= h;
            const double fd = static_cast<double>((std::log(ref_f(yp, r)) - std::log(ref_f(ym, r))) / (2 * h));
            CHECK(std::abs(g(i) - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
            CHECK(std::abs(gs(i) - g(i)) <= 1e-9 * std::max(1.0, std::abs(g(i))));
        }
    }
}

TEST_CASE("log-concavity of the kernel") {
    for (int k = 0; k < 1000; ++k) {
        const int m = uint_in(1, 3);
        const HyperRectangle r = random_rect(m, 2, 0.1, 3);
        const Vec a = uni_vec(m, -4, 4), b = uni_vec(m, -4, 4);
        const double lam = uni(0, 1);
        const double fm = erf_product(lam * a + (1 - lam) * b, r);
        CHECK(fm >= std::pow(erf_product(a, r), lam) * std::pow(erf_product(b, r), 1 - lam) - 1e-12);
    }
}

TEST_CASE("max and min over 1D segments") {
    const HyperRectangle r(v1(-1), v1(1));
    const Parallelotope seg{v1(0.5), Mat::Constant(1, 1, 1.5)};
    const OptResult mx = max_f_over_polytope(r, seg);
    CHECK(mx.arg(0) == doctest::Approx(0.5));
    // Dense scan oracle.
    double best = 0;
    for (int i = 0; i <= 100000; ++i) best = std::max(best, double(ref_f(v1(0.5 + 1.5 * i / 1e5), r)));
    CHECK(mx.value == doctest::Approx(best).epsilon(1e-9));
    CHECK(mx.value == doctest::Approx(0.624655260005155).epsilon(1e-12));

    const OptResult mn = min_f_over_polytope(r, Parallelotope{v1(0), Mat::Constant(1, 1, 1.0)});
    CHECK(mn.arg(0) == doctest::Approx(1.0));

    const OptResult c = max_f_over_polytope(r, Parallelotope{v1(-0.5), Mat::Constant(1, 1, 1.0)});
    CHECK(c.arg(0) == doctest::Approx(0.0));

    const Parallelotope pt{v2(0.2, 0.1), Mat::Zero(2, 2)};
    const HyperRectangle r2(v2(-1, -1), v2(1, 1));
    CHECK(min_f_over_polytope(r2, pt).value == doctest::Approx(erf_product(v2(0.2, 0.1), r2)));
    CHECK(max_f_over_polytope(r2, pt).value == doctest::Approx(erf_product(v2(0.2, 0.1), r2)));
}

TEST_CASE("2D max and min agree with a grid scan") {
    for (int k = 0; k < 25; ++k) {
        const Parallelotope p = random_par(2, 2, 1.0);
        const HyperRectangle r = random_rect(2, 2, 0.3, 2);
        const auto [smax, smin] = scan2(r, p);
        const double mx = max_f_over_polytope(r, p).value;
        CHECK(mx >= smax - 1e-12);
        CHECK(mx <= smax + 1e-4);
        CHECK(min_f_over_polytope(r, p).value == doctest::Approx(smin).epsilon(1e-6));
        CHECK(max_f_over_polytope(r, p.to_polytope()).value == doctest::Approx(mx).epsilon(1e-8));
    }
}

TEST_CASE("KKT and gradient paths agree") {
    for (int k = 0; k < 200; ++k) {
        const int m = uint_in(1, 3);
        const Parallelotope p = random_par(m, 3, 1.0);
        const HyperRectangle r = random_rect(m, 2, 0.2, 2);
        MaxOptions kkt, gd;
        kkt.method = MaxMethod::Kkt;
        gd.method = MaxMethod::Gradient;
        const double a = max_f_over_polytope(r, p, kkt).value, b = max_f_over_polytope(r, p, gd).value;
        CHECK(std::abs(a - b) <= 1e-6);
    }
}

TEST_CASE("box_max_bound is separable and sound") {
    for (int k = 0; k < 200; ++k) {
        const HyperRectangle r = random_rect(2, 2, 0.2, 2), b = random_rect(2, 2, 0.1, 1.5);
        const double bound = box_max_bound(r, b);
        CHECK(bound >= max_f_over_polytope(r, Parallelotope::from_box(b)).value - 1e-12);
        CHECK(bound == doctest::Approx(max_f_over_polytope(r, Parallelotope::from_box(b)).value).epsilon(1e-9));
    }
}

TEST_CASE("transition bounds examples") {
    const ModeDynamics d{Mat::Constant(1, 1, 0.5), Mat::Identity(1, 1), Mat::Identity(1, 1)};
    const Whitening w = whitening(d);
    const Parallelotope src = Parallelotope::from_box(HyperRectangle(v1(0), v1(1)));
    const ProbInterval b = transition_bounds(src, d, w, HyperRectangle(v1(-1), v1(1)));
    double lo = 1, hi = 0;
    for (int i = 0; i <= 100000; ++i) {
        const double f = static_cast<double>(ref_f(v1(0.5 * i / 1e5), HyperRectangle(v1(-1), v1(1))));
        lo = std::min(lo, f);
        hi = std::max(hi, f);
    }
    CHECK(b.lo == doctest::Approx(lo).epsilon(1e-9));
    CHECK(b.hi == doctest::Approx(hi).epsilon(1e-9));

    const ModeDynamics d2{(Mat(2, 2) << 0.9, 0.1, -0.2, 0.8).finished(), Mat::Identity(2, 2) * 0.3,
                          Mat::Identity(2, 2)};
    const ProbInterval all =
        transition_bounds(Parallelotope::from_box(HyperRectangle(v2(0, 0), v2(1, 1))), d2, whitening(d2),
                          HyperRectangle(Vec::Constant(2, -100), Vec::Constant(2, 100)));
    CHECK(all.lo == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(all.hi == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("transition bounds bracket point values and Monte Carlo") {
    for (int k = 0; k < 100; ++k) {
        Mat F(2, 2), G(2, 2);
        F << uni(-1, 1), uni(-1, 1), uni(-1, 1), uni(-1, 1);
        G << uni(0.1, 0.5), uni(-0.1, 0.1), uni(-0.1, 0.1), uni(0.1, 0.5);
        const ModeDynamics d{F, G, Mat::Identity(2, 2)};
        const Whitening w = whitening(d);
        const Vec lo = uni_vec(2, -1, 1);
        const HyperRectangle cell(lo, lo + uni_vec(2, 0.05, 0.3));
        const Parallelotope src = Parallelotope::from_box(cell);
        // Target expressed in the whitened frame.
        const Vec c = w.T * F * cell.center() + uni_vec(2, -1.5, 1.5);
        const HyperRectangle tgt(c, c + uni_vec(2, 0.3, 2));
        const ProbInterval b = transition_bounds(src, d, w, tgt);
        CHECK(b.lo <= b.hi);
        for (int j = 0; j < 100; ++j) {
            const Vec x = cell.lower + (uni_vec(2, 0, 1).array() * cell.extent().array()).matrix();
            const double f = erf_product(w.T * F * x, tgt);
            CHECK(f >= b.lo - 1e-12);
            CHECK(f <= b.hi + 1e-12);
        }
        if (k < 20) {
            const Vec x = cell.lower + (uni_vec(2, 0, 1).array() * cell.extent().array()).matrix();
            long hits = 0;
            const long n = 100000;
            for (long s = 0; s < n; ++s) {
                const Vec xn = F * x + G * v2(gauss(), gauss());
                hits += tgt.contains_point(w.T * xn);
            }
            const Proportion p = proportion(hits, n);
            CHECK(p.p >= b.lo - 4 * p.se);
            CHECK(p.p <= b.hi + 4 * p.se);
        }
    }
}

TEST_CASE("sink bounds") {
    const ModeDynamics d{Mat::Identity(2, 2) * 0.5, Mat::Identity(2, 2) * 0.1, Mat::Identity(2, 2)};
    const Whitening w = whitening(d);
    auto whitened_grid = [&](double half, int n) {
        std::vector<HyperRectangle> cells;
        const double s = 2 * half / n;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const Vec lo = v2(-half + i * s, -half + j * s);
                const Vec a = w.T * lo, b = w.T * (lo + Vec::Constant(2, s));
                cells.emplace_back(a.cwiseMin(b), a.cwiseMax(b));
            }
        return cells;
    };
    const HyperRectangle hull(w.T * Vec::Constant(2, -10), w.T * Vec::Constant(2, 10));
    const auto cells = whitened_grid(10, 20);
    const std::vector<bool> inside(cells.size(), true);

    // Far inside: exit is numerically impossible.
    const Parallelotope src = Parallelotope::from_box(HyperRectangle(v2(-0.5, -0.5), v2(0.5, 0.5)));
    const ProbInterval a = sink_bounds(src, d, w, cells, inside, &hull, true);
    CHECK(a.lo == 0.0);
    CHECK(a.hi < 1e-6);

    // Exact tiling equals the complement of transition bounds to the hull.
    const Parallelotope edge = Parallelotope::from_box(HyperRectangle(v2(19.0, 0), v2(20.0, 1)));
    const ProbInterval e = sink_bounds(edge, d, w, cells, inside, &hull, true);
    const ProbInterval t = transition_bounds(edge, d, w, hull);
    CHECK(e.lo == doctest::Approx(1 - t.hi).epsilon(1e-12));
    CHECK(e.hi == doctest::Approx(1 - t.lo).epsilon(1e-12));

    // Post image entirely outside X.
    const Parallelotope out = Parallelotope::from_box(HyperRectangle(v2(30, 30), v2(31, 31)));
    CHECK(sink_bounds(out, d, w, cells, inside, &hull, true).lo == doctest::Approx(1.0).epsilon(1e-6));

    // The conservative fallback is never tighter than the exact answer.
    SinkStats st;
    const ProbInterval f = sink_bounds(edge, d, w, cells, inside, &hull, false, &st);
    CHECK(st.fallback_min == 1);
    CHECK(f.lo <= e.lo + 1e-12);
    CHECK(f.hi >= e.hi - 1e-12);

    // Monte Carlo exit frequency from points of the edge cell.
    for (int j = 0; j < 5; ++j) {
        const Vec x = v2(uni(19, 20), uni(0, 1));
        long hits = 0;
        const long n = 100000;
        for (long s = 0; s < n; ++s) {
            const Vec xn = d.F * x + d.G * v2(gauss(), gauss());
            hits += (xn.cwiseAbs().maxCoeff() > 10);
        }
        const Proportion p = proportion(hits, n);
        CHECK(p.p >= e.lo - 4 * p.se);
        CHECK(p.p <= e.hi + 4 * p.se);
    }
}

TEST_CASE("merge_runs preserves the covered volume") {
    std::vector<HyperRectangle> cells;
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 4; ++j)
            if ((i + j) % 5 != 0) cells.emplace_back(v2(i, j), v2(i + 1, j + 1));
    double v = 0;
    for (const auto& r : merge_runs(cells)) v += r.volume();
    CHECK(v == doctest::Approx(double(cells.size())));
    CHECK(merge_runs(cells).size() < cells.size());
}

TEST_CASE("clamp_prob") {
    CHECK(clamp_prob(-0.1) == 0.0);
    CHECK(clamp_prob(1e-16) == 0.0);
    CHECK(clamp_prob(1.2) == 1.0);
    CHECK(clamp_prob(0.3) == 0.3);
}

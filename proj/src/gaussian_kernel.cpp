#include "switchsynth/gaussian_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace switchsynth {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kUnderflow = 1e-300;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log of the upper normal tail Q(x) for x >= 0.
double log_upper_tail(double x) {
    if (x < 30.0) return std::log(0.5 * std::erfc(x * kInvSqrt2));
    const double r = 1.0 / (x * x);
    // Asymptotic series of the Mills ratio; truncation error below 1e-15 for x >= 30.
    const double s = 1.0 + r * (-1.0 + r * (3.0 + r * (-15.0 + r * (105.0 + r * (-945.0 + r * 10395.0)))));
    return -0.5 * x * x - std::log(x) - kLogSqrt2Pi + std::log(s);
}

double log_phi(double x) { return -0.5 * x * x - kLogSqrt2Pi; }

// Maximizer of log f along p + t d, t in [0,1]; log f is concave so the derivative is decreasing.
std::pair<double, double> edge_max(const HyperRectangle& rect, const Vec& p, const Vec& d) {
    const int m = rect.dim();
    auto deriv = [&](double t) {
        double g = 0.0;
        for (int i = 0; i < m; ++i) {
            if (d(i) == 0.0) continue;
            g += d(i) * dlog_normal_factor(p(i) + t * d(i), rect.lower(i), rect.upper(i));
        }
        return g;
    };
    double t;
    if (d.lpNorm<Eigen::Infinity>() == 0.0 || deriv(0.0) <= 0.0) {
        t = 0.0;
    } else if (deriv(1.0) >= 0.0) {
        t = 1.0;
    } else {
        double a = 0.0, b = 1.0;
        for (int it = 0; it < 64 && b - a > 1e-15; ++it) {
            const double mid = 0.5 * (a + b);
            (deriv(mid) > 0.0 ? a : b) = mid;
        }
        t = 0.5 * (a + b);
    }
    return {t, log_erf_product(p + t * d, rect)};
}

struct FaceMax {
    Vec u;
    double logv = kNegInf;
};

// Maximizes g(u) = log f(base + G u) over the closed face of the unit box where free coordinates vary.
FaceMax face_max(const HyperRectangle& rect, const Parallelotope& dom, Vec u, const std::vector<int>& free) {
    FaceMax out;
    if (free.empty()) {
        out.u = u;
        out.logv = log_erf_product(dom.point(u), rect);
        return out;
    }
    if (free.size() == 1) {
        const int k = free[0];
        u(k) = 0.0;
        auto [t, lv] = edge_max(rect, dom.point(u), dom.generators.col(k));
        u(k) = t;
        out.u = u;
        out.logv = lv;
        return out;
    }
    // Partial maximization keeps concavity, so golden section on the outer coordinate is exact up to tolerance.
    const int k = free.back();
    std::vector<int> rest(free.begin(), free.end() - 1);
    auto inner = [&](double s) {
        Vec v = u;
        v(k) = s;
        return face_max(rect, dom, v, rest);
    };
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double a = 0.0, b = 1.0;
    double c = b - gr * (b - a), e = a + gr * (b - a);
    FaceMax fc = inner(c), fe = inner(e);
    for (int it = 0; it < 80 && b - a > 1e-11; ++it) {
        if (fc.logv >= fe.logv) {
            b = e;
            e = c;
            fe = fc;
            c = b - gr * (b - a);
            fc = inner(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + gr * (b - a);
            fe = inner(e);
        }
    }
    out = fc.logv >= fe.logv ? fc : fe;
    for (double s : {0.0, 1.0}) {
        FaceMax f = inner(s);
        if (f.logv > out.logv) out = f;
    }
    return out;
}

OptResult clamp_box_max(const HyperRectangle& rect, const HyperRectangle& box) {
    Vec c = rect.center().cwiseMax(box.lower).cwiseMin(box.upper);
    return {c, erf_product(c, rect), true, 0};
}

OptResult kkt_max(const HyperRectangle& rect, const Parallelotope& dom) {
    const int m = dom.dim();
    const Vec c = rect.center();
    Eigen::FullPivLU<Mat> lu(dom.generators);
    if (lu.isInvertible()) {
        Vec u = lu.solve(c - dom.base);
        if ((u.array() >= -1e-12).all() && (u.array() <= 1.0 + 1e-12).all()) return {c, erf_product(c, rect), true, 0};
    }
    FaceMax best;
    // Vertices first, then every facet over its closed extent.
    for (int v = 0; v < (1 << m); ++v) {
        Vec u(m);
        for (int j = 0; j < m; ++j) u(j) = (v >> j & 1) ? 1.0 : 0.0;
        const double lv = log_erf_product(dom.point(u), rect);
        if (lv > best.logv) best = {u, lv};
    }
    for (int fixed = 0; fixed < m; ++fixed)
        for (double side : {0.0, 1.0}) {
            Vec u = Vec::Zero(m);
            u(fixed) = side;
            std::vector<int> free;
            for (int j = 0; j < m; ++j)
                if (j != fixed) free.push_back(j);
            FaceMax f = face_max(rect, dom, u, free);
            if (f.logv > best.logv) best = f;
        }
    if (m == 1 && best.u.size() == 0) best.u = Vec::Zero(1);
    Vec y = dom.point(best.u);
    return {y, std::exp(best.logv), true, 0};
}

OptResult gradient_max(const HyperRectangle& rect, const Parallelotope& dom, const MaxOptions& opt) {
    const int m = dom.dim();
    const Mat& G = dom.generators;
    auto clamp01 = [](Vec u) { return Vec(u.cwiseMax(0.0).cwiseMin(1.0)); };
    auto g = [&](const Vec& u) { return log_erf_product(dom.point(u), rect); };
    auto grad = [&](const Vec& u) { return Vec(G.transpose() * grad_log_f_stable(dom.point(u), rect)); };

    // Seeds: least-squares preimage of the rectangle center, and the best vertex.
    Vec u = clamp01(G.completeOrthogonalDecomposition().solve(rect.center() - dom.base));
    double gu = g(u);
    for (int v = 0; v < (1 << m); ++v) {
        Vec w(m);
        for (int j = 0; j < m; ++j) w(j) = (v >> j & 1) ? 1.0 : 0.0;
        const double gw = g(w);
        if (gw > gu) {
            u = w;
            gu = gw;
        }
    }
    if (!std::isfinite(gu)) return {dom.point(u), 0.0, true, 0};

    Vec gr = grad(u);
    double alpha = 1.0;
    int it = 0;
    bool converged = false;
    for (; it < opt.max_iterations; ++it) {
        if ((clamp01(u + gr) - u).lpNorm<Eigen::Infinity>() < opt.step_tol) {
            converged = true;
            break;
        }
        // Armijo backtracking along the projection arc.
        double step = alpha;
        Vec un;
        double gn = kNegInf;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            un = clamp01(u + step * gr);
            gn = g(un);
            if (gn >= gu + 1e-4 * gr.dot(un - u)) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted || (un - u).lpNorm<Eigen::Infinity>() < 1e-15) {
            converged = (un - u).lpNorm<Eigen::Infinity>() < opt.step_tol || !accepted;
            if (accepted && gn > gu) {
                u = un;
                gu = gn;
            }
            break;
        }
        Vec gnew = grad(un);
        Vec s = un - u, yv = gnew - gr;
        const double sy = s.dot(yv);
        // Barzilai-Borwein step for an ascent problem (curvature is negative).
        alpha = sy < -1e-300 ? std::clamp(-s.squaredNorm() / sy, 1e-10, 1e10) : std::max(1.0, 2.0 * step);
        u = un;
        gu = gn;
        gr = gnew;
    }
    if (!converged && opt.throw_on_nonconvergence) throw NonConvergence("max_f_over_polytope: iteration cap reached");
    return {dom.point(u), std::exp(gu), converged, it};
}

bool polytope_is_bbox(const Polytope& P, const HyperRectangle& box) {
    const int m = P.dim();
    if (m > 20) return false;
    Mat V = box.vertices();
    for (int c = 0; c < V.cols(); ++c) {
        bool found = false;
        for (const auto& v : P.vertices)
            if ((v - V.col(c)).lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + v.lpNorm<Eigen::Infinity>())) {
                found = true;
                break;
            }
        if (!found) return false;
    }
    return true;
}

}  // namespace

double clamp_prob(double p) {
    if (!(p > kProbFloor)) return 0.0;
    return std::min(1.0, p);
}

Whitening whitening_of_covariance(const Mat& cov) {
    if (cov.rows() != cov.cols()) throw DimensionMismatch("whitening: covariance must be square");
    const int m = static_cast<int>(cov.rows());
    Mat sym = 0.5 * (cov + cov.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(sym);
    if (es.info() != Eigen::Success) throw SingularCovariance("whitening: eigendecomposition failed");
    Vec ev = es.eigenvalues().reverse();
    Mat V = es.eigenvectors().rowwise().reverse();
    if (!(ev(m - 1) > 1e-12 * ev(0)) || !(ev(0) > 0)) throw SingularCovariance("whitening: covariance is not positive definite");
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) {
            if (std::abs(V(i, j)) > 1e-12) {
                if (V(i, j) < 0) V.col(j) *= -1.0;
                break;
            }
        }
    }
    Whitening w;
    w.lambda = ev;
    w.V = V;
    w.T = ev.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose();
    w.T_inv = V * ev.cwiseSqrt().asDiagonal();
    return w;
}

Whitening whitening(const ModeDynamics& dyn) {
    if (dyn.F.rows() != dyn.F.cols() || dyn.G.rows() != dyn.F.rows() || dyn.cov_w.rows() != dyn.G.cols())
        throw DimensionMismatch("whitening: inconsistent mode dimensions");
    return whitening_of_covariance(dyn.cov_x());
}

double normal_factor(double y, double l, double u) {
    const double a = y - u, b = y - l;
    if (!(b > a)) return 0.0;
    if (a >= 0.0) return std::max(0.0, 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2)));
    if (b <= 0.0) return std::max(0.0, 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2)));
    return 1.0 - 0.5 * std::erfc(b * kInvSqrt2) - 0.5 * std::erfc(-a * kInvSqrt2);
}

double log_normal_factor(double y, double l, double u) {
    const double a = y - u, b = y - l;
    if (!(b > a)) return kNegInf;
    if (a >= 0.0) {
        const double la = log_upper_tail(a), lb = log_upper_tail(b);
        return la + std::log1p(-std::exp(lb - la));
    }
    if (b <= 0.0) {
        const double la = log_upper_tail(-b), lb = log_upper_tail(-a);
        return la + std::log1p(-std::exp(lb - la));
    }
    return std::log1p(-0.5 * std::erfc(b * kInvSqrt2) - 0.5 * std::erfc(-a * kInvSqrt2));
}

double dlog_normal_factor(double y, double l, double u) {
    const double a = y - u, b = y - l;
    const double lf = log_normal_factor(y, l, u);
    if (!std::isfinite(lf)) return 0.0;
    return std::exp(log_phi(b) - lf) - std::exp(log_phi(a) - lf);
}

double erf_product(const Vec& y, const HyperRectangle& rect) {
    double p = 1.0;
    for (int i = 0; i < rect.dim() && p > 0.0; ++i) p *= normal_factor(y(i), rect.lower(i), rect.upper(i));
    return std::clamp(p, 0.0, 1.0);
}

double log_erf_product(const Vec& y, const HyperRectangle& rect) {
    double s = 0.0;
    for (int i = 0; i < rect.dim(); ++i) s += log_normal_factor(y(i), rect.lower(i), rect.upper(i));
    return s;
}

Vec grad_log_f(const Vec& y, const HyperRectangle& rect) {
    const double s2pi = std::sqrt(2.0 * M_PI);
    Vec g(rect.dim());
    for (int i = 0; i < rect.dim(); ++i) {
        const double fi = normal_factor(y(i), rect.lower(i), rect.upper(i));
        if (fi < kUnderflow) throw UnderflowedFactor("grad_log_f: factor underflow");
        const double a = y(i) - rect.upper(i), b = y(i) - rect.lower(i);
        g(i) = (std::exp(-0.5 * b * b) - std::exp(-0.5 * a * a)) / s2pi / fi;
    }
    return g;
}

Vec grad_log_f_stable(const Vec& y, const HyperRectangle& rect) {
    Vec g(rect.dim());
    for (int i = 0; i < rect.dim(); ++i) g(i) = dlog_normal_factor(y(i), rect.lower(i), rect.upper(i));
    return g;
}

OptResult max_f_over_polytope(const HyperRectangle& rect, const Parallelotope& domain, const MaxOptions& opt) {
    if (rect.dim() != domain.dim()) throw DimensionMismatch("max_f_over_polytope: dimension mismatch");
    if (opt.method == MaxMethod::Auto && domain.is_axis_aligned()) return clamp_box_max(rect, domain.bounding_box());
    const bool kkt = opt.method == MaxMethod::Kkt || (opt.method == MaxMethod::Auto && domain.dim() <= 3);
    if (kkt) {
        if (domain.dim() > 3) throw GeometryError("max_f_over_polytope: KKT path supports m <= 3");
        return kkt_max(rect, domain);
    }
    return gradient_max(rect, domain, opt);
}

OptResult max_f_over_polytope(const HyperRectangle& rect, const Polytope& domain, const MaxOptions&) {
    if (domain.vertices.empty()) throw GeometryError("max_f_over_polytope: empty domain");
    if (rect.dim() != domain.dim()) throw DimensionMismatch("max_f_over_polytope: dimension mismatch");
    const HyperRectangle box = domain.bounding_box();
    const int m = domain.dim();
    if (m == 1 || polytope_is_bbox(domain, box)) return clamp_box_max(rect, box);
    if (m != 2) throw GeometryError("max_f_over_polytope: general polytopes supported for m <= 2");
    Polytope P = domain.halfspaces ? domain : Polytope::hull(domain.vertices);
    if (!P.halfspaces || P.vertices.size() < 3) P = Polytope::hull(domain.vertices);
    const Vec c = rect.center();
    if (contains_point(P, c, 0.0)) return {c, erf_product(c, rect), true, 0};
    // Vertex order from hull is counter-clockwise, so consecutive pairs are edges.
    Polytope H = Polytope::hull(P.vertices);
    double best = kNegInf;
    Vec arg = H.vertices.front();
    const std::size_t k = H.vertices.size();
    for (std::size_t i = 0; i < k; ++i) {
        const Vec& p = H.vertices[i];
        const Vec d = H.vertices[(i + 1) % k] - p;
        auto [t, lv] = edge_max(rect, p, d);
        if (lv > best) {
            best = lv;
            arg = p + t * d;
        }
    }
    return {arg, std::exp(best), true, 0};
}

OptResult min_f_over_polytope(const HyperRectangle& rect, const Parallelotope& domain) {
    if (rect.dim() != domain.dim()) throw DimensionMismatch("min_f_over_polytope: dimension mismatch");
    Mat V = domain.vertices();
    OptResult r{V.col(0), 2.0, true, 0};
    for (int c = 0; c < V.cols(); ++c) {
        const double v = erf_product(V.col(c), rect);
        if (v < r.value) r = {V.col(c), v, true, 0};
    }
    return r;
}

OptResult min_f_over_polytope(const HyperRectangle& rect, const Polytope& domain) {
    if (domain.vertices.empty()) throw GeometryError("min_f_over_polytope: empty domain");
    OptResult r{domain.vertices.front(), 2.0, true, 0};
    for (const auto& v : domain.vertices) {
        const double f = erf_product(v, rect);
        if (f < r.value) r = {v, f, true, 0};
    }
    return r;
}

double box_max_bound(const HyperRectangle& rect, const HyperRectangle& box) {
    double p = 1.0;
    for (int i = 0; i < rect.dim() && p > 0.0; ++i) {
        const double c = std::clamp(0.5 * (rect.lower(i) + rect.upper(i)), box.lower(i), box.upper(i));
        p *= normal_factor(c, rect.lower(i), rect.upper(i));
    }
    return p;
}

Parallelotope whitened_domain(const Parallelotope& source, const ModeDynamics& dyn, const Whitening& w) {
    return post_image(source, Mat(w.T * dyn.F));
}

ProbInterval transition_bounds(const Parallelotope& source, const ModeDynamics& dyn, const Whitening& w,
                               const HyperRectangle& target_rect, const MaxOptions& opt) {
    const Parallelotope dom = whitened_domain(source, dyn, w);
    const double hi = max_f_over_polytope(target_rect, dom, opt).value;
    const double lo = min_f_over_polytope(target_rect, dom).value;
    ProbInterval r{clamp_prob(lo), clamp_prob(hi)};
    if (r.lo > r.hi) r.lo = r.hi;
    return r;
}

std::vector<HyperRectangle> merge_runs(const std::vector<HyperRectangle>& cells) {
    if (cells.empty()) return {};
    const int m = cells.front().dim();
    std::vector<int> order(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) order[i] = static_cast<int>(i);
    auto key_less = [&](int a, int b) {
        const auto &A = cells[a], &B = cells[b];
        for (int i = 0; i < m - 1; ++i) {
            if (A.lower(i) != B.lower(i)) return A.lower(i) < B.lower(i);
            if (A.upper(i) != B.upper(i)) return A.upper(i) < B.upper(i);
        }
        return A.lower(m - 1) < B.lower(m - 1);
    };
    std::sort(order.begin(), order.end(), key_less);
    std::vector<HyperRectangle> runs;
    HyperRectangle cur = cells[order[0]];
    for (std::size_t k = 1; k < order.size(); ++k) {
        const HyperRectangle& c = cells[order[k]];
        bool same = true;
        for (int i = 0; i < m - 1 && same; ++i) same = c.lower(i) == cur.lower(i) && c.upper(i) == cur.upper(i);
        const double gap = std::abs(c.lower(m - 1) - cur.upper(m - 1));
        if (same && gap <= 1e-12 * (1.0 + std::abs(cur.upper(m - 1)))) {
            cur.upper(m - 1) = std::max(cur.upper(m - 1), c.upper(m - 1));
        } else {
            runs.push_back(cur);
            cur = c;
        }
    }
    runs.push_back(cur);
    return runs;
}

SinkGeometry prepare_sink_geometry(const std::vector<HyperRectangle>& safe_cells, const std::vector<bool>& inside,
                                   const HyperRectangle& hull, bool tiles_hull) {
    SinkGeometry sg;
    sg.hull = hull;
    sg.tiles_hull = tiles_hull;
    if (!tiles_hull) {
        sg.runs_all = merge_runs(safe_cells);
        std::vector<HyperRectangle> in;
        for (std::size_t i = 0; i < safe_cells.size(); ++i)
            if (inside.empty() || inside[i]) in.push_back(safe_cells[i]);
        sg.runs_inside = merge_runs(in);
    }
    return sg;
}

ProbInterval sink_bounds(const Parallelotope& dom, const SinkGeometry& sg, SinkStats* stats, const MaxOptions& opt) {
    double umax, umin;
    if (sg.tiles_hull) {
        umax = max_f_over_polytope(sg.hull, dom, opt).value;
        umin = min_f_over_polytope(sg.hull, dom).value;
        if (stats) stats->exact_tiling = true;
    } else {
        // Sum of per-run maxima over-estimates the max of the sum; keep whichever cap is tighter.
        umax = max_f_over_polytope(sg.hull, dom, opt).value;
        double sum_max = 0.0;
        const HyperRectangle dbox = dom.bounding_box();
        for (const auto& r : sg.runs_all) {
            if (box_max_bound(r, dbox) < 1e-17) continue;
            sum_max += max_f_over_polytope(r, dom, opt).value;
        }
        // Skipped runs each contribute below 1e-17; account for them to stay an over-estimate.
        sum_max += 1e-17 * static_cast<double>(sg.runs_all.size());
        if (sum_max < umax) {
            umax = sum_max;
            if (stats) ++stats->fallback_max;
        }
        umin = 0.0;
        for (const auto& r : sg.runs_inside) umin += min_f_over_polytope(r, dom).value;
        if (stats) ++stats->fallback_min;
    }
    umax = std::min(1.0, umax);
    umin = std::clamp(umin, 0.0, umax);
    ProbInterval r{1.0 - umax, 1.0 - umin};
    r.lo = r.lo < kProbFloor ? 0.0 : r.lo;
    r.hi = std::clamp(r.hi, r.lo, 1.0);
    return r;
}

ProbInterval sink_bounds(const Parallelotope& source, const ModeDynamics& dyn, const Whitening& w,
                         const std::vector<HyperRectangle>& safe_cells, const std::vector<bool>& inside,
                         const HyperRectangle* hull, bool tiles_hull, SinkStats* stats, const MaxOptions& opt) {
    HyperRectangle h;
    if (hull) {
        h = *hull;
    } else {
        Vec lo = safe_cells.front().lower, hi = safe_cells.front().upper;
        for (const auto& c : safe_cells) {
            lo = lo.cwiseMin(c.lower);
            hi = hi.cwiseMax(c.upper);
        }
        h = HyperRectangle(lo, hi);
    }
    const SinkGeometry sg = prepare_sink_geometry(safe_cells, inside, h, tiles_hull && hull != nullptr);
    return sink_bounds(whitened_domain(source, dyn, w), sg, stats, opt);
}

}  // namespace switchsynth

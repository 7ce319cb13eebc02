#include "switchsynth/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "switchsynth/lp.hpp"

namespace switchsynth {

namespace {

void require_same_dim(int a, int b, const char* what) {
    if (a != b) throw DimensionMismatch(std::string(what) + ": dimension mismatch");
}

double cross(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

std::vector<Vec> dedupe(const std::vector<Vec>& pts, double tol) {
    std::vector<Vec> out;
    for (const auto& p : pts) {
        bool seen = false;
        for (const auto& q : out) {
            if ((p - q).lpNorm<Eigen::Infinity>() <= tol * (1.0 + q.lpNorm<Eigen::Infinity>())) {
                seen = true;
                break;
            }
        }
        if (!seen) out.push_back(p);
    }
    return out;
}

Halfspaces box_halfspaces(const Vec& lo, const Vec& hi) {
    const int m = static_cast<int>(lo.size());
    Halfspaces hs{Mat::Zero(2 * m, m), Vec(2 * m)};
    for (int i = 0; i < m; ++i) {
        hs.H(2 * i, i) = 1.0;
        hs.b(2 * i) = hi(i);
        hs.H(2 * i + 1, i) = -1.0;
        hs.b(2 * i + 1) = -lo(i);
    }
    return hs;
}

Polytope hull_1d(const std::vector<Vec>& pts) {
    double lo = pts.front()(0), hi = lo;
    for (const auto& p : pts) {
        lo = std::min(lo, p(0));
        hi = std::max(hi, p(0));
    }
    Polytope P;
    P.vertices.push_back(Vec::Constant(1, lo));
    if (hi > lo) P.vertices.push_back(Vec::Constant(1, hi));
    P.halfspaces = box_halfspaces(Vec::Constant(1, lo), Vec::Constant(1, hi));
    return P;
}

Polytope hull_2d(const std::vector<Vec>& pts) {
    std::vector<Eigen::Vector2d> p2;
    p2.reserve(pts.size());
    for (const auto& p : pts) p2.emplace_back(p(0), p(1));
    auto h = convex_hull_2d(p2);
    Polytope P;
    for (const auto& v : h) P.vertices.push_back(Vec(v));
    if (h.size() >= 3) {
        const int k = static_cast<int>(h.size());
        Halfspaces hs{Mat(k, 2), Vec(k)};
        for (int i = 0; i < k; ++i) {
            Eigen::Vector2d e = h[(i + 1) % k] - h[i];
            Eigen::Vector2d n(e.y(), -e.x());  // outward for a ccw hull
            n.normalize();
            hs.H.row(i) = n.transpose();
            hs.b(i) = n.dot(h[i]);
        }
        P.halfspaces = hs;
    } else if (h.size() == 2) {
        Eigen::Vector2d d = (h[1] - h[0]).normalized();
        Eigen::Vector2d n(-d.y(), d.x());
        Halfspaces hs{Mat(4, 2), Vec(4)};
        hs.H.row(0) = n.transpose();
        hs.b(0) = n.dot(h[0]);
        hs.H.row(1) = -n.transpose();
        hs.b(1) = -n.dot(h[0]);
        hs.H.row(2) = d.transpose();
        hs.b(2) = d.dot(h[1]);
        hs.H.row(3) = -d.transpose();
        hs.b(3) = -d.dot(h[0]);
        P.halfspaces = hs;
    } else {
        P.halfspaces = box_halfspaces(P.vertices[0], P.vertices[0]);
    }
    return P;
}

Polytope hull_3d(const std::vector<Vec>& raw) {
    auto pts = dedupe(raw, 1e-12);
    const int n = static_cast<int>(pts.size());
    double scale = 1.0;
    for (const auto& p : pts) scale = std::max(scale, p.lpNorm<Eigen::Infinity>());
    std::vector<Eigen::Vector3d> normals;
    std::vector<double> offsets;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = j + 1; k < n; ++k) {
                Eigen::Vector3d a = pts[i], b = pts[j], c = pts[k];
                Eigen::Vector3d nrm = (b - a).cross(c - a);
                if (nrm.norm() < 1e-12 * scale * scale) continue;
                nrm.normalize();
                double off = nrm.dot(a);
                int above = 0, below = 0;
                for (const auto& p : pts) {
                    double s = nrm.dot(Eigen::Vector3d(p)) - off;
                    if (s > kGeomTol * scale) ++above;
                    if (s < -kGeomTol * scale) ++below;
                }
                if (above > 0 && below > 0) continue;
                if (above > 0) {
                    nrm = -nrm;
                    off = -off;
                }
                bool dup = false;
                for (std::size_t f = 0; f < normals.size(); ++f)
                    if ((normals[f] - nrm).norm() < 1e-9 && std::abs(offsets[f] - off) < 1e-9 * scale) dup = true;
                if (!dup) {
                    normals.push_back(nrm);
                    offsets.push_back(off);
                }
            }
    if (normals.size() < 4) throw GeometryError("hull: degenerate point set in 3D");
    Polytope P;
    Halfspaces hs{Mat(normals.size(), 3), Vec(normals.size())};
    for (std::size_t f = 0; f < normals.size(); ++f) {
        hs.H.row(f) = normals[f].transpose();
        hs.b(f) = offsets[f];
    }
    for (const auto& p : pts) {
        int tight = 0;
        for (std::size_t f = 0; f < normals.size(); ++f)
            if (std::abs(normals[f].dot(Eigen::Vector3d(p)) - offsets[f]) <= kGeomTol * scale) ++tight;
        if (tight >= 3) P.vertices.push_back(p);
    }
    P.halfspaces = hs;
    return P;
}

}  // namespace

HyperRectangle::HyperRectangle(Vec lo, Vec hi) : lower(std::move(lo)), upper(std::move(hi)) {
    require_same_dim(static_cast<int>(lower.size()), static_cast<int>(upper.size()), "HyperRectangle");
    if (lower.size() == 0) throw GeometryError("HyperRectangle: empty dimension");
    for (int i = 0; i < lower.size(); ++i)
        if (!(lower(i) <= upper(i))) throw GeometryError("HyperRectangle: lower exceeds upper");
}

double HyperRectangle::volume() const { return (upper - lower).prod(); }

bool HyperRectangle::contains_point(const Vec& x, double tol) const {
    for (int i = 0; i < dim(); ++i)
        if (x(i) < lower(i) - tol || x(i) > upper(i) + tol) return false;
    return true;
}

Mat HyperRectangle::vertices() const {
    const int m = dim();
    const int n = 1 << m;
    Mat V(m, n);
    for (int c = 0; c < n; ++c)
        for (int i = 0; i < m; ++i) V(i, c) = (c >> i & 1) ? upper(i) : lower(i);
    return V;
}

HyperRectangle Polytope::bounding_box() const {
    if (vertices.empty()) throw GeometryError("Polytope: no vertices");
    Vec lo = vertices.front(), hi = vertices.front();
    for (const auto& v : vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return {lo, hi};
}

Polytope Polytope::from_box(const HyperRectangle& box) {
    Polytope P;
    Mat V = box.vertices();
    std::vector<Vec> pts;
    for (int c = 0; c < V.cols(); ++c) pts.push_back(V.col(c));
    P.vertices = dedupe(pts, 0.0);
    P.halfspaces = box_halfspaces(box.lower, box.upper);
    return P;
}

Polytope Polytope::from_halfspaces(const Mat& H, const Vec& b) {
    if (H.rows() != b.size()) throw DimensionMismatch("from_halfspaces: H and b disagree");
    Halfspaces hs = normalize_rows({H, b});
    const int k = static_cast<int>(hs.H.rows());
    const int m = static_cast<int>(hs.H.cols());
    if (k < m + 1) throw GeometryError("from_halfspaces: too few constraints for a bounded set");
    // Boundedness: no nonzero recession direction d with H d <= 0.
    for (int i = 0; i < m; ++i)
        for (double sgn : {1.0, -1.0}) {
            // d = dp - dn, slack s: H dp - H dn + s = 0, sgn*(dp_i - dn_i) = 1.
            Mat A = Mat::Zero(k + 1, 2 * m + k);
            Vec rhs = Vec::Zero(k + 1);
            A.block(0, 0, k, m) = hs.H;
            A.block(0, m, k, m) = -hs.H;
            A.block(0, 2 * m, k, k) = Mat::Identity(k, k);
            A(k, i) = sgn;
            A(k, m + i) = -sgn;
            rhs(k) = 1.0;
            if (lp_feasible(A, rhs)) throw GeometryError("from_halfspaces: unbounded set");
        }
    std::vector<Vec> pts;
    std::vector<int> idx(m);
    std::vector<bool> pick(k, false);
    std::fill(pick.begin(), pick.begin() + m, true);
    do {
        int c = 0;
        for (int r = 0; r < k; ++r)
            if (pick[r]) idx[c++] = r;
        Mat A(m, m);
        Vec rhs(m);
        for (int r = 0; r < m; ++r) {
            A.row(r) = hs.H.row(idx[r]);
            rhs(r) = hs.b(idx[r]);
        }
        Eigen::FullPivLU<Mat> lu(A);
        if (lu.rank() < m) continue;
        Vec x = lu.solve(rhs);
        if (((hs.H * x - hs.b).array() <= kGeomTol * (1.0 + x.lpNorm<Eigen::Infinity>())).all()) pts.push_back(x);
    } while (std::prev_permutation(pick.begin(), pick.end()));
    if (pts.empty()) throw GeometryError("from_halfspaces: empty polytope");
    Polytope P;
    P.vertices = dedupe(pts, 1e-10);
    P.halfspaces = hs;
    return P;
}

Polytope Polytope::hull(const std::vector<Vec>& points) {
    if (points.empty()) throw GeometryError("hull: empty point set");
    const int m = static_cast<int>(points.front().size());
    for (const auto& p : points) require_same_dim(static_cast<int>(p.size()), m, "hull");
    switch (m) {
        case 1: return hull_1d(points);
        case 2: return hull_2d(points);
        case 3: return hull_3d(points);
        default: throw GeometryError("hull: unsupported dimension");
    }
}

Mat Parallelotope::vertices() const {
    const int m = dim();
    const int n = 1 << m;
    Mat V(m, n);
    for (int c = 0; c < n; ++c) {
        Vec v = base;
        for (int j = 0; j < m; ++j)
            if (c >> j & 1) v += generators.col(j);
        V.col(c) = v;
    }
    return V;
}

HyperRectangle Parallelotope::bounding_box() const {
    Vec lo = base, hi = base;
    for (int j = 0; j < generators.cols(); ++j) {
        lo += generators.col(j).cwiseMin(0.0);
        hi += generators.col(j).cwiseMax(0.0);
    }
    return {lo, hi};
}

bool Parallelotope::is_axis_aligned(double tol) const {
    for (int j = 0; j < generators.cols(); ++j) {
        const double scale = generators.col(j).lpNorm<Eigen::Infinity>();
        int nonzero = 0;
        for (int i = 0; i < generators.rows(); ++i)
            if (std::abs(generators(i, j)) > tol * scale) ++nonzero;
        if (nonzero > 1) return false;
    }
    return true;
}

Polytope Parallelotope::to_polytope() const {
    const int m = dim();
    Mat V = vertices();
    std::vector<Vec> pts;
    for (int c = 0; c < V.cols(); ++c) pts.push_back(V.col(c));
    Eigen::FullPivLU<Mat> lu(generators);
    const double scale = std::max(1e-300, generators.cwiseAbs().maxCoeff());
    lu.setThreshold(1e-12);
    if (lu.rank() == m && std::abs(generators.determinant()) > std::pow(1e-12 * scale, m)) {
        Polytope P;
        P.vertices = pts;
        Mat Ginv = lu.inverse();
        Vec u0 = Ginv * base;
        Halfspaces hs{Mat(2 * m, m), Vec(2 * m)};
        for (int i = 0; i < m; ++i) {
            hs.H.row(2 * i) = Ginv.row(i);
            hs.b(2 * i) = 1.0 + u0(i);
            hs.H.row(2 * i + 1) = -Ginv.row(i);
            hs.b(2 * i + 1) = -u0(i);
        }
        P.halfspaces = normalize_rows(hs);
        return P;
    }
    if (m <= 2) return Polytope::hull(pts);
    Polytope P;
    P.vertices = dedupe(pts, 1e-12);
    return P;
}

Parallelotope Parallelotope::from_box(const HyperRectangle& box) {
    return {box.lower, Mat((box.upper - box.lower).asDiagonal())};
}

Halfspaces normalize_rows(const Halfspaces& hs) {
    Halfspaces out = hs;
    for (int r = 0; r < out.H.rows(); ++r) {
        const double n = out.H.row(r).norm();
        if (n > 0) {
            out.H.row(r) /= n;
            out.b(r) /= n;
        }
    }
    return out;
}

Polytope post_image(const Polytope& P, const Mat& M) {
    if (M.cols() != P.dim()) throw DimensionMismatch("post_image: matrix does not match polytope");
    std::vector<Vec> pts;
    pts.reserve(P.vertices.size());
    for (const auto& v : P.vertices) pts.push_back(M * v);
    if (M.rows() == M.cols() && P.halfspaces) {
        Eigen::FullPivLU<Mat> lu(M);
        if (lu.isInvertible()) {
            Polytope Q;
            Q.vertices = pts;
            Q.halfspaces = normalize_rows({P.halfspaces->H * lu.inverse(), P.halfspaces->b});
            return Q;
        }
    }
    if (M.rows() <= 3) {
        try {
            return Polytope::hull(pts);
        } catch (const GeometryError&) {
        }
    }
    Polytope Q;
    Q.vertices = pts;
    return Q;
}

Parallelotope post_image(const Parallelotope& P, const Mat& M) {
    if (M.cols() != P.dim()) throw DimensionMismatch("post_image: matrix does not match parallelotope");
    return {M * P.base, M * P.generators};
}

Polytope minkowski_sum(const Polytope& P1, const Polytope& P2) {
    require_same_dim(P1.dim(), P2.dim(), "minkowski_sum");
    const int m = P1.dim();
    if (m <= 2) {
        std::vector<Vec> pts;
        pts.reserve(P1.vertices.size() * P2.vertices.size());
        for (const auto& v : P1.vertices)
            for (const auto& w : P2.vertices) pts.push_back(v + w);
        return Polytope::hull(pts);
    }
    HyperRectangle b1 = P1.bounding_box(), b2 = P2.bounding_box();
    return Polytope::from_box({b1.lower + b2.lower, b1.upper + b2.upper});
}

bool contains_point(const Polytope& P, const Vec& x, double tol) {
    if (!P.halfspaces) throw GeometryError("contains_point: polytope lacks halfspaces");
    require_same_dim(P.dim(), static_cast<int>(x.size()), "contains_point");
    Halfspaces hs = normalize_rows(*P.halfspaces);
    return ((hs.H * x - hs.b).array() <= tol).all();
}

bool contains(const Polytope& outer, const Polytope& inner, double tol) {
    if (!outer.halfspaces) throw GeometryError("contains: outer polytope lacks halfspaces");
    require_same_dim(outer.dim(), inner.dim(), "contains");
    Halfspaces hs = normalize_rows(*outer.halfspaces);
    for (const auto& v : inner.vertices)
        if (((hs.H * v - hs.b).array() > tol).any()) return false;
    return true;
}

bool intersects(const Polytope& P1, const Polytope& P2, double tol) {
    if (!P1.halfspaces) throw GeometryError("intersects: first polytope lacks halfspaces");
    require_same_dim(P1.dim(), P2.dim(), "intersects");
    HyperRectangle b1 = P1.bounding_box(), b2 = P2.bounding_box();
    for (int i = 0; i < b1.dim(); ++i)
        if (b1.upper(i) < b2.lower(i) - tol || b2.upper(i) < b1.lower(i) - tol) return false;
    Halfspaces hs = normalize_rows(*P1.halfspaces);
    const int k = static_cast<int>(hs.H.rows());
    const int n = static_cast<int>(P2.vertices.size());
    // lambda >= 0, sum lambda = 1, H V lambda + s = b + tol.
    Mat A = Mat::Zero(k + 1, n + k);
    Vec rhs(k + 1);
    for (int j = 0; j < n; ++j) A.block(0, j, k, 1) = hs.H * P2.vertices[j];
    A.block(0, n, k, k) = Mat::Identity(k, k);
    rhs.head(k) = hs.b.array() + tol;
    A.block(k, 0, 1, n).setOnes();
    rhs(k) = 1.0;
    return lp_feasible(A, rhs);
}

double volume(const Parallelotope& cell) { return std::abs(cell.generators.determinant()); }

std::vector<int> grid_counts(const HyperRectangle& domain, const Vec& dx) {
    require_same_dim(domain.dim(), static_cast<int>(dx.size()), "uniform_grid");
    std::vector<int> n(domain.dim());
    for (int i = 0; i < domain.dim(); ++i) {
        if (!(dx(i) > 0)) throw GeometryError("uniform_grid: step must be positive");
        const double ext = domain.upper(i) - domain.lower(i);
        // Guard against 2/(2/19) evaluating to 19.000000000000004.
        n[i] = std::max(1, static_cast<int>(std::ceil(ext / dx(i) - 1e-9)));
    }
    return n;
}

std::vector<HyperRectangle> uniform_grid(const HyperRectangle& domain, const Vec& dx) {
    if (domain.volume() <= 0.0) throw GeometryError("uniform_grid: empty domain");
    const auto n = grid_counts(domain, dx);
    const int m = domain.dim();
    long total = 1;
    for (int c : n) total *= c;
    std::vector<HyperRectangle> cells;
    cells.reserve(total);
    std::vector<int> idx(m, 0);
    for (long c = 0; c < total; ++c) {
        Vec lo(m), hi(m);
        for (int i = 0; i < m; ++i) {
            lo(i) = domain.lower(i) + idx[i] * dx(i);
            hi(i) = idx[i] + 1 == n[i] ? domain.upper(i) : domain.lower(i) + (idx[i] + 1) * dx(i);
        }
        cells.emplace_back(lo, hi);
        for (int i = m - 1; i >= 0; --i) {
            if (++idx[i] < n[i]) break;
            idx[i] = 0;
        }
    }
    return cells;
}

std::vector<Eigen::Vector2d> convex_hull_2d(std::vector<Eigen::Vector2d> pts) {
    std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
        return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
    });
    pts.erase(std::unique(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a == b; }), pts.end());
    if (pts.size() < 3) return pts;
    double scale = 0.0;
    for (const auto& p : pts) scale = std::max(scale, p.cwiseAbs().maxCoeff());
    const double eps = 1e-14 * std::max(1.0, scale * scale);
    std::vector<Eigen::Vector2d> h(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= eps) --k;
        h[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= eps) --k;
        h[k++] = pts[i];
    }
    h.resize(k - 1);
    return h;
}

}  // namespace switchsynth

#include "switchsynth/bridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "switchsynth/parallel.hpp"

namespace switchsynth {

namespace {

// Higham's scaling-and-squaring with diagonal Pade approximants.
Mat pade(const Mat& A, const double* b, int deg) {
    const int n = static_cast<int>(A.rows());
    const Mat I = Mat::Identity(n, n);
    const Mat A2 = A * A;
    Mat U, V;
    if (deg == 13) {
        const Mat A4 = A2 * A2, A6 = A4 * A2;
        U = A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * I);
        V = A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;
    } else {
        Mat P = I;  // A^(2k)
        Mat u = Mat::Zero(n, n);
        V = Mat::Zero(n, n);
        for (int k = 0; 2 * k <= deg; ++k) {
            V += b[2 * k] * P;
            if (2 * k + 1 <= deg) u += b[2 * k + 1] * P;
            P = P * A2;
        }
        U = A * u;
    }
    return (V - U).partialPivLu().solve(V + U);
}

constexpr double kB3[] = {120., 60., 12., 1.};
constexpr double kB5[] = {30240., 15120., 3360., 420., 30., 1.};
constexpr double kB7[] = {17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.};
constexpr double kB9[] = {17643225600., 8821612800., 2075673600., 302702400., 30270240.,
                          2162160.,     110880.,      3960.,        90.,         1.};
constexpr double kB13[] = {64764752532480000., 32382376266240000., 7771770303897600., 1187353796428800.,
                           129060195264000.,   10559470521600.,    670442572800.,    33522128640.,
                           1323241920.,        40840800.,          960960.,          16380.,
                           182.,               1.};

template <class T, class Norm>
T simpson_rec(const std::function<T(double)>& f, double a, double b, const T& fa, const T& fm, const T& fb,
              const T& whole, double tol, int depth, Norm norm) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const T flm = f(lm), frm = f(rm);
    const T left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const T right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const T delta = left + right - whole;
    if (depth <= 0 || norm(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return simpson_rec<T>(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, norm) +
           simpson_rec<T>(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, norm);
}

template <class T, class Norm>
T simpson(const std::function<T(double)>& f, double a, double b, double tol, Norm norm) {
    const T fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const T whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return simpson_rec<T>(f, a, b, fa, fm, fb, whole, tol, 50, norm);
}

Mat symmetric_sqrt(const Mat& S) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
    const Vec ev = es.eigenvalues();
    if (!(ev.minCoeff() > 1e-12 * ev.maxCoeff()) || !(ev.maxCoeff() > 0))
        throw SingularCovariance("sample_dynamics: integrated covariance is not positive definite");
    return es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

void check_ct(const CtModeDynamics& ct) {
    const auto m = ct.Fc.rows();
    if (ct.Fc.cols() != m || ct.Gc.rows() != m || ct.cov_w.rows() != ct.Gc.cols() || ct.cov_w.cols() != ct.Gc.cols())
        throw DimensionMismatch("continuous mode: inconsistent dimensions");
    if (!(ct.dt > 0)) throw ModelError("continuous mode: sampling period must be positive");
}

// int_0^1 sqrt(ln(4/s + 1)) ds, via s = w^2 to remove the endpoint singularity.
double dudley_constant() {
    static const double c = integrate_scalar(
        [](double w) { return w <= 0 ? 0.0 : 2.0 * w * std::sqrt(std::log(4.0 / (w * w) + 1.0)); }, 0.0, 1.0, 1e-12);
    return c;
}

// Range of row . x over the parallelotope.
std::pair<double, double> support(const Eigen::Ref<const Eigen::RowVectorXd>& row, const Parallelotope& q) {
    const double c = row.dot(q.base);
    const Eigen::RowVectorXd g = row * q.generators;
    double lo = c, hi = c;
    for (int l = 0; l < g.size(); ++l) {
        if (g(l) > 0) hi += g(l);
        else lo += g(l);
    }
    return {lo, hi};
}

}  // namespace

Mat matrix_exp(const Mat& M) {
    if (M.rows() != M.cols()) throw DimensionMismatch("matrix_exp: matrix must be square");
    if (M.size() == 0) return M;
    const double nrm = M.cwiseAbs().colwise().sum().maxCoeff();
    if (!std::isfinite(nrm)) throw Error("matrix_exp: non-finite input");
    if (nrm <= 1.495585217958292e-2) return pade(M, kB3, 3);
    if (nrm <= 2.539398330063230e-1) return pade(M, kB5, 5);
    if (nrm <= 9.504178996162932e-1) return pade(M, kB7, 7);
    if (nrm <= 2.097847961257068) return pade(M, kB9, 9);
    int s = 0;
    if (nrm > 5.371920351148152) s = static_cast<int>(std::ceil(std::log2(nrm / 5.371920351148152)));
    Mat R = pade(M / std::ldexp(1.0, s), kB13, 13);
    for (int i = 0; i < s; ++i) R = R * R;
    return R;
}

Mat integrate_matrix(const std::function<Mat(double)>& f, double a, double b, double tol) {
    return simpson<Mat>(f, a, b, tol, [](const Mat& d) { return d.cwiseAbs().maxCoeff(); });
}

double integrate_scalar(const std::function<double(double)>& f, double a, double b, double tol) {
    return simpson<double>(f, a, b, tol, [](double d) { return std::abs(d); });
}

Mat integrated_covariance(const Mat& F, const Mat& Q, double t, double tol) {
    if (t <= 0) return Mat::Zero(F.rows(), F.rows());
    Mat S = integrate_matrix(
        [&](double u) {
            const Mat E = matrix_exp(F * (t - u));
            return Mat(E * Q * E.transpose());
        },
        0.0, t, tol);
    return 0.5 * (S + S.transpose());
}

ModeDynamics sample_dynamics(const CtModeDynamics& ct, double tol) {
    check_ct(ct);
    const Mat Q = ct.Gc * ct.cov_w * ct.Gc.transpose();
    const Mat S = integrated_covariance(ct.Fc, Q, ct.dt, tol);
    ModeDynamics d;
    d.F = matrix_exp(ct.Fc * ct.dt);
    d.G = symmetric_sqrt(S);
    d.cov_w = Mat::Identity(S.rows(), S.rows());
    return d;
}

BridgeMoments bridge_moments(const Vec& x1, const Vec& x2, const CtModeDynamics& ct, double t) {
    check_ct(ct);
    if (t < 0 || t > ct.dt) throw Error("bridge_moments: t outside [0, dt]");
    const Mat Q = ct.Gc * ct.cov_w * ct.Gc.transpose();
    const Mat S_t = integrated_covariance(ct.Fc, Q, t);
    const Mat S_dt = integrated_covariance(ct.Fc, Q, ct.dt);
    const Mat C = S_t * matrix_exp(ct.Fc.transpose() * (ct.dt - t));  // Cov(x(t), x(dt))
    const Mat K = S_dt.ldlt().solve(C.transpose()).transpose();
    BridgeMoments bm;
    bm.mean = matrix_exp(ct.Fc * t) * x1 + K * (x2 - matrix_exp(ct.Fc * ct.dt) * x1);
    bm.cov = S_t - K * C.transpose();
    bm.cov = 0.5 * (bm.cov + bm.cov.transpose());
    return bm;
}

BridgeModel::BridgeModel(const CtModeDynamics& c, int points, double sf) : ct(c), grid_points(points), safety(sf) {
    check_ct(ct);
    if (grid_points < 3 || grid_points % 2 == 0) throw Error("bridge model: grid needs an odd number of points >= 3");
    const int m = static_cast<int>(ct.Fc.rows());
    const int N = grid_points - 1;
    const double h = ct.dt / N;
    const Mat Q = ct.Gc * ct.cov_w * ct.Gc.transpose();
    const Mat Eh = matrix_exp(ct.Fc * h);
    const Mat Sh = integrated_covariance(ct.Fc, Q, h);

    std::vector<Mat> Epow(grid_points), Sig(grid_points);
    Epow[0] = Mat::Identity(m, m);
    Sig[0] = Mat::Zero(m, m);
    times.resize(grid_points);
    for (int k = 0; k < grid_points; ++k) times[k] = k * h;
    for (int k = 1; k < grid_points; ++k) {
        Epow[k] = Eh * Epow[k - 1];
        Sig[k] = Eh * Sig[k - 1] * Eh.transpose() + Sh;
    }
    const Mat& S = Sig[N];
    Eigen::LDLT<Mat> ldlt(S);
    {
        Eigen::SelfAdjointEigenSolver<Mat> es(S);
        if (!(es.eigenvalues().minCoeff() > 1e-12 * es.eigenvalues().maxCoeff()))
            throw SingularCovariance("bridge: covariance at dt is not positive definite");
    }
    // Cov(x(t_k), x(dt)) and the gains of the conditional mean.
    std::vector<Mat> Cd(grid_points);
    A.resize(grid_points);
    B.resize(grid_points);
    for (int k = 0; k < grid_points; ++k) {
        Cd[k] = Sig[k] * Epow[N - k].transpose();
        B[k] = ldlt.solve(Cd[k].transpose()).transpose();
        A[k] = Epow[k] - B[k] * Epow[N];
    }
    A_half = A[N / 2];
    B_half = B[N / 2];
    cov_half = Sig[N / 2] - B[N / 2] * Cd[N / 2].transpose();
    cov_half = 0.5 * (cov_half + cov_half.transpose());
    w_half = whitening_of_covariance(cov_half);

    // Centered bridge covariance diagonal, per pair of grid times.
    auto cb_diag = [&](int i, int j) -> Vec {
        const Mat C = i <= j ? Mat(Sig[i] * Epow[j - i].transpose()) : Mat(Epow[i - j] * Sig[j]);
        Vec d(m);
        for (int k = 0; k < m; ++k) d(k) = C(k, k) - B[i].row(k).dot(Cd[j].row(k));
        return d;
    };
    std::vector<Vec> var(grid_points);
    xi = Vec::Zero(m);
    for (int i = 0; i < grid_points; ++i) {
        var[i] = cb_diag(i, i).cwiseMax(0.0);
        xi = xi.cwiseMax(var[i]);
    }
    xi *= safety;
    Vec dmax = Vec::Zero(m);
    for (int i = 0; i < grid_points; ++i)
        for (int j = i + 1; j < grid_points; ++j) {
            const Vec d2 = var[i] + var[j] - 2.0 * cb_diag(i, j);
            dmax = dmax.cwiseMax(d2);
        }
    // Dudley term 12 * int_0^{D/2} sqrt(ln(2D/z + 1)) dz with D = sup d_i = K dt.
    const Vec D = dmax.cwiseMax(0.0).cwiseSqrt() * safety;
    dudley = 12.0 * 0.5 * D * dudley_constant();
}

bool diagonal_stable_centered(const CtModeDynamics& ct, const HyperRectangle& X) {
    const int m = static_cast<int>(ct.Fc.rows());
    const Mat Q = ct.Gc * ct.cov_w * ct.Gc.transpose();
    const double fs = std::max(1.0, ct.Fc.cwiseAbs().maxCoeff());
    const double qs = std::max(1e-300, Q.cwiseAbs().maxCoeff());
    for (int i = 0; i < m; ++i) {
        if (!(ct.Fc(i, i) < 0)) return false;
        for (int j = 0; j < m; ++j) {
            if (i == j) continue;
            if (std::abs(ct.Fc(i, j)) > 1e-14 * fs || std::abs(Q(i, j)) > 1e-14 * qs) return false;
        }
    }
    const Vec c = X.center();
    const Vec e = X.extent();
    for (int i = 0; i < m; ++i)
        if (std::abs(c(i)) > 1e-12 * std::max(1.0, e(i))) return false;
    return true;
}

double margin(const Parallelotope& q, const HyperRectangle& X) {
    const Mat V = q.vertices();
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < V.cols(); ++c)
        for (int i = 0; i < V.rows(); ++i)
            best = std::min({best, V(i, c) - X.lower(i), X.upper(i) - V(i, c)});
    return std::max(0.0, best);
}

double tc_upper(const Parallelotope& qi, const Parallelotope& qj, const BridgeModel& bm, const HyperRectangle& X) {
    const int m = X.dim();
    const Mat& T = bm.w_half.T;
    const HyperRectangle wX = post_image(Parallelotope::from_box(X), T).bounding_box();
    OptResult r;
    if (m <= 2) {
        const Polytope qbar = minkowski_sum(post_image(qi.to_polytope(), bm.A_half), post_image(qj.to_polytope(), bm.B_half));
        r = max_f_over_polytope(wX, post_image(qbar, T));
    } else {
        // Box over-approximation of T (A1 q_i + A2 q_j), whose extreme values are separable.
        const Parallelotope a = post_image(qi, T * bm.A_half), b = post_image(qj, T * bm.B_half);
        const HyperRectangle ba = a.bounding_box(), bb = b.bounding_box();
        r = max_f_over_polytope(wX, Parallelotope::from_box(HyperRectangle(ba.lower + bb.lower, ba.upper + bb.upper)));
    }
    return std::clamp(r.value, 0.0, 1.0);
}

TcLowerTerms tc_lower_terms(const Parallelotope& qi, const Parallelotope& qj, const BridgeModel& bm,
                            const HyperRectangle& X) {
    const int m = X.dim();
    TcLowerTerms t;
    t.eps_star = std::max(margin(qi, X), margin(qj, X));
    t.L = Vec::Zero(m);
    if (!bm.diagonal_case) {
        for (int k = 0; k < m; ++k) {
            double lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t g = 0; g < bm.times.size(); ++g) {
                const auto [al, ah] = support(bm.A[g].row(k), qi);
                const auto [bl, bh] = support(bm.B[g].row(k), qj);
                lo = std::min(lo, al + bl);
                hi = std::max(hi, ah + bh);
            }
            t.L(k) = bm.safety * (hi - lo);
        }
    }
    t.eta = Vec::Constant(m, t.eps_star / m) - t.L - bm.dudley;
    if ((t.eta.array() <= 0).any()) {
        t.bound = 0.0;
        return t;
    }
    double s = 0.0;
    for (int k = 0; k < m; ++k) s += std::exp(-t.eta(k) * t.eta(k) / (2.0 * bm.xi(k)));
    t.bound = std::clamp(1.0 - 2.0 * s, 0.0, 1.0);
    return t;
}

double tc_lower(const Parallelotope& qi, const Parallelotope& qj, const BridgeModel& bm, const HyperRectangle& X) {
    return tc_lower_terms(qi, qj, bm, X).bound;
}

HybridSystem CtSystem::sampled(double tol) const {
    if (mode_names.size() != modes.size()) throw ModelError("continuous system: one name per mode required");
    HybridSystem H;
    H.X = X;
    H.regions = regions;
    for (std::size_t a = 0; a < modes.size(); ++a) H.modes.push_back({mode_names[a], sample_dynamics(modes[a], tol)});
    return H;
}

Imdp ct_safety_imdp(const CtSystem& sys, const Discretization& disc, const BuildOptions& opt, CtBuildStats* stats) {
    const HybridSystem H = sys.sampled();
    Imdp imdp = build_imdp(H, disc, opt);
    std::vector<BridgeModel> models;
    for (const auto& md : sys.modes) {
        models.emplace_back(md);
        models.back().diagonal_case = diagonal_stable_centered(md, sys.X);
    }
    const int A = imdp.num_actions();
    const int sink = imdp.sink();
    const long rows = static_cast<long>(sink) * A;
    std::vector<std::vector<int>> tg(static_cast<std::size_t>(imdp.num_states()) * A);
    std::vector<std::vector<double>> lo(tg.size()), hi(tg.size());
    std::vector<long> zeros(rows, 0);
    parallel_for(rows, opt.threads, [&](long r) {
        const int s = static_cast<int>(r / A), a = static_cast<int>(r % A);
        const RowView row = imdp.row(s, a);
        const Parallelotope& qi = imdp.states[s].cell;
        auto& T = tg[r];
        auto& L = lo[r];
        auto& U = hi[r];
        double sum_lo = 0.0, sink_hi = 0.0, sink_lo = 0.0, unsafe = 0.0;
        for (int k = 0; k < row.size; ++k) {
            const int j = row.target[k];
            if (j == sink) {
                sink_lo = row.lo[k];
                sink_hi = row.hi[k];
                continue;
            }
            const Parallelotope& qj = imdp.states[j].cell;
            const double tl = tc_lower(qi, qj, models[a], sys.X);
            const double l = row.lo[k] * tl;
            const double u = row.hi[k] * tc_upper(qi, qj, models[a], sys.X);
            if (row.lo[k] > 0 && l == 0.0) ++zeros[r];
            unsafe += row.hi[k] * (1.0 - tl);
            T.push_back(j);
            L.push_back(clamp_prob(l));
            U.push_back(std::max(clamp_prob(u), L.back()));
            sum_lo += L.back();
        }
        T.push_back(sink);
        L.push_back(sink_lo);
        // Both are upper bounds on exiting at the sample or leaving X during the step.
        const double widened = std::min(1.0 - sum_lo, sink_hi + unsafe);
        U.push_back(std::clamp(widened, sink_lo, 1.0));
    });
    const long pairs = static_cast<long>(imdp.target.size()) - A;
    pack_rows(imdp, tg, lo, hi);
    imdp.stats.kept_entries = static_cast<long>(imdp.target.size());
    if (stats) {
        stats->pairs = pairs;
        stats->zero_lower = 0;
        for (long z : zeros) stats->zero_lower += z;
    }
    return imdp;
}

}  // namespace switchsynth

#pragma once

#include <functional>
#include <vector>

#include "switchsynth/abstraction.hpp"

namespace switchsynth {

Mat matrix_exp(const Mat& M);

// Adaptive Simpson quadrature of a matrix-valued integrand; tol bounds the max-entry error.
Mat integrate_matrix(const std::function<Mat(double)>& f, double a, double b, double tol);
double integrate_scalar(const std::function<double(double)>& f, double a, double b, double tol);

struct CtModeDynamics {
    Mat Fc;     // drift, 1/time
    Mat Gc;     // diffusion
    Mat cov_w;  // noise covariance
    double dt = 0.0;
};

// Sigma(t) = int_0^t e^{F(t-u)} G Cov_w G^T e^{F^T(t-u)} du.
Mat integrated_covariance(const Mat& F, const Mat& Q, double t, double tol = 1e-10);

// F_d = e^{F dt}; noise encoded as G = Cov_d^{1/2}, Cov_w = I.
ModeDynamics sample_dynamics(const CtModeDynamics& ct, double tol = 1e-10);

struct BridgeMoments {
    Vec mean;
    Mat cov;
};

BridgeMoments bridge_moments(const Vec& x1, const Vec& x2, const CtModeDynamics& ct, double t);

// Per-mode quantities shared by every cell pair: time grid, bridge gain matrices, and sup-based constants.
struct BridgeModel {
    CtModeDynamics ct;
    int grid_points = 201;
    double safety = 1.05;
    std::vector<double> times;
    std::vector<Mat> A;  // E_b(t) = A(t) x1 + B(t) x2
    std::vector<Mat> B;
    Mat A_half, B_half;  // at t = dt/2
    Mat cov_half;        // Cov_b(dt/2)
    Whitening w_half;    // whitening of cov_half
    Vec xi;              // sup_t Var of each centered bridge component, times the safety factor
    Vec dudley;          // 12 * Dudley entropy integral per component
    bool diagonal_case = false;  // L is taken as zero; see diagonal_stable_centered

    explicit BridgeModel(const CtModeDynamics& ct, int grid_points = 201, double safety = 1.05);
};

// Diagonal stable drift, diagonal diffusion covariance, and X centered at the origin.
bool diagonal_stable_centered(const CtModeDynamics& ct, const HyperRectangle& X);

// Upper bound on the probability that the bridge from q_i to q_j stays in X over one sampling period.
double tc_upper(const Parallelotope& qi, const Parallelotope& qj, const BridgeModel& bm, const HyperRectangle& X);

struct TcLowerTerms {
    double eps_star = 0.0;
    Vec L;
    Vec eta;
    double bound = 0.0;
};

// Borell-TIS lower bound on the same probability; zero whenever any eta_i <= 0.
TcLowerTerms tc_lower_terms(const Parallelotope& qi, const Parallelotope& qj, const BridgeModel& bm,
                            const HyperRectangle& X);
double tc_lower(const Parallelotope& qi, const Parallelotope& qj, const BridgeModel& bm, const HyperRectangle& X);

// Smallest 1-norm distance from the cell to the boundary of the box X (zero if the cell leaves X).
double margin(const Parallelotope& q, const HyperRectangle& X);

struct CtSystem {
    std::vector<std::string> mode_names;
    std::vector<CtModeDynamics> modes;
    HyperRectangle X;
    std::vector<Region> regions;

    HybridSystem sampled(double tol = 1e-10) const;
};

struct CtBuildStats {
    long pairs = 0;
    long zero_lower = 0;
};

// Discrete abstraction of the sampled system with every transition interval scaled by the bridge bounds.
// The sink upper bound becomes min(1 - sum lo', hi_sink + sum_j hi_j (1 - tc_lower_j)).
Imdp ct_safety_imdp(const CtSystem& sys, const Discretization& disc, const BuildOptions& opt = {},
                    CtBuildStats* stats = nullptr);

}  // namespace switchsynth

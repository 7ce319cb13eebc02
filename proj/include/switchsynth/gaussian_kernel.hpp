#pragma once

#include <vector>

#include "switchsynth/geometry.hpp"

namespace switchsynth {

struct ModeDynamics {
    Mat F;
    Mat G;
    Mat cov_w;

    int dim() const { return static_cast<int>(F.rows()); }
    // One-step covariance of G w, that is G Cov_w G^T.
    Mat cov_x() const { return G * cov_w * G.transpose(); }
};

struct Whitening {
    Mat T;
    Mat T_inv;
    Vec lambda;  // descending
    Mat V;       // columns are eigenvectors
};

struct ProbInterval {
    double lo = 0.0;
    double hi = 0.0;
};

Whitening whitening(const ModeDynamics& dyn);
Whitening whitening_of_covariance(const Mat& cov);

// Standard normal mass of [y-u, y-l]: Phi(y-l) - Phi(y-u), evaluated without cancellation in the tails.
double normal_factor(double y, double l, double u);
// log of normal_factor, finite wherever the interval has positive width.
double log_normal_factor(double y, double l, double u);
// d/dy log normal_factor.
double dlog_normal_factor(double y, double l, double u);

double erf_product(const Vec& y, const HyperRectangle& rect);
double log_erf_product(const Vec& y, const HyperRectangle& rect);

// Throws UnderflowedFactor when a one-dimensional factor falls below 1e-300.
Vec grad_log_f(const Vec& y, const HyperRectangle& rect);
// Same gradient computed in log space; never throws for positive-width rectangles.
Vec grad_log_f_stable(const Vec& y, const HyperRectangle& rect);

enum class MaxMethod { Auto, Kkt, Gradient };

struct OptResult {
    Vec arg;
    double value = 0.0;
    bool converged = true;
    int iterations = 0;
};

struct MaxOptions {
    MaxMethod method = MaxMethod::Auto;
    int max_iterations = 1000;
    double step_tol = 1e-9;
    bool throw_on_nonconvergence = false;
};

OptResult max_f_over_polytope(const HyperRectangle& rect, const Parallelotope& domain, const MaxOptions& opt = {});
// General polytopes: axis boxes and m <= 2 are handled exactly.
OptResult max_f_over_polytope(const HyperRectangle& rect, const Polytope& domain, const MaxOptions& opt = {});

OptResult min_f_over_polytope(const HyperRectangle& rect, const Parallelotope& domain);
OptResult min_f_over_polytope(const HyperRectangle& rect, const Polytope& domain);

// Separable upper bound on max f over a box: product of per-axis maxima.
double box_max_bound(const HyperRectangle& rect, const HyperRectangle& box);

// Image of an original-space cell under y = T F x.
Parallelotope whitened_domain(const Parallelotope& source, const ModeDynamics& dyn, const Whitening& w);

ProbInterval transition_bounds(const Parallelotope& source, const ModeDynamics& dyn, const Whitening& w,
                               const HyperRectangle& target_rect, const MaxOptions& opt = {});

struct SinkStats {
    bool exact_tiling = false;
    int fallback_max = 0;
    int fallback_min = 0;
};

// safe_cells are whitened rectangles covering T X. When hull is given and the cells tile it exactly,
// the bounds come from the single erf product over the hull.
ProbInterval sink_bounds(const Parallelotope& source, const ModeDynamics& dyn, const Whitening& w,
                         const std::vector<HyperRectangle>& safe_cells, const std::vector<bool>& inside,
                         const HyperRectangle* hull, bool tiles_hull, SinkStats* stats = nullptr,
                         const MaxOptions& opt = {});

// Groups cells into maximal boxes: runs of cells contiguous along the last axis sharing all other extents.
std::vector<HyperRectangle> merge_runs(const std::vector<HyperRectangle>& cells);

// Per-mode data reused for every source cell when bounding the exit probability.
struct SinkGeometry {
    HyperRectangle hull;  // bounding box of the whitened safe set
    bool tiles_hull = false;
    std::vector<HyperRectangle> runs_all;     // cover the whitened safe set
    std::vector<HyperRectangle> runs_inside;  // contained in it
};

SinkGeometry prepare_sink_geometry(const std::vector<HyperRectangle>& safe_cells, const std::vector<bool>& inside,
                                   const HyperRectangle& hull, bool tiles_hull);
// dom is the whitened image T F q of the source cell.
ProbInterval sink_bounds(const Parallelotope& dom, const SinkGeometry& sg, SinkStats* stats = nullptr,
                         const MaxOptions& opt = {});

double clamp_prob(double p);

}  // namespace switchsynth

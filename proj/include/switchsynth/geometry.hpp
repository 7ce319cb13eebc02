#pragma once

#include <optional>
#include <vector>

#include "switchsynth/types.hpp"

namespace switchsynth {

inline constexpr double kGeomTol = 1e-9;

struct HyperRectangle {
    Vec lower;
    Vec upper;

    HyperRectangle() = default;
    HyperRectangle(Vec lo, Vec hi);

    int dim() const { return static_cast<int>(lower.size()); }
    Vec center() const { return 0.5 * (lower + upper); }
    Vec extent() const { return upper - lower; }
    double volume() const;
    bool contains_point(const Vec& x, double tol = kGeomTol) const;
    // Columns are the 2^m corners; bit i of the column index selects upper[i].
    Mat vertices() const;
};

struct Halfspaces {
    Mat H;
    Vec b;
};

struct Polytope {
    std::vector<Vec> vertices;
    std::optional<Halfspaces> halfspaces;

    int dim() const { return vertices.empty() ? 0 : static_cast<int>(vertices.front().size()); }
    HyperRectangle bounding_box() const;

    static Polytope from_box(const HyperRectangle& box);
    // Vertex enumeration by brute force over constraint subsets; meant for small inputs.
    static Polytope from_halfspaces(const Mat& H, const Vec& b);
    // Convex hull of a point set. Exact for m <= 3; the H-rep is attached.
    static Polytope hull(const std::vector<Vec>& points);
};

struct Parallelotope {
    Vec base;
    Mat generators;

    int dim() const { return static_cast<int>(base.size()); }
    Vec point(const Vec& u) const { return base + generators * u; }
    Mat vertices() const;
    HyperRectangle bounding_box() const;
    bool is_axis_aligned(double tol = 0.0) const;
    Polytope to_polytope() const;

    static Parallelotope from_box(const HyperRectangle& box);
};

// Rows of H scaled to unit norm, b scaled alike.
Halfspaces normalize_rows(const Halfspaces& hs);

Polytope post_image(const Polytope& P, const Mat& M);
Parallelotope post_image(const Parallelotope& P, const Mat& M);

// Exact for m <= 2 (planar hull of pairwise sums); bounding box of the sum otherwise.
Polytope minkowski_sum(const Polytope& P1, const Polytope& P2);

// Requires outer to carry an H-rep (boxes and parallelotopes always do).
bool contains(const Polytope& outer, const Polytope& inner, double tol = kGeomTol);
bool contains_point(const Polytope& P, const Vec& x, double tol = kGeomTol);

// Closed sets: boundary contact counts. Solved as a phase-one LP.
bool intersects(const Polytope& P1, const Polytope& P2, double tol = kGeomTol);

double volume(const Parallelotope& cell);

// Number of cells per axis used by uniform_grid.
std::vector<int> grid_counts(const HyperRectangle& domain, const Vec& dx);
std::vector<HyperRectangle> uniform_grid(const HyperRectangle& domain, const Vec& dx);

// Planar convex hull, counter-clockwise, collinear points dropped.
std::vector<Eigen::Vector2d> convex_hull_2d(std::vector<Eigen::Vector2d> pts);

}  // namespace switchsynth

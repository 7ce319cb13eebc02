#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "switchsynth/gaussian_kernel.hpp"

namespace switchsynth {

using LabelSet = std::uint64_t;

struct Mode {
    std::string name;
    ModeDynamics dyn;
};

struct Region {
    std::string label;
    Polytope poly;  // must carry halfspaces
};

struct HybridSystem {
    std::vector<Mode> modes;
    HyperRectangle X;
    std::vector<Region> regions;

    int dim() const { return X.dim(); }
    // Throws ModelError on inconsistent dimensions, duplicate labels, or regions leaving X.
    void check() const;
    // Region atoms followed by their complements ("neg_<label>").
    std::vector<std::string> atoms() const;
};

struct DiscretizationSpec {
    double dx = 0.0;
    std::optional<double> dx_min;  // adaptive refinement when both are set
    std::optional<double> dx_max;
    bool refine_regions = true;
};

struct Cell {
    int mode = 0;
    HyperRectangle wrect;  // axis rectangle in the whitened frame of its mode
    Parallelotope cell;    // the same cell in original coordinates
    bool boundary = false;  // intersects X without being contained in it
};

struct ModeGrid {
    Whitening w;
    HyperRectangle whull;  // bounding box of T X
    Vec step;              // whitened step at the coarsest level
    bool tiles_hull = false;
    int first = 0;  // state index range [first, first + count)
    int count = 0;
};

struct Discretization {
    std::vector<Cell> cells;
    std::vector<ModeGrid> grids;
};

// Per-axis whitened step giving original-space side dx along each eigen-direction.
Vec whitened_step(const Whitening& w, double dx);

Discretization discretize(const HybridSystem& H, const DiscretizationSpec& spec);

struct Labels {
    std::vector<LabelSet> under;
    std::vector<LabelSet> over;
};

Labels label_states(const HybridSystem& H, const std::vector<Cell>& cells);

struct BuildStats {
    long pruned_entries = 0;
    long kept_entries = 0;
    int sink_fallback_max = 0;
    int sink_fallback_min = 0;
    int exact_tiling_rows = 0;
    int nonconverged_max = 0;
    int boundary_cells = 0;
};

struct RowView {
    const int* target;
    const double* lo;
    const double* hi;
    int size;
};

struct Imdp {
    int dim = 0;
    std::vector<std::string> actions;
    std::vector<std::string> atoms;
    std::vector<Cell> states;  // sink excluded; its index is states.size()
    std::vector<ModeGrid> grids;
    std::vector<LabelSet> labels_under;  // one per state including sink
    std::vector<LabelSet> labels_over;
    // Rows indexed by state * num_actions + action, sink rows included; targets ascending.
    std::vector<std::int64_t> row_ptr;
    std::vector<int> target;
    std::vector<double> lo;
    std::vector<double> hi;
    BuildStats stats;

    int num_states() const { return static_cast<int>(states.size()) + 1; }
    int num_actions() const { return static_cast<int>(actions.size()); }
    int sink() const { return static_cast<int>(states.size()); }
    RowView row(int s, int a) const {
        const std::int64_t r = static_cast<std::int64_t>(s) * num_actions() + a;
        const std::int64_t b = row_ptr[r], e = row_ptr[r + 1];
        return {target.data() + b, lo.data() + b, hi.data() + b, static_cast<int>(e - b)};
    }
};

struct BuildOptions {
    double prune = 1e-12;
    int threads = 1;
    MaxOptions max_options;
};

Imdp build_imdp(const HybridSystem& H, const Discretization& disc, const BuildOptions& opt = {});

// Appends sink rows and packs per-row entries into CSR form; used by builders and loaders.
void pack_rows(Imdp& imdp, std::vector<std::vector<int>>& targets, std::vector<std::vector<double>>& lo,
               std::vector<std::vector<double>>& hi);

struct ValidationReport {
    std::vector<std::string> violations;
    double max_upper_slack = 0.0;  // max over rows of sum(hi) - 1
    double mean_upper_slack = 0.0;
    double max_lower_slack = 0.0;  // max over rows of 1 - sum(lo)
    double mean_lower_slack = 0.0;
    int sink_fallback_max = 0;
    int sink_fallback_min = 0;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate(const Imdp& imdp, double tol = 1e-12);

// Finds the state of a given mode whose closed cell contains x; lowest index wins on shared boundaries.
class CellLocator {
public:
    explicit CellLocator(const Imdp& imdp);
    std::optional<int> locate(int mode, const Vec& x) const;

private:
    struct Bucketing {
        Vec origin;
        Vec step;
        std::vector<int> counts;
        std::vector<std::vector<int>> buckets;
    };
    const Imdp* imdp_;
    std::vector<Bucketing> modes_;
};

}  // namespace switchsynth

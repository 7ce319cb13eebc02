#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "switchsynth/abstraction.hpp"
#include "switchsynth/logic.hpp"

namespace switchsynth {

struct InfeasibleRow : Error {
    using Error::Error;
};

enum class Labeling { Under, Over };
enum class Sense { Min, Max };

// Synchronous product of an Imdp with an automaton given by a per-state successor table. The automaton
// is either a Dfa or the pair (controller Dfa on under-labels, evaluated Dfa on over-labels).
struct ProductImdp {
    const Imdp* imdp = nullptr;
    int nq = 0;
    int nz = 0;
    int z_init = 0;
    std::vector<int> next;  // next[z * nq + q'] = automaton state after reading the label of q'
    std::vector<std::uint8_t> accepting;  // per automaton state
    std::vector<std::uint8_t> absorbing_accepting;
    std::vector<std::uint8_t> dead;
    std::vector<int> q;  // per product state
    std::vector<int> z;
    std::vector<int> index;    // z * nq + q -> product state, or -1
    std::vector<int> control;  // product state -> state of the controlling product (identity for plain products)
    std::optional<int> horizon;

    int size() const { return static_cast<int>(q.size()); }
    int at(int qq, int zz) const { return index[static_cast<std::size_t>(zz) * nq + qq]; }
    int initial(int qq) const { return at(qq, next[static_cast<std::size_t>(z_init) * nq + qq]); }
    int successor(int i, int qn) const { return at(qn, next[static_cast<std::size_t>(z[i]) * nq + qn]); }
    bool pinned_one(int i) const;
    bool pinned_zero(int i) const;
    double initial_value(int i) const;
};

// Translates Imdp label sets into letters over the Dfa's atoms.
std::vector<LabelSet> dfa_letters(const Imdp& imdp, const Dfa& dfa, Labeling lab);

ProductImdp product(const Imdp& imdp, const Dfa& dfa, Labeling lab);
// Tracks the controller's automaton on under-labels and evaluates acceptance on over-labels.
ProductImdp joint_product(const Imdp& imdp, const Dfa& dfa, const ProductImdp& ctrl);

struct OExtremeResult {
    std::vector<double> distribution;
    double value = 0.0;
};

// Ordering-based resolution of the interval polytope; ties keep the original target order.
OExtremeResult o_extreme(const std::vector<double>& values, const std::vector<double>& lo, const std::vector<double>& hi,
                         Sense sense);

// Time-indexed for bounded horizons: table[r - 1] is used with r steps remaining. Stationary otherwise.
struct Strategy {
    std::vector<std::vector<int>> table;
    bool time_indexed = false;

    int action(int pstate, int remaining) const;
};

struct ViOptions {
    double tol = 1e-6;
    long max_sweeps = 100000;
    int threads = 1;
    bool throw_on_nonconvergence = false;
};

struct ViResult {
    std::vector<double> values;
    Strategy strategy;
    long sweeps = 0;
    double residual = 0.0;
    bool converged = true;
};

enum class ActionChoice { Max, Min, Fixed };

// Generic robust iteration; strategy must be given for ActionChoice::Fixed and is read through P.control.
ViResult value_iteration(const ProductImdp& P, ActionChoice choice, Sense adversary, const Strategy* fixed,
                         const ViOptions& opt = {});

ViResult synthesize_lower(const ProductImdp& P, const ViOptions& opt = {});
ViResult lower_under_strategy(const ProductImdp& P, const Strategy& s, const ViOptions& opt = {});
ViResult upper_under_strategy(const ProductImdp& P, const Strategy& s, const ViOptions& opt = {});

struct StateBounds {
    std::vector<ProbInterval> bounds;  // per Imdp state, sink included
    std::vector<int> action;           // per Imdp state, -1 for the sink
};

StateBounds project_bounds(const ProductImdp& P_lower, const std::vector<double>& lower, const ProductImdp& P_upper,
                           const std::vector<double>& upper, const Strategy* strategy);

struct SynthesisResult {
    ProductImdp product_under;
    ProductImdp product_upper;  // joint product when the labelings differ, else a copy of product_under
    Strategy strategy;
    std::vector<double> lower;
    std::vector<double> upper;
    StateBounds bounds;
    long sweeps = 0;
    bool converged = true;
};

// Lower bound and strategy on the under-labeled product; upper bound under that strategy with
// acceptance judged on over-labels.
SynthesisResult synthesize(const Imdp& imdp, const Dfa& dfa, const ViOptions& opt = {});

enum class VerifyMode { Pessimistic, Optimistic };

struct VerifyResult {
    std::vector<double> lower;
    std::vector<double> upper;
    StateBounds bounds;
};

VerifyResult verify(const ProductImdp& P_under, const ProductImdp& P_over, VerifyMode mode, const ViOptions& opt = {});

struct ErrorMetrics {
    double eps_max = 0.0;
    double eps_med = 0.0;
    double eps_ave = 0.0;
};

ErrorMetrics error_metrics(const std::vector<ProbInterval>& bounds, const std::vector<double>& volumes);
// Metrics over the non-sink states of an Imdp using cell volumes.
ErrorMetrics error_metrics(const Imdp& imdp, const StateBounds& sb);

// Strategy refinement: maps (continuous state, automaton state, remaining steps) to a mode.
class SwitchingController {
public:
    SwitchingController(const Imdp& imdp, const Dfa& dfa, const ProductImdp& P, const Strategy& s);

    struct State {
        int cell = -1;  // Imdp state, -1 once outside X
        int z = 0;      // automaton state on under-labels
    };
    // Cell of x in the grid of mode, and the automaton after reading its label.
    State start(const Vec& x, int mode) const;
    State advance(const State& st, const Vec& x, int mode) const;
    int choose(const State& st, int remaining) const;
    const Dfa& dfa() const { return *dfa_; }
    const Imdp& imdp() const { return *imdp_; }

private:
    const Imdp* imdp_;
    const Dfa* dfa_;
    const ProductImdp* P_;
    const Strategy* s_;
    CellLocator locator_;
    int fallback_mode_ = 0;
};

struct SimulationResult {
    std::vector<Vec> path;
    std::vector<int> modes;
    std::vector<LabelSet> trace;
    bool satisfied = false;
};

// Unbounded specifications are simulated for at most max_steps steps; unresolved runs count as failures.
// Acceptance is judged on the under-labels of visited cells, or on actual region membership when
// exact_labels is set. The controller always advances its automaton on under-labels.
SimulationResult simulate(const HybridSystem& H, const SwitchingController& ctl, const Vec& x0, int mode0,
                          std::optional<int> horizon, std::uint64_t seed, std::uint64_t run = 0, long max_steps = 10000,
                          bool record_path = false, bool exact_labels = false);

struct WilsonInterval {
    double center = 0.0;
    double half_width = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

WilsonInterval wilson(long successes, long n, double z = 2.5758293035489004);

}  // namespace switchsynth

#include "switchsynth/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "switchsynth/parallel.hpp"
#include "switchsynth/rng.hpp"

namespace switchsynth {

bool ProductImdp::pinned_one(int i) const {
    if (q[i] == imdp->sink()) return false;
    const int zz = z[i];
    return absorbing_accepting[zz] || (!horizon && accepting[zz]);
}

bool ProductImdp::pinned_zero(int i) const {
    if (pinned_one(i)) return false;
    return q[i] == imdp->sink() || dead[z[i]];
}

double ProductImdp::initial_value(int i) const {
    if (pinned_zero(i)) return 0.0;
    return accepting[z[i]] ? 1.0 : 0.0;
}

std::vector<LabelSet> dfa_letters(const Imdp& imdp, const Dfa& dfa, Labeling lab) {
    std::vector<int> bit(dfa.atoms.size(), -1);
    for (std::size_t j = 0; j < dfa.atoms.size(); ++j) {
        auto it = std::find(imdp.atoms.begin(), imdp.atoms.end(), dfa.atoms[j]);
        if (it == imdp.atoms.end()) throw UnknownAtom("automaton atom '" + dfa.atoms[j] + "' is not defined by the model");
        bit[j] = static_cast<int>(it - imdp.atoms.begin());
    }
    const auto& L = lab == Labeling::Under ? imdp.labels_under : imdp.labels_over;
    std::vector<LabelSet> out(L.size(), 0);
    for (std::size_t s = 0; s < L.size(); ++s)
        for (std::size_t j = 0; j < bit.size(); ++j)
            if ((L[s] >> bit[j]) & 1) out[s] |= LabelSet{1} << j;
    return out;
}

namespace {

std::vector<int> next_table(const Imdp& imdp, const Dfa& dfa, Labeling lab) {
    const auto letters = dfa_letters(imdp, dfa, lab);
    const int nq = imdp.num_states();
    std::vector<int> next(static_cast<std::size_t>(dfa.num_states) * nq);
    std::map<LabelSet, std::vector<int>> memo;
    for (int q = 0; q < nq; ++q) {
        auto it = memo.find(letters[q]);
        if (it == memo.end()) {
            std::vector<int> succ(dfa.num_states);
            for (int z = 0; z < dfa.num_states; ++z) succ[z] = dfa.step(z, letters[q]);
            it = memo.emplace(letters[q], std::move(succ)).first;
        }
        for (int z = 0; z < dfa.num_states; ++z) next[static_cast<std::size_t>(z) * nq + q] = it->second[z];
    }
    return next;
}

// Forward reachability from the seeds (q, next[z_init][q]); indices follow the (z, q) order.
void explore(ProductImdp& P) {
    const Imdp& M = *P.imdp;
    const int nq = P.nq;
    const std::size_t total = static_cast<std::size_t>(P.nz) * nq;
    std::vector<std::uint8_t> seen(total, 0);
    std::vector<std::size_t> stack;
    auto push = [&](int qq, int zz) {
        const std::size_t key = static_cast<std::size_t>(zz) * nq + qq;
        if (!seen[key]) {
            seen[key] = 1;
            stack.push_back(key);
        }
    };
    for (int qq = 0; qq < nq; ++qq) push(qq, P.next[static_cast<std::size_t>(P.z_init) * nq + qq]);
    while (!stack.empty()) {
        const std::size_t key = stack.back();
        stack.pop_back();
        const int qq = static_cast<int>(key % nq), zz = static_cast<int>(key / nq);
        for (int a = 0; a < M.num_actions(); ++a) {
            const RowView r = M.row(qq, a);
            for (int k = 0; k < r.size; ++k) push(r.target[k], P.next[static_cast<std::size_t>(zz) * nq + r.target[k]]);
        }
    }
    P.index.assign(total, -1);
    P.q.clear();
    P.z.clear();
    for (std::size_t key = 0; key < total; ++key) {
        if (!seen[key]) continue;
        P.index[key] = static_cast<int>(P.q.size());
        P.q.push_back(static_cast<int>(key % nq));
        P.z.push_back(static_cast<int>(key / nq));
    }
    P.control.resize(P.q.size());
    std::iota(P.control.begin(), P.control.end(), 0);
}

}  // namespace

ProductImdp product(const Imdp& imdp, const Dfa& dfa, Labeling lab) {
    ProductImdp P;
    P.imdp = &imdp;
    P.nq = imdp.num_states();
    P.nz = dfa.num_states;
    P.z_init = dfa.initial;
    P.next = next_table(imdp, dfa, lab);
    const auto dead = dfa.dead_states();
    for (int z = 0; z < dfa.num_states; ++z) {
        P.accepting.push_back(dfa.accepting[z]);
        P.absorbing_accepting.push_back(dfa.accepting[z] && dfa.absorbing(z));
        P.dead.push_back(dead[z]);
    }
    P.horizon = dfa.horizon;
    explore(P);
    return P;
}

ProductImdp joint_product(const Imdp& imdp, const Dfa& dfa, const ProductImdp& ctrl) {
    const int Z = dfa.num_states;
    const int nq = imdp.num_states();
    const auto over = next_table(imdp, dfa, Labeling::Over);
    ProductImdp P;
    P.imdp = &imdp;
    P.nq = nq;
    P.nz = Z * Z;
    P.z_init = dfa.initial * Z + dfa.initial;
    P.next.resize(static_cast<std::size_t>(P.nz) * nq);
    for (int z1 = 0; z1 < Z; ++z1)
        for (int z2 = 0; z2 < Z; ++z2)
            for (int q = 0; q < nq; ++q)
                P.next[static_cast<std::size_t>(z1 * Z + z2) * nq + q] =
                    ctrl.next[static_cast<std::size_t>(z1) * nq + q] * Z + over[static_cast<std::size_t>(z2) * nq + q];
    const auto dead = dfa.dead_states();
    for (int z1 = 0; z1 < Z; ++z1)
        for (int z2 = 0; z2 < Z; ++z2) {
            P.accepting.push_back(dfa.accepting[z2]);
            P.absorbing_accepting.push_back(dfa.accepting[z2] && dfa.absorbing(z2));
            P.dead.push_back(dead[z2]);
        }
    P.horizon = dfa.horizon;
    explore(P);
    for (int i = 0; i < P.size(); ++i) {
        P.control[i] = ctrl.at(P.q[i], P.z[i] / Z);
        if (P.control[i] < 0) throw Error("joint product reached a controller state missing from its product");
    }
    return P;
}

OExtremeResult o_extreme(const std::vector<double>& values, const std::vector<double>& lo, const std::vector<double>& hi,
                         Sense sense) {
    const std::size_t n = values.size();
    if (lo.size() != n || hi.size() != n) throw DimensionMismatch("o_extreme: row sizes differ");
    double sl = 0.0, sh = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (lo[k] > hi[k]) throw InfeasibleRow("o_extreme: lower bound exceeds upper bound");
        sl += lo[k];
        sh += hi[k];
    }
    if (sl > 1.0 + 1e-12 || sh < 1.0 - 1e-12) throw InfeasibleRow("o_extreme: interval row admits no distribution");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return sense == Sense::Min ? values[a] < values[b] : values[a] > values[b];
    });
    OExtremeResult r;
    r.distribution = lo;
    double residual = 1.0 - sl;
    for (std::size_t k : order) {
        if (residual <= 0.0) break;
        const double take = std::min(hi[k] - lo[k], residual);
        r.distribution[k] += take;
        residual -= take;
    }
    for (std::size_t k = 0; k < n; ++k) r.value += r.distribution[k] * values[k];
    return r;
}

int Strategy::action(int pstate, int remaining) const {
    if (table.empty()) return 0;
    if (!time_indexed) return table[0][pstate];
    const int r = std::clamp(remaining, 1, static_cast<int>(table.size()));
    return table[r - 1][pstate];
}

namespace {

struct Scratch {
    std::vector<double> v;
    std::vector<int> idx;
};

// Optimal expectation over the interval polytope of one row; heap selection stops once the residual is spent.
double row_extreme(const RowView& r, const ProductImdp& P, int i, const std::vector<double>& V, Sense sense, Scratch& s) {
    s.v.resize(r.size);
    s.idx.clear();
    double base = 0.0, residual = 1.0;
    for (int k = 0; k < r.size; ++k) {
        const double v = V[P.successor(i, r.target[k])];
        s.v[k] = v;
        base += r.lo[k] * v;
        residual -= r.lo[k];
        if (r.hi[k] > r.lo[k]) s.idx.push_back(k);
    }
    if (residual <= 0.0 || s.idx.empty()) return base;
    // Heap top is the next target to fill; ties favour the earlier target.
    auto worse = [&](int a, int b) {
        if (s.v[a] != s.v[b]) return sense == Sense::Min ? s.v[a] > s.v[b] : s.v[a] < s.v[b];
        return a > b;
    };
    std::make_heap(s.idx.begin(), s.idx.end(), worse);
    auto end = s.idx.end();
    while (residual > 0.0 && end != s.idx.begin()) {
        std::pop_heap(s.idx.begin(), end, worse);
        --end;
        const int k = *end;
        const double take = std::min(r.hi[k] - r.lo[k], residual);
        base += take * s.v[k];
        residual -= take;
    }
    return base;
}

}  // namespace

ViResult value_iteration(const ProductImdp& P, ActionChoice choice, Sense adversary, const Strategy* fixed,
                         const ViOptions& opt) {
    if (choice == ActionChoice::Fixed && !fixed) throw Error("value_iteration: fixed choice needs a strategy");
    const Imdp& M = *P.imdp;
    const int n = P.size();
    const int A = M.num_actions();
    ViResult res;
    std::vector<double> V(n), Vn(n);
    for (int i = 0; i < n; ++i) V[i] = P.initial_value(i);
    std::vector<int> act(n, 0);

    auto sweep = [&](int remaining) {
        parallel_for(n, opt.threads, [&](long li) {
            const int i = static_cast<int>(li);
            thread_local Scratch s;
            if (P.pinned_one(i) || P.pinned_zero(i)) {
                Vn[i] = V[i];
                act[i] = 0;
                return;
            }
            if (choice == ActionChoice::Fixed) {
                const int a = fixed->action(P.control[i], remaining);
                act[i] = a;
                Vn[i] = row_extreme(M.row(P.q[i], a), P, i, V, adversary, s);
                return;
            }
            double best = 0.0;
            int best_a = -1;
            for (int a = 0; a < A; ++a) {
                const double v = row_extreme(M.row(P.q[i], a), P, i, V, adversary, s);
                if (best_a < 0 || (choice == ActionChoice::Max ? v > best : v < best)) {
                    best = v;
                    best_a = a;
                }
            }
            act[i] = best_a;
            Vn[i] = best;
        });
    };

    if (P.horizon) {
        const int k = *P.horizon;
        res.strategy.time_indexed = true;
        for (int r = 1; r <= k; ++r) {
            sweep(r);
            double d = 0.0;
            for (int i = 0; i < n; ++i) d = std::max(d, std::abs(Vn[i] - V[i]));
            res.residual = d;
            std::swap(V, Vn);
            res.strategy.table.push_back(act);
        }
        res.sweeps = k;
        if (k == 0) res.strategy.table.push_back(std::vector<int>(n, 0));
    } else {
        res.converged = false;
        for (long t = 0; t < opt.max_sweeps; ++t) {
            sweep(0);
            double d = 0.0;
            for (int i = 0; i < n; ++i) d = std::max(d, std::abs(Vn[i] - V[i]));
            std::swap(V, Vn);
            res.sweeps = t + 1;
            res.residual = d;
            if (d < opt.tol) {
                res.converged = true;
                break;
            }
        }
        res.strategy.table.push_back(act);
        if (!res.converged && opt.throw_on_nonconvergence)
            throw NonConvergence("value iteration did not converge; residual " + std::to_string(res.residual));
    }
    if (choice == ActionChoice::Fixed) res.strategy = *fixed;
    res.values = std::move(V);
    return res;
}

ViResult synthesize_lower(const ProductImdp& P, const ViOptions& opt) {
    return value_iteration(P, ActionChoice::Max, Sense::Min, nullptr, opt);
}

ViResult lower_under_strategy(const ProductImdp& P, const Strategy& s, const ViOptions& opt) {
    return value_iteration(P, ActionChoice::Fixed, Sense::Min, &s, opt);
}

ViResult upper_under_strategy(const ProductImdp& P, const Strategy& s, const ViOptions& opt) {
    return value_iteration(P, ActionChoice::Fixed, Sense::Max, &s, opt);
}

StateBounds project_bounds(const ProductImdp& PL, const std::vector<double>& lower, const ProductImdp& PU,
                           const std::vector<double>& upper, const Strategy* strategy) {
    const Imdp& M = *PL.imdp;
    StateBounds sb;
    const int nq = M.num_states();
    sb.bounds.resize(nq);
    sb.action.assign(nq, -1);
    const int k = PL.horizon ? *PL.horizon : 0;
    for (int q = 0; q < nq; ++q) {
        const int il = PL.initial(q), iu = PU.initial(q);
        double lo = std::clamp(lower[il], 0.0, 1.0), hi = std::clamp(upper[iu], 0.0, 1.0);
        hi = std::max(hi, lo);
        sb.bounds[q] = {lo, hi};
        if (strategy && q != M.sink()) sb.action[q] = strategy->action(il, k);
    }
    return sb;
}

SynthesisResult synthesize(const Imdp& imdp, const Dfa& dfa, const ViOptions& opt) {
    // The sweep skips the per-row feasibility test, so loaded abstractions are checked once here.
    const int rows = static_cast<int>(imdp.row_ptr.size()) - 1;
    for (int r = 0; r < rows; ++r) {
        double sl = 0.0, sh = 0.0;
        for (std::int64_t k = imdp.row_ptr[r]; k < imdp.row_ptr[r + 1]; ++k) {
            if (imdp.lo[k] > imdp.hi[k]) sl = 2.0;
            sl += imdp.lo[k];
            sh += imdp.hi[k];
        }
        if (sl > 1.0 + 1e-12 || sh < 1.0 - 1e-12)
            throw InfeasibleRow("row " + std::to_string(r) + " admits no distribution");
    }
    SynthesisResult out;
    out.product_under = product(imdp, dfa, Labeling::Under);
    ViResult low = synthesize_lower(out.product_under, opt);
    out.strategy = low.strategy;
    out.sweeps = low.sweeps;
    out.converged = low.converged;
    if (!out.product_under.horizon) {
        // A greedy stationary strategy may differ from the max-min value; report what it guarantees.
        ViResult check = lower_under_strategy(out.product_under, out.strategy, opt);
        out.lower = std::move(check.values);
        out.converged = out.converged && check.converged;
    } else {
        out.lower = std::move(low.values);
    }
    const bool same = imdp.labels_under == imdp.labels_over;
    out.product_upper = same ? out.product_under : joint_product(imdp, dfa, out.product_under);
    ViResult up = upper_under_strategy(out.product_upper, out.strategy, opt);
    out.converged = out.converged && up.converged;
    out.upper = std::move(up.values);
    out.bounds = project_bounds(out.product_under, out.lower, out.product_upper, out.upper, &out.strategy);
    return out;
}

VerifyResult verify(const ProductImdp& PU, const ProductImdp& PO, VerifyMode mode, const ViOptions& opt) {
    const ActionChoice c = mode == VerifyMode::Pessimistic ? ActionChoice::Min : ActionChoice::Max;
    VerifyResult r;
    r.lower = value_iteration(PU, c, Sense::Min, nullptr, opt).values;
    r.upper = value_iteration(PO, c, Sense::Max, nullptr, opt).values;
    r.bounds = project_bounds(PU, r.lower, PO, r.upper, nullptr);
    return r;
}

ErrorMetrics error_metrics(const std::vector<ProbInterval>& bounds, const std::vector<double>& volumes) {
    if (bounds.size() != volumes.size()) throw DimensionMismatch("error_metrics: sizes differ");
    ErrorMetrics e;
    if (bounds.empty()) return e;
    std::vector<double> eps(bounds.size());
    double wsum = 0.0, vsum = 0.0;
    for (std::size_t i = 0; i < bounds.size(); ++i) {
        eps[i] = bounds[i].hi - bounds[i].lo;
        e.eps_max = std::max(e.eps_max, eps[i]);
        wsum += eps[i] * volumes[i];
        vsum += volumes[i];
    }
    std::sort(eps.begin(), eps.end());
    const std::size_t n = eps.size();
    e.eps_med = n % 2 ? eps[n / 2] : 0.5 * (eps[n / 2 - 1] + eps[n / 2]);
    e.eps_ave = vsum > 0 ? wsum / vsum : 0.0;
    return e;
}

ErrorMetrics error_metrics(const Imdp& imdp, const StateBounds& sb) {
    std::vector<ProbInterval> b(sb.bounds.begin(), sb.bounds.begin() + imdp.sink());
    std::vector<double> vol;
    for (const auto& c : imdp.states) vol.push_back(volume(c.cell));
    return error_metrics(b, vol);
}

SwitchingController::SwitchingController(const Imdp& imdp, const Dfa& dfa, const ProductImdp& P, const Strategy& s)
    : imdp_(&imdp), dfa_(&dfa), P_(&P), s_(&s), locator_(imdp) {}

SwitchingController::State SwitchingController::start(const Vec& x, int mode) const {
    State st;
    const auto c = locator_.locate(mode, x);
    st.cell = c ? *c : -1;
    const int q = c ? *c : imdp_->sink();
    st.z = P_->next[static_cast<std::size_t>(P_->z_init) * P_->nq + q];
    return st;
}

SwitchingController::State SwitchingController::advance(const State& st, const Vec& x, int mode) const {
    State nx;
    const auto c = locator_.locate(mode, x);
    nx.cell = c ? *c : -1;
    const int q = c ? *c : imdp_->sink();
    nx.z = P_->next[static_cast<std::size_t>(st.z) * P_->nq + q];
    return nx;
}

int SwitchingController::choose(const State& st, int remaining) const {
    if (st.cell < 0) return fallback_mode_;
    const int i = P_->at(st.cell, st.z);
    if (i < 0) return fallback_mode_;
    return s_->action(i, remaining);
}

SimulationResult simulate(const HybridSystem& H, const SwitchingController& ctl, const Vec& x0, int mode0,
                          std::optional<int> horizon, std::uint64_t seed, std::uint64_t run, long max_steps,
                          bool record_path, bool exact_labels) {
    SimulationResult res;
    Rng rng(seed, run);
    const Dfa& dfa = ctl.dfa();
    const auto dead = dfa.dead_states();
    std::vector<Mat> chol;
    for (const auto& md : H.modes) chol.push_back(md.dyn.cov_w.llt().matrixL());
    auto accepted = [&](int z) { return dfa.accepting[z] && (!horizon || dfa.absorbing(z)); };
    // Letters from actual region membership, mapped onto the automaton's atoms.
    const std::size_t nr = H.regions.size();
    const auto atoms = H.atoms();
    std::vector<int> bit(atoms.size(), -1);
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        auto it = std::find(dfa.atoms.begin(), dfa.atoms.end(), atoms[i]);
        if (it != dfa.atoms.end()) bit[i] = static_cast<int>(it - dfa.atoms.begin());
    }
    auto exact_letter = [&](const Vec& x) {
        LabelSet l = 0;
        for (std::size_t i = 0; i < nr; ++i) {
            const std::size_t j = contains_point(H.regions[i].poly, x, 0.0) ? i : nr + i;
            if (bit[j] >= 0) l |= LabelSet{1} << bit[j];
        }
        return l;
    };

    Vec x = x0;
    if (record_path) {
        res.path.push_back(x);
        res.modes.push_back(mode0);
    }
    if (!H.X.contains_point(x, 0.0)) return res;
    auto st = ctl.start(x, mode0);
    if (st.cell < 0) return res;
    int ze = exact_labels ? dfa.step(dfa.initial, exact_letter(x)) : st.z;
    res.trace.push_back(ctl.imdp().labels_under[st.cell]);
    if (accepted(ze)) {
        res.satisfied = true;
        return res;
    }
    if (dead[ze]) return res;
    const long steps = horizon ? *horizon : max_steps;
    for (long t = 0; t < steps; ++t) {
        const int remaining = horizon ? static_cast<int>(steps - t) : 0;
        const int a = ctl.choose(st, remaining);
        const auto& d = H.modes[a].dyn;
        Vec w(d.cov_w.rows());
        for (int i = 0; i < w.size(); ++i) w(i) = rng.normal();
        x = d.F * x + d.G * (chol[a] * w);
        if (record_path) {
            res.path.push_back(x);
            res.modes.push_back(a);
        }
        if (!H.X.contains_point(x, 0.0)) return res;
        st = ctl.advance(st, x, a);
        if (st.cell < 0) return res;
        ze = exact_labels ? dfa.step(ze, exact_letter(x)) : st.z;
        res.trace.push_back(ctl.imdp().labels_under[st.cell]);
        if (accepted(ze)) {
            res.satisfied = true;
            return res;
        }
        if (dead[ze]) return res;
    }
    res.satisfied = horizon && dfa.accepting[ze];
    return res;
}

WilsonInterval wilson(long successes, long n, double z) {
    WilsonInterval w;
    if (n <= 0) return w;
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(successes) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    w.center = (p + z2 / (2.0 * nn)) / denom;
    w.half_width = z / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
    w.lo = std::max(0.0, w.center - w.half_width);
    w.hi = std::min(1.0, w.center + w.half_width);
    return w;
}

}  // namespace switchsynth

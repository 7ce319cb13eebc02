#include "switchsynth/abstraction.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "switchsynth/parallel.hpp"

namespace switchsynth {

void HybridSystem::check() const {
    if (modes.empty()) throw ModelError("system has no modes");
    const int m = dim();
    std::set<std::string> names;
    for (const auto& md : modes) {
        if (!names.insert(md.name).second) throw ModelError("duplicate mode name '" + md.name + "'");
        const auto& d = md.dyn;
        if (d.F.rows() != m || d.F.cols() != m) throw ModelError("mode '" + md.name + "': F must be " + std::to_string(m) + "x" + std::to_string(m));
        if (d.G.rows() != m) throw ModelError("mode '" + md.name + "': G must have " + std::to_string(m) + " rows");
        if (d.cov_w.rows() != d.G.cols() || d.cov_w.cols() != d.G.cols())
            throw ModelError("mode '" + md.name + "': noise covariance does not match G");
    }
    if (regions.size() > 32) throw ModelError("at most 32 regions are supported");
    std::set<std::string> labels;
    const Polytope Xp = Polytope::from_box(X);
    for (const auto& r : regions) {
        if (r.label.rfind("neg_", 0) == 0) throw ModelError("region label may not start with 'neg_': " + r.label);
        if (!labels.insert(r.label).second) throw ModelError("duplicate region label '" + r.label + "'");
        if (r.poly.dim() != m || !r.poly.halfspaces) throw ModelError("region '" + r.label + "' has the wrong dimension");
        if (!contains(Xp, r.poly)) throw ModelError("region '" + r.label + "' is not contained in X");
    }
}

std::vector<std::string> HybridSystem::atoms() const {
    std::vector<std::string> a;
    for (const auto& r : regions) a.push_back(r.label);
    for (const auto& r : regions) a.push_back("neg_" + r.label);
    return a;
}

Vec whitened_step(const Whitening& w, double dx) {
    // Column i of T^{-1} maps a unit whitened step to length sqrt(lambda_i) in original space.
    return (dx / w.T_inv.colwise().norm().array()).matrix().transpose();
}

namespace {

Parallelotope to_original(const HyperRectangle& wrect, const Whitening& w) {
    return {w.T_inv * wrect.lower, w.T_inv * Mat((wrect.upper - wrect.lower).asDiagonal())};
}

double original_side(const HyperRectangle& wrect, const Whitening& w) {
    const Vec scale = w.T_inv.colwise().norm().transpose();
    return (wrect.extent().array() * scale.array()).maxCoeff();
}

}  // namespace

Discretization discretize(const HybridSystem& H, const DiscretizationSpec& spec) {
    const bool adaptive = spec.dx_min && spec.dx_max;
    if (!adaptive && !(spec.dx > 0)) throw GeometryError("discretize: dx must be positive");
    if (adaptive && !(*spec.dx_min > 0 && *spec.dx_min <= *spec.dx_max))
        throw GeometryError("discretize: need 0 < dx_min <= dx_max");
    const Polytope Xp = Polytope::from_box(H.X);
    const int m = H.dim();
    // A region containing all of X (such as the safe-set atom) says nothing about where to refine.
    std::vector<bool> covers_X;
    for (const auto& reg : H.regions) covers_X.push_back(contains(reg.poly, Xp));
    Discretization disc;
    for (std::size_t a = 0; a < H.modes.size(); ++a) {
        ModeGrid g;
        g.w = whitening(H.modes[a].dyn);
        const Parallelotope wX = post_image(Parallelotope::from_box(H.X), g.w.T);
        g.whull = wX.bounding_box();
        g.step = whitened_step(g.w, adaptive ? *spec.dx_max : spec.dx);
        g.first = static_cast<int>(disc.cells.size());

        auto classify = [&](const HyperRectangle& r, Cell& c) {
            c.mode = static_cast<int>(a);
            c.wrect = r;
            c.cell = to_original(r, g.w);
            const Polytope cp = c.cell.to_polytope();
            if (contains(Xp, cp)) {
                c.boundary = false;
                return true;
            }
            c.boundary = true;
            return intersects(Xp, cp);
        };
        auto touches_region = [&](const Cell& c) {
            if (!spec.refine_regions) return false;
            const Polytope cp = c.cell.to_polytope();
            for (std::size_t i = 0; i < H.regions.size(); ++i)
                if (!covers_X[i] && intersects(H.regions[i].poly, cp)) return true;
            return false;
        };
        // Depth-first dyadic refinement keeps children of one coarse cell adjacent in the state order.
        // Children are never smaller than dx_min.
        std::vector<Cell> out;
        auto refine = [&](auto&& self, const HyperRectangle& r) -> void {
            Cell c;
            if (!classify(r, c)) return;
            const bool split = adaptive && 0.5 * original_side(r, g.w) >= *spec.dx_min * (1.0 - 1e-9) &&
                               (c.boundary || touches_region(c));
            if (!split) {
                out.push_back(c);
                return;
            }
            const Vec mid = r.center();
            for (int k = 0; k < (1 << m); ++k) {
                Vec lo(m), hi(m);
                for (int i = 0; i < m; ++i) {
                    lo(i) = (k >> i & 1) ? mid(i) : r.lower(i);
                    hi(i) = (k >> i & 1) ? r.upper(i) : mid(i);
                }
                self(self, HyperRectangle(lo, hi));
            }
        };
        for (const auto& r : uniform_grid(g.whull, g.step)) refine(refine, r);
        if (out.empty()) throw GeometryError("discretize: empty grid for mode '" + H.modes[a].name + "'");
        bool any_boundary = false;
        for (const auto& c : out) any_boundary |= c.boundary;
        g.tiles_hull = !any_boundary && wX.is_axis_aligned(1e-12);
        g.count = static_cast<int>(out.size());
        disc.cells.insert(disc.cells.end(), out.begin(), out.end());
        disc.grids.push_back(g);
    }
    return disc;
}

namespace {
constexpr double kLabelTol = 1e-9;
}

Labels label_states(const HybridSystem& H, const std::vector<Cell>& cells) {
    const std::size_t n = H.regions.size();
    Labels L;
    L.under.assign(cells.size() + 1, 0);
    L.over.assign(cells.size() + 1, 0);
    for (std::size_t s = 0; s < cells.size(); ++s) {
        const Polytope cp = cells[s].cell.to_polytope();
        for (std::size_t i = 0; i < n; ++i) {
            const LabelSet pos = LabelSet{1} << i, neg = LabelSet{1} << (n + i);
            const bool inside = contains(H.regions[i].poly, cp);
            // Contact along a shared face has measure zero and does not count as meeting the region.
            const bool meets = inside || intersects(H.regions[i].poly, cp, -kLabelTol);
            if (inside) L.under[s] |= pos;
            if (!meets) L.under[s] |= neg;
            if (meets) L.over[s] |= pos;
            if (!inside) L.over[s] |= neg;
        }
    }
    return L;
}

void pack_rows(Imdp& imdp, std::vector<std::vector<int>>& targets, std::vector<std::vector<double>>& lo,
               std::vector<std::vector<double>>& hi) {
    const int A = imdp.num_actions();
    const int sink = imdp.sink();
    targets.resize(static_cast<std::size_t>(imdp.num_states()) * A);
    lo.resize(targets.size());
    hi.resize(targets.size());
    for (int a = 0; a < A; ++a) {
        const std::size_t r = static_cast<std::size_t>(sink) * A + a;
        targets[r] = {sink};
        lo[r] = {1.0};
        hi[r] = {1.0};
    }
    imdp.row_ptr.assign(targets.size() + 1, 0);
    for (std::size_t r = 0; r < targets.size(); ++r) imdp.row_ptr[r + 1] = imdp.row_ptr[r] + static_cast<std::int64_t>(targets[r].size());
    imdp.target.resize(imdp.row_ptr.back());
    imdp.lo.resize(imdp.row_ptr.back());
    imdp.hi.resize(imdp.row_ptr.back());
    for (std::size_t r = 0; r < targets.size(); ++r) {
        std::copy(targets[r].begin(), targets[r].end(), imdp.target.begin() + imdp.row_ptr[r]);
        std::copy(lo[r].begin(), lo[r].end(), imdp.lo.begin() + imdp.row_ptr[r]);
        std::copy(hi[r].begin(), hi[r].end(), imdp.hi.begin() + imdp.row_ptr[r]);
        std::vector<int>().swap(targets[r]);
        std::vector<double>().swap(lo[r]);
        std::vector<double>().swap(hi[r]);
    }
}

Imdp build_imdp(const HybridSystem& H, const Discretization& disc, const BuildOptions& opt) {
    H.check();
    Imdp imdp;
    imdp.dim = H.dim();
    for (const auto& md : H.modes) imdp.actions.push_back(md.name);
    imdp.atoms = H.atoms();
    imdp.states = disc.cells;
    imdp.grids = disc.grids;
    Labels L = label_states(H, disc.cells);
    imdp.labels_under = std::move(L.under);
    imdp.labels_over = std::move(L.over);

    const int A = imdp.num_actions();
    const int N = static_cast<int>(imdp.states.size());
    std::vector<Mat> M(A);
    std::vector<SinkGeometry> sg(A);
    for (int a = 0; a < A; ++a) {
        const ModeGrid& g = disc.grids[a];
        M[a] = g.w.T * H.modes[a].dyn.F;
        std::vector<HyperRectangle> cells;
        std::vector<bool> inside;
        for (int s = g.first; s < g.first + g.count; ++s) {
            cells.push_back(disc.cells[s].wrect);
            inside.push_back(!disc.cells[s].boundary);
        }
        sg[a] = prepare_sink_geometry(cells, inside, g.whull, g.tiles_hull);
    }

    std::vector<std::vector<int>> tg(static_cast<std::size_t>(N + 1) * A);
    std::vector<std::vector<double>> lo(tg.size()), hi(tg.size());
    struct RowStats {
        long pruned = 0;
        int fb_max = 0, fb_min = 0, exact = 0, noconv = 0;
    };
    std::vector<RowStats> rstats(static_cast<std::size_t>(N) * A);
    std::vector<std::string> errors(static_cast<std::size_t>(N) * A);

    parallel_for(static_cast<long>(N) * A, opt.threads, [&](long r) {
        const int s = static_cast<int>(r / A), a = static_cast<int>(r % A);
        const ModeGrid& g = disc.grids[a];
        const Parallelotope dom = post_image(imdp.states[s].cell, M[a]);
        const HyperRectangle dbox = dom.bounding_box();
        const bool axis = dom.is_axis_aligned(1e-14);
        const Mat V = dom.vertices();
        RowStats& st = rstats[r];
        auto& T = tg[r];
        auto& Lo = lo[r];
        auto& Hi = hi[r];
        double dropped = 0.0;
        const int m = imdp.dim;
        for (int t = g.first; t < g.first + g.count; ++t) {
            const HyperRectangle& rect = imdp.states[t].wrect;
            const double bound = box_max_bound(rect, dbox);
            if (bound < opt.prune) {
                dropped += bound;
                ++st.pruned;
                continue;
            }
            double h, l;
            if (axis) {
                h = bound;
                l = 1.0;
                for (int i = 0; i < m; ++i)
                    l *= std::min(normal_factor(dbox.lower(i), rect.lower(i), rect.upper(i)),
                                  normal_factor(dbox.upper(i), rect.lower(i), rect.upper(i)));
            } else {
                OptResult mx = max_f_over_polytope(rect, dom, opt.max_options);
                if (!mx.converged) ++st.noconv;
                h = mx.value;
                l = 2.0;
                for (int c = 0; c < V.cols(); ++c) l = std::min(l, erf_product(V.col(c), rect));
            }
            h = clamp_prob(h);
            if (h < opt.prune) {
                dropped += std::max(h, 0.0);
                ++st.pruned;
                continue;
            }
            // Part of a boundary cell lies outside X, so no positive lower bound is sound for it.
            l = imdp.states[t].boundary ? 0.0 : std::min(clamp_prob(l), h);
            T.push_back(t);
            Lo.push_back(l);
            Hi.push_back(h);
        }
        SinkStats ss;
        ProbInterval sk = sink_bounds(dom, sg[a], &ss, opt.max_options);
        st.fb_max += ss.fallback_max;
        st.fb_min += ss.fallback_min;
        st.exact += ss.exact_tiling ? 1 : 0;
        sk.hi = std::min(1.0, sk.hi + dropped);
        double sum_lo = sk.lo, sum_hi = sk.hi;
        for (std::size_t k = 0; k < Lo.size(); ++k) {
            sum_lo += Lo[k];
            sum_hi += Hi[k];
        }
        // Rounding-level repairs only; anything larger is a genuine failure.
        if (sum_hi < 1.0 && 1.0 - sum_hi <= 1e-9) {
            sk.hi = std::min(1.0, sk.hi + (1.0 - sum_hi));
            sum_hi = 1.0;
        }
        if (sum_lo > 1.0 && sum_lo - 1.0 <= 1e-9) {
            const double cut = std::min(sk.lo, sum_lo - 1.0);
            sk.lo -= cut;
            sum_lo -= cut;
        }
        if (sum_lo > 1.0 + 1e-12 || sum_hi < 1.0 - 1e-12) {
            std::ostringstream os;
            os << "row (state " << s << ", action " << imdp.actions[a] << ") infeasible: sum lo " << sum_lo << ", sum hi " << sum_hi;
            errors[r] = os.str();
        }
        T.push_back(imdp.sink());
        Lo.push_back(sk.lo);
        Hi.push_back(sk.hi);
    });
    for (const auto& e : errors)
        if (!e.empty()) throw BuildError(e);

    pack_rows(imdp, tg, lo, hi);
    for (const auto& st : rstats) {
        imdp.stats.pruned_entries += st.pruned;
        imdp.stats.sink_fallback_max += st.fb_max;
        imdp.stats.sink_fallback_min += st.fb_min;
        imdp.stats.exact_tiling_rows += st.exact;
        imdp.stats.nonconverged_max += st.noconv;
    }
    imdp.stats.kept_entries = static_cast<long>(imdp.target.size());
    for (const auto& c : imdp.states) imdp.stats.boundary_cells += c.boundary ? 1 : 0;
    return imdp;
}

ValidationReport validate(const Imdp& imdp, double tol) {
    ValidationReport rep;
    const int A = imdp.num_actions();
    const int S = imdp.num_states();
    auto flag = [&](const std::string& msg) { rep.violations.push_back(msg); };
    if (static_cast<int>(imdp.row_ptr.size()) != S * A + 1) {
        flag("row table size does not match states x actions");
        return rep;
    }
    long rows = 0;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const RowView r = imdp.row(s, a);
            double sl = 0.0, sh = 0.0;
            for (int k = 0; k < r.size; ++k) {
                if (!(r.lo[k] >= 0.0 && r.lo[k] <= r.hi[k] && r.hi[k] <= 1.0))
                    flag("state " + std::to_string(s) + " action " + std::to_string(a) + ": invalid interval to " + std::to_string(r.target[k]));
                if (k > 0 && r.target[k] <= r.target[k - 1])
                    flag("state " + std::to_string(s) + " action " + std::to_string(a) + ": targets not ascending");
                sl += r.lo[k];
                sh += r.hi[k];
            }
            if (sl > 1.0 + tol) flag("state " + std::to_string(s) + " action " + std::to_string(a) + ": sum of lower bounds exceeds 1");
            if (sh < 1.0 - tol) flag("state " + std::to_string(s) + " action " + std::to_string(a) + ": sum of upper bounds below 1");
            rep.max_upper_slack = std::max(rep.max_upper_slack, sh - 1.0);
            rep.max_lower_slack = std::max(rep.max_lower_slack, 1.0 - sl);
            rep.mean_upper_slack += sh - 1.0;
            rep.mean_lower_slack += 1.0 - sl;
            ++rows;
        }
    if (rows > 0) {
        rep.mean_upper_slack /= static_cast<double>(rows);
        rep.mean_lower_slack /= static_cast<double>(rows);
    }
    const int sink = imdp.sink();
    for (int a = 0; a < A; ++a) {
        const RowView r = imdp.row(sink, a);
        if (r.size != 1 || r.target[0] != sink || r.lo[0] != 1.0 || r.hi[0] != 1.0)
            flag("sink is not absorbing under action " + std::to_string(a));
    }
    if (imdp.labels_under.size() != static_cast<std::size_t>(S) || imdp.labels_over.size() != static_cast<std::size_t>(S)) {
        flag("label tables do not cover every state");
    } else {
        for (int s = 0; s < S; ++s)
            if ((imdp.labels_under[s] & ~imdp.labels_over[s]) != 0)
                flag("state " + std::to_string(s) + ": under-labels not contained in over-labels");
        if (imdp.labels_under[sink] != 0 || imdp.labels_over[sink] != 0) flag("sink carries labels");
    }
    rep.sink_fallback_max = imdp.stats.sink_fallback_max;
    rep.sink_fallback_min = imdp.stats.sink_fallback_min;
    return rep;
}

CellLocator::CellLocator(const Imdp& imdp) : imdp_(&imdp) {
    for (const auto& g : imdp.grids) {
        Bucketing b;
        b.origin = g.whull.lower;
        b.step = g.step;
        b.counts = grid_counts(g.whull, g.step);
        long total = 1;
        for (int c : b.counts) total *= c;
        b.buckets.resize(total);
        for (int s = g.first; s < g.first + g.count; ++s) {
            const Vec c = imdp.states[s].wrect.center();
            long idx = 0;
            for (int i = 0; i < imdp.dim; ++i) {
                const int k = std::clamp(static_cast<int>(std::floor((c(i) - b.origin(i)) / b.step(i))), 0, b.counts[i] - 1);
                idx = idx * b.counts[i] + k;
            }
            b.buckets[idx].push_back(s);
        }
        modes_.push_back(std::move(b));
    }
}

std::optional<int> CellLocator::locate(int mode, const Vec& x) const {
    const Bucketing& b = modes_.at(mode);
    const Vec y = imdp_->grids[mode].w.T * x;
    const int m = imdp_->dim;
    std::vector<int> lo(m), hi(m);
    for (int i = 0; i < m; ++i) {
        const double f = (y(i) - b.origin(i)) / b.step(i);
        lo[i] = std::clamp(static_cast<int>(std::floor(f - 1e-9)), 0, b.counts[i] - 1);
        hi[i] = std::clamp(static_cast<int>(std::floor(f + 1e-9)), 0, b.counts[i] - 1);
    }
    int best = -1;
    std::vector<int> idx(lo);
    while (true) {
        long flat = 0;
        for (int i = 0; i < m; ++i) flat = flat * b.counts[i] + idx[i];
        for (int s : b.buckets[flat])
            if ((best < 0 || s < best) && imdp_->states[s].wrect.contains_point(y, 1e-12)) best = s;
        int i = m - 1;
        for (; i >= 0; --i) {
            if (++idx[i] <= hi[i]) break;
            idx[i] = lo[i];
        }
        if (i < 0) break;
    }
    if (best < 0) return std::nullopt;
    return best;
}

}  // namespace switchsynth

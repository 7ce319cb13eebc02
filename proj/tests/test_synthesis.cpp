#include <doctest.h>

#include <algorithm>
#include <functional>

#include "switchsynth/synthesis.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace switchsynth;
using namespace testutil;

TEST_CASE("o_extreme example and mirror") {
    const std::vector<double> v = {0, 0.5, 1}, lo = {0.1, 0.2, 0.1}, hi = {0.6, 0.7, 0.5};
    const OExtremeResult mn = o_extreme(v, lo, hi, Sense::Min);
    CHECK(mn.distribution[0] == doctest::Approx(0.6));
    CHECK(mn.distribution[1] == doctest::Approx(0.3));
    CHECK(mn.distribution[2] == doctest::Approx(0.1));
    CHECK(mn.value == doctest::Approx(0.25));
    CHECK(mn.value == doctest::Approx(brute_extreme(v, lo, hi, Sense::Min)));
    const OExtremeResult mx = o_extreme(v, lo, hi, Sense::Max);
    CHECK(mx.value == doctest::Approx(brute_extreme(v, lo, hi, Sense::Max)));
    CHECK(mx.value >= mn.value);

    const OExtremeResult d = o_extreme({0.2, 0.9}, {0.3, 0.7}, {0.3, 0.7}, Sense::Min);
    CHECK(d.value == doctest::Approx(0.3 * 0.2 + 0.7 * 0.9));

    CHECK_THROWS_AS(o_extreme({0, 1}, {0.6, 0.6}, {0.7, 0.7}, Sense::Min), InfeasibleRow);
    CHECK_THROWS_AS(o_extreme({0, 1}, {0.1, 0.1}, {0.3, 0.3}, Sense::Max), InfeasibleRow);
}

TEST_CASE("o_extreme matches extreme-point enumeration on random rows") {
    for (int k = 0; k < 10000; ++k) {
        const int n = uint_in(1, 6);
        std::vector<double> lo, hi;
        random_row(n, lo, hi);
        std::vector<double> v(n);
        for (auto& x : v) x = uni(0, 1) < 0.2 ? 0.5 : uni(0, 1);  // repeated values exercise ties
        for (Sense s : {Sense::Min, Sense::Max}) {
            const OExtremeResult r = o_extreme(v, lo, hi, s);
            CHECK(r.value == doctest::Approx(brute_extreme(v, lo, hi, s)).epsilon(1e-12));
            double sum = 0;
            for (int j = 0; j < n; ++j) {
                CHECK(r.distribution[j] >= lo[j] - 1e-12);
                CHECK(r.distribution[j] <= hi[j] + 1e-12);
                sum += r.distribution[j];
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("product with an until automaton") {
    // q0 labelled a, q1 labelled b.
    const Rows rows = {{{{0, 0.2, 0.5}, {1, 0.3, 0.6}, {2, 0.1, 0.2}}}, {{{1, 1, 1}}}};
    const std::vector<std::string> atoms = {"a", "b", "neg_a", "neg_b"};
    const Imdp I = toy(rows, 1, atoms, {0b1001, 0b0110}, {0b1001, 0b0110});
    const Dfa d = template_dfa(parse_formula("a U b"), atoms);
    const ProductImdp P = product(I, d, Labeling::Under);
    CHECK(P.size() <= 3 * 3);
    // Reachable pairs: (q0, pending), (q1, accept), (sink, reject).
    CHECK(P.size() == 3);
    CHECK(P.initial(0) == P.at(0, 0));
    CHECK(P.initial(1) == P.at(1, 1));
    CHECK(P.successor(P.at(0, 0), 2) == P.at(2, 2));
    CHECK(P.pinned_one(P.at(1, 1)));
    CHECK(P.pinned_zero(P.at(2, 2)));

    // A DFA that accepts everything makes every non-sink state accepting.
    const Dfa all = read_dfa("switchsynth-v1 dfa\natoms a\nstates 1\ninitial 0\naccepting 0\nedge 0 0 true\nend\n");
    const ProductImdp Pa = product(I, all, Labeling::Under);
    CHECK(Pa.size() == I.num_states());
    for (int q = 0; q < I.sink(); ++q) CHECK(Pa.pinned_one(Pa.initial(q)));

    const SynthesisResult r = synthesize(I, d);
    // p = P(reach q1 before sink); q0 loops with [0.2,0.5], moves to q1 with [0.3,0.6], sink [0.1,0.2].
    // Worst case: sink 0.2, q1 0.3, loop 0.5 -> 0.3 / 0.5.
    CHECK(r.bounds.bounds[0].lo == doctest::Approx(0.6).epsilon(1e-5));
    // Best case: sink 0.1, q1 0.6, loop 0.3 -> 0.6 / 0.7.
    CHECK(r.bounds.bounds[0].hi == doctest::Approx(6.0 / 7).epsilon(1e-5));
    CHECK(r.bounds.bounds[1].lo == 1.0);
    CHECK(r.bounds.bounds[2].hi == 0.0);
    CHECK(r.bounds.action[2] == -1);
}

TEST_CASE("degenerate intervals give equal bounds") {
    const Rows rows = {{{{1, 0.5, 0.5}, {2, 0.5, 0.5}}}, {{{1, 1, 1}}}};
    const std::vector<std::string> atoms = {"g", "neg_g"};
    const Imdp I = toy(rows, 1, atoms, {0b10, 0b01}, {0b10, 0b01});
    for (const char* f : {"F<=3 g", "F g"}) {
        const SynthesisResult r = synthesize(I, template_dfa(parse_formula(f), atoms));
        CHECK(r.bounds.bounds[0].lo == doctest::Approx(0.5));
        CHECK(r.bounds.bounds[0].hi == doctest::Approx(0.5));
    }
}

TEST_CASE("bounded value iteration matches exhaustive adversaries") {
    const std::vector<std::string> atoms = {"g", "neg_g"};
    for (int trial = 0; trial < 60; ++trial) {
        const int n = uint_in(2, 4), nA = uint_in(1, 2), k = uint_in(1, 3);
        const Imdp I = random_toy(n, nA);
        const Dfa d = template_dfa(parse_formula("F<=" + std::to_string(k) + " g"), atoms);
        const SynthesisResult r = synthesize(I, d);
        std::function<int(int, int)> pol = [&](int q, int rem) {
            return r.strategy.action(r.product_under.initial(q), rem);
        };
        for (int q = 0; q < I.sink(); ++q) {
            CAPTURE(q);
            CHECK(r.bounds.bounds[q].lo == doctest::Approx(reach_oracle(I, q, k, true, Sense::Min)).epsilon(1e-12));
            CHECK(r.bounds.bounds[q].hi == doctest::Approx(reach_oracle(I, q, k, true, Sense::Max, &pol)).epsilon(1e-12));
            CHECK(r.bounds.bounds[q].lo <= r.bounds.bounds[q].hi + 1e-15);
        }
        // Verification: worst actions and worst adversary.
        const VerifyResult v = verify(r.product_under, r.product_upper, VerifyMode::Pessimistic);
        for (int q = 0; q < I.sink(); ++q)
            CHECK(v.bounds.bounds[q].lo == doctest::Approx(reach_oracle(I, q, k, false, Sense::Min)).epsilon(1e-12));
        const VerifyResult o = verify(r.product_under, r.product_upper, VerifyMode::Optimistic);
        for (int q = 0; q < I.sink(); ++q)
            CHECK(o.bounds.bounds[q].hi == doctest::Approx(reach_oracle(I, q, k, true, Sense::Max)).epsilon(1e-12));
    }
}

TEST_CASE("unbounded iteration: ordering, monotone residuals, and strategy consistency") {
    const std::vector<std::string> atoms = {"g", "neg_g"};
    for (int trial = 0; trial < 30; ++trial) {
        const Imdp I = random_toy(uint_in(3, 6), 2);
        const Dfa d = template_dfa(parse_formula("F g"), atoms);
        const SynthesisResult r = synthesize(I, d);
        CHECK(r.converged);
        for (int q = 0; q < I.num_states(); ++q) CHECK(r.bounds.bounds[q].lo <= r.bounds.bounds[q].hi + 1e-9);
        // Long bounded horizons approach the unbounded values from below.
        const SynthesisResult b = synthesize(I, template_dfa(parse_formula("F<=400 g"), atoms));
        for (int q = 0; q < I.sink(); ++q) CHECK(b.bounds.bounds[q].lo <= r.bounds.bounds[q].lo + 1e-5);
        // The stored strategy achieves the reported lower bound.
        const ViResult l = lower_under_strategy(r.product_under, r.strategy);
        for (int i = 0; i < r.product_under.size(); ++i) CHECK(l.values[i] == doctest::Approx(r.lower[i]).epsilon(1e-9));
    }
}

TEST_CASE("dominant action is selected everywhere") {
    const Rows rows = {{{{1, 0.2, 0.3}, {2, 0.7, 0.8}}, {{1, 0.6, 0.7}, {2, 0.3, 0.4}}},
                       {{{1, 1, 1}}, {{1, 1, 1}}},
                       {{{0, 0.4, 0.6}, {3, 0.4, 0.6}}, {{0, 0.1, 0.2}, {1, 0.5, 0.6}, {3, 0.2, 0.4}}}};
    const std::vector<std::string> atoms = {"g", "neg_g"};
    const Imdp I = toy(rows, 2, atoms, {0b10, 0b01, 0b10}, {0b10, 0b01, 0b10});
    const SynthesisResult r = synthesize(I, template_dfa(parse_formula("F<=5 g"), atoms));
    CHECK(r.bounds.action[0] == 1);
    CHECK(r.bounds.action[2] == 1);
    // Ties go to the lowest action index.
    CHECK(r.bounds.action[1] == 0);
}

TEST_CASE("error metrics") {
    const ErrorMetrics z = error_metrics({{0.3, 0.3}, {1, 1}}, {1, 2});
    CHECK(z.eps_max == 0);
    CHECK(z.eps_med == 0);
    CHECK(z.eps_ave == 0);
    const ErrorMetrics e = error_metrics({{0.1, 0.3}, {0.2, 0.6}}, {1, 1});
    CHECK(e.eps_ave == doctest::Approx(0.3));
    CHECK(e.eps_med == doctest::Approx(0.3));
    CHECK(e.eps_max == doctest::Approx(0.4));
    const ErrorMetrics w = error_metrics({{0, 0.1}, {0, 0.5}, {0, 0.9}}, {3, 1, 1});
    CHECK(w.eps_med == doctest::Approx(0.5));
    CHECK(w.eps_ave == doctest::Approx((0.3 + 0.5 + 0.9) / 5));
}

TEST_CASE("Wilson interval against reference values") {
    // References from statsmodels proportion_confint(method="wilson", alpha=0.01).
    const WilsonInterval a = wilson(50, 100);
    CHECK(a.lo == doctest::Approx(0.3752796250448398).epsilon(1e-12));
    CHECK(a.hi == doctest::Approx(0.6247203749551602).epsilon(1e-12));
    const WilsonInterval b = wilson(9700, 10000);
    CHECK(b.lo == doctest::Approx(0.9652847473633571).epsilon(1e-12));
    CHECK(b.hi == doctest::Approx(0.9740919858871907).epsilon(1e-12));
    const WilsonInterval c = wilson(0, 20);
    CHECK(c.lo == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c.hi == doctest::Approx(0.24910540109875348).epsilon(1e-12));
    CHECK(a.center - a.half_width == doctest::Approx(a.lo));
}

namespace {

struct SmallCase {
    HybridSystem H;
    Imdp I;
    Dfa dfa;
    SynthesisResult res;
};

SmallCase small_case(double noise, const char* formula) {
    SmallCase c;
    Mat F = Mat::Zero(2, 2);
    F.diagonal() << 0.85, 0.9;
    Mat G = Mat::Zero(2, 2);
    G.diagonal() << 0.15 * noise, 0.05 * noise;
    c.H.modes.push_back({"a", {F, G, Mat::Identity(2, 2)}});
    Vec lo(2), hi(2);
    lo << -1, -1;
    hi << 1, 1;
    c.H.X = HyperRectangle(lo, hi);
    c.H.regions.push_back({"X", Polytope::from_box(c.H.X)});
    DiscretizationSpec spec;
    spec.dx = 0.25;
    c.I = build_imdp(c.H, discretize(c.H, spec));
    c.dfa = template_dfa(bar_translate(parse_formula(formula), {"X"}), c.I.atoms);
    c.res = synthesize(c.I, c.dfa);
    return c;
}

}  // namespace

TEST_CASE("simulation is deterministic and brackets the bounds") {
    const SmallCase c = small_case(1.0, "G<=10 X");
    const SwitchingController ctl(c.I, c.dfa, c.res.product_under, c.res.strategy);
    Vec x0(2);
    x0 << 0.55, -0.3;
    const SimulationResult a = simulate(c.H, ctl, x0, 0, c.dfa.horizon, 7, 3, 10000, true);
    const SimulationResult b = simulate(c.H, ctl, x0, 0, c.dfa.horizon, 7, 3, 10000, true);
    REQUIRE(a.path.size() == b.path.size());
    for (std::size_t i = 0; i < a.path.size(); ++i) CHECK(a.path[i] == b.path[i]);
    CHECK(a.trace == b.trace);
    const SimulationResult other = simulate(c.H, ctl, x0, 0, c.dfa.horizon, 7, 4, 10000, true);
    CHECK_FALSE(other.path == a.path);

    const int cell = ctl.start(x0, 0).cell;
    REQUIRE(cell >= 0);
    long ok = 0;
    const long n = 4000;
    for (long r = 0; r < n; ++r) ok += simulate(c.H, ctl, x0, 0, c.dfa.horizon, 11, r).satisfied;
    const WilsonInterval w = wilson(ok, n);
    CHECK(w.hi >= c.res.bounds.bounds[cell].lo);
    CHECK(w.lo <= c.res.bounds.bounds[cell].hi);
}

TEST_CASE("zero-noise limit stays near the origin") {
    const SmallCase c = small_case(1e-6, "G<=10 X");
    const SwitchingController ctl(c.I, c.dfa, c.res.product_under, c.res.strategy);
    Vec x0(2);
    x0 << 0.6, -0.7;
    const SimulationResult s = simulate(c.H, ctl, x0, 0, c.dfa.horizon, 1, 0, 10000, true);
    CHECK(s.satisfied);
    CHECK(s.path.size() == 11);
    for (const auto& x : s.path) CHECK(x.norm() <= x0.norm() + 1e-4);
    const int cell = ctl.start(x0, 0).cell;
    CHECK(c.res.bounds.bounds[cell].lo > 0.99);
}

TEST_CASE("value iteration is invariant to the thread count") {
    const SmallCase c = small_case(1.0, "G<=10 X");
    ViOptions o;
    o.threads = 3;
    const SynthesisResult r = synthesize(c.I, c.dfa, o);
    CHECK(r.lower == c.res.lower);
    CHECK(r.upper == c.res.upper);
    CHECK(r.strategy.table == c.res.strategy.table);
}

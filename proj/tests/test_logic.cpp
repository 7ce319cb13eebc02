#include <doctest.h>

#include <functional>

#include "switchsynth/logic.hpp"
#include "test_util.hpp"

using namespace switchsynth;

namespace {

using K = Formula::Kind;

const std::vector<std::string> kAtoms = {"a", "b", "neg_a", "neg_b"};

bool has(LabelSet l, const std::string& atom) {
    for (std::size_t i = 0; i < kAtoms.size(); ++i)
        if (kAtoms[i] == atom) return l >> i & 1;
    FAIL("unknown atom " << atom);
    return false;
}

// Finite-trace semantics written directly from the definitions: bounded operators look at most k steps ahead,
// unbounded ones anywhere in the trace.
bool holds(const FormulaPtr& f, const std::vector<LabelSet>& tr, std::size_t i) {
    const std::size_t n = tr.size();
    switch (f->kind) {
        case K::True:
            return true;
        case K::Atom:
            return has(tr[i], f->atom);
        case K::Not:
            return !holds(f->args[0], tr, i);
        case K::And:
            return holds(f->args[0], tr, i) && holds(f->args[1], tr, i);
        case K::Or:
            return holds(f->args[0], tr, i) || holds(f->args[1], tr, i);
        case K::Next:
            return i + 1 < n && holds(f->args[0], tr, i + 1);
        case K::Until:
        case K::Eventually: {
            const FormulaPtr A = f->kind == K::Until ? f->args[0] : Formula::make_true();
            const FormulaPtr B = f->kind == K::Until ? f->args[1] : f->args[0];
            const std::size_t last = f->bound ? std::min(n - 1, i + *f->bound) : n - 1;
            for (std::size_t j = i; j <= last; ++j) {
                if (holds(B, tr, j)) return true;
                if (!holds(A, tr, j)) return false;
            }
            return false;
        }
        case K::Always: {
            const std::size_t last = std::min(n - 1, i + *f->bound);
            for (std::size_t j = i; j <= last; ++j)
                if (!holds(f->args[0], tr, j)) return false;
            return true;
        }
    }
    return false;
}

void for_each_trace(int len, const std::vector<LabelSet>& letters, const std::function<void(const std::vector<LabelSet>&)>& fn) {
    std::vector<LabelSet> tr(len);
    std::function<void(int)> rec = [&](int p) {
        if (p == len) {
            fn(tr);
            return;
        }
        for (LabelSet l : letters) {
            tr[p] = l;
            rec(p + 1);
        }
    };
    rec(0);
}

std::vector<LabelSet> all_letters() {
    std::vector<LabelSet> out;
    for (LabelSet l = 0; l < 16; ++l) out.push_back(l);
    return out;
}

// Letters where neg_p is exactly the complement of p.
std::vector<LabelSet> consistent_letters() {
    std::vector<LabelSet> out;
    for (LabelSet l = 0; l < 4; ++l) out.push_back(l | ((~l & 3) << 2));
    return out;
}

}  // namespace

TEST_CASE("parser examples") {
    const FormulaPtr a = Formula::make_atom("safe");
    CHECK(equal(parse_formula("G<=10 safe"), Formula::make(K::Always, {a}, 10)));
    CHECK(equal(parse_formula("!red U green"),
                Formula::make(K::Until, {Formula::make(K::Not, {Formula::make_atom("red")}), Formula::make_atom("green")})));
    CHECK(equal(parse_formula("F<=5 (a & b)"),
                Formula::make(K::Eventually, {Formula::make(K::And, {Formula::make_atom("a"), Formula::make_atom("b")})},
                              5)));
    // & binds tighter than |.
    CHECK(equal(parse_formula("a | b & c"),
                Formula::make(K::Or, {Formula::make_atom("a"),
                                      Formula::make(K::And, {Formula::make_atom("b"), Formula::make_atom("c")})})));
    // Temporal operators bind tighter than &.
    CHECK(equal(parse_formula("F a & b"),
                Formula::make(K::And, {Formula::make(K::Eventually, {Formula::make_atom("a")}), Formula::make_atom("b")})));
    CHECK(equal(parse_formula("a U<=3 b"),
                Formula::make(K::Until, {Formula::make_atom("a"), Formula::make_atom("b")}, 3)));
    CHECK(equal(parse_formula("X a"), Formula::make(K::Next, {Formula::make_atom("a")})));
    // Round trip through the printer.
    for (const char* s : {"G<=10 safe", "!red U green", "(a | b) U<=4 (c & !d)", "X X a", "F<=0 a"})
        CHECK(equal(parse_formula(to_string(parse_formula(s))), parse_formula(s)));
}

TEST_CASE("parser errors carry a position") {
    for (const char* s : {"", "(a", "a &", "G<= a", "G<=-1 a", "a U", "a ) b", "a $ b", "F<=x a"}) {
        CAPTURE(s);
        CHECK_THROWS_AS(parse_formula(s), ParseError);
    }
    try {
        parse_formula("a & & b");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.position >= 3);
        CHECK(e.position <= 4);
    }
}

TEST_CASE("bar translation") {
    const std::vector<std::string> regions = {"p1", "p2"};
    CHECK(equal(bar_translate(parse_formula("!p1 U p2"), regions), parse_formula("neg_p1 U p2")));
    CHECK(equal(bar_translate(parse_formula("F<=3 (p1 & p2)"), regions), parse_formula("F<=3 (p1 & p2)")));
    CHECK(equal(bar_translate(parse_formula("(!p1 & p2) U p1"), regions), parse_formula("(neg_p1 & p2) U p1")));
    CHECK_THROWS_AS(bar_translate(parse_formula("!q U p2"), regions), UnknownAtom);
}

TEST_CASE("template DFAs against the bounded semantics") {
    struct Case {
        const char* text;
        bool bounded;
    };
    const std::vector<Case> cases = {
        {"G<=0 a", true},     {"G<=2 a", true},         {"G<=3 (a | b)", true},        {"F<=2 b", true},
        {"F<=3 (a & b)", true}, {"a U<=2 b", true},     {"(a | neg_b) U<=3 (b & neg_a)", true},
        {"F a", false},       {"a U b", false},         {"(a & neg_b) U (b | neg_a)", false},
    };
    const auto letters = all_letters();
    for (const auto& c : cases) {
        CAPTURE(c.text);
        const FormulaPtr f = parse_formula(c.text);
        const Dfa d = template_dfa(f, kAtoms);
        CHECK(d.num_states <= 3);
        CHECK(d.horizon.has_value() == c.bounded);
        auto check_trace = [&](const std::vector<LabelSet>& tr) {
            CHECK(dfa_run(d, tr).second == holds(f, tr, 0));
        };
        if (c.bounded) {
            for_each_trace(*d.horizon + 1, letters, check_trace);
        } else {
            for (int len = 1; len <= 4; ++len) for_each_trace(len, letters, check_trace);
        }
        // Accepting and rejecting sinks are absorbing.
        for (int z = 0; z < d.num_states; ++z)
            if (z != d.initial) CHECK(d.absorbing(z));
    }
}

TEST_CASE("until template from a negated region atom") {
    const std::vector<std::string> regions = {"a", "b"};
    const FormulaPtr f = parse_formula("!a U b");
    const Dfa d = template_dfa(bar_translate(f, regions), kAtoms);
    CHECK(d.num_states == 3);
    const auto letters = consistent_letters();
    for (int len = 1; len <= 4; ++len)
        for_each_trace(len, letters, [&](const std::vector<LabelSet>& tr) {
            CHECK(dfa_run(d, tr).second == holds(f, tr, 0));
        });
    const auto dead = d.dead_states();
    int ndead = 0;
    for (bool x : dead) ndead += x;
    CHECK(ndead == 1);
}

TEST_CASE("unsupported formulas and unknown atoms") {
    CHECK_THROWS_AS(template_dfa(parse_formula("X a"), kAtoms), UnsupportedFormula);
    CHECK_THROWS_AS(template_dfa(parse_formula("G a"), kAtoms), UnsupportedFormula);
    CHECK_THROWS_AS(template_dfa(parse_formula("F G<=2 a"), kAtoms), UnsupportedFormula);
    CHECK_THROWS_AS(template_dfa(parse_formula("!a U b"), kAtoms), UnsupportedFormula);
    CHECK_THROWS_AS(template_dfa(parse_formula("F<=2 c"), kAtoms), UnknownAtom);
}

TEST_CASE("DFA text round trip and validation") {
    for (const char* s : {"G<=4 a", "a U b", "(a | neg_b) U<=3 (b & neg_a)", "F<=1 b"}) {
        const Dfa d = template_dfa(parse_formula(s), kAtoms);
        const Dfa r = read_dfa(write_dfa(d));
        CHECK(r.atoms == d.atoms);
        CHECK(r.num_states == d.num_states);
        CHECK(r.initial == d.initial);
        CHECK(r.accepting == d.accepting);
        CHECK(r.horizon == d.horizon);
        REQUIRE(r.edges.size() == d.edges.size());
        for (std::size_t z = 0; z < d.edges.size(); ++z) {
            REQUIRE(r.edges[z].size() == d.edges[z].size());
            for (std::size_t e = 0; e < d.edges[z].size(); ++e) {
                CHECK(r.edges[z][e].target == d.edges[z][e].target);
                CHECK(equal(r.edges[z][e].guard, d.edges[z][e].guard));
            }
        }
        CHECK(write_dfa(r) == write_dfa(d));
    }

    const std::string head = "switchsynth-v1 dfa\natoms a b\nstates 2\ninitial 0\naccepting 1\n";
    CHECK_NOTHROW(read_dfa(head + "edge 0 1 a\nedge 0 0 !a\nedge 1 1 true\nend\n"));
    CHECK_THROWS_AS(read_dfa(head + "edge 0 1 a\nedge 1 1 true\nend\n"), PartialTransition);
    CHECK_THROWS_AS(read_dfa(head + "edge 0 1 a\nedge 0 0 true\nedge 1 1 true\nend\n"), NondeterministicTransition);
    CHECK_THROWS_AS(read_dfa(head + "edge 0 1 a\nedge 0 0 !a\nedge 1 1 true\nedge 1 1 b\nend\n"),
                    NondeterministicTransition);
    CHECK_THROWS_AS(read_dfa("switchsynth-v1 dfa\nstates two\n"), FormatError);
    CHECK_THROWS_AS(read_dfa(head + "edge 0 7 a\nedge 0 0 !a\nedge 1 1 true\nend\n"), FormatError);
}

TEST_CASE("guards evaluate over the atom list") {
    const FormulaPtr g = parse_guard("(a | neg_b) & !b");
    CHECK(eval_guard(g, 0b0001, kAtoms));
    CHECK_FALSE(eval_guard(g, 0b0011, kAtoms));
    CHECK(eval_guard(g, 0b1000, kAtoms));
    CHECK_FALSE(eval_guard(g, 0b0000, kAtoms));
    CHECK(eval_guard(parse_guard("true"), 0, kAtoms));
    CHECK_FALSE(eval_guard(parse_guard("false"), 0, kAtoms));
    CHECK_THROWS_AS(parse_guard("F a"), ParseError);
}

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "switchsynth/abstraction.hpp"

namespace switchsynth {

struct ParseError : Error {
    ParseError(const std::string& msg, std::size_t pos)
        : Error(msg + " at position " + std::to_string(pos)), position(pos) {}
    std::size_t position;
};

struct UnknownAtom : Error {
    using Error::Error;
};

struct UnsupportedFormula : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct NondeterministicTransition : Error {
    using Error::Error;
};

struct PartialTransition : Error {
    using Error::Error;
};

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Formula {
    enum class Kind { True, Atom, Not, And, Or, Next, Until, Eventually, Always };
    Kind kind = Kind::True;
    std::string atom;
    std::optional<int> bound;  // for Until, Eventually, Always
    std::vector<FormulaPtr> args;

    static FormulaPtr make_true();
    static FormulaPtr make_atom(std::string name);
    static FormulaPtr make(Kind k, std::vector<FormulaPtr> args, std::optional<int> bound = std::nullopt);
};

bool equal(const FormulaPtr& a, const FormulaPtr& b);
std::string to_string(const FormulaPtr& f);

// Operators: ! | & X U F G, bounds as U<=k, F<=k, G<=k. Precedence: ! > temporal > & > |.
// X, F, and G act as operators only when an operand follows; otherwise they are atom names.
FormulaPtr parse_formula(const std::string& text);
// Boolean guards only (atoms, true, false, !, &, |, parentheses).
FormulaPtr parse_guard(const std::string& text);

// Replaces each negated region atom !p by the complement atom neg_p.
FormulaPtr bar_translate(const FormulaPtr& f, const std::vector<std::string>& region_labels);

// Evaluates a Boolean formula on a letter over the given atom list.
bool eval_guard(const FormulaPtr& g, LabelSet letter, const std::vector<std::string>& atoms);

struct DfaEdge {
    FormulaPtr guard;
    int target = 0;
};

struct Dfa {
    std::vector<std::string> atoms;
    int num_states = 0;
    int initial = 0;
    std::vector<bool> accepting;
    std::vector<std::vector<DfaEdge>> edges;
    std::optional<int> horizon;

    int step(int z, LabelSet letter) const;
    bool absorbing(int z) const;
    // States from which no accepting state is reachable.
    std::vector<bool> dead_states() const;
    // Throws NondeterministicTransition or PartialTransition.
    void check() const;
};

Dfa template_dfa(const FormulaPtr& translated, const std::vector<std::string>& atoms);

std::string write_dfa(const Dfa& dfa);
Dfa read_dfa(const std::string& text);

std::pair<int, bool> dfa_run(const Dfa& dfa, const std::vector<LabelSet>& trace);

}  // namespace switchsynth

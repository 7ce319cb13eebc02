#include "switchsynth/logic.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>
#include <sstream>

namespace switchsynth {

FormulaPtr Formula::make_true() {
    auto f = std::make_shared<Formula>();
    f->kind = Kind::True;
    return f;
}

FormulaPtr Formula::make_atom(std::string name) {
    auto f = std::make_shared<Formula>();
    f->kind = Kind::Atom;
    f->atom = std::move(name);
    return f;
}

FormulaPtr Formula::make(Kind k, std::vector<FormulaPtr> args, std::optional<int> bound) {
    auto f = std::make_shared<Formula>();
    f->kind = k;
    f->args = std::move(args);
    f->bound = bound;
    return f;
}

bool equal(const FormulaPtr& a, const FormulaPtr& b) {
    if (a->kind != b->kind || a->atom != b->atom || a->bound != b->bound || a->args.size() != b->args.size()) return false;
    for (std::size_t i = 0; i < a->args.size(); ++i)
        if (!equal(a->args[i], b->args[i])) return false;
    return true;
}

std::string to_string(const FormulaPtr& f) {
    using K = Formula::Kind;
    auto bnd = [&] { return f->bound ? "<=" + std::to_string(*f->bound) + " " : std::string(" "); };
    switch (f->kind) {
        case K::True: return "true";
        case K::Atom: return f->atom;
        case K::Not: return "!" + to_string(f->args[0]);
        case K::And: return "(" + to_string(f->args[0]) + " & " + to_string(f->args[1]) + ")";
        case K::Or: return "(" + to_string(f->args[0]) + " | " + to_string(f->args[1]) + ")";
        case K::Next: return "(X " + to_string(f->args[0]) + ")";
        case K::Until: return "(" + to_string(f->args[0]) + " U" + bnd() + to_string(f->args[1]) + ")";
        case K::Eventually: return "(F" + bnd() + to_string(f->args[0]) + ")";
        case K::Always: return "(G" + bnd() + to_string(f->args[0]) + ")";
    }
    return "?";
}

namespace {

struct Token {
    enum Type { Ident, Not, And, Or, LParen, RParen, Leq, Number, End } type;
    std::string text;
    std::size_t pos;
};

std::vector<Token> tokenize(const std::string& s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t j = i;
            while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
            out.push_back({Token::Ident, s.substr(i, j - i), i});
            i = j;
        } else if (std::isdigit(static_cast<unsigned char>(c))) {
            std::size_t j = i;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
            out.push_back({Token::Number, s.substr(i, j - i), i});
            i = j;
        } else if (c == '<' && i + 1 < s.size() && s[i + 1] == '=') {
            out.push_back({Token::Leq, "<=", i});
            i += 2;
        } else {
            Token::Type t;
            switch (c) {
                case '!': t = Token::Not; break;
                case '&': t = Token::And; break;
                case '|': t = Token::Or; break;
                case '(': t = Token::LParen; break;
                case ')': t = Token::RParen; break;
                default: throw ParseError(std::string("unexpected character '") + c + "'", i);
            }
            out.push_back({t, std::string(1, c), i});
            ++i;
        }
    }
    out.push_back({Token::End, "", s.size()});
    return out;
}

class Parser {
public:
    Parser(const std::string& text, bool guard) : toks_(tokenize(text)), guard_(guard) {}

    FormulaPtr parse() {
        FormulaPtr f = parse_or();
        if (peek().type != Token::End) throw ParseError("unexpected '" + peek().text + "'", peek().pos);
        return f;
    }

private:
    using K = Formula::Kind;

    const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
    Token take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    bool is_until(const Token& t) const { return !guard_ && t.type == Token::Ident && t.text == "U"; }

    bool starts_operand(const Token& t) const {
        return t.type == Token::Not || t.type == Token::LParen || (t.type == Token::Ident && !is_until(t));
    }

    FormulaPtr parse_or() {
        FormulaPtr f = parse_and();
        while (peek().type == Token::Or) {
            take();
            f = Formula::make(K::Or, {f, parse_and()});
        }
        return f;
    }

    FormulaPtr parse_and() {
        FormulaPtr f = parse_until();
        while (peek().type == Token::And) {
            take();
            f = Formula::make(K::And, {f, parse_until()});
        }
        return f;
    }

    std::optional<int> parse_bound() {
        if (peek().type != Token::Leq) return std::nullopt;
        take();
        const Token n = take();
        if (n.type != Token::Number) throw ParseError("expected a step bound after '<='", n.pos);
        return std::stoi(n.text);
    }

    FormulaPtr parse_until() {
        FormulaPtr lhs = parse_unary();
        if (is_until(peek())) {
            take();
            const auto b = parse_bound();
            FormulaPtr rhs = parse_until();
            return Formula::make(K::Until, {lhs, rhs}, b);
        }
        return lhs;
    }

    FormulaPtr parse_unary() {
        const Token& t = peek();
        switch (t.type) {
            case Token::Not: take(); return Formula::make(K::Not, {parse_unary()});
            case Token::LParen: {
                take();
                FormulaPtr f = parse_or();
                if (peek().type != Token::RParen) throw ParseError("expected ')'", peek().pos);
                take();
                return f;
            }
            case Token::Ident: {
                if (is_until(t)) throw ParseError("'U' needs a left operand", t.pos);
                if (t.text == "true") {
                    take();
                    return Formula::make_true();
                }
                if (t.text == "false") {
                    take();
                    return Formula::make(K::Not, {Formula::make_true()});
                }
                if (!guard_ && (t.text == "X" || t.text == "F" || t.text == "G")) {
                    const Token& nx = peek(1);
                    const bool bounded = nx.type == Token::Leq;
                    if (bounded || starts_operand(nx)) {
                        const Token op = take();
                        std::optional<int> b;
                        if (bounded) {
                            if (op.text == "X") throw ParseError("'X' takes no bound", nx.pos);
                            b = parse_bound();
                        }
                        if (!starts_operand(peek())) throw ParseError("expected an operand", peek().pos);
                        FormulaPtr arg = parse_unary();
                        const K k = op.text == "X" ? K::Next : op.text == "F" ? K::Eventually : K::Always;
                        return Formula::make(k, {arg}, b);
                    }
                }
                return Formula::make_atom(take().text);
            }
            case Token::End: throw ParseError("unexpected end of formula", t.pos);
            default: throw ParseError("unexpected '" + t.text + "'", t.pos);
        }
    }

    std::vector<Token> toks_;
    std::size_t pos_ = 0;
    bool guard_;
};

bool is_positive(const FormulaPtr& f) {
    using K = Formula::Kind;
    switch (f->kind) {
        case K::True:
        case K::Atom: return true;
        case K::And:
        case K::Or: return is_positive(f->args[0]) && is_positive(f->args[1]);
        default: return false;
    }
}

FormulaPtr mk_not(FormulaPtr a) { return Formula::make(Formula::Kind::Not, {std::move(a)}); }
FormulaPtr mk_and(FormulaPtr a, FormulaPtr b) { return Formula::make(Formula::Kind::And, {std::move(a), std::move(b)}); }

void collect_atoms(const FormulaPtr& f, std::set<std::string>& out) {
    if (f->kind == Formula::Kind::Atom) out.insert(f->atom);
    for (const auto& a : f->args) collect_atoms(a, out);
}

}  // namespace

FormulaPtr parse_formula(const std::string& text) { return Parser(text, false).parse(); }

FormulaPtr parse_guard(const std::string& text) { return Parser(text, true).parse(); }

FormulaPtr bar_translate(const FormulaPtr& f, const std::vector<std::string>& labels) {
    using K = Formula::Kind;
    auto known = [&](const std::string& a) { return std::find(labels.begin(), labels.end(), a) != labels.end(); };
    if (f->kind == K::Atom) {
        if (!known(f->atom) && !(f->atom.rfind("neg_", 0) == 0 && known(f->atom.substr(4))))
            throw UnknownAtom("unknown atom '" + f->atom + "'");
        return f;
    }
    if (f->kind == K::Not && f->args[0]->kind == K::Atom) {
        const std::string& a = f->args[0]->atom;
        if (!known(a)) throw UnknownAtom("negated atom '" + a + "' is not a region label");
        return Formula::make_atom("neg_" + a);
    }
    std::vector<FormulaPtr> args;
    for (const auto& a : f->args) args.push_back(bar_translate(a, labels));
    return Formula::make(f->kind, args, f->bound);
}

bool eval_guard(const FormulaPtr& g, LabelSet letter, const std::vector<std::string>& atoms) {
    using K = Formula::Kind;
    switch (g->kind) {
        case K::True: return true;
        case K::Atom:
            for (std::size_t i = 0; i < atoms.size(); ++i)
                if (atoms[i] == g->atom) return (letter >> i) & 1;
            return false;
        case K::Not: return !eval_guard(g->args[0], letter, atoms);
        case K::And: return eval_guard(g->args[0], letter, atoms) && eval_guard(g->args[1], letter, atoms);
        case K::Or: return eval_guard(g->args[0], letter, atoms) || eval_guard(g->args[1], letter, atoms);
        default: throw UnsupportedFormula("temporal operator inside a DFA guard");
    }
}

int Dfa::step(int z, LabelSet letter) const {
    for (const auto& e : edges.at(z))
        if (eval_guard(e.guard, letter, atoms)) return e.target;
    throw PartialTransition("state " + std::to_string(z) + " has no transition for a letter");
}

bool Dfa::absorbing(int z) const {
    for (const auto& e : edges.at(z))
        if (e.target != z) return false;
    return true;
}

std::vector<bool> Dfa::dead_states() const {
    std::vector<bool> live(num_states, false);
    for (int z = 0; z < num_states; ++z) live[z] = accepting[z];
    for (bool changed = true; changed;) {
        changed = false;
        for (int z = 0; z < num_states; ++z) {
            if (live[z]) continue;
            for (const auto& e : edges[z])
                if (live[e.target]) {
                    live[z] = true;
                    changed = true;
                    break;
                }
        }
    }
    std::vector<bool> dead(num_states);
    for (int z = 0; z < num_states; ++z) dead[z] = !live[z];
    return dead;
}

void Dfa::check() const {
    if (num_states <= 0) throw FormatError("DFA has no states");
    if (initial < 0 || initial >= num_states) throw FormatError("initial state out of range");
    if (static_cast<int>(accepting.size()) != num_states || static_cast<int>(edges.size()) != num_states)
        throw FormatError("DFA tables do not match the state count");
    for (int z = 0; z < num_states; ++z) {
        std::set<std::string> used;
        for (const auto& e : edges[z]) {
            if (e.target < 0 || e.target >= num_states) throw FormatError("edge target out of range");
            collect_atoms(e.guard, used);
        }
        std::vector<int> bits;
        for (const auto& a : used) {
            auto it = std::find(atoms.begin(), atoms.end(), a);
            if (it == atoms.end()) throw FormatError("guard uses undeclared atom '" + a + "'");
            bits.push_back(static_cast<int>(it - atoms.begin()));
        }
        if (bits.size() > 20) throw FormatError("too many atoms in the guards of one state");
        // Guards only depend on the atoms they mention, so enumerating those is exhaustive.
        for (long mask = 0; mask < (1L << bits.size()); ++mask) {
            LabelSet letter = 0;
            for (std::size_t k = 0; k < bits.size(); ++k)
                if (mask >> k & 1) letter |= LabelSet{1} << bits[k];
            int hits = 0;
            for (const auto& e : edges[z]) hits += eval_guard(e.guard, letter, atoms) ? 1 : 0;
            if (hits == 0) throw PartialTransition("state " + std::to_string(z) + " is missing a transition");
            if (hits > 1) throw NondeterministicTransition("state " + std::to_string(z) + " has overlapping guards");
        }
    }
}

Dfa template_dfa(const FormulaPtr& f, const std::vector<std::string>& atoms) {
    using K = Formula::Kind;
    Dfa d;
    d.atoms = atoms;
    const FormulaPtr T = Formula::make_true();
    auto check_atoms = [&](const FormulaPtr& g) {
        std::set<std::string> used;
        collect_atoms(g, used);
        for (const auto& a : used)
            if (std::find(atoms.begin(), atoms.end(), a) == atoms.end()) throw UnknownAtom("unknown atom '" + a + "'");
    };
    if (f->kind == K::Always && f->bound && is_positive(f->args[0])) {
        const FormulaPtr A = f->args[0];
        check_atoms(A);
        d.num_states = 2;  // 0 pending (accepting), 1 reject
        d.accepting = {true, false};
        d.edges = {{{A, 0}, {mk_not(A), 1}}, {{T, 1}}};
        d.horizon = f->bound;
    } else if (f->kind == K::Eventually && is_positive(f->args[0])) {
        const FormulaPtr A = f->args[0];
        check_atoms(A);
        d.num_states = 2;  // 0 pending, 1 accept
        d.accepting = {false, true};
        d.edges = {{{A, 1}, {mk_not(A), 0}}, {{T, 1}}};
        d.horizon = f->bound;
    } else if (f->kind == K::Until && is_positive(f->args[0]) && is_positive(f->args[1])) {
        const FormulaPtr A = f->args[0], B = f->args[1];
        check_atoms(A);
        check_atoms(B);
        d.num_states = 3;  // 0 pending, 1 accept, 2 reject
        d.accepting = {false, true, false};
        d.edges = {{{B, 1}, {mk_and(A, mk_not(B)), 0}, {mk_and(mk_not(A), mk_not(B)), 2}}, {{T, 1}}, {{T, 2}}};
        d.horizon = f->bound;
    } else {
        throw UnsupportedFormula("formula '" + to_string(f) + "' does not match a supported template; supply a DFA file");
    }
    d.initial = 0;
    d.check();
    return d;
}

std::string write_dfa(const Dfa& dfa) {
    std::ostringstream os;
    os << "switchsynth-v1 dfa\n";
    os << "atoms";
    for (const auto& a : dfa.atoms) os << ' ' << a;
    os << "\nstates " << dfa.num_states << "\ninitial " << dfa.initial << "\naccepting";
    for (int z = 0; z < dfa.num_states; ++z)
        if (dfa.accepting[z]) os << ' ' << z;
    os << '\n';
    if (dfa.horizon) os << "horizon " << *dfa.horizon << '\n';
    for (int z = 0; z < dfa.num_states; ++z)
        for (const auto& e : dfa.edges[z]) os << "edge " << z << ' ' << e.target << ' ' << to_string(e.guard) << '\n';
    os << "end\n";
    return os.str();
}

Dfa read_dfa(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& msg) { throw FormatError("DFA line " + std::to_string(lineno) + ": " + msg); };
    bool header = false;
    Dfa d;
    d.num_states = -1;
    std::vector<std::pair<int, DfaEdge>> edges;
    std::vector<int> acc;
    bool have_initial = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (!header) {
            std::string kind;
            ls >> kind;
            if (key != "switchsynth-v1" || kind != "dfa") fail("expected header 'switchsynth-v1 dfa'");
            header = true;
            continue;
        }
        if (key == "atoms") {
            std::string a;
            while (ls >> a) d.atoms.push_back(a);
        } else if (key == "states") {
            if (!(ls >> d.num_states) || d.num_states <= 0) fail("bad state count");
        } else if (key == "initial") {
            if (!(ls >> d.initial)) fail("bad initial state");
            have_initial = true;
        } else if (key == "accepting") {
            int z;
            while (ls >> z) acc.push_back(z);
            if (!ls.eof()) fail("bad accepting list");
        } else if (key == "horizon") {
            int k;
            if (!(ls >> k) || k < 0) fail("bad horizon");
            d.horizon = k;
        } else if (key == "edge") {
            int z, t;
            if (!(ls >> z >> t)) fail("edge needs source and target");
            std::string rest;
            std::getline(ls, rest);
            try {
                edges.push_back({z, {parse_guard(rest), t}});
            } catch (const ParseError& e) {
                fail(std::string("bad guard: ") + e.what());
            }
        } else if (key == "end") {
            break;
        } else {
            fail("unknown keyword '" + key + "'");
        }
    }
    if (!header) throw FormatError("empty DFA file");
    if (d.num_states <= 0) throw FormatError("DFA file lacks a state count");
    if (!have_initial) throw FormatError("DFA file lacks an initial state");
    d.accepting.assign(d.num_states, false);
    for (int z : acc) {
        if (z < 0 || z >= d.num_states) throw FormatError("accepting state out of range");
        d.accepting[z] = true;
    }
    d.edges.assign(d.num_states, {});
    for (auto& [z, e] : edges) {
        if (z < 0 || z >= d.num_states) throw FormatError("edge source out of range");
        d.edges[z].push_back(e);
    }
    d.check();
    return d;
}

std::pair<int, bool> dfa_run(const Dfa& dfa, const std::vector<LabelSet>& trace) {
    int z = dfa.initial;
    for (LabelSet l : trace) z = dfa.step(z, l);
    return {z, dfa.accepting[z]};
}

}  // namespace switchsynth

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <sstream>

#include "switchsynth/parallel.hpp"
#include "switchsynth/pipeline.hpp"

using namespace switchsynth;

namespace {

enum Exit { kOk = 0, kModel = 2, kFormula = 3, kUnsupported = 4, kNumerical = 5 };

// Any failure while reading or building the model is exit 2 unless it is clearly numerical.
int exit_code(const std::exception& e, int fallback) {
    if (dynamic_cast<const UnsupportedOperation*>(&e)) return kUnsupported;
    if (dynamic_cast<const NonConvergence*>(&e) || dynamic_cast<const BuildError*>(&e) ||
        dynamic_cast<const InfeasibleRow*>(&e) || dynamic_cast<const UnderflowedFactor*>(&e))
        return kNumerical;
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const UnknownAtom*>(&e) ||
        dynamic_cast<const UnsupportedFormula*>(&e) || dynamic_cast<const NondeterministicTransition*>(&e) ||
        dynamic_cast<const PartialTransition*>(&e))
        return kFormula;
    return fallback;
}

struct Common {
    std::string model;
    std::string imdp;
    int threads = default_threads();
};

struct Loaded {
    ModelFile model;
    Imdp imdp;
    double build_seconds = 0.0;
};

Loaded load(const Common& c) {
    Loaded l;
    l.model = parse_model(read_text_file(c.model));
    const long long t0 = now_ns();
    if (!c.imdp.empty()) {
        l.imdp = read_imdp(read_text_file(c.imdp));
        if (l.imdp.num_actions() != static_cast<int>(l.model.system.modes.size()) || l.imdp.dim != l.model.system.dim())
            throw ModelError("imdp file does not match the model");
    } else {
        BuildOptions bo;
        bo.threads = c.threads;
        l.imdp = build_abstraction(l.model, bo);
    }
    l.build_seconds = seconds_since(t0);
    return l;
}

Dfa load_dfa(const std::string& formula, const std::string& dfa_path, const Imdp& imdp) {
    if (!dfa_path.empty()) {
        Dfa d = read_dfa(read_text_file(dfa_path));
        for (const auto& a : d.atoms)
            if (std::find(imdp.atoms.begin(), imdp.atoms.end(), a) == imdp.atoms.end())
                throw UnknownAtom("dfa atom '" + a + "' is not a model atom");
        return d;
    }
    if (formula.empty()) throw UnsupportedFormula("either --formula or --dfa is required");
    return formula_dfa(formula, imdp.atoms);
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") std::cout << text;
    else write_text_file(path, text);
}

void summary(const ResultsFile& r, const Imdp& imdp) {
    std::fprintf(stderr, "states %zu (+ sink), actions %d, eps_max %.6g, eps_med %.6g, eps_ave %.6g, %.3f s\n",
                 imdp.states.size(), imdp.num_actions(), r.metrics.eps_max, r.metrics.eps_med, r.metrics.eps_ave,
                 r.wall_time);
    if (imdp.stats.sink_fallback_max || imdp.stats.sink_fallback_min)
        std::fprintf(stderr, "sink bound fallbacks: max %d, min %d\n", imdp.stats.sink_fallback_max, imdp.stats.sink_fallback_min);
}

int run_guarded(int fallback, const std::function<void()>& fn) {
    try {
        fn();
        return kOk;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return exit_code(e, fallback);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Abstraction, synthesis, and verification for switched linear stochastic systems"};
    app.require_subcommand(1);
    int code = kOk;

    Common c_abs;
    std::string abs_out;
    auto* abs = app.add_subcommand("abstract", "Build the interval MDP abstraction of a model");
    abs->add_option("--model", c_abs.model, "Model file")->required();
    abs->add_option("--out", abs_out, "IMDP output file (default stdout)");
    abs->add_option("--threads", c_abs.threads, "Worker threads")->check(CLI::PositiveNumber);

    Common c_syn;
    std::string syn_formula, syn_dfa, syn_out, syn_strategy;
    double syn_tol = 1e-6;
    auto* syn = app.add_subcommand("synthesize", "Synthesize a switching strategy and its probability bounds");
    syn->add_option("--model", c_syn.model, "Model file")->required();
    syn->add_option("--imdp", c_syn.imdp, "Prebuilt IMDP file (skips the abstraction)");
    syn->add_option("--formula", syn_formula, "Specification, e.g. \"G<=2 X\" or \"!red U green\"");
    syn->add_option("--dfa", syn_dfa, "Automaton file, used instead of --formula");
    syn->add_option("--out", syn_out, "Results file (default stdout)");
    syn->add_option("--strategy", syn_strategy, "Strategy output file");
    syn->add_option("--tol", syn_tol, "Value iteration tolerance for unbounded formulas");
    syn->add_option("--threads", c_syn.threads, "Worker threads")->check(CLI::PositiveNumber);

    Common c_ver;
    std::string ver_formula, ver_dfa, ver_out, ver_mode = "pessimistic";
    auto* ver = app.add_subcommand("verify", "Bound the satisfaction probability over all switching strategies");
    ver->add_option("--model", c_ver.model, "Model file")->required();
    ver->add_option("--imdp", c_ver.imdp, "Prebuilt IMDP file");
    ver->add_option("--formula", ver_formula, "Specification");
    ver->add_option("--dfa", ver_dfa, "Automaton file");
    ver->add_option("--mode", ver_mode, "pessimistic (min over modes) or optimistic (max over modes)")
        ->check(CLI::IsMember({"pessimistic", "optimistic"}));
    ver->add_option("--out", ver_out, "Results file (default stdout)");
    ver->add_option("--threads", c_ver.threads, "Worker threads")->check(CLI::PositiveNumber);

    Common c_sim;
    std::string sim_strategy, sim_out, sim_mode0;
    std::vector<double> sim_x0;
    long sim_runs = 1000;
    std::uint64_t sim_seed = 1;
    long sim_max_steps = 10000;
    bool sim_exact = false;
    auto* sim = app.add_subcommand("simulate", "Monte Carlo estimate of the satisfaction probability under a strategy");
    sim->add_option("--model", c_sim.model, "Model file")->required();
    sim->add_option("--imdp", c_sim.imdp, "IMDP file the strategy was computed on (rebuilt from the model if absent)");
    sim->add_option("--strategy", sim_strategy, "Strategy file")->required();
    sim->add_option("--x0", sim_x0, "Initial state (default: center of X)");
    sim->add_option("--mode0", sim_mode0, "Mode whose grid locates the initial state (default: first)");
    sim->add_option("-n,--runs", sim_runs, "Number of runs")->check(CLI::NonNegativeNumber);
    sim->add_option("--seed", sim_seed, "Random seed");
    sim->add_option("--max-steps", sim_max_steps, "Step cap for unbounded formulas");
    sim->add_flag("--exact-labels", sim_exact, "Judge acceptance on actual region membership");
    sim->add_option("--out", sim_out, "Report file (default stdout)");
    sim->add_option("--threads", c_sim.threads, "Worker threads")->check(CLI::PositiveNumber);

    std::string hm_results, hm_mode, hm_out;
    auto* hm = app.add_subcommand("export-heatmap", "Write x_center y_center p_lo rows for one mode of a 2D results file");
    hm->add_option("--results", hm_results, "Results file")->required();
    hm->add_option("--mode", hm_mode, "Mode name or index (default: first)");
    hm->add_option("--out", hm_out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (*abs) {
        code = run_guarded(kModel, [&] {
            const Loaded l = load(c_abs);
            emit(abs_out, write_imdp(l.imdp));
            std::fprintf(stderr, "states %zu (+ sink), entries %ld, %.3f s\n", l.imdp.states.size(),
                         static_cast<long>(l.imdp.target.size()), l.build_seconds);
        });
    } else if (*syn) {
        Loaded l;
        code = run_guarded(kModel, [&] { l = load(c_syn); });
        if (code) return code;
        Dfa dfa;
        code = run_guarded(kFormula, [&] { dfa = load_dfa(syn_formula, syn_dfa, l.imdp); });
        if (code) return code;
        code = run_guarded(kNumerical, [&] {
            const long long t0 = now_ns();
            ViOptions vo;
            vo.tol = syn_tol;
            vo.threads = c_syn.threads;
            const SynthesisResult res = synthesize(l.imdp, dfa, vo);
            if (!res.converged) std::fprintf(stderr, "warning: value iteration hit the sweep cap\n");
            ResultsFile r = make_results(l.imdp, res.bounds, syn_dfa.empty() ? syn_formula : "dfa:" + syn_dfa,
                                         l.build_seconds + seconds_since(t0));
            emit(syn_out, write_results(r));
            if (!syn_strategy.empty())
                write_text_file(syn_strategy, write_strategy({dfa, res.strategy, res.product_under.size()}));
            summary(r, l.imdp);
        });
    } else if (*ver) {
        Loaded l;
        code = run_guarded(kModel, [&] { l = load(c_ver); });
        if (code) return code;
        Dfa dfa;
        code = run_guarded(kFormula, [&] { dfa = load_dfa(ver_formula, ver_dfa, l.imdp); });
        if (code) return code;
        code = run_guarded(kNumerical, [&] {
            const long long t0 = now_ns();
            ViOptions vo;
            vo.threads = c_ver.threads;
            const ProductImdp PU = product(l.imdp, dfa, Labeling::Under);
            const ProductImdp PO = product(l.imdp, dfa, Labeling::Over);
            const VerifyResult vr =
                verify(PU, PO, ver_mode == "optimistic" ? VerifyMode::Optimistic : VerifyMode::Pessimistic, vo);
            ResultsFile r = make_results(l.imdp, vr.bounds, ver_dfa.empty() ? ver_formula : "dfa:" + ver_dfa,
                                         l.build_seconds + seconds_since(t0));
            emit(ver_out, write_results(r));
            summary(r, l.imdp);
        });
    } else if (*sim) {
        Loaded l;
        StrategyFile sf;
        code = run_guarded(kModel, [&] {
            l = load(c_sim);
            sf = read_strategy(read_text_file(sim_strategy));
        });
        if (code) return code;
        code = run_guarded(kNumerical, [&] {
            const HybridSystem H = l.model.discrete_system();
            const ProductImdp P = product(l.imdp, sf.dfa, Labeling::Under);
            if (P.size() != sf.product_states) throw ModelError("strategy does not match the abstraction");
            const SwitchingController ctl(l.imdp, sf.dfa, P, sf.strategy);
            Vec x0 = H.X.center();
            if (!sim_x0.empty()) {
                if (static_cast<int>(sim_x0.size()) != H.dim()) throw ModelError("--x0 has the wrong dimension");
                x0 = Eigen::Map<const Vec>(sim_x0.data(), H.dim());
            }
            int mode0 = 0;
            if (!sim_mode0.empty()) {
                auto it = std::find(l.imdp.actions.begin(), l.imdp.actions.end(), sim_mode0);
                if (it == l.imdp.actions.end()) throw ModelError("unknown mode " + sim_mode0);
                mode0 = static_cast<int>(it - l.imdp.actions.begin());
            }
            std::vector<char> ok(static_cast<std::size_t>(sim_runs), 0);
            parallel_for(sim_runs, c_sim.threads, [&](long r) {
                ok[r] = simulate(H, ctl, x0, mode0, sf.dfa.horizon, sim_seed, static_cast<std::uint64_t>(r), sim_max_steps,
                                 false, sim_exact)
                            .satisfied;
            });
            long succ = 0;
            for (char o : ok) succ += o;
            const WilsonInterval w = wilson(succ, sim_runs);
            std::ostringstream os;
            os << "switchsynth-v1 simulation\nseed " << sim_seed << "\nruns " << sim_runs << "\nx0";
            for (Eigen::Index i = 0; i < x0.size(); ++i) os << ' ' << fmt_double(x0(i));
            os << "\nmode0 " << l.imdp.actions[mode0] << "\n";
            if (sim_runs > 0) {
                os << "successes " << succ << "\nfrequency " << fmt_double(static_cast<double>(succ) / sim_runs)
                   << "\nwilson99 " << fmt_double(w.lo) << ' ' << fmt_double(w.hi) << "\n";
            }
            os << "end\n";
            emit(sim_out, os.str());
        });
    } else if (*hm) {
        code = run_guarded(kModel, [&] {
            const ResultsFile r = read_results(read_text_file(hm_results));
            int mode = 0;
            if (!hm_mode.empty()) {
                auto it = std::find(r.mode_names.begin(), r.mode_names.end(), hm_mode);
                if (it != r.mode_names.end()) mode = static_cast<int>(it - r.mode_names.begin());
                else mode = std::stoi(hm_mode);
            }
            emit(hm_out, heatmap(r, mode));
        });
    }
    return code;
}

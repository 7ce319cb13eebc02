#include "switchsynth/pipeline.hpp"

#include <chrono>

namespace switchsynth {

std::vector<std::string> region_labels(const std::vector<std::string>& atoms) {
    return {atoms.begin(), atoms.begin() + static_cast<std::ptrdiff_t>(atoms.size() / 2)};
}

Dfa formula_dfa(const std::string& formula, const std::vector<std::string>& atoms) {
    const FormulaPtr f = parse_formula(formula);
    return template_dfa(bar_translate(f, region_labels(atoms)), atoms);
}

Imdp build_abstraction(const ModelFile& mf, const BuildOptions& opt) {
    if (mf.continuous()) {
        const CtSystem ct = mf.ct_system();
        const HybridSystem H = ct.sampled();
        return ct_safety_imdp(ct, discretize(H, mf.disc), opt);
    }
    return build_imdp(mf.system, discretize(mf.system, mf.disc), opt);
}

long long now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

double seconds_since(long long start_ns) { return 1e-9 * static_cast<double>(now_ns() - start_ns); }

}  // namespace switchsynth

#pragma once

#include <string>

#include "switchsynth/io.hpp"

namespace switchsynth {

// Region labels are the first half of the atom list (the rest are their complements).
std::vector<std::string> region_labels(const std::vector<std::string>& atoms);

// Parses, replaces negated region atoms by complement atoms, and builds the template automaton.
Dfa formula_dfa(const std::string& formula, const std::vector<std::string>& atoms);

// Grid and abstraction for a model; continuous models go through the bridge bounds.
Imdp build_abstraction(const ModelFile& mf, const BuildOptions& opt = {});

double seconds_since(long long start_ns);
long long now_ns();

}  // namespace switchsynth

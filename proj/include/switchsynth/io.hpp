#pragma once

#include <optional>
#include <string>
#include <vector>

#include "switchsynth/bridge.hpp"
#include "switchsynth/synthesis.hpp"

namespace switchsynth {

// Text formats. Every file starts with "switchsynth-v1 <kind>"; '#' starts a comment; floats are written
// with 17 significant digits so that a write/read cycle is exact.

struct ModelFile {
    HybridSystem system;  // for continuous models the mode matrices are the drift and diffusion
    DiscretizationSpec disc;
    std::optional<double> dt;  // set for continuous models

    bool continuous() const { return dt.has_value(); }
    CtSystem ct_system() const;
    // The discrete-time system used for the abstraction (sampled when continuous).
    HybridSystem discrete_system() const;
};

// A region named "X" covering the safe set is added unless the file declares one.
ModelFile parse_model(const std::string& text);
std::string write_model(const ModelFile& m);

std::string write_imdp(const Imdp& imdp);
Imdp read_imdp(const std::string& text);

struct StrategyFile {
    Dfa dfa;
    Strategy strategy;
    int product_states = 0;
};

std::string write_strategy(const StrategyFile& s);
StrategyFile read_strategy(const std::string& text);

struct ResultRecord {
    int state = 0;
    int mode = 0;
    double p_lo = 0.0;
    double p_hi = 0.0;
    int action = -1;
    double volume = 0.0;
    Mat vertices;  // columns
};

struct ResultsFile {
    std::string formula;
    std::optional<std::uint64_t> seed;
    ErrorMetrics metrics;
    double wall_time = 0.0;
    int sink_fallback_max = 0;
    int sink_fallback_min = 0;
    int nonconverged_max = 0;
    std::vector<std::string> mode_names;
    std::vector<ResultRecord> records;  // non-sink states
};

ResultsFile make_results(const Imdp& imdp, const StateBounds& sb, const std::string& formula, double wall_time);
std::string write_results(const ResultsFile& r);
ResultsFile read_results(const std::string& text);

// "x_center y_center p_lo" per cell of the given mode. Throws UnsupportedOperation unless m = 2.
struct UnsupportedOperation : Error {
    using Error::Error;
};
std::string heatmap(const ResultsFile& r, int mode);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

std::string fmt_double(double v);

}  // namespace switchsynth

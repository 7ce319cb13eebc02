#include "switchsynth/io.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace switchsynth {

namespace {

using Line = std::vector<std::string>;

struct Lines {
    std::vector<Line> lines;
    std::vector<int> numbers;  // 1-based source line
    std::size_t pos = 0;

    bool done() const { return pos >= lines.size(); }
    const Line& peek() const { return lines[pos]; }
    int lineno() const { return done() ? (numbers.empty() ? 0 : numbers.back()) : numbers[pos]; }
};

Lines split_lines(const std::string& text) {
    Lines L;
    std::istringstream in(text);
    std::string raw;
    int n = 0;
    while (std::getline(in, raw)) {
        ++n;
        if (auto h = raw.find('#'); h != std::string::npos) raw.erase(h);
        std::istringstream ls(raw);
        Line toks;
        for (std::string t; ls >> t;) toks.push_back(t);
        if (toks.empty()) continue;
        L.lines.push_back(std::move(toks));
        L.numbers.push_back(n);
    }
    return L;
}

template <class E>
[[noreturn]] void fail(const Lines& L, const std::string& msg) {
    throw E("line " + std::to_string(L.lineno()) + ": " + msg);
}

template <class E>
double num(const Lines& L, const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE) fail<E>(L, "not a number: '" + s + "'");
    return v;
}

template <class E>
long integer(const Lines& L, const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE) fail<E>(L, "not an integer: '" + s + "'");
    return v;
}

template <class E>
std::uint64_t uinteger(const Lines& L, const std::string& s) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || errno == ERANGE) fail<E>(L, "not an unsigned integer: '" + s + "'");
    return v;
}

// Reads count numbers from line tokens starting at index first.
template <class E>
Vec numbers(const Lines& L, const Line& ln, std::size_t first, std::size_t count) {
    if (ln.size() != first + count)
        fail<E>(L, "expected " + std::to_string(count) + " values after '" + ln[0] + "', got " +
                       std::to_string(ln.size() >= first ? ln.size() - first : 0));
    Vec v(static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) v(static_cast<Eigen::Index>(i)) = num<E>(L, ln[first + i]);
    return v;
}

template <class E>
Mat row_major(const Vec& v, int rows, int cols) {
    Mat M(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) M(i, j) = v(i * cols + j);
    return M;
}

template <class E>
void expect_header(Lines& L, const std::string& kind) {
    if (L.done() || L.peek().size() != 2 || L.peek()[0] != "switchsynth-v1" || L.peek()[1] != kind)
        fail<E>(L, "expected header 'switchsynth-v1 " + kind + "'");
    ++L.pos;
}

template <class E>
const Line& next(Lines& L, const std::string& keyword) {
    if (L.done()) fail<E>(L, "unexpected end of file, expected '" + keyword + "'");
    const Line& ln = L.lines[L.pos];
    if (ln[0] != keyword) fail<E>(L, "expected '" + keyword + "', got '" + ln[0] + "'");
    ++L.pos;
    return ln;
}

void put(std::ostringstream& os, const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os << ' ' << fmt_double(v(i));
}

void put(std::ostringstream& os, const Mat& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j) os << ' ' << fmt_double(M(i, j));
}

}  // namespace

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!out) throw Error("write failed: " + path);
}

CtSystem ModelFile::ct_system() const {
    if (!dt) throw ModelError("model is not continuous");
    CtSystem ct;
    ct.X = system.X;
    ct.regions = system.regions;
    for (const auto& md : system.modes) {
        ct.mode_names.push_back(md.name);
        ct.modes.push_back({md.dyn.F, md.dyn.G, md.dyn.cov_w, *dt});
    }
    return ct;
}

HybridSystem ModelFile::discrete_system() const { return dt ? ct_system().sampled() : system; }

ModelFile parse_model(const std::string& text) {
    using E = ModelError;
    Lines L = split_lines(text);
    expect_header<E>(L, "model");
    ModelFile mf;
    int m = 0;
    struct RawMode {
        std::string name;
        Vec F, G;
        std::optional<Vec> W;
    };
    std::vector<RawMode> raw;
    std::optional<Vec> noise, lo, hi;
    std::optional<double> dx;
    while (!L.done()) {
        const Line ln = L.peek();
        const std::string& k = ln[0];
        if (k == "dimension") {
            if (ln.size() != 2) fail<E>(L, "dimension takes one value");
            m = static_cast<int>(integer<E>(L, ln[1]));
            if (m < 1) fail<E>(L, "dimension must be positive");
            ++L.pos;
        } else if (k == "mode") {
            if (m == 0) fail<E>(L, "dimension must precede modes");
            if (ln.size() != 2) fail<E>(L, "mode takes a name");
            RawMode rm;
            rm.name = ln[1];
            ++L.pos;
            while (true) {
                if (L.done()) fail<E>(L, "unterminated mode block");
                const Line b = L.peek();
                ++L.pos;
                if (b[0] == "end") break;
                if (b[0] == "F") {
                    rm.F = numbers<E>(L, b, 1, static_cast<std::size_t>(m) * m);
                } else if (b[0] == "G") {
                    if ((b.size() - 1) == 0 || (b.size() - 1) % m != 0) fail<E>(L, "G needs a multiple of m values");
                    rm.G = numbers<E>(L, b, 1, b.size() - 1);
                } else if (b[0] == "W") {
                    rm.W = numbers<E>(L, b, 1, b.size() - 1);
                } else {
                    fail<E>(L, "unknown mode field '" + b[0] + "'");
                }
            }
            if (rm.F.size() == 0 || rm.G.size() == 0) fail<E>(L, "mode " + rm.name + " needs F and G");
            raw.push_back(std::move(rm));
        } else if (k == "noise_cov") {
            noise = numbers<E>(L, ln, 1, ln.size() - 1);
            ++L.pos;
        } else if (k == "safe_lower") {
            lo = numbers<E>(L, ln, 1, static_cast<std::size_t>(m));
            ++L.pos;
        } else if (k == "safe_upper") {
            hi = numbers<E>(L, ln, 1, static_cast<std::size_t>(m));
            ++L.pos;
        } else if (k == "region") {
            if (ln.size() < 3) fail<E>(L, "region needs a label and a kind");
            Region r;
            r.label = ln[1];
            if (ln[2] == "box") {
                const Vec v = numbers<E>(L, ln, 3, 2 * static_cast<std::size_t>(m));
                const Vec rl = v.head(m), ru = v.tail(m);
                if ((ru.array() <= rl.array()).any()) fail<E>(L, "region box needs lower < upper");
                r.poly = Polytope::from_box(HyperRectangle(rl, ru));
                ++L.pos;
            } else if (ln[2] == "halfspaces") {
                if (ln.size() != 4) fail<E>(L, "region halfspaces takes a row count");
                const long n = integer<E>(L, ln[3]);
                if (n < 1) fail<E>(L, "halfspace count must be positive");
                ++L.pos;
                Mat H(n, m);
                Vec b(n);
                for (long i = 0; i < n; ++i) {
                    if (L.done()) fail<E>(L, "missing halfspace rows");
                    const Line row = L.peek();
                    const Vec v = numbers<E>(L, row, 0, static_cast<std::size_t>(m) + 1);
                    H.row(i) = v.head(m).transpose();
                    b(i) = v(m);
                    ++L.pos;
                }
                try {
                    r.poly = Polytope::from_halfspaces(H, b);
                } catch (const GeometryError& e) {
                    fail<E>(L, "region " + r.label + ": " + e.what());
                }
            } else {
                fail<E>(L, "unknown region kind '" + ln[2] + "'");
            }
            mf.system.regions.push_back(std::move(r));
        } else if (k == "discretization") {
            if (ln.size() != 2 && ln.size() != 4) fail<E>(L, "discretization takes dx or dx dx_min dx_max");
            dx = num<E>(L, ln[1]);
            mf.disc.dx = *dx;
            if (ln.size() == 4) {
                mf.disc.dx_min = num<E>(L, ln[2]);
                mf.disc.dx_max = num<E>(L, ln[3]);
            }
            ++L.pos;
        } else if (k == "refine_regions") {
            if (ln.size() != 2) fail<E>(L, "refine_regions takes 0 or 1");
            mf.disc.refine_regions = integer<E>(L, ln[1]) != 0;
            ++L.pos;
        } else if (k == "continuous") {
            if (ln.size() != 2) fail<E>(L, "continuous takes the sampling time");
            mf.dt = num<E>(L, ln[1]);
            if (!(*mf.dt > 0)) fail<E>(L, "sampling time must be positive");
            ++L.pos;
        } else {
            fail<E>(L, "unknown keyword '" + k + "'");
        }
    }
    if (m == 0) throw E("model: missing dimension");
    if (raw.empty()) throw E("model: no modes");
    if (!lo || !hi) throw E("model: missing safe_lower/safe_upper");
    if ((hi->array() <= lo->array()).any()) throw E("model: safe set needs lower < upper");
    if (!dx || !(*dx > 0)) throw E("model: missing or non-positive discretization step");
    mf.system.X = HyperRectangle(*lo, *hi);
    for (const auto& rm : raw) {
        Mode md;
        md.name = rm.name;
        const int r = static_cast<int>(rm.G.size() / m);
        md.dyn.F = row_major<E>(rm.F, m, m);
        md.dyn.G = row_major<E>(rm.G, m, r);
        const Vec* W = rm.W ? &*rm.W : noise ? &*noise : nullptr;
        if (W) {
            if (W->size() != static_cast<Eigen::Index>(r) * r)
                throw E("model: mode " + rm.name + " noise covariance must be " + std::to_string(r) + "x" + std::to_string(r));
            md.dyn.cov_w = row_major<E>(*W, r, r);
        } else {
            md.dyn.cov_w = Mat::Identity(r, r);
        }
        if ((md.dyn.cov_w - md.dyn.cov_w.transpose()).cwiseAbs().maxCoeff() > 1e-12)
            throw E("model: mode " + rm.name + " noise covariance is not symmetric");
        mf.system.modes.push_back(std::move(md));
    }
    bool has_x = false;
    for (const auto& r : mf.system.regions) has_x = has_x || r.label == "X";
    if (!has_x) mf.system.regions.push_back({"X", Polytope::from_box(mf.system.X)});
    mf.system.check();
    return mf;
}

std::string write_model(const ModelFile& mf) {
    const HybridSystem& H = mf.system;
    std::ostringstream os;
    os << "switchsynth-v1 model\n";
    os << "dimension " << H.dim() << "\n";
    for (const auto& md : H.modes) {
        os << "mode " << md.name << "\nF";
        put(os, md.dyn.F);
        os << "\nG";
        put(os, md.dyn.G);
        os << "\nW";
        put(os, md.dyn.cov_w);
        os << "\nend\n";
    }
    os << "safe_lower";
    put(os, H.X.lower);
    os << "\nsafe_upper";
    put(os, H.X.upper);
    os << "\n";
    for (const auto& r : H.regions) {
        if (!r.poly.halfspaces) throw Error("write_model: region without halfspaces");
        const auto& hs = *r.poly.halfspaces;
        os << "region " << r.label << " halfspaces " << hs.H.rows() << "\n";
        for (Eigen::Index i = 0; i < hs.H.rows(); ++i) {
            for (Eigen::Index j = 0; j < hs.H.cols(); ++j) os << (j ? " " : "") << fmt_double(hs.H(i, j));
            os << ' ' << fmt_double(hs.b(i)) << "\n";
        }
    }
    os << "discretization " << fmt_double(mf.disc.dx);
    if (mf.disc.dx_min && mf.disc.dx_max) os << ' ' << fmt_double(*mf.disc.dx_min) << ' ' << fmt_double(*mf.disc.dx_max);
    os << "\nrefine_regions " << (mf.disc.refine_regions ? 1 : 0) << "\n";
    if (mf.dt) os << "continuous " << fmt_double(*mf.dt) << "\n";
    return os.str();
}

std::string write_imdp(const Imdp& imdp) {
    const int m = imdp.dim;
    std::ostringstream os;
    os << "switchsynth-v1 imdp\n";
    os << "dimension " << m << "\n";
    os << "actions " << imdp.num_actions();
    for (const auto& a : imdp.actions) os << ' ' << a;
    os << "\natoms " << imdp.atoms.size();
    for (const auto& a : imdp.atoms) os << ' ' << a;
    os << "\nstates " << imdp.states.size() << "\n";
    for (std::size_t a = 0; a < imdp.grids.size(); ++a) {
        const ModeGrid& g = imdp.grids[a];
        os << "grid " << a << " " << g.first << " " << g.count << " " << (g.tiles_hull ? 1 : 0) << "\n";
        os << "T";
        put(os, g.w.T);
        os << "\nT_inv";
        put(os, g.w.T_inv);
        os << "\nlambda";
        put(os, g.w.lambda);
        os << "\nV";
        put(os, g.w.V);
        os << "\nwhull";
        put(os, g.whull.lower);
        put(os, g.whull.upper);
        os << "\nstep";
        put(os, g.step);
        os << "\n";
    }
    for (std::size_t s = 0; s < imdp.states.size(); ++s) {
        const Cell& c = imdp.states[s];
        os << "state " << s << ' ' << c.mode << ' ' << (c.boundary ? 1 : 0) << ' ' << imdp.labels_under[s] << ' '
           << imdp.labels_over[s];
        put(os, c.wrect.lower);
        put(os, c.wrect.upper);
        put(os, c.cell.base);
        put(os, c.cell.generators);
        os << "\n";
    }
    const int S = imdp.num_states(), A = imdp.num_actions();
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const RowView r = imdp.row(s, a);
            os << "row " << s << ' ' << a << ' ' << r.size;
            for (int k = 0; k < r.size; ++k) os << ' ' << r.target[k] << ' ' << fmt_double(r.lo[k]) << ' ' << fmt_double(r.hi[k]);
            os << "\n";
        }
    const BuildStats& st = imdp.stats;
    os << "stats " << st.pruned_entries << ' ' << st.kept_entries << ' ' << st.sink_fallback_max << ' '
       << st.sink_fallback_min << ' ' << st.exact_tiling_rows << ' ' << st.nonconverged_max << ' ' << st.boundary_cells
       << "\nend\n";
    return os.str();
}

Imdp read_imdp(const std::string& text) {
    using E = FormatError;
    Lines L = split_lines(text);
    expect_header<E>(L, "imdp");
    Imdp imdp;
    {
        const Line& ln = next<E>(L, "dimension");
        if (ln.size() != 2) fail<E>(L, "dimension takes one value");
        imdp.dim = static_cast<int>(integer<E>(L, ln[1]));
        if (imdp.dim < 1) fail<E>(L, "dimension must be positive");
    }
    const int m = imdp.dim;
    auto named_list = [&](const std::string& key) {
        const Line& ln = next<E>(L, key);
        if (ln.size() < 2) fail<E>(L, key + " needs a count");
        const long n = integer<E>(L, ln[1]);
        if (n < 0 || ln.size() != static_cast<std::size_t>(n) + 2) fail<E>(L, key + " count does not match");
        return std::vector<std::string>(ln.begin() + 2, ln.end());
    };
    imdp.actions = named_list("actions");
    imdp.atoms = named_list("atoms");
    if (imdp.actions.empty()) fail<E>(L, "no actions");
    long N = 0;
    {
        const Line& ln = next<E>(L, "states");
        if (ln.size() != 2) fail<E>(L, "states takes a count");
        N = integer<E>(L, ln[1]);
        if (N < 0) fail<E>(L, "negative state count");
    }
    const std::size_t mm = static_cast<std::size_t>(m) * m;
    for (std::size_t a = 0; a < imdp.actions.size(); ++a) {
        const Line& ln = next<E>(L, "grid");
        if (ln.size() != 5 || integer<E>(L, ln[1]) != static_cast<long>(a)) fail<E>(L, "malformed grid line");
        ModeGrid g;
        g.first = static_cast<int>(integer<E>(L, ln[2]));
        g.count = static_cast<int>(integer<E>(L, ln[3]));
        g.tiles_hull = integer<E>(L, ln[4]) != 0;
        g.w.T = row_major<E>(numbers<E>(L, next<E>(L, "T"), 1, mm), m, m);
        g.w.T_inv = row_major<E>(numbers<E>(L, next<E>(L, "T_inv"), 1, mm), m, m);
        g.w.lambda = numbers<E>(L, next<E>(L, "lambda"), 1, m);
        g.w.V = row_major<E>(numbers<E>(L, next<E>(L, "V"), 1, mm), m, m);
        const Vec wh = numbers<E>(L, next<E>(L, "whull"), 1, 2 * static_cast<std::size_t>(m));
        g.whull = HyperRectangle(wh.head(m), wh.tail(m));
        g.step = numbers<E>(L, next<E>(L, "step"), 1, m);
        imdp.grids.push_back(std::move(g));
    }
    imdp.states.resize(N);
    imdp.labels_under.assign(N + 1, 0);
    imdp.labels_over.assign(N + 1, 0);
    for (long s = 0; s < N; ++s) {
        const Line& ln = next<E>(L, "state");
        const std::size_t nvals = 3 * static_cast<std::size_t>(m) + mm;
        if (ln.size() != 6 + nvals) fail<E>(L, "malformed state line");
        if (integer<E>(L, ln[1]) != s) fail<E>(L, "states out of order");
        Cell& c = imdp.states[s];
        c.mode = static_cast<int>(integer<E>(L, ln[2]));
        if (c.mode < 0 || c.mode >= imdp.num_actions()) fail<E>(L, "state mode out of range");
        c.boundary = integer<E>(L, ln[3]) != 0;
        imdp.labels_under[s] = uinteger<E>(L, ln[4]);
        imdp.labels_over[s] = uinteger<E>(L, ln[5]);
        const Vec v = numbers<E>(L, ln, 6, nvals);
        c.wrect = HyperRectangle(v.segment(0, m), v.segment(m, m));
        c.cell.base = v.segment(2 * m, m);
        c.cell.generators = row_major<E>(v.segment(3 * m, static_cast<Eigen::Index>(mm)), m, m);
    }
    const int S = static_cast<int>(N) + 1, A = imdp.num_actions();
    imdp.row_ptr.assign(static_cast<std::size_t>(S) * A + 1, 0);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const Line& ln = next<E>(L, "row");
            if (ln.size() < 4 || integer<E>(L, ln[1]) != s || integer<E>(L, ln[2]) != a) fail<E>(L, "rows out of order");
            const long k = integer<E>(L, ln[3]);
            if (k < 0 || ln.size() != 4 + 3 * static_cast<std::size_t>(k)) fail<E>(L, "row entry count does not match");
            for (long e = 0; e < k; ++e) {
                const long t = integer<E>(L, ln[4 + 3 * e]);
                if (t < 0 || t >= S) fail<E>(L, "row target out of range");
                imdp.target.push_back(static_cast<int>(t));
                imdp.lo.push_back(num<E>(L, ln[5 + 3 * e]));
                imdp.hi.push_back(num<E>(L, ln[6 + 3 * e]));
            }
            const std::size_t r = static_cast<std::size_t>(s) * A + a;
            imdp.row_ptr[r + 1] = imdp.row_ptr[r] + k;
        }
    {
        const Line& ln = next<E>(L, "stats");
        if (ln.size() != 8) fail<E>(L, "malformed stats line");
        BuildStats& st = imdp.stats;
        st.pruned_entries = integer<E>(L, ln[1]);
        st.kept_entries = integer<E>(L, ln[2]);
        st.sink_fallback_max = static_cast<int>(integer<E>(L, ln[3]));
        st.sink_fallback_min = static_cast<int>(integer<E>(L, ln[4]));
        st.exact_tiling_rows = static_cast<int>(integer<E>(L, ln[5]));
        st.nonconverged_max = static_cast<int>(integer<E>(L, ln[6]));
        st.boundary_cells = static_cast<int>(integer<E>(L, ln[7]));
    }
    next<E>(L, "end");
    if (!L.done()) fail<E>(L, "trailing content after end");
    return imdp;
}

std::string write_strategy(const StrategyFile& s) {
    std::ostringstream os;
    os << "switchsynth-v1 strategy\n";
    os << "product_states " << s.product_states << "\n";
    os << "time_indexed " << (s.strategy.time_indexed ? 1 : 0) << "\n";
    os << "layers " << s.strategy.table.size() << "\n";
    for (const auto& layer : s.strategy.table) {
        os << "layer";
        for (int a : layer) os << ' ' << a;
        os << "\n";
    }
    os << "dfa\n" << write_dfa(s.dfa);
    return os.str();
}

StrategyFile read_strategy(const std::string& text) {
    using E = FormatError;
    const auto cut = text.find("\ndfa\n");
    if (cut == std::string::npos) throw E("strategy: missing embedded dfa section");
    Lines L = split_lines(text.substr(0, cut + 1));
    expect_header<E>(L, "strategy");
    StrategyFile sf;
    auto single = [&](const std::string& key) {
        const Line& ln = next<E>(L, key);
        if (ln.size() != 2) fail<E>(L, key + " takes one value");
        return integer<E>(L, ln[1]);
    };
    sf.product_states = static_cast<int>(single("product_states"));
    sf.strategy.time_indexed = single("time_indexed") != 0;
    const long layers = single("layers");
    if (layers < 1) fail<E>(L, "strategy needs at least one layer");
    for (long l = 0; l < layers; ++l) {
        const Line& ln = next<E>(L, "layer");
        if (ln.size() != static_cast<std::size_t>(sf.product_states) + 1) fail<E>(L, "layer size does not match product_states");
        std::vector<int> row(sf.product_states);
        for (int i = 0; i < sf.product_states; ++i) row[i] = static_cast<int>(integer<E>(L, ln[i + 1]));
        sf.strategy.table.push_back(std::move(row));
    }
    if (!L.done()) fail<E>(L, "unexpected content before dfa section");
    sf.dfa = read_dfa(text.substr(cut + 5));
    return sf;
}

ResultsFile make_results(const Imdp& imdp, const StateBounds& sb, const std::string& formula, double wall_time) {
    ResultsFile r;
    r.formula = formula;
    r.metrics = error_metrics(imdp, sb);
    r.wall_time = wall_time;
    r.sink_fallback_max = imdp.stats.sink_fallback_max;
    r.sink_fallback_min = imdp.stats.sink_fallback_min;
    r.nonconverged_max = imdp.stats.nonconverged_max;
    r.mode_names = imdp.actions;
    for (std::size_t s = 0; s < imdp.states.size(); ++s) {
        ResultRecord rec;
        rec.state = static_cast<int>(s);
        rec.mode = imdp.states[s].mode;
        rec.p_lo = sb.bounds[s].lo;
        rec.p_hi = sb.bounds[s].hi;
        rec.action = sb.action[s];
        rec.volume = volume(imdp.states[s].cell);
        rec.vertices = imdp.states[s].cell.vertices();
        r.records.push_back(std::move(rec));
    }
    return r;
}

std::string write_results(const ResultsFile& r) {
    std::ostringstream os;
    os << "switchsynth-v1 results\n";
    os << "formula " << (r.formula.empty() ? "-" : r.formula) << "\n";
    os << "seed " << (r.seed ? std::to_string(*r.seed) : std::string("none")) << "\n";
    os << "modes " << r.mode_names.size();
    for (const auto& n : r.mode_names) os << ' ' << n;
    os << "\nstates " << r.records.size() << "\n";
    os << "eps_max " << fmt_double(r.metrics.eps_max) << "\n";
    os << "eps_med " << fmt_double(r.metrics.eps_med) << "\n";
    os << "eps_ave " << fmt_double(r.metrics.eps_ave) << "\n";
    os << "wall_time " << fmt_double(r.wall_time) << "\n";
    os << "sink_fallback_max " << r.sink_fallback_max << "\n";
    os << "sink_fallback_min " << r.sink_fallback_min << "\n";
    os << "nonconverged_max " << r.nonconverged_max << "\n";
    for (const auto& rec : r.records) {
        os << "record " << rec.state << ' ' << rec.mode << ' ' << fmt_double(rec.p_lo) << ' ' << fmt_double(rec.p_hi) << ' '
           << rec.action << ' ' << fmt_double(rec.volume) << ' ' << rec.vertices.cols();
        for (Eigen::Index c = 0; c < rec.vertices.cols(); ++c)
            for (Eigen::Index i = 0; i < rec.vertices.rows(); ++i) os << ' ' << fmt_double(rec.vertices(i, c));
        os << "\n";
    }
    os << "end\n";
    return os.str();
}

ResultsFile read_results(const std::string& text) {
    using E = FormatError;
    // Formulas may contain spaces, so that line is taken verbatim.
    Lines L = split_lines(text);
    expect_header<E>(L, "results");
    ResultsFile r;
    {
        const Line& ln = next<E>(L, "formula");
        std::string f;
        for (std::size_t i = 1; i < ln.size(); ++i) f += (i > 1 ? " " : "") + ln[i];
        r.formula = f == "-" ? "" : f;
    }
    {
        const Line& ln = next<E>(L, "seed");
        if (ln.size() != 2) fail<E>(L, "seed takes one value");
        if (ln[1] != "none") r.seed = uinteger<E>(L, ln[1]);
    }
    {
        const Line& ln = next<E>(L, "modes");
        if (ln.size() < 2 || ln.size() != static_cast<std::size_t>(integer<E>(L, ln[1])) + 2) fail<E>(L, "malformed modes line");
        r.mode_names.assign(ln.begin() + 2, ln.end());
    }
    auto single = [&](const std::string& key) -> const std::string& {
        const Line& ln = next<E>(L, key);
        if (ln.size() != 2) fail<E>(L, key + " takes one value");
        return ln[1];
    };
    const long n = integer<E>(L, single("states"));
    r.metrics.eps_max = num<E>(L, single("eps_max"));
    r.metrics.eps_med = num<E>(L, single("eps_med"));
    r.metrics.eps_ave = num<E>(L, single("eps_ave"));
    r.wall_time = num<E>(L, single("wall_time"));
    r.sink_fallback_max = static_cast<int>(integer<E>(L, single("sink_fallback_max")));
    r.sink_fallback_min = static_cast<int>(integer<E>(L, single("sink_fallback_min")));
    r.nonconverged_max = static_cast<int>(integer<E>(L, single("nonconverged_max")));
    for (long i = 0; i < n; ++i) {
        const Line& ln = next<E>(L, "record");
        if (ln.size() < 8) fail<E>(L, "malformed record");
        ResultRecord rec;
        rec.state = static_cast<int>(integer<E>(L, ln[1]));
        rec.mode = static_cast<int>(integer<E>(L, ln[2]));
        rec.p_lo = num<E>(L, ln[3]);
        rec.p_hi = num<E>(L, ln[4]);
        rec.action = static_cast<int>(integer<E>(L, ln[5]));
        rec.volume = num<E>(L, ln[6]);
        const long nv = integer<E>(L, ln[7]);
        if (nv < 1 || (ln.size() - 8) % nv != 0) fail<E>(L, "record vertex list does not match its count");
        const long dim = static_cast<long>(ln.size() - 8) / nv;
        rec.vertices.resize(dim, nv);
        for (long c = 0; c < nv; ++c)
            for (long d = 0; d < dim; ++d) rec.vertices(d, c) = num<E>(L, ln[8 + c * dim + d]);
        if (!(rec.p_lo >= 0 && rec.p_lo <= rec.p_hi && rec.p_hi <= 1)) fail<E>(L, "invalid probability interval");
        r.records.push_back(std::move(rec));
    }
    next<E>(L, "end");
    return r;
}

std::string heatmap(const ResultsFile& r, int mode) {
    if (mode < 0 || mode >= static_cast<int>(r.mode_names.size())) throw Error("heatmap: mode out of range");
    std::ostringstream os;
    os << "# x_center y_center p_lo  (mode " << r.mode_names[mode] << ")\n";
    for (const auto& rec : r.records) {
        if (rec.vertices.rows() != 2) throw UnsupportedOperation("heatmap: only two-dimensional models are supported");
        if (rec.mode != mode) continue;
        const Vec c = rec.vertices.rowwise().mean();
        os << fmt_double(c(0)) << ' ' << fmt_double(c(1)) << ' ' << fmt_double(rec.p_lo) << "\n";
    }
    return os.str();
}

}  // namespace switchsynth

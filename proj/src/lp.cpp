#include "switchsynth/lp.hpp"

#include <cmath>
#include <vector>

namespace switchsynth {

bool lp_feasible(const Mat& A, const Vec& b, double tol) {
    if (A.rows() != b.size()) throw DimensionMismatch("lp_feasible: A and b disagree");
    const int rows = static_cast<int>(A.rows());
    const int n = static_cast<int>(A.cols());
    // Tableau columns: n originals, rows artificials, rhs.
    Mat T = Mat::Zero(rows + 1, n + rows + 1);
    std::vector<int> basis(rows);
    for (int r = 0; r < rows; ++r) {
        const double s = b(r) < 0 ? -1.0 : 1.0;
        T.block(r, 0, 1, n) = s * A.row(r);
        T(r, n + r) = 1.0;
        T(r, n + rows) = s * b(r);
        basis[r] = n + r;
    }
    // Reduced costs of the phase-one objective (sum of artificials).
    for (int r = 0; r < rows; ++r) T.row(rows) -= T.row(r);
    for (int r = 0; r < rows; ++r) T(rows, n + r) = 0.0;

    const double scale = 1.0 + b.cwiseAbs().maxCoeff();
    const double piv_tol = 1e-12;
    for (int iter = 0; iter < 50 * (n + rows) + 1000; ++iter) {
        int enter = -1;
        for (int j = 0; j < n + rows; ++j)
            if (T(rows, j) < -piv_tol) {
                enter = j;
                break;
            }
        if (enter < 0) break;
        int leave = -1;
        double best = 0.0;
        for (int r = 0; r < rows; ++r) {
            if (T(r, enter) > piv_tol) {
                const double ratio = T(r, n + rows) / T(r, enter);
                if (leave < 0 || ratio < best - 1e-15 || (std::abs(ratio - best) <= 1e-15 && basis[r] < basis[leave])) {
                    leave = r;
                    best = ratio;
                }
            }
        }
        if (leave < 0) break;  // unbounded phase-one direction cannot occur; stop defensively
        T.row(leave) /= T(leave, enter);
        for (int r = 0; r <= rows; ++r)
            if (r != leave && T(r, enter) != 0.0) T.row(r) -= T(r, enter) * T.row(leave);
        basis[leave] = enter;
    }
    return -T(rows, n + rows) <= tol * scale;
}

}  // namespace switchsynth

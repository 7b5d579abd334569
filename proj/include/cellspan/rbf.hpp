#pragma once

#include <string>
#include <vector>

#include "cellspan/types.hpp"

namespace cellspan {

enum class Kernel { cubic, thin_plate, linear };

std::string to_string(Kernel k);
Kernel kernel_from_string(const std::string& s);

// Uniform evaluation grid over the voltage window.
struct VoltageGrid {
    double v_min = kVoltageMin;
    double v_max = kVoltageMax;
    int n_points = 1000;
};

// Fitted 1-D radial-basis interpolant with a polynomial trend term:
//   f(v) = p(v) + sum_i weights[i] * phi(|v - nodes[i]|)
// where p(v) = poly_coeffs[0] + poly_coeffs[1] v + ... (degree m) and the
// weights satisfy the orthogonality conditions sum_i w_i nodes[i]^k = 0
// for k <= m.
struct RBFInterpolant {
    std::vector<double> nodes;        // strictly increasing after dedup
    std::vector<double> weights;      // same length as nodes
    std::vector<double> poly_coeffs;  // degree + 1 entries
    Kernel kernel = Kernel::cubic;
    int degree = 1;

    double evaluate(double v) const;
};

// Fits the interpolant through the curve's (voltage, capacity) samples by a
// direct dense solve of the augmented symmetric system. Duplicate voltages
// are collapsed by averaging their capacities first. Node exactness is
// enforced to 1e-8 relative; a degenerate system raises NumericError with
// condition diagnostics.
RBFInterpolant fit_rbf(const DischargeCurve& curve, Kernel kernel = Kernel::cubic,
                       int degree = 1);

// Grid voltages in evaluation order: descending from v_max to v_min,
// matching the flipped-axis convention of discharge curves.
std::vector<double> grid_voltages(const VoltageGrid& grid);

// Evaluates the interpolant on the grid (descending voltage order).
std::vector<double> resample(const RBFInterpolant& interp, const VoltageGrid& grid);

void validate(const VoltageGrid& grid);

} // namespace cellspan

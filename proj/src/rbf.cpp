#include "cellspan/rbf.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

#include <Eigen/Dense>

#include "cellspan/error.hpp"

namespace cellspan {

namespace {

constexpr double kNodeTolerance = 1e-8;  // relative node exactness

double kernel_value(Kernel k, double r) {
    switch (k) {
        case Kernel::cubic: return r * r * r;
        case Kernel::thin_plate: return r > 0.0 ? r * r * std::log(r) : 0.0;
        case Kernel::linear: return r;
    }
    throw DataError("unknown kernel");
}

} // namespace

std::string to_string(Kernel k) {
    switch (k) {
        case Kernel::cubic: return "cubic";
        case Kernel::thin_plate: return "thin_plate";
        case Kernel::linear: return "linear";
    }
    throw DataError("unknown kernel");
}

Kernel kernel_from_string(const std::string& s) {
    if (s == "cubic") return Kernel::cubic;
    if (s == "thin_plate") return Kernel::thin_plate;
    if (s == "linear") return Kernel::linear;
    throw DataError("unknown kernel '" + s + "'");
}

void validate(const VoltageGrid& grid) {
    if (!(grid.v_min < grid.v_max)) throw DataError("voltage grid: v_min must be < v_max");
    if (grid.n_points < 2) throw DataError("voltage grid: need at least 2 points");
}

double RBFInterpolant::evaluate(double v) const {
    // polynomial trend (Horner)
    double p = 0.0;
    for (auto it = poly_coeffs.rbegin(); it != poly_coeffs.rend(); ++it) p = p * v + *it;
    double s = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        s += weights[i] * kernel_value(kernel, std::fabs(v - nodes[i]));
    return p + s;
}

RBFInterpolant fit_rbf(const DischargeCurve& curve, Kernel kernel, int degree) {
    if (degree < 0) throw DataError("fit_rbf: degree must be >= 0");
    if (curve.voltage.size() != curve.capacity.size())
        throw DataError("fit_rbf: voltage/capacity lengths differ");

    // Canonicalize: sort by (voltage, capacity) and average duplicates, so
    // the fit is independent of input ordering.
    std::vector<std::pair<double, double>> pts(curve.voltage.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        pts[i] = {curve.voltage[i], curve.capacity[i]};
    std::sort(pts.begin(), pts.end());

    std::vector<double> nodes, values;
    nodes.reserve(pts.size());
    values.reserve(pts.size());
    std::size_t i = 0;
    while (i < pts.size()) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < pts.size() && pts[j].first == pts[i].first) sum += pts[j++].second;
        nodes.push_back(pts[i].first);
        values.push_back(sum / static_cast<double>(j - i));
        i = j;
    }

    const std::size_t n = nodes.size();
    const std::size_t m = static_cast<std::size_t>(degree);
    if (n < m + 2)
        throw DataError("fit_rbf: need at least degree+2 distinct voltages, got " +
                        std::to_string(n));

    // Augmented symmetric system:
    //   [ Phi  P ] [lambda]   [values]
    //   [ P^T  0 ] [  c   ] = [  0   ]
    // with Phi_ij = phi(|v_i - v_j|) and P_ik = v_i^k, k = 0..m. The zero
    // block encodes the orthogonality conditions sum_i lambda_i v_i^k = 0.
    const std::size_t size = n + m + 1;
    Eigen::MatrixXd mat = Eigen::MatrixXd::Zero(size, size);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(size);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t cidx = 0; cidx < n; ++cidx)
            mat(r, cidx) = kernel_value(kernel, std::fabs(nodes[r] - nodes[cidx]));
        double pw = 1.0;
        for (std::size_t k = 0; k <= m; ++k) {
            mat(r, n + k) = pw;
            mat(n + k, r) = pw;
            pw *= nodes[r];
        }
        rhs(r) = values[r];
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(mat);
    const double max_pivot = std::fabs(lu.maxPivot());
    const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
    const double pivot_ratio = max_pivot / std::max(min_pivot, 1e-300);
    if (!lu.isInvertible()) {
        std::ostringstream msg;
        msg << "fit_rbf: singular interpolation system (rank " << lu.rank() << " of "
            << size << ", pivot ratio " << pivot_ratio << ")";
        throw NumericError(msg.str());
    }
    Eigen::VectorXd x = lu.solve(rhs);

    RBFInterpolant interp;
    interp.kernel = kernel;
    interp.degree = degree;
    interp.nodes = nodes;

    auto extract = [&]() {
        interp.weights.assign(x.data(), x.data() + n);
        interp.poly_coeffs.assign(x.data() + n, x.data() + size);
    };
    auto node_residual = [&]() {
        double worst = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double err = std::fabs(interp.evaluate(nodes[r]) - values[r]) /
                               std::max(1.0, std::fabs(values[r]));
            worst = std::max(worst, err);
        }
        return worst;
    };

    // Iterative refinement until the interpolation conditions hold to the
    // node tolerance.
    extract();
    double resid = node_residual();
    for (int sweep = 0; sweep < 3 && resid > kNodeTolerance; ++sweep) {
        const Eigen::VectorXd r = rhs - mat * x;
        x += lu.solve(r);
        extract();
        resid = node_residual();
    }
    if (resid > kNodeTolerance) {
        std::ostringstream msg;
        msg << "fit_rbf: node exactness " << resid << " exceeds " << kNodeTolerance
            << " after refinement (ill-conditioned system, pivot ratio " << pivot_ratio
            << ")";
        throw NumericError(msg.str());
    }
    return interp;
}

std::vector<double> grid_voltages(const VoltageGrid& grid) {
    validate(grid);
    std::vector<double> v(static_cast<std::size_t>(grid.n_points));
    const double step = (grid.v_max - grid.v_min) / static_cast<double>(grid.n_points - 1);
    for (int k = 0; k < grid.n_points; ++k)
        v[static_cast<std::size_t>(k)] = grid.v_max - step * static_cast<double>(k);
    v.back() = grid.v_min;  // exact endpoint
    return v;
}

std::vector<double> resample(const RBFInterpolant& interp, const VoltageGrid& grid) {
    const auto voltages = grid_voltages(grid);
    std::vector<double> out(voltages.size());
    for (std::size_t k = 0; k < voltages.size(); ++k) out[k] = interp.evaluate(voltages[k]);
    return out;
}

} // namespace cellspan

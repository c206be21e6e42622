#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "cellnas/rng.hpp"

namespace cellnas {

/// Linear cells with one input node x and n intermediate nodes, all
/// operations linear and no activations.
///
///   widest:    y(i) = W(i) x
///   narrowest: y(i) = W(i) W(i-1) ... W(1) x
///
/// The output node concatenates y(1..n). The objective on top of it is the
/// block quadratic f = 1/2 sum_i |y(i) - t(i)|^2.
enum class LinearTopology { Widest, Narrowest };

struct LinearCellModel {
    LinearTopology topology = LinearTopology::Narrowest;
    std::vector<Eigen::MatrixXd> weights;  // W(1..n), each d x d
    std::vector<Eigen::VectorXd> targets;  // t(1..n)
    Eigen::VectorXd input;                 // x used by the smoothness check

    std::size_t n() const noexcept { return weights.size(); }
    std::size_t dim() const noexcept { return weights.empty() ? 0 : static_cast<std::size_t>(weights[0].rows()); }

    /// Same weights and targets under the other topology.
    LinearCellModel with_topology(LinearTopology t) const;
};

/// Throws Error{DimensionMismatch} on inconsistent shapes or n == 0.
void validate(const LinearCellModel& m);

/// Per-node outputs y(1..n) under m's topology.
std::vector<Eigen::VectorXd> node_values(const Eigen::VectorXd& x, const LinearCellModel& m);

Eigen::VectorXd forward_widest(const Eigen::VectorXd& x, const LinearCellModel& m);
Eigen::VectorXd forward_narrowest(const Eigen::VectorXd& x, const LinearCellModel& m);

double objective(const Eigen::VectorXd& x, const LinearCellModel& m);

/// d f / d W(i) = (y(i) - t(i)) x^T.
std::vector<Eigen::MatrixXd> grad_widest(const LinearCellModel& m, const Eigen::VectorXd& x);

/// d f^ / d W(i) = sum_{k>=i} (W(k)...W(i+1))^T (y^(k) - t(k)) x^T (W(i-1)...W(1))^T.
std::vector<Eigen::MatrixXd> grad_narrowest(const LinearCellModel& m, const Eigen::VectorXd& x);

struct SpectralNormResult {
    double value = 0.0;
    std::size_t iterations = 0;
    double residual = 0.0;  // |W^T W v - value^2 v| at the last iterate
};

/// Largest singular value by power iteration on W^T W. Stops when successive
/// estimates agree to `rel_tol`; throws Error{NoConvergence} after max_iter.
SpectralNormResult spectral_norm_detail(const Eigen::MatrixXd& w, double rel_tol = 1e-10, std::size_t max_iter = 10000);

inline double spectral_norm(const Eigen::MatrixXd& w) { return spectral_norm_detail(w).value; }

struct TheoremReport {
    std::size_t block = 0;           // zero-based block index i-1
    std::vector<double> lambdas;     // spectral norms of W(1..n)
    double empirical = 0.0;
    double bound = 0.0;
    double margin = 0.0;             // bound - empirical
    double slack = 0.0;              // tolerated excess before a violation is flagged
    double standard_error = 0.0;     // Monte-Carlo error of `empirical` (variance check only)
    std::vector<double> sigmas;      // widest-cell gradient standard deviations (variance check only)
    double lipschitz_widest = 0.0;   // L(i) used by the smoothness check
    std::size_t trials = 0;
    bool violated = false;
};

nlohmann::json to_json(const TheoremReport& r);

struct SmoothnessOptions {
    std::size_t trials = 200;
    /// Perturbation ball radius; default 0.1 * |W(i)|_F.
    std::optional<double> radius;
    double slack = 1e-9;
};

/// Empirical block-Lipschitz constant of the narrowest cell's block `block`
/// against the bound (prod_{j<i} lambda(j)) * L(i), with L(i) = |x|^2 the
/// exact block constant of the widest quadratic objective. Spectral norms
/// throughout. Trial k draws from rng.stream(k).
TheoremReport verify_theorem2(const LinearCellModel& m, std::size_t block, const SmoothnessOptions& opts,
                              const Rng& rng);

using InputSampler = std::function<Eigen::VectorXd(Rng&)>;

struct VarianceOptions {
    std::size_t samples = 2000;
    double standard_errors = 3.0;
    double slack = 1e-9;  // relative, absorbs rounding when bound == empirical
};

/// Gradient variance E|G - EG|_F^2 of the narrowest cell's block over inputs
/// x ~ sampler, held against n sum_{k>=i} (sigma(k)/lambda(i) prod_{j<=k} lambda(j))^2
/// with sigma(k)^2 the same variance of the widest cell on the same samples.
TheoremReport verify_theorem3(const LinearCellModel& m, std::size_t block, const InputSampler& sampler,
                              const VarianceOptions& opts, Rng& rng);

/// Random instance: uniform +-sqrt(6/(2d)) weights, standard normal targets and x.
LinearCellModel random_linear_model(std::size_t n, std::size_t dim, Rng& rng);

InputSampler standard_normal_inputs(std::size_t dim);

nlohmann::json model_to_json(const LinearCellModel& m);

}  // namespace cellnas

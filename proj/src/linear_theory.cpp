#include "cellnas/linear_theory.hpp"

#include <cmath>
#include <string>

#include "cellnas/error.hpp"

namespace cellnas {

using Eigen::MatrixXd;
using Eigen::VectorXd;

LinearCellModel LinearCellModel::with_topology(LinearTopology t) const {
    LinearCellModel out = *this;
    out.topology = t;
    return out;
}

void validate(const LinearCellModel& m) {
    if (m.weights.empty()) throw Error(ErrorKind::DimensionMismatch, "linear cell needs n >= 1");
    const auto d = m.weights[0].rows();
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        if (m.weights[i].rows() != d || m.weights[i].cols() != d) {
            throw Error(ErrorKind::DimensionMismatch, "W(" + std::to_string(i + 1) + ") is " +
                                                          std::to_string(m.weights[i].rows()) + "x" +
                                                          std::to_string(m.weights[i].cols()));
        }
    }
    if (m.targets.size() != m.weights.size()) {
        throw Error(ErrorKind::DimensionMismatch, std::to_string(m.targets.size()) + " targets for " +
                                                      std::to_string(m.weights.size()) + " nodes");
    }
    for (const auto& t : m.targets) {
        if (t.size() != d) throw Error(ErrorKind::DimensionMismatch, "target length differs from d");
    }
}

namespace {

void require_input(const VectorXd& x, const LinearCellModel& m) {
    validate(m);
    if (static_cast<std::size_t>(x.size()) != m.dim()) {
        throw Error(ErrorKind::DimensionMismatch, "input of length " + std::to_string(x.size()) + ", d = " +
                                                      std::to_string(m.dim()));
    }
}

void require_topology(const LinearCellModel& m, LinearTopology t) {
    if (m.topology != t) {
        throw Error(ErrorKind::DimensionMismatch,
                    t == LinearTopology::Widest ? "model is not a widest cell" : "model is not a narrowest cell");
    }
}

VectorXd concat(const std::vector<VectorXd>& parts) {
    Eigen::Index total = 0;
    for (const auto& p : parts) total += p.size();
    VectorXd out(total);
    Eigen::Index offset = 0;
    for (const auto& p : parts) {
        out.segment(offset, p.size()) = p;
        offset += p.size();
    }
    return out;
}

// W(hi) W(hi-1) ... W(lo), 1-based inclusive; identity when lo > hi.
MatrixXd product(const LinearCellModel& m, std::size_t lo, std::size_t hi) {
    MatrixXd p = MatrixXd::Identity(static_cast<Eigen::Index>(m.dim()), static_cast<Eigen::Index>(m.dim()));
    for (std::size_t j = lo; j <= hi; ++j) p = m.weights[j - 1] * p;
    return p;
}

double squared_frobenius_distance(const MatrixXd& a, const MatrixXd& b) { return (a - b).squaredNorm(); }

}  // namespace

std::vector<VectorXd> node_values(const VectorXd& x, const LinearCellModel& m) {
    require_input(x, m);
    std::vector<VectorXd> y;
    y.reserve(m.n());
    if (m.topology == LinearTopology::Widest) {
        for (const auto& w : m.weights) y.push_back(w * x);
    } else {
        VectorXd h = x;
        for (const auto& w : m.weights) {
            h = w * h;
            y.push_back(h);
        }
    }
    return y;
}

VectorXd forward_widest(const VectorXd& x, const LinearCellModel& m) {
    require_topology(m, LinearTopology::Widest);
    return concat(node_values(x, m));
}

VectorXd forward_narrowest(const VectorXd& x, const LinearCellModel& m) {
    require_topology(m, LinearTopology::Narrowest);
    return concat(node_values(x, m));
}

double objective(const VectorXd& x, const LinearCellModel& m) {
    const auto y = node_values(x, m);
    double f = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) f += 0.5 * (y[i] - m.targets[i]).squaredNorm();
    return f;
}

std::vector<MatrixXd> grad_widest(const LinearCellModel& m, const VectorXd& x) {
    require_topology(m, LinearTopology::Widest);
    const auto y = node_values(x, m);
    std::vector<MatrixXd> grads;
    grads.reserve(m.n());
    for (std::size_t i = 0; i < m.n(); ++i) grads.push_back((y[i] - m.targets[i]) * x.transpose());
    return grads;
}

std::vector<MatrixXd> grad_narrowest(const LinearCellModel& m, const VectorXd& x) {
    require_topology(m, LinearTopology::Narrowest);
    const auto y = node_values(x, m);
    const std::size_t n = m.n();
    std::vector<MatrixXd> grads;
    grads.reserve(n);
    for (std::size_t i = 1; i <= n; ++i) {
        // x^T (W(i-1)...W(1))^T, shared by every term of the sum.
        const Eigen::RowVectorXd right = i == 1 ? Eigen::RowVectorXd(x.transpose())
                                                : Eigen::RowVectorXd((product(m, 1, i - 1) * x).transpose());
        MatrixXd g = MatrixXd::Zero(static_cast<Eigen::Index>(m.dim()), static_cast<Eigen::Index>(m.dim()));
        for (std::size_t k = i; k <= n; ++k) {
            const VectorXd residual = y[k - 1] - m.targets[k - 1];
            const VectorXd left = k == i ? residual : VectorXd(product(m, i + 1, k).transpose() * residual);
            g += left * right;
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

SpectralNormResult spectral_norm_detail(const MatrixXd& w, double rel_tol, std::size_t max_iter) {
    if (!w.allFinite()) throw Error(ErrorKind::NoConvergence, "matrix has non-finite entries");
    const Eigen::Index cols = w.cols();
    SpectralNormResult result;
    if (cols == 0 || w.rows() == 0) return result;

    // Deterministic start with no special alignment to coordinate axes.
    VectorXd v(cols);
    for (Eigen::Index i = 0; i < cols; ++i) v[i] = 1.0 + 0.5 * std::sin(static_cast<double>(i) + 1.0);
    v.normalize();

    double previous = -1.0;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        const VectorXd u = w * v;
        const double estimate = u.norm();  // sqrt of the Rayleigh quotient v^T W^T W v
        VectorXd next = w.transpose() * u;
        const double next_norm = next.norm();
        result.value = estimate;
        result.iterations = it;
        if (next_norm == 0.0) {
            result.residual = 0.0;
            return result;
        }
        result.residual = (next - estimate * estimate * v).norm();
        if (std::abs(estimate - previous) <= rel_tol * estimate) return result;
        previous = estimate;
        v = next / next_norm;
    }
    throw Error(ErrorKind::NoConvergence, "power iteration: last estimate " + std::to_string(result.value) +
                                              ", residual " + std::to_string(result.residual) + " after " +
                                              std::to_string(max_iter) + " iterations");
}

nlohmann::json to_json(const TheoremReport& r) {
    nlohmann::json j = {{"block_index", r.block},     {"lambdas", r.lambdas}, {"empirical", r.empirical},
                        {"bound", r.bound},           {"margin", r.margin},   {"slack", r.slack},
                        {"violated", r.violated},     {"trials", r.trials}};
    if (!r.sigmas.empty()) {
        j["sigmas"] = r.sigmas;
        j["standard_error"] = r.standard_error;
    } else {
        j["lipschitz_widest"] = r.lipschitz_widest;
    }
    return j;
}

namespace {

std::vector<double> lambdas_of(const LinearCellModel& m) {
    std::vector<double> out;
    out.reserve(m.n());
    for (const auto& w : m.weights) out.push_back(spectral_norm(w));
    return out;
}

MatrixXd random_ball_point(const MatrixXd& center, double radius, Rng& rng) {
    MatrixXd dir(center.rows(), center.cols());
    double norm = 0.0;
    do {
        for (Eigen::Index k = 0; k < dir.size(); ++k) dir(k) = rng.normal();
        norm = dir.norm();
    } while (norm == 0.0);
    const double rho = radius * std::pow(rng.uniform01(), 1.0 / static_cast<double>(dir.size()));
    return center + (rho / norm) * dir;
}

}  // namespace

TheoremReport verify_theorem2(const LinearCellModel& m, std::size_t block, const SmoothnessOptions& opts,
                              const Rng& rng) {
    require_topology(m, LinearTopology::Narrowest);
    require_input(m.input, m);
    if (block >= m.n()) throw Error(ErrorKind::DimensionMismatch, "block index past n");
    if (opts.trials < 1) throw Error(ErrorKind::InvalidSpec, "need at least one trial");

    TheoremReport report;
    report.block = block;
    report.trials = opts.trials;
    report.slack = opts.slack;
    report.lambdas = lambdas_of(m);
    report.lipschitz_widest = m.input.squaredNorm();
    double prefix = 1.0;
    for (std::size_t j = 0; j < block; ++j) prefix *= report.lambdas[j];
    report.bound = prefix * report.lipschitz_widest;

    const double radius = opts.radius.value_or(0.1 * m.weights[block].norm());
    LinearCellModel probe = m;
    for (std::size_t trial = 0; trial < opts.trials; ++trial) {
        Rng stream = rng.stream(static_cast<std::uint64_t>(trial));
        MatrixXd first, second;
        // Identical draws carry no slope information; redraw (DegeneratePair).
        do {
            first = random_ball_point(m.weights[block], radius, stream);
            second = random_ball_point(m.weights[block], radius, stream);
        } while (squared_frobenius_distance(first, second) == 0.0);

        probe.weights[block] = first;
        const MatrixXd g1 = grad_narrowest(probe, m.input)[block];
        probe.weights[block] = second;
        const MatrixXd g2 = grad_narrowest(probe, m.input)[block];

        const double ratio = spectral_norm(g1 - g2) / spectral_norm(first - second);
        report.empirical = std::max(report.empirical, ratio);
    }
    report.margin = report.bound - report.empirical;
    report.violated = report.empirical > report.bound + opts.slack;
    return report;
}

TheoremReport verify_theorem3(const LinearCellModel& m, std::size_t block, const InputSampler& sampler,
                              const VarianceOptions& opts, Rng& rng) {
    require_topology(m, LinearTopology::Narrowest);
    validate(m);
    if (block >= m.n()) throw Error(ErrorKind::DimensionMismatch, "block index past n");
    if (opts.samples < 2) throw Error(ErrorKind::InsufficientSamples, "need at least two input samples");

    const std::size_t n = m.n();
    const auto samples = opts.samples;
    const LinearCellModel widest = m.with_topology(LinearTopology::Widest);

    std::vector<MatrixXd> narrow(samples);
    std::vector<std::vector<MatrixXd>> wide(samples);
    for (std::size_t s = 0; s < samples; ++s) {
        const VectorXd x = sampler(rng);
        narrow[s] = grad_narrowest(m, x)[block];
        wide[s] = grad_widest(widest, x);
    }

    const auto spread = [samples](const auto& get) {
        MatrixXd mean = get(0);
        for (std::size_t s = 1; s < samples; ++s) mean += get(s);
        mean /= static_cast<double>(samples);
        std::vector<double> sq(samples);
        for (std::size_t s = 0; s < samples; ++s) sq[s] = (get(s) - mean).squaredNorm();
        return sq;
    };
    const auto mean_of = [](const std::vector<double>& v) {
        double acc = 0.0;
        for (double q : v) acc += q;
        return acc / static_cast<double>(v.size());
    };

    TheoremReport report;
    report.block = block;
    report.trials = samples;
    report.slack = opts.slack;
    report.lambdas = lambdas_of(m);

    const auto sq = spread([&](std::size_t s) -> const MatrixXd& { return narrow[s]; });
    report.empirical = mean_of(sq);
    double ss = 0.0;
    for (double q : sq) ss += (q - report.empirical) * (q - report.empirical);
    report.standard_error = std::sqrt(ss / static_cast<double>(samples - 1)) / std::sqrt(static_cast<double>(samples));

    report.sigmas.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        report.sigmas[k] = std::sqrt(mean_of(spread([&](std::size_t s) -> const MatrixXd& { return wide[s][k]; })));
    }

    // sigma(k) / lambda(i) * prod_{j<=k} lambda(j), evaluated without dividing.
    double bound = 0.0;
    for (std::size_t k = block; k < n; ++k) {
        double term = report.sigmas[k];
        for (std::size_t j = 0; j <= k; ++j) {
            if (j != block) term *= report.lambdas[j];
        }
        bound += term * term;
    }
    report.bound = static_cast<double>(n) * bound;
    report.margin = report.bound - report.empirical;
    report.violated = report.empirical - opts.standard_errors * report.standard_error >
                      report.bound * (1.0 + opts.slack);
    return report;
}

LinearCellModel random_linear_model(std::size_t n, std::size_t dim, Rng& rng) {
    const auto d = static_cast<Eigen::Index>(dim);
    const double limit = std::sqrt(6.0 / (2.0 * static_cast<double>(dim)));
    LinearCellModel m;
    m.topology = LinearTopology::Narrowest;
    for (std::size_t i = 0; i < n; ++i) {
        MatrixXd w(d, d);
        for (Eigen::Index k = 0; k < w.size(); ++k) w(k) = rng.uniform(-limit, limit);
        m.weights.push_back(std::move(w));
    }
    for (std::size_t i = 0; i < n; ++i) {
        VectorXd t(d);
        for (Eigen::Index k = 0; k < d; ++k) t[k] = rng.normal();
        m.targets.push_back(std::move(t));
    }
    m.input.resize(d);
    for (Eigen::Index k = 0; k < d; ++k) m.input[k] = rng.normal();
    return m;
}

InputSampler standard_normal_inputs(std::size_t dim) {
    return [dim](Rng& rng) {
        VectorXd x(static_cast<Eigen::Index>(dim));
        for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = rng.normal();
        return x;
    };
}

nlohmann::json model_to_json(const LinearCellModel& m) {
    const auto matrix = [](const MatrixXd& w) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(w.cols()));
            for (Eigen::Index c = 0; c < w.cols(); ++c) row[static_cast<std::size_t>(c)] = w(r, c);
            rows.push_back(row);
        }
        return rows;
    };
    const auto vector = [](const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json j;
    j["topology"] = m.topology == LinearTopology::Widest ? "widest" : "narrowest";
    j["n"] = m.n();
    j["dim"] = m.dim();
    j["weights"] = nlohmann::json::array();
    for (const auto& w : m.weights) j["weights"].push_back(matrix(w));
    j["targets"] = nlohmann::json::array();
    for (const auto& t : m.targets) j["targets"].push_back(vector(t));
    j["input"] = vector(m.input);
    return j;
}

}  // namespace cellnas

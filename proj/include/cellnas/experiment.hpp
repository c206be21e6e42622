#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cellnas/cell_graph.hpp"
#include "cellnas/dataset.hpp"
#include "cellnas/network.hpp"
#include "cellnas/optimizer.hpp"

namespace cellnas {

struct TrainConfig {
    double lr = 0.025;
    double momentum = 0.9;
    double weight_decay = 3e-4;
    std::size_t batch_size = 80;
    std::size_t epochs = 30;
    std::uint64_t seed = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    double test_accuracy = 0.0;
};

/// Row 0 evaluates the initial parameters; row e >= 1 follows training epoch
/// e, whose learning rate is cosine_lr(e - 1, epochs, lr).
struct TrainTrace {
    std::vector<EpochRecord> rows;
    std::optional<std::size_t> diverged_at;  // epoch whose loss went non-finite
    ParameterSet final_parameters;
};

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;
};

/// Mean loss and accuracy over a split, evaluated in fixed chunks of 250 rows.
Evaluation evaluate(const Network& net, const ParameterSet& params, const Split& split);

/// Parameters come from the "init" stream of cfg.seed, batch order from the
/// "batches" stream. A non-finite loss ends training early and is recorded in
/// diverged_at rather than thrown.
TrainTrace train(const Network& net, const Dataset& data, const TrainConfig& cfg);

/// train() from caller-supplied initial parameters.
TrainTrace train_from(const Network& net, ParameterSet params, const Dataset& data, const TrainConfig& cfg);

std::string trace_csv(const TrainTrace& trace);

/// First epoch whose test loss is below `threshold`.
std::optional<std::size_t> epochs_to_threshold(const TrainTrace& trace, double threshold);

/// Sum of per-epoch test losses; infinite for diverged runs.
double loss_curve_area(const TrainTrace& trace);

struct ConvergenceOptions {
    NetworkConfig network;
    TrainConfig train;  // lr and seed are overridden per run
    std::vector<double> lrs{0.0025, 0.025, 0.25};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    double threshold = 0.7;
    std::size_t workers = 1;  // runs are independent; results do not depend on this
};

struct RunResult {
    std::string genotype;
    double lr = 0.0;
    std::uint64_t seed = 0;
    std::optional<std::size_t> epochs_to_threshold;
    double loss_area = 0.0;
    double final_test_accuracy = 0.0;
    bool diverged = false;
};

struct GenotypeSummary {
    std::string genotype;
    Rational width;
    std::size_t depth = 0;
    double lr = 0.0;
    double median_epochs = 0.0;  // infinity when the median run never crosses
    double median_area = 0.0;
    std::size_t diverged_runs = 0;
};

struct ConvergenceReport {
    std::vector<RunResult> runs;
    std::vector<GenotypeSummary> summaries;  // per (lr, genotype), genotypes in input order
    /// Per lr, genotype names fastest first (median epochs, then median area).
    std::vector<std::pair<double, std::vector<std::string>>> ranking;
};

/// Throws Error{InvalidSpec} for fewer than two genotypes or no seeds.
ConvergenceReport compare_convergence(const std::vector<CellGenotype>& genotypes, const Dataset& data,
                                      const ConvergenceOptions& opts);

nlohmann::json to_json(const ConvergenceReport& report);

/// Every surviving intermediate node sources input nodes 0 and 1; nodes that
/// only fed other nodes and are not aggregated by the output are dropped.
/// Throws Error{UnsupportedInputCount} unless M = 2.
CellGenotype adapt_to_widest_shallowest(const CellGenotype& g);

/// Connection variant where node 0 reads the inputs and node i > 0 reads only
/// node i - 1 in every slot: width 1c, depth n + 1.
CellGenotype chain_variant(const CellGenotype& g);

}  // namespace cellnas

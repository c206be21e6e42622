#include "cellnas/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include "cellnas/error.hpp"

namespace cellnas {

namespace {

constexpr std::size_t kEvalChunk = 250;

bool finite(double v) { return std::isfinite(v); }

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    if (v.size() % 2 == 1) return v[mid];
    return 0.5 * (v[mid - 1] + v[mid]);
}

}  // namespace

Evaluation evaluate(const Network& net, const ParameterSet& params, const Split& split) {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const std::size_t total = split.size();
    std::vector<std::size_t> indices;
    for (std::size_t start = 0; start < total; start += kEvalChunk) {
        const std::size_t end = std::min(total, start + kEvalChunk);
        indices.resize(end - start);
        std::iota(indices.begin(), indices.end(), start);
        const Split chunk = split.subset(indices);

        Tape tape;
        std::vector<ValueId> ids;
        for (const auto& t : params.tensors()) ids.push_back(tape.leaf(t));
        const ValueId logits = net.forward(tape, ids, tape.leaf(chunk.x));
        const ValueId loss = ad::softmax_cross_entropy(tape, logits, chunk.labels);
        loss_sum += tape.value(loss).item() * static_cast<double>(chunk.size());

        const Tensor& z = tape.value(logits);
        for (std::size_t r = 0; r < chunk.size(); ++r) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < z.cols(); ++c) {
                if (z.at(r, c) > z.at(r, best)) best = c;
            }
            if (best == chunk.labels[r]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(total), static_cast<double>(correct) / static_cast<double>(total)};
}

TrainTrace train(const Network& net, const Dataset& data, const TrainConfig& cfg) {
    Rng init = Rng(cfg.seed).stream("init");
    return train_from(net, net.init_parameters(init), data, cfg);
}

TrainTrace train_from(const Network& net, ParameterSet params, const Dataset& data, const TrainConfig& cfg) {
    if (!(cfg.lr >= 0.0) || cfg.batch_size < 1) throw Error(ErrorKind::InvalidSpec, "need lr >= 0 and batch size >= 1");
    if (data.train.x.cols() != net.config().input_dim) {
        throw Error(ErrorKind::ShapeMismatch, "dataset has " + std::to_string(data.train.x.cols()) +
                                                  " features, network expects " +
                                                  std::to_string(net.config().input_dim));
    }
    TrainTrace trace;
    const auto record = [&](std::size_t epoch, double lr) {
        const Evaluation tr = evaluate(net, params, data.train);
        const Evaluation te = evaluate(net, params, data.test);
        trace.rows.push_back({epoch, lr, tr.loss, te.loss, te.accuracy});
        return finite(tr.loss) && finite(te.loss);
    };
    if (!record(0, cfg.lr)) trace.diverged_at = 0;

    Rng batches = Rng(cfg.seed).stream("batches");
    OptimizerState state;
    const SgdConfig sgd{cfg.momentum, cfg.weight_decay};
    std::vector<std::size_t> order(data.train.size());
    std::vector<std::size_t> batch;
    for (std::size_t epoch = 1; epoch <= cfg.epochs && !trace.diverged_at; ++epoch) {
        const double lr = cosine_lr(epoch - 1, cfg.epochs, cfg.lr);
        std::iota(order.begin(), order.end(), 0);
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[batches.uniform_index(i)]);

        bool blew_up = false;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
            const Split b = data.train.subset(batch);
            const LossGradient lg = loss_and_gradient(net, params, b.x, b.labels);
            if (!finite(lg.loss)) {
                blew_up = true;
                break;
            }
            sgd_step(params, lg.grads, state, lr, sgd);
        }
        if (!record(epoch, lr) || blew_up) trace.diverged_at = epoch;
    }
    trace.final_parameters = std::move(params);
    return trace;
}

std::string trace_csv(const TrainTrace& trace) {
    std::ostringstream out;
    out.precision(17);
    out << "epoch,lr,train_loss,test_loss,test_acc\n";
    for (const auto& r : trace.rows) {
        out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.test_loss << ',' << r.test_accuracy << '\n';
    }
    return out.str();
}

std::optional<std::size_t> epochs_to_threshold(const TrainTrace& trace, double threshold) {
    for (const auto& r : trace.rows) {
        if (r.test_loss < threshold) return r.epoch;
    }
    return std::nullopt;
}

double loss_curve_area(const TrainTrace& trace) {
    if (trace.diverged_at) return std::numeric_limits<double>::infinity();
    double area = 0.0;
    for (const auto& r : trace.rows) area += r.test_loss;
    return area;
}

ConvergenceReport compare_convergence(const std::vector<CellGenotype>& genotypes, const Dataset& data,
                                      const ConvergenceOptions& opts) {
    if (genotypes.size() < 2) throw Error(ErrorKind::InvalidSpec, "comparison needs at least two genotypes");
    if (opts.seeds.empty() || opts.lrs.empty()) throw Error(ErrorKind::InvalidSpec, "need at least one seed and one lr");

    std::vector<Network> nets;
    for (const auto& g : genotypes) nets.emplace_back(g, opts.network);

    // One slot per (lr, genotype, seed) in that nesting order; workers take
    // slots round-robin and the aggregation below only reads finished slots.
    const std::size_t per_lr = genotypes.size() * opts.seeds.size();
    std::vector<RunResult> runs(opts.lrs.size() * per_lr);
    const auto run_slot = [&](std::size_t slot) {
        const std::size_t l = slot / per_lr;
        const std::size_t g = (slot % per_lr) / opts.seeds.size();
        const std::size_t s = slot % opts.seeds.size();
        TrainConfig cfg = opts.train;
        cfg.lr = opts.lrs[l];
        cfg.seed = opts.seeds[s];
        const TrainTrace trace = train(nets[g], data, cfg);
        RunResult& run = runs[slot];
        run.genotype = genotypes[g].name;
        run.lr = cfg.lr;
        run.seed = cfg.seed;
        run.epochs_to_threshold = epochs_to_threshold(trace, opts.threshold);
        run.loss_area = loss_curve_area(trace);
        run.final_test_accuracy = trace.rows.back().test_accuracy;
        run.diverged = trace.diverged_at.has_value();
    };
    const std::size_t workers = std::clamp<std::size_t>(opts.workers, 1, runs.size());
    if (workers == 1) {
        for (std::size_t i = 0; i < runs.size(); ++i) run_slot(i);
    } else {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            threads.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < runs.size(); i += workers) run_slot(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : threads) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }

    constexpr double inf = std::numeric_limits<double>::infinity();
    ConvergenceReport report;
    report.runs = runs;
    for (std::size_t l = 0; l < opts.lrs.size(); ++l) {
        std::vector<GenotypeSummary> at_lr;
        for (std::size_t g = 0; g < genotypes.size(); ++g) {
            const auto shape = width_depth(validate_genotype(genotypes[g]));
            GenotypeSummary summary{genotypes[g].name, shape.width_in_c, shape.depth, opts.lrs[l], 0.0, 0.0, 0};
            std::vector<double> epochs, areas;
            for (std::size_t s = 0; s < opts.seeds.size(); ++s) {
                const RunResult& run = runs[l * per_lr + g * opts.seeds.size() + s];
                if (run.diverged) ++summary.diverged_runs;
                epochs.push_back(run.epochs_to_threshold ? static_cast<double>(*run.epochs_to_threshold) : inf);
                areas.push_back(run.loss_area);
            }
            summary.median_epochs = median(epochs);
            summary.median_area = median(areas);
            at_lr.push_back(std::move(summary));
        }
        std::vector<std::size_t> order(at_lr.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (at_lr[a].median_epochs != at_lr[b].median_epochs) return at_lr[a].median_epochs < at_lr[b].median_epochs;
            return at_lr[a].median_area < at_lr[b].median_area;
        });
        std::vector<std::string> names;
        for (std::size_t i : order) names.push_back(at_lr[i].genotype);
        report.ranking.emplace_back(opts.lrs[l], std::move(names));
        for (auto& s : at_lr) report.summaries.push_back(std::move(s));
    }
    return report;
}

namespace {

// JSON has no infinity; unreached thresholds and diverged areas become null.
nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const ConvergenceReport& report) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : report.runs) {
        runs.push_back({{"genotype", r.genotype},
                        {"lr", r.lr},
                        {"seed", r.seed},
                        {"epochs_to_threshold", r.epochs_to_threshold ? nlohmann::json(*r.epochs_to_threshold)
                                                                      : nlohmann::json(nullptr)},
                        {"loss_area", finite_or_null(r.loss_area)},
                        {"final_test_accuracy", r.final_test_accuracy},
                        {"diverged", r.diverged}});
    }
    nlohmann::json summaries = nlohmann::json::array();
    for (const auto& s : report.summaries) {
        summaries.push_back({{"genotype", s.genotype},
                             {"width_in_c", to_double(s.width)},
                             {"depth", s.depth},
                             {"lr", s.lr},
                             {"median_epochs_to_threshold", finite_or_null(s.median_epochs)},
                             {"median_loss_area", finite_or_null(s.median_area)},
                             {"diverged_runs", s.diverged_runs}});
    }
    nlohmann::json ranking = nlohmann::json::array();
    for (const auto& [lr, names] : report.ranking) ranking.push_back({{"lr", lr}, {"fastest_first", names}});
    return {{"runs", runs}, {"summaries", summaries}, {"ranking", ranking}};
}

CellGenotype adapt_to_widest_shallowest(const CellGenotype& g) {
    validate_genotype(g);
    if (g.num_inputs != 2) {
        throw Error(ErrorKind::UnsupportedInputCount, "adaptation is defined for two-input cells, got M=" +
                                                          std::to_string(g.num_inputs));
    }
    std::vector<std::size_t> kept = g.concat;
    std::sort(kept.begin(), kept.end());

    CellGenotype out;
    out.name = g.name + "_adapted";
    out.num_inputs = 2;
    for (std::size_t id : kept) {
        IntermediateNodeSpec node = g.nodes[id - g.num_inputs];
        const bool already = node.ops[0].source < 2 && node.ops[1].source < 2 && node.ops[0].source != node.ops[1].source;
        if (!already) {
            node.ops[0].source = 0;
            node.ops[1].source = 1;
        }
        out.nodes.push_back(std::move(node));
    }
    concat_all(out);
    return out;
}

CellGenotype chain_variant(const CellGenotype& g) {
    validate_genotype(g);
    CellGenotype out = g;
    out.name = g.name + "_chain";
    for (std::size_t i = 0; i < out.nodes.size(); ++i) {
        for (std::size_t j = 0; j < out.nodes[i].ops.size(); ++j) {
            out.nodes[i].ops[j].source = i == 0 ? j % g.num_inputs : g.num_inputs + i - 1;
        }
    }
    return out;
}

}  // namespace cellnas

#include "cellnas/landscape.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "cellnas/error.hpp"
#include "cellnas/experiment.hpp"
#include "cellnas/rng.hpp"

namespace cellnas {

namespace {

double frobenius(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

ParameterSet draw_direction(const ParameterSet& reference, Rng rng, Normalization normalization,
                            std::vector<std::string>* zero_blocks) {
    ParameterSet out;
    for (std::size_t b = 0; b < reference.size(); ++b) {
        Tensor t(reference[b].shape());
        for (double& v : t.values()) v = rng.normal();
        if (normalization == Normalization::Blockwise) {
            const double target = frobenius(reference[b].values());
            if (target == 0.0) {
                if (zero_blocks) zero_blocks->push_back(reference.name(b));
            } else {
                const double scale = target / frobenius(t.values());
                for (double& v : t.values()) v *= scale;
            }
        }
        out.add(reference.name(b), std::move(t));
    }
    return out;
}

void require_axis(const std::vector<double>& axis, const char* name) {
    if (axis.empty()) throw Error(ErrorKind::InvalidSpec, std::string(name) + " axis is empty");
    for (std::size_t i = 1; i < axis.size(); ++i) {
        if (!(axis[i] > axis[i - 1])) throw Error(ErrorKind::InvalidSpec, std::string(name) + " axis must be strictly increasing");
    }
    if (std::find(axis.begin(), axis.end(), 0.0) == axis.end()) {
        throw Error(ErrorKind::InvalidSpec, std::string(name) + " axis must contain 0");
    }
}

template <typename PointFn>
LandscapeGrid fill_grid(const std::vector<double>& alphas, const std::vector<double>& betas, SurfaceKind kind,
                        std::size_t workers, PointFn point) {
    require_axis(alphas, "alpha");
    require_axis(betas, "beta");
    LandscapeGrid grid;
    grid.alphas = alphas;
    grid.betas = betas;
    grid.kind = kind;
    grid.values.assign(alphas.size() * betas.size(), 0.0);

    // Each worker owns the rows congruent to its index, so no two threads
    // write the same entry and every value is computed identically.
    const auto run = [&](std::size_t w, std::size_t stride) {
        for (std::size_t a = w; a < alphas.size(); a += stride) {
            for (std::size_t b = 0; b < betas.size(); ++b) {
                const double v = point(alphas[a], betas[b]);
                grid.values[a * betas.size() + b] = std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, alphas.size());
    if (workers == 1) {
        run(0, 1);
    } else {
        std::vector<std::thread> threads;
        std::vector<std::exception_ptr> errors(workers);
        for (std::size_t w = 0; w < workers; ++w) {
            threads.emplace_back([&, w] {
                try {
                    run(w, workers);
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
    return grid;
}

void append_number(std::string& out, double v) {
    if (!std::isfinite(v)) {
        out += "inf";
        return;
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, res.ptr);
}

double parse_number(std::string_view field, std::size_t line) {
    if (field == "inf") return std::numeric_limits<double>::infinity();
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw Error(ErrorKind::ParseError, "line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
    }
    return v;
}

}  // namespace

DirectionPair sample_directions(const ParameterSet& reference, std::uint64_t seed, Normalization normalization) {
    const Rng root = Rng(seed).stream("directions");
    DirectionPair pair;
    pair.seed = seed;
    pair.normalization = normalization;
    pair.first = draw_direction(reference, root.stream("first"), normalization, &pair.zero_blocks);
    pair.second = draw_direction(reference, root.stream("second"), normalization, nullptr);
    return pair;
}

DirectionPair negated(const DirectionPair& pair) {
    DirectionPair out = pair;
    for (auto* set : {&out.first, &out.second}) {
        for (auto& t : set->tensors()) {
            for (double& v : t.values()) v = -v;
        }
    }
    return out;
}

Normalization parse_normalization(const std::string& name) {
    if (name == "blockwise") return Normalization::Blockwise;
    if (name == "none") return Normalization::None;
    throw Error(ErrorKind::InvalidSpec, "unknown normalization '" + name + "' (blockwise|none)");
}

std::string to_string(Normalization n) { return n == Normalization::Blockwise ? "blockwise" : "none"; }

SurfaceKind parse_surface_kind(const std::string& name) {
    if (name == "loss") return SurfaceKind::Loss;
    if (name == "gradvar") return SurfaceKind::GradVar;
    if (name == "gradstd") return SurfaceKind::GradStd;
    throw Error(ErrorKind::InvalidSpec, "unknown surface mode '" + name + "' (loss|gradvar|gradstd)");
}

std::string to_string(SurfaceKind kind) {
    switch (kind) {
        case SurfaceKind::Loss: return "loss";
        case SurfaceKind::GradVar: return "gradvar";
        case SurfaceKind::GradStd: return "gradstd";
    }
    return "loss";
}

std::size_t LandscapeGrid::overflow_count() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](double v) { return !std::isfinite(v); }));
}

std::vector<double> centered_axis(std::size_t points, double range) {
    if (points % 2 == 0) throw Error(ErrorKind::InvalidSpec, "grid size must be odd so the axis contains 0");
    if (!(range > 0.0)) throw Error(ErrorKind::InvalidSpec, "range must be positive");
    if (points == 1) return {0.0};
    const auto half = static_cast<std::int64_t>(points / 2);
    std::vector<double> axis;
    for (std::int64_t k = -half; k <= half; ++k) {
        axis.push_back(range * static_cast<double>(k) / static_cast<double>(half));
    }
    return axis;
}

ParameterSet perturb(const ParameterSet& center, const DirectionPair& pair, double alpha, double beta) {
    center.require_same_layout(pair.first);
    center.require_same_layout(pair.second);
    ParameterSet out = center;
    for (std::size_t b = 0; b < out.size(); ++b) {
        auto w = out[b].values();
        const auto d1 = pair.first[b].values();
        const auto d2 = pair.second[b].values();
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = (w[i] + alpha * d1[i]) + beta * d2[i];
    }
    return out;
}

double gradient_variance(const Network& net, const ParameterSet& params, const Split& split) {
    if (split.size() == 0) throw Error(ErrorKind::InvalidSpec, "gradient variance needs at least one instance");
    std::vector<std::vector<Tensor>> grads;
    grads.reserve(split.size());
    for (std::size_t i = 0; i < split.size(); ++i) {
        const Split one = split.subset({i});
        grads.push_back(loss_and_gradient(net, params, one.x, one.labels).grads);
    }
    const double n = static_cast<double>(split.size());
    double total = 0.0;
    for (std::size_t b = 0; b < grads.front().size(); ++b) {
        const std::size_t size = grads.front()[b].size();
        for (std::size_t k = 0; k < size; ++k) {
            double mean = 0.0;
            for (const auto& g : grads) mean += g[b][k];
            mean /= n;
            for (const auto& g : grads) {
                const double diff = g[b][k] - mean;
                total += diff * diff;
            }
        }
    }
    return total / n;
}

LandscapeGrid loss_surface(const Network& net, const ParameterSet& center, const Split& split,
                           const DirectionPair& pair, const std::vector<double>& alphas,
                           const std::vector<double>& betas, std::size_t workers) {
    return fill_grid(alphas, betas, SurfaceKind::Loss, workers, [&](double a, double b) {
        return evaluate(net, perturb(center, pair, a, b), split).loss;
    });
}

LandscapeGrid gradient_variance_surface(const Network& net, const ParameterSet& center, const Split& split,
                                        const DirectionPair& pair, const std::vector<double>& alphas,
                                        const std::vector<double>& betas, SurfaceKind kind,
                                        std::size_t workers) {
    if (kind == SurfaceKind::Loss) throw Error(ErrorKind::InvalidSpec, "gradient surface needs gradvar or gradstd");
    return fill_grid(alphas, betas, kind, workers, [&](double a, double b) {
        const double var = gradient_variance(net, perturb(center, pair, a, b), split);
        return kind == SurfaceKind::GradStd ? std::sqrt(var) : var;
    });
}

Split evaluation_subset(const Split& split, std::size_t count, std::uint64_t seed) {
    if (count >= split.size()) return split;
    std::vector<std::size_t> order(split.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).stream("subset");
    for (std::size_t i = 0; i < count; ++i) {
        std::swap(order[i], order[i + rng.uniform_index(order.size() - i)]);
    }
    order.resize(count);
    std::sort(order.begin(), order.end());
    return split.subset(order);
}

std::string grid_csv(const LandscapeGrid& grid) {
    std::string out = "alpha,beta,value\n";
    for (std::size_t a = 0; a < grid.alphas.size(); ++a) {
        for (std::size_t b = 0; b < grid.betas.size(); ++b) {
            append_number(out, grid.alphas[a]);
            out += ',';
            append_number(out, grid.betas[b]);
            out += ',';
            append_number(out, grid.at(a, b));
            out += '\n';
        }
    }
    return out;
}

LandscapeGrid parse_grid_csv(const std::string& text, SurfaceKind kind) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "alpha,beta,value") {
        throw Error(ErrorKind::ParseError, "line 1: expected header alpha,beta,value");
    }
    LandscapeGrid grid;
    grid.kind = kind;
    std::vector<std::pair<double, double>> coords;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string::npos) throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": expected 3 fields");
        const std::string_view view(line);
        const double a = parse_number(view.substr(0, c1), lineno);
        const double b = parse_number(view.substr(c1 + 1, c2 - c1 - 1), lineno);
        grid.values.push_back(parse_number(view.substr(c2 + 1), lineno));
        coords.emplace_back(a, b);
        if (!grid.alphas.empty() && a < grid.alphas.back()) {
            throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": alpha values must not decrease");
        }
        if (grid.alphas.empty() || grid.alphas.back() != a) grid.alphas.push_back(a);
        if (grid.alphas.size() == 1) {
            if (!grid.betas.empty() && b <= grid.betas.back()) {
                throw Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": beta values must increase");
            }
            grid.betas.push_back(b);
        }
    }
    if (grid.values.size() != grid.alphas.size() * grid.betas.size()) {
        throw Error(ErrorKind::ParseError, "rows do not form a rectangular grid");
    }
    for (std::size_t i = 0; i < coords.size(); ++i) {
        if (coords[i].first != grid.alphas[i / grid.betas.size()] || coords[i].second != grid.betas[i % grid.betas.size()]) {
            throw Error(ErrorKind::ParseError, "line " + std::to_string(i + 2) + ": rows are not in row-major order");
        }
    }
    return grid;
}

nlohmann::json to_json(const LandscapeGrid& grid) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t a = 0; a < grid.alphas.size(); ++a) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t b = 0; b < grid.betas.size(); ++b) {
            const double v = grid.at(a, b);
            row.push_back(std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf"));
        }
        rows.push_back(std::move(row));
    }
    return {{"kind", to_string(grid.kind)},
            {"alphas", grid.alphas},
            {"betas", grid.betas},
            {"values", rows},
            {"overflow_count", grid.overflow_count()},
            {"metadata", grid.metadata}};
}

void export_grid(const LandscapeGrid& grid, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
    if (path.extension() == ".json") {
        out << to_json(grid).dump(2) << '\n';
    } else {
        out << grid_csv(grid);
    }
    if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
}

LandscapeGrid import_grid_csv(const std::filesystem::path& path, SurfaceKind kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_grid_csv(buf.str(), kind);
}

}  // namespace cellnas

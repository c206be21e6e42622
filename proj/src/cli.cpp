#include "cellnas/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"

#include "cellnas/cell_graph.hpp"
#include "cellnas/checkpoint.hpp"
#include "cellnas/dataset.hpp"
#include "cellnas/error.hpp"
#include "cellnas/experiment.hpp"
#include "cellnas/fixtures.hpp"
#include "cellnas/landscape.hpp"
#include "cellnas/linear_theory.hpp"
#include "cellnas/network.hpp"
#include "cellnas/rng.hpp"
#include "cellnas/variant_sampler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cellnas {

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    std::string out;
    std::string out_dir;
};

std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoFailure, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

json collect_flags(const CLI::App& app) {
    json flags = json::object();
    for (const CLI::Option* opt : app.get_options()) {
        const std::string name = opt->get_name();
        if (name == "--help" || name == "-h" || name == "--version") continue;
        const auto& given = opt->results();
        std::string value;
        if (!given.empty()) {
            for (std::size_t i = 0; i < given.size(); ++i) value += (i ? "," : "") + given[i];
        } else {
            value = opt->get_default_str();
        }
        flags[name] = value;
    }
    return flags;
}

/// Collects the artifacts of one command and writes its manifest last.
class Run {
public:
    Run(std::string command, const CLI::App& root, const CLI::App& sub)
        : command_(std::move(command)), start_(std::chrono::steady_clock::now()), started_at_(utc_now()) {
        flags_ = collect_flags(root);
        flags_.update(collect_flags(sub));
    }

    void write(const fs::path& path, const std::string& bytes) {
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + path.string());
        out << bytes;
        if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + path.string());
        artifacts_.push_back({path, bytes.size(), fnv1a(bytes)});
    }

    void seed(std::uint64_t s) { seeds_.push_back(s); }
    json& summary() { return summary_; }

    void finish(const fs::path& manifest, int exit_code) {
        const fs::path base = manifest.parent_path().empty() ? fs::path(".") : manifest.parent_path();
        json files = json::array();
        for (const auto& a : artifacts_) {
            fs::path rel = fs::absolute(a.path).lexically_relative(fs::absolute(base));
            if (rel.empty()) rel = a.path.filename();
            files.push_back({{"path", rel.generic_string()}, {"bytes", a.bytes}, {"fnv1a64", hex64(a.hash)}});
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        const json m = {{"command", command_},
                        {"flags", flags_},
                        {"seeds", seeds_},
                        {"rng_algorithm", std::string(Rng::kAlgorithm)},
                        {"artifacts", files},
                        {"tool_version", std::string(kToolVersion)},
                        {"started_at", started_at_},
                        {"duration_seconds", seconds},
                        {"exit_code", exit_code},
                        {"summary", summary_}};
        std::ofstream out(manifest, std::ios::binary);
        if (!out) throw Error(ErrorKind::IoFailure, "cannot write " + manifest.string());
        out << m.dump(2) << '\n';
    }

private:
    struct Artifact {
        fs::path path;
        std::size_t bytes;
        std::uint64_t hash;
    };
    std::string command_;
    std::chrono::steady_clock::time_point start_;
    std::string started_at_;
    json flags_;
    std::vector<std::uint64_t> seeds_;
    std::vector<Artifact> artifacts_;
    json summary_ = json::object();
};

struct GenotypeArg {
    std::string file;
    std::string builtin;

    void attach(CLI::App* sub) {
        sub->add_option("--genotype", file, "Genotype JSON file");
        sub->add_option("--builtin", builtin, "Bundled genotype name (e.g. darts, snas, darts_conn1)");
    }
    bool given() const { return !file.empty() || !builtin.empty(); }
    CellGenotype load() const {
        if (!file.empty() && !builtin.empty()) throw UsageError("give either --genotype or --builtin, not both");
        if (!file.empty()) return load_genotype(file);
        if (!builtin.empty()) return builtin_genotype(builtin);
        throw UsageError("a genotype is required (--genotype FILE or --builtin NAME)");
    }
};

/// A genotype named either by path or by built-in fixture name.
CellGenotype genotype_by_path_or_name(const std::string& ref) {
    if (fs::exists(ref)) return load_genotype(ref);
    return builtin_genotype(ref);
}

DatasetSpec resolve_dataset(const std::string& path, std::uint64_t seed) {
    DatasetSpec spec;
    spec.seed = seed;
    if (path.empty()) return spec;
    const json j = read_json(path);
    spec = dataset_spec_from_json(j);
    if (!j.contains("seed")) spec.seed = seed;
    return spec;
}

json analyze_json(const CellGenotype& g) {
    const auto report = width_depth(validate_genotype(g));
    const std::size_t n = g.nodes.size();
    json widths = json::array();
    for (const auto& w : report.per_node_width) widths.push_back(to_string(w));
    return {{"name", g.name},
            {"N", g.node_count()},
            {"M", g.num_inputs},
            {"n", n},
            {"width_in_c", to_double(report.width_in_c)},
            {"width_in_c_exact", to_string(report.width_in_c)},
            {"depth", report.depth},
            {"per_node_width", widths},
            {"is_extremal", report.width_in_c == Rational(static_cast<std::int64_t>(n)) && report.depth == 2}};
}

json shape_json(const CellGenotype& g) {
    const auto r = width_depth(validate_genotype(g));
    return {{"name", g.name}, {"width_in_c", to_double(r.width_in_c)}, {"width_in_c_exact", to_string(r.width_in_c)},
            {"depth", r.depth}};
}

/// Emits `doc` to --out (with a manifest) or to stdout.
int emit(Run& run, const Globals& g, const json& doc, std::ostream& out, int exit_code = kExitOk) {
    if (g.out.empty()) {
        out << doc.dump(2) << '\n';
        return exit_code;
    }
    run.write(g.out, doc.dump(2) + "\n");
    run.finish(manifest_path_for_file(g.out), exit_code);
    return exit_code;
}

std::string big(const BigInt& v) { return v.str(); }

int cmd_analyze(Run& run, const Globals& g, const GenotypeArg& ga, const std::string& positional, bool all,
                std::ostream& out) {
    json doc;
    if (all) {
        doc = json::array();
        for (const auto& f : builtin_fixtures()) doc.push_back(analyze_json(builtin_genotype(f.name)));
    } else {
        GenotypeArg arg = ga;
        if (!positional.empty()) {
            if (!arg.file.empty()) throw UsageError("genotype file given twice");
            arg.file = positional;
        }
        doc = analyze_json(arg.load());
    }
    return emit(run, g, doc, out);
}

int cmd_variants(Run& run, const Globals& g, const GenotypeArg& ga, const std::string& mode, std::size_t count,
                 const std::vector<std::string>& ops, std::ostream& out) {
    const CellGenotype base = ga.load();
    SampleSpec spec;
    if (mode == "connection") spec.mode = SampleMode::Connection;
    else if (mode == "operation") spec.mode = SampleMode::Operation;
    else throw UsageError("--mode must be connection or operation");
    spec.count = count;
    spec.seed = g.seed;
    spec.operation_set = ops;
    run.seed(g.seed);

    const auto variants = sample_variants(base, spec);
    json list = json::array();
    for (const auto& v : variants) list.push_back({{"genotype", genotype_to_json(v)}, {"shape", shape_json(v)}});
    json ranking = json::array();
    for (const auto& v : rank_variants(variants)) ranking.push_back(v.name);
    const json doc = {{"source", base.name}, {"mode", mode}, {"seed", g.seed}, {"variants", list},
                      {"ranking_widest_shallowest_first", ranking}};

    const std::string target = !g.out_dir.empty() ? g.out_dir : g.out;
    if (target.empty()) {
        out << doc.dump(2) << '\n';
        return kExitOk;
    }
    const fs::path dir = target;
    for (std::size_t i = 0; i < variants.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "variant_%03zu.json", i);
        run.write(dir / name, genotype_to_json(variants[i]).dump(2) + "\n");
    }
    run.write(dir / "variants.json", doc.dump(2) + "\n");
    json shapes = json::array();
    for (const auto& v : variants) shapes.push_back(shape_json(v));
    run.summary() = {{"mode", mode}, {"count", variants.size()}, {"variants", shapes}};
    run.finish(dir / "manifest.json", kExitOk);
    return kExitOk;
}

CellGenotype generic_cell(std::size_t nodes, std::size_t inputs) {
    if (inputs < 1 || nodes < inputs + 2) {
        throw Error(ErrorKind::InvalidSearchSpace, "need N >= M + 2 and M >= 1, got N=" + std::to_string(nodes) +
                                                       " M=" + std::to_string(inputs));
    }
    CellGenotype gen;
    gen.name = "generic";
    gen.num_inputs = inputs;
    for (std::size_t i = 0; i + inputs + 1 < nodes; ++i) {
        IntermediateNodeSpec node;
        for (std::size_t j = 0; j < inputs; ++j) node.ops.push_back({"linear", 0});
        gen.nodes.push_back(node);
    }
    concat_all(gen);
    return gen;
}

int cmd_count(Run& run, const Globals& g, std::size_t nodes, std::size_t inputs, bool enumerate,
              const GenotypeArg& ga, std::ostream& out) {
    const CellGenotype cell = ga.given() ? ga.load() : generic_cell(nodes, inputs);
    if (ga.given()) {
        nodes = cell.node_count();
        inputs = cell.num_inputs;
    }
    json doc = {{"N", nodes},
                {"M", inputs},
                {"n", nodes - inputs - 1},
                {"formula_N_minus_2_fact_over_M_minus_1_fact", big(count_connection_variants(nodes, inputs))},
                {"slot_assignments", big(count_slot_assignments(nodes, inputs))},
                {"unordered_distinct_sources", big(count_unordered_distinct_sources(nodes, inputs))},
                {"enumerated_from", cell.name}};
    if (!enumerate) return emit(run, g, doc, out);
    try {
        doc["enumerated_distinct_variants"] = enumerate_connection_variants(cell).size();
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::TooLarge) throw;
        doc["enumerated_distinct_variants"] = nullptr;
        doc["enumeration_skipped"] = e.what();
    }
    return emit(run, g, doc, out);
}

int cmd_theory(Run& run, const Globals& g, std::size_t instances, std::size_t max_blocks, std::size_t max_dim,
               std::size_t trials, std::size_t samples, const std::string& check, std::ostream& out, std::ostream& err) {
    const bool smooth = check == "both" || check == "smoothness";
    const bool variance = check == "both" || check == "variance";
    if (!smooth && !variance) throw UsageError("--check must be both, smoothness or variance");
    if (max_blocks < 1 || max_dim < 1) throw UsageError("--n and --dim must be >= 1");
    run.seed(g.seed);

    const Rng root = Rng(g.seed).stream("theory");
    std::size_t checked = 0, smooth_bad = 0, var_bad = 0;
    json rows = json::array();
    json violating = json::array();
    for (std::size_t k = 0; k < instances; ++k) {
        Rng pick = root.stream("instances").stream(k);
        const std::size_t n = 1 + pick.uniform_index(max_blocks);
        const std::size_t d = 1 + pick.uniform_index(max_dim);
        const LinearCellModel model = random_linear_model(n, d, pick);
        json blocks = json::array();
        bool bad = false;
        for (std::size_t b = 0; b < n; ++b) {
            json entry = {{"block", b}};
            ++checked;
            if (smooth) {
                SmoothnessOptions so;
                so.trials = trials;
                const auto r = verify_theorem2(model, b, so, root.stream("smoothness").stream(k));
                entry["smoothness"] = to_json(r);
                if (r.violated) ++smooth_bad, bad = true;
            }
            if (variance) {
                VarianceOptions vo;
                vo.samples = samples;
                Rng rng = root.stream("variance").stream(k);
                const auto r = verify_theorem3(model, b, standard_normal_inputs(d), vo, rng);
                entry["variance"] = to_json(r);
                if (r.violated) ++var_bad, bad = true;
            }
            blocks.push_back(std::move(entry));
        }
        rows.push_back({{"instance", k}, {"n", n}, {"d", d}, {"blocks", blocks}});
        if (bad) violating.push_back({{"instance", k}, {"model", model_to_json(model)}});
    }
    const json counts = {{"blocks_checked", checked}, {"smoothness_violations", smooth_bad},
                         {"variance_violations", var_bad}};
    run.summary() = counts;
    const json doc = {{"seed", g.seed}, {"instances", instances}, {"trials", trials}, {"samples", samples},
                      {"summary", counts}, {"results", rows}, {"violating_instances", violating}};
    const int code = smooth_bad + var_bad > 0 ? kExitViolation : kExitOk;
    if (code == kExitViolation) {
        err << "theorem bound exceeded: " << smooth_bad << " smoothness and " << var_bad
                  << " variance blocks out of " << checked << "\n";
    }
    return emit(run, g, doc, out, code);
}

json network_json(const NetworkConfig& c) {
    return {{"layers", c.layers}, {"dim", c.dim}, {"input_dim", c.input_dim}, {"num_classes", c.num_classes}};
}

json train_json(const TrainConfig& c) {
    return {{"lr", c.lr}, {"momentum", c.momentum}, {"weight_decay", c.weight_decay}, {"batch_size", c.batch_size},
            {"epochs", c.epochs}, {"seed", c.seed}};
}

int cmd_train(Run& run, const Globals& g, const GenotypeArg& ga, NetworkConfig nc, TrainConfig tc,
              const std::string& dataset_path) {
    if (g.out_dir.empty()) throw UsageError("train needs --out-dir");
    const CellGenotype geno = ga.load();
    const DatasetSpec spec = resolve_dataset(dataset_path, g.seed);
    nc.input_dim = spec.dim;
    nc.num_classes = spec.classes;
    tc.seed = g.seed;
    run.seed(g.seed);

    const Network net(geno, nc);
    const Dataset data = make_dataset(spec);
    const TrainTrace trace = train(net, data, tc);

    const fs::path dir = g.out_dir;
    run.write(dir / "trace.csv", trace_csv(trace));
    Checkpoint ckpt{trace.final_parameters,
                    {{"genotype", genotype_to_json(geno)},
                     {"network", network_json(nc)},
                     {"dataset", to_json(spec)},
                     {"train", train_json(tc)}}};
    run.write(dir / "final.ckpt", encode_checkpoint(ckpt));

    const EpochRecord& last = trace.rows.back();
    run.summary() = {{"genotype", geno.name},
                     {"epochs_run", last.epoch},
                     {"final_test_accuracy", last.test_accuracy},
                     {"final_test_loss", std::isfinite(last.test_loss) ? json(last.test_loss) : json("inf")},
                     {"diverged", trace.diverged_at.has_value()},
                     {"diverged_at", trace.diverged_at ? json(*trace.diverged_at) : json(nullptr)}};
    const int code = trace.diverged_at ? kExitDivergence : kExitOk;
    run.finish(dir / "manifest.json", code);
    return code;
}

std::vector<CellGenotype> genotypes_in(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(ErrorKind::IoFailure, dir.string() + " is not a directory");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (e.path().extension() == ".json" && name.find("manifest") == std::string::npos && name != "variants.json") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<CellGenotype> out;
    for (const auto& f : files) out.push_back(load_genotype(f));
    return out;
}

int cmd_compare(Run& run, const Globals& g, const std::string& dir, const std::string& ladder,
                const std::vector<std::string>& builtins, const std::vector<double>& lrs, std::size_t seeds,
                double threshold, NetworkConfig nc, TrainConfig tc, const std::string& dataset_path,
                std::ostream& out) {
    std::vector<CellGenotype> genotypes;
    const int sources = !dir.empty() + !ladder.empty() + !builtins.empty();
    if (sources != 1) throw UsageError("give exactly one of --genotypes DIR, --ladder NAME and --builtins LIST");
    if (!dir.empty()) genotypes = genotypes_in(dir);
    if (!builtins.empty()) {
        for (const auto& b : builtins) genotypes.push_back(builtin_genotype(b));
    }
    if (!ladder.empty()) {
        const CellGenotype base = genotype_by_path_or_name(ladder);
        genotypes = {chain_variant(base), base, adapt_to_widest_shallowest(base)};
    }
    if (seeds < 1) throw UsageError("--seeds must be >= 1");

    const DatasetSpec spec = resolve_dataset(dataset_path, g.seed);
    nc.input_dim = spec.dim;
    nc.num_classes = spec.classes;
    ConvergenceOptions opts;
    opts.network = nc;
    opts.train = tc;
    opts.lrs = lrs;
    opts.threshold = threshold;
    opts.workers = g.workers;
    opts.seeds.clear();
    for (std::size_t s = 0; s < seeds; ++s) opts.seeds.push_back(g.seed + s);
    for (auto s : opts.seeds) run.seed(s);

    const Dataset data = make_dataset(spec);
    const ConvergenceReport report = compare_convergence(genotypes, data, opts);
    json doc = to_json(report);
    json shapes = json::array();
    for (const auto& gt : genotypes) shapes.push_back(shape_json(gt));
    doc["genotypes"] = shapes;
    doc["threshold"] = threshold;
    doc["seeds"] = opts.seeds;
    doc["dataset"] = to_json(spec);
    doc["network"] = network_json(nc);
    doc["train"] = train_json(tc);

    std::size_t diverged = 0;
    for (const auto& r : report.runs) diverged += r.diverged;
    run.summary() = {{"runs", report.runs.size()}, {"diverged_runs", diverged}};
    return emit(run, g, doc, out, diverged > 0 ? kExitDivergence : kExitOk);
}

int cmd_landscape(Run& run, const Globals& g, const std::string& ckpt_path, const GenotypeArg& ga,
                  const std::string& dataset_path, std::size_t layers, std::size_t dim, const std::string& mode,
                  std::size_t points, double range, const std::string& norm, const std::string& split_name,
                  std::size_t subset) {
    if (g.out.empty()) throw UsageError("landscape needs --out FILE");
    const std::string bytes = read_file(ckpt_path);
    const Checkpoint ckpt = decode_checkpoint(bytes);
    const json& meta = ckpt.meta;

    CellGenotype geno;
    if (ga.given()) geno = ga.load();
    else if (meta.contains("genotype")) geno = genotype_from_json(meta.at("genotype"));
    else throw UsageError("checkpoint carries no genotype; pass --genotype or --builtin");

    DatasetSpec spec;
    if (!dataset_path.empty()) spec = resolve_dataset(dataset_path, g.seed);
    else if (meta.contains("dataset")) spec = dataset_spec_from_json(meta.at("dataset"));
    else spec = resolve_dataset("", g.seed);

    NetworkConfig nc;
    if (meta.contains("network")) {
        nc.layers = meta["network"].value("layers", nc.layers);
        nc.dim = meta["network"].value("dim", nc.dim);
    }
    if (layers) nc.layers = layers;
    if (dim) nc.dim = dim;
    nc.input_dim = spec.dim;
    nc.num_classes = spec.classes;

    const SurfaceKind kind = parse_surface_kind(mode);
    const Normalization normalization = parse_normalization(norm);
    if (split_name != "test" && split_name != "train") throw UsageError("--split must be test or train");
    run.seed(g.seed);

    const Network net(geno, nc);
    ParameterSet expected;
    for (const auto& [name, shape] : net.layout()) expected.add(name, Tensor(shape));
    expected.require_same_layout(ckpt.parameters);

    const Dataset data = make_dataset(spec);
    const Split split = evaluation_subset(split_name == "test" ? data.test : data.train, subset, g.seed);
    const DirectionPair pair = sample_directions(ckpt.parameters, g.seed, normalization);
    const auto axis = centered_axis(points, range);
    LandscapeGrid grid = kind == SurfaceKind::Loss
                             ? loss_surface(net, ckpt.parameters, split, pair, axis, axis, g.workers)
                             : gradient_variance_surface(net, ckpt.parameters, split, pair, axis, axis, kind, g.workers);
    grid.metadata = {{"seed", g.seed},
                     {"checkpoint", fs::path(ckpt_path).filename().string()},
                     {"checkpoint_fnv1a64", hex64(fnv1a(bytes))},
                     {"dataset", to_json(spec)},
                     {"split", split_name},
                     {"instances", split.size()},
                     {"normalization", to_string(normalization)},
                     {"zero_blocks", pair.zero_blocks}};

    const fs::path out_path = g.out;
    if (out_path.extension() == ".json") run.write(out_path, to_json(grid).dump(2) + "\n");
    else run.write(out_path, grid_csv(grid));

    const std::size_t centre = points / 2;
    run.summary() = {{"mode", to_string(kind)},
                     {"points", grid.values.size()},
                     {"overflow_count", grid.overflow_count()},
                     {"center_value", std::isfinite(grid.at(centre, centre)) ? json(grid.at(centre, centre)) : json("inf")},
                     {"zero_blocks", pair.zero_blocks}};
    run.finish(manifest_path_for_file(out_path), kExitOk);
    return kExitOk;
}

int cmd_adapt(Run& run, const Globals& g, const GenotypeArg& ga, std::ostream& out) {
    const CellGenotype adapted = adapt_to_widest_shallowest(ga.load());
    if (g.out.empty()) {
        out << genotype_to_json(adapted).dump(2) << '\n';
        return kExitOk;
    }
    run.write(g.out, genotype_to_json(adapted).dump(2) + "\n");
    run.summary() = shape_json(adapted);
    run.finish(manifest_path_for_file(g.out), kExitOk);
    const auto r = width_depth(validate_genotype(adapted));
    out << adapted.name << ": width " << to_string(r.width_in_c) << "c, depth " << r.depth << '\n';
    return kExitOk;
}

std::optional<fs::path> artifact_with(const json& manifest, const fs::path& dir, std::string_view suffix) {
    for (const auto& a : manifest.value("artifacts", json::array())) {
        const std::string p = a.value("path", "");
        if (p.size() >= suffix.size() && p.compare(p.size() - suffix.size(), suffix.size(), suffix) == 0) return dir / p;
    }
    return std::nullopt;
}

json trace_rows(const fs::path& csv) {
    std::istringstream in(read_file(csv));
    std::string line;
    std::getline(in, line);
    json rows = json::array();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (f.size() != 5) throw Error(ErrorKind::ParseError, csv.string() + ": malformed trace row '" + line + "'");
        const auto num = [](const std::string& s) {
            const double v = std::strtod(s.c_str(), nullptr);
            return std::isfinite(v) ? json(v) : json("inf");
        };
        rows.push_back({{"epoch", std::stoul(f[0])}, {"lr", num(f[1])}, {"train_loss", num(f[2])},
                        {"test_loss", num(f[3])}, {"test_acc", num(f[4])}});
    }
    return rows;
}

int cmd_report(Run& run, const Globals& g, const std::string& dir_arg, std::ostream& out) {
    const fs::path dir = dir_arg;
    if (!fs::is_directory(dir)) throw Error(ErrorKind::IoFailure, dir.string() + " is not a directory");
    std::vector<std::pair<fs::path, json>> manifests;
    for (const auto& p : find_manifests(dir)) {
        json m = read_json(p);
        if (m.value("command", "") == "report") continue;
        manifests.emplace_back(p, std::move(m));
    }
    if (manifests.empty()) throw Error(ErrorKind::MissingManifest, "no run manifests under " + dir.string());

    json runs = json::array(), traces = json::array(), theorems = json::array(), comparisons = json::array(),
         grids = json::array();
    std::size_t divergences = 0, violations = 0;
    std::ostringstream lines;
    for (const auto& [path, m] : manifests) {
        const std::string cmd = m.value("command", "");
        const fs::path base = path.parent_path();
        const std::string rel = path.lexically_relative(dir).generic_string();
        const json summary = m.value("summary", json::object());
        runs.push_back({{"manifest", rel}, {"command", cmd}, {"exit_code", m.value("exit_code", 0)}, {"summary", summary}});
        if (cmd == "train") {
            json rows = json::array();
            if (auto csv = artifact_with(m, base, "trace.csv")) rows = trace_rows(*csv);
            const bool diverged = summary.value("diverged", false);
            divergences += diverged;
            traces.push_back({{"manifest", rel}, {"genotype", summary.value("genotype", "")}, {"diverged", diverged},
                              {"final_test_accuracy", summary.value("final_test_accuracy", 0.0)}, {"rows", rows}});
            lines << "train    " << rel << ": " << summary.value("genotype", "?") << ", final test accuracy "
                  << summary.value("final_test_accuracy", 0.0) << (diverged ? "  [DIVERGED]" : "") << '\n';
        } else if (cmd == "theory") {
            const std::size_t bad = summary.value("smoothness_violations", std::size_t{0}) +
                                    summary.value("variance_violations", std::size_t{0});
            violations += bad;
            json doc = json::object();
            if (auto f = artifact_with(m, base, ".json")) doc = read_json(*f);
            theorems.push_back({{"manifest", rel}, {"summary", summary},
                                {"violating_instances", doc.value("violating_instances", json::array())}});
            lines << "theory   " << rel << ": " << summary.value("blocks_checked", 0) << " blocks, "
                  << summary.value("smoothness_violations", 0) << " smoothness and "
                  << summary.value("variance_violations", 0) << " variance violations\n";
        } else if (cmd == "compare") {
            const std::size_t bad = summary.value("diverged_runs", std::size_t{0});
            divergences += bad;
            json doc = json::object();
            if (auto f = artifact_with(m, base, ".json")) doc = read_json(*f);
            comparisons.push_back({{"manifest", rel}, {"summaries", doc.value("summaries", json::array())},
                                   {"ranking", doc.value("ranking", json::array())}});
            lines << "compare  " << rel << ": " << summary.value("runs", 0) << " runs, " << bad << " diverged\n";
        } else if (cmd == "landscape") {
            json grid = json::object();
            if (auto f = artifact_with(m, base, ".csv")) grid = to_json(import_grid_csv(*f));
            else if (auto j = artifact_with(m, base, ".json")) grid = read_json(*j);
            grids.push_back({{"manifest", rel}, {"summary", summary}, {"grid", grid}});
            lines << "landscape " << rel << ": " << summary.value("mode", "?") << ", "
                  << summary.value("points", 0) << " points, " << summary.value("overflow_count", 0) << " overflow\n";
        } else {
            lines << cmd << ' ' << rel << '\n';
        }
    }

    out << "report over " << manifests.size() << " manifest(s) in " << dir.string() << '\n';
    if (violations) out << "!! THEOREM BOUND VIOLATIONS: " << violations << '\n';
    if (divergences) out << "!! DIVERGED RUNS: " << divergences << '\n';
    out << lines.str();

    const json doc = {{"runs", runs},           {"traces", traces}, {"theorems", theorems},
                      {"comparisons", comparisons}, {"grids", grids},   {"divergences", divergences},
                      {"violations", violations}};
    const fs::path out_path = g.out.empty() ? dir / "report.json" : fs::path(g.out);
    run.write(out_path, doc.dump(2) + "\n");
    run.summary() = {{"divergences", divergences}, {"violations", violations}};
    const int code = violations ? kExitViolation : divergences ? kExitDivergence : kExitOk;
    run.finish(manifest_path_for_file(out_path), code);
    return code;
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ParseError:
        case ErrorKind::IoFailure:
            return kExitUsage;
        default:
            return kExitValidation;
    }
}

}  // namespace

fs::path manifest_path_for_file(const fs::path& artifact) {
    fs::path p = artifact;
    p += ".manifest.json";
    return p;
}

std::vector<fs::path> find_manifests(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (name == "manifest.json" || (name.size() > 14 && name.ends_with(".manifest.json"))) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cell topology metrics, variant sampling, desk-scale training and landscape tools", "cellnas"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    Globals g;
    app.add_option("--seed", g.seed, "Root seed; every random draw derives from it");
    app.add_option("--workers", g.workers, "Worker threads where results do not depend on scheduling")
        ->check(CLI::PositiveNumber);
    app.add_option("--out", g.out, "Output file (a FILE.manifest.json is written next to it)");
    app.add_option("--out-dir", g.out_dir, "Output directory (gets a manifest.json)");

    GenotypeArg ga;
    NetworkConfig nc;
    TrainConfig tc;
    std::string dataset_path;

    auto* analyze = app.add_subcommand("analyze", "Width, depth and per-node widths of a genotype");
    std::string analyze_file;
    bool analyze_all = false;
    analyze->add_option("file", analyze_file, "Genotype JSON file");
    ga.attach(analyze);
    analyze->add_flag("--all-builtin", analyze_all, "Analyze every bundled genotype");

    auto* variants = app.add_subcommand("variants", "Sample random connection or operation variants");
    std::string mode = "connection";
    std::size_t count = 4;
    std::vector<std::string> ops{"sep_conv_3x3", "sep_conv_5x5", "dil_conv_3x3", "dil_conv_5x5",
                                 "max_pool_3x3", "avg_pool_3x3", "skip_connect"};
    ga.attach(variants);
    variants->add_option("--mode", mode, "connection or operation");
    variants->add_option("--count", count, "Number of variants");
    variants->add_option("--ops", ops, "Operation set for operation variants")->delimiter(',');

    auto* count_cmd = app.add_subcommand("count", "Connection-variant counts by formula and by enumeration");
    std::size_t nodes = 7, inputs = 2;
    count_cmd->add_option("--nodes,-N", nodes, "Nodes N in the cell, inputs and output included");
    count_cmd->add_option("--inputs,-M", inputs, "Input nodes M");
    bool enumerate = false;
    count_cmd->add_flag("--enumerate", enumerate, "Also enumerate the deduplicated slot assignments");
    ga.attach(count_cmd);

    auto* theory = app.add_subcommand("theory", "Check the widest/narrowest linear-cell bounds on random instances");
    std::size_t instances = 100, max_blocks = 4, max_dim = 8, trials = 200, samples = 2000;
    std::string check = "both";
    theory->add_option("--instances", instances);
    theory->add_option("--n", max_blocks, "Instances draw n uniformly from 1..N");
    theory->add_option("--dim", max_dim, "Instances draw d uniformly from 1..D");
    theory->add_option("--trials", trials, "Perturbation pairs per smoothness check");
    theory->add_option("--samples", samples, "Monte-Carlo inputs per variance check");
    theory->add_option("--check", check, "both, smoothness or variance");

    const auto attach_training = [&](CLI::App* sub) {
        sub->add_option("--layers", nc.layers, "Stacked cells L");
        sub->add_option("--dim", nc.dim, "Feature dimension d");
        sub->add_option("--epochs", tc.epochs);
        sub->add_option("--batch-size", tc.batch_size);
        sub->add_option("--momentum", tc.momentum);
        sub->add_option("--weight-decay", tc.weight_decay);
        sub->add_option("--dataset-spec", dataset_path, "Dataset spec JSON (seed defaults to --seed)");
    };

    auto* train_cmd = app.add_subcommand("train", "Train one genotype and write trace.csv and final.ckpt");
    ga.attach(train_cmd);
    attach_training(train_cmd);
    train_cmd->add_option("--lr", tc.lr, "Base learning rate");

    auto* compare = app.add_subcommand("compare", "Convergence comparison across genotypes, learning rates and seeds");
    std::string genotype_dir, ladder;
    std::vector<std::string> builtins;
    std::vector<double> lrs{0.0025, 0.025, 0.25};
    std::size_t seeds = 5;
    double threshold = ConvergenceOptions{}.threshold;
    compare->add_option("--genotypes", genotype_dir, "Directory of genotype JSON files");
    compare->add_option("--ladder", ladder, "Genotype (file or built-in) expanded to chain, original, adapted");
    compare->add_option("--builtins", builtins, "Comma-separated built-in genotypes")->delimiter(',');
    compare->add_option("--lrs", lrs, "Comma-separated base learning rates")->delimiter(',');
    compare->add_option("--seeds", seeds, "Training seeds per run: --seed .. --seed + K - 1");
    compare->add_option("--threshold", threshold, "Test loss that counts as converged");
    attach_training(compare);

    auto* landscape = app.add_subcommand("landscape", "Loss or gradient-variance surface around a checkpoint");
    std::string ckpt_path, surface = "loss", norm = "blockwise", split_name = "test";
    std::size_t grid_points = 41, subset = 256, ls_layers = 0, ls_dim = 0;
    double range = 1.0;
    landscape->add_option("--checkpoint", ckpt_path)->required();
    ga.attach(landscape);
    landscape->add_option("--dataset-spec", dataset_path, "Defaults to the spec stored in the checkpoint");
    landscape->add_option("--layers", ls_layers, "Defaults to the checkpoint's network");
    landscape->add_option("--dim", ls_dim, "Defaults to the checkpoint's network");
    landscape->add_option("--mode", surface, "loss, gradvar or gradstd");
    landscape->add_option("--grid", grid_points, "Odd number of points per axis");
    landscape->add_option("--range", range, "Axes span [-range, range]");
    landscape->add_option("--norm", norm, "blockwise or none");
    landscape->add_option("--split", split_name, "test or train");
    landscape->add_option("--subset", subset, "Evaluation instances drawn from the split");

    auto* adapt = app.add_subcommand("adapt", "Rewire a genotype into its widest and shallowest form");
    ga.attach(adapt);

    auto* report = app.add_subcommand("report", "Merge the manifests and artifacts under a directory");
    std::string report_dir;
    report->add_option("dir", report_dir, "Run directory")->required();

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    std::vector<std::string> argv_store{"cellnas"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_store) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        Run run(sub->get_name(), app, *sub);
        if (sub == analyze) return cmd_analyze(run, g, ga, analyze_file, analyze_all, out);
        if (sub == variants) return cmd_variants(run, g, ga, mode, count, ops, out);
        if (sub == count_cmd) return cmd_count(run, g, nodes, inputs, enumerate, ga, out);
        if (sub == theory) return cmd_theory(run, g, instances, max_blocks, max_dim, trials, samples, check, out, err);
        if (sub == train_cmd) return cmd_train(run, g, ga, nc, tc, dataset_path);
        if (sub == compare) {
            return cmd_compare(run, g, genotype_dir, ladder, builtins, lrs, seeds, threshold, nc, tc, dataset_path, out);
        }
        if (sub == landscape) {
            return cmd_landscape(run, g, ckpt_path, ga, dataset_path, ls_layers, ls_dim, surface, grid_points, range,
                                 norm, split_name, subset);
        }
        if (sub == adapt) return cmd_adapt(run, g, ga, out);
        if (sub == report) return cmd_report(run, g, report_dir, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const json::exception& e) {
        err << "error: malformed input: " << e.what() << '\n';
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace cellnas

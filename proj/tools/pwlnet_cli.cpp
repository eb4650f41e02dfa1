// Command-line front end: wires JSON configs to the library and emits CSV/JSON
// artifacts plus a manifest.  Exit codes: 0 ok, 2 config error, 3 numerical
// failure, 4 grazing event.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <json.hpp>

#include "pwlnet/continuation.hpp"
#include "pwlnet/io.hpp"

using nlohmann::json;
using namespace pwlnet;

namespace {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_keys(const json& obj, const std::vector<std::string>& allowed,
                  const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + ": object expected");
    for (const auto& [key, value] : obj.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError(where + ": unknown key '" + key + "'");
}

double num(const json& j, const std::string& key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

NodeModel parse_model(const json& j) {
    require_keys(j, {"name", "params"}, "model");
    const std::string name = j.at("name").get<std::string>();
    const json p = j.value("params", json::object());
    if (name == "pwl_if" || name == "pwl_if_synaptic") {
        require_keys(p, {"a_L", "a_R", "a_w", "b_w", "tau", "I", "v_th", "v_r", "kappa",
                         "alpha"},
                     "model.params");
        PwlIfParams mp;
        mp.a_L = num(p, "a_L", mp.a_L);
        mp.a_R = num(p, "a_R", mp.a_R);
        mp.a_w = num(p, "a_w", mp.a_w);
        mp.b_w = num(p, "b_w", mp.b_w);
        mp.tau = num(p, "tau", mp.tau);
        mp.I = num(p, "I", mp.I);
        mp.v_th = num(p, "v_th", mp.v_th);
        mp.v_r = num(p, "v_r", mp.v_r);
        mp.kappa = num(p, "kappa", mp.kappa);
        mp.alpha = num(p, "alpha", mp.alpha);
        return build_pwl_if(mp, name == "pwl_if_synaptic");
    }
    if (name == "absolute") {
        require_keys(p, {"g", "vbar", "wbar"}, "model.params");
        AbsoluteParams mp;
        mp.g = num(p, "g", mp.g);
        mp.vbar = num(p, "vbar", mp.vbar);
        mp.wbar = num(p, "wbar", mp.wbar);
        return build_absolute(mp);
    }
    if (name == "pml") {
        require_keys(p, {"gamma1", "gamma2", "C", "I", "a", "b", "bstar"}, "model.params");
        PmlParams mp;
        mp.gamma1 = num(p, "gamma1", mp.gamma1);
        mp.gamma2 = num(p, "gamma2", mp.gamma2);
        mp.C = num(p, "C", mp.C);
        mp.I = num(p, "I", mp.I);
        mp.a = num(p, "a", mp.a);
        mp.b = num(p, "b", mp.b);
        mp.bstar = num(p, "bstar", mp.bstar);
        return build_pml(mp);
    }
    throw ConfigError("model.name: unknown model '" + name + "'");
}

struct NetworkSpec {
    bool single = false;
    Mat matrix;           // empty for single-node runs
    CouplingMode mode = CouplingMode::Laplacian;
    double sigma = 0.0;
    int h_out = 0, h_in = 0;
};

NetworkSpec parse_network(const json& cfg) {
    NetworkSpec ns;
    const json net = cfg.value("network", json{{"single", true}});
    require_keys(net, {"single", "builtin", "ring", "matrix_file"}, "network");
    if (net.value("single", false)) {
        ns.single = true;
    } else if (net.contains("builtin")) {
        const std::string b = net.at("builtin").get<std::string>();
        if (b != "five_node") throw ConfigError("network.builtin: unknown '" + b + "'");
        ns.matrix = five_node_laplacian();
    } else if (net.contains("ring")) {
        const json r = net.at("ring");
        require_keys(r, {"N", "d"}, "network.ring");
        ns.matrix = ring_coupling(r.at("N").get<int>(), r.at("d").get<double>()).matrix;
        ns.mode = CouplingMode::Adjacency;
    } else if (net.contains("matrix_file")) {
        ns.matrix = io::read_matrix(net.at("matrix_file").get<std::string>());
    } else {
        throw ConfigError("network: one of single/builtin/ring/matrix_file required");
    }

    if (cfg.contains("coupling")) {
        const json c = cfg.at("coupling");
        require_keys(c, {"mode", "sigma", "h_out", "h_in"}, "coupling");
        if (c.contains("mode")) {
            const std::string m = c.at("mode").get<std::string>();
            if (m == "laplacian")
                ns.mode = CouplingMode::Laplacian;
            else if (m == "adjacency")
                ns.mode = CouplingMode::Adjacency;
            else
                throw ConfigError("coupling.mode: 'laplacian' or 'adjacency' expected");
        }
        ns.sigma = num(c, "sigma", 0.0);
        ns.h_out = c.value("h_out", 0);
        ns.h_in = c.value("h_in", 0);
    }
    return ns;
}

PiecewiseAffineSystem make_system(const NodeModel& node, const NetworkSpec& ns) {
    if (ns.single) return single_node(node);
    CouplingSpec spec;
    spec.matrix = ns.matrix;
    spec.mode = ns.mode;
    spec.strength = ns.sigma;
    spec.h_out = ns.h_out;
    spec.h_in = ns.h_in;
    return build_network(node, spec);
}

Vec parse_initial(const json& task, const PiecewiseAffineSystem& sys, std::uint64_t seed) {
    if (task.contains("initial")) {
        const auto v = task.at("initial").get<std::vector<double>>();
        if (static_cast<int>(v.size()) != sys.dim())
            throw ConfigError("task.initial: expected " + std::to_string(sys.dim()) +
                              " entries");
        return Eigen::Map<const Vec>(v.data(), v.size());
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-0.5, 0.5);
    Vec z0(sys.dim());
    for (int i = 0; i < z0.size(); ++i) z0[i] = dist(rng);
    if (task.contains("sync_start") && task.at("sync_start").get<bool>()) {
        // identical node states plus a small jitter, for synchrony experiments
        const double jit = num(task, "jitter", 1e-4);
        const int m = sys.node.dim;
        for (int i = 1; i < sys.n_nodes; ++i)
            z0.segment(i * m, m) =
                z0.head(m) + Vec::NullaryExpr(m, [&](int) { return jit * dist(rng); });
    }
    return z0;
}

ClusterPartition select_partition(const json& task, const Mat& G) {
    const auto symmetry = enumerate_symmetry_clusters(G);
    const auto laplacian = enumerate_laplacian_clusters(G);
    std::vector<ClusterPartition> catalog = symmetry;
    catalog.insert(catalog.end(), laplacian.partitions.begin(), laplacian.partitions.end());
    if (task.contains("partition_index")) {
        const int idx = task.at("partition_index").get<int>();
        if (idx < 0 || idx >= static_cast<int>(catalog.size()))
            throw ConfigError("task.partition_index out of range");
        return catalog[idx];
    }
    if (task.contains("partition")) {
        ClusterPartition wanted =
            partition_from_blocks(task.at("partition").get<std::vector<std::vector<int>>>());
        for (const auto& p : catalog)
            if (p.same_blocks(wanted)) return p;
        throw ConfigError("task.partition: not in the cluster catalog");
    }
    throw ConfigError("task: partition or partition_index required");
}

struct Emitter {
    std::filesystem::path dir;
    json manifest_files = json::array();
    std::uint64_t input_hash = 0;

    void csv(const std::string& name, const std::string& content) {
        io::write_text_atomic((dir / name).string(), content);
        manifest_files.push_back(name);
    }
    void js(const std::string& name, const json& j) { csv(name, j.dump(2) + "\n"); }
    void manifest() {
        json m;
        m["input_hash"] = input_hash;
        m["files"] = manifest_files;
        io::write_text_atomic((dir / "manifest.json").string(), m.dump(2) + "\n");
    }
};

int run_task(const std::string& cmd, const json& cfg, Emitter& out, std::uint64_t seed,
             int threads) {
    require_keys(cfg, {"model", "network", "coupling", "task", "tolerances", "seed",
                       "threads"},
                 "config");
    const NodeModel node = parse_model(cfg.at("model"));
    const NetworkSpec ns = parse_network(cfg);
    const json task = cfg.value("task", json::object());

    NewtonSettings newton;
    if (cfg.contains("tolerances")) {
        const json t = cfg.at("tolerances");
        require_keys(t, {"newton_residual", "match_tol"}, "tolerances");
        newton.residual_tol = num(t, "newton_residual", newton.residual_tol);
    }
    const double match_tol = cfg.contains("tolerances")
                                 ? num(cfg.at("tolerances"), "match_tol", 1e-4)
                                 : 1e-4;

    if (cmd == "simulate") {
        require_keys(task, {"t_end", "dt_sample", "initial", "sync_start", "jitter"},
                     "task");
        const PiecewiseAffineSystem sys = make_system(node, ns);
        const Vec z0 = parse_initial(task, sys, seed);
        auto traj = simulate_capped(sys, z0, num(task, "t_end", 100.0));
        if (!traj) throw NumericalError("simulation diverged");
        out.csv("trajectory.csv",
                io::trajectory_csv(sys, *traj, num(task, "dt_sample", 0.1)));
        out.csv("events.csv", io::events_csv(sys, *traj));
        out.csv("raster.csv", io::raster_csv(sys, *traj));
        return 0;
    }
    if (cmd == "orbit") {
        require_keys(task, {"t_settle", "initial", "anchor_plane", "sync_start", "jitter"},
                     "task");
        const PiecewiseAffineSystem sys = make_system(node, ns);
        const Vec z0 = parse_initial(task, sys, seed);
        const PeriodicOrbit orbit = find_orbit(sys, z0, num(task, "t_settle", 200.0),
                                               newton, task.value("anchor_plane", -1),
                                               match_tol);
        out.js("orbit.json", io::orbit_json(orbit));
        const MonodromyReport rep = floquet_report(sys, orbit);
        out.csv("multipliers.csv", io::multipliers_csv(rep));
        out.js("report.json", io::report_json(rep));
        return 0;
    }
    if (cmd == "msf") {
        require_keys(task, {"t_settle", "initial", "rect", "resolution"}, "task");
        const PiecewiseAffineSystem sys = single_node(node);
        const Vec z0 = parse_initial(task, sys, seed);
        const PeriodicOrbit orbit =
            find_orbit(sys, z0, num(task, "t_settle", 200.0), newton, -1, match_tol);
        std::vector<double> rect = {-1.5, 0.5, -1.0, 1.0};
        if (task.contains("rect")) rect = task.at("rect").get<std::vector<double>>();
        if (rect.size() != 4) throw ConfigError("task.rect: four numbers expected");
        std::vector<int> res = {401, 401};
        if (task.contains("resolution"))
            res = task.at("resolution").get<std::vector<int>>();
        if (res.size() != 2) throw ConfigError("task.resolution: two integers expected");
        Mat DH = CouplingSpec{Mat(), ns.mode, 0.0, ns.h_out, ns.h_in}.dh(node.dim);
        const MSFGrid grid = msf(sys, orbit, DH, ns.mode, rect[0], rect[1], rect[2],
                                 rect[3], res[0], res[1], threads);
        out.csv("msf_grid.csv", io::msf_grid_csv(grid));
        out.csv("msf_contour.csv", io::msf_contour_csv(grid));
        return 0;
    }
    if (cmd == "clusters") {
        require_keys(task, {}, "task");
        if (ns.single) throw ConfigError("clusters: a network is required");
        out.js("clusters.json",
               io::catalog_json(enumerate_symmetry_clusters(ns.matrix),
                                enumerate_laplacian_clusters(ns.matrix)));
        return 0;
    }
    if (cmd == "blockdiag") {
        require_keys(task, {"partition", "partition_index"}, "task");
        if (ns.single) throw ConfigError("blockdiag: a network is required");
        const ClusterPartition part = select_partition(task, ns.matrix);
        out.js("blockdiag.json",
               io::blockdiag_json(diagonalize_partition(ns.matrix, part, seed)));
        return 0;
    }
    if (cmd == "floquet") {
        require_keys(task, {"partition", "partition_index", "t_settle", "initial"},
                     "task");
        if (ns.single) throw ConfigError("floquet: a network is required");
        const ClusterPartition part = select_partition(task, ns.matrix);
        ClusterStateProblem prob{node, ns.matrix, ns.mode, ns.h_out, ns.h_in,
                                 diagonalize_partition(ns.matrix, part, seed)};
        const PiecewiseAffineSystem quot = prob.quotient(ns.sigma);
        const Vec z0 = parse_initial(task, quot, seed);
        auto traj = simulate_capped(quot, z0, num(task, "t_settle", 200.0));
        if (!traj) throw NumericalError("settling simulation diverged");
        SeedResult sr = extract_sequence(quot, *traj, match_tol);
        auto [orbit, rep] = prob.solve_at(ns.sigma, sr.sequence, sr.guess, newton);
        out.js("orbit.json", io::orbit_json(orbit));
        out.csv("multipliers.csv", io::multipliers_csv(rep));
        out.js("report.json", io::report_json(rep));
        return 0;
    }
    if (cmd == "bifurcate") {
        require_keys(task, {"partition", "partition_index", "sigma_range", "step",
                            "t_settle", "all_states"},
                     "task");
        if (ns.single) throw ConfigError("bifurcate: a network is required");
        std::vector<double> range = {0.0, 0.1};
        if (task.contains("sigma_range"))
            range = task.at("sigma_range").get<std::vector<double>>();
        if (range.size() != 2) throw ConfigError("task.sigma_range: two numbers expected");

        ContinuationSettings cs;
        cs.step = num(task, "step", 1e-3);
        cs.newton = newton;

        std::vector<Branch> branches;
        if (task.value("all_states", false)) {
            auto catalog = enumerate_symmetry_clusters(ns.matrix);
            const auto lap = enumerate_laplacian_clusters(ns.matrix);
            catalog.insert(catalog.end(), lap.partitions.begin(), lap.partitions.end());
            ScanSettings ss;
            ss.continuation = cs;
            ss.settle_time = num(task, "t_settle", 400.0);
            ss.seed = static_cast<unsigned>(seed);
            branches = scan_states(node, ns.matrix, ns.mode, ns.h_out, ns.h_in, catalog,
                                   range[0], range[1], ss);
        } else {
            const ClusterPartition part = select_partition(task, ns.matrix);
            ClusterStateProblem prob{node, ns.matrix, ns.mode, ns.h_out, ns.h_in,
                                     diagonalize_partition(ns.matrix, part, seed)};
            const double sigma0 = 0.5 * (range[0] + range[1]);
            const PiecewiseAffineSystem quot = prob.quotient(sigma0);
            std::mt19937_64 rng(seed);
            std::uniform_real_distribution<double> dist(-0.5, 0.5);
            Vec z0(quot.dim());
            for (int i = 0; i < z0.size(); ++i) z0[i] = dist(rng);
            auto traj = simulate_capped(quot, z0, num(task, "t_settle", 400.0));
            if (!traj) throw NumericalError("settling simulation diverged");
            SeedResult sr = extract_sequence(quot, *traj, match_tol);
            PeriodicOrbit seeded = shoot(quot, sr.sequence, sr.guess, newton);
            branches.push_back(continue_branch(prob, seeded, sigma0, range[0], cs));
            branches.push_back(continue_branch(prob, seeded, sigma0, range[1], cs));
        }
        out.csv("branches.csv", io::branches_csv(branches));
        out.csv("bifurcations.csv", io::bifurcations_csv(branches));
        return 0;
    }
    throw ConfigError("unknown task '" + cmd + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"piecewise-linear oscillator network toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::uint64_t seed = 12345;
    int threads = 0;
    const std::vector<std::string> commands = {"simulate", "orbit",    "msf",      "clusters",
                                               "blockdiag", "floquet", "bifurcate"};
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c);
        sub->add_option("--config", config_path, "JSON config file")->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed, "RNG seed");
        sub->add_option("--threads", threads, "worker threads (0 = PWLC_THREADS or 1)");
    }
    CLI11_PARSE(app, argc, argv);
    const std::string cmd = app.get_subcommands().front()->get_name();

    if (threads <= 0) {
        const char* env = std::getenv("PWLC_THREADS");
        threads = env ? std::max(1, std::atoi(env)) : 1;
    }

    Emitter out;
    out.dir = out_dir;
    try {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot open config " + config_path);
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        out.input_hash = io::fnv1a(text);
        json cfg;
        try {
            cfg = json::parse(text);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        if (cfg.contains("seed") && !app.get_subcommands().front()->count("--seed"))
            seed = cfg.at("seed").get<std::uint64_t>();
        if (cfg.contains("threads") && threads == 1)
            threads = cfg.at("threads").get<int>();

        const int rc = run_task(cmd, cfg, out, seed, threads);
        out.manifest();
        return rc;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const GrazingError& e) {
        std::cerr << "grazing: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        json diag;
        diag["error"] = e.what();
        try {
            io::write_text_atomic((out.dir / "error.json").string(), diag.dump(2) + "\n");
        } catch (...) {
        }
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    }
}

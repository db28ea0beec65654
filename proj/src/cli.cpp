#include "increff/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "increff/efficiency.hpp"
#include "increff/errors.hpp"
#include "increff/estimator.hpp"
#include "increff/inference.hpp"
#include "increff/intervention.hpp"
#include "increff/panel.hpp"
#include "increff/simulation.hpp"

namespace increff {

namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Merged parameters: config-file values overridden by flags given on the command line.
class Params {
public:
    void set(const std::string& key, json value) { values_[key] = std::move(value); }
    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string str(const std::string& key, const std::string& fallback = "") const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second.is_string()) return it->second.get<std::string>();
        return it->second.dump();
    }
    std::string required_str(const std::string& key) const {
        if (!has(key)) throw ConfigError("missing required parameter '" + key + "'");
        return str(key);
    }
    double real(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (v.is_number()) return v.get<double>();
        return parse_real(key, str(key));
    }
    long long integer(const std::string& key, long long fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (v.is_number_integer()) return v.get<long long>();
        if (v.is_number()) throw ConfigError("parameter '" + key + "' must be an integer");
        return parse_integer(key, str(key));
    }
    std::uint64_t seed() const {
        if (!has("seed")) throw ConfigError("a seed is required (--seed or \"seed\" in the config file)");
        const auto& v = values_.at("seed");
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
        const std::string s = str("seed");
        try {
            std::size_t used = 0;
            const auto x = std::stoull(s, &used);
            if (used == s.size() && s.find('-') == std::string::npos) return x;
        } catch (const std::exception&) {
        }
        throw ConfigError("seed must be a non-negative integer, got '" + s + "'");
    }
    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = values_.at(key);
        if (v.is_boolean()) return v.get<bool>();
        const std::string s = str(key);
        if (s == "true" || s == "1" || s == "yes") return true;
        if (s == "false" || s == "0" || s == "no") return false;
        throw ConfigError("parameter '" + key + "' must be a boolean");
    }
    std::vector<double> reals(const std::string& key) const {
        std::vector<double> out;
        const auto& v = values_.at(key);
        if (v.is_array()) {
            for (const auto& x : v) {
                if (!x.is_number()) throw ConfigError("parameter '" + key + "' must be a list of numbers");
                out.push_back(x.get<double>());
            }
            return out;
        }
        std::stringstream ss(str(key));
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(parse_real(key, item));
        return out;
    }
    json to_json() const {
        json j = json::object();
        for (const auto& [k, v] : values_) j[k] = v;
        return j;
    }

private:
    static double parse_real(const std::string& key, const std::string& s) {
        try {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used == s.size()) return v;
        } catch (const std::exception&) {
        }
        throw ConfigError("parameter '" + key + "' must be a number, got '" + s + "'");
    }
    static long long parse_integer(const std::string& key, const std::string& s) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(s, &used);
            if (used == s.size()) return v;
        } catch (const std::exception&) {
        }
        throw ConfigError("parameter '" + key + "' must be an integer, got '" + s + "'");
    }
    std::map<std::string, json> values_;
};

struct OptionTable {
    std::map<std::string, std::string> storage;
    std::map<std::string, CLI::Option*> options;
    std::map<std::string, bool> flags;
    std::map<std::string, CLI::Option*> flag_options;

    void add(CLI::App* app, const std::string& key, const std::string& help) {
        options[key] = app->add_option("--" + key, storage[key], help);
    }
    void add_flag(CLI::App* app, const std::string& key, const std::string& help) {
        flag_options[key] = app->add_flag("--" + key, flags[key], help);
    }
};

Params merge(const OptionTable& table) {
    Params p;
    auto cfg_it = table.options.find("config");
    if (cfg_it != table.options.end() && cfg_it->second->count() > 0) {
        const std::string path = table.storage.at("config");
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file '" + path + "'");
        json cfg;
        try {
            cfg = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
        }
        if (!cfg.is_object()) throw ConfigError("config file must hold a JSON object");
        for (auto it = cfg.begin(); it != cfg.end(); ++it) {
            if (!table.options.count(it.key()) && !table.flag_options.count(it.key()))
                throw ConfigError("unknown config key '" + it.key() + "'");
            p.set(it.key(), it.value());
        }
    }
    for (const auto& [key, opt] : table.options)
        if (key != "config" && opt->count() > 0) p.set(key, table.storage.at(key));
    for (const auto& [key, opt] : table.flag_options)
        if (opt->count() > 0) p.set(key, table.flags.at(key));
    return p;
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path.string() + "'");
    out << text;
}

DeltaGrid grid_from(const Params& p, double lo, double hi, int count) {
    if (p.has("deltas")) return grid_from_values(p.reals("deltas"));
    return make_grid(p.real("delta-lo", lo), p.real("delta-hi", hi), static_cast<int>(p.integer("delta-count", count)),
                     parse_spacing(p.str("spacing", "log")));
}

NuisanceSpecs learners_from(const Params& p) {
    NuisanceSpecs s;
    s.pi = parse_learner(p.str("pi-learner", "logistic"));
    s.omega = parse_learner(p.str("omega-learner", "logistic"));
    s.m = parse_learner(p.str("m-learner", "ridge:1"));
    if (s.m.kind == LearnerSpec::Kind::logistic_irls) throw ConfigError("the outcome learner must be a regressor");
    s.options.eps_clip = p.real("eps-clip", s.options.eps_clip);
    s.options.eps_omega = p.real("eps-omega", s.options.eps_omega);
    return s;
}

json stages_json(const std::vector<StageDiagnostics>& stages) {
    json arr = json::array();
    for (const auto& s : stages)
        arr.push_back({{"t", s.t},
                       {"n_train", s.n_train},
                       {"iterations", s.iterations},
                       {"converged", s.converged},
                       {"constant", s.constant},
                       {"underdetermined", s.underdetermined}});
    return arr;
}

DgpConfig dgp_from(const Params& p, std::uint64_t seed) {
    DgpConfig c;
    c.kind = parse_dgp_kind(p.str("kind", "dropout"));
    c.n = static_cast<std::size_t>(p.integer("n", 1000));
    c.T = static_cast<int>(p.integer("t", 10));
    c.u_l = p.real("ul", 1.0);
    c.p = p.real("p", 0.5);
    c.seed = seed;
    if (p.integer("n", 1000) < 1) throw ConfigError("n must be at least 1");
    c.validate();
    return c;
}

// ---------------------------------------------------------------- commands

int cmd_estimate(const Params& p, std::ostream& out) {
    const std::uint64_t seed = p.seed();
    CsvSchema schema;
    if (p.has("horizon")) schema.horizon = static_cast<int>(p.integer("horizon", 0));
    const PanelDataset ds = load_long_csv(p.required_str("input"), schema);
    const std::string dir = p.required_str("out");
    const int K = static_cast<int>(p.integer("K", 2));
    const double alpha = p.real("alpha", 0.05);
    const int B = static_cast<int>(p.integer("B", 10000));
    const int threads = static_cast<int>(p.integer("threads", 1));
    const std::string kind = p.str("estimator", "cross_fit");
    const bool pool = p.flag("pool-horizons", false);
    const DeltaGrid grid = grid_from(p, 0.1, 5.0, 25);
    const NuisanceSpecs specs = learners_from(p);
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (B < 100) throw ConfigError("B must be at least 100");

    std::vector<int> horizons;
    if (p.has("horizons")) {
        for (double h : p.reals("horizons")) horizons.push_back(static_cast<int>(h));
    } else {
        horizons.push_back(static_cast<int>(p.integer("t", ds.T())));
    }
    ensure_dir(dir);

    std::vector<EstimationResult> results;
    for (int t : horizons) {
        if (t < 1 || t > ds.T()) throw ConfigError("horizon " + std::to_string(t) + " outside 1.." + std::to_string(ds.T()));
        RunOptions run{threads};
        if (kind == "cross_fit")
            results.push_back(estimate_cross_fit(ds, K, seed, specs, grid, t, run));
        else if (kind == "plugin")
            results.push_back(estimate_plugin(ds, specs, grid, t, run));
        else if (kind == "ipw")
            results.push_back(estimate_ipw(ds, specs, grid, t, run));
        else if (kind == "no_censoring")
            results.push_back(estimate_no_censoring(ds, K, seed, specs, grid, t, run));
        else
            throw ConfigError("unknown estimator '" + kind + "'");
    }

    std::vector<ConfidenceBand> bands;
    const std::uint64_t boot_seed = derive_seed(seed, {0x62616e64});
    if (pool && results.size() > 1) {
        std::vector<EifMatrix> eifs;
        std::vector<EffectEstimate> ests;
        for (const auto& r : results) {
            eifs.push_back(r.eif);
            ests.push_back(r.estimate);
        }
        bands = uniform_band_pooled(eifs, ests, alpha, B, boot_seed, threads);
    } else {
        for (const auto& r : results) bands.push_back(uniform_band(r.eif, r.estimate, alpha, B, boot_seed, threads));
    }

    json diag;
    diag["command"] = "estimate";
    diag["config"] = p.to_json();
    diag["seed"] = seed;
    diag["n"] = ds.n();
    diag["T"] = ds.T();
    diag["d"] = ds.d();
    diag["estimator"] = kind;
    diag["learners"] = {{"pi", specs.pi.name()}, {"omega", specs.omega.name()}, {"m", specs.m.name()}};
    diag["grid"] = grid.values;
    diag["horizons"] = json::array();
    for (std::size_t h = 0; h < results.size(); ++h) {
        const auto& r = results[h];
        const auto& band = bands[h];
        const int t = horizons[h];
        const std::string suffix = results.size() > 1 ? "_t" + std::to_string(t) : "";
        std::ostringstream eff, bnd;
        eff << "delta,psi_hat,sigma_hat,n\n";
        bnd << "delta,psi_hat,pw_lo,pw_hi,unif_lo,unif_hi\n";
        for (std::size_t j = 0; j < grid.size(); ++j) {
            eff << num(grid[j]) << ',' << num(r.estimate.psi_hat[j]) << ',' << num(r.estimate.sigma_hat[j]) << ','
                << r.estimate.n << '\n';
            bnd << num(grid[j]) << ',' << num(band.psi_hat[j]) << ',' << num(band.pw_lo[j]) << ',' << num(band.pw_hi[j])
                << ',' << num(band.unif_lo[j]) << ',' << num(band.unif_hi[j]) << '\n';
        }
        write_text(fs::path(dir) / ("effect" + suffix + ".csv"), eff.str());
        write_text(fs::path(dir) / ("band" + suffix + ".csv"), bnd.str());

        json hj;
        hj["t"] = t;
        hj["fully_weighted"] = r.diagnostics.fully_weighted;
        hj["fold_sizes"] = r.estimate.fold_sizes;
        hj["fold_psi"] = r.estimate.fold_psi;
        hj["c_alpha"] = band.c_alpha;
        hj["c_alpha_bootstrap"] = band.c_alpha_bootstrap;
        hj["z"] = band.z;
        hj["alpha"] = alpha;
        hj["B"] = B;
        hj["bootstrap_seed"] = boot_seed;
        hj["pooled_band"] = pool && results.size() > 1;
        json folds = json::array();
        for (const auto& f : r.diagnostics.folds) {
            json fm = json::array();
            for (const auto& m : f.m) fm.push_back(stages_json(m));
            folds.push_back({{"fold", f.fold}, {"pi", stages_json(f.pi)}, {"omega", stages_json(f.omega)}, {"m", fm}});
        }
        hj["folds"] = folds;
        std::vector<std::string> warnings = r.diagnostics.warnings;
        warnings.insert(warnings.end(), band.warnings.begin(), band.warnings.end());
        hj["warnings"] = warnings;
        diag["horizons"].push_back(hj);
    }
    write_text(fs::path(dir) / "diagnostics.json", diag.dump(2) + "\n");
    out << "wrote " << results.size() << " effect curve(s) to " << dir << "\n";
    return 0;
}

int cmd_simulate(const Params& p, std::ostream& out) {
    const std::uint64_t seed = p.seed();
    const DgpConfig cfg = dgp_from(p, seed);
    const std::string path = p.required_str("out");
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty()) ensure_dir(parent.string());
    const PanelDataset ds = simulate(cfg);
    write_long_csv(ds, path);
    const auto meta = describe_csv(ds, path);
    json j;
    j["command"] = "simulate";
    j["config"] = p.to_json();
    j["seed"] = seed;
    j["kind"] = to_string(cfg.kind);
    j["n"] = meta.n;
    j["T"] = meta.T;
    j["d"] = meta.d;
    j["sha256"] = meta.sha256;
    j["dropout_fraction"] = dropout_fraction(ds);
    write_text(path + ".meta.json", j.dump(2) + "\n");
    out << "wrote " << ds.n() << " subjects to " << path << " (dropout " << num(100.0 * dropout_fraction(ds)) << "%)\n";
    return 0;
}

int cmd_bench(const Params& p, std::ostream& out) {
    const std::uint64_t seed = p.seed();
    BenchmarkConfig cfg;
    cfg.dgp = dgp_from(p, seed);
    cfg.S = static_cast<int>(p.integer("S", 50));
    cfg.grid = grid_from(p, 0.1, 5.0, 9);
    cfg.specs = learners_from(p);
    cfg.K = static_cast<int>(p.integer("K", 2));
    cfg.seed = seed;
    cfg.truth_m = static_cast<std::size_t>(p.integer("truth-m", 200000));
    cfg.take_sqrt = p.flag("sqrt", false);
    cfg.threads = static_cast<int>(p.integer("threads", 1));
    const std::string dir = p.required_str("out");
    ensure_dir(dir);
    const auto res = run_benchmark(cfg);

    json j;
    j["command"] = "bench";
    j["config"] = p.to_json();
    j["seed"] = seed;
    j["S"] = cfg.S;
    j["n"] = cfg.dgp.n;
    j["T"] = cfg.dgp.T;
    j["D"] = cfg.grid.size();
    j["u_l"] = cfg.dgp.u_l;
    j["kind"] = to_string(cfg.dgp.kind);
    j["sqrt"] = cfg.take_sqrt;
    j["dropout_pct"] = res.dropout_pct;
    j["psi_bar"] = res.psi_bar;
    json rmse = json::object();
    for (const auto& name : res.estimators) rmse[name] = res.rmse.at(name);
    j["rmse"] = rmse;
    j["truth"] = {{"delta", res.truth.delta}, {"psi", res.truth.psi}, {"se", res.truth.se}, {"m", res.truth.m}};
    j["warnings"] = res.warnings;
    write_text(fs::path(dir) / "bench.json", j.dump(2) + "\n");

    std::ostringstream csv;
    csv << "estimator,delta,truth,mean_estimate,bias,normalized_mse\n";
    for (const auto& name : res.estimators) {
        const auto& E = res.estimates.at(name);
        for (Eigen::Index d = 0; d < E.cols(); ++d) {
            const double mean = E.col(d).mean();
            double mse = 0.0;
            for (Eigen::Index s = 0; s < E.rows(); ++s) {
                const double e = (E(s, d) - res.truth.psi[d]) / res.psi_bar;
                mse += e * e;
            }
            mse /= static_cast<double>(E.rows());
            csv << name << ',' << num(cfg.grid[d]) << ',' << num(res.truth.psi[d]) << ',' << num(mean) << ','
                << num(mean - res.truth.psi[d]) << ',' << num(mse) << '\n';
        }
    }
    write_text(fs::path(dir) / "errors.csv", csv.str());
    for (const auto& name : res.estimators) out << name << " rmse " << num(res.rmse.at(name)) << "\n";
    out << "dropout " << num(res.dropout_pct) << "%\n";
    return 0;
}

int cmd_efficiency(const Params& p, std::ostream& out) {
    const double delta = p.real("delta", 5.0);
    const double prob = p.real("p", 0.5);
    const int tmax = static_cast<int>(p.integer("tmax", 12));
    const std::string which = p.str("variant", "both");
    std::optional<double> c;
    if (p.has("c")) c = p.real("c", 0.0);
    const std::string dir = p.required_str("out");
    const int mc_reps = static_cast<int>(p.integer("mc-reps", 0));
    ensure_dir(dir);

    std::vector<Variant> variants;
    if (which == "both") {
        variants = {Variant::always_treated, Variant::never_treated};
    } else {
        variants = {parse_variant(which)};
    }
    auto moments = [&](int T) { return trial_moments(prob, delta, T); };
    std::ostringstream csv;
    csv << "T,lower,upper,exact_ratio,variant\n";
    json j;
    j["command"] = "efficiency";
    j["config"] = p.to_json();
    j["delta"] = delta;
    j["p"] = prob;
    j["tmax"] = tmax;
    for (auto v : variants) {
        const auto rep = re_curve(moments, tmax, v, c);
        for (const auto& r : rep.rows)
            csv << r.T << ',' << num(r.lower) << ',' << num(r.upper) << ',' << num(r.exact_ratio) << ',' << to_string(v)
                << '\n';
        json vj;
        vj["crossing_T"] = rep.crossing_T ? json(*rep.crossing_T) : json(nullptr);
        if (rep.tmin) {
            vj["tmin_first_negative"] = rep.tmin->first_negative;
            vj["tmin_strict_convention"] = rep.tmin->t_min;
            vj["c1"] = rep.tmin->c1;
        }
        j[to_string(v)] = vj;
    }
    if (p.has("c1") && delta > 1.0) {
        const auto t = tmin_report(delta, prob, p.real("c1", 0.0));
        j["tmin_for_c1"] = {{"c1", t.c1}, {"first_negative", t.first_negative}, {"t_min", t.t_min}};
    }
    write_text(fs::path(dir) / "efficiency.csv", csv.str());

    if (mc_reps > 0) {
        const std::uint64_t seed = p.seed();
        DgpConfig cfg;
        cfg.kind = parse_dgp_kind(p.str("kind", "trial"));
        cfg.n = static_cast<std::size_t>(p.integer("n", 250));
        cfg.T = tmax;
        cfg.p = prob;
        cfg.seed = seed;
        const auto mc = relative_efficiency_mc(cfg, delta, 1, tmax, mc_reps, seed, p.flag("ensure-positivity", true),
                                               static_cast<int>(p.integer("threads", 1)));
        std::ostringstream m;
        m << "t,var_inc,var_at,var_nt,ratio_at,ratio_nt,lower_at,lower_nt\n";
        for (const auto& pt : mc.points)
            m << pt.t << ',' << num(pt.var_inc) << ',' << num(pt.var_at) << ',' << num(pt.var_nt) << ','
              << num(pt.ratio_at) << ',' << num(pt.ratio_nt) << ',' << num(pt.lower_at) << ',' << num(pt.lower_nt)
              << '\n';
        write_text(fs::path(dir) / "relative_efficiency_mc.csv", m.str());
        j["mc"] = {{"seed", seed}, {"reps", mc_reps}, {"n", cfg.n}, {"warnings", mc.warnings}};
    }
    write_text(fs::path(dir) / "tmin.json", j.dump(2) + "\n");
    out << "wrote efficiency tables to " << dir << "\n";
    return 0;
}

int cmd_validate(const Params& p, std::ostream& out) {
    const std::string path = p.required_str("input");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    CsvSchema schema;
    if (p.has("horizon")) schema.horizon = static_cast<int>(p.integer("horizon", 0));
    const PanelDataset ds = read_long_csv_unchecked(in, schema);
    const auto report = validate_monotonicity(ds);
    json j;
    j["input"] = path;
    j["n"] = ds.n();
    j["T"] = ds.T();
    j["d"] = ds.d();
    j["valid"] = report.ok();
    json v = json::array();
    for (const auto& x : report.violations) v.push_back({{"subject_id", x.subject_id}, {"t", x.t}});
    j["violations"] = v;
    out << j.dump(2) << "\n";
    return report.ok() ? 0 : 2;
}

void print_error(std::ostream& err, const std::string& kind, const std::string& message,
                 std::optional<std::size_t> line = std::nullopt) {
    json e;
    e["error"] = {{"kind", kind}, {"message", message}};
    if (line) e["error"]["line"] = *line;
    err << e.dump() << "\n";
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Incremental intervention effects for longitudinal studies with dropout"};
    app.require_subcommand(1);

    OptionTable est, sim, bench, eff, val;

    auto* e = app.add_subcommand("estimate", "Estimate an effect curve with pointwise and uniform bands");
    for (const auto& [k, h] :
         std::vector<std::pair<std::string, std::string>>{{"config", "JSON config file"},
                                                          {"input", "long-format panel CSV"},
                                                          {"out", "output directory"},
                                                          {"seed", "random seed (required)"},
                                                          {"K", "number of folds"},
                                                          {"t", "horizon"},
                                                          {"horizons", "comma-separated horizons"},
                                                          {"horizon", "declared number of stages T"},
                                                          {"estimator", "cross_fit, plugin, ipw or no_censoring"},
                                                          {"deltas", "comma-separated delta values"},
                                                          {"delta-lo", "smallest delta"},
                                                          {"delta-hi", "largest delta"},
                                                          {"delta-count", "number of grid points"},
                                                          {"spacing", "log or linear"},
                                                          {"pi-learner", "treatment propensity learner"},
                                                          {"omega-learner", "retention propensity learner"},
                                                          {"m-learner", "outcome regression learner"},
                                                          {"eps-clip", "propensity clipping level"},
                                                          {"eps-omega", "retention propensity floor"},
                                                          {"alpha", "significance level"},
                                                          {"B", "bootstrap replicates"},
                                                          {"threads", "worker threads"}})
        est.add(e, k, h);
    est.add_flag(e, "pool-horizons", "uniform band jointly over all horizons");

    auto* s = app.add_subcommand("simulate", "Generate a synthetic panel");
    for (const auto& [k, h] : std::vector<std::pair<std::string, std::string>>{{"config", "JSON config file"},
                                                                                {"kind", "dropout, trial or observational"},
                                                                                {"n", "subjects"},
                                                                                {"t", "stages"},
                                                                                {"ul", "lower end of the frailty range"},
                                                                                {"p", "trial propensity"},
                                                                                {"seed", "random seed (required)"},
                                                                                {"out", "output CSV path"}})
        sim.add(s, k, h);

    auto* b = app.add_subcommand("bench", "Run the simulation benchmark");
    for (const auto& [k, h] : std::vector<std::pair<std::string, std::string>>{
             {"config", "JSON config file"},  {"kind", "dropout, trial or observational"},
             {"n", "subjects"},               {"t", "stages"},
             {"ul", "frailty lower end"},     {"p", "trial propensity"},
             {"S", "replicates"},             {"K", "folds"},
             {"seed", "random seed"},         {"truth-m", "Monte Carlo draws for the truth"},
             {"deltas", "delta values"},      {"delta-lo", "smallest delta"},
             {"delta-hi", "largest delta"},   {"delta-count", "grid points"},
             {"spacing", "log or linear"},    {"pi-learner", "treatment propensity learner"},
             {"omega-learner", "retention learner"}, {"m-learner", "outcome learner"},
             {"eps-clip", "propensity clipping"},    {"eps-omega", "retention floor"},
             {"threads", "worker threads"},   {"out", "output directory"}})
        bench.add(b, k, h);
    bench.add_flag(b, "sqrt", "report the square root of the normalized error");

    auto* f = app.add_subcommand("efficiency", "Relative-efficiency bounds and exact variances");
    for (const auto& [k, h] : std::vector<std::pair<std::string, std::string>>{
             {"config", "JSON config file"}, {"delta", "increment"}, {"p", "propensity"}, {"tmax", "largest T"},
             {"variant", "always_treated, never_treated or both"}, {"c", "constant in the upper bound"},
             {"c1", "second-moment ratio for the T_min scan"}, {"mc-reps", "Monte Carlo replicates (0 = skip)"},
             {"n", "units per Monte Carlo dataset"}, {"kind", "trial or observational"}, {"seed", "random seed"},
             {"threads", "worker threads"}, {"out", "output directory"}})
        eff.add(f, k, h);
    eff.add_flag(f, "ensure-positivity", "condition datasets on always- and never-treated units");

    auto* v = app.add_subcommand("validate", "Check a panel CSV for monotone dropout");
    val.add(v, "config", "JSON config file");
    val.add(v, "input", "panel CSV");
    val.add(v, "horizon", "declared number of stages T");

    std::vector<std::string> argv_store = args;
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& h) {
        return app.exit(h, out, err);
    } catch (const CLI::ParseError& pe) {
        print_error(err, "usage", pe.what());
        return 2;
    }

    try {
        if (e->parsed()) return cmd_estimate(merge(est), out);
        if (s->parsed()) return cmd_simulate(merge(sim), out);
        if (b->parsed()) return cmd_bench(merge(bench), out);
        if (f->parsed()) return cmd_efficiency(merge(eff), out);
        if (v->parsed()) return cmd_validate(merge(val), out);
    } catch (const ParseError& pe) {
        print_error(err, "parse", pe.what(), pe.line());
        return 2;
    } catch (const DataError& de) {
        print_error(err, "data", de.what());
        return 2;
    } catch (const ConfigError& ce) {
        print_error(err, "config", ce.what());
        return 2;
    } catch (const InputError& ie) {
        print_error(err, "input", ie.what());
        return 2;
    } catch (const EstimationError& ee) {
        print_error(err, "estimation", ee.what());
        return 3;
    }
    return 2;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

} // namespace increff

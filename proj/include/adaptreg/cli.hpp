#pragma once

// Command-line front end. Every command reads a flat config, writes CSV
// outputs plus manifest.txt into --out, and returns one of the exit codes below.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adaptreg/concentration.hpp"
#include "adaptreg/errors.hpp"
#include "adaptreg/experiments.hpp"
#include "adaptreg/format.hpp"
#include "adaptreg/io.hpp"
#include "adaptreg/operator.hpp"
#include "adaptreg/regularizers.hpp"
#include "adaptreg/selection.hpp"

namespace adaptreg::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,      // bad flags, bad or incomplete config, too few points to fit
    kDataError = 3,  // unreadable or malformed input data
    kViolation = 4,  // a built-in check failed
};

struct Options {
    std::string command;
    std::string config;
    std::string out = ".";
    std::string data;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

namespace detail {

namespace fs = std::filesystem;

/// Collects output files and writes the manifest last.
class Run {
public:
    Run(const Options& opt, Config cfg) : opt_(opt), cfg_(std::move(cfg)) {
        manifest_.command = opt.command;
        manifest_.started = utc_timestamp();
        if (opt.seed) cfg_.set("run.seed", std::to_string(*opt.seed));
        if (opt.threads) cfg_.set("run.threads", std::to_string(*opt.threads));
        manifest_.seed = cfg_.get_uint("run.seed", 1);
        fs::create_directories(opt.out);
    }

    const Config& config() const { return cfg_; }
    std::uint64_t seed() const { return manifest_.seed; }
    unsigned threads() const { return unsigned(cfg_.get_uint("run.threads", 1)); }

    void write(const std::string& name, const std::function<void(std::ostream&)>& body) {
        const fs::path path = fs::path(opt_.out) / name;
        std::ofstream os(path);
        if (!os) throw Error("cannot write '" + path.string() + "'");
        body(os);
        if (!os) throw Error("write failed for '" + path.string() + "'");
        manifest_.outputs.push_back(name);
    }

    void finish() {
        manifest_.finished = utc_timestamp();
        manifest_.config_echo = cfg_.echo();
        manifest_.outputs.push_back("manifest.txt");
        const fs::path path = fs::path(opt_.out) / "manifest.txt";
        std::ofstream os(path);
        manifest_.write(os);
    }

private:
    Options opt_;
    Config cfg_;
    RunManifest manifest_;
};

inline Config load_config(const Options& opt, const std::set<std::string>& keys) {
    Config cfg = opt.config.empty() ? Config{} : Config::load(opt.config);
    cfg.restrict_to(keys);
    return cfg;
}

inline OmegaKind parse_omega(const Config& cfg, const std::string& key) {
    const std::string v = cfg.get_string(key, "boundary");
    if (v == "boundary") return OmegaKind::boundary;
    if (v == "alternating") return OmegaKind::alternating;
    if (v == "random") return OmegaKind::random;
    if (v == "explicit") return OmegaKind::explicit_vector;
    throw ConfigError("omega must be boundary, alternating, random or explicit, got '" + v + "'", cfg.line_of(key));
}

template <class F>
auto with_line(const Config& cfg, const std::string& key, F&& f) {
    try {
        return f();
    } catch (const ParameterError& e) {
        throw ConfigError(e.what(), cfg.line_of(key));
    }
}

inline std::optional<double> parse_weight(const Config& cfg) {
    const std::string v = cfg.get_string("penalty.L", "auto");
    if (v == "auto") return std::nullopt;
    double x = 0;
    if (!parse_number(v, x) || !(x >= 0))
        throw ConfigError("penalty.L must be 'auto' or a non-negative number", cfg.line_of("penalty.L"));
    return x;
}

const std::set<std::string> kProblemKeys{"problem.p",     "problem.nu",    "problem.rho",       "problem.omega",
                                         "problem.omega_values", "problem.sigma", "problem.truth_dim"};
const std::set<std::string> kRunKeys{"run.seed", "run.threads"};

inline std::set<std::string> keys(std::initializer_list<std::set<std::string>> groups,
                                  std::initializer_list<std::string> extra = {}) {
    std::set<std::string> out(extra);
    for (const auto& g : groups) out.insert(g.begin(), g.end());
    return out;
}

// ---------------------------------------------------------------- synth

inline int cmd_synth(const Options& opt, std::ostream& out) {
    Run run(opt, load_config(opt, keys({kProblemKeys, kRunKeys}, {"problem.n", "problem.m0"})));
    const Config& cfg = run.config();
    SynthConfig sc;
    sc.p = cfg.get_double("problem.p", 1.0);
    sc.n = std::size_t(cfg.get_uint("problem.n", 256));
    sc.sigma = cfg.get_double("problem.sigma", 0.1);
    sc.truth_dim = std::size_t(cfg.get_uint("problem.truth_dim", 0));
    sc.m0 = std::size_t(cfg.get_uint("problem.m0", 0));
    sc.source.nu = cfg.get_double("problem.nu", 0.5);
    sc.source.rho = cfg.get_double("problem.rho", 1.0);
    sc.source.omega = parse_omega(cfg, "problem.omega");
    sc.source.seed = run.seed();
    if (sc.source.omega == OmegaKind::explicit_vector) {
        const auto w = cfg.get_doubles("problem.omega_values", {});
        if (w.empty()) throw ConfigError("omega = explicit needs problem.omega_values", cfg.line_of("problem.omega"));
        sc.source.explicit_omega = Eigen::Map<const Vector>(w.data(), Eigen::Index(w.size()));
        if (!sc.truth_dim) sc.truth_dim = w.size();
    }
    const SynthProblem prob = with_line(cfg, "problem.n", [&] { return synth_problem(sc); });
    Rng rng = make_stream(run.seed(), 0x53594e5448, 0);
    const Vector y = draw_observation(prob, rng);
    const Matrix images = prob.op.forward_matrix();
    const auto& grid = prob.op.grid();

    run.write("data.csv", [&](std::ostream& os) {
        os << "t,y,Tx0";
        for (Eigen::Index j = 0; j < images.cols(); ++j) os << ",T_" << j + 1;
        os << '\n';
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const auto r = Eigen::Index(i);
            os << format_number(grid[i]) << ',' << format_number(y[r]) << ',' << format_number(prob.truth_samples[r]);
            for (Eigen::Index j = 0; j < images.cols(); ++j) os << ',' << format_number(images(r, j));
            os << '\n';
        }
    });
    run.write("truth.csv", [&](std::ostream& os) {
        os << "j,lambda,x0\n";
        const Vector lambda = spectral_values(sc.p, std::size_t(prob.x0.size()));
        for (Eigen::Index j = 0; j < prob.x0.size(); ++j)
            os << j + 1 << ',' << format_number(lambda[j]) << ',' << format_number(prob.x0[j]) << '\n';
    });
    run.write("summary.txt", [&](std::ostream& os) {
        os << "n = " << prob.op.n() << "\nd_m0 = " << prob.op.dim() << "\ntruth_dim = " << prob.x0.size()
           << "\nbias_m0 = " << format_number(bias_m0(prob.x0, prob.op)) << "\nsigma = " << format_number(sc.sigma)
           << '\n';
    });
    run.finish();
    out << "synth: n = " << prob.op.n() << ", d_m0 = " << prob.op.dim() << ", wrote " << opt.out << '\n';
    return kOk;
}

// ---------------------------------------------------------------- select

/// Operator from data columns t, y, T_1..T_d (images of the cosine basis).
inline DiscretizedOperator operator_from_data(const CsvTable& table, std::optional<double> p) {
    const DesignGrid grid(table.values(table.column("t")));
    std::size_t d = 0;
    while (table.has_column("T_" + std::to_string(d + 1))) ++d;
    if (d == 0) throw DataError("missing operator columns T_1..T_d");
    if (d > grid.size()) throw DataError("more operator columns than design points");
    Matrix images(Eigen::Index(grid.size()), Eigen::Index(d));
    for (std::size_t j = 0; j < d; ++j) {
        const auto col = table.column("T_" + std::to_string(j + 1));
        for (std::size_t i = 0; i < grid.size(); ++i) images(Eigen::Index(i), Eigen::Index(j)) = table.rows[i][col];
    }
    return discretize_operator(SampledOperator{images, p}, BasisFamily::cosine(), grid, d);
}

inline DiscretizedOperator load_operator(const Options& opt, const Config& cfg, const CsvTable& table) {
    std::optional<double> p;
    if (cfg.has("operator.p")) p = cfg.require_double("operator.p");
    try {
        return operator_from_data(table, p);
    } catch (const ParameterError& e) {
        throw DataError(std::string(e.what()) + " in '" + opt.data + "'");
    } catch (const RankError& e) {
        throw DataError(std::string(e.what()) + " in '" + opt.data + "'");
    } catch (const DegenerateDesignError& e) {
        throw DataError(std::string(e.what()) + " in '" + opt.data + "'");
    }
}

inline FamilySpec parse_family(const Config& cfg) {
    FamilySpec fs;
    const std::string kind = cfg.get_string("family.kind", "tikhonov");
    if (kind == "tikhonov") fs.kind = FamilyKind::tikhonov;
    else if (kind == "projection") fs.kind = FamilyKind::projection;
    else throw ConfigError("family.kind must be tikhonov or projection, got '" + kind + "'", cfg.line_of("family.kind"));
    fs.alpha_max = cfg.get_double("family.alpha_max", 1.0);
    fs.ratio = cfg.get_double("family.ratio", 0.5);
    fs.count = std::size_t(cfg.get_uint("family.count", 0));
    fs.dims = cfg.get_sizes("family.dims", {});
    return fs;
}

inline PenaltyConfig parse_penalty(const Config& cfg) {
    PenaltyConfig pc;
    pc.r = cfg.get_double("penalty.r", 2.5);
    pc.kraft_d = cfg.get_double("penalty.kraft_d", 1.0);
    if (cfg.has("penalty.sigma2")) pc.sigma2 = cfg.require_double("penalty.sigma2");
    return pc;
}

inline int cmd_select(const Options& opt, std::ostream& out) {
    Run run(opt, load_config(opt, keys({kRunKeys}, {"operator.p", "family.kind", "family.alpha_max", "family.ratio",
                                                    "family.count", "family.dims", "penalty.r", "penalty.sigma2",
                                                    "penalty.L", "penalty.kraft_d", "penalty.kraft_target"})));
    const Config& cfg = run.config();
    if (opt.data.empty()) throw ConfigError("select needs --data PATH (columns t, y, T_1..T_d)");
    PenaltyConfig pen = parse_penalty(cfg);
    if (!cfg.has("penalty.sigma2"))
        throw ConfigError("penalty.sigma2 is required: the penalty assumes a known noise variance (assumption AN)");
    with_line(cfg, "penalty.sigma2", [&] { pen.validate(); return 0; });

    const CsvTable table = read_csv_file(opt.data);
    const std::vector<double> y_values = table.values(table.column("y"));
    const Vector y = Eigen::Map<const Vector>(y_values.data(), Eigen::Index(y_values.size()));
    const DiscretizedOperator op = load_operator(opt, cfg, table);
    const FamilySpec fs = parse_family(cfg);
    const RegularizerFamily family = with_line(cfg, "family.kind", [&] { return build_family(fs, op); });

    const auto fixed = parse_weight(cfg);
    const double target = cfg.get_double("penalty.kraft_target", 1.0);
    if (fixed) pen.weights = {*fixed};
    else pen.weights = with_line(cfg, "penalty.kraft_target", [&] {
        return default_weights(family, pen, op.n(), target).weights;
    });

    const SelectionResult res = select(family, pen, op, y);
    std::optional<bool> agreement;
    std::size_t threshold_choice = 0;
    if (fs.kind == FamilyKind::projection) {
        std::vector<std::size_t> dims;
        for (const auto& r : family) dims.push_back(std::get<Projection>(r.spec()).indices.size());
        threshold_choice = select_by_threshold(op, y, pen, dims).selection.chosen;
        agreement = threshold_choice == res.chosen;
    }

    run.write("selection.csv", [&](std::ostream& os) { write_selection_csv(os, res, family); });
    run.write("family.csv", [&](std::ostream& os) { write_family_stats(os, family); });
    run.write("estimate.csv", [&](std::ostream& os) {
        os << "j,x_hat\n";
        for (Eigen::Index j = 0; j < res.estimate.size(); ++j) os << j + 1 << ',' << format_number(res.estimate[j]) << '\n';
    });
    const auto& chosen = family[res.chosen];
    run.write("summary.txt", [&](std::ostream& os) {
        os << "chosen = " << res.chosen << "\nkind = " << kind_name(chosen.spec())
           << "\nparameter = " << format_number(parameter_value(chosen.spec()))
           << "\nobjective = " << format_number(res.per_candidate[res.chosen].objective)
           << "\ncandidates = " << family.size() << "\nL = " << format_number(pen.weight(0))
           << "\nkraft_sum = " << format_number(res.kraft_sum) << '\n';
        if (agreement)
            os << "threshold_chosen = " << threshold_choice << "\nagreement = " << (*agreement ? "true" : "false")
               << '\n';
    });
    run.finish();
    out << "select: chose candidate " << res.chosen << " (" << kind_name(chosen.spec()) << ", parameter "
        << format_number(parameter_value(chosen.spec())) << ")\n";
    if (agreement && !*agreement) {
        out << "select: threshold and exhaustive selections disagree\n";
        return kViolation;
    }
    return kOk;
}

// ---------------------------------------------------------------- risk / rates

const std::set<std::string> kExperimentKeys{
    "experiment.n_grid", "experiment.replications", "experiment.families", "experiment.alpha_max",
    "experiment.ratio",  "penalty.r",               "penalty.kraft_d",     "penalty.kraft_target",
    "penalty.L"};

inline ExperimentConfig parse_experiment(const Config& cfg, std::uint64_t seed, unsigned threads) {
    ExperimentConfig ec;
    ec.p = cfg.get_double("problem.p", ec.p);
    ec.nu = cfg.get_double("problem.nu", ec.nu);
    ec.rho = cfg.get_double("problem.rho", ec.rho);
    ec.sigma = cfg.get_double("problem.sigma", ec.sigma);
    ec.omega = parse_omega(cfg, "problem.omega");
    if (ec.omega == OmegaKind::explicit_vector)
        throw ConfigError("risk studies need a generated omega (boundary, alternating or random)",
                          cfg.line_of("problem.omega"));
    ec.truth_dim = std::size_t(cfg.get_uint("problem.truth_dim", 0));
    ec.n_grid = cfg.get_sizes("experiment.n_grid", ec.n_grid);
    ec.replications = std::size_t(cfg.get_uint("experiment.replications", ec.replications));
    const std::string fam = cfg.get_string("experiment.families", "both");
    if (fam == "tikhonov") ec.families = FamilyPolicy::tikhonov;
    else if (fam == "projection") ec.families = FamilyPolicy::projection;
    else if (fam == "both") ec.families = FamilyPolicy::both;
    else throw ConfigError("experiment.families must be tikhonov, projection or both", cfg.line_of("experiment.families"));
    ec.alpha_max = cfg.get_double("experiment.alpha_max", ec.alpha_max);
    ec.ratio = cfg.get_double("experiment.ratio", ec.ratio);
    ec.r = cfg.get_double("penalty.r", ec.r);
    ec.kraft_d = cfg.get_double("penalty.kraft_d", ec.kraft_d);
    ec.kraft_target = cfg.get_double("penalty.kraft_target", ec.kraft_target);
    ec.fixed_weight = parse_weight(cfg);
    ec.seed = seed;
    ec.threads = threads;
    try {
        ec.validate();
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
    return ec;
}

/// Methods whose adaptive risk falls more than 3 standard errors below the oracle risk.
inline std::vector<std::string> oracle_violations(const ExperimentReport& rep) {
    std::vector<std::string> bad;
    for (const auto& r : rep.rows) {
        const double se = std::isnan(r.risk_stderr) ? 0.0 : r.risk_stderr;
        if (r.risk < r.oracle_risk - 3.0 * se) bad.push_back(r.method + " at n = " + std::to_string(r.n));
    }
    return bad;
}

inline void write_risk_summary(std::ostream& os, const ExperimentReport& rep) {
    for (const auto& m : rep.config.methods()) {
        double max_c = 0, max_ratio = 0;
        for (const auto& r : rep.rows_for(m)) {
            max_c = std::max(max_c, r.constant_ratio);
            max_ratio = std::max(max_ratio, r.oracle_ratio);
        }
        os << m << ".max_constant_ratio = " << format_number(max_c) << '\n'
           << m << ".max_oracle_ratio = " << format_number(max_ratio) << '\n';
    }
}

inline int cmd_risk(const Options& opt, std::ostream& out) {
    Run run(opt, load_config(opt, keys({kProblemKeys, kRunKeys, kExperimentKeys})));
    const ExperimentConfig ec = parse_experiment(run.config(), run.seed(), run.threads());
    const ExperimentReport rep = monte_carlo_risk(ec);
    run.write("risk.csv", [&](std::ostream& os) { write_risk_csv(os, rep); });
    run.write("plot.dat", [&](std::ostream& os) { write_plot_data(os, rep); });
    const auto bad = oracle_violations(rep);
    run.write("summary.txt", [&](std::ostream& os) {
        write_risk_summary(os, rep);
        os << "oracle_violations = " << bad.size() << '\n';
    });
    run.finish();
    out << "risk: " << rep.rows.size() << " rows written to " << opt.out << '\n';
    for (const auto& b : bad) out << "risk: adaptive risk below the oracle risk for " << b << '\n';
    return bad.empty() ? kOk : kViolation;
}

inline int cmd_rates(const Options& opt, std::ostream& out) {
    Run run(opt, load_config(opt, keys({kProblemKeys, kRunKeys, kExperimentKeys}, {"check.window"})));
    const Config& cfg = run.config();
    const ExperimentConfig ec = parse_experiment(cfg, run.seed(), run.threads());
    const double window = cfg.get_double("check.window", 0.15);
    {
        std::set<std::size_t> distinct(ec.n_grid.begin(), ec.n_grid.end());
        if (distinct.size() < 4)
            throw InsufficientDataError("rates: need at least 4 distinct n values, got " +
                                        std::to_string(distinct.size()));
    }
    const ExperimentReport rep = monte_carlo_risk(ec);
    std::vector<std::pair<std::string, RateFit>> fits;
    for (const auto& m : ec.methods()) fits.emplace_back(m, fit_rate(rep, m));

    run.write("risk.csv", [&](std::ostream& os) { write_risk_csv(os, rep); });
    run.write("plot.dat", [&](std::ostream& os) { write_plot_data(os, rep); });
    bool all_in = true;
    run.write("rates.csv", [&](std::ostream& os) {
        os << "method,slope,intercept,half_width,theoretical,window,within\n";
        for (const auto& [m, f] : fits) {
            const bool within = std::abs(f.slope - f.theoretical) <= window;
            all_in = all_in && within;
            os << m << ',' << format_number(f.slope) << ',' << format_number(f.intercept) << ','
               << format_number(f.half_width) << ',' << format_number(f.theoretical) << ',' << format_number(window)
               << ',' << (within ? "true" : "false") << '\n';
        }
    });
    run.finish();
    for (const auto& [m, f] : fits)
        out << "rates: " << m << " slope " << format_number(f.slope) << " +- " << format_number(f.half_width)
            << " (theoretical " << format_number(f.theoretical) << ")\n";
    return all_in ? kOk : kViolation;
}

// ---------------------------------------------------------------- concentration

inline int cmd_concentration(const Options& opt, std::ostream& out) {
    Run run(opt, load_config(opt, keys({kRunKeys}, {"noise.law", "noise.sigma", "concentration.matrices",
                                                    "concentration.replications", "concentration.u",
                                                    "concentration.L", "concentration.moment_q", "penalty.r",
                                                    "penalty.kraft_d", "identity.trials", "identity.max_dim",
                                                    "identity.max_n"})));
    const Config& cfg = run.config();
    const std::string law_name = cfg.get_string("noise.law", "gaussian");
    const double sigma = cfg.get_double("noise.sigma", 1.0);
    NoiseLaw law;
    if (law_name == "gaussian") law = NoiseLaw::gaussian(sigma);
    else if (law_name == "two_point") law = NoiseLaw::two_point(sigma);
    else throw ConfigError("noise.law must be gaussian or two_point", cfg.line_of("noise.law"));

    const auto names =
        cfg.get_strings("concentration.matrices", {"identity4", "harmonic8", "cosine_tikhonov"});
    const auto u_units = cfg.get_doubles("concentration.u", {0, 0.5, 1, 2, 4, 8, 16, 32});
    const auto levels = cfg.get_doubles("concentration.L", {0, 1});
    const auto qs = cfg.get_sizes("concentration.moment_q", {1, 2});
    PenaltyConfig pen;
    pen.r = cfg.get_double("penalty.r", 2.5);
    pen.kraft_d = cfg.get_double("penalty.kraft_d", 1.0);
    if (!(pen.r > 2)) throw ConfigError("penalty.r must exceed 2", cfg.line_of("penalty.r"));

    std::size_t violations = 0;
    std::vector<std::pair<std::string, MomentReport>> moments;
    for (std::size_t mi = 0; mi < names.size(); ++mi) {
        QuadFormSpec spec;
        spec.A = with_line(cfg, "concentration.matrices", [&] { return named_matrix(names[mi]); });
        spec.noise = law;
        spec.replications = std::size_t(cfg.get_uint("concentration.replications", 10000));
        spec.seed = run.seed() + mi;
        spec.threads = run.threads();
        with_line(cfg, "concentration.replications", [&] { spec.validate(); return 0; });
        const double rho = trace_and_radius(spec.A).second;
        std::vector<double> u;
        for (double v : u_units) u.push_back(v * rho);
        for (double L : levels) {
            PenaltyConfig c = pen;
            c.weights = {L};
            const TailReport rep = tail_check(spec, c, u);
            violations += rep.violations;
            run.write("tail_" + names[mi] + "_L" + format_number(L) + ".csv",
                      [&](std::ostream& os) { write_tail_csv(os, rep); });
            for (auto q : qs) moments.emplace_back(names[mi], moment_check(spec, c, int(q)));
        }
    }
    run.write("moment.csv", [&](std::ostream& os) {
        os << "matrix,q,k1,k2,empirical,stderr,shape,ratio\n";
        for (const auto& [name, m] : moments)
            os << name << ',' << m.q << ',' << format_number(m.k1) << ',' << format_number(m.k2) << ','
               << format_number(m.empirical) << ',' << format_number(m.stderr_empirical) << ','
               << format_number(m.shape) << ',' << format_number(m.ratio) << '\n';
    });

    const auto trials = identity_trials(std::size_t(cfg.get_uint("identity.trials", 100)),
                                        std::size_t(cfg.get_uint("identity.max_dim", 8)),
                                        std::size_t(cfg.get_uint("identity.max_n", 64)), run.seed());
    double max_gap = 0;
    run.write("identity.csv", [&](std::ostream& os) {
        os << "trial,n,d,grid,lhs,rhs,gap\n";
        for (const auto& t : trials) {
            max_gap = std::max(max_gap, t.check.gap);
            os << t.trial << ',' << t.n << ',' << t.dim << ',' << (t.midpoint ? "midpoint" : "uniform") << ','
               << format_number(t.check.lhs) << ',' << format_number(t.check.rhs) << ','
               << format_number(t.check.gap) << '\n';
        }
    });
    run.write("an_moments.csv", [&](std::ostream& os) {
        os << "q,moment,limit,holds\n";
        for (const auto& m : moment_conditions(law, 1, 8))
            os << m.q << ',' << format_number(m.moment) << ',' << format_number(m.limit) << ','
               << (m.holds ? "true" : "false") << '\n';
    });
    const bool identity_ok = max_gap <= 1e-10;
    run.write("summary.txt", [&](std::ostream& os) {
        os << "tail_violations = " << violations << "\nidentity_max_gap = " << format_number(max_gap) << '\n';
    });
    run.finish();
    out << "concentration: " << violations << " tail violations, identity gap " << format_number(max_gap) << '\n';
    return violations == 0 && identity_ok ? kOk : kViolation;
}

// ---------------------------------------------------------------- diagnostics

inline int cmd_diagnostics(const Options& opt, std::ostream& out) {
    Run run(opt, load_config(opt, keys({kRunKeys}, {"operator.kind", "operator.p", "operator.n", "operator.d",
                                                    "operator.dims", "operator.max_spread", "operator.max_ratio"})));
    const Config& cfg = run.config();
    const std::string kind = cfg.get_string("operator.kind", opt.data.empty() ? "spectral" : "sampled");
    std::optional<DiscretizedOperator> op;
    if (kind == "sampled") {
        if (opt.data.empty()) throw ConfigError("operator.kind = sampled needs --data PATH");
        op = load_operator(opt, cfg, read_csv_file(opt.data));
    } else {
        const std::size_t n = std::size_t(cfg.get_uint("operator.n", 64));
        const double p = cfg.get_double("operator.p", 1.0);
        const std::size_t d = std::size_t(cfg.get_uint("operator.d", choose_m0(n, p)));
        OperatorSpec spec;
        if (kind == "spectral") spec = SpectralOperator{p};
        else if (kind == "identity") spec = IdentityOperator{};
        else throw ConfigError("operator.kind must be spectral, identity or sampled", cfg.line_of("operator.kind"));
        op = with_line(cfg, "operator.d", [&] {
            return discretize_operator(spec, BasisFamily::cosine(), DesignGrid::midpoint(n), d);
        });
    }
    std::vector<std::size_t> all;
    for (std::size_t j = 1; j <= op->dim(); ++j) all.push_back(j);
    const auto dims = cfg.get_sizes("operator.dims", all);
    DiagnosticTolerances tol;
    tol.max_spread = cfg.get_double("operator.max_spread", tol.max_spread);
    tol.max_ratio = cfg.get_double("operator.max_ratio", tol.max_ratio);
    const auto diag = with_line(cfg, "operator.dims", [&] { return diagnostics(*op, dims, tol); });
    const bool ok = diag.sv_ok && diag.sf_ok && diag.as_ok;
    run.write("diagnostics.txt", [&](std::ostream& os) {
        os << "n = " << op->n() << "\nd_m0 = " << op->dim() << "\ndegree = " << format_number(op->degree())
           << "\nk1 = " << format_number(diag.k1) << "\nk2 = " << format_number(diag.k2)
           << "\na1 = " << format_number(diag.a1) << "\na2 = " << format_number(diag.a2)
           << "\nratio_bound = " << format_number(diag.ratio_bound) << "\nsv_ok = " << diag.sv_ok
           << "\nsf_ok = " << diag.sf_ok << "\nas_ok = " << diag.as_ok << "\nordering_ok = " << diag.ordering_ok
           << "\nmonotone_upper = " << diag.monotone_upper << "\n\ndim,gamma_upper,gamma_lower,nu\n";
        for (const auto& m : diag.models)
            os << m.dim << ',' << format_number(m.gamma_upper) << ',' << format_number(m.gamma_lower) << ','
               << format_number(m.nu) << '\n';
    });
    run.finish();
    out << "diagnostics: SV " << (diag.sv_ok ? "ok" : "fails") << ", SF " << (diag.sf_ok ? "ok" : "fails") << ", AS "
        << (diag.as_ok ? "ok" : "fails") << '\n';
    return ok ? kOk : kViolation;
}

}  // namespace detail

inline int dispatch(const Options& opt, std::ostream& out) {
    if (opt.command == "synth") return detail::cmd_synth(opt, out);
    if (opt.command == "select") return detail::cmd_select(opt, out);
    if (opt.command == "risk") return detail::cmd_risk(opt, out);
    if (opt.command == "rates") return detail::cmd_rates(opt, out);
    if (opt.command == "concentration") return detail::cmd_concentration(opt, out);
    if (opt.command == "diagnostics") return detail::cmd_diagnostics(opt, out);
    throw ConfigError("unknown command '" + opt.command + "'");
}

/// Parses argv, runs the command and maps errors to exit codes; messages go to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adaptive selection of regularization operators for linear inverse problems", "adaptreg"};
    app.require_subcommand(1);
    Options opt;
    std::uint64_t seed = 0;
    unsigned threads = 0;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"synth", "generate a synthetic problem and noisy observations"},
        {"select", "penalized selection of a regularizer for observed data"},
        {"risk", "Monte Carlo risk of the adaptive estimator against the oracle"},
        {"rates", "risk study plus log-log rate fits"},
        {"concentration", "tail, moment and projection identity checks"},
        {"diagnostics", "ill-posedness and design constants of an operator"}};
    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", opt.config, "configuration file")->check(CLI::ExistingFile);
        sub->add_option("--out", opt.out, "output directory");
        sub->add_option("--data", opt.data, "input data CSV");
        sub->add_option("--seed", seed, "seed (overrides run.seed)");
        sub->add_option("--threads", threads, "worker threads, 0 = hardware count");
        subs.push_back(sub);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }
    for (auto* sub : subs) {
        if (!sub->parsed()) continue;
        opt.command = sub->get_name();
        if (sub->count("--seed")) opt.seed = seed;
        if (sub->count("--threads")) opt.threads = threads;
    }
    try {
        return dispatch(opt, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const InsufficientDataError& e) {
        err << "insufficient data: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace adaptreg::cli

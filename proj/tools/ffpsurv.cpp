// ffpsurv command-line tool: simulate, fit, evaluate, bootstrap.
// Machine-readable results go to stdout (JSON) or files; a short human
// summary goes to stderr. Exit codes: 0 ok, 1 invalid input, 2 numerical failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ffpsurv/bootstrap.hpp"
#include "ffpsurv/error.hpp"
#include "ffpsurv/estimation.hpp"
#include "ffpsurv/io.hpp"
#include "ffpsurv/metrics.hpp"
#include "ffpsurv/parallel.hpp"
#include "ffpsurv/simulation.hpp"

using namespace ffpsurv;
using nlohmann::json;

namespace {

std::string sidecar_path(const std::string& csv) { return csv + ".config.json"; }

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json overparam_json(const OverparamReport& r) {
    return {{"free_deltas", r.free_deltas},
            {"spells", r.spells},
            {"parameters", r.parameters},
            {"delta_ratio", r.delta_ratio ? json(*r.delta_ratio) : json(nullptr)},
            {"parameter_ratio", r.parameter_ratio ? json(*r.parameter_ratio) : json(nullptr)},
            {"warning", r.warning}};
}

struct SimulateArgs {
    std::string setup;
    std::optional<std::size_t> n, spells;
    std::uint64_t seed = 0;
    double psi = 1.0;
    double ymax = 80.0;
    std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
    SimConfig cfg = setup_config(a.setup);
    if (a.n) cfg.n = *a.n;
    if (a.spells) cfg.J = *a.spells;
    cfg.seed = a.seed;
    cfg.psi = a.psi;
    cfg.y_max = a.ymax;
    const PanelDataset ds = generate(cfg, default_threads());
    write_panel_csv(a.out, ds);
    json side = to_json(cfg);
    side["setup"] = a.setup;
    side["data_hash"] = data_hash(ds);
    {
        std::ofstream out(sidecar_path(a.out), std::ios::binary);
        if (!out) throw validation_error("cannot write '" + sidecar_path(a.out) + "'");
        out << side.dump(2) << '\n';
    }
    std::cout << json{{"data", a.out},
                      {"config", sidecar_path(a.out)},
                      {"subjects", ds.subjects.size()},
                      {"spells", ds.spell_count()},
                      {"events", ds.event_count()},
                      {"data_hash", side["data_hash"]}}
                     .dump()
              << '\n';
    std::cerr << "simulated setup " << a.setup << ": " << ds.subjects.size() << " subjects, " << ds.spell_count()
              << " spells, " << ds.event_count() << " events -> " << a.out << '\n';
    return 0;
}

struct FitArgs {
    std::string data;
    double psi = 1.0;
    std::string config;
    std::string out;
};

int cmd_fit(const FitArgs& a) {
    FitConfig cfg = a.config.empty() ? FitConfig{} : read_fit_config(a.config);
    cfg.threads = default_threads();
    const PanelDataset ds = read_panel_csv(a.data, a.psi);
    const OverparamReport over = overparam_check(ds);
    const FittedModel m = fit(ds, cfg);

    ModelFile f;
    f.model = m;
    f.data_hash = data_hash(ds);
    f.config = to_json(cfg);
    // seed from the simulation record next to the data, when there is one
    if (std::filesystem::exists(sidecar_path(a.data))) {
        try {
            std::ifstream in(sidecar_path(a.data));
            const json side = json::parse(in);
            if (side.contains("seed") && side["seed"].is_number_unsigned()) f.seed = side["seed"].get<std::uint64_t>();
        } catch (const json::exception&) {
        }
    }
    write_model(a.out, f);

    std::cout << json{{"model", a.out},
                      {"loglik", number(m.loglik)},
                      {"converged", m.converged},
                      {"iterations", m.iterations},
                      {"stop_reason", m.stop_reason},
                      {"clamp_count", m.clamp_count},
                      {"normalization", to_string(m.normalization)},
                      {"beta", m.beta},
                      {"alpha", m.alpha},
                      {"kappa", m.kappa},
                      {"grad_inf_norm", number(m.grad_inf_norm)},
                      {"effectively_zero_deltas", m.effectively_zero_deltas()},
                      {"overparam_check", overparam_json(over)}}
                     .dump()
              << '\n';
    std::cerr << "fit: loglik " << m.loglik << " after " << m.iterations << " iterations ("
              << (m.converged ? "converged, " : "NOT converged, ") << m.stop_reason << "), clamped spells "
              << m.clamp_count << '\n'
              << "     " << over.summary() << '\n';
    if (m.normalization == Normalization::free_kappa) {
        std::cerr << "     note: the likelihood is invariant under (delta, kappa) -> (c delta, c kappa); "
                     "only their ratio is identified\n";
    }
    return 0;
}

struct EvaluateArgs {
    std::string model;
    std::string data;
    std::optional<double> horizon;
};

int cmd_evaluate(const EvaluateArgs& a) {
    const ModelFile f = read_model(a.model);
    const PanelDataset ds = read_panel_csv(a.data, f.model.psi());
    const Evaluation e = evaluate(f.model, ds, a.horizon.value_or(0.0), default_threads());
    std::cout << json{{"c_index", e.c_index}, {"ibs", e.ibs}, {"horizon", e.horizon}, {"spells", e.spells}}.dump()
              << '\n';
    std::cerr << "evaluate: C-index " << e.c_index << ", IBS " << e.ibs << " (horizon " << e.horizon << ", "
              << e.spells << " spells)\n";
    return 0;
}

struct BootstrapArgs {
    std::string setup;
    std::size_t reps = 50;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_bootstrap(const BootstrapArgs& a) {
    BootstrapConfig cfg;
    cfg.setup = a.setup;
    cfg.reps = a.reps;
    cfg.seed = a.seed;
    cfg.threads = default_threads();
    const BootstrapReport rep = run_bootstrap(cfg);
    {
        std::ofstream out(a.out, std::ios::binary);
        if (!out) throw validation_error("cannot write '" + a.out + "'");
        write_bootstrap_table(out, rep);
    }
    const ColumnSummary s = rep.summarize(false);
    json failures = json::array();
    for (std::size_t r = 0; r < rep.replicates.size(); ++r) {
        if (!rep.replicates[r].frailty.ok) failures.push_back({{"replicate", r}, {"error", rep.replicates[r].frailty.error}});
    }
    json mean = json::array(), sd = json::array();
    for (double v : s.mean) mean.push_back(number(v));
    for (double v : s.sd) sd.push_back(number(v));
    std::cout << json{{"table", a.out},
                      {"replicates", a.reps},
                      {"used", s.used},
                      {"excluded", s.excluded},
                      {"beta_mean", mean},
                      {"beta_sd", sd},
                      {"c_index_mean", s.c_mean ? number(*s.c_mean) : json(nullptr)},
                      {"failures", failures}}
                     .dump()
              << '\n';
    std::cerr << "bootstrap setup " << a.setup << ": " << s.used << " of " << a.reps << " replicates used";
    if (s.excluded) std::cerr << " (" << s.excluded << " excluded: did not converge)";
    std::cerr << '\n';
    write_bootstrap_table(std::cerr, rep);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ffpsurv: gamma-frailty survival models for grouped recurrent events"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "generate a panel dataset from a named setup");
    s->add_option("--setup", sim.setup, "1, 2, 3, 4 or nonlinear")->required();
    s->add_option("--n", sim.n, "number of subjects (setup default if omitted)");
    s->add_option("--spells", sim.spells, "spells per subject (setup default if omitted)");
    s->add_option("--seed", sim.seed, "64-bit seed");
    s->add_option("--psi", sim.psi, "grouping interval length");
    s->add_option("--ymax", sim.ymax, "administrative censoring time");
    s->add_option("--out", sim.out, "output CSV")->required();

    FitArgs fa;
    auto* f = app.add_subcommand("fit", "fit the model to a panel CSV");
    f->add_option("--data", fa.data, "input CSV")->required();
    f->add_option("--psi", fa.psi, "grouping interval length");
    f->add_option("--config", fa.config, "fit configuration JSON");
    f->add_option("--out", fa.out, "output model JSON")->required();

    EvaluateArgs ea;
    auto* e = app.add_subcommand("evaluate", "C-index and integrated Brier score of a model on a panel CSV");
    e->add_option("--model", ea.model, "model JSON")->required();
    e->add_option("--data", ea.data, "panel CSV")->required();
    e->add_option("--horizon", ea.horizon, "last Brier time (default: end of the model grid)");

    BootstrapArgs ba;
    auto* b = app.add_subcommand("bootstrap", "resimulate-and-fit study over a setup");
    b->add_option("--setup", ba.setup, "1, 2, 3, 4 or nonlinear")->required();
    b->add_option("--reps", ba.reps, "number of replicates");
    b->add_option("--seed", ba.seed, "64-bit seed");
    b->add_option("--out", ba.out, "output table CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return 1;
    }

    try {
        if (*s) return cmd_simulate(sim);
        if (*f) return cmd_fit(fa);
        if (*e) return cmd_evaluate(ea);
        if (*b) return cmd_bootstrap(ba);
    } catch (const validation_error& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    } catch (const numerical_error& err) {
        std::cerr << "numerical failure: " << err.what() << '\n';
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return 1;
}

// Copyright 2026 The qgst Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: gen, simulate, train, fit-baseline, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "qgst/bench.hpp"

namespace fs = std::filesystem;
using namespace qgst;

namespace {

struct Common {
    std::string config;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "JSON config with experiment/model/training/report sections");
    cmd->add_option("--set", c.overrides, "Override a config value, e.g. --set training.seed=3")->allow_extra_args(false);
}

RunConfig load(const Common& c) { return load_run_config(c.config, c.overrides); }

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    return os;
}

void write_text(const fs::path& path, const std::string& text) {
    auto os = open_out(path);
    os << text;
}

Dataset read_dataset(const std::string& path) {
    if (!fs::exists(path)) throw std::runtime_error("dataset file " + path + " does not exist");
    return load_dataset(path);
}

std::vector<Circuit> read_design(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open design file " + path);
    std::vector<Circuit> out;
    std::string line;
    for (int n = 1; std::getline(is, line); ++n) {
        if (line.empty()) continue;
        try {
            out.push_back(parse_circuit(line));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(path + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    if (out.empty()) throw std::invalid_argument("design file " + path + " lists no circuits");
    return out;
}

std::string file_safe(const std::string& s) {
    std::string out;
    for (char ch : s) out += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
    return out;
}

nlohmann::json training_json(const TrainConfig& t) {
    return {{"group_size", t.group_size},   {"n_parts", t.curriculum ? t.n_parts : 1},
            {"curriculum", t.curriculum},   {"epochs_per_part", t.epochs_per_part},
            {"lr", t.optimizer.lr},         {"lr_min", t.lr_min},
            {"loss", loss_name(t.loss)},    {"seed", t.seed}};
}

/// Parameter estimate for a checkpoint, using the split recorded at training.
ErrorParams checkpoint_estimate(const fs::path& dir, const Estimator& model, const Dataset& ds) {
    const nlohmann::json manifest = ad::read_manifest(dir);
    int n_parts = 1;
    if (manifest["extra"].contains("training")) n_parts = manifest["extra"]["training"].value("n_parts", 1);
    return ErrorParams::unflatten(parametrized_kinds(ds.n_qubits), estimate_parameters(model, ds, n_parts));
}

void write_heatmaps(const fs::path& dir, const ErrorParams& fit, const std::optional<ErrorParams>& truth,
                    int n_qubits) {
    for (const GateLabel& label : model_labels(n_qubits)) {
        if (label.kind == GateKind::Gi) continue;
        const Ptm ideal = noisy_gate_ptm(label, ErrorParams::zeros(n_qubits), n_qubits);
        const Ptm model = noisy_gate_ptm(label, fit, n_qubits);
        const std::string base = file_safe(label.str());
        auto emit = [&](const Ptm& a, const Ptm& b, const std::string& name) {
            auto os = open_out(dir / (base + "_" + name + ".csv"));
            write_heatmap_csv(os, ptm_distance_heatmap(a, b));
        };
        if (truth) {
            const Ptm qc = noisy_gate_ptm(label, *truth, n_qubits);
            emit(qc, ideal, "qc_vs_ideal");
            emit(model, qc, "model_vs_qc");
        } else {
            emit(model, ideal, "model_vs_ideal");
        }
    }
}

void check_qubits(const RunConfig& cfg, const Dataset& ds) {
    if (cfg.experiment.n_qubits != ds.n_qubits) {
        throw std::invalid_argument("dataset has " + std::to_string(ds.n_qubits) +
                                    " qubit(s) but the config says experiment.n_qubits=" +
                                    std::to_string(cfg.experiment.n_qubits) + "; pass --set experiment.n_qubits=" +
                                    std::to_string(ds.n_qubits));
    }
}

}  // namespace

int main(int argc, char** argv) {
    ad::tune_allocator();
    CLI::App app{"qgst: gate set tomography with transformer estimators"};
    app.require_subcommand(1);

    Common gen_c, sim_c, train_c, fit_c, rep_c;

    auto* gen = app.add_subcommand("gen", "Write the circuit list of the configured experiment design");
    add_common(gen, gen_c);
    std::string gen_out;
    gen->add_option("-o,--out", gen_out, "Output design file (one circuit per line)")->required();

    auto* sim = app.add_subcommand("simulate", "Sample counts for a design under planted error parameters");
    add_common(sim, sim_c);
    std::string sim_design, sim_out;
    sim->add_option("--design", sim_design, "Design file from 'gen' (default: build from config)");
    sim->add_option("-o,--out", sim_out, "Output dataset (JSON lines)")->required();

    auto* tr = app.add_subcommand("train", "Train an estimator and write a checkpoint and training log");
    add_common(tr, train_c);
    std::string tr_data, tr_out, tr_log, tr_init;
    bool tr_no_cl = false, tr_halve = false, tr_quiet = false;
    tr->add_option("-d,--data", tr_data, "Dataset file")->required();
    tr->add_option("-o,--out", tr_out, "Checkpoint directory")->required();
    tr->add_option("--log", tr_log, "Training log CSV (default: <out>/train_log.csv)");
    tr->add_flag("--no-curriculum", tr_no_cl, "Train on all circuits at once with a matched step budget");
    tr->add_option("--init-checkpoint", tr_init, "Fine-tune from this checkpoint");
    tr->add_flag("--halve-epochs", tr_halve, "Halve every part's epoch count");
    tr->add_flag("-q,--quiet", tr_quiet, "No per-epoch progress on stderr");

    auto* fit = app.add_subcommand("fit-baseline", "Fit error parameters directly and write a report");
    add_common(fit, fit_c);
    std::string fit_data, fit_out;
    int fit_boot = -1;
    fit->add_option("-d,--data", fit_data, "Dataset file")->required();
    fit->add_option("-o,--out", fit_out, "Report JSON")->required();
    fit->add_option("--bootstrap", fit_boot, "Bootstrap resamples (default from config, 0 disables)");

    auto* rep = app.add_subcommand("report", "Evaluate a checkpoint on a dataset: report JSON and heatmaps");
    add_common(rep, rep_c);
    std::string rep_ckpt, rep_data, rep_out, rep_heat, rep_nocl;
    rep->add_option("--checkpoint", rep_ckpt, "Checkpoint directory")->required();
    rep->add_option("-d,--data", rep_data, "Dataset file")->required();
    rep->add_option("-o,--out", rep_out, "Report JSON")->required();
    rep->add_option("--heatmap-dir", rep_heat, "Directory for PTM distance heatmap CSVs");
    rep->add_option("--no-curriculum-checkpoint", rep_nocl, "Checkpoint trained without curriculum, for comparison");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*gen) {
            const RunConfig cfg = load(gen_c);
            std::ostringstream os;
            write_design(os, standard_design(cfg.experiment.n_qubits, cfg.experiment.max_length));
            write_text(gen_out, os.str());
        } else if (*sim) {
            const RunConfig cfg = load(sim_c);
            ExperimentDesign d;
            d.n_qubits = cfg.experiment.n_qubits;
            d.circuits = sim_design.empty() ? standard_design(d.n_qubits, cfg.experiment.max_length).circuits
                                            : read_design(sim_design);
            const Dataset ds = simulate_counts(d, cfg.experiment.truth, cfg.experiment.shots, cfg.experiment.seed);
            std::ostringstream os;
            save_dataset(ds, os);
            write_text(sim_out, os.str());
        } else if (*tr) {
            RunConfig cfg = load(train_c);
            const Dataset ds = read_dataset(tr_data);
            check_qubits(cfg, ds);
            if (tr_no_cl) cfg.training.curriculum = false;
            if (tr_halve) cfg.training.epochs_per_part = halved_epochs(cfg.training.epochs_per_part);
            ProgressFn progress;
            if (!tr_quiet) {
                progress = [](const TrainLogRow& r) {
                    std::fprintf(stderr, "epoch %d part %d loss %.6g\n", r.epoch, r.part, r.loss);
                };
            }
            std::unique_ptr<Estimator> model;
            TrainResult result;
            if (!tr_init.empty()) {
                std::tie(model, result) = transfer_learn(tr_init, ds, cfg.training, progress);
            } else {
                model = make_estimator(config_for_dataset(cfg.model, ds));
                result = train(*model, ds, cfg.training, progress);
            }
            nlohmann::json extra = {{"training", training_json(cfg.training)},
                                    {"estimate", error_params_to_json(result.estimate)}};
            if (!tr_init.empty()) extra["initialized_from"] = fs::path(tr_init).filename().string();
            save_model(*model, tr_out, extra);
            std::ostringstream log;
            result.log.write_csv(log);
            write_text(tr_log.empty() ? fs::path(tr_out) / "train_log.csv" : fs::path(tr_log), log.str());
        } else if (*fit) {
            const RunConfig cfg = load(fit_c);
            const Dataset ds = read_dataset(fit_data);
            check_qubits(cfg, ds);
            const BaselineOptions opt = baseline_options(cfg);
            const int resamples = fit_boot >= 0 ? fit_boot : cfg.report.bootstrap_resamples;
            FitReport r;
            r.n_qubits = ds.n_qubits;
            r.estimator = "baseline";
            const BaselineResult b = baseline_fit(ds, opt);
            r.predicted = b.params;
            if (resamples > 0) r.bootstrap = bootstrap_ci(ds, opt, resamples, cfg.report.bootstrap_seed);
            r.truth = ds.ground_truth;
            r.metrics["fit"] = evaluate_metrics(r.predicted, ds);
            if (r.truth) r.metrics["ground_truth"] = evaluate_metrics(*r.truth, ds);
            r.extra = {{"loss", loss_name(opt.loss)},
                       {"iterations", b.iterations},
                       {"converged", b.converged},
                       {"grad_norm", b.grad_norm}};
            write_text(fit_out, report_text(r));
        } else if (*rep) {
            const RunConfig cfg = load(rep_c);
            const Dataset ds = read_dataset(rep_data);
            const auto model = load_model(rep_ckpt);
            FitReport r;
            r.n_qubits = ds.n_qubits;
            r.estimator = model->config().n_qubits == 1 ? kModelKind1q : kModelKind2q;
            r.predicted = checkpoint_estimate(rep_ckpt, *model, ds);
            r.truth = ds.ground_truth;
            r.metrics["fit"] = evaluate_metrics(r.predicted, ds);
            if (r.truth) r.metrics["ground_truth"] = evaluate_metrics(*r.truth, ds);
            if (!rep_nocl.empty()) {
                const auto other = load_model(rep_nocl);
                r.metrics["no_curriculum"] = evaluate_metrics(checkpoint_estimate(rep_nocl, *other, ds), ds);
            }
            write_text(rep_out, report_text(r));
            if (!rep_heat.empty() && cfg.report.heatmaps) write_heatmaps(rep_heat, r.predicted, r.truth, ds.n_qubits);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "qgst: error: %s\n", e.what());
        return 1;
    }
    return 0;
}

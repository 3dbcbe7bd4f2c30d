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

// Baseline fitting, evaluation metrics, reports and run configuration.

#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "qgst/training.hpp"

namespace qgst {

// ---------------------------------------------------------------------------
// Metrics.

struct MetricTable {
    double weighted_mse = 0.0;
    double kl = 0.0;
    double chi2 = 0.0;
    double neg_log_likelihood = 0.0;

    double get(LossKind k) const {
        switch (k) {
            case LossKind::WeightedMse:
                return weighted_mse;
            case LossKind::Kl:
                return kl;
            case LossKind::Chi2:
                return chi2;
            case LossKind::NegLogLikelihood:
                return neg_log_likelihood;
        }
        return 0.0;
    }
};

inline void to_json(nlohmann::json& j, const MetricTable& m) {
    j = {{"wmse", m.weighted_mse}, {"kl", m.kl}, {"chi2", m.chi2}, {"nll", m.neg_log_likelihood}};
}

inline std::vector<const Circuit*> circuit_pointers(const Dataset& ds) {
    std::vector<const Circuit*> out;
    out.reserve(ds.size());
    for (const auto& c : ds.circuits) out.push_back(&c);
    return out;
}

/// All four losses of the probabilities implied by `params` against the data.
inline MetricTable evaluate_metrics(const ErrorParams& params, const Dataset& ds) {
    if (ds.size() == 0) throw std::invalid_argument("evaluate_metrics: empty dataset");
    const Reconstructor recon(ds.n_qubits);
    std::vector<std::vector<double>> probs;
    recon.evaluate(params.flatten(recon.kinds()), circuit_pointers(ds), probs, nullptr);
    for (auto& row : probs) check_and_clip_probabilities(row);
    MetricTable m;
    m.weighted_mse = loss_weighted_mse(probs, ds.frequencies, ds.shots);
    m.kl = loss_kl(probs, ds.frequencies);
    m.chi2 = loss_chi2(probs, ds.frequencies, ds.shots);
    m.neg_log_likelihood = loss_neg_log_likelihood(probs, ds.frequencies, ds.shots);
    return m;
}

// ---------------------------------------------------------------------------
// Baseline fit: Adam directly on the error parameters, no network.

struct BaselineOptions {
    LossKind loss = LossKind::NegLogLikelihood;
    std::optional<ErrorParams> init;
    int max_iters = 3000;  // per stage
    double lr = 1e-2;
    double lr_min = 1e-5;
    double grad_tol = 1e-8;
    /// Fit short circuits first and extend the length cutoff by doubling.
    bool staged = true;
};

struct BaselineResult {
    ErrorParams params;
    double loss = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline double logit(double p) {
    const double q = std::clamp(p, 1e-6, 1.0 - 1e-6);
    return std::log(q / (1.0 - q));
}

/// Length cutoffs for the staged fit: the longest circuit halved until short.
inline std::vector<std::size_t> baseline_stages(const Dataset& ds, bool staged) {
    const std::size_t longest = longest_circuit(ds);
    std::vector<std::size_t> out{longest};
    if (staged) {
        for (std::size_t cut = longest / 2; cut >= 4; cut /= 2) out.insert(out.begin(), cut);
    }
    return out;
}

}  // namespace detail

/// Fits over-rotations directly and depolarizations through a sigmoid, using
/// gradients of the analytic probability map.
inline BaselineResult baseline_fit(const Dataset& ds, const BaselineOptions& opt = {}) {
    if (ds.size() == 0) throw std::invalid_argument("baseline_fit: empty dataset");
    if (opt.max_iters < 1 || !(opt.lr > 0.0)) throw std::invalid_argument("baseline_fit: bad iteration count or rate");
    const Reconstructor recon(ds.n_qubits);
    const auto& kinds = recon.kinds();
    const int k = static_cast<int>(kinds.size());
    const ErrorParams init = opt.init ? *opt.init : ErrorParams::zeros(ds.n_qubits);
    const std::vector<double> init_flat = init.flatten(kinds);

    std::vector<double> eps0(init_flat.begin(), init_flat.begin() + k), z0;
    for (int i = 0; i < k; ++i) z0.push_back(detail::logit(std::max(init_flat[k + i], 1e-3)));
    Tensor eps = Tensor::parameter({k}, eps0);
    Tensor z = Tensor::parameter({k}, z0);

    BaselineResult result;
    for (std::size_t cut : detail::baseline_stages(ds, opt.staged)) {
        std::vector<const Circuit*> circuits;
        std::vector<double> freqs;
        std::vector<std::int64_t> shots;
        for (std::size_t s = 0; s < ds.size(); ++s) {
            if (ds.circuits[s].size() > cut) continue;
            circuits.push_back(&ds.circuits[s]);
            freqs.insert(freqs.end(), ds.frequencies[s].begin(), ds.frequencies[s].end());
            shots.push_back(ds.shots[s]);
        }
        if (circuits.empty()) continue;
        auto loss_fn = [&] {
            const Tensor params = ad::concat({eps, ad::sigmoid(z)}, 0);
            return loss_tensor(opt.loss, recon.probabilities(params, circuits), freqs, shots);
        };
        ad::Adam adam({eps, z}, {.lr = opt.lr});
        result.converged = false;
        for (int it = 0; it < opt.max_iters; ++it) {
            const double frac = static_cast<double>(it) / std::max(1, opt.max_iters - 1);
            adam.set_lr(opt.lr_min + 0.5 * (opt.lr - opt.lr_min) * (1.0 + std::cos(std::numbers::pi * frac)));
            adam.zero_grad();
            const Tensor loss = loss_fn();
            if (!std::isfinite(loss.item())) throw std::runtime_error("baseline_fit: non-finite loss");
            loss.backward();
            double g2 = 0.0;
            for (double g : eps.grad()) g2 += g * g;
            for (double g : z.grad()) g2 += g * g;
            result.loss = loss.item();
            result.grad_norm = std::sqrt(g2);
            ++result.iterations;
            if (result.grad_norm < opt.grad_tol) {
                result.converged = true;
                break;
            }
            adam.step();
        }
    }
    std::vector<double> flat(eps.values().begin(), eps.values().end());
    for (int i = 0; i < k; ++i) flat.push_back(1.0 / (1.0 + std::exp(-z[i])));
    result.params = ErrorParams::unflatten(kinds, flat);
    return result;
}

/// Resamples every circuit's counts from its observed frequencies.
inline Dataset resample_dataset(const Dataset& ds, std::uint64_t seed) {
    Dataset out = ds;
    out.seed = seed;
    for (std::size_t s = 0; s < ds.size(); ++s) {
        auto rng = detail::circuit_rng(seed, s);
        out.counts[s] = detail::sample_counts(ds.frequencies[s], ds.shots[s], rng);
    }
    out.finalize();
    return out;
}

struct BootstrapResult {
    std::vector<GateKind> kinds;
    ErrorParams center;
    std::vector<double> mean;        // flat [eps..., p...]
    std::vector<double> stddev;
    std::vector<double> half_width;  // 1.96 * stddev
    std::vector<ErrorParams> fits;
};

/// Baseline fit on the data and on `resamples` resampled copies; the
/// interval half-width is 1.96 standard deviations of the resampled fits.
inline BootstrapResult bootstrap_ci(const Dataset& ds, const BaselineOptions& opt, int resamples, std::uint64_t seed) {
    if (resamples < 2) throw std::invalid_argument("bootstrap_ci: need at least 2 resamples");
    BootstrapResult r;
    r.kinds = parametrized_kinds(ds.n_qubits);
    r.center = baseline_fit(ds, opt).params;
    BaselineOptions warm = opt;
    warm.init = r.center;
    warm.staged = false;
    const std::size_t n = 2 * r.kinds.size();
    r.mean.assign(n, 0.0);
    std::vector<std::vector<double>> flats;
    for (int i = 0; i < resamples; ++i) {
        const Dataset d = resample_dataset(ds, seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(i + 1));
        r.fits.push_back(baseline_fit(d, warm).params);
        flats.push_back(r.fits.back().flatten(r.kinds));
        for (std::size_t j = 0; j < n; ++j) r.mean[j] += flats.back()[j] / resamples;
    }
    r.stddev.assign(n, 0.0);
    for (const auto& f : flats) {
        for (std::size_t j = 0; j < n; ++j) r.stddev[j] += (f[j] - r.mean[j]) * (f[j] - r.mean[j]);
    }
    for (double& v : r.stddev) v = std::sqrt(v / (resamples - 1));
    for (double v : r.stddev) r.half_width.push_back(1.96 * v);
    return r;
}

// ---------------------------------------------------------------------------
// Heatmaps and percent errors.

struct HeatmapMatrix {
    std::string label_a;
    std::string label_b;
    RMatrix entries;
};

inline HeatmapMatrix ptm_distance_heatmap(const Ptm& a, const Ptm& b, std::string label_a = "a",
                                          std::string label_b = "b") {
    if (a.dim() != b.dim() || a.matrix.cols() != b.matrix.cols()) {
        throw std::invalid_argument("ptm_distance_heatmap: dimensions " + std::to_string(a.dim()) + " and " +
                                    std::to_string(b.dim()) + " differ");
    }
    return {std::move(label_a), std::move(label_b), (a.matrix - b.matrix).cwiseAbs()};
}

inline void write_heatmap_csv(std::ostream& os, const HeatmapMatrix& h) { write_csv(os, h.entries); }

struct PercentError {
    GateKind kind = GateKind::Gx;
    std::string parameter;  // "eps" or "p"
    double predicted = 0.0;
    double truth = 0.0;
    std::optional<double> percent;  // 100 (pred - true) / true
    double absolute = 0.0;          // pred - true
    bool truth_is_zero = false;
};

inline std::vector<PercentError> percent_error_report(const ErrorParams& fit, const ErrorParams& truth) {
    std::vector<PercentError> out;
    for (const auto& [kind, f] : fit.values()) {
        const GateError& t = truth.at(kind);
        for (int which = 0; which < 2; ++which) {
            PercentError e;
            e.kind = kind;
            e.parameter = which == 0 ? "eps" : "p";
            e.predicted = which == 0 ? f.over_rotation : f.depolarization;
            e.truth = which == 0 ? t.over_rotation : t.depolarization;
            e.absolute = e.predicted - e.truth;
            e.truth_is_zero = e.truth == 0.0;
            if (!e.truth_is_zero) e.percent = 100.0 * (e.predicted - e.truth) / e.truth;
            out.push_back(e);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports.

inline constexpr const char* kReportFormat = "qgst-report";
inline constexpr int kReportVersion = 1;

struct FitReport {
    int n_qubits = 1;
    std::string estimator;
    ErrorParams predicted;
    std::optional<ErrorParams> truth;
    /// Metric rows such as "fit", "ground_truth", "no_curriculum".
    std::map<std::string, MetricTable> metrics;
    std::optional<BootstrapResult> bootstrap;
    nlohmann::json extra = nlohmann::json::object();
};

inline nlohmann::json report_to_json(const FitReport& r) {
    nlohmann::json gates = nlohmann::json::array();
    std::vector<PercentError> pct;
    if (r.truth) pct = percent_error_report(r.predicted, *r.truth);
    const auto kinds = parametrized_kinds(r.n_qubits);
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        const GateKind kind = kinds[i];
        const GateError& g = r.predicted.at(kind);
        nlohmann::json row = {{"gate", std::string(kind_name(kind))},
                              {"predicted", {{"eps", g.over_rotation}, {"p", g.depolarization}}}};
        if (r.truth) {
            const GateError& t = r.truth->at(kind);
            row["ground_truth"] = {{"eps", t.over_rotation}, {"p", t.depolarization}};
            nlohmann::json pe = nlohmann::json::object(), ae = nlohmann::json::object();
            for (const auto& e : pct) {
                if (e.kind != kind) continue;
                pe[e.parameter] = e.percent ? nlohmann::json(*e.percent) : nlohmann::json(nullptr);
                if (e.truth_is_zero) ae[e.parameter] = e.absolute;
            }
            row["percent_error"] = pe;
            if (!ae.empty()) row["absolute_error_zero_truth"] = ae;
        }
        if (r.bootstrap) {
            const std::size_t k = kinds.size();
            row["bootstrap_half_width"] = {{"eps", r.bootstrap->half_width[i]}, {"p", r.bootstrap->half_width[k + i]}};
        }
        gates.push_back(row);
    }
    nlohmann::json j = {{"format", kReportFormat}, {"version", kReportVersion}, {"n_qubits", r.n_qubits},
                        {"estimator", r.estimator}, {"gates", gates}};
    j["metrics"] = nlohmann::json::object();
    for (const auto& [name, m] : r.metrics) j["metrics"][name] = m;
    if (r.bootstrap) {
        j["bootstrap"] = {{"resamples", r.bootstrap->fits.size()}, {"confidence", "1.96 sigma"}};
    }
    if (!r.extra.empty()) j["extra"] = r.extra;
    return j;
}

/// JSON with a trailing newline; identical reports give identical bytes.
inline std::string report_text(const FitReport& r) { return report_to_json(r).dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Run configuration: one JSON document with experiment / model / training /
// report sections. Missing keys take the defaults for the qubit count.

struct ExperimentSettings {
    int n_qubits = 1;
    int max_length = 32;
    std::int64_t shots = 10000;
    std::uint64_t seed = 1;
    ErrorParams truth;
};

struct ReportSettings {
    int bootstrap_resamples = 10;
    std::uint64_t bootstrap_seed = 7;
    LossKind baseline_loss = LossKind::NegLogLikelihood;
    int baseline_max_iters = 3000;
    bool heatmaps = true;
};

struct RunConfig {
    ExperimentSettings experiment;
    ModelConfig model;
    TrainConfig training;
    ReportSettings report;
};

inline BaselineOptions baseline_options(const RunConfig& cfg) {
    BaselineOptions o;
    o.loss = cfg.report.baseline_loss;
    o.max_iters = cfg.report.baseline_max_iters;
    return o;
}

inline ErrorParams default_truth(int n_qubits) {
    ErrorParams p;
    p.set(GateKind::Gx, {0.1, 0.01});
    p.set(GateKind::Gy, {0.15, 0.01});
    if (n_qubits >= 2) p.set(GateKind::Gcphase, {0.1, 0.01});
    return p;
}

inline nlohmann::json default_config_json(int n_qubits) {
    if (n_qubits != 1 && n_qubits != 2) throw std::invalid_argument("config: experiment.n_qubits must be 1 or 2");
    const bool one = n_qubits == 1;
    nlohmann::json model = ModelConfig{};
    model.erase("n_qubits");
    model.erase("vocab_size");
    model.erase("l_pad");
    model.erase("group_size");
    return {
        {"experiment",
         {{"n_qubits", n_qubits},
          {"max_length", one ? 32 : 16},
          {"shots", one ? 10000 : 1000},
          {"seed", 1},
          {"truth", error_params_to_json(default_truth(n_qubits))}}},
        {"model", model},
        {"training",
         {{"group_size", 8},
          {"n_parts", one ? 4 : 3},
          {"epochs_per_part", one ? std::vector<int>{90, 100, 73, 100} : std::vector<int>{60, 60, 100}},
          {"curriculum", true},
          {"lr", 1e-3},
          {"lr_min", 1e-6},
          {"loss", one ? "wmse" : "kl"},
          {"seed", 0}}},
        {"report",
         {{"bootstrap_resamples", 10},
          {"bootstrap_seed", 7},
          {"baseline_loss", "nll"},
          {"baseline_max_iters", 3000},
          {"heatmaps", true}}},
    };
}

namespace detail {

inline void check_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& where) {
    if (!given.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
    for (const auto& [key, value] : given.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!known.contains(key)) throw std::invalid_argument("config: unknown key '" + path + "'");
        if (known[key].is_object() && key != "truth") check_keys(value, known[key], path);
    }
}

template <class T>
T config_value(const nlohmann::json& j, const char* section, const char* key) {
    try {
        return j.at(section).at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(std::string("config: '") + section + "." + key + "' has the wrong type");
    }
}

}  // namespace detail

/// Parses "section.key=value"; the value is read as JSON when possible and
/// as a plain string otherwise.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw std::invalid_argument("override '" + assignment + "' must look like section.key=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    std::string pointer;
    std::stringstream ss(path);
    for (std::string part; std::getline(ss, part, '.');) {
        if (part.empty()) throw std::invalid_argument("override '" + assignment + "' has an empty key");
        pointer += "/" + part;
    }
    doc[nlohmann::json::json_pointer(pointer)] = value;
}

/// Merges the user document and overrides over the defaults and validates.
inline RunConfig parse_run_config(const nlohmann::json& user, const std::vector<std::string>& overrides = {}) {
    if (!user.is_object()) throw std::invalid_argument("config: top level must be a JSON object");
    nlohmann::json merged = user;
    for (const auto& o : overrides) apply_override(merged, o);
    const int n = merged.contains("experiment") && merged["experiment"].contains("n_qubits")
                      ? merged["experiment"]["n_qubits"].get<int>()
                      : 1;
    nlohmann::json doc = default_config_json(n);
    detail::check_keys(merged, doc, "");
    if (merged.contains("experiment") && merged["experiment"].contains("truth")) doc["experiment"].erase("truth");
    doc.merge_patch(merged);

    RunConfig c;
    using detail::config_value;
    c.experiment.n_qubits = n;
    c.experiment.max_length = config_value<int>(doc, "experiment", "max_length");
    c.experiment.shots = config_value<std::int64_t>(doc, "experiment", "shots");
    c.experiment.seed = config_value<std::uint64_t>(doc, "experiment", "seed");
    c.experiment.truth = error_params_from_json(doc["experiment"]["truth"]);
    for (GateKind k : parametrized_kinds(n)) {
        if (!c.experiment.truth.has(k)) {
            throw std::invalid_argument("config: experiment.truth lacks " + std::string(kind_name(k)));
        }
    }
    if (c.experiment.shots < 1) throw std::invalid_argument("config: experiment.shots must be >= 1");

    c.model = doc["model"].get<ModelConfig>();
    c.model.n_qubits = n;

    TrainConfig& t = c.training;
    t.group_size = config_value<int>(doc, "training", "group_size");
    t.n_parts = config_value<int>(doc, "training", "n_parts");
    t.epochs_per_part = config_value<std::vector<int>>(doc, "training", "epochs_per_part");
    t.curriculum = config_value<bool>(doc, "training", "curriculum");
    t.optimizer.lr = config_value<double>(doc, "training", "lr");
    t.lr_min = config_value<double>(doc, "training", "lr_min");
    t.loss = parse_loss(config_value<std::string>(doc, "training", "loss"));
    t.seed = config_value<std::uint64_t>(doc, "training", "seed");
    t.validate();
    c.model.group_size = t.group_size;

    ReportSettings& r = c.report;
    r.bootstrap_resamples = config_value<int>(doc, "report", "bootstrap_resamples");
    r.bootstrap_seed = config_value<std::uint64_t>(doc, "report", "bootstrap_seed");
    r.baseline_loss = parse_loss(config_value<std::string>(doc, "report", "baseline_loss"));
    r.baseline_max_iters = config_value<int>(doc, "report", "baseline_max_iters");
    r.heatmaps = config_value<bool>(doc, "report", "heatmaps");
    return c;
}

inline RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    nlohmann::json user = nlohmann::json::object();
    if (!path.empty()) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot open config file " + path);
        user = nlohmann::json::parse(is, nullptr, false);
        if (user.is_discarded()) throw std::invalid_argument("config file " + path + " is not valid JSON");
    }
    return parse_run_config(user, overrides);
}

}  // namespace qgst

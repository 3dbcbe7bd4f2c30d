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

#include "qgst/bench.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace qgst;

namespace {

ErrorParams planted(double ex, double px, double ey, double py) {
    ErrorParams p;
    p.set(GateKind::Gx, {ex, px});
    p.set(GateKind::Gy, {ey, py});
    return p;
}

/// Dataset whose frequencies are the exact model probabilities.
Dataset exact_dataset(const ExperimentDesign& d, const ErrorParams& truth) {
    Dataset ds = simulate_counts(d, truth, 1000, 1);
    const GateSet gs = make_gate_set(d.n_qubits, truth);
    for (std::size_t s = 0; s < ds.size(); ++s) ds.frequencies[s] = circuit_probabilities(ds.circuits[s], gs);
    return ds;
}

}  // namespace

TEST(Metrics, truth_is_positive_and_corruption_is_worse) {
    const ErrorParams truth = planted(0.1, 0.01, 0.15, 0.01);
    const Dataset ds = simulate_counts(standard_design(1, 8), truth, 1000, 3);
    const MetricTable at = evaluate_metrics(truth, ds);
    const MetricTable off = evaluate_metrics(planted(0.6, 0.01, 0.15, 0.01), ds);
    for (LossKind k : {LossKind::WeightedMse, LossKind::Kl, LossKind::Chi2, LossKind::NegLogLikelihood}) {
        EXPECT_GT(at.get(k), 0.0) << loss_name(k);
        EXPECT_GT(off.get(k), at.get(k)) << loss_name(k);
    }
}

TEST(Metrics, nondecreasing_along_a_path_away_from_truth) {
    const ErrorParams truth = planted(0.1, 0.01, 0.15, 0.01);
    const Dataset ds = simulate_counts(standard_design(1, 8), truth, 10000, 4);
    std::vector<MetricTable> path;
    for (int i = 0; i <= 4; ++i) {
        const double t = i / 4.0;
        path.push_back(evaluate_metrics(planted(0.1 + 0.3 * t, 0.01 + 0.1 * t, 0.15 - 0.1 * t, 0.01), ds));
    }
    for (LossKind k : {LossKind::WeightedMse, LossKind::Kl, LossKind::Chi2, LossKind::NegLogLikelihood}) {
        for (int i = 1; i <= 4; ++i) EXPECT_GE(path[i].get(k), path[i - 1].get(k)) << loss_name(k) << " step " << i;
    }
}

TEST(Baseline, ideal_exact_data_stays_at_zero) {
    const Dataset ds = exact_dataset(standard_design(1, 8), ErrorParams::zeros(1));
    const BaselineResult r = baseline_fit(ds);
    for (const auto& [kind, e] : r.params.values()) {
        EXPECT_LT(std::abs(e.over_rotation), 1e-6) << kind_name(kind);
        EXPECT_LT(e.depolarization, 1e-6) << kind_name(kind);
    }
}

TEST(Baseline, recovers_exact_planted_parameters) {
    const ErrorParams truth = planted(0.1, 0.01, 0.15, 0.01);
    const BaselineResult r = baseline_fit(exact_dataset(standard_design(1, 16), truth), {.max_iters = 1500});
    for (const auto& [kind, e] : r.params.values()) {
        EXPECT_NEAR(e.over_rotation, truth.at(kind).over_rotation, 1e-5) << kind_name(kind);
        EXPECT_NEAR(e.depolarization, truth.at(kind).depolarization, 1e-5) << kind_name(kind);
    }
}

TEST(Baseline, sampled_data_within_tolerance) {
    const ErrorParams truth = planted(0.1, 0.01, 0.15, 0.01);
    const Dataset ds = simulate_counts(standard_design(1, 16), truth, 10000, 5);
    const BaselineResult r = baseline_fit(ds, {.max_iters = 1500});
    for (const auto& [kind, e] : r.params.values()) {
        EXPECT_LT(std::abs(e.over_rotation / truth.at(kind).over_rotation - 1), 0.01) << kind_name(kind);
        EXPECT_LT(std::abs(e.depolarization / truth.at(kind).depolarization - 1), 0.05) << kind_name(kind);
    }
    EXPECT_THROW(baseline_fit(Dataset{}), std::invalid_argument);
}

TEST(Bootstrap, resampling_is_deterministic_and_interval_positive) {
    const ErrorParams truth = planted(0.1, 0.01, 0.15, 0.01);
    const Dataset ds = simulate_counts(standard_design(1, 4), truth, 1000, 6);
    const Dataset a = resample_dataset(ds, 9), b = resample_dataset(ds, 9), c = resample_dataset(ds, 10);
    EXPECT_EQ(a.counts, b.counts);
    EXPECT_NE(a.counts, c.counts);
    EXPECT_EQ(a.shots, ds.shots);

    const BootstrapResult r = bootstrap_ci(ds, {.max_iters = 400}, 4, 11);
    EXPECT_EQ(r.fits.size(), 4u);
    ASSERT_EQ(r.half_width.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_GT(r.half_width[i], 0.0);
        EXPECT_DOUBLE_EQ(r.half_width[i], 1.96 * r.stddev[i]);
    }
    EXPECT_THROW(bootstrap_ci(ds, {}, 1, 0), std::invalid_argument);
}

TEST(Heatmap, zero_symmetric_and_matches_direct_subtraction) {
    const Ptm ideal = noisy_gate_ptm(Gx(), ErrorParams::zeros(1), 1);
    const Ptm noisy = noisy_gate_ptm(Gx(), planted(0.1, 0.01, 0, 0), 1);
    EXPECT_EQ(ptm_distance_heatmap(ideal, ideal).entries.maxCoeff(), 0.0);
    const HeatmapMatrix h = ptm_distance_heatmap(noisy, ideal, "noisy", "ideal");
    EXPECT_EQ((h.entries - ptm_distance_heatmap(ideal, noisy).entries).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(h.label_a, "noisy");
    // Direct subtraction in the I, X, Y, Z basis.
    const double c = std::cos(std::numbers::pi / 2 + 0.1), s = std::sin(std::numbers::pi / 2 + 0.1);
    const double expect[4][4] = {{0, 0, 0, 0},
                                 {0, 0.01, 0, 0},
                                 {0, 0, std::abs(0.99 * c), std::abs(0.99 * s - 1)},
                                 {0, 0, std::abs(0.99 * s - 1), std::abs(0.99 * c)}};
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) EXPECT_NEAR(h.entries(i, j), expect[i][j], 1e-12) << i << "," << j;
    }
    EXPECT_NEAR(h.entries.maxCoeff(), 0.99 * std::sin(0.1), 1e-12);
    EXPECT_THROW(ptm_distance_heatmap(ideal, identity_ptm(2)), std::invalid_argument);
}

TEST(PercentError, sign_convention_and_zero_truth) {
    const auto rows = percent_error_report(planted(0.09963, 0.01019, 0.15, 0.0), planted(0.1, 0.01, 0.15, 0.0));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0].parameter, "eps");
    EXPECT_NEAR(*rows[0].percent, -0.37, 1e-9);
    EXPECT_NEAR(*rows[1].percent, 1.9, 1e-9);
    EXPECT_EQ(*rows[2].percent, 0.0);
    EXPECT_TRUE(rows[3].truth_is_zero);
    EXPECT_FALSE(rows[3].percent.has_value());
    EXPECT_EQ(rows[3].absolute, 0.0);
}

TEST(Report, json_structure_and_determinism) {
    const ErrorParams truth = planted(0.1, 0.01, 0.15, 0.01);
    const Dataset ds = simulate_counts(standard_design(1, 4), truth, 1000, 12);
    FitReport r;
    r.n_qubits = 1;
    r.estimator = "baseline";
    r.predicted = planted(0.0999, 0.0101, 0.1502, 0.0098);
    r.metrics["fit"] = evaluate_metrics(r.predicted, ds);
    const std::string without_truth = report_text(r);
    const nlohmann::json j = nlohmann::json::parse(without_truth);
    EXPECT_EQ(j["format"], kReportFormat);
    EXPECT_FALSE(j["gates"][0].contains("percent_error"));
    EXPECT_FALSE(j["gates"][0].contains("ground_truth"));

    r.truth = truth;
    r.metrics["ground_truth"] = evaluate_metrics(truth, ds);
    const nlohmann::json k = nlohmann::json::parse(report_text(r));
    EXPECT_EQ(k["gates"][0]["gate"], "Gx");
    EXPECT_NEAR(k["gates"][0]["percent_error"]["eps"].get<double>(), -0.1, 1e-9);
    EXPECT_TRUE(k["metrics"].contains("ground_truth"));
    EXPECT_EQ(report_text(r), report_text(r));
}

TEST(Config, defaults_per_qubit_count) {
    const RunConfig one = parse_run_config(nlohmann::json::object());
    EXPECT_EQ(one.experiment.n_qubits, 1);
    EXPECT_EQ(one.experiment.max_length, 32);
    EXPECT_EQ(one.experiment.shots, 10000);
    EXPECT_EQ(one.training.epochs_per_part, (std::vector<int>{90, 100, 73, 100}));
    EXPECT_EQ(one.training.loss, LossKind::WeightedMse);
    EXPECT_EQ(one.experiment.truth, default_truth(1));
    EXPECT_EQ(one.model.d_model, 64);

    const RunConfig two = parse_run_config({{"experiment", {{"n_qubits", 2}}}});
    EXPECT_EQ(two.experiment.max_length, 16);
    EXPECT_EQ(two.experiment.shots, 1000);
    EXPECT_EQ(two.training.n_parts, 3);
    EXPECT_EQ(two.training.epochs_per_part, (std::vector<int>{60, 60, 100}));
    EXPECT_EQ(two.training.loss, LossKind::Kl);
    EXPECT_EQ(two.model.n_qubits, 2);
}

TEST(Config, overrides_and_errors) {
    const RunConfig c = parse_run_config(
        {{"training", {{"seed", 4}}}},
        {"training.epochs_per_part=[3,3,3,3]", "model.d_model=32", "training.loss=kl", "experiment.shots=500"});
    EXPECT_EQ(c.training.epochs_per_part, (std::vector<int>{3, 3, 3, 3}));
    EXPECT_EQ(c.training.seed, 4u);
    EXPECT_EQ(c.model.d_model, 32);
    EXPECT_EQ(c.training.loss, LossKind::Kl);
    EXPECT_EQ(c.experiment.shots, 500);

    const RunConfig t = parse_run_config(
        {{"experiment", {{"truth", {{"Gx", {{"over_rotation", 0.02}, {"depolarization", 0.015}}},
                                    {"Gy", {{"over_rotation", 0.01}, {"depolarization", 0.008}}}}}}}});
    EXPECT_EQ(t.experiment.truth.at(GateKind::Gx).depolarization, 0.015);

    EXPECT_THROW(parse_run_config({{"trainig", {{"seed", 1}}}}), std::invalid_argument);
    EXPECT_THROW(parse_run_config({{"training", {{"epochs", 1}}}}), std::invalid_argument);
    EXPECT_THROW(parse_run_config({{"training", {{"lr", "fast"}}}}), std::invalid_argument);
    EXPECT_THROW(parse_run_config({}, {"training.n_parts=3"}), std::invalid_argument);
    EXPECT_THROW(parse_run_config({}, {"nonsense"}), std::invalid_argument);
    EXPECT_THROW(parse_run_config({{"experiment", {{"n_qubits", 2}, {"truth", error_params_to_json(default_truth(1))}}}}),
                 std::invalid_argument);
    EXPECT_THROW(load_run_config("/nonexistent/config.json"), std::runtime_error);
}

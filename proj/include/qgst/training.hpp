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

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "qgst/autodiff.hpp"
#include "qgst/experiment.hpp"
#include "qgst/models.hpp"
#include "qgst/ptm.hpp"

namespace qgst {

// ---------------------------------------------------------------------------
// Grouping and curriculum.

/// Consecutive groups of `group_size` taken from `order`; the last group is
/// topped up by cycling through its own members.
inline std::vector<std::vector<std::size_t>> group_indices(const std::vector<std::size_t>& order, int group_size) {
    if (group_size < 1) throw std::invalid_argument("group_size must be >= 1");
    if (order.empty()) throw std::invalid_argument("cannot group an empty set of circuits");
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t start = 0; start < order.size(); start += group_size) {
        const std::size_t end = std::min(order.size(), start + group_size);
        std::vector<std::size_t> g(order.begin() + start, order.begin() + end);
        const std::size_t own = g.size();
        for (std::size_t i = 0; g.size() < static_cast<std::size_t>(group_size); ++i) g.push_back(g[i % own]);
        groups.push_back(std::move(g));
    }
    return groups;
}

/// Groups the dataset in its stored order.
inline std::vector<GroupInput> group_dataset(const Dataset& ds, const TokenizedDataset& tokens, int group_size) {
    if (ds.size() == 0) throw std::invalid_argument("group_dataset: empty dataset");
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<GroupInput> out;
    for (const auto& g : group_indices(order, group_size)) out.push_back(make_group_input(tokens, ds, g));
    return out;
}

struct CurriculumSchedule {
    std::vector<std::vector<std::size_t>> parts;
    std::vector<int> epochs_per_part;
    bool accumulative = false;

    int total_epochs() const { return std::accumulate(epochs_per_part.begin(), epochs_per_part.end(), 0); }
    /// First epoch (0-based) of every part.
    std::vector<int> part_start_epochs() const {
        std::vector<int> out;
        int e = 0;
        for (int n : epochs_per_part) {
            out.push_back(e);
            e += n;
        }
        return out;
    }
};

/// Stable sort by circuit length, then `n_parts` contiguous parts whose sizes
/// differ by at most one.
inline CurriculumSchedule curriculum_partition(const Dataset& ds, int n_parts, std::vector<int> epochs_per_part) {
    if (ds.size() == 0) throw std::invalid_argument("curriculum_partition: empty dataset");
    if (n_parts < 1 || static_cast<std::size_t>(n_parts) > ds.size()) {
        throw std::invalid_argument("curriculum_partition: cannot split " + std::to_string(ds.size()) + " circuits into " +
                                    std::to_string(n_parts) + " parts");
    }
    if (static_cast<int>(epochs_per_part.size()) != n_parts) {
        throw std::invalid_argument("curriculum_partition: " + std::to_string(epochs_per_part.size()) +
                                    " epoch counts for " + std::to_string(n_parts) + " parts");
    }
    for (int e : epochs_per_part) {
        if (e < 1) throw std::invalid_argument("curriculum_partition: epoch counts must be positive");
    }
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ds.circuits[a].size() < ds.circuits[b].size(); });
    CurriculumSchedule s;
    s.epochs_per_part = std::move(epochs_per_part);
    const std::size_t base = ds.size() / n_parts, extra = ds.size() % n_parts;
    std::size_t start = 0;
    for (int k = 0; k < n_parts; ++k) {
        const std::size_t len = base + (static_cast<std::size_t>(k) < extra ? 1 : 0);
        s.parts.emplace_back(order.begin() + start, order.begin() + start + len);
        start += len;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Losses over predicted probabilities p and observed frequencies f.

enum class LossKind { WeightedMse, Kl, Chi2, NegLogLikelihood };

inline constexpr double kProbClip = 1e-10;
inline constexpr double kVarianceFloor = 1e-4;  // times 1/N

inline std::string loss_name(LossKind k) {
    switch (k) {
        case LossKind::WeightedMse:
            return "wmse";
        case LossKind::Kl:
            return "kl";
        case LossKind::Chi2:
            return "chi2";
        case LossKind::NegLogLikelihood:
            return "nll";
    }
    return "?";
}

inline LossKind parse_loss(const std::string& s) {
    if (s == "wmse" || s == "weighted-mse") return LossKind::WeightedMse;
    if (s == "kl") return LossKind::Kl;
    if (s == "chi2") return LossKind::Chi2;
    if (s == "nll" || s == "neg-log-likelihood") return LossKind::NegLogLikelihood;
    throw std::invalid_argument("unknown loss '" + s + "' (expected wmse, kl, chi2 or nll)");
}

namespace detail {

/// One (circuit, outcome) term of a loss and its derivative in p.
inline std::pair<double, double> loss_term(LossKind kind, double p, double f, double n) {
    switch (kind) {
        case LossKind::WeightedMse: {
            const double r = p - f;
            const double v = p * (1.0 - p);
            if (v > kVarianceFloor) return {n * r * r / v, n * (2.0 * r / v - r * r * (1.0 - 2.0 * p) / (v * v))};
            return {n * r * r / kVarianceFloor, 2.0 * n * r / kVarianceFloor};
        }
        case LossKind::Kl: {
            if (f == 0.0) return {0.0, 0.0};
            const bool inside = p > kProbClip && p < 1.0 - kProbClip;
            const double q = std::clamp(p, kProbClip, 1.0 - kProbClip);
            return {f * std::log(f / q), inside ? -f / q : 0.0};
        }
        case LossKind::Chi2: {
            const bool inside = p > kProbClip;
            const double q = std::max(p, kProbClip);
            const double r = q - f;
            return {n * r * r / q, inside ? n * (q * q - f * f) / (q * q) : 0.0};
        }
        case LossKind::NegLogLikelihood: {
            if (f == 0.0) return {0.0, 0.0};
            const bool inside = p > kProbClip;
            const double q = std::max(p, kProbClip);
            return {-n * f * std::log(q), inside ? -n * f / q : 0.0};
        }
    }
    return {0.0, 0.0};
}

}  // namespace detail

/// Loss summed over circuits and outcomes. `pred` and `freqs` are
/// [circuits][outcomes]; `shots` has one entry per circuit.
inline double loss_value(LossKind kind, const std::vector<std::vector<double>>& pred,
                         const std::vector<std::vector<double>>& freqs, const std::vector<std::int64_t>& shots) {
    if (pred.size() != freqs.size() || pred.size() != shots.size()) {
        throw std::invalid_argument("loss: predictions, frequencies and shots differ in length");
    }
    double total = 0.0;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        if (pred[s].size() != freqs[s].size()) throw std::invalid_argument("loss: outcome count mismatch");
        for (std::size_t b = 0; b < pred[s].size(); ++b) {
            total += detail::loss_term(kind, pred[s][b], freqs[s][b], static_cast<double>(shots[s])).first;
        }
    }
    return total;
}

inline double loss_weighted_mse(const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& f,
                                const std::vector<std::int64_t>& shots) {
    return loss_value(LossKind::WeightedMse, p, f, shots);
}
inline double loss_kl(const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& f) {
    return loss_value(LossKind::Kl, p, f, std::vector<std::int64_t>(p.size(), 1));
}
inline double loss_chi2(const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& f,
                        const std::vector<std::int64_t>& shots) {
    return loss_value(LossKind::Chi2, p, f, shots);
}
inline double loss_neg_log_likelihood(const std::vector<std::vector<double>>& p,
                                      const std::vector<std::vector<double>>& f, const std::vector<std::int64_t>& shots) {
    return loss_value(LossKind::NegLogLikelihood, p, f, shots);
}

/// Differentiable loss of predicted probabilities `pred` [S, B] against
/// constant frequencies (flat, S*B) and per-circuit shots.
inline Tensor loss_tensor(LossKind kind, const Tensor& pred, const std::vector<double>& freqs,
                          const std::vector<std::int64_t>& shots) {
    if (pred.rank() != 2 || pred.size() != freqs.size() || static_cast<std::size_t>(pred.dim(0)) != shots.size()) {
        throw std::invalid_argument("loss: predictions of shape " + ad::shape_str(pred.shape()) + " do not match " +
                                    std::to_string(shots.size()) + " circuits of frequencies");
    }
    const int outcomes = pred.dim(1);
    double total = 0.0;
    ad::Buffer deriv(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto [v, d] = detail::loss_term(kind, pred[i], freqs[i], static_cast<double>(shots[i / outcomes]));
        total += v;
        deriv[i] = d;
    }
    return ad::make_result({}, {total}, {pred}, [deriv = std::move(deriv)](ad::Node& self) {
        ad::Node& p = *self.parents[0];
        for (std::size_t i = 0; i < deriv.size(); ++i) p.grad[i] += self.grad[0] * deriv[i];
    });
}

// ---------------------------------------------------------------------------
// Analytic reconstruction: error parameters -> gate PTMs -> probabilities.

/// Gate PTMs and their parameter derivatives for one parameter vector.
class Reconstructor {
   public:
    explicit Reconstructor(int n_qubits)
        : n_qubits_(n_qubits), basis_(build_pauli_basis(n_qubits)), kinds_(parametrized_kinds(n_qubits)) {
        prep_ = computational_state(0, basis_).coeffs;
        for (const auto& e : computational_effects(n_qubits, basis_)) effects_.push_back(e.coeffs);
    }

    int n_qubits() const { return n_qubits_; }
    const std::vector<GateKind>& kinds() const { return kinds_; }
    int n_params() const { return 2 * static_cast<int>(kinds_.size()); }

    /// Probabilities [S][B] and Jacobian [S][B][n_params] at `flat`
    /// (layout [eps..., p...]).
    void evaluate(const std::vector<double>& flat, const std::vector<const Circuit*>& circuits,
                  std::vector<std::vector<double>>& probs, std::vector<std::vector<std::vector<double>>>* jacobian) const {
        const int k = static_cast<int>(kinds_.size());
        if (static_cast<int>(flat.size()) != 2 * k) throw std::invalid_argument("reconstruct: wrong parameter count");
        for (double v : flat) {
            if (!std::isfinite(v)) throw std::runtime_error("reconstruct: non-finite error parameter");
        }
        std::map<GateLabel, std::pair<NoisyGate, int>> gates;
        for (const GateLabel& label : model_labels(n_qubits_)) {
            int ki = -1;
            GateError e;
            for (int i = 0; i < k; ++i) {
                if (kinds_[i] == label.kind) {
                    ki = i;
                    e = {flat[i], flat[k + i]};
                }
            }
            gates.emplace(label, std::make_pair(noisy_gate_with_derivatives(label, e, n_qubits_, basis_), ki));
        }
        const int n = basis_.size();
        const int outcomes = static_cast<int>(effects_.size());
        probs.assign(circuits.size(), std::vector<double>(outcomes));
        if (jacobian) jacobian->assign(circuits.size(), std::vector<std::vector<double>>(outcomes, std::vector<double>(2 * k)));
        RVector state(n), next(n);
        RMatrix tangents(n, 2 * k), next_t(n, 2 * k);
        for (std::size_t s = 0; s < circuits.size(); ++s) {
            state = prep_;
            tangents.setZero();
            for (const GateLabel& label : *circuits[s]) {
                auto it = gates.find(label);
                if (it == gates.end()) throw std::invalid_argument("reconstruct: unknown gate label " + label.str());
                const auto& [g, ki] = it->second;
                if (ki < 0) continue;  // ideal identity
                next.noalias() = g.value * state;
                if (jacobian) {
                    next_t.noalias() = g.value * tangents;
                    next_t.col(ki).noalias() += g.d_over_rotation * state;
                    next_t.col(k + ki).noalias() += g.d_depolarization * state;
                    tangents.swap(next_t);
                }
                state.swap(next);
            }
            for (int b = 0; b < outcomes; ++b) {
                probs[s][b] = effects_[b].dot(state);
                if (jacobian) {
                    for (int j = 0; j < 2 * k; ++j) (*jacobian)[s][b][j] = effects_[b].dot(tangents.col(j));
                }
            }
        }
    }

    /// Differentiable probabilities [S, B] from a parameter tensor [2K].
    Tensor probabilities(const Tensor& params, const std::vector<const Circuit*>& circuits) const {
        if (params.rank() != 1 || params.dim(0) != n_params()) {
            throw std::invalid_argument("reconstruct: parameter tensor of shape " + ad::shape_str(params.shape()) +
                                        ", expected [" + std::to_string(n_params()) + "]");
        }
        const std::vector<double> flat(params.values().begin(), params.values().end());
        std::vector<std::vector<double>> probs;
        std::vector<std::vector<std::vector<double>>> jac;
        evaluate(flat, circuits, probs, params.requires_grad() ? &jac : nullptr);
        const int outcomes = static_cast<int>(effects_.size());
        ad::Buffer values;
        values.reserve(circuits.size() * outcomes);
        for (const auto& row : probs) values.insert(values.end(), row.begin(), row.end());
        const int np = n_params();
        return ad::make_result({static_cast<int>(circuits.size()), outcomes}, std::move(values), {params},
                               [jac = std::move(jac), outcomes, np](ad::Node& self) {
                                   ad::Node& p = *self.parents[0];
                                   for (std::size_t s = 0; s < jac.size(); ++s) {
                                       for (int b = 0; b < outcomes; ++b) {
                                           const double g = self.grad[s * outcomes + b];
                                           for (int j = 0; j < np; ++j) p.grad[j] += g * jac[s][b][j];
                                       }
                                   }
                               });
    }

   private:
    int n_qubits_;
    PauliBasis basis_;
    std::vector<GateKind> kinds_;
    RVector prep_;
    std::vector<RVector> effects_;
};

struct Prediction {
    ErrorParams params;
    Tensor outputs;        // [2K]
    Tensor probabilities;  // [group_size, B]
};

/// Model output for a group and the group's circuit probabilities under it.
inline Prediction predict_and_reconstruct(const Estimator& model, const GroupInput& group, const Dataset& ds,
                                          const Reconstructor& recon) {
    Prediction out;
    out.outputs = model.forward(group);
    for (double v : out.outputs.values()) {
        if (!std::isfinite(v)) throw std::runtime_error("model produced a non-finite error parameter");
    }
    out.params = output_to_params(out.outputs, model.config().n_qubits);
    std::vector<const Circuit*> circuits;
    for (std::size_t m : group.members) circuits.push_back(&ds.circuits.at(m));
    out.probabilities = recon.probabilities(out.outputs, circuits);
    return out;
}

inline Tensor group_loss(LossKind kind, const Tensor& probabilities, const GroupInput& group, const Dataset& ds) {
    std::vector<std::int64_t> shots;
    for (std::size_t m : group.members) shots.push_back(ds.shots.at(m));
    return loss_tensor(kind, probabilities, group.probs, shots);
}

// ---------------------------------------------------------------------------
// Training.

struct TrainConfig {
    int group_size = 8;
    int n_parts = 4;
    std::vector<int> epochs_per_part = {90, 100, 73, 100};
    bool curriculum = true;
    ad::AdamOptions optimizer;
    /// Final learning rate of the cosine decay from optimizer.lr over the whole
    /// run. Each part also warms up linearly over its first epoch.
    double lr_min = 1e-6;
    LossKind loss = LossKind::WeightedMse;
    std::uint64_t seed = 0;

    void validate() const {
        if (group_size < 1) throw std::invalid_argument("training: group_size must be >= 1");
        if (n_parts < 1) throw std::invalid_argument("training: n_parts must be >= 1");
        if (static_cast<int>(epochs_per_part.size()) != n_parts) {
            throw std::invalid_argument("training: " + std::to_string(epochs_per_part.size()) + " epoch counts for " +
                                        std::to_string(n_parts) + " parts");
        }
        for (int e : epochs_per_part) {
            if (e < 1) throw std::invalid_argument("training: epoch counts must be positive");
        }
        if (!(optimizer.lr > 0.0) || lr_min < 0.0 || lr_min > optimizer.lr) {
            throw std::invalid_argument("training: need 0 <= lr_min <= lr and lr > 0");
        }
    }

    /// Epochs for a run without curriculum with the same number of optimizer
    /// steps: every epoch then covers all parts at once.
    int no_curriculum_epochs() const {
        const int total = std::accumulate(epochs_per_part.begin(), epochs_per_part.end(), 0);
        return std::max(1, static_cast<int>(std::lround(static_cast<double>(total) / n_parts)));
    }
};

inline std::vector<int> halved_epochs(const std::vector<int>& epochs) {
    std::vector<int> out;
    for (int e : epochs) out.push_back(std::max(1, e / 2));
    return out;
}

struct TrainLogRow {
    int epoch = 0;
    int part = 0;
    double loss = 0.0;              // mean group loss over the epoch
    std::vector<double> params;     // mean predicted [eps..., p...] over the epoch
    double wall_seconds = 0.0;      // not exported
};

struct TrainLog {
    std::vector<GateKind> kinds;
    std::vector<TrainLogRow> rows;

    /// CSV with columns epoch, part, loss and one column per parameter.
    void write_csv(std::ostream& os) const {
        os << "epoch,part,loss";
        for (GateKind k : kinds) os << ",eps_" << kind_short_name(k);
        for (GateKind k : kinds) os << ",p_" << kind_short_name(k);
        os << '\n';
        char buf[40];
        for (const auto& r : rows) {
            os << r.epoch << ',' << r.part;
            std::snprintf(buf, sizeof buf, ",%.17g", r.loss);
            os << buf;
            for (double v : r.params) {
                std::snprintf(buf, sizeof buf, ",%.17g", v);
                os << buf;
            }
            os << '\n';
        }
    }
};

struct TrainResult {
    TrainLog log;
    /// Mean prediction over the groups of the final part.
    ErrorParams estimate;
    std::vector<double> estimate_flat;
};

using ProgressFn = std::function<void(const TrainLogRow&)>;

/// Tokenization matching a model's padding.
inline TokenizedDataset tokenize_for_model(const Dataset& ds, const ModelConfig& c) {
    if (ds.n_qubits != c.n_qubits) {
        throw std::invalid_argument("dataset has " + std::to_string(ds.n_qubits) + " qubit(s), model expects " +
                                    std::to_string(c.n_qubits));
    }
    if (static_cast<int>(longest_circuit(ds)) > c.l_pad) {
        throw std::invalid_argument("dataset circuits (up to " + std::to_string(longest_circuit(ds)) +
                                    " gates) exceed the model's padding length " + std::to_string(c.l_pad));
    }
    return tokenize(ds, c.l_pad);
}

/// Mean model prediction over `groups` (no gradient tracking needed).
inline std::vector<double> mean_prediction(const Estimator& model, const std::vector<GroupInput>& groups) {
    std::vector<double> mean(model.config().n_outputs(), 0.0);
    for (const auto& g : groups) {
        const Tensor out = model.forward(g);
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += out[i];
    }
    for (double& v : mean) v /= static_cast<double>(groups.size());
    return mean;
}

/// Parameter estimate for a dataset: the mean prediction over the groups of
/// the longest-circuit part when the dataset is split into `n_parts`.
inline std::vector<double> estimate_parameters(const Estimator& model, const Dataset& ds, int n_parts) {
    const TokenizedDataset tokens = tokenize_for_model(ds, model.config());
    const CurriculumSchedule s = curriculum_partition(ds, n_parts, std::vector<int>(n_parts, 1));
    std::vector<GroupInput> groups;
    for (const auto& idx : group_indices(s.parts.back(), model.config().group_size)) {
        groups.push_back(make_group_input(tokens, ds, idx));
    }
    return mean_prediction(model, groups);
}

/// Curriculum training: every part trains only on its own circuits, with
/// fresh random groups each epoch and one optimizer step per group.
inline TrainResult train(Estimator& model, const Dataset& ds, const TrainConfig& cfg, const ProgressFn& progress = {}) {
    cfg.validate();
    const ModelConfig& mc = model.config();
    if (mc.group_size != cfg.group_size) {
        throw std::invalid_argument("training group_size " + std::to_string(cfg.group_size) +
                                    " differs from the model's " + std::to_string(mc.group_size));
    }
    const TokenizedDataset tokens = tokenize_for_model(ds, mc);
    const Reconstructor recon(ds.n_qubits);

    CurriculumSchedule schedule;
    if (cfg.curriculum) {
        schedule = curriculum_partition(ds, cfg.n_parts, cfg.epochs_per_part);
    } else {
        std::vector<std::size_t> all(ds.size());
        std::iota(all.begin(), all.end(), 0);
        schedule.parts = {all};
        schedule.epochs_per_part = {cfg.no_curriculum_epochs()};
    }

    long total_steps = 0;
    for (std::size_t part = 0; part < schedule.parts.size(); ++part) {
        total_steps += static_cast<long>(schedule.epochs_per_part[part]) *
                       static_cast<long>((schedule.parts[part].size() + cfg.group_size - 1) / cfg.group_size);
    }
    auto lr_at = [&](long step, long part_step, int warmup) {
        const double frac = static_cast<double>(step) / static_cast<double>(std::max(1L, total_steps - 1));
        const double lr = cfg.lr_min + 0.5 * (cfg.optimizer.lr - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
        return part_step < warmup ? lr * static_cast<double>(part_step + 1) / warmup : lr;
    };

    ad::Adam opt(model.parameters().tensors(), cfg.optimizer);
    std::mt19937_64 rng(cfg.seed);
    long step = 0;
    TrainResult result;
    result.log.kinds = recon.kinds();
    const auto t0 = std::chrono::steady_clock::now();
    int epoch = 0;
    for (std::size_t part = 0; part < schedule.parts.size(); ++part) {
        std::vector<std::size_t> members = schedule.parts[part];
        const int epochs = schedule.epochs_per_part[part];
        const int groups_per_epoch = static_cast<int>((members.size() + cfg.group_size - 1) / cfg.group_size);
        long part_step = 0;
        for (int e = 0; e < epochs; ++e, ++epoch) {
            std::shuffle(members.begin(), members.end(), rng);
            TrainLogRow row;
            row.epoch = epoch;
            row.part = static_cast<int>(part);
            row.params.assign(recon.n_params(), 0.0);
            for (const auto& idx : group_indices(members, cfg.group_size)) {
                opt.set_lr(lr_at(step, part_step, groups_per_epoch));
                const GroupInput g = make_group_input(tokens, ds, idx);
                opt.zero_grad();
                const Prediction pred = predict_and_reconstruct(model, g, ds, recon);
                const Tensor loss = group_loss(cfg.loss, pred.probabilities, g, ds);
                if (!std::isfinite(loss.item())) {
                    throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                                             " (part " + std::to_string(part) + ")");
                }
                loss.backward();
                opt.step();
                ++step;
                ++part_step;
                row.loss += loss.item();
                for (int i = 0; i < recon.n_params(); ++i) row.params[i] += pred.outputs[i];
            }
            row.loss /= groups_per_epoch;
            for (double& v : row.params) v /= groups_per_epoch;
            row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (progress) progress(row);
            result.log.rows.push_back(std::move(row));
        }
    }

    result.estimate_flat = estimate_parameters(model, ds, static_cast<int>(schedule.parts.size()));
    result.estimate = ErrorParams::unflatten(recon.kinds(), result.estimate_flat);
    return result;
}

/// Loads a pretrained checkpoint, checks it against the new dataset and
/// continues training with `cfg` (typically halved epochs).
inline std::pair<std::unique_ptr<Estimator>, TrainResult> transfer_learn(const std::filesystem::path& checkpoint,
                                                                         const Dataset& ds, const TrainConfig& cfg,
                                                                         const ProgressFn& progress = {}) {
    const ModelConfig mc = read_model_config(checkpoint);
    if (mc.n_qubits != ds.n_qubits) {
        throw std::invalid_argument("checkpoint model is for " + std::to_string(mc.n_qubits) +
                                    " qubit(s) but the dataset has " + std::to_string(ds.n_qubits));
    }
    if (static_cast<int>(longest_circuit(ds)) > mc.l_pad) {
        throw std::invalid_argument("checkpoint model pads to " + std::to_string(mc.l_pad) +
                                    " gates, dataset needs " + std::to_string(longest_circuit(ds)));
    }
    if (mc.group_size != cfg.group_size) {
        throw std::invalid_argument("checkpoint group_size " + std::to_string(mc.group_size) +
                                    " differs from training group_size " + std::to_string(cfg.group_size));
    }
    auto model = load_model(checkpoint);
    TrainResult r = train(*model, ds, cfg, progress);
    return {std::move(model), std::move(r)};
}

}  // namespace qgst

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

// Pauli-transfer-matrix algebra: normalized Pauli basis, superkets and
// superbras, unitary and depolarizing channels, and circuit outcome
// probabilities.
//
// Qubit 0 is the leftmost Kronecker factor everywhere: basis element index
// i = i_0 * 4^(n-1) + ... + i_{n-1}, computational index b = b_0 * 2^(n-1) + ...

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qgst/gates.hpp"

namespace qgst {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr double kImagTolerance = 1e-12;

class PauliBasis {
   public:
    int n_qubits() const { return n_qubits_; }
    /// Hilbert-space dimension d = 2^n.
    int dim() const { return 1 << n_qubits_; }
    /// Number of elements d^2 = 4^n.
    int size() const { return static_cast<int>(elements_.size()); }
    const CMatrix& operator[](int i) const { return elements_.at(i); }
    const std::vector<CMatrix>& elements() const { return elements_; }

    /// Tr(B_i X) for every i. Real part only; callers check the residue.
    Eigen::VectorXcd coefficients(const CMatrix& x) const {
        Eigen::VectorXcd out(size());
        for (int i = 0; i < size(); ++i) {
            // B_i is Hermitian, so Tr(B_i^dagger X) = Tr(B_i X) = sum_ab (B_i)_ab X_ba.
            out[i] = elements_[i].cwiseProduct(x.transpose()).sum();
        }
        return out;
    }

   private:
    friend PauliBasis build_pauli_basis(int n_qubits);
    int n_qubits_ = 0;
    std::vector<CMatrix> elements_;
};

inline CMatrix pauli_matrix(int which) {
    const Complex i(0.0, 1.0);
    CMatrix m(2, 2);
    switch (which) {
        case 0:
            m << 1, 0, 0, 1;
            break;
        case 1:
            m << 0, 1, 1, 0;
            break;
        case 2:
            m << 0, -i, i, 0;
            break;
        case 3:
            m << 1, 0, 0, -1;
            break;
        default:
            throw std::invalid_argument("pauli index must be 0..3");
    }
    return m;
}

inline CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
        }
    }
    return out;
}

inline RMatrix kron(const RMatrix& a, const RMatrix& b) {
    RMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        for (Eigen::Index c = 0; c < a.cols(); ++c) {
            out.block(r * b.rows(), c * b.cols(), b.rows(), b.cols()) = a(r, c) * b;
        }
    }
    return out;
}

inline PauliBasis build_pauli_basis(int n_qubits) {
    if (n_qubits < 1 || n_qubits > 3) {
        throw std::invalid_argument("build_pauli_basis: n_qubits must be in [1, 3], got " + std::to_string(n_qubits));
    }
    std::vector<CMatrix> single;
    for (int k = 0; k < 4; ++k) single.push_back(pauli_matrix(k) / std::sqrt(2.0));
    std::vector<CMatrix> elements = single;
    for (int q = 1; q < n_qubits; ++q) {
        std::vector<CMatrix> next;
        next.reserve(elements.size() * 4);
        for (const auto& e : elements) {
            for (const auto& s : single) next.push_back(kron(e, s));
        }
        elements = std::move(next);
    }
    PauliBasis basis;
    basis.n_qubits_ = n_qubits;
    basis.elements_ = std::move(elements);
    return basis;
}

/// |rho>> in the normalized Pauli basis.
struct StateSuperket {
    RVector coeffs;
    int dim() const { return static_cast<int>(coeffs.size()); }
};

/// <<E| in the normalized Pauli basis.
struct EffectSuperbra {
    RVector coeffs;
    int dim() const { return static_cast<int>(coeffs.size()); }
};

struct Ptm {
    RMatrix matrix;
    int dim() const { return static_cast<int>(matrix.rows()); }
};

namespace detail {

inline RVector real_or_throw(const Eigen::VectorXcd& v, const char* what) {
    if (v.imag().cwiseAbs().maxCoeff() > kImagTolerance) {
        throw std::logic_error(std::string(what) + ": imaginary residue above tolerance");
    }
    return v.real();
}

inline void check_density(const CMatrix& rho, int dim) {
    if (rho.rows() != dim || rho.cols() != dim) {
        throw std::invalid_argument("density matrix has shape " + std::to_string(rho.rows()) + "x" +
                                    std::to_string(rho.cols()) + ", basis expects " + std::to_string(dim));
    }
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > kImagTolerance) {
        throw std::invalid_argument("density matrix is not Hermitian");
    }
    if (std::abs(rho.trace() - Complex(1.0, 0.0)) > kImagTolerance) {
        throw std::invalid_argument("density matrix does not have unit trace");
    }
}

/// Single-qubit operator `op` acting on qubit `target` of an n-qubit register.
inline CMatrix embed_single(const CMatrix& op, int target, int n_qubits) {
    CMatrix out = CMatrix::Identity(1, 1);
    for (int q = 0; q < n_qubits; ++q) {
        out = kron(out, q == target ? op : CMatrix(CMatrix::Identity(2, 2)));
    }
    return out;
}

/// Projector onto |1>_a |1>_b.
inline CMatrix projector_11(int a, int b, int n_qubits) {
    const int d = 1 << n_qubits;
    CMatrix out = CMatrix::Zero(d, d);
    for (int idx = 0; idx < d; ++idx) {
        const bool bit_a = (idx >> (n_qubits - 1 - a)) & 1;
        const bool bit_b = (idx >> (n_qubits - 1 - b)) & 1;
        if (bit_a && bit_b) out(idx, idx) = 1.0;
    }
    return out;
}

/// exp(-i * t * H) for Hermitian H.
inline CMatrix expi_hermitian(const CMatrix& h, double t) {
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(h);
    const Eigen::VectorXd& w = eig.eigenvalues();
    Eigen::VectorXcd phases(w.size());
    for (Eigen::Index k = 0; k < w.size(); ++k) phases[k] = std::exp(Complex(0.0, -t * w[k]));
    return eig.eigenvectors() * phases.asDiagonal() * eig.eigenvectors().adjoint();
}

/// Pauli string at basis index i restricted to qubit q: 0 = I, 1..3 = X, Y, Z.
inline int pauli_digit(int index, int q, int n_qubits) { return (index >> (2 * (n_qubits - 1 - q))) & 3; }

}  // namespace detail

inline StateSuperket superket_from_density(const CMatrix& rho, const PauliBasis& basis) {
    detail::check_density(rho, basis.dim());
    return {detail::real_or_throw(basis.coefficients(rho), "superket_from_density")};
}

/// Computational-basis projectors |b><b| as superbras, ordered by bitstring
/// with qubit 0 as the most significant bit.
inline std::vector<EffectSuperbra> computational_effects(int n_qubits, const PauliBasis& basis) {
    if (basis.n_qubits() != n_qubits) throw std::invalid_argument("computational_effects: basis size mismatch");
    const int d = basis.dim();
    std::vector<EffectSuperbra> out;
    for (int b = 0; b < d; ++b) {
        CMatrix proj = CMatrix::Zero(d, d);
        proj(b, b) = 1.0;
        out.push_back({detail::real_or_throw(basis.coefficients(proj), "computational_effects")});
    }
    return out;
}

inline StateSuperket computational_state(int bitstring, const PauliBasis& basis) {
    const int d = basis.dim();
    if (bitstring < 0 || bitstring >= d) throw std::invalid_argument("computational_state: bitstring out of range");
    CMatrix rho = CMatrix::Zero(d, d);
    rho(bitstring, bitstring) = 1.0;
    return superket_from_density(rho, basis);
}

/// PTM of rho -> U rho U^dagger: R_ij = Tr(B_i U B_j U^dagger).
inline Ptm unitary_ptm(const CMatrix& u, const PauliBasis& basis) {
    const int n = basis.size();
    if (u.rows() != basis.dim() || u.cols() != basis.dim()) throw std::invalid_argument("unitary_ptm: dimension mismatch");
    Eigen::MatrixXcd r(n, n);
    for (int j = 0; j < n; ++j) {
        CMatrix image = u * basis[j] * u.adjoint();
        r.col(j) = basis.coefficients(image);
    }
    if (r.imag().cwiseAbs().maxCoeff() > kImagTolerance) throw std::logic_error("unitary_ptm: complex PTM");
    RMatrix m = r.real();
    // Trace preservation holds exactly for unitary conjugation.
    m.row(0).setZero();
    m(0, 0) = 1.0;
    return {m};
}

/// d/dt of the PTM of exp(-i t H) at t = 0: G_ij = Tr(B_i (-i)[H, B_j]).
/// For every t, d/dt PTM(exp(-i t H)) = G * PTM(exp(-i t H)).
inline RMatrix generator_ptm(const CMatrix& h, const PauliBasis& basis) {
    const int n = basis.size();
    const Complex minus_i(0.0, -1.0);
    Eigen::MatrixXcd g(n, n);
    for (int j = 0; j < n; ++j) {
        CMatrix comm = minus_i * (h * basis[j] - basis[j] * h);
        g.col(j) = basis.coefficients(comm);
    }
    if (g.imag().cwiseAbs().maxCoeff() > kImagTolerance) throw std::logic_error("generator_ptm: complex generator");
    return g.real();
}

enum class Axis { X, Y };

inline Ptm rotation_ptm(Axis axis, double angle) {
    if (!std::isfinite(angle)) throw std::invalid_argument("rotation_ptm: angle must be finite");
    const PauliBasis basis = build_pauli_basis(1);
    const CMatrix h = pauli_matrix(axis == Axis::X ? 1 : 2) / 2.0;
    return unitary_ptm(detail::expi_hermitian(h, angle), basis);
}

/// PTM of diag(1, 1, 1, e^{i phase}) on two qubits.
inline Ptm cphase_ptm(double phase) {
    if (!std::isfinite(phase)) throw std::invalid_argument("cphase_ptm: phase must be finite");
    const PauliBasis basis = build_pauli_basis(2);
    CMatrix u = CMatrix::Identity(4, 4);
    u(3, 3) = std::exp(Complex(0.0, phase));
    return unitary_ptm(u, basis);
}

/// Uniform depolarization: diag(1, 1-p, ..., 1-p).
inline Ptm depolarizing_ptm(double p, int n_qubits) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("depolarizing_ptm: p must lie in [0, 1]");
    if (n_qubits < 1 || n_qubits > 3) throw std::invalid_argument("depolarizing_ptm: n_qubits must be in [1, 3]");
    const int n = 1 << (2 * n_qubits);
    RMatrix m = RMatrix::Identity(n, n) * (1.0 - p);
    m(0, 0) = 1.0;
    return {m};
}

inline Ptm identity_ptm(int n_qubits) {
    const int n = 1 << (2 * n_qubits);
    return {RMatrix::Identity(n, n)};
}

/// a after b: the matrix product a * b.
inline Ptm compose(const Ptm& a, const Ptm& b) {
    if (a.dim() != b.dim()) {
        throw std::invalid_argument("compose: dimension mismatch " + std::to_string(a.dim()) + " vs " +
                                    std::to_string(b.dim()));
    }
    return {a.matrix * b.matrix};
}

/// Channel a on the leading qubits, b on the trailing ones.
inline Ptm tensor(const Ptm& a, const Ptm& b) {
    auto is_pow4 = [](int n) { return n >= 4 && (n & (n - 1)) == 0 && (__builtin_ctz(static_cast<unsigned>(n)) % 2 == 0); };
    if (!is_pow4(a.dim()) || !is_pow4(b.dim())) throw std::invalid_argument("tensor: operands are not PTMs");
    return {kron(a.matrix, b.matrix)};
}

/// Choi matrix sum_ij R_ij B_i (x) B_j^T; positive semidefinite iff the channel is CP.
inline CMatrix choi_matrix(const Ptm& ptm, const PauliBasis& basis) {
    if (ptm.dim() != basis.size()) throw std::invalid_argument("choi_matrix: dimension mismatch");
    const int d = basis.dim();
    CMatrix choi = CMatrix::Zero(d * d, d * d);
    for (int j = 0; j < basis.size(); ++j) {
        CMatrix image = CMatrix::Zero(d, d);
        for (int i = 0; i < basis.size(); ++i) {
            if (ptm.matrix(i, j) != 0.0) image += ptm.matrix(i, j) * basis[i];
        }
        choi += kron(image, CMatrix(basis[j].transpose()));
    }
    return choi;
}

inline double choi_min_eigenvalue(const Ptm& ptm, const PauliBasis& basis) {
    Eigen::SelfAdjointEigenSolver<CMatrix> eig(choi_matrix(ptm, basis), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

/// Noisy gate channel together with its derivatives in the two error
/// parameters. Gi is ideal and has zero derivatives.
struct NoisyGate {
    RMatrix value;
    RMatrix d_over_rotation;
    RMatrix d_depolarization;
};

inline double ideal_angle(GateKind kind) {
    switch (kind) {
        case GateKind::Gx:
        case GateKind::Gy:
            return std::numbers::pi / 2.0;
        case GateKind::Gcphase:
            return std::numbers::pi;
        case GateKind::Gi:
            return 0.0;
    }
    return 0.0;
}

namespace detail {

inline void check_label(const GateLabel& label, int n_qubits) {
    if (static_cast<int>(label.targets.size()) != kind_arity(label.kind)) {
        throw std::invalid_argument("gate label " + label.str() + " has the wrong number of targets");
    }
    if (kind_arity(label.kind) > n_qubits) {
        throw std::invalid_argument("gate " + label.str() + " needs more qubits than the " + std::to_string(n_qubits) +
                                    "-qubit model has");
    }
    for (int q : label.targets) {
        if (q >= n_qubits) throw std::invalid_argument("gate " + label.str() + " targets a qubit outside the register");
    }
}

/// Generator H with U(theta) = exp(-i theta H) for the gate family.
inline CMatrix gate_hamiltonian(const GateLabel& label, int n_qubits) {
    switch (label.kind) {
        case GateKind::Gx:
            return embed_single(pauli_matrix(1) / 2.0, label.targets[0], n_qubits);
        case GateKind::Gy:
            return embed_single(pauli_matrix(2) / 2.0, label.targets[0], n_qubits);
        case GateKind::Gcphase:
            return -projector_11(label.targets[0], label.targets[1], n_qubits);
        case GateKind::Gi:
            break;
    }
    const int d = 1 << n_qubits;
    return CMatrix::Zero(d, d);
}

/// Diagonal of the depolarizing PTM restricted to `targets`, and its p-derivative.
inline void local_depolarizing_diag(const std::vector<int>& targets, int n_qubits, double p, RVector& value,
                                    RVector& derivative) {
    const int n = 1 << (2 * n_qubits);
    value.resize(n);
    derivative.resize(n);
    for (int i = 0; i < n; ++i) {
        bool touches = false;
        for (int q : targets) touches = touches || pauli_digit(i, q, n_qubits) != 0;
        value[i] = touches ? 1.0 - p : 1.0;
        derivative[i] = touches ? -1.0 : 0.0;
    }
}

}  // namespace detail

/// D(p) * R(ideal + eps). Depolarization acts on the gate's own targets
/// (globally over both qubits for CPHASE).
inline NoisyGate noisy_gate_with_derivatives(const GateLabel& label, const GateError& error, int n_qubits,
                                             const PauliBasis& basis) {
    detail::check_label(label, n_qubits);
    if (basis.n_qubits() != n_qubits) throw std::invalid_argument("noisy_gate: basis size mismatch");
    const int n = basis.size();
    if (label.kind == GateKind::Gi) {
        return {RMatrix::Identity(n, n), RMatrix::Zero(n, n), RMatrix::Zero(n, n)};
    }
    if (!std::isfinite(error.over_rotation) || !(error.depolarization >= 0.0 && error.depolarization <= 1.0)) {
        throw std::invalid_argument("noisy_gate: invalid error parameters for " + label.str());
    }
    const CMatrix h = detail::gate_hamiltonian(label, n_qubits);
    const double angle = ideal_angle(label.kind) + error.over_rotation;
    const RMatrix rotation = unitary_ptm(detail::expi_hermitian(h, angle), basis).matrix;
    const RMatrix generator = generator_ptm(h, basis);
    RVector depol, d_depol;
    detail::local_depolarizing_diag(label.targets, n_qubits, error.depolarization, depol, d_depol);
    NoisyGate out;
    out.value = depol.asDiagonal() * rotation;
    out.d_over_rotation = depol.asDiagonal() * (generator * rotation);
    out.d_depolarization = d_depol.asDiagonal() * rotation;
    out.value.row(0).setZero();
    out.value(0, 0) = 1.0;
    out.d_over_rotation.row(0).setZero();
    return out;
}

inline Ptm noisy_gate_ptm(const GateLabel& label, const ErrorParams& params, int n_qubits) {
    const PauliBasis basis = build_pauli_basis(n_qubits);
    const GateError error = label.kind == GateKind::Gi ? GateError{} : params.at(label.kind);
    return {noisy_gate_with_derivatives(label, error, n_qubits, basis).value};
}

/// Every gate label available in the n-qubit model, sorted.
inline std::vector<GateLabel> model_labels(int n_qubits) {
    std::vector<GateLabel> out;
    for (int q = 0; q < n_qubits; ++q) {
        out.push_back(Gi(q));
        out.push_back(Gx(q));
        out.push_back(Gy(q));
    }
    for (int a = 0; a < n_qubits; ++a) {
        for (int b = a + 1; b < n_qubits; ++b) out.push_back(Gcphase(a, b));
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct GateSet {
    int n_qubits = 1;
    std::map<GateLabel, Ptm> gates;
    StateSuperket prep;
    std::vector<EffectSuperbra> effects;

    void validate() const {
        const int n = 1 << (2 * n_qubits);
        for (const auto& [label, ptm] : gates) {
            if (ptm.dim() != n) throw std::invalid_argument("gate set: PTM for " + label.str() + " has wrong dimension");
        }
        if (prep.dim() != n) throw std::invalid_argument("gate set: prep has wrong dimension");
        if (static_cast<int>(effects.size()) != (1 << n_qubits)) throw std::invalid_argument("gate set: wrong effect count");
        for (const auto& e : effects) {
            if (e.dim() != n) throw std::invalid_argument("gate set: effect has wrong dimension");
        }
    }
};

/// |0...0> preparation, computational measurement, and every model gate
/// built from `params` (Gi ideal).
inline GateSet make_gate_set(int n_qubits, const ErrorParams& params) {
    const PauliBasis basis = build_pauli_basis(n_qubits);
    GateSet gs;
    gs.n_qubits = n_qubits;
    gs.prep = computational_state(0, basis);
    gs.effects = computational_effects(n_qubits, basis);
    for (const GateLabel& label : model_labels(n_qubits)) {
        const GateError error = label.kind == GateKind::Gi ? GateError{} : params.at(label.kind);
        gs.gates[label] = {noisy_gate_with_derivatives(label, error, n_qubits, basis).value};
    }
    return gs;
}

inline GateSet ideal_gate_set(int n_qubits) { return make_gate_set(n_qubits, ErrorParams::zeros(n_qubits)); }

inline constexpr double kProbabilitySumTolerance = 1e-9;
inline constexpr double kProbabilityRangeTolerance = 1e-10;

/// Raw outcome probabilities <<E_b| G_k ... G_1 |rho>> with the first gate
/// of the circuit applied first. Not clipped.
inline std::vector<double> raw_circuit_probabilities(const Circuit& circuit, const GateSet& gs) {
    RVector state = gs.prep.coeffs;
    for (const GateLabel& label : circuit) {
        auto it = gs.gates.find(label);
        if (it == gs.gates.end()) throw std::invalid_argument("unknown gate label " + label.str());
        state = it->second.matrix * state;
    }
    std::vector<double> probs(gs.effects.size());
    for (std::size_t b = 0; b < probs.size(); ++b) probs[b] = gs.effects[b].coeffs.dot(state);
    return probs;
}

inline void check_and_clip_probabilities(std::vector<double>& probs) {
    double total = 0.0;
    for (double p : probs) {
        if (!(p >= -kProbabilityRangeTolerance && p <= 1.0 + kProbabilityRangeTolerance)) {
            throw std::logic_error("circuit probability " + std::to_string(p) + " outside [0, 1]");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > kProbabilitySumTolerance) {
        throw std::logic_error("circuit probabilities sum to " + std::to_string(total));
    }
    for (double& p : probs) p = std::clamp(p, 0.0, 1.0);
}

inline std::vector<double> circuit_probabilities(const Circuit& circuit, const GateSet& gs) {
    std::vector<double> probs = raw_circuit_probabilities(circuit, gs);
    check_and_clip_probabilities(probs);
    return probs;
}

/// Row-major CSV with 17 significant digits.
inline void write_csv(std::ostream& os, const RMatrix& m) {
    char buf[40];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
            if (c) os << ',';
            os << buf;
        }
        os << '\n';
    }
}

inline void write_csv(std::ostream& os, const Ptm& ptm) { write_csv(os, ptm.matrix); }

}  // namespace qgst

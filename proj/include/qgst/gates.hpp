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

#include <cmath>
#include <compare>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qgst {

enum class GateKind { Gi, Gx, Gy, Gcphase };

inline std::string_view kind_name(GateKind kind) {
    switch (kind) {
        case GateKind::Gi:
            return "Gi";
        case GateKind::Gx:
            return "Gx";
        case GateKind::Gy:
            return "Gy";
        case GateKind::Gcphase:
            return "Gcphase";
    }
    return "?";
}

/// Short name used in reports ("X", "Y", "CPHASE").
inline std::string_view kind_short_name(GateKind kind) {
    switch (kind) {
        case GateKind::Gi:
            return "I";
        case GateKind::Gx:
            return "X";
        case GateKind::Gy:
            return "Y";
        case GateKind::Gcphase:
            return "CPHASE";
    }
    return "?";
}

inline GateKind parse_kind(std::string_view text) {
    if (text == "Gi") return GateKind::Gi;
    if (text == "Gx") return GateKind::Gx;
    if (text == "Gy") return GateKind::Gy;
    if (text == "Gcphase") return GateKind::Gcphase;
    throw std::invalid_argument("unknown gate kind '" + std::string(text) + "'");
}

inline int kind_arity(GateKind kind) { return kind == GateKind::Gcphase ? 2 : 1; }

/// A gate together with the qubits it acts on, e.g. "Gx@0" or "Gcphase@0@1".
struct GateLabel {
    GateKind kind = GateKind::Gi;
    std::vector<int> targets;

    GateLabel() = default;
    GateLabel(GateKind k, std::vector<int> t) : kind(k), targets(std::move(t)) {
        if (static_cast<int>(targets.size()) != kind_arity(kind)) {
            throw std::invalid_argument(std::string(kind_name(kind)) + " takes " +
                                        std::to_string(kind_arity(kind)) + " target(s), got " +
                                        std::to_string(targets.size()));
        }
        for (int q : targets) {
            if (q < 0) throw std::invalid_argument("negative qubit index in gate label");
        }
        if (targets.size() == 2 && targets[0] == targets[1]) {
            throw std::invalid_argument("two-qubit gate needs distinct targets");
        }
    }

    auto operator<=>(const GateLabel&) const = default;
    bool operator==(const GateLabel&) const = default;

    std::string str() const {
        std::string out(kind_name(kind));
        for (int q : targets) out += "@" + std::to_string(q);
        return out;
    }

    static GateLabel parse(std::string_view text) {
        auto at = text.find('@');
        if (at == std::string_view::npos) {
            throw std::invalid_argument("gate label '" + std::string(text) + "' lacks an @qubit suffix");
        }
        GateKind kind = parse_kind(text.substr(0, at));
        std::vector<int> targets;
        while (at != std::string_view::npos) {
            auto next = text.find('@', at + 1);
            auto digits = text.substr(at + 1, next == std::string_view::npos ? std::string_view::npos : next - at - 1);
            if (digits.empty() || digits.find_first_not_of("0123456789") != std::string_view::npos) {
                throw std::invalid_argument("bad qubit index in gate label '" + std::string(text) + "'");
            }
            targets.push_back(std::stoi(std::string(digits)));
            at = next;
        }
        return GateLabel(kind, std::move(targets));
    }
};

inline GateLabel Gi(int q = 0) { return {GateKind::Gi, {q}}; }
inline GateLabel Gx(int q = 0) { return {GateKind::Gx, {q}}; }
inline GateLabel Gy(int q = 0) { return {GateKind::Gy, {q}}; }
inline GateLabel Gcphase(int a = 0, int b = 1) { return {GateKind::Gcphase, {a, b}}; }

using Circuit = std::vector<GateLabel>;

/// Labels joined by ':'; the empty circuit is written "{}".
inline std::string circuit_str(const Circuit& circuit) {
    if (circuit.empty()) return "{}";
    std::string out;
    for (std::size_t i = 0; i < circuit.size(); ++i) {
        if (i) out += ':';
        out += circuit[i].str();
    }
    return out;
}

inline Circuit parse_circuit(std::string_view text) {
    Circuit circuit;
    if (text == "{}") return circuit;
    if (text.empty()) throw std::invalid_argument("empty circuit string (use {} for the empty circuit)");
    std::size_t start = 0;
    while (true) {
        auto colon = text.find(':', start);
        circuit.push_back(GateLabel::parse(text.substr(start, colon == std::string_view::npos ? colon : colon - start)));
        if (colon == std::string_view::npos) break;
        start = colon + 1;
    }
    return circuit;
}

inline Circuit concat(const Circuit& a, const Circuit& b) {
    Circuit out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

inline Circuit repeat(const Circuit& c, int times) {
    Circuit out;
    for (int i = 0; i < times; ++i) out.insert(out.end(), c.begin(), c.end());
    return out;
}

/// The gate kinds carrying error parameters for an n-qubit model: X and Y,
/// plus CPHASE from two qubits on. Gi is always ideal.
inline std::vector<GateKind> parametrized_kinds(int n_qubits) {
    if (n_qubits >= 2) return {GateKind::Gx, GateKind::Gy, GateKind::Gcphase};
    return {GateKind::Gx, GateKind::Gy};
}

struct GateError {
    double over_rotation = 0.0;   // radians
    double depolarization = 0.0;  // probability

    bool operator==(const GateError&) const = default;
};

/// Per-gate-kind over-rotation and depolarization strengths.
class ErrorParams {
   public:
    ErrorParams() = default;
    explicit ErrorParams(std::map<GateKind, GateError> values) : values_(std::move(values)) { validate(); }

    void set(GateKind kind, GateError e) {
        check(kind, e);
        values_[kind] = e;
    }
    bool has(GateKind kind) const { return values_.count(kind) != 0; }
    const GateError& at(GateKind kind) const {
        auto it = values_.find(kind);
        if (it == values_.end()) {
            throw std::invalid_argument("no error parameters for " + std::string(kind_name(kind)));
        }
        return it->second;
    }
    const std::map<GateKind, GateError>& values() const { return values_; }
    std::vector<GateKind> kinds() const {
        std::vector<GateKind> out;
        for (const auto& [k, _] : values_) out.push_back(k);
        return out;
    }

    /// Layout [eps_1..eps_K, p_1..p_K] in the order of `kinds`.
    std::vector<double> flatten(const std::vector<GateKind>& kinds) const {
        std::vector<double> out(2 * kinds.size());
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            out[i] = at(kinds[i]).over_rotation;
            out[kinds.size() + i] = at(kinds[i]).depolarization;
        }
        return out;
    }
    static ErrorParams unflatten(const std::vector<GateKind>& kinds, const std::vector<double>& flat) {
        if (flat.size() != 2 * kinds.size()) throw std::invalid_argument("flat parameter vector has wrong length");
        ErrorParams out;
        for (std::size_t i = 0; i < kinds.size(); ++i) out.set(kinds[i], {flat[i], flat[kinds.size() + i]});
        return out;
    }

    static ErrorParams zeros(int n_qubits) {
        ErrorParams out;
        for (GateKind k : parametrized_kinds(n_qubits)) out.set(k, {});
        return out;
    }

    bool operator==(const ErrorParams&) const = default;

   private:
    static void check(GateKind kind, const GateError& e) {
        if (kind == GateKind::Gi) throw std::invalid_argument("Gi carries no error parameters");
        if (!std::isfinite(e.over_rotation) || e.over_rotation < -1.0 || e.over_rotation > 1.0) {
            throw std::invalid_argument("over-rotation for " + std::string(kind_name(kind)) +
                                        " must be finite and within [-1, 1]");
        }
        if (!std::isfinite(e.depolarization) || e.depolarization < 0.0 || e.depolarization > 1.0) {
            throw std::invalid_argument("depolarization for " + std::string(kind_name(kind)) +
                                        " must lie in [0, 1]");
        }
    }
    void validate() const {
        for (const auto& [k, e] : values_) check(k, e);
    }

    std::map<GateKind, GateError> values_;
};

}  // namespace qgst

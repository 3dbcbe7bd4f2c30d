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

// Experiment designs (prep fiducial, germ power, measurement fiducial),
// sampled count data, tokenization and the line-delimited dataset format.

#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qgst/gates.hpp"
#include "qgst/ptm.hpp"

namespace qgst {

struct ExperimentDesign {
    int n_qubits = 1;
    std::vector<Circuit> prep_fiducials;
    std::vector<Circuit> meas_fiducials;
    std::vector<Circuit> germs;
    /// (prep index, meas index) pairs used for every germ; all pairs when empty.
    std::vector<std::pair<int, int>> fiducial_pairs;
    std::vector<int> max_lengths;
    std::vector<Circuit> circuits;
};

namespace detail {

inline std::vector<Circuit> single_qubit_fiducials(int q, bool short_only) {
    std::vector<Circuit> out = {{}, {Gx(q)}, {Gy(q)}, {Gx(q), Gx(q)}};
    if (!short_only) {
        out.push_back({Gx(q), Gx(q), Gx(q)});
        out.push_back({Gy(q), Gy(q), Gy(q)});
    }
    return out;
}

}  // namespace detail

/// {}, Gx, Gy, GxGx, GxGxGx, GyGyGy for one qubit. For two qubits, every
/// product of the one-qubit fiducials with at most two gates per qubit,
/// qubit 0's gates first.
inline std::vector<Circuit> default_fiducials(int n_qubits) {
    if (n_qubits == 1) return detail::single_qubit_fiducials(0, false);
    if (n_qubits == 2) {
        std::vector<Circuit> out;
        for (const Circuit& a : detail::single_qubit_fiducials(0, true)) {
            for (const Circuit& b : detail::single_qubit_fiducials(1, true)) out.push_back(concat(a, b));
        }
        return out;
    }
    throw std::invalid_argument("default fiducials exist for 1 or 2 qubits only");
}

/// Gi, Gx, Gy, GxGy, GxGxGy for one qubit. For two qubits, the non-idle
/// one-qubit germs on each qubit plus Gcphase, Gx@0 Gcphase and Gy@1 Gcphase.
inline std::vector<Circuit> default_germs(int n_qubits) {
    if (n_qubits == 1) {
        return {{Gi()}, {Gx()}, {Gy()}, {Gx(), Gy()}, {Gx(), Gx(), Gy()}};
    }
    if (n_qubits == 2) {
        return {{Gx(0)},           {Gy(0)},           {Gx(1)},
                {Gy(1)},           {Gx(0), Gy(0)},    {Gx(1), Gy(1)},
                {Gcphase(0, 1)},   {Gx(0), Gcphase(0, 1)}, {Gy(1), Gcphase(0, 1)}};
    }
    throw std::invalid_argument("default germs exist for 1 or 2 qubits only");
}

/// Two-qubit fiducial-pair reduction: prep fiducial i is paired with
/// measurement fiducial (5 i + 3) mod 16, a permutation, so every fiducial
/// is used once on each side.
inline std::vector<std::pair<int, int>> default_fiducial_pairs(int n_qubits) {
    std::vector<std::pair<int, int>> out;
    if (n_qubits == 2) {
        for (int i = 0; i < 16; ++i) out.emplace_back(i, (5 * i + 3) % 16);
    }
    return out;
}

inline std::vector<int> length_ladder(int max_length) {
    if (max_length < 1 || (max_length & (max_length - 1)) != 0) {
        throw std::invalid_argument("max_length must be a positive power of 2, got " + std::to_string(max_length));
    }
    std::vector<int> out;
    for (int l = 1; l <= max_length; l *= 2) out.push_back(l);
    return out;
}

/// F_prep . germ^k . F_meas with k = floor(L / |germ|) for every L on the
/// ladder, deduplicated in first-seen order.
inline ExperimentDesign build_design(int n_qubits, int max_length, std::vector<Circuit> germs,
                                     std::vector<Circuit> prep, std::vector<Circuit> meas,
                                     std::vector<std::pair<int, int>> pairs = {}) {
    if (n_qubits < 1 || n_qubits > 3) throw std::invalid_argument("design: n_qubits must be in [1, 3]");
    if (germs.empty()) throw std::invalid_argument("design: germ set is empty");
    if (prep.empty() || meas.empty()) throw std::invalid_argument("design: fiducial set is empty");
    for (const auto& g : germs) {
        if (g.empty()) throw std::invalid_argument("design: germs must be non-empty circuits");
    }
    for (const auto& [i, j] : pairs) {
        if (i < 0 || j < 0 || i >= static_cast<int>(prep.size()) || j >= static_cast<int>(meas.size())) {
            throw std::invalid_argument("design: fiducial pair index out of range");
        }
    }
    const std::vector<GateLabel> labels = model_labels(n_qubits);
    auto check_circuit = [&](const Circuit& c) {
        for (const auto& g : c) {
            if (!std::binary_search(labels.begin(), labels.end(), g)) {
                throw std::invalid_argument("design: gate " + g.str() + " is not part of the " +
                                            std::to_string(n_qubits) + "-qubit model");
            }
        }
    };
    for (const auto& c : germs) check_circuit(c);
    for (const auto& c : prep) check_circuit(c);
    for (const auto& c : meas) check_circuit(c);

    ExperimentDesign design;
    design.n_qubits = n_qubits;
    design.max_lengths = length_ladder(max_length);
    if (pairs.empty()) {
        for (int i = 0; i < static_cast<int>(prep.size()); ++i) {
            for (int j = 0; j < static_cast<int>(meas.size()); ++j) pairs.emplace_back(i, j);
        }
    }
    std::set<Circuit> seen;
    for (int l : design.max_lengths) {
        for (const Circuit& germ : germs) {
            const Circuit body = repeat(germ, l / static_cast<int>(germ.size()));
            for (const auto& [i, j] : pairs) {
                Circuit c = concat(concat(prep[i], body), meas[j]);
                if (seen.insert(c).second) design.circuits.push_back(std::move(c));
            }
        }
    }
    design.prep_fiducials = std::move(prep);
    design.meas_fiducials = std::move(meas);
    design.germs = std::move(germs);
    design.fiducial_pairs = std::move(pairs);
    return design;
}

/// Same fiducial set on both sides, every pair.
inline ExperimentDesign standard_design(int n_qubits, int max_length, std::vector<Circuit> germs,
                                        std::vector<Circuit> fiducials) {
    std::vector<Circuit> meas = fiducials;
    return build_design(n_qubits, max_length, std::move(germs), std::move(fiducials), std::move(meas));
}

/// The default design: one qubit uses all fiducial pairs, two qubits the
/// reduced pair list.
inline ExperimentDesign standard_design(int n_qubits, int max_length) {
    return build_design(n_qubits, max_length, default_germs(n_qubits), default_fiducials(n_qubits),
                        default_fiducials(n_qubits), default_fiducial_pairs(n_qubits));
}

inline void write_design(std::ostream& os, const ExperimentDesign& design) {
    for (const Circuit& c : design.circuits) os << circuit_str(c) << '\n';
}

struct Dataset {
    int n_qubits = 1;
    std::vector<Circuit> circuits;
    std::vector<std::int64_t> shots;
    std::vector<std::vector<std::int64_t>> counts;
    std::vector<std::vector<double>> frequencies;
    std::optional<std::uint64_t> seed;
    std::optional<ErrorParams> ground_truth;

    std::size_t size() const { return circuits.size(); }
    int n_outcomes() const { return 1 << n_qubits; }

    /// Validates counts against shots and fills `frequencies`.
    void finalize() {
        if (shots.size() != circuits.size() || counts.size() != circuits.size()) {
            throw std::invalid_argument("dataset: circuits, shots and counts differ in length");
        }
        frequencies.assign(circuits.size(), {});
        for (std::size_t s = 0; s < circuits.size(); ++s) {
            if (static_cast<int>(counts[s].size()) != n_outcomes()) {
                throw std::invalid_argument("dataset: circuit " + std::to_string(s) + " has " +
                                            std::to_string(counts[s].size()) + " outcome counts, expected " +
                                            std::to_string(n_outcomes()));
            }
            if (shots[s] < 1) throw std::invalid_argument("dataset: circuit " + std::to_string(s) + " has no shots");
            std::int64_t total = 0;
            for (auto c : counts[s]) {
                if (c < 0) throw std::invalid_argument("dataset: negative count at circuit " + std::to_string(s));
                total += c;
            }
            if (total != shots[s]) {
                throw std::invalid_argument("dataset: counts of circuit " + std::to_string(s) + " sum to " +
                                            std::to_string(total) + " but shots is " + std::to_string(shots[s]));
            }
            frequencies[s].resize(counts[s].size());
            for (std::size_t b = 0; b < counts[s].size(); ++b) {
                frequencies[s][b] = static_cast<double>(counts[s][b]) / static_cast<double>(shots[s]);
            }
        }
    }
};

namespace detail {

/// Independent stream per (seed, circuit index).
inline std::mt19937_64 circuit_rng(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), 0x9e3779b9u};
    return std::mt19937_64(seq);
}

/// Multinomial draw as a chain of conditional binomials; plain binomial for
/// two outcomes.
inline std::vector<std::int64_t> sample_counts(const std::vector<double>& probs, std::int64_t shots,
                                               std::mt19937_64& rng) {
    std::vector<std::int64_t> out(probs.size(), 0);
    std::int64_t remaining = shots;
    double mass = 1.0;
    for (std::size_t b = 0; b + 1 < probs.size(); ++b) {
        if (remaining == 0) break;
        const double q = mass > 0.0 ? std::clamp(probs[b] / mass, 0.0, 1.0) : 0.0;
        std::binomial_distribution<std::int64_t> draw(remaining, q);
        out[b] = draw(rng);
        remaining -= out[b];
        mass -= probs[b];
    }
    out.back() = remaining;
    return out;
}

}  // namespace detail

inline Dataset simulate_counts(const ExperimentDesign& design, const ErrorParams& truth, std::int64_t shots,
                               std::uint64_t seed) {
    if (shots < 1) throw std::invalid_argument("simulate_counts: shots must be >= 1");
    const GateSet gs = make_gate_set(design.n_qubits, truth);
    Dataset ds;
    ds.n_qubits = design.n_qubits;
    ds.seed = seed;
    ds.ground_truth = truth;
    ds.circuits = design.circuits;
    ds.shots.assign(design.circuits.size(), shots);
    ds.counts.resize(design.circuits.size());
    for (std::size_t s = 0; s < design.circuits.size(); ++s) {
        const std::vector<double> probs = circuit_probabilities(design.circuits[s], gs);
        auto rng = detail::circuit_rng(seed, s);
        ds.counts[s] = detail::sample_counts(probs, shots, rng);
    }
    ds.finalize();
    return ds;
}

/// Token 0 is padding. One qubit: one token per gate kind. Several qubits:
/// a grid with one row per qubit and an idle token for rows a gate skips.
struct Vocabulary {
    std::vector<std::string> symbols;

    int size() const { return static_cast<int>(symbols.size()); }
    int token(std::string_view symbol) const {
        for (int i = 0; i < size(); ++i) {
            if (symbols[i] == symbol) return i;
        }
        throw std::invalid_argument("symbol '" + std::string(symbol) + "' is not in the vocabulary");
    }

    static Vocabulary for_qubits(int n_qubits) {
        if (n_qubits == 1) return {{"<pad>", "Gi", "Gx", "Gy"}};
        return {{"<pad>", "<idle>", "Gcphase", "Gi", "Gx", "Gy"}};
    }
};

struct TokenizedCircuit {
    int rows = 1;
    int l_pad = 0;
    int nonzero_len = 0;
    /// rows x l_pad, row-major. Padding is a suffix of every row.
    std::vector<int> tokens;

    int at(int row, int step) const { return tokens[static_cast<std::size_t>(row) * l_pad + step]; }
};

struct TokenizedDataset {
    Vocabulary vocab;
    int rows = 1;
    int l_pad = 0;
    std::vector<TokenizedCircuit> circuits;
};

inline std::size_t longest_circuit(const Dataset& ds) {
    std::size_t out = 0;
    for (const auto& c : ds.circuits) out = std::max(out, c.size());
    return out;
}

inline TokenizedCircuit tokenize_circuit(const Circuit& circuit, int n_qubits, int l_pad, const Vocabulary& vocab) {
    if (static_cast<int>(circuit.size()) > l_pad) throw std::invalid_argument("tokenize: circuit longer than l_pad");
    TokenizedCircuit out;
    out.rows = n_qubits;
    out.l_pad = l_pad;
    out.nonzero_len = static_cast<int>(circuit.size());
    out.tokens.assign(static_cast<std::size_t>(n_qubits) * l_pad, 0);
    const int idle = n_qubits > 1 ? vocab.token("<idle>") : 0;
    for (int t = 0; t < out.nonzero_len; ++t) {
        const GateLabel& g = circuit[t];
        const int tok = vocab.token(kind_name(g.kind));
        for (int q = 0; q < n_qubits; ++q) {
            const bool acts = std::find(g.targets.begin(), g.targets.end(), q) != g.targets.end();
            out.tokens[static_cast<std::size_t>(q) * l_pad + t] = acts ? tok : idle;
        }
    }
    return out;
}

/// Pads every circuit to the longest one, or to `l_pad` when given.
inline TokenizedDataset tokenize(const Dataset& ds, std::optional<int> l_pad = std::nullopt) {
    TokenizedDataset out;
    out.vocab = Vocabulary::for_qubits(ds.n_qubits);
    out.rows = ds.n_qubits;
    const int longest = static_cast<int>(longest_circuit(ds));
    out.l_pad = l_pad.value_or(longest);
    if (out.l_pad < longest) {
        throw std::invalid_argument("tokenize: requested padding " + std::to_string(out.l_pad) +
                                    " is shorter than the longest circuit (" + std::to_string(longest) + ")");
    }
    out.circuits.reserve(ds.size());
    for (const auto& c : ds.circuits) out.circuits.push_back(tokenize_circuit(c, ds.n_qubits, out.l_pad, out.vocab));
    return out;
}

// ---------------------------------------------------------------------------
// Dataset files: one JSON object per line. The first line is a header, every
// following line one circuit.

inline constexpr const char* kDatasetFormat = "qgst-dataset";
inline constexpr int kDatasetVersion = 1;

inline nlohmann::json error_params_to_json(const ErrorParams& p) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [kind, e] : p.values()) {
        j[std::string(kind_name(kind))] = {{"over_rotation", e.over_rotation}, {"depolarization", e.depolarization}};
    }
    return j;
}

inline ErrorParams error_params_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("error parameters must be a JSON object");
    ErrorParams out;
    for (const auto& [name, e] : j.items()) {
        out.set(parse_kind(name), {e.at("over_rotation").get<double>(), e.at("depolarization").get<double>()});
    }
    return out;
}

inline void save_dataset(const Dataset& ds, std::ostream& os) {
    nlohmann::json header = {{"format", kDatasetFormat}, {"version", kDatasetVersion}, {"n_qubits", ds.n_qubits}};
    header["seed"] = ds.seed ? nlohmann::json(*ds.seed) : nlohmann::json(nullptr);
    header["ground_truth"] = ds.ground_truth ? error_params_to_json(*ds.ground_truth) : nlohmann::json(nullptr);
    os << header.dump() << '\n';
    for (std::size_t s = 0; s < ds.size(); ++s) {
        nlohmann::json rec = {{"circuit", circuit_str(ds.circuits[s])}, {"shots", ds.shots[s]}, {"counts", ds.counts[s]}};
        os << rec.dump() << '\n';
    }
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write dataset file " + path);
    save_dataset(ds, os);
}

inline Dataset load_dataset(std::istream& is, const std::string& source = "<stream>") {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) -> std::invalid_argument {
        return std::invalid_argument(source + ":" + std::to_string(line_no) + ": " + msg);
    };
    if (!std::getline(is, line)) throw std::invalid_argument(source + ": empty dataset file");
    ++line_no;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw fail(std::string("malformed header: ") + e.what());
    }
    if (!header.is_object() || header.value("format", "") != kDatasetFormat) throw fail("not a qgst dataset file");
    if (!header.contains("version") || !header["version"].is_number_integer()) throw fail("header lacks a version");
    const int version = header["version"].get<int>();
    if (version != kDatasetVersion) {
        throw fail("unsupported dataset version " + std::to_string(version) + " (this build reads version " +
                   std::to_string(kDatasetVersion) + ")");
    }
    Dataset ds;
    try {
        ds.n_qubits = header.at("n_qubits").get<int>();
        if (ds.n_qubits < 1 || ds.n_qubits > 3) throw fail("n_qubits out of range");
        if (header.contains("seed") && !header["seed"].is_null()) ds.seed = header["seed"].get<std::uint64_t>();
        if (header.contains("ground_truth") && !header["ground_truth"].is_null()) {
            ds.ground_truth = error_params_from_json(header["ground_truth"]);
        }
    } catch (const nlohmann::json::exception& e) {
        throw fail(std::string("bad header field: ") + e.what());
    }
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto rec = nlohmann::json::parse(line);
            ds.circuits.push_back(parse_circuit(rec.at("circuit").get<std::string>()));
            ds.shots.push_back(rec.at("shots").get<std::int64_t>());
            ds.counts.push_back(rec.at("counts").get<std::vector<std::int64_t>>());
        } catch (const nlohmann::json::exception& e) {
            throw fail(std::string("malformed record: ") + e.what());
        } catch (const std::invalid_argument& e) {
            throw fail(e.what());
        }
        const auto& counts = ds.counts.back();
        std::int64_t total = 0;
        for (auto c : counts) total += c;
        if (total != ds.shots.back()) {
            throw fail("counts sum to " + std::to_string(total) + " but shots is " + std::to_string(ds.shots.back()));
        }
    }
    ds.finalize();
    return ds;
}

inline Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open dataset file " + path);
    return load_dataset(is, path);
}

}  // namespace qgst

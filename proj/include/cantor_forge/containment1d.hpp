#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cantor_forge/cantor1d.hpp"

namespace cantor {

struct DominanceLevel {
    int n;
    Rat min_gap_K, max_gap_Kt;
    bool pass;
};

struct DominanceReport {
    bool hull_contained = false;
    std::vector<DominanceLevel> levels;
    bool overall = false;
};

/// Nested containments I_{sigma_n}(K) in I_{sigma'_n}(Kt), n = 0..N.
struct WitnessChain {
    std::vector<std::pair<NodeAddress, NodeAddress>> pairs; ///< n = 1..N
    std::vector<Interval1> k_intervals, kt_intervals;       ///< n = 0..N
    Rat witness_K, witness_Kt, bound;
};

struct PerturbationSpec {
    Rat lambda_lo = 1, lambda_hi = 1, t_lo = 0, t_hi = 0;
    int n_lambda = 1, n_t = 1;
};

struct SweepPoint {
    Rat lambda, t;
    bool ok = false;
    Rat bound;          ///< witness bound when ok
    std::string reason; ///< failure kind when not ok
};

struct SweepResult {
    std::vector<SweepPoint> results; ///< row-major, lambda outer
    Rat slack_lambda;
};

DominanceReport check_dominance(const GapTree& K, const GapTree& Kt, int N);

/// Descends both trees in lockstep, trying the left pair first. Works for any
/// pair of types exposing root() and children(node) with `.addr` and `.iv`;
/// the K side may carry outer enclosures of its true intervals.
template <class TreeK, class TreeKt>
WitnessChain chain_descent(const TreeK& K, const TreeKt& Kt, int N) {
    auto a = K.root();
    auto b = Kt.root();
    if (!b.iv.contains(a.iv)) throw Error("ChainBroken", "hulls are not nested", 0);
    WitnessChain c;
    c.k_intervals.push_back(a.iv);
    c.kt_intervals.push_back(b.iv);
    for (int n = 0; n < N; ++n) {
        auto [a0, a1] = K.children(a);
        auto [b0, b1] = Kt.children(b);
        if (b0.iv.contains(a0.iv)) {
            a = std::move(a0);
            b = std::move(b0);
        } else if (b1.iv.contains(a1.iv)) {
            a = std::move(a1);
            b = std::move(b1);
        } else {
            throw Error("ChainBroken", "no child containment at level " + std::to_string(n + 1), n + 1);
        }
        c.pairs.push_back({a.addr, b.addr});
        c.k_intervals.push_back(a.iv);
        c.kt_intervals.push_back(b.iv);
    }
    c.witness_K = a.iv.mid();
    c.witness_Kt = b.iv.mid();
    c.bound = b.iv.length();
    return c;
}

WitnessChain find_chain(const GapTree& K, const GapTree& Kt, int N);

/// Centrally symmetric companion: hull inflated by `margin`, gaps factor * min_gap(K, n).
/// A gap that would violate the level-length constraint is replaced by half that bound
/// (or rejected when `cap` is false).
GapTree build_companion(const GapTree& K, int N, const Rat& margin, const Rat& factor, bool cap = true);

/// Exact set of translations t with hull(K) inside hull(Kt) + t.
Interval1 certify_difference_interior(const GapTree& K, const GapTree& Kt, int N);

/// min over n < N of min_gap(K, n) / max_gap(Kt, n).
Rat gap_slack(const GapTree& K, const GapTree& Kt, int N);

SweepResult robustness_sweep(const GapTree& K, const GapTree& Kt, const PerturbationSpec& pert, int N,
                             int threads = 1);

/// i-th of `count` equally spaced rationals on [lo, hi] (lo when count == 1).
Rat grid_point(const Rat& lo, const Rat& hi, int count, int i);

json dominance_to_json(const DominanceReport& r);
json chain_to_json(const WitnessChain& c);

} // namespace cantor

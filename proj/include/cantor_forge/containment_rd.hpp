#pragma once

#include <vector>

#include "cantor_forge/nested_rd.hpp"

namespace cantor {

/// d_1..d_N: per certificate generation, the smallest selected pairwise separation.
struct SeparationSequence {
    std::vector<Rat> d;
};

/// K0^d, one gap tree per axis (identical up to translation).
struct ProductCompanion {
    GapTree base;
    int dim = 0;
    std::vector<Rat> offset; ///< per-axis translation applied to the base tree

    GapTree axis(int i) const { return affine_image(base, 1, offset[static_cast<size_t>(i)]); }
    Box hull() const;
    ProductCompanion translated(const std::vector<Rat>& t) const;
};

struct ChainStepRd {
    std::vector<int> sigma;          ///< child indices in the certificate, root to this node
    std::vector<NodeAddress> cell;   ///< per-axis companion node
};

struct ChainRd {
    std::vector<ChainStepRd> steps; ///< n = 1..N
    std::vector<Rat> witness_component, witness_cell;
    Rat bound_sq;   ///< exact squared cell diameter at level N
    double bound;   ///< sqrt(bound_sq), rounded up
};

SeparationSequence dk_sequence(const UndCertificate& cert);

/// I is the smallest interval containing every axis range of `cert_hull`, grown by
/// `margin` on both sides; level-(k-1) gaps are shrink * d_k, halved to fit if needed.
ProductCompanion build_product_companion(const Box& cert_hull, const SeparationSequence& seps, const Rat& shrink,
                                         const Rat& margin = 0);

ChainRd find_chain_rd(const UndCertificate& cert, const ProductCompanion& comp, int N);

/// Translations t with cert hull inside comp hull + t.
Box certify_sum_interior_rd(const UndCertificate& cert, const ProductCompanion& comp, int N);

json chain_rd_to_json(const ChainRd& c);

} // namespace cantor

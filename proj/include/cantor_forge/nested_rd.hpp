#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cantor_forge/cantor1d.hpp"

namespace cantor {

/// Axis-aligned box, one closed interval per axis. Boxes produced by the ℝ^d code
/// have dyadic endpoints rounded outward.
using Box = std::vector<Interval1>;
/// Integer coordinates of a closed dyadic cube [j/2^m, (j+1)/2^m]^d.
using Cube = std::vector<std::int64_t>;

using IntervalMatrix = Eigen::Matrix<RatInterval, Eigen::Dynamic, Eigen::Dynamic>;

/// Default ℝ^d rounding precision, overridable with CANTOR_FORGE_PRECISION_BITS.
int default_precision_bits();
/// 2^-40, the smallest separation accepted as positive.
Rat default_margin();

/// Orthogonal matrix held as interval entries with a verified defect bound:
/// every entry of O^T O - I lies in [-defect, defect].
class RotationMatrix {
public:
    static RotationMatrix identity(int d);
    /// v1 = (-1/sqrt2, 1/sqrt2, 0, ...), e_i -> e_{i+1} (2 <= i < d), e_d -> (1/sqrt2, 1/sqrt2, 0, ...).
    static RotationMatrix tilt(int d, int bits = 64);
    /// Orthogonalizes a seeded Gaussian matrix with Householder QR.
    static RotationMatrix random(int d, std::uint64_t seed);
    /// Any interval matrix; rejected when the defect exceeds `max_defect`.
    static RotationMatrix from_intervals(IntervalMatrix m, const Rat& max_defect, std::string label);

    int dim() const { return static_cast<int>(m_.rows()); }
    const IntervalMatrix& entries() const { return m_; }
    const Rat& defect() const { return defect_; }
    const std::string& label() const { return label_; }
    bool is_identity() const;
    Eigen::MatrixXd midpoint() const;

private:
    IntervalMatrix m_;
    Rat defect_;
    std::string label_;
};

/// One coordinate factor of a product geometry: a gap tree or a single point.
struct Factor {
    std::optional<GapTree> tree;
    Rat point;
    static Factor of(GapTree t) { return {std::move(t), 0}; }
    static Factor at(const Rat& p) { return {std::nullopt, p}; }
};

/// A piece of geometry: one node per factor (or a solid source box), with its image box.
struct Atom {
    std::vector<GapTree::Node> ax; ///< per source axis; ax[i].iv is the source interval
    Box img;                       ///< outward image box
};

/// Geometry to be covered: products of gap trees / points, their affine images, or cube lists.
class GeometrySource {
public:
    static GeometrySource product(std::vector<Factor> factors);
    static GeometrySource affine(std::vector<Factor> factors, IntervalMatrix m, std::vector<RatInterval> shift);
    static GeometrySource cubes(int level, std::vector<Cube> cubes);
    static GeometrySource from_config(const json& j);

    /// x -> O x applied on top of the current map.
    GeometrySource transformed(const RotationMatrix& o) const;

    int dim() const { return dim_; }
    bool has_matrix() const { return has_matrix_; }
    const IntervalMatrix& matrix() const { return m_; }
    std::string kind() const;

    /// Atoms whose image boxes have extent <= 2^-level on every axis (unless unsplittable).
    std::vector<Atom> root_atoms(int level, int bits) const;
    void refine(const Atom& a, int level, int bits, std::vector<Atom>& out) const;
    Box image_box(const std::vector<GapTree::Node>& ax, int bits) const;

private:
    enum class AxisKind { Tree, Point, Solid };
    AxisKind axis_kind(int i, const GapTree::Node& n) const;

    int dim_ = 0;
    std::vector<Factor> factors_;
    int cube_level_ = 0;
    std::vector<Cube> cubes_;
    bool has_matrix_ = false;
    IntervalMatrix m_;
    std::vector<RatInterval> shift_;
};

/// Connected component of a level-`level` dyadic cube cover.
struct Component {
    int level = 0;
    std::vector<Cube> cubes; ///< sorted
    Box box;                 ///< outward box of the geometry inside (union of atom image boxes)
    Box src;                 ///< exact source-space box of the same geometry
    std::vector<Atom> atoms; ///< dropped once a component is stored in a certificate

    Rat diameter_sq() const; ///< squared diagonal of `box`
    friend bool operator==(const Component& a, const Component& b) {
        return a.level == b.level && a.cubes == b.cubes && a.box == b.box && a.src == b.src;
    }
};

struct RepIssue {
    int level;
    std::string kind, detail;
};

/// Nested representation built from dyadic covers: the root is the whole level-m0
/// cover and each generation descends `s` dyadic levels. Children are computed on
/// demand, so the representation can be queried far below what it would be
/// practical to store.
class NestedRep {
public:
    struct TreeNode {
        Component comp;
        std::vector<TreeNode> children;
    };

    NestedRep(GeometrySource src, int m0, int leaf_level, int s, int bits);

    int dim() const { return src_->dim(); }
    int start_level() const { return m0_; }
    int leaf_level() const { return leaf_; }
    int step() const { return s_; }
    int bits() const { return bits_; }
    const GeometrySource& source() const { return *src_; }
    const Component& root() const { return root_; }

    /// Components of the level (c.level + k*s) cover inside c, sorted by box lower corner.
    std::vector<Component> descendants(const Component& c, int k) const;
    std::vector<Component> children(const Component& c) const { return descendants(c, 1); }

    /// Explicit tree down to `max_level` (defaults to the leaf level). Records NotShrinking.
    TreeNode materialize(int max_level = -1) const;
    const std::vector<RepIssue>& issues() const { return issues_; }

private:
    std::shared_ptr<const GeometrySource> src_;
    int m0_, leaf_, s_, bits_;
    Component root_;
    mutable std::vector<RepIssue> issues_;
};

NestedRep build_nested_rep(const GeometrySource& src, int m0, int leaf_level, int s = 2, int bits = -1);

/// Connected components (closure adjacency) of the level-m cover of `atoms`.
std::vector<Component> cover_components(std::vector<Atom> atoms, int level);

Rat d_min(const Box& a, const Box& b);
Rat d_min(const Component& a, const Component& b);

struct RatioBounds {
    Rat lo, hi;
};
/// Bounds from the two boxes: min d_i/D_j and max D_i/d_j over i != j.
RatioBounds kappa_ratios(const Box& a, const Box& b);
RatioBounds kappa_ratios(const Component& a, const Component& b);
/// Ratio bounds from source boxes pushed through an interval matrix; empty when
/// some coordinate difference is not sign-definite.
std::optional<RatioBounds> source_ratio_bounds(const Box& src_a, const Box& src_b, const IntervalMatrix& m);

struct PairBound {
    int p, q;
    Rat d_min;
    std::optional<RatioBounds> ratio;
    friend bool operator==(const PairBound& a, const PairBound& b) {
        return a.p == b.p && a.q == b.q && a.d_min == b.d_min && a.ratio.has_value() == b.ratio.has_value() &&
               (!a.ratio || (a.ratio->lo == b.ratio->lo && a.ratio->hi == b.ratio->hi));
    }
};

struct UndNode {
    Component comp;              ///< without atoms
    int k = 0;                   ///< descendant offset of the selection (0 at leaves)
    std::vector<PairBound> pairs;
    std::vector<UndNode> children; ///< d+1 selected components, or none at leaves
    friend bool operator==(const UndNode&, const UndNode&) = default;
};

struct UndCertificate {
    int dim = 0, depth = 0, step = 2, bits = 64;
    std::optional<Rat> kappa;
    Rat margin;
    std::optional<IntervalMatrix> matrix; ///< geometry map used for source-space ratio bounds
    UndNode root;
};
bool operator==(const UndCertificate& a, const UndCertificate& b);

struct UndOptions {
    std::optional<Rat> kappa;
    int max_k = 2;
    int depth = 3;
    Rat margin = default_margin();
};

UndCertificate und_certificate(const NestedRep& rep, const UndOptions& opt);
/// Convenience overload matching the common call shape.
UndCertificate und_certificate(const NestedRep& rep, std::optional<Rat> kappa, int max_k, int depth);

/// Nodes at certificate depth `k` (root is depth 0).
std::vector<const UndNode*> certificate_level(const UndCertificate& c, int k);

/// Independent re-check of an emitted certificate from its stored data only.
/// Returns an empty string when valid, else the first violation.
std::string verify_certificate(const UndCertificate& c);

json certificate_to_json(const UndCertificate& c);
UndCertificate certificate_from_json(const json& j);
/// level,lo_1,hi_1,...,lo_d,hi_d rows (decimal) for every node, depth-first.
std::string certificate_boxes_csv(const UndCertificate& c);
std::string tree_boxes_csv(const NestedRep::TreeNode& t);

struct RotationAttempt {
    std::string label;
    bool ok = false;
    std::string failure;
};

struct RotationResult {
    RotationMatrix matrix;
    UndCertificate certificate;
    std::vector<RotationAttempt> attempts;
};

struct RotationOptions {
    UndOptions und;
    int m0 = 2, s = 2, bits = -1;
    int threads = 1;
};

std::vector<RotationMatrix> default_rotation_candidates(int d, int n_random, std::uint64_t seed);
RotationResult rotation_search(const GeometrySource& src, const std::vector<RotationMatrix>& candidates,
                               const RotationOptions& opt);

json box_to_json(const Box& b);
Box box_from_json(const json& j);
json matrix_to_json(const IntervalMatrix& m);
IntervalMatrix matrix_from_json(const json& j);

} // namespace cantor

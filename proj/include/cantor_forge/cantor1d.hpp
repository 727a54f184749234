#pragma once

#include <compare>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cantor_forge/interval.hpp"

namespace cantor {

/// Binary word addressing a node of a gap tree. "" is the root, "0" the left child.
class NodeAddress {
public:
    static constexpr int kMaxLength = 63;

    NodeAddress() = default;
    static NodeAddress parse(std::string_view s);
    static NodeAddress from_bits(std::uint64_t bits, int length);

    int size() const { return len_; }
    bool empty() const { return len_ == 0; }
    /// i-th step from the root (0-based).
    int bit(int i) const { return static_cast<int>((bits_ >> (len_ - 1 - i)) & 1u); }
    std::uint64_t bits() const { return bits_; }

    NodeAddress child(int b) const;
    NodeAddress parent() const;
    NodeAddress prefix(int n) const { return from_bits(bits_ >> (len_ - n), n); }
    NodeAddress concat(const NodeAddress& tail) const;
    /// Same length, every bit complemented (mirror image).
    NodeAddress flipped() const;
    bool is_prefix_of(const NodeAddress& o) const;

    std::string str() const;

    friend bool operator==(const NodeAddress&, const NodeAddress&) = default;
    /// Shorter first, then left-to-right.
    friend std::strong_ordering operator<=>(const NodeAddress& a, const NodeAddress& b) {
        if (auto c = a.len_ <=> b.len_; c != 0) return c;
        return a.bits_ <=> b.bits_;
    }

private:
    std::uint64_t bits_ = 0;
    int len_ = 0;
};

struct SymmetricSpec {
    Interval1 hull;
    std::vector<Rat> gaps; ///< l_0, ..., l_{N-1}
};

struct LevelGaps {
    Rat min_gap, max_gap, total;
};

namespace detail {
struct GapStorage;
}

/// Finite-depth binary gap tree with exact endpoints. Cheap to copy: storage is
/// shared and immutable; affine images and subtrees are views over it.
class GapTree {
public:
    struct Node {
        NodeAddress addr;
        Interval1 iv;   ///< I_sigma in this tree's coordinates
        Interval1 base; ///< same node in storage coordinates
    };

    const Interval1& hull() const { return hull_; }
    int depth() const { return depth_; }

    Node root() const;
    Node node(const NodeAddress& a) const;
    Interval1 interval(const NodeAddress& a) const { return node(a).iv; }
    Interval1 gap(const Node& n) const;
    Interval1 gap(const NodeAddress& a) const { return gap(node(a)); }
    std::pair<Node, Node> children(const Node& n) const;

    /// Gap statistics at level n < depth.
    LevelGaps level_gaps(int n) const;
    Rat min_gap(int n) const { return level_gaps(n).min_gap; }
    Rat max_gap(int n) const { return level_gaps(n).max_gap; }

    /// All level-n intervals, left to right.
    std::vector<Interval1> level_intervals(int n) const;
    std::vector<Node> level_nodes(int n) const;

    /// Subtree rooted at `a`, re-rooted so that `a` becomes "".
    GapTree subtree(const NodeAddress& a) const;
    /// Same tree cut at a smaller depth.
    GapTree truncated(int depth) const;

    bool symmetric_storage() const;
    /// Full structural comparison (hull, depth, every gap).
    friend bool operator==(const GapTree& a, const GapTree& b);

    // construction
    friend GapTree build_symmetric(const SymmetricSpec& spec);
    friend GapTree tree_from_gaps(const Interval1& hull, int depth,
                                  const std::vector<std::pair<NodeAddress, Interval1>>& gaps);
    friend GapTree affine_image(const GapTree& t, const Rat& lambda, const Rat& shift);

private:
    GapTree() = default;
    void check_level(int n, int limit, const char* what) const;
    NodeAddress to_base(const NodeAddress& a) const;
    Interval1 map(const Interval1& base) const;

    std::shared_ptr<const detail::GapStorage> store_;
    std::shared_ptr<const std::vector<LevelGaps>> stats_; // storage units, relative levels
    Rat scale_ = 1, shift_ = 0;                            // x -> scale*x + shift
    NodeAddress prefix_;                                   // subtree root in storage
    Interval1 root_base_;
    Interval1 hull_;
    int depth_ = 0;
};

GapTree build_symmetric(const SymmetricSpec& spec);
GapTree build_binary_ifs(const Interval1& hull, const Rat& a, int depth);
/// Tree from an explicit gap per address; every address of length < depth must appear once.
GapTree tree_from_gaps(const Interval1& hull, int depth,
                       const std::vector<std::pair<NodeAddress, Interval1>>& gaps);
/// Tree from an unordered gap list (2^depth - 1 gaps). Gaps are placed largest
/// first, leftmost first among equal lengths.
GapTree tree_from_gap_list(const Interval1& hull, std::vector<Interval1> gaps);
/// Middle-thirds set on [0,1].
GapTree middle_thirds(int depth);

struct GapStats {
    Rat min_gap, max_gap;
    std::vector<Interval1> intervals;
};
GapStats gap_stats(const GapTree& t, int n);

GapTree affine_image(const GapTree& t, const Rat& lambda, const Rat& shift);

struct MeasureBounds {
    Rat cover_measure, removed;
};
MeasureBounds measure_bounds(const GapTree& t, int n);

json tree_to_json(const GapTree& t);
GapTree tree_from_json(const json& j);
/// Builder configs: {"kind":"symmetric"|"binary-ifs"|"middle-thirds"|"gaps"|"explicit", ...}.
GapTree tree_from_config(const json& j);
/// Level-n intervals as addr,lo_num,lo_den,hi_num,hi_den rows (with header).
std::string intervals_csv(const GapTree& t, int n);

} // namespace cantor

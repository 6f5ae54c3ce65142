#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace gk {

using MemberId = std::string;
/// Node number local to one tree; 0 is never a valid node.
using LocalId = std::uint32_t;

enum class NodeKind : std::uint8_t { Internal, Member, Pseudo };

struct KeyNode {
    LocalId id = 0;
    NodeKind kind = NodeKind::Internal;
    LocalId parent = 0;
    std::vector<LocalId> children;
    MemberId member;  // Member leaves only
    int weight = 0;   // cached subtree_weight
    std::uint32_t real_leaves = 0;
    std::uint32_t pseudo_leaves = 0;

    bool is_leaf() const { return kind != NodeKind::Internal; }
    int degree() const { return static_cast<int>(children.size()); }
};

/// Feasible leaf counts for a weight-balanced 2-3 tree of exact weight w form
/// the interval [min_leaves(w), max_leaves(w)]; weight 1 is infeasible.
std::uint64_t min_leaves(int w);
std::uint64_t max_leaves(int w);
bool weight_feasible(int w);
/// Smallest weight of any weight-balanced 2-3 tree over n >= 1 leaves.
int min_weight(std::uint64_t n);

struct BalanceViolation {
    LocalId node = 0;
    std::string reason;
};

enum class InsertMode : std::uint8_t {
    NewRoot,        // tree was a single leaf
    ReusePseudo,    // pseudo-leaf replaced by the member
    Grow,           // bottom node degree 2 -> 3
    SiblingSplit,   // full bottom node split into two siblings under a degree-2 parent
    NestSplit,      // full bottom node becomes degree 2 over two new bottom nodes
};

struct InsertionPoint {
    LocalId node = 0;  // bottom node receiving the member (0 for an empty tree)
    InsertMode mode = InsertMode::Grow;
    int resulting_weight = 0;
    bool balanced_without_repair = true;
};

/// Result of a structural operation.
struct TreeChange {
    /// Internal nodes whose key must be regenerated, deepest first.
    std::vector<LocalId> dirty;
    /// Leaves and internal nodes created by the operation.
    std::vector<LocalId> created;
    /// Nodes deleted by the operation (ids are never reused).
    std::vector<LocalId> removed;
    /// Merge only: |W(attachment) - W(guest)| at the chosen attachment point.
    std::optional<int> attach_gap;
    /// True when the whole tree had to be rebuilt.
    bool full_rebuild = false;
};

/// A weight-balanced 2-3 tree of member and pseudo leaves. W(leaf) = 0 and
/// W(v) = deg(v) + max over children; every internal node has degree 2 or 3
/// and its children's weights differ by at most 1.
class KeyTree {
public:
    KeyTree() = default;

    /// Minimal-weight balanced tree; MembershipError for empty or duplicate input.
    static KeyTree build_balanced(std::span<const MemberId> members);

    bool empty() const { return root_ == 0; }
    LocalId root() const { return root_; }
    const KeyNode& node(LocalId id) const;
    bool contains_node(LocalId id) const { return nodes_.count(id) != 0; }
    bool has_member(const MemberId& m) const { return members_.count(m) != 0; }
    LocalId leaf_of(const MemberId& m) const;
    std::size_t member_count() const { return members_.size(); }
    std::size_t pseudo_count() const { return pseudo_count_; }
    std::size_t node_count() const { return nodes_.size(); }
    /// Member ids in left-to-right leaf order.
    std::vector<MemberId> members() const;
    std::vector<LocalId> leaves() const;
    std::vector<LocalId> preorder() const;

    int subtree_weight(LocalId id) const { return node(id).weight; }
    int weight() const { return empty() ? 0 : node(root_).weight; }
    /// Sum of degrees of the proper ancestors of `id`.
    int ancestor_weight(LocalId id) const;
    /// Edges from the root.
    int depth(LocalId id) const;
    /// Ancestors of `id` from its parent up to the root.
    std::vector<LocalId> ancestors(LocalId id) const;
    /// Internal nodes whose children are leaves.
    std::vector<LocalId> bottom_nodes() const;

    std::vector<BalanceViolation> check_balance() const;
    /// Verifies cached weights, counts, parent links and the member index.
    std::vector<std::string> check_structure() const;

    InsertionPoint find_insertion_point() const;
    TreeChange insert_leaf(const MemberId& member);
    /// Leave is a partition of one.
    TreeChange remove_leaf(const MemberId& member);
    /// All-or-nothing: MembershipError (no mutation) if any id is unknown.
    TreeChange partition_leaves(std::span<const MemberId> members);
    /// Merges another tree of new members into this one. The heavier tree hosts
    /// the lighter one at a node whose weight differs by at most 3;
    /// InvariantViolation if no such node exists. Node ids of this tree's
    /// surviving nodes are preserved; `other`'s nodes get fresh ids.
    TreeChange merge(const KeyTree& other);

    /// Nested text form: members by id, pseudo leaves as '*'.
    std::string to_string() const;

private:
    LocalId new_node(NodeKind kind);
    void erase_subtree(LocalId id, TreeChange& change);
    void refresh(LocalId id);
    void refresh_up(LocalId id);
    void mark_path(LocalId id);
    void replace_child(LocalId parent, LocalId old_child, std::span<const LocalId> with);
    void collect_member_leaves(LocalId id, std::vector<LocalId>& out) const;

    /// Evaluates weights and balance after replacing `replaced` (a child of
    /// `parent`, or 0 to add) by subtrees of the given weights.
    struct PathEval {
        bool balanced = true;
        int root_weight = 0;
    };
    PathEval eval_up(LocalId parent, LocalId replaced, std::vector<int> replacement) const;

    LocalId build_shape(std::span<const LocalId> member_leaves, int w, TreeChange& change);
    LocalId build_shape_rec(std::span<const LocalId> leaves, int w, TreeChange& change);
    LocalId rebuild(LocalId id, int target_weight, TreeChange& change);
    void repair_up(LocalId from, TreeChange& change);
    void collect_garbage(LocalId bottom, TreeChange& change);
    void enforce_pseudo_bound(TreeChange& change);
    TreeChange finish(TreeChange change);
    LocalId import_subtree(const KeyTree& other, LocalId id, TreeChange& change);
    void append_text(LocalId id, std::string& out) const;

    std::unordered_map<LocalId, KeyNode> nodes_;
    std::unordered_map<MemberId, LocalId> members_;
    std::vector<LocalId> marked_;
    LocalId root_ = 0;
    LocalId next_id_ = 1;
    std::size_t pseudo_count_ = 0;
};

} // namespace gk

#pragma once

#include "gk/error.hpp"
#include "gk/keytree.hpp"
#include "gk/rekey.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

namespace gk {

/// Seed delivery over the (out of band) secure channel to one member.
struct SeedUnicast {
    MemberId to;
    std::uint32_t subgroup = 0;
    SeedKey seed;

    friend bool operator==(const SeedUnicast&, const SeedUnicast&) = default;
};

enum class Audience : std::uint8_t {
    Member,       // unicast to `to`
    Subgroup,     // every member of `subgroup`
    Group,        // every member
    Controllers,  // SNs only
};

/// One transmitted message. A multicast of several sealed keys is one packet.
struct Envelope {
    /// Ledger scope: subgroup id, or NodeId::kBaseStation for BS-side traffic.
    std::uint32_t scope = 0;
    Audience audience = Audience::Subgroup;
    std::uint32_t subgroup = 0;
    MemberId to;
    /// "seed", "mds", "path", "gk", "gk-mds".
    std::string label;
    std::variant<SeedUnicast, RekeyBroadcast, std::vector<SealedKeyMsg>> body;

    bool unicast() const { return audience == Audience::Member; }
    friend bool operator==(const Envelope&, const Envelope&) = default;
};

/// Body bytes: the canonical rekey encodings; packets are a u16 count then
/// the sealed messages; a seed is u32 subgroup, u16 j, blob s.
Bytes encode_body(const Envelope& e);

/// Allocates distinct random evaluation positions in 1..L.
class PositionAllocator {
public:
    explicit PositionAllocator(std::uint32_t code_length) : limit_(code_length) {}
    template <class Rng>
    Position take(Rng& rng);
    void release(Position j) { used_.erase(j); }
    std::size_t used() const { return used_.size(); }

private:
    std::uint32_t limit_;
    std::set<Position> used_;
};

enum class EventKind : std::uint8_t { Init, Join, Leave, Merge, Partition };
const char* to_string(EventKind k);

/// SN: owns one subgroup key tree, its seed table and node keys.
class SubgroupController {
public:
    SubgroupController(std::uint32_t id, std::string name, std::shared_ptr<const KeyCodec> codec, std::uint64_t seed);

    std::uint32_t id() const { return id_; }
    const std::string& name() const { return name_; }
    const KeyTree& tree() const { return tree_; }
    std::uint64_t epoch() const { return epoch_; }
    bool active() const { return !tree_.empty(); }

    /// NodeId of a tree node; the tree root (or the virtual node above a
    /// single leaf) is the SN node, local id 0.
    NodeId node_id(LocalId local) const;
    NodeId sn_node() const { return NodeId::make(id_, 0); }
    const SessionKey& sn_key() const;
    const SeedKey& seed_of(LocalId leaf) const;
    /// Leaf seed secret, or the logic seed (XOR of the children) of an internal node.
    Secret secret_of(LocalId local) const;
    /// Evaluation position of a leaf or internal node.
    Position position_of(LocalId local) const;
    std::optional<SessionKey> key(NodeId node) const;
    /// Key-path node ids of a member from its leaf parent up to the SN node.
    std::vector<NodeId> path_of(const MemberId& m) const;
    /// Levels from the SN node down to the deepest leaf.
    int height() const;
    /// Levels from the SN node down to this member's leaf.
    int path_levels(const MemberId& m) const;

    std::vector<Envelope> init(std::span<const MemberId> members);
    std::vector<Envelope> join(const MemberId& m);
    std::vector<Envelope> merge(std::span<const MemberId> members);
    std::vector<Envelope> partition(std::span<const MemberId> members);

    /// The SN's share of a GK refresh: recovers GK' from the BS broadcast.
    void install_gk(const SeedKey& sn_seed, const RekeyBroadcast& b);
    /// E_{K_SN}(GK) for this subgroup's members.
    SealedKeyMsg seal_gk(const SessionKey& gk);

    /// |W(attachment) - W(guest)| of the latest merge that attached a guest tree.
    std::optional<int> last_attach_gap() const { return last_attach_gap_; }

    OpCounts ops;
    /// Work spent recovering the GK from the BS broadcast (kept apart from
    /// subtree rekeying).
    OpCounts gk_ops;

private:
    struct Snapshot {
        std::unordered_map<LocalId, LocalId> parent;
        LocalId sn_local = 0;
        bool empty = true;
    };
    Snapshot snapshot() const;
    /// Local id of the SN node: tree root if internal, else 0 (virtual).
    LocalId sn_local() const;
    std::vector<LocalId> kids(LocalId local) const;
    LocalId up(LocalId local) const;
    bool is_bottom(LocalId local) const;
    std::vector<LocalId> bottoms() const;

    void sync_seeds(const TreeChange& c, std::vector<Envelope>& out);
    Secret logic_secret(LocalId local, std::unordered_map<LocalId, Secret>& memo) const;
    std::vector<LocalId> dirty_set(const TreeChange& c, const Snapshot& before) const;
    void regenerate(std::span<const LocalId> dirty);
    std::vector<Envelope> rekey(EventKind kind, const TreeChange& c, const Snapshot& before);
    Envelope mds_envelope(LocalId bottom, const RekeyBroadcast& b) const;
    Envelope packet(std::vector<SealedKeyMsg> msgs) const;

    std::uint32_t id_;
    std::string name_;
    std::shared_ptr<const KeyCodec> codec_;
    std::mt19937_64 rng_;
    NonceSource nonces_;
    PositionAllocator positions_;
    KeyTree tree_;
    std::uint64_t epoch_ = 0;
    std::unordered_map<LocalId, SeedKey> leaf_seeds_;
    std::unordered_map<LocalId, Position> inner_pos_;
    std::unordered_map<NodeId, SessionKey> keys_;
    std::unordered_map<NodeId, RekeyBroadcast> last_mds_;
    std::optional<SessionKey> gk_;
    std::optional<int> last_attach_gap_;
};

/// BS: SN seeds and the group key.
class GroupController {
public:
    GroupController(std::shared_ptr<const KeyCodec> codec, std::uint64_t seed);

    static NodeId gk_node() { return NodeId::make(NodeId::kBaseStation, 0); }
    /// Pre-provisions an SN seed (not a counted message).
    const SeedKey& provision(std::uint32_t sn);
    const SeedKey& sn_seed(std::uint32_t sn) const { return sn_seeds_.at(sn); }
    const std::optional<SessionKey>& gk() const { return gk_; }
    std::uint64_t epoch() const { return epoch_; }

    /// GK' via MDS over the seeds of the given SNs; nullopt when none.
    std::optional<RekeyBroadcast> refresh(std::span<const std::uint32_t> sns);

    OpCounts ops;

private:
    std::shared_ptr<const KeyCodec> codec_;
    std::mt19937_64 rng_;
    NonceSource nonces_;
    PositionAllocator positions_;
    std::map<std::uint32_t, SeedKey> sn_seeds_;
    std::optional<SessionKey> gk_;
    std::uint64_t epoch_ = 0;
};

/// Shares the result of opening one delivered message under one key among
/// the recipients of a multicast (opening is a pure function of both).
/// Each member is still charged its decryption.
struct OpenMemo {
    std::map<std::pair<const SealedKeyMsg*, Bytes>, SessionKey> opened;
};

/// A member device: seed plus keyring (leaf parent ... SN, GK).
class MemberState {
public:
    MemberState(MemberId id, std::uint32_t subgroup) : id_(std::move(id)), subgroup_(subgroup) {}

    const MemberId& id() const { return id_; }
    std::uint32_t subgroup() const { return subgroup_; }
    const std::optional<SeedKey>& seed() const { return seed_; }
    const std::vector<SessionKey>& keyring() const { return keyring_; }

    /// Applies one delivered message; irrelevant messages are ignored.
    /// AuthFailure when a sealed message names a held key but does not open.
    void process(const Envelope& e, const KeyCodec& codec, OpCounts* ops = nullptr, OpenMemo* memo = nullptr);

private:
    void process_sealed(const SealedKeyMsg& m, const KeyCodec& codec, OpCounts* ops, OpenMemo* memo);

    MemberId id_;
    std::uint32_t subgroup_;
    std::optional<SeedKey> seed_;
    std::vector<SessionKey> keyring_;
};

struct GroupConfig {
    KeyParams params;
    std::string hash = "sha256";
    std::string cipher = "hash-stream";
    std::uint64_t seed = 0;
};

/// Ordered SN name -> initial members.
using Layout = std::vector<std::pair<std::string, std::vector<MemberId>>>;

/// BS plus all SNs; runs the protocol steps of every membership event.
class Group {
public:
    explicit Group(const GroupConfig& cfg);

    const KeyCodec& codec() const { return *codec_; }
    std::shared_ptr<const KeyCodec> codec_ptr() const { return codec_; }
    const GroupController& bs() const { return bs_; }
    const SubgroupController& subgroup(std::uint32_t id) const { return subs_.at(id - 1); }
    const SubgroupController& subgroup(const std::string& name) const;
    std::size_t subgroup_count() const { return subs_.size(); }
    std::uint32_t subgroup_id(const std::string& name) const;
    bool has_member(const MemberId& m) const { return where_.count(m) != 0; }
    std::uint32_t subgroup_of(const MemberId& m) const;
    std::vector<MemberId> members() const;
    std::size_t member_count() const { return where_.size(); }

    /// Ground truth keyring: path keys then GK.
    std::vector<SessionKey> expected_keyring(const MemberId& m) const;

    std::vector<Envelope> init(const Layout& layout);
    std::vector<Envelope> join(const std::string& sn, const MemberId& m);
    std::vector<Envelope> leave(const MemberId& m);
    std::vector<Envelope> merge(const std::string& sn, std::span<const MemberId> ms);
    /// All leavers must belong to one subgroup.
    std::vector<Envelope> partition(std::span<const MemberId> ms);

    OpCounts bs_ops() const { return bs_.ops; }
    OpCounts sn_ops() const;
    OpCounts sn_gk_ops() const;

private:
    SubgroupController& sub(std::uint32_t id) { return subs_.at(id - 1); }
    void refresh_gk(EventKind kind, std::uint32_t affected, std::vector<Envelope>& out);

    std::shared_ptr<const KeyCodec> codec_;
    GroupController bs_;
    std::vector<SubgroupController> subs_;
    std::unordered_map<MemberId, std::uint32_t> where_;
    std::uint64_t seed_;
    bool initialized_ = false;
};

std::shared_ptr<const KeyCodec> make_codec(const GroupConfig& cfg);

template <class Rng>
Position PositionAllocator::take(Rng& rng) {
    if (used_.size() >= limit_) throw Error(ErrorCode::CapacityExceeded, "all " + std::to_string(limit_) + " positions in use");
    if (used_.size() * 2 < limit_) {
        for (;;) {
            const Position j = 1 + static_cast<Position>(rng() % limit_);
            if (used_.insert(j).second) return j;
        }
    }
    std::vector<Position> free;
    for (Position j = 1; j <= limit_; ++j)
        if (!used_.count(j)) free.push_back(j);
    const Position j = free[rng() % free.size()];
    used_.insert(j);
    return j;
}

} // namespace gk

#pragma once

#include "gk/roles.hpp"

#include <deque>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace gk {

// ---------------------------------------------------------------------------
// Scenarios

struct ScenarioEvent {
    EventKind kind = EventKind::Join;
    std::string sn;                 // join / merge target; informational otherwise
    std::vector<MemberId> members;  // one for join / leave
    std::size_t line = 0;           // source line, 0 if generated
};

struct Scenario {
    GroupConfig config;
    Layout layout;
    std::vector<ScenarioEvent> events;
};

/// Line-delimited JSON records: one "config", then "subgroup" records, then
/// events. Throws ParseError ("line N: ...") on malformed input or on events
/// that reference members inconsistently.
Scenario parse_scenario(std::istream& in);
std::string to_jsonl(const Scenario& s);

struct GeneratorOptions {
    std::uint64_t seed = 0;
    unsigned field_bits = 8;
    std::size_t members = 100;
    std::size_t subgroups = 4;
    std::size_t events = 1000;
};

/// Mixed join/leave/merge/partition workload around the target population.
/// Subgroup sizes stay below what the position space can hold.
Scenario generate_scenario(const GeneratorOptions& opt);
/// Largest subgroup the generator allows for a field width.
std::size_t subgroup_cap(unsigned field_bits);

// ---------------------------------------------------------------------------
// Cost accounting

struct Traffic {
    std::uint64_t multicasts = 0;
    std::uint64_t unicasts = 0;
    std::uint64_t bytes = 0;

    Traffic& operator+=(const Traffic& o) {
        multicasts += o.multicasts;
        unicasts += o.unicasts;
        bytes += o.bytes;
        return *this;
    }
    friend bool operator==(const Traffic&, const Traffic&) = default;
};

/// SinkNode is the subtree rekeying of the SN(s) owning the event; SinkGk is
/// every SN's share of the group key refresh (recovering GK', sealing it for
/// subgroups the event did not touch).
enum class Role : std::uint8_t { BaseStation, SinkNode, SinkGk, Member };
const char* to_string(Role r);

/// Facts about one event needed to evaluate the analytic cost formulas.
struct EventInfo {
    std::uint64_t index = 0;
    EventKind kind = EventKind::Init;
    std::string sn;
    std::uint32_t scope = 0;
    std::vector<MemberId> members;
    int height_before = 0;   // levels of the affected subgroup tree
    int height_after = 0;
    int sn_degree = 0;       // SN node degree before the event
    int sn_degree_after = 0;
    int bottoms = 0;         // nodes whose children are all leaves, after
    std::size_t subgroup_size = 0;  // after
    std::size_t group_size = 0;     // after
    int joiner_levels = 0;   // join only: levels on the joiner's path afterwards
    int attach_gap = -1;     // merge only: weight gap at the attachment point (-1: none)
    std::map<std::string, int> heights;  // init only: per-subgroup levels
};

struct EventCost {
    EventInfo info;
    std::map<std::uint32_t, Traffic> by_scope;
    std::map<Role, OpCounts> ops;

    Traffic total() const;
    Traffic scope(std::uint32_t s) const;
};

/// M counts once per multicast packet, U once per unicast; bytes are the
/// encoded body sizes.
class CostLedger {
public:
    void begin(const EventInfo& info);
    void record(std::uint32_t scope, bool unicast, std::size_t bytes);
    void add_ops(Role r, const OpCounts& ops);
    void finish(const EventInfo& info);

    const std::vector<EventCost>& events() const { return events_; }
    Traffic total() const;
    OpCounts ops(Role r) const;

    friend bool operator==(const CostLedger& a, const CostLedger& b);

private:
    std::vector<EventCost> events_;
};

// ---------------------------------------------------------------------------
// Observers

struct ProbeStats {
    std::uint64_t sealed_attempts = 0;
    std::uint64_t sealed_opens = 0;       // must stay 0
    std::uint64_t mds_attempts = 0;
    std::uint64_t mds_successes = 0;      // chance level 2^-m
    std::uint64_t conspiracy_attempts = 0;
    std::uint64_t conspiracy_successes = 0;
    std::uint64_t backward_attempts = 0;
    std::uint64_t backward_opens = 0;     // must stay 0
    std::uint64_t backward_mds_attempts = 0;
    std::uint64_t backward_mds_successes = 0;

    double mds_rate() const { return mds_attempts ? double(mds_successes) / double(mds_attempts) : 0.0; }
    double conspiracy_rate() const {
        return conspiracy_attempts ? double(conspiracy_successes) / double(conspiracy_attempts) : 0.0;
    }
    double backward_mds_rate() const {
        return backward_mds_attempts ? double(backward_mds_successes) / double(backward_mds_attempts) : 0.0;
    }
};

/// What a principal took with it (leaver) or brought in (joiner).
struct Principal {
    MemberId id;
    std::uint32_t subgroup = 0;
    std::uint64_t event = 0;
    SeedKey seed;
    std::vector<SessionKey> keys;
};

/// A broadcast as seen on the air plus the key it actually carried (for
/// scoring decode attempts).
struct RecordedBroadcast {
    RekeyBroadcast b;
    FieldElem truth;
};

/// Passive adversary: records traffic and runs the secrecy probes. Never
/// touches delivery or the ledger.
class AdversaryObserver {
public:
    AdversaryObserver(std::shared_ptr<const KeyCodec> codec, std::size_t window, std::size_t pool,
                      std::size_t conspiracy)
        : codec_(std::move(codec)), window_(window), pool_(pool), conspiracy_(conspiracy) {}

    /// Leaver knowledge captured before the leave takes effect.
    void revoke(Principal p);
    /// Runs the forward probes of every live revoked principal against this
    /// event's traffic, then records it.
    void observe(std::uint64_t event, const std::vector<Envelope>& traffic, const std::vector<FieldElem>& truths);
    /// Backward probe: a new member's knowledge against the recorded past.
    void probe_backward(const Principal& joiner);

    const ProbeStats& stats() const { return stats_; }

private:
    struct Recorded {
        std::uint64_t event;
        std::vector<SealedKeyMsg> sealed;
        std::vector<RecordedBroadcast> broadcasts;
    };
    std::size_t try_keys(std::vector<SessionKey>& keys, const std::vector<SealedKeyMsg>& msgs, std::uint64_t& attempts);

    std::shared_ptr<const KeyCodec> codec_;
    std::size_t window_;
    std::size_t pool_;
    std::size_t conspiracy_;
    std::deque<Principal> revoked_;
    std::deque<Recorded> past_;
    ProbeStats stats_;
};

/// Probe helpers usable on their own (return the success count).
std::uint64_t probe_forward_secrecy(const KeyCodec& codec, const Principal& leaver,
                                    const std::vector<Envelope>& post_leave_traffic);
std::uint64_t probe_backward_secrecy(const KeyCodec& codec, const Principal& joiner,
                                     const std::vector<Envelope>& pre_join_traffic);

// ---------------------------------------------------------------------------
// Simulation

struct SimOptions {
    bool observers = true;
    bool keep_trace = true;
    /// Events a revoked principal keeps probing after it leaves.
    std::size_t probe_window = 8;
    /// Revoked principals kept for probing / conspiracy pooling.
    std::size_t revoked_pool = 64;
    std::size_t conspiracy_size = 5;
};

/// Deterministic simulated network around a Group.
class Simulation {
public:
    Simulation(const GroupConfig& cfg, SimOptions opt = {});

    void init(const Layout& layout);
    /// Executes one event, delivers its traffic and checks every invariant;
    /// InvariantViolation names the event index and a tree snapshot.
    void apply(const ScenarioEvent& e);

    const Group& group() const { return group_; }
    const CostLedger& ledger() const { return ledger_; }
    const std::vector<std::string>& trace() const { return trace_; }
    std::string trace_text() const;
    const ProbeStats* probes() const { return observer_ ? &observer_->stats() : nullptr; }
    const MemberState& member(const MemberId& m) const { return states_.at(m); }
    std::uint64_t events_run() const { return next_event_; }
    /// Per-event invariant violations found so far (the run aborts on the first).
    std::uint64_t balance_checks() const { return balance_checks_; }

private:
    EventInfo describe(EventKind kind, std::uint32_t scope, const std::vector<MemberId>& ms) const;
    void deliver(std::uint64_t event, const std::vector<Envelope>& msgs);
    void check(const EventInfo& info);
    [[noreturn]] void fail(const EventInfo& info, const std::string& what) const;
    void trace_event(const EventInfo& info);
    void trace_costs(const EventCost& c);

    GroupConfig cfg_;
    SimOptions opt_;
    Group group_;
    CostLedger ledger_;
    std::map<MemberId, MemberState> states_;
    std::map<std::uint32_t, std::map<MemberId, MemberState*>> by_subgroup_;  // into states_
    std::optional<AdversaryObserver> observer_;
    std::vector<std::string> trace_;
    std::uint64_t next_event_ = 0;
    std::uint64_t balance_checks_ = 0;
    OpCounts member_ops_;
};

struct RunResult {
    std::vector<std::string> trace;
    CostLedger ledger;
    std::optional<ProbeStats> probes;
    std::size_t final_members = 0;
};

RunResult run_scenario(const Scenario& s, SimOptions opt = {});

/// Recomputes the ledger from trace records; ParseError (with byte offset)
/// on truncated or malformed input.
CostLedger ledger_from_trace(std::istream& in);

} // namespace gk

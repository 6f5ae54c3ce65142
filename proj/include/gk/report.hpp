#pragma once

#include "gk/simnet.hpp"

#include <optional>
#include <string>
#include <vector>

namespace gk {

/// Closed interval of an analytic prediction.
struct Band {
    double lo = 0;
    double hi = 0;

    bool contains(double x) const { return x >= lo && x <= hi; }
    bool exact() const { return lo == hi; }
};

enum class Verdict : std::uint8_t { NotApplicable, Within, Below, Above };
const char* to_string(Verdict v);
Verdict judge(const std::optional<Band>& band, double measured);

/// One event: measured traffic and operations next to the analytic values.
struct ReportRow {
    EventInfo info;
    int h = 0;                // height the formulas are evaluated at
    Traffic traffic;          // subgroup scope(s) of the event
    Traffic bs_traffic;       // BS-side share of the group key refresh
    OpCounts sn_ops;          // owning SN(s)
    OpCounts gk_ops;          // SNs' share of the GK refresh
    OpCounts member_ops;
    std::string formula;      // analytic multicast / unicast expression
    std::optional<Band> m_band;
    std::optional<Band> u_band;
    std::optional<Band> hash_band;  // SN hash evaluations
    Verdict m_verdict = Verdict::NotApplicable;
    Verdict u_verdict = Verdict::NotApplicable;
    Verdict hash_verdict = Verdict::NotApplicable;
    /// Per-member storage after the event for a member at depth h: analytic
    /// bits ((2l+1) seed + (h-1) path keys of l bits, l = m) and the encoded
    /// size in this implementation (seed + path keys + GK).
    std::uint64_t storage_bits = 0;
    std::uint64_t storage_bytes = 0;
};

struct VerdictTally {
    std::uint64_t checked = 0;
    std::uint64_t within = 0;
    std::uint64_t below = 0;
    std::uint64_t above = 0;

    void add(Verdict v);
};

struct CostReport {
    unsigned field_bits = 8;
    std::vector<ReportRow> rows;
    Traffic total;
    OpCounts bs_ops, sn_ops, gk_ops, member_ops;
    VerdictTally m, u, hash;
};

/// Builds the measured-vs-analytic report from a ledger (live or replayed).
CostReport build_report(const CostLedger& ledger, unsigned field_bits, std::size_t secret_bytes = 0);

/// Tabular text: per-event rows, verdict summary and the analytic-only
/// comparison columns for PCGR, GKD and GKSS.
std::string render_text(const CostReport& r, bool with_rows = true);
/// One JSON record per row plus a summary record.
std::string render_records(const CostReport& r);
/// The other schemes' formulas, rendered verbatim (symbols left open).
std::string comparison_tables();

} // namespace gk

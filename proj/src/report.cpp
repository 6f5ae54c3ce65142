#include "gk/report.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace gk {

using json = nlohmann::json;

const char* to_string(Verdict v) {
    switch (v) {
    case Verdict::NotApplicable: return "-";
    case Verdict::Within: return "ok";
    case Verdict::Below: return "below";
    case Verdict::Above: return "above";
    }
    return "?";
}

Verdict judge(const std::optional<Band>& band, double measured) {
    if (!band) return Verdict::NotApplicable;
    if (measured < band->lo) return Verdict::Below;
    if (measured > band->hi) return Verdict::Above;
    return Verdict::Within;
}

void VerdictTally::add(Verdict v) {
    if (v == Verdict::NotApplicable) return;
    ++checked;
    within += v == Verdict::Within;
    below += v == Verdict::Below;
    above += v == Verdict::Above;
}

namespace {

double p2(int e) { return e < 0 ? 0 : std::ldexp(1.0, e); }
double p3(int e) { return e < 0 ? 0 : std::pow(3.0, e); }

OpCounts ops_of(const EventCost& c, Role r) {
    auto it = c.ops.find(r);
    return it == c.ops.end() ? OpCounts{} : it->second;
}

std::string fmt_band(const std::optional<Band>& b) {
    if (!b) return "-";
    char buf[64];
    if (b->exact())
        std::snprintf(buf, sizeof buf, "%g", b->lo);
    else
        std::snprintf(buf, sizeof buf, "[%g,%g]", b->lo, b->hi);
    return buf;
}

json band_json(const std::optional<Band>& b) {
    if (!b) return nullptr;
    return json::array({b->lo, b->hi});
}

json ops_json(const OpCounts& o) {
    return {{"hash", o.hash}, {"matrix", o.matrix}, {"encrypt", o.encrypt}, {"decrypt", o.decrypt}};
}

} // namespace

CostReport build_report(const CostLedger& ledger, unsigned field_bits, std::size_t secret_bytes) {
    CostReport rep;
    rep.field_bits = field_bits;
    if (secret_bytes == 0) secret_bytes = (field_bits + 7) / 8;
    const std::uint64_t l = field_bits;
    const std::uint64_t sym = (field_bits + 7) / 8;

    for (const auto& c : ledger.events()) {
        ReportRow row;
        row.info = c.info;
        const auto& i = c.info;
        for (const auto& [scope, t] : c.by_scope) {
            if (scope == NodeId::kBaseStation)
                row.bs_traffic += t;
            else
                row.traffic += t;
        }
        row.sn_ops = ops_of(c, Role::SinkNode);
        row.gk_ops = ops_of(c, Role::SinkGk);
        row.member_ops = ops_of(c, Role::Member);
        const double n = static_cast<double>(i.members.size());

        switch (i.kind) {
        case EventKind::Init: {
            double mlo = 0, mhi = 0, hlo = 0, hhi = 0;
            for (const auto& [sn, h] : i.heights) {
                mlo += 2 * p2(h - 2);
                mhi += 2 * p3(h - 2);
                hlo += p2(h) - 1;
                hhi += (p3(h) - 1) / 2;
                row.h = std::max(row.h, h);
            }
            row.formula = "nU + [2^(h-2),3^(h-2)]*2M per SN";
            row.u_band = Band{n, n};
            if (!i.heights.empty()) {
                row.m_band = Band{mlo, mhi};
                row.hash_band = Band{hlo, hhi};
            }
            break;
        }
        case EventKind::Join: {
            const int h = i.joiner_levels;
            row.h = h;
            row.formula = "hM + U";
            row.m_band = Band{double(h), double(h)};
            row.u_band = Band{1, 1};
            row.hash_band = Band{2.0 * (h - 1), 3.0 * (h - 1)};
            break;
        }
        case EventKind::Leave: {
            const int h = i.height_after;
            row.h = h;
            row.formula = "[2^(h-2),3^(h-2)]M + (deg(SN)-1)M + M";
            row.u_band = Band{0, 0};
            if (h >= 3) {
                row.m_band = Band{p2(h - 2) + i.sn_degree_after, p3(h - 2) + i.sn_degree_after};
                row.hash_band = Band{2.0 * (h - 1), 3.0 * (h - 1)};
            }
            break;
        }
        case EventKind::Merge:
            row.h = i.height_after;
            row.formula = "xU + M + [2^(h1-2),3^(h1-2)]M + (h-h1+3/4)M";
            row.u_band = Band{n, n};
            break;
        case EventKind::Partition:
            row.h = i.height_after;
            row.formula = "bounded by re-initialization";
            row.u_band = Band{0, 0};
            break;
        }
        row.m_verdict = judge(row.m_band, double(row.traffic.multicasts));
        row.u_verdict = judge(row.u_band, double(row.traffic.unicasts));
        row.hash_verdict = judge(row.hash_band, double(row.sn_ops.hash));
        if (row.h > 0) {
            const std::uint64_t h = static_cast<std::uint64_t>(row.h);
            row.storage_bits = (2 * l + 1) + (h - 1) * l;
            row.storage_bytes = (2 + secret_bytes) + h * sym;
        }

        rep.m.add(row.m_verdict);
        rep.u.add(row.u_verdict);
        rep.hash.add(row.hash_verdict);
        rep.total += c.total();
        rep.bs_ops += ops_of(c, Role::BaseStation);
        rep.sn_ops += row.sn_ops;
        rep.gk_ops += row.gk_ops;
        rep.member_ops += row.member_ops;
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

std::string comparison_tables() {
    // Analytic columns only; the symbols t, w, mu, n_B, m are left open.
    return R"(Analytic comparison (formulas only; L = key length, n = members, h = tree height)

initialization        storage                  computation                       communication
  this protocol       (2L+1) + (h-1)L          C_H + 2C_D                        0
  PCGR                (n+1)(t+1)L              O((n+1)t^2) + nC_E                n(t+1)L
  GKD                 (2t+3+w)L                O(2t^2)                           5/2 (t+1) n_B L
join
  this protocol       (2L+1) + (h-1)L          C_H + 2C_D                        0
  PCGR                (n+1)(t+1)L              O(mu^3) + nC_E                    nL
  GKD                 (m+1)L                   O(t^3) + nC_E                     (t+1)L
leave
  this protocol       (2L+1) + (h-1)L          C_H + C_D                         0
  B-PCGR              (n+1)(t+1)L              O(mu^3) + nC_E                    nL
  GKD                 (m+1)L                   O(t^3) + nC_E                     (t+1)L

vs GKSS (SN | ordinary node)
initialization
  storage       this: n(2L+1) + n_1 L | (2L+1) + (h-1)L          GKSS: (2n+3)L | 4L
  computation   this: nC_E + (n_1+n)C_H + n_1 C_M | C_H + 2C_D   GKSS: nC_E | C_D
  communication this: 2nL | 0                                    GKSS: (n+m)L | 0
join
  storage       this: n(2L+1) + n_1 L | (2L+1) + (h-1)L          GKSS: (2n+3)L | 4L
  computation   this: C_E + [2(h-1),3(h-1)]C_H + (h-1)C_M | C_H + 2C_D
                GKSS: O(2^2) + nC_E | O(1) + C_D
  communication this: [h+3,h+4]L | 0                             GKSS: 4(n+h)n | 0
leave
  storage       this: n(2L+1) + n_1 L | (2L+1) + (h-1)L          GKSS: (2n+3)L | 4L
  computation   this: [2(h-1),3(h-1)]C_H + (h-1)C_M | C_H + C_D
                GKSS: O(2^2) + nC_E | O(1) + C_D
  communication this: [2^(h-2),3^(h-2)]L + (deg(S_i)-1)L + L | 0 GKSS: 2L + 4(n+h)n | 0
)";
}

std::string render_text(const CostReport& r, bool with_rows) {
    std::ostringstream os;
    char line[512];
    if (with_rows) {
        std::snprintf(line, sizeof line, "%6s %-9s %-5s %3s %5s %-9s %-6s %4s %-6s %8s %5s %-9s %-6s %5s %5s %5s %6s\n",
                      "event", "kind", "sn", "h", "M", "M(an)", "", "U", "", "bytes", "C_H", "C_H(an)", "",
                      "C_M", "C_E", "C_D", "stor");
        os << line;
        for (const auto& row : r.rows) {
            const auto& i = row.info;
            std::snprintf(line, sizeof line,
                          "%6llu %-9s %-5s %3d %5llu %-9s %-6s %4llu %-6s %8llu %5llu %-9s %-6s %5llu %5llu %5llu %6llu\n",
                          (unsigned long long)i.index, to_string(i.kind), i.sn.empty() ? "*" : i.sn.c_str(), row.h,
                          (unsigned long long)row.traffic.multicasts, fmt_band(row.m_band).c_str(),
                          to_string(row.m_verdict), (unsigned long long)row.traffic.unicasts,
                          to_string(row.u_verdict), (unsigned long long)(row.traffic.bytes + row.bs_traffic.bytes),
                          (unsigned long long)row.sn_ops.hash, fmt_band(row.hash_band).c_str(),
                          to_string(row.hash_verdict), (unsigned long long)row.sn_ops.matrix,
                          (unsigned long long)row.sn_ops.encrypt, (unsigned long long)row.member_ops.decrypt,
                          (unsigned long long)row.storage_bytes);
            os << line;
        }
        os << '\n';
    }
    std::snprintf(line, sizeof line, "events %zu  multicasts %llu  unicasts %llu  bytes %llu  (m = %u)\n",
                  r.rows.size(), (unsigned long long)r.total.multicasts, (unsigned long long)r.total.unicasts,
                  (unsigned long long)r.total.bytes, r.field_bits);
    os << line;
    auto ops_line = [&](const char* who, const OpCounts& o) {
        std::snprintf(line, sizeof line, "  %-9s C_H %llu  C_M %llu  C_E %llu  C_D %llu\n", who,
                      (unsigned long long)o.hash, (unsigned long long)o.matrix, (unsigned long long)o.encrypt,
                      (unsigned long long)o.decrypt);
        os << line;
    };
    ops_line("bs", r.bs_ops);
    ops_line("sn", r.sn_ops);
    ops_line("sn-gk", r.gk_ops);
    ops_line("members", r.member_ops);
    auto tally = [&](const char* what, const VerdictTally& t) {
        std::snprintf(line, sizeof line, "  %-10s checked %llu  within %llu  below %llu  above %llu\n", what,
                      (unsigned long long)t.checked, (unsigned long long)t.within, (unsigned long long)t.below,
                      (unsigned long long)t.above);
        os << line;
    };
    os << "analytic checks\n";
    tally("multicast", r.m);
    tally("unicast", r.u);
    tally("SN hash", r.hash);
    if (with_rows) {
        os << "\nstorage per member at depth h: analytic (2l+1)+(h-1)l bits, l = m; 'stor' column is\n"
              "the encoded size here (seed position + secret, h-1 path keys, GK)\n\n";
        os << comparison_tables();
    }
    return os.str();
}

std::string render_records(const CostReport& r) {
    std::ostringstream os;
    for (const auto& row : r.rows) {
        const auto& i = row.info;
        json j{{"type", "cost"},
               {"event", i.index},
               {"kind", to_string(i.kind)},
               {"sn", i.sn},
               {"h", row.h},
               {"multicasts", row.traffic.multicasts},
               {"unicasts", row.traffic.unicasts},
               {"bytes", row.traffic.bytes},
               {"bs_multicasts", row.bs_traffic.multicasts},
               {"bs_bytes", row.bs_traffic.bytes},
               {"formula", row.formula},
               {"m_band", band_json(row.m_band)},
               {"u_band", band_json(row.u_band)},
               {"hash_band", band_json(row.hash_band)},
               {"m_verdict", to_string(row.m_verdict)},
               {"u_verdict", to_string(row.u_verdict)},
               {"hash_verdict", to_string(row.hash_verdict)},
               {"sn_ops", ops_json(row.sn_ops)},
               {"gk_ops", ops_json(row.gk_ops)},
               {"member_ops", ops_json(row.member_ops)},
               {"storage_bits", row.storage_bits},
               {"storage_bytes", row.storage_bytes}};
        os << j.dump() << '\n';
    }
    auto tally = [](const VerdictTally& t) {
        return json{{"checked", t.checked}, {"within", t.within}, {"below", t.below}, {"above", t.above}};
    };
    os << json{{"type", "summary"},
               {"events", r.rows.size()},
               {"field_bits", r.field_bits},
               {"multicasts", r.total.multicasts},
               {"unicasts", r.total.unicasts},
               {"bytes", r.total.bytes},
               {"bs_ops", ops_json(r.bs_ops)},
               {"sn_ops", ops_json(r.sn_ops)},
               {"gk_ops", ops_json(r.gk_ops)},
               {"member_ops", ops_json(r.member_ops)},
               {"multicast_checks", tally(r.m)},
               {"unicast_checks", tally(r.u)},
               {"hash_checks", tally(r.hash)}}
              .dump()
       << '\n';
    return os.str();
}

} // namespace gk

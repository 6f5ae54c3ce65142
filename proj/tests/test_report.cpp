#include "doctest.h"

#include "gk/report.hpp"

#include <algorithm>
#include <sstream>

using namespace gk;

namespace {

const char* kExample = R"({"type":"config","seed":3,"field_bits":8}
{"type":"subgroup","sn":"SN1","members":["u1","u2","u3","u4","u5","u6","u7","u8"]}
{"type":"subgroup","sn":"SN2","members":["u9","u10","u11","u12","u13"]}
{"type":"subgroup","sn":"SN3","members":["u14","u15","u16"]}
{"type":"join","sn":"SN1","member":"u17"}
{"type":"leave","member":"u3"}
)";

} // namespace

TEST_CASE("bands and verdicts") {
    CHECK(judge(std::nullopt, 3) == Verdict::NotApplicable);
    CHECK(judge(Band{2, 4}, 1) == Verdict::Below);
    CHECK(judge(Band{2, 4}, 4) == Verdict::Within);
    CHECK(judge(Band{2, 4}, 5) == Verdict::Above);
    VerdictTally t;
    t.add(Verdict::NotApplicable);
    t.add(Verdict::Within);
    t.add(Verdict::Above);
    CHECK(t.checked == 2);
    CHECK(t.within == 1);
}

TEST_CASE("report on the eight/five/three layout") {
    std::istringstream in(kExample);
    const auto r = run_scenario(parse_scenario(in));
    const auto rep = build_report(r.ledger, 8);
    REQUIRE(rep.rows.size() == 3);

    const auto& init = rep.rows[0];
    CHECK(init.traffic.unicasts == 16);
    CHECK(init.u_verdict == Verdict::Within);
    CHECK(init.m_verdict == Verdict::Within);   // 14 in [10,14]
    CHECK(init.hash_verdict == Verdict::Within);

    const auto& join = rep.rows[1];
    CHECK(join.h == 3);
    CHECK(join.traffic.multicasts == 3);
    CHECK(join.traffic.unicasts == 1);
    CHECK(join.m_verdict == Verdict::Within);
    CHECK(join.u_verdict == Verdict::Within);
    CHECK(join.hash_verdict == Verdict::Within);
    // (2m+1) + (h-1)m bits at m=8, h=3
    CHECK(join.storage_bits == 17 + 16);

    const auto& leave = rep.rows[2];
    CHECK(leave.traffic.unicasts == 0);
    CHECK(leave.u_verdict == Verdict::Within);
    CHECK(leave.m_band.has_value());

    CHECK(rep.total == r.ledger.total());
    const std::string text = render_text(rep);
    CHECK(text.find("PCGR") != std::string::npos);
    CHECK(text.find("analytic checks") != std::string::npos);

    // One record per row plus the summary.
    const std::string recs = render_records(rep);
    CHECK(std::count(recs.begin(), recs.end(), '\n') == 4);
}

TEST_CASE("report from a replayed trace equals the live one") {
    std::istringstream in(kExample);
    const auto r = run_scenario(parse_scenario(in));
    std::string text;
    for (const auto& l : r.trace) text += l + "\n";
    std::istringstream tin(text);
    CHECK(render_records(build_report(ledger_from_trace(tin), 8)) == render_records(build_report(r.ledger, 8)));
}

TEST_CASE("empty ledger") {
    const auto rep = build_report(CostLedger{}, 8);
    CHECK(rep.rows.empty());
    CHECK(rep.total == Traffic{});
    CHECK(rep.m.checked == 0);
    CHECK_NOTHROW(render_text(rep));
}

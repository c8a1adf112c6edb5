#include <catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace flipforge;

TEST_CASE("golden run of the minimal program") {
  Program p = parse_program("ldi r0, 5\nhalt\n");
  p.roi_end = 1;  // roi covers only the const
  SectionLayout layout;
  layout.final_outputs.push_back({"nil", 0, 0, Bank::Int});
  p.memory.resize(1);
  GoldenTrace t = run_golden(p, layout);
  CHECK(t.roi_dyn_count() == 1);
  CHECK(t.entries[0].pc == 0);
  CHECK(t.entries[0].instance == -1);
}

TEST_CASE("golden run resolves section instances and outputs") {
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  GoldenTrace t = run_golden(p, layout);
  REQUIRE(t.instances.size() == 2);
  CHECK(t.instances[0].ref().str() == "1@0");
  CHECK(t.instances[1].ref().str() == "2@0");
  // MID = 2*1.25, OUT = 3*MID
  CHECK(std::bit_cast<double>(t.instances[0].golden_outputs[0][0]) == 2.5);
  CHECK(std::bit_cast<double>(t.final_outputs[0][0]) == 7.5);
  // per-pc dynamic counts are the protection costs
  for (auto& [pc, n] : t.pc_dyn_count) CHECK(n == 1);
}

TEST_CASE("stores outside effective outputs abort the golden run") {
  const char* src =
      ".memsize 8\n"
      ".roi 0 4\n"
      "  section-begin 1\n"
      "  const r1, 6\n"
      "  store [r1], r1\n"
      "  section-end 1\n"
      "  halt\n";
  Program p = parse_program(src);
  json lj = json::parse(R"({
    "sections": [{"id": 1,
      "inputs": [], "outputs": [{"name":"O","addr":2,"len":1,"bank":"int"}],
      "pad": 0}],
    "dataflow": [{"from": ["1@0","O"], "to": ["final","O"]}],
    "final_outputs": [{"name":"O","addr":2,"len":1,"bank":"int"}]
  })");
  CHECK_THROWS_AS(run_golden(p, parse_layout(lj)), FatalError);
}

TEST_CASE("site enumeration counts operands") {
  const char* src =
      ".memsize 4\n"
      ".roi 0 3\n"
      "  iadd r2, r0, r1\n"
      "  jump 2\n"
      "  halt\n";
  Program p = parse_program(src);
  SectionLayout layout;
  layout.final_outputs.push_back({"nil", 0, 1, Bank::Int});
  GoldenTrace t = run_golden(p, layout);
  auto sites = enumerate_sites(t, SiteScope::whole_roi(), PruneConfig{});
  CHECK(sites.size() == 192);  // 3 operands x 64 bits; jump contributes none
  double psum = 0;
  for (auto& s : sites) psum += s.p;
  CHECK(psum == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pruning forms pilot classes over identical operand values") {
  // the same static iadd executes twice with identical operand values
  const char* src =
      ".memsize 4\n"
      ".roi 0 7\n"
      "  const r6, 1\n"
      "  const r7, 2\n"
      "loop:\n"
      "  iadd r2, r0, r1\n"
      "  iadd r5, r5, r6\n"
      "  icmp-lt r4, r5, r7\n"
      "  branch-if r4, loop\n"
      "  halt\n";
  Program p = parse_program(src);
  SectionLayout layout;
  layout.final_outputs.push_back({"nil", 0, 1, Bank::Int});
  p.memory.resize(4);
  GoldenTrace t = run_golden(p, layout);
  PruneConfig prune{true};
  auto sites = enumerate_sites(t, SiteScope::whole_roi(), prune);
  size_t pilots = 0, pruned = 0;
  for (auto& s : sites) {
    if (s.pc != 2) continue;  // the r2 = r0 + r1 instruction
    if (s.prune == PruneStatus::Pilot) ++pilots;
    if (s.prune == PruneStatus::Pruned) ++pruned;
  }
  CHECK(pilots == 192);
  CHECK(pruned == 192);
  // the counter increment sees different r5 values, so nothing prunes there
  for (auto& s : sites)
    if (s.pc == 3 && s.slot == Slot::Src0) CHECK(s.prune == PruneStatus::Pilot);
}

TEST_CASE("flip helpers are involutive") {
  MachineState st;
  st.iregs[3] = 5;
  detail::flip_reg(st, Bank::Int, 3, 0);
  CHECK(st.iregs[3] == 4);  // 5 xor 1
  detail::flip_reg(st, Bank::Int, 3, 0);
  CHECK(st.iregs[3] == 5);
  st.fregs[1] = 1.0;
  detail::flip_reg(st, Bank::Float, 1, 62);
  CHECK(std::isinf(st.fregs[1]));  // exponent saturates
  detail::flip_reg(st, Bank::Float, 1, 62);
  CHECK(st.fregs[1] == 1.0);
}

TEST_CASE("injection classifies masked and sdc outcomes") {
  Program p = parse_program(fftest::kAddSource);
  SectionLayout layout = fftest::add_layout();
  GoldenTrace t = run_golden(p, layout);
  auto sites = enumerate_sites(t, SiteScope::of_instance(0), PruneConfig{});
  REQUIRE(!sites.empty());

  // bit 30 of the loaded 1.5 survives the fadd rounding
  const ErrorSite* mid = nullptr;
  const ErrorSite* src0 = nullptr;
  for (auto& s : sites) {
    if (s.pc == 1 && s.slot == Slot::Dst && s.bit == 30) mid = &s;
    if (s.pc == 3 && s.slot == Slot::Src0 && s.bit == 30) src0 = &s;
  }
  REQUIRE(mid);
  OutcomeRecord rec =
      inject_and_run(p, layout, t, *mid, SiteScope::of_instance(0), {});
  REQUIRE(rec.tag == OutcomeTag::Sdc);
  double flipped =
      std::bit_cast<double>(std::bit_cast<uint64_t>(1.5) ^ (1ull << 30));
  CHECK(rec.r[0] == std::fabs((flipped + 2.5) - 4.0));

  // the same bit flipped on the value consumed by the fadd
  REQUIRE(src0);
  rec = inject_and_run(p, layout, t, *src0, SiteScope::of_instance(0), {});
  REQUIRE(rec.tag == OutcomeTag::Sdc);
  CHECK(rec.r[0] == std::fabs((flipped + 2.5) - 4.0));

  // the mantissa lsb is rounded away entirely: masked
  for (auto& s : sites)
    if (s.pc == 1 && s.slot == Slot::Dst && s.bit == 0) {
      OutcomeRecord lsb =
          inject_and_run(p, layout, t, s, SiteScope::of_instance(0), {});
      CHECK(lsb.tag == OutcomeTag::Masked);
    }
}

TEST_CASE("masked when the faulty output equals the golden output") {
  // the flipped register is overwritten before use
  const char* src =
      ".memsize 4\n"
      ".roi 0 6\n"
      "  section-begin 1\n"
      "  const r1, 7\n"
      "  const r1, 3\n"
      "  store [0], r1\n"
      "  section-end 1\n"
      "  halt\n";
  Program p = parse_program(src);
  json lj = json::parse(R"({
    "sections": [{"id": 1, "inputs": [],
      "outputs": [{"name":"O","addr":0,"len":1,"bank":"int"}], "pad": 0}],
    "dataflow": [{"from": ["1@0","O"], "to": ["final","O"]}],
    "final_outputs": [{"name":"O","addr":0,"len":1,"bank":"int"}]
  })");
  SectionLayout layout = parse_layout(lj);
  GoldenTrace t = run_golden(p, layout);
  auto sites = enumerate_sites(t, SiteScope::of_instance(0), PruneConfig{});
  // dst flip on `const r1, 7` (pc 1) is dead: overwritten by pc 2
  for (auto& s : sites) {
    if (s.pc != 1) continue;
    OutcomeRecord rec =
        inject_and_run(p, layout, t, s, SiteScope::of_instance(0), {});
    CHECK(rec.tag == OutcomeTag::Masked);
    CHECK(rec.r[0] == 0.0);
  }
}

TEST_CASE("classification soundness on a constructed wrong constant") {
  // flipping bit 1 of the stored constant changes OUT by exactly 2
  const char* src =
      ".memsize 4\n"
      ".roi 0 5\n"
      "  section-begin 1\n"
      "  const r1, 8\n"
      "  store [0], r1\n"
      "  section-end 1\n"
      "  halt\n";
  Program p = parse_program(src);
  json lj = json::parse(R"({
    "sections": [{"id": 1, "inputs": [],
      "outputs": [{"name":"O","addr":0,"len":1,"bank":"int"}], "pad": 0}],
    "dataflow": [{"from": ["1@0","O"], "to": ["final","O"]}],
    "final_outputs": [{"name":"O","addr":0,"len":1,"bank":"int"}]
  })");
  SectionLayout layout = parse_layout(lj);
  GoldenTrace t = run_golden(p, layout);
  auto sites = enumerate_sites(t, SiteScope::of_instance(0), PruneConfig{});
  for (auto& s : sites) {
    if (s.pc == 1 && s.slot == Slot::Dst && s.bit == 1) {
      OutcomeRecord rec =
          inject_and_run(p, layout, t, s, SiteScope::of_instance(0), {});
      REQUIRE(rec.tag == OutcomeTag::Sdc);
      CHECK(rec.r[0] == 2.0);  // |8 xor 2 - 8|
    }
  }
}

TEST_CASE("faulty loop counters time out at five times the golden count") {
  // loop runs 4 iterations; corrupting the counter sign bit spins it
  const char* src =
      ".memsize 4\n"
      ".roi 0 9\n"
      "  section-begin 1\n"
      "  const r1, 0\n"
      "  const r2, 4\n"
      "loop:\n"
      "  const r3, 1\n"
      "  iadd r1, r1, r3\n"
      "  icmp-lt r4, r1, r2\n"
      "  branch-if r4, loop\n"
      "  store [0], r1\n"
      "  section-end 1\n"
      "  halt\n";
  Program p = parse_program(src);
  json lj = json::parse(R"({
    "sections": [{"id": 1, "inputs": [],
      "outputs": [{"name":"O","addr":0,"len":1,"bank":"int"}], "pad": 0}],
    "dataflow": [{"from": ["1@0","O"], "to": ["final","O"]}],
    "final_outputs": [{"name":"O","addr":0,"len":1,"bank":"int"}]
  })");
  SectionLayout layout = parse_layout(lj);
  GoldenTrace t = run_golden(p, layout);
  auto sites = enumerate_sites(t, SiteScope::of_instance(0), PruneConfig{});
  bool saw_timeout = false;
  for (auto& s : sites) {
    // corrupt the counter high bits as consumed by the compare
    if (s.pc == 4 && s.slot == Slot::Src0 && s.bit == 63) {
      OutcomeRecord rec =
          inject_and_run(p, layout, t, s, SiteScope::of_instance(0), {});
      saw_timeout |= rec.tag == OutcomeTag::Timeout;
    }
  }
  CHECK(saw_timeout);
}

TEST_CASE("out of bounds stores crash") {
  Program p = parse_program(fftest::kAddSource);
  SectionLayout layout = fftest::add_layout();
  GoldenTrace t = run_golden(p, layout);
  auto sites = enumerate_sites(t, SiteScope::of_instance(0), PruneConfig{});
  // no register-based addressing here; force a crash via the divide instead
  const char* src =
      ".memsize 4\n"
      ".roi 0 6\n"
      "  section-begin 1\n"
      "  const r1, 8\n"
      "  const r2, 2\n"
      "  idiv r3, r1, r2\n"
      "  store [0], r3\n"
      "  section-end 1\n"
      "  halt\n";
  Program q = parse_program(src);
  json lj = json::parse(R"({
    "sections": [{"id": 1, "inputs": [],
      "outputs": [{"name":"O","addr":0,"len":1,"bank":"int"}], "pad": 0}],
    "dataflow": [{"from": ["1@0","O"], "to": ["final","O"]}],
    "final_outputs": [{"name":"O","addr":0,"len":1,"bank":"int"}]
  })");
  SectionLayout ql = parse_layout(lj);
  GoldenTrace qt = run_golden(q, ql);
  auto qsites = enumerate_sites(qt, SiteScope::of_instance(0), PruneConfig{});
  bool saw_crash = false;
  for (auto& s : qsites)
    if (s.pc == 3 && s.slot == Slot::Src1 && s.bit == 1) {
      // divisor 2 -> 0: divide by zero traps
      OutcomeRecord rec = inject_and_run(q, ql, qt, s, SiteScope::of_instance(0), {});
      CHECK(rec.tag == OutcomeTag::Crash);
      saw_crash = true;
    }
  CHECK(saw_crash);
}

TEST_CASE("campaigns are deterministic across worker counts") {
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  GoldenTrace t = run_golden(p, layout);
  auto sites = enumerate_sites(t, SiteScope::whole_roi(), PruneConfig{});
  CampaignResult a = run_campaign(p, layout, t, sites, SiteScope::whole_roi(), {}, 1);
  CampaignResult b = run_campaign(p, layout, t, sites, SiteScope::whole_roi(), {}, 8);
  CampaignResult c = run_campaign(p, layout, t, sites, SiteScope::whole_roi(), {}, 1);
  REQUIRE(a.records.size() == b.records.size());
  CHECK(dump_outcomes(a) == dump_outcomes(b));
  CHECK(dump_outcomes(a) == dump_outcomes(c));
  CHECK(a.runs_executed == sites.size());
}

TEST_CASE("site partition is exhaustive") {
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  GoldenTrace t = run_golden(p, layout);
  size_t total = enumerate_sites(t, SiteScope::whole_roi(), PruneConfig{}).size();
  size_t sum = enumerate_sites(t, SiteScope::untested(), PruneConfig{}).size();
  std::set<uint64_t> ids;
  for (auto& s : enumerate_sites(t, SiteScope::untested(), PruneConfig{}))
    ids.insert(s.id);
  for (size_t i = 0; i < t.instances.size(); ++i) {
    auto part = enumerate_sites(t, SiteScope::of_instance((int)i), PruneConfig{});
    sum += part.size();
    for (auto& s : part) ids.insert(s.id);
  }
  CHECK(sum == total);
  CHECK(ids.size() == total);
}

TEST_CASE("pruned sites inherit the pilot outcome flagged as inferred") {
  // the stored value r1 is 3 in both loop iterations, so the store's value
  // operand prunes; the base register differs and stays unpruned
  const char* src =
      ".memsize 8\n"
      ".roi 0 10\n"
      "  section-begin 1\n"
      "  const r6, 1\n"
      "  const r7, 2\n"
      "loop:\n"
      "  const r1, 3\n"
      "  store [r2], r1\n"
      "  iadd r2, r2, r6\n"
      "  iadd r5, r5, r6\n"
      "  icmp-lt r4, r5, r7\n"
      "  branch-if r4, loop\n"
      "  section-end 1\n"
      "  halt\n";
  Program p = parse_program(src);
  json lj = json::parse(R"({
    "sections": [{"id": 1, "inputs": [],
      "outputs": [{"name":"O","addr":0,"len":2,"bank":"int"}], "pad": 0}],
    "dataflow": [{"from": ["1@0","O"], "to": ["final","O"]}],
    "final_outputs": [{"name":"O","addr":0,"len":2,"bank":"int"}]
  })");
  SectionLayout layout = parse_layout(lj);
  GoldenTrace t = run_golden(p, layout);
  auto sites = enumerate_sites(t, SiteScope::of_instance(0), PruneConfig{true});
  CampaignResult res =
      run_campaign(p, layout, t, sites, SiteScope::of_instance(0), {}, 1);
  size_t pruned = 0;
  for (size_t i = 0; i < res.sites.size(); ++i) {
    if (res.sites[i].prune != PruneStatus::Pruned) continue;
    ++pruned;
    CHECK(res.records[i].inferred);
    const OutcomeRecord* pilot = res.find(res.sites[i].pilot_id);
    REQUIRE(pilot);
    CHECK(pilot->tag == res.records[i].tag);
    CHECK(pilot->r == res.records[i].r);
  }
  CHECK(pruned > 0);
  CHECK(res.runs_executed + pruned == res.sites.size());
}

TEST_CASE("dual campaign matches the single-scope campaigns") {
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  GoldenTrace t = run_golden(p, layout);
  auto roi_sites = enumerate_sites(t, SiteScope::whole_roi(), PruneConfig{});
  DualCampaignResult dual =
      run_dual_campaign(p, layout, t, roi_sites, {}, 2);
  CampaignResult mono =
      run_campaign(p, layout, t, roi_sites, SiteScope::whole_roi(), {}, 1);
  REQUIRE(dual.final_records.size() == mono.records.size());
  for (size_t i = 0; i < mono.records.size(); ++i) {
    CHECK(dual.final_records[i].tag == mono.records[i].tag);
    CHECK(dual.final_records[i].r == mono.records[i].r);
  }
  // section parts agree with per-instance campaigns
  for (size_t k = 0; k < t.instances.size(); ++k) {
    auto part = enumerate_sites(t, SiteScope::of_instance((int)k), PruneConfig{});
    CampaignResult sec =
        run_campaign(p, layout, t, part, SiteScope::of_instance((int)k), {}, 1);
    for (size_t i = 0; i < part.size(); ++i) {
      const ErrorSite& s = part[i];
      // find in dual by id
      size_t idx = 0;
      while (dual.sites[idx].id != s.id) ++idx;
      REQUIRE(dual.has_section[idx]);
      CHECK(dual.section_records[idx].tag == sec.records[i].tag);
      CHECK(dual.section_records[idx].r == sec.records[i].r);
    }
  }
}

TEST_CASE("detector ranges turn out-of-range outputs into detected") {
  Program p = parse_program(fftest::kAddSource);
  SectionLayout layout = fftest::add_layout();
  GoldenTrace t = run_golden(p, layout);
  DetectorConfig det;
  det.enabled = true;
  det.ranges.push_back({"OUT", 0.0, 10.0});
  auto sites = enumerate_sites(t, SiteScope::of_instance(0), PruneConfig{});
  size_t detected = 0, sdc = 0;
  CampaignResult res =
      run_campaign(p, layout, t, sites, SiteScope::of_instance(0), det, 1);
  for (auto& rec : res.records) {
    detected += rec.tag == OutcomeTag::Detected;
    sdc += rec.tag == OutcomeTag::Sdc;
  }
  CHECK(detected > 0);  // large exponent flips leave [0,10]
  CHECK(sdc > 0);       // small mantissa flips stay inside
}

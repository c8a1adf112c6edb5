#include <catch_amalgamated.hpp>

#include <random>

#include "flipforge/baseline.hpp"
#include "flipforge/sensitivity.hpp"
#include "helpers.hpp"

using namespace flipforge;

TEST_CASE("error range worked example") {
  CategoryCounts c;
  c.A = 8;
  c.C = 1;
  c.D = 1;
  c.E = 1;
  ErrorRange r = error_range(c, 0.5);
  CHECK(r.v_min == Catch::Approx(8.5 / 9.5).margin(1e-12));
  CHECK(r.v_calc == Catch::Approx(0.9).margin(1e-12));
  CHECK(r.v_max == Catch::Approx(9.5 / 10.5).margin(1e-12));
}

TEST_CASE("error range collapses at R = 0") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    CategoryCounts c;
    c.A = rng() % 50;
    c.B = rng() % 50;
    c.C = rng() % 50;
    c.D = rng() % 50;
    c.E = rng() % 50;
    c.F = rng() % 50;
    c.G = rng() % 50;
    c.H = rng() % 50;
    ErrorRange r = error_range(c, 0.0);
    CHECK(r.v_min == r.v_calc);
    CHECK(r.v_max == r.v_calc);
  }
}

TEST_CASE("interval containment over random tuples") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 2000; ++t) {
    CategoryCounts c;
    c.A = rng() % 20;
    c.B = rng() % 20;
    c.C = rng() % 20;
    c.D = rng() % 20;
    c.E = rng() % 20;
    c.F = rng() % 20;
    c.G = rng() % 20;
    c.H = rng() % 20;
    double R = (double)(rng() % 1001) / 1000.0;
    ErrorRange r = error_range(c, R);
    CHECK(r.v_min <= r.v_calc + 1e-12);
    CHECK(r.v_calc <= r.v_max + 1e-12);
  }
}

TEST_CASE("full protection degenerates to all ones") {
  CategoryCounts c;
  c.A = 10;
  c.C = 2;
  ErrorRange r = error_range(c, 0.3);
  CHECK(r.v_calc == 1.0);
  CHECK(r.v_max == 1.0);
}

TEST_CASE("without pruning the range is a point for every R") {
  CategoryCounts c;
  c.A = 5;
  c.B = 3;
  c.E = 2;
  c.F = 7;
  for (double R : {0.0, 0.04, 0.5, 1.0}) {
    ErrorRange r = error_range(c, R);
    CHECK(r.v_min == r.v_calc);
    CHECK(r.v_max == r.v_calc);
  }
}

TEST_CASE("achieved value counts covered monolithic SDC-Bad sites") {
  MonoLabels labels;
  labels.bad_units = {{1, 4}, {2, 5}, {3, 1}};
  labels.total_bad = 10;
  Selection all;
  all.pcs = {1, 2, 3};
  CHECK(achieved_value(all, labels) == 1.0);
  Selection most;
  most.pcs = {1, 2};
  CHECK(achieved_value(most, labels) == 0.9);
  Selection none;
  CHECK(achieved_value(none, labels) == 0.0);
  MonoLabels empty;
  bool flag = false;
  CHECK(achieved_value(none, empty, &flag) == 1.0);
  CHECK(flag);
}

TEST_CASE("modification stepping follows the adjustment period") {
  AdjustState st = AdjustState::fresh(2);
  CHECK(step_modification(st, false) == AnalysisMode::FullAdjust);  // fresh
  CHECK(step_modification(st, true) == AnalysisMode::Incremental);  // mod 1
  CHECK(step_modification(st, true) == AnalysisMode::FullAdjust);   // mod 2
  CHECK(step_modification(st, true) == AnalysisMode::Incremental);  // mod 3

  AdjustState every = AdjustState::fresh(1);
  CHECK(step_modification(every, false) == AnalysisMode::FullAdjust);
  CHECK(step_modification(every, true) == AnalysisMode::FullAdjust);
  CHECK(step_modification(every, true) == AnalysisMode::FullAdjust);

  AdjustState idle = AdjustState::fresh(2);
  CHECK(step_modification(idle, false) == AnalysisMode::FullAdjust);
  // unchanged reruns never advance the counter
  CHECK(step_modification(idle, false) == AnalysisMode::Incremental);
  CHECK(step_modification(idle, false) == AnalysisMode::Incremental);
}

namespace {

ProtectionModel tiny_model(
    std::vector<std::tuple<uint32_t, uint64_t, uint64_t>> pcs) {
  ProtectionModel m;
  for (auto& [pc, raw, cost] : pcs) {
    if (raw) m.raw[pc] = raw;
    m.cost[pc] = cost;
    m.total_raw += raw;
    m.total_roi_dyn += cost;
  }
  return m;
}

}  // namespace

TEST_CASE("target adjustment compensates for inflated values") {
  // the compositional model inflates pc 1 (mono says it is harmless) while
  // the mono-bad pcs 2 and 3 carry less compositional weight
  ProtectionModel ff = tiny_model({{1, 6, 1}, {2, 2, 5}, {3, 2, 5}});
  MonoLabels mono;
  mono.bad_units = {{2, 5}, {3, 5}};
  mono.total_bad = 10;
  KnapsackSolver solver(ff);

  // unadjusted: 0.6 of compositional value is met by {1} alone, achieving 0
  Selection raw = solver.solve(0.6);
  CHECK(raw.pcs == std::vector<uint32_t>{1});
  CHECK(achieved_value(raw, mono) == 0.0);

  AdjustResult adj = adjust_target(solver, mono, 0.6);
  CHECK_FALSE(adj.warning);
  CHECK(achieved_value(adj.selection, mono) >= 0.6);
  CHECK(adj.adjusted_target > 0.6);

  // the adjusted target is minimal over the achievable lattice
  for (uint64_t u = 0; u <= solver.total_units(); ++u) {
    if (!solver.achievable(u)) continue;
    double frac = (double)u / (double)solver.total_units();
    if (frac >= adj.adjusted_target) continue;
    CHECK(achieved_value(solver.solve_units(u), mono) < 0.6);
  }
}

TEST_CASE("adjustment can lower the target when labels are generous") {
  // every compositional unit on pc 1 is mono-bad and cheap to cover
  ProtectionModel ff = tiny_model({{1, 5, 1}, {2, 5, 50}});
  MonoLabels mono;
  mono.bad_units = {{1, 5}};
  mono.total_bad = 5;
  KnapsackSolver solver(ff);
  AdjustResult adj = adjust_target(solver, mono, 0.9);
  CHECK(adj.adjusted_target <= 0.9);
  CHECK(achieved_value(adj.selection, mono) >= 0.9);
}

TEST_CASE("impossible adjustments warn at the full target") {
  // mono-bad pc 9 has no compositional value at all
  ProtectionModel ff = tiny_model({{1, 5, 1}});
  MonoLabels mono;
  mono.bad_units = {{9, 3}};
  mono.total_bad = 3;
  KnapsackSolver solver(ff);
  AdjustResult adj = adjust_target(solver, mono, 0.9);
  CHECK(adj.warning);
  CHECK(adj.adjusted_target == 1.0);
}

TEST_CASE("target one never adjusts past one") {
  ProtectionModel ff = tiny_model({{1, 5, 1}, {2, 5, 2}});
  MonoLabels mono;
  mono.bad_units = {{1, 5}, {2, 5}};
  mono.total_bad = 10;
  KnapsackSolver solver(ff);
  AdjustResult adj = adjust_target(solver, mono, 1.0);
  CHECK(adj.adjusted_target == 1.0);
  CHECK_FALSE(adj.warning);
  CHECK(achieved_value(adj.selection, mono) == 1.0);
}

TEST_CASE("monolithic campaign covers the whole site universe") {
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  GoldenTrace t = run_golden(p, layout);
  CampaignResult mono = run_monolithic(p, layout, t, {}, {}, 2);
  auto whole = enumerate_sites(t, SiteScope::whole_roi(), PruneConfig{});
  REQUIRE(mono.sites.size() == whole.size());
  for (size_t i = 0; i < whole.size(); ++i) CHECK(mono.sites[i].id == whole[i].id);
}

TEST_CASE("categorization partitions the universe") {
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  GoldenTrace t = run_golden(p, layout);
  CampaignResult mono = run_monolithic(p, layout, t, {}, {}, 1);
  SdcThresholds thr;
  Selection sel;
  sel.pcs = {1, 2, 3};
  CategoryCounts c = categorize_sites(mono, {"OUT"}, thr, sel);
  CHECK(c.total() == mono.sites.size());
  CHECK(c.C + c.D + c.G + c.H == 0);  // prune disabled
}

TEST_CASE("single-section benchmarks agree between scopes") {
  // with one section whose output is the final output, the compositional
  // and monolithic SDC-Bad sets coincide
  Program p = parse_program(fftest::kAddSource);
  SectionLayout layout = fftest::add_layout();
  GoldenTrace t = run_golden(p, layout);
  auto sites = enumerate_sites(t, SiteScope::of_instance(0), PruneConfig{});
  CampaignResult sec =
      run_campaign(p, layout, t, sites, SiteScope::of_instance(0), {}, 1);
  CampaignResult mono = run_monolithic(p, layout, t, {}, {}, 1);
  SdcThresholds thr;
  size_t i_mono = 0;
  for (size_t i = 0; i < sec.sites.size(); ++i) {
    while (mono.sites[i_mono].id != sec.sites[i].id) ++i_mono;
    bool sec_bad = sec.records[i].tag == OutcomeTag::Sdc;
    bool mono_bad = monolithic_site_bad(mono.records[i_mono], {"OUT"}, thr);
    CHECK(sec_bad == mono_bad);
  }
}

TEST_CASE("constant overwrite downstream masks monolithically") {
  // section 2 ignores MID and overwrites OUT with a constant
  const char* src =
      ".memsize 8\n"
      ".mem 0 1 float 1.5\n"
      ".mem 2 1 float 0\n"
      ".mem 4 1 float 0\n"
      ".roi 0 11\n"
      "  section-begin 1\n"
      "  load f0, [0]\n"
      "  fadd f1, f0, f0\n"
      "  store [2], f1\n"
      "  section-end 1\n"
      "  section-begin 2\n"
      "  const f2, 9.5\n"
      "  store [4], f2\n"
      "  section-end 2\n"
      "  halt\n";
  json lj = json::parse(R"({
    "sections": [
      {"id": 1, "inputs": [{"name":"IN","addr":0,"len":1,"bank":"float"}],
       "outputs": [{"name":"MID","addr":2,"len":1,"bank":"float"}], "pad": 0},
      {"id": 2, "inputs": [{"name":"MID","addr":2,"len":1,"bank":"float"}],
       "outputs": [{"name":"OUT","addr":4,"len":1,"bank":"float"}], "pad": 0}],
    "dataflow": [
      {"from": ["1@0","MID"], "to": ["2@0","MID"]},
      {"from": ["2@0","OUT"], "to": ["final","OUT"]}],
    "final_outputs": [{"name":"OUT","addr":4,"len":1,"bank":"float"}]
  })");
  Program p = parse_program(src);
  SectionLayout layout = parse_layout(lj);
  GoldenTrace t = run_golden(p, layout);
  auto sites = enumerate_sites(t, SiteScope::of_instance(0), PruneConfig{});
  CampaignResult sec =
      run_campaign(p, layout, t, sites, SiteScope::of_instance(0), {}, 1);
  CampaignResult mono = run_monolithic(p, layout, t, {}, {}, 1);
  SdcThresholds thr;
  size_t sec_sdc = 0, mono_bad_in_s1 = 0;
  for (size_t i = 0; i < sec.records.size(); ++i)
    sec_sdc += sec.records[i].tag == OutcomeTag::Sdc;
  std::set<uint64_t> s1_ids;
  for (auto& s : sec.sites) s1_ids.insert(s.id);
  for (size_t i = 0; i < mono.sites.size(); ++i)
    if (s1_ids.count(mono.sites[i].id))
      mono_bad_in_s1 += monolithic_site_bad(mono.records[i], {"OUT"}, thr);
  CHECK(sec_sdc > 0);
  CHECK(mono_bad_in_s1 == 0);
}

TEST_CASE("utility json carries all fields") {
  UtilityReport u;
  u.v_trgt = 0.9;
  u.v_trgt_adj = 0.95;
  u.v_achv = 0.91;
  u.counts.A = 3;
  json j = utility_to_json(u);
  CHECK(j["v_trgt"] == 0.9);
  CHECK(j["counts"]["A"] == 3);
  CHECK(j.contains("within_error_range"));
}

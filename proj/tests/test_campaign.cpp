#include <catch_amalgamated.hpp>

#include <random>
#include <unistd.h>

#include "flipforge/campaign.hpp"
#include "flipforge/sha256.hpp"
#include "helpers.hpp"

using namespace flipforge;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() /
           ("flipforge-test-" + tag + "-" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig chain_config() {
  RunConfig cfg;
  cfg.thresholds.default_epsilon = 0.01;
  cfg.targets = {0.9, 1.0};
  cfg.sensitivity.samples = 32;
  cfg.seed = 7;
  cfg.jobs = 2;
  cfg.family = "chain";
  return cfg;
}

}  // namespace

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string(1000, 'x')) != sha256_hex(std::string(999, 'x')));
}

TEST_CASE("cache entries round trip through json") {
  CacheEntry e;
  e.key = "k";
  e.instance = "1@0";
  e.site_count = 3;
  e.runs_executed = 2;
  e.golden_outputs = {{1, 2}, {3}};
  e.spec.instance = "1@0";
  e.spec.inputs = {"IN"};
  e.spec.outputs = {"OUT"};
  e.spec.K = {{2.5}};
  OutcomeRecord r1;
  r1.tag = OutcomeTag::Sdc;
  r1.r = {0.5, kInf};
  OutcomeRecord r2;
  r2.tag = OutcomeTag::Crash;
  r2.inferred = true;
  e.records = {r1, r2};
  CacheEntry f = cache_entry_from_json(cache_entry_to_json(e));
  CHECK(f.key == e.key);
  CHECK(f.golden_outputs == e.golden_outputs);
  CHECK(f.spec.K == e.spec.K);
  REQUIRE(f.records.size() == 2);
  CHECK(f.records[0].tag == OutcomeTag::Sdc);
  CHECK(f.records[0].r[0] == 0.5);
  CHECK(std::isinf(f.records[0].r[1]));
  CHECK(f.records[1].inferred);
}

TEST_CASE("fresh analysis runs everything and populates the cache") {
  TempDir tmp("fresh");
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  CacheStore store(tmp.path / "store");
  RunConfig cfg = chain_config();
  AnalyzeResult res = analyze(p, layout, cfg, store);
  CHECK(res.analysis == "both");  // fresh state forces the full analysis
  CHECK(res.executed_runs > 0);
  CHECK(res.reused_runs == 0);
  CHECK(res.utilities.size() == cfg.targets.size());
  CHECK(res.report["selections"].size() == 2);
  CHECK(res.report.contains("utility"));
  CHECK(res.accounting["cache_misses"] == 2);
  CHECK(store.inspect().size() == 2);
}

TEST_CASE("unchanged reruns reuse everything byte-identically") {
  TempDir tmp("rerun");
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  CacheStore store(tmp.path / "store");
  RunConfig cfg = chain_config();
  cfg.mode = RunConfig::Mode::Compositional;
  AnalyzeResult first = analyze(p, layout, cfg, store);
  CHECK(first.executed_runs > 0);
  AnalyzeResult second = analyze(p, layout, cfg, store);
  CHECK(second.executed_runs == 0);
  CHECK(second.reused_runs == first.fresh_total);
  CHECK(first.report.dump() == second.report.dump());
  SpeedupSummary sp = account(second);
  CHECK(sp.executed_none);
  CHECK(std::isinf(sp.compositional));
}

TEST_CASE("incremental analysis is byte-identical to a cold fresh run") {
  TempDir tmp("incr");
  // modified section 2: the combine operation changes
  std::string modified = fftest::kChainSource;
  size_t pos = modified.find("fmul f5, f3, f4");
  REQUIRE(pos != std::string::npos);
  modified.replace(pos, 15, "fadd f5, f3, f4");

  Program base = parse_program(fftest::kChainSource);
  Program mod = parse_program(modified);
  SectionLayout layout = fftest::chain_layout();
  RunConfig cfg = chain_config();
  cfg.mode = RunConfig::Mode::Compositional;

  CacheStore warm(tmp.path / "warm");
  analyze(base, layout, cfg, warm);
  AnalyzeResult incremental = analyze(mod, layout, cfg, warm);
  CHECK(incremental.reanalyzed == std::vector<std::string>{"2@0"});
  CHECK(incremental.executed_runs < incremental.fresh_total);

  CacheStore cold(tmp.path / "cold");
  AnalyzeResult fresh = analyze(mod, layout, cfg, cold);
  CHECK(fresh.executed_runs == fresh.fresh_total);
  CHECK(incremental.report.dump() == fresh.report.dump());
}

TEST_CASE("diff_sections marks changed bodies and changed inputs") {
  std::string modified = fftest::kChainSource;
  size_t pos = modified.find("fmul f5, f3, f4");
  modified.replace(pos, 15, "fadd f5, f3, f4");
  Program base = parse_program(fftest::kChainSource);
  Program mod = parse_program(modified);
  SectionLayout layout = fftest::chain_layout();
  GoldenTrace bt = run_golden(base, layout);
  GoldenTrace mt = run_golden(mod, layout);
  CHECK(diff_sections(base, bt, base, bt, layout).empty());
  CHECK(diff_sections(base, bt, mod, mt, layout) ==
        std::set<std::string>{"2@0"});

  // changing section 1's gain changes section 2's golden input too
  std::string upstream = fftest::kChainSource;
  size_t mpos = upstream.find(".mem 8 1 float 2");
  REQUIRE(mpos != std::string::npos);
  upstream.replace(mpos, 16, ".mem 8 1 float 4");
  Program up = parse_program(upstream);
  GoldenTrace ut = run_golden(up, layout);
  CHECK(diff_sections(base, bt, up, ut, layout) ==
        std::set<std::string>{"1@0", "2@0"});
}

TEST_CASE("layout drift is fatal") {
  Program p = parse_program(fftest::kChainSource);
  Program q = parse_program(fftest::kAddSource);
  SectionLayout pl = fftest::chain_layout();
  SectionLayout ql = fftest::add_layout();
  GoldenTrace pt = run_golden(p, pl);
  GoldenTrace qt = run_golden(q, ql);
  CHECK_THROWS_AS(diff_sections(p, pt, q, qt, pl), FatalError);
}

TEST_CASE("cache keys respond to any body or input change") {
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  GoldenTrace t = run_golden(p, layout);
  RunConfig cfg = chain_config();
  std::string base_key = instance_cache_key(p, layout, t, 0, cfg);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 24; ++trial) {
    Program q = p;
    int which = (int)(rng() % 3);
    if (which == 0) {
      q.instructions[2].mem_off ^= 1;  // a load inside section 1
    } else if (which == 1) {
      q.instructions[3].dst = (uint8_t)((q.instructions[3].dst + 1) % 32);
    } else {
      q.memory[0].bits ^= 1ull << (rng() % 52);  // golden input word
    }
    GoldenTrace qt;
    try {
      qt = run_golden(q, layout);
    } catch (const FatalError&) {
      continue;  // some mutations break the golden contract; irrelevant here
    }
    std::string key = instance_cache_key(q, layout, qt, 0, cfg);
    CHECK(key != base_key);
  }

  // config knobs are part of the key as well
  RunConfig alt = cfg;
  alt.seed += 1;
  CHECK(instance_cache_key(p, layout, t, 0, alt) != base_key);
  alt = cfg;
  alt.prune.enabled = true;
  CHECK(instance_cache_key(p, layout, t, 0, alt) != base_key);
}

TEST_CASE("corrupted stores are detected on hit") {
  TempDir tmp("corrupt");
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  CacheStore store(tmp.path / "store");
  RunConfig cfg = chain_config();
  cfg.mode = RunConfig::Mode::Compositional;
  analyze(p, layout, cfg, store);
  json manifest = store.inspect();
  REQUIRE(!manifest.empty());
  std::string key = manifest.begin().key();
  fs::path entry_path = tmp.path / "store" / (key + ".json");
  json entry = json::parse(read_file(entry_path));
  entry["golden_outputs"][0][0] =
      entry["golden_outputs"][0][0].get<uint64_t>() ^ 1;
  write_file_atomic(entry_path, entry.dump());
  CHECK_THROWS_AS(analyze(p, layout, cfg, store), FatalError);
}

TEST_CASE("adjust state persists across runs") {
  TempDir tmp("state");
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  CacheStore store(tmp.path / "store");
  RunConfig cfg = chain_config();
  cfg.p_adj = 2;
  AnalyzeResult first = analyze(p, layout, cfg, store);  // fresh: both
  CHECK(first.analysis == "both");
  AnalyzeResult second = analyze(p, layout, cfg, store);  // unchanged
  CHECK(second.analysis == "compositional");
  CHECK(second.executed_runs == 0);
  AdjustState st = store.load_state("chain", cfg.p_adj);
  REQUIRE(st.adjusted.count(0.9));
  REQUIRE(second.selections.size() == 2);
  CHECK(second.selections[0].pcs == first.selections[0].pcs);
}

TEST_CASE("mixed campaign agrees with separate campaigns") {
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  GoldenTrace t = run_golden(p, layout);
  std::set<int> fresh = {0, 1};
  MixedCampaignOutput mixed = run_mixed_campaign(p, layout, t, {}, {}, 2, fresh);
  CampaignResult mono = run_monolithic(p, layout, t, {}, {}, 1);
  REQUIRE(mixed.mono.sites.size() == mono.sites.size());
  for (size_t i = 0; i < mono.sites.size(); ++i) {
    CHECK(mixed.mono.records[i].tag == mono.records[i].tag);
    CHECK(mixed.mono.records[i].r == mono.records[i].r);
  }
  for (int k : fresh) {
    auto sites = enumerate_sites(t, SiteScope::of_instance(k), PruneConfig{});
    CampaignResult sec =
        run_campaign(p, layout, t, sites, SiteScope::of_instance(k), {}, 1);
    REQUIRE(mixed.section_results.at(k).records.size() == sec.records.size());
    for (size_t i = 0; i < sec.records.size(); ++i) {
      CHECK(mixed.section_results.at(k).records[i].tag == sec.records[i].tag);
      CHECK(mixed.section_results.at(k).records[i].r == sec.records[i].r);
    }
  }
  CHECK(mixed.shared_runs > 0);
  CHECK(mixed.executed_runs <= mono.sites.size());
}

TEST_CASE("reports are deterministic across jobs") {
  TempDir tmp("jobs");
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  RunConfig cfg = chain_config();
  cfg.jobs = 1;
  CacheStore s1(tmp.path / "s1");
  AnalyzeResult a = analyze(p, layout, cfg, s1);
  cfg.jobs = 8;
  CacheStore s2(tmp.path / "s2");
  AnalyzeResult b = analyze(p, layout, cfg, s2);
  CHECK(a.report.dump() == b.report.dump());
  CHECK(a.accounting.dump() == b.accounting.dump());
}

TEST_CASE("written report trees are stable") {
  TempDir tmp("write");
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  RunConfig cfg = chain_config();
  CacheStore store(tmp.path / "store");
  AnalyzeResult res = analyze(p, layout, cfg, store);
  fs::path dir = write_reports(res, tmp.path / "out");
  CHECK(fs::exists(dir / "report.json"));
  CHECK(fs::exists(dir / "accounting.json"));
  json reread = json::parse(read_file(dir / "report.json"));
  CHECK(reread["schema"] == 1);
}

TEST_CASE("config documents merge into run configs") {
  json doc = json::parse(R"({
    "epsilon": {"default": 0.5, "per_output": {"OUT": 0.25}},
    "targets": [0.5, 0.75],
    "prune": true,
    "R": 0.1,
    "sensitivity": {"phi_max": 0.02, "samples": 44, "pattern": "single"},
    "detector": {"enabled": true, "ranges": {"OUT": [0, 9]}},
    "mode": "both",
    "p_adj": 5,
    "jobs": 3,
    "seed": 99,
    "family": "x"
  })");
  RunConfig cfg;
  merge_config_json(cfg, doc);
  CHECK(cfg.thresholds.default_epsilon == 0.5);
  CHECK(cfg.thresholds.epsilon("OUT") == 0.25);
  CHECK(cfg.targets == std::vector<double>{0.5, 0.75});
  CHECK(cfg.prune.enabled);
  CHECK(cfg.R == 0.1);
  CHECK(cfg.sensitivity.samples == 44);
  CHECK(cfg.detector.enabled);
  REQUIRE(cfg.detector.ranges.size() == 1);
  CHECK(cfg.detector.ranges[0].region == "OUT");
  CHECK(cfg.mode == RunConfig::Mode::Both);
  CHECK(cfg.p_adj == 5);
  CHECK(cfg.seed == 99);
}

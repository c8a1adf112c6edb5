#include <catch_amalgamated.hpp>

#include "flipforge/sensitivity.hpp"
#include "helpers.hpp"

using namespace flipforge;

namespace {

struct Bench {
  Program p;
  SectionLayout layout;
  GoldenTrace trace;
};

Bench make(const char* src, const char* layout_json) {
  Bench b;
  b.p = parse_program(src);
  b.layout = parse_layout(json::parse(layout_json));
  b.trace = run_golden(b.p, b.layout);
  return b;
}

const char* kScaleSrc =
    ".memsize 8\n"
    ".mem 0 1 float 1.0\n"
    ".mem 4 1 float 0\n"
    ".roi 0 6\n"
    "  section-begin 1\n"
    "  const f1, 3.2\n"
    "  load f0, [0]\n"
    "  fmul f2, f0, f1\n"
    "  store [4], f2\n"
    "  section-end 1\n"
    "  halt\n";

const char* kSquareSrc =
    ".memsize 8\n"
    ".mem 0 1 float 2.0\n"
    ".mem 4 1 float 0\n"
    ".roi 0 5\n"
    "  section-begin 1\n"
    "  load f0, [0]\n"
    "  fmul f2, f0, f0\n"
    "  store [4], f2\n"
    "  section-end 1\n"
    "  halt\n";

const char* kScaleLayout = R"({
  "sections": [{"id": 1,
    "inputs":  [{"name":"IN","addr":0,"len":1,"bank":"float"}],
    "outputs": [{"name":"OUT","addr":4,"len":1,"bank":"float"}], "pad": 0}],
  "dataflow": [{"from": ["1@0","OUT"], "to": ["final","OUT"]}],
  "final_outputs": [{"name":"OUT","addr":4,"len":1,"bank":"float"}]
})";

}  // namespace

TEST_CASE("linear sections yield the exact gain") {
  Bench b = make(kScaleSrc, kScaleLayout);
  SensitivityConfig cfg;
  cfg.samples = 64;
  cfg.seed = 7;
  AffineSdcSpec spec = estimate_spec(b.p, b.layout, b.trace, 0, cfg);
  REQUIRE(spec.K.size() == 1);
  REQUIRE(spec.K[0].size() == 1);
  CHECK(spec.K[0][0] == Catch::Approx(3.2).epsilon(1e-9));
}

TEST_CASE("identity copy has K = 1") {
  const char* src =
      ".memsize 8\n"
      ".mem 0 1 float 2.5\n"
      ".mem 4 1 float 0\n"
      ".roi 0 5\n"
      "  section-begin 1\n"
      "  load f0, [0]\n"
      "  store [4], f0\n"
      "  section-end 1\n"
      "  halt\n";
  Bench b = make(src, kScaleLayout);
  SensitivityConfig cfg;
  cfg.samples = 16;
  AffineSdcSpec spec = estimate_spec(b.p, b.layout, b.trace, 0, cfg);
  CHECK(spec.K[0][0] == 1.0);
}

TEST_CASE("squaring at x=2 lands in [4, 4.01]") {
  // max over |phi| <= 0.01 of |(2+phi)^2 - 4| / |phi| = max |4 + phi| = 4.01
  Bench b = make(kSquareSrc, kScaleLayout);
  SensitivityConfig cfg;
  cfg.samples = 4096;
  cfg.seed = 11;
  AffineSdcSpec spec = estimate_spec(b.p, b.layout, b.trace, 0, cfg);
  CHECK(spec.K[0][0] >= 4.0 - 1e-9);
  CHECK(spec.K[0][0] <= 4.01 + 1e-9);
}

TEST_CASE("same seed reproduces K bit for bit") {
  Bench b = make(kScaleSrc, kScaleLayout);
  SensitivityConfig cfg;
  cfg.samples = 200;
  cfg.seed = 99;
  AffineSdcSpec a = estimate_spec(b.p, b.layout, b.trace, 0, cfg);
  AffineSdcSpec c = estimate_spec(b.p, b.layout, b.trace, 0, cfg);
  CHECK(std::bit_cast<uint64_t>(a.K[0][0]) == std::bit_cast<uint64_t>(c.K[0][0]));
}

TEST_CASE("doubling samples never decreases K") {
  Bench b = make(kSquareSrc, kScaleLayout);
  for (uint64_t n : {8u, 32u, 128u, 512u}) {
    SensitivityConfig small, big;
    small.samples = n;
    big.samples = 2 * n;
    small.seed = big.seed = 5;
    double ks = estimate_spec(b.p, b.layout, b.trace, 0, small).K[0][0];
    double kb = estimate_spec(b.p, b.layout, b.trace, 0, big).K[0][0];
    CHECK(kb >= ks);
  }
}

TEST_CASE("sampling underestimates the analytic bound") {
  const char* src =
      ".memsize 8\n"
      ".mem 0 1 float 2.0\n"
      ".mem 4 1 float 0\n"
      ".roi 0 6\n"
      "  section-begin 1\n"
      "  load f0, [0]\n"
      "  fmul f1, f0, f0\n"
      "  fmul f2, f1, f0\n"
      "  store [4], f2\n"
      "  section-end 1\n"
      "  halt\n";
  // o = x^3 at x=2: the worst ratio over the ball is ((2.01)^3-8)/0.01
  Bench b = make(src, kScaleLayout);
  SensitivityConfig cfg;
  cfg.samples = 2048;
  cfg.seed = 3;
  double k = estimate_spec(b.p, b.layout, b.trace, 0, cfg).K[0][0];
  CHECK(k <= 12.0601 + 1e-9);
  CHECK(k >= 12.0);
}

TEST_CASE("integer inputs perturb by at least one unit") {
  const char* src =
      ".memsize 8\n"
      ".mem 0 1 int 40\n"
      ".mem 4 1 int 0\n"
      ".roi 0 6\n"
      "  section-begin 1\n"
      "  load r0, [0]\n"
      "  const r1, 3\n"
      "  imul r2, r0, r1\n"
      "  store [4], r2\n"
      "  section-end 1\n"
      "  halt\n";
  const char* layout = R"({
    "sections": [{"id": 1,
      "inputs":  [{"name":"IN","addr":0,"len":1,"bank":"int"}],
      "outputs": [{"name":"OUT","addr":4,"len":1,"bank":"int"}], "pad": 0}],
    "dataflow": [{"from": ["1@0","OUT"], "to": ["final","OUT"]}],
    "final_outputs": [{"name":"OUT","addr":4,"len":1,"bank":"int"}]
  })";
  Bench b = make(src, layout);
  SensitivityConfig cfg;
  cfg.samples = 32;
  double k = estimate_spec(b.p, b.layout, b.trace, 0, cfg).K[0][0];
  CHECK(k == 3.0);
}

TEST_CASE("perturbation-unstable sections are rejected") {
  // any perturbed input diverts into a divide by zero
  const char* src =
      ".memsize 8\n"
      ".mem 0 1 int 7\n"
      ".mem 4 1 int 0\n"
      ".roi 0 10\n"
      "  section-begin 1\n"
      "  load r0, [0]\n"
      "  const r1, 7\n"
      "  icmp-eq r2, r0, r1\n"
      "  branch-if r2, ok\n"
      "  const r3, 0\n"
      "  idiv r4, r1, r3\n"
      "ok:\n"
      "  store [4], r1\n"
      "  section-end 1\n"
      "  halt\n";
  const char* layout = R"({
    "sections": [{"id": 1,
      "inputs":  [{"name":"IN","addr":0,"len":1,"bank":"int"}],
      "outputs": [{"name":"OUT","addr":4,"len":1,"bank":"int"}], "pad": 0}],
    "dataflow": [{"from": ["1@0","OUT"], "to": ["final","OUT"]}],
    "final_outputs": [{"name":"OUT","addr":4,"len":1,"bank":"int"}]
  })";
  Bench b = make(src, layout);
  SensitivityConfig cfg;
  cfg.samples = 20;
  CHECK_THROWS_AS(estimate_spec(b.p, b.layout, b.trace, 0, cfg), FatalError);
}

TEST_CASE("totalize carries dimensions and symbols") {
  Bench b = make(kScaleSrc, kScaleLayout);
  SensitivityConfig cfg;
  cfg.samples = 8;
  AffineSdcSpec spec = estimate_spec(b.p, b.layout, b.trace, 0, cfg);
  TotalSdcSpec total = totalize(spec);
  CHECK(total.instance == "1@0");
  REQUIRE(total.outputs.size() == 1);
  CHECK(total.symbol(0).str() == "phi[1@0,0]");
  json dumped = spec_to_json(spec);
  CHECK(dumped["symbols"][0] == "phi[1@0,0]");
}

TEST_CASE("config validation") {
  Bench b = make(kScaleSrc, kScaleLayout);
  SensitivityConfig cfg;
  cfg.phi_max = 0;
  CHECK_THROWS_AS(estimate_spec(b.p, b.layout, b.trace, 0, cfg), FatalError);
  cfg.phi_max = 0.01;
  cfg.samples = 0;
  CHECK_THROWS_AS(estimate_spec(b.p, b.layout, b.trace, 0, cfg), FatalError);
}

#include <catch_amalgamated.hpp>

#include "helpers.hpp"

using namespace flipforge;

TEST_CASE("minimal program parses") {
  Program p = parse_program("ldi r0, 5\nhalt\n");
  REQUIRE(p.instructions.size() == 2);
  CHECK(p.instructions[0].op == Opcode::Const);
  CHECK(p.instructions[0].imm == 5);
  CHECK(p.instructions[1].op == Opcode::Halt);
  CHECK(p.roi_begin == 0);
  CHECK(p.roi_end == 2);
}

TEST_CASE("const is the canonical mnemonic for ldi") {
  Program a = parse_program("ldi r3, -7\nhalt\n");
  Program b = parse_program("const r3, -7\nhalt\n");
  CHECK(a == b);
}

TEST_CASE("undefined label is rejected") {
  try {
    parse_program("jump nowhere\nhalt\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("undefined label") != std::string::npos);
  }
}

TEST_CASE("register index out of range") {
  try {
    parse_program("const r32, 1\nhalt\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("out of range") != std::string::npos);
  }
}

TEST_CASE("bank mixing is rejected") {
  CHECK_THROWS_AS(parse_program("iadd r0, r1, f2\nhalt\n"), ParseError);
  CHECK_THROWS_AS(parse_program("fadd f0, f1, r2\nhalt\n"), ParseError);
  CHECK_THROWS_AS(parse_program("mov r0, f1\nhalt\n"), ParseError);
}

TEST_CASE("memory operands parse in all forms") {
  Program p = parse_program(
      "load r1, [r2+8]\n"
      "load f1, [r2-3]\n"
      "store [r2], f1\n"
      "store [17], r1\n"
      "halt\n");
  CHECK(p.instructions[0].mem_base == 2);
  CHECK(p.instructions[0].mem_off == 8);
  CHECK(p.instructions[1].mem_off == -3);
  CHECK(p.instructions[2].mem_off == 0);
  CHECK(p.instructions[3].mem_base == -1);
  CHECK(p.instructions[3].mem_off == 17);
}

TEST_CASE("print/parse round trip is structurally identity") {
  for (const char* src : {fftest::kAddSource, fftest::kChainSource}) {
    Program p = parse_program(src);
    Program q = parse_program(print_program(p));
    CHECK(p == q);
    // printing is a fixpoint
    CHECK(print_program(p) == print_program(q));
  }
}

TEST_CASE("float immediates survive the round trip bit-exactly") {
  Program p = parse_program("const f0, 0.1\nconst f1, -3.25e-7\nhalt\n");
  Program q = parse_program(print_program(p));
  CHECK(p.instructions[0].imm == q.instructions[0].imm);
  CHECK(p.instructions[1].imm == q.instructions[1].imm);
}

TEST_CASE("section directive cross-checks markers") {
  const char* good =
      ".section 1 b e\n"
      "b:\n  section-begin 1\n  section-end 1\ne:\n"
      "halt\n";
  CHECK_THROWS(parse_program(good));  // e labels halt, not the end marker
  const char* fixed =
      ".section 1 b e\n"
      "b:\n  section-begin 1\ne:\n  section-end 1\n"
      "halt\n";
  CHECK_NOTHROW(parse_program(fixed));
}

TEST_CASE("layout json round trip") {
  SectionLayout layout = fftest::chain_layout();
  SectionLayout again = parse_layout(layout_to_json(layout));
  CHECK(layout_to_json(layout) == layout_to_json(again));
  REQUIRE(again.sections.size() == 2);
  CHECK(again.sections[0].inputs[0].name == "IN");
  CHECK(again.dataflow.size() == 2);
}

TEST_CASE("validate_layout flags overlapping outputs") {
  Program p = parse_program(fftest::kAddSource);
  SectionLayout layout = fftest::add_layout();
  layout.sections[0].outputs.push_back({"OUT2", 4, 1, Bank::Float});
  auto diags = validate_layout(p, layout);
  bool found = false;
  for (auto& d : diags) found |= d.find("region overlap") != std::string::npos;
  CHECK(found);
}

TEST_CASE("validate_layout flags backward dataflow edges") {
  Program p = parse_program(fftest::kChainSource);
  SectionLayout layout = fftest::chain_layout();
  layout.dataflow.push_back({"2@0", "OUT", "1@0", "IN"});
  // make the reversed edge name-resolvable
  auto diags = validate_layout(p, layout);
  bool found = false;
  for (auto& d : diags) found |= d.find("backward edge") != std::string::npos;
  CHECK(found);
}

TEST_CASE("clean layouts validate without diagnostics") {
  Program p = parse_program(fftest::kChainSource);
  auto diags = validate_layout(p, fftest::chain_layout());
  CHECK(diags.empty());
}

TEST_CASE("effective outputs widen by the pad") {
  SectionLayout layout;
  StaticSection sec;
  sec.id = 1;
  sec.outputs.push_back({"A", 8, 4, Bank::Int});
  sec.pad = 1;
  auto eff = effective_outputs(sec, layout, 64);
  REQUIRE(eff.size() == 1);
  CHECK(eff[0].addr == 7);
  CHECK(eff[0].end() == 13);
}

TEST_CASE("effective outputs include future use without padding them") {
  SectionLayout layout;
  layout.future_use[1].push_back({"F", 20, 2, Bank::Int});
  StaticSection sec;
  sec.id = 1;
  sec.outputs.push_back({"A", 8, 4, Bank::Int});
  sec.pad = 0;
  auto eff = effective_outputs(sec, layout, 64);
  REQUIRE(eff.size() == 2);
  CHECK(eff[0].addr == 8);
  CHECK(eff[0].end() == 12);
  CHECK(eff[1].addr == 20);
  CHECK(eff[1].end() == 22);
}

TEST_CASE("overlapping widened regions merge") {
  SectionLayout layout;
  StaticSection sec;
  sec.id = 1;
  sec.outputs.push_back({"A", 8, 4, Bank::Int});
  sec.outputs.push_back({"B", 13, 4, Bank::Int});
  sec.pad = 1;
  auto eff = effective_outputs(sec, layout, 64);
  // interval-union oracle over words
  std::set<uint32_t> words;
  for (uint32_t w = 7; w < 13; ++w) words.insert(w);
  for (uint32_t w = 12; w < 18; ++w) words.insert(w);
  std::set<uint32_t> covered;
  for (auto& r : eff)
    for (uint32_t w = r.addr; w < r.end(); ++w) covered.insert(w);
  CHECK(covered == words);
  CHECK(eff.size() == 1);
}

TEST_CASE("effective outputs are monotone in the pad") {
  SectionLayout layout;
  layout.future_use[1].push_back({"F", 30, 3, Bank::Int});
  for (uint32_t pad = 0; pad < 6; ++pad) {
    StaticSection a, b;
    a.id = b.id = 1;
    a.outputs.push_back({"A", 8, 4, Bank::Int});
    a.outputs.push_back({"B", 16, 2, Bank::Int});
    b.outputs = a.outputs;
    a.pad = pad;
    b.pad = pad + 1;
    auto cover = [&](const StaticSection& s) {
      std::set<uint32_t> words;
      for (auto& r : effective_outputs(s, layout, 40))
        for (uint32_t w = r.addr; w < r.end(); ++w) words.insert(w);
      return words;
    };
    auto small = cover(a), big = cover(b);
    CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
  }
}

TEST_CASE("clamping keeps effective outputs inside memory") {
  SectionLayout layout;
  StaticSection sec;
  sec.id = 1;
  sec.outputs.push_back({"A", 0, 4, Bank::Int});
  sec.pad = 3;
  auto eff = effective_outputs(sec, layout, 5);
  REQUIRE(eff.size() == 1);
  CHECK(eff[0].addr == 0);
  CHECK(eff[0].end() == 5);
}

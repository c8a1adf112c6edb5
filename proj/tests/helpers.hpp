#pragma once

#include <string>

#include "flipforge/interp.hpp"
#include "flipforge/ir.hpp"

namespace fftest {

using namespace flipforge;

// Single float section: OUT[0] = IN[0] + IN[1].
inline const char* kAddSource = R"(
.memsize 8
.mem 0 2 float 1.5 2.5
.mem 4 1 float 0
.roi 0 6
  section-begin 1
  load f0, [0]
  load f1, [1]
  fadd f2, f0, f1
  store [4], f2
  section-end 1
  halt
)";

inline SectionLayout add_layout() {
  json j = json::parse(R"({
    "sections": [{"id": 1, "name": "add",
      "inputs":  [{"name": "IN",  "addr": 0, "len": 2, "bank": "float"}],
      "outputs": [{"name": "OUT", "addr": 4, "len": 1, "bank": "float"}],
      "pad": 0}],
    "dataflow": [{"from": ["1@0", "OUT"], "to": ["final", "OUT"]}],
    "future_use": {},
    "final_outputs": [{"name": "OUT", "addr": 4, "len": 1, "bank": "float"}]
  })");
  return parse_layout(j);
}

// Two chained float sections with scalar gains: MID = 2*IN, OUT = 3*MID.
// The roi stretches over a small outer structure so untested glue exists.
inline const char* kChainSource = R"(
.memsize 12
.mem 0 1 float 1.25
.mem 2 1 float 0
.mem 4 1 float 0
.mem 8 1 float 2
.mem 9 1 float 3
.roi 0 12
  section-begin 1
  load f0, [0]
  load f1, [8]
  fmul f2, f0, f1
  store [2], f2
  section-end 1
  section-begin 2
  load f3, [2]
  load f4, [9]
  fmul f5, f3, f4
  store [4], f5
  section-end 2
  halt
)";

inline SectionLayout chain_layout() {
  json j = json::parse(R"({
    "sections": [
      {"id": 1, "name": "gain2",
       "inputs":  [{"name": "IN",  "addr": 0, "len": 1, "bank": "float"}],
       "outputs": [{"name": "MID", "addr": 2, "len": 1, "bank": "float"}],
       "pad": 0},
      {"id": 2, "name": "gain3",
       "inputs":  [{"name": "MID", "addr": 2, "len": 1, "bank": "float"}],
       "outputs": [{"name": "OUT", "addr": 4, "len": 1, "bank": "float"}],
       "pad": 0}],
    "dataflow": [
      {"from": ["1@0", "MID"], "to": ["2@0", "MID"]},
      {"from": ["2@0", "OUT"], "to": ["final", "OUT"]}],
    "future_use": {},
    "final_outputs": [{"name": "OUT", "addr": 4, "len": 1, "bank": "float"}]
  })");
  return parse_layout(j);
}

}  // namespace fftest

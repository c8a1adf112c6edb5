// Deterministic executor for the toy ISA: golden tracing, error-site
// enumeration, single-bitflip injection runs and outcome classification.
#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <thread>

#include "flipforge/ir.hpp"

namespace flipforge {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct MachineState {
  std::array<int64_t, kNumRegs> iregs{};
  std::array<double, kNumRegs> fregs{};
  std::vector<uint64_t> mem;
};

struct FatalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bare executor. Traps on out-of-bounds memory access, integer division by
// zero (or INT64_MIN / -1), and on running past the end of the program.
struct Cpu {
  const Program& prog;
  MachineState st;
  uint32_t pc = 0;
  bool halted = false;
  bool trapped = false;

  explicit Cpu(const Program& p) : prog(p), pc(p.entry) {
    st.mem.resize(p.memory.size());
    for (size_t i = 0; i < p.memory.size(); ++i) st.mem[i] = p.memory[i].bits;
  }

  bool running() const { return !halted && !trapped; }

  void step() {
    if (pc >= prog.instructions.size()) {
      trapped = true;
      return;
    }
    const Instruction& ins = prog.instructions[pc];
    uint32_t next = pc + 1;
    switch (ins.op) {
      case Opcode::Const:
        if (ins.bank == Bank::Int)
          st.iregs[ins.dst] = (int64_t)ins.imm;
        else
          st.fregs[ins.dst] = std::bit_cast<double>(ins.imm);
        break;
      case Opcode::Mov:
        if (ins.bank == Bank::Int)
          st.iregs[ins.dst] = st.iregs[ins.src1];
        else
          st.fregs[ins.dst] = st.fregs[ins.src1];
        break;
      case Opcode::IAdd:
        st.iregs[ins.dst] = (int64_t)((uint64_t)st.iregs[ins.src1] +
                                      (uint64_t)st.iregs[ins.src2]);
        break;
      case Opcode::ISub:
        st.iregs[ins.dst] = (int64_t)((uint64_t)st.iregs[ins.src1] -
                                      (uint64_t)st.iregs[ins.src2]);
        break;
      case Opcode::IMul:
        st.iregs[ins.dst] = (int64_t)((uint64_t)st.iregs[ins.src1] *
                                      (uint64_t)st.iregs[ins.src2]);
        break;
      case Opcode::IDiv: {
        int64_t a = st.iregs[ins.src1], b = st.iregs[ins.src2];
        if (b == 0 || (a == std::numeric_limits<int64_t>::min() && b == -1)) {
          trapped = true;
          return;
        }
        st.iregs[ins.dst] = a / b;
        break;
      }
      case Opcode::FAdd:
        st.fregs[ins.dst] = st.fregs[ins.src1] + st.fregs[ins.src2];
        break;
      case Opcode::FSub:
        st.fregs[ins.dst] = st.fregs[ins.src1] - st.fregs[ins.src2];
        break;
      case Opcode::FMul:
        st.fregs[ins.dst] = st.fregs[ins.src1] * st.fregs[ins.src2];
        break;
      case Opcode::FDiv:
        st.fregs[ins.dst] = st.fregs[ins.src1] / st.fregs[ins.src2];
        break;
      case Opcode::FNeg:
        st.fregs[ins.dst] = -st.fregs[ins.src1];
        break;
      case Opcode::ICmpLt:
        st.iregs[ins.dst] = st.iregs[ins.src1] < st.iregs[ins.src2] ? 1 : 0;
        break;
      case Opcode::ICmpLe:
        st.iregs[ins.dst] = st.iregs[ins.src1] <= st.iregs[ins.src2] ? 1 : 0;
        break;
      case Opcode::ICmpEq:
        st.iregs[ins.dst] = st.iregs[ins.src1] == st.iregs[ins.src2] ? 1 : 0;
        break;
      case Opcode::Load: {
        int64_t addr = ins.mem_off;
        if (ins.mem_base >= 0) addr += st.iregs[ins.mem_base];
        if (addr < 0 || (uint64_t)addr >= st.mem.size()) {
          trapped = true;
          return;
        }
        if (ins.bank == Bank::Int)
          st.iregs[ins.dst] = (int64_t)st.mem[addr];
        else
          st.fregs[ins.dst] = std::bit_cast<double>(st.mem[addr]);
        break;
      }
      case Opcode::Store: {
        int64_t addr = ins.mem_off;
        if (ins.mem_base >= 0) addr += st.iregs[ins.mem_base];
        if (addr < 0 || (uint64_t)addr >= st.mem.size()) {
          trapped = true;
          return;
        }
        st.mem[addr] = ins.bank == Bank::Int
                           ? (uint64_t)st.iregs[ins.src1]
                           : std::bit_cast<uint64_t>(st.fregs[ins.src1]);
        break;
      }
      case Opcode::Jump:
        next = (uint32_t)ins.target;
        break;
      case Opcode::BranchIf:
        if (st.iregs[ins.src1] != 0) next = (uint32_t)ins.target;
        break;
      case Opcode::SectionBegin:
      case Opcode::SectionEnd:
        break;
      case Opcode::Halt:
        halted = true;
        return;
    }
    pc = next;
  }
};

struct TraceSlot {
  Slot slot;
  Bank bank;
  uint8_t reg;
  uint64_t bits_before;
};

struct TraceEntry {
  uint32_t pc = 0;
  int32_t instance = -1;  // index into GoldenTrace::instances, -1 = untested
  uint8_t nslots = 0;
  TraceSlot slots[3];
};

struct InstanceInfo {
  uint64_t section_id = 0;
  uint32_t ordinal = 0;
  uint64_t begin_dyn = 0;  // dyn index of the begin marker
  uint64_t end_dyn = 0;    // dyn index of the end marker
  int begin_pc = -1;
  int end_pc = -1;
  MachineState entry_state;
  std::vector<MemRegion> eff_outputs;
  std::vector<std::vector<uint64_t>> golden_outputs;  // bits per eff region
  std::vector<std::vector<uint64_t>> golden_inputs;   // bits per declared input

  InstanceRef ref() const {
    InstanceRef r;
    r.section_id = section_id;
    r.ordinal = ordinal;
    return r;
  }
  uint64_t golden_steps() const { return end_dyn - begin_dyn + 1; }
};

struct GoldenTrace {
  std::vector<TraceEntry> entries;  // roi instructions, in execution order
  std::vector<InstanceInfo> instances;
  std::vector<std::vector<uint64_t>> final_outputs;  // bits per final region
  uint64_t total_steps_all = 0;  // every instruction executed, roi or not
  std::map<uint32_t, uint64_t> pc_dyn_count;

  uint64_t roi_dyn_count() const { return entries.size(); }
};

inline std::vector<uint64_t> read_region_bits(const std::vector<uint64_t>& mem,
                                              const MemRegion& r) {
  std::vector<uint64_t> out(r.len);
  for (uint32_t i = 0; i < r.len; ++i) out[i] = mem[r.addr + i];
  return out;
}

// Executes the program on its golden input, resolving section instances and
// capturing per-instance entry snapshots and golden outputs. Enforces that
// every roi store lands inside the current section's effective outputs.
inline GoldenTrace run_golden(const Program& p, const SectionLayout& layout,
                              uint64_t step_cap = 50'000'000) {
  GoldenTrace trace;
  Cpu cpu(p);
  uint32_t memsize = (uint32_t)p.memory.size();

  std::map<uint64_t, std::vector<MemRegion>> eff_by_section;
  for (auto& s : layout.sections)
    eff_by_section[s.id] = effective_outputs(s, layout, memsize);

  std::map<uint64_t, uint32_t> ordinal_counter;
  int current = -1;  // open instance index

  while (cpu.running()) {
    if (trace.total_steps_all++ > step_cap)
      throw FatalError("invalid benchmark: golden run exceeds step cap");
    uint32_t pc = cpu.pc;
    const Instruction& ins = p.instructions[pc];
    bool roi = p.in_roi(pc);

    if (roi && ins.op == Opcode::SectionBegin) {
      if (current >= 0)
        throw FatalError("invalid benchmark: nested section-begin at pc " +
                         std::to_string(pc));
      const StaticSection* sec = layout.find(ins.imm);
      if (!sec)
        throw FatalError("invalid benchmark: undeclared section " +
                         std::to_string(ins.imm));
      InstanceInfo info;
      info.section_id = ins.imm;
      info.ordinal = ordinal_counter[ins.imm]++;
      info.begin_dyn = trace.entries.size();
      info.begin_pc = (int)pc;
      info.entry_state = cpu.st;
      info.eff_outputs = eff_by_section.at(ins.imm);
      for (auto& r : sec->inputs)
        info.golden_inputs.push_back(read_region_bits(cpu.st.mem, r));
      current = (int)trace.instances.size();
      trace.instances.push_back(std::move(info));
    }

    if (roi) {
      TraceEntry e;
      e.pc = pc;
      e.instance = current;
      auto ops = reg_operands(ins);
      e.nslots = (uint8_t)ops.size();
      for (size_t i = 0; i < ops.size(); ++i) {
        uint64_t bits = ops[i].bank == Bank::Int
                            ? (uint64_t)cpu.st.iregs[ops[i].reg]
                            : std::bit_cast<uint64_t>(cpu.st.fregs[ops[i].reg]);
        e.slots[i] = {ops[i].slot, ops[i].bank, ops[i].reg, bits};
      }
      trace.entries.push_back(e);
      trace.pc_dyn_count[pc]++;

      if (ins.op == Opcode::Store) {
        int64_t addr = ins.mem_off;
        if (ins.mem_base >= 0) addr += cpu.st.iregs[ins.mem_base];
        if (current < 0)
          throw FatalError("layout violation: store at pc " + std::to_string(pc) +
                           " outside any section");
        bool inside = false;
        for (auto& r : trace.instances[current].eff_outputs)
          inside |= addr >= 0 && (uint64_t)addr >= r.addr &&
                    (uint64_t)addr < r.end();
        if (!inside)
          throw FatalError("layout violation: store at pc " + std::to_string(pc) +
                           " to word " + std::to_string(addr) +
                           " outside effective outputs of section " +
                           std::to_string(trace.instances[current].section_id));
      }
    }

    if (roi && ins.op == Opcode::SectionEnd) {
      if (current < 0 || trace.instances[current].section_id != ins.imm)
        throw FatalError("invalid benchmark: unmatched section-end at pc " +
                         std::to_string(pc));
      InstanceInfo& info = trace.instances[current];
      info.end_dyn = trace.entries.size() - 1;
      info.end_pc = (int)pc;
      for (auto& r : info.eff_outputs)
        info.golden_outputs.push_back(read_region_bits(cpu.st.mem, r));
      current = -1;
    }

    cpu.step();
  }
  if (cpu.trapped) throw FatalError("invalid benchmark: golden run trapped");
  if (current >= 0)
    throw FatalError("invalid benchmark: section left open at halt");
  for (auto& r : layout.final_outputs)
    trace.final_outputs.push_back(read_region_bits(cpu.st.mem, r));
  return trace;
}

enum class PruneStatus : uint8_t { Individual, Pilot, Pruned };

inline const char* prune_name(PruneStatus s) {
  switch (s) {
    case PruneStatus::Individual: return "individual";
    case PruneStatus::Pilot: return "pilot";
    case PruneStatus::Pruned: return "pruned";
  }
  return "?";
}

struct ErrorSite {
  uint64_t id = 0;  // dyn * 192 + slot * 64 + bit; stable across scopes
  uint64_t dyn = 0;
  uint32_t pc = 0;
  Slot slot = Slot::Src0;
  Bank bank = Bank::Int;
  uint8_t reg = 0;
  uint8_t bit = 0;
  PruneStatus prune = PruneStatus::Individual;
  uint64_t pilot_id = 0;
  double p = 0;        // probability weight within the enumeration scope
  uint32_t units = 1;  // integral weight units (uniform: 1)
};

inline uint64_t site_id_of(uint64_t dyn, Slot slot, uint8_t bit) {
  return dyn * 192 + (uint64_t)slot * 64 + bit;
}

struct PruneConfig {
  bool enabled = false;
};

struct SiteScope {
  enum Kind { Instance, WholeRoi, Untested } kind = WholeRoi;
  int instance = -1;

  static SiteScope whole_roi() { return {WholeRoi, -1}; }
  static SiteScope untested() { return {Untested, -1}; }
  static SiteScope of_instance(int idx) { return {Instance, idx}; }
};

// One site per (dynamic roi instruction in scope, register operand, bit).
// Instructions without register operands contribute nothing. With pruning,
// sites sharing (pc, slot, bit, pre-instruction operand value) form a class
// whose earliest member is the pilot.
inline std::vector<ErrorSite> enumerate_sites(
    const GoldenTrace& trace, SiteScope scope, const PruneConfig& prune,
    const std::map<uint32_t, uint32_t>* pc_units = nullptr) {
  std::vector<ErrorSite> sites;
  uint64_t lo = 0, hi = trace.entries.size();
  if (scope.kind == SiteScope::Instance) {
    const auto& inst = trace.instances.at(scope.instance);
    lo = inst.begin_dyn;
    hi = inst.end_dyn + 1;
  }
  for (uint64_t dyn = lo; dyn < hi; ++dyn) {
    const TraceEntry& e = trace.entries[dyn];
    if (scope.kind == SiteScope::Instance && e.instance != scope.instance)
      continue;
    if (scope.kind == SiteScope::Untested && e.instance != -1) continue;
    for (uint8_t s = 0; s < e.nslots; ++s) {
      const TraceSlot& ts = e.slots[s];
      for (uint16_t bit = 0; bit < 64; ++bit) {
        ErrorSite site;
        site.dyn = dyn;
        site.pc = e.pc;
        site.slot = ts.slot;
        site.bank = ts.bank;
        site.reg = ts.reg;
        site.bit = (uint8_t)bit;
        site.id = site_id_of(dyn, ts.slot, (uint8_t)bit);
        if (pc_units) {
          auto it = pc_units->find(e.pc);
          site.units = it == pc_units->end() ? 1 : it->second;
        }
        sites.push_back(site);
      }
    }
  }
  uint64_t total_units = 0;
  for (auto& s : sites) total_units += s.units;
  for (auto& s : sites)
    s.p = total_units ? (double)s.units / (double)total_units : 0.0;

  if (prune.enabled) {
    struct ClassKey {
      uint32_t pc;
      Slot slot;
      uint8_t bit;
      uint64_t value;
      bool operator<(const ClassKey& o) const {
        return std::tie(pc, slot, bit, value) <
               std::tie(o.pc, o.slot, o.bit, o.value);
      }
    };
    std::map<ClassKey, uint64_t> pilots;  // key -> pilot site id
    for (auto& s : sites) {
      const TraceEntry& e = trace.entries[s.dyn];
      uint64_t value = 0;
      for (uint8_t k = 0; k < e.nslots; ++k)
        if (e.slots[k].slot == s.slot) value = e.slots[k].bits_before;
      ClassKey key{s.pc, s.slot, s.bit, value};
      auto it = pilots.find(key);
      if (it == pilots.end()) {
        pilots[key] = s.id;
        s.prune = PruneStatus::Pilot;
      } else {
        s.prune = PruneStatus::Pruned;
        s.pilot_id = it->second;
      }
    }
  }
  return sites;
}

enum class OutcomeTag : uint8_t { Masked, Crash, Timeout, Detected, Sdc };

inline const char* outcome_name(OutcomeTag t) {
  switch (t) {
    case OutcomeTag::Masked: return "masked";
    case OutcomeTag::Crash: return "crash";
    case OutcomeTag::Timeout: return "timeout";
    case OutcomeTag::Detected: return "detected";
    case OutcomeTag::Sdc: return "sdc";
  }
  return "?";
}

struct OutcomeRecord {
  uint64_t site_id = 0;
  OutcomeTag tag = OutcomeTag::Masked;
  std::vector<double> r;  // per scope output; empty for crash/timeout/detected
  bool inferred = false;

  bool detected_like() const {
    return tag == OutcomeTag::Crash || tag == OutcomeTag::Timeout ||
           tag == OutcomeTag::Detected;
  }
};

struct DetectorRange {
  std::string region;
  double lo = 0;
  double hi = 0;
};

struct DetectorConfig {
  bool enabled = false;
  std::vector<DetectorRange> ranges;
  bool require_finite = true;
};

struct ResolvedDetectorRange {
  MemRegion region;
  double lo, hi;
};

struct ResolvedDetector {
  bool enabled = false;
  bool require_finite = true;
  std::vector<ResolvedDetectorRange> ranges;
};

inline ResolvedDetector resolve_detector(const DetectorConfig& cfg,
                                         const SectionLayout& layout) {
  ResolvedDetector det;
  det.enabled = cfg.enabled;
  det.require_finite = cfg.require_finite;
  if (!cfg.enabled) return det;
  auto find_region = [&](const std::string& name) -> const MemRegion* {
    for (auto& r : layout.final_outputs)
      if (r.name == name) return &r;
    for (auto& s : layout.sections) {
      for (auto& r : s.outputs)
        if (r.name == name) return &r;
      for (auto& r : s.inputs)
        if (r.name == name) return &r;
    }
    for (auto& [id, regs] : layout.future_use)
      for (auto& r : regs)
        if (r.name == name) return &r;
    return nullptr;
  };
  for (auto& rng : cfg.ranges) {
    const MemRegion* r = find_region(rng.region);
    if (!r)
      throw FatalError("detector references unknown region '" + rng.region + "'");
    det.ranges.push_back({*r, rng.lo, rng.hi});
  }
  return det;
}

// SDC magnitude of one word: float bank compares as binary64 values (any
// non-finite faulty value against a finite golden one is +inf); int bank is
// the exact unsigned 64-bit magnitude of the difference.
inline double word_sdc(uint64_t golden, uint64_t faulty, Bank bank) {
  if (bank == Bank::Float) {
    double g = std::bit_cast<double>(golden);
    double f = std::bit_cast<double>(faulty);
    if (golden == faulty) return 0.0;
    if (!std::isfinite(g) || !std::isfinite(f)) {
      if (g == f) return 0.0;  // e.g. two +inf encodings cannot differ here
      return kInf;
    }
    return std::fabs(g - f);
  }
  int64_t g = (int64_t)golden, f = (int64_t)faulty;
  uint64_t mag = g >= f ? (uint64_t)g - (uint64_t)f : (uint64_t)f - (uint64_t)g;
  return (double)mag;
}

namespace detail {

inline bool detector_fires(const ResolvedDetector& det,
                           const std::vector<uint64_t>& mem,
                           const std::vector<MemRegion>& outputs) {
  if (!det.enabled) return false;
  if (det.require_finite)
    for (auto& r : outputs) {
      if (r.bank != Bank::Float) continue;
      for (uint32_t i = 0; i < r.len; ++i)
        if (!std::isfinite(std::bit_cast<double>(mem[r.addr + i]))) return true;
    }
  for (auto& rr : det.ranges)
    for (uint32_t i = 0; i < rr.region.len; ++i) {
      uint64_t bits = mem[rr.region.addr + i];
      double v = rr.region.bank == Bank::Float ? std::bit_cast<double>(bits)
                                               : (double)(int64_t)bits;
      if (!(v >= rr.lo && v <= rr.hi)) return true;
    }
  return false;
}

inline OutcomeRecord classify_outputs(
    uint64_t site_id, const std::vector<uint64_t>& mem,
    const std::vector<MemRegion>& outputs,
    const std::vector<std::vector<uint64_t>>& golden,
    const ResolvedDetector& det) {
  OutcomeRecord rec;
  rec.site_id = site_id;
  if (detector_fires(det, mem, outputs)) {
    rec.tag = OutcomeTag::Detected;
    return rec;
  }
  bool all_zero = true;
  rec.r.resize(outputs.size(), 0.0);
  for (size_t k = 0; k < outputs.size(); ++k) {
    const MemRegion& reg = outputs[k];
    double worst = 0.0;
    for (uint32_t i = 0; i < reg.len; ++i)
      worst = std::max(worst, word_sdc(golden[k][i], mem[reg.addr + i], reg.bank));
    rec.r[k] = worst;
    all_zero &= worst == 0.0;
  }
  rec.tag = all_zero ? OutcomeTag::Masked : OutcomeTag::Sdc;
  return rec;
}

inline void flip_reg(MachineState& st, Bank bank, uint8_t reg, uint8_t bit) {
  if (bank == Bank::Int) {
    st.iregs[reg] = (int64_t)((uint64_t)st.iregs[reg] ^ (1ull << bit));
  } else {
    uint64_t bits = std::bit_cast<uint64_t>(st.fregs[reg]) ^ (1ull << bit);
    st.fregs[reg] = std::bit_cast<double>(bits);
  }
}

inline uint64_t read_reg_bits(const MachineState& st, Bank bank, uint8_t reg) {
  return bank == Bank::Int ? (uint64_t)st.iregs[reg]
                           : std::bit_cast<uint64_t>(st.fregs[reg]);
}

inline void write_reg_bits(MachineState& st, Bank bank, uint8_t reg,
                           uint64_t bits) {
  if (bank == Bank::Int)
    st.iregs[reg] = (int64_t)bits;
  else
    st.fregs[reg] = std::bit_cast<double>(bits);
}

// Executes one instruction with the site's bitflip applied. Source flips
// corrupt the consumed value only: the register is restored afterwards
// unless the instruction overwrote it. Destination flips corrupt the result
// after writeback.
inline void step_with_flip(Cpu& cpu, const ErrorSite& site) {
  const Instruction& ins = cpu.prog.instructions[cpu.pc];
  bool writes_site_reg =
      ins.has_dst && ins.bank == site.bank && ins.dst == site.reg;
  if (site.slot == Slot::Dst) {
    cpu.step();
    if (cpu.running()) flip_reg(cpu.st, site.bank, site.reg, site.bit);
    return;
  }
  uint64_t original = read_reg_bits(cpu.st, site.bank, site.reg);
  flip_reg(cpu.st, site.bank, site.reg, site.bit);
  cpu.step();
  if (!writes_site_reg && !cpu.trapped)
    write_reg_bits(cpu.st, site.bank, site.reg, original);
}

}  // namespace detail

// Continuation scopes of an injection run.
struct ScopeTargets {
  // section scope (optional)
  bool want_section = false;
  int section_end_pc = -1;
  uint64_t section_pre_steps = 0;  // scope steps already executed golden
  uint64_t section_golden_steps = 0;
  const std::vector<MemRegion>* section_outputs = nullptr;
  const std::vector<std::vector<uint64_t>>* section_golden = nullptr;
  // whole-roi scope (optional)
  bool want_final = false;
  uint64_t roi_pre_steps = 0;
  uint64_t roi_golden_steps = 0;
  const std::vector<MemRegion>* final_outputs = nullptr;
  const std::vector<std::vector<uint64_t>>* final_golden = nullptr;
};

struct InjectionOutcome {
  OutcomeRecord section;
  OutcomeRecord final;
  bool has_section = false;
  bool has_final = false;
};

// Continues execution after the flip until every requested scope resolves.
// The 5x rule compares each scope's dynamic instruction count against its
// golden count; a hard cap guards runaway loops that never touch the roi.
inline InjectionOutcome run_scopes(Cpu& cpu, const ErrorSite& site,
                                   const ScopeTargets& t,
                                   const ResolvedDetector& det,
                                   uint64_t hard_cap) {
  InjectionOutcome out;
  out.has_section = t.want_section;
  out.has_final = t.want_final;
  bool section_open = t.want_section;
  bool final_open = t.want_final;
  uint64_t section_steps = t.section_pre_steps;
  uint64_t roi_steps = t.roi_pre_steps;
  uint64_t total_steps = 0;

  detail::step_with_flip(cpu, site);
  ++total_steps;
  if (section_open) ++section_steps;
  // the injected instruction is a roi instruction by construction
  ++roi_steps;

  auto finish_all = [&](OutcomeTag tag) {
    if (section_open) {
      out.section.site_id = site.id;
      out.section.tag = tag;
      section_open = false;
    }
    if (final_open) {
      out.final.site_id = site.id;
      out.final.tag = tag;
      final_open = false;
    }
  };

  while (section_open || final_open) {
    if (cpu.trapped) {
      finish_all(OutcomeTag::Crash);
      break;
    }
    if (section_open) {
      bool at_end = !cpu.halted && (int)cpu.pc == t.section_end_pc;
      if (at_end || cpu.halted) {
        out.section = detail::classify_outputs(site.id, cpu.st.mem,
                                               *t.section_outputs,
                                               *t.section_golden, det);
        section_open = false;
      } else if (section_steps > 5 * t.section_golden_steps) {
        out.section.site_id = site.id;
        out.section.tag = OutcomeTag::Timeout;
        section_open = false;
      }
    }
    if (final_open) {
      if (cpu.halted) {
        out.final = detail::classify_outputs(site.id, cpu.st.mem,
                                             *t.final_outputs, *t.final_golden,
                                             det);
        final_open = false;
      } else if (roi_steps > 5 * t.roi_golden_steps) {
        out.final.site_id = site.id;
        out.final.tag = OutcomeTag::Timeout;
        final_open = false;
      }
    }
    if (!section_open && !final_open) break;
    if (cpu.halted) {
      // only a section scope can remain open here, and it was closed above
      break;
    }
    if (total_steps > hard_cap) {
      finish_all(OutcomeTag::Timeout);
      break;
    }
    bool roi_pc = cpu.prog.in_roi(cpu.pc);
    cpu.step();
    ++total_steps;
    if (section_open) ++section_steps;
    if (roi_pc) ++roi_steps;
  }
  return out;
}

inline ScopeTargets section_scope_targets(const GoldenTrace& trace,
                                          const InstanceInfo& inst,
                                          uint64_t site_dyn) {
  ScopeTargets t;
  t.want_section = true;
  t.section_end_pc = inst.end_pc;
  t.section_pre_steps = site_dyn - inst.begin_dyn;
  t.section_golden_steps = inst.golden_steps();
  t.section_outputs = &inst.eff_outputs;
  t.section_golden = &inst.golden_outputs;
  (void)trace;
  return t;
}

inline void add_final_scope(ScopeTargets& t, const GoldenTrace& trace,
                            const SectionLayout& layout, uint64_t site_dyn) {
  t.want_final = true;
  t.roi_pre_steps = site_dyn;
  t.roi_golden_steps = trace.roi_dyn_count();
  t.final_outputs = &layout.final_outputs;
  t.final_golden = &trace.final_outputs;
}

// Replays from program start until the roi-dyn counter reaches `dyn` (the
// state immediately before executing that roi instruction).
inline void replay_to(Cpu& cpu, uint64_t dyn, uint64_t step_cap) {
  uint64_t seen = 0;
  uint64_t steps = 0;
  while (cpu.running()) {
    if (cpu.prog.in_roi(cpu.pc)) {
      if (seen == dyn) return;
      ++seen;
    }
    cpu.step();
    if (++steps > step_cap)
      throw FatalError("replay_to: step cap exceeded");
  }
  throw FatalError("replay_to: trace/site mismatch (dyn index unreachable)");
}

inline uint64_t default_hard_cap(const GoldenTrace& trace) {
  return 5 * trace.total_steps_all + 100'000;
}

// Re-executes from program start, flips the site's bit, and classifies the
// outcome against the scope's golden outputs.
inline OutcomeRecord inject_and_run(const Program& p, const SectionLayout& layout,
                                    const GoldenTrace& trace,
                                    const ErrorSite& site, SiteScope scope,
                                    const DetectorConfig& detector) {
  ResolvedDetector det = resolve_detector(detector, layout);
  Cpu cpu(p);
  replay_to(cpu, site.dyn, default_hard_cap(trace));
  ScopeTargets t;
  if (scope.kind == SiteScope::Instance) {
    const auto& inst = trace.instances.at(scope.instance);
    t = section_scope_targets(trace, inst, site.dyn);
  } else {
    add_final_scope(t, trace, layout, site.dyn);
  }
  InjectionOutcome out = run_scopes(cpu, site, t, det, default_hard_cap(trace));
  return scope.kind == SiteScope::Instance ? out.section : out.final;
}

struct CampaignResult {
  std::vector<ErrorSite> sites;          // ordered by site id
  std::vector<OutcomeRecord> records;    // aligned with sites
  uint64_t runs_executed = 0;            // pilots + individually injected

  const OutcomeRecord* find(uint64_t site_id) const {
    auto it = std::lower_bound(sites.begin(), sites.end(), site_id,
                               [](const ErrorSite& s, uint64_t id) {
                                 return s.id < id;
                               });
    if (it == sites.end() || it->id != site_id) return nullptr;
    return &records[it - sites.begin()];
  }
};

// Dual campaign record pair: outcome at the owning section's boundary plus
// the outcome at program end from the same replay.
struct DualCampaignResult {
  std::vector<ErrorSite> sites;
  std::vector<OutcomeRecord> section_records;  // invalid for untested sites
  std::vector<OutcomeRecord> final_records;
  std::vector<uint8_t> has_section;
  uint64_t runs_executed = 0;
};

namespace detail {

struct SiteGroup {
  uint64_t dyn;
  size_t first;
  size_t count;
};

template <typename RunSite>
inline void parallel_campaign(const Program& p, const GoldenTrace& trace,
                              const std::vector<ErrorSite>& sites,
                              const std::vector<size_t>& to_run, int jobs,
                              RunSite&& run_site) {
  std::vector<SiteGroup> groups;
  for (size_t i = 0; i < to_run.size();) {
    size_t j = i;
    while (j < to_run.size() &&
           sites[to_run[j]].dyn == sites[to_run[i]].dyn)
      ++j;
    groups.push_back({sites[to_run[i]].dyn, i, j - i});
    i = j;
  }
  if (jobs < 1) jobs = 1;
  size_t nworkers = std::min<size_t>(jobs, std::max<size_t>(groups.size(), 1));

  auto worker = [&](size_t w) {
    size_t per = (groups.size() + nworkers - 1) / nworkers;
    size_t gbegin = w * per;
    size_t gend = std::min(groups.size(), gbegin + per);
    if (gbegin >= gend) return;
    Cpu cpu(p);
    uint64_t cap = default_hard_cap(trace);
    replay_to(cpu, groups[gbegin].dyn, cap);
    for (size_t g = gbegin; g < gend; ++g) {
      if (g > gbegin) {
        // advance golden execution to this group's dyn index
        uint64_t seen = groups[g - 1].dyn;
        while (true) {
          if (cpu.prog.in_roi(cpu.pc)) {
            if (seen == groups[g].dyn) break;
            ++seen;
          }
          cpu.step();
        }
      }
      MachineState snapshot = cpu.st;
      uint32_t snap_pc = cpu.pc;
      for (size_t k = 0; k < groups[g].count; ++k) {
        size_t idx = to_run[groups[g].first + k];
        Cpu run(p);
        run.st = snapshot;
        run.pc = snap_pc;
        run_site(idx, run);
      }
      cpu.st = std::move(snapshot);
      cpu.pc = snap_pc;
    }
  };

  if (nworkers <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> threads;
    for (size_t w = 0; w < nworkers; ++w) threads.emplace_back(worker, w);
    for (auto& th : threads) th.join();
  }
}

}  // namespace detail

// Injects every pilot/individual site of the scope; pruned sites receive a
// copy of their pilot's record flagged as inferred. Deterministic across
// runs and worker counts.
inline CampaignResult run_campaign(const Program& p, const SectionLayout& layout,
                                   const GoldenTrace& trace,
                                   std::vector<ErrorSite> sites, SiteScope scope,
                                   const DetectorConfig& detector, int jobs = 1) {
  CampaignResult res;
  res.records.resize(sites.size());
  ResolvedDetector det = resolve_detector(detector, layout);
  uint64_t cap = default_hard_cap(trace);

  std::vector<size_t> to_run;
  for (size_t i = 0; i < sites.size(); ++i)
    if (sites[i].prune != PruneStatus::Pruned) to_run.push_back(i);

  detail::parallel_campaign(
      p, trace, sites, to_run, jobs, [&](size_t idx, Cpu& cpu) {
        const ErrorSite& site = sites[idx];
        ScopeTargets t;
        if (scope.kind == SiteScope::Instance) {
          const auto& inst = trace.instances.at(scope.instance);
          t = section_scope_targets(trace, inst, site.dyn);
        } else {
          add_final_scope(t, trace, layout, site.dyn);
        }
        InjectionOutcome out = run_scopes(cpu, site, t, det, cap);
        res.records[idx] =
            scope.kind == SiteScope::Instance ? out.section : out.final;
      });

  res.runs_executed = to_run.size();
  // propagate pilot outcomes onto pruned sites
  std::map<uint64_t, size_t> index_of;
  for (size_t i = 0; i < sites.size(); ++i) index_of[sites[i].id] = i;
  for (size_t i = 0; i < sites.size(); ++i) {
    if (sites[i].prune != PruneStatus::Pruned) continue;
    const OutcomeRecord& pilot = res.records[index_of.at(sites[i].pilot_id)];
    OutcomeRecord rec = pilot;
    rec.site_id = sites[i].id;
    rec.inferred = true;
    res.records[i] = rec;
  }
  res.sites = std::move(sites);
  return res;
}

// Shared-replay campaign over whole-roi sites: each injection classifies
// both the owning section's boundary outputs and the final outputs in one
// replay. Untested sites only get the final record.
inline DualCampaignResult run_dual_campaign(const Program& p,
                                            const SectionLayout& layout,
                                            const GoldenTrace& trace,
                                            std::vector<ErrorSite> sites,
                                            const DetectorConfig& detector,
                                            int jobs = 1) {
  DualCampaignResult res;
  res.section_records.resize(sites.size());
  res.final_records.resize(sites.size());
  res.has_section.assign(sites.size(), 0);
  ResolvedDetector det = resolve_detector(detector, layout);
  uint64_t cap = default_hard_cap(trace);

  std::vector<size_t> to_run;
  for (size_t i = 0; i < sites.size(); ++i)
    if (sites[i].prune != PruneStatus::Pruned) to_run.push_back(i);

  detail::parallel_campaign(
      p, trace, sites, to_run, jobs, [&](size_t idx, Cpu& cpu) {
        const ErrorSite& site = sites[idx];
        int inst_idx = trace.entries[site.dyn].instance;
        ScopeTargets t;
        if (inst_idx >= 0)
          t = section_scope_targets(trace, trace.instances[inst_idx], site.dyn);
        add_final_scope(t, trace, layout, site.dyn);
        InjectionOutcome out = run_scopes(cpu, site, t, det, cap);
        if (inst_idx >= 0) {
          res.section_records[idx] = out.section;
          res.has_section[idx] = 1;
        }
        res.final_records[idx] = out.final;
      });

  res.runs_executed = to_run.size();
  std::map<uint64_t, size_t> index_of;
  for (size_t i = 0; i < sites.size(); ++i) index_of[sites[i].id] = i;
  for (size_t i = 0; i < sites.size(); ++i) {
    if (sites[i].prune != PruneStatus::Pruned) continue;
    size_t pi = index_of.at(sites[i].pilot_id);
    res.section_records[i] = res.section_records[pi];
    res.section_records[i].site_id = sites[i].id;
    res.section_records[i].inferred = true;
    res.has_section[i] = res.has_section[pi];
    res.final_records[i] = res.final_records[pi];
    res.final_records[i].site_id = sites[i].id;
    res.final_records[i].inferred = true;
  }
  res.sites = std::move(sites);
  return res;
}

inline json outcome_to_json(const ErrorSite& site, const OutcomeRecord& rec) {
  json j;
  j["site"] = {{"id", site.id},     {"dyn", site.dyn},
               {"pc", site.pc},     {"slot", slot_name(site.slot)},
               {"reg", site.reg},   {"bit", site.bit},
               {"prune", prune_name(site.prune)}};
  j["outcome"] = outcome_name(rec.tag);
  if (rec.tag == OutcomeTag::Masked || rec.tag == OutcomeTag::Sdc) {
    json arr = json::array();
    for (double v : rec.r) {
      if (std::isinf(v))
        arr.push_back("inf");
      else
        arr.push_back(v);
    }
    j["r"] = std::move(arr);
  }
  if (rec.inferred) j["inferred"] = true;
  return j;
}

// JSON lines, one record per site.
inline std::string dump_outcomes(const CampaignResult& res) {
  std::string out;
  for (size_t i = 0; i < res.sites.size(); ++i) {
    out += outcome_to_json(res.sites[i], res.records[i]).dump();
    out += '\n';
  }
  return out;
}

enum class SectionRunStatus { Ok, Trap, Timeout };

// Runs a section body from an entry snapshot to its end marker; used by the
// sensitivity analysis. No tracing, no flips.
inline SectionRunStatus run_section_plain(const Program& p,
                                          MachineState& state, int begin_pc,
                                          int end_pc, uint64_t golden_steps,
                                          uint64_t hard_cap) {
  Cpu cpu(p);
  cpu.st = std::move(state);
  cpu.pc = (uint32_t)begin_pc;
  uint64_t steps = 0;
  while (true) {
    if (cpu.trapped) {
      state = std::move(cpu.st);
      return SectionRunStatus::Trap;
    }
    if ((!cpu.halted && (int)cpu.pc == end_pc) || cpu.halted) {
      state = std::move(cpu.st);
      return SectionRunStatus::Ok;
    }
    if (steps > 5 * golden_steps || steps > hard_cap) {
      state = std::move(cpu.st);
      return SectionRunStatus::Timeout;
    }
    cpu.step();
    ++steps;
  }
}

}  // namespace flipforge

// Toy register-machine IR: instruction set, program container, section layout
// and the dataflow specification consumed by the analysis pipeline.
#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace flipforge {

using json = nlohmann::json;

enum class Bank : uint8_t { Int, Float };

inline const char* bank_name(Bank b) { return b == Bank::Int ? "int" : "float"; }

inline Bank bank_from_name(const std::string& s) {
  if (s == "int") return Bank::Int;
  if (s == "float") return Bank::Float;
  throw std::runtime_error("unknown bank: " + s);
}

constexpr int kNumRegs = 32;

enum class Opcode : uint8_t {
  Const,
  Mov,
  IAdd,
  ISub,
  IMul,
  IDiv,
  FAdd,
  FSub,
  FMul,
  FDiv,
  FNeg,
  ICmpLt,
  ICmpLe,
  ICmpEq,
  Load,
  Store,
  Jump,
  BranchIf,
  SectionBegin,
  SectionEnd,
  Halt,
};

inline const char* mnemonic(Opcode op) {
  switch (op) {
    case Opcode::Const: return "const";
    case Opcode::Mov: return "mov";
    case Opcode::IAdd: return "iadd";
    case Opcode::ISub: return "isub";
    case Opcode::IMul: return "imul";
    case Opcode::IDiv: return "idiv";
    case Opcode::FAdd: return "fadd";
    case Opcode::FSub: return "fsub";
    case Opcode::FMul: return "fmul";
    case Opcode::FDiv: return "fdiv";
    case Opcode::FNeg: return "fneg";
    case Opcode::ICmpLt: return "icmp-lt";
    case Opcode::ICmpLe: return "icmp-le";
    case Opcode::ICmpEq: return "icmp-eq";
    case Opcode::Load: return "load";
    case Opcode::Store: return "store";
    case Opcode::Jump: return "jump";
    case Opcode::BranchIf: return "branch-if";
    case Opcode::SectionBegin: return "section-begin";
    case Opcode::SectionEnd: return "section-end";
    case Opcode::Halt: return "halt";
  }
  return "?";
}

// One static instruction. Unused operand fields stay zeroed so structural
// equality can compare the whole struct.
struct Instruction {
  Opcode op = Opcode::Halt;
  Bank bank = Bank::Int;    // register bank of dst/src operands
  uint8_t dst = 0;          // destination register (Const/Mov/ALU/Load)
  uint8_t src1 = 0;         // first source register
  uint8_t src2 = 0;         // second source register
  bool has_src1 = false;
  bool has_src2 = false;
  bool has_dst = false;
  uint64_t imm = 0;         // Const payload (bit pattern) or section id
  int mem_base = -1;        // Load/Store base register, -1 = absolute
  int64_t mem_off = 0;      // Load/Store constant offset / absolute address
  int target = -1;          // Jump/BranchIf resolved static index
  std::string label_ref;    // Jump/BranchIf label spelling (printing only)

  friend bool operator==(const Instruction& a, const Instruction& b) {
    return a.op == b.op && a.bank == b.bank && a.dst == b.dst &&
           a.src1 == b.src1 && a.src2 == b.src2 && a.has_src1 == b.has_src1 &&
           a.has_src2 == b.has_src2 && a.has_dst == b.has_dst &&
           a.imm == b.imm && a.mem_base == b.mem_base &&
           a.mem_off == b.mem_off && a.target == b.target;
  }
};

// Register operand slots of an instruction, in site-enumeration order.
enum class Slot : uint8_t { Src0 = 0, Src1 = 1, Dst = 2 };

inline const char* slot_name(Slot s) {
  switch (s) {
    case Slot::Src0: return "src0";
    case Slot::Src1: return "src1";
    case Slot::Dst: return "dst";
  }
  return "?";
}

struct RegOperand {
  Slot slot;
  Bank bank;
  uint8_t reg;
};

// Enumerates the register operands of an instruction. Instructions without
// register operands (jump, halt, section markers) yield an empty list.
inline std::vector<RegOperand> reg_operands(const Instruction& ins) {
  std::vector<RegOperand> out;
  switch (ins.op) {
    case Opcode::Const:
      out.push_back({Slot::Dst, ins.bank, ins.dst});
      break;
    case Opcode::Mov:
    case Opcode::FNeg:
      out.push_back({Slot::Src0, ins.bank, ins.src1});
      out.push_back({Slot::Dst, ins.bank, ins.dst});
      break;
    case Opcode::IAdd:
    case Opcode::ISub:
    case Opcode::IMul:
    case Opcode::IDiv:
    case Opcode::ICmpLt:
    case Opcode::ICmpLe:
    case Opcode::ICmpEq:
    case Opcode::FAdd:
    case Opcode::FSub:
    case Opcode::FMul:
    case Opcode::FDiv:
      out.push_back({Slot::Src0, ins.bank, ins.src1});
      out.push_back({Slot::Src1, ins.bank, ins.src2});
      out.push_back({Slot::Dst, ins.bank, ins.dst});
      break;
    case Opcode::Load:
      if (ins.mem_base >= 0)
        out.push_back({Slot::Src0, Bank::Int, (uint8_t)ins.mem_base});
      out.push_back({Slot::Dst, ins.bank, ins.dst});
      break;
    case Opcode::Store:
      if (ins.mem_base >= 0)
        out.push_back({Slot::Src0, Bank::Int, (uint8_t)ins.mem_base});
      out.push_back({Slot::Src1, ins.bank, ins.src1});
      break;
    case Opcode::BranchIf:
      out.push_back({Slot::Src0, Bank::Int, ins.src1});
      break;
    case Opcode::Jump:
    case Opcode::SectionBegin:
    case Opcode::SectionEnd:
    case Opcode::Halt:
      break;
  }
  return out;
}

// A named contiguous run of memory words on one bank.
struct MemRegion {
  std::string name;
  uint32_t addr = 0;
  uint32_t len = 0;
  Bank bank = Bank::Int;

  uint32_t end() const { return addr + len; }

  friend bool operator==(const MemRegion& a, const MemRegion& b) {
    return a.name == b.name && a.addr == b.addr && a.len == b.len &&
           a.bank == b.bank;
  }
};

struct SectionDecl {
  uint64_t id;
  std::string begin_label;
  std::string end_label;
};

struct MemWord {
  uint64_t bits = 0;
  Bank bank = Bank::Int;
};

struct Program {
  std::vector<Instruction> instructions;
  std::map<int, std::vector<std::string>> labels;  // static index -> names
  std::vector<MemWord> memory;  // initial image, word addressed
  uint32_t roi_begin = 0;             // half-open static index range
  uint32_t roi_end = 0;
  uint32_t entry = 0;
  std::vector<SectionDecl> section_decls;

  bool in_roi(uint32_t pc) const { return pc >= roi_begin && pc < roi_end; }

  friend bool operator==(const Program& a, const Program& b) {
    if (a.instructions.size() != b.instructions.size()) return false;
    for (size_t i = 0; i < a.instructions.size(); ++i)
      if (!(a.instructions[i] == b.instructions[i])) return false;
    if (a.memory.size() != b.memory.size()) return false;
    for (size_t i = 0; i < a.memory.size(); ++i)
      if (a.memory[i].bits != b.memory[i].bits ||
          a.memory[i].bank != b.memory[i].bank)
        return false;
    return a.roi_begin == b.roi_begin && a.roi_end == b.roi_end &&
           a.entry == b.entry;
  }
};

struct StaticSection {
  uint64_t id = 0;
  std::string name;
  int begin_pc = -1;  // pc of the section-begin marker
  int end_pc = -1;    // pc of the section-end marker
  std::vector<MemRegion> inputs;
  std::vector<MemRegion> outputs;
  uint32_t pad = 1;   // adjacency widening, words per side
};

// Producer/consumer endpoints are "id@ordinal" instance refs; the sink of a
// final program output is the reserved instance ref "final".
struct DataflowEdge {
  std::string from_inst;
  std::string from_region;
  std::string to_inst;
  std::string to_region;
};

struct SectionLayout {
  std::vector<StaticSection> sections;
  std::vector<DataflowEdge> dataflow;
  std::map<uint64_t, std::vector<MemRegion>> future_use;  // section id -> regions
  std::vector<MemRegion> final_outputs;

  const StaticSection* find(uint64_t id) const {
    for (auto& s : sections)
      if (s.id == id) return &s;
    return nullptr;
  }
};

// Per final-output maximum acceptable SDC magnitude. Missing entries fall
// back to the default.
struct SdcThresholds {
  double default_epsilon = 0.0;
  std::map<std::string, double> per_output;

  double epsilon(const std::string& lambda) const {
    auto it = per_output.find(lambda);
    return it == per_output.end() ? default_epsilon : it->second;
  }
};

struct ParseError : std::runtime_error {
  int line;
  int col;
  ParseError(int line_, int col_, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line_) + ":" +
                           std::to_string(col_) + ": " + msg),
        line(line_),
        col(col_) {}
};

namespace detail {

struct Token {
  std::string text;
  int col;
};

inline std::vector<Token> tokenize(const std::string& line, int lineno) {
  std::vector<Token> toks;
  size_t i = 0;
  while (i < line.size()) {
    char c = line[i];
    if (c == '#' || c == ';') break;
    if (isspace((unsigned char)c) || c == ',') {
      ++i;
      continue;
    }
    if (c == '[') {
      size_t j = line.find(']', i);
      if (j == std::string::npos)
        throw ParseError(lineno, (int)i + 1, "unterminated memory operand");
      toks.push_back({line.substr(i, j - i + 1), (int)i + 1});
      i = j + 1;
      continue;
    }
    size_t j = i;
    while (j < line.size() && !isspace((unsigned char)line[j]) &&
           line[j] != ',' && line[j] != '#' && line[j] != ';')
      ++j;
    toks.push_back({line.substr(i, j - i), (int)i + 1});
    i = j;
  }
  return toks;
}

inline bool parse_reg(const std::string& t, Bank& bank, uint8_t& reg) {
  if (t.size() < 2) return false;
  if (t[0] == 'r')
    bank = Bank::Int;
  else if (t[0] == 'f')
    bank = Bank::Float;
  else
    return false;
  for (size_t i = 1; i < t.size(); ++i)
    if (!isdigit((unsigned char)t[i])) return false;
  long v = strtol(t.c_str() + 1, nullptr, 10);
  if (v < 0 || v >= 256) return false;
  reg = (uint8_t)v;
  return true;
}

inline int64_t parse_int(const std::string& t, int lineno, int col) {
  errno = 0;
  char* end = nullptr;
  long long v;
  if (t.size() > 2 && (t.rfind("0x", 0) == 0 || t.rfind("-0x", 0) == 0)) {
    unsigned long long u = strtoull(t[0] == '-' ? t.c_str() + 3 : t.c_str() + 2,
                                    &end, 16);
    v = (long long)u;
    if (t[0] == '-') v = -v;
  } else {
    v = strtoll(t.c_str(), &end, 10);
    if (errno == ERANGE) {
      // large unsigned literal, keep the bit pattern
      errno = 0;
      v = (long long)strtoull(t.c_str(), &end, 10);
    }
  }
  if (end == nullptr || *end != '\0')
    throw ParseError(lineno, col, "syntax error: bad integer '" + t + "'");
  return v;
}

inline double parse_float(const std::string& t, int lineno, int col) {
  char* end = nullptr;
  double v = strtod(t.c_str(), &end);
  if (end == nullptr || *end != '\0')
    throw ParseError(lineno, col, "syntax error: bad float '" + t + "'");
  return v;
}

// memory operand: [r3], [r3+8], [r3-8], [17]
inline void parse_memref(const std::string& t, int lineno, int col,
                         int& base, int64_t& off) {
  std::string body = t.substr(1, t.size() - 2);
  if (body.empty()) throw ParseError(lineno, col, "empty memory operand");
  size_t sep = body.find_first_of("+-", 1);
  std::string first = body.substr(0, sep);
  Bank b;
  uint8_t r;
  if (parse_reg(first, b, r)) {
    if (b != Bank::Int)
      throw ParseError(lineno, col, "address base must be an integer register");
    if (r >= kNumRegs)
      throw ParseError(lineno, col, "register index out of range");
    base = r;
    off = sep == std::string::npos ? 0 : parse_int(body.substr(sep), lineno, col);
  } else {
    base = -1;
    off = parse_int(body, lineno, col);
  }
}

inline std::string format_double(double v) {
  char buf[64];
  snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Parses the textual assembly form. Labels may be referenced before they are
// defined; `.roi`/`.entry` accept labels or absolute indices.
inline Program parse_program(const std::string& text) {
  using namespace detail;
  Program prog;
  std::map<std::string, int> label_defs;
  struct PendingTarget {
    size_t idx;
    std::string label;
    int line, col;
  };
  std::vector<PendingTarget> pending;
  struct PendingRange {
    std::string tok;
    int line, col;
  };
  std::optional<std::pair<PendingRange, PendingRange>> roi;
  std::optional<PendingRange> entry;
  uint32_t memsize = 0;

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto toks = tokenize(line, lineno);
    size_t k = 0;
    while (k < toks.size() && toks[k].text.back() == ':') {
      std::string name = toks[k].text.substr(0, toks[k].text.size() - 1);
      if (name.empty() || isdigit((unsigned char)name[0]))
        throw ParseError(lineno, toks[k].col, "bad label name");
      if (label_defs.count(name))
        throw ParseError(lineno, toks[k].col, "duplicate label '" + name + "'");
      label_defs[name] = (int)prog.instructions.size();
      prog.labels[(int)prog.instructions.size()].push_back(name);
      ++k;
    }
    if (k >= toks.size()) continue;
    const std::string& head = toks[k].text;
    int hcol = toks[k].col;
    auto want = [&](size_t n) {
      if (toks.size() - k - 1 != n)
        throw ParseError(lineno, hcol, "syntax error: '" + head + "' expects " +
                                           std::to_string(n) + " operand(s)");
    };
    auto tok = [&](size_t i) -> const Token& { return toks[k + 1 + i]; };
    auto reg_of = [&](const Token& t, Bank* want_bank = nullptr) {
      Bank b;
      uint8_t r;
      if (!parse_reg(t.text, b, r))
        throw ParseError(lineno, t.col, "syntax error: expected register, got '" +
                                            t.text + "'");
      if (r >= kNumRegs)
        throw ParseError(lineno, t.col, "register index out of range");
      if (want_bank && b != *want_bank)
        throw ParseError(lineno, t.col, "operand bank mismatch");
      return std::make_pair(b, r);
    };

    if (head[0] == '.') {
      if (head == ".mem") {
        if (toks.size() - k - 1 < 3)
          throw ParseError(lineno, hcol, ".mem expects addr count bank values");
        int64_t addr = parse_int(tok(0).text, lineno, tok(0).col);
        int64_t count = parse_int(tok(1).text, lineno, tok(1).col);
        Bank bank;
        if (tok(2).text == "int")
          bank = Bank::Int;
        else if (tok(2).text == "float")
          bank = Bank::Float;
        else
          throw ParseError(lineno, tok(2).col, "bad bank '" + tok(2).text + "'");
        if (addr < 0 || count < 0 || toks.size() - k - 4 != (size_t)count)
          throw ParseError(lineno, hcol, ".mem value count mismatch");
        if (prog.memory.size() < (size_t)(addr + count))
          prog.memory.resize(addr + count);
        for (int64_t i = 0; i < count; ++i) {
          const Token& vt = toks[k + 4 + i];
          uint64_t bits;
          if (bank == Bank::Int)
            bits = (uint64_t)parse_int(vt.text, lineno, vt.col);
          else
            bits = std::bit_cast<uint64_t>(parse_float(vt.text, lineno, vt.col));
          prog.memory[addr + i] = {bits, bank};
        }
      } else if (head == ".memsize") {
        want(1);
        memsize = (uint32_t)parse_int(tok(0).text, lineno, tok(0).col);
      } else if (head == ".roi") {
        want(2);
        roi = {{tok(0).text, lineno, tok(0).col}, {tok(1).text, lineno, tok(1).col}};
      } else if (head == ".entry") {
        want(1);
        entry = PendingRange{tok(0).text, lineno, tok(0).col};
      } else if (head == ".section") {
        want(3);
        prog.section_decls.push_back(
            {(uint64_t)parse_int(tok(0).text, lineno, tok(0).col), tok(1).text,
             tok(2).text});
      } else {
        throw ParseError(lineno, hcol, "unknown directive '" + head + "'");
      }
      continue;
    }

    Instruction ins;
    auto emit = [&] {
      prog.instructions.push_back(ins);
    };
    auto target_of = [&](const Token& t) {
      ins.label_ref = t.text;
      pending.push_back({prog.instructions.size(), t.text, lineno, t.col});
    };

    if (head == "const" || head == "ldi") {
      want(2);
      auto [b, r] = reg_of(tok(0));
      ins.op = Opcode::Const;
      ins.bank = b;
      ins.dst = r;
      ins.has_dst = true;
      ins.imm = b == Bank::Int
                    ? (uint64_t)parse_int(tok(1).text, lineno, tok(1).col)
                    : std::bit_cast<uint64_t>(
                          parse_float(tok(1).text, lineno, tok(1).col));
      emit();
    } else if (head == "mov" || head == "fneg") {
      want(2);
      auto [bd, rd] = reg_of(tok(0));
      auto [bs, rs] = reg_of(tok(1));
      if (bd != bs) throw ParseError(lineno, tok(1).col, "operand bank mismatch");
      if (head == "fneg" && bd != Bank::Float)
        throw ParseError(lineno, tok(0).col, "fneg needs float registers");
      ins.op = head == "mov" ? Opcode::Mov : Opcode::FNeg;
      ins.bank = bd;
      ins.dst = rd;
      ins.src1 = rs;
      ins.has_dst = ins.has_src1 = true;
      emit();
    } else if (head == "iadd" || head == "isub" || head == "imul" ||
               head == "idiv" || head == "icmp-lt" || head == "icmp-le" ||
               head == "icmp-eq" || head == "fadd" || head == "fsub" ||
               head == "fmul" || head == "fdiv") {
      want(3);
      Bank need = head[0] == 'f' ? Bank::Float : Bank::Int;
      auto [bd, rd] = reg_of(tok(0), &need);
      auto [b1, r1] = reg_of(tok(1), &need);
      auto [b2, r2] = reg_of(tok(2), &need);
      static const std::map<std::string, Opcode> ops = {
          {"iadd", Opcode::IAdd},       {"isub", Opcode::ISub},
          {"imul", Opcode::IMul},       {"idiv", Opcode::IDiv},
          {"icmp-lt", Opcode::ICmpLt},  {"icmp-le", Opcode::ICmpLe},
          {"icmp-eq", Opcode::ICmpEq},  {"fadd", Opcode::FAdd},
          {"fsub", Opcode::FSub},       {"fmul", Opcode::FMul},
          {"fdiv", Opcode::FDiv},
      };
      ins.op = ops.at(head);
      ins.bank = need;
      ins.dst = rd;
      ins.src1 = r1;
      ins.src2 = r2;
      ins.has_dst = ins.has_src1 = ins.has_src2 = true;
      emit();
    } else if (head == "load") {
      want(2);
      auto [b, r] = reg_of(tok(0));
      if (tok(1).text.front() != '[')
        throw ParseError(lineno, tok(1).col, "expected memory operand");
      ins.op = Opcode::Load;
      ins.bank = b;
      ins.dst = r;
      ins.has_dst = true;
      parse_memref(tok(1).text, lineno, tok(1).col, ins.mem_base, ins.mem_off);
      emit();
    } else if (head == "store") {
      want(2);
      if (tok(0).text.front() != '[')
        throw ParseError(lineno, tok(0).col, "expected memory operand");
      auto [b, r] = reg_of(tok(1));
      ins.op = Opcode::Store;
      ins.bank = b;
      ins.src1 = r;
      ins.has_src1 = true;
      parse_memref(tok(0).text, lineno, tok(0).col, ins.mem_base, ins.mem_off);
      emit();
    } else if (head == "jump") {
      want(1);
      ins.op = Opcode::Jump;
      target_of(tok(0));
      emit();
    } else if (head == "branch-if") {
      want(2);
      Bank need = Bank::Int;
      auto [b, r] = reg_of(tok(0), &need);
      ins.op = Opcode::BranchIf;
      ins.src1 = r;
      ins.has_src1 = true;
      target_of(tok(1));
      emit();
    } else if (head == "section-begin" || head == "section-end") {
      want(1);
      ins.op = head == "section-begin" ? Opcode::SectionBegin : Opcode::SectionEnd;
      ins.imm = (uint64_t)parse_int(tok(0).text, lineno, tok(0).col);
      emit();
    } else if (head == "halt") {
      want(0);
      ins.op = Opcode::Halt;
      emit();
    } else {
      throw ParseError(lineno, hcol, "syntax error: unknown opcode '" + head + "'");
    }
  }

  auto resolve = [&](const std::string& t, int l, int c, bool allow_end) -> int {
    if (!t.empty() && (isdigit((unsigned char)t[0]) || t[0] == '-'))
      return (int)parse_int(t, l, c);
    auto it = label_defs.find(t);
    if (it == label_defs.end())
      throw ParseError(l, c, "undefined label '" + t + "'");
    (void)allow_end;
    return it->second;
  };

  for (auto& p : pending) {
    int t = resolve(p.label, p.line, p.col, false);
    if (t < 0 || (size_t)t >= prog.instructions.size())
      throw ParseError(p.line, p.col, "branch target out of range");
    prog.instructions[p.idx].target = t;
  }
  if (roi) {
    prog.roi_begin = (uint32_t)resolve(roi->first.tok, roi->first.line,
                                       roi->first.col, true);
    prog.roi_end = (uint32_t)resolve(roi->second.tok, roi->second.line,
                                     roi->second.col, true);
  } else {
    prog.roi_begin = 0;
    prog.roi_end = (uint32_t)prog.instructions.size();
  }
  if (entry)
    prog.entry = (uint32_t)resolve(entry->tok, entry->line, entry->col, false);
  if (memsize > prog.memory.size()) prog.memory.resize(memsize);

  // cross-check .section declarations against marker instructions
  for (auto& d : prog.section_decls) {
    auto bit = label_defs.find(d.begin_label);
    auto eit = label_defs.find(d.end_label);
    if (bit == label_defs.end())
      throw ParseError(0, 0, "undefined label '" + d.begin_label + "'");
    if (eit == label_defs.end())
      throw ParseError(0, 0, "undefined label '" + d.end_label + "'");
    auto check = [&](int pc, Opcode op) {
      if (pc < 0 || (size_t)pc >= prog.instructions.size() ||
          prog.instructions[pc].op != op || prog.instructions[pc].imm != d.id)
        throw ParseError(0, 0, ".section " + std::to_string(d.id) +
                                   " does not match its marker instructions");
    };
    check(bit->second, Opcode::SectionBegin);
    check(eit->second, Opcode::SectionEnd);
  }
  return prog;
}

inline std::string print_instruction(const Instruction& ins) {
  using detail::format_double;
  std::string s = mnemonic(ins.op);
  auto reg = [&](uint8_t r) {
    return std::string(ins.bank == Bank::Int ? "r" : "f") + std::to_string(r);
  };
  auto memref = [&] {
    std::string m = "[";
    if (ins.mem_base >= 0) {
      m += "r" + std::to_string(ins.mem_base);
      if (ins.mem_off > 0) m += "+" + std::to_string(ins.mem_off);
      if (ins.mem_off < 0) m += std::to_string(ins.mem_off);
    } else {
      m += std::to_string(ins.mem_off);
    }
    return m + "]";
  };
  switch (ins.op) {
    case Opcode::Const:
      s += " " + reg(ins.dst) + ", " +
           (ins.bank == Bank::Int
                ? std::to_string((int64_t)ins.imm)
                : format_double(std::bit_cast<double>(ins.imm)));
      break;
    case Opcode::Mov:
    case Opcode::FNeg:
      s += " " + reg(ins.dst) + ", " + reg(ins.src1);
      break;
    case Opcode::IAdd:
    case Opcode::ISub:
    case Opcode::IMul:
    case Opcode::IDiv:
    case Opcode::ICmpLt:
    case Opcode::ICmpLe:
    case Opcode::ICmpEq:
    case Opcode::FAdd:
    case Opcode::FSub:
    case Opcode::FMul:
    case Opcode::FDiv:
      s += " " + reg(ins.dst) + ", " + reg(ins.src1) + ", " + reg(ins.src2);
      break;
    case Opcode::Load:
      s += " " + reg(ins.dst) + ", " + memref();
      break;
    case Opcode::Store:
      s += " " + memref() + ", " + reg(ins.src1);
      break;
    case Opcode::Jump:
      s += " " + (ins.label_ref.empty() ? std::to_string(ins.target)
                                        : ins.label_ref);
      break;
    case Opcode::BranchIf:
      s += " r" + std::to_string(ins.src1) + ", " +
           (ins.label_ref.empty() ? std::to_string(ins.target) : ins.label_ref);
      break;
    case Opcode::SectionBegin:
    case Opcode::SectionEnd:
      s += " " + std::to_string(ins.imm);
      break;
    case Opcode::Halt:
      break;
  }
  return s;
}

inline std::string print_program(const Program& p) {
  using detail::format_double;
  std::ostringstream out;
  out << ".memsize " << p.memory.size() << "\n";
  // contiguous same-bank runs of nonzero-or-tagged memory
  size_t i = 0;
  while (i < p.memory.size()) {
    size_t j = i;
    while (j < p.memory.size() && p.memory[j].bank == p.memory[i].bank) ++j;
    bool any = false;
    for (size_t k = i; k < j; ++k) any |= p.memory[k].bits != 0;
    if (any || p.memory[i].bank == Bank::Float) {
      out << ".mem " << i << " " << (j - i) << " " << bank_name(p.memory[i].bank);
      for (size_t k = i; k < j; ++k) {
        if (p.memory[i].bank == Bank::Int)
          out << " " << (int64_t)p.memory[k].bits;
        else
          out << " " << format_double(std::bit_cast<double>(p.memory[k].bits));
      }
      out << "\n";
    }
    i = j;
  }
  out << ".roi " << p.roi_begin << " " << p.roi_end << "\n";
  if (p.entry != 0) out << ".entry " << p.entry << "\n";
  for (auto& d : p.section_decls)
    out << ".section " << d.id << " " << d.begin_label << " " << d.end_label
        << "\n";
  for (size_t pc = 0; pc < p.instructions.size(); ++pc) {
    auto lit = p.labels.find((int)pc);
    if (lit != p.labels.end())
      for (auto& name : lit->second) out << name << ":\n";
    out << "  " << print_instruction(p.instructions[pc]) << "\n";
  }
  auto lit = p.labels.find((int)p.instructions.size());
  if (lit != p.labels.end())
    for (auto& name : lit->second) out << name << ":\n";
  return out.str();
}

inline MemRegion region_from_json(const json& j) {
  MemRegion r;
  r.name = j.at("name").get<std::string>();
  r.addr = j.at("addr").get<uint32_t>();
  r.len = j.at("len").get<uint32_t>();
  r.bank = bank_from_name(j.at("bank").get<std::string>());
  return r;
}

inline json region_to_json(const MemRegion& r) {
  return json{{"name", r.name}, {"addr", r.addr}, {"len", r.len},
              {"bank", bank_name(r.bank)}};
}

// Layout document:
// {sections:[{id,name?,inputs:[region...],outputs:[region...],pad}],
//  dataflow:[{from:[inst,region],to:[inst,region]}],
//  future_use:{"<id>":[region...]}, final_outputs:[region...]}
inline SectionLayout parse_layout(const json& j) {
  SectionLayout layout;
  for (auto& sj : j.at("sections")) {
    StaticSection s;
    s.id = sj.at("id").get<uint64_t>();
    if (sj.contains("name")) s.name = sj["name"].get<std::string>();
    for (auto& rj : sj.value("inputs", json::array()))
      s.inputs.push_back(region_from_json(rj));
    for (auto& rj : sj.value("outputs", json::array()))
      s.outputs.push_back(region_from_json(rj));
    s.pad = sj.value("pad", 1u);
    layout.sections.push_back(std::move(s));
  }
  for (auto& ej : j.value("dataflow", json::array())) {
    DataflowEdge e;
    e.from_inst = ej.at("from").at(0).get<std::string>();
    e.from_region = ej.at("from").at(1).get<std::string>();
    e.to_inst = ej.at("to").at(0).get<std::string>();
    e.to_region = ej.at("to").at(1).get<std::string>();
    layout.dataflow.push_back(std::move(e));
  }
  if (j.contains("future_use"))
    for (auto& [key, arr] : j["future_use"].items()) {
      std::vector<MemRegion> regs;
      for (auto& rj : arr) regs.push_back(region_from_json(rj));
      layout.future_use[std::stoull(key)] = std::move(regs);
    }
  for (auto& rj : j.value("final_outputs", json::array()))
    layout.final_outputs.push_back(region_from_json(rj));
  return layout;
}

inline json layout_to_json(const SectionLayout& layout) {
  json j;
  j["sections"] = json::array();
  for (auto& s : layout.sections) {
    json sj;
    sj["id"] = s.id;
    if (!s.name.empty()) sj["name"] = s.name;
    sj["inputs"] = json::array();
    for (auto& r : s.inputs) sj["inputs"].push_back(region_to_json(r));
    sj["outputs"] = json::array();
    for (auto& r : s.outputs) sj["outputs"].push_back(region_to_json(r));
    sj["pad"] = s.pad;
    j["sections"].push_back(std::move(sj));
  }
  j["dataflow"] = json::array();
  for (auto& e : layout.dataflow)
    j["dataflow"].push_back(json{{"from", {e.from_inst, e.from_region}},
                                 {"to", {e.to_inst, e.to_region}}});
  j["future_use"] = json::object();
  for (auto& [id, regs] : layout.future_use) {
    json arr = json::array();
    for (auto& r : regs) arr.push_back(region_to_json(r));
    j["future_use"][std::to_string(id)] = std::move(arr);
  }
  j["final_outputs"] = json::array();
  for (auto& r : layout.final_outputs)
    j["final_outputs"].push_back(region_to_json(r));
  return j;
}

// "id@ordinal" or "final"
struct InstanceRef {
  uint64_t section_id = 0;
  uint32_t ordinal = 0;
  bool is_final = false;

  static InstanceRef final_sink() {
    InstanceRef r;
    r.is_final = true;
    return r;
  }
  static std::optional<InstanceRef> parse(const std::string& s) {
    if (s == "final") return final_sink();
    auto at = s.find('@');
    if (at == std::string::npos || at == 0 || at + 1 >= s.size()) return {};
    InstanceRef r;
    try {
      r.section_id = std::stoull(s.substr(0, at));
      r.ordinal = (uint32_t)std::stoul(s.substr(at + 1));
    } catch (...) {
      return {};
    }
    return r;
  }
  std::string str() const {
    if (is_final) return "final";
    return std::to_string(section_id) + "@" + std::to_string(ordinal);
  }
  friend bool operator==(const InstanceRef& a, const InstanceRef& b) {
    return a.is_final == b.is_final && a.section_id == b.section_id &&
           a.ordinal == b.ordinal;
  }
  friend bool operator<(const InstanceRef& a, const InstanceRef& b) {
    return std::tie(a.is_final, a.section_id, a.ordinal) <
           std::tie(b.is_final, b.section_id, b.ordinal);
  }
};

// Static layout diagnostics. Golden-trace checks (stores stay within
// effective outputs) are enforced by the interpreter.
inline std::vector<std::string> validate_layout(const Program& p,
                                                const SectionLayout& layout) {
  std::vector<std::string> diags;
  auto add = [&](const std::string& d) { diags.push_back(d); };
  std::set<uint64_t> ids;
  uint32_t memsize = (uint32_t)p.memory.size();

  auto check_region = [&](const MemRegion& r, const std::string& where) {
    if (r.len == 0) add(where + ": empty region '" + r.name + "'");
    if (r.end() > memsize)
      add(where + ": region '" + r.name + "' exceeds memory bounds");
    for (uint32_t a = r.addr; a < r.end() && a < memsize; ++a)
      if (p.memory[a].bank != r.bank) {
        add(where + ": region '" + r.name + "' bank mismatch at word " +
            std::to_string(a));
        break;
      }
  };

  std::map<uint64_t, std::pair<int, int>> markers;  // id -> (begin, end)
  auto marker_slot = [&](uint64_t id) -> std::pair<int, int>& {
    auto [it, fresh] = markers.try_emplace(id, std::make_pair(-1, -1));
    (void)fresh;
    return it->second;
  };
  for (size_t pc = 0; pc < p.instructions.size(); ++pc) {
    const auto& ins = p.instructions[pc];
    if (ins.op == Opcode::SectionBegin) {
      auto& m = marker_slot(ins.imm);
      if (m.first >= 0)
        add("section " + std::to_string(ins.imm) + ": duplicate begin marker");
      m.first = (int)pc;
    } else if (ins.op == Opcode::SectionEnd) {
      auto& m = marker_slot(ins.imm);
      if (m.second >= 0)
        add("section " + std::to_string(ins.imm) + ": duplicate end marker");
      m.second = (int)pc;
    }
  }

  for (auto& s : layout.sections) {
    std::string where = "section " + std::to_string(s.id);
    if (!ids.insert(s.id).second) add(where + ": duplicate id");
    auto mit = markers.find(s.id);
    if (mit == markers.end() || mit->second.first < 0 || mit->second.second < 0) {
      add(where + ": missing begin/end markers");
    } else {
      auto [b, e] = mit->second;
      if (b >= e) add(where + ": begin marker not before end marker");
      if (!p.in_roi(b) || !p.in_roi(e)) add(where + ": markers outside roi");
    }
    for (auto& r : s.inputs) check_region(r, where);
    for (auto& r : s.outputs) check_region(r, where);
    // region overlap within the section's declared outputs
    for (size_t i = 0; i < s.outputs.size(); ++i)
      for (size_t j = i + 1; j < s.outputs.size(); ++j) {
        const auto& a = s.outputs[i];
        const auto& b = s.outputs[j];
        if (a.addr < b.end() && b.addr < a.end())
          add(where + ": region overlap between outputs '" + a.name + "' and '" +
              b.name + "'");
      }
  }
  for (auto& [id, regs] : layout.future_use) {
    if (!layout.find(id))
      add("future_use: unknown section " + std::to_string(id));
    for (auto& r : regs)
      check_region(r, "future_use of section " + std::to_string(id));
  }
  for (auto& r : layout.final_outputs) check_region(r, "final_outputs");
  if (layout.final_outputs.empty()) add("no final outputs declared");

  // declaration position of a section id, for the static edge-order proxy
  auto decl_pos = [&](uint64_t id) {
    for (size_t i = 0; i < layout.sections.size(); ++i)
      if (layout.sections[i].id == id) return (int)i;
    return -1;
  };
  auto region_names = [&](const StaticSection* s, bool producer) {
    std::set<std::string> names;
    if (!s) return names;
    if (producer) {
      for (auto& r : s->outputs) names.insert(r.name);
      auto fit = layout.future_use.find(s->id);
      if (fit != layout.future_use.end())
        for (auto& r : fit->second) names.insert(r.name);
    } else {
      for (auto& r : s->inputs) names.insert(r.name);
    }
    return names;
  };
  for (auto& e : layout.dataflow) {
    auto from = InstanceRef::parse(e.from_inst);
    auto to = InstanceRef::parse(e.to_inst);
    std::string where = "dataflow " + e.from_inst + " -> " + e.to_inst;
    if (!from || from->is_final) {
      add(where + ": bad producer instance");
      continue;
    }
    if (!to) {
      add(where + ": bad consumer instance");
      continue;
    }
    const StaticSection* fs = layout.find(from->section_id);
    if (!fs) {
      add(where + ": unknown producer section");
      continue;
    }
    if (!region_names(fs, true).count(e.from_region))
      add(where + ": producer has no output region '" + e.from_region + "'");
    if (to->is_final) {
      bool known = false;
      for (auto& r : layout.final_outputs) known |= r.name == e.to_region;
      if (!known) add(where + ": unknown final output '" + e.to_region + "'");
      continue;
    }
    const StaticSection* ts = layout.find(to->section_id);
    if (!ts) {
      add(where + ": unknown consumer section");
      continue;
    }
    if (!region_names(ts, false).count(e.to_region))
      add(where + ": consumer has no input region '" + e.to_region + "'");
    // execution-order proxy: (ordinal, declaration position)
    auto okey = std::make_pair(from->ordinal, decl_pos(from->section_id));
    auto ckey = std::make_pair(to->ordinal, decl_pos(to->section_id));
    if (!(okey < ckey)) add(where + ": backward edge");
  }
  return diags;
}

// Declared outputs widened by the adjacency pad and unioned with the
// section's future-use regions; disjoint and sorted by address. Merged
// regions take a '+'-joined name and must agree on bank.
inline std::vector<MemRegion> effective_outputs(const StaticSection& sec,
                                                const SectionLayout& layout,
                                                uint32_t memsize) {
  std::vector<MemRegion> widened;
  for (auto& r : sec.outputs) {
    MemRegion w = r;
    uint32_t lo = r.addr >= sec.pad ? r.addr - sec.pad : 0;
    uint32_t hi = std::min<uint64_t>((uint64_t)r.end() + sec.pad, memsize);
    w.addr = lo;
    w.len = hi - lo;
    widened.push_back(w);
  }
  auto fit = layout.future_use.find(sec.id);
  if (fit != layout.future_use.end())
    for (auto& r : fit->second) widened.push_back(r);
  std::sort(widened.begin(), widened.end(),
            [](const MemRegion& a, const MemRegion& b) {
              return std::tie(a.addr, a.name) < std::tie(b.addr, b.name);
            });
  std::vector<MemRegion> merged;
  for (auto& r : widened) {
    if (!merged.empty() && r.addr <= merged.back().end()) {
      MemRegion& m = merged.back();
      if (m.bank != r.bank)
        throw std::runtime_error("effective_outputs: bank conflict between '" +
                                 m.name + "' and '" + r.name + "'");
      if (r.end() > m.end()) m.len = r.end() - m.addr;
      if (m.name != r.name) m.name += "+" + r.name;
    } else {
      merged.push_back(r);
    }
  }
  return merged;
}

// Maps a declared region name to the index of the effective output region
// containing it, or -1.
inline int effective_index_of(const std::vector<MemRegion>& effective,
                              const MemRegion& declared) {
  for (size_t i = 0; i < effective.size(); ++i) {
    const auto& e = effective[i];
    if (declared.addr >= e.addr && declared.end() <= e.end()) return (int)i;
  }
  return -1;
}

}  // namespace flipforge

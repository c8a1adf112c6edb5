// Local sensitivity analysis: estimates each section instance's input-to-
// output SDC amplification factors by seeded random perturbation.
#pragma once

#include "flipforge/interp.hpp"
#include "flipforge/propagation.hpp"

namespace flipforge {

struct SensitivityConfig {
  double phi_max = 0.01;
  uint64_t samples = 1'000'000;
  uint64_t seed = 0;
  enum class Pattern { Single, Subset, All, Mixed } pattern = Pattern::Mixed;
};

inline const char* pattern_name(SensitivityConfig::Pattern p) {
  using P = SensitivityConfig::Pattern;
  switch (p) {
    case P::Single: return "single";
    case P::Subset: return "subset";
    case P::All: return "all";
    case P::Mixed: return "mixed";
  }
  return "?";
}

inline SensitivityConfig::Pattern pattern_from_name(const std::string& s) {
  using P = SensitivityConfig::Pattern;
  if (s == "single") return P::Single;
  if (s == "subset") return P::Subset;
  if (s == "all") return P::All;
  if (s == "mixed") return P::Mixed;
  throw std::runtime_error("unknown perturbation pattern: " + s);
}

// Amplification coefficients of one section instance. K[k][m] bounds the
// SDC in effective output k per unit of SDC in declared input m.
struct AffineSdcSpec {
  std::string instance;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<std::vector<double>> K;
};

namespace detail {

inline uint64_t splitmix64(uint64_t& x) {
  uint64_t z = (x += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Per-draw counter-based stream: parallel and serial sampling agree, and a
// longer run of draws is a superset of a shorter one.
inline uint64_t draw_stream(uint64_t seed, uint64_t instance, uint64_t region,
                            uint64_t draw) {
  uint64_t x = seed;
  x ^= 0xd1b54a32d192ed03ull * (instance + 1);
  x = splitmix64(x);
  x ^= 0x8bb84b93962eacc9ull * (region + 1);
  x = splitmix64(x);
  x ^= 0x2545f4914f6cdd1dull * (draw + 1);
  return splitmix64(x);
}

inline double uniform01(uint64_t bits) {
  return (double)(bits >> 11) * 0x1.0p-53;
}

}  // namespace detail

// For each input region: perturb, re-run the section from its golden entry
// state to its end marker, and keep the worst observed output/input ratio.
// Trapping or timed-out samples are discarded; more than 50% discarded for
// a region fails the instance.
inline AffineSdcSpec estimate_spec(const Program& p, const SectionLayout& layout,
                                   const GoldenTrace& trace, int instance_index,
                                   const SensitivityConfig& cfg) {
  if (cfg.phi_max <= 0) throw FatalError("sensitivity: phi_max must be > 0");
  if (cfg.samples < 1) throw FatalError("sensitivity: samples must be >= 1");
  const InstanceInfo& inst = trace.instances.at(instance_index);
  const StaticSection* sec = layout.find(inst.section_id);

  AffineSdcSpec spec;
  spec.instance = inst.ref().str();
  for (auto& r : sec->inputs) spec.inputs.push_back(r.name);
  for (auto& r : inst.eff_outputs) spec.outputs.push_back(r.name);
  spec.K.assign(inst.eff_outputs.size(),
                std::vector<double>(sec->inputs.size(), 0.0));

  uint64_t hard_cap = default_hard_cap(trace);
  using Pattern = SensitivityConfig::Pattern;

  for (size_t m = 0; m < sec->inputs.size(); ++m) {
    const MemRegion& region = sec->inputs[m];
    uint64_t discarded = 0;
    for (uint64_t draw = 0; draw < cfg.samples; ++draw) {
      uint64_t stream =
          detail::draw_stream(cfg.seed, instance_index, m, draw);
      Pattern pat = cfg.pattern;
      if (pat == Pattern::Mixed)
        pat = std::array{Pattern::Single, Pattern::Subset,
                         Pattern::All}[draw % 3];

      std::vector<uint32_t> chosen;
      if (pat == Pattern::Single || region.len == 1) {
        chosen.push_back((uint32_t)(detail::splitmix64(stream) % region.len));
      } else if (pat == Pattern::Subset) {
        for (uint32_t i = 0; i < region.len; ++i)
          if (detail::splitmix64(stream) & 1) chosen.push_back(i);
        if (chosen.empty())
          chosen.push_back((uint32_t)(detail::splitmix64(stream) % region.len));
      } else {
        for (uint32_t i = 0; i < region.len; ++i) chosen.push_back(i);
      }

      MachineState state = inst.entry_state;
      double phi = 0.0;  // realized perturbation, by the same SDC metric
      for (uint32_t i : chosen) {
        uint64_t r1 = detail::splitmix64(stream);
        uint64_t r2 = detail::splitmix64(stream);
        double u = detail::uniform01(r1);
        double sign = (r2 & 1) ? 1.0 : -1.0;
        uint64_t& word = state.mem[region.addr + i];
        uint64_t before = word;
        if (region.bank == Bank::Float) {
          // keep |delta| >= phi_max/1000 so ratios stay numerically stable
          double delta = sign * cfg.phi_max * (1e-3 + (1.0 - 1e-3) * u);
          word = std::bit_cast<uint64_t>(std::bit_cast<double>(word) + delta);
        } else {
          int64_t mag = std::max<int64_t>(1, (int64_t)llround(u * cfg.phi_max));
          word = (uint64_t)((int64_t)word + (int64_t)sign * mag);
        }
        phi = std::max(phi, word_sdc(before, word, region.bank));
      }
      if (phi == 0.0) continue;  // the whole draw rounded away

      SectionRunStatus status = run_section_plain(
          p, state, inst.begin_pc, inst.end_pc, inst.golden_steps(), hard_cap);
      if (status != SectionRunStatus::Ok) {
        ++discarded;
        continue;
      }
      for (size_t k = 0; k < inst.eff_outputs.size(); ++k) {
        const MemRegion& out = inst.eff_outputs[k];
        double worst = 0.0;
        for (uint32_t i = 0; i < out.len; ++i)
          worst = std::max(worst, word_sdc(inst.golden_outputs[k][i],
                                           state.mem[out.addr + i], out.bank));
        spec.K[k][m] = std::max(spec.K[k][m], worst / phi);
      }
    }
    if (2 * discarded > cfg.samples)
      throw FatalError("section not perturbation-stable: instance " +
                       inst.ref().str() + ", input '" + region.name + "' (" +
                       std::to_string(discarded) + "/" +
                       std::to_string(cfg.samples) + " samples discarded)");
  }
  return spec;
}

// Introduces one fresh symbolic error variable per output of the instance.
inline TotalSdcSpec totalize(const AffineSdcSpec& spec) {
  TotalSdcSpec total;
  total.instance = spec.instance;
  total.inputs = spec.inputs;
  total.outputs = spec.outputs;
  total.K = spec.K;
  return total;
}

inline json spec_to_json(const AffineSdcSpec& spec) {
  json j;
  j["instance"] = spec.instance;
  j["inputs"] = spec.inputs;
  j["outputs"] = spec.outputs;
  j["K"] = spec.K;
  json syms = json::array();
  for (uint32_t k = 0; k < spec.outputs.size(); ++k)
    syms.push_back(SymbolKey{spec.instance, k}.str());
  j["symbols"] = std::move(syms);
  return j;
}

}  // namespace flipforge

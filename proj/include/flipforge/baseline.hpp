// Monolithic whole-program analysis, utility metrics against it (value
// loss, excess cost, the A-H error-range interval) and target adjustment.
#pragma once

#include "flipforge/protection.hpp"

namespace flipforge {

// Whole-roi campaign: outcomes are classified against the final outputs.
// The site universe equals the union of per-instance sites plus the
// untested sites, with identical site ids.
inline CampaignResult run_monolithic(const Program& p,
                                     const SectionLayout& layout,
                                     const GoldenTrace& trace,
                                     const DetectorConfig& detector,
                                     const PruneConfig& prune, int jobs = 1) {
  auto sites = enumerate_sites(trace, SiteScope::whole_roi(), prune);
  return run_campaign(p, layout, trace, std::move(sites),
                      SiteScope::whole_roi(), detector, jobs);
}

// Monolithic SDC-Bad units per pc, used as the ground truth for utility.
struct MonoLabels {
  std::map<uint32_t, uint64_t> bad_units;
  uint64_t total_bad = 0;

  static MonoLabels from(const CampaignResult& mono,
                         const std::vector<std::string>& lambdas,
                         const SdcThresholds& thr) {
    MonoLabels lab;
    for (size_t i = 0; i < mono.sites.size(); ++i)
      if (monolithic_site_bad(mono.records[i], lambdas, thr)) {
        lab.bad_units[mono.sites[i].pc] += mono.sites[i].units;
        lab.total_bad += mono.sites[i].units;
      }
    return lab;
  }
};

// Fraction of monolithic SDC-Bad sites whose pc is protected. Defined as 1
// when the monolithic analysis found no SDC-Bad site at all.
inline double achieved_value(const Selection& sel, const MonoLabels& labels,
                             bool* no_bad = nullptr) {
  if (no_bad) *no_bad = labels.total_bad == 0;
  if (labels.total_bad == 0) return 1.0;
  uint64_t covered = 0;
  for (uint32_t pc : sel.pcs) {
    auto it = labels.bad_units.find(pc);
    if (it != labels.bad_units.end()) covered += it->second;
  }
  return (double)covered / (double)labels.total_bad;
}

struct CategoryCounts {
  uint64_t A = 0, B = 0, C = 0, D = 0, E = 0, F = 0, G = 0, H = 0;

  uint64_t total() const { return A + B + C + D + E + F + G + H; }
};

// Splits the monolithic site universe by outcome (SDC-Bad vs other), prune
// status (injected vs pruned) and protection (pc selected or not).
inline CategoryCounts categorize_sites(const CampaignResult& mono,
                                       const std::vector<std::string>& lambdas,
                                       const SdcThresholds& thr,
                                       const Selection& sel) {
  std::set<uint32_t> prot(sel.pcs.begin(), sel.pcs.end());
  CategoryCounts c;
  for (size_t i = 0; i < mono.sites.size(); ++i) {
    bool bad = monolithic_site_bad(mono.records[i], lambdas, thr);
    bool injected = mono.sites[i].prune != PruneStatus::Pruned;
    bool protect = prot.count(mono.sites[i].pc) > 0;
    uint64_t u = mono.sites[i].units;
    if (protect) {
      if (injected)
        (bad ? c.A : c.B) += u;
      else
        (bad ? c.C : c.D) += u;
    } else {
      if (injected)
        (bad ? c.E : c.F) += u;
      else
        (bad ? c.G : c.H) += u;
    }
  }
  return c;
}

struct ErrorRange {
  double v_min = 1, v_calc = 1, v_max = 1;
};

// Bounds on the actual protection value given the rate R of outcome
// misprediction for pruned sites. A zero denominator means no SDC-Bad site
// can exist on that side, and the corresponding quantity is defined as 1.
inline ErrorRange error_range(const CategoryCounts& c, double R) {
  if (R < 0 || R > 1) throw FatalError("error_range: R must be within [0, 1]");
  auto ratio = [](double num, double den) { return den == 0 ? 1.0 : num / den; };
  double A = (double)c.A, C = (double)c.C, D = (double)c.D, E = (double)c.E,
         G = (double)c.G, H = (double)c.H;
  ErrorRange r;
  r.v_min = ratio(A + (1 - R) * C, A + (1 - R) * C + E + G + R * H);
  r.v_max = ratio(A + C + R * D, A + C + R * D + E + (1 - R) * G);
  r.v_calc = ratio(A + C, A + C + E + G);
  return r;
}

struct AdjustResult {
  double adjusted_target = 1.0;
  Selection selection;
  bool warning = false;  // even the full selection misses the target
};

// Minimum adjusted target over the lattice of achievable raw-value
// fractions such that the resulting selection achieves v_trgt under the
// monolithic labels. Bisection assumes monotonicity; a linear verification
// scan below the found point guards against non-monotone achieved values.
inline AdjustResult adjust_target(const KnapsackSolver& solver,
                                  const MonoLabels& labels, double v_trgt) {
  if (v_trgt < 0 || v_trgt > 1)
    throw FatalError("adjust_target: target must be within [0, 1]");
  std::vector<uint64_t> candidates;
  for (uint64_t u = 0; u <= solver.total_units(); ++u)
    if (solver.achievable(u)) candidates.push_back(u);

  auto achieved_at = [&](uint64_t units) {
    return achieved_value(solver.solve_units(units), labels);
  };

  size_t lo = 0, hi = candidates.size();  // first index satisfying, if any
  while (lo < hi) {
    size_t mid = lo + (hi - lo) / 2;
    if (achieved_at(candidates[mid]) >= v_trgt)
      hi = mid;
    else
      lo = mid + 1;
  }
  std::optional<size_t> found;
  if (lo < candidates.size() && achieved_at(candidates[lo]) >= v_trgt)
    found = lo;
  // verification scan: achieved value need not be monotone in the target
  for (size_t i = 0; i < (found ? *found : candidates.size()); ++i)
    if (achieved_at(candidates[i]) >= v_trgt) {
      found = i;
      break;
    }

  AdjustResult res;
  uint64_t total = solver.total_units();
  if (!found) {
    res.adjusted_target = 1.0;
    res.selection = solver.solve_units(total);
    res.selection.target = 1.0;
    res.warning = true;
    return res;
  }
  uint64_t units = candidates[*found];
  res.adjusted_target = total == 0 ? 1.0 : (double)units / (double)total;
  res.selection = solver.solve_units(units);
  res.selection.target = res.adjusted_target;
  return res;
}

enum class AnalysisMode { FullAdjust, Incremental };

struct AdjustState {
  uint64_t m_adj = 0;  // modifications since the last adjustment
  uint64_t p_adj = 1;  // adjustment period, >= 1
  std::map<double, double> adjusted;  // original target -> adjusted target
  std::map<double, bool> warnings;
  bool initialized = false;

  static AdjustState fresh(uint64_t period) {
    AdjustState st;
    st.p_adj = period < 1 ? 1 : period;
    st.m_adj = st.p_adj;  // a fresh program always runs full+adjust
    return st;
  }
};

// Algorithm-2 style mode decision: every modification advances the counter;
// once it reaches the adjustment period the full simultaneous analysis runs
// and the counter resets, otherwise only the compositional analysis runs
// with the stored adjusted targets.
inline AnalysisMode step_modification(AdjustState& st, bool modified) {
  if (modified) ++st.m_adj;
  if (st.m_adj >= st.p_adj) {
    st.m_adj = 0;
    return AnalysisMode::FullAdjust;
  }
  return AnalysisMode::Incremental;
}

struct UtilityReport {
  double v_trgt = 0;
  double v_trgt_adj = 0;
  double v_achv = 0;             // achieved at the adjusted target
  double v_achv_unadjusted = 0;  // achieved at the original target
  double v_loss = 0;             // v_trgt - v_achv
  double c_ff = 0;               // normalized cost of the adjusted selection
  double c_ff_unadjusted = 0;
  double c_mono = 0;             // normalized cost of the monolithic selection
  double c_excess = 0;           // c_ff - c_mono
  CategoryCounts counts;
  double R = 0;
  double v_min = 1, v_calc = 1, v_max = 1;
  bool within_error_range = false;
  bool no_mono_bad = false;
  bool adjust_warning = false;
};

inline json utility_to_json(const UtilityReport& u) {
  json j;
  j["v_trgt"] = u.v_trgt;
  j["v_trgt_adj"] = u.v_trgt_adj;
  j["v_achv"] = u.v_achv;
  j["v_achv_unadjusted"] = u.v_achv_unadjusted;
  j["v_loss"] = u.v_loss;
  j["c_ff"] = u.c_ff;
  j["c_ff_unadjusted"] = u.c_ff_unadjusted;
  j["c_mono"] = u.c_mono;
  j["c_excess"] = u.c_excess;
  j["counts"] = {{"A", u.counts.A}, {"B", u.counts.B}, {"C", u.counts.C},
                 {"D", u.counts.D}, {"E", u.counts.E}, {"F", u.counts.F},
                 {"G", u.counts.G}, {"H", u.counts.H}};
  j["R"] = u.R;
  j["v_min"] = u.v_min;
  j["v_calc"] = u.v_calc;
  j["v_max"] = u.v_max;
  j["within_error_range"] = u.within_error_range;
  if (u.no_mono_bad) j["no_mono_bad"] = true;
  if (u.adjust_warning) j["adjust_warning"] = true;
  return j;
}

}  // namespace flipforge

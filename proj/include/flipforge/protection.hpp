// Per-static-instruction protection value and minimum-cost selection via
// 0-1 knapsack, plus the target sweep.
#pragma once

#include <memory>

#include "flipforge/propagation.hpp"

namespace flipforge {

// Value/cost model over static instructions. Values are kept as integral
// site units so the knapsack DP is exact; v(pc) = raw(pc) / total_raw.
struct ProtectionModel {
  std::map<uint32_t, uint64_t> raw;   // pc -> SDC-Bad site units
  std::map<uint32_t, uint64_t> cost;  // pc -> dynamic instance count in roi
  uint64_t total_raw = 0;
  uint64_t total_roi_dyn = 0;

  double value(uint32_t pc) const {
    auto it = raw.find(pc);
    if (it == raw.end() || total_raw == 0) return 0.0;
    return (double)it->second / (double)total_raw;
  }
};

struct Selection {
  std::vector<uint32_t> pcs;  // ascending
  double target = 0;          // the v_trgt it was solved for
  uint64_t raw_units = 0;
  double value = 0;           // raw_units / total_raw
  uint64_t cost = 0;
  double normalized_cost = 0; // cost / total_roi_dyn
};

// One per-instance injection campaign feeding Algorithm-1 style valuation.
// `records == nullptr` marks the untested pseudo-section whose sites are
// assumed SDC-Bad unconditionally.
struct InstanceCampaign {
  std::string instance;
  const std::vector<ErrorSite>* sites = nullptr;
  const std::vector<OutcomeRecord>* records = nullptr;
};

// For every non-detected site j of instance s, the site counts toward its
// static instruction iff some final output's specialized bound evaluated at
// the site's section-boundary magnitudes exceeds that output's threshold.
inline ProtectionModel compute_values(
    const std::vector<InstanceCampaign>& campaigns, const EndToEndSpec& e2e,
    const SdcThresholds& thr, const GoldenTrace& trace) {
  ProtectionModel model;
  model.total_roi_dyn = trace.roi_dyn_count();
  for (auto& [pc, n] : trace.pc_dyn_count) model.cost[pc] = n;

  std::vector<double> eps(e2e.lambdas.size());
  for (size_t l = 0; l < e2e.lambdas.size(); ++l)
    eps[l] = thr.epsilon(e2e.lambdas[l]);

  for (auto& camp : campaigns) {
    if (!camp.sites) throw FatalError("compute_values: missing site list");
    if (camp.records == nullptr) {
      // untested section: every site contributes
      for (auto& site : *camp.sites) model.raw[site.pc] += site.units;
      continue;
    }
    if (camp.records->size() != camp.sites->size())
      throw FatalError("compute_values: site lacking outcome in instance " +
                       camp.instance);
    std::vector<AffineForm> forms = specialize(e2e, camp.instance);
    // nonzero (output k, coeff) terms per final output
    std::vector<std::vector<std::pair<uint32_t, double>>> terms(forms.size());
    for (size_t l = 0; l < forms.size(); ++l)
      for (auto& [sym, coeff] : forms[l].coeffs)
        terms[l].push_back({sym.output, coeff});

    for (size_t i = 0; i < camp.sites->size(); ++i) {
      const OutcomeRecord& rec = (*camp.records)[i];
      if (rec.detected_like()) continue;
      if (rec.tag == OutcomeTag::Masked) continue;
      bool bad = false;
      for (size_t l = 0; l < terms.size() && !bad; ++l) {
        double bound = 0.0;
        for (auto& [k, coeff] : terms[l]) bound += coeff * rec.r.at(k);
        bad = bound > eps[l];
      }
      if (bad) model.raw[(*camp.sites)[i].pc] += (*camp.sites)[i].units;
    }
  }
  for (auto& [pc, units] : model.raw) model.total_raw += units;
  return model;
}

// Monolithic valuation: outcomes are classified against the final outputs
// directly, so the bound for output lambda is just r[lambda].
inline bool monolithic_site_bad(const OutcomeRecord& rec,
                                const std::vector<std::string>& lambdas,
                                const SdcThresholds& thr) {
  if (rec.detected_like()) return false;
  if (rec.tag == OutcomeTag::Masked) return false;
  for (size_t l = 0; l < lambdas.size(); ++l)
    if (rec.r.at(l) > thr.epsilon(lambdas[l])) return true;
  return false;
}

inline ProtectionModel compute_values_monolithic(
    const CampaignResult& mono, const std::vector<std::string>& lambdas,
    const SdcThresholds& thr, const GoldenTrace& trace) {
  ProtectionModel model;
  model.total_roi_dyn = trace.roi_dyn_count();
  for (auto& [pc, n] : trace.pc_dyn_count) model.cost[pc] = n;
  for (size_t i = 0; i < mono.sites.size(); ++i)
    if (monolithic_site_bad(mono.records[i], lambdas, thr))
      model.raw[mono.sites[i].pc] += mono.sites[i].units;
  for (auto& [pc, units] : model.raw) model.total_raw += units;
  return model;
}

namespace detail {

class BitMatrix {
 public:
  BitMatrix(size_t rows, size_t cols)
      : cols_(cols), stride_((cols + 63) / 64), words_(rows * stride_, 0) {}
  void set(size_t r, size_t c) { words_[r * stride_ + c / 64] |= 1ull << (c % 64); }
  bool get(size_t r, size_t c) const {
    return (words_[r * stride_ + c / 64] >> (c % 64)) & 1;
  }

 private:
  size_t cols_, stride_;
  std::vector<uint64_t> words_;
};

}  // namespace detail

// Exact DP over integral value units: table indexed by achievable raw value,
// storing minimum cost (ties: fewer instructions, then the lexicographically
// smallest pc set). Items are processed in descending pc order so that the
// take-on-tie rule reconstructs the lexicographically smallest set.
class KnapsackSolver {
 public:
  explicit KnapsackSolver(const ProtectionModel& model) : model_(model) {
    for (auto& [pc, units] : model.raw)
      if (units > 0) items_.push_back({pc, units, model.cost.at(pc)});
    std::sort(items_.begin(), items_.end(),
              [](const Item& a, const Item& b) { return a.pc > b.pc; });
    total_ = model.total_raw;
    if (total_ > 10'000'000)
      throw FatalError("protection model too large for the DP table");
    if (!items_.empty() && items_.size() * (total_ + 1) > (size_t)2e9)
      throw FatalError("protection model too large for the DP table");
    dp_cost_.assign(total_ + 1, kInfCost);
    dp_cnt_.assign(total_ + 1, 0);
    dp_cost_[0] = 0;
    bits_ = std::make_unique<detail::BitMatrix>(items_.size(), total_ + 1);
    for (size_t i = 0; i < items_.size(); ++i) {
      const Item& it = items_[i];
      for (uint64_t u = total_; u + 1 > it.units; --u) {
        uint64_t from = u - it.units;
        if (dp_cost_[from] == kInfCost) continue;
        uint64_t cand_cost = dp_cost_[from] + it.cost;
        uint32_t cand_cnt = dp_cnt_[from] + 1;
        if (cand_cost < dp_cost_[u] ||
            (cand_cost == dp_cost_[u] && cand_cnt <= dp_cnt_[u])) {
          dp_cost_[u] = cand_cost;
          dp_cnt_[u] = cand_cnt;
          bits_->set(i, u);
        }
      }
    }
  }

  uint64_t total_units() const { return total_; }
  bool achievable(uint64_t units) const {
    return units <= total_ && dp_cost_[units] != kInfCost;
  }

  // Minimum-cost selection with raw value >= units.
  Selection solve_units(uint64_t units) const {
    if (units > total_)
      throw FatalError("solve_knapsack: target exceeds total value");
    uint64_t best_cost = kInfCost;
    uint32_t best_cnt = 0;
    std::vector<uint64_t> tied;
    for (uint64_t u = units; u <= total_; ++u) {
      if (dp_cost_[u] == kInfCost) continue;
      if (dp_cost_[u] < best_cost ||
          (dp_cost_[u] == best_cost && dp_cnt_[u] < best_cnt)) {
        best_cost = dp_cost_[u];
        best_cnt = dp_cnt_[u];
        tied.clear();
      }
      if (dp_cost_[u] == best_cost && dp_cnt_[u] == best_cnt)
        tied.push_back(u);
    }
    if (best_cost == kInfCost)
      throw FatalError("solve_knapsack: no achievable value");
    std::vector<uint32_t> best_set;
    bool have = false;
    for (uint64_t u : tied) {
      std::vector<uint32_t> set = reconstruct(u);
      if (!have || set < best_set) {
        best_set = std::move(set);
        have = true;
      }
    }

    Selection sel;
    sel.pcs = best_set;
    sel.raw_units = 0;
    sel.cost = 0;
    for (uint32_t pc : sel.pcs) {
      sel.raw_units += model_.raw.at(pc);
      sel.cost += model_.cost.at(pc);
    }
    sel.value = total_ ? (double)sel.raw_units / (double)total_ : 1.0;
    sel.normalized_cost =
        model_.total_roi_dyn ? (double)sel.cost / (double)model_.total_roi_dyn
                             : 0.0;
    return sel;
  }

  // Converts the real target into the integral constraint with a ceiling.
  uint64_t units_for_target(double v_trgt) const {
    if (v_trgt < 0.0 || v_trgt > 1.0)
      throw FatalError("solve_knapsack: target must be within [0, 1]");
    double x = v_trgt * (double)total_;
    double guard = 1e-9 * std::max(1.0, x);
    uint64_t u = (uint64_t)std::ceil(x - guard);
    return std::min<uint64_t>(u, total_);
  }

  Selection solve(double v_trgt) const {
    Selection sel = solve_units(units_for_target(v_trgt));
    sel.target = v_trgt;
    return sel;
  }

 private:
  struct Item {
    uint32_t pc;
    uint64_t units;
    uint64_t cost;
  };
  static constexpr uint64_t kInfCost = ~0ull;

  std::vector<uint32_t> reconstruct(uint64_t u) const {
    std::vector<uint32_t> set;
    for (size_t i = items_.size(); i-- > 0;) {
      if (u == 0) break;
      if (items_[i].units <= u && bits_->get(i, u)) {
        set.push_back(items_[i].pc);
        u -= items_[i].units;
      }
    }
    std::sort(set.begin(), set.end());
    return set;
  }

  ProtectionModel model_;
  std::vector<Item> items_;
  uint64_t total_ = 0;
  std::vector<uint64_t> dp_cost_;
  std::vector<uint32_t> dp_cnt_;
  std::unique_ptr<detail::BitMatrix> bits_;
};

inline Selection solve_knapsack(const ProtectionModel& model, double v_trgt) {
  return KnapsackSolver(model).solve(v_trgt);
}

// One optimal selection per ascending target; costs are non-decreasing.
inline std::vector<Selection> sweep(const ProtectionModel& model,
                                    const std::vector<double>& targets) {
  KnapsackSolver solver(model);
  std::vector<Selection> out;
  for (double t : targets) out.push_back(solver.solve(t));
  return out;
}

inline json selection_to_json(const Selection& sel, double adjusted_target) {
  json j;
  j["target"] = sel.target;
  j["adjusted_target"] = adjusted_target;
  j["pcs"] = sel.pcs;
  j["value"] = sel.value;
  j["cost"] = sel.cost;
  j["normalized_cost"] = sel.normalized_cost;
  return j;
}

}  // namespace flipforge

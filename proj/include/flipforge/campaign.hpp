// Pipeline orchestration: cache-aware per-section campaigns, sensitivity,
// composition, selection, the simultaneous monolithic mode with target
// adjustment, and incremental re-analysis of modified programs.
#pragma once

#include <filesystem>
#include <fstream>

#include "flipforge/baseline.hpp"
#include "flipforge/sensitivity.hpp"
#include "flipforge/sha256.hpp"

namespace flipforge {

namespace fs = std::filesystem;

struct RunConfig {
  std::string program_path;
  std::string layout_path;
  SdcThresholds thresholds;
  std::vector<double> targets = {0.90, 0.95, 0.99, 1.00};
  PruneConfig prune;
  double R = 0.04;
  SensitivityConfig sensitivity;
  DetectorConfig detector;
  enum class Mode { Auto, Compositional, Monolithic, Both } mode = Mode::Auto;
  uint64_t p_adj = 2;
  std::string store_dir = "store";
  std::string out_dir = "out";
  int jobs = 1;
  uint64_t seed = 0;
  std::string label;   // default: content hash prefix of program+layout
  std::string family;  // benchmark identity for the adjust state; default:
                       // layout hash prefix
};

inline const char* mode_name(RunConfig::Mode m) {
  switch (m) {
    case RunConfig::Mode::Auto: return "auto";
    case RunConfig::Mode::Compositional: return "compositional";
    case RunConfig::Mode::Monolithic: return "monolithic";
    case RunConfig::Mode::Both: return "both";
  }
  return "?";
}

inline RunConfig::Mode mode_from_name(const std::string& s) {
  if (s == "auto") return RunConfig::Mode::Auto;
  if (s == "compositional") return RunConfig::Mode::Compositional;
  if (s == "monolithic") return RunConfig::Mode::Monolithic;
  if (s == "both") return RunConfig::Mode::Both;
  throw std::runtime_error("unknown mode: " + s);
}

// Merges a JSON config document into a RunConfig. Paths stay as written;
// the CLI resolves them against the config file's directory.
inline void merge_config_json(RunConfig& cfg, const json& j) {
  if (j.contains("program")) cfg.program_path = j["program"].get<std::string>();
  if (j.contains("layout")) cfg.layout_path = j["layout"].get<std::string>();
  if (j.contains("epsilon")) {
    const json& e = j["epsilon"];
    if (e.is_number()) {
      cfg.thresholds.default_epsilon = e.get<double>();
    } else {
      if (e.contains("default"))
        cfg.thresholds.default_epsilon = e["default"].get<double>();
      if (e.contains("per_output"))
        for (auto& [name, v] : e["per_output"].items())
          cfg.thresholds.per_output[name] = v.get<double>();
    }
  }
  if (j.contains("targets")) cfg.targets = j["targets"].get<std::vector<double>>();
  if (j.contains("prune")) cfg.prune.enabled = j["prune"].get<bool>();
  if (j.contains("R")) cfg.R = j["R"].get<double>();
  if (j.contains("sensitivity")) {
    const json& s = j["sensitivity"];
    if (s.contains("phi_max")) cfg.sensitivity.phi_max = s["phi_max"].get<double>();
    if (s.contains("samples")) cfg.sensitivity.samples = s["samples"].get<uint64_t>();
    if (s.contains("pattern"))
      cfg.sensitivity.pattern = pattern_from_name(s["pattern"].get<std::string>());
  }
  if (j.contains("detector")) {
    const json& d = j["detector"];
    if (d.contains("enabled")) cfg.detector.enabled = d["enabled"].get<bool>();
    if (d.contains("require_finite"))
      cfg.detector.require_finite = d["require_finite"].get<bool>();
    if (d.contains("ranges"))
      for (auto& [name, lohi] : d["ranges"].items())
        cfg.detector.ranges.push_back(
            {name, lohi.at(0).get<double>(), lohi.at(1).get<double>()});
  }
  if (j.contains("mode")) cfg.mode = mode_from_name(j["mode"].get<std::string>());
  if (j.contains("p_adj")) cfg.p_adj = j["p_adj"].get<uint64_t>();
  if (j.contains("store")) cfg.store_dir = j["store"].get<std::string>();
  if (j.contains("out")) cfg.out_dir = j["out"].get<std::string>();
  if (j.contains("jobs")) cfg.jobs = j["jobs"].get<int>();
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();
  if (j.contains("label")) cfg.label = j["label"].get<std::string>();
  if (j.contains("family")) cfg.family = j["family"].get<std::string>();
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FatalError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_atomic(const fs::path& path, const std::string& data) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FatalError("cannot write " + tmp.string());
    out << data;
  }
  fs::rename(tmp, path);
}

namespace detail {

inline json double_json(double v) {
  if (std::isinf(v)) return json("inf");
  return json(v);
}

inline double double_from_json(const json& j) {
  if (j.is_string()) return kInf;
  return j.get<double>();
}

inline std::string double_key(double v) {
  char buf[64];
  snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// Canonical serialization of a section body. Branch targets are encoded
// relative to the section begin marker so surrounding code can shift
// without invalidating the section's cache entries.
inline std::string section_body_canonical(const Program& p, int begin_pc,
                                          int end_pc) {
  std::ostringstream ss;
  for (int pc = begin_pc; pc <= end_pc; ++pc) {
    const Instruction& ins = p.instructions[pc];
    ss << (int)ins.op << ',' << (int)ins.bank << ',' << (int)ins.dst << ','
       << (int)ins.src1 << ',' << (int)ins.src2 << ',' << ins.imm << ','
       << ins.mem_base << ',' << ins.mem_off << ','
       << (ins.target < 0 ? 0 : ins.target - begin_pc) << ';';
  }
  return ss.str();
}

// Cache key of one section instance: section body, declared region geometry,
// the instance's golden input values, and every configuration knob that
// influences stored outcomes or the stored sensitivity spec.
inline std::string instance_cache_key(const Program& p,
                                      const SectionLayout& layout,
                                      const GoldenTrace& trace,
                                      int instance_idx, const RunConfig& cfg) {
  const InstanceInfo& inst = trace.instances[instance_idx];
  const StaticSection* sec = layout.find(inst.section_id);
  Sha256 h;
  h.update("flipforge-isa-1\n");
  h.update(section_body_canonical(p, inst.begin_pc, inst.end_pc));
  h.update_u64(p.memory.size());
  auto hash_region = [&](const MemRegion& r) {
    h.update(r.name);
    h.update_u64(r.addr);
    h.update_u64(r.len);
    h.update_u64((uint64_t)r.bank);
  };
  for (auto& r : sec->inputs) hash_region(r);
  h.update("|outputs|");
  for (auto& r : sec->outputs) hash_region(r);
  h.update_u64(sec->pad);
  h.update("|future|");
  auto fit = layout.future_use.find(sec->id);
  if (fit != layout.future_use.end())
    for (auto& r : fit->second) hash_region(r);
  h.update("|inputs|");
  for (auto& words : inst.golden_inputs)
    for (uint64_t w : words) h.update_u64(w);
  h.update("|detector|");
  h.update_u64(cfg.detector.enabled);
  h.update_u64(cfg.detector.require_finite);
  for (auto& r : cfg.detector.ranges) {
    h.update(r.region);
    h.update_u64(std::bit_cast<uint64_t>(r.lo));
    h.update_u64(std::bit_cast<uint64_t>(r.hi));
  }
  h.update("|prune|");
  h.update_u64(cfg.prune.enabled);
  h.update("|sens|");
  h.update_u64(std::bit_cast<uint64_t>(cfg.sensitivity.phi_max));
  h.update_u64(cfg.sensitivity.samples);
  h.update_u64(cfg.seed);
  h.update_u64((uint64_t)cfg.sensitivity.pattern);
  return h.hex();
}

struct CacheEntry {
  std::string key;
  std::string instance;
  uint64_t site_count = 0;
  uint64_t runs_executed = 0;
  std::vector<OutcomeRecord> records;  // in enumeration order
  AffineSdcSpec spec;
  std::vector<std::vector<uint64_t>> golden_outputs;
};

inline json cache_entry_to_json(const CacheEntry& e) {
  json j;
  j["schema"] = 1;
  j["key"] = e.key;
  j["instance"] = e.instance;
  j["site_count"] = e.site_count;
  j["runs_executed"] = e.runs_executed;
  j["golden_outputs"] = e.golden_outputs;
  j["spec"] = {{"inputs", e.spec.inputs},
               {"outputs", e.spec.outputs},
               {"K", json::array()}};
  for (auto& row : e.spec.K) {
    json r = json::array();
    for (double v : row) r.push_back(detail::double_json(v));
    j["spec"]["K"].push_back(std::move(r));
  }
  json recs = json::array();
  for (auto& rec : e.records) {
    json r = json::array();
    r.push_back((int)rec.tag);
    r.push_back(rec.inferred ? 1 : 0);
    for (double v : rec.r) r.push_back(detail::double_json(v));
    recs.push_back(std::move(r));
  }
  j["records"] = std::move(recs);
  return j;
}

inline CacheEntry cache_entry_from_json(const json& j) {
  CacheEntry e;
  e.key = j.at("key").get<std::string>();
  e.instance = j.at("instance").get<std::string>();
  e.site_count = j.at("site_count").get<uint64_t>();
  e.runs_executed = j.at("runs_executed").get<uint64_t>();
  e.golden_outputs =
      j.at("golden_outputs").get<std::vector<std::vector<uint64_t>>>();
  e.spec.instance = e.instance;
  e.spec.inputs = j.at("spec").at("inputs").get<std::vector<std::string>>();
  e.spec.outputs = j.at("spec").at("outputs").get<std::vector<std::string>>();
  for (auto& row : j.at("spec").at("K")) {
    std::vector<double> r;
    for (auto& v : row) r.push_back(detail::double_from_json(v));
    e.spec.K.push_back(std::move(r));
  }
  for (auto& rj : j.at("records")) {
    OutcomeRecord rec;
    rec.tag = (OutcomeTag)rj.at(0).get<int>();
    rec.inferred = rj.at(1).get<int>() != 0;
    for (size_t i = 2; i < rj.size(); ++i)
      rec.r.push_back(detail::double_from_json(rj[i]));
    e.records.push_back(std::move(rec));
  }
  return e;
}

// Directory-backed cache: one JSON file per entry plus an index manifest.
// Writes go through a temp file and rename.
class CacheStore {
 public:
  explicit CacheStore(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const { return dir_; }

  std::optional<CacheEntry> load(const std::string& key) const {
    fs::path p = dir_ / (key + ".json");
    if (!fs::exists(p)) return {};
    return cache_entry_from_json(json::parse(read_file(p)));
  }

  void save(const CacheEntry& e) {
    write_file_atomic(dir_ / (e.key + ".json"), cache_entry_to_json(e).dump(1));
    json manifest = json::object();
    fs::path mpath = dir_ / "manifest.json";
    if (fs::exists(mpath)) manifest = json::parse(read_file(mpath));
    manifest[e.key] = {{"instance", e.instance}, {"sites", e.site_count}};
    write_file_atomic(mpath, manifest.dump(1));
  }

  AdjustState load_state(const std::string& family, uint64_t p_adj) const {
    fs::path p = dir_ / ("state-" + family + ".json");
    if (!fs::exists(p)) return AdjustState::fresh(p_adj);
    json j = json::parse(read_file(p));
    AdjustState st;
    st.initialized = true;
    st.m_adj = j.at("m_adj").get<uint64_t>();
    st.p_adj = j.at("p_adj").get<uint64_t>();
    for (auto& [k, v] : j.at("adjusted").items())
      st.adjusted[strtod(k.c_str(), nullptr)] = v.get<double>();
    for (auto& [k, v] : j.at("warnings").items())
      st.warnings[strtod(k.c_str(), nullptr)] = v.get<bool>();
    return st;
  }

  void save_state(const std::string& family, const AdjustState& st) {
    json j;
    j["m_adj"] = st.m_adj;
    j["p_adj"] = st.p_adj;
    j["adjusted"] = json::object();
    for (auto& [t, v] : st.adjusted) j["adjusted"][detail::double_key(t)] = v;
    j["warnings"] = json::object();
    for (auto& [t, v] : st.warnings) j["warnings"][detail::double_key(t)] = v;
    write_file_atomic(dir_ / ("state-" + family + ".json"), j.dump(1));
  }

  void clear() {
    if (fs::exists(dir_)) fs::remove_all(dir_);
  }

  json inspect() const {
    fs::path mpath = dir_ / "manifest.json";
    if (!fs::exists(mpath)) return json::object();
    return json::parse(read_file(mpath));
  }

 private:
  fs::path dir_;
};

// Mixed whole-roi campaign for the simultaneous mode: sites of freshly
// analyzed instances replay once and classify both scopes; sites of cached
// instances and untested sites only need the final outcome.
struct MixedCampaignOutput {
  std::map<int, CampaignResult> section_results;  // fresh instances only
  CampaignResult mono;                            // whole-roi labels
  uint64_t executed_runs = 0;
  uint64_t shared_runs = 0;
};

inline MixedCampaignOutput run_mixed_campaign(
    const Program& p, const SectionLayout& layout, const GoldenTrace& trace,
    const PruneConfig& prune, const DetectorConfig& detector, int jobs,
    const std::set<int>& fresh_instances) {
  MixedCampaignOutput out;
  ResolvedDetector det = resolve_detector(detector, layout);
  uint64_t cap = default_hard_cap(trace);

  std::vector<ErrorSite> whole = enumerate_sites(trace, SiteScope::whole_roi(), prune);
  std::map<int, std::vector<ErrorSite>> inst_sites;
  for (int i : fresh_instances)
    inst_sites[i] = enumerate_sites(trace, SiteScope::of_instance(i), prune);

  // run plan: which scopes each distinct replay must classify
  struct Need {
    int section_instance = -1;
    bool final_scope = false;
  };
  std::map<uint64_t, size_t> whole_idx_of;
  for (size_t i = 0; i < whole.size(); ++i) whole_idx_of[whole[i].id] = i;
  std::map<uint64_t, Need> plan;
  for (auto& s : whole)
    if (s.prune != PruneStatus::Pruned) plan[s.id].final_scope = true;
  for (auto& [i, sites] : inst_sites)
    for (auto& s : sites)
      if (s.prune != PruneStatus::Pruned) plan[s.id].section_instance = i;

  std::vector<ErrorSite> to_run_sites;
  std::map<uint64_t, size_t> run_idx;
  for (auto& [id, need] : plan) {
    // take the geometry from the whole-roi enumeration (ids are shared)
    run_idx[id] = to_run_sites.size();
    to_run_sites.push_back(whole[whole_idx_of.at(id)]);
    if (need.section_instance >= 0 && need.final_scope) ++out.shared_runs;
  }
  out.executed_runs = to_run_sites.size();

  std::vector<OutcomeRecord> section_measured(to_run_sites.size());
  std::vector<OutcomeRecord> final_measured(to_run_sites.size());
  std::vector<size_t> indices(to_run_sites.size());
  for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  detail::parallel_campaign(
      p, trace, to_run_sites, indices, jobs, [&](size_t idx, Cpu& cpu) {
        const ErrorSite& site = to_run_sites[idx];
        const Need& need = plan.at(site.id);
        ScopeTargets t;
        if (need.section_instance >= 0)
          t = section_scope_targets(trace, trace.instances[need.section_instance],
                                    site.dyn);
        if (need.final_scope) add_final_scope(t, trace, layout, site.dyn);
        InjectionOutcome o = run_scopes(cpu, site, t, det, cap);
        if (t.want_section) section_measured[idx] = o.section;
        if (t.want_final) final_measured[idx] = o.final;
      });

  // assemble per-instance compositional results (pilot inference included)
  for (auto& [i, sites] : inst_sites) {
    CampaignResult res;
    res.records.resize(sites.size());
    std::map<uint64_t, size_t> pos;
    for (size_t k = 0; k < sites.size(); ++k) pos[sites[k].id] = k;
    uint64_t executed = 0;
    for (size_t k = 0; k < sites.size(); ++k) {
      if (sites[k].prune == PruneStatus::Pruned) continue;
      res.records[k] = section_measured[run_idx.at(sites[k].id)];
      res.records[k].site_id = sites[k].id;
      ++executed;
    }
    for (size_t k = 0; k < sites.size(); ++k) {
      if (sites[k].prune != PruneStatus::Pruned) continue;
      OutcomeRecord rec = res.records[pos.at(sites[k].pilot_id)];
      rec.site_id = sites[k].id;
      rec.inferred = true;
      res.records[k] = rec;
    }
    res.runs_executed = executed;
    res.sites = sites;
    out.section_results[i] = std::move(res);
  }

  // assemble monolithic labels
  out.mono.records.resize(whole.size());
  std::map<uint64_t, size_t> pos;
  for (size_t k = 0; k < whole.size(); ++k) pos[whole[k].id] = k;
  uint64_t mono_runs = 0;
  for (size_t k = 0; k < whole.size(); ++k) {
    if (whole[k].prune == PruneStatus::Pruned) continue;
    out.mono.records[k] = final_measured[run_idx.at(whole[k].id)];
    out.mono.records[k].site_id = whole[k].id;
    ++mono_runs;
  }
  for (size_t k = 0; k < whole.size(); ++k) {
    if (whole[k].prune != PruneStatus::Pruned) continue;
    OutcomeRecord rec = out.mono.records[pos.at(whole[k].pilot_id)];
    rec.site_id = whole[k].id;
    rec.inferred = true;
    out.mono.records[k] = rec;
  }
  out.mono.runs_executed = mono_runs;
  out.mono.sites = std::move(whole);
  return out;
}

// Marks instances whose body bytes or golden input values changed between
// two versions sharing a section-id space. Downstream closure is implicit:
// changed outputs change downstream golden inputs.
inline std::set<std::string> diff_sections(const Program& old_p,
                                           const GoldenTrace& old_trace,
                                           const Program& new_p,
                                           const GoldenTrace& new_trace,
                                           const SectionLayout& layout) {
  auto ids_of = [](const GoldenTrace& t) {
    std::set<uint64_t> ids;
    for (auto& i : t.instances) ids.insert(i.section_id);
    return ids;
  };
  if (ids_of(old_trace) != ids_of(new_trace))
    throw FatalError("layout drift: section-id spaces differ");
  (void)layout;

  auto signature = [](const Program& p, const InstanceInfo& inst) {
    Sha256 h;
    h.update(section_body_canonical(p, inst.begin_pc, inst.end_pc));
    h.update("|in|");
    for (auto& words : inst.golden_inputs)
      for (uint64_t w : words) h.update_u64(w);
    return h.hex();
  };
  std::map<std::string, std::string> old_sig;
  for (auto& inst : old_trace.instances)
    old_sig[inst.ref().str()] = signature(old_p, inst);
  std::set<std::string> changed;
  for (auto& inst : new_trace.instances) {
    auto it = old_sig.find(inst.ref().str());
    if (it == old_sig.end() || it->second != signature(new_p, inst))
      changed.insert(inst.ref().str());
  }
  return changed;
}

struct AnalyzeResult {
  std::string label;
  std::string analysis;  // "compositional", "monolithic" or "both"
  json report;
  json accounting;
  ProtectionModel model;
  std::vector<Selection> selections;  // one per target, adjusted when known
  std::vector<UtilityReport> utilities;
  EndToEndSpec e2e;
  uint64_t executed_runs = 0;
  uint64_t reused_runs = 0;
  uint64_t fresh_total = 0;
  uint64_t shared_runs = 0;
  uint64_t mono_runs = 0;
  std::vector<std::string> reanalyzed;
  bool ran_monolithic = false;
};

namespace detail {

inline json model_to_json(const ProtectionModel& m) {
  json pcs = json::array();
  for (auto& [pc, cost] : m.cost) {
    auto rit = m.raw.find(pc);
    uint64_t raw = rit == m.raw.end() ? 0 : rit->second;
    pcs.push_back(json{{"pc", pc}, {"raw", raw}, {"cost", cost}});
  }
  return json{{"total_raw", m.total_raw},
              {"total_roi_dyn", m.total_roi_dyn},
              {"pcs", std::move(pcs)}};
}

inline json golden_outputs_json(const SectionLayout& layout,
                                const GoldenTrace& trace) {
  json out = json::object();
  for (size_t l = 0; l < layout.final_outputs.size(); ++l) {
    const MemRegion& r = layout.final_outputs[l];
    json vals = json::array();
    for (uint64_t bits : trace.final_outputs[l]) {
      if (r.bank == Bank::Float)
        vals.push_back(double_json(std::bit_cast<double>(bits)));
      else
        vals.push_back((int64_t)bits);
    }
    out[r.name] = std::move(vals);
  }
  return out;
}

}  // namespace detail

// Full pipeline over one program version. The store carries both the
// per-instance result cache and the adjust state across versions.
inline AnalyzeResult analyze(const Program& p, const SectionLayout& layout,
                             const RunConfig& cfg, CacheStore& store) {
  AnalyzeResult result;
  auto diags = validate_layout(p, layout);
  if (!diags.empty())
    throw FatalError("stage validate: " + diags.front() +
                     (diags.size() > 1 ? " (and " +
                                             std::to_string(diags.size() - 1) +
                                             " more)"
                                       : ""));

  std::string program_text = print_program(p);
  std::string layout_text = layout_to_json(layout).dump();
  std::string program_sha = sha256_hex(program_text);
  std::string layout_sha = sha256_hex(layout_text);
  result.label = cfg.label.empty() ? program_sha.substr(0, 12) : cfg.label;
  std::string family =
      cfg.family.empty() ? layout_sha.substr(0, 12) : cfg.family;

  GoldenTrace trace;
  try {
    trace = run_golden(p, layout);
  } catch (const FatalError& e) {
    throw FatalError("stage golden: " + std::string(e.what()));
  }

  SensitivityConfig sens = cfg.sensitivity;
  sens.seed = cfg.seed;

  std::vector<std::string> lambdas;
  for (auto& r : layout.final_outputs) lambdas.push_back(r.name);

  // ---- monolithic-only mode -------------------------------------------
  if (cfg.mode == RunConfig::Mode::Monolithic) {
    CampaignResult mono =
        run_monolithic(p, layout, trace, cfg.detector, cfg.prune, cfg.jobs);
    result.analysis = "monolithic";
    result.ran_monolithic = true;
    result.mono_runs = mono.runs_executed;
    result.executed_runs = mono.runs_executed;
    result.model = compute_values_monolithic(mono, lambdas, cfg.thresholds, trace);
    KnapsackSolver solver(result.model);
    json sels = json::array();
    for (double t : cfg.targets) {
      Selection sel = solver.solve(t);
      result.selections.push_back(sel);
      sels.push_back(selection_to_json(sel, t));
    }
    json rep;
    rep["schema"] = 1;
    rep["analysis"] = "monolithic";
    rep["label"] = result.label;
    rep["program_sha"] = program_sha;
    rep["layout_sha"] = layout_sha;
    rep["universe"] = {{"roi_dyn", trace.roi_dyn_count()},
                       {"sites", mono.sites.size()}};
    rep["targets"] = cfg.targets;
    rep["prune"] = cfg.prune.enabled;
    rep["model"] = detail::model_to_json(result.model);
    rep["selections"] = std::move(sels);
    rep["golden_outputs"] = detail::golden_outputs_json(layout, trace);
    result.report = std::move(rep);
    result.accounting = {{"runs_executed", result.executed_runs},
                         {"runs_reused", 0},
                         {"fresh_total", result.executed_runs},
                         {"shared_runs", 0}};
    return result;
  }

  // ---- cache lookups ----------------------------------------------------
  size_t n = trace.instances.size();
  std::vector<std::string> keys(n);
  std::vector<std::optional<CacheEntry>> cached(n);
  std::set<int> fresh;
  for (size_t i = 0; i < n; ++i) {
    keys[i] = instance_cache_key(p, layout, trace, (int)i, cfg);
    cached[i] = store.load(keys[i]);
    if (cached[i]) {
      const InstanceInfo& inst = trace.instances[i];
      if (cached[i]->golden_outputs != inst.golden_outputs)
        throw FatalError("stage cache: stored golden outputs diverge for key " +
                         keys[i] + " (corrupt store)");
    } else {
      fresh.insert((int)i);
    }
  }
  bool modified = !fresh.empty();
  for (int i : fresh) result.reanalyzed.push_back(trace.instances[i].ref().str());

  AdjustState state = store.load_state(family, cfg.p_adj);
  AnalysisMode mode;
  switch (cfg.mode) {
    case RunConfig::Mode::Auto:
      mode = step_modification(state, modified);
      break;
    case RunConfig::Mode::Both:
      state.m_adj = 0;
      mode = AnalysisMode::FullAdjust;
      break;
    default:
      if (modified) ++state.m_adj;
      mode = AnalysisMode::Incremental;
      break;
  }
  result.analysis =
      mode == AnalysisMode::FullAdjust ? "both" : "compositional";

  // ---- campaigns ---------------------------------------------------------
  std::vector<CampaignResult> section_results(n);
  std::vector<AffineSdcSpec> specs(n);
  CampaignResult mono;

  if (mode == AnalysisMode::FullAdjust) {
    MixedCampaignOutput mixed = run_mixed_campaign(
        p, layout, trace, cfg.prune, cfg.detector, cfg.jobs, fresh);
    result.executed_runs = mixed.executed_runs;
    result.shared_runs = mixed.shared_runs;
    mono = std::move(mixed.mono);
    result.ran_monolithic = true;
    result.mono_runs = mono.runs_executed;
    for (int i : fresh) section_results[i] = std::move(mixed.section_results[i]);
  } else {
    for (int i : fresh) {
      auto sites = enumerate_sites(trace, SiteScope::of_instance(i), cfg.prune);
      section_results[i] =
          run_campaign(p, layout, trace, std::move(sites),
                       SiteScope::of_instance(i), cfg.detector, cfg.jobs);
      result.executed_runs += section_results[i].runs_executed;
    }
  }

  // sensitivity for fresh instances; cache entries for everything fresh
  for (int i : fresh) {
    specs[i] = estimate_spec(p, layout, trace, i, sens);
    CacheEntry e;
    e.key = keys[i];
    e.instance = trace.instances[i].ref().str();
    e.site_count = section_results[i].sites.size();
    e.runs_executed = section_results[i].runs_executed;
    e.records = section_results[i].records;
    e.spec = specs[i];
    e.golden_outputs = trace.instances[i].golden_outputs;
    store.save(e);
  }
  // rehydrate cached instances
  for (size_t i = 0; i < n; ++i) {
    if (fresh.count((int)i)) continue;
    const CacheEntry& e = *cached[i];
    auto sites = enumerate_sites(trace, SiteScope::of_instance((int)i), cfg.prune);
    if (sites.size() != e.site_count)
      throw FatalError("stage cache: site count mismatch for key " + keys[i]);
    CampaignResult res;
    res.sites = std::move(sites);
    res.records = e.records;
    for (size_t k = 0; k < res.records.size(); ++k)
      res.records[k].site_id = res.sites[k].id;
    res.runs_executed = 0;
    section_results[i] = std::move(res);
    result.reused_runs += e.runs_executed;
    specs[i] = e.spec;
    specs[i].instance = trace.instances[i].ref().str();
  }
  for (size_t i = 0; i < n; ++i)
    result.fresh_total += fresh.count((int)i)
                              ? section_results[i].runs_executed
                              : cached[i]->runs_executed;

  // ---- compose and value -------------------------------------------------
  std::vector<TotalSdcSpec> totals;
  for (size_t i = 0; i < n; ++i) totals.push_back(totalize(specs[i]));
  result.e2e = compose(layout, trace, totals);

  auto untested = enumerate_sites(trace, SiteScope::untested(), cfg.prune);
  std::vector<InstanceCampaign> camps;
  for (size_t i = 0; i < n; ++i)
    camps.push_back({trace.instances[i].ref().str(), &section_results[i].sites,
                     &section_results[i].records});
  camps.push_back({kUntestedInstance, &untested, nullptr});
  result.model = compute_values(camps, result.e2e, cfg.thresholds, trace);
  KnapsackSolver solver(result.model);

  // ---- selections (and utility in the simultaneous mode) ------------------
  json sels = json::array();
  json utils = json::array();
  if (mode == AnalysisMode::FullAdjust) {
    MonoLabels labels = MonoLabels::from(mono, lambdas, cfg.thresholds);
    ProtectionModel mono_model =
        compute_values_monolithic(mono, lambdas, cfg.thresholds, trace);
    KnapsackSolver mono_solver(mono_model);
    state.adjusted.clear();
    state.warnings.clear();
    for (double t : cfg.targets) {
      AdjustResult adj = adjust_target(solver, labels, t);
      state.adjusted[t] = adj.adjusted_target;
      state.warnings[t] = adj.warning;
      Selection sel = adj.selection;
      sel.target = t;
      result.selections.push_back(sel);
      sels.push_back(selection_to_json(sel, adj.adjusted_target));

      Selection unadj = solver.solve(t);
      Selection mono_sel = mono_solver.solve(t);
      UtilityReport u;
      u.v_trgt = t;
      u.v_trgt_adj = adj.adjusted_target;
      u.adjust_warning = adj.warning;
      u.v_achv = achieved_value(sel, labels, &u.no_mono_bad);
      u.v_achv_unadjusted = achieved_value(unadj, labels);
      u.v_loss = t - u.v_achv;
      u.c_ff = sel.normalized_cost;
      u.c_ff_unadjusted = unadj.normalized_cost;
      u.c_mono = mono_sel.normalized_cost;
      u.c_excess = u.c_ff - u.c_mono;
      u.counts = categorize_sites(mono, lambdas, cfg.thresholds, sel);
      u.R = cfg.R;
      ErrorRange er = error_range(u.counts, cfg.R);
      u.v_min = er.v_min;
      u.v_calc = er.v_calc;
      u.v_max = er.v_max;
      u.within_error_range = u.v_max >= t;
      result.utilities.push_back(u);
      utils.push_back(utility_to_json(u));
    }
  } else {
    for (double t : cfg.targets) {
      auto it = state.adjusted.find(t);
      double target = it == state.adjusted.end() ? t : it->second;
      Selection sel = solver.solve(target);
      sel.target = t;
      result.selections.push_back(sel);
      sels.push_back(selection_to_json(sel, target));
    }
  }
  store.save_state(family, state);

  // ---- reports -------------------------------------------------------------
  json rep;
  rep["schema"] = 1;
  rep["analysis"] = result.analysis;
  rep["label"] = result.label;
  rep["program_sha"] = program_sha;
  rep["layout_sha"] = layout_sha;
  uint64_t site_total = untested.size();
  for (auto& res : section_results) site_total += res.sites.size();
  rep["universe"] = {{"roi_dyn", trace.roi_dyn_count()},
                     {"sites", site_total},
                     {"untested_sites", untested.size()},
                     {"instances", n}};
  rep["targets"] = cfg.targets;
  rep["prune"] = cfg.prune.enabled;
  rep["R"] = cfg.R;
  rep["sensitivity"] = {{"phi_max", cfg.sensitivity.phi_max},
                        {"samples", cfg.sensitivity.samples},
                        {"pattern", pattern_name(cfg.sensitivity.pattern)},
                        {"seed", cfg.seed}};
  json spec_arr = json::array();
  for (auto& s : specs) spec_arr.push_back(spec_to_json(s));
  rep["specs"] = std::move(spec_arr);
  rep["e2e"] = e2e_to_json(result.e2e);
  rep["model"] = detail::model_to_json(result.model);
  rep["selections"] = std::move(sels);
  if (mode == AnalysisMode::FullAdjust) rep["utility"] = std::move(utils);
  rep["golden_outputs"] = detail::golden_outputs_json(layout, trace);
  result.report = std::move(rep);

  uint64_t section_runs = 0;
  for (int i : fresh) section_runs += section_results[i].runs_executed;
  json acc;
  acc["runs_executed"] = result.executed_runs;
  acc["section_runs_executed"] = section_runs;  // + runs_reused = fresh_total
  acc["runs_reused"] = result.reused_runs;
  acc["fresh_total"] = result.fresh_total;
  acc["shared_runs"] = result.shared_runs;
  acc["mono_runs"] = result.mono_runs;
  acc["sections_reanalyzed"] = result.reanalyzed;
  acc["cache_hits"] = n - fresh.size();
  acc["cache_misses"] = fresh.size();
  result.accounting = std::move(acc);
  return result;
}

struct SpeedupSummary {
  double compositional = 1.0;  // fresh compositional runs / executed runs
  double monolithic = 1.0;     // monolithic runs / executed runs
  bool executed_none = false;
};

// Run-count accounting of one analysis.
inline SpeedupSummary account(const AnalyzeResult& r) {
  SpeedupSummary s;
  s.executed_none = r.executed_runs == 0;
  double executed = (double)r.executed_runs;
  if (r.executed_runs == 0) {
    s.compositional = r.fresh_total ? kInf : 1.0;
    s.monolithic = r.mono_runs ? kInf : 1.0;
    return s;
  }
  s.compositional = (double)r.fresh_total / executed;
  s.monolithic = r.mono_runs ? (double)r.mono_runs / executed : 1.0;
  return s;
}

// Writes out/<label>/report.json and accounting.json.
inline fs::path write_reports(const AnalyzeResult& r, const fs::path& out_root) {
  fs::path dir = out_root / r.label;
  write_file_atomic(dir / "report.json", r.report.dump(2) + "\n");
  write_file_atomic(dir / "accounting.json", r.accounting.dump(2) + "\n");
  return dir;
}

}  // namespace flipforge

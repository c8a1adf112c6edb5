// Composes per-instance total SDC specifications along the dataflow graph
// into the end-to-end specification and its per-section specializations.
#pragma once

#include <cmath>

#include "flipforge/interp.hpp"
#include "flipforge/ir.hpp"

namespace flipforge {

// Symbolic error variable for one output of one section instance.
struct SymbolKey {
  std::string instance;  // "id@ordinal" or "untested"
  uint32_t output = 0;

  std::string str() const {
    return "phi[" + instance + "," + std::to_string(output) + "]";
  }
  friend bool operator<(const SymbolKey& a, const SymbolKey& b) {
    return std::tie(a.instance, a.output) < std::tie(b.instance, b.output);
  }
  friend bool operator==(const SymbolKey& a, const SymbolKey& b) {
    return a.instance == b.instance && a.output == b.output;
  }
};

// Non-negative affine combination of error symbols. Zero coefficients are
// never stored, so the 0 * inf = 0 convention (a zero coefficient means the
// symbol cannot reach the output) falls out of evaluation directly.
struct AffineForm {
  std::map<SymbolKey, double> coeffs;
  bool always_inf = false;  // reserved form of the untested section

  void add(const SymbolKey& sym, double coeff) {
    if (coeff == 0.0) return;
    if (coeff < 0) throw FatalError("affine form: negative coefficient");
    coeffs[sym] += coeff;
  }
  void add_scaled(const AffineForm& other, double scale) {
    if (scale == 0.0) return;
    if (other.always_inf) {
      always_inf = true;
      return;
    }
    for (auto& [sym, c] : other.coeffs) add(sym, c * scale);
  }
  double coeff(const SymbolKey& sym) const {
    auto it = coeffs.find(sym);
    return it == coeffs.end() ? 0.0 : it->second;
  }
};

// Evaluates a form at concrete per-symbol SDC magnitudes (non-negative, may
// be +inf). Symbols absent from the form contribute nothing.
inline double evaluate(const AffineForm& form,
                       const std::map<SymbolKey, double>& phi) {
  if (form.always_inf) return kInf;
  double total = 0.0;
  for (auto& [sym, coeff] : form.coeffs) {
    auto it = phi.find(sym);
    if (it == phi.end())
      throw FatalError("evaluate: missing value for " + sym.str());
    double v = it->second;
    if (v < 0) throw FatalError("evaluate: negative SDC magnitude");
    total += coeff * v;
  }
  return total;
}

// Per-instance total SDC specification: each output's bound is the
// K-weighted input bounds plus that output's fresh error symbol.
struct TotalSdcSpec {
  std::string instance;                 // "id@ordinal"
  std::vector<std::string> inputs;      // declared input region names
  std::vector<std::string> outputs;     // effective output region names
  std::vector<std::vector<double>> K;   // [output][input], >= 0

  SymbolKey symbol(uint32_t k) const { return {instance, k}; }
};

struct EndToEndSpec {
  std::vector<std::string> lambdas;  // final output region names
  std::vector<AffineForm> forms;     // aligned with lambdas
  std::vector<std::string> instance_order;

  int lambda_index(const std::string& name) const {
    for (size_t i = 0; i < lambdas.size(); ++i)
      if (lambdas[i] == name) return (int)i;
    return -1;
  }
};

// Resolved dataflow edge over compose nodes. `to_node == -1` targets the
// final sink, with `to_port` indexing the lambda list.
struct ComposeEdge {
  int from_node = 0;
  int from_port = 0;
  int to_node = 0;
  int to_port = 0;
};

// Walks instances in execution order, substituting each input bound with
// the sum of its producers' output bounds (program-initial inputs are
// SDC-free). Coefficients multiply along paths and add across paths.
inline EndToEndSpec compose_core(const std::vector<TotalSdcSpec>& nodes,
                                 const std::vector<ComposeEdge>& edges,
                                 const std::vector<std::string>& lambdas) {
  EndToEndSpec e2e;
  e2e.lambdas = lambdas;
  e2e.forms.resize(lambdas.size());
  for (auto& n : nodes) e2e.instance_order.push_back(n.instance);

  std::vector<std::vector<AffineForm>> out_forms(nodes.size());
  for (size_t n = 0; n < nodes.size(); ++n) {
    const TotalSdcSpec& spec = nodes[n];
    std::vector<AffineForm> in_forms(spec.inputs.size());
    for (auto& e : edges) {
      if (e.to_node != (int)n) continue;
      if (e.from_node >= (int)n)
        throw FatalError("compose: dataflow edge from " +
                         nodes[e.from_node].instance + " to " + spec.instance +
                         " is not forward in execution order");
      in_forms.at(e.to_port).add_scaled(out_forms[e.from_node].at(e.from_port),
                                        1.0);
    }
    out_forms[n].resize(spec.outputs.size());
    for (size_t k = 0; k < spec.outputs.size(); ++k) {
      AffineForm& f = out_forms[n][k];
      if (spec.K.at(k).size() != spec.inputs.size())
        throw FatalError("compose: K dimensions mismatch for " + spec.instance);
      for (size_t m = 0; m < spec.inputs.size(); ++m)
        f.add_scaled(in_forms[m], spec.K[k][m]);
      f.add(spec.symbol((uint32_t)k), 1.0);
    }
  }
  for (auto& e : edges) {
    if (e.to_node != -1) continue;
    e2e.forms.at(e.to_port).add_scaled(out_forms.at(e.from_node).at(e.from_port),
                                       1.0);
  }
  return e2e;
}

// Resolves layout dataflow (instance refs and region names) against the
// golden trace's instance order and effective output geometry.
inline EndToEndSpec compose(const SectionLayout& layout,
                            const GoldenTrace& trace,
                            const std::vector<TotalSdcSpec>& specs) {
  if (specs.size() != trace.instances.size())
    throw FatalError("compose: expected one spec per section instance");
  std::map<std::string, int> node_of;
  for (size_t i = 0; i < trace.instances.size(); ++i) {
    if (specs[i].instance != trace.instances[i].ref().str())
      throw FatalError("compose: spec order does not match instance order");
    node_of[specs[i].instance] = (int)i;
  }
  std::vector<std::string> lambdas;
  for (auto& r : layout.final_outputs) lambdas.push_back(r.name);

  auto producer_port = [&](int node, const std::string& region) {
    const InstanceInfo& inst = trace.instances[node];
    const StaticSection* sec = layout.find(inst.section_id);
    const MemRegion* declared = nullptr;
    for (auto& r : sec->outputs)
      if (r.name == region) declared = &r;
    auto fit = layout.future_use.find(sec->id);
    if (!declared && fit != layout.future_use.end())
      for (auto& r : fit->second)
        if (r.name == region) declared = &r;
    if (!declared)
      throw FatalError("dangling dataflow edge: no output region '" + region +
                       "' in instance " + inst.ref().str());
    int idx = effective_index_of(inst.eff_outputs, *declared);
    if (idx < 0)
      throw FatalError("dangling dataflow edge: region '" + region +
                       "' not covered by effective outputs of " +
                       inst.ref().str());
    return idx;
  };
  auto consumer_port = [&](int node, const std::string& region) {
    const InstanceInfo& inst = trace.instances[node];
    const StaticSection* sec = layout.find(inst.section_id);
    for (size_t m = 0; m < sec->inputs.size(); ++m)
      if (sec->inputs[m].name == region) return (int)m;
    throw FatalError("dangling dataflow edge: no input region '" + region +
                     "' in instance " + inst.ref().str());
  };

  std::vector<ComposeEdge> edges;
  for (auto& e : layout.dataflow) {
    auto from = InstanceRef::parse(e.from_inst);
    auto to = InstanceRef::parse(e.to_inst);
    if (!from || !to || from->is_final)
      throw FatalError("dangling dataflow edge: bad instance ref");
    auto fit = node_of.find(from->str());
    if (fit == node_of.end())
      throw FatalError("dangling dataflow edge: unknown producer " +
                       from->str());
    ComposeEdge ce;
    ce.from_node = fit->second;
    ce.from_port = producer_port(ce.from_node, e.from_region);
    if (to->is_final) {
      ce.to_node = -1;
      int li = -1;
      for (size_t i = 0; i < lambdas.size(); ++i)
        if (lambdas[i] == e.to_region) li = (int)i;
      if (li < 0)
        throw FatalError("dangling dataflow edge: unknown final output '" +
                         e.to_region + "'");
      ce.to_port = li;
    } else {
      auto tit = node_of.find(to->str());
      if (tit == node_of.end())
        throw FatalError("dangling dataflow edge: unknown consumer " +
                         to->str());
      ce.to_node = tit->second;
      ce.to_port = consumer_port(ce.to_node, e.to_region);
    }
    edges.push_back(ce);
  }
  return compose_core(specs, edges, lambdas);
}

inline const std::string kUntestedInstance = "untested";

// Restriction of the end-to-end forms to one instance's symbols (all other
// sections' symbols set to zero). The untested pseudo-section yields the
// reserved always-inf form for every final output.
inline std::vector<AffineForm> specialize(const EndToEndSpec& e2e,
                                          const std::string& instance) {
  std::vector<AffineForm> out(e2e.forms.size());
  if (instance == kUntestedInstance) {
    for (auto& f : out) f.always_inf = true;
    return out;
  }
  bool known = false;
  for (auto& n : e2e.instance_order) known |= n == instance;
  if (!known) throw FatalError("specialize: unknown instance " + instance);
  for (size_t l = 0; l < e2e.forms.size(); ++l)
    for (auto& [sym, coeff] : e2e.forms[l].coeffs)
      if (sym.instance == instance) out[l].add(sym, coeff);
  return out;
}

inline std::string render_form(const AffineForm& form,
                               const std::string& lambda) {
  std::string s = "Delta(" + lambda + ") <= ";
  if (form.always_inf) return s + "inf";
  if (form.coeffs.empty()) return s + "0";
  bool first = true;
  for (auto& [sym, coeff] : form.coeffs) {
    if (!first) s += " + ";
    first = false;
    char buf[48];
    snprintf(buf, sizeof buf, "%.10g", coeff);
    s += std::string(buf) + "*" + sym.str();
  }
  return s;
}

inline json e2e_to_json(const EndToEndSpec& e2e) {
  json j;
  j["lambdas"] = json::object();
  json rendered = json::array();
  for (size_t l = 0; l < e2e.lambdas.size(); ++l) {
    json terms = json::array();
    for (auto& [sym, coeff] : e2e.forms[l].coeffs)
      terms.push_back(json{{"symbol", sym.str()}, {"coeff", coeff}});
    j["lambdas"][e2e.lambdas[l]] = std::move(terms);
    rendered.push_back(render_form(e2e.forms[l], e2e.lambdas[l]));
  }
  j["rendered"] = std::move(rendered);
  return j;
}

}  // namespace flipforge

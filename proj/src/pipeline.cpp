#include "otcrf/pipeline.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "otcrf/error.hpp"

namespace otcrf {

OTStructure construct(const FieldDefinition& def, std::ostream& report, const std::string& source) {
  try {
    const OTStructure ot = build_ot_structure(def.poly, def.generators, def.c);
    const auto units = enumerate_units(ot.emb, def.coeff_bound);
    write_structure_report(report, ot, units, def.coeff_bound, def.name.empty() ? source : def.name);
    return ot;
  } catch (const Error& e) {
    throw Error(e.code(), fmt::format("{}: {}", source, e.what()));
  }
}

GHReport collapse_report(const FlowModel& model, const std::vector<ObservableRecord>& records,
                         const FlowState& final_state, const VerifySettings& settings) {
  GHReport rep;
  std::vector<double> t, leaf;
  for (const auto& r : records) {
    t.push_back(r.t);
    leaf.push_back(r.leaf_scale);
  }
  rep.leaf_fit = fit_decay(t, leaf, settings.bounds.window_start, t.back());
  const auto certs = fiber_certificates(model.ot(), default_fiber_targets(model.d()), settings.delta,
                                        settings.fiber_bound);
  rep.collapse = fiber_collapse(model, records, certs, settings.delta, settings.fiber_bound, settings.threshold);
  rep.distances = base_distance_compare(model, final_state, sample_pairs(model.grid(), settings.pairs, settings.seed),
                                        settings.stencil_radius);
  return rep;
}

std::vector<Verdict> collapse_verdicts(const GHReport& r) {
  std::vector<Verdict> out;
  const double gap = std::abs(r.leaf_fit.rate - 0.5);
  out.push_back({"leaf_scale_rate", gap <= 1e-3, fmt::format("rate {:.6f}, gap {:.3g} (limit 0.001)", r.leaf_fit.rate, gap)});
  out.push_back({"fiber_collapse_time", std::isfinite(r.collapse.t_star) && !r.collapse.certificates.empty(),
                 fmt::format("{} certificates, t* = {:.6g}", r.collapse.certificates.size(), r.collapse.t_star)});
  const double ratio = r.distances.max_deviation / r.distances.torus_diameter;
  out.push_back({"base_distance_deviation", ratio <= 0.05,
                 fmt::format("max deviation {:.6g} = {:.4f} of the torus diameter (limit 0.05)",
                             r.distances.max_deviation, ratio)});
  return out;
}

}  // namespace otcrf

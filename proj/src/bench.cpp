#include "pvmix/bench.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pvmix/baselines.hpp"
#include "pvmix/errors.hpp"
#include "pvmix/evaluate.hpp"
#include "pvmix/init.hpp"
#include "pvmix/rng.hpp"

namespace pvmix {

namespace {

// Seed-stream domains, so no derived stream collides with another purpose.
constexpr std::uint64_t kSimDomain = 1;
constexpr std::uint64_t kFitDomain = 2;
constexpr std::uint64_t kCtDomain = 3;

std::string join_str(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += v[i];
  }
  return out;
}

std::string join_num(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += format_double(v[i]);
  }
  return out;
}

struct MethodPlan {
  enum Kind { Mix, Bonf, Bh, By, Ct } kind = Mix;
  std::string label;
  Neighborhood adjacency = Neighborhood::FirstOrder;
};

MethodPlan plan_of(const std::string& name, const BenchConfig& cfg) {
  MethodPlan p;
  p.label = name;
  if (name == "mix") {
    p.kind = MethodPlan::Mix;
    p.label = method_label(cfg);
  } else if (name == "bonf") {
    p.kind = MethodPlan::Bonf;
  } else if (name == "bh") {
    p.kind = MethodPlan::Bh;
  } else if (name == "by") {
    p.kind = MethodPlan::By;
  } else if (name == "ct1") {
    p.kind = MethodPlan::Ct;
    p.adjacency = Neighborhood::FirstOrder;
  } else if (name == "ct2") {
    p.kind = MethodPlan::Ct;
    p.adjacency = Neighborhood::SecondOrder;
  } else {
    throw DataError("bench: unknown method '" + name + "'");
  }
  return p;
}

PhantomSpec resolve_phantom(const BenchConfig& cfg, const std::string& name) {
  for (const auto& [cname, text] : cfg.custom_phantoms)
    if (cname == name) return phantom_from_text(text);
  return make_phantom(phantom_variant_of(name));
}

void check_unit(double v, const char* what) {
  if (!(v > 0.0) || !(v < 1.0))
    throw DataError(std::string("bench: ") + what + " must lie in (0, 1)");
}

}  // namespace

PhantomVariant phantom_variant_of(const std::string& name) {
  if (name == "a") return PhantomVariant::A;
  if (name == "b") return PhantomVariant::B;
  if (name == "c") return PhantomVariant::C;
  if (name == "null") return PhantomVariant::Null;
  throw DataError("unknown phantom '" + name + "' (expected a, b, c or null)");
}

Criterion criterion_of(const std::string& name) {
  if (name == "aic") return Criterion::Aic;
  if (name == "bic") return Criterion::Bic;
  if (name == "iclbic") return Criterion::IclBic;
  throw DataError("unknown criterion '" + name + "' (expected aic, bic or iclbic)");
}

const char* criterion_name(Criterion c) {
  switch (c) {
    case Criterion::Aic: return "aic";
    case Criterion::Bic: return "bic";
    default: return "iclbic";
  }
}

const char* fdr_method_name(FdrMethod m) {
  switch (m) {
    case FdrMethod::P1: return "p1";
    case FdrMethod::P2: return "p2";
    default: return "p3";
  }
}

std::string method_label(const BenchConfig& cfg) {
  std::string label = "mix-";
  label += criterion_name(cfg.criterion);
  label += '-';
  label += cfg.merge ? fdr_method_name(cfg.merge_method) : "none";
  if (cfg.spatial == SpatialMode::Off) label += "-nospatial";
  return label;
}

ConfigEcho BenchConfig::echo() const {
  ConfigEcho e;
  e.emplace_back("phantoms", join_str(phantoms));
  e.emplace_back("omegas", join_num(omegas));
  e.emplace_back("deltas", join_num(deltas));
  e.emplace_back("methods", join_str(methods));
  e.emplace_back("replicates", std::to_string(replicates));
  e.emplace_back("seed", std::to_string(seed));
  e.emplace_back("kmax", std::to_string(k_max));
  e.emplace_back("criterion", criterion_name(criterion));
  e.emplace_back("spatial", spatial == SpatialMode::On ? "on" : "off");
  e.emplace_back("merge", merge ? fdr_method_name(merge_method) : "none");
  e.emplace_back("q0", format_double(q0));
  e.emplace_back("eta", format_double(eta));
  e.emplace_back("epsilon", format_double(epsilon));
  e.emplace_back("max-iter", std::to_string(max_iter));
  e.emplace_back("init-m", std::to_string(init_candidates));
  e.emplace_back("pmax-init", format_double(p_max_init));
  e.emplace_back("workers", std::to_string(workers));
  e.emplace_back("alpha", format_double(alpha));
  e.emplace_back("q", format_double(q));
  e.emplace_back("p0", format_double(p0));
  e.emplace_back("n-null", std::to_string(n_null));
  for (const auto& [name, text] : custom_phantoms)
    e.emplace_back("geometry-" + name, config_hash({{"text", text}}));
  return e;
}

void BenchConfig::check() const {
  if (phantoms.empty()) throw DataError("bench: no phantoms requested");
  if (omegas.empty()) throw DataError("bench: no overlaps requested");
  if (deltas.empty()) throw DataError("bench: no deltas requested");
  if (methods.empty()) throw DataError("bench: no methods requested");
  if (replicates < 1) throw DataError("bench: replicates must be >= 1");
  if (k_max < 0) throw DataError("bench: kmax must be >= 0");
  if (max_iter < 1) throw DataError("bench: max-iter must be >= 1");
  if (init_candidates < 1) throw DataError("bench: init-m must be >= 1");
  if (workers < 1) throw DataError("bench: workers must be >= 1");
  if (n_null < 1) throw DataError("bench: n-null must be >= 1");
  check_unit(q0, "q0");
  check_unit(eta, "eta");
  check_unit(alpha, "alpha");
  check_unit(q, "q");
  check_unit(p0, "p0");
  check_unit(p_max_init, "pmax-init");
  for (double d : deltas) check_unit(d, "every delta");
  for (const std::string& m : methods) (void)plan_of(m, *this);
  for (const std::string& ph : phantoms) (void)resolve_phantom(*this, ph);
}

BenchOutput run_bench(const BenchConfig& cfg,
                      const std::function<void(const std::string&)>& log) {
  cfg.check();
  BenchOutput out;

  std::vector<MethodPlan> plans;
  plans.reserve(cfg.methods.size());
  for (const std::string& m : cfg.methods) plans.push_back(plan_of(m, cfg));

  Rng root(cfg.seed);

  for (std::size_t pi = 0; pi < cfg.phantoms.size(); ++pi) {
    const std::string& ph_name = cfg.phantoms[pi];
    const PhantomSpec spec = resolve_phantom(cfg, ph_name);
    const bool null_phantom = spec.pi_true[1] <= 0.0 && spec.pi_true[2] <= 0.0;

    // Cluster calibrations depend only on the mask: one per adjacency.
    std::optional<ClusterCalibration> ct_cal[2];
    auto ct_calibration = [&](Neighborhood adj) -> const ClusterCalibration& {
      const std::size_t slot = adj == Neighborhood::FirstOrder ? 0 : 1;
      if (!ct_cal[slot]) {
        std::uint64_t ct_seed = root.split(kCtDomain)
                                    .split(pi)
                                    .split(slot)
                                    .next_u64();
        PValueField mask_field =
            simulate_field(spec, ComplexityCalibration{}, ct_seed).field;
        ct_cal[slot] = calibrate_cluster_threshold(mask_field, cfg.p0, adj,
                                                   cfg.n_null, cfg.alpha, ct_seed);
      }
      return *ct_cal[slot];
    };

    for (std::size_t oi = 0; oi < cfg.omegas.size(); ++oi) {
      const double omega = cfg.omegas[oi];
      ComplexityCalibration calib;
      calib.omega = omega;
      if (!null_phantom) calib = calibrate_nu(spec.pi_true, omega);

      for (int rep = 0; rep < cfg.replicates; ++rep) {
        const std::uint64_t sim_seed = root.split(kSimDomain)
                                           .split(pi)
                                           .split(oi)
                                           .split(static_cast<std::uint64_t>(rep))
                                           .next_u64();
        const SimulatedField sim = simulate_field(spec, calib, sim_seed);
        std::vector<char> truth(sim.truth.size());
        for (std::size_t i = 0; i < sim.truth.size(); ++i)
          truth[i] = sim.truth[i] > 0 ? 1 : 0;

        // Reference masks do not depend on delta; compute once per field.
        std::vector<std::optional<std::vector<char>>> fixed(plans.size());

        for (std::size_t di = 0; di < cfg.deltas.size(); ++di) {
          const double delta = cfg.deltas[di];
          for (std::size_t mi = 0; mi < plans.size(); ++mi) {
            const MethodPlan& plan = plans[mi];
            std::vector<char> mask;
            if (plan.kind == MethodPlan::Mix) {
              FitConfig fc;
              fc.delta = delta;
              fc.eta = cfg.eta;
              fc.epsilon = cfg.epsilon;
              fc.max_iter = cfg.max_iter;
              fc.spatial = cfg.spatial;
              fc.workers = cfg.workers;
              fc.init_candidates = cfg.init_candidates;
              fc.p_max_init = cfg.p_max_init;
              fc.seed = root.split(kFitDomain)
                            .split(pi)
                            .split(oi)
                            .split(static_cast<std::uint64_t>(rep))
                            .split(di)
                            .next_u64();
              SelectionReport sel = select_K(sim.field, fc, cfg.k_max, cfg.criterion);
              const std::vector<int>& labels =
                  cfg.merge
                      ? merge_components(sim.field, sel.best(), cfg.merge_method,
                                         cfg.q0, cfg.eta)
                            .labels
                      : sel.best().labels;
              mask.resize(labels.size());
              for (std::size_t i = 0; i < labels.size(); ++i)
                mask[i] = labels[i] > 0 ? 1 : 0;
            } else {
              if (!fixed[mi]) {
                switch (plan.kind) {
                  case MethodPlan::Bonf:
                    fixed[mi] = bonferroni(sim.field.p, cfg.alpha);
                    break;
                  case MethodPlan::Bh:
                    fixed[mi] = bh_threshold(sim.field.p, cfg.q);
                    break;
                  case MethodPlan::By:
                    fixed[mi] = by_threshold(sim.field.p, cfg.q);
                    break;
                  default:
                    fixed[mi] = cluster_threshold_with(
                        sim.field, ct_calibration(plan.adjacency));
                }
              }
              mask = *fixed[mi];
            }
            ResultRow row;
            row.method = plan.label;
            row.omega = omega;
            row.delta = delta;
            row.phantom = ph_name;
            row.replicate = rep;
            row.jaccard = jaccard(mask, truth);
            out.rows.push_back(std::move(row));
          }
        }
        if (log) {
          std::ostringstream ss;
          ss << ph_name << " omega=" << format_double(omega) << " replicate "
             << (rep + 1) << "/" << cfg.replicates << " done";
          log(ss.str());
        }
      }
    }
  }

  std::vector<EvalRecord> batch;
  batch.reserve(out.rows.size());
  for (const ResultRow& r : out.rows)
    batch.push_back({r.method, r.omega, r.delta, r.phantom, r.jaccard});
  out.table = summarize(batch);
  return out;
}

}  // namespace pvmix

#include "pvmix/cli.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pvmix/baselines.hpp"
#include "pvmix/bench.hpp"
#include "pvmix/errors.hpp"
#include "pvmix/evaluate.hpp"
#include "pvmix/init.hpp"
#include "pvmix/io.hpp"
#include "pvmix/merge.hpp"
#include "pvmix/model_select.hpp"
#include "pvmix/phantom.hpp"

namespace pvmix {

namespace {

std::string slurp_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string dims_text(const std::vector<std::size_t>& dims) {
  std::string out;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(dims[i]);
  }
  return out;
}

void finish_echo(ConfigEcho& echo) {
  echo.emplace_back("config-hash", config_hash(echo));
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string out;
  std::string phantom = "b";
  std::string geometry;
  double omega = 0.5;
  std::uint64_t seed = 0;
  std::string truth;
  std::string truth_image;
};

int run_simulate(const SimulateArgs& a) {
  PhantomSpec spec = a.geometry.empty()
                         ? make_phantom(phantom_variant_of(a.phantom))
                         : phantom_from_text(slurp_file(a.geometry));
  const bool null_phantom = spec.pi_true[1] <= 0.0 && spec.pi_true[2] <= 0.0;
  ComplexityCalibration calib;
  calib.omega = a.omega;
  if (!null_phantom) calib = calibrate_nu(spec.pi_true, a.omega);

  SimulatedField sim = simulate_field(spec, calib, a.seed);

  ConfigEcho echo;
  echo.emplace_back("command", "simulate");
  if (a.geometry.empty()) {
    echo.emplace_back("phantom", a.phantom);
  } else {
    echo.emplace_back("geometry", a.geometry);
    echo.emplace_back("geometry-hash",
                      config_hash({{"text", geometry_text(spec)}}));
  }
  echo.emplace_back("omega", format_double(a.omega));
  echo.emplace_back("seed", std::to_string(a.seed));
  echo.emplace_back("nu1", format_double(calib.nu[1]));
  echo.emplace_back("nu2", format_double(calib.nu[2]));
  finish_echo(echo);

  write_field(a.out, sim.field, echo);
  if (!a.truth.empty() || !a.truth_image.empty()) {
    std::string truth_csv = a.truth.empty() ? a.out + ".truth" : a.truth;
    write_labelmap(truth_csv, a.truth_image, sim.field, sim.truth, echo);
  }
  std::cout << "simulated " << sim.field.n() << " records on a "
            << dims_text(sim.field.dims) << " grid\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct FitArgs {
  std::string in;
  std::string out;
  std::string labels;        // base path: writes <labels>.csv (+ .ppm in 2-D)
  int k_max = 3;
  std::string criterion = "bic";
  std::string spatial = "on";
  double delta = 0.99;
  double eta = 0.05;
  double epsilon = 1e-6;
  int max_iter = 1000;
  std::uint64_t seed = 0;
  int workers = 1;
  int init_m = 50;
  double p_max_init = 0.05;
  std::string merge = "p2";
  double q0 = 0.05;
};

FdrMethod merge_method_of(const std::string& name) {
  if (name == "p1") return FdrMethod::P1;
  if (name == "p2") return FdrMethod::P2;
  return FdrMethod::P3;
}

ConfigEcho fit_echo(const FitArgs& a) {
  ConfigEcho echo;
  echo.emplace_back("command", "fit");
  echo.emplace_back("input", a.in);
  echo.emplace_back("kmax", std::to_string(a.k_max));
  echo.emplace_back("criterion", a.criterion);
  echo.emplace_back("spatial", a.spatial);
  echo.emplace_back("delta", format_double(a.delta));
  echo.emplace_back("eta", format_double(a.eta));
  echo.emplace_back("epsilon", format_double(a.epsilon));
  echo.emplace_back("max-iter", std::to_string(a.max_iter));
  echo.emplace_back("seed", std::to_string(a.seed));
  echo.emplace_back("workers", std::to_string(a.workers));
  echo.emplace_back("init-m", std::to_string(a.init_m));
  echo.emplace_back("pmax-init", format_double(a.p_max_init));
  echo.emplace_back("merge", a.merge);
  echo.emplace_back("q0", format_double(a.q0));
  finish_echo(echo);
  return echo;
}

int run_fit(const FitArgs& a) {
  PValueField field = read_field(a.in);

  FitConfig fc;
  fc.delta = a.delta;
  fc.eta = a.eta;
  fc.epsilon = a.epsilon;
  fc.max_iter = a.max_iter;
  fc.spatial = a.spatial == "off" ? SpatialMode::Off : SpatialMode::On;
  fc.seed = a.seed;
  fc.workers = a.workers;
  fc.init_candidates = a.init_m;
  fc.p_max_init = a.p_max_init;

  SelectionReport sel = select_K(field, fc, a.k_max, criterion_of(a.criterion));
  const FitResult& best = sel.best();

  FitDocument doc;
  doc.seed = a.seed;
  doc.config = fit_echo(a);
  doc.criterion = a.criterion;
  doc.k_hat = sel.K_hat;
  for (std::size_t k = 0; k < sel.fits.size(); ++k) {
    SelectionEntry e;
    e.K = static_cast<int>(k);
    e.valid = sel.fits[k].valid;
    e.converged = sel.fits[k].converged;
    e.n_iter = sel.fits[k].n_iter;
    e.loglik = sel.fits[k].valid ? sel.fits[k].loglik
                                 : std::numeric_limits<double>::quiet_NaN();
    e.aic = sel.crit[k].aic;
    e.bic = sel.crit[k].bic;
    e.iclbic = sel.crit[k].iclbic;
    doc.selection.push_back(e);
  }
  doc.theta = best.theta;
  doc.n_records = field.n();

  std::vector<int> labels = best.labels;
  if (a.merge != "none") {
    MergeReport mr = merge_components(field, best, merge_method_of(a.merge),
                                      a.q0, a.eta);
    doc.merged = true;
    doc.merge_method = a.merge;
    doc.q0 = a.q0;
    doc.k_final = mr.K_final;
    doc.stage1 = mr.stage1;
    doc.stage2 = mr.stage2;
    doc.relabel = mr.relabel;
    doc.theta_final = mr.theta;
    labels = mr.labels;
  }
  std::size_t active = 0;
  for (int l : labels) active += l > 0;
  doc.n_active = active;

  write_fit(a.out, doc);
  if (!a.labels.empty()) {
    std::string image = field.cv == 2 ? a.labels + ".ppm" : std::string();
    write_labelmap(a.labels + ".csv", image, field, labels, doc.config);
  }
  std::cout << "selected K=" << doc.k_hat;
  if (doc.merged) std::cout << ", after merging K=" << doc.k_final;
  std::cout << ", active records=" << active << "/" << field.n() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ThresholdArgs {
  std::string in;
  std::string out;
  std::string image;
  std::string method;
  double alpha = 0.05;
  double q = 0.05;
  double p0 = 1e-3;
  int n_null = 1000;
  std::uint64_t seed = 0;
};

int run_threshold(const ThresholdArgs& a) {
  PValueField field = read_field(a.in);
  std::vector<char> mask;
  if (a.method == "bonf") {
    mask = bonferroni(field.p, a.alpha);
  } else if (a.method == "bh") {
    mask = bh_threshold(field.p, a.q);
  } else if (a.method == "by") {
    mask = by_threshold(field.p, a.q);
  } else {
    Neighborhood adj = a.method == "ct1" ? Neighborhood::FirstOrder
                                         : Neighborhood::SecondOrder;
    mask = cluster_threshold(field, a.p0, adj, a.n_null, a.alpha, a.seed);
  }

  ConfigEcho echo;
  echo.emplace_back("command", "threshold");
  echo.emplace_back("input", a.in);
  echo.emplace_back("method", a.method);
  echo.emplace_back("alpha", format_double(a.alpha));
  echo.emplace_back("q", format_double(a.q));
  echo.emplace_back("p0", format_double(a.p0));
  echo.emplace_back("n-null", std::to_string(a.n_null));
  echo.emplace_back("seed", std::to_string(a.seed));
  finish_echo(echo);

  std::vector<int> labels(mask.begin(), mask.end());
  write_labelmap(a.out, a.image, field, labels, echo);
  std::size_t active = 0;
  for (char m : mask) active += m != 0;
  std::cout << "declared " << active << "/" << field.n() << " records active\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string pred;
  std::string truth;
  std::string out;
};

int run_evaluate(const EvaluateArgs& a) {
  LabelMap pred = read_labelmap(a.pred);
  LabelMap truth = read_labelmap(a.truth);
  if (pred.dims != truth.dims)
    throw DataError("evaluate: prediction and truth grids differ");
  if (pred.raw != truth.raw)
    throw DataError("evaluate: prediction and truth masks cover different cells");
  std::vector<char> pm(pred.n()), tm(truth.n());
  for (std::size_t i = 0; i < pred.n(); ++i) pm[i] = pred.labels[i] > 0;
  for (std::size_t i = 0; i < truth.n(); ++i) tm[i] = truth.labels[i] > 0;
  double j = jaccard(pm, tm);
  std::cout << format_double(j) << "\n";
  if (!a.out.empty()) {
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw DataError("cannot open for writing: " + a.out);
    out << "jaccard\n" << format_double(j) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
  std::string in;
  std::string out;
};

int run_report(const ReportArgs& a) {
  std::vector<ResultRow> rows = read_results(a.in);
  std::vector<EvalRecord> batch;
  batch.reserve(rows.size());
  for (const ResultRow& r : rows)
    batch.push_back({r.method, r.omega, r.delta, r.phantom, r.jaccard});
  ConfigEcho echo;
  echo.emplace_back("command", "report");
  echo.emplace_back("input", a.in);
  echo.emplace_back("rows", std::to_string(rows.size()));
  finish_echo(echo);
  write_table(a.out, summarize(batch), echo);
  std::cout << "reduced " << rows.size() << " rows\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  BenchConfig cfg;
  std::vector<std::string> geometries;  // name=path
  std::string criterion = "bic";
  std::string spatial = "on";
  std::string merge = "p2";
  std::string out;
  std::string summary;
  bool quiet = false;
};

int run_bench_cmd(BenchArgs& a) {
  a.cfg.criterion = criterion_of(a.criterion);
  a.cfg.spatial = a.spatial == "off" ? SpatialMode::Off : SpatialMode::On;
  a.cfg.merge = a.merge != "none";
  if (a.cfg.merge) a.cfg.merge_method = merge_method_of(a.merge);
  for (const std::string& g : a.geometries) {
    std::size_t eq = g.find('=');
    if (eq == std::string::npos || eq == 0)
      throw DataError("bench: --geometry expects name=path, got '" + g + "'");
    a.cfg.custom_phantoms.emplace_back(g.substr(0, eq),
                                       slurp_file(g.substr(eq + 1)));
  }

  std::function<void(const std::string&)> log;
  if (!a.quiet)
    log = [](const std::string& line) { std::cerr << line << "\n"; };
  BenchOutput out = run_bench(a.cfg, log);

  ConfigEcho echo;
  echo.emplace_back("command", "bench");
  for (auto& kv : a.cfg.echo()) echo.push_back(std::move(kv));
  finish_echo(echo);

  write_results(a.out, out.rows, echo);
  if (!a.summary.empty()) write_table(a.summary, out.table, echo);
  std::cout << "wrote " << out.rows.size() << " rows, " << out.table.size()
            << " cells\n";
  return 0;
}

}  // namespace

int run_pipeline(int argc, const char* const* argv) {
  CLI::App app{"Mixture-based activation detection for p-value fields"};
  app.require_subcommand(1);

  // ---- simulate ----
  SimulateArgs sim;
  CLI::App* s = app.add_subcommand("simulate", "Draw a phantom p-value field");
  s->add_option("-o,--out", sim.out, "Output field CSV")->required();
  s->add_option("--phantom", sim.phantom, "Built-in phantom variant")
      ->check(CLI::IsMember({"a", "b", "c", "null"}));
  s->add_option("--geometry", sim.geometry,
                "Geometry text file overriding --phantom");
  s->add_option("--omega", sim.omega,
                "Target pairwise overlap (ignored for a null phantom)");
  s->add_option("--seed", sim.seed, "Simulation seed");
  s->add_option("--truth", sim.truth, "Write the true class labels here");
  s->add_option("--truth-image", sim.truth_image,
                "Render the true classes to this pixmap");

  // ---- fit ----
  FitArgs fit;
  CLI::App* f = app.add_subcommand("fit", "Fit the mixture and label records");
  f->add_option("-i,--in", fit.in, "Input field CSV")->required();
  f->add_option("-o,--out", fit.out, "Output fit document (JSON)")->required();
  f->add_option("--labels", fit.labels,
                "Base path for the label map (writes <base>.csv and <base>.ppm)");
  f->add_option("--kmax", fit.k_max, "Largest component count to consider");
  f->add_option("--criterion", fit.criterion, "Model selection criterion")
      ->check(CLI::IsMember({"aic", "bic", "iclbic"}));
  f->add_option("--spatial", fit.spatial, "Spatial factor on or off")
      ->check(CLI::IsMember({"on", "off"}));
  f->add_option("--delta", fit.delta, "Lower bound on the inactive weight");
  f->add_option("--eta", fit.eta, "Upper bound on active component means");
  f->add_option("--epsilon", fit.epsilon, "Relative loglik stop threshold");
  f->add_option("--max-iter", fit.max_iter, "Iteration cap per fit");
  f->add_option("--seed", fit.seed, "Initialization seed");
  f->add_option("--workers", fit.workers, "Worker threads")
      ->envname("PVMIX_WORKERS");
  f->add_option("--init-m", fit.init_m, "Random starts per fit");
  f->add_option("--pmax-init", fit.p_max_init,
                "Largest p-value eligible as an active seed");
  f->add_option("--merge", fit.merge, "Post-fit merge method")
      ->check(CLI::IsMember({"none", "p1", "p2", "p3"}));
  f->add_option("--q0", fit.q0, "False discovery rate level for merging");

  // ---- threshold ----
  ThresholdArgs th;
  CLI::App* t = app.add_subcommand("threshold", "Reference thresholding methods");
  t->add_option("-i,--in", th.in, "Input field CSV")->required();
  t->add_option("-o,--out", th.out, "Output mask CSV")->required();
  t->add_option("--image", th.image, "Render the mask to this pixmap");
  t->add_option("--method", th.method, "Thresholding method")
      ->required()
      ->check(CLI::IsMember({"bonf", "bh", "by", "ct1", "ct2"}));
  t->add_option("--alpha", th.alpha, "Level for bonf and the cluster null");
  t->add_option("--q", th.q, "Level for bh and by");
  t->add_option("--p0", th.p0, "Cluster-forming threshold");
  t->add_option("--n-null", th.n_null, "Cluster-calibration replicates");
  t->add_option("--seed", th.seed, "Cluster-calibration seed");

  // ---- evaluate ----
  EvaluateArgs ev;
  CLI::App* e = app.add_subcommand("evaluate",
                                   "Score a predicted mask against the truth");
  e->add_option("--pred", ev.pred, "Predicted label map CSV")->required();
  e->add_option("--truth", ev.truth, "True label map CSV")->required();
  e->add_option("-o,--out", ev.out, "Also write the score to this file");

  // ---- report ----
  ReportArgs rep;
  CLI::App* r = app.add_subcommand("report", "Reduce results to a summary table");
  r->add_option("-i,--in", rep.in, "Results CSV")->required();
  r->add_option("-o,--out", rep.out, "Output table CSV")->required();

  // ---- bench ----
  BenchArgs bn;
  CLI::App* b = app.add_subcommand("bench", "Run the full study grid");
  b->add_option("-o,--out", bn.out, "Results CSV")->required();
  b->add_option("--summary", bn.summary, "Also write the summary table here");
  b->add_option("--phantoms", bn.cfg.phantoms, "Phantoms to simulate")
      ->delimiter(',');
  b->add_option("--omegas", bn.cfg.omegas, "Target overlaps")->delimiter(',');
  b->add_option("--deltas", bn.cfg.deltas, "Inactive-weight floors")
      ->delimiter(',');
  b->add_option("--methods", bn.cfg.methods, "Methods to score")->delimiter(',');
  b->add_option("--replicates", bn.cfg.replicates, "Fields per cell");
  b->add_option("--seed", bn.cfg.seed, "Root seed");
  b->add_option("--geometry", bn.geometries,
                "Extra phantom as name=path; name usable in --phantoms");
  b->add_option("--kmax", bn.cfg.k_max, "Largest component count");
  b->add_option("--criterion", bn.criterion, "Model selection criterion")
      ->check(CLI::IsMember({"aic", "bic", "iclbic"}));
  b->add_option("--spatial", bn.spatial, "Spatial factor on or off")
      ->check(CLI::IsMember({"on", "off"}));
  b->add_option("--merge", bn.merge, "Post-fit merge method")
      ->check(CLI::IsMember({"none", "p1", "p2", "p3"}));
  b->add_option("--q0", bn.cfg.q0, "Merge FDR level");
  b->add_option("--eta", bn.cfg.eta, "Upper bound on active component means");
  b->add_option("--epsilon", bn.cfg.epsilon, "Relative loglik stop threshold");
  b->add_option("--max-iter", bn.cfg.max_iter, "Iteration cap per fit");
  b->add_option("--init-m", bn.cfg.init_candidates, "Random starts per fit");
  b->add_option("--pmax-init", bn.cfg.p_max_init,
                "Largest p-value eligible as an active seed");
  b->add_option("--workers", bn.cfg.workers, "Worker threads")
      ->envname("PVMIX_WORKERS");
  b->add_option("--alpha", bn.cfg.alpha, "Bonferroni / cluster level");
  b->add_option("--q", bn.cfg.q, "BH / BY level");
  b->add_option("--p0", bn.cfg.p0, "Cluster-forming threshold");
  b->add_option("--n-null", bn.cfg.n_null, "Cluster-calibration replicates");
  b->add_flag("--quiet", bn.quiet, "Suppress progress lines");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(s)) return run_simulate(sim);
    if (app.got_subcommand(f)) return run_fit(fit);
    if (app.got_subcommand(t)) return run_threshold(th);
    if (app.got_subcommand(e)) return run_evaluate(ev);
    if (app.got_subcommand(r)) return run_report(rep);
    if (app.got_subcommand(b)) return run_bench_cmd(bn);
    return 2;
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForVersion& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  } catch (const DataError& ex) {
    std::cerr << "data error: " << ex.what() << "\n";
    return 3;
  } catch (const NumericalError& ex) {
    std::cerr << "numerical error: " << ex.what() << "\n";
    return 4;
  } catch (const InitError& ex) {
    std::cerr << "initialization error: " << ex.what() << "\n";
    return 4;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 4;
  }
}

}  // namespace pvmix

"""Smoke tests for the pvmix python module.

Covers the public surface end to end on a small phantom: simulation,
fitting with model selection, component merging, the thresholding
baselines, evaluation, and a file round trip. Numerical depth lives in the
C++ test suite; here we check that the bindings wire through correctly and
that results are deterministic under a fixed seed.
"""

import math
import os
import sys
import tempfile

import pvmix

MINI_GEOMETRY = """pvmix-geometry 1
variant b
grid 40 40
pi 0.9 0.07 0.03
head 19.5 19.5 18 15 0
region 1 12 13 4 3 20
region 2 27 26 3 3 -30
"""

failures = []


def check(name, cond):
    status = "ok" if cond else "FAIL"
    print(f"  [{status}] {name}")
    if not cond:
        failures.append(name)


def main():
    print("pvmix", pvmix.__version__)

    # --- field construction and validation ---
    field = pvmix.PValueField(
        raw=[0, 0, 1, 0, 0, 1, 1, 1],
        dims=[2, 2],
        pvals=[0.5, 0.001, 0.25, 1e-20],
    )
    check("field length", len(field) == 4 and field.n == 4)
    check("field clamps extreme p", field.clamped == 1 and field.p[3] > 0.0)
    try:
        pvmix.PValueField(raw=[0], dims=[2, 2], pvals=[0.5])
        check("size mismatch raises DataError", False)
    except pvmix.DataError:
        check("size mismatch raises DataError", True)
    try:
        pvmix.PValueField(raw=[0, 0], dims=[2, 2], pvals=[float("nan")])
        check("NaN p raises DataError", False)
    except pvmix.DataError:
        check("NaN p raises DataError", True)

    # --- phantom, calibration, simulation ---
    spec = pvmix.phantom_from_text(MINI_GEOMETRY)
    check("phantom mask size", spec.n_brain > 500)
    check(
        "geometry text round trip",
        pvmix.geometry_text(spec) == pvmix.geometry_text(
            pvmix.phantom_from_text(pvmix.geometry_text(spec))
        ),
    )
    calib = pvmix.calibrate_nu(spec.pi_true, 0.1)
    achieved = pvmix.pairwise_overlap(0.0, calib.nu[1], spec.pi_true[0], spec.pi_true[1])
    check("calibration hits the target overlap", abs(achieved - 0.1) < 1e-6)

    sim = pvmix.simulate_field(spec, calib, seed=7)
    sim2 = pvmix.simulate_field(spec, calib, seed=7)
    check("simulation is deterministic", sim.field.p == sim2.field.p)
    check("truth labels cover all classes", set(sim.truth) == {0, 1, 2})

    # --- fit + model selection + merging ---
    cfg = pvmix.FitConfig()
    cfg.seed = 3
    cfg.init_candidates = 8
    cfg.epsilon = 1e-5
    cfg.max_iter = 300
    sel = pvmix.select_k(sim.field, cfg, k_max=2, criterion=pvmix.Criterion.Bic)
    best = sel.best()
    check("selection picked an active model", sel.k_hat >= 1)
    check("fit is valid", best.valid)
    check("loglik trace is monotone",
          all(b >= a - 1e-8 * max(1.0, abs(a))
              for a, b in zip(best.trace, best.trace[1:])))
    check("null weight respects the floor", best.theta.pi[0] >= cfg.delta - 1e-12)

    merged = pvmix.merge_components(sim.field, best, method=pvmix.FdrMethod.P2)
    check("merge returns labels", len(merged.labels) == sim.field.n)
    mix_mask = [l > 0 for l in merged.labels]
    truth_mask = [t > 0 for t in sim.truth]
    j_mix = pvmix.jaccard(mix_mask, truth_mask)
    check("mixture recovers the active set", j_mix >= 0.5)

    # --- baselines ---
    bh = pvmix.bh_threshold(sim.field.p, q=0.05)
    bonf = pvmix.bonferroni(sim.field.p, alpha=0.05)
    by = pvmix.by_threshold(sim.field.p, q=0.05)
    check("bonferroni is contained in the step-up",
          all(b or not a for a, b in zip(bonf, bh)))
    check("harmonic step-up is contained in the step-up",
          all(b or not a for a, b in zip(by, bh)))
    ct = pvmix.cluster_threshold(sim.field, p0=1e-3,
                                 adjacency=pvmix.Neighborhood.FirstOrder,
                                 n_null=100, seed=5)
    check("cluster mask has the right length", len(ct) == sim.field.n)
    check("step-up beats the single-step bound on this field",
          pvmix.jaccard(bh, truth_mask) >= pvmix.jaccard(bonf, truth_mask))

    # --- FDR helpers ---
    res = pvmix.fdr_p1([0.001, 0.2, 0.9, 0.004], q0=0.05)
    check("step-up rejects the small p-values",
          res.reject == [True, False, False, True])
    check("q-values are ordered like p-values",
          res.q[0] <= res.q[1] <= res.q[2] and res.q[3] <= res.q[1])

    # --- evaluation helpers ---
    check("jaccard of identical masks", pvmix.jaccard([True, False], [True, False]) == 1.0)
    check("jaccard of empty masks", pvmix.jaccard([False], [False]) == 1.0)
    check("median via sample_quantile",
          pvmix.sample_quantile([1.0, 2.0, 3.0], 0.5) == 2.0)

    # --- file round trip ---
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "field.csv")
        pvmix.write_field(path, sim.field, extra=[("seed", "7")])
        back = pvmix.read_field(path)
        check("field file round trip", back.p == sim.field.p and back.dims == sim.field.dims)
    check("format_double round trips", float(pvmix.format_double(math.pi)) == math.pi)
    check("config_hash is 16 hex chars",
          len(pvmix.config_hash([("a", "1")])) == 16)

    if failures:
        print(f"{len(failures)} smoke check(s) failed: {failures}")
        return 1
    print("all smoke checks passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())

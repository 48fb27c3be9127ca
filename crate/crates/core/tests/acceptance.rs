//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit when any
//! criterion fails. Runs the shipped desk-scale configs.

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use flowlab::fields::{local_maximal_function, ball_radii, CoefficientPair, DiffusionSpec, DriftSpec};
use flowlab::fokker_planck::{Boundary, GeneratorGrid};
use flowlab::grid::{GridSpec, ScalarGrid};
use flowlab::lab::{self, ExperimentReport};
use flowlab::moduli::{certify_osgood_divergence, AuxiliaryFunction, OsgoodModulus, LOG_LINEAR_BREAKPOINT};
use flowlab::mollify::{mollify_tabulated, MollifierSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Gate {
    results: Vec<(String, bool)>,
}

impl Gate {
    fn record(&mut self, name: &str, pass: bool, detail: String, seconds: f64, limit: f64) {
        let in_time = seconds < limit;
        let ok = pass && in_time;
        let time = if in_time { format!("{seconds:.1} s < {limit} s") } else { format!("{seconds:.1} s OVER {limit} s") };
        println!("{} {name}: {detail} [{time}]", if ok { "PASS" } else { "FAIL" });
        self.results.push((name.to_string(), ok));
    }
}

fn verdict(r: &ExperimentReport, name: &str) -> (bool, f64) {
    match r.verdicts.iter().find(|v| v.name == name) {
        Some(v) => (v.pass, v.value),
        None => (false, f64::NAN),
    }
}

fn verdicts_with(r: &ExperimentReport, prefix: &str) -> Vec<(bool, f64)> {
    r.verdicts.iter().filter(|v| v.name.starts_with(prefix)).map(|v| (v.pass, v.value)).collect()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn gauge_closed_form(gate: &mut Gate) {
    let ((worst, ok), secs) = timed(|| {
        let generic = OsgoodModulus::custom_fn("identity", |s| s, |_| 1.0);
        let mut worst = 0.0f64;
        let mut ok = true;
        for delta in [1.0, 0.1, 0.01] {
            for m in [OsgoodModulus::linear(), generic.clone()] {
                let aux = AuxiliaryFunction::new(m, delta).unwrap();
                for i in 0..=140 {
                    let xi = 10f64.powf(-6.0 + 7.0 * i as f64 / 140.0);
                    let exact = (xi / delta).ln_1p();
                    let err = (aux.eval(xi).unwrap() - exact).abs() / (1.0 + exact.abs());
                    worst = worst.max(err);
                    ok &= err <= 1e-10;
                }
            }
        }
        (worst, ok)
    });
    gate.record("gauge-closed-form", ok, format!("max |psi - log(1 + xi/delta)| / (1 + |log|) = {worst:.2e} <= 1e-10"), secs, 1.0);
}

fn loglinear_splice(gate: &mut Gate) {
    let ((jump, increasing, ratio), secs) = timed(|| {
        let m = OsgoodModulus::log_linear();
        let b = LOG_LINEAR_BREAKPOINT;
        let below = -b * b.ln();
        let above = m.eval(b * (1.0 + 1e-15)).unwrap();
        let jump = (m.eval(b).unwrap() - below).abs().max((above - below).abs());
        let eps: Vec<f64> = (1..=8).map(|k| 10f64.powi(-k)).collect();
        let r = certify_osgood_divergence(&m, &eps, 3.0).unwrap();
        (jump, r.strictly_increasing, r.growth_ratio)
    });
    let ok = jump <= 1e-12 && increasing && ratio > 3.0;
    gate.record(
        "loglinear-splice",
        ok,
        format!("jump at e^-2 = {jump:.1e} <= 1e-12, I increasing = {increasing}, I(1e-8)/I(1e-1) = {ratio:.3} > 3"),
        secs,
        1.0,
    );
}

fn maximal_function(gate: &mut Gate) {
    let ((worst, ok), secs) = timed(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let spec = GridSpec::cube(2, 1.0, 32);
        let steps = spec.steps();
        let radii = ball_radii(steps[0], 0.5, 8);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let values: Vec<f64> = (0..spec.len()).map(|_| rng.gen::<f64>()).collect();
            let f = ScalarGrid::from_values(spec.clone(), values).unwrap();
            let fast = local_maximal_function(&f, 0.5, 8).unwrap();
            // exhaustive: every cell, every radius, every other cell
            for c in 0..spec.len() {
                let ci = spec.unravel(c);
                let mut best = f64::NEG_INFINITY;
                for r in &radii {
                    let (mut s, mut n) = (0.0, 0usize);
                    for o in 0..spec.len() {
                        let oi = spec.unravel(o);
                        let dx = (oi[0] as f64 - ci[0] as f64) * steps[0];
                        let dy = (oi[1] as f64 - ci[1] as f64) * steps[1];
                        if dx * dx + dy * dy <= r * r {
                            s += f.values[o];
                            n += 1;
                        }
                    }
                    best = best.max(s / n as f64);
                }
                worst = worst.max((fast.values[c] - best).abs());
            }
        }
        (worst, worst <= 1e-12)
    });
    gate.record("maximal-function-oracle", ok, format!("max deviation from exhaustive oracle = {worst:.1e} <= 1e-12"), secs, 10.0);
}

fn adjointness(gate: &mut Gate) {
    let ((worst, ok), secs) = timed(|| {
        let v = CoefficientPair::from_specs(
            &DriftSpec::Vseries { terms: 10_000, table_points: Some(1 << 15) },
            &DiffusionSpec::Constant { scale: 0.5 },
            1,
            1,
        )
        .unwrap();
        let rough = mollify_tabulated(&v, MollifierSpec::new(16), 64.0).unwrap();
        let shear = CoefficientPair::from_specs(&DriftSpec::Shear, &DiffusionSpec::Tanh { scale: 1.0 }, 2, 2).unwrap();
        let grids = [
            GeneratorGrid::new(&rough, GridSpec::new(vec![-4.0], vec![6.0], vec![640]).unwrap(), Boundary::ZeroFlux).unwrap(),
            GeneratorGrid::new(&shear, GridSpec::cube(2, 2.0, 48), Boundary::ZeroFlux).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut worst = 0.0f64;
        for k in 0..20 {
            let g = &grids[k % 2];
            let spec = g.spec().clone();
            let field = |rng: &mut ChaCha8Rng| {
                let values: Vec<f64> = (0..spec.len())
                    .map(|c| {
                        let idx = spec.unravel(c);
                        let interior = (0..spec.dim()).all(|a| idx[a] >= 2 && idx[a] + 2 < spec.resolution[a]);
                        if interior {
                            rng.gen::<f64>() - 0.5
                        } else {
                            0.0
                        }
                    })
                    .collect();
                ScalarGrid::from_values(spec.clone(), values).unwrap()
            };
            let phi = field(&mut rng);
            let u = field(&mut rng);
            let lhs = g.inner(&g.apply_l(&phi).unwrap().values, &u.values);
            let rhs = g.inner(&phi.values, &g.apply_adjoint(&u).unwrap().values);
            let norms = g.inner(&phi.values, &phi.values).sqrt() * g.inner(&u.values, &u.values).sqrt();
            worst = worst.max((lhs - rhs).abs() / norms);
        }
        (worst, worst <= 1e-10)
    });
    gate.record("adjointness", ok, format!("max |<L phi, u> - <phi, L* u>| / (|phi| |u|) = {worst:.1e} <= 1e-10"), secs, 5.0);
}

fn main() {
    let mut gate = Gate { results: Vec::new() };
    let root = tempfile::tempdir().unwrap();
    let configs: HashMap<&str, lab::ExperimentConfig> = lab::shipped_configs().into_iter().collect();
    let run = |key: &str, workers: usize, dir: &Path| -> (ExperimentReport, f64) {
        let mut c = configs[key].clone();
        c.workers = workers;
        c.output = Some(format!("{key}-w{workers}").into());
        timed(|| lab::run(&c, dir).expect("shipped config runs"))
    };

    gauge_closed_form(&mut gate);
    loglinear_splice(&mut gate);
    maximal_function(&mut gate);

    let (r, secs) = run("osgood-certify", 1, root.path());
    let certs = verdicts_with(&r, "certify-");
    let ok = certs.len() == 2 && certs.iter().all(|(p, v)| *p && *v == 0.0);
    gate.record("hq-certification", ok, format!("violation rates {:?} over 1e5 pairs", certs.iter().map(|c| c.1).collect::<Vec<_>>()), secs, 30.0);

    let (r, secs) = run("flow-selfconv", 1, root.path());
    let ratios = verdicts_with(&r, "self-convergence-ratio");
    let ok = ratios.len() == 3 && ratios.iter().all(|(p, _)| *p);
    gate.record(
        "ou-self-convergence",
        ok,
        format!("RMS sup-distance ratios {:?} in [0.6, 0.8]", ratios.iter().map(|c| (c.1 * 1e3).round() / 1e3).collect::<Vec<_>>()),
        secs,
        60.0,
    );

    let (r, secs) = run("flow-cauchy", 1, root.path());
    let (trend, inv) = verdict(&r, "cauchy-trend");
    let (fin, ratio) = verdict(&r, "cauchy-final");
    let (nodiv, _) = verdict(&r, "no-divergence");
    gate.record(
        "mollified-cauchy-trend",
        trend && fin && nodiv,
        format!("{inv} increases along the ladder, final/first = {ratio:.2e} < 0.1"),
        secs,
        300.0,
    );

    let (contract, s1) = run("density-contract", 1, root.path());
    let (rotation, s2) = run("density-rotation", 1, root.path());
    let bounds: Vec<(bool, f64)> = verdicts_with(&contract, "density-bound-");
    let units = verdicts_with(&rotation, "unit-density-");
    let ok = bounds.len() == 4 && bounds.iter().all(|b| b.0) && units.len() == 2 && units.iter().all(|u| u.0);
    gate.record(
        "density-bound",
        ok,
        format!(
            "contracting sup E K^p = {:?}, rotation max |K - 1| = {:?} <= 0.05",
            bounds.iter().map(|b| (b.1 * 1e3).round() / 1e3).collect::<Vec<_>>(),
            units.iter().map(|u| (u.1 * 1e3).round() / 1e3).collect::<Vec<_>>()
        ),
        s1 + s2,
        120.0,
    );

    let (ou, s_ou) = run("fpe-ou", 1, root.path());
    let (err_ok, err) = verdict(&ou, "variance-error");
    let (ord_ok, ord) = verdict(&ou, "variance-order");
    gate.record(
        "fpe-ou-variance",
        err_ok && ord_ok,
        format!("relative variance error {err:.2e} < 0.01 at h = 1/128, error ratio {ord:.3} in [0.2, 0.35]"),
        s_ou,
        60.0,
    );

    adjointness(&mut gate);

    let (vs, s_vs) = run("fpe-vseries", 1, root.path());
    let (d1, g1) = verdict(&ou, "duality");
    let (d2, g2) = verdict(&vs, "duality");
    gate.record(
        "fpe-particle-duality",
        d1 && d2,
        format!("worst gap / (3 stderr + 1% |pde|): OU {g1:.3}, mollified V-series {g2:.3} <= 1"),
        s_ou + s_vs,
        180.0,
    );

    let (probe, s_probe) = run("flow-probe", 1, root.path());
    let (p_ok, p_val) = verdict(&probe, "markov-probe");
    let (u_ok, u_val) = verdict(&vs, "uniqueness-refinement");
    gate.record(
        "uniqueness",
        p_ok && u_ok,
        format!("probe worst P - bound - 3 stderr = {p_val:.2e} <= 0, L1 refinement ratio {u_val:.3} < 0.6"),
        s_probe + s_vs,
        120.0,
    );

    let (ok, secs) = timed(|| {
        let mut ok = true;
        for key in ["osgood-certify", "flow-selfconv", "flow-probe", "density-contract", "fpe-ou", "fpe-vseries"] {
            let hashes: Vec<String> = [1, 4, 8].iter().map(|&w| run(key, w, root.path()).0.outputs_hash).collect();
            let same = hashes.iter().all(|h| *h == hashes[0]);
            if !same {
                println!("  {key}: hashes differ across worker counts");
            }
            ok &= same;
        }
        ok
    });
    gate.record("replay-determinism", ok, "CSV hashes identical for workers 1, 4, 8".into(), secs, 600.0);

    let failed: Vec<&str> = gate.results.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    println!("{} of {} criteria pass", gate.results.len() - failed.len(), gate.results.len());
    if !failed.is_empty() {
        println!("failing: {}", failed.join(", "));
        std::process::exit(1);
    }
}

use std::sync::Arc;

use super::*;
use crate::fields::{
    CoefficientPair, ConstantDrift, ConstantSigma, DiffusionSpec, DriftSpec, LinearDrift, VectorField,
};
use crate::moduli::{AuxiliaryFunction, OsgoodModulus};
use crate::Error;

fn pair(drift: DriftSpec, sigma: DiffusionSpec, d: usize) -> CoefficientPair {
    CoefficientPair::from_specs(&drift, &sigma, d, d).unwrap()
}

fn linear(scale: f64, sigma: f64) -> CoefficientPair {
    CoefficientPair::new(
        Arc::new(ConstantSigma::scaled_identity(1, 1, sigma)),
        Arc::new(LinearDrift { dim: 1, scale }),
    )
    .unwrap()
}

fn at(x: f64) -> StartPoints {
    StartPoints::uniform(1, vec![x]).unwrap()
}

#[test]
fn frozen_dynamics() {
    let p = pair(DriftSpec::Zero, DiffusionSpec::Zero, 2);
    let starts = StartPoints::uniform(2, vec![0.5, -1.0, 2.0, 3.0]).unwrap();
    let noise = BrownianStore::new(1, 3, 2, 1.0, 16).unwrap();
    let e = integrate(&p, &starts, &noise, Scheme::EulerMaruyama, &IntegrateOptions::default()).unwrap();
    for t in 0..e.n_trajectories() {
        for s in 0..e.record_steps().len() {
            assert_eq!(e.state(t, s), starts.point(t % 2));
        }
    }
    let m = moment_report(&e, 2.0).unwrap();
    assert!((m.mean - 0.5 * (1.25 + 13.0)).abs() < 1e-12);
}

#[test]
fn decay_ode_first_order() {
    let exact = (-1.0f64).exp();
    let mut errs = Vec::new();
    for n in [64, 128, 256] {
        let noise = BrownianStore::new(0, 1, 1, 1.0, n).unwrap();
        let opts = IntegrateOptions { record: RecordPolicy::Final, ..Default::default() };
        let e = integrate(&linear(-1.0, 0.0), &at(1.0), &noise, Scheme::EulerMaruyama, &opts).unwrap();
        errs.push((e.final_states()[0] - exact).abs());
    }
    assert!(errs[0] < 0.01);
    for w in errs.windows(2) {
        let r = w[1] / w[0];
        assert!((0.45..0.55).contains(&r), "{errs:?}");
    }
}

#[test]
fn brownian_variance_is_2t() {
    let p = linear(0.0, 2f64.sqrt());
    let n_paths = 100_000;
    let noise = BrownianStore::new(3, n_paths, 1, 1.5, 8).unwrap();
    let opts = IntegrateOptions { record: RecordPolicy::Final, ..Default::default() };
    let e = integrate(&p, &at(0.0), &noise, Scheme::EulerMaruyama, &opts).unwrap();
    let sq: Vec<f64> = e.final_states().iter().map(|x| x * x).collect();
    let est = crate::stats::MeanEstimate::from_samples(&sq);
    assert!((est.mean - 3.0).abs() < 3.0 * est.stderr, "{est:?}");
}

#[test]
fn sup_distance_examples() {
    let p = pair(DriftSpec::Ou { theta: 1.0 }, DiffusionSpec::Constant { scale: 0.7 }, 2);
    let starts = StartPoints::uniform(2, vec![0.1, 0.2, -1.0, 0.5]).unwrap();
    let noise = BrownianStore::new(9, 4, 2, 1.0, 32).unwrap();
    let o = IntegrateOptions::default();
    let a = integrate(&p, &starts, &noise, Scheme::EulerMaruyama, &o).unwrap();
    let b = integrate(&p, &starts, &noise, Scheme::EulerMaruyama, &o).unwrap();
    assert!(sup_distance(&a, &b).unwrap().iter().all(|d| *d == 0.0));

    let mut shifted = a.clone();
    for c in shifted.snapshots.chunks_mut(2) {
        c[0] += 3.0;
        c[1] -= 4.0;
    }
    assert!(sup_distance(&a, &shifted).unwrap().iter().all(|d| (d - 5.0).abs() < 1e-12));

    let other = BrownianStore::new(9, 4, 2, 1.0, 32).unwrap();
    let c = integrate(&p, &starts, &other, Scheme::EulerMaruyama, &o).unwrap();
    assert!(matches!(sup_distance(&a, &c), Err(Error::Coupling(_))));
    let coarse = integrate(&p, &starts, &noise.coarsen(2).unwrap(), Scheme::EulerMaruyama, &o).unwrap();
    assert!(matches!(sup_distance(&a, &coarse), Err(Error::Parameter(_))));
}

#[test]
fn mollified_levels_recomputation() {
    use crate::mollify::{mollify_pair, MollifierSpec};
    let base = pair(DriftSpec::Ou { theta: 1.0 }, DiffusionSpec::Constant { scale: 0.5 }, 1);
    let l4 = mollify_pair(&base, MollifierSpec::new(1).with_points(32)).unwrap();
    let l8 = mollify_pair(&base, MollifierSpec::new(2).with_points(32)).unwrap();
    let starts = StartPoints::uniform(1, vec![-1.5, 0.0, 0.4, 1.9]).unwrap();
    let noise = BrownianStore::new(4, 3, 1, 1.0, 20).unwrap();
    let o = IntegrateOptions::default();
    let a = integrate(&l4, &starts, &noise, Scheme::EulerMaruyama, &o).unwrap();
    let b = integrate(&l8, &starts, &noise, Scheme::EulerMaruyama, &o).unwrap();
    let got = sup_distance(&a, &b).unwrap();
    for (t, g) in got.iter().enumerate() {
        let mut m: f64 = 0.0;
        for s in 0..=20 {
            m = m.max((a.state(t, s)[0] - b.state(t, s)[0]).abs());
        }
        assert_eq!(*g, m);
    }
    // the streaming engine sees the same trajectories
    let run = run_coupled(&[Lane::new(&l4), Lane::new(&l8)], &starts, &noise, &CoupledOptions { reference: 1, ..Default::default() })
        .unwrap();
    assert_eq!(run.lanes[0].sup_distance, got);
    assert_eq!(run.lanes[0].sup_norm, a.sup_norm);
    assert_eq!(run.lanes[0].final_state, a.final_states());
}

#[test]
fn interpolated_distance_against_coupled_engine() {
    let p = linear(-1.0, 1.0);
    let starts = StartPoints::uniform(1, vec![0.3, -0.8]).unwrap();
    let fine = BrownianStore::new(21, 5, 1, 1.0, 64).unwrap();
    let coarse = fine.coarsen(4).unwrap();
    let o = IntegrateOptions::default();
    let ef = integrate(&p, &starts, &fine, Scheme::EulerMaruyama, &o).unwrap();
    let ec = integrate(&p, &starts, &coarse, Scheme::EulerMaruyama, &o).unwrap();
    let d = sup_distance_interpolated(&ec, &ef).unwrap();
    let lanes = [Lane::new(&p), Lane { pair: &p, factor: 4, scheme: Scheme::EulerMaruyama }];
    let run = run_coupled(&lanes, &starts, &fine, &CoupledOptions::default()).unwrap();
    for (a, b) in d.iter().zip(&run.lanes[1].sup_distance) {
        assert!((a - b).abs() < 1e-14);
    }
    assert!(d.iter().all(|v| *v > 0.0));
}

#[test]
fn psi_stability_examples() {
    let aux = AuxiliaryFunction::new(OsgoodModulus::log_linear(), 0.05).unwrap();
    let starts = StartPoints::new(1, vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 2.0]).unwrap();
    let noise = BrownianStore::new(2, 2, 1, 2.0, 10).unwrap();
    let o = IntegrateOptions::default();
    let zero = pair(DriftSpec::Zero, DiffusionSpec::Zero, 1);
    let a = integrate(&zero, &starts, &noise, Scheme::EulerMaruyama, &o).unwrap();
    assert_eq!(psi_stability(&a, &a, &aux, 10.0).unwrap().mean, 0.0);

    let eps = 0.1;
    let shifted = CoefficientPair::new(zero.sigma.clone(), Arc::new(ConstantDrift { value: vec![eps] })).unwrap();
    let b = integrate(&shifted, &starts, &noise, Scheme::EulerMaruyama, &o).unwrap();
    // gap eps t, sup eps T; only starts with sup |X~| <= R = 2.1 count
    let psi = aux.eval((eps * 2.0f64).powi(2)).unwrap();
    let got = psi_stability(&a, &b, &aux, 2.1).unwrap();
    assert!((got.mean - 0.5 * psi).abs() < 1e-12, "{got:?}");
    assert!(matches!(AuxiliaryFunction::new(OsgoodModulus::log_linear(), 0.0), Err(Error::Parameter(_))));
}

#[test]
fn ou_moment_bound() {
    let (theta, sigma, x0, t) = (1.0, 1.0, 0.5, 4.0);
    let p = linear(-theta, sigma);
    let noise = BrownianStore::new(5, 20_000, 1, t, 200).unwrap();
    let opts = IntegrateOptions { record: RecordPolicy::Final, ..Default::default() };
    let e = integrate(&p, &at(x0), &noise, Scheme::EulerMaruyama, &opts).unwrap();
    let sq: Vec<f64> = e.final_states().iter().map(|x| x * x).collect();
    let fin = crate::stats::MeanEstimate::from_samples(&sq);
    let exact = x0 * x0 * (-2.0 * theta * t).exp() + sigma * sigma / (2.0 * theta) * (1.0 - (-2.0 * theta * t).exp());
    // EM bias on the stationary variance: sigma^2 / (2 theta - theta^2 dt)
    assert!((fin.mean - exact).abs() < 4.0 * fin.stderr + 0.01, "{fin:?} vs {exact}");
    let sup = moment_report(&e, 2.0).unwrap();
    assert!(sup.mean >= fin.mean);
    assert!(sup.mean.is_finite());
}

#[test]
fn explosive_linear_moment() {
    let p = linear(1.0, 0.0);
    let starts = StartPoints::uniform(1, vec![0.5, 1.0, -2.0]).unwrap();
    let initial = (0.25 + 1.0 + 4.0) / 3.0;
    let noise = BrownianStore::new(5, 1, 1, 1.0, 4096).unwrap();
    let e = integrate(&p, &starts, &noise, Scheme::EulerMaruyama, &IntegrateOptions::default()).unwrap();
    let m = moment_report(&e, 2.0).unwrap();
    let oracle = std::f64::consts::E.powi(2) * initial;
    assert!((m.mean / oracle - 1.0).abs() < 2.0 / 4096.0 * 1.5, "{} vs {oracle}", m.mean);
}

struct Square;
impl VectorField for Square {
    fn dim(&self) -> usize {
        1
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] * x[0];
    }
    fn name(&self) -> String {
        "square".into()
    }
}

#[test]
fn blow_up_is_flagged_not_dropped() {
    let p = CoefficientPair::new(Arc::new(ConstantSigma::scaled_identity(1, 1, 0.0)), Arc::new(Square)).unwrap();
    let starts = StartPoints::uniform(1, vec![0.1, 5.0]).unwrap();
    let noise = BrownianStore::new(5, 1, 1, 1.0, 100).unwrap();
    let e = integrate(&p, &starts, &noise, Scheme::EulerMaruyama, &IntegrateOptions::default()).unwrap();
    assert_eq!(e.diverged(), &[false, true]);
    assert_eq!(e.n_trajectories(), 2);
    assert!(e.final_states().iter().all(|x| x.is_finite()));
}

#[test]
fn stopped_trajectories_are_frozen() {
    let p = linear(0.0, 1.0);
    let starts = StartPoints::uniform(1, vec![0.0, 0.9, 2.0]).unwrap();
    let noise = BrownianStore::new(8, 50, 1, 1.0, 100).unwrap();
    let opts = IntegrateOptions { stopping_radius: Some(1.0), ..Default::default() };
    let e = integrate(&p, &starts, &noise, Scheme::EulerMaruyama, &opts).unwrap();
    let mut stopped = 0;
    for t in 0..e.n_trajectories() {
        let k = e.stopped_at()[t];
        if k < 100 {
            stopped += 1;
            assert!(e.state(t, k)[0].abs() >= 1.0);
            for s in k..=100 {
                assert_eq!(e.state(t, s), e.state(t, k));
            }
        }
        let m = (0..=100).map(|s| e.state(t, s)[0].abs()).fold(0.0, f64::max);
        assert_eq!(m, e.sup_norm()[t]);
    }
    assert!(stopped > 50);
    assert!((0..50).all(|p| e.stopped_at()[p * 3 + 2] == 0));
}

#[test]
fn milstein_capability_and_additive_equivalence() {
    let p2 = pair(DriftSpec::Zero, DiffusionSpec::Constant { scale: 1.0 }, 2);
    let s2 = StartPoints::uniform(2, vec![0.0, 0.0]).unwrap();
    let n2 = BrownianStore::new(1, 1, 2, 1.0, 4).unwrap();
    let r = integrate(&p2, &s2, &n2, Scheme::Milstein1d, &IntegrateOptions::default());
    assert!(matches!(r, Err(Error::Capability(_))));
    // constant sigma: the correction vanishes
    let p = linear(-1.0, 0.3);
    let n = BrownianStore::new(1, 4, 1, 1.0, 32).unwrap();
    let a = integrate(&p, &at(0.2), &n, Scheme::Milstein1d, &IntegrateOptions::default()).unwrap();
    let b = integrate(&p, &at(0.2), &n, Scheme::EulerMaruyama, &IntegrateOptions::default()).unwrap();
    assert_eq!(a.final_states(), b.final_states());
}

#[test]
fn probe_examples() {
    let aux = vec![
        AuxiliaryFunction::new(OsgoodModulus::log_linear(), 1e-3).unwrap(),
        AuxiliaryFunction::new(OsgoodModulus::log_linear(), 1e-1).unwrap(),
    ];
    let p = linear(-1.0, 1.0);
    let starts = StartPoints::uniform(1, vec![-0.5, 0.0, 0.5]).unwrap();
    let same = ProbeVariant { coarse_factor: 1, ..Default::default() };
    let noise = BrownianStore::new(3, 400, 1, 1.0, 64).unwrap();
    for r in uniqueness_probe(&p, &noise, &starts, &aux, 0.05, 5.0, same).unwrap() {
        assert_eq!(r.probability.mean, 0.0);
        assert_eq!(r.psi_mean.mean, 0.0);
        assert!(r.holds);
    }
    let mut probs = Vec::new();
    for n in [16, 64, 256] {
        let noise = BrownianStore::new(3, 400, 1, 1.0, n).unwrap();
        let reports = uniqueness_probe(&p, &noise, &starts, &aux, 0.02, 5.0, ProbeVariant::default()).unwrap();
        assert!(reports.iter().all(|r| r.holds));
        probs.push(reports[0].probability.mean);
    }
    assert!(probs[2] < probs[0], "{probs:?}");
}

#[test]
fn worker_count_does_not_change_bits() {
    let p = pair(DriftSpec::Shear, DiffusionSpec::Tanh { scale: 0.8 }, 2);
    let starts = StartPoints::uniform(2, (0..40).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let noise = BrownianStore::new(77, 16, 2, 1.0, 50).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let e = integrate(&p, &starts, &noise, Scheme::EulerMaruyama, &IntegrateOptions::default()).unwrap();
            (e.snapshots.clone(), moment_report(&e, 3.0).unwrap().mean.to_bits())
        })
    };
    let (a, ma) = run(1);
    for t in [3, 8] {
        let (b, mb) = run(t);
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(ma, mb);
    }
}

#[test]
fn trajectory_dump_roundtrip() {
    let p = pair(DriftSpec::Rotation { rate: 1.0 }, DiffusionSpec::Constant { scale: 0.1 }, 2);
    let starts = StartPoints::uniform(2, vec![1.0, 0.0, 0.0, 2.0, -1.0, -1.0]).unwrap();
    let noise = BrownianStore::new(6, 2, 2, 1.0, 10).unwrap();
    let opts = IntegrateOptions { record: RecordPolicy::Every(5), ..Default::default() };
    let e = integrate(&p, &starts, &noise, Scheme::EulerMaruyama, &opts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.bin");
    write_trajectories(&path, &e, serde_json::json!({"note": "x"})).unwrap();
    let (h, cols) = read_trajectories(&path).unwrap();
    assert_eq!(h.record_steps, vec![0, 5, 10]);
    assert_eq!(h.rows, 2 * 3 * 3);
    assert_eq!(cols.len(), 5);
    // row (path 1, particle 2, snapshot 1)
    let row = (3 + 2) * 3 + 1;
    assert_eq!((cols[0][row], cols[1][row], cols[2][row]), (1.0, 2.0, 0.5));
    assert_eq!(&[cols[3][row], cols[4][row]][..], e.state(5, 1));
}

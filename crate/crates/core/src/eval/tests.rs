use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::autodiff::Tensor;
use crate::losses::mmd_permutation_threshold;
use crate::models::{Dims, ModelConfig, ModelKind};
use crate::problems::ProblemKind;

fn kin() -> Problem {
    Problem::default_for(ProblemKind::Kinematics)
}

fn oracle(problem: &Problem, y: &[f64], n: usize, seed: u64) -> SampleSet {
    let eps = default_eps(problem.kind());
    rejection_sample_posterior(problem, y, eps, n, &mut stream(seed, "oracle-test", 0), 100_000_000).unwrap()
}

fn halves(s: &SampleSet) -> (SampleSet, SampleSet) {
    let n = s.len() / 2;
    let a: Vec<usize> = (0..n).collect();
    let b: Vec<usize> = (n..2 * n).collect();
    let mk = |idx: &[usize]| SampleSet {
        samples: s.samples.select_rows(idx),
        ..s.clone()
    };
    (mk(&a), mk(&b))
}

#[test]
fn oracle_halves_are_below_the_permutation_threshold() {
    let p = kin();
    let full = oracle(&p, &[1.5, 0.0], 512, 1);
    let (a, b) = halves(&full);
    let k = Kernel::default();
    let e = err_post(&a, &b, &k).unwrap();
    let thr = mmd_permutation_threshold(&a.samples, &b.samples, &k, 200, 0.95, &mut stream(1, "perm", 0)).unwrap();
    assert!(e < thr, "{e} >= {thr}");
    assert!((e - err_post(&b, &a, &k).unwrap()).abs() < 1e-12);
    assert_eq!(err_post(&a, &a, &k).unwrap(), 0.0);
}

#[test]
fn err_post_requires_matching_conditions() {
    let p = kin();
    let a = oracle(&p, &[1.5, 0.0], 50, 1);
    let b = oracle(&p, &[1.0, 0.5], 50, 1);
    assert!(matches!(err_post(&a, &b, &Kernel::default()), Err(EvalError::ConditionMismatch { .. })));
    let empty = SampleSet::from_model("m", &[1.5, 0.0], Tensor::zeros(0, 4));
    assert!(matches!(err_post(&empty, &a, &Kernel::default()), Err(EvalError::Empty)));
}

#[test]
fn err_resim_bounds() {
    let p = kin();
    let x0 = [0.1, 0.4, -0.3, 0.2];
    let y = p.forward(&x0).unwrap();
    let exact = SampleSet::from_model("m", &y, Tensor::from_rows(&[x0; 10]));
    assert_eq!(err_resim(&exact, &p).unwrap(), 0.0);
    for (problem, y) in [(kin(), vec![1.5, 0.0]), (Problem::default_for(ProblemKind::Ballistics), vec![5.0])] {
        let o = oracle(&problem, &y, 300, 2);
        let eps = default_eps(problem.kind());
        let r = err_resim(&o, &problem).unwrap();
        assert!(r <= eps * eps, "{r} > {}", eps * eps);
        // the prior is far worse than any posterior
        let prior = prior_set(&problem, &y, 300, 3);
        assert!(err_resim(&prior, &problem).unwrap() >= 10.0 * r);
    }
}

#[test]
fn condition_grid_and_oracles_are_deterministic() {
    let p = kin();
    let g1 = condition_grid(&p, 5, 9).unwrap();
    assert_eq!(g1, condition_grid(&p, 5, 9).unwrap());
    let settings = EvalSettings {
        samples: 20,
        ..EvalSettings::default()
    };
    let o1 = build_oracles(&p, &g1, &settings, 9).unwrap();
    let o2 = build_oracles(&p, &g1, &settings, 9).unwrap();
    assert_eq!(o1, o2);
    assert!(o1.iter().zip(&g1).all(|(o, y)| &o.condition == y && o.len() == 20));
}

#[test]
fn evaluate_and_time_an_untrained_model() {
    let p = kin();
    let mut m = Model::new(
        ModelKind::Cinn,
        Dims { x: 4, y: 2 },
        ModelConfig {
            width: Some(8),
            coupling_blocks: 2,
            ..ModelConfig::default()
        },
        1,
    )
    .unwrap();
    m.mark_trained();
    let settings = EvalSettings {
        samples: 32,
        ..EvalSettings::default()
    };
    let grid = condition_grid(&p, 3, 2).unwrap();
    let oracles = build_oracles(&p, &grid, &settings, 2).unwrap();
    let recs = evaluate_model(&m, &p, &oracles, &settings, 2).unwrap();
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r.err_post >= 0.0 && r.err_resim >= 0.0 && r.n_samples == 32));
    assert_eq!(recs, {
        let mut again = evaluate_model(&m, &p, &oracles, &settings, 2).unwrap();
        // timings are the only non-deterministic field
        for (a, b) in again.iter_mut().zip(&recs) {
            a.inference_ms = b.inference_ms;
        }
        again
    });
    let t = time_inference(&m, &[1.0, 0.0], 64, 11, 0).unwrap();
    assert_eq!(t.runs_ms.len(), 11);
    assert!(t.median_ms > 0.0 && t.spread_ms() >= 0.0);
    let csv = records_csv(&recs);
    assert!(csv.starts_with("model,y1,y2,err_post,err_resim,n_samples,eps\n"));
    assert_eq!(csv.lines().count(), 4);
    let back = parse_records_csv(&csv).unwrap();
    assert_eq!(back.len(), 3);
    for (a, b) in back.iter().zip(&recs) {
        assert!(a.inference_ms.is_nan());
        assert_eq!((&a.model, &a.condition, a.err_post, a.err_resim), (&b.model, &b.condition, b.err_post, b.err_resim));
    }
    assert!(parse_records_csv("model,foo\n").is_err());
    // untimed records give no inference column
    assert_eq!(aggregate(&back, Caps::default()).models[0].inference_ms, None);
}

#[test]
fn mean_shift_cases() {
    let same = Tensor::from_rows(&[[1.0, 2.0, 3.0, 4.0]; 7]);
    assert_eq!(mean_shift_mode(&same, MeanShift::default()).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
    assert!(mean_shift_mode(&Tensor::zeros(0, 4), MeanShift::default()).is_none());

    // 90/10 clusters: the mode sits in the heavy one
    let mut rng = stream(3, "clusters", 0);
    let rows: Vec<[f64; 4]> = (0..500)
        .map(|i| {
            let c = if i % 10 == 0 { 3.0 } else { -1.0 };
            std::array::from_fn(|_| c + 0.1 * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    let t = Tensor::from_rows(&rows);
    let mode = mean_shift_mode(&t, MeanShift::default()).unwrap();
    assert!(mode.iter().all(|v| (v + 1.0).abs() < 0.1), "{mode:?}");

    // invariant under reordering
    let mut idx: Vec<usize> = (0..500).collect();
    idx.reverse();
    idx.swap(3, 200);
    let again = mean_shift_mode(&t.select_rows(&idx), MeanShift::default()).unwrap();
    for (a, b) in mode.iter().zip(&again) {
        assert!((a - b).abs() < 1e-9);
    }
}

fn record(model: &str, post: f64, resim: f64) -> EvalRecord {
    EvalRecord {
        model: model.into(),
        condition: vec![0.0],
        err_post: post,
        err_resim: resim,
        inference_ms: 1.0,
        n_samples: 10,
        eps: 0.1,
    }
}

#[test]
fn aggregate_examples() {
    let r = aggregate(&[record("inn", 0.3, 0.2)], Caps::default());
    let s = &r.models[0].err_post;
    assert_eq!((s.clamped_mean, s.median, s.q1, s.q3), (0.3, 0.3, 0.3, 0.3));

    // reference values from the linear-interpolation percentile definition
    let recs: Vec<EvalRecord> = [1.0, 2.0, 3.0, 4.0, 10.0].iter().map(|&v| record("a", v, v)).collect();
    let s = Stats::new(&recs.iter().map(|r| r.err_post).collect::<Vec<_>>(), 5.0);
    assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
    assert_eq!((s.lo_whisker, s.hi_whisker), (1.0, 4.0));
    assert_eq!(s.clamped_mean, (1.0 + 2.0 + 3.0 + 4.0 + 5.0) / 5.0);
    let rep = aggregate(&recs, Caps::default());
    // below the resim cap the clamped mean is the plain mean
    assert_eq!(rep.models[0].err_resim.clamped_mean, 4.0);

    // per-model grouping keeps first-appearance order
    let mixed = [record("b", 1.0, 1.0), record("a", 2.0, 2.0), record("b", 3.0, 3.0)];
    let rep = aggregate(&mixed, Caps::default());
    assert_eq!(rep.models.iter().map(|m| m.model.as_str()).collect::<Vec<_>>(), ["b", "a"]);
    assert_eq!(rep.summary("b").unwrap().err_post.clamped_mean, 2.0);
}

#[test]
fn report_outputs_are_deterministic() {
    let recs: Vec<EvalRecord> = (0..20).map(|i| record(["inn", "cinn"][i % 2], i as f64 * 0.1, 0.01 * i as f64)).collect();
    let a = aggregate(&recs, Caps::default());
    let b = aggregate(&recs, Caps::default());
    assert_eq!(a.table_csv(), b.table_csv());
    assert_eq!(a.boxplot_csv(), b.boxplot_csv());
    assert_eq!(a.text(), b.text());
    let table = a.table_csv();
    assert!(table.starts_with("model,label,ml_loss,y_supervision,err_post,err_resim,inference_ms,params\n"));
    assert!(table.contains("cinn,cINN,yes,no,"));
    assert_eq!(a.boxplot_csv().lines().count(), 1 + 2 * 2);
}

proptest! {
    #[test]
    fn quartiles_agree_with_sorted_positions(values in proptest::collection::vec(-1e3f64..1e3, 1..60)) {
        let s = Stats::new(&values, f64::INFINITY);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        for (q, v) in [(0.25, s.q1), (0.5, s.median), (0.75, s.q3)] {
            let pos = q * (n - 1) as f64;
            let (lo, hi) = (sorted[pos.floor() as usize], sorted[pos.ceil() as usize]);
            prop_assert!(lo <= v + 1e-9 && v <= hi + 1e-9);
        }
        prop_assert!(s.min <= s.lo_whisker && s.lo_whisker <= s.q1);
        prop_assert!(s.q1 <= s.median && s.median <= s.q3);
        prop_assert!(s.q3 <= s.hi_whisker && s.hi_whisker <= s.max);
        let mean = values.iter().sum::<f64>() / n as f64;
        prop_assert!((s.clamped_mean - mean).abs() < 1e-9);
    }
}

fn gaussian_cloud(n: usize, sd: f64, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = stream(seed, "cloud", 0);
    (0..n)
        .map(|_| [1.0 + sd * rng.sample::<f64, _>(StandardNormal), -2.0 + sd * rng.sample::<f64, _>(StandardNormal)])
        .collect()
}

#[test]
fn contour_of_a_gaussian_cloud_is_the_chi_square_circle() {
    let sd = 0.5;
    let pts = gaussian_cloud(3000, sd, 1);
    let c = contour_97(&pts, GridSpec::default()).unwrap();
    let inside = c.containment(&pts);
    assert!((0.96..=0.98).contains(&inside), "{inside}");
    // chi-square(2) quantile: r^2 = -2 ln(0.03)
    let expect = (-2.0 * 0.03f64.ln()).sqrt() * sd;
    let main = c.polylines.iter().max_by_key(|l| l.len()).unwrap();
    assert_eq!(main.first(), main.last(), "contour should close");
    let r = main.iter().map(|p| ((p[0] - 1.0).powi(2) + (p[1] + 2.0).powi(2)).sqrt()).sum::<f64>() / main.len() as f64;
    assert!((r / expect - 1.0).abs() < 0.05, "radius {r} vs {expect}");
    assert_eq!(c, contour_97(&pts, GridSpec::default()).unwrap());
}

#[test]
fn contour_rejects_degenerate_input() {
    assert!(matches!(contour_97(&[[1.0, 1.0]; 200], GridSpec::default()), Err(EvalError::Degenerate(_))));
    assert!(contour_97(&gaussian_cloud(50, 1.0, 0), GridSpec::default()).is_err());
}

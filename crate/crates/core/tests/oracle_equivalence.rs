mod common;

use common::*;
use seqcv::crossval::{cv_criterion, cv_objective, run_schedule, select_xi, CvPlan};
use seqcv::smoothing::{loo_predictions, normed_path};
use seqcv::{loo_predict, smoother_normed, smoother_raw, Kernel, Series, SmootherState};

const TOL: f64 = 1e-10;

#[test]
fn smoothers_match_double_loop() {
    for seed in 0..8 {
        let y = seeded_series(seed, 150);
        let s = Series::complete(y.clone()).unwrap();
        for kernel in builtin_kernels() {
            for h in [0.7, 3.0, 30.0, 400.0] {
                for i in [1, 2, 17, 80, 150] {
                    let got = smoother_normed(&s, &kernel, h, i).unwrap();
                    assert!(rel_err(got, normed(&y, &kernel, h, i)) < TOL);
                    let got = smoother_raw(&s, &kernel, h, i).unwrap();
                    assert!(rel_err(got, raw(&y, &kernel, h, i)) < TOL);
                }
            }
        }
    }
}

#[test]
fn gaussian_streaming_t200() {
    let y = seeded_series(42, 200);
    let kernel = Kernel::gaussian();
    let h = 200.0 / 5.0;
    let mut state = SmootherState::new(&kernel, h).unwrap();
    for (idx, &v) in y.iter().enumerate() {
        let i = idx + 1;
        let p = state.loo_predict_stream(v).unwrap();
        if i == 1 {
            assert!(p.is_none());
        } else {
            assert!(rel_err(p.unwrap(), loo(&y, &kernel, h, i)) < TOL, "i = {i}");
        }
    }
}

#[test]
fn batch_predictions_match_double_loop() {
    let y = seeded_series(7, 240);
    let s = Series::complete(y.clone()).unwrap();
    for kernel in builtin_kernels() {
        let h = 24.0;
        let batch = loo_predictions(&s, &kernel, h, 240).unwrap();
        assert_eq!(batch.len(), 239);
        for (k, p) in batch.iter().enumerate() {
            assert!(rel_err(*p, loo(&y, &kernel, h, k + 2)) < TOL);
            assert_eq!(*p, loo_predict(&s, &kernel, h, k + 2).unwrap());
        }
        let path = normed_path(&s, &kernel, h, 240).unwrap();
        for (k, m) in path.iter().enumerate() {
            assert!(rel_err(*m, normed(&y, &kernel, h, k + 1)) < TOL);
        }
    }
}

#[test]
fn criteria_match_double_loop() {
    for seed in 100..106 {
        let y = seeded_series(seed, 180);
        let s = Series::complete(y.clone()).unwrap();
        for kernel in builtin_kernels() {
            for xi in [1.0, 4.5, 20.0] {
                let h = 180.0 / xi;
                for sv in [0.2, 0.5, 1.0] {
                    let cv = cv_criterion(&s, &kernel, h, sv).unwrap();
                    assert!(rel_err(cv, common::cv(&y, &kernel, h, sv)) < TOL);
                    let c = cv_objective(&s, &kernel, xi, sv).unwrap();
                    assert!(rel_err(c, objective(&y, &kernel, xi, sv)) < TOL);
                    assert!((c - (cv - sum_sq(&y, sv))).abs() < 1e-10 * (1.0 + cv.abs()));
                }
            }
        }
    }
}

#[test]
fn schedule_matches_exhaustive_scan() {
    let y = seeded_series(3, 200);
    let s = Series::complete(y.clone()).unwrap();
    let kernel = Kernel::epanechnikov();
    let grid = CvPlan::equispaced_grid(1.0, 20.0, 20).unwrap();
    let plan = CvPlan::new(grid.clone(), 0.1, vec![0.25, 0.5, 1.0]).unwrap();
    let sched = run_schedule(&s, &kernel, &plan).unwrap();
    for (res, sv) in sched.results.iter().zip([0.25, 0.5, 1.0]) {
        let scan: Vec<f64> = grid.iter().map(|&xi| objective(&y, &kernel, xi, sv)).collect();
        for (a, b) in res.objective.iter().zip(&scan) {
            assert!(rel_err(*a, *b) < TOL);
        }
        let best = scan
            .iter()
            .enumerate()
            .fold(0, |b, (k, v)| if *v < scan[b] { k } else { b });
        assert_eq!(res.xi_star, grid[best]);
        let single = select_xi(&s, &kernel, &plan, sv).unwrap();
        assert_eq!(single.xi_star, res.xi_star);
        for (a, b) in res.objective.iter().zip(&single.objective) {
            assert!(rel_err(*a, *b) < TOL);
        }
    }
    assert_eq!(sched.path.starts(), &[50, 100, 200]);
}

#[test]
fn streaming_full_pass_t500() {
    let y = seeded_series(500, 500);
    let s = Series::complete(y.clone()).unwrap();
    for kernel in builtin_kernels() {
        let h = 37.5;
        let batch = loo_predictions(&s, &kernel, h, 500).unwrap();
        let mut state = SmootherState::new(&kernel, h).unwrap();
        let stream: Vec<f64> = y.iter().filter_map(|v| state.loo_predict_stream(*v).unwrap()).collect();
        for (a, b) in stream.iter().zip(&batch) {
            assert!(rel_err(*a, *b) <= TOL);
        }
    }
}

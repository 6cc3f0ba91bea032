use seqcv::simulation::{generate_errors, mean_and_se, run_experiment, simulate_scenario};
use seqcv::{BandwidthSource, DetectorSpec, Direction, ErrorModel, Kernel, ScenarioParams, StartRule};

fn lag1(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    cov / var
}

#[test]
fn ar1_without_memory_is_white() {
    let e = generate_errors(&ErrorModel::ar1(0.0, 1.5), 100_000, 17).unwrap();
    assert!(lag1(&e).abs() <= 0.01);
    let (_, se) = mean_and_se(&e);
    // SE of the mean is σ/√n for white noise.
    assert!((se * (e.len() as f64).sqrt() - 1.5).abs() < 0.02);
}

#[test]
fn ar1_is_stationary_with_the_right_memory() {
    let e = generate_errors(&ErrorModel::ar1(0.6, 1.0), 100_000, 5).unwrap();
    assert!((lag1(&e) - 0.6).abs() < 0.01);
    let var = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
    assert!((var - 1.0 / (1.0 - 0.36)).abs() < 0.05);
    assert!((ErrorModel::ar1(0.6, 1.0).variance() - 1.5625).abs() < 1e-12);
}

#[test]
fn ma_lag_one_correlation() {
    let model = ErrorModel::Ma {
        coefficients: vec![0.5],
        sigma: 1.0,
    };
    let e = generate_errors(&model, 100_000, 8).unwrap();
    assert!((lag1(&e) - 0.4).abs() < 0.01);
}

#[test]
fn photovoltaic_jump_shows_in_the_levels() {
    let sigma = 2.15;
    let delta = 2.0 * sigma;
    let params = ScenarioParams::photovoltaic(delta);
    let s = simulate_scenario(&params, &ErrorModel::iid_gaussian(sigma), 3).unwrap();
    let y = s.values();
    let (pre, pre_se) = mean_and_se(&y[..params.q1 - 1]);
    let (post, post_se) = mean_and_se(&y[params.q2 - 1..]);
    let expected = -((params.q2 - params.q1) as f64) * 0.1 + delta;
    let se = (pre_se * pre_se + post_se * post_se).sqrt();
    assert!(
        ((post - pre) - expected).abs() <= 3.0 * se,
        "{} vs {expected}",
        post - pre
    );
}

fn pv_spec(c: f64) -> DetectorSpec {
    DetectorSpec {
        direction: Direction::LowerCrossing,
        control_limit: c,
        start: StartRule::Fixed { index: 25 },
        kernel: Kernel::gaussian(),
        bandwidth: BandwidthSource::Fixed(15.0),
    }
}

#[test]
fn delay_table_shape_and_scaling() {
    let params = ScenarioParams::photovoltaic(0.0);
    let model = ErrorModel::iid_gaussian(2.15);
    let spec = pv_spec(187.5);
    let deltas = [0.0, 4.0 / 3.0 * 2.15, 2.0 * 2.15, 4.0 * 2.15];
    let rows = run_experiment(&deltas, &params, &model, &spec, 400, 77).unwrap();
    // No true jump: the run continues into the drifted null and is often censored.
    assert!(rows[0].mean_delay > rows[1].mean_delay);
    assert!(rows[0].censored_frac >= rows[1].censored_frac);
    for w in rows[1..].windows(2) {
        assert!(w[0].mean_delay > w[1].mean_delay, "{rows:?}");
    }
    let doubled = run_experiment(&deltas[1..2], &params, &model, &spec, 800, 78).unwrap();
    let ratio = doubled[0].se / rows[1].se;
    assert!((ratio - 0.5f64.sqrt()).abs() <= 0.2 * 0.5f64.sqrt(), "ratio {ratio}");
}

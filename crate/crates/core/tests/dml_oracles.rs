use cohortlab_core::dml::{crossfit, fit_ridge, naive, DmlData, LearnerParams};
use cohortlab_core::linalg::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian elimination with partial pivoting on a dense square system.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Normal equations of `[1 X]` with the intercept left unpenalized.
fn ridge_oracle(rows: &[Vec<f64>], y: &[f64], lambda: f64, intercept: bool) -> (f64, Vec<f64>) {
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| if intercept { std::iter::once(1.0).chain(r.iter().copied()).collect() } else { r.clone() })
        .collect();
    let q = z[0].len();
    let mut a = vec![vec![0.0; q]; q];
    let mut b = vec![0.0; q];
    for (zr, &yv) in z.iter().zip(y) {
        for i in 0..q {
            b[i] += zr[i] * yv;
            for j in 0..q {
                a[i][j] += zr[i] * zr[j];
            }
        }
    }
    let first_penalized = usize::from(intercept);
    for (i, row) in a.iter_mut().enumerate().skip(first_penalized) {
        row[i] += lambda;
    }
    let beta = solve(a, b);
    if intercept {
        (beta[0], beta[1..].to_vec())
    } else {
        (0.0, beta)
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let (u, v): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn ridge_matches_the_normal_equations(
        seed in any::<u64>(),
        n in 6usize..40,
        p in 1usize..6,
        lambda in prop_oneof![Just(0.1), 0.01f64..10.0],
        intercept in any::<bool>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| normal(&mut rng) * 3.0 + 1.0).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() + normal(&mut rng)).collect();
        let model = fit_ridge(&Matrix::from_rows(&rows), &y, &LearnerParams { intercept, ..LearnerParams::ridge(lambda) }).unwrap();
        let (b0, beta) = ridge_oracle(&rows, &y, lambda, intercept);
        prop_assert!((model.intercept - b0).abs() < 1e-8 * (1.0 + b0.abs()), "{} vs {}", model.intercept, b0);
        for (got, want) in model.coefficients.iter().zip(&beta) {
            prop_assert!((got - want).abs() < 1e-8 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }
}

/// `T = Xβ_t + u`, `Y = θT + Xβ_y + e` with ten standard-normal controls.
/// `confounded = false` drops the `Xβ_t` term. Returns the data and `Xβ_y`.
fn linear_dgp(n: usize, theta: f64, seed: u64, confounded: bool) -> (DmlData, Vec<f64>) {
    let p = 10;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta_t: Vec<f64> = (0..p).map(|j| 0.5 / (j + 1) as f64).collect();
    let beta_y: Vec<f64> = (0..p).map(|j| if j % 2 == 0 { 0.6 } else { -0.4 }).collect();
    let (mut ids, mut xs, mut t, mut y, mut gy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..n {
        let x: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
        let dot = |b: &[f64]| x.iter().zip(b).map(|(a, b)| a * b).sum::<f64>();
        let ti = if confounded { dot(&beta_t) } else { 0.0 } + normal(&mut rng);
        let g = dot(&beta_y);
        ids.push(format!("S{i:05}"));
        t.push(ti);
        y.push(theta * ti + g + normal(&mut rng));
        gy.push(g);
        xs.extend(x);
    }
    let names = (0..p).map(|j| format!("x{j}")).collect();
    (DmlData::new(ids, y, t, Matrix::from_row_major(n, p, xs), names).unwrap(), gy)
}

fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[test]
fn crossfit_agrees_with_the_infeasible_oracle() {
    let learner = LearnerParams::ridge(1.0);
    for seed in 0..10 {
        let (data, gy) = linear_dgp(2000, 2.0, seed, true);
        let est = crossfit(&data, 5, &learner, seed).unwrap();
        let stripped: Vec<f64> = data.y.iter().zip(&gy).map(|(y, g)| y - g).collect();
        let oracle = ols_slope(&data.t, &stripped);
        assert!((est.theta - oracle).abs() <= est.std_error, "seed {seed}: {} vs oracle {oracle}", est.theta);
        assert!((1.9..=2.1).contains(&est.theta), "seed {seed}: {}", est.theta);
    }
}

#[test]
fn null_effect_is_covered() {
    let learner = LearnerParams::ridge(1.0);
    let covered = (0..100)
        .filter(|&seed| {
            let (data, _) = linear_dgp(600, 0.0, 1000 + seed, true);
            let est = crossfit(&data, 5, &learner, seed).unwrap();
            est.theta.abs() <= 3.0 * est.std_error
        })
        .count();
    assert!(covered >= 95, "{covered}/100 within 3 SE");
}

#[test]
fn naive_and_crossfit_agree_without_confounding() {
    let learner = LearnerParams::ridge(1.0);
    for seed in 0..10 {
        let (data, _) = linear_dgp(1500, 1.0, 50 + seed, false);
        let dml = crossfit(&data, 5, &learner, seed).unwrap();
        let plain = naive(&data, &learner).unwrap();
        let joint = 1.96 * (dml.std_error.powi(2) + plain.std_error.powi(2)).sqrt();
        assert!((dml.theta - plain.theta).abs() <= joint, "seed {seed}: {} vs {}", dml.theta, plain.theta);
    }
}

#[test]
fn estimates_are_bit_deterministic() {
    let (data, _) = linear_dgp(500, 2.0, 3, true);
    let learner = LearnerParams::ridge(0.5);
    let a = crossfit(&data, 5, &learner, 17).unwrap();
    let b = crossfit(&data, 5, &learner, 17).unwrap();
    assert_eq!(a.theta.to_bits(), b.theta.to_bits());
    assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    assert_eq!(a, b);
}

#[test]
fn fold_count_barely_moves_the_estimate() {
    let learner = LearnerParams::ridge(1.0);
    for seed in 0..10 {
        let (data, _) = linear_dgp(2000, 2.0, 300 + seed, true);
        let ests: Vec<_> = [2, 5, 10].iter().map(|&k| crossfit(&data, k, &learner, seed).unwrap()).collect();
        for a in &ests {
            for b in &ests {
                let combined = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
                assert!((a.theta - b.theta).abs() <= 3.0 * combined, "seed {seed}: {} vs {}", a.theta, b.theta);
            }
        }
    }
}

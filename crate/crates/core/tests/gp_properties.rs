use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sosguard::gp::{fit, polynomial_mean, GpDataset, KernelConfig};

fn kernel() -> KernelConfig {
    KernelConfig::new(vec![0.6, 1.5], 0.8, 1e-3).unwrap()
}

fn random_dataset(rng: &mut ChaCha8Rng, n: usize) -> GpDataset {
    let inputs: Vec<Vec<f64>> =
        (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)]).collect();
    let targets = inputs.iter().map(|x| (2.0 * x[0]).sin() + 0.1 * x[1] + rng.random_range(-0.05..0.05)).collect();
    GpDataset::new(inputs, targets).unwrap()
}

/// Mean and variance from a fresh dense solve, sharing nothing with `fit`.
fn dense_oracle(d: &GpDataset, k: &KernelConfig, x: &[f64]) -> (f64, f64) {
    let n = d.len();
    let kmat =
        DMatrix::from_fn(n, n, |i, j| k.eval(&d.inputs[i], &d.inputs[j]) + if i == j { k.noise_variance } else { 0.0 });
    let ks = DVector::from_fn(n, |i, _| k.eval(x, &d.inputs[i]));
    let lu = kmat.lu();
    let w = lu.solve(&DVector::from_column_slice(&d.targets)).unwrap();
    let v = lu.solve(&ks).unwrap();
    (ks.dot(&w), k.eval(x, x) - ks.dot(&v))
}

#[test]
fn posterior_matches_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let d = random_dataset(&mut rng, 60);
    let k = kernel();
    let post = fit(&d, &k).unwrap();
    for _ in 0..200 {
        let x = [rng.random_range(-1.5..1.5), rng.random_range(-4.0..4.0)];
        let (m, v) = post.predict(&x).unwrap();
        let (mo, vo) = dense_oracle(&d, &k, &x);
        assert!((m - mo).abs() <= 1e-8, "{m} vs {mo}");
        assert!((v - vo.max(0.0)).abs() <= 1e-8, "{v} vs {vo}");
    }
}

#[test]
fn posterior_variance_below_prior() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let k = kernel();
    let post = fit(&random_dataset(&mut rng, 40), &k).unwrap();
    for _ in 0..500 {
        let x = [rng.random_range(-2.0..2.0), rng.random_range(-5.0..5.0)];
        let (_, v) = post.predict(&x).unwrap();
        assert!(v >= 0.0 && v <= k.eval(&x, &x) + 1e-9);
    }
}

#[test]
fn adding_data_never_increases_variance() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let k = kernel();
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let mut d = random_dataset(&mut rng, n);
        let q = [rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)];
        let before = fit(&d, &k).unwrap().predict(&q).unwrap().1;
        d.push(vec![rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)], 0.3);
        let after = fit(&d, &k).unwrap().predict(&q).unwrap().1;
        assert!(after <= before + 1e-9, "{after} > {before}");
    }
}

#[test]
fn quadratic_mean_is_recovered() {
    let k = KernelConfig::new(vec![0.5], 1.0, 1e-6).unwrap();
    let xs: Vec<f64> = (0..61).map(|i| -1.5 + 3.0 * i as f64 / 60.0).collect();
    let d = GpDataset::new(xs.iter().map(|&x| vec![x]).collect(), xs.iter().map(|x| x * x).collect()).unwrap();
    let post = fit(&d, &k).unwrap();
    let s = polynomial_mean(&post, &[(-1.0, 1.0)], 2).unwrap();
    let sup_mean = (0..101).map(|i| post.mean(&[-1.0 + 0.02 * i as f64]).unwrap().abs()).fold(0.0, f64::max);
    assert!(s.fit_error_sup <= 1e-2 * sup_mean, "{}", s.fit_error_sup);
    let x2 = sosguard::poly::Polynomial::var(1, 0).pow(2);
    assert!(s.mean_poly.max_coeff_diff(&x2) <= 1e-2);
}

#[test]
fn fit_error_sup_dominates_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let k = kernel();
    let post = fit(&random_dataset(&mut rng, 80), &k).unwrap();
    let domain = [(-1.0, 1.0), (-3.0, 3.0)];
    let s = polynomial_mean(&post, &domain, 3).unwrap();
    for _ in 0..2000 {
        let x = [rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)];
        let err = (s.mean_poly.evaluate(&x).unwrap() - post.mean(&x).unwrap()).abs();
        assert!(err <= s.fit_error_sup, "{err} > {}", s.fit_error_sup);
    }
}

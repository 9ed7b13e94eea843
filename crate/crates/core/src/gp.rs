//! Gaussian-process regression of residual dynamics.
//!
//! One scalar GP per output dimension with a squared-exponential kernel and
//! fixed hyperparameters. [`polynomial_mean`] turns the posterior mean into a
//! polynomial so it can enter the SOS programs.

use std::fmt::Write as _;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use crate::poly::{Monomial, PolyDynamics, PolyError, Polynomial};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("invalid kernel configuration: {0}")]
    InvalidKernel(String),
    #[error("expected dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in dataset row {0}")]
    NonFinite(usize),
    #[error("kernel matrix is not positive definite (duplicate inputs with zero noise?)")]
    NotPositiveDefinite,
    #[error("degenerate fit domain on axis {0}")]
    DegenerateDomain(usize),
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("dataset parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Poly(#[from] PolyError),
}

/// Squared-exponential kernel
/// `k(x, y) = signal_variance * exp(-1/2 sum_i (x_i - y_i)^2 / l_i^2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelConfig {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelConfig {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Result<Self, GpError> {
        let k = Self { lengthscales, signal_variance, noise_variance };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GpError> {
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(GpError::InvalidKernel("lengthscales must be positive".into()));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(GpError::InvalidKernel("signal variance must be positive".into()));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(GpError::InvalidKernel("noise variance must be non-negative".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).zip(&self.lengthscales).map(|((a, b), l)| ((a - b) / l).powi(2)).sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

/// Inputs and scalar targets for one output dimension.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GpDataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

impl GpDataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self, GpError> {
        if inputs.len() != targets.len() {
            return Err(GpError::DimensionMismatch { expected: inputs.len(), got: targets.len() });
        }
        let d = Self { inputs, targets };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<(), GpError> {
        let dim = self.inputs.first().map_or(0, Vec::len);
        for (i, (x, t)) in self.inputs.iter().zip(&self.targets).enumerate() {
            if x.len() != dim {
                return Err(GpError::DimensionMismatch { expected: dim, got: x.len() });
            }
            if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
                return Err(GpError::NonFinite(i));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn push(&mut self, input: Vec<f64>, target: f64) {
        self.inputs.push(input);
        self.targets.push(target);
    }

    /// One `s_1,...,s_n,target` row per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (x, t) in self.inputs.iter().zip(&self.targets) {
            for v in x {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{t}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, GpError> {
        let mut d = GpDataset::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| GpError::Parse { line: i + 1, msg: e.to_string() })?;
            let Some((t, x)) = vals.split_last() else {
                return Err(GpError::Parse { line: i + 1, msg: "empty row".into() });
            };
            if x.is_empty() {
                return Err(GpError::Parse { line: i + 1, msg: "row has no inputs".into() });
            }
            d.push(x.to_vec(), *t);
        }
        d.validate()?;
        Ok(d)
    }
}

/// One observed transition `(s, a, s')`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub next_state: Vec<f64>,
}

/// Per-dimension residual datasets `s' - P(s) - G(s) a` against a nominal
/// model (its residual term is ignored).
pub fn residual_dataset(trajectory: &[Transition], nominal: &PolyDynamics) -> Result<Vec<GpDataset>, GpError> {
    let n = nominal.state_dim();
    let mut out = vec![GpDataset::default(); n];
    for tr in trajectory {
        if tr.state.len() != n || tr.next_state.len() != n {
            return Err(GpError::DimensionMismatch { expected: n, got: tr.state.len().max(tr.next_state.len()) });
        }
        let pred = nominal.nominal_step(&tr.state, &tr.action)?;
        for k in 0..n {
            out[k].push(tr.state.clone(), tr.next_state[k] - pred[k]);
        }
    }
    for d in &out {
        d.validate()?;
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct GpPosterior {
    dataset: GpDataset,
    kernel: KernelConfig,
    chol: Option<Cholesky<f64, Dyn>>,
    weights: DVector<f64>,
}

/// Factorizes `K + noise * I` and precomputes the mean weights. An empty
/// dataset yields the prior.
pub fn fit(dataset: &GpDataset, kernel: &KernelConfig) -> Result<GpPosterior, GpError> {
    kernel.validate()?;
    dataset.validate()?;
    let n = dataset.len();
    if n == 0 {
        return Ok(GpPosterior {
            dataset: dataset.clone(),
            kernel: kernel.clone(),
            chol: None,
            weights: DVector::zeros(0),
        });
    }
    if dataset.inputs[0].len() != kernel.dim() {
        return Err(GpError::DimensionMismatch { expected: kernel.dim(), got: dataset.inputs[0].len() });
    }
    let k = gram(dataset, kernel);
    let chol = Cholesky::new(k).ok_or(GpError::NotPositiveDefinite)?;
    let weights = chol.solve(&DVector::from_column_slice(&dataset.targets));
    Ok(GpPosterior { dataset: dataset.clone(), kernel: kernel.clone(), chol: Some(chol), weights })
}

fn gram(dataset: &GpDataset, kernel: &KernelConfig) -> DMatrix<f64> {
    let n = dataset.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&dataset.inputs[i], &dataset.inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += kernel.noise_variance;
    }
    k
}

impl GpPosterior {
    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn dataset(&self) -> &GpDataset {
        &self.dataset
    }

    /// `K + noise * I`, rebuilt from the stored factor.
    pub fn reconstructed_gram(&self) -> DMatrix<f64> {
        match &self.chol {
            Some(c) => {
                let l = c.l();
                &l * l.transpose()
            }
            None => DMatrix::zeros(0, 0),
        }
    }

    pub fn gram(&self) -> DMatrix<f64> {
        gram(&self.dataset, &self.kernel)
    }

    /// Posterior mean and variance. Variance round-off below zero is clamped,
    /// with a warning if it exceeds `1e-8` in magnitude.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64), GpError> {
        if x.len() != self.kernel.dim() {
            return Err(GpError::DimensionMismatch { expected: self.kernel.dim(), got: x.len() });
        }
        let prior = self.kernel.eval(x, x);
        let Some(chol) = &self.chol else {
            return Ok((0.0, prior));
        };
        let ks =
            DVector::from_iterator(self.dataset.len(), self.dataset.inputs.iter().map(|xi| self.kernel.eval(x, xi)));
        let mean = ks.dot(&self.weights);
        let mut v = ks;
        chol.l_dirty().solve_lower_triangular_mut(&mut v);
        let mut var = prior - v.norm_squared();
        if var < 0.0 {
            if var < -1e-8 {
                log::warn!("posterior variance {var:e} clamped to zero");
            }
            var = 0.0;
        }
        Ok((mean, var))
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64, GpError> {
        Ok(self.predict(x)?.0)
    }
}

/// Polynomial surrogate `m_d(s) = phi(s)' w` of a GP posterior mean.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyMeanSurrogate {
    pub mean_poly: Polynomial,
    pub fit_domain: Vec<(f64, f64)>,
    /// Inflated sup of `|mean_poly - gp_mean|` over the validation grid.
    pub fit_error_sup: f64,
    pub delta: f64,
    pub k_delta: f64,
}

pub const FIT_GRID_PER_AXIS: usize = 20;
/// Validation grid uses every fit node and every midpoint between nodes.
pub const VALIDATION_GRID_PER_AXIS: usize = 2 * FIT_GRID_PER_AXIS - 1;
pub const RIDGE: f64 = 1e-8;
/// Safety factor applied to the observed validation error.
pub const FIT_ERROR_INFLATION: f64 = 1.25;
pub const DEFAULT_DELTA: f64 = 0.05;
pub const DEFAULT_K_DELTA: f64 = 2.0;

fn grid(domain: &[(f64, f64)], per_axis: usize) -> Vec<Vec<f64>> {
    let mut pts = vec![Vec::with_capacity(domain.len())];
    for &(lo, hi) in domain {
        let axis: Vec<f64> = (0..per_axis)
            .map(|i| if per_axis == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (per_axis - 1) as f64 })
            .collect();
        pts = pts
            .into_iter()
            .flat_map(|p| {
                axis.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    pts
}

/// Ridge least-squares fit of the posterior mean on a uniform grid.
///
/// Features are monomials in coordinates rescaled to `[-1, 1]`; the result is
/// mapped back to the original coordinates.
pub fn polynomial_mean(post: &GpPosterior, domain: &[(f64, f64)], degree: u32) -> Result<PolyMeanSurrogate, GpError> {
    let n = post.kernel.dim();
    if domain.len() != n {
        return Err(GpError::DimensionMismatch { expected: n, got: domain.len() });
    }
    for (i, &(lo, hi)) in domain.iter().enumerate() {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(GpError::DegenerateDomain(i));
        }
    }
    let to_unit =
        |x: &[f64]| -> Vec<f64> { x.iter().zip(domain).map(|(v, (lo, hi))| (2.0 * v - lo - hi) / (hi - lo)).collect() };
    let feats = Monomial::all_up_to(n, degree);
    let pts = grid(domain, FIT_GRID_PER_AXIS);
    let mut phi = DMatrix::zeros(pts.len(), feats.len());
    let mut y = DVector::zeros(pts.len());
    for (r, p) in pts.iter().enumerate() {
        let u = to_unit(p);
        for (c, m) in feats.iter().enumerate() {
            phi[(r, c)] = m.eval(&u);
        }
        y[r] = post.mean(p)?;
    }
    let mut normal = phi.transpose() * &phi;
    let scale = normal.diagonal().max();
    let eig_min = nalgebra::SymmetricEigen::new(normal.clone()).eigenvalues.min();
    if eig_min <= 1e-12 * scale {
        return Err(GpError::RankDeficient);
    }
    for i in 0..feats.len() {
        normal[(i, i)] += RIDGE;
    }
    let w = Cholesky::new(normal).ok_or(GpError::RankDeficient)?.solve(&(phi.transpose() * y));

    let unit_poly = Polynomial::from_terms(n, feats.into_iter().zip(w.iter().copied()));
    let images: Vec<Polynomial> = domain
        .iter()
        .enumerate()
        .map(|(i, &(lo, hi))| Polynomial::var(n, i).scale(2.0 / (hi - lo)).add_constant(-(lo + hi) / (hi - lo)))
        .collect();
    let mean_poly = unit_poly.compose(&images)?;

    let mut sup: f64 = 0.0;
    for p in grid(domain, VALIDATION_GRID_PER_AXIS) {
        sup = sup.max((unit_poly.eval_unchecked(&to_unit(&p)) - post.mean(&p)?).abs());
    }
    Ok(PolyMeanSurrogate {
        mean_poly,
        fit_domain: domain.to_vec(),
        fit_error_sup: FIT_ERROR_INFLATION * sup,
        delta: DEFAULT_DELTA,
        k_delta: DEFAULT_K_DELTA,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel1() -> KernelConfig {
        KernelConfig::new(vec![0.7], 1.3, 0.0).unwrap()
    }

    #[test]
    fn single_point_interpolates() {
        let d = GpDataset::new(vec![vec![0.3]], vec![0.8]).unwrap();
        let p = fit(&d, &kernel1()).unwrap();
        let (m, v) = p.predict(&[0.3]).unwrap();
        assert!((m - 0.8).abs() <= 1e-10);
        assert!(v <= 1e-8);
    }

    #[test]
    fn single_point_formula() {
        let k = KernelConfig::new(vec![0.7], 1.3, 0.2).unwrap();
        let d = GpDataset::new(vec![vec![0.3]], vec![0.8]).unwrap();
        let p = fit(&d, &k).unwrap();
        let x = [-0.4];
        let expect = k.eval(&x, &[0.3]) * 0.8 / (k.eval(&[0.3], &[0.3]) + 0.2);
        assert!((p.mean(&x).unwrap() - expect).abs() <= 1e-12);
    }

    #[test]
    fn gram_diagonal_is_signal_plus_noise() {
        let k = KernelConfig::new(vec![1.0, 2.0], 0.9, 0.01).unwrap();
        let d = GpDataset::new(vec![vec![0.0, 1.0], vec![1.0, -1.0], vec![2.0, 0.5]], vec![1.0, 2.0, 3.0]).unwrap();
        let p = fit(&d, &k).unwrap();
        for i in 0..3 {
            assert!((p.gram()[(i, i)] - 0.91).abs() < 1e-15);
        }
        assert!((p.reconstructed_gram() - p.gram()).amax() <= 1e-8);
    }

    #[test]
    fn symmetric_pair_matches_two_by_two_solve() {
        let k = kernel1();
        let d = GpDataset::new(vec![vec![-1.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let p = fit(&d, &k).unwrap();
        let a = k.eval(&[-1.0], &[-1.0]);
        let b = k.eval(&[-1.0], &[1.0]);
        // [[a, b], [b, a]] w = [0.5, 0.5]  =>  w_i = 0.5 / (a + b)
        let w = 0.5 / (a + b);
        let expect = 2.0 * k.eval(&[0.0], &[1.0]) * w;
        assert!((p.mean(&[0.0]).unwrap() - expect).abs() <= 1e-12);
    }

    #[test]
    fn empty_dataset_is_prior() {
        let p = fit(&GpDataset::default(), &kernel1()).unwrap();
        assert_eq!(p.predict(&[2.0]).unwrap(), (0.0, 1.3));
        let s = polynomial_mean(&p, &[(-1.0, 1.0)], 3).unwrap();
        assert!(s.mean_poly.is_zero());
        assert!(s.fit_error_sup <= 1e-10);
    }

    #[test]
    fn duplicate_inputs_without_noise_fail() {
        let d = GpDataset::new(vec![vec![0.0], vec![0.0]], vec![1.0, 2.0]).unwrap();
        assert_eq!(fit(&d, &kernel1()).unwrap_err(), GpError::NotPositiveDefinite);
    }

    #[test]
    fn degree_zero_is_grid_average() {
        let k = KernelConfig::new(vec![0.5], 1.0, 1e-4).unwrap();
        let d = GpDataset::new(vec![vec![-0.5], vec![0.2], vec![0.9]], vec![1.0, -0.3, 0.4]).unwrap();
        let p = fit(&d, &k).unwrap();
        let s = polynomial_mean(&p, &[(-1.0, 1.0)], 0).unwrap();
        let avg: f64 = grid(&[(-1.0, 1.0)], FIT_GRID_PER_AXIS).iter().map(|x| p.mean(x).unwrap()).sum::<f64>()
            / FIT_GRID_PER_AXIS as f64;
        assert!((s.mean_poly.constant_term() - avg).abs() <= 1e-9);
    }

    #[test]
    fn csv_round_trip() {
        let d = GpDataset::new(vec![vec![0.1, -2.0], vec![3.5, 0.0]], vec![0.25, -1e-3]).unwrap();
        let text = d.to_csv();
        assert_eq!(text.lines().next().unwrap(), "0.1,-2,0.25");
        assert_eq!(GpDataset::from_csv(&text).unwrap(), d);
        assert!(GpDataset::from_csv("1,x\n").is_err());
    }

    #[test]
    fn residuals_of_exact_model_vanish() {
        let x = Polynomial::var(2, 0);
        let y = Polynomial::var(2, 1);
        let dyn_ = PolyDynamics::new(
            vec![x.add(&y.scale(0.1)).unwrap(), y.clone()],
            vec![vec![Polynomial::zero(2)], vec![Polynomial::constant(2, 0.5)]],
        )
        .unwrap();
        let s = vec![0.3, -0.2];
        let a = vec![1.0];
        let next = dyn_.nominal_step(&s, &a).unwrap();
        let tr = Transition { state: s.clone(), action: a.clone(), next_state: next.clone() };
        let ds = residual_dataset(&[tr], &dyn_).unwrap();
        assert!(ds.iter().all(|d| d.targets[0].abs() < 1e-15));

        let mut shifted = next;
        shifted[1] += 0.1;
        let tr = Transition { state: s, action: a, next_state: shifted };
        let ds = residual_dataset(&[tr], &dyn_).unwrap();
        assert!(ds[0].targets[0].abs() < 1e-15);
        assert!((ds[1].targets[0] - 0.1).abs() < 1e-12);
    }
}

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::DdpgError;

/// How the last layer's pre-activation is mapped to the output.
#[derive(Clone, Debug, PartialEq)]
pub enum OutputMap {
    Linear,
    /// `center + half * tanh(z)` per output, keeping it inside `[lo, hi]`.
    Squashed(Vec<(f64, f64)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    pub output: OutputMap,
    /// Weights start uniform in `±init_scale / sqrt(fan_in)`.
    pub init_scale: f64,
    /// Start the last layer at zero so the initial output is constant.
    pub zero_last_layer: bool,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, output: OutputMap) -> Self {
        Self { widths, output, init_scale: 1.0, zero_last_layer: false }
    }

    pub fn validate(&self) -> Result<(), DdpgError> {
        if self.widths.len() < 3 {
            return Err(DdpgError::InvalidConfig("an MLP needs at least one hidden layer".into()));
        }
        if self.widths.contains(&0) {
            return Err(DdpgError::InvalidConfig("layer widths must be positive".into()));
        }
        if let OutputMap::Squashed(b) = &self.output {
            if b.len() != *self.widths.last().unwrap() || b.iter().any(|(lo, hi)| !(hi > lo)) {
                return Err(DdpgError::InvalidConfig("output bounds do not match output width".into()));
            }
        }
        if !(self.init_scale > 0.0) {
            return Err(DdpgError::InvalidConfig("init_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub w: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// Tanh hidden layers, linear or squashed output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Layer>,
}

/// Activations kept from a forward pass for [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct Trace {
    /// Input to each layer.
    inputs: Vec<DVector<f64>>,
    /// Last layer pre-activation.
    z_out: DVector<f64>,
    pub output: Vec<f64>,
}

/// Gradients with the same shapes as [`Mlp::layers`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads {
    pub layers: Vec<Layer>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Layer { w: DMatrix::zeros(l.w.nrows(), l.w.ncols()), b: DVector::zeros(l.b.len()) })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.w *= s;
            l.b *= s;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.w.iter());
        out.extend(l.b.iter());
    }
    out
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self, DdpgError> {
        spec.validate()?;
        let nl = spec.widths.len() - 1;
        let mut layers = Vec::with_capacity(nl);
        for (k, pair) in spec.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let lim = spec.init_scale / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-lim, lim).expect("positive limit");
            let zero = spec.zero_last_layer && k == nl - 1;
            let w = DMatrix::from_fn(fan_out, fan_in, |_, _| if zero { 0.0 } else { dist.sample(rng) });
            let b = DVector::from_fn(fan_out, |_, _| if zero { 0.0 } else { dist.sample(rng) });
            layers.push(Layer { w, b });
        }
        Ok(Self { spec, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.spec.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.spec.widths.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).output
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut h = DVector::from_column_slice(x);
        let mut inputs = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        let mut z_out = DVector::zeros(0);
        for (k, l) in self.layers.iter().enumerate() {
            inputs.push(h.clone());
            let z = &l.w * &h + &l.b;
            if k == last {
                z_out = z;
                break;
            }
            h = z.map(f64::tanh);
        }
        let output = match &self.spec.output {
            OutputMap::Linear => z_out.iter().copied().collect(),
            OutputMap::Squashed(b) => {
                z_out.iter().zip(b).map(|(z, (lo, hi))| 0.5 * (lo + hi) + 0.5 * (hi - lo) * z.tanh()).collect()
            }
        };
        Trace { inputs, z_out, output }
    }

    /// Backpropagates `d_out = dL/d(output)`; returns parameter gradients and
    /// `dL/d(input)`.
    pub fn backward(&self, trace: &Trace, d_out: &[f64]) -> (Grads, Vec<f64>) {
        let mut delta = DVector::from_column_slice(d_out);
        if let OutputMap::Squashed(b) = &self.spec.output {
            for (i, (lo, hi)) in b.iter().enumerate() {
                let t = trace.z_out[i].tanh();
                delta[i] *= 0.5 * (hi - lo) * (1.0 - t * t);
            }
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let input = &trace.inputs[k];
            let gw = &delta * input.transpose();
            let gb = delta.clone();
            let mut back = self.layers[k].w.transpose() * &delta;
            if k > 0 {
                // input of layer k is tanh of the previous pre-activation
                for (d, a) in back.iter_mut().zip(input.iter()) {
                    *d *= 1.0 - a * a;
                }
            }
            grads.push(Layer { w: gw, b: gb });
            delta = back;
        }
        grads.reverse();
        (Grads { layers: grads }, delta.iter().copied().collect())
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<(), DdpgError> {
        if flat.len() != self.param_count() {
            return Err(DdpgError::Shape(format!("expected {} parameters, got {}", self.param_count(), flat.len())));
        }
        let mut it = flat.iter().copied();
        for l in &mut self.layers {
            for v in l.w.iter_mut() {
                *v = it.next().unwrap();
            }
            for v in l.b.iter_mut() {
                *v = it.next().unwrap();
            }
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// `self <- tau * online + (1 - tau) * self`
    pub fn blend_from(&mut self, online: &Mlp, tau: f64) {
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.w.zip_apply(&o.w, |a, b| *a = tau * b + (1.0 - tau) * *a);
            t.b.zip_apply(&o.b, |a, b| *a = tau * b + (1.0 - tau) * *a);
        }
    }
}

/// Adam with the usual constants.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, net: &Mlp) -> Self {
        let n = net.param_count();
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Descends along `grads`.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let g = grads.flat();
        let mut p = net.params();
        for i in 0..p.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        net.set_params(&p).expect("same shape");
    }
}

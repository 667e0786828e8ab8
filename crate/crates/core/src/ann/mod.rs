//! Single-hidden-layer regressor `θ̂ = W1·SELU(W0·R̃ + b0) + b1` trained on
//! a mean squared error with an L1 weight penalty.

mod checkpoint;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use train::{train, Optimizer, TrainConfig, TrainReport};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::FingerprintRecord;
use crate::error::{Error, Result};

/// Scaled exponential linear unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selu {
    pub lambda: f64,
    pub alpha: f64,
}

impl Default for Selu {
    fn default() -> Self {
        Selu { lambda: 1.05, alpha: 1.67 }
    }
}

impl Selu {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.lambda * x
        } else {
            self.lambda * (self.alpha * x.exp() - self.alpha)
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        if x > 0.0 {
            self.lambda
        } else {
            self.lambda * self.alpha * x.exp()
        }
    }
}

/// Network weights, stored flat as `[W0 | b0 | W1 | b1]` with both matrices
/// row-major (`W0` is `n_hidden × n_in`, `W1` is `2 × n_hidden`).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    n_in: usize,
    n_hidden: usize,
    params: Vec<f64>,
    pub selu: Selu,
    /// Output units per meter of position.
    pub label_scale: f64,
}

/// Same layout as the model's parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub flat: Vec<f64>,
}

impl MlpModel {
    pub fn zeros(n_in: usize, n_hidden: usize) -> Self {
        MlpModel {
            n_in,
            n_hidden,
            params: vec![0.0; n_hidden * n_in + n_hidden + 2 * n_hidden + 2],
            selu: Selu::default(),
            label_scale: 1.0,
        }
    }

    /// Weights drawn from `N(0, 1/fan_in)`, biases zero.
    pub fn init(n_in: usize, n_hidden: usize, seed: u64) -> Self {
        let mut m = Self::zeros(n_in, n_hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d0 = Normal::new(0.0, (1.0 / n_in as f64).sqrt()).expect("finite std");
        let d1 = Normal::new(0.0, (1.0 / n_hidden as f64).sqrt()).expect("finite std");
        m.w0_mut().iter_mut().for_each(|w| *w = d0.sample(&mut rng));
        m.w1_mut().iter_mut().for_each(|w| *w = d1.sample(&mut rng));
        m
    }

    pub fn from_parts(n_in: usize, n_hidden: usize, w0: &[f64], b0: &[f64], w1: &[f64], b1: [f64; 2]) -> Result<Self> {
        let mut m = Self::zeros(n_in, n_hidden);
        for (dst, src) in [(m.w0_mut().len(), w0.len()), (n_hidden, b0.len()), (2 * n_hidden, w1.len())] {
            if dst != src {
                return Err(Error::DimensionMismatch { expected: dst, actual: src });
            }
        }
        m.w0_mut().copy_from_slice(w0);
        m.b0_mut().copy_from_slice(b0);
        m.w1_mut().copy_from_slice(w1);
        m.b1_mut().copy_from_slice(&b1);
        Ok(m)
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    fn offsets(&self) -> [usize; 4] {
        let w0 = self.n_hidden * self.n_in;
        [0, w0, w0 + self.n_hidden, w0 + 3 * self.n_hidden]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn w0(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[0]..o[1]]
    }
    pub fn b0(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[1]..o[2]]
    }
    pub fn w1(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[2]..o[3]]
    }
    pub fn b1(&self) -> &[f64] {
        let o = self.offsets();
        &self.params[o[3]..]
    }
    pub fn w0_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.params[o[0]..o[1]]
    }
    pub fn b0_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.params[o[1]..o[2]]
    }
    pub fn w1_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.params[o[2]..o[3]]
    }
    pub fn b1_mut(&mut self) -> &mut [f64] {
        let o = self.offsets();
        &mut self.params[o[3]..]
    }

    /// Whether a flat index addresses a weight (not a bias).
    pub fn is_weight(&self, idx: usize) -> bool {
        let o = self.offsets();
        idx < o[1] || (o[2]..o[3]).contains(&idx)
    }

    /// Entrywise L1 norm of both weight matrices.
    pub fn l1_norm(&self) -> f64 {
        self.w0().iter().chain(self.w1()).map(|w| w.abs()).sum()
    }

    fn hidden_pre(&self, x: &[f64], z: &mut [f64]) {
        let w0 = self.w0();
        for ((zj, row), b) in z.iter_mut().zip(w0.chunks_exact(self.n_in)).zip(self.b0()) {
            *zj = b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    fn output(&self, a: &[f64]) -> [f64; 2] {
        let w1 = self.w1();
        let b1 = self.b1();
        let (r0, r1) = w1.split_at(self.n_hidden);
        [
            b1[0] + r0.iter().zip(a).map(|(w, a)| w * a).sum::<f64>(),
            b1[1] + r1.iter().zip(a).map(|(w, a)| w * a).sum::<f64>(),
        ]
    }

    /// Raw network output in label units.
    pub fn forward(&self, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.n_in {
            return Err(Error::DimensionMismatch { expected: self.n_in, actual: x.len() });
        }
        let mut z = vec![0.0; self.n_hidden];
        self.hidden_pre(x, &mut z);
        z.iter_mut().for_each(|v| *v = self.selu.eval(*v));
        Ok(self.output(&z))
    }

    pub fn forward_batch(&self, xs: &[&[f64]]) -> Result<Vec<[f64; 2]>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    /// Predicted position in meters.
    pub fn predict_position(&self, x: &[f64]) -> Result<[f64; 2]> {
        let y = self.forward(x)?;
        Ok([y[0] / self.label_scale, y[1] / self.label_scale])
    }

    pub fn gradients(&self) -> Gradients {
        Gradients { flat: vec![0.0; self.params.len()] }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// Mean of `½‖θ̂−θ‖²` over the samples plus `l1_coeff` times the entrywise
/// L1 norm of the weight matrices. Biases are not penalized.
pub fn loss(predictions: &[[f64; 2]], labels: &[[f64; 2]], model: &MlpModel, l1_coeff: f64) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), actual: predictions.len() });
    }
    if predictions.is_empty() {
        return Ok(l1_coeff * model.l1_norm());
    }
    let mse: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| 0.5 * ((p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2)))
        .sum::<f64>()
        / predictions.len() as f64;
    Ok(mse + l1_coeff * model.l1_norm())
}

/// Reusable buffers for [`backward_into`].
#[derive(Debug, Clone)]
pub struct BackpropScratch {
    z: Vec<f64>,
    a: Vec<f64>,
    dz: Vec<f64>,
}

impl BackpropScratch {
    pub fn new(model: &MlpModel) -> Self {
        let h = model.n_hidden();
        BackpropScratch { z: vec![0.0; h], a: vec![0.0; h], dz: vec![0.0; h] }
    }
}

/// Gradient of [`loss`] over a batch of inputs and labels (label units).
pub fn backward(model: &MlpModel, inputs: &[&[f64]], labels: &[[f64; 2]], l1_coeff: f64) -> Result<Gradients> {
    let mut g = model.gradients();
    let mut scratch = BackpropScratch::new(model);
    backward_into(model, inputs, labels, l1_coeff, &mut g, &mut scratch)?;
    Ok(g)
}

/// Overwrites `grads` with the loss gradient and returns the sum of
/// squared errors `Σ‖θ̂−θ‖²` of the batch.
pub fn backward_into(
    model: &MlpModel,
    inputs: &[&[f64]],
    labels: &[[f64; 2]],
    l1_coeff: f64,
    grads: &mut Gradients,
    scratch: &mut BackpropScratch,
) -> Result<f64> {
    if inputs.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), actual: inputs.len() });
    }
    if inputs.is_empty() {
        return Err(Error::invalid("batch", "empty"));
    }
    let (n_in, h) = (model.n_in(), model.n_hidden());
    let [_, o_b0, o_w1, o_b1] = model.offsets();
    grads.flat.iter_mut().for_each(|v| *v = 0.0);
    let inv_n = 1.0 / inputs.len() as f64;
    let mut sse = 0.0;
    let w1 = model.w1();
    for (x, y) in inputs.iter().zip(labels) {
        if x.len() != n_in {
            return Err(Error::DimensionMismatch { expected: n_in, actual: x.len() });
        }
        model.hidden_pre(x, &mut scratch.z);
        for (a, &z) in scratch.a.iter_mut().zip(&scratch.z) {
            *a = model.selu.eval(z);
        }
        let out = model.output(&scratch.a);
        let e = [out[0] - y[0], out[1] - y[1]];
        sse += e[0] * e[0] + e[1] * e[1];
        let d = [e[0] * inv_n, e[1] * inv_n];

        let (gw1_0, gw1_1) = grads.flat[o_w1..o_b1].split_at_mut(h);
        for j in 0..h {
            gw1_0[j] += d[0] * scratch.a[j];
            gw1_1[j] += d[1] * scratch.a[j];
        }
        grads.flat[o_b1] += d[0];
        grads.flat[o_b1 + 1] += d[1];

        for j in 0..h {
            let da = d[0] * w1[j] + d[1] * w1[h + j];
            scratch.dz[j] = da * model.selu.derivative(scratch.z[j]);
        }
        let (gw0, rest) = grads.flat.split_at_mut(o_b0);
        for ((row, &dz), gb) in gw0.chunks_exact_mut(n_in).zip(&scratch.dz).zip(&mut rest[..h]) {
            if dz == 0.0 {
                continue;
            }
            for (g, &xi) in row.iter_mut().zip(x.iter()) {
                *g += dz * xi;
            }
            *gb += dz;
        }
    }
    if l1_coeff != 0.0 {
        let p = model.params();
        for (i, g) in grads.flat.iter_mut().enumerate() {
            if model.is_weight(i) {
                *g += l1_coeff * sign(p[i]);
            }
        }
    }
    Ok(sse)
}

/// Sign with `sign(0) = 0`.
#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Root mean squared position error in centimeters.
pub fn evaluate_rmse(model: &MlpModel, records: &[FingerprintRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::invalid("test set", "empty"));
    }
    let mut sum = 0.0;
    for r in records {
        let p = model.predict_position(&r.features)?;
        sum += (p[0] - r.label[0]).powi(2) + (p[1] - r.label[1]).powi(2);
    }
    Ok((sum / records.len() as f64).sqrt() * 100.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn selu_values() {
        let s = Selu::default();
        assert_eq!(s.eval(0.0), 0.0);
        assert_eq!(s.eval(1.0), 1.05);
        assert_relative_eq!(s.eval(-10.0), 1.05 * 1.67 * ((-10f64).exp() - 1.0), max_relative = 1e-15);
        assert_relative_eq!(s.eval(-10.0), -1.75342, max_relative = 1e-5);
        assert!(s.eval(-1e9) >= -s.lambda * s.alpha);
        assert!((s.eval(1e-12) - s.eval(-1e-12)).abs() < 1e-11);
    }

    #[test]
    fn zero_model_predicts_origin() {
        let m = MlpModel::zeros(6, 4);
        assert_eq!(m.forward(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), [0.0, 0.0]);
    }

    #[test]
    fn hand_traced_forward() {
        let mut w0 = vec![0.0; 4];
        w0[0] = 1.0;
        let m = MlpModel::from_parts(4, 1, &w0, &[0.0], &[2.0, 0.0], [0.0, 0.0]).unwrap();
        let y = m.forward(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(y[0], 2.1, max_relative = 1e-15);
        assert_eq!(y[1], 0.0);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let m = MlpModel::zeros(3, 2);
        assert!(matches!(m.forward(&[1.0, 2.0]), Err(Error::DimensionMismatch { expected: 3, actual: 2 })));
    }

    #[test]
    fn batch_forward_matches_single() {
        let m = MlpModel::init(5, 7, 3);
        let xs: Vec<Vec<f64>> = (0..4).map(|i| (0..5).map(|j| (i * 5 + j) as f64 * 0.1 - 1.0).collect()).collect();
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let batch = m.forward_batch(&refs).unwrap();
        for (x, b) in xs.iter().zip(batch) {
            assert_eq!(m.forward(x).unwrap(), b);
        }
    }

    #[test]
    fn loss_cases() {
        let z = MlpModel::zeros(2, 2);
        assert_eq!(loss(&[[1.0, 2.0]], &[[1.0, 2.0]], &z, 0.001).unwrap(), 0.0);
        assert_eq!(loss(&[[3.0, 4.0]], &[[0.0, 0.0]], &z, 0.001).unwrap(), 12.5);
        let m = MlpModel::from_parts(1, 1, &[1.0], &[5.0], &[-2.0, 0.0], [7.0, 7.0]).unwrap();
        assert_relative_eq!(loss(&[[0.0, 0.0]], &[[0.0, 0.0]], &m, 0.001).unwrap(), 0.003, max_relative = 1e-15);
    }

    #[test]
    fn zero_error_zero_weights_has_zero_gradient() {
        let m = MlpModel::zeros(3, 4);
        let x = [0.3, -0.2, 1.0];
        let g = backward(&m, &[&x], &[[0.0, 0.0]], 0.001).unwrap();
        assert!(g.flat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let m = MlpModel::init(3, 5, 9);
        let xs = [[0.1, 0.5, -0.3], [1.0, -1.0, 0.2], [0.0, 0.7, 0.7]];
        let ys = [[1.0, 2.0], [-0.5, 0.3], [0.2, -1.1]];
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let g1 = backward(&m, &refs, &ys, 0.001).unwrap();
        let refs2: Vec<&[f64]> = refs.iter().chain(&refs).copied().collect();
        let ys2: Vec<[f64; 2]> = ys.iter().chain(&ys).copied().collect();
        let g2 = backward(&m, &refs2, &ys2, 0.001).unwrap();
        for (a, b) in g1.flat.iter().zip(&g2.flat) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-15);
        }
    }

    #[test]
    fn rmse_cases() {
        let m = MlpModel::zeros(1, 1);
        let rec = |x: f64, y: f64| FingerprintRecord { features: vec![0.0], label: [x, y] };
        assert_eq!(evaluate_rmse(&m, &[rec(0.0, 0.0)]).unwrap(), 0.0);
        assert_relative_eq!(evaluate_rmse(&m, &[rec(0.03, 0.04), rec(-0.03, -0.04)]).unwrap(), 5.0, max_relative = 1e-12);
        assert_relative_eq!(evaluate_rmse(&m, &[rec(0.01, 0.0)]).unwrap(), 1.0, max_relative = 1e-12);
        assert!(evaluate_rmse(&m, &[]).is_err());
    }

    #[test]
    fn rmse_squared_is_twice_mse_term() {
        let m = MlpModel::init(3, 6, 1);
        let recs: Vec<FingerprintRecord> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.1;
                FingerprintRecord { features: vec![t.sin(), t.cos(), t], label: [t - 1.0, 0.5 * t] }
            })
            .collect();
        let preds: Vec<[f64; 2]> = recs.iter().map(|r| m.forward(&r.features).unwrap()).collect();
        let labels: Vec<[f64; 2]> = recs.iter().map(|r| r.label).collect();
        let mse_term = loss(&preds, &labels, &m, 0.0).unwrap();
        let rmse_m = evaluate_rmse(&m, &recs).unwrap() / 100.0;
        assert_relative_eq!(rmse_m * rmse_m, 2.0 * mse_term, max_relative = 1e-12);
    }

    /// Central differences of the full objective, compared on entries whose
    /// magnitude keeps them away from the L1 kink.
    pub(crate) fn fd_check(model: &MlpModel, xs: &[Vec<f64>], ys: &[[f64; 2]], l1: f64) -> f64 {
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let g = backward(model, &refs, ys, l1).unwrap();
        let objective = |m: &MlpModel| {
            let p = m.forward_batch(&refs).unwrap();
            loss(&p, ys, m, l1).unwrap()
        };
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..model.params().len() {
            let w = model.params()[i];
            if model.is_weight(i) && w.abs() <= 1e-6 {
                continue;
            }
            let mut plus = model.clone();
            plus.params_mut()[i] = w + h;
            let mut minus = model.clone();
            minus.params_mut()[i] = w - h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let denom = fd.abs().max(g.flat[i].abs()).max(1e-8);
            worst = worst.max((fd - g.flat[i]).abs() / denom);
        }
        worst
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = MlpModel::init(4, 5, 21);
        let mut m = m;
        m.b0_mut().iter_mut().enumerate().for_each(|(j, b)| *b = 0.1 * j as f64 - 0.2);
        let xs = vec![vec![0.3, -1.2, 0.8, 0.1], vec![-0.5, 0.4, 1.5, -0.9], vec![1.1, 0.2, -0.3, 0.6]];
        let ys = [[0.5, -0.2], [1.0, 0.7], [-0.4, 0.3]];
        let err = fd_check(&m, &xs, &ys, 0.001);
        assert!(err <= 1e-5, "relative error {err}");
    }

    fn frobenius(w: &[f64]) -> f64 {
        w.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn forward_is_lipschitz(seed in 0u64..1000, x in proptest::collection::vec(-3.0f64..3.0, 6),
                                dx in proptest::collection::vec(-1.0f64..1.0, 6)) {
            let m = MlpModel::init(6, 8, seed);
            let y: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let fx = m.forward(&x).unwrap();
            let fy = m.forward(&y).unwrap();
            let out = ((fx[0] - fy[0]).powi(2) + (fx[1] - fy[1]).powi(2)).sqrt();
            let inp = frobenius(&dx);
            // The SELU slope peaks at λα on the negative branch.
            let k = m.selu.lambda * m.selu.alpha.max(1.0) * frobenius(m.w0()) * frobenius(m.w1());
            proptest::prop_assert!(out <= k * inp * (1.0 + 1e-12));
        }
    }
}

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{central_difference_hvp, Activation, HvpMode, ModelSpec, Objective};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::params::{LayerShape, ParamVector, ShapeTable};
use crate::rng;
use crate::scalar::Scalar;

/// Dense feedforward classifier with softmax cross-entropy loss.
///
/// Hidden layers apply the configured activation; the last layer emits logits.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: ModelSpec,
    shape: Arc<ShapeTable>,
    hvp_mode: HvpMode,
}

struct Forward<T> {
    /// `acts[0]` is the input; `acts[l]` feeds layer `l`.
    acts: Vec<Vec<T>>,
    /// Pre-activations of every layer; the last entry holds the logits.
    pres: Vec<Vec<T>>,
}

/// `out[s, o] = b[o] + Σ_i W[o, i] · a[s, i]`; the bias is skipped when
/// `with_bias` is false.
fn affine<T: Scalar>(a: &[T], m: usize, layer: &LayerShape, p: &[T], with_bias: bool) -> Vec<T> {
    let (rows, cols) = (layer.rows, layer.cols);
    let weights = &p[layer.weight_range()];
    let bias = &p[layer.bias_range()];
    let mut out = Vec::with_capacity(m * rows);
    for s in 0..m {
        let x = &a[s * cols..(s + 1) * cols];
        for o in 0..rows {
            let w = &weights[o * cols..(o + 1) * cols];
            let mut acc = if with_bias { bias[o] } else { T::zero() };
            for (&wi, &xi) in w.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(acc);
        }
    }
    out
}

/// `e[s, i] = Σ_o δ[s, o] · W[o, i]`, accumulated into `e`.
fn back_project<T: Scalar>(delta: &[T], m: usize, layer: &LayerShape, p: &[T], e: &mut [T]) {
    let (rows, cols) = (layer.rows, layer.cols);
    let weights = &p[layer.weight_range()];
    for s in 0..m {
        let es = &mut e[s * cols..(s + 1) * cols];
        for o in 0..rows {
            let d = delta[s * rows + o];
            if d.is_zero() {
                continue;
            }
            for (ei, &wi) in es.iter_mut().zip(&weights[o * cols..(o + 1) * cols]) {
                *ei += d * wi;
            }
        }
    }
}

/// Accumulates `Σ_s δ[s, o] · a[s, i]` into the weight block and `Σ_s δ[s, o]`
/// into the bias block of `out`.
fn outer_accumulate<T: Scalar>(
    delta: &[T],
    a: &[T],
    m: usize,
    layer: &LayerShape,
    out: &mut [T],
    with_bias: bool,
) {
    let (rows, cols) = (layer.rows, layer.cols);
    let wr = layer.weight_range();
    let br = layer.bias_range();
    for s in 0..m {
        let x = &a[s * cols..(s + 1) * cols];
        for o in 0..rows {
            let d = delta[s * rows + o];
            if with_bias {
                out[br.start + o] += d;
            }
            if d.is_zero() {
                continue;
            }
            let g = &mut out[wr.start + o * cols..wr.start + (o + 1) * cols];
            for (gi, &xi) in g.iter_mut().zip(x) {
                *gi += d * xi;
            }
        }
    }
}

impl Activation {
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// First and second derivative at pre-activation `z` with output `a`.
    fn derivatives<T: Scalar>(self, z: T, a: T) -> (T, T) {
        match self {
            Activation::Relu => (if z > T::zero() { T::one() } else { T::zero() }, T::zero()),
            Activation::Tanh => {
                let d1 = T::one() - a * a;
                (d1, -(a + a) * d1)
            }
        }
    }
}

impl Mlp {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let shape = Arc::new(spec.shape_table());
        Ok(Self {
            spec,
            shape,
            hvp_mode: HvpMode::Analytic,
        })
    }

    pub fn with_hvp_mode(mut self, mode: HvpMode) -> Self {
        self.hvp_mode = mode;
        self
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Fan-in scaled Gaussian weights (He for relu, LeCun for tanh) and zero
    /// biases, deterministic in the model seed.
    pub fn init_params<T: Scalar>(&self) -> ParamVector<T> {
        let mut params = ParamVector::zeros(Arc::clone(&self.shape));
        let values = params.values_mut();
        for (l, layer) in self.shape.layers().iter().enumerate() {
            let gain = match self.spec.activation {
                Activation::Relu => 2.0,
                Activation::Tanh => 1.0,
            };
            let scale = (gain / layer.cols as f64).sqrt();
            let mut rng = rng::stream(self.spec.seed, l as u64, "init");
            for v in &mut values[layer.weight_range()] {
                *v = T::lit(scale * rng.sample::<f64, _>(StandardNormal));
            }
        }
        params
    }

    fn check<T: Scalar>(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Result<()> {
        if **params.shape() != *self.shape {
            return Err(Error::shape(
                format!("parameters for layers {:?}", self.spec.layer_sizes),
                format!("{} parameters", params.len()),
            ));
        }
        if batch.dim() != self.spec.input_dim() {
            return Err(Error::shape(
                format!("{} input features", self.spec.input_dim()),
                format!("{} input features", batch.dim()),
            ));
        }
        let classes = self.spec.classes();
        if let Some(&y) = batch.labels().iter().find(|&&y| y >= classes) {
            return Err(Error::shape(format!("labels < {classes}"), format!("label {y}")));
        }
        Ok(())
    }

    fn forward<T: Scalar>(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Forward<T> {
        let layers = self.shape.layers();
        let m = batch.len();
        let p = params.values();
        let mut acts = vec![batch.inputs().to_vec()];
        let mut pres = Vec::with_capacity(layers.len());
        for (l, layer) in layers.iter().enumerate() {
            let z = affine(&acts[l], m, layer, p, true);
            if l + 1 < layers.len() {
                acts.push(z.iter().map(|&v| self.spec.activation.apply(v)).collect());
            }
            pres.push(z);
        }
        Forward { acts, pres }
    }

    pub fn logits<T: Scalar>(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Result<Vec<T>> {
        self.check(params, batch)?;
        Ok(self.forward(params, batch).pres.pop().expect("at least one layer"))
    }

    /// Argmax class per row; ties resolve to the lowest class index.
    pub fn predict<T: Scalar>(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Result<Vec<usize>> {
        let logits = self.logits(params, batch)?;
        let c = self.spec.classes();
        Ok(logits
            .chunks(c)
            .map(|row| {
                let mut best = 0;
                for (k, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }

    /// Softmax probabilities and the mean cross-entropy.
    fn softmax_loss<T: Scalar>(&self, logits: &[T], labels: &[usize]) -> (Vec<T>, T) {
        let c = self.spec.classes();
        let mut probs = Vec::with_capacity(logits.len());
        let mut total = T::zero();
        for (row, &y) in logits.chunks(c).zip(labels) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
            let sum: T = exps.iter().copied().sum();
            total += sum.ln() + max - row[y];
            probs.extend(exps.into_iter().map(|e| e / sum));
        }
        (probs, total / T::from_usize_lossy(labels.len()))
    }

    /// Gradient, plus the Hessian-vector product along `dir` when given
    /// (Pearlmutter's R-operator pushed through the forward and backward pass).
    fn backprop<T: Scalar>(
        &self,
        params: &ParamVector<T>,
        batch: &Batch<T>,
        dir: Option<&ParamVector<T>>,
    ) -> (ParamVector<T>, Option<ParamVector<T>>) {
        let layers = self.shape.layers();
        let n_layers = layers.len();
        let m = batch.len();
        let p = params.values();
        let act = self.spec.activation;
        let fwd = self.forward(params, batch);
        let logits = &fwd.pres[n_layers - 1];
        let (probs, _) = self.softmax_loss(logits, batch.labels());

        // R-forward: directional derivatives of every activation.
        let r_fwd = dir.map(|v| {
            let v = v.values();
            let mut r_acts: Vec<Vec<T>> = vec![vec![T::zero(); m * layers[0].cols]];
            let mut r_pres = Vec::with_capacity(n_layers);
            for (l, layer) in layers.iter().enumerate() {
                let mut rz = affine(&fwd.acts[l], m, layer, v, true);
                if l > 0 {
                    let lin = affine(&r_acts[l], m, layer, p, false);
                    for (a, b) in rz.iter_mut().zip(lin) {
                        *a += b;
                    }
                }
                if l + 1 < n_layers {
                    let ra = rz
                        .iter()
                        .zip(&fwd.pres[l])
                        .zip(&fwd.acts[l + 1])
                        .map(|((&r, &z), &a)| act.derivatives(z, a).0 * r)
                        .collect();
                    r_acts.push(ra);
                }
                r_pres.push(rz);
            }
            (r_acts, r_pres)
        });

        let c = self.spec.classes();
        let inv_m = T::one() / T::from_usize_lossy(m);
        let mut delta: Vec<T> = probs.clone();
        for (s, &y) in batch.labels().iter().enumerate() {
            delta[s * c + y] -= T::one();
        }
        for d in &mut delta {
            *d *= inv_m;
        }
        let mut r_delta: Option<Vec<T>> = r_fwd.as_ref().map(|(_, r_pres)| {
            let rz = &r_pres[n_layers - 1];
            let mut out = Vec::with_capacity(m * c);
            for s in 0..m {
                let ps = &probs[s * c..(s + 1) * c];
                let rs = &rz[s * c..(s + 1) * c];
                let mean: T = ps.iter().zip(rs).map(|(&a, &b)| a * b).sum();
                out.extend(ps.iter().zip(rs).map(|(&pk, &rk)| pk * (rk - mean) * inv_m));
            }
            out
        });

        let mut grad = params.zeros_like();
        let mut hv = dir.map(|_| params.zeros_like());
        for l in (0..n_layers).rev() {
            let layer = &layers[l];
            outer_accumulate(&delta, &fwd.acts[l], m, layer, grad.values_mut(), true);
            if let (Some(hv), Some(rd), Some((r_acts, _))) = (hv.as_mut(), r_delta.as_ref(), r_fwd.as_ref()) {
                outer_accumulate(rd, &fwd.acts[l], m, layer, hv.values_mut(), true);
                if l > 0 {
                    outer_accumulate(&delta, &r_acts[l], m, layer, hv.values_mut(), false);
                }
            }
            if l == 0 {
                break;
            }
            let width = layer.cols;
            let mut e = vec![T::zero(); m * width];
            back_project(&delta, m, layer, p, &mut e);
            let pre = &fwd.pres[l - 1];
            let post = &fwd.acts[l];
            if let (Some(rd), Some(v), Some((_, r_pres))) = (r_delta.as_ref(), dir, r_fwd.as_ref()) {
                let mut re = vec![T::zero(); m * width];
                back_project(rd, m, layer, p, &mut re);
                back_project(&delta, m, layer, v.values(), &mut re);
                let rz = &r_pres[l - 1];
                let next: Vec<T> = (0..m * width)
                    .map(|q| {
                        let (d1, d2) = act.derivatives(pre[q], post[q]);
                        re[q] * d1 + e[q] * d2 * rz[q]
                    })
                    .collect();
                r_delta = Some(next);
            }
            delta = (0..m * width)
                .map(|q| e[q] * act.derivatives(pre[q], post[q]).0)
                .collect();
        }
        (grad, hv)
    }
}

impl<T: Scalar> Objective<T> for Mlp {
    fn shape(&self) -> Arc<ShapeTable> {
        Arc::clone(&self.shape)
    }

    fn init_params(&self) -> ParamVector<T> {
        Mlp::init_params(self)
    }

    fn loss(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Result<T> {
        self.check(params, batch)?;
        let fwd = self.forward(params, batch);
        Ok(self.softmax_loss(fwd.pres.last().expect("layers"), batch.labels()).1)
    }

    fn gradient(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Result<ParamVector<T>> {
        self.check(params, batch)?;
        Ok(self.backprop(params, batch, None).0)
    }

    fn hvp(
        &self,
        params: &ParamVector<T>,
        batch: &Batch<T>,
        z: &ParamVector<T>,
    ) -> Result<ParamVector<T>> {
        self.check(params, batch)?;
        params.check_same_shape(z)?;
        if z.is_all_zero() {
            return Ok(z.zeros_like());
        }
        match self.hvp_mode {
            HvpMode::Analytic => Ok(self.backprop(params, batch, Some(z)).1.expect("direction given")),
            HvpMode::CentralDifference => central_difference_hvp(self, params, batch, z),
        }
    }

    fn hvp_mode(&self) -> HvpMode {
        self.hvp_mode
    }

    fn accuracy(&self, params: &ParamVector<T>, batch: &Batch<T>) -> Result<Option<T>> {
        let predicted = self.predict(params, batch)?;
        let correct = predicted
            .iter()
            .zip(batch.labels())
            .filter(|(a, b)| a == b)
            .count();
        Ok(Some(T::from_usize_lossy(correct) / T::from_usize_lossy(batch.len())))
    }
}

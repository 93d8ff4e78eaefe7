//! Small fully connected regressor with SiLU hidden layers, trained with
//! Adam on z-scored inputs and targets.
//!
//! Batches are stored one sample per column. The training loss is the mean
//! squared error over all `N × outputs` entries in normalized target
//! units.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::testbed::{ExperimentCondition, GaitParams};
use crate::{Error, Result};

pub const FORMAT_HEADER: &str = "morphwing-mlp";
pub const FORMAT_VERSION: u32 = 1;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_derivative(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Mean of the squared differences over every entry.
pub fn mse_loss(predictions: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64> {
    if predictions.shape() != targets.shape() {
        return Err(Error::Shape { expected: targets.len(), actual: predictions.len() });
    }
    if predictions.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    Ok((predictions - targets).norm_squared() / predictions.len() as f64)
}

/// Per-row z-score statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

impl Normalization {
    pub fn identity(n: usize) -> Self {
        Normalization { mean: DVector::zeros(n), std: DVector::from_element(n, 1.0) }
    }

    /// Statistics of the columns of `data`. Constant rows get unit scale
    /// so they normalize to zero instead of dividing by zero.
    pub fn fit(data: &DMatrix<f64>) -> Result<Self> {
        let n = data.ncols();
        if n == 0 {
            return Err(Error::InsufficientData("cannot normalize an empty set".into()));
        }
        let mean = data.column_mean();
        let mut std = DVector::zeros(data.nrows());
        for i in 0..data.nrows() {
            let var = data.row(i).iter().map(|x| (x - mean[i]).powi(2)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            std[i] = if s > 1e-12 * mean[i].abs().max(1.0) { s } else { 1.0 };
        }
        Ok(Normalization { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for mut col in out.column_iter_mut() {
            for i in 0..col.len() {
                col[i] = (col[i] - self.mean[i]) / self.std[i];
            }
        }
        out
    }

    pub fn denormalize(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for mut col in out.column_iter_mut() {
            for i in 0..col.len() {
                col[i] = col[i] * self.std[i] + self.mean[i];
            }
        }
        out
    }
}

/// Parameter-shaped collection: weights (out × in) and biases per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpModel {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub input_norm: Normalization,
    pub target_norm: Normalization,
}

impl MlpModel {
    /// Uniform fan-in initialization, `U(−√(3/fan_in), √(3/fan_in))`, with
    /// zero biases and identity normalization.
    pub fn new<R: Rng>(widths: &[usize], rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer widths {widths:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let bound = (3.0 / w[0] as f64).sqrt();
            weights.push(DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)));
            biases.push(DVector::zeros(w[1]));
        }
        Ok(MlpModel {
            weights,
            biases,
            input_norm: Normalization::identity(widths[0]),
            target_norm: Normalization::identity(widths[widths.len() - 1]),
        })
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.weights[0].ncols()];
        w.extend(self.weights.iter().map(|m| m.nrows()));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights[self.weights.len() - 1].nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn check_shapes(&self) -> Result<()> {
        let w = self.widths();
        for (l, (wm, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            if wm.ncols() != w[l] || b.len() != wm.nrows() {
                return Err(Error::Data(format!("layer {l} shapes are inconsistent")));
            }
        }
        if self.input_norm.dim() != w[0] || self.target_norm.dim() != w[w.len() - 1] {
            return Err(Error::Data("normalization size does not match the layer widths".into()));
        }
        if self.input_norm.std.iter().chain(self.target_norm.std.iter()).any(|s| !(*s > 0.0)) {
            return Err(Error::Data("normalization scales must be positive".into()));
        }
        Ok(())
    }

    /// Network on already-normalized inputs; returns the pre-activations
    /// and activations of every layer.
    fn forward_normalized(&self, x: &DMatrix<f64>) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        let last = self.weights.len() - 1;
        let mut zs = Vec::with_capacity(self.weights.len());
        let mut acts = vec![x.clone()];
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = w * &acts[l];
            for mut col in z.column_iter_mut() {
                col += b;
            }
            let a = if l == last { z.clone() } else { z.map(silu) };
            zs.push(z);
            acts.push(a);
        }
        (zs, acts)
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.nrows() != self.input_dim() {
            return Err(Error::Shape { expected: self.input_dim(), actual: x.nrows() });
        }
        Ok(())
    }

    /// Predictions in target units for a batch of raw feature columns.
    pub fn predict_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        let (_, acts) = self.forward_normalized(&self.input_norm.normalize(x));
        Ok(self.target_norm.denormalize(&acts[acts.len() - 1]))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let col = DMatrix::from_column_slice(x.len(), 1, x);
        Ok(self.predict_batch(&col)?.as_slice().to_vec())
    }

    /// Training loss on a raw batch (normalized target units).
    pub fn loss(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
        self.check_input(x)?;
        let (_, acts) = self.forward_normalized(&self.input_norm.normalize(x));
        mse_loss(&acts[acts.len() - 1], &self.target_norm.normalize(y))
    }

    /// Loss and its gradient with respect to every weight and bias.
    pub fn backward(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<(f64, Gradients)> {
        self.check_input(x)?;
        let yn = self.target_norm.normalize(y);
        let (zs, acts) = self.forward_normalized(&self.input_norm.normalize(x));
        let out = &acts[acts.len() - 1];
        let loss = mse_loss(out, &yn)?;
        let scale = 2.0 / out.len() as f64;
        let mut delta = (out - &yn) * scale;
        let n = self.weights.len();
        let mut weights = vec![DMatrix::zeros(0, 0); n];
        let mut biases = vec![DVector::zeros(0); n];
        for l in (0..n).rev() {
            if l != n - 1 {
                delta.zip_apply(&zs[l], |d, z| *d *= silu_derivative(z));
            }
            weights[l] = &delta * acts[l].transpose();
            biases[l] = delta.column_sum();
            if l > 0 {
                delta = self.weights[l].transpose() * &delta;
            }
        }
        Ok((loss, Gradients { weights, biases }))
    }

    /// Plain gradient step, used by the descent check.
    pub fn apply_gradient_step(&mut self, grads: &Gradients, step: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            *w -= g * step;
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            *b -= g * step;
        }
    }

    /// Versioned plain-text form; weights are written row-major.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        writeln!(s, "{FORMAT_HEADER} {FORMAT_VERSION}").unwrap();
        let widths: Vec<String> = self.widths().iter().map(|w| w.to_string()).collect();
        writeln!(s, "widths {}", widths.join(" ")).unwrap();
        writeln!(s, "activation silu").unwrap();
        writeln!(s, "input_mean {}", join(&mut self.input_norm.mean.iter().copied())).unwrap();
        writeln!(s, "input_std {}", join(&mut self.input_norm.std.iter().copied())).unwrap();
        writeln!(s, "target_mean {}", join(&mut self.target_norm.mean.iter().copied())).unwrap();
        writeln!(s, "target_std {}", join(&mut self.target_norm.std.iter().copied())).unwrap();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            writeln!(s, "layer {l} {} {}", w.nrows(), w.ncols()).unwrap();
            for row in w.row_iter() {
                writeln!(s, "{}", join(&mut row.iter().copied())).unwrap();
            }
            writeln!(s, "bias {}", join(&mut b.iter().copied())).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Data(format!("model file: {m}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(&format!("missing {what}")));
        let floats = |s: &str| -> Result<Vec<f64>> {
            s.split_whitespace().map(|t| t.parse::<f64>().map_err(|_| bad(&format!("bad number `{t}`")))).collect()
        };
        let keyed = |line: &str, key: &str| -> Result<String> {
            line.strip_prefix(key)
                .filter(|rest| rest.is_empty() || rest.starts_with(' '))
                .map(|rest| rest.trim().to_string())
                .ok_or_else(|| bad(&format!("expected `{key}`")))
        };

        let header = keyed(next("header")?, FORMAT_HEADER)?;
        if header != FORMAT_VERSION.to_string() {
            return Err(bad(&format!("unsupported version `{header}`")));
        }
        let widths: Vec<usize> = keyed(next("widths")?, "widths")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad width")))
            .collect::<Result<_>>()?;
        if widths.len() < 2 {
            return Err(bad("needs at least two widths"));
        }
        if keyed(next("activation")?, "activation")? != "silu" {
            return Err(bad("only the silu activation is supported"));
        }
        let input_mean = floats(&keyed(next("input_mean")?, "input_mean")?)?;
        let input_std = floats(&keyed(next("input_std")?, "input_std")?)?;
        let target_mean = floats(&keyed(next("target_mean")?, "target_mean")?)?;
        let target_std = floats(&keyed(next("target_std")?, "target_std")?)?;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, w) in widths.windows(2).enumerate() {
            let dims = keyed(next("layer")?, "layer")?;
            if dims != format!("{l} {} {}", w[1], w[0]) {
                return Err(bad(&format!("layer {l} header `{dims}` does not match the widths")));
            }
            let mut values = Vec::with_capacity(w[0] * w[1]);
            for _ in 0..w[1] {
                let row = floats(next("weight row")?)?;
                if row.len() != w[0] {
                    return Err(bad(&format!("layer {l} row has {} entries, expected {}", row.len(), w[0])));
                }
                values.extend(row);
            }
            weights.push(DMatrix::from_row_slice(w[1], w[0], &values));
            let b = floats(&keyed(next("bias")?, "bias")?)?;
            if b.len() != w[1] {
                return Err(bad(&format!("layer {l} bias has {} entries", b.len())));
            }
            biases.push(DVector::from_vec(b));
        }
        if next("end").is_ok() {
            return Err(bad("trailing content"));
        }
        let model = MlpModel {
            weights,
            biases,
            input_norm: Normalization { mean: DVector::from_vec(input_mean), std: DVector::from_vec(input_std) },
            target_norm: Normalization { mean: DVector::from_vec(target_mean), std: DVector::from_vec(target_std) },
        };
        model.check_shapes()?;
        Ok(model)
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Gradients,
    v: Gradients,
    t: i32,
}

impl Adam {
    pub fn new(model: &MlpModel, config: &TrainConfig) -> Self {
        let zeros = Gradients {
            weights: model.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: model.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        };
        Adam {
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            }
        };
        for l in 0..model.weights.len() {
            update(
                model.weights[l].as_mut_slice(),
                grads.weights[l].as_slice(),
                self.m.weights[l].as_mut_slice(),
                self.v.weights[l].as_mut_slice(),
            );
            update(
                model.biases[l].as_mut_slice(),
                grads.biases[l].as_slice(),
                self.m.biases[l].as_mut_slice(),
                self.v.biases[l].as_mut_slice(),
            );
        }
    }
}

/// Which quantities feed the network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// Shaft angle, shaft rate, flap frequency, pitch, wind.
    #[default]
    Shaft,
    /// The eight joint angles, flap frequency, pitch, wind.
    Joints,
}

impl FeatureSet {
    pub fn dim(self) -> usize {
        match self {
            FeatureSet::Shaft => 5,
            FeatureSet::Joints => 11,
        }
    }

    pub fn extract(self, gait: &GaitParams, condition: &ExperimentCondition, t: f64) -> Vec<f64> {
        let angle = gait.shaft_angle(t);
        let rate = gait.shaft_rate();
        let mut f = match self {
            FeatureSet::Shaft => vec![angle, rate],
            FeatureSet::Joints => gait.joints_from_shaft(angle, rate).0.iter().copied().collect(),
        };
        f.extend([condition.frequency, condition.pitch, condition.wind]);
        f
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub features: FeatureSet,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Fraction of conditions used for training.
    pub train_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::compact()
    }
}

impl TrainConfig {
    /// Two hidden layers of 64.
    pub fn compact() -> Self {
        TrainConfig {
            hidden: vec![64, 64],
            features: FeatureSet::Shaft,
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            train_fraction: 0.8,
        }
    }

    /// Three hidden layers of 128.
    pub fn wide() -> Self {
        TrainConfig { hidden: vec![128, 128, 128], ..Self::compact() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "compact" => Ok(Self::compact()),
            "wide" => Ok(Self::wide()),
            other => Err(Error::Config(format!("unknown MLP preset `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie strictly between 0 and 1".into()));
        }
        Ok(())
    }

    pub fn widths(&self, inputs: usize, outputs: usize) -> Vec<usize> {
        let mut w = vec![inputs];
        w.extend(&self.hidden);
        w.push(outputs);
        w
    }
}

/// Per-epoch losses in normalized target units.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

/// Feature and target columns of one experimental condition.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSamples {
    pub condition_id: usize,
    pub features: DMatrix<f64>,
    pub targets: DMatrix<f64>,
}

fn concat(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        out.columns_mut(c, p.ncols()).copy_from(p);
        c += p.ncols();
    }
    out
}

/// Gradient training on raw columns. Normalization statistics come from
/// the training set; `validation` is only scored.
pub fn fit(
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    validation: Option<(&DMatrix<f64>, &DMatrix<f64>)>,
    config: &TrainConfig,
    seed: u64,
) -> Result<(MlpModel, LossCurve)> {
    config.validate()?;
    if x.ncols() != y.ncols() {
        return Err(Error::Shape { expected: x.ncols(), actual: y.ncols() });
    }
    if x.ncols() == 0 {
        return Err(Error::InsufficientData("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = MlpModel::new(&config.widths(x.nrows(), y.nrows()), &mut rng)?;
    // Start from the target mean so unseen inputs are not pulled toward
    // arbitrary offsets, and a constant target is fitted exactly.
    model.weights.last_mut().expect("at least one layer").fill(0.0);
    model.input_norm = Normalization::fit(x)?;
    model.target_norm = Normalization::fit(y)?;
    let mut adam = Adam::new(&model, config);

    let mut order: Vec<usize> = (0..x.ncols()).collect();
    let mut curve = LossCurve::default();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let xb = x.select_columns(batch);
            let yb = y.select_columns(batch);
            let (_, grads) = model.backward(&xb, &yb)?;
            adam.step(&mut model, &grads);
        }
        let train_loss = model.loss(x, y)?;
        if !train_loss.is_finite() {
            return Err(Error::NumericFault { sample: curve.train.len(), reason: "training loss diverged".into() });
        }
        curve.train.push(train_loss);
        if let Some((xv, yv)) = validation {
            curve.validation.push(model.loss(xv, yv)?);
        }
    }
    Ok((model, curve))
}

/// Condition ids held out for testing: a seeded shuffle, with the last
/// `round((1 − train_fraction)·n)` (at least one) conditions withheld.
pub fn split_conditions(ids: &[usize], train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut unique = ids.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 conditions to split, got {}", unique.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    unique.shuffle(&mut rng);
    let n_test = (((1.0 - train_fraction) * unique.len() as f64).round() as usize).clamp(1, unique.len() - 1);
    let test = unique.split_off(unique.len() - n_test);
    let mut train = unique;
    train.sort_unstable();
    let mut test = test;
    test.sort_unstable();
    Ok((train, test))
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub model: MlpModel,
    pub curve: LossCurve,
    pub train_conditions: Vec<usize>,
    pub test_conditions: Vec<usize>,
}

/// Splits by condition, then fits on the training conditions and scores
/// the held-out ones each epoch.
pub fn train(data: &[ConditionSamples], config: &TrainConfig, seed: u64) -> Result<TrainedModel> {
    config.validate()?;
    let ids: Vec<usize> = data.iter().map(|d| d.condition_id).collect();
    let (train_ids, test_ids) = split_conditions(&ids, config.train_fraction, seed)?;
    let pick = |set: &[usize]| -> (DMatrix<f64>, DMatrix<f64>) {
        let chosen: Vec<&ConditionSamples> = data.iter().filter(|d| set.contains(&d.condition_id)).collect();
        (
            concat(&chosen.iter().map(|d| &d.features).collect::<Vec<_>>()),
            concat(&chosen.iter().map(|d| &d.targets).collect::<Vec<_>>()),
        )
    };
    let (xt, yt) = pick(&train_ids);
    let (xv, yv) = pick(&test_ids);
    let (model, curve) = fit(&xt, &yt, Some((&xv, &yv)), config, seed)?;
    Ok(TrainedModel { model, curve, train_conditions: train_ids, test_conditions: test_ids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn silu_values() {
        assert_eq!(silu(0.0), 0.0);
        assert!((silu(20.0) - 20.0).abs() < 1e-7);
        assert!(silu(-40.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: f64 = rng.random_range(-8.0..8.0);
            let h = 1e-5;
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            let d = silu_derivative(x);
            assert!((fd - d).abs() <= 1e-6 * d.abs().max(1e-3), "{x}");
        }
    }

    #[test]
    fn silu_asymptote() {
        // x − x·σ(x) = x·σ(−x) ≈ 20·e^{−20}.
        assert!((silu(20.0) - 20.0).abs() < 1e-7);
        assert!((20.0 - silu(20.0) - 20.0 * sigmoid(-20.0)).abs() < 1e-12);
    }

    #[test]
    fn mse_conventions() {
        let a = DMatrix::from_column_slice(3, 1, &[0.0, 0.0, 0.0]);
        let b = DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]);
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        // Mean over N·3 entries.
        assert_eq!(mse_loss(&a, &b).unwrap(), 1.0 / 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_matrix(&mut rng, 3, 40, 2.0);
        let t = random_matrix(&mut rng, 3, 40, 2.0);
        let mut sum = 0.0;
        for j in 0..40 {
            for i in 0..3 {
                sum += (p[(i, j)] - t[(i, j)]).powi(2);
            }
        }
        assert!((mse_loss(&p, &t).unwrap() - sum / 120.0).abs() < 1e-12);
        assert!(mse_loss(&p, &t.columns(0, 3).into_owned()).is_err());
    }

    #[test]
    fn zero_network_returns_target_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = MlpModel::new(&[5, 8, 3], &mut rng).unwrap();
        for w in &mut m.weights {
            w.fill(0.0);
        }
        m.target_norm.mean = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        m.target_norm.std = DVector::from_vec(vec![2.0, 3.0, 4.0]);
        let y = m.forward(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(y, vec![0.1, -0.2, 0.3]);
        assert!(matches!(m.forward(&[1.0; 4]), Err(Error::Shape { expected: 5, actual: 4 })));
    }

    #[test]
    fn single_hidden_unit_by_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = MlpModel::new(&[2, 1, 1], &mut rng).unwrap();
        m.weights[0] = DMatrix::from_row_slice(1, 2, &[0.5, -1.5]);
        m.biases[0] = DVector::from_vec(vec![0.25]);
        m.weights[1] = DMatrix::from_row_slice(1, 1, &[2.0]);
        m.biases[1] = DVector::from_vec(vec![-0.125]);
        m.input_norm =
            Normalization { mean: DVector::from_vec(vec![1.0, 0.0]), std: DVector::from_vec(vec![2.0, 0.5]) };
        m.target_norm = Normalization { mean: DVector::from_vec(vec![3.0]), std: DVector::from_vec(vec![10.0]) };
        // x = (2, 0.2): normalized (0.5, 0.4); z = 0.25 − 0.6 + 0.25 = −0.1.
        let z: f64 = -0.1;
        let h = z / (1.0 + (-z).exp());
        let expected = (2.0 * h - 0.125) * 10.0 + 3.0;
        let y = m.forward(&[2.0, 0.2]).unwrap();
        assert!((y[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn permuting_hidden_units_is_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = MlpModel::new(&[5, 6, 3], &mut rng).unwrap();
        let mut p = m.clone();
        p.weights[0].swap_rows(1, 4);
        p.biases[0].swap_rows(1, 4);
        p.weights[1].swap_columns(1, 4);
        let x = random_matrix(&mut rng, 5, 10, 1.0);
        let a = m.predict_batch(&x).unwrap();
        let b = p.predict_batch(&x).unwrap();
        assert!((a - b).amax() < 1e-14);
    }

    fn tiny_problem() -> (MlpModel, DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut m = MlpModel::new(&[5, 4, 3], &mut rng).unwrap();
        for b in &mut m.biases {
            for v in b.iter_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let x = random_matrix(&mut rng, 5, 32, 2.0);
        let y = random_matrix(&mut rng, 3, 32, 1.0);
        m.input_norm = Normalization::fit(&x).unwrap();
        m.target_norm = Normalization::fit(&y).unwrap();
        (m, x, y)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (m, x, y) = tiny_problem();
        let (_, g) = m.backward(&x, &y).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let mut check = |analytic: f64, perturb: &dyn Fn(f64) -> MlpModel| {
            let fd = (perturb(h).loss(&x, &y).unwrap() - perturb(-h).loss(&x, &y).unwrap()) / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        };
        for l in 0..m.weights.len() {
            for k in 0..m.weights[l].len() {
                check(g.weights[l].as_slice()[k], &|d| {
                    let mut p = m.clone();
                    p.weights[l].as_mut_slice()[k] += d;
                    p
                });
            }
            for k in 0..m.biases[l].len() {
                check(g.biases[l][k], &|d| {
                    let mut p = m.clone();
                    p.biases[l][k] += d;
                    p
                });
            }
        }
        assert!(worst < 1e-6, "max relative gradient error {worst}");
    }

    #[test]
    fn zero_error_batch_has_zero_gradient() {
        let (m, x, _) = tiny_problem();
        let y = m.predict_batch(&x).unwrap();
        let (loss, g) = m.backward(&x, &y).unwrap();
        assert!(loss < 1e-28);
        assert!(g.weights.iter().all(|w| w.amax() < 1e-14));
        assert!(g.biases.iter().all(|b| b.amax() < 1e-14));
    }

    #[test]
    fn small_steps_descend() {
        let (mut m, x, y) = tiny_problem();
        let mut prev = m.loss(&x, &y).unwrap();
        for _ in 0..10 {
            let (_, g) = m.backward(&x, &y).unwrap();
            m.apply_gradient_step(&g, 1e-2);
            let now = m.loss(&x, &y).unwrap();
            assert!(now < prev);
            prev = now;
        }
    }

    #[test]
    fn normalization_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = random_matrix(&mut rng, 3, 50, 7.0).add_scalar(3.0);
        let n = Normalization::fit(&y).unwrap();
        let z = n.normalize(&y);
        assert!((n.denormalize(&z) - &y).amax() < 1e-12);
        for row in z.row_iter() {
            let mean = row.mean();
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
            assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        }
        // Constant rows must not divide by zero.
        let c = DMatrix::from_element(2, 4, 5.0);
        assert_eq!(Normalization::fit(&c).unwrap().normalize(&c), DMatrix::zeros(2, 4));
    }

    #[test]
    fn fits_a_linear_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_matrix(&mut rng, 5, 1024, 1.0);
        let a = random_matrix(&mut rng, 3, 5, 1.0);
        let y = &a * &x;
        let config = TrainConfig { hidden: vec![16, 16], epochs: 2000, ..TrainConfig::compact() };
        let (model, curve) = fit(&x, &y, None, &config, 4).unwrap();
        // Normalized loss is the fraction of target variance left.
        let last = *curve.train.last().unwrap();
        assert!(last < 1e-4, "{last}");
        assert_eq!(model.widths(), vec![5, 16, 16, 3]);
    }

    #[test]
    fn memorizes_one_condition_to_the_noise_floor() {
        let gait = GaitParams::default();
        let c = ExperimentCondition { frequency: 3.0, wind: 1.0, pitch: -10.0 };
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 512;
        let mut x = DMatrix::zeros(5, n);
        let mut y = DMatrix::zeros(3, n);
        for k in 0..n {
            let t = k as f64 / n as f64 * gait.period() * 3.0;
            x.set_column(k, &DVector::from_vec(FeatureSet::Shaft.extract(&gait, &c, t)));
            let phi = gait.shaft_angle(t);
            let clean = [0.02 * phi.sin(), 0.01 * (2.0 * phi).cos(), -0.03 + 0.015 * phi.cos()];
            for i in 0..3 {
                y[(i, k)] = clean[i] + noise.sample(&mut rng);
            }
        }
        let config = TrainConfig { epochs: 1500, ..TrainConfig::compact() };
        let (model, curve) = fit(&x, &y, None, &config, 6).unwrap();
        let pred = model.predict_batch(&x).unwrap();
        let rmse = mse_loss(&pred, &y).unwrap().sqrt();
        assert!(rmse < 2e-3, "train RMSE {rmse}");
        assert!(curve.train.last().unwrap() < &curve.train[0]);
    }

    #[test]
    fn split_is_by_condition() {
        let ids: Vec<usize> = (0..40).collect();
        let (train, test) = split_conditions(&ids, 0.8, 3).unwrap();
        assert_eq!((train.len(), test.len()), (32, 8));
        assert!(train.iter().all(|i| !test.contains(i)));
        // Row order does not matter: repeated and shuffled ids give the
        // same split.
        let mut rows: Vec<usize> = ids.iter().flat_map(|&i| [i, i, i]).collect();
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
        assert_eq!(split_conditions(&rows, 0.8, 3).unwrap(), (train, test));
        assert!(matches!(split_conditions(&[4, 4, 4], 0.8, 0), Err(Error::InsufficientData(_))));
    }

    fn toy_conditions() -> Vec<ConditionSamples> {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        (0..5)
            .map(|id| {
                let x = random_matrix(&mut rng, 5, 20, 1.0);
                let y = DMatrix::from_fn(3, 20, |i, j| x[(i, j)] * 0.5 + id as f64 * 0.1);
                ConditionSamples { condition_id: id, features: x, targets: y }
            })
            .collect()
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_conditions();
        let config = TrainConfig { epochs: 20, hidden: vec![8, 8], ..TrainConfig::compact() };
        let a = train(&data, &config, 7).unwrap();
        let b = train(&data, &config, 7).unwrap();
        assert_eq!(a.curve, b.curve);
        assert_eq!(a.model, b.model);
        assert_eq!(a.test_conditions.len(), 1);
        assert_eq!(a.curve.validation.len(), 20);
        let c = train(&data, &config, 8).unwrap();
        assert_ne!(a.curve.train, c.curve.train);
        assert!(train(&data[..1], &config, 7).is_err());
    }

    #[test]
    fn text_format_round_trip() {
        let data = toy_conditions();
        let config = TrainConfig { epochs: 3, hidden: vec![4, 3], ..TrainConfig::compact() };
        let m = train(&data, &config, 1).unwrap().model;
        let text = m.to_text();
        assert!(text.starts_with("morphwing-mlp 1\nwidths 5 4 3 3\n"));
        let back = MlpModel::from_text(&text).unwrap();
        assert_eq!(back, m);
        assert!(MlpModel::from_text(&text.replace("morphwing-mlp 1", "morphwing-mlp 2")).is_err());
        assert!(MlpModel::from_text(&text.replace("widths 5 4 3 3", "widths 5 4 4 3")).is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(TrainConfig::preset("compact").unwrap().widths(5, 3), vec![5, 64, 64, 3]);
        assert_eq!(TrainConfig::preset("wide").unwrap().widths(5, 3), vec![5, 128, 128, 128, 3]);
        assert!(TrainConfig::preset("huge").is_err());
        let gait = GaitParams::default();
        let c = ExperimentCondition { frequency: 3.0, wind: 1.0, pitch: -5.0 };
        assert_eq!(FeatureSet::Shaft.extract(&gait, &c, 0.1).len(), 5);
        assert_eq!(FeatureSet::Joints.extract(&gait, &c, 0.1).len(), 11);
    }
}

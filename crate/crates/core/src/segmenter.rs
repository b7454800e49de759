//! Per-pixel skin classifier: a fully connected ReLU network over measured
//! radiance plus the four fitted parameters.
//!
//! [`MlpModel`] is the persisted, inference-only form (f32 weights).
//! [`Network`] is the f64 training form with analytic backpropagation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cube::MultispectralCube;
use crate::error::{Error, Result};
use crate::forward::SkinParams;
use crate::maps::{FitStatus, ParameterMaps};

pub const WEIGHT_MAGIC: &[u8; 5] = b"MSMLP";
pub const WEIGHT_VERSION: u16 = 1;
pub const HIDDEN_LAYERS: [usize; 4] = [64, 64, 128, 128];

/// `[l_obs…, f_mel, f_blood, i_d, i_s]`.
pub fn feature_vector(l_obs: &[f64], p: &SkinParams) -> Vec<f64> {
    let mut x = Vec::with_capacity(l_obs.len() + 4);
    x.extend_from_slice(l_obs);
    x.extend_from_slice(&[p.bio.f_mel, p.bio.f_blood, p.i_d, p.i_s]);
    x
}

/// Layer sizes for `d` spectral channels.
pub fn default_layer_sizes(d: usize) -> Vec<usize> {
    let mut s = vec![d + 4];
    s.extend_from_slice(&HIDDEN_LAYERS);
    s.push(2);
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<f32>,
    pub biases: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<DenseLayer>,
    pub mean: Vec<f32>,
    pub scale: Vec<f32>,
}

fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let a = (z[0] - m).exp();
    let b = (z[1] - m).exp();
    let s = a + b;
    [a / s, b / s]
}

/// Class index 0 is skin.
const SKIN: usize = 0;

impl MlpModel {
    /// A model with every weight and bias zero and identity normalization.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Network::zeros(sizes).map(|n| n.to_model(vec![0.0; sizes[0]], vec![1.0; sizes[0]]))
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_len()];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("model has no layers".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.biases.len() != l.n_out {
                return Err(Error::DimensionMismatch(format!("layer {k} storage does not match {}×{}", l.n_out, l.n_in)));
            }
            if k > 0 && self.layers[k - 1].n_out != l.n_in {
                return Err(Error::DimensionMismatch(format!("layer {k} input does not chain from layer {}", k - 1)));
            }
        }
        if self.layers.last().unwrap().n_out != 2 {
            return Err(Error::DimensionMismatch("output layer must have 2 units".into()));
        }
        let n = self.input_len();
        if self.mean.len() != n || self.scale.len() != n {
            return Err(Error::DimensionMismatch("normalization vectors do not match input size".into()));
        }
        if self.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("normalization scale must be strictly positive".into()));
        }
        Ok(())
    }

    /// `[p(skin), p(non-skin)]`.
    pub fn class_probabilities(&self, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.input_len() {
            return Err(Error::DimensionMismatch(format!(
                "feature vector has {} entries, model expects {}",
                x.len(),
                self.input_len()
            )));
        }
        let mut a: Vec<f64> = x
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - *m as f64) / *s as f64)
            .collect();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z: Vec<f64> = l.biases.iter().map(|b| *b as f64).collect();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &l.weights[o * l.n_in..(o + 1) * l.n_in];
                *zo += row.iter().zip(&a).map(|(w, v)| *w as f64 * v).sum::<f64>();
            }
            if k < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            a = z;
        }
        Ok(softmax2([a[0], a[1]]))
    }

    /// `p(skin | x)`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        Ok(self.class_probabilities(x)?[SKIN])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHT_MAGIC);
        out.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        let put = |out: &mut Vec<u8>, v: &[f32]| v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        for l in &self.layers {
            out.extend_from_slice(&(l.n_in as u32).to_le_bytes());
            out.extend_from_slice(&(l.n_out as u32).to_le_bytes());
            put(&mut out, &l.weights);
            put(&mut out, &l.biases);
        }
        put(&mut out, &self.mean);
        put(&mut out, &self.scale);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5, "magic")? != WEIGHT_MAGIC {
            return Err(Error::ParseOffset {
                offset: 0,
                message: "missing MSMLP magic".into(),
            });
        }
        let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
        if version != WEIGHT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version as u32,
                expected: WEIGHT_VERSION as u32,
            });
        }
        let count = r.u32("layer count")? as usize;
        if count == 0 || count > 64 {
            return Err(Error::ParseOffset {
                offset: 7,
                message: format!("implausible layer count {count}"),
            });
        }
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let n_in = r.u32("layer input size")? as usize;
            let n_out = r.u32("layer output size")? as usize;
            let weights = r.f32s(n_in * n_out, "weights")?;
            let biases = r.f32s(n_out, "biases")?;
            layers.push(DenseLayer { n_in, n_out, weights, biases });
        }
        let n = layers[0].n_in;
        let mean = r.f32s(n, "normalization mean")?;
        let scale = r.f32s(n, "normalization scale")?;
        if r.pos != bytes.len() {
            return Err(Error::ParseOffset {
                offset: r.pos,
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        let model = MlpModel { layers, mean, scale };
        model.validate().map_err(|e| Error::ParseOffset {
            offset: bytes.len(),
            message: e.to_string(),
        })?;
        Ok(model)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| Error::ParseOffset {
            offset: self.bytes.len(),
            message: format!("stream ends inside {what} (needs {n} bytes at offset {})", self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let len = n.checked_mul(4).ok_or_else(|| Error::ParseOffset {
            offset: self.pos,
            message: format!("{what} size overflows"),
        })?;
        Ok(self
            .take(len, what)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Trainable f64 network.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub sizes: Vec<usize>,
    /// Per layer, row-major `n_out × n_in`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Network {
    fn check_sizes(sizes: &[usize]) -> Result<()> {
        if sizes.len() < 2 || sizes.contains(&0) || *sizes.last().unwrap() != 2 {
            return Err(Error::InvalidArgument(format!(
                "layer sizes {sizes:?} must be non-zero and end in 2 outputs"
            )));
        }
        Ok(())
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::check_sizes(sizes)?;
        Ok(Network {
            sizes: sizes.to_vec(),
            weights: sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect(),
            biases: sizes[1..].iter().map(|n| vec![0.0; *n]).collect(),
        })
    }

    /// He initialization: weights `N(0, 2/fan_in)`, zero biases.
    pub fn he_init(sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for (k, w) in net.weights.iter_mut().enumerate() {
            let normal = Normal::new(0.0, (2.0 / sizes[k] as f64).sqrt()).expect("positive std");
            w.iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        Ok(net)
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flattened parameters, layer by layer, weights then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            p.extend_from_slice(w);
            p.extend_from_slice(b);
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        let mut at = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&p[at..at + nw]);
            at += nw;
            b.copy_from_slice(&p[at..at + nb]);
            at += nb;
        }
    }

    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.weights.len() - 1;
        let mut acts = vec![x.to_vec()];
        for k in 0..self.weights.len() {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            let a = &acts[k];
            let mut z = self.biases[k].clone();
            for o in 0..n_out {
                let row = &self.weights[k][o * n_in..(o + 1) * n_in];
                z[o] += row.iter().zip(a).map(|(w, v)| w * v).sum::<f64>();
            }
            if k < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    fn sample_loss(logits: &[f64], label: usize) -> f64 {
        let m = logits[0].max(logits[1]);
        let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
        lse - logits[label]
    }

    /// Mean cross-entropy over already-normalized inputs. Label 0 is skin.
    pub fn loss(&self, xs: &[Vec<f64>], labels: &[usize]) -> f64 {
        let total: f64 = xs
            .iter()
            .zip(labels)
            .map(|(x, y)| Self::sample_loss(self.activations(x).last().unwrap(), *y))
            .sum();
        total / xs.len() as f64
    }

    /// Mean cross-entropy and its gradient in [`Network::parameters`] order.
    pub fn loss_and_gradient(&self, xs: &[Vec<f64>], labels: &[usize]) -> (f64, Vec<f64>) {
        let n_layers = self.weights.len();
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(labels) {
            let acts = self.activations(x);
            let logits = &acts[n_layers];
            total += Self::sample_loss(logits, y);
            let p = softmax2([logits[0], logits[1]]);
            let mut delta = vec![p[0], p[1]];
            delta[y] -= 1.0;
            for k in (0..n_layers).rev() {
                let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
                let a = &acts[k];
                for o in 0..n_out {
                    gb[k][o] += delta[o];
                    let row = &mut gw[k][o * n_in..(o + 1) * n_in];
                    row.iter_mut().zip(a).for_each(|(g, v)| *g += delta[o] * v);
                }
                if k > 0 {
                    let mut prev = vec![0.0; n_in];
                    for o in 0..n_out {
                        let row = &self.weights[k][o * n_in..(o + 1) * n_in];
                        prev.iter_mut().zip(row).for_each(|(p, w)| *p += delta[o] * w);
                    }
                    // ReLU derivative, using the post-activation value.
                    prev.iter_mut().zip(a).for_each(|(p, v)| {
                        if *v <= 0.0 {
                            *p = 0.0
                        }
                    });
                    delta = prev;
                }
            }
        }
        let n = xs.len() as f64;
        let mut grad = Vec::with_capacity(self.parameter_count());
        for (w, b) in gw.iter().zip(&gb) {
            grad.extend(w.iter().map(|g| g / n));
            grad.extend(b.iter().map(|g| g / n));
        }
        (total / n, grad)
    }

    fn to_model(&self, mean: Vec<f64>, scale: Vec<f64>) -> MlpModel {
        let narrow = |v: &[f64]| v.iter().map(|x| *x as f32).collect::<Vec<f32>>();
        MlpModel {
            layers: (0..self.weights.len())
                .map(|k| DenseLayer {
                    n_in: self.sizes[k],
                    n_out: self.sizes[k + 1],
                    weights: narrow(&self.weights[k]),
                    biases: narrow(&self.biases[k]),
                })
                .collect(),
            mean: narrow(&mean),
            scale: narrow(&scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPixel {
    pub features: Vec<f64>,
    pub skin: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub hidden_layers: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 256,
            max_epochs: 50,
            patience: 5,
            validation_fraction: 0.2,
            hidden_layers: HIDDEN_LAYERS.to_vec(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::InvalidArgument(
                "learning_rate, batch_size and max_epochs must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::InvalidArgument("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    /// Training loss before the first update.
    pub initial_loss: f64,
    /// Training loss after each epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss after each epoch (empty without a validation split).
    pub validation_loss: Vec<f64>,
    /// Epoch whose weights were kept (1-based).
    pub best_epoch: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

fn standardization(xs: &[&Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len() as f64;
    let d = xs[0].len();
    let mut mean = vec![0.0; d];
    for x in xs {
        mean.iter_mut().zip(x.iter()).for_each(|(m, v)| *m += v / n);
    }
    let mut var = vec![0.0; d];
    for x in xs {
        var.iter_mut().zip(x.iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m) * (v - m) / n);
    }
    // Narrow to f32 now so training sees exactly the normalization inference uses.
    let mean = mean.iter().map(|m| *m as f32 as f64).collect();
    let scale = var
        .iter()
        .map(|s| {
            let sd = s.sqrt() as f32;
            if sd > 1e-12 && sd.is_finite() {
                sd as f64
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

/// Trains a classifier with mini-batch Adam and early stopping on a held-out
/// split. Deterministic for a given data order and seed.
pub fn train(data: &[LabelledPixel], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let d = data[0].features.len();
    if let Some(i) = data.iter().position(|p| p.features.len() != d) {
        return Err(Error::DimensionMismatch(format!(
            "sample {i} has {} features, sample 0 has {d}",
            data[i].features.len()
        )));
    }
    if data.iter().all(|p| p.skin) || data.iter().all(|p| !p.skin) {
        return Err(Error::SingleClass);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((data.len() as f64) * cfg.validation_fraction).floor() as usize;
    let n_val = n_val.min(data.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);

    let (mean, scale) = standardization(&train_idx.iter().map(|i| &data[*i].features).collect::<Vec<_>>());
    let normalize = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        idx.iter()
            .map(|i| {
                let p = &data[*i];
                let x = p.features.iter().zip(mean.iter().zip(&scale)).map(|(v, (m, s))| (v - m) / s).collect();
                (x, if p.skin { SKIN } else { 1 - SKIN })
            })
            .unzip()
    };
    let (train_x, train_y) = normalize(train_idx);
    let (val_x, val_y) = normalize(val_idx);

    let mut sizes = vec![d];
    sizes.extend_from_slice(&cfg.hidden_layers);
    sizes.push(2);
    let mut net = Network::he_init(&sizes, &mut rng)?;
    let initial_loss = net.loss(&train_x, &train_y);

    let mut params = net.parameters();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut train_loss = Vec::new();
    let mut validation_loss = Vec::new();
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut stale = 0;
    let mut perm: Vec<usize> = (0..train_x.len()).collect();
    let mut bx = Vec::with_capacity(cfg.batch_size);
    let mut by = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.max_epochs {
        perm.shuffle(&mut rng);
        for chunk in perm.chunks(cfg.batch_size) {
            bx.clear();
            by.clear();
            for &i in chunk {
                bx.push(train_x[i].clone());
                by.push(train_y[i]);
            }
            let (_, grad) = net.loss_and_gradient(&bx, &by);
            adam.step(&mut params, &grad);
            net.set_parameters(&params);
        }
        let tl = net.loss(&train_x, &train_y);
        train_loss.push(tl);
        let monitored = if val_x.is_empty() {
            tl
        } else {
            let vl = net.loss(&val_x, &val_y);
            validation_loss.push(vl);
            vl
        };
        log::debug!("epoch {epoch}: train loss {tl:.6}, monitored {monitored:.6}");
        if monitored < best.0 {
            best = (monitored, params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    net.set_parameters(&best.1);
    Ok(TrainOutcome {
        model: net.to_model(mean, scale),
        initial_loss,
        train_loss,
        validation_loss,
        best_epoch: best.2,
    })
}

/// Fraction of samples whose `p(skin) ≥ 0.5` agrees with the label.
pub fn accuracy(model: &MlpModel, data: &[LabelledPixel]) -> Result<f64> {
    let mut correct = 0usize;
    for p in data {
        if (model.forward(&p.features)? >= 0.5) == p.skin {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Skin probability for every pixel. Dark pixels are classified with zeros
/// in place of their four parameters.
pub fn predict_map(model: &MlpModel, cube: &MultispectralCube, maps: &ParameterMaps) -> Result<Vec<f64>> {
    maps.check_dimensions(cube.width(), cube.height())?;
    if model.input_len() != cube.grid().count() + 4 {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} features, cube gives {}",
            model.input_len(),
            cube.grid().count() + 4
        )));
    }
    (0..cube.pixel_count())
        .into_par_iter()
        .map(|i| {
            let p = if maps.status[i] == FitStatus::DarkPixel {
                SkinParams {
                    i_d: 0.0,
                    i_s: 0.0,
                    bio: crate::forward::BioParams { f_mel: 0.0, f_blood: 0.0 },
                }
            } else {
                maps.params(i)
            };
            model.forward(&feature_vector(&cube.pixel_f64(i), &p))
        })
        .collect()
}

/// Labelled pixels from an 8-bit mask: 255 skin, 0 non-skin, anything else ignored.
pub fn labelled_from_mask(
    cube: &MultispectralCube,
    maps: &ParameterMaps,
    mask: &image::GrayImage,
) -> Result<Vec<LabelledPixel>> {
    maps.check_dimensions(cube.width(), cube.height())?;
    if mask.width() as usize != cube.width() || mask.height() as usize != cube.height() {
        return Err(Error::DimensionMismatch(format!(
            "mask is {}×{}, cube is {}×{}",
            mask.width(),
            mask.height(),
            cube.width(),
            cube.height()
        )));
    }
    let mut out = Vec::new();
    for (i, px) in mask.pixels().enumerate() {
        let skin = match px.0[0] {
            255 => true,
            0 => false,
            _ => continue,
        };
        if maps.status[i] == FitStatus::DarkPixel {
            continue;
        }
        out.push(LabelledPixel {
            features: feature_vector(&cube.pixel_f64(i), &maps.params(i)),
            skin,
        });
    }
    Ok(out)
}

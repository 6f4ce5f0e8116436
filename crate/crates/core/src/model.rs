//! The ray-to-displacement network: a trunk predicting `s` and the mask
//! logit, an optional separate mask network, an optional color network and
//! a per-shape latent table.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::dataset::{RayDataset, RayRecord};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::nn::{cosine_lr, AdamState, Matrix, Mlp, MlpSpec, Tape};
use crate::rays::{anchor_jacobians, hit_point, EncodingMode};
use crate::rng::{normal, seeded, shuffle};

/// Width of a ray encoding.
pub const ENCODING_DIM: usize = 6;
/// Probability clamp used by the mask cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;
pub const DEFAULT_LATENT_DIM: usize = 128;
pub const DEFAULT_DELTA: f64 = 5.0;
pub const DEFAULT_MASK_THRESHOLD: f64 = 0.5;
/// Rows per inference chunk.
const CHUNK: usize = 4096;

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + libm::expf(-x))
}

/// Architecture of a [`PrifModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PrifConfig {
    pub mode: EncodingMode,
    pub depth: usize,
    pub width: usize,
    /// 0 for a single-shape model.
    pub latent_dim: usize,
    pub num_shapes: usize,
    /// Mask predicted by its own network instead of a second trunk output.
    pub separate_mask: bool,
    pub color: bool,
}

impl PrifConfig {
    pub fn single(mode: EncodingMode, depth: usize, width: usize) -> Self {
        Self {
            mode,
            depth,
            width,
            latent_dim: 0,
            num_shapes: 1,
            separate_mask: false,
            color: false,
        }
    }

    pub fn input_dim(&self) -> usize {
        ENCODING_DIM + self.latent_dim
    }

    pub fn trunk_spec(&self) -> MlpSpec {
        MlpSpec::new(
            self.input_dim(),
            if self.separate_mask { 1 } else { 2 },
            self.depth,
            self.width,
        )
    }

    pub fn mask_spec(&self) -> Option<MlpSpec> {
        self.separate_mask
            .then(|| MlpSpec::new(self.input_dim(), 1, self.depth, self.width))
    }

    pub fn color_spec(&self) -> Option<MlpSpec> {
        self.color
            .then(|| MlpSpec::new(self.input_dim(), 3, self.depth, self.width))
    }
}

#[derive(Debug)]
pub struct PrifModel {
    config: PrifConfig,
    trunk: Mlp,
    mask: Option<Mlp>,
    color: Option<Mlp>,
    /// `num_shapes x latent_dim`, row-major.
    latents: Vec<f32>,
    queries: AtomicU64,
}

impl Clone for PrifModel {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            trunk: self.trunk.clone(),
            mask: self.mask.clone(),
            color: self.color.clone(),
            latents: self.latents.clone(),
            queries: AtomicU64::new(self.query_count()),
        }
    }
}

fn zero_last_layer(m: &mut Mlp) {
    let last = m.num_layers() - 1;
    let l = m.layer_mut(last);
    l.weight.fill(0.0);
    l.bias.fill(0.0);
}

/// Forward results kept for the backward pass.
#[derive(Debug)]
pub struct Evaluation {
    pub s: Vec<f32>,
    pub logits: Vec<f32>,
    trunk: Tape,
    mask: Option<Tape>,
}

impl Evaluation {
    pub fn probabilities(&self) -> Vec<f32> {
        self.logits.iter().map(|&z| sigmoid(z)).collect()
    }
}

struct Backward {
    trunk: Vec<f32>,
    mask: Option<Vec<f32>>,
    input: Matrix,
}

impl PrifModel {
    /// Kaiming-initialized networks with zeroed output layers; latents drawn
    /// from `N(0, 0.01²)`.
    pub fn new(config: PrifConfig, seed: u64) -> Result<Self> {
        if config.num_shapes == 0 || config.num_shapes > u16::MAX as usize + 1 {
            return Err(Error::InvalidConfig(alloc::format!(
                "num_shapes = {}",
                config.num_shapes
            )));
        }
        let mut trunk = Mlp::new(config.trunk_spec(), seed)?;
        zero_last_layer(&mut trunk);
        let mask = match config.mask_spec() {
            Some(s) => {
                let mut m = Mlp::new(s, seed.wrapping_add(1))?;
                zero_last_layer(&mut m);
                Some(m)
            }
            None => None,
        };
        let color = match config.color_spec() {
            Some(s) => {
                let mut m = Mlp::new(s, seed.wrapping_add(2))?;
                zero_last_layer(&mut m);
                Some(m)
            }
            None => None,
        };
        let mut rng = seeded(seed.wrapping_add(3));
        let latents = (0..config.num_shapes * config.latent_dim)
            .map(|_| (normal(&mut rng) * 0.01) as f32)
            .collect();
        Ok(Self {
            config,
            trunk,
            mask,
            color,
            latents,
            queries: AtomicU64::new(0),
        })
    }

    /// Reassembles a model from stored networks.
    pub fn from_parts(
        config: PrifConfig,
        trunk: Mlp,
        mask: Option<Mlp>,
        color: Option<Mlp>,
        latents: Vec<f32>,
    ) -> Result<Self> {
        let check = |m: &Mlp, s: MlpSpec| {
            if *m.spec() == s {
                Ok(())
            } else {
                Err(Error::InvalidConfig(alloc::format!(
                    "network spec {:?} != {:?}",
                    m.spec(),
                    s
                )))
            }
        };
        check(&trunk, config.trunk_spec())?;
        match (&mask, config.mask_spec()) {
            (Some(m), Some(s)) => check(m, s)?,
            (None, None) => {}
            _ => return Err(Error::InvalidConfig("mask network presence".into())),
        }
        match (&color, config.color_spec()) {
            (Some(m), Some(s)) => check(m, s)?,
            (None, None) => {}
            _ => return Err(Error::InvalidConfig("color network presence".into())),
        }
        if latents.len() != config.num_shapes * config.latent_dim {
            return Err(Error::ShapeMismatch {
                expected: config.num_shapes * config.latent_dim,
                got: latents.len(),
            });
        }
        Ok(Self {
            config,
            trunk,
            mask,
            color,
            latents,
            queries: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &PrifConfig {
        &self.config
    }

    pub fn mode(&self) -> EncodingMode {
        self.config.mode
    }

    pub fn trunk(&self) -> &Mlp {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Mlp {
        &mut self.trunk
    }

    pub fn mask_net(&self) -> Option<&Mlp> {
        self.mask.as_ref()
    }

    pub fn color_net(&self) -> Option<&Mlp> {
        self.color.as_ref()
    }

    pub fn color_net_mut(&mut self) -> Option<&mut Mlp> {
        self.color.as_mut()
    }

    pub fn latents(&self) -> &[f32] {
        &self.latents
    }

    pub fn latent(&self, shape_id: usize) -> Result<&[f32]> {
        let l = self.config.latent_dim;
        if shape_id >= self.config.num_shapes {
            return Err(Error::UnknownShapeId(shape_id));
        }
        Ok(&self.latents[shape_id * l..(shape_id + 1) * l])
    }

    /// Hash of trunk and mask parameters.
    pub fn geometry_hash(&self) -> u64 {
        let mut h = self.trunk.param_hash();
        if let Some(m) = &self.mask {
            h = h.rotate_left(17) ^ m.param_hash();
        }
        h
    }

    /// Total trunk rows evaluated so far.
    pub fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset_query_count(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    pub fn check_mode(&self, got: EncodingMode) -> Result<()> {
        self.config.mode.check(got)
    }

    /// Concatenates each encoding with its shape's latent.
    pub fn input_matrix(&self, encodings: &Matrix, shape_ids: Option<&[u16]>) -> Result<Matrix> {
        if encodings.cols() != ENCODING_DIM {
            return Err(Error::ShapeMismatch {
                expected: ENCODING_DIM,
                got: encodings.cols(),
            });
        }
        let l = self.config.latent_dim;
        if l == 0 {
            return Ok(encodings.clone());
        }
        let ids = shape_ids.ok_or(Error::ShapeIdsRequired)?;
        if ids.len() != encodings.rows() {
            return Err(Error::ShapeMismatch {
                expected: encodings.rows(),
                got: ids.len(),
            });
        }
        let mut data = Vec::with_capacity(encodings.rows() * (ENCODING_DIM + l));
        for (r, &id) in ids.iter().enumerate() {
            data.extend_from_slice(encodings.row(r));
            data.extend_from_slice(self.latent(id as usize)?);
        }
        Ok(Matrix::from_vec(encodings.rows(), ENCODING_DIM + l, data))
    }

    /// Concatenates every encoding with one explicit latent vector.
    pub fn input_with_latent(&self, encodings: &Matrix, latent: &[f32]) -> Result<Matrix> {
        if latent.len() != self.config.latent_dim {
            return Err(Error::ShapeMismatch {
                expected: self.config.latent_dim,
                got: latent.len(),
            });
        }
        let mut data = Vec::with_capacity(encodings.rows() * self.config.input_dim());
        for r in 0..encodings.rows() {
            data.extend_from_slice(encodings.row(r));
            data.extend_from_slice(latent);
        }
        Ok(Matrix::from_vec(
            encodings.rows(),
            self.config.input_dim(),
            data,
        ))
    }

    fn split_outputs(&self, trunk_out: &Matrix, mask_out: Option<&Matrix>) -> (Vec<f32>, Vec<f32>) {
        let s = trunk_out.column(0);
        let logits = match mask_out {
            Some(m) => m.column(0),
            None => trunk_out.column(1),
        };
        (s, logits)
    }

    /// Forward pass over full network inputs, retaining tapes.
    pub fn evaluate(&self, input: &Matrix) -> Result<Evaluation> {
        let (t_out, trunk) = self.trunk.forward(input)?;
        self.queries
            .fetch_add(input.rows() as u64, Ordering::Relaxed);
        let (m_out, mask) = match &self.mask {
            Some(m) => {
                let (o, t) = m.forward(input)?;
                (Some(o), Some(t))
            }
            None => (None, None),
        };
        let (s, logits) = self.split_outputs(&t_out, m_out.as_ref());
        Ok(Evaluation {
            s,
            logits,
            trunk,
            mask,
        })
    }

    /// Inference without tapes, chunked; returns `(s, logits)`.
    pub fn predict_raw(&self, input: &Matrix) -> Result<(Vec<f32>, Vec<f32>)> {
        let rows: Vec<usize> = (0..input.rows()).collect();
        let parts =
            crate::par::map_chunks(&rows, CHUNK, |start, c| -> Result<(Vec<f32>, Vec<f32>)> {
                let sub = input.slice_rows(start, start + c.len());
                let t = self.trunk.predict(&sub)?;
                let m = match &self.mask {
                    Some(m) => Some(m.predict(&sub)?),
                    None => None,
                };
                Ok(self.split_outputs(&t, m.as_ref()))
            });
        self.queries
            .fetch_add(input.rows() as u64, Ordering::Relaxed);
        let mut s = Vec::with_capacity(input.rows());
        let mut z = Vec::with_capacity(input.rows());
        for p in parts {
            let (a, b) = p?;
            s.extend(a);
            z.extend(b);
        }
        Ok((s, z))
    }

    fn backward(
        &self,
        ev: &Evaluation,
        ds: &[f32],
        dlogit: &[f32],
        want_params: bool,
    ) -> Result<Backward> {
        let n = ev.s.len();
        let mut trunk_dout = Matrix::zeros(n, self.trunk.spec().output_dim);
        for i in 0..n {
            trunk_dout.row_mut(i)[0] = ds[i];
            if self.mask.is_none() {
                trunk_dout.row_mut(i)[1] = dlogit[i];
            }
        }
        let (trunk, mut input) = if want_params {
            let g = self.trunk.backward(&ev.trunk, &trunk_dout)?;
            (g.params, g.input)
        } else {
            (
                Vec::new(),
                self.trunk.input_gradients(&ev.trunk, &trunk_dout)?,
            )
        };
        let mask = match (&self.mask, &ev.mask) {
            (Some(m), Some(tape)) => {
                let dout = Matrix::from_vec(n, 1, dlogit.to_vec());
                let (p, gi) = if want_params {
                    let g = m.backward(tape, &dout)?;
                    (Some(g.params), g.input)
                } else {
                    (None, m.input_gradients(tape, &dout)?)
                };
                for (a, b) in input.data_mut().iter_mut().zip(gi.data()) {
                    *a += b;
                }
                p
            }
            _ => None,
        };
        Ok(Backward { trunk, mask, input })
    }

    /// Gradients of `Σ ds·s + dlogit·logit` with respect to the network inputs.
    pub fn input_gradients(&self, ev: &Evaluation, ds: &[f32], dlogit: &[f32]) -> Result<Matrix> {
        Ok(self.backward(ev, ds, dlogit, false)?.input)
    }
}

/// Predicted displacement and foreground probability for each ray.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub s: Vec<f32>,
    pub a: Vec<f32>,
}

/// Evaluates `encodings` (`n x 6`, produced in `mode`).
pub fn prif_forward(
    model: &PrifModel,
    mode: EncodingMode,
    encodings: &Matrix,
    shape_ids: Option<&[u16]>,
) -> Result<Prediction> {
    model.check_mode(mode)?;
    let input = model.input_matrix(encodings, shape_ids)?;
    let (s, z) = model.predict_raw(&input)?;
    Ok(Prediction {
        s,
        a: z.into_iter().map(sigmoid).collect(),
    })
}

/// Evaluates dataset records.
pub fn predict_records(model: &PrifModel, records: &[RayRecord]) -> Result<Prediction> {
    for r in records {
        model.check_mode(r.mode)?;
    }
    let ids: Vec<u16> = records.iter().map(|r| r.shape_id).collect();
    prif_forward(
        model,
        model.mode(),
        &RayDataset::encodings(records),
        Some(&ids),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossValue {
    pub total: f64,
    pub s: f64,
    pub a: f64,
}

/// Loss over aligned predictions and ground truth.
pub fn prif_loss(pred: &Prediction, gt: &[RayRecord]) -> LossValue {
    let n = gt.len().max(1) as f64;
    let mut la = 0.0;
    let mut ls = 0.0;
    let mut fg = 0usize;
    for (i, r) in gt.iter().enumerate() {
        let a = (pred.a[i] as f64).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        if r.a_gt {
            la -= libm::log(a);
            ls += (pred.s[i] as f64 - r.s_gt as f64).abs();
            fg += 1;
        } else {
            la -= libm::log(1.0 - a);
        }
    }
    let la = la / n;
    let ls = if fg > 0 { ls / fg as f64 } else { 0.0 };
    LossValue {
        total: la + ls,
        s: ls,
        a: la,
    }
}

/// Weighted loss and its gradients with respect to `s` and the mask logit.
fn loss_and_grads(
    s: &[f32],
    logits: &[f32],
    gt: &[RayRecord],
    w_s: f64,
    w_a: f64,
) -> (LossValue, Vec<f32>, Vec<f32>) {
    let pred = Prediction {
        s: s.to_vec(),
        a: logits.iter().map(|&z| sigmoid(z)).collect(),
    };
    let mut v = prif_loss(&pred, gt);
    v.total = w_s * v.s + w_a * v.a;
    let n = gt.len().max(1) as f32;
    let fg = gt.iter().filter(|r| r.a_gt).count().max(1) as f32;
    let mut ds = vec![0.0f32; gt.len()];
    let mut dz = vec![0.0f32; gt.len()];
    for (i, r) in gt.iter().enumerate() {
        let y = if r.a_gt { 1.0 } else { 0.0 };
        dz[i] = (pred.a[i] - y) / n * w_a as f32;
        if r.a_gt {
            let diff = s[i] - r.s_gt;
            ds[i] = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            } / fg
                * w_s as f32;
        }
    }
    (v, ds, dz)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub seed: u64,
    pub weight_s: f64,
    pub weight_a: f64,
    pub delta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 1024,
            lr_start: 1e-4,
            lr_end: 1e-7,
            seed: 0,
            weight_s: 1.0,
            weight_a: 1.0,
            delta: DEFAULT_DELTA,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.batch_size > 0
            && self.lr_start > 0.0
            && self.lr_end > 0.0
            && self.lr_end <= self.lr_start
            && self.weight_s >= 0.0
            && self.weight_a >= 0.0
            && self.delta > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(alloc::format!("{self:?}")))
        }
    }
}

/// Mean losses of each epoch.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossTrace {
    pub epochs: Vec<LossValue>,
}

impl LossTrace {
    pub fn last(&self) -> Option<LossValue> {
        self.epochs.last().copied()
    }
}

fn batch_count(n: usize, batch: usize) -> usize {
    n.div_ceil(batch)
}

fn accumulate_latent_grads(model: &PrifModel, input_grads: &Matrix, ids: &[u16], into: &mut [f32]) {
    let l = model.config.latent_dim;
    for (r, &id) in ids.iter().enumerate() {
        let row = &input_grads.row(r)[ENCODING_DIM..];
        let dst = &mut into[id as usize * l..(id as usize + 1) * l];
        for (d, g) in dst.iter_mut().zip(row) {
            *d += g;
        }
    }
}

/// Joint training of networks and latents; `progress` sees each epoch's mean loss.
pub fn train_with_progress(
    model: &mut PrifModel,
    dataset: &RayDataset,
    config: &TrainConfig,
    mut progress: impl FnMut(usize, &LossValue),
) -> Result<LossTrace> {
    config.validate()?;
    model.check_mode(dataset.mode)?;
    if dataset.num_shapes() > model.config.num_shapes {
        return Err(Error::UnknownShapeId(dataset.num_shapes() - 1));
    }
    let mut trace = LossTrace::default();
    if config.epochs == 0 || dataset.is_empty() {
        return Ok(trace);
    }
    let n = dataset.len();
    let steps_per_epoch = batch_count(n, config.batch_size);
    let total = config.epochs * steps_per_epoch;
    let mut trunk_adam = AdamState::new(model.trunk.params().len());
    let mut mask_adam = model
        .mask
        .as_ref()
        .map(|m| AdamState::new(m.params().len()));
    let mut latent_adam = AdamState::new(model.latents.len());
    let mut rng = seeded(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut step = 0usize;
    let mut batch: Vec<RayRecord> = Vec::with_capacity(config.batch_size);
    for epoch in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        let mut sum = LossValue::default();
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| dataset.records[i]));
            let ids: Vec<u16> = batch.iter().map(|r| r.shape_id).collect();
            let input = model.input_matrix(&RayDataset::encodings(&batch), Some(&ids))?;
            let ev = model.evaluate(&input)?;
            let (loss, ds, dz) =
                loss_and_grads(&ev.s, &ev.logits, &batch, config.weight_s, config.weight_a);
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let g = model.backward(&ev, &ds, &dz, true)?;
            let lr = cosine_lr(step, total, config.lr_start, config.lr_end)?;
            trunk_adam.step(model.trunk.params_mut(), &g.trunk, lr)?;
            if let (Some(m), Some(st), Some(gm)) =
                (model.mask.as_mut(), mask_adam.as_mut(), g.mask.as_ref())
            {
                st.step(m.params_mut(), gm, lr)?;
            }
            if model.config.latent_dim > 0 {
                let mut lg = vec![0.0f32; model.latents.len()];
                accumulate_latent_grads(model, &g.input, &ids, &mut lg);
                latent_adam.step(&mut model.latents, &lg, lr)?;
            }
            let w = chunk.len() as f64 / n as f64;
            sum.total += loss.total * w;
            sum.s += loss.s * w;
            sum.a += loss.a * w;
            step += 1;
        }
        progress(epoch, &sum);
        trace.epochs.push(sum);
    }
    Ok(trace)
}

pub fn train(
    model: &mut PrifModel,
    dataset: &RayDataset,
    config: &TrainConfig,
) -> Result<LossTrace> {
    train_with_progress(model, dataset, config, |_, _| {})
}

/// `∂s/∂p` for each row, mapped from anchor-space input gradients.
fn position_gradients(
    mode: EncodingMode,
    records: &[RayRecord],
    input_grads: &Matrix,
) -> Vec<Vec3> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let g = input_grads.row(i);
            let ga = Vec3::new(g[0] as f64, g[1] as f64, g[2] as f64);
            let (dp, _) = anchor_jacobians(mode, r.origin(), r.dir());
            dp.transpose().mul_vec(ga)
        })
        .collect()
}

/// Gradient norms `‖∂s/∂p‖` from an evaluation of `records`.
fn gradient_norms(model: &PrifModel, ev: &Evaluation, records: &[RayRecord]) -> Result<Vec<f64>> {
    let ones = vec![1.0f32; records.len()];
    let zeros = vec![0.0f32; records.len()];
    let g = model.input_gradients(ev, &ones, &zeros)?;
    Ok(position_gradients(model.mode(), records, &g)
        .into_iter()
        .map(Vec3::norm)
        .collect())
}

/// Keeps rays whose displacement gradient with respect to the ray position
/// has norm below `delta`. Defined for perpendicular-foot models.
pub fn outlier_filter(model: &PrifModel, records: &[RayRecord], delta: f64) -> Result<Vec<bool>> {
    if model.mode() != EncodingMode::PerpFoot {
        return Err(Error::ModeMismatch {
            expected: EncodingMode::PerpFoot.as_str(),
            got: model.mode().as_str(),
        });
    }
    let mut keep = Vec::with_capacity(records.len());
    for chunk in records.chunks(CHUNK) {
        let input = records_input(model, chunk)?;
        let ev = model.evaluate(&input)?;
        keep.extend(
            gradient_norms(model, &ev, chunk)?
                .into_iter()
                .map(|g| g < delta),
        );
    }
    Ok(keep)
}

/// `‖∂s/∂p‖` for each record, via `(I - d dᵀ) ∂s/∂f`.
pub fn displacement_position_gradients(
    model: &PrifModel,
    records: &[RayRecord],
) -> Result<Vec<Vec3>> {
    let mut out = Vec::with_capacity(records.len());
    for chunk in records.chunks(CHUNK) {
        let input = records_input(model, chunk)?;
        let ev = model.evaluate(&input)?;
        let ones = vec![1.0f32; chunk.len()];
        let zeros = vec![0.0f32; chunk.len()];
        let g = model.input_gradients(&ev, &ones, &zeros)?;
        out.extend(position_gradients(model.mode(), chunk, &g));
    }
    Ok(out)
}

fn records_input(model: &PrifModel, records: &[RayRecord]) -> Result<Matrix> {
    for r in records {
        model.check_mode(r.mode)?;
    }
    let ids: Vec<u16> = records.iter().map(|r| r.shape_id).collect();
    model.input_matrix(&RayDataset::encodings(records), Some(&ids))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub mask_threshold: f64,
    /// Outlier threshold; `None` disables the filter.
    pub delta: Option<f64>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            delta: Some(DEFAULT_DELTA),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub colors: Option<Vec<[f32; 3]>>,
    /// Rays rejected by the gradient filter after passing the mask test.
    pub discarded: usize,
}

/// One network evaluation per ray; emits `base + s·d` for rays predicted as
/// foreground whose position gradient stays below `delta`. For non-foot
/// encodings the gradient is mapped through that encoding's Jacobian.
pub fn extract_points(
    model: &PrifModel,
    records: &[RayRecord],
    opts: &ExtractOptions,
) -> Result<PointCloud> {
    let mut cloud = PointCloud {
        colors: model.color.as_ref().map(|_| Vec::new()),
        ..PointCloud::default()
    };
    for chunk in records.chunks(CHUNK) {
        let input = records_input(model, chunk)?;
        let (ev, norms) = match opts.delta {
            Some(_) => {
                let ev = model.evaluate(&input)?;
                let norms = gradient_norms(model, &ev, chunk)?;
                (
                    ev.s.iter()
                        .copied()
                        .zip(ev.logits.iter().copied())
                        .collect::<Vec<_>>(),
                    Some(norms),
                )
            }
            None => {
                let (s, z) = model.predict_raw(&input)?;
                (s.into_iter().zip(z).collect(), None)
            }
        };
        let mut kept_rows = Vec::new();
        for (i, (s, z)) in ev.into_iter().enumerate() {
            if (sigmoid(z) as f64) < opts.mask_threshold {
                continue;
            }
            if let (Some(d), Some(n)) = (opts.delta, &norms) {
                if n[i] >= d {
                    cloud.discarded += 1;
                    continue;
                }
            }
            let r = &chunk[i];
            cloud.points.push(hit_point(r.base(), r.dir(), s as f64));
            kept_rows.push(i);
        }
        if let (Some(cn), Some(colors)) = (&model.color, cloud.colors.as_mut()) {
            if !kept_rows.is_empty() {
                let sub: Vec<f32> = kept_rows
                    .iter()
                    .flat_map(|&i| input.row(i).to_vec())
                    .collect();
                let m = Matrix::from_vec(kept_rows.len(), input.cols(), sub);
                let out = cn.predict(&m)?;
                colors.extend((0..out.rows()).map(|r| {
                    let o = out.row(r);
                    [sigmoid(o[0]), sigmoid(o[1]), sigmoid(o[2])]
                }));
            }
        }
    }
    Ok(cloud)
}

/// Fraction of records whose thresholded mask matches `a_gt`.
pub fn mask_accuracy(model: &PrifModel, records: &[RayRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptySet);
    }
    let p = predict_records(model, records)?;
    let correct = records
        .iter()
        .zip(&p.a)
        .filter(|(r, &a)| (a as f64 >= DEFAULT_MASK_THRESHOLD) == r.a_gt)
        .count();
    Ok(correct as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AutoDecodeConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AutoDecodeConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: 1e-3,
            batch_size: 1024,
            seed: 0,
        }
    }
}

/// Fits one latent vector to `observations` with all network weights frozen.
pub fn auto_decode(
    model: &PrifModel,
    observations: &[RayRecord],
    init: &[f32],
    config: &AutoDecodeConfig,
) -> Result<Vec<f32>> {
    if model.config.latent_dim == 0 {
        return Err(Error::LatentFree);
    }
    let mut latent = init.to_vec();
    if latent.len() != model.config.latent_dim {
        return Err(Error::ShapeMismatch {
            expected: model.config.latent_dim,
            got: latent.len(),
        });
    }
    if config.steps == 0 {
        return Ok(latent);
    }
    if observations.is_empty() {
        return Err(Error::EmptySet);
    }
    for r in observations {
        model.check_mode(r.mode)?;
    }
    let mut adam = AdamState::new(latent.len());
    let mut rng = seeded(config.seed);
    let mut order: Vec<usize> = (0..observations.len()).collect();
    let mut cursor = order.len();
    let bs = config.batch_size.max(1).min(order.len());
    let mut batch = Vec::with_capacity(bs);
    for step in 0..config.steps {
        batch.clear();
        while batch.len() < bs {
            if cursor == order.len() {
                shuffle(&mut order, &mut rng);
                cursor = 0;
            }
            batch.push(observations[order[cursor]]);
            cursor += 1;
        }
        let input = model.input_with_latent(&RayDataset::encodings(&batch), &latent)?;
        let ev = model.evaluate(&input)?;
        let (loss, ds, dz) = loss_and_grads(&ev.s, &ev.logits, &batch, 1.0, 1.0);
        if !loss.total.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: 0, step });
        }
        let gi = model.input_gradients(&ev, &ds, &dz)?;
        let mut g = vec![0.0f32; latent.len()];
        for r in 0..gi.rows() {
            for (d, v) in g.iter_mut().zip(&gi.row(r)[ENCODING_DIM..]) {
                *d += v;
            }
        }
        adam.step(&mut latent, &g, config.lr)?;
    }
    Ok(latent)
}

/// RGB in `[0, 1]` for each encoding.
pub fn color_forward(
    model: &PrifModel,
    mode: EncodingMode,
    encodings: &Matrix,
    shape_ids: Option<&[u16]>,
) -> Result<Vec<[f32; 3]>> {
    let net = model.color.as_ref().ok_or(Error::MissingColorHead)?;
    model.check_mode(mode)?;
    let input = model.input_matrix(encodings, shape_ids)?;
    let out = net.predict(&input)?;
    Ok((0..out.rows())
        .map(|r| {
            let o = out.row(r);
            [sigmoid(o[0]), sigmoid(o[1]), sigmoid(o[2])]
        })
        .collect())
}

/// Fits the color network on foreground records carrying colors (mean
/// squared error on the sigmoid output). Geometry networks and latents stay fixed.
pub fn train_color(
    model: &mut PrifModel,
    dataset: &RayDataset,
    config: &TrainConfig,
) -> Result<LossTrace> {
    config.validate()?;
    model.check_mode(dataset.mode)?;
    if model.color.is_none() {
        return Err(Error::MissingColorHead);
    }
    let samples: Vec<RayRecord> = dataset
        .records
        .iter()
        .filter(|r| r.a_gt && r.color.is_some())
        .copied()
        .collect();
    let mut trace = LossTrace::default();
    if config.epochs == 0 || samples.is_empty() {
        return Ok(trace);
    }
    let steps_per_epoch = batch_count(samples.len(), config.batch_size);
    let total = config.epochs * steps_per_epoch;
    let mut adam = AdamState::new(model.color.as_ref().map_or(0, |c| c.params().len()));
    let mut rng = seeded(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut step = 0;
    for epoch in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<RayRecord> = chunk.iter().map(|&i| samples[i]).collect();
            let ids: Vec<u16> = batch.iter().map(|r| r.shape_id).collect();
            let input = model.input_matrix(&RayDataset::encodings(&batch), Some(&ids))?;
            let net = model.color.as_mut().ok_or(Error::MissingColorHead)?;
            let (out, tape) = net.forward(&input)?;
            let mut dout = Matrix::zeros(out.rows(), 3);
            let mut loss = 0.0f64;
            let scale = 1.0 / (3 * batch.len()) as f32;
            for (r, rec) in batch.iter().enumerate() {
                let c = rec.color.unwrap_or([0.0; 3]);
                for k in 0..3 {
                    let y = sigmoid(out.get(r, k));
                    let diff = y - c[k];
                    loss += (diff * diff * scale) as f64;
                    dout.row_mut(r)[k] = 2.0 * diff * scale * y * (1.0 - y);
                }
            }
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            let g = net.backward(&tape, &dout)?;
            let lr = cosine_lr(step, total, config.lr_start, config.lr_end)?;
            adam.step(net.params_mut(), &g.params, lr)?;
            sum += loss * chunk.len() as f64 / samples.len() as f64;
            step += 1;
        }
        trace.epochs.push(LossValue {
            total: sum,
            s: 0.0,
            a: 0.0,
        });
    }
    Ok(trace)
}

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{gemm, Matrix};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

pub const LAYER_NORM_EPS: f32 = 1e-5;

/// Shape of a fully connected network.
///
/// `depth` counts linear layers: one input layer, `depth - 2` hidden
/// `width x width` layers and one output layer. Every layer except the last
/// is followed by ReLU and, when enabled, layer normalization. Hidden layers
/// add their input back (`x + relu(W x + b)`) when `residual` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MlpSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub depth: usize,
    pub width: usize,
    pub residual: bool,
    pub layer_norm: bool,
}

impl MlpSpec {
    pub fn new(input_dim: usize, output_dim: usize, depth: usize, width: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            depth,
            width,
            residual: true,
            layer_norm: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::InvalidSpec(format!(
                "depth must be >= 2, got {}",
                self.depth
            )));
        }
        if self.width == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidSpec("dimensions must be >= 1".into()));
        }
        Ok(())
    }

    fn layer_dims(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let i = if l == 0 { self.input_dim } else { self.width };
                let o = if l + 1 == self.depth {
                    self.output_dim
                } else {
                    self.width
                };
                (i, o)
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        for (l, (i, o)) in self.layer_dims().into_iter().enumerate() {
            n += i * o + o;
            if self.layer_norm && l + 1 < self.depth {
                n += 2 * o;
            }
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    in_dim: usize,
    out_dim: usize,
    weight: usize,
    bias: usize,
    /// Offsets of layer-norm gain and offset.
    norm: Option<(usize, usize)>,
    relu: bool,
    residual: bool,
}

/// Network parameters in one flat buffer, layer by layer: weight
/// (`in x out`, row-major), bias, then layer-norm gain and offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f32>,
    layout: Vec<Layout>,
}

/// Parameter views of one layer. `weight` is `in_dim x out_dim` row-major.
#[derive(Debug)]
pub struct LayerParams<'a> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: &'a mut [f32],
    pub bias: &'a mut [f32],
    pub gain: Option<&'a mut [f32]>,
    pub offset: Option<&'a mut [f32]>,
}

/// Read-only view of one layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: &'a [f32],
    pub bias: &'a [f32],
    pub gain: Option<&'a [f32]>,
    pub offset: Option<&'a [f32]>,
    pub relu: bool,
    pub residual: bool,
}

/// Activations retained by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    spec: MlpSpec,
    rows: usize,
    /// Input of each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation `x W + b` of each layer.
    pre: Vec<Matrix>,
    /// Normalized values and per-row inverse std of normalized layers.
    normed: Vec<Option<(Matrix, Vec<f32>)>>,
}

impl Tape {
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Normalized activations of layer `l` before gain and offset.
    pub fn normalized(&self, l: usize) -> Option<&Matrix> {
        self.normed.get(l)?.as_ref().map(|(m, _)| m)
    }

    /// Output of layer `l` (input of layer `l + 1`).
    pub fn layer_output(&self, l: usize) -> Option<&Matrix> {
        self.inputs.get(l + 1)
    }
}

/// Gradients of `⟨outputs, output_grads⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Same layout as [`Mlp::params`].
    pub params: Vec<f32>,
    pub input: Matrix,
}

impl Mlp {
    /// Kaiming-uniform weights (`±sqrt(6 / fan_in)`), zero biases, unit gains.
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut layout = Vec::with_capacity(spec.depth);
        let mut off = 0;
        for (l, (i, o)) in spec.layer_dims().into_iter().enumerate() {
            let last = l + 1 == spec.depth;
            let weight = off;
            let bias = weight + i * o;
            off = bias + o;
            let norm = if spec.layer_norm && !last {
                let g = off;
                off += 2 * o;
                Some((g, g + o))
            } else {
                None
            };
            layout.push(Layout {
                in_dim: i,
                out_dim: o,
                weight,
                bias,
                norm,
                relu: !last,
                residual: spec.residual && !last && l > 0 && i == o,
            });
        }
        debug_assert_eq!(off, spec.param_count());
        let mut params = vec![0.0f32; off];
        let mut rng = seeded(seed);
        for lay in &layout {
            let bound = libm::sqrtf(6.0 / lay.in_dim as f32);
            for w in &mut params[lay.weight..lay.weight + lay.in_dim * lay.out_dim] {
                *w = rng.random_range(-bound..bound);
            }
            if let Some((g, _)) = lay.norm {
                params[g..g + lay.out_dim].fill(1.0);
            }
        }
        Ok(Self {
            spec,
            params,
            layout,
        })
    }

    /// Rebuilds a network from a flat parameter buffer.
    pub fn from_params(spec: MlpSpec, params: Vec<f32>) -> Result<Self> {
        let mut m = Self::new(spec, 0)?;
        if params.len() != m.params.len() {
            return Err(Error::ShapeMismatch {
                expected: m.params.len(),
                got: params.len(),
            });
        }
        m.params = params;
        Ok(m)
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.layout.len()
    }

    pub fn param_hash(&self) -> u64 {
        super::hash_f32(&self.params)
    }

    pub fn layer(&self, l: usize) -> LayerView<'_> {
        let lay = self.layout[l];
        let p = &self.params;
        LayerView {
            in_dim: lay.in_dim,
            out_dim: lay.out_dim,
            weight: &p[lay.weight..lay.weight + lay.in_dim * lay.out_dim],
            bias: &p[lay.bias..lay.bias + lay.out_dim],
            gain: lay.norm.map(|(g, _)| &p[g..g + lay.out_dim]),
            offset: lay.norm.map(|(_, o)| &p[o..o + lay.out_dim]),
            relu: lay.relu,
            residual: lay.residual,
        }
    }

    pub fn layer_mut(&mut self, l: usize) -> LayerParams<'_> {
        let lay = self.layout[l];
        let (head, tail) = self.params.split_at_mut(lay.bias);
        let weight = &mut head[lay.weight..];
        let (bias, rest) = tail.split_at_mut(lay.out_dim);
        let (gain, offset) = match lay.norm {
            Some(_) => {
                let (g, rest) = rest.split_at_mut(lay.out_dim);
                (Some(g), Some(&mut rest[..lay.out_dim]))
            }
            None => (None, None),
        };
        LayerParams {
            in_dim: lay.in_dim,
            out_dim: lay.out_dim,
            weight,
            bias,
            gain,
            offset,
        }
    }

    fn check_input(&self, batch: &Matrix) -> Result<()> {
        if batch.cols() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.spec.input_dim,
                got: batch.cols(),
            });
        }
        if batch.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    /// Forward pass without retaining activations.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        self.check_input(batch)?;
        let mut x = batch.clone();
        for lay in &self.layout {
            let (y, _, _) = self.layer_forward(lay, &x);
            x = y;
        }
        Ok(x)
    }

    /// Forward pass retaining what [`backward`](Self::backward) needs.
    pub fn forward(&self, batch: &Matrix) -> Result<(Matrix, Tape)> {
        self.check_input(batch)?;
        let mut inputs = Vec::with_capacity(self.layout.len() + 1);
        let mut pre = Vec::with_capacity(self.layout.len());
        let mut normed = Vec::with_capacity(self.layout.len());
        inputs.push(batch.clone());
        for lay in &self.layout {
            let (y, z, n) = self.layer_forward(lay, inputs.last().expect("non-empty"));
            pre.push(z);
            normed.push(n);
            inputs.push(y);
        }
        let out = inputs.pop().expect("output");
        Ok((
            out,
            Tape {
                spec: self.spec,
                rows: batch.rows(),
                inputs,
                pre,
                normed,
            },
        ))
    }

    fn layer_forward(
        &self,
        lay: &Layout,
        x: &Matrix,
    ) -> (Matrix, Matrix, Option<(Matrix, Vec<f32>)>) {
        let n = x.rows();
        let (i, o) = (lay.in_dim, lay.out_dim);
        let w = &self.params[lay.weight..lay.weight + i * o];
        let b = &self.params[lay.bias..lay.bias + o];
        let mut z = Matrix::zeros(n, o);
        for r in 0..n {
            z.row_mut(r).copy_from_slice(b);
        }
        gemm(
            n,
            i,
            o,
            x.data(),
            (i as isize, 1),
            w,
            (o as isize, 1),
            z.data_mut(),
            true,
        );
        if !lay.relu {
            return (z.clone(), z, None);
        }
        let mut u = z.clone();
        for v in u.data_mut() {
            *v = v.max(0.0);
        }
        if lay.residual {
            for (uv, xv) in u.data_mut().iter_mut().zip(x.data()) {
                *uv += xv;
            }
        }
        let Some((g, off)) = lay.norm else {
            return (u, z, None);
        };
        let gain = &self.params[g..g + o];
        let offset = &self.params[off..off + o];
        let mut inv_std = vec![0.0f32; n];
        for r in 0..n {
            let row = u.row_mut(r);
            let mean = row.iter().sum::<f32>() / o as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / o as f32;
            let is = 1.0 / libm::sqrtf(var + LAYER_NORM_EPS);
            for v in row.iter_mut() {
                *v = (*v - mean) * is;
            }
            inv_std[r] = is;
        }
        let mut y = u.clone();
        for r in 0..n {
            for ((v, gk), bk) in y.row_mut(r).iter_mut().zip(gain).zip(offset) {
                *v = *v * gk + bk;
            }
        }
        (y, z, Some((u, inv_std)))
    }

    fn check_tape(&self, tape: &Tape, output_grads: &Matrix) -> Result<()> {
        if tape.spec != self.spec
            || tape.inputs.len() != self.layout.len()
            || output_grads.rows() != tape.rows
            || output_grads.cols() != self.spec.output_dim
        {
            return Err(Error::StaleTape);
        }
        Ok(())
    }

    /// Exact gradients of `⟨outputs, output_grads⟩` with respect to every
    /// parameter and every input entry.
    pub fn backward(&self, tape: &Tape, output_grads: &Matrix) -> Result<Gradients> {
        self.check_tape(tape, output_grads)?;
        let mut grads = vec![0.0f32; self.params.len()];
        let input = self.backprop(tape, output_grads, Some(&mut grads));
        Ok(Gradients {
            params: grads,
            input,
        })
    }

    /// Input gradients only; parameter gradients are skipped.
    pub fn input_gradients(&self, tape: &Tape, output_grads: &Matrix) -> Result<Matrix> {
        self.check_tape(tape, output_grads)?;
        Ok(self.backprop(tape, output_grads, None))
    }

    fn backprop(
        &self,
        tape: &Tape,
        output_grads: &Matrix,
        mut grads: Option<&mut Vec<f32>>,
    ) -> Matrix {
        let n = tape.rows;
        let mut dy = output_grads.clone();
        for (l, lay) in self.layout.iter().enumerate().rev() {
            let (i, o) = (lay.in_dim, lay.out_dim);
            let x = &tape.inputs[l];
            let z = &tape.pre[l];
            // dy -> du through layer norm.
            let mut du = dy;
            if let (Some((g, off)), Some((xhat, inv_std))) = (lay.norm, &tape.normed[l]) {
                if let Some(gr) = grads.as_deref_mut() {
                    for r in 0..n {
                        let dyr = du.row(r);
                        let xr = xhat.row(r);
                        for k in 0..o {
                            gr[g + k] += dyr[k] * xr[k];
                            gr[off + k] += dyr[k];
                        }
                    }
                }
                let gain = &self.params[g..g + o];
                for r in 0..n {
                    let xr = xhat.row(r);
                    let row = du.row_mut(r);
                    let mut mean_d = 0.0f32;
                    let mut mean_dx = 0.0f32;
                    for k in 0..o {
                        row[k] *= gain[k];
                        mean_d += row[k];
                        mean_dx += row[k] * xr[k];
                    }
                    mean_d /= o as f32;
                    mean_dx /= o as f32;
                    let is = inv_std[r];
                    for k in 0..o {
                        row[k] = is * (row[k] - mean_d - xr[k] * mean_dx);
                    }
                }
            }
            // du -> dz through relu; residual path flows straight to dx.
            let mut dz = du.clone();
            if lay.relu {
                for (d, zv) in dz.data_mut().iter_mut().zip(z.data()) {
                    if *zv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            if let Some(gr) = grads.as_deref_mut() {
                gemm(
                    i,
                    n,
                    o,
                    x.data(),
                    (1, i as isize),
                    dz.data(),
                    (o as isize, 1),
                    &mut gr[lay.weight..lay.weight + i * o],
                    true,
                );
                let gb = &mut gr[lay.bias..lay.bias + o];
                for r in 0..n {
                    for (g, d) in gb.iter_mut().zip(dz.row(r)) {
                        *g += d;
                    }
                }
            }
            let w = &self.params[lay.weight..lay.weight + i * o];
            let mut dx = if lay.residual {
                du
            } else {
                Matrix::zeros(n, i)
            };
            gemm(
                n,
                o,
                i,
                dz.data(),
                (o as isize, 1),
                w,
                (1, o as isize),
                dx.data_mut(),
                lay.residual,
            );
            dy = dx;
        }
        dy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed);
        Matrix::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
    }

    #[test]
    fn depth_one_is_invalid() {
        assert!(matches!(
            Mlp::new(MlpSpec::new(3, 1, 1, 8), 0),
            Err(Error::InvalidSpec(_))
        ));
        assert!(matches!(
            Mlp::new(MlpSpec::new(3, 1, 3, 0), 0),
            Err(Error::InvalidSpec(_))
        ));
    }

    #[test]
    fn same_seed_same_params() {
        let s = MlpSpec::new(6, 2, 4, 16);
        assert_eq!(
            Mlp::new(s, 0).unwrap().params(),
            Mlp::new(s, 0).unwrap().params()
        );
        assert_ne!(
            Mlp::new(s, 0).unwrap().params(),
            Mlp::new(s, 1).unwrap().params()
        );
    }

    #[test]
    fn paper_architecture_shape() {
        let mut m = Mlp::new(MlpSpec::new(6, 1, 10, 512), 0).unwrap();
        assert_eq!(m.num_layers(), 10);
        let square = (0..10)
            .filter(|&l| {
                let p = m.layer_mut(l);
                p.in_dim == 512 && p.out_dim == 512
            })
            .count();
        assert_eq!(square, 8);
        // Hidden layers are residual, the first and last are not.
        let res: Vec<bool> = m.layout.iter().map(|l| l.residual).collect();
        assert!(!res[0] && !res[9] && res[1..9].iter().all(|&r| r));
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut spec = MlpSpec::new(5, 3, 4, 8);
        spec.layer_norm = false;
        let mut m = Mlp::new(spec, 1).unwrap();
        m.params_mut().fill(0.0);
        let out = m.predict(&random_batch(7, 5, 2)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let mut spec = MlpSpec::new(4, 4, 2, 4);
        spec.layer_norm = false;
        let mut m = Mlp::new(spec, 0).unwrap();
        for l in 0..2 {
            let p = m.layer_mut(l);
            p.weight.fill(0.0);
            for k in 0..4 {
                p.weight[k * 4 + k] = 1.0;
            }
            p.bias.fill(0.0);
        }
        // Non-negative input survives the hidden ReLU unchanged.
        let mut x = random_batch(6, 4, 3);
        for v in x.data_mut() {
            *v = v.abs();
        }
        assert_eq!(m.predict(&x).unwrap(), x);
    }

    #[test]
    fn residual_blocks_are_identity_when_zeroed() {
        let mut spec = MlpSpec::new(3, 2, 5, 6);
        spec.layer_norm = false;
        let mut m = Mlp::new(spec, 4).unwrap();
        for l in 1..4 {
            let p = m.layer_mut(l);
            p.weight.fill(0.0);
            p.bias.fill(0.0);
        }
        let (_, tape) = m.forward(&random_batch(5, 3, 5)).unwrap();
        let first = tape.layer_output(0).unwrap();
        for l in 1..4 {
            assert_eq!(tape.layer_output(l).unwrap(), first);
        }
    }

    #[test]
    fn rows_are_independent() {
        let m = Mlp::new(MlpSpec::new(6, 2, 4, 16), 9).unwrap();
        let batch = random_batch(9, 6, 10);
        let all = m.predict(&batch).unwrap();
        assert_eq!(all.rows(), 9);
        for r in 0..9 {
            let one = m.predict(&batch.slice_rows(r, r + 1)).unwrap();
            for c in 0..2 {
                assert!(
                    (one.get(0, c) - all.get(r, c)).abs() <= 1e-6 * (1.0 + all.get(r, c).abs())
                );
            }
        }
    }

    #[test]
    fn layer_norm_statistics() {
        let m = Mlp::new(MlpSpec::new(6, 2, 4, 32), 2).unwrap();
        let (_, tape) = m.forward(&random_batch(16, 6, 11)).unwrap();
        for l in 0..3 {
            let xhat = tape.normalized(l).unwrap();
            for r in 0..16 {
                let row = xhat.row(r);
                let mean = row.iter().sum::<f32>() / 32.0;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / 32.0;
                assert!(mean.abs() < 1e-5, "mean {mean}");
                assert!((var - 1.0).abs() < 1e-3, "var {var}");
            }
        }
    }

    #[test]
    fn zero_output_grads_give_zero_gradients() {
        let m = Mlp::new(MlpSpec::new(6, 2, 4, 16), 3).unwrap();
        let (out, tape) = m.forward(&random_batch(8, 6, 1)).unwrap();
        let g = m
            .backward(&tape, &Matrix::zeros(out.rows(), out.cols()))
            .unwrap();
        assert!(g.params.iter().all(|&v| v == 0.0));
        assert!(g.input.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let m = Mlp::new(MlpSpec::new(6, 2, 3, 8), 3).unwrap();
        assert!(matches!(
            m.forward(&random_batch(2, 5, 0)),
            Err(Error::ShapeMismatch { .. })
        ));
        let mut bad = random_batch(2, 6, 0);
        bad.data_mut()[3] = f32::NAN;
        assert_eq!(m.forward(&bad).unwrap_err(), Error::NonFiniteInput);
        let (_, tape) = m.forward(&random_batch(2, 6, 0)).unwrap();
        assert_eq!(
            m.backward(&tape, &Matrix::zeros(3, 2)).unwrap_err(),
            Error::StaleTape
        );
        let other = Mlp::new(MlpSpec::new(6, 2, 4, 8), 3).unwrap();
        assert_eq!(
            other.backward(&tape, &Matrix::zeros(2, 2)).unwrap_err(),
            Error::StaleTape
        );
    }

    #[test]
    fn forward_is_deterministic() {
        let m = Mlp::new(MlpSpec::new(6, 2, 4, 16), 3).unwrap();
        let b = random_batch(64, 6, 8);
        let (o1, t1) = m.forward(&b).unwrap();
        let (o2, t2) = m.forward(&b).unwrap();
        assert_eq!(o1, o2);
        let g = Matrix::from_vec(64, 2, vec![0.5; 128]);
        assert_eq!(m.backward(&t1, &g).unwrap(), m.backward(&t2, &g).unwrap());
    }
}

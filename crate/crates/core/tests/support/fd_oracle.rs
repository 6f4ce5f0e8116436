//! Independent f64 reference network used as a finite-difference oracle
//! for the f32 engine's gradients.

#![allow(dead_code)]

use prif_core::nn::{Matrix, Mlp, MlpSpec};
use prif_core::rng::{seeded, Rng};

pub const FD_STEP: f64 = 1e-3;
pub const REL_TOL: f64 = 1e-2;
pub const ABS_TOL: f64 = 1e-4;
const LN_EPS: f64 = 1e-5;

#[derive(Clone)]
struct RefLayer {
    inp: usize,
    out: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    norm: Option<(Vec<f64>, Vec<f64>)>,
    relu: bool,
    residual: bool,
}

#[derive(Clone)]
pub struct RefNet {
    layers: Vec<RefLayer>,
}

impl RefNet {
    pub fn from_mlp(m: &Mlp) -> Self {
        let layers = (0..m.num_layers())
            .map(|l| {
                let v = m.layer(l);
                let cv = |s: &[f32]| s.iter().map(|&x| x as f64).collect::<Vec<_>>();
                RefLayer {
                    inp: v.in_dim,
                    out: v.out_dim,
                    w: cv(v.weight),
                    b: cv(v.bias),
                    norm: v.gain.map(|g| (cv(g), cv(v.offset.unwrap()))),
                    relu: v.relu,
                    residual: v.residual,
                }
            })
            .collect();
        Self { layers }
    }

    /// Flat parameter slots in the engine's layout order.
    fn slot(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            for buf in [&mut l.w, &mut l.b] {
                if idx < buf.len() {
                    return &mut buf[idx];
                }
                idx -= buf.len();
            }
            if let Some((g, o)) = &mut l.norm {
                for buf in [g, o] {
                    if idx < buf.len() {
                        return &mut buf[idx];
                    }
                    idx -= buf.len();
                }
            }
        }
        panic!("parameter index out of range")
    }

    /// Output of one row plus the ReLU sign pattern.
    pub fn forward_row(&self, x: &[f64]) -> (Vec<f64>, Vec<bool>) {
        let mut cur = x.to_vec();
        let mut pattern = Vec::new();
        for l in &self.layers {
            let mut z = l.b.clone();
            for (i, xi) in cur.iter().enumerate() {
                for j in 0..l.out {
                    z[j] += xi * l.w[i * l.out + j];
                }
            }
            if l.relu {
                for v in &mut z {
                    pattern.push(*v > 0.0);
                    *v = v.max(0.0);
                }
            }
            if l.residual {
                for (v, xi) in z.iter_mut().zip(&cur) {
                    *v += xi;
                }
            }
            if let Some((g, o)) = &l.norm {
                let n = z.len() as f64;
                let mean = z.iter().sum::<f64>() / n;
                let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                let inv = 1.0 / (var + LN_EPS).sqrt();
                for j in 0..z.len() {
                    z[j] = g[j] * (z[j] - mean) * inv + o[j];
                }
            }
            debug_assert_eq!(z.len(), l.out);
            let _ = l.inp;
            cur = z;
        }
        (cur, pattern)
    }

    /// `Σ_rows ⟨out, g⟩` and the concatenated ReLU pattern.
    pub fn objective(&self, x: &[Vec<f64>], g: &[Vec<f64>]) -> (f64, Vec<bool>) {
        let mut total = 0.0;
        let mut pat = Vec::new();
        for (xr, gr) in x.iter().zip(g) {
            let (o, p) = self.forward_row(xr);
            total += o.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
            pat.extend(p);
        }
        (total, pat)
    }
}

#[derive(Debug, Default, Clone)]
pub struct FdReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub failures: Vec<String>,
    pub max_rel: f64,
}

impl FdReport {
    fn compare(&mut self, what: &str, analytic: f64, fd: f64) {
        self.checked += 1;
        let err = (analytic - fd).abs();
        let rel = err / fd.abs().max(1e-12);
        if err > ABS_TOL {
            self.max_rel = self.max_rel.max(rel);
        }
        if err > ABS_TOL + REL_TOL * fd.abs() {
            self.failures
                .push(format!("{what}: analytic {analytic:.6e} fd {fd:.6e}"));
        }
    }

    pub fn merge(&mut self, o: FdReport) {
        self.checked += o.checked;
        self.skipped_kinks += o.skipped_kinks;
        self.failures.extend(o.failures);
        self.max_rel = self.max_rel.max(o.max_rel);
    }
}

fn central<F: Fn(&mut RefNet, &mut Vec<Vec<f64>>, f64)>(
    net: &RefNet,
    x: &[Vec<f64>],
    g: &[Vec<f64>],
    base_pattern: &[bool],
    perturb: F,
) -> Option<f64> {
    let eval = |sign: f64| {
        let mut n = net.clone();
        let mut xs = x.to_vec();
        perturb(&mut n, &mut xs, sign * FD_STEP);
        n.objective(&xs, g)
    };
    let (fp, pp) = eval(1.0);
    let (fm, pm) = eval(-1.0);
    if pp != base_pattern || pm != base_pattern {
        return None;
    }
    Some((fp - fm) / (2.0 * FD_STEP))
}

/// Checks every parameter and input gradient of `mlp` on `input`.
pub fn check_gradients(mlp: &Mlp, input: &Matrix, seed: u64) -> FdReport {
    let mut rng = seeded(seed);
    let spec = *mlp.spec();
    let rows = input.rows();
    let gmat = Matrix::from_vec(
        rows,
        spec.output_dim,
        (0..rows * spec.output_dim)
            .map(|_| rng.random_range(-1.0f32..1.0))
            .collect(),
    );
    let (_, tape) = mlp.forward(input).unwrap();
    let grads = mlp.backward(&tape, &gmat).unwrap();

    let net = RefNet::from_mlp(mlp);
    let x: Vec<Vec<f64>> = (0..rows)
        .map(|r| input.row(r).iter().map(|&v| v as f64).collect())
        .collect();
    let g: Vec<Vec<f64>> = (0..rows)
        .map(|r| gmat.row(r).iter().map(|&v| v as f64).collect())
        .collect();
    let (_, base) = net.objective(&x, &g);

    let mut rep = FdReport::default();
    for (i, &a) in grads.params.iter().enumerate() {
        match central(&net, &x, &g, &base, |n, _, h| *n.slot(i) += h) {
            Some(fd) => rep.compare(&format!("param {i}"), a as f64, fd),
            None => rep.skipped_kinks += 1,
        }
    }
    for r in 0..rows {
        for c in 0..spec.input_dim {
            match central(&net, &x, &g, &base, |_, xs, h| xs[r][c] += h) {
                Some(fd) => rep.compare(
                    &format!("input ({r},{c})"),
                    grads.input.get(r, c) as f64,
                    fd,
                ),
                None => rep.skipped_kinks += 1,
            }
        }
    }
    rep
}

/// Random spec: depth 2..=5, width 4..=32.
pub fn random_spec<R: Rng>(rng: &mut R) -> MlpSpec {
    MlpSpec {
        input_dim: rng.random_range(1..=8),
        output_dim: rng.random_range(1..=3),
        depth: rng.random_range(2..=5),
        width: rng.random_range(4..=32),
        residual: rng.random_bool(0.7),
        layer_norm: rng.random_bool(0.7),
    }
}

/// Runs `trials` randomized networks and merges their reports.
pub fn randomized_suite(trials: usize, seed: u64) -> FdReport {
    let mut rng = seeded(seed);
    let mut rep = FdReport::default();
    for t in 0..trials {
        let spec = random_spec(&mut rng);
        let mut mlp = Mlp::new(spec, rng.random()).unwrap();
        for p in mlp.params_mut() {
            *p += rng.random_range(-0.1f32..0.1);
        }
        let rows = rng.random_range(1..=4);
        let input = Matrix::from_vec(
            rows,
            spec.input_dim,
            (0..rows * spec.input_dim)
                .map(|_| rng.random_range(-1.0f32..1.0))
                .collect(),
        );
        let mut r = check_gradients(&mlp, &input, t as u64);
        for f in &mut r.failures {
            *f = format!("trial {t} {spec:?}: {f}");
        }
        rep.merge(r);
    }
    rep
}

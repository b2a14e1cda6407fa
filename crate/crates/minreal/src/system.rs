//! State-space systems, rollout simulation, and synthetic data generation.
//!
//! All randomness is derived from a single `u64` seed through fixed per-stream
//! keys, so generation is reproducible and independent rollouts can be
//! simulated in any order (or in parallel) without changing the result.

use std::path::Path;

use nalgebra::{DMatrix, DMatrixView};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ioutil;
use crate::numeric;

/// Discrete-time state-space tuple `(A, B, C, D)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n_x = a.nrows();
        if a.ncols() != n_x {
            return Err(Error::dim("A must be square"));
        }
        if b.nrows() != n_x {
            return Err(Error::dim("B must have n_x rows"));
        }
        if c.ncols() != n_x {
            return Err(Error::dim("C must have n_x columns"));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::dim("D must be n_y x n_u"));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("entries of {name}")));
            }
        }
        Ok(LinearSystem { a, b, c, d })
    }

    /// Zero system of the given dimensions (order may be zero).
    pub fn zero(n_x: usize, n_u: usize, n_y: usize) -> Self {
        LinearSystem {
            a: DMatrix::zeros(n_x, n_x),
            b: DMatrix::zeros(n_x, n_u),
            c: DMatrix::zeros(n_y, n_x),
            d: DMatrix::zeros(n_y, n_u),
        }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(
            format!(
                "MINREAL-SYSTEM v1\nn_x={} n_u={} n_y={}\n---\n",
                self.n_x(),
                self.n_u(),
                self.n_y()
            )
            .as_bytes(),
        );
        for m in [&self.a, &self.b, &self.c, &self.d] {
            ioutil::push_f64_slice(&mut buf, m.transpose().iter().copied()); // row-major
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (lines, payload) = ioutil::split_header(bytes)?;
        if lines.first().map(String::as_str) != Some("MINREAL-SYSTEM v1") {
            return Err(Error::Format("bad system file magic".into()));
        }
        let fields = ioutil::header_fields(lines.get(1).map(String::as_str).unwrap_or(""));
        let n_x = ioutil::field_as_u64(&fields, "n_x")? as usize;
        let n_u = ioutil::field_as_u64(&fields, "n_u")? as usize;
        let n_y = ioutil::field_as_u64(&fields, "n_y")? as usize;
        let mut rd = ioutil::ByteReader::new(payload);
        let mut read_mat = |r: usize, c: usize| -> Result<DMatrix<f64>> {
            let mut m = DMatrix::zeros(r, c);
            for i in 0..r {
                for j in 0..c {
                    m[(i, j)] = rd.read_f64()?;
                }
            }
            Ok(m)
        };
        let a = read_mat(n_x, n_x)?;
        let b = read_mat(n_x, n_u)?;
        let c = read_mat(n_y, n_x)?;
        let d = read_mat(n_y, n_u)?;
        LinearSystem::new(a, b, c, d)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        ioutil::atomic_write(path, &self.to_bytes())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Kind of ground-truth system the generator draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemKind {
    /// Symmetric `A` with Normal entries: real, diagonalizable.
    DiagonalizableSymmetric,
    /// A single Jordan block: defective, not diagonalizable.
    NonDiagonalizable,
}

impl std::str::FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonalizable-symmetric" => Ok(SystemKind::DiagonalizableSymmetric),
            "non-diagonalizable" => Ok(SystemKind::NonDiagonalizable),
            other => Err(Error::invalid(format!("unknown system kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for SystemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemKind::DiagonalizableSymmetric => write!(f, "diagonalizable-symmetric"),
            SystemKind::NonDiagonalizable => write!(f, "non-diagonalizable"),
        }
    }
}

/// Configuration for the synthetic data generator.
#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub n_x_star: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub n_rollouts: usize,
    pub l: usize,
    pub noise_var: f64,
    pub system_kind: SystemKind,
    pub spectral_radius_cap: f64,
    pub seed: u64,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_x_star == 0 || self.n_u == 0 || self.n_y == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        if self.n_rollouts == 0 {
            return Err(Error::invalid("need at least one rollout"));
        }
        if self.noise_var < 0.0 || !self.noise_var.is_finite() {
            return Err(Error::invalid("noise_var must be finite and >= 0"));
        }
        if !(self.spectral_radius_cap > 0.0 && self.spectral_radius_cap <= 1.0) {
            return Err(Error::invalid("spectral_radius_cap must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// `N` independent input/output trajectories of length `T = 2(L+1)`.
///
/// `inputs[i]` is `n_u × T` with column `t` holding `u_{t+1}`; `outputs[i]`
/// is `n_y × T` likewise. Immutable after creation.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch {
    inputs: Vec<DMatrix<f64>>,
    outputs: Vec<DMatrix<f64>>,
    l: usize,
    seed: u64,
    noise_var: f64,
}

impl RolloutBatch {
    pub fn new(
        inputs: Vec<DMatrix<f64>>,
        outputs: Vec<DMatrix<f64>>,
        l: usize,
        seed: u64,
        noise_var: f64,
    ) -> Result<Self> {
        if inputs.is_empty() || inputs.len() != outputs.len() {
            return Err(Error::dim("inputs and outputs must share a positive rollout count"));
        }
        let t_len = 2 * (l + 1);
        let n_u = inputs[0].nrows();
        let n_y = outputs[0].nrows();
        for (u, y) in inputs.iter().zip(&outputs) {
            if u.nrows() != n_u || u.ncols() != t_len || y.nrows() != n_y || y.ncols() != t_len {
                return Err(Error::dim(format!(
                    "every rollout must be ({n_u} x {t_len}) inputs and ({n_y} x {t_len}) outputs"
                )));
            }
        }
        Ok(RolloutBatch { inputs, outputs, l, seed, noise_var })
    }

    pub fn n_rollouts(&self) -> usize {
        self.inputs.len()
    }

    pub fn t_len(&self) -> usize {
        2 * (self.l + 1)
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n_u(&self) -> usize {
        self.inputs[0].nrows()
    }

    pub fn n_y(&self) -> usize {
        self.outputs[0].nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn input(&self, i: usize) -> &DMatrix<f64> {
        &self.inputs[i]
    }

    pub fn output(&self, i: usize) -> &DMatrix<f64> {
        &self.outputs[i]
    }

    /// Batch restricted to the first `n` rollouts (shared prefix, so sweeps
    /// over the sample count stay coupled).
    pub fn prefix(&self, n: usize) -> Result<RolloutBatch> {
        if n == 0 || n > self.n_rollouts() {
            return Err(Error::invalid(format!(
                "prefix length {n} out of range 1..={}",
                self.n_rollouts()
            )));
        }
        Ok(RolloutBatch {
            inputs: self.inputs[..n].to_vec(),
            outputs: self.outputs[..n].to_vec(),
            l: self.l,
            seed: self.seed,
            noise_var: self.noise_var,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(
            format!(
                "MINREAL-BATCH v1\nn={} t={} n_u={} n_y={} l={}\nseed={} noise_var={}\n---\n",
                self.n_rollouts(),
                self.t_len(),
                self.n_u(),
                self.n_y(),
                self.l,
                self.seed,
                self.noise_var
            )
            .as_bytes(),
        );
        // Payload: inputs then outputs; rollout-major, time-major, component.
        for u in &self.inputs {
            ioutil::push_f64_slice(&mut buf, u.iter().copied()); // column-major = time-major
        }
        for y in &self.outputs {
            ioutil::push_f64_slice(&mut buf, y.iter().copied());
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (lines, payload) = ioutil::split_header(bytes)?;
        if lines.first().map(String::as_str) != Some("MINREAL-BATCH v1") {
            return Err(Error::Format("bad batch file magic".into()));
        }
        let mut fields = Vec::new();
        for line in lines.iter().skip(1) {
            fields.extend(ioutil::header_fields(line));
        }
        let n = ioutil::field_as_u64(&fields, "n")? as usize;
        let t_len = ioutil::field_as_u64(&fields, "t")? as usize;
        let n_u = ioutil::field_as_u64(&fields, "n_u")? as usize;
        let n_y = ioutil::field_as_u64(&fields, "n_y")? as usize;
        let l = ioutil::field_as_u64(&fields, "l")? as usize;
        let seed = ioutil::field_as_u64(&fields, "seed")?;
        let noise_var = ioutil::field_as_f64(&fields, "noise_var")?;
        if t_len != 2 * (l + 1) {
            return Err(Error::Format("batch header: t != 2(l+1)".into()));
        }
        let mut rd = ioutil::ByteReader::new(payload);
        let expected = n * t_len * (n_u + n_y) * 8;
        if rd.remaining() != expected {
            return Err(Error::Format(format!(
                "batch payload holds {} bytes, expected {expected}",
                rd.remaining()
            )));
        }
        let mut read_rollouts = |rows: usize| -> Result<Vec<DMatrix<f64>>> {
            let mut out = Vec::with_capacity(n);
            for _ in 0..n {
                let mut m = DMatrix::zeros(rows, t_len);
                for t in 0..t_len {
                    for r in 0..rows {
                        m[(r, t)] = rd.read_f64()?;
                    }
                }
                out.push(m);
            }
            Ok(out)
        };
        let inputs = read_rollouts(n_u)?;
        let outputs = read_rollouts(n_y)?;
        RolloutBatch::new(inputs, outputs, l, seed, noise_var)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        ioutil::atomic_write(path, &self.to_bytes())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Human-readable export: one CSV row per `(rollout, t)` with all input
    /// and output components.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("rollout,t");
        for k in 0..self.n_u() {
            s.push_str(&format!(",u_{k}"));
        }
        for k in 0..self.n_y() {
            s.push_str(&format!(",y_{k}"));
        }
        s.push('\n');
        for i in 0..self.n_rollouts() {
            for t in 0..self.t_len() {
                s.push_str(&format!("{i},{}", t + 1));
                for k in 0..self.n_u() {
                    s.push_str(&format!(",{}", self.inputs[i][(k, t)]));
                }
                for k in 0..self.n_y() {
                    s.push_str(&format!(",{}", self.outputs[i][(k, t)]));
                }
                s.push('\n');
            }
        }
        ioutil::atomic_write(path, s.as_bytes())
    }
}

// Stream tags: one ChaCha stream per concern so the system draw is independent
// of horizon and rollout count, and per-rollout streams are schedule-free.
const STREAM_SYSTEM: u64 = 0;
const STREAM_INPUT: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_INIT: u64 = 3;

/// Derive an independent stream key from `(seed, tag, index)` (splitmix64).
pub fn derive_stream(seed: u64, tag: u64, index: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ index.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn init_stream_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_stream(seed, STREAM_INIT, 0))
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal) * std)
}

/// Simulate rollouts of `sys` under the given inputs: `x_1 = 0`,
/// `x_{t+1} = A x_t + B u_t`, `y_t = C x_t + D u_t + noise`, with i.i.d.
/// zero-mean Gaussian output noise of per-entry variance `noise_var`.
///
/// Noise for rollout `i` comes from a stream keyed by `(seed, i)`, so the
/// result does not depend on simulation order.
pub fn simulate(sys: &LinearSystem, inputs: &[DMatrix<f64>], noise_var: f64, seed: u64) -> Result<RolloutBatch> {
    if inputs.is_empty() {
        return Err(Error::invalid("need at least one rollout"));
    }
    if noise_var < 0.0 {
        return Err(Error::invalid("noise_var must be >= 0"));
    }
    let t_len = inputs[0].ncols();
    if t_len < 2 || t_len % 2 != 0 {
        return Err(Error::dim("trajectory length must be even and >= 2"));
    }
    let l = t_len / 2 - 1;
    let noise_std = noise_var.sqrt();
    let mut outputs = Vec::with_capacity(inputs.len());
    for (i, u) in inputs.iter().enumerate() {
        if u.nrows() != sys.n_u() || u.ncols() != t_len {
            return Err(Error::dim(format!("rollout {i} inputs must be {} x {t_len}", sys.n_u())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_stream(seed, STREAM_NOISE, i as u64));
        let mut x = nalgebra::DVector::<f64>::zeros(sys.n_x());
        let mut y = DMatrix::zeros(sys.n_y(), t_len);
        for t in 0..t_len {
            let u_t = u.column(t);
            let mut y_t = sys.c() * &x + sys.d() * u_t;
            if noise_var > 0.0 {
                for r in 0..y_t.len() {
                    y_t[r] += rng.sample::<f64, _>(StandardNormal) * noise_std;
                }
            }
            y.set_column(t, &y_t);
            x = sys.a() * x + sys.b() * u_t;
        }
        outputs.push(y);
    }
    RolloutBatch::new(inputs.to_vec(), outputs, l, seed, noise_var)
}

/// Draw a ground-truth system and a batch of rollouts.
///
/// * `diagonalizable-symmetric`: `A = (M + Mᵀ)/2` with standard Normal `M`,
///   then rescaled to spectral radius `0.95 · spectral_radius_cap`; `B`, `C`
///   standard Normal; `D = 0`.
/// * `non-diagonalizable`: a single Jordan block with eigenvalue `0.5` and
///   unit superdiagonal, rescaled by the same rule.
///
/// Inputs are `N(0, I/n_u)`; outputs come from [`simulate`]. The system draw
/// uses its own stream, so the same seed yields the same system at any
/// horizon or rollout count.
pub fn generate(cfg: &GenConfig) -> Result<(LinearSystem, RolloutBatch)> {
    cfg.validate()?;
    let mut rng_sys = ChaCha8Rng::seed_from_u64(derive_stream(cfg.seed, STREAM_SYSTEM, 0));
    let n = cfg.n_x_star;
    let target_radius = 0.95 * cfg.spectral_radius_cap;

    let a = match cfg.system_kind {
        SystemKind::DiagonalizableSymmetric => {
            let m = normal_matrix(&mut rng_sys, n, n, 1.0);
            let sym = (&m + m.transpose()) * 0.5;
            let radius = numeric::spectral_radius(&sym);
            if radius == 0.0 {
                return Err(Error::invalid("degenerate draw: zero spectral radius"));
            }
            sym * (target_radius / radius)
        }
        SystemKind::NonDiagonalizable => {
            let mut j = DMatrix::zeros(n, n);
            for i in 0..n {
                j[(i, i)] = 0.5;
                if i + 1 < n {
                    j[(i, i + 1)] = 1.0;
                }
            }
            j * (target_radius / 0.5)
        }
    };
    let b = normal_matrix(&mut rng_sys, n, cfg.n_u, 1.0);
    let c = normal_matrix(&mut rng_sys, cfg.n_y, n, 1.0);
    let d = DMatrix::zeros(cfg.n_y, cfg.n_u);
    let sys = LinearSystem::new(a, b, c, d)?;

    let t_len = 2 * (cfg.l + 1);
    let input_std = (1.0 / cfg.n_u as f64).sqrt();
    let inputs: Vec<DMatrix<f64>> = (0..cfg.n_rollouts)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_stream(cfg.seed, STREAM_INPUT, i as u64));
            normal_matrix(&mut rng, cfg.n_u, t_len, input_std)
        })
        .collect();

    let batch = simulate(&sys, &inputs, cfg.noise_var, cfg.seed)?;
    Ok((sys, batch))
}

/// Regression views shared by the solvers.
///
/// The final-output losses regress `y_T` on the first `2L+1` inputs with the
/// time axis reversed, so that Markov block `K_t` multiplies `u_{T-t}`. That
/// pairing is fixed here, once, for every consumer.
#[derive(Clone, Debug)]
pub struct StackedTargets {
    /// `n_y × N`; column `i` is the final output `y_T` of rollout `i`.
    pub last_outputs: DMatrix<f64>,
    /// `(2L+1)·n_u × N`; column `i` stacks `[u_{2L+1}; u_{2L}; …; u_1]`.
    pub rev_inputs: DMatrix<f64>,
    l: usize,
    n_u: usize,
    n_y: usize,
}

impl StackedTargets {
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n_u(&self) -> usize {
        self.n_u
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn n_rollouts(&self) -> usize {
        self.last_outputs.ncols()
    }
}

/// Build the stacked regression views of a batch.
///
/// Forward-ordered prefixes and full trajectories stay accessible through the
/// batch itself ([`input_prefix`], [`RolloutBatch::input`],
/// [`RolloutBatch::output`]); this struct adds the final-output targets and
/// the reversed input stacks.
pub fn stack_targets(batch: &RolloutBatch) -> StackedTargets {
    let (n, t_len) = (batch.n_rollouts(), batch.t_len());
    let (n_u, n_y, l) = (batch.n_u(), batch.n_y(), batch.l());
    let mut last_outputs = DMatrix::zeros(n_y, n);
    let mut rev_inputs = DMatrix::zeros((2 * l + 1) * n_u, n);
    for i in 0..n {
        last_outputs.set_column(i, &batch.output(i).column(t_len - 1));
        for t in 0..(2 * l + 1) {
            // Block t (so Markov block K_{t+1}) holds u_{T-(t+1)}.
            let src = batch.input(i).column(t_len - t - 2);
            rev_inputs.view_mut((t * n_u, i), (n_u, 1)).copy_from(&src);
        }
    }
    StackedTargets { last_outputs, rev_inputs, l, n_u, n_y }
}

/// Forward-ordered input prefix `(u_1 .. u_{2L+1})` of rollout `i`, viewed
/// directly on the batch storage.
pub fn input_prefix(batch: &RolloutBatch, i: usize) -> DMatrixView<'_, f64> {
    batch.input(i).view((0, 0), (batch.n_u(), 2 * batch.l() + 1))
}

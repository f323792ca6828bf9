//! Single-layer LSTM binary classifier over frozen word embeddings.
//!
//! Cell equations, with `σ` the logistic function and `∘` the element-wise
//! product:
//!
//! ```text
//! f_t = σ(W_f x_t + U_f h_{t-1} + b_f)
//! i_t = σ(W_i x_t + U_i h_{t-1} + b_i)
//! o_t = σ(W_o x_t + U_o h_{t-1} + b_o)
//! c_t = f_t ∘ c_{t-1} + i_t ∘ tanh(W_c x_t + U_c h_{t-1} + b_c)
//! h_t = o_t ∘ tanh(c_t)
//! ```
//!
//! The sequence representation (final or mean hidden state) feeds a logistic
//! head. Training minimises mean binary cross-entropy with Adam; the backward
//! pass is certified against central finite differences by [`gradient_check`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TokenSequence;
use crate::error::{Error, Result};
use crate::textprep::{EmbeddingTable, PAD_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget,
    Input,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Output, Gate::Candidate];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Gate::Forget => "forget gate",
            Gate::Input => "input gate",
            Gate::Output => "output gate",
            Gate::Candidate => "cell candidate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Hidden state after the last real token.
    #[default]
    Final,
    /// Mean of the hidden states over the real tokens.
    Mean,
}

/// All weights in one flat buffer. Per gate `g` in forget, input, output,
/// candidate order: `W_g` (h x d, row-major), `U_g` (h x h), `b_g` (h); then the
/// head weights (h) and the head bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    hidden: usize,
    input: usize,
    pooling: Pooling,
    data: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        assert!(hidden > 0 && input > 0, "LSTM dimensions must be positive");
        Self {
            hidden,
            input,
            pooling: Pooling::Final,
            data: vec![0.0; Self::len_for(hidden, input)],
        }
    }

    /// Uniform(-1/sqrt(d), 1/sqrt(d)) input weights, uniform(-1/sqrt(h), 1/sqrt(h))
    /// recurrent and head weights, forget bias 1, other biases 0.
    pub fn init(hidden: usize, input: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(hidden, input);
        let (ri, rh) = (1.0 / (input as f64).sqrt(), 1.0 / (hidden as f64).sqrt());
        for g in Gate::ALL {
            p.w_mut(g).iter_mut().for_each(|v| *v = rng.random_range(-ri..ri));
            p.u_mut(g).iter_mut().for_each(|v| *v = rng.random_range(-rh..rh));
        }
        p.b_mut(Gate::Forget).iter_mut().for_each(|v| *v = 1.0);
        p.head_mut().iter_mut().for_each(|v| *v = rng.random_range(-rh..rh));
        p
    }

    fn len_for(h: usize, d: usize) -> usize {
        4 * (h * d + h * h + h) + h + 1
    }

    pub fn with_pooling(mut self, pooling: Pooling) -> Self {
        self.pooling = pooling;
        self
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn pooling(&self) -> Pooling {
        self.pooling
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn gate_block(&self) -> usize {
        self.hidden * self.input + self.hidden * self.hidden + self.hidden
    }

    fn w_range(&self, g: Gate) -> std::ops::Range<usize> {
        let start = g.slot() * self.gate_block();
        start..start + self.hidden * self.input
    }

    fn u_range(&self, g: Gate) -> std::ops::Range<usize> {
        let start = self.w_range(g).end;
        start..start + self.hidden * self.hidden
    }

    fn b_range(&self, g: Gate) -> std::ops::Range<usize> {
        let start = self.u_range(g).end;
        start..start + self.hidden
    }

    fn head_range(&self) -> std::ops::Range<usize> {
        let start = 4 * self.gate_block();
        start..start + self.hidden
    }

    pub fn w(&self, g: Gate) -> &[f64] {
        &self.data[self.w_range(g)]
    }

    pub fn u(&self, g: Gate) -> &[f64] {
        &self.data[self.u_range(g)]
    }

    pub fn b(&self, g: Gate) -> &[f64] {
        &self.data[self.b_range(g)]
    }

    pub fn head(&self) -> &[f64] {
        &self.data[self.head_range()]
    }

    pub fn head_bias(&self) -> f64 {
        self.data[self.data.len() - 1]
    }

    pub fn w_mut(&mut self, g: Gate) -> &mut [f64] {
        let r = self.w_range(g);
        &mut self.data[r]
    }

    pub fn u_mut(&mut self, g: Gate) -> &mut [f64] {
        let r = self.u_range(g);
        &mut self.data[r]
    }

    pub fn b_mut(&mut self, g: Gate) -> &mut [f64] {
        let r = self.b_range(g);
        &mut self.data[r]
    }

    pub fn head_mut(&mut self) -> &mut [f64] {
        let r = self.head_range();
        &mut self.data[r]
    }

    pub fn set_head_bias(&mut self, v: f64) {
        let n = self.data.len();
        self.data[n - 1] = v;
    }

    fn zeros_like(&self) -> Self {
        Self {
            data: vec![0.0; self.data.len()],
            ..self.clone()
        }
    }

    /// Write a checkpoint: magic, version, shape header, then every weight as a
    /// little-endian IEEE-754 double.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        out.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(io)?;
        out.write_all(&(self.hidden as u64).to_le_bytes()).map_err(io)?;
        out.write_all(&(self.input as u64).to_le_bytes()).map_err(io)?;
        out.write_all(&[self.pooling as u8]).map_err(io)?;
        out.write_all(&(self.data.len() as u64).to_le_bytes()).map_err(io)?;
        for v in &self.data {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut r = BufReader::new(File::open(path).map_err(io)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not an LSTM checkpoint".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(io)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut read_u64 = |r: &mut BufReader<File>| -> Result<u64> {
            r.read_exact(&mut b8).map_err(io)?;
            Ok(u64::from_le_bytes(b8))
        };
        let hidden = read_u64(&mut r)? as usize;
        let input = read_u64(&mut r)? as usize;
        let mut pool = [0u8; 1];
        r.read_exact(&mut pool).map_err(io)?;
        let pooling = match pool[0] {
            0 => Pooling::Final,
            1 => Pooling::Mean,
            other => return Err(Error::Format(format!("unknown pooling tag {other}"))),
        };
        let count = read_u64(&mut r)? as usize;
        if hidden == 0 || input == 0 || count != Self::len_for(hidden, input) {
            return Err(Error::Format(format!(
                "shape header h={hidden} d={input} does not match {count} weights"
            )));
        }
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            r.read_exact(&mut b8).map_err(io)?;
            let v = f64::from_le_bytes(b8);
            if !v.is_finite() {
                return Err(Error::NonFinite("checkpoint weights".into()));
            }
            data.push(v);
        }
        Ok(Self {
            hidden,
            input,
            pooling,
            data,
        })
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"MLRLSTM\0";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            c: vec![0.0; hidden],
            h: vec![0.0; hidden],
        }
    }
}

/// Everything one step needs to be differentiated.
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates in forget, input, output, candidate order.
    gates: [Vec<f64>; 4],
    tanh_c: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn step_cached(p: &LstmParams, x: &[f64], prev: &LstmState) -> Result<(LstmState, StepCache)> {
    let (h, d) = (p.hidden, p.input);
    assert_eq!(x.len(), d, "input width must equal the embedding dimension");
    let mut gates: [Vec<f64>; 4] = Default::default();
    for g in Gate::ALL {
        let (w, u, b) = (p.w(g), p.u(g), p.b(g));
        let act: Vec<f64> = (0..h)
            .map(|r| {
                let mut z = b[r];
                z += w[r * d..(r + 1) * d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                z += u[r * h..(r + 1) * h]
                    .iter()
                    .zip(&prev.h)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
                if g == Gate::Candidate {
                    z.tanh()
                } else {
                    sigmoid(z)
                }
            })
            .collect();
        if act.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(g.name().into()));
        }
        gates[g.slot()] = act;
    }
    let [f, i, o, cand] = &gates;
    let c: Vec<f64> = (0..h).map(|r| f[r] * prev.c[r] + i[r] * cand[r]).collect();
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cell state".into()));
    }
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let hn: Vec<f64> = (0..h).map(|r| o[r] * tanh_c[r]).collect();
    let cache = StepCache {
        x: x.to_vec(),
        h_prev: prev.h.clone(),
        c_prev: prev.c.clone(),
        gates,
        tanh_c,
    };
    Ok((LstmState { c, h: hn }, cache))
}

/// One application of the cell equations.
pub fn cell_step(params: &LstmParams, x: &[f64], prev: &LstmState) -> Result<LstmState> {
    step_cached(params, x, prev).map(|(s, _)| s)
}

struct Trace {
    steps: Vec<StepCache>,
    pooled: Vec<f64>,
    logit: f64,
}

fn run(p: &LstmParams, seq: &TokenSequence, table: &EmbeddingTable) -> Result<Trace> {
    if table.dim() != p.input {
        return Err(Error::invalid(format!(
            "embedding dimension {} does not match LSTM input {}",
            table.dim(),
            p.input
        )));
    }
    let mut state = LstmState::zeros(p.hidden);
    let tokens = seq.tokens();
    let mut steps = Vec::with_capacity(tokens.len());
    let mut sum = vec![0.0; p.hidden];
    for &id in tokens {
        if id as usize >= table.n_rows() {
            return Err(Error::invalid(format!("token id {id} outside the embedding table")));
        }
        let (next, cache) = step_cached(p, table.row(id), &state)?;
        sum.iter_mut().zip(&next.h).for_each(|(s, v)| *s += v);
        steps.push(cache);
        state = next;
    }
    let pooled = match p.pooling {
        Pooling::Final => state.h,
        Pooling::Mean if tokens.is_empty() => sum,
        Pooling::Mean => sum.into_iter().map(|v| v / tokens.len() as f64).collect(),
    };
    let logit = p.head().iter().zip(&pooled).map(|(a, b)| a * b).sum::<f64>() + p.head_bias();
    Ok(Trace { steps, pooled, logit })
}

/// Probability of the positive class for one sequence; only the first
/// `seq.len` ids are read.
pub fn forward(params: &LstmParams, seq: &TokenSequence, table: &EmbeddingTable) -> Result<f64> {
    Ok(sigmoid(run(params, seq, table)?.logit))
}

/// Deliberate defects for testing the gradient check itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Drop the gradient of the forget gate's recurrent matrix.
    ZeroForgetRecurrent,
}

/// Mean binary cross-entropy over `batch` and its gradient.
pub fn loss_and_gradient(
    params: &LstmParams,
    batch: &[(TokenSequence, bool)],
    table: &EmbeddingTable,
) -> Result<(f64, LstmParams)> {
    backward(params, batch, table, None)
}

fn backward(
    p: &LstmParams,
    batch: &[(TokenSequence, bool)],
    table: &EmbeddingTable,
    fault: Option<Fault>,
) -> Result<(f64, LstmParams)> {
    let (h, d) = (p.hidden, p.input);
    let mut grad = p.zeros_like();
    let mut loss = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for (seq, label) in batch {
        let trace = run(p, seq, table)?;
        let y = if *label { 1.0 } else { 0.0 };
        loss += softplus(trace.logit) - y * trace.logit;
        let dz = (sigmoid(trace.logit) - y) * scale;

        for (g, v) in grad.head_mut().iter_mut().zip(&trace.pooled) {
            *g += dz * v;
        }
        let hb = grad.head_bias() + dz;
        grad.set_head_bias(hb);
        let dpooled: Vec<f64> = p.head().iter().map(|w| dz * w).collect();

        let steps = &trace.steps;
        let n = steps.len();
        if n == 0 {
            continue;
        }
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        for t in (0..n).rev() {
            let s = &steps[t];
            let [f, i, o, cand] = &s.gates;
            let mut dh = dh_next.clone();
            match p.pooling {
                Pooling::Final if t == n - 1 => dh.iter_mut().zip(&dpooled).for_each(|(a, b)| *a += b),
                Pooling::Final => {}
                Pooling::Mean => dh.iter_mut().zip(&dpooled).for_each(|(a, b)| *a += b / n as f64),
            }
            // pre-activation gradients, gate order f, i, o, candidate
            let mut da: [Vec<f64>; 4] = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
            for r in 0..h {
                let d_o = dh[r] * s.tanh_c[r];
                let dc = dc_next[r] + dh[r] * o[r] * (1.0 - s.tanh_c[r] * s.tanh_c[r]);
                let d_f = dc * s.c_prev[r];
                let d_i = dc * cand[r];
                let d_cand = dc * i[r];
                dc_next[r] = dc * f[r];
                da[0][r] = d_f * f[r] * (1.0 - f[r]);
                da[1][r] = d_i * i[r] * (1.0 - i[r]);
                da[2][r] = d_o * o[r] * (1.0 - o[r]);
                da[3][r] = d_cand * (1.0 - cand[r] * cand[r]);
            }
            let mut dh_prev = vec![0.0; h];
            for g in Gate::ALL {
                let a = &da[g.slot()];
                {
                    let gw = grad.w_mut(g);
                    for r in 0..h {
                        for k in 0..d {
                            gw[r * d + k] += a[r] * s.x[k];
                        }
                    }
                }
                if !(fault == Some(Fault::ZeroForgetRecurrent) && g == Gate::Forget) {
                    let gu = grad.u_mut(g);
                    for r in 0..h {
                        for k in 0..h {
                            gu[r * h + k] += a[r] * s.h_prev[k];
                        }
                    }
                }
                grad.b_mut(g).iter_mut().zip(a).for_each(|(gb, v)| *gb += v);
                let u = p.u(g);
                for r in 0..h {
                    for k in 0..h {
                        dh_prev[k] += u[r * h + k] * a[r];
                    }
                }
            }
            dh_next = dh_prev;
        }
    }
    Ok((loss * scale, grad))
}

fn batch_loss(p: &LstmParams, batch: &[(TokenSequence, bool)], table: &EmbeddingTable) -> Result<f64> {
    let mut loss = 0.0;
    for (seq, label) in batch {
        let z = run(p, seq, table)?.logit;
        loss += softplus(z) - if *label { z } else { 0.0 };
    }
    Ok(loss / batch.len() as f64)
}

/// Largest relative disagreement between the analytic gradient and central
/// finite differences (step 1e-6) over every parameter. The relative error of
/// a pair is `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn gradient_check(params: &LstmParams, batch: &[(TokenSequence, bool)], table: &EmbeddingTable) -> Result<f64> {
    gradient_check_with(params, batch, table, None)
}

/// [`gradient_check`] against a deliberately broken backward pass.
pub fn gradient_check_faulty(
    params: &LstmParams,
    batch: &[(TokenSequence, bool)],
    table: &EmbeddingTable,
    fault: Fault,
) -> Result<f64> {
    gradient_check_with(params, batch, table, Some(fault))
}

fn gradient_check_with(
    params: &LstmParams,
    batch: &[(TokenSequence, bool)],
    table: &EmbeddingTable,
    fault: Option<Fault>,
) -> Result<f64> {
    Ok(gradient_report_with(params, batch, table, fault)?.max_relative)
}

/// Where the analytic and numeric gradients disagree most.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub max_relative: f64,
    /// Flat parameter index of the worst component.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradientReport {
    pub fn absolute(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }
}

/// [`gradient_check`] with the worst component identified.
pub fn gradient_report(
    params: &LstmParams,
    batch: &[(TokenSequence, bool)],
    table: &EmbeddingTable,
) -> Result<GradientReport> {
    gradient_report_with(params, batch, table, None)
}

fn gradient_report_with(
    params: &LstmParams,
    batch: &[(TokenSequence, bool)],
    table: &EmbeddingTable,
    fault: Option<Fault>,
) -> Result<GradientReport> {
    const STEP: f64 = 1e-6;
    if batch.is_empty() {
        return Err(Error::invalid("gradient check needs a non-empty batch"));
    }
    let (_, analytic) = backward(params, batch, table, fault)?;
    let mut probe = params.clone();
    let mut worst = GradientReport {
        max_relative: 0.0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    for k in 0..params.data.len() {
        let orig = probe.data[k];
        probe.data[k] = orig + STEP;
        let up = batch_loss(&probe, batch, table)?;
        probe.data[k] = orig - STEP;
        let down = batch_loss(&probe, batch, table)?;
        probe.data[k] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let a = analytic.data[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > worst.max_relative {
            worst = GradientReport {
                max_relative: rel,
                index: k,
                analytic: a,
                numeric,
            };
        }
    }
    Ok(worst)
}

/// One randomly drawn gradient-check problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationCase {
    pub hidden: usize,
    pub input: usize,
    pub pooling: Pooling,
    pub sequence_lengths: Vec<usize>,
    /// Worst relative error of the real backward pass.
    pub error: f64,
    /// Absolute analytic/numeric gap at that worst component.
    pub error_absolute: f64,
    /// Worst relative error with [`Fault::ZeroForgetRecurrent`] injected.
    pub fault_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub tolerance: f64,
    pub fault_floor: f64,
    pub cases: Vec<CertificationCase>,
}

impl Certification {
    pub fn max_error(&self) -> f64 {
        self.cases.iter().map(|c| c.error).fold(0.0, f64::max)
    }

    pub fn min_fault_error(&self) -> f64 {
        self.cases.iter().map(|c| c.fault_error).fold(f64::INFINITY, f64::min)
    }

    /// Cases over tolerance whose absolute gap is within the finite
    /// difference roundoff bound (`1e-9`, about twenty times `ulp(loss) / step`).
    pub fn roundoff_limited(&self) -> usize {
        self.cases
            .iter()
            .filter(|c| c.error > self.tolerance && c.error_absolute <= 1e-9)
            .count()
    }

    /// Every real gradient within tolerance and every fault caught.
    pub fn passed(&self) -> bool {
        self.max_error() <= self.tolerance && self.min_fault_error() > self.fault_floor
    }
}

/// Gradient-check `n_cases` random small networks (hidden <= 4, input <= 3,
/// sequences of 2 to 5 tokens), each against the real backward pass and a
/// faulty one.
pub fn certify(n_cases: usize, seed: u64) -> Result<Certification> {
    let mut cases = Vec::with_capacity(n_cases);
    for i in 0..n_cases {
        let mut rng = crate::rng::stream(seed, i as u64);
        let hidden = rng.random_range(1..=4);
        let input = rng.random_range(1..=3);
        let pooling = if i % 2 == 0 { Pooling::Final } else { Pooling::Mean };
        let words = 6;
        let rows = (0..words)
            .map(|w| {
                (
                    format!("w{w}"),
                    (0..input).map(|_| rng.random_range(-1.0..1.0)).collect(),
                )
            })
            .collect();
        let table = EmbeddingTable::from_rows(input, rows)?;
        let mut params = LstmParams::zeros(hidden, input).with_pooling(pooling);
        params
            .as_mut_slice()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-0.8..0.8));
        let batch: Vec<(TokenSequence, bool)> = (0..rng.random_range(1..=3))
            .map(|_| {
                let len = rng.random_range(2..=5);
                let mut ids: Vec<u32> = (0..len).map(|_| rng.random_range(1..table.n_rows() as u32)).collect();
                ids.resize(5, PAD_ID);
                (TokenSequence { ids, len }, rng.random_bool(0.5))
            })
            .collect();
        let report = gradient_report(&params, &batch, &table)?;
        cases.push(CertificationCase {
            hidden,
            input,
            pooling,
            sequence_lengths: batch.iter().map(|(s, _)| s.len).collect(),
            error: report.max_relative,
            error_absolute: report.absolute(),
            fault_error: gradient_check_faulty(&params, &batch, &table, Fault::ZeroForgetRecurrent)?,
        });
    }
    Ok(Certification {
        tolerance: 1e-4,
        fault_floor: 1e-2,
        cases,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub max_sequence_length: usize,
    pub seed: u64,
    pub pooling: Pooling,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::g1()
    }
}

impl TrainConfig {
    /// 25 units, batches of 200, 25 epochs, learning rate 0.01, first 50 words.
    pub fn g1() -> Self {
        Self {
            hidden_size: 25,
            batch_size: 200,
            epochs: 25,
            learning_rate: 0.01,
            max_sequence_length: 50,
            seed: 0,
            pooling: Pooling::Final,
        }
    }

    /// 40 units, batches of 150, 6 epochs, first 25 words. The learning rate
    /// is not reported for this setting; 0.01 is reused.
    pub fn bfrc_pt() -> Self {
        Self {
            hidden_size: 40,
            batch_size: 150,
            epochs: 6,
            learning_rate: 0.01,
            max_sequence_length: 25,
            seed: 0,
            pooling: Pooling::Final,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.batch_size == 0 || self.epochs == 0 || self.max_sequence_length == 0 {
            return Err(Error::invalid(
                "LSTM hidden size, batch size, epochs and sequence length must be positive",
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("LSTM learning rate must be positive and finite"));
        }
        Ok(())
    }
}

/// A trained per-label sequence classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LstmModel {
    /// Training data held a single class.
    Constant(bool),
    Network(LstmParams),
}

impl LstmModel {
    pub fn probability(&self, seq: &TokenSequence, table: &EmbeddingTable) -> Result<f64> {
        match self {
            LstmModel::Constant(c) => Ok(if *c { 1.0 } else { 0.0 }),
            LstmModel::Network(p) => forward(p, seq, table),
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = Self::BETA1 * self.m[k] + (1.0 - Self::BETA1) * grad[k];
            self.v[k] = Self::BETA2 * self.v[k] + (1.0 - Self::BETA2) * grad[k] * grad[k];
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Train one binary sequence classifier with Adam on mini-batches drawn in
/// seeded shuffled order. Embeddings stay frozen.
pub fn train(data: &[(TokenSequence, bool)], cfg: &TrainConfig, table: &EmbeddingTable) -> Result<LstmModel> {
    train_with_history(data, cfg, table).map(|(m, _)| m)
}

/// [`train`], also returning the mean training loss of every epoch.
pub fn train_with_history(
    data: &[(TokenSequence, bool)],
    cfg: &TrainConfig,
    table: &EmbeddingTable,
) -> Result<(LstmModel, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot train an LSTM on empty data"));
    }
    let positives = data.iter().filter(|(_, y)| *y).count();
    if positives == 0 || positives == data.len() {
        return Ok((LstmModel::Constant(positives > 0), Vec::new()));
    }
    let data: Vec<(TokenSequence, bool)> = data
        .iter()
        .map(|(s, y)| {
            let len = s.len.min(cfg.max_sequence_length);
            (
                TokenSequence {
                    ids: s.ids[..len].to_vec(),
                    len,
                },
                *y,
            )
        })
        .collect();

    let mut params =
        LstmParams::init(cfg.hidden_size, table.dim(), &mut crate::rng::stream(cfg.seed, 0)).with_pooling(cfg.pooling);
    let mut adam = Adam::new(params.data.len(), cfg.learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut crate::rng::stream(cfg.seed, epoch as u64 + 1));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(TokenSequence, bool)> = chunk.iter().map(|&i| data[i].clone()).collect();
            let (loss, grad) = backward(&params, &batch, table, None).map_err(|e| match e {
                Error::NonFinite(_) => Error::Diverged { epoch, loss: f64::NAN },
                other => other,
            })?;
            epoch_loss += loss * batch.len() as f64;
            adam.step(&mut params.data, &grad.data);
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() || params.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { epoch, loss: mean });
        }
        history.push(mean);
    }
    Ok((LstmModel::Network(params), history))
}

//! Dense gated BP over a relaxed parity-check matrix, with its reverse pass.
//!
//! With `h ∈ [0, 1]` the check and variable updates become
//!
//! ```text
//! m_vc   = λ_v + Σ_{c'≠c} h_{c'v} μ_{c'→v}
//! f_cv   = 1 + h_cv (tanh(m_vc / 2) - 1)
//! μ_{c→v} = 2 atanh(clamp(Π_{v'≠v} f_cv'))
//! λ̃_v    = λ_v + Σ_c h_cv μ_{c→v}
//! ```
//!
//! A gate at 0 contributes a neutral factor 1 to products and nothing to sums,
//! a gate at 1 is an ordinary edge. Leave-one-out products and their adjoints
//! use prefix/suffix sweeps, so exact zeros never need a division.

use super::{bce_loss_grad, clamp_message, BpConfig, GradientMode};
use crate::code::{CodeDimensions, ParityCheckMatrix};
use crate::error::{Error, Result};

/// Relaxed `H = [W | I]` with `W` entries in `[0, 1]` and an exact identity block.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedH {
    dims: CodeDimensions,
    values: Vec<f64>,
}

impl RelaxedH {
    /// Validates a full `(n-k) x n` row-major matrix.
    pub fn new(dims: CodeDimensions, values: Vec<f64>) -> Result<Self> {
        let (m, n, k) = (dims.checks(), dims.n, dims.k);
        if values.len() != m * n {
            return Err(Error::DimensionMismatch {
                expected: m * n,
                found: values.len(),
            });
        }
        for c in 0..m {
            for v in 0..n {
                let x = values[c * n + v];
                let ok = if v < k {
                    (0.0..=1.0).contains(&x)
                } else {
                    x == if v - k == c { 1.0 } else { 0.0 }
                };
                if !ok {
                    return Err(Error::InvalidRelaxedEntry {
                        row: c,
                        col: v,
                        value: x,
                    });
                }
            }
        }
        Ok(RelaxedH { dims, values })
    }

    /// Relaxed matrix with `W` given as `(n-k) x k` row-major values.
    pub fn from_w_values(dims: CodeDimensions, w: &[f64]) -> Result<Self> {
        let (m, n, k) = (dims.checks(), dims.n, dims.k);
        if w.len() != m * k {
            return Err(Error::DimensionMismatch {
                expected: m * k,
                found: w.len(),
            });
        }
        let mut values = vec![0.0; m * n];
        for c in 0..m {
            values[c * n..c * n + k].copy_from_slice(&w[c * k..(c + 1) * k]);
            values[c * n + k + c] = 1.0;
        }
        Self::new(dims, values)
    }

    pub fn from_code(h: &ParityCheckMatrix) -> Self {
        let dims = h.dims();
        let n = dims.n;
        let mut values = vec![0.0; dims.checks() * n];
        for c in 0..dims.checks() {
            for v in 0..n {
                if h.h(c, v) {
                    values[c * n + v] = 1.0;
                }
            }
        }
        RelaxedH { dims, values }
    }

    pub fn dims(&self) -> CodeDimensions {
        self.dims
    }

    /// Full matrix, row-major.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, check: usize, var: usize) -> f64 {
        self.values[check * self.dims.n + var]
    }

    /// Sets a `W` entry (`var < k`).
    pub fn set_w(&mut self, check: usize, var: usize, value: f64) -> Result<()> {
        if var >= self.dims.k || !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidRelaxedEntry {
                row: check,
                col: var,
                value,
            });
        }
        self.values[check * self.dims.n + var] = value;
        Ok(())
    }
}

/// `∂ loss / ∂ W`, `(n-k) x k` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct WGradient {
    dims: CodeDimensions,
    values: Vec<f64>,
}

impl WGradient {
    pub fn zeros(dims: CodeDimensions) -> Self {
        WGradient {
            dims,
            values: vec![0.0; dims.checks() * dims.k],
        }
    }

    pub fn from_values(dims: CodeDimensions, values: Vec<f64>) -> Result<Self> {
        let expected = dims.checks() * dims.k;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: values.len(),
            });
        }
        Ok(WGradient { dims, values })
    }

    pub fn dims(&self) -> CodeDimensions {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, check: usize, msg_bit: usize) -> f64 {
        self.values[check * self.dims.k + msg_bit]
    }

    pub fn add_scaled(&mut self, other: &WGradient, scale: f64) {
        assert_eq!(self.dims, other.dims);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }
}

#[inline]
fn gate(h: f64, t: f64) -> f64 {
    // exact at binary gates so the dense path matches the edge-list decoder bit for bit
    if h == 1.0 {
        t
    } else if h == 0.0 {
        1.0
    } else {
        1.0 + h * (t - 1.0)
    }
}

/// Forward record of one gated decode, reusable across decodes of the same shape.
#[derive(Clone, Debug)]
pub struct GatedTape {
    dims: CodeDimensions,
    cfg: BpConfig,
    h: Vec<f64>,
    llr: Vec<f64>,
    /// Pre-clamp variable-to-check messages, per iteration.
    msg: Vec<f64>,
    tanh: Vec<f64>,
    /// Leave-one-out check products before clamping, per iteration.
    prod: Vec<f64>,
    mu: Vec<f64>,
    lambda_out: Vec<f64>,
    total: Vec<f64>,
    tanh_free: Vec<f64>,
    row_scratch: Vec<f64>,
}

impl GatedTape {
    pub fn new(dims: CodeDimensions) -> Self {
        GatedTape {
            dims,
            cfg: BpConfig::new(1),
            h: Vec::new(),
            llr: Vec::new(),
            msg: Vec::new(),
            tanh: Vec::new(),
            prod: Vec::new(),
            mu: Vec::new(),
            lambda_out: vec![0.0; dims.n],
            total: vec![0.0; dims.n],
            tanh_free: vec![0.0; dims.n],
            row_scratch: vec![0.0; dims.n + 1],
        }
    }

    pub fn dims(&self) -> CodeDimensions {
        self.dims
    }

    pub fn config(&self) -> &BpConfig {
        &self.cfg
    }

    pub fn lambda_out(&self) -> &[f64] {
        &self.lambda_out
    }

    pub fn iterations(&self) -> usize {
        self.cfg.iterations
    }

    /// Check-to-variable messages of iteration `t` (dense, `(n-k) x n`).
    pub fn check_messages(&self, t: usize) -> &[f64] {
        let size = self.dims.checks() * self.dims.n;
        &self.mu[t * size..(t + 1) * size]
    }

    pub fn forward(&mut self, h: &RelaxedH, llr: &[f64], cfg: &BpConfig) -> Result<()> {
        cfg.validate()?;
        if h.dims() != self.dims {
            return Err(Error::InvalidConfig(format!(
                "tape built for {:?}, matrix is {:?}",
                self.dims,
                h.dims()
            )));
        }
        let (m, n) = (self.dims.checks(), self.dims.n);
        if llr.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: llr.len(),
            });
        }
        let size = m * n;
        let iters = cfg.iterations;
        self.cfg = *cfg;
        self.h.clear();
        self.h.extend_from_slice(h.values());
        self.llr.clear();
        self.llr.extend_from_slice(llr);
        for buf in [&mut self.msg, &mut self.tanh, &mut self.prod, &mut self.mu] {
            buf.resize(iters * size, 0.0);
        }

        for t in 0..iters {
            let (done, rest) = self.mu.split_at_mut(t * size);
            let mu_prev: Option<&[f64]> = (t > 0).then(|| &done[(t - 1) * size..]);
            let mu_cur = &mut rest[..size];
            let msg = &mut self.msg[t * size..(t + 1) * size];
            let tanh = &mut self.tanh[t * size..(t + 1) * size];
            let prod = &mut self.prod[t * size..(t + 1) * size];

            self.total.copy_from_slice(llr);
            if let Some(prev) = mu_prev {
                for c in 0..m {
                    for v in 0..n {
                        self.total[v] += self.h[c * n + v] * prev[c * n + v];
                    }
                }
            }
            for v in 0..n {
                self.tanh_free[v] = (0.5 * clamp_message(self.total[v], cfg.message_clamp)).tanh();
            }
            for c in 0..m {
                for v in 0..n {
                    let i = c * n + v;
                    let hv = self.h[i];
                    let mv = match mu_prev {
                        Some(prev) => self.total[v] - hv * prev[i],
                        None => self.total[v],
                    };
                    msg[i] = mv;
                    tanh[i] = if hv == 0.0 {
                        self.tanh_free[v]
                    } else {
                        (0.5 * clamp_message(mv, cfg.message_clamp)).tanh()
                    };
                }
            }
            for c in 0..m {
                let row = c * n..(c + 1) * n;
                let prefix = &mut self.row_scratch;
                prefix[0] = 1.0;
                for v in 0..n {
                    prefix[v + 1] = prefix[v] * gate(self.h[row.start + v], tanh[row.start + v]);
                }
                let mut suffix = 1.0;
                for v in (0..n).rev() {
                    let i = row.start + v;
                    let p = prefix[v] * suffix;
                    prod[i] = p;
                    mu_cur[i] = super::check_message(p, cfg.epsilon);
                    suffix *= gate(self.h[i], tanh[i]);
                }
            }
        }

        let last = &self.mu[(iters - 1) * size..];
        self.lambda_out.copy_from_slice(llr);
        for c in 0..m {
            for v in 0..n {
                self.lambda_out[v] += self.h[c * n + v] * last[c * n + v];
            }
        }
        Ok(())
    }

    /// Reverse pass from `∂ loss / ∂ λ̃`, returning the gradient over the full
    /// `(n-k) x n` relaxed matrix.
    pub fn backward_full(&self, grad_out: &[f64], mode: GradientMode) -> Vec<f64> {
        let (m, n) = (self.dims.checks(), self.dims.n);
        assert_eq!(grad_out.len(), n);
        let size = m * n;
        let iters = self.cfg.iterations;
        let eps = self.cfg.epsilon;
        let mut gh = vec![0.0; size];
        let mut gmu = vec![0.0; size];
        let mut gf = vec![0.0; n];
        let mut gm = vec![0.0; size];
        let mut gsum = vec![0.0; n];
        let mut prefix = vec![0.0; n + 1];
        let mut suffix = vec![0.0; n + 1];

        let last = &self.mu[(iters - 1) * size..iters * size];
        for c in 0..m {
            for v in 0..n {
                let i = c * n + v;
                gh[i] += grad_out[v] * last[i];
                gmu[i] = grad_out[v] * self.h[i];
            }
        }

        for t in (0..iters).rev() {
            let range = t * size..(t + 1) * size;
            let tanh = &self.tanh[range.clone()];
            let prod = &self.prod[range.clone()];
            let msg = &self.msg[range];

            // μ = 2 atanh(clamp(P)): turn gmu into the adjoint of P, in place
            for i in 0..size {
                let p = prod[i];
                let inside = p >= -1.0 + eps && p <= 1.0 - eps;
                gmu[i] = if inside {
                    let d = match mode {
                        GradientMode::Exact => 1.0 / (1.0 - p * p),
                        GradientMode::PassThrough => 1.0,
                    };
                    2.0 * d * gmu[i]
                } else {
                    0.0
                };
            }

            for c in 0..m {
                let row = c * n;
                let f = |v: usize| gate(self.h[row + v], tanh[row + v]);
                prefix[0] = 1.0;
                for v in 0..n {
                    prefix[v + 1] = prefix[v] * f(v);
                }
                suffix[n] = 1.0;
                for v in (0..n).rev() {
                    suffix[v] = suffix[v + 1] * f(v);
                }
                // gf_j = Σ_{v≠j} gP_v Π_{i∉{v,j}} f_i, via running sums from both ends
                let mut left = 0.0;
                for v in 0..n {
                    gf[v] = suffix[v + 1] * left;
                    left = left * f(v) + gmu[row + v] * prefix[v];
                }
                let mut right = 0.0;
                for v in (0..n).rev() {
                    gf[v] += prefix[v] * right;
                    right = right * f(v) + gmu[row + v] * suffix[v + 1];
                }
                for v in 0..n {
                    let i = row + v;
                    let hv = self.h[i];
                    let tv = tanh[i];
                    gh[i] += gf[v] * (tv - 1.0);
                    let gt = gf[v] * hv;
                    let clamped = matches!(self.cfg.message_clamp, Some(cl) if msg[i].abs() > cl);
                    gm[i] = if clamped { 0.0 } else { gt * 0.5 * (1.0 - tv * tv) };
                }
            }

            if t == 0 {
                break;
            }
            let prev = &self.mu[(t - 1) * size..t * size];
            gsum.fill(0.0);
            for c in 0..m {
                for v in 0..n {
                    gsum[v] += gm[c * n + v];
                }
            }
            for c in 0..m {
                for v in 0..n {
                    let i = c * n + v;
                    let g = gsum[v] - gm[i];
                    gh[i] += prev[i] * g;
                    gmu[i] = self.h[i] * g;
                }
            }
        }
        gh
    }

    /// Restricts a full-matrix gradient to the trainable `W` block.
    pub fn w_block(&self, full: &[f64]) -> WGradient {
        let (m, n, k) = (self.dims.checks(), self.dims.n, self.dims.k);
        let mut values = Vec::with_capacity(m * k);
        for c in 0..m {
            values.extend_from_slice(&full[c * n..c * n + k]);
        }
        WGradient {
            dims: self.dims,
            values,
        }
    }

    /// Gradient of `scale · bce_loss(λ̃)` with respect to `W`.
    pub fn loss_gradient(&self, mode: GradientMode, scale: f64) -> WGradient {
        let mut g_out = vec![0.0; self.dims.n];
        bce_loss_grad(&self.lambda_out, scale, &mut g_out);
        self.w_block(&self.backward_full(&g_out, mode))
    }
}

/// Gated forward pass; returns `λ̃` and the tape for [`backward`].
pub fn bp_decode_gated(
    relaxed_h: &RelaxedH,
    llr: &[f64],
    cfg: &BpConfig,
) -> Result<(Vec<f64>, GatedTape)> {
    let mut tape = GatedTape::new(relaxed_h.dims());
    tape.forward(relaxed_h, llr, cfg)?;
    Ok((tape.lambda_out.clone(), tape))
}

/// Gradient of the total BCE loss of the taped decode with respect to `W`.
pub fn backward(tape: &GatedTape, cfg: &BpConfig) -> WGradient {
    tape.loss_gradient(cfg.gradient_mode, 1.0)
}

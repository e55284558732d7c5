use super::{check_message, clamp_message, hard_decision, BpConfig};
use crate::code::ParityCheckMatrix;
use crate::error::{Error, Result};

/// Edge-list sum-product decoder for a fixed binary `H`.
///
/// Edges are stored grouped by check, in ascending variable order. Scratch
/// buffers live in the decoder, so one instance serves many decodes but only
/// one at a time.
#[derive(Clone, Debug)]
pub struct SparseDecoder {
    n: usize,
    check_start: Vec<usize>,
    edge_var: Vec<usize>,
    edge_check: Vec<usize>,
    mu_cv: Vec<f64>,
    total: Vec<f64>,
    tanh: Vec<f64>,
    prefix: Vec<f64>,
}

impl SparseDecoder {
    pub fn new(h: &ParityCheckMatrix) -> Self {
        let dims = h.dims();
        let (n, m) = (dims.n, dims.checks());
        let mut check_start = Vec::with_capacity(m + 1);
        let mut edge_var = Vec::new();
        let mut edge_check = Vec::new();
        for c in 0..m {
            check_start.push(edge_var.len());
            for v in 0..n {
                if h.h(c, v) {
                    edge_var.push(v);
                    edge_check.push(c);
                }
            }
        }
        check_start.push(edge_var.len());
        let max_deg = check_start.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
        let e = edge_var.len();
        SparseDecoder {
            n,
            check_start,
            edge_var,
            edge_check,
            mu_cv: vec![0.0; e],
            total: vec![0.0; n],
            tanh: vec![0.0; e],
            prefix: vec![0.0; max_deg + 1],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_var.len()
    }

    /// `(check, variable, μ_{c→v})` for every edge after the last decode.
    pub fn check_messages(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edge_check
            .iter()
            .zip(&self.edge_var)
            .zip(&self.mu_cv)
            .map(|((&c, &v), &mu)| (c, v, mu))
    }

    /// Runs `cfg.iterations` flooding iterations and writes posterior LLRs.
    pub fn decode(&mut self, llr: &[f64], cfg: &BpConfig, lambda_out: &mut [f64]) {
        assert_eq!(llr.len(), self.n, "LLR length must equal n");
        assert_eq!(lambda_out.len(), self.n);
        self.mu_cv.fill(0.0);
        for _ in 0..cfg.iterations {
            // variable node totals, accumulated in ascending check order
            self.total.copy_from_slice(llr);
            for (&v, &mu) in self.edge_var.iter().zip(&self.mu_cv) {
                self.total[v] += mu;
            }
            for (e, &v) in self.edge_var.iter().enumerate() {
                let m = clamp_message(self.total[v] - self.mu_cv[e], cfg.message_clamp);
                self.tanh[e] = (0.5 * m).tanh();
            }
            for c in 0..self.check_start.len() - 1 {
                let (lo, hi) = (self.check_start[c], self.check_start[c + 1]);
                let t = &self.tanh[lo..hi];
                self.prefix[0] = 1.0;
                for (i, &x) in t.iter().enumerate() {
                    self.prefix[i + 1] = self.prefix[i] * x;
                }
                let mut suffix = 1.0;
                for i in (0..hi - lo).rev() {
                    self.mu_cv[lo + i] = check_message(self.prefix[i] * suffix, cfg.epsilon);
                    suffix *= t[i];
                }
            }
        }
        lambda_out.copy_from_slice(llr);
        for (&v, &mu) in self.edge_var.iter().zip(&self.mu_cv) {
            lambda_out[v] += mu;
        }
    }

    /// Decodes and writes hard decisions; returns true when any bit differs
    /// from `reference`.
    pub fn decode_differs(
        &mut self,
        llr: &[f64],
        cfg: &BpConfig,
        lambda_out: &mut [f64],
        reference: &[u8],
    ) -> bool {
        self.decode(llr, cfg, lambda_out);
        lambda_out
            .iter()
            .zip(reference)
            .any(|(&l, &b)| hard_decision(l) != b)
    }
}

/// One-shot decode returning posterior LLRs and hard bits.
pub fn bp_decode(
    h: &ParityCheckMatrix,
    llr: &[f64],
    cfg: &BpConfig,
) -> Result<(Vec<f64>, Vec<u8>)> {
    cfg.validate()?;
    let n = h.dims().n;
    if llr.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: llr.len(),
        });
    }
    let mut dec = SparseDecoder::new(h);
    let mut out = vec![0.0; n];
    dec.decode(llr, cfg, &mut out);
    let bits = out.iter().map(|&l| hard_decision(l)).collect();
    Ok((out, bits))
}

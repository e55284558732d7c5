//! Independent references for the decoder and its reverse pass.
#![allow(dead_code)]

use gqla_core::bp::GradientMode;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Textbook edge-list sum-product decoding of a binary `H` given as rows of 0/1.
/// Returns check-to-variable messages per iteration as `[t][c][v]` (0 off the
/// edges) and the posterior LLRs.
pub fn reference_decode(h: &[Vec<u8>], llr: &[f64], iters: usize, eps: f64) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let m = h.len();
    let n = llr.len();
    let checks_of: Vec<Vec<usize>> = (0..n).map(|v| (0..m).filter(|&c| h[c][v] == 1).collect()).collect();
    let vars_of: Vec<Vec<usize>> = (0..m).map(|c| (0..n).filter(|&v| h[c][v] == 1).collect()).collect();

    let mut r = vec![vec![0.0; n]; m];
    let mut history = Vec::with_capacity(iters);
    for _ in 0..iters {
        let mut q = vec![vec![0.0; n]; m];
        for v in 0..n {
            for &c in &checks_of[v] {
                q[c][v] = llr[v] + checks_of[v].iter().filter(|&&c2| c2 != c).map(|&c2| r[c2][v]).sum::<f64>();
            }
        }
        let mut next = vec![vec![0.0; n]; m];
        for c in 0..m {
            for &v in &vars_of[c] {
                let p: f64 = vars_of[c]
                    .iter()
                    .filter(|&&v2| v2 != v)
                    .map(|&v2| (q[c][v2] / 2.0).tanh())
                    .product();
                next[c][v] = 2.0 * p.clamp(-1.0 + eps, 1.0 - eps).atanh();
            }
        }
        r = next;
        history.push(r.clone());
    }
    let lambda = (0..n)
        .map(|v| llr[v] + checks_of[v].iter().map(|&c| r[c][v]).sum::<f64>())
        .collect();
    (history, lambda)
}

/// Minimal reverse-mode AD over scalar nodes.
#[derive(Default)]
pub struct Tape {
    values: Vec<f64>,
    parents: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Copy, Debug)]
pub struct Var(pub usize);

impl Tape {
    fn push(&mut self, value: f64, parents: Vec<(usize, f64)>) -> Var {
        self.values.push(value);
        self.parents.push(parents);
        Var(self.values.len() - 1)
    }

    pub fn input(&mut self, x: f64) -> Var {
        self.push(x, vec![])
    }

    pub fn value(&self, v: Var) -> f64 {
        self.values[v.0]
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(self.values[a.0] + self.values[b.0], vec![(a.0, 1.0), (b.0, 1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.values[a.0], self.values[b.0]);
        self.push(x * y, vec![(a.0, y), (b.0, x)])
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let v = xs.iter().map(|x| self.values[x.0]).sum();
        self.push(v, xs.iter().map(|x| (x.0, 1.0)).collect())
    }

    pub fn product(&mut self, xs: &[Var]) -> Var {
        let mut acc = self.input(1.0);
        for &x in xs {
            acc = self.mul(acc, x);
        }
        acc
    }

    pub fn tanh_half(&mut self, a: Var) -> Var {
        let t = (self.values[a.0] / 2.0).tanh();
        self.push(t, vec![(a.0, 0.5 * (1.0 - t * t))])
    }

    /// `1 + h (t - 1)`
    pub fn gate(&mut self, h: Var, t: Var) -> Var {
        let (hv, tv) = (self.values[h.0], self.values[t.0]);
        self.push(1.0 + hv * (tv - 1.0), vec![(h.0, tv - 1.0), (t.0, hv)])
    }

    /// `2 atanh(clamp(x))`, with zero slope outside the clamp.
    pub fn check_message(&mut self, x: Var, eps: f64, mode: GradientMode) -> Var {
        let p = self.values[x.0];
        let inside = (-1.0 + eps..=1.0 - eps).contains(&p);
        let value = 2.0 * p.clamp(-1.0 + eps, 1.0 - eps).atanh();
        let slope = match (inside, mode) {
            (false, _) => 0.0,
            (true, GradientMode::Exact) => 2.0 / (1.0 - p * p),
            (true, GradientMode::PassThrough) => 2.0,
        };
        self.push(value, vec![(x.0, slope)])
    }

    /// `softplus(-x)`
    pub fn bce(&mut self, x: Var) -> Var {
        let l = self.values[x.0];
        let value = (-l).max(0.0) + (-l.abs()).exp().ln_1p();
        self.push(value, vec![(x.0, -1.0 / (1.0 + l.exp()))])
    }

    pub fn grad(&self, out: Var) -> Vec<f64> {
        let mut g = vec![0.0; self.values.len()];
        g[out.0] = 1.0;
        for i in (0..=out.0).rev() {
            if g[i] == 0.0 {
                continue;
            }
            for &(p, d) in &self.parents[i] {
                g[p] += g[i] * d;
            }
        }
        g
    }
}

/// BCE loss of the dense gated decode of relaxed `H` (`m x n`, row-major),
/// built on a fresh tape. Returns the tape, the loss node and the `H` nodes.
pub fn taped_loss(h: &[f64], m: usize, llr: &[f64], iters: usize, eps: f64, mode: GradientMode) -> (Tape, Var, Vec<Var>) {
    let n = llr.len();
    let mut t = Tape::default();
    let hv: Vec<Var> = h.iter().map(|&x| t.input(x)).collect();
    let lv: Vec<Var> = llr.iter().map(|&x| t.input(x)).collect();
    let mut mu: Option<Vec<Var>> = None;
    for _ in 0..iters {
        let mut tanh = Vec::with_capacity(m * n);
        for c in 0..m {
            for v in 0..n {
                let mut terms = vec![lv[v]];
                if let Some(prev) = &mu {
                    for c2 in (0..m).filter(|&c2| c2 != c) {
                        terms.push(t.mul(hv[c2 * n + v], prev[c2 * n + v]));
                    }
                }
                let msg = t.sum(&terms);
                tanh.push(t.tanh_half(msg));
            }
        }
        let mut next = Vec::with_capacity(m * n);
        for c in 0..m {
            for v in 0..n {
                let gates: Vec<Var> = (0..n)
                    .filter(|&v2| v2 != v)
                    .map(|v2| t.gate(hv[c * n + v2], tanh[c * n + v2]))
                    .collect();
                let p = t.product(&gates);
                next.push(t.check_message(p, eps, mode));
            }
        }
        mu = Some(next);
    }
    let mu = mu.expect("at least one iteration");
    let mut losses = Vec::with_capacity(n);
    for v in 0..n {
        let mut terms = vec![lv[v]];
        for c in 0..m {
            terms.push(t.mul(hv[c * n + v], mu[c * n + v]));
        }
        let lam = t.sum(&terms);
        losses.push(t.bce(lam));
    }
    let loss = t.sum(&losses);
    (t, loss, hv)
}

/// Uniform relaxed `W` in `[lo, hi]`, `(n-k) x k` row-major.
pub fn random_w(rng: &mut ChaCha8Rng, m: usize, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..m * k).map(|_| rng.random_range(lo..hi)).collect()
}

/// Full `[W | I]` from a row-major `W`.
pub fn full_from_w(w: &[f64], m: usize, k: usize) -> Vec<f64> {
    let n = m + k;
    let mut h = vec![0.0; m * n];
    for c in 0..m {
        h[c * n..c * n + k].copy_from_slice(&w[c * k..(c + 1) * k]);
        h[c * n + k + c] = 1.0;
    }
    h
}

//! Gradient-quantization optimizers over binary `W` and the straight-through baseline.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bp::WGradient;
use crate::code::{sample_w_with, CodeDimensions, DensitySpec, ParityCheckMatrix};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, domain, substream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Sign of the batch gradient applied directly every step.
    MbGqla,
    /// Batch gradient signs accumulated in an update matrix.
    MbGqlaUpdateMatrix,
    /// Per-sample gradient signs, majority-voted, then accumulated.
    SGqlaUpdateMatrix,
    /// Real weights with a binary forward view and pass-through gradient.
    Dsf,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [
        OptimizerKind::MbGqla,
        OptimizerKind::MbGqlaUpdateMatrix,
        OptimizerKind::SGqlaUpdateMatrix,
        OptimizerKind::Dsf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::MbGqla => "mb_gqla",
            OptimizerKind::MbGqlaUpdateMatrix => "mb_gqla_update_matrix",
            OptimizerKind::SGqlaUpdateMatrix => "s_gqla_update_matrix",
            OptimizerKind::Dsf => "dsf",
        }
    }

    pub fn uses_update_matrix(self) -> bool {
        matches!(self, OptimizerKind::MbGqlaUpdateMatrix | OptimizerKind::SGqlaUpdateMatrix)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown optimizer '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    /// Update-matrix threshold `T`.
    pub threshold_t: u32,
    /// DSF step size.
    pub learning_rate: f64,
    /// DSF initial magnitude `V`.
    pub init_magnitude: f64,
}

impl OptimizerSpec {
    pub fn new(kind: OptimizerKind, threshold_t: u32) -> Self {
        OptimizerSpec {
            kind,
            threshold_t,
            learning_rate: 1.0,
            init_magnitude: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.threshold_t == 0 {
            return Err(Error::InvalidConfig("threshold_T must be >= 1".into()));
        }
        if self.kind == OptimizerKind::Dsf
            && !(self.learning_rate > 0.0 && self.init_magnitude > 0.0)
        {
            return Err(Error::InvalidConfig(
                "dsf needs positive learning_rate and init_magnitude".into(),
            ));
        }
        Ok(())
    }
}

/// `sign` with `sign(0) = 0`; NaN also maps to 0.
#[inline]
pub fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Elementwise signs of a `W` gradient.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedGradient {
    dims: CodeDimensions,
    q: Vec<i8>,
}

impl QuantizedGradient {
    pub fn from_gradient(grad: &WGradient) -> Self {
        QuantizedGradient {
            dims: grad.dims(),
            q: grad.values().iter().map(|&g| sign(g)).collect(),
        }
    }

    pub fn from_signs(dims: CodeDimensions, q: Vec<i8>) -> Result<Self> {
        if q.len() != dims.checks() * dims.k {
            return Err(Error::DimensionMismatch {
                expected: dims.checks() * dims.k,
                found: q.len(),
            });
        }
        if let Some(&bad) = q.iter().find(|&&x| !(-1..=1).contains(&x)) {
            return Err(Error::InvalidConfig(format!("sign entry {bad} outside {{-1,0,1}}")));
        }
        Ok(QuantizedGradient { dims, q })
    }

    pub fn dims(&self) -> CodeDimensions {
        self.dims
    }

    pub fn get(&self, check: usize, msg_bit: usize) -> i8 {
        self.q[check * self.dims.k + msg_bit]
    }

    pub fn values(&self) -> &[i8] {
        &self.q
    }
}

fn check_dims(a: CodeDimensions, b: CodeDimensions) -> Result<()> {
    if a != b {
        return Err(Error::InvalidConfig(format!("shape mismatch: {a:?} vs {b:?}")));
    }
    Ok(())
}

/// Sets `w = 0` where `q = +1` and `w = 1` where `q = -1`; returns the number of flips.
pub fn apply_signs(w: &mut ParityCheckMatrix, q: &QuantizedGradient) -> Result<usize> {
    check_dims(w.dims(), q.dims)?;
    let k = q.dims.k;
    let mut changed = 0;
    for (i, &s) in q.q.iter().enumerate() {
        if s == 0 {
            continue;
        }
        let (r, c) = (i / k, i % k);
        let target = s < 0;
        if w.w_bit(r, c) != target {
            w.set_w_bit(r, c, target);
            changed += 1;
        }
    }
    Ok(changed)
}

/// Plain mini-batch step: the sign of the batch gradient decides every bit.
pub fn mb_gqla_step(w: &mut ParityCheckMatrix, grad: &WGradient) -> Result<usize> {
    apply_signs(w, &QuantizedGradient::from_gradient(grad))
}

/// Integer counters of accumulated gradient signs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateMatrix {
    dims: CodeDimensions,
    threshold: u32,
    u: Vec<i32>,
}

impl UpdateMatrix {
    pub fn new(dims: CodeDimensions, threshold: u32) -> Result<Self> {
        if threshold == 0 {
            return Err(Error::InvalidConfig("threshold_T must be >= 1".into()));
        }
        Ok(UpdateMatrix {
            dims,
            threshold,
            u: vec![0; dims.checks() * dims.k],
        })
    }

    pub fn threshold(&self) -> u32 {
        self.threshold
    }

    pub fn values(&self) -> &[i32] {
        &self.u
    }

    pub fn get(&self, check: usize, msg_bit: usize) -> i32 {
        self.u[check * self.dims.k + msg_bit]
    }

    pub fn max_abs(&self) -> u32 {
        self.u.iter().map(|x| x.unsigned_abs()).max().unwrap_or(0)
    }

    /// Adds `q`; returns true when some counter has reached `T`.
    ///
    /// Callers must flush before accumulating again once this returns true.
    pub fn accumulate(&mut self, q: &QuantizedGradient) -> Result<bool> {
        check_dims(self.dims, q.dims)?;
        debug_assert!(self.max_abs() < self.threshold, "accumulate after a pending flush");
        for (u, &s) in self.u.iter_mut().zip(&q.q) {
            *u += s as i32;
        }
        Ok(self.max_abs() == self.threshold)
    }

    /// Applies every counter at `±T` to `w`, then resets all counters.
    /// Returns the number of bits that actually changed.
    pub fn flush(&mut self, w: &mut ParityCheckMatrix) -> Result<usize> {
        check_dims(self.dims, w.dims())?;
        let max = self.max_abs();
        if max < self.threshold {
            return Err(Error::FlushBelowThreshold {
                max,
                threshold: self.threshold,
            });
        }
        let t = self.threshold as i32;
        let k = self.dims.k;
        let mut changed = 0;
        for (i, &u) in self.u.iter().enumerate() {
            if u.abs() != t {
                continue;
            }
            let (r, c) = (i / k, i % k);
            let target = u < 0;
            if w.w_bit(r, c) != target {
                w.set_w_bit(r, c, target);
                changed += 1;
            }
        }
        self.u.fill(0);
        Ok(changed)
    }
}

/// Running elementwise sum of per-sample gradient signs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignSum {
    dims: CodeDimensions,
    sum: Vec<i32>,
}

impl SignSum {
    pub fn new(dims: CodeDimensions) -> Self {
        SignSum {
            dims,
            sum: vec![0; dims.checks() * dims.k],
        }
    }

    pub fn add(&mut self, grad: &WGradient) -> Result<()> {
        check_dims(self.dims, grad.dims())?;
        for (s, &g) in self.sum.iter_mut().zip(grad.values()) {
            *s += sign(g) as i32;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &SignSum) {
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
    }

    pub fn quantize(&self) -> QuantizedGradient {
        QuantizedGradient {
            dims: self.dims,
            q: self.sum.iter().map(|&s| s.signum() as i8).collect(),
        }
    }
}

/// `sign(Σ_samples sign(grad))` elementwise.
pub fn s_gqla_batch_quantize(per_sample: &[WGradient]) -> Result<QuantizedGradient> {
    let first = per_sample.first().ok_or(Error::Empty("per-sample gradient list"))?;
    let mut acc = SignSum::new(first.dims());
    for g in per_sample {
        acc.add(g)?;
    }
    Ok(acc.quantize())
}

/// Real-valued shadow weights whose forward view is `step(w_real)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DsfState {
    dims: CodeDimensions,
    w_real: Vec<f64>,
}

impl DsfState {
    pub fn new(dims: CodeDimensions, w_real: Vec<f64>) -> Result<Self> {
        if w_real.len() != dims.checks() * dims.k {
            return Err(Error::DimensionMismatch {
                expected: dims.checks() * dims.k,
                found: w_real.len(),
            });
        }
        Ok(DsfState { dims, w_real })
    }

    pub fn dims(&self) -> CodeDimensions {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.w_real
    }

    /// `step(x) = 1` iff `x > 0`.
    pub fn binary_view(&self) -> ParityCheckMatrix {
        let bits: Vec<u8> = self.w_real.iter().map(|&x| (x > 0.0) as u8).collect();
        ParityCheckMatrix::from_w_bits(self.dims, &bits).expect("shape checked at construction")
    }
}

/// `w_real -= lr · grad`; returns how many bits of the binary view flipped.
pub fn dsf_step(state: &mut DsfState, grad: &WGradient, lr: f64) -> Result<usize> {
    check_dims(state.dims, grad.dims())?;
    let mut changed = 0;
    for (w, &g) in state.w_real.iter_mut().zip(grad.values()) {
        let before = *w > 0.0;
        *w -= lr * g;
        changed += (before != (*w > 0.0)) as usize;
    }
    Ok(changed)
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialWeights {
    Binary(ParityCheckMatrix),
    Dsf(DsfState),
}

impl InitialWeights {
    pub fn binary_view(&self) -> ParityCheckMatrix {
        match self {
            InitialWeights::Binary(w) => w.clone(),
            InitialWeights::Dsf(s) => s.binary_view(),
        }
    }
}

/// Bernoulli(`density`) initial `W`; DSF uses `±V` on the same draws, so a
/// seed gives the same starting code for every optimizer.
pub fn init_weights(
    spec: &OptimizerSpec,
    dims: CodeDimensions,
    density: DensitySpec,
    seed: u64,
) -> InitialWeights {
    let mut rng = substream(derive_seed(seed, &[domain::INIT]), 0);
    match spec.kind {
        OptimizerKind::Dsf => {
            let v = spec.init_magnitude;
            let w_real = (0..dims.checks() * dims.k)
                .map(|_| if rng.random::<f64>() < density.p() { v } else { -v })
                .collect();
            InitialWeights::Dsf(DsfState { dims, w_real })
        }
        _ => InitialWeights::Binary(sample_w_with(dims, density, &mut rng)),
    }
}

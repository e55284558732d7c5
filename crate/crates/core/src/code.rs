//! Systematic linear block codes in standard form `H = [W | I]`.
//!
//! Only `W`, the `(n-k) x k` block, is free. Column `j < k` of `H` carries
//! message bit `j`, so the generator is `G = [I_k | Wᵀ]` and `c = u·G` gives
//! `c[..k] = u` followed by the parity bits `c[k..] = W·u`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf2::{unpack_bits, BitMatrix};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeDimensions {
    pub n: usize,
    pub k: usize,
}

impl CodeDimensions {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k >= n {
            return Err(Error::InvalidDimensions { n, k });
        }
        Ok(CodeDimensions { n, k })
    }

    /// Number of parity checks, `n - k`.
    #[inline]
    pub fn checks(&self) -> usize {
        self.n - self.k
    }

    pub fn rate(&self) -> f64 {
        self.k as f64 / self.n as f64
    }
}

/// Per-element Bernoulli probability of a one in `W`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec(f64);

impl DensitySpec {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidDensity(p));
        }
        Ok(DensitySpec(p))
    }

    pub fn p(&self) -> f64 {
        self.0
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ParityCheckMatrix {
    dims: CodeDimensions,
    w: BitMatrix,
}

impl ParityCheckMatrix {
    pub fn zeros(dims: CodeDimensions) -> Self {
        ParityCheckMatrix {
            dims,
            w: BitMatrix::zeros(dims.checks(), dims.k),
        }
    }

    pub fn from_w(dims: CodeDimensions, w: BitMatrix) -> Result<Self> {
        if w.rows() != dims.checks() {
            return Err(Error::DimensionMismatch {
                expected: dims.checks(),
                found: w.rows(),
            });
        }
        if w.cols() != dims.k {
            return Err(Error::DimensionMismatch {
                expected: dims.k,
                found: w.cols(),
            });
        }
        Ok(ParityCheckMatrix { dims, w })
    }

    /// Builds from row-major 0/1 values of `W`.
    pub fn from_w_bits(dims: CodeDimensions, bits: &[u8]) -> Result<Self> {
        let expected = dims.checks() * dims.k;
        if bits.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: bits.len(),
            });
        }
        Self::from_w(dims, BitMatrix::from_bits(dims.checks(), dims.k, bits))
    }

    pub fn dims(&self) -> CodeDimensions {
        self.dims
    }

    pub fn w(&self) -> &BitMatrix {
        &self.w
    }

    #[inline]
    pub fn w_bit(&self, check: usize, msg_bit: usize) -> bool {
        self.w.get(check, msg_bit)
    }

    pub fn set_w_bit(&mut self, check: usize, msg_bit: usize, value: bool) {
        self.w.set(check, msg_bit, value);
    }

    /// Entry of the full `H = [W | I]`.
    #[inline]
    pub fn h(&self, check: usize, var: usize) -> bool {
        let k = self.dims.k;
        if var < k {
            self.w.get(check, var)
        } else {
            var - k == check
        }
    }

    pub fn full_h(&self) -> BitMatrix {
        self.w.hconcat(&BitMatrix::identity(self.dims.checks()))
    }

    /// Fraction of ones in `W`.
    pub fn w_density(&self) -> f64 {
        self.w.count_ones() as f64 / (self.dims.checks() * self.dims.k) as f64
    }

    /// `H·cᵀ` over GF(2), one bit per check.
    pub fn syndrome(&self, codeword: &[u8]) -> Result<Vec<u8>> {
        if codeword.len() != self.dims.n {
            return Err(Error::DimensionMismatch {
                expected: self.dims.n,
                found: codeword.len(),
            });
        }
        let k = self.dims.k;
        Ok((0..self.dims.checks())
            .map(|c| {
                let mut s = codeword[k + c] & 1;
                for j in 0..k {
                    if self.w.get(c, j) {
                        s ^= codeword[j] & 1;
                    }
                }
                s
            })
            .collect())
    }
}

impl std::fmt::Debug for ParityCheckMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ParityCheckMatrix(n={}, k={}) W: {:?}", self.dims.n, self.dims.k, self.w)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorMatrix {
    dims: CodeDimensions,
    rows: BitMatrix,
}

impl GeneratorMatrix {
    pub fn dims(&self) -> CodeDimensions {
        self.dims
    }

    /// The `k x n` matrix `[I_k | Wᵀ]`.
    pub fn rows(&self) -> &BitMatrix {
        &self.rows
    }

    /// `c = u·G` over GF(2).
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        let mut c = vec![0u8; self.dims.n];
        self.encode_into(message, &mut c)?;
        Ok(c)
    }

    pub fn encode_into(&self, message: &[u8], codeword: &mut [u8]) -> Result<()> {
        if message.len() != self.dims.k {
            return Err(Error::DimensionMismatch {
                expected: self.dims.k,
                found: message.len(),
            });
        }
        if codeword.len() != self.dims.n {
            return Err(Error::DimensionMismatch {
                expected: self.dims.n,
                found: codeword.len(),
            });
        }
        let mut words = vec![0u64; self.dims.n.div_ceil(64)];
        self.rows.left_mul(message, &mut words);
        unpack_bits(&words, self.dims.n, codeword);
        Ok(())
    }
}

pub fn build_generator(h: &ParityCheckMatrix) -> GeneratorMatrix {
    let dims = h.dims();
    GeneratorMatrix {
        dims,
        rows: BitMatrix::identity(dims.k).hconcat(&h.w().transpose()),
    }
}

pub fn encode(g: &GeneratorMatrix, message: &[u8]) -> Result<Vec<u8>> {
    g.encode(message)
}

/// Draws `W` with i.i.d. Bernoulli(p) entries; deterministic in `seed`.
pub fn sample_w(dims: CodeDimensions, density: DensitySpec, seed: u64) -> ParityCheckMatrix {
    let mut rng = rng::substream(rng::derive_seed(seed, &[rng::domain::SAMPLE_W]), 0);
    sample_w_with(dims, density, &mut rng)
}

pub(crate) fn sample_w_with<R: Rng>(
    dims: CodeDimensions,
    density: DensitySpec,
    rng: &mut R,
) -> ParityCheckMatrix {
    let mut w = BitMatrix::zeros(dims.checks(), dims.k);
    let p = density.p();
    for r in 0..dims.checks() {
        for c in 0..dims.k {
            // random::<f64>() is in [0, 1): p = 0 never sets, p = 1 always does
            if rng.random::<f64>() < p {
                w.set(r, c, true);
            }
        }
    }
    ParityCheckMatrix { dims, w }
}

//! Training samples, AWGN transmission and sequential BLER estimation.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bp::{BpConfig, SparseDecoder};
use crate::code::{build_generator, CodeDimensions, GeneratorMatrix, ParityCheckMatrix};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, domain, substream};

/// Controlled-error training sample: `n_errors` entries at `-alpha`, the rest at `+alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorPatternSpec {
    pub n_errors: usize,
    pub alpha: f64,
}

impl ErrorPatternSpec {
    pub fn new(n_errors: usize, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha {alpha} must be > 0")));
        }
        Ok(ErrorPatternSpec { n_errors, alpha })
    }
}

/// Fills `out` with one training sample drawn from `rng`.
pub fn sample_training_llrs_with<R: Rng + ?Sized>(spec: &ErrorPatternSpec, rng: &mut R, out: &mut [f64]) {
    let n = out.len();
    assert!(spec.n_errors <= n, "n_errors exceeds block length");
    out.fill(spec.alpha);
    for i in index::sample(rng, n, spec.n_errors) {
        out[i] = -spec.alpha;
    }
}

pub fn sample_training_llrs(n: usize, spec: &ErrorPatternSpec, seed: u64) -> Result<Vec<f64>> {
    if spec.n_errors > n {
        return Err(Error::InvalidConfig(format!(
            "n_errors {} exceeds block length {n}",
            spec.n_errors
        )));
    }
    let mut out = vec![0.0; n];
    sample_training_llrs_with(spec, &mut substream(seed, 0), &mut out);
    Ok(out)
}

/// Binary-input AWGN channel at a given `Eb/N0`, unit symbol energy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub ebno_db: f64,
    pub rate: f64,
}

impl ChannelSpec {
    pub fn new(ebno_db: f64, rate: f64) -> Result<Self> {
        if !ebno_db.is_finite() || !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "bad channel: ebno {ebno_db} dB, rate {rate}"
            )));
        }
        Ok(ChannelSpec { ebno_db, rate })
    }

    pub fn for_code(ebno_db: f64, dims: CodeDimensions) -> Result<Self> {
        Self::new(ebno_db, dims.rate())
    }

    pub fn sigma2(&self) -> f64 {
        1.0 / (2.0 * self.rate * 10f64.powf(self.ebno_db / 10.0))
    }
}

/// Transmits `codeword` as `1 - 2·bit` plus Gaussian noise and writes channel LLRs.
pub fn awgn_llrs_with<R: Rng + ?Sized>(codeword: &[u8], chan: &ChannelSpec, rng: &mut R, out: &mut [f64]) {
    let sigma2 = chan.sigma2();
    let sigma = sigma2.sqrt();
    let scale = 2.0 / sigma2;
    for (o, &b) in out.iter_mut().zip(codeword) {
        let g: f64 = rng.sample(StandardNormal);
        let s = 1.0 - 2.0 * b as f64;
        *o = scale * (s + sigma * g);
    }
}

pub fn awgn_llrs(codeword: &[u8], chan: &ChannelSpec, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; codeword.len()];
    awgn_llrs_with(codeword, chan, &mut substream(seed, 0), &mut out);
    out
}

/// 97.5% standard normal quantile.
pub const Z_95: f64 = 1.96;
pub const DEFAULT_MAX_BLOCKS: u64 = 100_000_000;
/// No stop decision is taken before this many blocks.
pub const MIN_BLOCKS: u64 = 100;

/// Agresti-Coull point estimate and half-width.
pub fn agresti_coull(blocks: u64, errors: u64, z: f64) -> (f64, f64) {
    let z2 = z * z;
    let nt = blocks as f64 + z2;
    let p = (errors as f64 + 0.5 * z2) / nt;
    (p, z * (p * (1.0 - p) / nt).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlerEstimate {
    pub blocks: u64,
    pub block_errors: u64,
    pub z: f64,
    pub p_tilde: f64,
    pub half_width: f64,
    pub target_rel: f64,
    pub max_blocks: u64,
    /// False when the block cap was hit before the precision target.
    pub converged: bool,
}

impl BlerEstimate {
    pub fn empty(target_rel: f64, max_blocks: u64) -> Self {
        BlerEstimate {
            blocks: 0,
            block_errors: 0,
            z: Z_95,
            p_tilde: 0.5,
            half_width: f64::INFINITY,
            target_rel,
            max_blocks,
            converged: false,
        }
    }

    /// Records one more block; returns true once sampling should stop.
    pub fn push(&mut self, error: bool) -> bool {
        self.blocks += 1;
        self.block_errors += error as u64;
        let (p, half, stop) = agresti_coull_update(self);
        self.p_tilde = p;
        self.half_width = half;
        if stop {
            self.converged = self.precise();
        }
        stop
    }

    fn precise(&self) -> bool {
        self.blocks >= MIN_BLOCKS.min(self.max_blocks) && self.half_width <= self.target_rel * self.p_tilde
    }

    pub fn relative_half_width(&self) -> f64 {
        self.half_width / self.p_tilde
    }

    pub const CSV_HEADER: &'static str = "ebno_db,blocks,errors,p_tilde,half_width,converged";

    pub fn csv_row(&self, ebno_db: f64) -> String {
        format!(
            "{ebno_db},{},{},{:e},{:e},{}",
            self.blocks, self.block_errors, self.p_tilde, self.half_width, self.converged
        )
    }
}

/// Recomputes the interval for the counts in `e` and decides whether to stop.
pub fn agresti_coull_update(e: &BlerEstimate) -> (f64, f64, bool) {
    let (p, half) = agresti_coull(e.blocks, e.block_errors, e.z);
    let floor = MIN_BLOCKS.min(e.max_blocks);
    let stop = e.blocks >= e.max_blocks || (e.blocks >= floor && half <= e.target_rel * p);
    (p, half, stop)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Random messages through the systematic encoder.
    FullEncoder,
    /// Always the all-zero codeword.
    AllZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iterations: usize,
    pub target_rel: f64,
    pub max_blocks: u64,
    pub mode: EvalMode,
    pub seed: u64,
}

impl EvalConfig {
    pub fn new(iterations: usize, target_rel: f64, seed: u64) -> Self {
        EvalConfig {
            iterations,
            target_rel,
            max_blocks: DEFAULT_MAX_BLOCKS,
            mode: EvalMode::FullEncoder,
            seed,
        }
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_max_blocks(mut self, max_blocks: u64) -> Self {
        self.max_blocks = max_blocks;
        self
    }
}

struct BlockSim {
    decoder: SparseDecoder,
    cfg: BpConfig,
    chan: ChannelSpec,
    generator: Option<GeneratorMatrix>,
    k: usize,
    key: u64,
    msg: Vec<u8>,
    codeword: Vec<u8>,
    llr: Vec<f64>,
    out: Vec<f64>,
}

impl BlockSim {
    fn new(h: &ParityCheckMatrix, chan: ChannelSpec, cfg: &EvalConfig) -> Self {
        let dims = h.dims();
        BlockSim {
            decoder: SparseDecoder::new(h),
            cfg: BpConfig::new(cfg.iterations),
            chan,
            generator: (cfg.mode == EvalMode::FullEncoder).then(|| build_generator(h)),
            k: dims.k,
            key: derive_seed(cfg.seed, &[domain::EVALUATION]),
            msg: vec![0; dims.k],
            codeword: vec![0; dims.n],
            llr: vec![0.0; dims.n],
            out: vec![0.0; dims.n],
        }
    }

    fn run(&mut self, block: u64) -> bool {
        let mut rng = substream(self.key, block);
        if let Some(g) = &self.generator {
            for b in self.msg.iter_mut() {
                *b = rng.random::<bool>() as u8;
            }
            g.encode_into(&self.msg[..self.k], &mut self.codeword)
                .expect("message length matches k");
        }
        awgn_llrs_with(&self.codeword, &self.chan, &mut rng, &mut self.llr);
        self.decoder
            .decode_differs(&self.llr, &self.cfg, &mut self.out, &self.codeword)
    }
}

/// Monte-Carlo BLER with Agresti-Coull sequential stopping.
///
/// Block `i` always draws from substream `i` of the run key. Blocks are
/// simulated in parallel batches, then scanned in order, so the stopping
/// block and the final counts do not depend on the thread count.
pub fn estimate_bler(h: &ParityCheckMatrix, chan: &ChannelSpec, cfg: &EvalConfig) -> Result<BlerEstimate> {
    BpConfig::new(cfg.iterations).validate()?;
    if !(cfg.target_rel > 0.0) || cfg.max_blocks == 0 {
        return Err(Error::InvalidConfig(format!(
            "target_rel {} and max_blocks {} must be positive",
            cfg.target_rel, cfg.max_blocks
        )));
    }
    let mut est = BlerEstimate::empty(cfg.target_rel, cfg.max_blocks);
    let chunk = 256u64;
    let threads = rayon::current_num_threads() as u64;
    loop {
        // grow batches with the sample size to keep overshoot below ~25%
        let want = (est.blocks / 4).clamp(chunk * threads, 1 << 20);
        let start = est.blocks;
        let end = (start + want).min(cfg.max_blocks);
        let flags: Vec<bool> = (start..end)
            .collect::<Vec<_>>()
            .par_chunks(chunk as usize)
            .map_init(
                || BlockSim::new(h, *chan, cfg),
                |sim, blocks| blocks.iter().map(|&b| sim.run(b)).collect::<Vec<_>>(),
            )
            .flatten()
            .collect();
        for f in flags {
            if est.push(f) {
                return Ok(est);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::tests::hamming74;
    use proptest::prelude::*;

    #[test]
    fn training_sample_has_exact_error_count() {
        let spec = ErrorPatternSpec::new(2, 2.5).unwrap();
        let s = sample_training_llrs(6, &spec, 3).unwrap();
        assert_eq!(s.iter().filter(|&&x| x == -2.5).count(), 2);
        assert_eq!(s.iter().filter(|&&x| x == 2.5).count(), 4);
        let s = sample_training_llrs(6, &ErrorPatternSpec::new(0, 1.0).unwrap(), 3).unwrap();
        assert!(s.iter().all(|&x| x == 1.0));
        assert!(sample_training_llrs(3, &ErrorPatternSpec::new(4, 1.0).unwrap(), 0).is_err());
        assert!(ErrorPatternSpec::new(1, 0.0).is_err());
    }

    #[test]
    fn error_positions_are_uniform() {
        let spec = ErrorPatternSpec::new(2, 1.0).unwrap();
        let draws = 100_000;
        let mut counts = [0u32; 8];
        let mut rng = substream(11, 0);
        let mut buf = [0.0; 8];
        for _ in 0..draws {
            sample_training_llrs_with(&spec, &mut rng, &mut buf);
            for (c, &x) in counts.iter_mut().zip(&buf) {
                *c += (x < 0.0) as u32;
            }
        }
        let sd = (draws as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 0.25 * draws as f64).abs() < 3.0 * sd, "{c}");
        }
    }

    #[test]
    fn noise_variance_formula() {
        let ch = ChannelSpec::new(0.0, 0.5).unwrap();
        assert!((ch.sigma2() - 1.0).abs() < 1e-15);
        let ch = ChannelSpec::new(3.0, 0.5).unwrap();
        assert!((ch.sigma2() - 10f64.powf(-0.3)).abs() < 1e-15);
    }

    #[test]
    fn noiseless_llrs_follow_symbols() {
        let ch = ChannelSpec::new(60.0, 0.5).unwrap();
        let cw = [0, 1, 1, 0, 1, 0, 0];
        let llr = awgn_llrs(&cw, &ch, 5);
        for (l, b) in llr.iter().zip(cw) {
            assert_eq!(*l < 0.0, b == 1);
        }
    }

    #[test]
    fn llr_mean_matches_gaussian_moments() {
        let ch = ChannelSpec::new(1.0, 0.5).unwrap();
        let s2 = ch.sigma2();
        let draws = 100_000;
        let mut rng = substream(4, 0);
        let mut buf = [0.0];
        let mut sum = 0.0;
        for _ in 0..draws {
            awgn_llrs_with(&[0], &ch, &mut rng, &mut buf);
            sum += buf[0];
        }
        // llr = 2y/σ² has mean 2/σ² and variance 4/σ²
        let sd = (4.0 / s2 / draws as f64).sqrt();
        assert!((sum / draws as f64 - 2.0 / s2).abs() < 3.0 * sd);
    }

    #[test]
    fn agresti_coull_reference_values() {
        // 40-digit reference evaluations
        let (p, h) = agresti_coull(1000, 50, Z_95);
        assert!((p - 0.051_722_104_363_875_735).abs() < 1e-12);
        assert!((h - 0.013_700_278_118_236_174).abs() < 1e-12);
        let (p, h) = agresti_coull(100, 0, Z_95);
        assert!((p - 0.018_497_403_738_000_955).abs() < 1e-12);
        assert!((h - 0.025_916_210_578_884_203).abs() < 1e-12);
    }

    #[test]
    fn stop_rule() {
        let mut e = BlerEstimate::empty(0.1, DEFAULT_MAX_BLOCKS);
        e.blocks = 1000;
        e.block_errors = 50;
        assert!(!agresti_coull_update(&e).2);
        e.target_rel = 10.0;
        assert!(agresti_coull_update(&e).2);
        e.blocks = 99;
        e.block_errors = 0;
        assert!(!agresti_coull_update(&e).2);
        e.max_blocks = 99;
        assert!(agresti_coull_update(&e).2);
    }

    #[test]
    fn noiseless_run_hits_block_cap_unconverged() {
        let h = hamming74();
        let ch = ChannelSpec::for_code(60.0, h.dims()).unwrap();
        let est = estimate_bler(&h, &ch, &EvalConfig::new(5, 0.1, 1).with_max_blocks(5000)).unwrap();
        assert_eq!(est.blocks, 5000);
        assert_eq!(est.block_errors, 0);
        assert!(!est.converged);
        let z2 = Z_95 * Z_95;
        assert!((est.p_tilde - 0.5 * z2 / (5000.0 + z2)).abs() < 1e-15);
    }

    #[test]
    fn vacuous_target_stops_at_floor() {
        let h = hamming74();
        let ch = ChannelSpec::for_code(2.0, h.dims()).unwrap();
        let est = estimate_bler(&h, &ch, &EvalConfig::new(5, 10.0, 1)).unwrap();
        assert_eq!(est.blocks, MIN_BLOCKS);
        assert!(est.converged);
    }

    #[test]
    fn hamming_bler_decreases_with_snr() {
        let h = hamming74();
        let mut prev: Option<BlerEstimate> = None;
        for ebno in [0.0, 2.0, 4.0, 6.0] {
            let ch = ChannelSpec::for_code(ebno, h.dims()).unwrap();
            let est = estimate_bler(&h, &ch, &EvalConfig::new(5, 0.1, 9)).unwrap();
            assert!(est.converged);
            if let Some(p) = prev {
                let sep = (p.half_width.powi(2) + est.half_width.powi(2)).sqrt() / Z_95;
                assert!(p.p_tilde - est.p_tilde > 3.0 * sep, "{ebno}: {p:?} {est:?}");
            }
            prev = Some(est);
        }
    }

    #[test]
    fn all_zero_and_encoder_modes_agree() {
        let h = crate::code::sample_w(CodeDimensions::new(16, 8).unwrap(), crate::DensitySpec::new(0.4).unwrap(), 2);
        let ch = ChannelSpec::for_code(3.0, h.dims()).unwrap();
        let a = estimate_bler(&h, &ch, &EvalConfig::new(5, 0.1, 1)).unwrap();
        let b = estimate_bler(&h, &ch, &EvalConfig::new(5, 0.1, 2).with_mode(EvalMode::AllZero)).unwrap();
        assert!((a.p_tilde - b.p_tilde).abs() <= a.half_width + b.half_width, "{a:?} {b:?}");
    }

    #[test]
    fn estimate_is_independent_of_thread_count() {
        let h = hamming74();
        let ch = ChannelSpec::for_code(3.0, h.dims()).unwrap();
        let cfg = EvalConfig::new(5, 0.1, 77);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_bler(&h, &ch, &cfg).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(4));
    }

    #[test]
    fn csv_row_uses_scientific_notation() {
        let mut e = BlerEstimate::empty(0.1, 10);
        e.push(true);
        let row = e.csv_row(2.5);
        assert!(row.starts_with("2.5,1,1,"));
        assert!(row.contains('e'));
        assert!(row.ends_with(",false"));
    }

    proptest! {
        #[test]
        fn more_errors_never_lower_the_estimate(blocks in 1u64..1_000_000, frac in 0.0f64..1.0) {
            let e = ((blocks as f64) * frac) as u64;
            prop_assume!(e < blocks);
            let (p0, _) = agresti_coull(blocks, e, Z_95);
            let (p1, _) = agresti_coull(blocks, e + 1, Z_95);
            prop_assert!(p1 > p0);
            prop_assert!(p0 > 0.0 && p1 < 1.0);
        }
    }
}

//! Random-code campaigns, empirical BLER distributions and the probability
//! that a random search of equal budget would have found a better code.

use serde::{Deserialize, Serialize};

use crate::channel::{estimate_bler, BlerEstimate, ChannelSpec, EvalConfig, DEFAULT_MAX_BLOCKS};
use crate::code::{sample_w, CodeDimensions, DensitySpec, ParityCheckMatrix};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, domain};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlerPoint {
    pub ebno_db: f64,
    #[serde(flatten)]
    pub estimate: BlerEstimate,
}

/// One randomly drawn code and its BLER curve. The code is `sample_w(dims, density, code_seed)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomSearchRecord {
    pub n: usize,
    pub k: usize,
    pub density: f64,
    pub index: u64,
    pub code_seed: u64,
    pub points: Vec<BlerPoint>,
}

impl RandomSearchRecord {
    pub fn dims(&self) -> Result<CodeDimensions> {
        CodeDimensions::new(self.n, self.k)
    }

    pub fn code(&self) -> Result<ParityCheckMatrix> {
        Ok(sample_w(self.dims()?, DensitySpec::new(self.density)?, self.code_seed))
    }

    pub fn at(&self, ebno_db: f64) -> Option<&BlerEstimate> {
        self.points
            .iter()
            .find(|p| same_ebno(p.ebno_db, ebno_db))
            .map(|p| &p.estimate)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::parse(format!("column {}", e.column()), e.to_string()))
    }
}

fn same_ebno(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Parses JSON-lines text; blank lines are skipped, errors name the line.
pub fn parse_records(text: &str) -> Result<Vec<RandomSearchRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(line)
            .map_err(|e| Error::parse(format!("line {} column {}", i + 1, e.column()), e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub iterations: usize,
    pub target_rel: f64,
    pub max_blocks: u64,
    pub seed: u64,
    /// First record index; lets an interrupted campaign continue where it stopped.
    pub start_index: u64,
}

impl CampaignConfig {
    pub fn new(target_rel: f64, seed: u64) -> Self {
        CampaignConfig {
            iterations: 5,
            target_rel,
            max_blocks: DEFAULT_MAX_BLOCKS,
            seed,
            start_index: 0,
        }
    }
}

/// Code seed of record `index`; depends on the density so campaigns at
/// different densities draw unrelated codes.
pub fn campaign_code_seed(seed: u64, density: f64, index: u64) -> u64 {
    derive_seed(seed, &[domain::CAMPAIGN_CODE, density.to_bits(), index])
}

/// Draws `count` codes and estimates each at every Eb/N0, calling `sink` per record.
pub fn random_search_campaign_with(
    dims: CodeDimensions,
    density: DensitySpec,
    count: u64,
    ebno_list: &[f64],
    cfg: &CampaignConfig,
    mut sink: impl FnMut(&RandomSearchRecord) -> Result<()>,
) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidConfig("campaign count must be >= 1".into()));
    }
    if ebno_list.is_empty() {
        return Err(Error::Empty("Eb/N0 list"));
    }
    let channels: Vec<ChannelSpec> = ebno_list
        .iter()
        .map(|&e| ChannelSpec::for_code(e, dims))
        .collect::<Result<_>>()?;
    for index in cfg.start_index..cfg.start_index + count {
        let code_seed = campaign_code_seed(cfg.seed, density.p(), index);
        let h = sample_w(dims, density, code_seed);
        let mut points = Vec::with_capacity(channels.len());
        for ch in &channels {
            let eval_seed = derive_seed(code_seed, &[domain::CAMPAIGN_EVAL, ch.ebno_db.to_bits()]);
            let ec = EvalConfig::new(cfg.iterations, cfg.target_rel, eval_seed).with_max_blocks(cfg.max_blocks);
            points.push(BlerPoint {
                ebno_db: ch.ebno_db,
                estimate: estimate_bler(&h, ch, &ec)?,
            });
        }
        sink(&RandomSearchRecord {
            n: dims.n,
            k: dims.k,
            density: density.p(),
            index,
            code_seed,
            points,
        })?;
    }
    Ok(())
}

pub fn random_search_campaign(
    dims: CodeDimensions,
    density: DensitySpec,
    count: u64,
    ebno_list: &[f64],
    cfg: &CampaignConfig,
) -> Result<Vec<RandomSearchRecord>> {
    let mut out = Vec::with_capacity(count as usize);
    random_search_campaign_with(dims, density, count, ebno_list, cfg, |r| {
        out.push(r.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Empirical distribution of converged BLER estimates at one Eb/N0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    pub n: usize,
    pub k: usize,
    pub density: f64,
    pub ebno_db: f64,
    samples: Vec<f64>,
    /// Records at this Eb/N0 left out because their estimate did not converge.
    pub unconverged: usize,
}

impl EmpiricalCdf {
    pub fn from_samples(dims: CodeDimensions, density: f64, ebno_db: f64, mut samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("BLER samples"));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig("non-finite BLER sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf {
            n: dims.n,
            k: dims.k,
            density,
            ebno_db,
            samples,
            unconverged: 0,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `F(x)`: fraction of samples `<= x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.samples.partition_point(|&s| s <= x) as f64 / self.len() as f64
    }

    /// Fraction of samples strictly below `x`.
    pub fn fraction_below(&self, x: f64) -> f64 {
        self.samples.partition_point(|&s| s < x) as f64 / self.len() as f64
    }

    /// Piecewise-linear inverse of the empirical CDF: the `i`-th smallest
    /// sample sits at `q = i / len`, values between ranks are interpolated
    /// and `q <= 1 / len` gives the minimum.
    pub fn quantile(&self, q: f64) -> f64 {
        let s = &self.samples;
        let mut h = (q.clamp(0.0, 1.0) * s.len() as f64 - 1.0).max(0.0);
        // q = i / len should land exactly on rank i despite rounding
        if (h - h.round()).abs() < 1e-9 {
            h = h.round();
        }
        let lo = h.floor() as usize;
        if lo + 1 >= s.len() {
            return s[s.len() - 1];
        }
        s[lo] + (h - lo as f64) * (s[lo + 1] - s[lo])
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.len() - 1]
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// Distribution-free standard error of the median: half the spread of
    /// the order statistics one binomial standard deviation either side.
    pub fn median_sigma(&self) -> f64 {
        let d = 0.5 / (self.len() as f64).sqrt();
        0.5 * (self.quantile(0.5 + d) - self.quantile(0.5 - d))
    }
}

/// Collects the converged estimates at `ebno_db` from records of one code family.
pub fn build_cdf(records: &[RandomSearchRecord], ebno_db: f64) -> Result<EmpiricalCdf> {
    let first = records.first().ok_or(Error::Empty("campaign records"))?;
    let mut samples = Vec::new();
    let mut unconverged = 0;
    for r in records {
        if (r.n, r.k) != (first.n, first.k) || r.density != first.density {
            return Err(Error::InvalidConfig(format!(
                "mixed campaigns: ({},{}) density {} vs ({},{}) density {}",
                first.n, first.k, first.density, r.n, r.k, r.density
            )));
        }
        match r.at(ebno_db) {
            Some(e) if e.converged => samples.push(e.p_tilde),
            Some(_) => unconverged += 1,
            None => {}
        }
    }
    if samples.is_empty() {
        return Err(Error::Empty("converged estimates at the requested Eb/N0"));
    }
    let mut cdf = EmpiricalCdf::from_samples(first.dims()?, first.density, ebno_db, samples)?;
    cdf.unconverged = unconverged;
    Ok(cdf)
}

/// Largest Eb/N0 present in any record.
pub fn max_ebno(records: &[RandomSearchRecord]) -> Option<f64> {
    records
        .iter()
        .flat_map(|r| r.points.iter().map(|p| p.ebno_db))
        .max_by(f64::total_cmp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub learned_bler: f64,
    pub updates: u64,
    /// Fraction of random codes strictly better than the learned one.
    pub q: f64,
    /// Probability that `updates` random draws contain at least one better code.
    pub p_beat: f64,
}

impl ComparisonResult {
    pub const CSV_HEADER: &'static str = "label,learned_bler,updates,q,p_beat";

    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{label},{:e},{},{:e},{:e}",
            self.learned_bler, self.updates, self.q, self.p_beat
        )
    }
}

/// `1 - (1 - q)^m`, accurate for small `q`.
pub fn p_beat(q: f64, m: u64) -> f64 {
    if q >= 1.0 {
        return 1.0;
    }
    -(m as f64 * (-q).ln_1p()).exp_m1()
}

pub fn beat_probability(cdf: &EmpiricalCdf, learned_bler: f64, updates: u64) -> Result<ComparisonResult> {
    if updates == 0 {
        return Err(Error::InvalidConfig("update count M must be >= 1".into()));
    }
    let q = cdf.fraction_below(learned_bler);
    Ok(ComparisonResult {
        learned_bler,
        updates,
        q,
        p_beat: p_beat(q, updates),
    })
}

/// Arithmetic mean of `p_beat` over sessions.
pub fn mean_p_beat(results: &[ComparisonResult]) -> Option<f64> {
    (!results.is_empty()).then(|| results.iter().map(|r| r.p_beat).sum::<f64>() / results.len() as f64)
}

/// Order statistics of one density's distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub density: f64,
    pub count: usize,
    pub unconverged: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl DensitySummary {
    pub fn of(cdf: &EmpiricalCdf) -> Self {
        DensitySummary {
            density: cdf.density,
            count: cdf.len(),
            unconverged: cdf.unconverged,
            min: cdf.min(),
            q25: cdf.quantile(0.25),
            median: cdf.median(),
            q75: cdf.quantile(0.75),
            max: cdf.max(),
        }
    }

    pub const CSV_HEADER: &'static str = "density,count,unconverged,min,q25,median,q75,max";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{:e},{:e},{:e}",
            self.density, self.count, self.unconverged, self.min, self.q25, self.median, self.q75, self.max
        )
    }
}

/// Best density for each order statistic (lowest BLER wins, ties to the lower density).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRanking {
    pub best: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub worst: f64,
}

impl DensityRanking {
    /// Density used as the random benchmark: the first-quartile optimum.
    pub fn benchmark(&self) -> f64 {
        self.q25
    }

    pub fn csv(&self) -> String {
        format!(
            "statistic,density\nbest,{}\n25%,{}\n50%,{}\n75%,{}\nworst,{}\n",
            self.best, self.q25, self.median, self.q75, self.worst
        )
    }
}

pub fn rank_densities(summaries: &[DensitySummary]) -> Result<DensityRanking> {
    if summaries.is_empty() {
        return Err(Error::Empty("density summaries"));
    }
    let pick = |f: fn(&DensitySummary) -> f64| {
        summaries
            .iter()
            .min_by(|a, b| f(a).total_cmp(&f(b)).then(a.density.total_cmp(&b.density)))
            .map(|s| s.density)
            .expect("nonempty")
    };
    Ok(DensityRanking {
        best: pick(|s| s.min),
        q25: pick(|s| s.q25),
        median: pick(|s| s.median),
        q75: pick(|s| s.q75),
        worst: pick(|s| s.max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims() -> CodeDimensions {
        CodeDimensions::new(16, 8).unwrap()
    }

    fn cdf(samples: &[f64]) -> EmpiricalCdf {
        EmpiricalCdf::from_samples(dims(), 0.3, 4.0, samples.to_vec()).unwrap()
    }

    #[test]
    fn ecdf_and_quantiles() {
        let c = cdf(&[0.3, 0.1, 0.2]);
        assert!((c.cdf(0.2) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.cdf(0.05), 0.0);
        assert_eq!(c.cdf(1.0), 1.0);
        assert_eq!(c.quantile(0.0), 0.1);
        assert_eq!(c.quantile(1.0), 0.3);
        assert!((c.quantile(0.5) - 0.15).abs() < 1e-15);
        assert!(EmpiricalCdf::from_samples(dims(), 0.3, 4.0, vec![]).is_err());
    }

    #[test]
    fn beat_probability_values() {
        // 1 - (1 - 1e-4)^10000 at 40 digits
        assert!((p_beat(1e-4, 10_000) - 0.632_138_953_567_070_1).abs() < 1e-12);
        assert_eq!(p_beat(0.0, 12345), 0.0);
        assert!((p_beat(0.5, 1) - 0.5).abs() < 1e-15);
        assert_eq!(p_beat(1.0, 3), 1.0);

        let c = cdf(&[0.1, 0.2, 0.3, 0.4]);
        let r = beat_probability(&c, 0.3, 2).unwrap();
        assert_eq!(r.q, 0.5);
        assert!((r.p_beat - 0.75).abs() < 1e-15);
        assert_eq!(beat_probability(&c, 0.05, 100).unwrap().p_beat, 0.0);
        assert!(beat_probability(&c, 0.3, 0).is_err());
    }

    #[test]
    fn degenerate_density_zero_campaign() {
        let recs = random_search_campaign(
            dims(),
            DensitySpec::new(0.0).unwrap(),
            1,
            &[2.0],
            &CampaignConfig::new(0.3, 1),
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].code().unwrap().w().count_ones(), 0);
        assert!(recs[0].at(2.0).unwrap().converged);
    }

    #[test]
    fn campaigns_are_reproducible_and_resumable() {
        let d = DensitySpec::new(0.4).unwrap();
        let cfg = CampaignConfig::new(0.3, 9);
        let a = random_search_campaign(dims(), d, 4, &[1.0, 3.0], &cfg).unwrap();
        let b = random_search_campaign(dims(), d, 4, &[1.0, 3.0], &cfg).unwrap();
        assert_eq!(a, b);
        let tail = random_search_campaign(dims(), d, 2, &[1.0, 3.0], &CampaignConfig { start_index: 2, ..cfg }).unwrap();
        assert_eq!(&a[2..], &tail[..]);

        let text: String = a.iter().map(|r| r.to_json_line() + "\n").collect();
        assert_eq!(parse_records(&text).unwrap(), a);
        let err = parse_records("\n{\"n\": 1}\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn cdf_excludes_unconverged_records() {
        let d = DensitySpec::new(0.4).unwrap();
        let mut cfg = CampaignConfig::new(0.1, 2);
        cfg.max_blocks = 150;
        let recs = random_search_campaign(dims(), d, 3, &[6.0, 0.0], &cfg).unwrap();
        let hi = recs.iter().filter(|r| !r.at(6.0).unwrap().converged).count();
        match build_cdf(&recs, 6.0) {
            Ok(c) => assert_eq!(c.unconverged, hi),
            Err(_) => assert_eq!(hi, 3),
        }
        assert!(build_cdf(&recs, 9.0).is_err());
        assert_eq!(max_ebno(&recs), Some(6.0));
    }

    #[test]
    fn ranking_picks_lowest_per_statistic() {
        let a = DensitySummary::of(&EmpiricalCdf::from_samples(dims(), 0.3, 4.0, vec![0.1, 0.2, 0.3, 0.9]).unwrap());
        let b = DensitySummary::of(&EmpiricalCdf::from_samples(dims(), 0.5, 4.0, vec![0.05, 0.4, 0.5, 0.6]).unwrap());
        let r = rank_densities(&[a, b]).unwrap();
        assert_eq!(r.best, 0.5);
        assert_eq!(r.median, 0.3);
        assert_eq!(r.worst, 0.5);
        assert_eq!(r.benchmark(), r.q25);
    }

    proptest! {
        #[test]
        fn p_beat_is_monotone(q in 0.0f64..1.0, dq in 0.0f64..0.5, m in 1u64..100_000, dm in 0u64..1000) {
            let base = p_beat(q, m);
            prop_assert!((0.0..=1.0).contains(&base));
            prop_assert!(p_beat(q, m + dm) >= base);
            prop_assert!(p_beat((q + dq).min(1.0), m) >= base);
        }

        #[test]
        fn quantile_inverts_cdf(samples in proptest::collection::vec(0u32..50, 1..40)) {
            let c = cdf(&samples.iter().map(|&x| x as f64 * 1e-3).collect::<Vec<_>>());
            for &x in c.samples() {
                prop_assert!(c.quantile(c.cdf(x)) <= x);
            }
            prop_assert_eq!(c.quantile(0.0), c.min());
        }
    }
}

//! Score binning, normalization and the KL / JS divergences.
//!
//! All divergences are reported in bits (log base 2), so Jensen-Shannon
//! values live on the unit interval and tolerances read as absolute
//! fractions of the maximum.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest deviation from 1 tolerated in the total mass of a distribution.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Default per-bin epsilon applied when KL smoothing is switched on.
pub const DEFAULT_KL_SMOOTHING: f64 = 1e-6;

/// Fixed-width bins over `[low, high]`. Scores equal to `high` land in the
/// last bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningSpec {
    bin_count: usize,
    low: f64,
    high: f64,
}

impl BinningSpec {
    pub fn new(bin_count: usize, low: f64, high: f64) -> Result<Self> {
        if bin_count < 2 {
            return Err(Error::InvalidBinning("bin_count must be at least 2"));
        }
        if !(low.is_finite() && high.is_finite()) {
            return Err(Error::InvalidBinning("domain bounds must be finite"));
        }
        if low >= high {
            return Err(Error::InvalidBinning(
                "domain_low must be below domain_high",
            ));
        }
        Ok(Self {
            bin_count,
            low,
            high,
        })
    }

    /// `bin_count` bins over the unit score interval.
    pub fn unit(bin_count: usize) -> Result<Self> {
        Self::new(bin_count, 0.0, 1.0)
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn domain_low(&self) -> f64 {
        self.low
    }

    pub fn domain_high(&self) -> f64 {
        self.high
    }

    pub fn contains(&self, score: f64) -> bool {
        score >= self.low && score <= self.high
    }

    /// Bin index for `score`, or `None` when it lies outside the domain
    /// (NaN included).
    pub fn bin_of(&self, score: f64) -> Option<usize> {
        if !self.contains(score) {
            return None;
        }
        let scaled = (score - self.low) / (self.high - self.low) * self.bin_count as f64;
        let idx = libm::floor(scaled) as usize;
        Some(idx.min(self.bin_count - 1))
    }
}

impl Default for BinningSpec {
    fn default() -> Self {
        Self {
            bin_count: 10,
            low: 0.0,
            high: 1.0,
        }
    }
}

/// Raw per-bin counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    binning: BinningSpec,
    counts: Vec<u64>,
    total: u64,
}

impl ScoreHistogram {
    pub fn new(binning: BinningSpec) -> Self {
        Self {
            binning,
            counts: vec![0; binning.bin_count()],
            total: 0,
        }
    }

    pub fn binning(&self) -> &BinningSpec {
        &self.binning
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Adds one score and returns the bin it landed in.
    pub fn record(&mut self, score: f64) -> Result<usize> {
        let bin = self.binning.bin_of(score).ok_or(Error::ScoreOutOfDomain {
            index: 0,
            value: score,
        })?;
        self.counts[bin] += 1;
        self.total += 1;
        Ok(bin)
    }

    /// Adds another histogram's counts into this one.
    pub fn merge(&mut self, other: &ScoreHistogram) -> Result<()> {
        if self.binning != other.binning {
            return Err(Error::BinningMismatch);
        }
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            *mine += theirs;
        }
        self.total += other.total;
        Ok(())
    }
}

/// Bins every score. The whole batch is rejected on the first out-of-domain
/// value, reporting its position.
pub fn bin_scores(scores: &[f64], binning: BinningSpec) -> Result<ScoreHistogram> {
    let mut hist = ScoreHistogram::new(binning);
    for (index, &value) in scores.iter().enumerate() {
        hist.record(value)
            .map_err(|_| Error::ScoreOutOfDomain { index, value })?;
    }
    Ok(hist)
}

/// A normalized binned distribution of prediction scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDistribution {
    binning: BinningSpec,
    mass: Vec<f64>,
    sample_count: u64,
}

impl ScoreDistribution {
    /// Builds a distribution from explicit bin masses. Masses must lie in
    /// `[0, 1]` and sum to one within [`MASS_TOLERANCE`].
    pub fn from_mass(binning: BinningSpec, mass: Vec<f64>, sample_count: u64) -> Result<Self> {
        if sample_count == 0 {
            return Err(Error::EmptyWindow);
        }
        if mass.len() != binning.bin_count() {
            return Err(Error::InvalidDistribution(
                "mass length differs from bin_count",
            ));
        }
        if mass.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return Err(Error::InvalidDistribution("bin mass outside [0, 1]"));
        }
        let sum: f64 = mass.iter().sum();
        if libm::fabs(sum - 1.0) > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution("masses do not sum to 1"));
        }
        Ok(Self {
            binning,
            mass,
            sample_count,
        })
    }

    pub fn binning(&self) -> &BinningSpec {
        &self.binning
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }
}

/// Turns counts into bin probabilities. An empty histogram is an error,
/// never a uniform fallback.
pub fn normalize(hist: &ScoreHistogram) -> Result<ScoreDistribution> {
    if hist.total == 0 {
        return Err(Error::EmptyWindow);
    }
    let total = hist.total as f64;
    let mass = hist.counts.iter().map(|&c| c as f64 / total).collect();
    Ok(ScoreDistribution {
        binning: hist.binning,
        mass,
        sample_count: hist.total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivergenceKind {
    Kl,
    Js,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Magnitude {
    Finite(f64),
    /// KL only: some bin has mass under P but none under Q.
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivergenceValue {
    pub kind: DivergenceKind,
    pub magnitude: Magnitude,
    pub smoothed: bool,
}

impl DivergenceValue {
    /// Value in bits, `f64::INFINITY` for an infinite KL.
    pub fn bits(&self) -> f64 {
        match self.magnitude {
            Magnitude::Finite(v) => v,
            Magnitude::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.magnitude, Magnitude::Infinite)
    }
}

fn check_same_binning(p: &ScoreDistribution, q: &ScoreDistribution) -> Result<()> {
    if p.binning != q.binning {
        return Err(Error::BinningMismatch);
    }
    Ok(())
}

// p * log2(p / q) with 0 * log 0 = 0. Caller guarantees q > 0 whenever p > 0.
fn kl_term(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * libm::log2(p / q)
    }
}

fn smooth(mass: &[f64], eps: f64) -> Vec<f64> {
    let denom = 1.0 + eps * mass.len() as f64;
    mass.iter().map(|&m| (m + eps) / denom).collect()
}

/// `KL(p ‖ q)` in bits.
///
/// Without smoothing, a bin where `p > 0` and `q = 0` makes the result
/// [`Magnitude::Infinite`]. With `Some(eps)`, both operands get `eps` added
/// to every bin and are renormalized first.
pub fn kl_divergence(
    p: &ScoreDistribution,
    q: &ScoreDistribution,
    smoothing: Option<f64>,
) -> Result<DivergenceValue> {
    check_same_binning(p, q)?;
    let (pm, qm, smoothed) = match smoothing {
        Some(eps) if !(eps.is_finite() && eps >= 0.0) => return Err(Error::InvalidSmoothing(eps)),
        Some(eps) => (smooth(&p.mass, eps), smooth(&q.mass, eps), true),
        None => (p.mass.clone(), q.mass.clone(), false),
    };
    let mut sum = 0.0;
    for (&a, &b) in pm.iter().zip(&qm) {
        if a > 0.0 && b == 0.0 {
            return Ok(DivergenceValue {
                kind: DivergenceKind::Kl,
                magnitude: Magnitude::Infinite,
                smoothed,
            });
        }
        sum += kl_term(a, b);
    }
    Ok(DivergenceValue {
        kind: DivergenceKind::Kl,
        magnitude: Magnitude::Finite(sum.max(0.0)),
        smoothed,
    })
}

/// `JS(p ‖ q) = ½ KL(p ‖ m) + ½ KL(q ‖ m)` in bits, with `m` the per-bin
/// average. Always finite and within `[0, 1]`; exactly symmetric in its
/// arguments.
pub fn js_divergence(p: &ScoreDistribution, q: &ScoreDistribution) -> Result<DivergenceValue> {
    check_same_binning(p, q)?;
    let mut sum = 0.0;
    for (&a, &b) in p.mass.iter().zip(&q.mass) {
        let m = (a + b) * 0.5;
        if m == 0.0 {
            continue;
        }
        sum += 0.5 * (kl_term(a, m) + kl_term(b, m));
    }
    Ok(DivergenceValue {
        kind: DivergenceKind::Js,
        magnitude: Magnitude::Finite(sum.clamp(0.0, 1.0)),
        smoothed: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(mass: &[f64]) -> ScoreDistribution {
        ScoreDistribution::from_mass(BinningSpec::unit(mass.len()).unwrap(), mass.to_vec(), 1)
            .unwrap()
    }

    #[test]
    fn binning_rejects_degenerate_specs() {
        assert!(BinningSpec::new(1, 0.0, 1.0).is_err());
        assert!(BinningSpec::new(10, 1.0, 1.0).is_err());
        assert!(BinningSpec::new(10, 1.0, 0.0).is_err());
        assert!(BinningSpec::new(10, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn bins_simple_scores() {
        let h = bin_scores(&[0.05, 0.12, 0.95], BinningSpec::default()).unwrap();
        assert_eq!(h.counts(), &[1, 1, 0, 0, 0, 0, 0, 0, 0, 1]);
        assert_eq!(h.total(), 3);
    }

    #[test]
    fn upper_edge_lands_in_last_bin() {
        let h = bin_scores(&[1.0], BinningSpec::default()).unwrap();
        assert_eq!(h.counts(), &[0, 0, 0, 0, 0, 0, 0, 0, 0, 1]);
        let h = bin_scores(&[0.0], BinningSpec::default()).unwrap();
        assert_eq!(h.counts()[0], 1);
    }

    #[test]
    fn empty_scores_give_empty_histogram() {
        let h = bin_scores(&[], BinningSpec::unit(4).unwrap()).unwrap();
        assert_eq!(h.counts(), &[0, 0, 0, 0]);
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn out_of_domain_reports_position() {
        let err = bin_scores(&[0.1, 0.2, 1.2], BinningSpec::default()).unwrap_err();
        assert_eq!(
            err,
            Error::ScoreOutOfDomain {
                index: 2,
                value: 1.2
            }
        );
        assert!(bin_scores(&[f64::NAN], BinningSpec::default()).is_err());
        assert!(bin_scores(&[-0.0001], BinningSpec::default()).is_err());
    }

    #[test]
    fn normalize_divides_by_total() {
        let h = bin_scores(&[0.05, 0.12, 0.95], BinningSpec::default()).unwrap();
        let d = normalize(&h).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(d.mass()[0], third);
        assert_eq!(d.mass()[1], third);
        assert_eq!(d.mass()[9], third);
        assert_eq!(d.sample_count(), 3);

        let h = bin_scores(
            &[0.1; 5]
                .iter()
                .chain(&[0.9; 5])
                .copied()
                .collect::<Vec<_>>(),
            BinningSpec::unit(2).unwrap(),
        )
        .unwrap();
        assert_eq!(normalize(&h).unwrap().mass(), &[0.5, 0.5]);
    }

    #[test]
    fn normalize_empty_is_error() {
        let h = ScoreHistogram::new(BinningSpec::unit(2).unwrap());
        assert_eq!(normalize(&h), Err(Error::EmptyWindow));
    }

    #[test]
    fn from_mass_validates() {
        let b = BinningSpec::unit(2).unwrap();
        assert!(ScoreDistribution::from_mass(b, vec![0.5, 0.6], 1).is_err());
        assert!(ScoreDistribution::from_mass(b, vec![1.5, -0.5], 1).is_err());
        assert!(ScoreDistribution::from_mass(b, vec![1.0], 1).is_err());
        assert_eq!(
            ScoreDistribution::from_mass(b, vec![0.5, 0.5], 0),
            Err(Error::EmptyWindow)
        );
    }

    #[test]
    fn kl_identity_is_zero() {
        let p = dist(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(kl_divergence(&p, &p, None).unwrap().bits(), 0.0);
    }

    #[test]
    fn kl_is_asymmetric() {
        // Reference values from a 40-digit evaluation of the defining sum.
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.75, 0.25]);
        let pq = kl_divergence(&p, &q, None).unwrap().bits();
        let qp = kl_divergence(&q, &p, None).unwrap().bits();
        assert!((pq - 0.207_518_749_639_421_9).abs() < 1e-14);
        assert!((qp - 0.188_721_875_540_867_1).abs() < 1e-14);
    }

    #[test]
    fn kl_disjoint_without_smoothing_is_infinite() {
        let p = dist(&[1.0, 0.0]);
        let q = dist(&[0.0, 1.0]);
        let v = kl_divergence(&p, &q, None).unwrap();
        assert!(v.is_infinite());
        assert!(!v.smoothed);
        let s = kl_divergence(&p, &q, Some(DEFAULT_KL_SMOOTHING)).unwrap();
        assert!(s.smoothed);
        assert!(s.bits().is_finite() && s.bits() > 10.0);
    }

    #[test]
    fn kl_zero_in_p_is_fine() {
        let p = dist(&[0.0, 1.0]);
        let q = dist(&[0.5, 0.5]);
        assert_eq!(kl_divergence(&p, &q, None).unwrap().bits(), 1.0);
    }

    #[test]
    fn kl_rejects_bad_epsilon_and_mismatch() {
        let p = dist(&[0.5, 0.5]);
        assert_eq!(
            kl_divergence(&p, &p, Some(-1e-3)),
            Err(Error::InvalidSmoothing(-1e-3))
        );
        assert!(kl_divergence(&p, &p, Some(f64::NAN)).is_err());
        let q = dist(&[0.25, 0.25, 0.5]);
        assert_eq!(kl_divergence(&p, &q, None), Err(Error::BinningMismatch));
        assert_eq!(js_divergence(&p, &q), Err(Error::BinningMismatch));
    }

    #[test]
    fn kl_smoothing_converges() {
        let p = dist(&[0.1, 0.2, 0.3, 0.4]);
        let q = dist(&[0.25, 0.25, 0.25, 0.25]);
        let exact = kl_divergence(&p, &q, None).unwrap().bits();
        let gaps: Vec<f64> = [1e-3, 1e-6, 1e-9]
            .iter()
            .map(|&e| (kl_divergence(&p, &q, Some(e)).unwrap().bits() - exact).abs())
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
        assert!(gaps[2] < 1e-8);
    }

    #[test]
    fn js_fixtures() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.75, 0.25]);
        assert_eq!(js_divergence(&p, &p).unwrap().bits(), 0.0);
        let v = js_divergence(&p, &q).unwrap().bits();
        assert!((v - 0.048_794_940_695_398_53).abs() < 1e-14);
        assert_eq!(js_divergence(&q, &p).unwrap().bits(), v);

        let a = dist(&[1.0, 0.0]);
        let b = dist(&[0.0, 1.0]);
        assert_eq!(js_divergence(&a, &b).unwrap().bits(), 1.0);
    }
}

//! Beamformer selection: the channel-aware oracle and the blind methods.
//!
//! The blind methods (RMS, CSM, ECSM, and the least-squares variants) take
//! only measurement datasets or the statistics reduced from them; their
//! signatures make it impossible to peek at the channel. The closest-point
//! oracle (CPP) is the one deliberate exception, used as the baseline the
//! blind methods are judged against.
//!
//! Tie-breaking is uniform everywhere: the smallest index wins, whether
//! that is a codebook index k or a sample index t. Determinism here is
//! what makes golden-file experiment outputs possible.

use num_complex::Complex64;
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, TAU};

use crate::channel::ChannelInstance;
use crate::codebook::{Codebook, PhaseConfig};
use crate::error::{Error, Result};
use crate::sampling::{ConditionalAccumulator, ConditionalStats, ConfigTable, SampleDataset};

/// A selected beamformer plus named scalars describing how the selection
/// went (candidate powers, empty-bucket counts, and similar).
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmResult {
    pub config: PhaseConfig,
    pub diagnostics: BTreeMap<String, f64>,
}

impl AlgorithmResult {
    fn new(config: PhaseConfig) -> Self {
        Self { config, diagnostics: BTreeMap::new() }
    }
}

/// Probe configurations paired with an arbitrary scalar utility, for the
/// generalized conditional-mean method.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityDataset {
    configs: ConfigTable,
    utilities: Vec<f64>,
}

impl UtilityDataset {
    pub fn new(configs: ConfigTable, utilities: Vec<f64>) -> Result<Self> {
        if utilities.len() != configs.len() {
            return Err(Error::DimensionMismatch {
                expected: configs.len(),
                actual: utilities.len(),
            });
        }
        if utilities.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidParameter("utilities must be finite".into()));
        }
        Ok(Self { configs, utilities })
    }

    pub fn configs(&self) -> &ConfigTable {
        &self.configs
    }

    pub fn utilities(&self) -> &[f64] {
        &self.utilities
    }
}

/// Rounds a phase gap to the nearest codebook index by circular distance,
/// ties toward the smaller index.
///
/// Works in index space (gap/ω against integer k) rather than in radians:
/// the half-way gaps that exercise the tie rule are exactly representable
/// there, so the rule fires reliably instead of at the mercy of trig
/// rounding.
pub(crate) fn round_gap_to_index(gap: f64, k: u16) -> u16 {
    let kf = f64::from(k);
    let x = gap / (TAU / kf);
    let mut best = 1u16;
    let mut best_d = f64::INFINITY;
    for cand in 1..=k {
        let raw = (f64::from(cand) - x).abs();
        let d = raw.min(kf - raw);
        if d < best_d {
            best_d = d;
            best = cand;
        }
    }
    best
}

/// Closest-point projection: rounds every true phase gap to the grid.
///
/// This is the channel-state-informed baseline; everything else in this
/// module gets by without the channel.
pub fn cpp(channel: &ChannelInstance, codebook: &Codebook) -> AlgorithmResult {
    let indices = crate::channel::phase_gaps(channel)
        .iter()
        .map(|&gap| round_gap_to_index(gap, codebook.k()))
        .collect();
    AlgorithmResult::new(
        PhaseConfig::new(indices, codebook.k()).expect("rounded indices are in range"),
    )
}

/// Random-max sampling: returns the probe configuration that measured the
/// highest power, the earliest such probe on ties.
pub fn rms(dataset: &SampleDataset) -> AlgorithmResult {
    let mut best_t = 0usize;
    let mut best_p = f64::NEG_INFINITY;
    for (t, &p) in dataset.powers().iter().enumerate() {
        if p > best_p {
            best_p = p;
            best_t = t;
        }
    }
    let mut result = AlgorithmResult::new(dataset.configs().config(best_t));
    result.diagnostics.insert("best_sample_index".into(), best_t as f64);
    result.diagnostics.insert("best_sample_power".into(), best_p);
    result
}

/// Per-element argmax over valid buckets; the shared core of the
/// conditional-mean methods.
fn argmax_indices(stats: &ConditionalStats) -> Result<Vec<u16>> {
    let mut indices = Vec::with_capacity(stats.n());
    for n in 0..stats.n() {
        let mut best: Option<(u16, f64)> = None;
        for k in 1..=stats.k() {
            if !stats.is_valid(n, k) {
                continue;
            }
            let v = stats.cond_power(n, k);
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((k, v));
            }
        }
        match best {
            Some((k, _)) => indices.push(k),
            None => return Err(Error::InsufficientSamples { element: n }),
        }
    }
    Ok(indices)
}

/// Conditional sample mean: element n takes the index whose bucket showed
/// the highest mean received power.
///
/// Maximizing the raw bucket mean and maximizing the centered statistic
/// pick the same index; the grand mean is a constant within each element.
pub fn csm(stats: &ConditionalStats) -> Result<AlgorithmResult> {
    let indices = argmax_indices(stats)?;
    let mut result = AlgorithmResult::new(
        PhaseConfig::new(indices, stats.k()).expect("argmax indices are in range"),
    );
    result
        .diagnostics
        .insert("empty_buckets".into(), stats.empty_buckets() as f64);
    Ok(result)
}

/// Conditional sample mean over an arbitrary scalar utility instead of
/// received power. With U_t = |Y_t|² this reduces to [`csm`] exactly.
pub fn csm_generic(utilities: &UtilityDataset, codebook: &Codebook) -> Result<AlgorithmResult> {
    if codebook.k() != utilities.configs().k() {
        return Err(Error::InvalidParameter(format!(
            "utility dataset was drawn over K = {}, codebook has K = {}",
            utilities.configs().k(),
            codebook.k()
        )));
    }
    let table = utilities.configs();
    let mut acc = ConditionalAccumulator::new(table.n(), table.k(), false);
    for t in 0..table.len() {
        acc.push(table.row(t), utilities.utilities()[t], None);
    }
    let stats = acc.finish()?;
    let indices = argmax_indices(&stats)?;
    let mut result = AlgorithmResult::new(
        PhaseConfig::new(indices, stats.k()).expect("argmax indices are in range"),
    );
    result
        .diagnostics
        .insert("empty_buckets".into(), stats.empty_buckets() as f64);
    Ok(result)
}

/// Phase-gap estimates recovered by the sum-of-squares metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SumOfSquaresEstimate {
    /// Estimated gap per element, in [0, 2π).
    pub delta_hat: Vec<f64>,
    /// The estimates rounded to the grid.
    pub config: PhaseConfig,
    /// Elements whose trigonometric moments both vanished; their estimate
    /// is meaningless and their index fell back to 1.
    pub undefined: Vec<bool>,
}

/// Least-squares gap estimation through the first trigonometric moments
/// of the centered statistic.
///
/// E_n and F_n are the sine and cosine moments of Ĵ_n· over the grid; for
/// a clean cosine of amplitude c they evaluate to (K/2)c·sinΔ and
/// (K/2)c·cosΔ, so the two-branch arctangent below is just atan2 of the
/// moments, recovering Δ exactly on noiseless input. Requires every bucket
/// populated, since a missing grid point biases the moments.
pub fn ls_sum_of_squares(stats: &ConditionalStats) -> Result<SumOfSquaresEstimate> {
    for n in 0..stats.n() {
        for k in 1..=stats.k() {
            if !stats.is_valid(n, k) {
                return Err(Error::InsufficientSamples { element: n });
            }
        }
    }
    let omega = TAU / f64::from(stats.k());
    let mut delta_hat = Vec::with_capacity(stats.n());
    let mut indices = Vec::with_capacity(stats.n());
    let mut undefined = Vec::with_capacity(stats.n());
    for n in 0..stats.n() {
        let mut e = 0.0;
        let mut f = 0.0;
        for k in 1..=stats.k() {
            let (s, c) = (f64::from(k) * omega).sin_cos();
            e += stats.centered(n, k) * s;
            f += stats.centered(n, k) * c;
        }
        // Fold a signed zero so the branch below sees one zero, not two.
        if e == 0.0 {
            e = 0.0;
        }
        if e == 0.0 && f == 0.0 {
            delta_hat.push(0.0);
            indices.push(1);
            undefined.push(true);
            continue;
        }
        let mut delta = if e >= 0.0 {
            -(f / e).atan() + FRAC_PI_2
        } else {
            -(f / e).atan() - FRAC_PI_2
        };
        if delta < 0.0 {
            delta += TAU;
        }
        if delta >= TAU {
            delta -= TAU;
        }
        delta_hat.push(delta);
        indices.push(round_gap_to_index(delta, stats.k()));
        undefined.push(false);
    }
    Ok(SumOfSquaresEstimate {
        delta_hat,
        config: PhaseConfig::new(indices, stats.k()).expect("rounded indices are in range"),
        undefined,
    })
}

/// Options for the enhanced conditional-mean method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EcsmOptions {
    /// K=2 only: de-rotate the conditional complex means by the phase of
    /// the grand mean before reading their imaginary sign. The grand mean
    /// estimates the direct path, so this aligns the sector geometry with
    /// it blindly; disabling uses the raw imaginary part, which is only
    /// correct when the direct path is already real-positive.
    pub derotate: bool,
}

impl Default for EcsmOptions {
    fn default() -> Self {
        Self { derotate: true }
    }
}

/// Enhanced conditional sample mean: fixes the sector degeneracy of plain
/// CSM by also trying a one-step rotation of every element.
///
/// Starting from the CSM pick θ'', each element is classified by which
/// neighbor bucket looks stronger (K ≥ 3) or by the imaginary sign of its
/// conditional complex mean (K = 2, which needs recorded signals). The
/// classified shift gives θ', and θ''' is θ' rotated back one step
/// everywhere. The evaluator measures each candidate's expected power and
/// the best one wins, earliest on ties (θ' first, then θ'', then θ''').
///
/// The indicator treats "looks equal" as shift (a tie means the element
/// sits on a sector boundary where either step is equally good), and an
/// empty neighbor bucket also classifies as shift, so small probe runs
/// stay runnable; both rules only matter in measure-zero or tiny-T cases.
pub fn ecsm<F>(
    stats: &ConditionalStats,
    mut evaluator: F,
    options: EcsmOptions,
) -> Result<AlgorithmResult>
where
    F: FnMut(&PhaseConfig) -> f64,
{
    let base = csm(stats)?;
    let k = stats.k();
    let codebook = Codebook::new(k).expect("stats carry a valid K");
    if k == 2 && !stats.has_signals() {
        return Err(Error::MissingComplexData);
    }
    let derotation = if k == 2 && options.derotate {
        let grand = stats
            .grand_mean_signal()
            .ok_or(Error::MissingComplexData)?;
        Complex64::from_polar(1.0, -grand.arg())
    } else {
        Complex64::ONE
    };
    let mut shifted = Vec::with_capacity(stats.n());
    let mut lambda_ones = 0u64;
    for n in 0..stats.n() {
        let here = base.config.index(n);
        let shift = if k >= 3 {
            let up = codebook.step_up(here);
            let down = codebook.step_down(here);
            if !stats.is_valid(n, up) || !stats.is_valid(n, down) {
                true
            } else {
                stats.cond_power(n, up) - stats.cond_power(n, down) >= 0.0
            }
        } else {
            let s = stats
                .cond_signal(n, here)
                .ok_or(Error::MissingComplexData)?;
            (derotation * s).im >= 0.0
        };
        if shift {
            lambda_ones += 1;
            shifted.push(codebook.step_up(here));
        } else {
            shifted.push(here);
        }
    }
    let prime = PhaseConfig::new(shifted, k).expect("shifted indices are in range");
    let back = PhaseConfig::new(
        prime.indices().iter().map(|&i| codebook.step_down(i)).collect(),
        k,
    )
    .expect("rotated indices are in range");

    let candidates = [&prime, &base.config, &back];
    let powers: Vec<f64> = candidates.iter().map(|c| evaluator(c)).collect();
    let mut chosen = 0usize;
    for (i, &p) in powers.iter().enumerate() {
        if p > powers[chosen] {
            chosen = i;
        }
    }
    let mut result = AlgorithmResult::new(candidates[chosen].clone());
    result.diagnostics.insert("candidate_shifted_power".into(), powers[0]);
    result.diagnostics.insert("candidate_csm_power".into(), powers[1]);
    result.diagnostics.insert("candidate_back_power".into(), powers[2]);
    result.diagnostics.insert("chosen_candidate".into(), chosen as f64);
    result.diagnostics.insert("lambda_ones".into(), lambda_ones as f64);
    if let Some(e) = base.diagnostics.get("empty_buckets") {
        result.diagnostics.insert("empty_buckets".into(), *e);
    }
    Ok(result)
}

/// The unconfigured surface: every element at index K, phase 2π, exactly
/// what a bare metal sheet applies.
pub fn off_config(n: usize, codebook: &Codebook) -> Result<PhaseConfig> {
    PhaseConfig::new(vec![codebook.k(); n], codebook.k())
}

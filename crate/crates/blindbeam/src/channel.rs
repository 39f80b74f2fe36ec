//! Channel model: geometry, pathloss, instance sampling, and the SNR boost
//! objective the whole crate optimizes.
//!
//! An instance is one background (direct) path h_0 plus N reflected paths
//! h_1..h_N. The boost of a phase configuration θ is
//! |h_0 + Σ h_n e^{jθ_n}|² / |h_0|², so boost 1 means the surface did
//! nothing and the upper bound is reached when every term aligns with h_0.

use num_complex::Complex64;
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use crate::codebook::PhaseConfig;
use crate::error::{Error, Result};

/// Converts a power level in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a power level in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

/// Splits a complex amplitude into magnitude and a phase in [0, 2π).
///
/// Zero input returns phase 0 by convention, so downstream code never sees
/// NaN from an exactly dark path.
pub fn polar_decompose(h: Complex64) -> (f64, f64) {
    let beta = h.norm();
    if beta == 0.0 {
        return (0.0, 0.0);
    }
    let mut alpha = h.arg();
    if alpha < 0.0 {
        alpha += TAU;
    }
    // Tiny negative angles wrap to exactly 2π in floating point; fold back.
    if alpha >= TAU {
        alpha = 0.0;
    }
    (beta, alpha)
}

/// Transmitter, surface, and receiver placement plus link-budget levels.
///
/// Distances are in meters and powers in dBm. The default is the urban
/// micro layout used throughout the experiments: a far transmitter, the
/// surface a couple of meters from the receiver, 30 dBm transmit power,
/// and a -90 dBm noise floor.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioGeometry {
    pub tx_pos: [f64; 3],
    pub irs_pos: [f64; 3],
    pub rx_pos: [f64; 3],
    pub tx_power_dbm: f64,
    pub noise_power_dbm: f64,
}

impl Default for ScenarioGeometry {
    fn default() -> Self {
        Self {
            tx_pos: [50.0, -200.0, 20.0],
            irs_pos: [-2.0, -1.0, 0.0],
            rx_pos: [0.0, 0.0, 0.0],
            tx_power_dbm: 30.0,
            noise_power_dbm: -90.0,
        }
    }
}

/// Euclidean distance between two points in meters.
pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Pathloss of the direct link in dB: 32.6 + 36.7·log10(d).
pub fn direct_pathloss_db(d: f64) -> f64 {
    32.6 + 36.7 * d.log10()
}

/// Pathloss of one reflected segment in dB: 30 + 22·log10(d).
pub fn segment_pathloss_db(d: f64) -> f64 {
    30.0 + 22.0 * d.log10()
}

/// Amplitude attenuation for a pathloss in dB: 10^(-PL/20).
pub fn pathloss_amplitude(pl_db: f64) -> f64 {
    10f64.powf(-pl_db / 20.0)
}

impl ScenarioGeometry {
    /// Checks that no two of the three nodes coincide, which would put a
    /// zero inside a log10.
    pub fn validate(&self) -> Result<()> {
        let pairs = [
            (self.tx_pos, self.rx_pos, "tx and rx"),
            (self.tx_pos, self.irs_pos, "tx and surface"),
            (self.irs_pos, self.rx_pos, "surface and rx"),
        ];
        for (a, b, what) in pairs {
            if distance(a, b) <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{what} positions coincide; pairwise distances must be positive"
                )));
            }
        }
        Ok(())
    }

    pub fn tx_power_watts(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    pub fn noise_power_watts(&self) -> f64 {
        dbm_to_watts(self.noise_power_dbm)
    }

    /// Amplitude gain of the direct link to `rx`.
    pub fn direct_amplitude_to(&self, rx: [f64; 3]) -> f64 {
        pathloss_amplitude(direct_pathloss_db(distance(self.tx_pos, rx)))
    }

    /// Amplitude gain of one reflected path to `rx`: both segment losses
    /// combined, before the two small-scale fading factors.
    pub fn cascade_amplitude_to(&self, rx: [f64; 3]) -> f64 {
        let pl = segment_pathloss_db(distance(self.tx_pos, self.irs_pos))
            + segment_pathloss_db(distance(self.irs_pos, rx));
        pathloss_amplitude(pl)
    }

    pub fn direct_amplitude(&self) -> f64 {
        self.direct_amplitude_to(self.rx_pos)
    }

    pub fn cascade_amplitude(&self) -> f64 {
        self.cascade_amplitude_to(self.rx_pos)
    }
}

/// One realization of the direct path and the N reflected paths.
///
/// Magnitude and phase of every entry are cached at construction since the
/// algorithms consume them far more often than the raw complex values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInstance {
    h0: Complex64,
    elements: Vec<Complex64>,
    beta0: f64,
    alpha0: f64,
    betas: Vec<f64>,
    alphas: Vec<f64>,
}

impl ChannelInstance {
    /// Wraps raw amplitudes. The direct path must be nonzero (the boost is
    /// normalized by it) and at least one reflected path must exist.
    pub fn new(h0: Complex64, elements: Vec<Complex64>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidParameter(
                "channel instance needs at least one reflected path".into(),
            ));
        }
        if !h0.is_finite() || elements.iter().any(|h| !h.is_finite()) {
            return Err(Error::InvalidParameter(
                "channel amplitudes must be finite".into(),
            ));
        }
        let (beta0, alpha0) = polar_decompose(h0);
        if beta0 <= 0.0 {
            return Err(Error::InvalidParameter(
                "direct path must have positive magnitude".into(),
            ));
        }
        let mut betas = Vec::with_capacity(elements.len());
        let mut alphas = Vec::with_capacity(elements.len());
        for &h in &elements {
            let (b, a) = polar_decompose(h);
            betas.push(b);
            alphas.push(a);
        }
        Ok(Self { h0, elements, beta0, alpha0, betas, alphas })
    }

    /// Number of reflecting elements N.
    pub fn n(&self) -> usize {
        self.elements.len()
    }

    pub fn h0(&self) -> Complex64 {
        self.h0
    }

    pub fn elements(&self) -> &[Complex64] {
        &self.elements
    }

    pub fn element(&self, n: usize) -> Complex64 {
        self.elements[n]
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn alpha0(&self) -> f64 {
        self.alpha0
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn beta(&self, n: usize) -> f64 {
        self.betas[n]
    }

    pub fn alpha(&self, n: usize) -> f64 {
        self.alphas[n]
    }

    /// Total channel energy β0² + Σ βn², the scale behind the tail
    /// bounds (their rates are reciprocals of this).
    pub fn energy(&self) -> f64 {
        self.beta0 * self.beta0 + self.betas.iter().map(|b| b * b).sum::<f64>()
    }
}

/// Phase gap Δ_n = (α_0 − α_n) mod 2π for every element, each in [0, 2π).
///
/// Element n contributes coherently exactly when its phase shift lands on
/// Δ_n, so every blind algorithm here is ultimately estimating this vector.
pub fn phase_gaps(channel: &ChannelInstance) -> Vec<f64> {
    channel
        .alphas()
        .iter()
        .map(|&alpha_n| {
            let mut d = channel.alpha0() - alpha_n;
            if d < 0.0 {
                d += TAU;
            }
            if d >= TAU {
                d = 0.0;
            }
            d
        })
        .collect()
}

/// SNR boost of `config` on `channel`: |h_0 + Σ h_n e^{jθ_n}|² / β_0².
pub fn snr_boost(channel: &ChannelInstance, config: &PhaseConfig) -> Result<f64> {
    if config.len() != channel.n() {
        return Err(Error::DimensionMismatch {
            expected: channel.n(),
            actual: config.len(),
        });
    }
    let mut sum = channel.h0();
    for (n, &h) in channel.elements().iter().enumerate() {
        sum += h * config.rotation(n);
    }
    Ok(sum.norm_sqr() / (channel.beta0() * channel.beta0()))
}

/// Largest boost any phase configuration could reach, discrete or not:
/// (β_0 + Σ β_n)² / β_0².
pub fn boost_upper_bound(channel: &ChannelInstance) -> f64 {
    let total = channel.beta0() + channel.betas().iter().sum::<f64>();
    (total * total) / (channel.beta0() * channel.beta0())
}

/// One draw of a circularly-symmetric complex Gaussian with unit variance.
fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * FRAC_1_SQRT_2
}

/// Draws one channel instance under the urban micro model.
///
/// The direct path is Rayleigh faded behind the direct pathloss; each
/// reflected path is the product of two independent Rayleigh factors (one
/// per segment) behind the two segment losses. The direct fading factor is
/// drawn first and the element factors in element order, so prefixes of the
/// stream agree across different N. The draw is a pure function of
/// (geometry, n, rng state).
pub fn sample_channel<R: Rng + ?Sized>(
    geometry: &ScenarioGeometry,
    n: usize,
    rng: &mut R,
) -> Result<ChannelInstance> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "channel needs at least one reflecting element".into(),
        ));
    }
    geometry.validate()?;
    let a0 = geometry.direct_amplitude();
    let a1 = geometry.cascade_amplitude();
    let h0 = complex_gaussian(rng) * a0;
    let elements = (0..n)
        .map(|_| complex_gaussian(rng) * complex_gaussian(rng) * a1)
        .collect();
    ChannelInstance::new(h0, elements)
}

/// Two-element instance built to defeat phase-gap estimators.
///
/// With α_0 = 0 the reflected paths sit at ±(ω/2 − eps), each a hair inside
/// the sector whose best grid point rotates it across the real axis. Any
/// per-element rounding of the gaps sends the pair to opposite half-planes
/// where their imaginary parts cancel, leaving boost near 1 even though
/// flipping one element by a single grid step reaches near the optimum.
pub fn adversarial_instance(k: u16, beta0: f64, beta: f64, eps: f64) -> Result<ChannelInstance> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "adversarial instance needs K >= 2, got {k}"
        )));
    }
    if !(beta0 > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidParameter(
            "adversarial instance needs positive magnitudes".into(),
        ));
    }
    let half_omega = TAU / f64::from(k) / 2.0;
    if !(eps > 0.0 && eps < half_omega) {
        return Err(Error::InvalidParameter(format!(
            "eps must lie strictly between 0 and ω/2 = {half_omega}, got {eps}"
        )));
    }
    let tilt = half_omega - eps;
    ChannelInstance::new(
        Complex64::new(beta0, 0.0),
        vec![
            Complex64::from_polar(beta, tilt),
            Complex64::from_polar(beta, -tilt),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::Codebook;
    use crate::seeding;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn dbm_conversions() {
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, max_relative = 1e-12);
        assert_relative_eq!(dbm_to_watts(-90.0), 1e-12, max_relative = 1e-12);
        assert_relative_eq!(watts_to_dbm(1.0), 30.0, max_relative = 1e-12);
    }

    #[test]
    fn polar_identity_case() {
        let (beta, alpha) = polar_decompose(Complex64::new(1.0, 0.0));
        assert_eq!(beta, 1.0);
        assert_eq!(alpha, 0.0);
    }

    #[test]
    fn polar_negative_axis_canonicalized() {
        let (beta, alpha) = polar_decompose(Complex64::new(0.0, -1.0));
        assert_relative_eq!(beta, 1.0, max_relative = 1e-15);
        assert_relative_eq!(alpha, 1.5 * PI, max_relative = 1e-15);
    }

    #[test]
    fn polar_zero_convention() {
        assert_eq!(polar_decompose(Complex64::new(0.0, 0.0)), (0.0, 0.0));
    }

    #[test]
    fn polar_never_returns_tau() {
        // An angle just below zero must wrap into [0, 2π), not to 2π itself.
        let (_, alpha) = polar_decompose(Complex64::new(1.0, -1e-300));
        assert!((0.0..TAU).contains(&alpha));
    }

    fn instance_from_phases(alpha0: f64, alphas: &[f64]) -> ChannelInstance {
        ChannelInstance::new(
            Complex64::from_polar(1.0, alpha0),
            alphas.iter().map(|&a| Complex64::from_polar(1.0, a)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn gaps_direct_subtraction() {
        let ch = instance_from_phases(PI / 3.0, &[PI / 6.0]);
        assert_relative_eq!(phase_gaps(&ch)[0], PI / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn gaps_wrap_around() {
        let ch = instance_from_phases(0.1, &[6.0]);
        assert_relative_eq!(phase_gaps(&ch)[0], 0.1 - 6.0 + TAU, max_relative = 1e-12);
    }

    #[test]
    fn gaps_aligned_element() {
        let ch = instance_from_phases(1.0, &[1.0]);
        assert_eq!(phase_gaps(&ch)[0], 0.0);
    }

    #[test]
    fn boost_aligned_pair() {
        let ch = ChannelInstance::new(
            Complex64::ONE,
            vec![Complex64::ONE],
        )
        .unwrap();
        let cfg = PhaseConfig::new(vec![2], 2).unwrap();
        assert_relative_eq!(snr_boost(&ch, &cfg).unwrap(), 4.0, max_relative = 1e-12);
    }

    #[test]
    fn boost_perfect_cancellation() {
        let ch = ChannelInstance::new(
            Complex64::ONE,
            vec![Complex64::from_polar(1.0, PI)],
        )
        .unwrap();
        let cfg = PhaseConfig::new(vec![2], 2).unwrap();
        assert_abs_diff_eq!(snr_boost(&ch, &cfg).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn boost_fully_aligned_square_law() {
        let n = 5;
        let ch = ChannelInstance::new(
            Complex64::ONE,
            vec![Complex64::ONE; n],
        )
        .unwrap();
        let cfg = PhaseConfig::new(vec![4; n], 4).unwrap();
        let expected = ((n + 1) * (n + 1)) as f64;
        assert_relative_eq!(snr_boost(&ch, &cfg).unwrap(), expected, max_relative = 1e-12);
    }

    #[test]
    fn boost_rejects_length_mismatch() {
        let ch = ChannelInstance::new(Complex64::ONE, vec![Complex64::ONE]).unwrap();
        let cfg = PhaseConfig::new(vec![1, 2], 2).unwrap();
        assert!(matches!(
            snr_boost(&ch, &cfg),
            Err(Error::DimensionMismatch { expected: 1, actual: 2 })
        ));
    }

    #[test]
    fn bound_pair_and_dark_elements() {
        let ch = ChannelInstance::new(Complex64::ONE, vec![Complex64::ONE]).unwrap();
        assert_relative_eq!(boost_upper_bound(&ch), 4.0, max_relative = 1e-12);
        let dark = ChannelInstance::new(
            Complex64::new(2.0, 0.0),
            vec![Complex64::new(0.0, 0.0); 3],
        )
        .unwrap();
        assert_relative_eq!(boost_upper_bound(&dark), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn bound_dominates_exhaustive_search() {
        // Independent oracle: enumerate every configuration by counting in
        // base K and evaluate the boost from raw amplitudes, without going
        // through PhaseConfig arithmetic.
        let mut rng = seeding::substream(11, &[seeding::stream::CHANNEL]);
        let geom = ScenarioGeometry::default();
        for _ in 0..20 {
            let ch = sample_channel(&geom, 4, &mut rng).unwrap();
            let k = 3u16;
            let bound = boost_upper_bound(&ch);
            let mut digits = vec![1u16; 4];
            loop {
                let cfg = PhaseConfig::new(digits.clone(), k).unwrap();
                let mut sum = ch.h0();
                for (n, &d) in digits.iter().enumerate() {
                    sum += ch.element(n)
                        * Complex64::from_polar(1.0, f64::from(d) * TAU / f64::from(k));
                }
                let oracle = sum.norm_sqr() / ch.beta0().powi(2);
                let got = snr_boost(&ch, &cfg).unwrap();
                assert_relative_eq!(got, oracle, max_relative = 1e-9);
                assert!(got <= bound * (1.0 + 1e-12));
                let mut pos = 0;
                loop {
                    if pos == digits.len() {
                        break;
                    }
                    if digits[pos] == k {
                        digits[pos] = 1;
                        pos += 1;
                    } else {
                        digits[pos] += 1;
                        break;
                    }
                }
                if pos == digits.len() {
                    break;
                }
            }
        }
    }

    #[test]
    fn default_geometry_link_budget() {
        // Distances and losses recomputed by hand: d0 = sqrt(50^2 + 200^2
        // + 20^2) = sqrt(42900), segment distances sqrt(52^2 + 199^2 +
        // 20^2) = sqrt(42705) and sqrt(2^2 + 1^2) = sqrt(5).
        let g = ScenarioGeometry::default();
        g.validate().unwrap();
        let d0 = distance(g.tx_pos, g.rx_pos);
        assert_relative_eq!(d0, 42900f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(direct_pathloss_db(d0), 117.6056, max_relative = 1e-6);
        let d1 = distance(g.tx_pos, g.irs_pos);
        let d2 = distance(g.irs_pos, g.rx_pos);
        assert_relative_eq!(d1, 42705f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(d2, 5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(segment_pathloss_db(d1), 80.9353, max_relative = 1e-6);
        assert_relative_eq!(segment_pathloss_db(d2), 37.6887, max_relative = 1e-5);
        assert_relative_eq!(
            g.cascade_amplitude(),
            pathloss_amplitude(80.9353 + 37.6887),
            max_relative = 1e-5
        );
    }

    #[test]
    fn geometry_rejects_coincident_nodes() {
        let mut g = ScenarioGeometry::default();
        g.irs_pos = g.rx_pos;
        assert!(g.validate().is_err());
    }

    #[test]
    fn reflected_power_matches_link_budget() {
        // E|φ1 φ2|² = 1, so the mean reflected power over many draws must
        // sit at the squared cascade amplitude.
        let g = ScenarioGeometry::default();
        let mut rng = seeding::substream(7, &[seeding::stream::CHANNEL]);
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let ch = sample_channel(&g, 1, &mut rng).unwrap();
            acc += ch.beta(0).powi(2);
        }
        let mean = acc / draws as f64;
        let expected = g.cascade_amplitude().powi(2);
        assert_relative_eq!(mean, expected, max_relative = 0.02);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = ScenarioGeometry::default();
        let mut r1 = seeding::substream(42, &[seeding::stream::CHANNEL]);
        let mut r2 = seeding::substream(42, &[seeding::stream::CHANNEL]);
        let a = sample_channel(&g, 8, &mut r1).unwrap();
        let b = sample_channel(&g, 8, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_shares_prefix_across_sizes() {
        let g = ScenarioGeometry::default();
        let mut r1 = seeding::substream(42, &[seeding::stream::CHANNEL]);
        let mut r2 = seeding::substream(42, &[seeding::stream::CHANNEL]);
        let small = sample_channel(&g, 3, &mut r1).unwrap();
        let large = sample_channel(&g, 6, &mut r2).unwrap();
        assert_eq!(small.h0(), large.h0());
        assert_eq!(small.elements(), &large.elements()[..3]);
    }

    #[test]
    fn adversarial_geometry() {
        let ch = adversarial_instance(2, 1.0, 1.0, 1e-3).unwrap();
        assert_eq!(ch.n(), 2);
        assert_eq!(ch.alpha0(), 0.0);
        assert_relative_eq!(ch.alphas()[0], PI / 2.0 - 1e-3, max_relative = 1e-12);
        assert_relative_eq!(ch.alphas()[1], TAU - (PI / 2.0 - 1e-3), max_relative = 1e-12);
        assert!(adversarial_instance(2, 1.0, 1.0, PI / 2.0).is_err());
        assert!(adversarial_instance(2, 1.0, 1.0, 0.0).is_err());
        assert!(adversarial_instance(1, 1.0, 1.0, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn polar_roundtrip(re in -1e6f64..1e6, im in -1e6f64..1e6) {
            prop_assume!(re != 0.0 || im != 0.0);
            let h = Complex64::new(re, im);
            let (beta, alpha) = polar_decompose(h);
            prop_assert!((0.0..TAU).contains(&alpha));
            let back = Complex64::from_polar(beta, alpha);
            prop_assert!((back - h).norm() <= 1e-12 * h.norm());
        }

        #[test]
        fn gaps_stay_canonical(a0 in 0.0..TAU, a1 in 0.0..TAU, a2 in 0.0..TAU) {
            let ch = instance_from_phases(a0, &[a1, a2]);
            for d in phase_gaps(&ch) {
                prop_assert!((0.0..TAU).contains(&d));
            }
        }

        #[test]
        fn boost_bounded_random(seed in 0u64..1000, n in 1usize..6, k in 2u16..5) {
            let g = ScenarioGeometry::default();
            let mut rng = seeding::substream(seed, &[seeding::stream::CHANNEL]);
            let ch = sample_channel(&g, n, &mut rng).unwrap();
            let bound = boost_upper_bound(&ch);
            let mut idx_rng = seeding::substream(seed, &[seeding::stream::PROBE]);
            let indices: Vec<u16> =
                (0..n).map(|_| idx_rng.random_range(1..=k)).collect();
            let cfg = PhaseConfig::new(indices, k).unwrap();
            let b = snr_boost(&ch, &cfg).unwrap();
            prop_assert!(b >= 0.0);
            prop_assert!(b <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn codebook_identity_matches_off_state() {
        // Leaving every element at index K is the same as no surface
        // contribution being rotated at all.
        let ch = ChannelInstance::new(
            Complex64::new(0.3, 0.4),
            vec![Complex64::new(-0.1, 0.2), Complex64::new(0.05, -0.02)],
        )
        .unwrap();
        let cb = Codebook::new(4).unwrap();
        let cfg = PhaseConfig::new(vec![cb.k(); 2], cb.k()).unwrap();
        let direct: Complex64 = ch.h0() + ch.elements().iter().sum::<Complex64>();
        assert_relative_eq!(
            snr_boost(&ch, &cfg).unwrap(),
            direct.norm_sqr() / ch.beta0().powi(2),
            max_relative = 1e-12
        );
    }
}

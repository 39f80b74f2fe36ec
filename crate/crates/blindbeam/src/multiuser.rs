//! Multi-antenna transmitter serving several single-antenna receivers.
//!
//! The surface helps here too, but "received power" is no longer the thing
//! to maximize; the scalar utility becomes the sum spectral efficiency
//! across users under a fixed random precoder. The generalized
//! conditional-mean method consumes those utilities through
//! [`crate::algorithms::csm_generic`] without knowing what they mean.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{distance, ScenarioGeometry};
use crate::codebook::PhaseConfig;
use crate::error::{Error, Result};

/// Per-element cascaded channel between M transmit antennas and L users.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementCascade {
    /// Physical model: one incoming fade per transmit antenna and one
    /// outgoing fade per user, the element coupling every pair. The
    /// per-user pathloss is folded into the outgoing vector.
    RankOne { incoming: Vec<Complex64>, outgoing: Vec<Complex64> },
    /// Sensitivity variant: every (user, antenna) entry faded
    /// independently, row-major L×M.
    Dense(Vec<Complex64>),
}

/// How element cascades are faded when sampling a multi-user channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CascadeModel {
    #[default]
    RankOne,
    IndependentEntries,
}

/// Background matrix plus per-element cascades for L users and M antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiUserChannel {
    m: usize,
    l: usize,
    background: Vec<Complex64>,
    elements: Vec<ElementCascade>,
}

impl MultiUserChannel {
    /// `background` is row-major L×M.
    pub fn new(
        m: usize,
        l: usize,
        background: Vec<Complex64>,
        elements: Vec<ElementCascade>,
    ) -> Result<Self> {
        if m < 1 || l < 1 {
            return Err(Error::InvalidParameter(
                "need at least one antenna and one user".into(),
            ));
        }
        if elements.is_empty() {
            return Err(Error::InvalidParameter(
                "need at least one reflecting element".into(),
            ));
        }
        if background.len() != l * m {
            return Err(Error::DimensionMismatch {
                expected: l * m,
                actual: background.len(),
            });
        }
        for el in &elements {
            match el {
                ElementCascade::RankOne { incoming, outgoing } => {
                    if incoming.len() != m {
                        return Err(Error::DimensionMismatch {
                            expected: m,
                            actual: incoming.len(),
                        });
                    }
                    if outgoing.len() != l {
                        return Err(Error::DimensionMismatch {
                            expected: l,
                            actual: outgoing.len(),
                        });
                    }
                }
                ElementCascade::Dense(g) => {
                    if g.len() != l * m {
                        return Err(Error::DimensionMismatch {
                            expected: l * m,
                            actual: g.len(),
                        });
                    }
                }
            }
        }
        Ok(Self { m, l, background, elements })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn n(&self) -> usize {
        self.elements.len()
    }

    pub fn background(&self) -> &[Complex64] {
        &self.background
    }

    pub fn elements(&self) -> &[ElementCascade] {
        &self.elements
    }

    /// Effective L×M channel rows seen under `config`: the background plus
    /// every element's cascade rotated by its phase shift.
    pub fn effective_rows(&self, config: &PhaseConfig) -> Result<Vec<Complex64>> {
        if config.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                actual: config.len(),
            });
        }
        let mut rows = self.background.clone();
        for (n, el) in self.elements.iter().enumerate() {
            let rot = config.rotation(n);
            match el {
                ElementCascade::RankOne { incoming, outgoing } => {
                    for (l, &out) in outgoing.iter().enumerate() {
                        let c = rot * out;
                        let row = &mut rows[l * self.m..(l + 1) * self.m];
                        for (r, &a) in row.iter_mut().zip(incoming) {
                            *r += c * a;
                        }
                    }
                }
                ElementCascade::Dense(g) => {
                    for (r, &e) in rows.iter_mut().zip(g) {
                        *r += rot * e;
                    }
                }
            }
        }
        Ok(rows)
    }
}

/// Fixed transmit beamformer: one unit-norm column per user stream, the
/// transmit power split equally across streams.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    m: usize,
    l: usize,
    /// Column-major M×L: column l occupies [l·M, (l+1)·M).
    columns: Vec<Complex64>,
    per_stream_power: f64,
}

impl Precoder {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn column(&self, l: usize) -> &[Complex64] {
        &self.columns[l * self.m..(l + 1) * self.m]
    }

    /// Power carried by each stream, tx_power / L.
    pub fn per_stream_power(&self) -> f64 {
        self.per_stream_power
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rand::RngExt::sample(rng, rand_distr::StandardNormal);
    let im: f64 = rand::RngExt::sample(rng, rand_distr::StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws the multi-user channel: background entries i.i.d. Rayleigh behind
/// each user's direct pathloss, element cascades per the chosen model
/// behind the two segment losses.
///
/// Draw order is background row by row, then per element the incoming
/// fades before the outgoing ones, so a fixed rng state pins the whole
/// channel regardless of later model extensions.
pub fn sample_mu_channel_with<R: Rng + ?Sized>(
    geometry: &ScenarioGeometry,
    rx_positions: &[[f64; 3]],
    n: usize,
    m: usize,
    model: CascadeModel,
    rng: &mut R,
) -> Result<MultiUserChannel> {
    if rx_positions.is_empty() {
        return Err(Error::InvalidParameter("need at least one receiver".into()));
    }
    if n < 1 || m < 1 {
        return Err(Error::InvalidParameter(
            "need at least one element and one antenna".into(),
        ));
    }
    geometry.validate()?;
    for (l, &rx) in rx_positions.iter().enumerate() {
        if distance(geometry.tx_pos, rx) <= 0.0 || distance(geometry.irs_pos, rx) <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "receiver {l} coincides with the transmitter or the surface"
            )));
        }
    }
    let el_count = rx_positions.len();
    let direct_amps: Vec<f64> =
        rx_positions.iter().map(|&rx| geometry.direct_amplitude_to(rx)).collect();
    let cascade_amps: Vec<f64> =
        rx_positions.iter().map(|&rx| geometry.cascade_amplitude_to(rx)).collect();
    let mut background = Vec::with_capacity(el_count * m);
    for &a0 in &direct_amps {
        for _ in 0..m {
            background.push(complex_gaussian(rng) * a0);
        }
    }
    let mut elements = Vec::with_capacity(n);
    for _ in 0..n {
        match model {
            CascadeModel::RankOne => {
                let incoming: Vec<Complex64> =
                    (0..m).map(|_| complex_gaussian(rng)).collect();
                let outgoing: Vec<Complex64> = cascade_amps
                    .iter()
                    .map(|&a1| complex_gaussian(rng) * a1)
                    .collect();
                elements.push(ElementCascade::RankOne { incoming, outgoing });
            }
            CascadeModel::IndependentEntries => {
                let mut g = Vec::with_capacity(el_count * m);
                for &a1 in &cascade_amps {
                    for _ in 0..m {
                        g.push(complex_gaussian(rng) * a1);
                    }
                }
                elements.push(ElementCascade::Dense(g));
            }
        }
    }
    MultiUserChannel::new(m, el_count, background, elements)
}

/// [`sample_mu_channel_with`] under the default rank-1 cascade model.
pub fn sample_mu_channel<R: Rng + ?Sized>(
    geometry: &ScenarioGeometry,
    rx_positions: &[[f64; 3]],
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<MultiUserChannel> {
    sample_mu_channel_with(geometry, rx_positions, n, m, CascadeModel::RankOne, rng)
}

/// Draws a precoder with columns uniform on the complex unit sphere and
/// the transmit power split equally across the L streams.
///
/// More streams than antennas is accepted (the columns just stop being
/// linearly independent); callers that care should check l ≤ m.
pub fn random_precoder<R: Rng + ?Sized>(
    m: usize,
    l: usize,
    tx_power: f64,
    rng: &mut R,
) -> Result<Precoder> {
    if m < 1 || l < 1 {
        return Err(Error::InvalidParameter(
            "need at least one antenna and one stream".into(),
        ));
    }
    if !(tx_power > 0.0) {
        return Err(Error::InvalidParameter("tx power must be positive".into()));
    }
    let mut columns = Vec::with_capacity(m * l);
    for _ in 0..l {
        let start = columns.len();
        columns.extend((0..m).map(|_| complex_gaussian(rng)));
        let norm = columns[start..].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        assert!(norm > 0.0, "draw of a continuous vector hit exactly zero");
        for c in &mut columns[start..] {
            *c /= norm;
        }
    }
    Ok(Precoder { m, l, columns, per_stream_power: tx_power / l as f64 })
}

/// Sum spectral efficiency Σ_l log2(1 + SINR_l) under `config`.
///
/// User l's stream arrives through row_l·w_l; every other stream leaks in
/// through row_l·w_m and counts as interference on top of the noise floor.
pub fn sum_se(
    channel: &MultiUserChannel,
    precoder: &Precoder,
    config: &PhaseConfig,
    noise_power: f64,
) -> Result<f64> {
    if precoder.m() != channel.m() || precoder.l() != channel.l() {
        return Err(Error::DimensionMismatch {
            expected: channel.m() * channel.l(),
            actual: precoder.m() * precoder.l(),
        });
    }
    if !(noise_power >= 0.0) {
        return Err(Error::InvalidParameter("noise power must be nonnegative".into()));
    }
    let rows = channel.effective_rows(config)?;
    let m = channel.m();
    let ps = precoder.per_stream_power();
    let mut total = 0.0;
    for l in 0..channel.l() {
        let row = &rows[l * m..(l + 1) * m];
        let mut signal = 0.0;
        let mut interference = 0.0;
        for s in 0..precoder.l() {
            let dot: Complex64 = row
                .iter()
                .zip(precoder.column(s))
                .map(|(&r, &w)| r * w)
                .sum();
            let p = ps * dot.norm_sqr();
            if s == l {
                signal = p;
            } else {
                interference += p;
            }
        }
        total += (1.0 + signal / (interference + noise_power)).log2();
    }
    Ok(total)
}

/// The receiver layout of the four-user experiments: the single-user
/// receiver plus three more on the meter grid next to it.
pub fn four_user_positions() -> Vec<[f64; 3]> {
    vec![
        [0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
    ]
}

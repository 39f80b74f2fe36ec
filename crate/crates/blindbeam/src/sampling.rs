//! Random probing of the surface and the statistics extracted from it.
//!
//! The blind algorithms never see the channel. What they see is T probes:
//! random phase configurations and the received power (optionally the
//! complex signal) measured under each. This module draws those
//! configurations, simulates the receiver, and reduces the measurements to
//! the per-element conditional means everything downstream runs on.

use num_complex::Complex64;
use rand::{Rng, RngExt};
use std::io::{self, Write};

use crate::channel::ChannelInstance;
use crate::codebook::{unit_rotation, Codebook, PhaseConfig};
use crate::error::{Error, Result};
use crate::seeding::{self, stream};

/// Dense table of T phase configurations, row t holding the 1-based
/// codebook indices of every element at probe t.
///
/// Semantically this is a list of [`PhaseConfig`] rows; it is stored flat
/// so million-row tables stay cache-friendly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigTable {
    n: usize,
    k: u16,
    indices: Vec<u16>,
}

impl ConfigTable {
    pub fn from_rows(rows: Vec<Vec<u16>>, k: u16) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidParameter(
                "config table needs at least one row".into(),
            ));
        };
        let n = first.len();
        let mut indices = Vec::with_capacity(rows.len() * n);
        for row in &rows {
            // Validation happens via PhaseConfig so both paths agree on
            // what a legal row is.
            let cfg = PhaseConfig::new(row.clone(), k)?;
            if cfg.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: cfg.len() });
            }
            indices.extend_from_slice(cfg.indices());
        }
        Ok(Self { n, k, indices })
    }

    /// Number of rows T.
    pub fn len(&self) -> usize {
        self.indices.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Elements per row N.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Alphabet size K.
    pub fn k(&self) -> u16 {
        self.k
    }

    pub fn row(&self, t: usize) -> &[u16] {
        &self.indices[t * self.n..(t + 1) * self.n]
    }

    pub fn config(&self, t: usize) -> PhaseConfig {
        PhaseConfig::new(self.row(t).to_vec(), self.k).expect("stored rows are valid")
    }
}

/// Random stream for the configuration indices of probe `t`.
///
/// Every probe gets its own substream derived from a base seed, so a
/// streaming consumer that never materializes the table sees bit-identical
/// indices to a batch consumer, in any execution order.
pub fn row_rng(base: u64, t: u64) -> rand_chacha::ChaCha8Rng {
    seeding::substream(base, &[stream::SAMPLES, t])
}

/// Random stream for the receiver-side randomness (pilot phase, noise) of
/// probe `t`, kept separate from the index stream.
pub fn receiver_rng(base: u64, t: u64) -> rand_chacha::ChaCha8Rng {
    seeding::substream(base, &[stream::NOISE, t])
}

/// Fills one row of uniform codebook indices from the probe's own stream.
pub fn draw_row(base: u64, t: u64, n: usize, k: u16, out: &mut Vec<u16>) {
    let mut rng = row_rng(base, t);
    out.clear();
    out.extend((0..n).map(|_| rng.random_range(1..=k)));
}

/// Draws T probe configurations, every index i.i.d. uniform over {1..K}.
///
/// The rng argument only seeds the table; rows are then derived per probe
/// (see [`row_rng`]), which is what makes chunked or parallel regeneration
/// of the same table possible.
pub fn draw_samples<R: Rng + ?Sized>(
    n: usize,
    codebook: &Codebook,
    t: usize,
    rng: &mut R,
) -> Result<ConfigTable> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one element".into()));
    }
    if t == 0 {
        return Err(Error::InvalidParameter("need at least one probe".into()));
    }
    let base = rng.next_u64();
    let k = codebook.k();
    let mut indices = Vec::with_capacity(t * n);
    let mut row = Vec::with_capacity(n);
    for ti in 0..t {
        draw_row(base, ti as u64, n, k, &mut row);
        indices.extend_from_slice(&row);
    }
    Ok(ConfigTable { n, k, indices })
}

/// How the receiver is simulated and what it records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalOptions {
    /// Record the complex received signal alongside its power. Needed by
    /// the K=2 enhanced algorithm; everything else runs on powers alone.
    pub complex_mode: bool,
    /// Send the same pilot √P every probe. When false the pilot phase is
    /// re-drawn uniformly per probe, which only power-based consumers
    /// tolerate.
    pub common_symbol: bool,
}

impl Default for SignalOptions {
    fn default() -> Self {
        Self { complex_mode: false, common_symbol: true }
    }
}

/// T probe measurements of one channel instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDataset {
    configs: ConfigTable,
    powers: Vec<f64>,
    signals: Option<Vec<Complex64>>,
    tx_power: f64,
    noise_power: f64,
}

impl SampleDataset {
    pub fn new(
        configs: ConfigTable,
        powers: Vec<f64>,
        signals: Option<Vec<Complex64>>,
        tx_power: f64,
        noise_power: f64,
    ) -> Result<Self> {
        if powers.len() != configs.len() {
            return Err(Error::DimensionMismatch {
                expected: configs.len(),
                actual: powers.len(),
            });
        }
        if powers.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter(
                "powers must be finite and nonnegative".into(),
            ));
        }
        if let Some(sig) = &signals {
            if sig.len() != powers.len() {
                return Err(Error::DimensionMismatch {
                    expected: powers.len(),
                    actual: sig.len(),
                });
            }
            for (t, (&s, &p)) in sig.iter().zip(&powers).enumerate() {
                let err = (s.norm_sqr() - p).abs();
                if err > 1e-9 * p.max(f64::MIN_POSITIVE) {
                    return Err(Error::InvalidParameter(format!(
                        "signal/power mismatch at row {t}: |Y|² = {} vs {p}",
                        s.norm_sqr()
                    )));
                }
            }
        }
        Ok(Self { configs, powers, signals, tx_power, noise_power })
    }

    pub fn len(&self) -> usize {
        self.powers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.powers.is_empty()
    }

    pub fn n(&self) -> usize {
        self.configs.n()
    }

    pub fn k(&self) -> u16 {
        self.configs.k()
    }

    pub fn configs(&self) -> &ConfigTable {
        &self.configs
    }

    pub fn powers(&self) -> &[f64] {
        &self.powers
    }

    pub fn signals(&self) -> Option<&[Complex64]> {
        self.signals.as_deref()
    }

    pub fn tx_power(&self) -> f64 {
        self.tx_power
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    /// Writes the dataset as text columns t, k_1..k_N, power, re_y, im_y.
    /// The complex columns are left blank when signals were not recorded.
    pub fn write_columnar<W: Write>(&self, out: &mut W) -> io::Result<()> {
        write!(out, "t")?;
        for n in 1..=self.n() {
            write!(out, ",k_{n}")?;
        }
        writeln!(out, ",power,re_y,im_y")?;
        for t in 0..self.len() {
            write!(out, "{t}")?;
            for &idx in self.configs.row(t) {
                write!(out, ",{idx}")?;
            }
            write!(out, ",{:.11e}", self.powers[t])?;
            match &self.signals {
                Some(sig) => writeln!(out, ",{:.11e},{:.11e}", sig[t].re, sig[t].im)?,
                None => writeln!(out, ",,")?,
            }
        }
        Ok(())
    }
}

/// Simulates the receiver over the given probe configurations.
///
/// Probe t observes Y_t = g_t X_t + Z_t, where g_t is the direct path plus
/// the rotated element paths, X_t the pilot (constant √P, or √P with a
/// random phase when common_symbol is off), and Z_t receiver noise of the
/// given power. Receiver randomness comes from a per-probe substream
/// seeded off `rng`, so the result is a pure function of (inputs, rng
/// state) no matter how the loop is executed. A zero noise power draws no
/// noise at all.
pub fn simulate_dataset<R: Rng + ?Sized>(
    channel: &ChannelInstance,
    configs: &ConfigTable,
    tx_power: f64,
    noise_power: f64,
    rng: &mut R,
    options: SignalOptions,
) -> Result<SampleDataset> {
    if configs.n() != channel.n() {
        return Err(Error::DimensionMismatch {
            expected: channel.n(),
            actual: configs.n(),
        });
    }
    if !(tx_power > 0.0) {
        return Err(Error::InvalidParameter("tx power must be positive".into()));
    }
    if !(noise_power >= 0.0) {
        return Err(Error::InvalidParameter("noise power must be nonnegative".into()));
    }
    let base = rng.next_u64();
    let t_total = configs.len();
    let rotations = rotation_table(configs.k());
    let amplitude = tx_power.sqrt();
    let mut powers = Vec::with_capacity(t_total);
    let mut signals = options.complex_mode.then(|| Vec::with_capacity(t_total));
    for t in 0..t_total {
        let y = receive_probe(
            channel,
            configs.row(t),
            &rotations,
            amplitude,
            noise_power,
            base,
            t as u64,
            options.common_symbol,
        );
        powers.push(y.norm_sqr());
        if let Some(sig) = &mut signals {
            sig.push(y);
        }
    }
    SampleDataset::new(configs.clone(), powers, signals, tx_power, noise_power)
}

/// Rotation lookup for 1-based indices: entry k-1 is e^{jkω}.
pub(crate) fn rotation_table(k: u16) -> Vec<Complex64> {
    (1..=k).map(|i| unit_rotation(i, k)).collect()
}

/// One received sample; shared by the batch simulator and the streaming
/// experiment paths so both observe identical randomness.
#[allow(clippy::too_many_arguments)]
pub(crate) fn receive_probe(
    channel: &ChannelInstance,
    row: &[u16],
    rotations: &[Complex64],
    pilot_amplitude: f64,
    noise_power: f64,
    base: u64,
    t: u64,
    common_symbol: bool,
) -> Complex64 {
    let mut g = channel.h0();
    for (&h, &idx) in channel.elements().iter().zip(row) {
        g += h * rotations[usize::from(idx) - 1];
    }
    if !common_symbol || noise_power > 0.0 {
        let mut rng = receiver_rng(base, t);
        let pilot = if common_symbol {
            Complex64::new(pilot_amplitude, 0.0)
        } else {
            Complex64::from_polar(pilot_amplitude, rng.random_range(0.0..std::f64::consts::TAU))
        };
        let mut y = g * pilot;
        if noise_power > 0.0 {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            y += Complex64::new(re, im) * (noise_power / 2.0).sqrt();
        }
        y
    } else {
        g * pilot_amplitude
    }
}

/// Per-element, per-index measurement means.
///
/// Entry (n, k) summarizes the probes whose element n happened to sit at
/// index k. The centered statistic subtracts the grand mean, which leaves
/// (in expectation) a pure cosine in k peaking at the element's phase gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalStats {
    n: usize,
    k: u16,
    total: u64,
    bucket_sizes: Vec<u64>,
    cond_mean_power: Vec<f64>,
    centered: Vec<f64>,
    cond_mean_signal: Option<Vec<Complex64>>,
    grand_mean_power: f64,
    grand_mean_signal: Option<Complex64>,
}

impl ConditionalStats {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> u16 {
        self.k
    }

    /// Total probe count T.
    pub fn total(&self) -> u64 {
        self.total
    }

    fn idx(&self, n: usize, k: u16) -> usize {
        debug_assert!(k >= 1 && k <= self.k);
        n * usize::from(self.k) + usize::from(k) - 1
    }

    pub fn bucket_size(&self, n: usize, k: u16) -> u64 {
        self.bucket_sizes[self.idx(n, k)]
    }

    /// Whether bucket (n, k) holds at least one probe. Empty buckets carry
    /// no information and are skipped by every argmax.
    pub fn is_valid(&self, n: usize, k: u16) -> bool {
        self.bucket_size(n, k) > 0
    }

    pub fn cond_power(&self, n: usize, k: u16) -> f64 {
        self.cond_mean_power[self.idx(n, k)]
    }

    pub fn centered(&self, n: usize, k: u16) -> f64 {
        self.centered[self.idx(n, k)]
    }

    pub fn cond_signal(&self, n: usize, k: u16) -> Option<Complex64> {
        self.cond_mean_signal.as_ref().map(|v| v[self.idx(n, k)])
    }

    pub fn has_signals(&self) -> bool {
        self.cond_mean_signal.is_some()
    }

    pub fn grand_mean_power(&self) -> f64 {
        self.grand_mean_power
    }

    pub fn grand_mean_signal(&self) -> Option<Complex64> {
        self.grand_mean_signal
    }

    /// Number of empty (n, k) buckets.
    pub fn empty_buckets(&self) -> usize {
        self.bucket_sizes.iter().filter(|&&c| c == 0).count()
    }

    /// Population statistics instead of sample means: what an infinitely
    /// long common-symbol probe run would converge to.
    ///
    /// Conditional power of (n, k) is P|h_0 + h_n e^{jkω}|² plus the power
    /// of the other elements and the noise floor; the grand mean averages
    /// the rotation away. Bucket sizes are set to 1 (every bucket equally,
    /// infinitely populated). This is the noiseless evaluation path: it
    /// feeds the same algorithms as measured statistics, with estimation
    /// error exactly zero.
    pub fn exact(
        channel: &ChannelInstance,
        codebook: &Codebook,
        tx_power: f64,
        noise_power: f64,
        with_signals: bool,
    ) -> Self {
        let n = channel.n();
        let k = codebook.k();
        let total_beta_sq: f64 = channel.betas().iter().map(|b| b * b).sum();
        let grand_mean_power =
            tx_power * (channel.beta0() * channel.beta0() + total_beta_sq) + noise_power;
        let amp = tx_power.sqrt();
        let grand_mean_signal = with_signals.then(|| channel.h0() * amp);
        let mut cond_mean_power = Vec::with_capacity(n * usize::from(k));
        let mut centered = Vec::with_capacity(n * usize::from(k));
        let mut cond_mean_signal = with_signals.then(|| Vec::with_capacity(n * usize::from(k)));
        for ni in 0..n {
            let beta_n = channel.beta(ni);
            let others = total_beta_sq - beta_n * beta_n;
            for ki in 1..=k {
                let aligned = channel.h0() + channel.element(ni) * codebook.rotation(ki);
                let power = tx_power * (aligned.norm_sqr() + others) + noise_power;
                cond_mean_power.push(power);
                centered.push(power - grand_mean_power);
                if let Some(sig) = &mut cond_mean_signal {
                    sig.push(aligned * amp);
                }
            }
        }
        Self {
            n,
            k,
            total: u64::from(k),
            bucket_sizes: vec![1; n * usize::from(k)],
            cond_mean_power,
            centered,
            cond_mean_signal,
            grand_mean_power,
            grand_mean_signal,
        }
    }
}

/// Streaming builder for [`ConditionalStats`].
///
/// Feed it (row, power) pairs one probe at a time; nothing about the probes
/// is retained beyond running sums, so arbitrarily long runs use constant
/// memory. The batch reducer [`conditional_stats`] is this same
/// accumulator driven off a materialized dataset.
#[derive(Debug, Clone)]
pub struct ConditionalAccumulator {
    n: usize,
    k: u16,
    total: u64,
    counts: Vec<u64>,
    power_sums: Vec<f64>,
    signal_sums: Option<Vec<Complex64>>,
    grand_power_sum: f64,
    grand_signal_sum: Complex64,
}

impl ConditionalAccumulator {
    pub fn new(n: usize, k: u16, with_signals: bool) -> Self {
        let cells = n * usize::from(k);
        Self {
            n,
            k,
            total: 0,
            counts: vec![0; cells],
            power_sums: vec![0.0; cells],
            signal_sums: with_signals.then(|| vec![Complex64::new(0.0, 0.0); cells]),
            grand_power_sum: 0.0,
            grand_signal_sum: Complex64::new(0.0, 0.0),
        }
    }

    /// Adds one probe. `signal` is required exactly when the accumulator
    /// was created with signals enabled.
    pub fn push(&mut self, row: &[u16], power: f64, signal: Option<Complex64>) {
        debug_assert_eq!(row.len(), self.n);
        self.total += 1;
        self.grand_power_sum += power;
        if let Some(s) = signal {
            self.grand_signal_sum += s;
        }
        let k = usize::from(self.k);
        for (ni, &idx) in row.iter().enumerate() {
            let cell = ni * k + usize::from(idx) - 1;
            self.counts[cell] += 1;
            self.power_sums[cell] += power;
            if let (Some(sums), Some(s)) = (&mut self.signal_sums, signal) {
                sums[cell] += s;
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn finish(self) -> Result<ConditionalStats> {
        if self.total == 0 {
            return Err(Error::InvalidParameter(
                "no probes accumulated".into(),
            ));
        }
        let t = self.total as f64;
        let cond_mean_power: Vec<f64> = self
            .power_sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect();
        let grand_mean_power = self.grand_power_sum / t;
        let centered = cond_mean_power
            .iter()
            .zip(&self.counts)
            .map(|(&m, &c)| if c > 0 { m - grand_mean_power } else { 0.0 })
            .collect();
        let cond_mean_signal = self.signal_sums.map(|sums| {
            sums.iter()
                .zip(&self.counts)
                .map(|(&s, &c)| if c > 0 { s / c as f64 } else { Complex64::new(0.0, 0.0) })
                .collect()
        });
        let grand_mean_signal =
            cond_mean_signal.is_some().then(|| self.grand_signal_sum / t);
        Ok(ConditionalStats {
            n: self.n,
            k: self.k,
            total: self.total,
            bucket_sizes: self.counts,
            cond_mean_power,
            centered,
            cond_mean_signal,
            grand_mean_power,
            grand_mean_signal,
        })
    }
}

/// Reduces a dataset to per-(element, index) conditional means.
pub fn conditional_stats(dataset: &SampleDataset) -> Result<ConditionalStats> {
    let mut acc = ConditionalAccumulator::new(
        dataset.n(),
        dataset.k(),
        dataset.signals().is_some(),
    );
    for t in 0..dataset.len() {
        let signal = dataset.signals().map(|s| s[t]);
        acc.push(dataset.configs().row(t), dataset.powers()[t], signal);
    }
    acc.finish()
}

/// Candidate evaluator that reports the exact expected received power
/// P·|g(θ)|² + σ² of a configuration. This is the noiseless-evaluation
/// oracle used by property tests and exact experiment modes.
pub fn exact_power_evaluator<'a>(
    channel: &'a ChannelInstance,
    tx_power: f64,
    noise_power: f64,
) -> impl FnMut(&PhaseConfig) -> f64 + 'a {
    move |config: &PhaseConfig| {
        let mut g = channel.h0();
        for n in 0..config.len() {
            g += channel.element(n) * config.rotation(n);
        }
        tx_power * g.norm_sqr() + noise_power
    }
}

/// Candidate evaluator that takes `probes` fresh common-symbol
/// measurements of each configuration it is asked about and averages the
/// observed powers. Successive calls consume successive probe substreams,
/// so a fixed call sequence is fully reproducible from `seed`.
pub fn measured_power_evaluator<'a>(
    channel: &'a ChannelInstance,
    tx_power: f64,
    noise_power: f64,
    probes: usize,
    seed: u64,
) -> impl FnMut(&PhaseConfig) -> f64 + 'a {
    let mut call: u64 = 0;
    move |config: &PhaseConfig| {
        let base = seeding::derive(seed, &[stream::PROBE, call]);
        call += 1;
        let rotations = rotation_table(config.k());
        let amp = tx_power.sqrt();
        let mut acc = 0.0;
        for t in 0..probes {
            let y = receive_probe(
                channel,
                config.indices(),
                &rotations,
                amp,
                noise_power,
                base,
                t as u64,
                true,
            );
            acc += y.norm_sqr();
        }
        acc / probes as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_channel, ScenarioGeometry};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn toy_channel() -> ChannelInstance {
        ChannelInstance::new(
            Complex64::new(1.0, 0.0),
            vec![Complex64::new(0.0, 0.5), Complex64::new(0.3, 0.0)],
        )
        .unwrap()
    }

    #[test]
    fn draw_frequencies_are_uniform() {
        let cb = Codebook::new(2).unwrap();
        let mut rng = seeding::substream(3, &[stream::SAMPLES]);
        let table = draw_samples(1, &cb, 100_000, &mut rng).unwrap();
        let ones = (0..table.len()).filter(|&t| table.row(t)[0] == 1).count();
        let freq = ones as f64 / table.len() as f64;
        assert!((freq - 0.5).abs() < 0.01, "frequency {freq}");
    }

    #[test]
    fn draws_are_deterministic() {
        let cb = Codebook::new(4).unwrap();
        let mut r1 = seeding::substream(9, &[stream::SAMPLES]);
        let mut r2 = seeding::substream(9, &[stream::SAMPLES]);
        let a = draw_samples(5, &cb, 50, &mut r1).unwrap();
        let b = draw_samples(5, &cb, 50, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_probe_table() {
        let cb = Codebook::new(3).unwrap();
        let mut rng = seeding::substream(1, &[stream::SAMPLES]);
        let table = draw_samples(4, &cb, 1, &mut rng).unwrap();
        assert_eq!(table.len(), 1);
        assert!(table.row(0).iter().all(|&k| (1..=3).contains(&k)));
    }

    #[test]
    fn noiseless_aligned_probe_power() {
        let ch = ChannelInstance::new(Complex64::ONE, vec![Complex64::ONE]).unwrap();
        let table = ConfigTable::from_rows(vec![vec![2]], 2).unwrap();
        let mut rng = seeding::substream(0, &[stream::NOISE]);
        let ds =
            simulate_dataset(&ch, &table, 1.0, 0.0, &mut rng, SignalOptions::default())
                .unwrap();
        assert_eq!(ds.powers()[0], 4.0);
    }

    #[test]
    fn mean_power_matches_population_value() {
        // E|Y|² = P(β0² + Σβn²) + σ² under uniform random indices.
        let ch = toy_channel();
        let cb = Codebook::new(4).unwrap();
        let p = 2.0;
        let s2 = 0.25;
        let mut rng = seeding::substream(12, &[stream::SAMPLES]);
        let table = draw_samples(2, &cb, 1_000_000, &mut rng).unwrap();
        let mut nrng = seeding::substream(12, &[stream::NOISE]);
        let ds = simulate_dataset(&ch, &table, p, s2, &mut nrng, SignalOptions::default())
            .unwrap();
        let mean: f64 = ds.powers().iter().sum::<f64>() / ds.len() as f64;
        let expected = p * (1.0 + 0.25 + 0.09) + s2;
        assert_relative_eq!(mean, expected, max_relative = 0.01);
    }

    #[test]
    fn complex_mode_records_consistent_signals() {
        let ch = toy_channel();
        let cb = Codebook::new(4).unwrap();
        let mut rng = seeding::substream(5, &[stream::SAMPLES]);
        let table = draw_samples(2, &cb, 200, &mut rng).unwrap();
        let opts = SignalOptions { complex_mode: true, common_symbol: true };
        let mut nrng = seeding::substream(5, &[stream::NOISE]);
        let ds = simulate_dataset(&ch, &table, 1.0, 1e-3, &mut nrng, opts).unwrap();
        let sig = ds.signals().unwrap();
        for (s, &pw) in sig.iter().zip(ds.powers()) {
            assert_relative_eq!(s.norm_sqr(), pw, max_relative = 1e-12);
        }
    }

    #[test]
    fn power_only_mode_has_no_signals() {
        let ch = toy_channel();
        let table = ConfigTable::from_rows(vec![vec![1, 2], vec![3, 4]], 4).unwrap();
        let mut rng = seeding::substream(5, &[stream::NOISE]);
        let ds =
            simulate_dataset(&ch, &table, 1.0, 0.0, &mut rng, SignalOptions::default())
                .unwrap();
        assert!(ds.signals().is_none());
    }

    #[test]
    fn randomized_pilot_keeps_power_statistics() {
        let ch = toy_channel();
        let cb = Codebook::new(4).unwrap();
        let mut rng = seeding::substream(21, &[stream::SAMPLES]);
        let table = draw_samples(2, &cb, 100_000, &mut rng).unwrap();
        let opts = SignalOptions { complex_mode: false, common_symbol: false };
        let mut nrng = seeding::substream(21, &[stream::NOISE]);
        let ds = simulate_dataset(&ch, &table, 1.0, 0.0, &mut nrng, opts).unwrap();
        let mean: f64 = ds.powers().iter().sum::<f64>() / ds.len() as f64;
        assert_relative_eq!(mean, 1.0 + 0.25 + 0.09, max_relative = 0.02);
    }

    fn hand_dataset() -> SampleDataset {
        // N=1, K=2; probe phases [π, 2π, π, 2π] are indices [1, 2, 1, 2].
        let table = ConfigTable::from_rows(vec![vec![1], vec![2], vec![1], vec![2]], 2)
            .unwrap();
        SampleDataset::new(table, vec![1.0, 2.0, 3.0, 4.0], None, 1.0, 0.0).unwrap()
    }

    #[test]
    fn conditional_means_by_hand() {
        let stats = conditional_stats(&hand_dataset()).unwrap();
        assert_eq!(stats.cond_power(0, 1), 2.0);
        assert_eq!(stats.cond_power(0, 2), 3.0);
    }

    #[test]
    fn centered_statistic_by_hand() {
        let stats = conditional_stats(&hand_dataset()).unwrap();
        assert_eq!(stats.grand_mean_power(), 2.5);
        assert_eq!(stats.centered(0, 1), -0.5);
        assert_eq!(stats.centered(0, 2), 0.5);
    }

    #[test]
    fn empty_bucket_is_flagged() {
        let table = ConfigTable::from_rows(vec![vec![1], vec![2], vec![1]], 3).unwrap();
        let ds = SampleDataset::new(table, vec![1.0, 2.0, 3.0], None, 1.0, 0.0).unwrap();
        let stats = conditional_stats(&ds).unwrap();
        assert!(!stats.is_valid(0, 3));
        assert!(stats.is_valid(0, 1));
        assert_eq!(stats.empty_buckets(), 1);
    }

    #[test]
    fn bucket_sizes_partition_total() {
        let ch = toy_channel();
        let cb = Codebook::new(3).unwrap();
        let mut rng = seeding::substream(8, &[stream::SAMPLES]);
        let table = draw_samples(2, &cb, 1000, &mut rng).unwrap();
        let mut nrng = seeding::substream(8, &[stream::NOISE]);
        let ds = simulate_dataset(&ch, &table, 1.0, 0.1, &mut nrng, SignalOptions::default())
            .unwrap();
        let stats = conditional_stats(&ds).unwrap();
        for n in 0..2 {
            let sum: u64 = (1..=3).map(|k| stats.bucket_size(n, k)).sum();
            assert_eq!(sum, 1000);
            let weighted: f64 = (1..=3)
                .map(|k| stats.bucket_size(n, k) as f64 * stats.cond_power(n, k))
                .sum::<f64>()
                / 1000.0;
            assert_relative_eq!(weighted, stats.grand_mean_power(), max_relative = 1e-9);
        }
    }

    #[test]
    fn streaming_equals_batch() {
        let ch = toy_channel();
        let cb = Codebook::new(4).unwrap();
        let mut rng = seeding::substream(13, &[stream::SAMPLES]);
        let table = draw_samples(2, &cb, 500, &mut rng).unwrap();
        let opts = SignalOptions { complex_mode: true, common_symbol: true };
        let mut nrng = seeding::substream(13, &[stream::NOISE]);
        let ds = simulate_dataset(&ch, &table, 1.0, 0.05, &mut nrng, opts).unwrap();
        let batch = conditional_stats(&ds).unwrap();
        let mut acc = ConditionalAccumulator::new(2, 4, true);
        for t in 0..ds.len() {
            acc.push(ds.configs().row(t), ds.powers()[t], Some(ds.signals().unwrap()[t]));
        }
        assert_eq!(acc.finish().unwrap(), batch);
    }

    #[test]
    fn exact_stats_identities() {
        let geom = ScenarioGeometry::default();
        let mut rng = seeding::substream(31, &[stream::CHANNEL]);
        let ch = sample_channel(&geom, 5, &mut rng).unwrap();
        let cb = Codebook::new(4).unwrap();
        let p = 1.0;
        let s2 = 1e-12;
        let stats = ConditionalStats::exact(&ch, &cb, p, s2, true);
        let gaps = crate::channel::phase_gaps(&ch);
        for (n, &gap) in gaps.iter().enumerate() {
            // Weighted average of conditional means over k recovers the
            // grand mean exactly (the rotations sum to zero).
            let avg: f64 = (1..=4).map(|k| stats.cond_power(n, k)).sum::<f64>() / 4.0;
            assert_relative_eq!(avg, stats.grand_mean_power(), max_relative = 1e-12);
            for k in 1..=4u16 {
                let expected = 2.0 * ch.beta0() * ch.beta(n) * p
                    * (cb.phase(k) - gap).cos();
                assert_relative_eq!(stats.centered(n, k), expected, max_relative = 1e-9);
            }
        }
        assert_eq!(
            stats.grand_mean_signal().unwrap(),
            ch.h0()
        );
    }

    #[test]
    fn measured_stats_converge_to_population() {
        // Long-run check of both conditional-mean limits: the raw bucket
        // mean and the centered cosine statistic.
        let ch = toy_channel();
        let cb = Codebook::new(4).unwrap();
        let p = 1.0;
        let mut rng = seeding::substream(17, &[stream::SAMPLES]);
        let table = draw_samples(2, &cb, 1_000_000, &mut rng).unwrap();
        let mut nrng = seeding::substream(17, &[stream::NOISE]);
        let ds = simulate_dataset(&ch, &table, p, 0.0, &mut nrng, SignalOptions::default())
            .unwrap();
        let stats = conditional_stats(&ds).unwrap();
        let exact = ConditionalStats::exact(&ch, &cb, p, 0.0, false);
        let gaps = crate::channel::phase_gaps(&ch);
        for (n, &gap) in gaps.iter().enumerate() {
            let scale = 2.0 * ch.beta0() * ch.beta(n) * p;
            for k in 1..=4u16 {
                assert_relative_eq!(
                    stats.cond_power(n, k),
                    exact.cond_power(n, k),
                    max_relative = 0.02
                );
                let expected = scale * (cb.phase(k) - gap).cos();
                assert!(
                    (stats.centered(n, k) - expected).abs() <= 0.05 * scale,
                    "centered ({n},{k}) = {} vs {}",
                    stats.centered(n, k),
                    expected
                );
            }
        }
    }

    #[test]
    fn columnar_export_layout() {
        let ds = hand_dataset();
        let mut buf = Vec::new();
        ds.write_columnar(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,k_1,power,re_y,im_y");
        assert_eq!(lines[1], "0,1,1.00000000000e0,,");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn exact_evaluator_matches_boost() {
        let ch = toy_channel();
        let cfg = PhaseConfig::new(vec![2, 3], 4).unwrap();
        let mut eval = exact_power_evaluator(&ch, 2.0, 1e-3);
        let boost = crate::channel::snr_boost(&ch, &cfg).unwrap();
        assert_relative_eq!(
            eval(&cfg),
            2.0 * boost * ch.beta0().powi(2) + 1e-3,
            max_relative = 1e-12
        );
    }

    #[test]
    fn measured_evaluator_is_unbiased_and_deterministic() {
        let ch = toy_channel();
        let cfg = PhaseConfig::new(vec![1, 4], 4).unwrap();
        let mut exact = exact_power_evaluator(&ch, 1.0, 0.01);
        let mut m1 = measured_power_evaluator(&ch, 1.0, 0.01, 4000, 77);
        let mut m2 = measured_power_evaluator(&ch, 1.0, 0.01, 4000, 77);
        let a = m1(&cfg);
        assert_eq!(a, m2(&cfg));
        // Noise-power std over 4000 probes is far below 5% of the signal.
        assert_relative_eq!(a, exact(&cfg), max_relative = 0.05);
        // A second call advances the probe stream.
        assert_ne!(m1(&cfg), a);
    }

    proptest! {
        #[test]
        fn weighted_bucket_means_recover_grand_mean(
            seed in 0u64..500,
            n in 1usize..4,
            k in 2u16..5,
            t in 1usize..60,
        ) {
            let cb = Codebook::new(k).unwrap();
            let mut rng = seeding::substream(seed, &[stream::SAMPLES]);
            let table = draw_samples(n, &cb, t, &mut rng).unwrap();
            let mut prng = seeding::substream(seed, &[stream::PROBE]);
            let powers: Vec<f64> = (0..t).map(|_| prng.random_range(0.0..10.0)).collect();
            let ds = SampleDataset::new(table, powers, None, 1.0, 0.0).unwrap();
            let stats = conditional_stats(&ds).unwrap();
            for ni in 0..n {
                let weighted: f64 = (1..=k)
                    .map(|ki| stats.bucket_size(ni, ki) as f64 * stats.cond_power(ni, ki))
                    .sum::<f64>() / t as f64;
                prop_assert!((weighted - stats.grand_mean_power()).abs()
                    <= 1e-9 * stats.grand_mean_power().abs().max(1e-300));
            }
        }

        #[test]
        fn signal_power_invariant_enforced(bad in 0.1f64..10.0) {
            let table = ConfigTable::from_rows(vec![vec![1]], 2).unwrap();
            let sig = vec![Complex64::new(1.0, 0.0)];
            let ds = SampleDataset::new(table, vec![bad], Some(sig), 1.0, 0.0);
            if (bad - 1.0).abs() > 1e-9 {
                prop_assert!(ds.is_err());
            } else {
                prop_assert!(ds.is_ok());
            }
        }
    }

    #[test]
    fn probe_phase_example_mapping() {
        // Phase π with K=2 is index 1, phase 2π index 2; the table in
        // hand_dataset really does encode [π, 2π, π, 2π].
        let cb = Codebook::new(2).unwrap();
        assert_eq!(cb.phase(1), PI);
        let ds = hand_dataset();
        assert_eq!(ds.configs().row(0), &[1]);
        assert_eq!(ds.configs().row(1), &[2]);
    }
}

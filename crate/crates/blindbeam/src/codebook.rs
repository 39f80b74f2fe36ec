//! Discrete phase alphabet and per-surface phase assignments.
//!
//! The alphabet is the K-point grid {ω, 2ω, …, Kω} with ω = 2π/K. Index
//! k = K sits at 2π, which is the identity rotation; it doubles as the
//! "unconfigured" state a bare reflector is in.

use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Unit rotation e^{jkω} for 1-based index `k` out of `k_total`.
///
/// k = k_total is pinned to exactly 1+0i rather than from_polar(1, 2π),
/// so the identity state is bit-exact everywhere it appears.
pub fn unit_rotation(k: u16, k_total: u16) -> Complex64 {
    debug_assert!(k >= 1 && k <= k_total);
    if k == k_total {
        Complex64::ONE
    } else {
        Complex64::from_polar(1.0, f64::from(k) * TAU / f64::from(k_total))
    }
}

/// The phase-shift alphabet Φ_K.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: u16,
    omega: f64,
    phases: Vec<f64>,
    rotations: Vec<Complex64>,
}

impl Codebook {
    /// Builds the K-point alphabet. K must be at least 2: a single-point
    /// alphabet cannot steer anything.
    pub fn new(k: u16) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "codebook needs K >= 2 phase levels, got {k}"
            )));
        }
        let omega = TAU / f64::from(k);
        let phases = (1..=k).map(|i| f64::from(i) * omega).collect();
        let rotations = (1..=k).map(|i| unit_rotation(i, k)).collect();
        Ok(Self { k, omega, phases, rotations })
    }

    pub fn k(&self) -> u16 {
        self.k
    }

    /// Grid spacing ω = 2π/K.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Phase value k·ω for 1-based index `k`.
    pub fn phase(&self, k: u16) -> f64 {
        self.phases[usize::from(k) - 1]
    }

    /// All K phase values in index order.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// Unit rotation e^{jkω} for 1-based index `k`.
    pub fn rotation(&self, k: u16) -> Complex64 {
        self.rotations[usize::from(k) - 1]
    }

    /// 1-based index above `k`, wrapping K → 1.
    pub fn step_up(&self, k: u16) -> u16 {
        if k == self.k { 1 } else { k + 1 }
    }

    /// 1-based index below `k`, wrapping 1 → K.
    pub fn step_down(&self, k: u16) -> u16 {
        if k == 1 { self.k } else { k - 1 }
    }
}

/// One beamformer: a codebook index per element.
///
/// Indices are 1-based ({1..K}); the implied phase of element n is
/// `indices[n]`·ω. The alphabet size is carried along so a config can be
/// interpreted without consulting a separate codebook.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseConfig {
    indices: Vec<u16>,
    k: u16,
}

impl PhaseConfig {
    pub fn new(indices: Vec<u16>, k: u16) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "phase config needs K >= 2, got {k}"
            )));
        }
        if indices.is_empty() {
            return Err(Error::InvalidParameter(
                "phase config needs at least one element".into(),
            ));
        }
        if let Some(bad) = indices.iter().find(|&&i| i < 1 || i > k) {
            return Err(Error::InvalidParameter(format!(
                "phase index {bad} outside 1..={k}"
            )));
        }
        Ok(Self { indices, k })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn k(&self) -> u16 {
        self.k
    }

    pub fn indices(&self) -> &[u16] {
        &self.indices
    }

    /// 1-based index of element `n` (0-based n).
    pub fn index(&self, n: usize) -> u16 {
        self.indices[n]
    }

    /// Phase θ_n in radians.
    pub fn phase(&self, n: usize) -> f64 {
        f64::from(self.indices[n]) * TAU / f64::from(self.k)
    }

    /// Unit rotation e^{jθ_n}.
    pub fn rotation(&self, n: usize) -> Complex64 {
        unit_rotation(self.indices[n], self.k)
    }
}

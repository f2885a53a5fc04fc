//! Joint probability spectra and information functionals.
//!
//! Probabilities are coincidence detection probabilities `P(l1, p1; l2, p2)`
//! over a [`ModeWindow`]. All logarithms are base 2, including the single-arm
//! Shannon entropy, so the rotational-symmetry identity `I = S1` holds in a
//! common unit; `0 log 0` is taken as `0`.
//!
//! Sign convention: the idler is recorded as `l2` with no relabeling, so a
//! clear aperture concentrates all probability on the anti-diagonal
//! `l1 = -l2` (total charge zero), and rotationally symmetric objects keep it
//! there. "Correlated diagonal" below always means that one.

use std::io::Write;

use serde::Serialize;

use crate::error::{CsiError, Result};
use crate::spdc::AmplitudeTable;
use crate::window::ModeWindow;

/// Normalized joint probabilities over a detection window.
#[derive(Debug, Clone)]
pub struct JointSpectrum {
    window: ModeWindow,
    probs: Vec<f64>,
}

/// A single-arm distribution over `(l, p)` modes.
#[derive(Debug, Clone)]
pub struct ArmDistribution {
    window: ModeWindow,
    probs: Vec<f64>,
}

/// Information functionals of a joint spectrum, all in bits.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InfoReport {
    /// Mutual information between the two arms.
    pub mutual_information: f64,
    /// Shannon entropy of the signal-arm marginal.
    pub signal_entropy: f64,
    /// `|I - S1|`: zero exactly when the second arm is informationally
    /// irrelevant, which detects rotational symmetry of the object.
    pub order_parameter: f64,
}

impl JointSpectrum {
    /// Probabilities from raw non-negative weights, normalized to sum 1.
    pub fn from_probabilities(window: ModeWindow, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != window.pair_count() {
            return Err(CsiError::Config(format!(
                "spectrum needs {} probabilities, got {}",
                window.pair_count(),
                probs.len()
            )));
        }
        if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(CsiError::Numeric(format!("invalid probability {p}")));
        }
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(CsiError::NoTransmission(
                "spectrum has zero total probability".into(),
            ));
        }
        let probs = probs.into_iter().map(|p| p / total).collect();
        Ok(Self { window, probs })
    }

    pub fn window(&self) -> &ModeWindow {
        &self.window
    }

    pub fn get(&self, l1: i32, p1: u32, l2: i32, p2: u32) -> f64 {
        self.probs[self.window.pair_index(l1, p1, l2, p2)]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn iter_indexed(&self) -> impl Iterator<Item = ((i32, u32, i32, u32), f64)> + '_ {
        let w = self.window;
        w.arm_modes().flat_map(move |(l1, p1)| {
            w.arm_modes()
                .map(move |(l2, p2)| ((l1, p1, l2, p2), self.probs[w.pair_index(l1, p1, l2, p2)]))
        })
    }

    /// Probability mass off the correlated (`l1 = -l2`) diagonal.
    pub fn off_diagonal_mass(&self) -> f64 {
        self.iter_indexed()
            .filter(|((l1, _, l2, _), _)| *l1 != -*l2)
            .map(|(_, p)| p)
            .sum()
    }

    /// Relabel both arms jointly by `l -> l + delta` (pure index shift).
    pub fn with_l_offset(&self, delta: i32) -> Result<Self> {
        let window = ModeWindow::new(
            self.window.l_min + delta,
            self.window.l_max + delta,
            self.window.p_max,
        )?;
        Ok(Self { window, probs: self.probs.clone() })
    }

    /// Total-variation distance to another spectrum on the same window.
    pub fn total_variation(&self, other: &JointSpectrum) -> Result<f64> {
        if self.window != other.window {
            return Err(CsiError::Config(
                "total variation requires matching windows".into(),
            ));
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }

    /// Fraction of entries at or above `rel_threshold` times the maximum.
    pub fn significant_fraction(&self, rel_threshold: f64) -> f64 {
        let max = self.probs.iter().cloned().fold(0.0, f64::max);
        if max == 0.0 {
            return 0.0;
        }
        let n = self.probs.iter().filter(|&&p| p >= rel_threshold * max).count();
        n as f64 / self.probs.len() as f64
    }

    /// Strict local maxima of the `p = 0` slice on the `(l1, l2)` grid under
    /// the 8-neighbor definition, keeping only peaks at or above
    /// `rel_floor` times the global maximum.
    pub fn local_maxima(&self, rel_floor: f64) -> Vec<(i32, i32, f64)> {
        let w = &self.window;
        let slice: Vec<Vec<f64>> = w
            .l_values()
            .map(|l1| w.l_values().map(|l2| self.get(l1, 0, l2, 0)).collect())
            .collect();
        let n = w.l_count();
        let global_max = slice
            .iter()
            .flat_map(|row| row.iter().cloned())
            .fold(0.0, f64::max);
        let mut peaks = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = slice[i][j];
                if v <= 0.0 || v < rel_floor * global_max {
                    continue;
                }
                let mut dominant = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (ii, jj) = (i as i64 + di, j as i64 + dj);
                        if ii >= 0
                            && jj >= 0
                            && (ii as usize) < n
                            && (jj as usize) < n
                            && slice[ii as usize][jj as usize] >= v
                        {
                            dominant = false;
                        }
                    }
                }
                if dominant {
                    peaks.push((w.l_min + i as i32, w.l_min + j as i32, v));
                }
            }
        }
        peaks
    }

    /// CSV matrix of the `p = 0` slice: rows over `l1`, columns over `l2`.
    pub fn write_heatmap_csv<W: Write>(&self, mut out: W) -> Result<()> {
        write!(out, "l1\\l2")?;
        for l2 in self.window.l_values() {
            write!(out, ",{l2}")?;
        }
        writeln!(out)?;
        for l1 in self.window.l_values() {
            write!(out, "{l1}")?;
            for l2 in self.window.l_values() {
                write!(out, ",{}", self.get(l1, 0, l2, 0))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

impl ArmDistribution {
    pub fn window(&self) -> &ModeWindow {
        &self.window
    }

    pub fn get(&self, l: i32, p: u32) -> f64 {
        self.probs[self.window.arm_index(l, p)]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.log2())
            .sum::<f64>()
    }

    pub fn total_variation(&self, other: &ArmDistribution) -> Result<f64> {
        if self.window != other.window {
            return Err(CsiError::Config(
                "total variation requires matching windows".into(),
            ));
        }
        Ok(0.5
            * self
                .probs
                .iter()
                .zip(&other.probs)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>())
    }
}

/// Probabilities are squared moduli of the (already normalized) amplitudes.
pub fn to_spectrum(amps: &AmplitudeTable) -> JointSpectrum {
    JointSpectrum {
        window: *amps.window(),
        probs: amps.entries().iter().map(|a| a.norm_sqr()).collect(),
    }
}

/// Marginal distributions at the two detectors: `(signal, idler)`.
pub fn marginals(s: &JointSpectrum) -> (ArmDistribution, ArmDistribution) {
    let w = s.window;
    let n = w.arm_count();
    let mut signal = vec![0.0; n];
    let mut idler = vec![0.0; n];
    for ((l1, p1, l2, p2), p) in s.iter_indexed() {
        signal[w.arm_index(l1, p1)] += p;
        idler[w.arm_index(l2, p2)] += p;
    }
    (
        ArmDistribution { window: w, probs: signal },
        ArmDistribution { window: w, probs: idler },
    )
}

/// The idler-only distribution left after summing out the signal arm, as a
/// mode-blind bucket detector would record it. Identical to the idler
/// marginal by definition.
pub fn bucket_marginal(s: &JointSpectrum) -> ArmDistribution {
    marginals(s).1
}

/// Mutual information, signal entropy, and the symmetry order parameter.
pub fn mutual_information(s: &JointSpectrum) -> InfoReport {
    let (signal, idler) = marginals(s);
    let w = s.window;
    let mut info = 0.0;
    for ((l1, p1, l2, p2), p) in s.iter_indexed() {
        if p > 0.0 {
            let denom = signal.probs[w.arm_index(l1, p1)] * idler.probs[w.arm_index(l2, p2)];
            info += p * (p / denom).log2();
        }
    }
    let s1 = signal.entropy();
    InfoReport {
        mutual_information: info,
        signal_entropy: s1,
        order_parameter: (info - s1).abs(),
    }
}

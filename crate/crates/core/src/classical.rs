//! Classically-correlated spiral imaging.
//!
//! Entanglement is not required for correlated OAM measurements: it is enough
//! that knowing the OAM recorded in the reference branch predicts the OAM
//! that reached the object. A broad simultaneous input spectrum does not
//! provide that prediction, so the supported acquisition mode scans single
//! OAM values one filter setting at a time, building the joint correlation
//! sequentially. The price is the scan itself: one setting per input value,
//! where the downconversion source delivers the whole range at once.

use serde::{Deserialize, Serialize};

use crate::error::{CsiError, Result};
use crate::overlap::OverlapTable;
use crate::spectra::JointSpectrum;
use crate::window::ModeWindow;

/// How the input OAM content is presented to the apparatus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScanMode {
    /// One input OAM value per acquisition step.
    Sequential,
    /// All input values at once (unsupported for imaging; see
    /// [`sequential_scan`]).
    BroadSimultaneous,
}

/// Correlation convention between the reference-branch OAM `l2` and the
/// input value sent toward the object. Mirror reflections in a real
/// apparatus flip the sign, so it is configurable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceCorrelation {
    /// `l2 = l_in`.
    Aligned,
    /// `l2 = -l_in`, matching the downconversion source's anti-correlation.
    Opposed,
}

/// Input OAM weight profile over `[l_min, l_max]`.
#[derive(Debug, Clone)]
pub struct InputSpectrum {
    l_min: i32,
    weights: Vec<f64>,
    mode: ScanMode,
}

impl InputSpectrum {
    pub fn from_weights(l_min: i32, weights: Vec<f64>, mode: ScanMode) -> Result<Self> {
        if weights.is_empty() {
            return Err(CsiError::Config("input spectrum needs at least one weight".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CsiError::Config("input weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(CsiError::Config("input weights must not all vanish".into()));
        }
        Ok(Self {
            l_min,
            weights: weights.into_iter().map(|w| w / total).collect(),
            mode,
        })
    }

    /// Equal weight on every value in `[l_min, l_max]`.
    pub fn uniform(l_min: i32, l_max: i32, mode: ScanMode) -> Result<Self> {
        if l_min > l_max {
            return Err(CsiError::Config(format!("bad input range [{l_min}, {l_max}]")));
        }
        let n = (l_max - l_min + 1) as usize;
        Self::from_weights(l_min, vec![1.0; n], mode)
    }

    /// The downconversion singles profile `(2/3)^{2|l|}`, the preset that
    /// makes the sequential scan reproduce the entangled spectrum.
    pub fn downconversion_profile(l_min: i32, l_max: i32, mode: ScanMode) -> Result<Self> {
        if l_min > l_max {
            return Err(CsiError::Config(format!("bad input range [{l_min}, {l_max}]")));
        }
        let weights = (l_min..=l_max)
            .map(|l| (2.0f64 / 3.0).powi(2 * l.abs()))
            .collect();
        Self::from_weights(l_min, weights, mode)
    }

    /// All weight on a single input value.
    pub fn point(l: i32, l_min: i32, l_max: i32, mode: ScanMode) -> Result<Self> {
        if !(l_min..=l_max).contains(&l) {
            return Err(CsiError::Config(format!("point value {l} outside [{l_min}, {l_max}]")));
        }
        let mut weights = vec![0.0; (l_max - l_min + 1) as usize];
        weights[(l - l_min) as usize] = 1.0;
        Self::from_weights(l_min, weights, mode)
    }

    pub fn mode(&self) -> ScanMode {
        self.mode
    }

    pub fn l_min(&self) -> i32 {
        self.l_min
    }

    pub fn l_max(&self) -> i32 {
        self.l_min + self.weights.len() as i32 - 1
    }

    pub fn weight(&self, l: i32) -> Option<f64> {
        if (self.l_min..=self.l_max()).contains(&l) {
            Some(self.weights[(l - self.l_min) as usize])
        } else {
            None
        }
    }
}

/// One step of the sequential acquisition, for transcript export.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScanStep {
    /// Input OAM value selected by the filter at this step.
    pub l_in: i32,
    /// Reference-branch OAM it predicts.
    pub l_reference: i32,
    /// Input weight spent on this step.
    pub weight: f64,
}

/// Joint spectrum accumulated by scanning single input OAM values.
///
/// For each reference value `l2` in the window, the correlated input
/// `l_in = corr(l2)` contributes `P(l1, l2) = weight(l_in) |a[l_in, l1; 0, 0]|^2`,
/// normalized over the window.
///
/// Broad simultaneous illumination is rejected: without per-shot correlation
/// there is no link between the reference-branch OAM `l2` and the input value
/// that reached the object, so that value is unknown and the object's OAM
/// change cannot be attributed.
pub fn sequential_scan(
    input: &InputSpectrum,
    overlaps: &OverlapTable,
    window: &ModeWindow,
    correlation: ReferenceCorrelation,
) -> Result<JointSpectrum> {
    if input.mode() == ScanMode::BroadSimultaneous {
        return Err(CsiError::UnsupportedMode(
            "broad simultaneous illumination carries no correlation between the \
             reference-branch OAM l2 and the input value l1' sent toward the object, \
             so l1' is unknown per shot; scan single values sequentially instead"
                .into(),
        ));
    }
    if window.p_max != 0 {
        return Err(CsiError::Config(
            "the sequential scan records the p = 0 slice; use p_max = 0".into(),
        ));
    }
    let corr = |l2: i32| match correlation {
        ReferenceCorrelation::Aligned => l2,
        ReferenceCorrelation::Opposed => -l2,
    };
    // The scan must visit the correlated input for every reference value.
    for l2 in window.l_values() {
        let l_in = corr(l2);
        if input.weight(l_in).is_none() {
            return Err(CsiError::Config(format!(
                "input spectrum [{}, {}] does not cover scanned value {l_in}",
                input.l_min(),
                input.l_max()
            )));
        }
        let ow = overlaps.window();
        if !(ow.l_min..=ow.l_max).contains(&l_in) {
            return Err(CsiError::Config(format!(
                "overlap table window {ow:?} does not cover scanned value {l_in}"
            )));
        }
    }

    let mut probs = vec![0.0; window.pair_count()];
    for l2 in window.l_values() {
        let l_in = corr(l2);
        let w = input.weight(l_in).unwrap();
        for l1 in window.l_values() {
            let a = overlaps.get(l_in, 0, l1, 0);
            probs[window.pair_index(l1, 0, l2, 0)] = w * a.norm_sqr();
        }
    }
    JointSpectrum::from_probabilities(*window, probs).map_err(|e| match e {
        CsiError::NoTransmission(_) => CsiError::NoTransmission(
            "the object transmits nothing at any scanned input value".into(),
        ),
        other => other,
    })
}

/// Transcript of the sequential acquisition, one record per filter setting.
pub fn scan_transcript(
    input: &InputSpectrum,
    window: &ModeWindow,
    correlation: ReferenceCorrelation,
) -> Vec<ScanStep> {
    window
        .l_values()
        .map(|l2| {
            let l_in = match correlation {
                ReferenceCorrelation::Aligned => l2,
                ReferenceCorrelation::Opposed => -l2,
            };
            ScanStep {
                l_in,
                l_reference: l2,
                weight: input.weight(l_in).unwrap_or(0.0),
            }
        })
        .collect()
}

/// Number of sequential filter settings a scan of the window requires; the
/// entangled source covers the same window in a single configuration.
pub fn scan_cost(window: &ModeWindow) -> usize {
    window.l_count()
}

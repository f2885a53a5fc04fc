//! Downconversion coupling and coincidence amplitudes.
//!
//! A fundamental-mode pump (`l0 = p0 = 0`) on a thin crystal at the waist
//! couples to signal/idler pairs with opposite orbital angular momentum. The
//! coupling coefficients have a closed double-sum form; [`coupling_oracle`]
//! cross-checks it against the defining overlap integral of the pump with a
//! mode pair.
//!
//! With an object of transfer table `a` in the signal arm, the coincidence
//! amplitude at detected indices `(l1, p1; l2, p2)` is
//!
//! `A = C0 * sum_{p'} coupling(|l2|; p', p2) * a[-l2, l1; p', p1]`,
//!
//! where `C0` normalizes total probability to one over the detection window
//! (post-selection normalization).

use std::io::Write;

use num_complex::Complex64;

use crate::error::{CsiError, Result};
use crate::modes::{eval_mode, ln_factorial, BeamGeometry, ModeIndex};
use crate::overlap::{integrate_polar, OverlapTable};
use crate::window::ModeWindow;

/// Closed-form coupling coefficient for signal/idler charges `(+l, -l)` and
/// radial indices `(p1, p2)`. Factorial ratios are evaluated in log space;
/// the alternating double sum is compensated (Kahan) so cancellation between
/// terms cannot silently lose digits.
pub fn coupling(l: u32, p1: u32, p2: u32) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for m in 0..=p1 {
        for n in 0..=p2 {
            let ln_ratio = 0.5
                * (ln_factorial(p1)
                    + ln_factorial(p2)
                    + ln_factorial(l + p1)
                    + ln_factorial(l + p2))
                + ln_factorial(l + m + n)
                - ln_factorial(p1 - m)
                - ln_factorial(p2 - n)
                - ln_factorial(l + m)
                - ln_factorial(l + n)
                - ln_factorial(m)
                - ln_factorial(n);
            let magnitude = (2.0f64 / 3.0).powi((m + n + l) as i32) * ln_ratio.exp();
            let term = if (m + n) % 2 == 0 { magnitude } else { -magnitude };
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
    }
    sum
}

/// Defining integral of the coupling: the pump profile projected on a
/// conjugated signal/idler mode pair at the waist. Used only as a
/// cross-check oracle for [`coupling`]; compare after dividing by the
/// `(0, 0, 0)` value to fix the common normalization.
pub fn coupling_oracle(l: u32, p1: u32, p2: u32, pump: ModeIndex) -> Result<f64> {
    if pump != ModeIndex::new(0, 0) {
        return Err(CsiError::Config(format!(
            "coupling oracle is defined for a fundamental-mode pump, got ({}, {})",
            pump.l, pump.p
        )));
    }
    let g = BeamGeometry::waist();
    let signal = ModeIndex::new(l as i32, p1);
    let idler = ModeIndex::new(-(l as i32), p2);
    let value = integrate_polar(
        |r, phi| {
            eval_mode(pump, &g, r, phi)
                * (eval_mode(signal, &g, r, phi) * eval_mode(idler, &g, r, phi)).conj()
        },
        8.0,
        128,
        32,
    )?;
    // The azimuthal phases cancel exactly, so the integral is real.
    Ok(value.re)
}

/// Table of coupling coefficients over `|l| <= l_max`, `p1, p2 <= p_max`.
/// Values for negative `l` follow from the symmetric extension
/// `C[-l, l] = C[l, -l]`.
#[derive(Debug, Clone)]
pub struct CouplingTable {
    l_max: u32,
    p_max: u32,
    values: Vec<f64>,
    nonpositive: Vec<(u32, u32, u32)>,
}

impl CouplingTable {
    pub fn build(l_max: u32, p_max: u32) -> Self {
        let np = p_max as usize + 1;
        let mut values = Vec::with_capacity((l_max as usize + 1) * np * np);
        let mut nonpositive = Vec::new();
        for l in 0..=l_max {
            for p1 in 0..=p_max {
                for p2 in 0..=p_max {
                    let v = coupling(l, p1, p2);
                    if v <= 0.0 {
                        nonpositive.push((l, p1, p2));
                    }
                    values.push(v);
                }
            }
        }
        Self { l_max, p_max, values, nonpositive }
    }

    pub fn l_max(&self) -> u32 {
        self.l_max
    }

    pub fn p_max(&self) -> u32 {
        self.p_max
    }

    /// Coefficient for the `(l, -l)` pair; `l` of either sign.
    pub fn get(&self, l: i32, p1: u32, p2: u32) -> f64 {
        let al = l.unsigned_abs();
        assert!(
            al <= self.l_max && p1 <= self.p_max && p2 <= self.p_max,
            "coupling index ({l}, {p1}, {p2}) outside table"
        );
        let np = self.p_max as usize + 1;
        self.values[(al as usize * np + p1 as usize) * np + p2 as usize]
    }

    /// Entries that came out non-positive, for diagnostics. Expected empty on
    /// physically used windows; larger windows are flagged, never clamped.
    pub fn nonpositive_entries(&self) -> &[(u32, u32, u32)] {
        &self.nonpositive
    }
}

/// Normalized coincidence amplitudes over a detection window.
#[derive(Debug, Clone)]
pub struct AmplitudeTable {
    window: ModeWindow,
    amps: Vec<Complex64>,
}

impl AmplitudeTable {
    pub fn window(&self) -> &ModeWindow {
        &self.window
    }

    pub fn get(&self, l1: i32, p1: u32, l2: i32, p2: u32) -> Complex64 {
        self.amps[self.window.pair_index(l1, p1, l2, p2)]
    }

    /// Flat amplitude vector in window pair order.
    pub fn entries(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn iter_indexed(
        &self,
    ) -> impl Iterator<Item = ((i32, u32, i32, u32), Complex64)> + '_ {
        let w = self.window;
        w.arm_modes().flat_map(move |(l1, p1)| {
            w.arm_modes().map(move |(l2, p2)| {
                ((l1, p1, l2, p2), self.amps[w.pair_index(l1, p1, l2, p2)])
            })
        })
    }

    /// Build directly from amplitudes (normalizing); mainly for synthetic
    /// tables in tests and demos.
    pub fn from_amplitudes(window: ModeWindow, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != window.pair_count() {
            return Err(CsiError::Config(format!(
                "amplitude table needs {} entries, got {}",
                window.pair_count(),
                amps.len()
            )));
        }
        normalize(window, amps)
    }

    /// CSV export with columns `l1, p1, l2, p2, re, im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "l1,p1,l2,p2,re,im")?;
        for ((l1, p1, l2, p2), v) in self.iter_indexed() {
            writeln!(out, "{l1},{p1},{l2},{p2},{},{}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .iter_indexed()
            .map(|((l1, p1, l2, p2), v)| {
                serde_json::json!({
                    "l1": l1, "p1": p1, "l2": l2, "p2": p2, "re": v.re, "im": v.im,
                })
            })
            .collect();
        serde_json::json!({ "window": self.window, "entries": entries })
    }
}

fn normalize(window: ModeWindow, mut amps: Vec<Complex64>) -> Result<AmplitudeTable> {
    let total: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    if total <= 0.0 {
        return Err(CsiError::NoTransmission(
            "the object blocks every amplitude in the detection window".into(),
        ));
    }
    let scale = total.sqrt().recip();
    for a in &mut amps {
        *a *= scale;
    }
    Ok(AmplitudeTable { window, amps })
}

/// Assemble coincidence amplitudes from the coupling table and the object's
/// transfer table, truncating the internal radial sum at `p_prime_max`.
pub fn joint_amplitudes(
    couplings: &CouplingTable,
    overlaps: &OverlapTable,
    window: &ModeWindow,
    p_prime_max: u32,
) -> Result<AmplitudeTable> {
    let max_abs_l = window.l_min.unsigned_abs().max(window.l_max.unsigned_abs());
    if couplings.l_max() < max_abs_l
        || couplings.p_max() < p_prime_max.max(window.p_max)
    {
        return Err(CsiError::Config(format!(
            "coupling table (l_max = {}, p_max = {}) does not cover window |l| <= {max_abs_l}, \
             p' <= {p_prime_max}, p <= {}",
            couplings.l_max(),
            couplings.p_max(),
            window.p_max
        )));
    }
    let ow = overlaps.window();
    let covers = ow.l_min <= -window.l_max
        && ow.l_max >= -window.l_min
        && ow.l_min <= window.l_min
        && ow.l_max >= window.l_max
        && ow.p_in_max >= p_prime_max
        && ow.p_out_max >= window.p_max;
    if !covers {
        return Err(CsiError::Config(format!(
            "overlap table window {ow:?} does not cover detection window {window:?} \
             with p' <= {p_prime_max}"
        )));
    }

    let mut amps = vec![Complex64::new(0.0, 0.0); window.pair_count()];
    for (l1, p1) in window.arm_modes() {
        for (l2, p2) in window.arm_modes() {
            let mut acc = Complex64::new(0.0, 0.0);
            for p_prime in 0..=p_prime_max {
                let c = couplings.get(l2, p_prime, p2);
                acc += overlaps.get(-l2, p_prime, l1, p1) * c;
            }
            amps[window.pair_index(l1, p1, l2, p2)] = acc;
        }
    }
    normalize(*window, amps)
}

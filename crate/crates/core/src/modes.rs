//! Laguerre-Gauss mode functions in natural units.
//!
//! Lengths are measured in waist radii `w0` and propagation distances in
//! Rayleigh ranges `z_R`; with `k w0^2 = 2 z_R` the radial-curvature phase
//! `k r^2 z / (2 (z^2 + z_R^2))` reduces to `r^2 z / (1 + z^2)` and the
//! wavelength drops out entirely. The constant `1/w0` prefactor of the mode
//! function is omitted consistently; every downstream quantity is a
//! normalized probability, so it cancels.
//!
//! With these conventions the modes are orthonormal under
//! `int u_{lp} conj(u_{l'p'}) r dr dphi = delta_{ll'} delta_{pp'}`
//! at any fixed propagation distance.

use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CsiError, Result};

/// An `(l, p)` Laguerre-Gauss mode label: `l` is the orbital angular momentum
/// in units of hbar (any integer), `p` the radial node count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub l: i32,
    pub p: u32,
}

impl ModeIndex {
    pub fn new(l: i32, p: u32) -> Self {
        Self { l, p }
    }

    /// Mode order `2p + |l|`, which sets the Gouy-phase multiplier `2p + |l| + 1`.
    pub fn order(&self) -> u32 {
        2 * self.p + self.l.unsigned_abs()
    }
}

/// Beam geometry at a fixed propagation distance `z` (in Rayleigh ranges).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    z: f64,
}

impl BeamGeometry {
    pub fn new(z: f64) -> Self {
        Self { z }
    }

    /// The beam waist plane, `z = 0`.
    pub fn waist() -> Self {
        Self { z: 0.0 }
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    /// Beam-radius ratio `w(z)/w0 = sqrt(1 + z^2)`; equals 1 only at the waist.
    pub fn radius_ratio(&self) -> f64 {
        (1.0 + self.z * self.z).sqrt()
    }

    /// Gouy phase `psi(z) = arctan(z)`, zero at the waist, `pi/2` at infinity.
    pub fn gouy_phase(&self) -> f64 {
        self.z.atan()
    }

    /// Radial-curvature phase coefficient: the mode carries `exp(-i c r^2)`
    /// with `c = z / (1 + z^2)`.
    pub fn curvature_coefficient(&self) -> f64 {
        self.z / (1.0 + self.z * self.z)
    }
}

/// Associated Laguerre polynomial `L_p^alpha(x)` by the three-term recurrence
///
/// `(k+1) L_{k+1} = (2k + 1 + alpha - x) L_k - (k + alpha) L_{k-1}`,
///
/// which stays well-scaled where the factorial series overflows.
pub fn laguerre(p: i32, alpha: i32, x: f64) -> Result<f64> {
    if p < 0 || alpha < 0 {
        return Err(CsiError::Domain(format!(
            "laguerre requires p >= 0 and alpha >= 0, got p = {p}, alpha = {alpha}"
        )));
    }
    Ok(laguerre_unchecked(p as u32, alpha as u32, x))
}

pub(crate) fn laguerre_unchecked(p: u32, alpha: u32, x: f64) -> f64 {
    let a = alpha as f64;
    if p == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + a - x;
    for k in 1..p {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Natural logarithm of `n!`, from a shared cumulative table so that equal
/// factorial factors cancel bitwise in ratio computations.
pub(crate) fn ln_factorial(n: u32) -> f64 {
    const TABLE_LEN: usize = 512;
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(TABLE_LEN);
        t.push(0.0);
        for k in 1..TABLE_LEN {
            t.push(t[k - 1] + (k as f64).ln());
        }
        t
    });
    if (n as usize) < TABLE_LEN {
        table[n as usize]
    } else {
        let mut v = table[TABLE_LEN - 1];
        for k in TABLE_LEN..=n as usize {
            v += (k as f64).ln();
        }
        v
    }
}

/// Normalization constant `sqrt(2 p! / (pi (p + |l|)!))`.
pub fn norm_const(mode: ModeIndex) -> f64 {
    let p = mode.p;
    let al = mode.l.unsigned_abs();
    let ln = std::f64::consts::LN_2 + ln_factorial(p) - std::f64::consts::PI.ln()
        - ln_factorial(p + al);
    (0.5 * ln).exp()
}

/// Real radial amplitude of the mode: normalization, power-law, Gaussian and
/// Laguerre factors, without any of the propagation or azimuthal phases.
pub fn radial_amplitude(mode: ModeIndex, geometry: &BeamGeometry, r: f64) -> f64 {
    let w = geometry.radius_ratio();
    let al = mode.l.unsigned_abs();
    let arg = 2.0 * r * r / (w * w);
    let pow = (std::f64::consts::SQRT_2 * r / w).powi(al as i32);
    norm_const(mode) / w * pow * (-r * r / (w * w)).exp()
        * laguerre_unchecked(mode.p, al, arg)
}

/// Total propagation phase of the mode at `(r, z)`: radial curvature plus the
/// Gouy term `(2p + |l| + 1) arctan(z)`. The azimuthal factor `exp(-i l phi)`
/// is kept separate.
pub fn propagation_phase(mode: ModeIndex, geometry: &BeamGeometry, r: f64) -> f64 {
    -geometry.curvature_coefficient() * r * r
        + (mode.order() as f64 + 1.0) * geometry.gouy_phase()
}

/// Full complex Laguerre-Gauss mode value `u_{lp}(r, z, phi)`.
pub fn eval_mode(mode: ModeIndex, geometry: &BeamGeometry, r: f64, phi: f64) -> Complex64 {
    let amp = radial_amplitude(mode, geometry, r);
    let phase = propagation_phase(mode, geometry, r) - mode.l as f64 * phi;
    Complex64::from_polar(amp, phase)
}

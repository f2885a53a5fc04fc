//! Modal transfer coefficients of an object.
//!
//! The object imprints itself on the mode basis through the coefficients
//!
//! `a[l', l; p', p](z) = int u_{l'p'}(x, z) conj(u_{lp}(x, z)) T(x) d^2x`,
//!
//! computed here by polar quadrature: Gauss-Legendre radially, a uniform
//! azimuthal grid whose samples are reduced to all `(l' - l)` harmonics in a
//! single FFT pass. Two refinements keep discontinuous objects accurate:
//!
//! * the radial axis is split at the object's breakpoint radii, with a cubic
//!   endpoint-smoothing map per segment so that the square-root kinks the
//!   angular structure develops there are integrated spectrally;
//! * for analytic primitives each azimuthal sample is the exact mean of `T`
//!   over its grid cell (from the blocked-arc decomposition), and the
//!   resulting box filter is divided out of each harmonic, which removes
//!   point-sampling noise entirely.
//!
//! Entries of magnitude below `1e-10` are stored as exact zeros so that
//! symmetry selection rules test crisply.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{CsiError, Result};
use crate::modes::{radial_amplitude, BeamGeometry, ModeIndex};
use crate::objects::TransmissionMap;

const TAU: f64 = 2.0 * std::f64::consts::PI;
/// Entries smaller than this are snapped to exact zero.
pub const ZERO_SNAP: f64 = 1e-10;
/// Radial convergence contract: doubling `n_r` may move no entry further.
pub const CONVERGENCE_TOL: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Gauss-Legendre rule
// ---------------------------------------------------------------------------

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 1..n {
                let kf = k as f64;
                let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Integrate a complex-valued integrand over the disk of radius `r_max`:
/// Gauss-Legendre in `r` (Jacobian `r dr` included) tensored with the uniform
/// trapezoid rule in `phi`, which is exact for trigonometric polynomials up
/// to degree `n_phi - 1`.
pub fn integrate_polar<F>(f: F, r_max: f64, n_r: usize, n_phi: usize) -> Result<Complex64>
where
    F: Fn(f64, f64) -> Complex64,
{
    if n_r < 4 || n_phi < 4 {
        return Err(CsiError::Config(format!(
            "polar quadrature needs n_r, n_phi >= 4, got ({n_r}, {n_phi})"
        )));
    }
    if r_max <= 0.0 {
        return Err(CsiError::Config(format!("r_max must be positive, got {r_max}")));
    }
    let (nodes, weights) = gauss_legendre_rule(n_r);
    let dphi = TAU / n_phi as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for (x, w) in nodes.iter().zip(&weights) {
        let r = 0.5 * r_max * (x + 1.0);
        let wr = 0.5 * r_max * w * r;
        for j in 0..n_phi {
            let phi = j as f64 * dphi;
            let v = f(r, phi);
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(CsiError::Numeric(format!(
                    "non-finite integrand sample at (r = {r}, phi = {phi})"
                )));
            }
            sum += v * (wr * dphi);
        }
    }
    Ok(sum)
}

// ---------------------------------------------------------------------------
// Table window and storage
// ---------------------------------------------------------------------------

/// Index ranges of an overlap table: both the input (primed) and output
/// azimuthal indices run over `[l_min, l_max]`; radial indices run to
/// `p_in_max` on the input side and `p_out_max` on the output side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapWindow {
    pub l_min: i32,
    pub l_max: i32,
    pub p_in_max: u32,
    pub p_out_max: u32,
}

impl OverlapWindow {
    pub fn new(l_min: i32, l_max: i32, p_in_max: u32, p_out_max: u32) -> Result<Self> {
        if l_min > l_max {
            return Err(CsiError::Config(format!(
                "overlap window has l_min = {l_min} > l_max = {l_max}"
            )));
        }
        Ok(Self { l_min, l_max, p_in_max, p_out_max })
    }

    pub fn l_count(&self) -> usize {
        (self.l_max - self.l_min + 1) as usize
    }

    pub fn entry_count(&self) -> usize {
        self.l_count() * self.l_count() * (self.p_in_max as usize + 1) * (self.p_out_max as usize + 1)
    }

    pub fn contains(&self, l_in: i32, p_in: u32, l_out: i32, p_out: u32) -> bool {
        (self.l_min..=self.l_max).contains(&l_in)
            && (self.l_min..=self.l_max).contains(&l_out)
            && p_in <= self.p_in_max
            && p_out <= self.p_out_max
    }

    fn index(&self, l_in: i32, p_in: u32, l_out: i32, p_out: u32) -> usize {
        debug_assert!(self.contains(l_in, p_in, l_out, p_out));
        let nl = self.l_count();
        let npi = self.p_in_max as usize + 1;
        let npo = self.p_out_max as usize + 1;
        let il_in = (l_in - self.l_min) as usize;
        let il_out = (l_out - self.l_min) as usize;
        ((il_in * npi + p_in as usize) * nl + il_out) * npo + p_out as usize
    }

    fn unindex(&self, idx: usize) -> (i32, u32, i32, u32) {
        let nl = self.l_count();
        let npi = self.p_in_max as usize + 1;
        let npo = self.p_out_max as usize + 1;
        let p_out = idx % npo;
        let rest = idx / npo;
        let il_out = rest % nl;
        let rest = rest / nl;
        let p_in = rest % npi;
        let il_in = rest / npi;
        (
            self.l_min + il_in as i32,
            p_in as u32,
            self.l_min + il_out as i32,
            p_out as u32,
        )
    }
}

/// The object's modal transfer matrix over a window, complete by construction.
#[derive(Debug, Clone)]
pub struct OverlapTable {
    z: f64,
    window: OverlapWindow,
    entries: Vec<Complex64>,
}

impl OverlapTable {
    pub fn from_entries(z: f64, window: OverlapWindow, entries: Vec<Complex64>) -> Result<Self> {
        if entries.len() != window.entry_count() {
            return Err(CsiError::Config(format!(
                "overlap table needs {} entries, got {}",
                window.entry_count(),
                entries.len()
            )));
        }
        Ok(Self { z, window, entries })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn window(&self) -> &OverlapWindow {
        &self.window
    }

    /// Coefficient `a[l_in, l_out; p_in, p_out]`. Panics outside the window.
    pub fn get(&self, l_in: i32, p_in: u32, l_out: i32, p_out: u32) -> Complex64 {
        assert!(
            self.window.contains(l_in, p_in, l_out, p_out),
            "overlap index ({l_in}, {p_in}; {l_out}, {p_out}) outside window {:?}",
            self.window
        );
        self.entries[self.window.index(l_in, p_in, l_out, p_out)]
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    /// Iterate `((l_in, p_in, l_out, p_out), value)` in storage order.
    pub fn iter_indexed(&self) -> impl Iterator<Item = ((i32, u32, i32, u32), Complex64)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, v)| (self.window.unindex(i), *v))
    }

    pub fn max_abs_difference(&self, other: &OverlapTable) -> f64 {
        assert_eq!(self.window, other.window);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// CSV export with columns `l_prime, p_prime, l, p, re, im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "l_prime,p_prime,l,p,re,im")?;
        for ((li, pi, lo, po), v) in self.iter_indexed() {
            writeln!(out, "{li},{pi},{lo},{po},{},{}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .iter_indexed()
            .map(|((li, pi, lo, po), v)| {
                serde_json::json!({
                    "l_prime": li, "p_prime": pi, "l": lo, "p": po,
                    "re": v.re, "im": v.im,
                })
            })
            .collect();
        serde_json::json!({ "z": self.z, "window": self.window, "entries": entries })
    }
}

// ---------------------------------------------------------------------------
// Overlap computation
// ---------------------------------------------------------------------------

/// Resolution and policy knobs for the overlap quadrature.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Gauss-Legendre nodes per radial segment.
    pub n_r: usize,
    /// Azimuthal grid cells (FFT length).
    pub n_phi: usize,
    /// Radial cutoff in units of the local beam radius `w(z)/w0`; the
    /// integrand carries `exp(-2 r^2 / w^2)`, so 6 leaves a tail below 1e-15.
    pub r_max_factor: f64,
    /// Force pointwise azimuthal sampling even when exact arc averages are
    /// available (diagnostic; rasters always sample pointwise).
    pub point_sampling: bool,
    /// Recompute with doubled `n_r` and fail if any entry moves by more than
    /// [`CONVERGENCE_TOL`].
    pub verify_radial_convergence: bool,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            n_r: 96,
            n_phi: 8192,
            r_max_factor: 6.0,
            point_sampling: false,
            verify_radial_convergence: false,
        }
    }
}

/// Compute the object's full transfer table at propagation distance `z`
/// (object plane; both mode functions are evaluated there).
pub fn compute_overlaps(
    map: &TransmissionMap,
    z: f64,
    window: &OverlapWindow,
    quad: &QuadratureSpec,
) -> Result<OverlapTable> {
    let m_span = (window.l_max - window.l_min).unsigned_abs() as usize;
    if quad.n_r < 4 {
        return Err(CsiError::Config(format!("n_r must be at least 4, got {}", quad.n_r)));
    }
    if quad.n_phi < 4 * (m_span + 1) {
        return Err(CsiError::Config(format!(
            "n_phi = {} is too small to resolve azimuthal harmonics up to {m_span}",
            quad.n_phi
        )));
    }
    if quad.r_max_factor <= 0.0 {
        return Err(CsiError::Config("r_max_factor must be positive".into()));
    }

    let entries = table_entries(map, z, window, quad, quad.n_r)?;
    if quad.verify_radial_convergence {
        let refined = table_entries(map, z, window, quad, quad.n_r * 2)?;
        let mut worst = 0.0f64;
        let mut worst_idx = 0usize;
        for (i, (a, b)) in entries.iter().zip(&refined).enumerate() {
            let d = (a - b).norm();
            if d > worst {
                worst = d;
                worst_idx = i;
            }
        }
        if worst > CONVERGENCE_TOL {
            let (li, pi, lo, po) = window.unindex(worst_idx);
            return Err(CsiError::Resolution(format!(
                "doubling n_r moves entry ({li}, {pi}; {lo}, {po}) by {worst:.3e} \
                 (tolerance {CONVERGENCE_TOL:.0e}); increase n_r or n_phi"
            )));
        }
        return OverlapTable::from_entries(z, *window, refined);
    }
    OverlapTable::from_entries(z, *window, entries)
}

fn table_entries(
    map: &TransmissionMap,
    z: f64,
    window: &OverlapWindow,
    quad: &QuadratureSpec,
    n_r: usize,
) -> Result<Vec<Complex64>> {
    let geometry = BeamGeometry::new(z);
    let r_max = quad.r_max_factor * geometry.radius_ratio();
    let (radii, radial_weights) = segmented_radial_rule(map, r_max, n_r);

    let use_arcs = map.supports_arc_averaging() && !quad.point_sampling;
    let harmonics = azimuthal_harmonics(map, &radii, quad.n_phi, window, use_arcs)?;

    // Radial mode profiles, shared across entries: profile[|l|][p][radius].
    let max_abs_l = window.l_min.unsigned_abs().max(window.l_max.unsigned_abs());
    let max_p = window.p_in_max.max(window.p_out_max);
    let profiles: Vec<Vec<Vec<f64>>> = (0..=max_abs_l)
        .map(|al| {
            (0..=max_p)
                .map(|p| {
                    radii
                        .iter()
                        .map(|&r| radial_amplitude(ModeIndex::new(al as i32, p), &geometry, r))
                        .collect()
                })
                .collect()
        })
        .collect();

    let m_span = (window.l_max - window.l_min) as i64;
    let gouy = geometry.gouy_phase();
    let entries: Vec<Complex64> = (0..window.entry_count())
        .into_par_iter()
        .map(|idx| {
            let (l_in, p_in, l_out, p_out) = window.unindex(idx);
            let m = (l_in - l_out) as i64;
            let row = &harmonics[(m + m_span) as usize];
            let prof_in = &profiles[l_in.unsigned_abs() as usize][p_in as usize];
            let prof_out = &profiles[l_out.unsigned_abs() as usize][p_out as usize];
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..radii.len() {
                acc += row[i] * (radial_weights[i] * prof_in[i] * prof_out[i]);
            }
            let order_diff = 2.0 * (p_in as f64 - p_out as f64)
                + l_in.unsigned_abs() as f64
                - l_out.unsigned_abs() as f64;
            let value = acc * Complex64::from_polar(1.0, order_diff * gouy);
            if value.norm() < ZERO_SNAP {
                Complex64::new(0.0, 0.0)
            } else {
                value
            }
        })
        .collect();
    Ok(entries)
}

/// Composite Gauss-Legendre radial rule over `[0, r_max]`, split at the
/// object's breakpoint radii. Each segment is traversed through the cubic
/// map `s(u) = u^2 (3 - 2u)`, whose vanishing endpoint derivative turns
/// square-root kinks at segment boundaries into smooth integrands. Weights
/// include the polar Jacobian `r`.
fn segmented_radial_rule(map: &TransmissionMap, r_max: f64, n_r: usize) -> (Vec<f64>, Vec<f64>) {
    let mut cuts: Vec<f64> = map
        .radial_breakpoints()
        .into_iter()
        .filter(|&b| b > 0.0 && b < r_max)
        .collect();
    cuts.push(0.0);
    cuts.push(r_max);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let (nodes, weights) = gauss_legendre_rule(n_r);
    let mut radii = Vec::with_capacity(n_r * (cuts.len() - 1));
    let mut rw = Vec::with_capacity(radii.capacity());
    for seg in cuts.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        let len = hi - lo;
        for (x, w) in nodes.iter().zip(&weights) {
            let u = 0.5 * (x + 1.0);
            let s = u * u * (3.0 - 2.0 * u);
            let ds = 6.0 * u * (1.0 - u);
            let r = lo + len * s;
            radii.push(r);
            rw.push(0.5 * w * len * ds * r);
        }
    }
    (radii, rw)
}

/// Azimuthal harmonic transforms `Tt[m](r_i) = int T(r_i, phi) e^{-i m phi} dphi`
/// for all `m` in `[-m_span, m_span]`, indexed `[m + m_span][radius]`.
fn azimuthal_harmonics(
    map: &TransmissionMap,
    radii: &[f64],
    n_phi: usize,
    window: &OverlapWindow,
    use_arcs: bool,
) -> Result<Vec<Vec<Complex64>>> {
    let m_span = (window.l_max - window.l_min) as i64;
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(n_phi);
    let h = TAU / n_phi as f64;

    let per_radius: Vec<Vec<Complex64>> = radii
        .par_iter()
        .map_init(
            || (vec![Complex64::default(); n_phi], vec![Complex64::default(); fft.get_inplace_scratch_len()]),
            |(buf, scratch), &r| {
                if use_arcs {
                    let arcs = map
                        .blocked_arcs(r)
                        .expect("arc averaging requested for a map without arc structure");
                    cell_coverage(&arcs, n_phi, buf);
                } else {
                    for (j, slot) in buf.iter_mut().enumerate() {
                        let phi = j as f64 * h;
                        *slot = map.sample(r * phi.cos(), r * phi.sin());
                    }
                }
                fft.process_with_scratch(buf, scratch);
                let mut row = Vec::with_capacity((2 * m_span + 1) as usize);
                for m in -m_span..=m_span {
                    let bin = m.rem_euclid(n_phi as i64) as usize;
                    let mut v = buf[bin] * h;
                    if use_arcs && m != 0 {
                        // Cell averaging is a box filter; divide its transfer
                        // function out of each retained harmonic.
                        let half = m as f64 * h / 2.0;
                        v /= half.sin() / half;
                    }
                    row.push(v);
                }
                row
            },
        )
        .collect();

    // Transpose to [harmonic][radius] for the radial sums.
    let nm = (2 * m_span + 1) as usize;
    let mut out = vec![vec![Complex64::default(); radii.len()]; nm];
    for (i, row) in per_radius.iter().enumerate() {
        for (k, v) in row.iter().enumerate() {
            out[k][i] = *v;
        }
    }
    Ok(out)
}

/// Fill `buf[j]` with the mean transmittance over azimuthal cell `j`
/// (`[j h - h/2, j h + h/2)`), given the blocked arcs at this radius.
fn cell_coverage(blocked: &[(f64, f64)], n_phi: usize, buf: &mut [Complex64]) {
    let h = TAU / n_phi as f64;
    for v in buf.iter_mut() {
        *v = Complex64::new(1.0, 0.0);
    }
    for &(lo, hi) in blocked {
        for base in [0.0, -TAU] {
            let a = lo + base;
            let b = hi + base;
            let j_min = ((a - h / 2.0) / h).ceil().max(0.0) as usize;
            let j_max = (((b + h / 2.0) / h).floor() as isize).min(n_phi as isize - 1);
            if j_max < 0 {
                continue;
            }
            for j in j_min..=(j_max as usize) {
                let cell_lo = j as f64 * h - h / 2.0;
                let cell_hi = cell_lo + h;
                let ov = (b.min(cell_hi) - a.max(cell_lo)).max(0.0);
                if ov > 0.0 {
                    buf[j].re -= ov / h;
                }
            }
        }
    }
    // Guard tiny negative residue from float accumulation.
    for v in buf.iter_mut() {
        if v.re < 0.0 {
            v.re = 0.0;
        }
    }
}

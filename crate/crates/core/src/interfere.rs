//! Beam-splitter mixing of signal and idler, and coefficient retrieval.
//!
//! Mixing the two arms on a 50-50 splitter before detection erases which-path
//! information, so singles rates at the two output ports interfere with the
//! object's `p' = p = 0` transfer coefficient `a`:
//!
//! `R+ = |1 + i a~|^2 = 1 + |a|^2 - 2 Im(a~)`,
//! `R- = |i + a~|^2 = 1 + |a|^2 + 2 Im(a~)`,  with  `a~ = e^{i theta} a`,
//!
//! normalized so an empty object arm gives unit rate. A single reference
//! phase `theta` determines only `Im(a)` and `|a|`, leaving the sign of
//! `Re(a)` open; measuring at both `theta = 0` and `theta = pi/2` (a wave
//! plate in the reference arm) supplies both quadratures, which is the
//! minimal completion that makes retrieval unambiguous. Retrieval
//! consistency-checks `|a|^2` from the rate sums against `Re^2 + Im^2`.
//!
//! Far from the waist the Gouy factor `e^{-2 i p' psi(z)}` is close to
//! `(-1)^{p'}`, so the phase of the `p' = 0` coefficient extends to all `p'`:
//! equal for even `p'`, offset by `pi` for odd `p'`.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{CsiError, Result};
use crate::overlap::{OverlapTable, OverlapWindow};
use crate::spdc::AmplitudeTable;
use crate::window::ModeWindow;

/// Singles rates for one `(l1, l2)` pair at one reference-phase setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub l1: i32,
    pub l2: i32,
    pub theta: f64,
    pub r_plus: f64,
    pub r_minus: f64,
}

/// A set of measured (or simulated) rate rows at a common object distance.
#[derive(Debug, Clone)]
pub struct InterferenceRecord {
    z: f64,
    rows: Vec<RateRow>,
}

impl InterferenceRecord {
    pub fn new(z: f64, rows: Vec<RateRow>) -> Self {
        Self { z, rows }
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn rows(&self) -> &[RateRow] {
        &self.rows
    }

    /// Concatenate rows measured at another setting.
    pub fn merged_with(mut self, other: InterferenceRecord) -> Self {
        self.rows.extend(other.rows);
        self
    }

    /// CSV export: `l1, l2, theta, r_plus, r_minus` with the object distance
    /// in a leading comment.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# z = {}", self.z)?;
        writeln!(out, "l1,l2,theta,r_plus,r_minus")?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{},{}", r.l1, r.l2, r.theta, r.r_plus, r.r_minus)?;
        }
        Ok(())
    }

    /// Parse the CSV form, so retrieval can run on externally produced data.
    /// A missing `# z` comment defaults to the waist (`z = 0`); the retrieved
    /// slice itself does not depend on it.
    pub fn read_csv(text: &str) -> Result<InterferenceRecord> {
        let mut z = 0.0;
        let mut rows = Vec::new();
        let mut offset = 0usize;
        for line in text.lines() {
            let line_offset = offset;
            offset += line.len() + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                if let Some(eq) = rest.find('=') {
                    if rest[..eq].trim() == "z" {
                        z = rest[eq + 1..].trim().parse().map_err(|_| CsiError::Parse {
                            offset: line_offset,
                            message: "invalid z value".into(),
                        })?;
                    }
                }
                continue;
            }
            if trimmed.starts_with("l1") {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').collect();
            if fields.len() != 5 {
                return Err(CsiError::Parse {
                    offset: line_offset,
                    message: format!("expected 5 fields, found {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse().map_err(|_| CsiError::Parse {
                    offset: line_offset,
                    message: format!("invalid number {s:?}"),
                })
            };
            rows.push(RateRow {
                l1: parse(fields[0])? as i32,
                l2: parse(fields[1])? as i32,
                theta: parse(fields[2])?,
                r_plus: parse(fields[3])?,
                r_minus: parse(fields[4])?,
            });
        }
        Ok(InterferenceRecord { z, rows })
    }
}

/// Simulate singles rates for every `(l1, l2)` pair in the window at one
/// reference-phase setting.
pub fn simulate_rates(
    overlaps: &OverlapTable,
    window: &ModeWindow,
    theta: f64,
) -> Result<InterferenceRecord> {
    let ow = overlaps.window();
    if ow.l_min > -window.l_max || ow.l_max < -window.l_min || ow.l_min > window.l_min
        || ow.l_max < window.l_max
    {
        return Err(CsiError::Config(format!(
            "overlap table window {ow:?} does not cover rate window {window:?}"
        )));
    }
    let phase = Complex64::from_polar(1.0, theta);
    let mut rows = Vec::with_capacity(window.l_count() * window.l_count());
    for l1 in window.l_values() {
        for l2 in window.l_values() {
            let a = overlaps.get(-l2, 0, l1, 0);
            let tilted = phase * a;
            let m = a.norm_sqr();
            rows.push(RateRow {
                l1,
                l2,
                theta,
                r_plus: 1.0 + m - 2.0 * tilted.im,
                r_minus: 1.0 + m + 2.0 * tilted.im,
            });
        }
    }
    Ok(InterferenceRecord { z: overlaps.z(), rows })
}

/// Replace every rate with a Poisson draw at the given expected total counts
/// per `(l1, l2, theta)` row, rescaled back to rate units. Deterministic for
/// a fixed seed.
pub fn with_poisson_noise(
    record: &InterferenceRecord,
    counts_per_entry: f64,
    seed: u64,
) -> Result<InterferenceRecord> {
    if !(counts_per_entry > 0.0) {
        return Err(CsiError::Config("counts_per_entry must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(record.rows.len());
    for row in &record.rows {
        let total = row.r_plus + row.r_minus;
        if total <= 0.0 {
            rows.push(*row);
            continue;
        }
        let scale = counts_per_entry / total;
        let mut draw = |rate: f64| -> Result<f64> {
            if rate <= 0.0 {
                return Ok(0.0);
            }
            let poisson = Poisson::new(rate * scale).map_err(|e| {
                CsiError::Numeric(format!("invalid Poisson intensity {}: {e}", rate * scale))
            })?;
            Ok(poisson.sample(&mut rng) / scale)
        };
        rows.push(RateRow {
            r_plus: draw(row.r_plus)?,
            r_minus: draw(row.r_minus)?,
            ..*row
        });
    }
    Ok(InterferenceRecord { z: record.z, rows })
}

/// Strict-tolerance retrieval; see [`retrieve_coefficients_with_tolerance`].
pub fn retrieve_coefficients(record: &InterferenceRecord) -> Result<OverlapTable> {
    retrieve_coefficients_with_tolerance(record, 1e-6)
}

/// Recover the complex `p' = p = 0` coefficient slice from rate rows measured
/// at both reference phases. `Im(a)` comes from the `theta = 0` pair,
/// `Re(a)` from `theta = pi/2`; `|a|^2` inferred from the rate sums must
/// agree with `Re^2 + Im^2` within `consistency_tol`. Statistically noisy
/// records need a correspondingly looser tolerance.
pub fn retrieve_coefficients_with_tolerance(
    record: &InterferenceRecord,
    consistency_tol: f64,
) -> Result<OverlapTable> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(i32, i32), (Option<RateRow>, Option<RateRow>)> = BTreeMap::new();
    for row in &record.rows {
        let slot = groups.entry((row.l1, row.l2)).or_default();
        let which = if row.theta.abs() < 1e-9 {
            &mut slot.0
        } else if (row.theta - FRAC_PI_2).abs() < 1e-9 {
            &mut slot.1
        } else {
            return Err(CsiError::Config(format!(
                "unsupported reference phase {}; retrieval uses 0 and pi/2",
                row.theta
            )));
        };
        if which.is_some() {
            return Err(CsiError::Config(format!(
                "duplicate rate row for (l1, l2, theta) = ({}, {}, {})",
                row.l1, row.l2, row.theta
            )));
        }
        *which = Some(*row);
    }

    let (mut l1_min, mut l1_max) = (i32::MAX, i32::MIN);
    let (mut l2_min, mut l2_max) = (i32::MAX, i32::MIN);
    for &(l1, l2) in groups.keys() {
        l1_min = l1_min.min(l1);
        l1_max = l1_max.max(l1);
        l2_min = l2_min.min(l2);
        l2_max = l2_max.max(l2);
    }
    if groups.is_empty() {
        return Err(CsiError::Config("record contains no rate rows".into()));
    }
    if (l1_min, l1_max) != (-l2_max, -l2_min) {
        return Err(CsiError::Config(format!(
            "retrieval needs matching ranges: l1 in [{l1_min}, {l1_max}] vs \
             l2 in [{l2_min}, {l2_max}]"
        )));
    }
    let window = OverlapWindow::new(l1_min, l1_max, 0, 0)?;
    let nl = window.l_count();
    if groups.len() != nl * nl {
        return Err(CsiError::Config(format!(
            "record covers {} of {} (l1, l2) pairs",
            groups.len(),
            nl * nl
        )));
    }

    let mut entries = vec![Complex64::new(0.0, 0.0); window.entry_count()];
    for ((l1, l2), (zero, quarter)) in groups {
        let zero = zero.ok_or_else(|| {
            CsiError::Config(format!("missing theta = 0 row for ({l1}, {l2})"))
        })?;
        let quarter = quarter.ok_or_else(|| {
            CsiError::Config(format!("missing theta = pi/2 row for ({l1}, {l2})"))
        })?;
        let im = (zero.r_minus - zero.r_plus) / 4.0;
        let re = (quarter.r_minus - quarter.r_plus) / 4.0;
        let mag2_rates = 0.5
            * ((zero.r_plus + zero.r_minus) / 2.0 - 1.0
                + (quarter.r_plus + quarter.r_minus) / 2.0
                - 1.0);
        let value = Complex64::new(re, im);
        if (value.norm_sqr() - mag2_rates).abs() > consistency_tol {
            return Err(CsiError::DataIntegrity(format!(
                "rates for ({l1}, {l2}) are inconsistent: |a|^2 from sums is {mag2_rates:.6e}, \
                 from quadratures {:.6e}",
                value.norm_sqr()
            )));
        }
        // Table slot: input charge -l2, output charge l1.
        let idx_l_in = -l2;
        entries[index_of(&window, idx_l_in, l1)] = value;
    }
    OverlapTable::from_entries(record.z, window, entries)
}

fn index_of(window: &OverlapWindow, l_in: i32, l_out: i32) -> usize {
    let nl = window.l_count();
    let i = (l_in - window.l_min) as usize;
    let o = (l_out - window.l_min) as usize;
    i * nl + o
}

/// One phase-assigned transfer coefficient `a[l_in, l_out; p_in, 0]`.
#[derive(Debug, Clone, Copy)]
pub struct PhasedCoefficient {
    pub l_in: i32,
    pub p_in: u32,
    pub l_out: i32,
    pub value: Complex64,
}

/// Result of Gouy-parity phase bookkeeping.
#[derive(Debug, Clone)]
pub struct GouyPhased {
    /// True when `z` is too close to the waist for `e^{-2 i psi}` to sit near
    /// `-1`; the parity assignment degrades there.
    pub regime_warning: bool,
    pub coefficients: Vec<PhasedCoefficient>,
}

/// Distance of the per-`p'` Gouy factor from the parity limit:
/// `|e^{-2 i arctan z} - (-1)|`.
pub fn gouy_regime_deviation(z: f64) -> f64 {
    (Complex64::from_polar(1.0, -2.0 * z.atan()) + Complex64::new(1.0, 0.0)).norm()
}

/// Assign phases to the `a[.; p', 0]` coefficients from the phases of the
/// detected amplitudes: equal to `arg A` for even `p'`, offset by `pi` for
/// odd `p'`. Moduli are taken from the supplied table (e.g. retrieval plus
/// prior knowledge of the radial profile).
pub fn gouy_parity_phase(
    amps: &AmplitudeTable,
    moduli: &OverlapTable,
    p_prime_max: u32,
    z: f64,
) -> Result<GouyPhased> {
    let window = amps.window();
    let mw = moduli.window();
    if mw.l_min > -window.l_max
        || mw.l_max < -window.l_min
        || mw.l_min > window.l_min
        || mw.l_max < window.l_max
        || mw.p_in_max < p_prime_max
    {
        return Err(CsiError::Config(format!(
            "modulus table window {mw:?} does not cover amplitudes {window:?} with p' <= {p_prime_max}"
        )));
    }
    let mut coefficients = Vec::new();
    for l1 in window.l_values() {
        for l2 in window.l_values() {
            let amp = amps.get(l1, 0, l2, 0);
            if amp.norm() == 0.0 {
                continue;
            }
            let base_phase = amp.arg();
            for p_prime in 0..=p_prime_max {
                let modulus = moduli.get(-l2, p_prime, l1, 0).norm();
                let phase = if p_prime % 2 == 0 {
                    base_phase
                } else {
                    base_phase + std::f64::consts::PI
                };
                coefficients.push(PhasedCoefficient {
                    l_in: -l2,
                    p_in: p_prime,
                    l_out: l1,
                    value: Complex64::from_polar(modulus, phase),
                });
            }
        }
    }
    Ok(GouyPhased { regime_warning: z < 5.0, coefficients })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use crate::objects::TransmissionMap;
    use crate::overlap::{compute_overlaps, QuadratureSpec};
    use crate::spdc::{joint_amplitudes, CouplingTable};

    fn table_from_values(values: &[((i32, i32), Complex64)], l_max: i32, z: f64) -> OverlapTable {
        let window = OverlapWindow::new(-l_max, l_max, 0, 0).unwrap();
        let mut entries = vec![Complex64::new(0.0, 0.0); window.entry_count()];
        for &((l_in, l_out), v) in values {
            entries[index_of(&window, l_in, l_out)] = v;
        }
        OverlapTable::from_entries(z, window, entries).unwrap()
    }

    fn random_table(l_max: i32, seed: u64) -> OverlapTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = OverlapWindow::new(-l_max, l_max, 0, 0).unwrap();
        let entries: Vec<Complex64> = (0..window.entry_count())
            .map(|_| {
                let r: f64 = rng.random_range(0.0..1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                Complex64::from_polar(r, phi)
            })
            .collect();
        OverlapTable::from_entries(0.0, window, entries).unwrap()
    }

    #[test]
    fn empty_arm_gives_unit_rates() {
        let table = table_from_values(&[], 1, 0.0);
        let rec = simulate_rates(&table, &ModeWindow::symmetric(1, 0), 0.0).unwrap();
        for row in rec.rows() {
            assert_eq!(row.r_plus, 1.0);
            assert_eq!(row.r_minus, 1.0);
        }
    }

    #[test]
    fn unit_imaginary_coefficient_darkens_plus_port() {
        // a = i at theta = 0: R+ = |1 + i*i|^2 = 0, R- = |i + i|^2 = 4.
        let table = table_from_values(&[((0, 0), Complex64::new(0.0, 1.0))], 0, 0.0);
        let rec = simulate_rates(&table, &ModeWindow::new(0, 0, 0).unwrap(), 0.0).unwrap();
        assert!((rec.rows()[0].r_plus - 0.0).abs() < 1e-14);
        assert!((rec.rows()[0].r_minus - 4.0).abs() < 1e-14);
        // a = 1 at theta = pi/2 reduces to the same case.
        let table = table_from_values(&[((0, 0), Complex64::new(1.0, 0.0))], 0, 0.0);
        let rec = simulate_rates(&table, &ModeWindow::new(0, 0, 0).unwrap(), FRAC_PI_2).unwrap();
        assert!((rec.rows()[0].r_plus - 0.0).abs() < 1e-14);
        assert!((rec.rows()[0].r_minus - 4.0).abs() < 1e-14);
    }

    #[test]
    fn rate_sum_is_phase_setting_independent() {
        let table = random_table(3, 7);
        let w = ModeWindow::symmetric(3, 0);
        let base = simulate_rates(&table, &w, 0.0).unwrap();
        for theta in [FRAC_PI_2, 0.7, 2.9] {
            let other = simulate_rates(&table, &w, theta).unwrap();
            for (a, b) in base.rows().iter().zip(other.rows()) {
                assert!((a.r_plus + a.r_minus - (b.r_plus + b.r_minus)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn retrieval_round_trips_single_value() {
        let a = Complex64::new(0.3, -0.4);
        let table = table_from_values(&[((0, 0), a)], 0, 0.0);
        let w = ModeWindow::new(0, 0, 0).unwrap();
        let rec = simulate_rates(&table, &w, 0.0)
            .unwrap()
            .merged_with(simulate_rates(&table, &w, FRAC_PI_2).unwrap());
        let recovered = retrieve_coefficients(&rec).unwrap();
        assert!((recovered.get(0, 0, 0, 0) - a).norm() < 1e-12);
    }

    #[test]
    fn retrieval_round_trips_zero_and_full_tables() {
        let zero = table_from_values(&[], 2, 0.0);
        let w = ModeWindow::symmetric(2, 0);
        let rec = simulate_rates(&zero, &w, 0.0)
            .unwrap()
            .merged_with(simulate_rates(&zero, &w, FRAC_PI_2).unwrap());
        let recovered = retrieve_coefficients(&rec).unwrap();
        assert!(recovered.entries().iter().all(|v| v.norm() == 0.0));

        for seed in 0..5u64 {
            let table = random_table(4, seed);
            let w = ModeWindow::symmetric(4, 0);
            let rec = simulate_rates(&table, &w, 0.0)
                .unwrap()
                .merged_with(simulate_rates(&table, &w, FRAC_PI_2).unwrap());
            let recovered = retrieve_coefficients(&rec).unwrap();
            assert!(recovered.max_abs_difference(&table) < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn corrupted_rates_fail_the_consistency_check() {
        let table = table_from_values(&[((0, 0), Complex64::new(0.5, 0.2))], 0, 0.0);
        let w = ModeWindow::new(0, 0, 0).unwrap();
        let mut rec = simulate_rates(&table, &w, 0.0)
            .unwrap()
            .merged_with(simulate_rates(&table, &w, FRAC_PI_2).unwrap());
        rec.rows[0].r_plus += 1e-3;
        match retrieve_coefficients(&rec) {
            Err(CsiError::DataIntegrity(_)) => {}
            other => panic!("expected data-integrity error, got {other:?}"),
        }
    }

    #[test]
    fn retrieval_requires_both_settings() {
        let table = random_table(1, 3);
        let w = ModeWindow::symmetric(1, 0);
        let rec = simulate_rates(&table, &w, 0.0).unwrap();
        assert!(matches!(retrieve_coefficients(&rec), Err(CsiError::Config(_))));
    }

    #[test]
    fn poisson_noise_preserves_values_statistically() {
        let table = random_table(2, 11);
        let w = ModeWindow::symmetric(2, 0);
        let rec = simulate_rates(&table, &w, 0.0)
            .unwrap()
            .merged_with(simulate_rates(&table, &w, FRAC_PI_2).unwrap());
        let noisy = with_poisson_noise(&rec, 1e8, 42).unwrap();
        let recovered = retrieve_coefficients_with_tolerance(&noisy, 1e-2).unwrap();
        assert!(recovered.max_abs_difference(&table) < 1e-3);
        // Determinism: same seed, same record.
        let again = with_poisson_noise(&rec, 1e8, 42).unwrap();
        assert_eq!(noisy.rows(), again.rows());
    }

    #[test]
    fn csv_round_trip() {
        let table = random_table(1, 9);
        let w = ModeWindow::symmetric(1, 0);
        let rec = simulate_rates(&table, &w, 0.0)
            .unwrap()
            .merged_with(simulate_rates(&table, &w, FRAC_PI_2).unwrap());
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let parsed = InterferenceRecord::read_csv(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(parsed.z(), rec.z());
        assert_eq!(parsed.rows(), rec.rows());
        let recovered = retrieve_coefficients(&parsed).unwrap();
        assert!(recovered.max_abs_difference(&table) < 1e-9);
    }

    #[test]
    fn csv_parse_error_offsets() {
        match InterferenceRecord::read_csv("l1,l2,theta,r_plus,r_minus\n1,2,0\n") {
            Err(CsiError::Parse { offset, .. }) => assert_eq!(offset, 27),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn gouy_parity_assigns_even_odd_phases() {
        // Build a real pipeline at z = 10 and check the parity bookkeeping.
        let z = 10.0;
        let strip = TransmissionMap::strip(0.9).unwrap();
        let ow = OverlapWindow::new(-3, 3, 3, 0).unwrap();
        let overlaps = compute_overlaps(&strip, z, &ow, &QuadratureSpec::default()).unwrap();
        let w = ModeWindow::symmetric(3, 0);
        let amps = joint_amplitudes(&CouplingTable::build(3, 3), &overlaps, &w, 3).unwrap();
        let phased = gouy_parity_phase(&amps, &overlaps, 3, z).unwrap();
        assert!(!phased.regime_warning);
        for c in &phased.coefficients {
            let amp = amps.get(c.l_out, 0, -c.l_in, 0);
            let expected = if c.p_in % 2 == 0 {
                amp.arg()
            } else {
                amp.arg() + std::f64::consts::PI
            };
            let diff = (c.value.arg() - expected).rem_euclid(std::f64::consts::TAU);
            let diff = diff.min(std::f64::consts::TAU - diff);
            assert!(diff < 1e-12);
            assert!((c.value.norm() - overlaps.get(c.l_in, c.p_in, c.l_out, 0).norm()).abs() < 1e-12);
        }
        let warned = gouy_parity_phase(&amps, &overlaps, 3, 2.0).unwrap();
        assert!(warned.regime_warning);
    }

    #[test]
    fn gouy_regime_deviation_at_working_distance() {
        // 2 arctan(10) sits 0.1993 rad short of pi, so the parity factor is
        // within 0.2 of -1 (frozen: |e^{-2 i psi(10)} + 1| = 0.1990074).
        let dev = gouy_regime_deviation(10.0);
        assert!((dev - 0.199_007_4).abs() < 1e-6);
        assert!(dev < 0.2);
        assert!(gouy_regime_deviation(100.0) < 0.02);
    }
}

//! Image rendering from modal coefficient sets.
//!
//! A coherent rendering `|sum c_{lp} u_{lp}|^2` keeps the interference terms
//! that carry azimuthal structure; an incoherent rendering
//! `sum |c_{lp}|^2 |u_{lp}|^2` is rotationally symmetric no matter what the
//! coefficients are, because every `|u_{lp}|` is. The azimuthal-variance and
//! rotational self-correlation metrics quantify that contrast without any
//! pixel-exact comparisons.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{CsiError, Result};
use crate::modes::{eval_mode, BeamGeometry, ModeIndex};

/// Pixel grid specification: `width x height` pixels of the given pitch
/// (w0 per pixel), centered on the beam axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub pitch: f64,
}

impl GridSpec {
    /// Square grid of `n x n` pixels spanning `[-extent, extent]`.
    pub fn square(n: usize, extent: f64) -> Self {
        Self { width: n, height: n, pitch: 2.0 * extent / n as f64 }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Beam-frame coordinates of a pixel center (row `j` from the top).
    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        let x = (i as f64 + 0.5 - self.width as f64 / 2.0) * self.pitch;
        let y = (self.height as f64 / 2.0 - j as f64 - 0.5) * self.pitch;
        (x, y)
    }
}

impl Default for GridSpec {
    /// 256 x 256 pixels covering roughly two waist radii each way.
    fn default() -> Self {
        Self::square(256, 2.0)
    }
}

/// Non-negative intensity raster.
#[derive(Debug, Clone)]
pub struct RasterImage {
    width: usize,
    height: usize,
    pitch: f64,
    values: Vec<f64>,
}

impl RasterImage {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.width + i]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Integrated intensity `sum(values) * pitch^2`.
    pub fn integrated_intensity(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.pitch * self.pitch
    }

    pub fn max_abs_difference(&self, other: &RasterImage) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Bilinear sample at beam-frame coordinates; clamped on the boundary.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let fx = x / self.pitch + self.width as f64 / 2.0 - 0.5;
        let fy = self.height as f64 / 2.0 - 0.5 - y / self.pitch;
        let i0 = (fx.floor() as isize).clamp(0, self.width as isize - 2).max(0) as usize;
        let j0 = (fy.floor() as isize).clamp(0, self.height as isize - 2).max(0) as usize;
        let tx = (fx - i0 as f64).clamp(0.0, 1.0);
        let ty = (fy - j0 as f64).clamp(0.0, 1.0);
        let at = |i: usize, j: usize| self.values[j * self.width + i];
        at(i0, j0) * (1.0 - tx) * (1.0 - ty)
            + at(i0 + 1, j0) * tx * (1.0 - ty)
            + at(i0, j0 + 1) * (1.0 - tx) * ty
            + at(i0 + 1, j0 + 1) * tx * ty
    }

    /// 8-bit binary PGM, intensity normalized so the peak maps to 255.
    pub fn write_pgm<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let peak = self.max_value();
        let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .values
            .iter()
            .map(|&v| (v * scale).round().clamp(0.0, 255.0) as u8)
            .collect();
        out.write_all(&bytes)?;
        Ok(())
    }

    /// Plain CSV matrix, one row per raster row.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for j in 0..self.height {
            for i in 0..self.width {
                if i > 0 {
                    write!(out, ",")?;
                }
                write!(out, "{}", self.get(i, j))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Render `|sum c u|^2` on the grid.
pub fn render_coherent(
    coefficients: &[(ModeIndex, Complex64)],
    geometry: &BeamGeometry,
    grid: &GridSpec,
) -> Result<RasterImage> {
    if coefficients.is_empty() {
        return Err(CsiError::Config("coherent rendering needs at least one coefficient".into()));
    }
    render_with(grid, |r, phi| {
        let field: Complex64 = coefficients
            .iter()
            .map(|&(m, c)| c * eval_mode(m, geometry, r, phi))
            .sum();
        field.norm_sqr()
    })
}

/// Render `sum w |u|^2` on the grid, `w` being squared coefficient moduli.
pub fn render_incoherent(
    weights: &[(ModeIndex, f64)],
    geometry: &BeamGeometry,
    grid: &GridSpec,
) -> Result<RasterImage> {
    if weights.is_empty() {
        return Err(CsiError::Config("incoherent rendering needs at least one weight".into()));
    }
    if let Some((m, w)) = weights.iter().find(|(_, w)| *w < 0.0 || !w.is_finite()) {
        return Err(CsiError::Config(format!(
            "incoherent weight for ({}, {}) must be a finite non-negative number, got {w}",
            m.l, m.p
        )));
    }
    render_with(grid, |r, phi| {
        weights
            .iter()
            .map(|&(m, w)| w * eval_mode(m, geometry, r, phi).norm_sqr())
            .sum()
    })
}

fn render_with<F>(grid: &GridSpec, f: F) -> Result<RasterImage>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let values: Vec<f64> = (0..grid.pixel_count())
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % grid.width, idx / grid.width);
            let (x, y) = grid.pixel_center(i, j);
            f(x.hypot(y), y.atan2(x))
        })
        .collect();
    Ok(RasterImage {
        width: grid.width,
        height: grid.height,
        pitch: grid.pitch,
        values,
    })
}

const RING_COUNT: usize = 64;
const ANGLE_COUNT: usize = 256;

fn ring_radii(img: &RasterImage) -> Vec<f64> {
    let extent = 0.5 * img.pitch * img.width.min(img.height) as f64;
    (1..=RING_COUNT)
        .map(|k| 0.9 * extent * k as f64 / RING_COUNT as f64)
        .collect()
}

/// Mean over radii of the variance of intensity over angle, normalized by the
/// squared mean intensity. Zero for rotationally symmetric images up to
/// interpolation error.
pub fn azimuthal_variance(img: &RasterImage) -> Result<f64> {
    let mean = img.values.iter().sum::<f64>() / img.values.len() as f64;
    if mean <= 0.0 {
        return Err(CsiError::Numeric(
            "azimuthal variance is undefined for an all-zero image".into(),
        ));
    }
    let mut total = 0.0;
    for r in ring_radii(img) {
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for k in 0..ANGLE_COUNT {
            let phi = k as f64 * std::f64::consts::TAU / ANGLE_COUNT as f64;
            let v = img.sample_bilinear(r * phi.cos(), r * phi.sin());
            sum += v;
            sum2 += v * v;
        }
        let n = ANGLE_COUNT as f64;
        total += (sum2 / n - (sum / n) * (sum / n)).max(0.0);
    }
    Ok(total / RING_COUNT as f64 / (mean * mean))
}

/// Normalized correlation of the image with itself rotated by `2 pi / fold`:
/// 1 exactly when the image has that rotational symmetry.
pub fn rotational_self_correlation(img: &RasterImage, fold: u32) -> Result<f64> {
    if fold == 0 {
        return Err(CsiError::Config("fold order must be at least 1".into()));
    }
    let angle = std::f64::consts::TAU / fold as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for r in ring_radii(img) {
        for k in 0..ANGLE_COUNT {
            let phi = k as f64 * std::f64::consts::TAU / ANGLE_COUNT as f64;
            let a = img.sample_bilinear(r * phi.cos(), r * phi.sin());
            let b = img.sample_bilinear(r * (phi + angle).cos(), r * (phi + angle).sin());
            num += a * b;
            den += a * a;
        }
    }
    if den <= 0.0 {
        return Err(CsiError::Numeric(
            "rotational correlation is undefined for an all-zero image".into(),
        ));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn fundamental_mode_renders_flat_gaussian_spot() {
        let img = render_coherent(
            &[(ModeIndex::new(0, 0), c(1.0, 0.0))],
            &BeamGeometry::waist(),
            &GridSpec::default(),
        )
        .unwrap();
        assert!(azimuthal_variance(&img).unwrap() < 1e-9);
        // Peak at the center, Gaussian falloff.
        let center = img.sample_bilinear(0.0, 0.0);
        assert!(center > img.sample_bilinear(1.0, 0.0));
    }

    #[test]
    fn opposite_charge_pair_renders_two_lobes() {
        // c_{+1} = c_{-1} = 1 gives a cos^2(phi) modulation.
        let img = render_coherent(
            &[
                (ModeIndex::new(1, 0), c(1.0, 0.0)),
                (ModeIndex::new(-1, 0), c(1.0, 0.0)),
            ],
            &BeamGeometry::waist(),
            &GridSpec::default(),
        )
        .unwrap();
        let var = azimuthal_variance(&img).unwrap();
        assert!(var > 0.1, "variance {var}");
        let r = 0.7;
        let along = img.sample_bilinear(r, 0.0);
        let across = img.sample_bilinear(0.0, r);
        assert!(along > 100.0 * across.max(1e-12));
    }

    #[test]
    fn incoherent_rendering_is_rotationally_flat_for_any_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let weights: Vec<(ModeIndex, f64)> = (-6..=6)
            .map(|l| (ModeIndex::new(l, 0), rng.random_range(0.0..1.0)))
            .collect();
        let img =
            render_incoherent(&weights, &BeamGeometry::waist(), &GridSpec::default()).unwrap();
        assert!(azimuthal_variance(&img).unwrap() < 1e-9);
    }

    #[test]
    fn single_mode_coherent_equals_incoherent() {
        let mode = ModeIndex::new(3, 1);
        let coeff = c(0.6, -0.8);
        let grid = GridSpec::square(128, 2.0);
        let coh =
            render_coherent(&[(mode, coeff)], &BeamGeometry::waist(), &grid).unwrap();
        let inc = render_incoherent(&[(mode, coeff.norm_sqr())], &BeamGeometry::waist(), &grid)
            .unwrap();
        assert!(coh.max_abs_difference(&inc) < 1e-12);
        // A ring pattern: dark on axis, bright at finite radius.
        assert!(coh.sample_bilinear(0.0, 0.0) < 1e-12);
        assert!(coh.max_value() > 0.0);
    }

    #[test]
    fn incoherent_ignores_phases_coherent_does_not() {
        let grid = GridSpec::square(96, 2.0);
        let base: Vec<(ModeIndex, Complex64)> = vec![
            (ModeIndex::new(0, 0), c(0.8, 0.0)),
            (ModeIndex::new(2, 0), c(0.5, 0.0)),
            (ModeIndex::new(-2, 0), c(0.3, 0.0)),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rotated: Vec<(ModeIndex, Complex64)> = base
            .iter()
            .map(|&(m, v)| {
                (m, v * Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
            })
            .collect();
        let g = BeamGeometry::waist();
        let coh_a = render_coherent(&base, &g, &grid).unwrap();
        let coh_b = render_coherent(&rotated, &g, &grid).unwrap();
        assert!(coh_a.max_abs_difference(&coh_b) > 1e-3);

        let w_a: Vec<(ModeIndex, f64)> = base.iter().map(|&(m, v)| (m, v.norm_sqr())).collect();
        let w_b: Vec<(ModeIndex, f64)> =
            rotated.iter().map(|&(m, v)| (m, v.norm_sqr())).collect();
        let inc_a = render_incoherent(&w_a, &g, &grid).unwrap();
        let inc_b = render_incoherent(&w_b, &g, &grid).unwrap();
        assert!(inc_a.max_abs_difference(&inc_b) < 1e-12);
    }

    #[test]
    fn parseval_total_intensity() {
        // On a grid big enough to hold the modes, integrated coherent
        // intensity approaches the coefficient power.
        let coeffs: Vec<(ModeIndex, Complex64)> = vec![
            (ModeIndex::new(0, 0), c(0.9, 0.1)),
            (ModeIndex::new(1, 0), c(-0.4, 0.2)),
            (ModeIndex::new(-3, 1), c(0.0, 0.55)),
            (ModeIndex::new(2, 2), c(0.25, 0.0)),
        ];
        let power: f64 = coeffs.iter().map(|(_, v)| v.norm_sqr()).sum();
        let grid = GridSpec::square(384, 5.0);
        let img = render_coherent(&coeffs, &BeamGeometry::waist(), &grid).unwrap();
        let integrated = img.integrated_intensity();
        assert!(
            (integrated - power).abs() < 0.01 * power,
            "integrated {integrated} vs power {power}"
        );
    }

    #[test]
    fn cosine_pattern_metrics() {
        // Synthetic cos^2(phi) image: variance 1/8 over mean^2 1/4 = 0.5,
        // pi-rotation symmetric but not pi/2-rotation symmetric.
        let grid = GridSpec::square(256, 2.0);
        let values: Vec<f64> = (0..grid.pixel_count())
            .map(|idx| {
                let (i, j) = (idx % grid.width, idx / grid.width);
                let (x, y) = grid.pixel_center(i, j);
                y.atan2(x).cos().powi(2)
            })
            .collect();
        let img = RasterImage {
            width: grid.width,
            height: grid.height,
            pitch: grid.pitch,
            values,
        };
        let var = azimuthal_variance(&img).unwrap();
        assert!((var - 0.5).abs() < 0.01, "variance {var}");
        let two_fold = rotational_self_correlation(&img, 2).unwrap();
        let four_fold = rotational_self_correlation(&img, 4).unwrap();
        assert!(two_fold > 0.999);
        assert!(four_fold < 0.7);
    }

    #[test]
    fn degenerate_images_are_rejected() {
        let img = RasterImage { width: 8, height: 8, pitch: 0.1, values: vec![0.0; 64] };
        assert!(matches!(azimuthal_variance(&img), Err(CsiError::Numeric(_))));
        assert!(matches!(
            rotational_self_correlation(&img, 4),
            Err(CsiError::Numeric(_))
        ));
        assert!(render_coherent(&[], &BeamGeometry::waist(), &GridSpec::default()).is_err());
    }

    #[test]
    fn pgm_output_is_normalized() {
        let img = render_coherent(
            &[(ModeIndex::new(0, 0), c(0.3, 0.0))],
            &BeamGeometry::waist(),
            &GridSpec::square(16, 2.0),
        )
        .unwrap();
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n16 16\n255\n"));
        assert_eq!(buf.len(), 12 + 256);
        assert_eq!(buf.iter().skip(12).max(), Some(&255u8));
    }
}

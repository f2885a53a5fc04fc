//! Object transmission functions.
//!
//! A [`TransmissionMap`] is a complex transmittance `T(x, y)` sampled in beam
//! coordinates (units of `w0`, beam axis at the origin). Analytic primitives
//! are opaque regions in an otherwise clear aperture; rasters are loaded from
//! 8-bit PGM images and interpolated bilinearly. Every map may carry a
//! rotation and an axis offset.
//!
//! For the analytic primitives the module also exposes (crate-internally) the
//! exact angular structure on circles around the beam axis: the set of
//! blocked azimuthal arcs at a given radius, and the radii at which that
//! structure changes character. The overlap quadrature uses both to integrate
//! discontinuous objects to high accuracy.

use num_complex::Complex64;

use crate::error::{CsiError, Result};

const TAU: f64 = 2.0 * std::f64::consts::PI;
/// Half-length standing in for the strip's infinite extent; far beyond any
/// integration radius in use.
const STRIP_HALF_LENGTH: f64 = 1.0e5;

#[derive(Debug, Clone)]
enum Kind {
    Clear,
    Strip { width: f64 },
    Square { side: f64 },
    Disk { radius: f64 },
    Annulus { inner: f64, outer: f64 },
    SectorPolygon { folds: u32, blade_width: f64, inner_radius: f64, blade_length: f64 },
    Raster(RasterMap),
}

/// Complex transmittance of an object, `|T| <= 1` everywhere.
#[derive(Debug, Clone)]
pub struct TransmissionMap {
    kind: Kind,
    orientation: f64,
    offset: (f64, f64),
}

impl TransmissionMap {
    /// Fully transparent aperture, `T == 1`.
    pub fn clear() -> Self {
        Self::from_kind(Kind::Clear)
    }

    /// Opaque strip of the given width, centered on the axis, running along y.
    pub fn strip(width: f64) -> Result<Self> {
        if width <= 0.0 {
            return Err(CsiError::Config(format!("strip width must be positive, got {width}")));
        }
        Ok(Self::from_kind(Kind::Strip { width }))
    }

    /// Opaque axis-aligned square of the given side, centered on the axis.
    pub fn square(side: f64) -> Result<Self> {
        if side <= 0.0 {
            return Err(CsiError::Config(format!("square side must be positive, got {side}")));
        }
        Ok(Self::from_kind(Kind::Square { side }))
    }

    /// Opaque disk of the given radius, centered on the axis.
    pub fn disk(radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(CsiError::Config(format!("disk radius must be positive, got {radius}")));
        }
        Ok(Self::from_kind(Kind::Disk { radius }))
    }

    /// Opaque ring with the given inner and outer radii.
    pub fn annulus(inner: f64, outer: f64) -> Result<Self> {
        if inner < 0.0 || outer <= inner {
            return Err(CsiError::Config(format!(
                "annulus requires 0 <= inner < outer, got ({inner}, {outer})"
            )));
        }
        Ok(Self::from_kind(Kind::Annulus { inner, outer }))
    }

    /// `folds` congruent opaque blades arranged with N-fold rotational
    /// symmetry; each blade is a radial rectangle `[inner_radius,
    /// inner_radius + blade_length] x [-blade_width/2, blade_width/2]`.
    pub fn sector_polygon(
        folds: u32,
        blade_width: f64,
        inner_radius: f64,
        blade_length: f64,
    ) -> Result<Self> {
        if folds == 0 || blade_width <= 0.0 || blade_length <= 0.0 || inner_radius < 0.0 {
            return Err(CsiError::Config(format!(
                "sector polygon requires folds >= 1 and positive blade dimensions, \
                 got folds = {folds}, width = {blade_width}, inner = {inner_radius}, \
                 length = {blade_length}"
            )));
        }
        Ok(Self::from_kind(Kind::SectorPolygon {
            folds,
            blade_width,
            inner_radius,
            blade_length,
        }))
    }

    /// Raster transmittance from a grid of complex values.
    pub fn raster(map: RasterMap) -> Self {
        Self::from_kind(Kind::Raster(map))
    }

    fn from_kind(kind: Kind) -> Self {
        Self { kind, orientation: 0.0, offset: (0.0, 0.0) }
    }

    /// Rotate the object by `angle` radians about the beam axis.
    pub fn with_orientation(mut self, angle: f64) -> Self {
        self.orientation = angle;
        self
    }

    /// Displace the object center from the beam axis.
    pub fn with_offset(mut self, x: f64, y: f64) -> Self {
        self.offset = (x, y);
        self
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn offset(&self) -> (f64, f64) {
        self.offset
    }

    /// Complex transmittance at the beam-frame point `(x, y)`.
    pub fn sample(&self, x: f64, y: f64) -> Complex64 {
        let (xo, yo) = self.to_object_frame(x, y);
        match &self.kind {
            Kind::Clear => Complex64::new(1.0, 0.0),
            Kind::Strip { width } => {
                real(if xo.abs() < width / 2.0 { 0.0 } else { 1.0 })
            }
            Kind::Square { side } => {
                let h = side / 2.0;
                real(if xo.abs() < h && yo.abs() < h { 0.0 } else { 1.0 })
            }
            Kind::Disk { radius } => {
                real(if xo * xo + yo * yo < radius * radius { 0.0 } else { 1.0 })
            }
            Kind::Annulus { inner, outer } => {
                let r2 = xo * xo + yo * yo;
                real(if r2 >= inner * inner && r2 < outer * outer { 0.0 } else { 1.0 })
            }
            Kind::SectorPolygon { folds, blade_width, inner_radius, blade_length } => {
                let step = TAU / *folds as f64;
                for k in 0..*folds {
                    let (s, c) = (k as f64 * step).sin_cos();
                    let xb = c * xo + s * yo;
                    let yb = -s * xo + c * yo;
                    if xb >= *inner_radius
                        && xb <= inner_radius + blade_length
                        && yb.abs() <= blade_width / 2.0
                    {
                        return real(0.0);
                    }
                }
                real(1.0)
            }
            Kind::Raster(map) => map.sample(xo, yo),
        }
    }

    fn to_object_frame(&self, x: f64, y: f64) -> (f64, f64) {
        let dx = x - self.offset.0;
        let dy = y - self.offset.1;
        let (s, c) = self.orientation.sin_cos();
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Whether the exact blocked-arc decomposition is available.
    pub(crate) fn supports_arc_averaging(&self) -> bool {
        !matches!(self.kind, Kind::Raster(_))
    }

    /// Blocked azimuthal arcs on the beam-frame circle of radius `r`, as
    /// disjoint `[lo, hi)` intervals within `[0, 2*pi)`. `None` for rasters.
    pub(crate) fn blocked_arcs(&self, r: f64) -> Option<Vec<(f64, f64)>> {
        match &self.kind {
            Kind::Clear => Some(Vec::new()),
            Kind::Disk { radius } => Some(disk_blocked_arcs(self.offset, *radius, r)),
            Kind::Annulus { inner, outer } => {
                let outer_arcs = disk_blocked_arcs(self.offset, *outer, r);
                let inner_arcs = disk_blocked_arcs(self.offset, *inner, r);
                Some(subtract_arcs(&outer_arcs, &inner_arcs))
            }
            Kind::Strip { .. } | Kind::Square { .. } | Kind::SectorPolygon { .. } => {
                let mut blocked = Vec::new();
                for poly in self.beam_frame_polygons() {
                    blocked.extend(polygon_blocked_arcs(&poly, r));
                }
                Some(merge_arcs(blocked))
            }
            Kind::Raster(_) => None,
        }
    }

    /// Radii at which the angular structure of the object changes character
    /// (vertices, tangency points); quadrature splits its radial grid here.
    pub(crate) fn radial_breakpoints(&self) -> Vec<f64> {
        let mut out = Vec::new();
        match &self.kind {
            Kind::Clear | Kind::Raster(_) => {}
            Kind::Disk { radius } => {
                push_circle_breakpoints(&mut out, self.offset, *radius);
            }
            Kind::Annulus { inner, outer } => {
                push_circle_breakpoints(&mut out, self.offset, *inner);
                push_circle_breakpoints(&mut out, self.offset, *outer);
            }
            Kind::Strip { .. } | Kind::Square { .. } | Kind::SectorPolygon { .. } => {
                for poly in self.beam_frame_polygons() {
                    push_polygon_breakpoints(&mut out, &poly);
                }
            }
        }
        out.retain(|r| *r > 1e-12);
        out.sort_by(|a, b| a.total_cmp(b));
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        out
    }

    /// Opaque regions as beam-frame polygons (rotation and offset applied).
    fn beam_frame_polygons(&self) -> Vec<Vec<(f64, f64)>> {
        let object_polys: Vec<Vec<(f64, f64)>> = match &self.kind {
            Kind::Strip { width } => {
                let h = width / 2.0;
                vec![vec![
                    (h, -STRIP_HALF_LENGTH),
                    (h, STRIP_HALF_LENGTH),
                    (-h, STRIP_HALF_LENGTH),
                    (-h, -STRIP_HALF_LENGTH),
                ]]
            }
            Kind::Square { side } => {
                let h = side / 2.0;
                vec![vec![(h, -h), (h, h), (-h, h), (-h, -h)]]
            }
            Kind::SectorPolygon { folds, blade_width, inner_radius, blade_length } => {
                let hw = blade_width / 2.0;
                let r0 = *inner_radius;
                let r1 = inner_radius + blade_length;
                let step = TAU / *folds as f64;
                (0..*folds)
                    .map(|k| {
                        let (s, c) = (k as f64 * step).sin_cos();
                        [(r0, -hw), (r1, -hw), (r1, hw), (r0, hw)]
                            .iter()
                            .map(|&(x, y)| (c * x - s * y, s * x + c * y))
                            .collect()
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        let (s, c) = self.orientation.sin_cos();
        object_polys
            .into_iter()
            .map(|poly| {
                poly.into_iter()
                    .map(|(x, y)| {
                        (c * x - s * y + self.offset.0, s * x + c * y + self.offset.1)
                    })
                    .collect()
            })
            .collect()
    }
}

fn real(v: f64) -> Complex64 {
    Complex64::new(v, 0.0)
}

// ---------------------------------------------------------------------------
// Raster maps
// ---------------------------------------------------------------------------

/// Grid of complex transmittance values with square pixels.
#[derive(Debug, Clone)]
pub struct RasterMap {
    width: usize,
    height: usize,
    pitch: f64,
    values: Vec<Complex64>,
}

impl RasterMap {
    /// `values` is row-major, row 0 at the top; the grid center sits on the
    /// beam axis. Requires `|value| <= 1` for every pixel.
    pub fn new(width: usize, height: usize, pitch: f64, values: Vec<Complex64>) -> Result<Self> {
        if width == 0 || height == 0 || values.len() != width * height {
            return Err(CsiError::Config(format!(
                "raster dimensions {width}x{height} do not match {} values",
                values.len()
            )));
        }
        if pitch <= 0.0 {
            return Err(CsiError::Config(format!("raster pitch must be positive, got {pitch}")));
        }
        if let Some(v) = values.iter().find(|v| v.norm() > 1.0 + 1e-12) {
            return Err(CsiError::Config(format!(
                "raster transmittance exceeds unit modulus: |{v}| > 1"
            )));
        }
        Ok(Self { width, height, pitch, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    /// Bilinear sample in object coordinates; points outside the footprint
    /// are unobstructed (`T = 1`).
    fn sample(&self, x: f64, y: f64) -> Complex64 {
        let half_w = self.width as f64 / 2.0 * self.pitch;
        let half_h = self.height as f64 / 2.0 * self.pitch;
        if x < -half_w || x > half_w || y < -half_h || y > half_h {
            return real(1.0);
        }
        // Fractional pixel coordinates; pixel centers at integer positions.
        let fx = x / self.pitch + self.width as f64 / 2.0 - 0.5;
        let fy = self.height as f64 / 2.0 - 0.5 - y / self.pitch;
        let i0 = (fx.floor() as isize).clamp(0, self.width as isize - 2).max(0) as usize;
        let j0 = (fy.floor() as isize).clamp(0, self.height as isize - 2).max(0) as usize;
        let (i1, j1) = if self.width == 1 || self.height == 1 {
            (i0.min(self.width - 1), j0.min(self.height - 1))
        } else {
            (i0 + 1, j0 + 1)
        };
        let tx = (fx - i0 as f64).clamp(0.0, 1.0);
        let ty = (fy - j0 as f64).clamp(0.0, 1.0);
        let at = |i: usize, j: usize| self.values[j * self.width + i];
        at(i0, j0) * ((1.0 - tx) * (1.0 - ty))
            + at(i1, j0) * (tx * (1.0 - ty))
            + at(i0, j1) * ((1.0 - tx) * ty)
            + at(i1, j1) * (tx * ty)
    }
}

/// Parse an 8-bit binary PGM (`P5`) payload into a transmission map with the
/// given pixel pitch. Pixel value 255 is full transmission, 0 is opaque.
pub fn load_raster(bytes: &[u8], pitch: f64) -> Result<TransmissionMap> {
    let mut cursor = 0usize;

    fn skip_separators(bytes: &[u8], cursor: &mut usize) {
        loop {
            while *cursor < bytes.len() && bytes[*cursor].is_ascii_whitespace() {
                *cursor += 1;
            }
            if *cursor < bytes.len() && bytes[*cursor] == b'#' {
                while *cursor < bytes.len() && bytes[*cursor] != b'\n' {
                    *cursor += 1;
                }
            } else {
                return;
            }
        }
    }

    fn read_number(bytes: &[u8], cursor: &mut usize, what: &str) -> Result<usize> {
        skip_separators(bytes, cursor);
        let start = *cursor;
        while *cursor < bytes.len() && bytes[*cursor].is_ascii_digit() {
            *cursor += 1;
        }
        if start == *cursor {
            return Err(CsiError::Parse {
                offset: start,
                message: format!("expected {what}"),
            });
        }
        std::str::from_utf8(&bytes[start..*cursor])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(CsiError::Parse {
                offset: start,
                message: format!("invalid {what}"),
            })
    }

    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(CsiError::Parse {
            offset: 0,
            message: "missing P5 magic number".into(),
        });
    }
    cursor = 2;
    let width = read_number(bytes, &mut cursor, "width")?;
    let height = read_number(bytes, &mut cursor, "height")?;
    let maxval = read_number(bytes, &mut cursor, "maximum gray value")?;
    if width == 0 || height == 0 {
        return Err(CsiError::Parse {
            offset: 2,
            message: format!("degenerate image dimensions {width}x{height}"),
        });
    }
    if maxval == 0 || maxval > 255 {
        return Err(CsiError::Parse {
            offset: cursor,
            message: format!("maximum gray value {maxval} is not 8-bit"),
        });
    }
    if cursor >= bytes.len() || !bytes[cursor].is_ascii_whitespace() {
        return Err(CsiError::Parse {
            offset: cursor,
            message: "expected single whitespace before raster data".into(),
        });
    }
    cursor += 1;
    let need = width * height;
    if bytes.len() < cursor + need {
        return Err(CsiError::Parse {
            offset: bytes.len(),
            message: format!(
                "truncated raster: need {need} bytes, found {}",
                bytes.len() - cursor
            ),
        });
    }
    let values = bytes[cursor..cursor + need]
        .iter()
        .map(|&b| real(b as f64 / 255.0))
        .collect();
    Ok(TransmissionMap::raster(RasterMap::new(width, height, pitch, values)?))
}

// ---------------------------------------------------------------------------
// Arc geometry on circles about the beam axis
// ---------------------------------------------------------------------------

fn normalize_angle(a: f64) -> f64 {
    let mut v = a % TAU;
    if v < 0.0 {
        v += TAU;
    }
    v
}

/// Push `[lo, hi]` (arbitrary reals, hi > lo) as normalized arcs in [0, 2pi).
fn push_normalized(arcs: &mut Vec<(f64, f64)>, lo: f64, hi: f64) {
    if hi - lo >= TAU {
        arcs.push((0.0, TAU));
        return;
    }
    let lo_n = normalize_angle(lo);
    let hi_n = lo_n + (hi - lo);
    if hi_n <= TAU {
        arcs.push((lo_n, hi_n));
    } else {
        arcs.push((lo_n, TAU));
        arcs.push((0.0, hi_n - TAU));
    }
}

fn merge_arcs(mut arcs: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    arcs.retain(|(lo, hi)| hi > lo);
    arcs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(arcs.len());
    for (lo, hi) in arcs {
        match out.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => out.push((lo, hi)),
        }
    }
    out
}

/// Set difference `a \ b` of disjoint sorted arc lists.
fn subtract_arcs(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(lo, hi) in a {
        let mut cur = lo;
        for &(blo, bhi) in b {
            if bhi <= cur || blo >= hi {
                continue;
            }
            if blo > cur {
                out.push((cur, blo));
            }
            cur = cur.max(bhi);
            if cur >= hi {
                break;
            }
        }
        if cur < hi {
            out.push((cur, hi));
        }
    }
    out
}

/// Arcs of the circle `|x| = r` lying inside the disk of radius `disk_r`
/// centered at `center`.
fn disk_blocked_arcs(center: (f64, f64), disk_r: f64, r: f64) -> Vec<(f64, f64)> {
    let d = center.0.hypot(center.1);
    if d < 1e-14 {
        return if r < disk_r { vec![(0.0, TAU)] } else { Vec::new() };
    }
    let cos_half = (r * r + d * d - disk_r * disk_r) / (2.0 * r * d);
    if cos_half <= -1.0 {
        return vec![(0.0, TAU)];
    }
    if cos_half >= 1.0 {
        return Vec::new();
    }
    let half = cos_half.acos();
    let mid = center.1.atan2(center.0);
    let mut arcs = Vec::new();
    push_normalized(&mut arcs, mid - half, mid + half);
    merge_arcs(arcs)
}

fn point_in_polygon(poly: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > y) != (yj > y) {
            let x_cross = xi + (y - yi) * (xj - xi) / (yj - yi);
            if x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Arcs of the circle of radius `r` (about the origin) lying inside `poly`.
fn polygon_blocked_arcs(poly: &[(f64, f64)], r: f64) -> Vec<(f64, f64)> {
    let mut crossings: Vec<f64> = Vec::new();
    let n = poly.len();
    for i in 0..n {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % n];
        let (dx, dy) = (x2 - x1, y2 - y1);
        let a = dx * dx + dy * dy;
        if a == 0.0 {
            continue;
        }
        let b = 2.0 * (x1 * dx + y1 * dy);
        let c = x1 * x1 + y1 * y1 - r * r;
        let disc = b * b - 4.0 * a * c;
        if disc <= 0.0 {
            continue;
        }
        let sq = disc.sqrt();
        for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
            if (0.0..1.0).contains(&t) {
                crossings.push(normalize_angle((y1 + t * dy).atan2(x1 + t * dx)));
            }
        }
    }
    if crossings.is_empty() {
        // No boundary crossing: the circle is entirely inside or outside.
        let probe = 0.123_456_789_f64;
        return if point_in_polygon(poly, r * probe.cos(), r * probe.sin()) {
            vec![(0.0, TAU)]
        } else {
            Vec::new()
        };
    }
    crossings.sort_by(f64::total_cmp);
    crossings.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let mut arcs = Vec::new();
    for i in 0..crossings.len() {
        let lo = crossings[i];
        let hi = if i + 1 < crossings.len() { crossings[i + 1] } else { crossings[0] + TAU };
        let mid = 0.5 * (lo + hi);
        if point_in_polygon(poly, r * mid.cos(), r * mid.sin()) {
            push_normalized(&mut arcs, lo, hi);
        }
    }
    merge_arcs(arcs)
}

fn push_circle_breakpoints(out: &mut Vec<f64>, center: (f64, f64), radius: f64) {
    let d = center.0.hypot(center.1);
    out.push((d - radius).abs());
    out.push(d + radius);
}

fn push_polygon_breakpoints(out: &mut Vec<f64>, poly: &[(f64, f64)]) {
    let n = poly.len();
    for i in 0..n {
        let (x1, y1) = poly[i];
        let (x2, y2) = poly[(i + 1) % n];
        out.push(x1.hypot(y1));
        let (dx, dy) = (x2 - x1, y2 - y1);
        let len2 = dx * dx + dy * dy;
        if len2 > 0.0 {
            // Perpendicular foot from the origin, if it lands on the segment.
            let t = -(x1 * dx + y1 * dy) / len2;
            if (0.0..=1.0).contains(&t) {
                out.push((x1 + t * dx).hypot(y1 + t * dy));
            }
        }
    }
}

/// Total blocked angle at radius `r`; convenience for tests and diagnostics.
#[allow(dead_code)]
pub(crate) fn blocked_measure(arcs: &[(f64, f64)]) -> f64 {
    arcs.iter().map(|(lo, hi)| hi - lo).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn strip_blocks_axis_and_passes_outside() {
        let strip = TransmissionMap::strip(0.9).unwrap();
        assert_eq!(strip.sample(0.0, 0.0).re, 0.0);
        assert_eq!(strip.sample(0.46, 2.0).re, 1.0);
        assert_eq!(strip.sample(-0.3, -5.0).re, 0.0);
    }

    #[test]
    fn rotation_acts_on_coordinates() {
        let square = TransmissionMap::square(1.0).unwrap();
        let rotated = TransmissionMap::square(1.0)
            .unwrap()
            .with_orientation(std::f64::consts::FRAC_PI_2);
        assert_eq!(rotated.sample(0.4, 0.3), square.sample(0.3, -0.4));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = rng.random_range(-1.5..1.5);
            let y = rng.random_range(-1.5..1.5);
            assert_eq!(rotated.sample(x, y), square.sample(y, -x));
        }
    }

    #[test]
    fn primitive_fold_symmetries_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let strip = TransmissionMap::strip(0.7).unwrap().with_orientation(0.4);
        let square = TransmissionMap::square(1.1).unwrap().with_orientation(-0.2);
        let disk = TransmissionMap::disk(0.8).unwrap();
        let annulus = TransmissionMap::annulus(0.4, 0.9).unwrap();
        for _ in 0..1000 {
            let r = rng.random_range(0.0..2.5f64);
            let phi = rng.random_range(0.0..TAU);
            let (x, y) = (r * phi.cos(), r * phi.sin());
            // Rotating the sampling point by the fold angle leaves T unchanged.
            let rot = |m: &TransmissionMap, a: f64| {
                let (s, c) = a.sin_cos();
                m.sample(c * x - s * y, s * x + c * y)
            };
            assert_eq!(strip.sample(x, y), rot(&strip, std::f64::consts::PI));
            assert_eq!(square.sample(x, y), rot(&square, std::f64::consts::FRAC_PI_2));
            let any = rng.random_range(0.0..TAU);
            assert_eq!(disk.sample(x, y), rot(&disk, any));
            assert_eq!(annulus.sample(x, y), rot(&annulus, any));
        }
    }

    #[test]
    fn transmittance_bounded_by_one() {
        let maps = [
            TransmissionMap::strip(0.9).unwrap(),
            TransmissionMap::square(1.0).unwrap().with_offset(0.2, -0.1),
            TransmissionMap::annulus(0.3, 1.2).unwrap(),
            TransmissionMap::sector_polygon(4, 0.2, 0.2, 1.2).unwrap(),
            load_raster(&make_pgm(7, 5, &vec![200; 35]), 0.3).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for map in &maps {
            for _ in 0..20_000 {
                let x = rng.random_range(-4.0..4.0);
                let y = rng.random_range(-4.0..4.0);
                assert!(map.sample(x, y).norm() <= 1.0 + 1e-12);
            }
        }
    }

    fn make_pgm(w: usize, h: usize, data: &[u8]) -> Vec<u8> {
        let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
        bytes.extend_from_slice(data);
        bytes
    }

    #[test]
    fn pgm_uniform_images() {
        let white = load_raster(&make_pgm(4, 4, &[255; 16]), 0.5).unwrap();
        let black = load_raster(&make_pgm(4, 4, &[0; 16]), 0.5).unwrap();
        for &(x, y) in &[(0.0, 0.0), (0.4, -0.7), (-0.9, 0.9)] {
            assert!((white.sample(x, y).re - 1.0).abs() < 1e-12);
            assert_eq!(black.sample(x, y).re, 0.0);
        }
        // Outside the footprint both are clear.
        assert_eq!(white.sample(5.0, 0.0).re, 1.0);
        assert_eq!(black.sample(5.0, 0.0).re, 1.0);
    }

    #[test]
    fn pgm_checkerboard_exact_at_pixel_centers() {
        let map = load_raster(&make_pgm(2, 2, &[0, 255, 255, 0]), 1.0).unwrap();
        // Row 0 is the top row: pixel (0,0) center at (-0.5, +0.5).
        assert_eq!(map.sample(-0.5, 0.5).re, 0.0);
        assert_eq!(map.sample(0.5, 0.5).re, 1.0);
        assert_eq!(map.sample(-0.5, -0.5).re, 1.0);
        assert_eq!(map.sample(0.5, -0.5).re, 0.0);
        // Midpoint between centers interpolates linearly.
        assert!((map.sample(0.0, 0.5).re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn pgm_parse_errors_carry_offsets() {
        match load_raster(b"P6\n2 2\n255\n0000", 1.0) {
            Err(CsiError::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other:?}"),
        }
        let mut truncated = make_pgm(4, 4, &[0; 16]);
        truncated.truncate(truncated.len() - 3);
        match load_raster(&truncated, 1.0) {
            Err(CsiError::Parse { message, .. }) => assert!(message.contains("truncated")),
            other => panic!("expected truncation error, got {other:?}"),
        }
        assert!(load_raster(b"P5\n0 4\n255\n", 1.0).is_err());
    }

    #[test]
    fn pgm_comments_are_skipped() {
        let mut bytes = b"P5\n# a comment\n3 1\n# another\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 128, 255]);
        let map = load_raster(&bytes, 1.0).unwrap();
        assert!((map.sample(0.0, 0.0).re - 128.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn strip_arcs_match_closed_form() {
        let strip = TransmissionMap::strip(0.9).unwrap();
        // Entirely blocked inside the half-width.
        let full = strip.blocked_arcs(0.3).unwrap();
        assert!((blocked_measure(&full) - TAU).abs() < 1e-9);
        // At r > d/2 the blocked measure is 2*pi - 4*acos(d / (2 r)).
        for r in [0.5, 0.9, 2.0, 4.7] {
            let arcs = strip.blocked_arcs(r).unwrap();
            let want = TAU - 4.0 * (0.45 / r).acos();
            assert!(
                (blocked_measure(&arcs) - want).abs() < 1e-9,
                "r = {r}: {} vs {want}",
                blocked_measure(&arcs)
            );
        }
    }

    #[test]
    fn annulus_arcs_are_all_or_nothing_when_centered() {
        let annulus = TransmissionMap::annulus(0.4, 0.8).unwrap();
        assert_eq!(blocked_measure(&annulus.blocked_arcs(0.2).unwrap()), 0.0);
        assert!((blocked_measure(&annulus.blocked_arcs(0.6).unwrap()) - TAU).abs() < 1e-12);
        assert_eq!(blocked_measure(&annulus.blocked_arcs(1.0).unwrap()), 0.0);
    }

    #[test]
    fn offset_disk_arcs_agree_with_point_samples() {
        let map = TransmissionMap::disk(0.6).unwrap().with_offset(0.5, -0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let r = rng.random_range(0.05..2.0);
            let phi = rng.random_range(0.0..TAU);
            let arcs = map.blocked_arcs(r).unwrap();
            let in_arc = arcs.iter().any(|&(lo, hi)| phi >= lo && phi < hi);
            let sampled = map.sample(r * phi.cos(), r * phi.sin()).re == 0.0;
            assert_eq!(in_arc, sampled, "r = {r}, phi = {phi}");
        }
    }

    #[test]
    fn polygon_arcs_agree_with_point_samples() {
        let maps = [
            TransmissionMap::square(1.0).unwrap().with_orientation(0.3).with_offset(0.2, 0.1),
            TransmissionMap::sector_polygon(3, 0.3, 0.15, 1.0).unwrap().with_orientation(-0.7),
            TransmissionMap::strip(0.6).unwrap().with_orientation(1.1),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for map in &maps {
            for _ in 0..400 {
                let r = rng.random_range(0.05..2.2);
                let phi = rng.random_range(0.0..TAU);
                let arcs = map.blocked_arcs(r).unwrap();
                let in_arc = arcs.iter().any(|&(lo, hi)| phi >= lo && phi < hi);
                let sampled = map.sample(r * phi.cos(), r * phi.sin()).re == 0.0;
                // Skip points essentially on an arc boundary.
                let near_edge = arcs
                    .iter()
                    .any(|&(lo, hi)| (phi - lo).abs() < 1e-9 || (phi - hi).abs() < 1e-9);
                if !near_edge {
                    assert_eq!(in_arc, sampled, "r = {r}, phi = {phi}");
                }
            }
        }
    }

    #[test]
    fn breakpoints_cover_structure_changes() {
        let strip = TransmissionMap::strip(0.9).unwrap();
        let bps = strip.radial_breakpoints();
        assert!(bps.iter().any(|r| (r - 0.45).abs() < 1e-12));
        let annulus = TransmissionMap::annulus(0.4, 0.8).unwrap();
        let bps = annulus.radial_breakpoints();
        assert!(bps.iter().any(|r| (r - 0.4).abs() < 1e-12));
        assert!(bps.iter().any(|r| (r - 0.8).abs() < 1e-12));
        let square = TransmissionMap::square(1.0).unwrap();
        let bps = square.radial_breakpoints();
        assert!(bps.iter().any(|r| (r - 0.5).abs() < 1e-12));
        assert!(bps.iter().any(|r| (r - 0.5 * std::f64::consts::SQRT_2).abs() < 1e-12));
    }

    #[test]
    fn constructor_validation() {
        assert!(TransmissionMap::strip(-1.0).is_err());
        assert!(TransmissionMap::annulus(0.9, 0.4).is_err());
        assert!(TransmissionMap::sector_polygon(0, 0.2, 0.1, 1.0).is_err());
        assert!(RasterMap::new(2, 2, 1.0, vec![real(2.0); 4]).is_err());
        assert!(RasterMap::new(2, 2, 1.0, vec![real(0.5); 3]).is_err());
    }
}

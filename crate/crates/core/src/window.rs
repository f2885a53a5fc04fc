//! Detection window over mode indices.

use serde::{Deserialize, Serialize};

use crate::error::{CsiError, Result};

/// Rectangular detection window: azimuthal index `l` in `[l_min, l_max]`,
/// radial index `p` in `[0, p_max]`, applied to both arms.
///
/// The default window is `l` in `[-10, 10]` with `p_max = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeWindow {
    pub l_min: i32,
    pub l_max: i32,
    pub p_max: u32,
}

impl ModeWindow {
    pub fn new(l_min: i32, l_max: i32, p_max: u32) -> Result<Self> {
        if l_min > l_max {
            return Err(CsiError::Config(format!(
                "mode window has l_min = {l_min} > l_max = {l_max}"
            )));
        }
        Ok(Self { l_min, l_max, p_max })
    }

    /// Symmetric window `l` in `[-l_max, l_max]`.
    pub fn symmetric(l_max: u32, p_max: u32) -> Self {
        Self {
            l_min: -(l_max as i32),
            l_max: l_max as i32,
            p_max,
        }
    }

    pub fn l_values(&self) -> impl Iterator<Item = i32> + Clone {
        self.l_min..=self.l_max
    }

    pub fn p_values(&self) -> impl Iterator<Item = u32> + Clone {
        0..=self.p_max
    }

    pub fn l_count(&self) -> usize {
        (self.l_max - self.l_min + 1) as usize
    }

    pub fn p_count(&self) -> usize {
        self.p_max as usize + 1
    }

    /// Number of `(l, p)` modes in one arm.
    pub fn arm_count(&self) -> usize {
        self.l_count() * self.p_count()
    }

    /// Number of `(l1, p1; l2, p2)` pairs across both arms.
    pub fn pair_count(&self) -> usize {
        self.arm_count() * self.arm_count()
    }

    pub fn contains_l(&self, l: i32) -> bool {
        (self.l_min..=self.l_max).contains(&l)
    }

    /// Flat index of an `(l, p)` mode within one arm. Panics outside the window.
    pub fn arm_index(&self, l: i32, p: u32) -> usize {
        assert!(self.contains_l(l) && p <= self.p_max, "mode ({l}, {p}) outside window");
        (l - self.l_min) as usize * self.p_count() + p as usize
    }

    /// Flat index of a two-arm pair. Panics outside the window.
    pub fn pair_index(&self, l1: i32, p1: u32, l2: i32, p2: u32) -> usize {
        self.arm_index(l1, p1) * self.arm_count() + self.arm_index(l2, p2)
    }

    /// Iterate `(l, p)` pairs of one arm in index order.
    pub fn arm_modes(&self) -> impl Iterator<Item = (i32, u32)> + Clone {
        let p = self.p_values();
        self.l_values().flat_map(move |l| p.clone().map(move |pp| (l, pp)))
    }
}

impl Default for ModeWindow {
    fn default() -> Self {
        Self::symmetric(10, 0)
    }
}

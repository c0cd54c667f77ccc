//! Corner-view selection with flip normalization, angular coordinate planes,
//! and backward warping.
//!
//! Every synthesis runs in a *normalized frame*: the three corner views
//! closest to the target are mirrored so that they always sit at the
//! top-left `(0, 0)`, top-right `(0, n_u - 1)` and bottom-left `(n_v - 1, 0)`
//! grid corners. The output is mirrored back afterwards.

mod warp;

pub use warp::{warp_backward, warp_forward, warp_view};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lf_data::LightField;
use crate::tensor::{self, Tensor};

/// A position on the angular grid, zero-based from the top-left view.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AngularPos {
    pub v: usize,
    pub u: usize,
}

impl AngularPos {
    pub fn new(v: usize, u: usize) -> Self {
        AngularPos { v, u }
    }

    fn l1(self, other: AngularPos) -> usize {
        self.v.abs_diff(other.v) + self.u.abs_diff(other.u)
    }
}

/// Angular extent of a light field plus the index <-> normalized mapping.
///
/// Indices are mapped affinely onto `[-1, 1]` (`0 -> -1`, `n - 1 -> 1`). Both
/// axes share one scale, half the larger extent minus one, so a single
/// disparity value means the same pixel shift along `u` and `v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngularGrid {
    pub n_v: usize,
    pub n_u: usize,
}

impl AngularGrid {
    pub fn new(n_v: usize, n_u: usize) -> Self {
        AngularGrid { n_v, n_u }
    }

    /// Grid steps per normalized unit.
    pub fn half_span(&self) -> f64 {
        (self.n_v.max(self.n_u) - 1) as f64 / 2.0
    }

    pub fn normalize_u(&self, u: f64) -> f64 {
        (u - (self.n_u - 1) as f64 / 2.0) / self.half_span()
    }

    pub fn normalize_v(&self, v: f64) -> f64 {
        (v - (self.n_v - 1) as f64 / 2.0) / self.half_span()
    }

    /// Normalized `(u, v)` of a grid position.
    pub fn normalized(&self, p: AngularPos) -> (f64, f64) {
        (self.normalize_u(p.u as f64), self.normalize_v(p.v as f64))
    }

    /// Nearest grid position of a normalized `(u, v)`.
    pub fn index_of(&self, (u, v): (f64, f64)) -> AngularPos {
        let s = self.half_span();
        AngularPos {
            u: (u * s + (self.n_u - 1) as f64 / 2.0).round() as usize,
            v: (v * s + (self.n_v - 1) as f64 / 2.0).round() as usize,
        }
    }

    /// Convert a disparity in pixels per grid step to pixels per normalized unit.
    pub fn disparity_to_normalized(&self, d: f64) -> f64 {
        d * self.half_span()
    }

    pub fn corners(&self) -> [AngularPos; 4] {
        let (bv, bu) = (self.n_v - 1, self.n_u - 1);
        [
            AngularPos::new(0, 0),
            AngularPos::new(0, bu),
            AngularPos::new(bv, 0),
            AngularPos::new(bv, bu),
        ]
    }

    pub fn is_corner(&self, p: AngularPos) -> bool {
        self.corners().contains(&p)
    }

    pub fn contains(&self, p: AngularPos) -> bool {
        p.v < self.n_v && p.u < self.n_u
    }

    /// All grid positions except the four corners, row-major.
    pub fn interior_positions(&self) -> Vec<AngularPos> {
        (0..self.n_v)
            .flat_map(|v| (0..self.n_u).map(move |u| AngularPos::new(v, u)))
            .filter(|p| !self.is_corner(*p))
            .collect()
    }
}

/// Role of a selected corner view in the normalized frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    /// Top-left.
    L,
    /// Top-right.
    R,
    /// Bottom-left.
    B,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::L, Role::R, Role::B];

    /// Grid position of this role in the normalized frame.
    pub fn normalized_pos(self, grid: &AngularGrid) -> AngularPos {
        match self {
            Role::L => AngularPos::new(0, 0),
            Role::R => AngularPos::new(0, grid.n_u - 1),
            Role::B => AngularPos::new(grid.n_v - 1, 0),
        }
    }
}

/// Which corners feed a target, and how the frame is mirrored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CornerChoice {
    pub grid: AngularGrid,
    /// Original grid positions of the L, R and B views.
    pub selected: [AngularPos; 3],
    pub dropped: AngularPos,
    pub flip_h: bool,
    pub flip_v: bool,
    pub original_target: AngularPos,
    /// Target position in the normalized (mirrored) frame.
    pub remapped_target: AngularPos,
}

/// Order in which equidistant corners are dropped: bottom-right first, then
/// bottom-left, then top-right.
const DROP_PRIORITY: [usize; 4] = [3, 2, 1, 0];

/// Pick the three corners nearest (in L1 angular distance) to `target`.
pub fn choose_corners(grid: AngularGrid, target: AngularPos) -> Result<CornerChoice> {
    if grid.n_v < 2 || grid.n_u < 2 {
        return Err(Error::InvalidArgument(format!(
            "angular grid {}x{} has no distinct corners",
            grid.n_v, grid.n_u
        )));
    }
    if !grid.contains(target) {
        return Err(Error::InvalidArgument(format!(
            "target (u={}, v={}) outside {}x{} grid",
            target.u, target.v, grid.n_v, grid.n_u
        )));
    }
    if grid.is_corner(target) {
        return Err(Error::CornerTarget {
            u: target.u,
            v: target.v,
        });
    }
    let corners = grid.corners();
    let far = corners.iter().map(|c| c.l1(target)).max().unwrap_or(0);
    let dropped = DROP_PRIORITY
        .iter()
        .map(|&i| corners[i])
        .find(|c| c.l1(target) == far)
        .expect("some corner attains the maximum");

    let flip_v = dropped.v == 0;
    let flip_h = dropped.u == 0;
    let map = |p: AngularPos| AngularPos {
        v: if flip_v { grid.n_v - 1 - p.v } else { p.v },
        u: if flip_h { grid.n_u - 1 - p.u } else { p.u },
    };
    // The mirror is an involution, so mapping the normalized role positions
    // gives the original corners.
    let selected = Role::ALL.map(|r| map(r.normalized_pos(&grid)));
    Ok(CornerChoice {
        grid,
        selected,
        dropped,
        flip_h,
        flip_v,
        original_target: target,
        remapped_target: map(target),
    })
}

impl CornerChoice {
    /// Mirror an image (any `[N, C, H, W]`) into or out of the normalized
    /// frame; the operation is its own inverse.
    pub fn apply_flips(&self, image: &Tensor) -> Tensor {
        match (self.flip_h, self.flip_v) {
            (false, false) => image.clone(),
            (true, false) => tensor::flip_h(image),
            (false, true) => tensor::flip_v(image),
            (true, true) => tensor::flip_v(&tensor::flip_h(image)),
        }
    }

    /// Normalized `(u, v)` of the remapped target.
    pub fn target_normalized(&self) -> (f64, f64) {
        self.grid.normalized(self.remapped_target)
    }

    /// Normalized angular offset `(u_i - u_t', v_i - v_t')` of a role.
    pub fn offset(&self, role: Role) -> (f64, f64) {
        let (ut, vt) = self.target_normalized();
        let (ui, vi) = self.grid.normalized(role.normalized_pos(&self.grid));
        (ui - ut, vi - vt)
    }

    pub fn offsets(&self) -> [(f64, f64); 3] {
        Role::ALL.map(|r| self.offset(r))
    }
}

/// The chosen corner views, already mirrored into the normalized frame.
#[derive(Clone, Debug)]
pub struct ViewSelection {
    pub choice: CornerChoice,
    /// L, R, B views as `[1, 3, H, W]` in `[0, 1]`.
    pub views: [Tensor; 3],
}

/// Select and mirror the three input views for `target`.
pub fn select_views(lf: &LightField, target: AngularPos) -> Result<ViewSelection> {
    let choice = choose_corners(lf.grid(), target)?;
    let views = choice.selected.map(|p| choice.apply_flips(&lf.view_tensor(p)));
    Ok(ViewSelection { choice, views })
}

/// Mirror a normalized-frame image back to the original orientation.
pub fn unflip(image: &Tensor, selection: &CornerChoice) -> Tensor {
    selection.apply_flips(image)
}

/// Constant angular coordinate planes fed to the networks.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinatePlanes {
    pub u: Tensor,
    pub v: Tensor,
}

/// `U(x, y) = u_t`, `V(x, y) = v_t` over an `h x w` extent, for a batch of
/// normalized targets.
pub fn make_planes(targets: &[(f64, f64)], (h, w): (usize, usize)) -> CoordinatePlanes {
    let n = targets.len();
    CoordinatePlanes {
        u: Tensor::from_fn([n, 1, h, w], |ni, _, _, _| targets[ni].0),
        v: Tensor::from_fn([n, 1, h, w], |ni, _, _, _| targets[ni].1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: AngularGrid = AngularGrid { n_v: 7, n_u: 7 };

    #[test]
    fn near_top_left_keeps_three_corners_without_flip() {
        let c = choose_corners(GRID, AngularPos::new(1, 1)).unwrap();
        assert_eq!(c.dropped, AngularPos::new(6, 6));
        assert!(!c.flip_h && !c.flip_v);
        assert_eq!(c.remapped_target, AngularPos::new(1, 1));
        let d: Vec<usize> = GRID.corners().iter().map(|k| k.l1(c.original_target)).collect();
        assert_eq!(d, vec![2, 6, 6, 10]);
    }

    #[test]
    fn near_bottom_right_flips_both() {
        let c = choose_corners(GRID, AngularPos::new(5, 5)).unwrap();
        assert_eq!(c.dropped, AngularPos::new(0, 0));
        assert!(c.flip_h && c.flip_v);
        assert_eq!(c.remapped_target, AngularPos::new(1, 1));
        assert_eq!(
            c.selected,
            [AngularPos::new(6, 6), AngularPos::new(6, 0), AngularPos::new(0, 6)]
        );
    }

    #[test]
    fn centre_uses_tie_priority() {
        let c = choose_corners(GRID, AngularPos::new(3, 3)).unwrap();
        assert_eq!(c.dropped, AngularPos::new(6, 6));
        assert!(!c.flip_h && !c.flip_v);
        // centre row, right half: (0,0) and (6,0) tie; bottom-left goes first
        let c = choose_corners(GRID, AngularPos::new(3, 5)).unwrap();
        assert_eq!(c.dropped, AngularPos::new(6, 0));
        assert!(c.flip_h && !c.flip_v);
    }

    #[test]
    fn corner_target_is_rejected() {
        for k in GRID.corners() {
            assert!(matches!(
                choose_corners(GRID, k),
                Err(Error::CornerTarget { .. })
            ));
        }
    }

    #[test]
    fn normalization_roundtrips_on_all_interior_positions() {
        let interior = GRID.interior_positions();
        assert_eq!(interior.len(), 45);
        for p in interior {
            let n = GRID.normalized(p);
            assert!((-1.0..=1.0).contains(&n.0) && (-1.0..=1.0).contains(&n.1));
            assert_eq!(GRID.index_of(n), p);
        }
        assert_eq!(GRID.normalized(AngularPos::new(0, 6)), (1.0, -1.0));
        assert_eq!(GRID.normalized(AngularPos::new(3, 3)), (0.0, 0.0));
    }

    #[test]
    fn planes_are_constant() {
        let p = make_planes(&[(0.5, -0.25)], (4, 4));
        assert!(p.u.data().iter().all(|&x| x == 0.5));
        assert!(p.v.data().iter().all(|&x| x == -0.25));
        let q = make_planes(&[(0.0, 1.0)], (4, 4));
        assert_eq!(p.u.shape(), q.u.shape());
        let du: Vec<f64> = p.u.data().iter().zip(q.u.data()).map(|(a, b)| a - b).collect();
        assert!(du.iter().all(|&d| d == 0.5));
    }

    #[test]
    fn unflip_involution() {
        let img = Tensor::from_fn([1, 3, 4, 5], |_, c, y, x| (c * 100 + y * 10 + x) as f64);
        let mut c = choose_corners(GRID, AngularPos::new(1, 1)).unwrap();
        assert_eq!(unflip(&img, &c), img);
        c.flip_h = true;
        let once = unflip(&img, &c);
        assert_eq!(once.at(0, 0, 0, 0), img.at(0, 0, 0, 4));
        assert_eq!(unflip(&once, &c), img);
        c.flip_v = true;
        let rot = unflip(&img, &c);
        assert_eq!(rot.at(0, 1, 0, 0), img.at(0, 1, 3, 4));
        assert_eq!(unflip(&rot, &c), img);
    }
}

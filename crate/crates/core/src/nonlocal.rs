//! Nonlocal averaged reaction intensities: a density-weighted quadrature of
//! the perception kernel over the neighbors in each danger set.

use rayon::prelude::*;

use crate::interaction::{danger_class, indicators, phi_kernel, DangerClass, VisionParams};
use crate::meshfree::NeighborTable;
use crate::vec2::Vec2;

/// Reaction intensities per turning side; each a weighted average of kernel
/// values, hence bounded by the kernel range over the contributing pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhiPair {
    pub plus: f64,
    pub minus: f64,
}

/// Evaluate both reaction intensities for particle `i` from its neighbor list.
///
/// Degenerate pairs (coincident or co-moving) pose no resolvable collision
/// risk and are skipped rather than propagated as errors. Summation runs in
/// ascending neighbor order so results do not depend on thread count. An empty
/// danger set yields zero reaction on that side.
pub fn phi_pm_nonlocal(
    i: usize,
    pos: &[Vec2],
    dir: &[Vec2],
    rho: &[f64],
    nbrs: &[u32],
    areas: &[f64],
    p: &VisionParams,
) -> PhiPair {
    let (mut num_p, mut den_p, mut num_m, mut den_m) = (0.0, 0.0, 0.0, 0.0);
    for &j in nbrs {
        let j = j as usize;
        let ind = match indicators(pos[i], dir[i], pos[j], dir[j], p) {
            Ok(ind) => ind,
            Err(_) => continue,
        };
        let side = danger_class(&ind, p);
        if side == DangerClass::None {
            continue;
        }
        let mass = rho[j] * areas[j];
        let k = phi_kernel(ind.dba.abs(), ind.tti.abs(), p);
        match side {
            DangerClass::Plus => {
                num_p += k * mass;
                den_p += mass;
            }
            DangerClass::Minus => {
                num_m += k * mass;
                den_m += mass;
            }
            DangerClass::None => unreachable!(),
        }
    }
    PhiPair {
        plus: if den_p > 0.0 { num_p / den_p } else { 0.0 },
        minus: if den_m > 0.0 { num_m / den_m } else { 0.0 },
    }
}

/// Batch evaluation over the whole cloud. Per-particle results are independent;
/// inactive particles get zeros.
pub fn phi_pm_all(
    pos: &[Vec2],
    dir: &[Vec2],
    rho: &[f64],
    active: &[bool],
    table: &NeighborTable,
    p: &VisionParams,
) -> Vec<PhiPair> {
    (0..pos.len())
        .into_par_iter()
        .map(|i| {
            if active[i] {
                phi_pm_nonlocal(i, pos, dir, rho, &table.lists[i], &table.areas, p)
            } else {
                PhiPair::default()
            }
        })
        .collect()
}

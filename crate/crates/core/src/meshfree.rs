//! Spatial services for the moving point cloud: compactly supported Gaussian
//! weights, cell-list neighbor search, weighted-least-squares derivative
//! reconstruction and per-particle quadrature areas.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// Condition-number cutoff above which a WLS stencil is declared degenerate.
pub const WLS_COND_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WeightParams {
    /// Support radius h (m); about three initial spacings works well.
    pub h: f64,
    /// Shape constant of the Gaussian, conventionally between 2 and 6.
    pub alpha_shape: f64,
}

impl WeightParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) {
            return Err(Error::InvalidConfig("weight support h must be > 0".into()));
        }
        if !(2.0..=6.0).contains(&self.alpha_shape) {
            return Err(Error::InvalidConfig(
                "alpha_shape must lie in [2, 6]".into(),
            ));
        }
        Ok(())
    }
}

/// Gaussian weight exp(−α|r|²/h²) inside the support disc, 0 outside.
/// Discontinuous at |r| = h by definition (value exp(−α) just inside).
pub fn weight(r: Vec2, wp: &WeightParams) -> f64 {
    let r_sq = r.norm_sq();
    if r_sq <= wp.h * wp.h {
        (-wp.alpha_shape * r_sq / (wp.h * wp.h)).exp()
    } else {
        0.0
    }
}

/// Uniform background grid with cell side h; a radius-h query only needs the
/// 3×3 cell block around the query point.
pub struct NeighborGrid {
    cell: f64,
    min: Vec2,
    nx: i64,
    ny: i64,
    buckets: Vec<Vec<u32>>,
}

impl NeighborGrid {
    /// Build over the active subset of `pos`. Rebuilt every step; positions move.
    pub fn build(pos: &[Vec2], active: &[bool], h: f64) -> Self {
        assert!(h > 0.0);
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for (p, a) in pos.iter().zip(active) {
            if *a {
                any = true;
                lo.x = lo.x.min(p.x);
                lo.y = lo.y.min(p.y);
                hi.x = hi.x.max(p.x);
                hi.y = hi.y.max(p.y);
            }
        }
        if !any {
            lo = Vec2::ZERO;
            hi = Vec2::ZERO;
        }
        let nx = (((hi.x - lo.x) / h).floor() as i64 + 1).max(1);
        let ny = (((hi.y - lo.y) / h).floor() as i64 + 1).max(1);
        let mut buckets = vec![Vec::new(); (nx * ny) as usize];
        for (i, (p, a)) in pos.iter().zip(active).enumerate() {
            if *a {
                let cx = (((p.x - lo.x) / h).floor() as i64).clamp(0, nx - 1);
                let cy = (((p.y - lo.y) / h).floor() as i64).clamp(0, ny - 1);
                buckets[(cy * nx + cx) as usize].push(i as u32);
            }
        }
        NeighborGrid {
            cell: h,
            min: lo,
            nx,
            ny,
            buckets,
        }
    }

    /// Ascending indices of active particles with |x_j − center| ≤ radius,
    /// excluding `exclude` itself. `radius` must not exceed the cell side.
    pub fn query(&self, center: Vec2, radius: f64, exclude: Option<u32>, pos: &[Vec2]) -> Vec<u32> {
        debug_assert!(radius <= self.cell * (1.0 + 1e-12));
        let cx = (((center.x - self.min.x) / self.cell).floor() as i64).clamp(0, self.nx - 1);
        let cy = (((center.y - self.min.y) / self.cell).floor() as i64).clamp(0, self.ny - 1);
        let r_sq = radius * radius;
        let mut out = Vec::new();
        for gy in (cy - 1).max(0)..=(cy + 1).min(self.ny - 1) {
            for gx in (cx - 1).max(0)..=(cx + 1).min(self.nx - 1) {
                for &j in &self.buckets[(gy * self.nx + gx) as usize] {
                    if Some(j) == exclude {
                        continue;
                    }
                    if (pos[j as usize] - center).norm_sq() <= r_sq {
                        out.push(j);
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Neighbor indices of one particle with the quadrature areas of those neighbors.
#[derive(Debug, Clone)]
pub struct NeighborList {
    pub indices: Vec<u32>,
    pub quadrature_weights: Vec<f64>,
}

/// Per-particle neighbor lists plus local quadrature areas for the whole cloud.
pub struct NeighborTable {
    pub lists: Vec<Vec<u32>>,
    pub areas: Vec<f64>,
}

impl NeighborTable {
    pub fn neighbor_list(&self, i: usize) -> NeighborList {
        let indices = self.lists[i].clone();
        let quadrature_weights = indices.iter().map(|&j| self.areas[j as usize]).collect();
        NeighborList {
            indices,
            quadrature_weights,
        }
    }
}

/// Local quadrature area: the support disc split uniformly among its occupants,
/// πh²/(N+1). An isolated particle gets min(πh², cap) with cap the squared
/// initial spacing, so stragglers do not carry the whole disc as mass.
pub fn local_area(neighbor_count: usize, h: f64, isolated_cap: f64) -> f64 {
    let disc = std::f64::consts::PI * h * h;
    if neighbor_count == 0 {
        disc.min(isolated_cap)
    } else {
        disc / (neighbor_count as f64 + 1.0)
    }
}

pub fn build_neighbor_table(
    pos: &[Vec2],
    active: &[bool],
    wp: &WeightParams,
    isolated_cap: f64,
) -> NeighborTable {
    let grid = NeighborGrid::build(pos, active, wp.h);
    let mut lists = Vec::with_capacity(pos.len());
    for i in 0..pos.len() {
        if active[i] {
            lists.push(grid.query(pos[i], wp.h, Some(i as u32), pos));
        } else {
            lists.push(Vec::new());
        }
    }
    let areas = lists
        .iter()
        .zip(active)
        .map(|(l, a)| {
            if *a {
                local_area(l.len(), wp.h, isolated_cap)
            } else {
                0.0
            }
        })
        .collect();
    NeighborTable { lists, areas }
}

/// Weighted-least-squares normal equations shared by gradient and divergence.
/// Returns (a11, a12, a22) and fails on thin or under-populated stencils.
fn wls_matrix(i: usize, pos: &[Vec2], nbrs: &[u32], wp: &WeightParams) -> Result<(f64, f64, f64)> {
    if nbrs.len() < 3 {
        return Err(Error::DegenerateStencil {
            neighbors: nbrs.len(),
            condition: f64::INFINITY,
        });
    }
    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    for &j in nbrs {
        let d = pos[j as usize] - pos[i];
        let w = weight(d, wp);
        a11 += w * d.x * d.x;
        a12 += w * d.x * d.y;
        a22 += w * d.y * d.y;
    }
    let tr = a11 + a22;
    let det = a11 * a22 - a12 * a12;
    let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
    let l_max = 0.5 * (tr + disc);
    let l_min = 0.5 * (tr - disc);
    if !(l_min > 0.0) || l_max / l_min > WLS_COND_MAX {
        return Err(Error::DegenerateStencil {
            neighbors: nbrs.len(),
            condition: if l_min > 0.0 {
                l_max / l_min
            } else {
                f64::INFINITY
            },
        });
    }
    Ok((a11, a12, a22))
}

/// Derivative-reconstruction stencil at one particle: per-neighbor coefficient
/// vectors c_j with ∇f ≈ Σ_j c_j (f_j − f_i). Differencing against the center
/// value makes constants exact; the normal equations make linear fields exact.
#[derive(Debug, Clone)]
pub struct WlsStencil {
    pub indices: Vec<u32>,
    pub coefficients: Vec<Vec2>,
}

impl WlsStencil {
    pub fn build(i: usize, pos: &[Vec2], nbrs: &[u32], wp: &WeightParams) -> Result<WlsStencil> {
        let (a11, a12, a22) = wls_matrix(i, pos, nbrs, wp)?;
        let det = a11 * a22 - a12 * a12;
        let coefficients = nbrs
            .iter()
            .map(|&j| {
                let d = pos[j as usize] - pos[i];
                let w = weight(d, wp);
                Vec2::new(
                    (a22 * (w * d.x) - a12 * (w * d.y)) / det,
                    (a11 * (w * d.y) - a12 * (w * d.x)) / det,
                )
            })
            .collect();
        Ok(WlsStencil {
            indices: nbrs.to_vec(),
            coefficients,
        })
    }

    pub fn gradient(&self, i: usize, f: &[f64]) -> Vec2 {
        let mut g = Vec2::ZERO;
        for (&j, c) in self.indices.iter().zip(&self.coefficients) {
            g += *c * (f[j as usize] - f[i]);
        }
        g
    }

    /// Sum of the diagonal entries of the componentwise gradients.
    pub fn divergence(&self, i: usize, field: &[Vec2]) -> f64 {
        let mut div = 0.0;
        for (&j, c) in self.indices.iter().zip(&self.coefficients) {
            let df = field[j as usize] - field[i];
            div += c.x * df.x + c.y * df.y;
        }
        div
    }
}

/// First-order WLS gradient of a scalar field at particle `i`.
pub fn wls_gradient(
    i: usize,
    pos: &[Vec2],
    f: &[f64],
    nbrs: &[u32],
    wp: &WeightParams,
) -> Result<Vec2> {
    Ok(WlsStencil::build(i, pos, nbrs, wp)?.gradient(i, f))
}

pub fn wls_divergence(
    i: usize,
    pos: &[Vec2],
    field: &[Vec2],
    nbrs: &[u32],
    wp: &WeightParams,
) -> Result<f64> {
    Ok(WlsStencil::build(i, pos, nbrs, wp)?.divergence(i, field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn wp(h: f64) -> WeightParams {
        WeightParams {
            h,
            alpha_shape: 6.0,
        }
    }

    #[test]
    fn weight_examples() {
        let w = wp(2.0);
        assert_eq!(weight(Vec2::ZERO, &w), 1.0);
        let at_h = weight(Vec2::new(2.0, 0.0), &w);
        assert!((at_h - (-6.0f64).exp()).abs() < 1e-15);
        assert_eq!(weight(Vec2::new(2.02, 0.0), &w), 0.0);
        // radially symmetric
        let a = weight(Vec2::new(0.3, 0.4), &w);
        let b = weight(Vec2::new(0.5, 0.0), &w);
        assert!((a - b).abs() < 1e-15);
    }

    fn brute_force(pos: &[Vec2], active: &[bool], i: usize, h: f64) -> Vec<u32> {
        let mut out: Vec<u32> = (0..pos.len())
            .filter(|&j| j != i && active[j] && (pos[j] - pos[i]).norm_sq() <= h * h)
            .map(|j| j as u32)
            .collect();
        out.sort_unstable();
        out
    }

    #[test]
    fn neighbor_search_matches_brute_force() {
        let mut rng = SplitMix64::new(20240);
        for round in 0..200 {
            let n = 20 + (round % 81);
            let h = 0.5 + 2.5 * rng.next_f64();
            let pos: Vec<Vec2> = (0..n)
                .map(|_| Vec2::new(rng.f64_in(-10.0, 10.0), rng.f64_in(-10.0, 10.0)))
                .collect();
            let active: Vec<bool> = (0..n).map(|k| k % 13 != 0).collect();
            let grid = NeighborGrid::build(&pos, &active, h);
            for i in 0..n {
                if !active[i] {
                    continue;
                }
                let got = grid.query(pos[i], h, Some(i as u32), &pos);
                let want = brute_force(&pos, &active, i, h);
                assert_eq!(got, want, "round {round} particle {i}");
            }
        }
    }

    #[test]
    fn neighbor_boundary_inclusive() {
        let pos = vec![Vec2::ZERO, Vec2::new(2.0, 0.0)];
        let active = vec![true, true];
        let grid = NeighborGrid::build(&pos, &active, 2.0);
        assert_eq!(grid.query(pos[0], 2.0, Some(0), &pos), vec![1]);
        assert_eq!(grid.query(pos[1], 2.0, Some(1), &pos), vec![0]);
    }

    #[test]
    fn isolated_particle_has_no_neighbors_and_capped_area() {
        let h = 3.0 * 1.68;
        let pos = vec![Vec2::new(5.0, 5.0)];
        let table = build_neighbor_table(&pos, &[true], &wp(h), 1.68 * 1.68);
        assert!(table.lists[0].is_empty());
        assert!((table.areas[0] - 2.8224).abs() < 1e-12);
        // two particles sharing support each get half the disc
        let pos = vec![Vec2::ZERO, Vec2::new(0.1, 0.0)];
        let table = build_neighbor_table(&pos, &[true, true], &wp(h), 1.68 * 1.68);
        let half = std::f64::consts::PI * h * h / 2.0;
        assert!((table.areas[0] - half).abs() < 1e-12);
        assert!((table.areas[1] - half).abs() < 1e-12);
    }

    #[test]
    fn lattice_areas_cover_region() {
        // 20×20 unit lattice: interior quadrature areas should sum close to the
        // region they tile.
        let dx = 1.0;
        let h = 3.0 * dx;
        let mut pos = Vec::new();
        for i in 0..20 {
            for j in 0..20 {
                pos.push(Vec2::new(i as f64 * dx, j as f64 * dx));
            }
        }
        let active = vec![true; pos.len()];
        let table = build_neighbor_table(&pos, &active, &wp(h), dx * dx);
        // interior block [5,14]² ↦ 10×10 sites tiling a 10×10 area
        let mut total = 0.0;
        let mut count = 0;
        for (k, p) in pos.iter().enumerate() {
            if (5.0..=14.0).contains(&p.x) && (5.0..=14.0).contains(&p.y) {
                total += table.areas[k];
                count += 1;
            }
        }
        assert_eq!(count, 100);
        let region = 100.0 * dx * dx;
        assert!(
            (total - region).abs() / region < 0.15,
            "interior area sum {total} vs {region}"
        );
    }

    #[test]
    fn wls_linear_exactness() {
        let mut rng = SplitMix64::new(7);
        let w = wp(1.0);
        for _ in 0..100 {
            let n = 6 + (rng.next_u64() % 20) as usize;
            let mut pos = vec![Vec2::ZERO];
            for _ in 0..n {
                pos.push(Vec2::new(rng.f64_in(-0.9, 0.9), rng.f64_in(-0.9, 0.9)));
            }
            let (a, b, c) = (
                rng.f64_in(-3.0, 3.0),
                rng.f64_in(-3.0, 3.0),
                rng.f64_in(-3.0, 3.0),
            );
            let f: Vec<f64> = pos.iter().map(|p| a + b * p.x + c * p.y).collect();
            let nbrs: Vec<u32> = (1..=n as u32).collect();
            let g = match wls_gradient(0, &pos, &f, &nbrs, &w) {
                Ok(g) => g,
                Err(_) => continue, // nearly collinear draw
            };
            assert!((g.x - b).abs() < 1e-10, "{} vs {}", g.x, b);
            assert!((g.y - c).abs() < 1e-10);
            // constant field -> exactly zero
            let f0 = vec![a; pos.len()];
            let g0 = wls_gradient(0, &pos, &f0, &nbrs, &w).unwrap();
            assert_eq!(g0.x, 0.0);
            assert_eq!(g0.y, 0.0);
        }
    }

    #[test]
    fn wls_divergence_linear_fields() {
        let w = wp(1.5);
        let mut pos = vec![Vec2::new(0.2, -0.1)];
        let mut rng = SplitMix64::new(17);
        for _ in 0..12 {
            pos.push(Vec2::new(rng.f64_in(-1.0, 1.0), rng.f64_in(-1.0, 1.0)));
        }
        let nbrs: Vec<u32> = (1..=12).collect();
        let id: Vec<Vec2> = pos.clone(); // U = (x, y): div = 2
        let d = wls_divergence(0, &pos, &id, &nbrs, &w).unwrap();
        assert!((d - 2.0).abs() < 1e-10);
        let rot: Vec<Vec2> = pos.iter().map(|p| Vec2::new(p.y, -p.x)).collect();
        let d = wls_divergence(0, &pos, &rot, &nbrs, &w).unwrap();
        assert!(d.abs() < 1e-10);
        let cst: Vec<Vec2> = pos.iter().map(|_| Vec2::new(0.3, 0.7)).collect();
        let d = wls_divergence(0, &pos, &cst, &nbrs, &w).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn wls_quadratic_first_order_convergence() {
        // f = x² on a fixed stencil shape scaled by h: the gradient error at an
        // off-center point must shrink at least linearly with h.
        let shape: Vec<Vec2> = vec![
            Vec2::new(1.0, 0.1),
            Vec2::new(-0.9, 0.2),
            Vec2::new(0.3, 0.9),
            Vec2::new(-0.2, -0.8),
            Vec2::new(0.7, -0.6),
            Vec2::new(-0.6, 0.7),
        ];
        let x0 = Vec2::new(0.5, 0.3);
        let mut errs = Vec::new();
        for &h in &[0.4, 0.2] {
            let w = wp(h);
            let mut pos = vec![x0];
            for s in &shape {
                pos.push(x0 + *s * h);
            }
            let f: Vec<f64> = pos.iter().map(|p| p.x * p.x).collect();
            let nbrs: Vec<u32> = (1..=shape.len() as u32).collect();
            let g = wls_gradient(0, &pos, &f, &nbrs, &w).unwrap();
            errs.push((g.x - 2.0 * x0.x).abs());
        }
        assert!(
            errs[1] <= errs[0] / 1.8,
            "halving h should roughly halve the error: {errs:?}"
        );
    }

    #[test]
    fn stencil_coefficients_linearly_consistent() {
        // first-order consistency is Σ_j c_j ⊗ d_j = I
        let w = wp(1.2);
        let mut rng = SplitMix64::new(2024);
        for _ in 0..50 {
            let n = 5 + (rng.next_u64() % 12) as usize;
            let mut pos = vec![Vec2::new(rng.f64_in(-1.0, 1.0), rng.f64_in(-1.0, 1.0))];
            for _ in 0..n {
                pos.push(pos[0] + Vec2::new(rng.f64_in(-1.0, 1.0), rng.f64_in(-1.0, 1.0)));
            }
            let nbrs: Vec<u32> = (1..=n as u32).collect();
            let st = match WlsStencil::build(0, &pos, &nbrs, &w) {
                Ok(st) => st,
                Err(_) => continue,
            };
            let (mut m11, mut m12, mut m21, mut m22) = (0.0, 0.0, 0.0, 0.0);
            for (&j, c) in st.indices.iter().zip(&st.coefficients) {
                let d = pos[j as usize] - pos[0];
                m11 += c.x * d.x;
                m12 += c.x * d.y;
                m21 += c.y * d.x;
                m22 += c.y * d.y;
            }
            assert!((m11 - 1.0).abs() < 1e-10);
            assert!((m22 - 1.0).abs() < 1e-10);
            assert!(m12.abs() < 1e-10);
            assert!(m21.abs() < 1e-10);
            // constants are exact by the differenced form
            let f0 = vec![3.7; pos.len()];
            assert_eq!(st.gradient(0, &f0), Vec2::ZERO);
        }
    }

    #[test]
    fn wls_degenerate_stencils_error() {
        let w = wp(1.0);
        let pos = vec![Vec2::ZERO, Vec2::new(0.5, 0.0), Vec2::new(-0.5, 0.0)];
        let f = vec![0.0, 1.0, 1.0];
        assert!(matches!(
            wls_gradient(0, &pos, &f, &[1, 2], &w),
            Err(Error::DegenerateStencil { .. })
        ));
        // collinear triple
        let pos = vec![
            Vec2::ZERO,
            Vec2::new(0.2, 0.0),
            Vec2::new(0.5, 0.0),
            Vec2::new(-0.4, 0.0),
        ];
        let f = vec![0.0, 1.0, 2.0, 3.0];
        assert!(matches!(
            wls_gradient(0, &pos, &f, &[1, 2, 3], &w),
            Err(Error::DegenerateStencil { .. })
        ));
    }
}

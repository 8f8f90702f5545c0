//! First-order fast marching on a cell-centered Cartesian grid: solves
//! |∇φ| = 1/F with φ = 0 on exit cells, walls impassable. φ is the travel
//! cost to the nearest exit; its negative gradient steers the social-force
//! baseline.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    /// Lower-left corner of the covered rectangle; cell centers sit at
    /// origin + (i+0.5, j+0.5)·dx.
    pub origin: Vec2,
}

impl GridSpec {
    pub fn covering(width: f64, height: f64, dx: f64) -> Self {
        GridSpec {
            nx: (width / dx).round().max(1.0) as usize,
            ny: (height / dx).round().max(1.0) as usize,
            dx,
            origin: Vec2::ZERO,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        Vec2::new(
            self.origin.x + (i as f64 + 0.5) * self.dx,
            self.origin.y + (j as f64 + 0.5) * self.dx,
        )
    }
}

#[derive(Debug, Clone)]
pub struct EikonalField {
    pub grid: GridSpec,
    pub phi: Vec<f64>,
    /// Per-cell ∇φ (finite differences over finite neighbors, zero where undefined).
    pub grad: Vec<Vec2>,
    /// Passable cells never reached from any exit; particles there hold position.
    pub unreachable: usize,
}

/// Upwind update from the smallest accepted neighbor values per axis.
fn solve_quadrant(a: f64, b: f64, f_inv_dx: f64) -> f64 {
    match (a.is_finite(), b.is_finite()) {
        (false, false) => f64::INFINITY,
        (true, false) => a + f_inv_dx,
        (false, true) => b + f_inv_dx,
        (true, true) => {
            if (a - b).abs() >= f_inv_dx {
                a.min(b) + f_inv_dx
            } else {
                let s = 2.0 * f_inv_dx * f_inv_dx - (a - b) * (a - b);
                0.5 * (a + b + s.sqrt())
            }
        }
    }
}

/// Run the fast-marching sweep. `speed` must be positive on passable cells;
/// `wall` marks impassable ones; `exits` are seed cells with φ = 0.
///
/// Accepted values form a non-decreasing sequence (checked in debug builds),
/// which is the correctness invariant of the single-pass method.
pub fn fast_march(grid: &GridSpec, speed: &[f64], wall: &[bool], exits: &[usize]) -> EikonalField {
    assert_eq!(speed.len(), grid.len());
    assert_eq!(wall.len(), grid.len());
    let n = grid.len();
    let (nx, ny) = (grid.nx, grid.ny);
    let mut phi = vec![f64::INFINITY; n];
    // accepted values only; everything else reads as infinity
    let mut phi_acc = vec![f64::INFINITY; n];
    let mut accepted = vec![false; n];
    let f_inv: Vec<f64> = speed.iter().map(|&s| grid.dx / s).collect();
    // lazy-deletion heap keyed on the IEEE bits; φ ≥ 0 so the order matches
    let mut heap: BinaryHeap<Reverse<(u64, u32)>> = BinaryHeap::with_capacity(n);

    for &e in exits {
        if !wall[e] {
            phi[e] = 0.0;
            heap.push(Reverse((0u64, e as u32)));
        }
    }

    let mut last_accepted = 0.0f64;
    while let Some(Reverse((bits, cell))) = heap.pop() {
        let cell = cell as usize;
        if accepted[cell] || f64::from_bits(bits) > phi[cell] {
            continue;
        }
        accepted[cell] = true;
        phi_acc[cell] = phi[cell];
        debug_assert!(
            phi[cell] >= last_accepted - 1e-12,
            "fast marching acceptance order broken"
        );
        last_accepted = phi[cell];

        let i = cell % nx;
        let j = cell / nx;
        let neighbors = [
            (i.wrapping_sub(1), j),
            (i + 1, j),
            (i, j.wrapping_sub(1)),
            (i, j + 1),
        ];
        for (ni, nj) in neighbors {
            if ni >= nx || nj >= ny {
                continue;
            }
            let nb = nj * nx + ni;
            if wall[nb] || accepted[nb] {
                continue;
            }
            let west = if ni > 0 {
                phi_acc[nb - 1]
            } else {
                f64::INFINITY
            };
            let east = if ni + 1 < nx {
                phi_acc[nb + 1]
            } else {
                f64::INFINITY
            };
            let south = if nj > 0 {
                phi_acc[nb - nx]
            } else {
                f64::INFINITY
            };
            let north = if nj + 1 < ny {
                phi_acc[nb + nx]
            } else {
                f64::INFINITY
            };
            let cand = solve_quadrant(west.min(east), south.min(north), f_inv[nb]);
            if cand < phi[nb] {
                phi[nb] = cand;
                heap.push(Reverse((cand.to_bits(), nb as u32)));
            }
        }
    }

    let unreachable = (0..n).filter(|&k| !wall[k] && !phi[k].is_finite()).count();
    let grad = gradient(grid, &phi, wall);
    EikonalField {
        grid: *grid,
        phi,
        grad,
        unreachable,
    }
}

fn gradient(grid: &GridSpec, phi: &[f64], wall: &[bool]) -> Vec<Vec2> {
    let mut grad = vec![Vec2::ZERO; grid.len()];
    let value = |i: isize, j: isize| -> Option<f64> {
        if i < 0 || j < 0 || i as usize >= grid.nx || j as usize >= grid.ny {
            return None;
        }
        let k = grid.idx(i as usize, j as usize);
        (!wall[k] && phi[k].is_finite()).then_some(phi[k])
    };
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            if wall[k] || !phi[k].is_finite() {
                continue;
            }
            let (i, j) = (i as isize, j as isize);
            let here = phi[k];
            let diff = |m: Option<f64>, p: Option<f64>| match (m, p) {
                (Some(m), Some(p)) => (p - m) / (2.0 * grid.dx),
                (Some(m), None) => (here - m) / grid.dx,
                (None, Some(p)) => (p - here) / grid.dx,
                (None, None) => 0.0,
            };
            grad[k] = Vec2::new(
                diff(value(i - 1, j), value(i + 1, j)),
                diff(value(i, j - 1), value(i, j + 1)),
            );
        }
    }
    grad
}

/// Bilinear sample of a cell-centered scalar field (clamped to the grid).
pub fn sample_scalar(grid: &GridSpec, values: &[f64], pos: Vec2) -> f64 {
    let fx = ((pos.x - grid.origin.x) / grid.dx - 0.5).clamp(0.0, (grid.nx - 1) as f64);
    let fy = ((pos.y - grid.origin.y) / grid.dx - 0.5).clamp(0.0, (grid.ny - 1) as f64);
    let i0 = (fx as usize).min(grid.nx.saturating_sub(2));
    let j0 = (fy as usize).min(grid.ny.saturating_sub(2));
    let i1 = (i0 + 1).min(grid.nx - 1);
    let j1 = (j0 + 1).min(grid.ny - 1);
    let tx = (fx - i0 as f64).clamp(0.0, 1.0);
    let ty = (fy - j0 as f64).clamp(0.0, 1.0);
    let a = values[grid.idx(i0, j0)] * (1.0 - tx) + values[grid.idx(i1, j0)] * tx;
    let b = values[grid.idx(i0, j1)] * (1.0 - tx) + values[grid.idx(i1, j1)] * tx;
    a * (1.0 - ty) + b * ty
}

impl EikonalField {
    /// Bilinear sample of the gradient at a point (clamped to the grid).
    pub fn sample_grad(&self, pos: Vec2) -> Vec2 {
        let g = &self.grid;
        let fx = ((pos.x - g.origin.x) / g.dx - 0.5).clamp(0.0, (g.nx - 1) as f64);
        let fy = ((pos.y - g.origin.y) / g.dx - 0.5).clamp(0.0, (g.ny - 1) as f64);
        let i0 = (fx as usize).min(g.nx.saturating_sub(2));
        let j0 = (fy as usize).min(g.ny.saturating_sub(2));
        let i1 = (i0 + 1).min(g.nx - 1);
        let j1 = (j0 + 1).min(g.ny - 1);
        let tx = (fx - i0 as f64).clamp(0.0, 1.0);
        let ty = (fy - j0 as f64).clamp(0.0, 1.0);
        let v00 = self.grad[g.idx(i0, j0)];
        let v10 = self.grad[g.idx(i1, j0)];
        let v01 = self.grad[g.idx(i0, j1)];
        let v11 = self.grad[g.idx(i1, j1)];
        let a = v00 * (1.0 - tx) + v10 * tx;
        let b = v01 * (1.0 - tx) + v11 * tx;
        a * (1.0 - ty) + b * ty
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn empty_box(n: usize) -> (GridSpec, Vec<f64>, Vec<bool>) {
        let grid = GridSpec {
            nx: n,
            ny: n,
            dx: 10.0 / n as f64,
            origin: Vec2::ZERO,
        };
        (grid, vec![1.0; n * n], vec![false; n * n])
    }

    #[test]
    fn matches_euclidean_distance_on_empty_box() {
        let (grid, speed, wall) = empty_box(40);
        let exit = grid.idx(20, 20);
        let field = fast_march(&grid, &speed, &wall, &[exit]);
        let src = grid.center(20, 20);
        let mut max_err = 0.0f64;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let d = grid.center(i, j).distance(src);
                if d < 5.0 * grid.dx {
                    continue;
                }
                max_err = max_err.max((field.phi[grid.idx(i, j)] - d).abs());
            }
        }
        assert!(
            max_err <= 2.0 * grid.dx,
            "max error {max_err} vs allowance {}",
            2.0 * grid.dx
        );
    }

    #[test]
    fn doubling_speed_halves_travel_cost() {
        let (grid, speed, wall) = empty_box(30);
        let exit = grid.idx(3, 3);
        let f1 = fast_march(&grid, &speed, &wall, &[exit]);
        let speed2: Vec<f64> = speed.iter().map(|s| 2.0 * s).collect();
        let f2 = fast_march(&grid, &speed2, &wall, &[exit]);
        for (a, b) in f1.phi.iter().zip(&f2.phi) {
            assert!((a / 2.0 - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn refinement_shrinks_error() {
        let err_at = |n: usize| {
            let (grid, speed, wall) = empty_box(n);
            let exit = grid.idx(n / 2, n / 2);
            let field = fast_march(&grid, &speed, &wall, &[exit]);
            let src = grid.center(n / 2, n / 2);
            let mut max_err = 0.0f64;
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let d = grid.center(i, j).distance(src);
                    if d < 5.0 * grid.dx {
                        continue;
                    }
                    max_err = max_err.max((field.phi[grid.idx(i, j)] - d).abs());
                }
            }
            max_err
        };
        let coarse = err_at(40);
        let fine = err_at(80);
        assert!(
            coarse / fine >= 1.5,
            "refinement ratio {} (coarse {coarse}, fine {fine})",
            coarse / fine
        );
    }

    #[test]
    fn walled_pocket_is_unreachable() {
        let (grid, speed, mut wall) = empty_box(20);
        // box around cells (5..=7, 5..=7)
        for i in 4..=8 {
            for j in 4..=8 {
                let inner = (5..=7).contains(&i) && (5..=7).contains(&j);
                if !inner {
                    wall[grid.idx(i, j)] = true;
                }
            }
        }
        let field = fast_march(&grid, &speed, &wall, &[grid.idx(15, 15)]);
        assert_eq!(field.unreachable, 9);
        assert!(!field.phi[grid.idx(6, 6)].is_finite());
        assert_eq!(field.grad[grid.idx(6, 6)], Vec2::ZERO);
    }

    #[test]
    fn gradient_points_away_from_exit() {
        let (grid, speed, wall) = empty_box(30);
        let exit = grid.idx(0, 15);
        let field = fast_march(&grid, &speed, &wall, &[exit]);
        // well inside, φ grows away from the exit: ∇φ·(cell − exit) > 0
        let src = grid.center(0, 15);
        let p = grid.center(20, 15);
        let g = field.sample_grad(p);
        assert!(g.dot(p - src) > 0.0);
    }
}

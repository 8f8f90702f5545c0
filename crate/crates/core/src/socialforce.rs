//! Social-force baseline with an Eikonal steering field.
//!
//! Unlike the vision model, these particles own a full velocity: they relax
//! toward a desired velocity of magnitude u_max directed along −∇φ, where the
//! travel cost φ solves |∇φ| = 1/F(ρ) and is re-solved on every step from the
//! current density — that re-solve dominates the runtime and is the point of
//! the cost comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Domain, Side, RHO_MIN};
use crate::eikonal::{fast_march, sample_scalar, EikonalField, GridSpec};
use crate::error::Result;
use crate::meshfree::{build_neighbor_table, wls_divergence, NeighborTable, WeightParams};
use crate::vec2::Vec2;

/// Transient overshoot allowed on the speed cap.
pub const SPEED_CAP_MARGIN: f64 = 1.05;
/// Relative floor of the density-dependent walking speed keeping the Eikonal
/// problem well posed in jammed regions.
pub const SPEED_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SocialForceParams {
    pub k_n: f64,
    pub gamma_n: f64,
    pub gamma_t: f64,
    /// Relaxation time toward the desired velocity (s).
    pub relaxation_t: f64,
    pub u_max: f64,
    /// Density at which walking speed degrades to the floor (1/m²).
    pub rho_max: f64,
    /// Eikonal grid spacing (m).
    pub grid_dx: f64,
    pub contact_radius: f64,
}

impl Default for SocialForceParams {
    fn default() -> Self {
        SocialForceParams {
            k_n: 100.0,
            gamma_n: 1.0,
            gamma_t: 0.2,
            relaxation_t: 0.001,
            u_max: 1.5,
            rho_max: 6.0,
            grid_dx: 0.25,
            contact_radius: 1.68,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SfParticle {
    pub pos: Vec2,
    pub vel: Vec2,
    pub rho: f64,
    pub group: usize,
    pub active: bool,
}

#[derive(Debug, Clone)]
pub struct SfWorld {
    pub particles: Vec<SfParticle>,
    pub exit_times: Vec<Option<f64>>,
    pub t: f64,
    pub n_initial: usize,
}

impl SfWorld {
    pub fn new(particles: Vec<SfParticle>) -> Self {
        let n = particles.len();
        SfWorld {
            particles,
            exit_times: vec![None; n],
            t: 0.0,
            n_initial: n,
        }
    }

    pub fn active_count(&self) -> usize {
        self.particles.iter().filter(|p| p.active).count()
    }
}

/// Density-degraded walking speed F(ρ) = u_max·max(floor, 1 − ρ/ρ_max).
pub fn density_speed(rho: f64, p: &SocialForceParams) -> f64 {
    p.u_max * (1.0 - rho / p.rho_max).max(SPEED_FLOOR)
}

/// Shepard transfer of the particle density onto the Eikonal grid cells;
/// cells seeing no particle mass get zero (free walking speed). Serial
/// particle-major scatter: far fewer particles than cells, and the fixed
/// particle order keeps the sums thread-count independent.
pub fn density_to_grid(world: &SfWorld, grid: &GridSpec, wp: &WeightParams) -> Vec<f64> {
    let mut num = vec![0.0; grid.len()];
    let mut den = vec![0.0; grid.len()];
    let h = wp.h;
    let h_sq = h * h;
    for p in world.particles.iter().filter(|p| p.active) {
        let i_lo = (((p.pos.x - grid.origin.x - h) / grid.dx - 0.5).floor()).max(0.0) as usize;
        let j_lo = (((p.pos.y - grid.origin.y - h) / grid.dx - 0.5).floor()).max(0.0) as usize;
        let i_hi = ((((p.pos.x - grid.origin.x + h) / grid.dx - 0.5).ceil()) as usize)
            .min(grid.nx.saturating_sub(1));
        let j_hi = ((((p.pos.y - grid.origin.y + h) / grid.dx - 0.5).ceil()) as usize)
            .min(grid.ny.saturating_sub(1));
        // the Gaussian factorizes over axes: one exp per row/column instead
        // of one per cell
        let alpha_over_h_sq = wp.alpha_shape / h_sq;
        let ex: Vec<f64> = (i_lo..=i_hi)
            .map(|i| {
                let dx = grid.center(i, 0).x - p.pos.x;
                (-alpha_over_h_sq * dx * dx).exp()
            })
            .collect();
        let ey: Vec<f64> = (j_lo..=j_hi)
            .map(|j| {
                let dy = grid.center(0, j).y - p.pos.y;
                (-alpha_over_h_sq * dy * dy).exp()
            })
            .collect();
        for j in j_lo..=j_hi {
            let dy = grid.center(0, j).y - p.pos.y;
            for i in i_lo..=i_hi {
                let dx = grid.center(i, 0).x - p.pos.x;
                if dx * dx + dy * dy <= h_sq {
                    let w = ex[i - i_lo] * ey[j - j_lo];
                    let k = grid.idx(i, j);
                    num[k] += w * p.rho;
                    den[k] += w;
                }
            }
        }
    }
    num.iter()
        .zip(&den)
        .map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 })
        .collect()
}

/// Exit seed cells for one group: the boundary-adjacent cells of its segment.
pub fn exit_cells(grid: &GridSpec, domain: &Domain, group: usize) -> Vec<usize> {
    let mut cells = Vec::new();
    for exit in domain.exits.iter().filter(|e| e.group == group) {
        match exit.side {
            Side::Right | Side::Left => {
                let i = if exit.side == Side::Right {
                    grid.nx - 1
                } else {
                    0
                };
                for j in 0..grid.ny {
                    let y = grid.center(i, j).y;
                    if y >= exit.lo && y <= exit.hi {
                        cells.push(grid.idx(i, j));
                    }
                }
            }
            Side::Top | Side::Bottom => {
                let j = if exit.side == Side::Top {
                    grid.ny - 1
                } else {
                    0
                };
                for i in 0..grid.nx {
                    let x = grid.center(i, j).x;
                    if x >= exit.lo && x <= exit.hi {
                        cells.push(grid.idx(i, j));
                    }
                }
            }
        }
    }
    cells
}

/// The per-group travel-cost fields plus the shared walking-speed grid they
/// were solved on.
pub struct SteeringFields {
    pub fields: Vec<EikonalField>,
    pub speed: Vec<f64>,
    pub grid: GridSpec,
}

/// One Eikonal field per goal group from the current density.
pub fn solve_fields(
    world: &SfWorld,
    params: &SocialForceParams,
    domain: &Domain,
    grid: &GridSpec,
    wp: &WeightParams,
    n_groups: usize,
) -> SteeringFields {
    let rho_grid = density_to_grid(world, grid, wp);
    let speed: Vec<f64> = rho_grid.iter().map(|&r| density_speed(r, params)).collect();
    let wall = vec![false; grid.len()];
    let fields = (0..n_groups)
        .into_par_iter()
        .map(|g| fast_march(grid, &speed, &wall, &exit_cells(grid, domain, g)))
        .collect();
    SteeringFields {
        fields,
        speed,
        grid: *grid,
    }
}

struct SfUpdate {
    pos: Vec2,
    vel: Vec2,
    rho: f64,
}

/// One explicit Euler step of the social-force dynamics.
///
/// The desired velocity follows the steepest descent of the group's travel
/// cost at the density-degraded walking speed: congestion slows the crowd
/// directly, not only through rerouting.
pub fn sf_step(
    world: &mut SfWorld,
    params: &SocialForceParams,
    steering: &SteeringFields,
    wp: &WeightParams,
    isolated_cap: f64,
    dt: f64,
    domain: &Domain,
) -> Result<()> {
    let pos: Vec<Vec2> = world.particles.iter().map(|p| p.pos).collect();
    let vel: Vec<Vec2> = world.particles.iter().map(|p| p.vel).collect();
    let active: Vec<bool> = world.particles.iter().map(|p| p.active).collect();
    let table: NeighborTable = build_neighbor_table(&pos, &active, wp, isolated_cap);

    let updates: Vec<Option<SfUpdate>> = (0..pos.len())
        .into_par_iter()
        .map(|i| {
            if !active[i] {
                return None;
            }
            let p = world.particles[i];
            let g = steering.fields[p.group].sample_grad(p.pos);
            let walk = sample_scalar(&steering.grid, &steering.speed, p.pos);
            let v_des = match (-g).normalized() {
                Some(u) => u * walk,
                None => Vec2::ZERO, // unreachable pocket or flat field: hold
            };
            let mut acc = (v_des - p.vel) * (1.0 / params.relaxation_t);
            acc += contact_force(i, &table.lists[i], &pos, &vel, params);
            let mut new_vel = p.vel + acc * dt;
            let cap = params.u_max * SPEED_CAP_MARGIN;
            if new_vel.norm() > cap {
                new_vel = new_vel.normalized().unwrap() * cap;
            }
            let new_pos = p.pos + new_vel * dt;
            let div = wls_divergence(i, &pos, &vel, &table.lists[i], wp).unwrap_or(0.0);
            let new_rho = (p.rho * (1.0 - dt * div)).max(RHO_MIN);
            Some(SfUpdate {
                pos: new_pos,
                vel: new_vel,
                rho: new_rho,
            })
        })
        .collect();

    let t_new = world.t + dt;
    for (i, up) in updates.into_iter().enumerate() {
        let Some(up) = up else { continue };
        let p = &mut world.particles[i];
        p.pos = up.pos;
        p.vel = up.vel;
        p.rho = up.rho;
        if sf_boundaries(p, domain) {
            world.exit_times[i] = Some(t_new);
        }
    }
    world.t = t_new;
    Ok(())
}

/// Contact force with the same functional form as the vision model's
/// repulsion, acting on actual velocity differences.
fn contact_force(
    i: usize,
    nbrs: &[u32],
    pos: &[Vec2],
    vel: &[Vec2],
    p: &SocialForceParams,
) -> Vec2 {
    let mut f = Vec2::ZERO;
    for &j in nbrs {
        let j = j as usize;
        let d = pos[i] - pos[j];
        let dist = d.norm();
        if dist >= p.contact_radius {
            continue;
        }
        let n = if dist > 0.0 {
            d * (1.0 / dist)
        } else if i < j {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::new(-1.0, 0.0)
        };
        let overlap = p.contact_radius - dist;
        let dv = vel[i] - vel[j];
        let t = n.perp();
        f += n * (p.k_n * overlap - p.gamma_n * dv.dot(n)) - t * (p.gamma_t * dv.dot(t));
    }
    f
}

/// Wall slide on the velocity (the speed may drop at walls) and own-exit test.
fn sf_boundaries(p: &mut SfParticle, domain: &Domain) -> bool {
    if !domain.walls {
        return false;
    }
    for exit in &domain.exits {
        if exit.group != p.group {
            continue;
        }
        let out = match exit.side {
            Side::Right => p.pos.x >= domain.width && (exit.lo..=exit.hi).contains(&p.pos.y),
            Side::Left => p.pos.x <= 0.0 && (exit.lo..=exit.hi).contains(&p.pos.y),
            Side::Top => p.pos.y >= domain.height && (exit.lo..=exit.hi).contains(&p.pos.x),
            Side::Bottom => p.pos.y <= 0.0 && (exit.lo..=exit.hi).contains(&p.pos.x),
        };
        if out {
            p.active = false;
            return true;
        }
    }
    if p.pos.x < 0.0 {
        p.pos.x = 0.0;
        p.vel.x = p.vel.x.max(0.0);
    } else if p.pos.x > domain.width {
        p.pos.x = domain.width;
        p.vel.x = p.vel.x.min(0.0);
    }
    if p.pos.y < 0.0 {
        p.pos.y = 0.0;
        p.vel.y = p.vel.y.max(0.0);
    } else if p.pos.y > domain.height {
        p.pos.y = domain.height;
        p.vel.y = p.vel.y.min(0.0);
    }
    false
}

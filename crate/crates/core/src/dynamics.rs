//! Lagrangian time integration: particles carry position, unit heading and
//! density along their trajectories. Each step evaluates the angular-velocity
//! decision per particle from a read-only snapshot, then commits all updates
//! and applies walls and exits. Explicit Euler is the reference stepper; a
//! Heun variant sits behind the same contract.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interaction::{angular_velocity, goal_bearing_rate, VisionParams};
use crate::local::{phi_pm_local, PsiTable};
use crate::meshfree::{build_neighbor_table, wls_divergence, NeighborTable, WeightParams};
use crate::nonlocal::{phi_pm_all, PhiPair};
use crate::vec2::Vec2;

/// Density floor preventing sign flips from large local divergence on ragged
/// evacuation fronts.
pub const RHO_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy)]
pub struct Particle {
    pub pos: Vec2,
    /// Unit heading; the walking speed multiplies it wherever velocity is needed.
    pub dir: Vec2,
    /// Density carried along the trajectory (1/m²).
    pub rho: f64,
    pub group: usize,
    pub active: bool,
    /// Set once a derivative fell back to zero on a degenerate stencil.
    pub degenerate_stencil: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Steer to the goal when the deviation is large, otherwise hold course.
    NoDirectionControl,
    /// Full pairwise evaluation of the reaction intensities.
    VisionNonlocal,
    /// One-point evaluation through the precomputed kernel table.
    VisionLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Euler,
    Heun,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RepulsionParams {
    pub k_n: f64,
    pub gamma_n: f64,
    pub gamma_t: f64,
    pub contact_radius: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct StepConfig {
    pub dt: f64,
    pub mode: Mode,
    pub repulsion: Option<RepulsionParams>,
    pub integrator: Integrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Boundary segment a given group may leave through. Everything else on the
/// boundary is a wall for everyone, including the other group's exit.
#[derive(Debug, Clone, Copy)]
pub struct ExitSegment {
    pub group: usize,
    pub side: Side,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone)]
pub struct Domain {
    pub width: f64,
    pub height: f64,
    pub exits: Vec<ExitSegment>,
    /// Disable for free-space tests; exits are only meaningful with walls.
    pub walls: bool,
}

impl Domain {
    pub fn unbounded() -> Self {
        Domain {
            width: f64::INFINITY,
            height: f64::INFINITY,
            exits: Vec::new(),
            walls: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub particles: Vec<Particle>,
    pub exit_times: Vec<Option<f64>>,
    pub t: f64,
    pub n_initial: usize,
}

impl World {
    pub fn new(particles: Vec<Particle>) -> Self {
        let n = particles.len();
        World {
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

/// Fraction of the initial crowd still inside the domain.
pub fn evacuation_ratio(world: &World) -> f64 {
    if world.n_initial == 0 {
        return 0.0;
    }
    world.active_count() as f64 / world.n_initial as f64
}

/// Everything a step reads besides the particle state.
pub struct StepContext<'a> {
    pub vision: &'a VisionParams,
    pub weights: &'a WeightParams,
    /// Area cap for isolated particles (squared initial spacing).
    pub isolated_cap: f64,
    pub goals: &'a [Vec2],
    pub domain: &'a Domain,
    pub psi: Option<&'a PsiTable>,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct StepDiag {
    pub degenerate_stencils: usize,
}

struct Snapshot {
    pos: Vec<Vec2>,
    dir: Vec<Vec2>,
    rho: Vec<f64>,
    group: Vec<usize>,
    active: Vec<bool>,
}

impl Snapshot {
    fn take(world: &World) -> Self {
        Snapshot {
            pos: world.particles.iter().map(|p| p.pos).collect(),
            dir: world.particles.iter().map(|p| p.dir).collect(),
            rho: world.particles.iter().map(|p| p.rho).collect(),
            group: world.particles.iter().map(|p| p.group).collect(),
            active: world.particles.iter().map(|p| p.active).collect(),
        }
    }
}

fn reaction_intensities(
    snap: &Snapshot,
    table: &NeighborTable,
    cfg: &StepConfig,
    ctx: &StepContext,
) -> Vec<PhiPair> {
    match cfg.mode {
        Mode::NoDirectionControl => vec![PhiPair::default(); snap.pos.len()],
        Mode::VisionNonlocal => phi_pm_all(
            &snap.pos,
            &snap.dir,
            &snap.rho,
            &snap.active,
            table,
            ctx.vision,
        ),
        Mode::VisionLocal => {
            let psi = ctx
                .psi
                .expect("VisionLocal requires a built psi table; validated at config load");
            let n_groups = ctx.goals.len();
            (0..snap.pos.len())
                .into_par_iter()
                .map(|i| {
                    if snap.active[i] {
                        phi_pm_local(
                            i,
                            &snap.pos,
                            &snap.dir,
                            &snap.rho,
                            &snap.group,
                            &table.lists[i],
                            ctx.weights,
                            psi,
                            n_groups,
                        )
                    } else {
                        PhiPair::default()
                    }
                })
                .collect()
        }
    }
}

#[derive(Clone, Copy)]
struct Update {
    dir: Vec2,
    pos: Vec2,
    rho: f64,
    omega: f64,
    repulse: Vec2,
    div: f64,
    degenerate: bool,
}

/// Per-particle derivative evaluation and tentative Euler update.
fn evaluate(
    i: usize,
    snap: &Snapshot,
    table: &NeighborTable,
    phis: &[PhiPair],
    cfg: &StepConfig,
    ctx: &StepContext,
) -> Update {
    let c = ctx.vision.speed_c;
    let dt = cfg.dt;
    let alpha_g = goal_bearing_rate(
        snap.pos[i],
        snap.dir[i],
        ctx.goals[snap.group[i]],
        ctx.vision,
    )
    .unwrap_or(0.0);
    let decision = angular_velocity(phis[i].plus, phis[i].minus, alpha_g);

    // Exact rotation keeps |dir| = 1 by construction; renormalize anyway to
    // absorb accumulated rounding.
    let rotated = snap.dir[i].rotated(decision.omega * dt);
    let mut new_dir = rotated.normalized().unwrap_or(snap.dir[i]);

    let mut repulse = Vec2::ZERO;
    if let Some(rp) = &cfg.repulsion {
        repulse = contact_repulsion(i, &table.lists[i], &snap.pos, &snap.dir, c, rp);
        // The model has no speed degree of freedom: the contact impulse only
        // perturbs the heading, the speed stays at c.
        let v = new_dir * c + repulse * dt;
        if let Some(u) = v.normalized() {
            new_dir = u;
        }
    }

    let new_pos = snap.pos[i] + new_dir * (c * dt);

    let (div, degenerate) =
        match wls_divergence(i, &snap.pos, &snap.dir, &table.lists[i], ctx.weights) {
            Ok(d) => (d, false),
            Err(_) => (0.0, true),
        };
    let new_rho = (snap.rho[i] * (1.0 - c * dt * div)).max(RHO_MIN);

    Update {
        dir: new_dir,
        pos: new_pos,
        rho: new_rho,
        omega: decision.omega,
        repulse,
        div,
        degenerate,
    }
}

/// Pairwise contact force on particle `i`: a linear spring on the overlap with
/// normal and tangential damping on the relative velocity c(u_i − u_j).
/// Antisymmetric over each pair; coincident particles get a deterministic
/// index-ordered push.
pub fn contact_repulsion(
    i: usize,
    nbrs: &[u32],
    pos: &[Vec2],
    dir: &[Vec2],
    speed_c: f64,
    rp: &RepulsionParams,
) -> Vec2 {
    let mut f = Vec2::ZERO;
    for &j in nbrs {
        let j = j as usize;
        let d = pos[i] - pos[j];
        let dist = d.norm();
        if dist >= rp.contact_radius {
            continue;
        }
        let n = if dist > 0.0 {
            d * (1.0 / dist)
        } else if i < j {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::new(-1.0, 0.0)
        };
        let overlap = rp.contact_radius - dist;
        let dv = (dir[i] - dir[j]) * speed_c;
        let t = n.perp();
        f += n * (rp.k_n * overlap - rp.gamma_n * dv.dot(n)) - t * (rp.gamma_t * dv.dot(t));
    }
    f
}

/// Wall and exit handling for one particle. Returns the evacuation flag.
///
/// A particle beyond its own group's exit segment leaves the simulation.
/// Every other boundary crossing projects the position back and removes the
/// outward heading component (slide). A pure head-on wall impact picks the
/// tangential direction pointing toward the goal.
pub fn apply_boundaries(p: &mut Particle, domain: &Domain, goal: Vec2) -> bool {
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

    let mut d = p.dir;
    let mut hit_x = false;
    let mut hit_y = false;
    if p.pos.x < 0.0 {
        p.pos.x = 0.0;
        if d.x < 0.0 {
            d.x = 0.0;
            hit_x = true;
        }
    } else if p.pos.x > domain.width {
        p.pos.x = domain.width;
        if d.x > 0.0 {
            d.x = 0.0;
            hit_x = true;
        }
    }
    if p.pos.y < 0.0 {
        p.pos.y = 0.0;
        if d.y < 0.0 {
            d.y = 0.0;
            hit_y = true;
        }
    } else if p.pos.y > domain.height {
        p.pos.y = domain.height;
        if d.y > 0.0 {
            d.y = 0.0;
            hit_y = true;
        }
    }
    if hit_x || hit_y {
        p.dir = match d.normalized() {
            Some(u) => u,
            None => {
                // head-on impact: slide toward the goal along the wall
                let to_goal = goal - p.pos;
                if hit_x {
                    Vec2::new(0.0, if to_goal.y < 0.0 { -1.0 } else { 1.0 })
                } else {
                    Vec2::new(if to_goal.x < 0.0 { -1.0 } else { 1.0 }, 0.0)
                }
            }
        };
    }
    false
}

fn commit(
    world: &mut World,
    updates: &[Option<Update>],
    ctx: &StepContext,
    t_new: f64,
) -> StepDiag {
    let mut diag = StepDiag::default();
    for (i, up) in updates.iter().enumerate() {
        let Some(up) = up else { continue };
        let p = &mut world.particles[i];
        p.dir = up.dir;
        p.pos = up.pos;
        p.rho = up.rho;
        if up.degenerate {
            p.degenerate_stencil = true;
            diag.degenerate_stencils += 1;
        }
        if apply_boundaries(p, ctx.domain, ctx.goals[p.group]) {
            world.exit_times[i] = Some(t_new);
        }
    }
    world.t = t_new;
    diag
}

/// Advance the crowd by one time step.
pub fn step(world: &mut World, cfg: &StepConfig, ctx: &StepContext) -> Result<StepDiag> {
    let c = ctx.vision.speed_c;
    if c * cfg.dt > ctx.weights.h {
        return Err(Error::UnstableStep {
            particle: 0,
            moved: c * cfg.dt,
            h: ctx.weights.h,
        });
    }
    let snap = Snapshot::take(world);
    let table = build_neighbor_table(&snap.pos, &snap.active, ctx.weights, ctx.isolated_cap);
    let phis = reaction_intensities(&snap, &table, cfg, ctx);
    let updates: Vec<Option<Update>> = (0..snap.pos.len())
        .into_par_iter()
        .map(|i| snap.active[i].then(|| evaluate(i, &snap, &table, &phis, cfg, ctx)))
        .collect();

    match cfg.integrator {
        Integrator::Euler => Ok(commit(world, &updates, ctx, world.t + cfg.dt)),
        Integrator::Heun => heun_correct(world, cfg, ctx, &snap, updates),
    }
}

/// Heun corrector: re-evaluate the derivatives at the Euler predictor and
/// average rotation rate, effective velocity and divergence.
fn heun_correct(
    world: &mut World,
    cfg: &StepConfig,
    ctx: &StepContext,
    snap0: &Snapshot,
    stage1: Vec<Option<Update>>,
) -> Result<StepDiag> {
    let c = ctx.vision.speed_c;
    let dt = cfg.dt;
    let n = snap0.pos.len();
    let snap1 = Snapshot {
        pos: (0..n)
            .map(|i| stage1[i].map_or(snap0.pos[i], |u| u.pos))
            .collect(),
        dir: (0..n)
            .map(|i| stage1[i].map_or(snap0.dir[i], |u| u.dir))
            .collect(),
        rho: (0..n)
            .map(|i| stage1[i].map_or(snap0.rho[i], |u| u.rho))
            .collect(),
        group: snap0.group.clone(),
        active: snap0.active.clone(),
    };
    let table1 = build_neighbor_table(&snap1.pos, &snap1.active, ctx.weights, ctx.isolated_cap);
    let phis1 = reaction_intensities(&snap1, &table1, cfg, ctx);
    let stage2: Vec<Option<Update>> = (0..n)
        .into_par_iter()
        .map(|i| snap1.active[i].then(|| evaluate(i, &snap1, &table1, &phis1, cfg, ctx)))
        .collect();

    let combined: Vec<Option<Update>> = (0..n)
        .map(|i| match (stage1[i], stage2[i]) {
            (Some(u1), Some(u2)) => {
                let omega = 0.5 * (u1.omega + u2.omega);
                let mut dir = snap0.dir[i]
                    .rotated(omega * dt)
                    .normalized()
                    .unwrap_or(snap0.dir[i]);
                if cfg.repulsion.is_some() {
                    let v = dir * c + (u1.repulse + u2.repulse) * (0.5 * dt);
                    if let Some(u) = v.normalized() {
                        dir = u;
                    }
                }
                // trapezoid on dx/dt = cU: derivative at the initial state and
                // at the predictor state (u1.dir is the predictor's heading)
                let pos = snap0.pos[i] + (snap0.dir[i] + u1.dir) * (0.5 * c * dt);
                let div = 0.5 * (u1.div + u2.div);
                let rho = (snap0.rho[i] * (1.0 - c * dt * div)).max(RHO_MIN);
                Some(Update {
                    dir,
                    pos,
                    rho,
                    omega,
                    repulse: Vec2::ZERO,
                    div,
                    degenerate: u1.degenerate || u2.degenerate,
                })
            }
            _ => None,
        })
        .collect();
    Ok(commit(world, &combined, ctx, world.t + dt))
}

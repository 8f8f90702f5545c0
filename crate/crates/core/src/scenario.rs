//! Corridor geometry and deterministic particle seeding.
//!
//! The default scenario is a 50×20 m corridor with a 10 m exit centered on
//! each end wall. Group 0 seeds at the left wall and leaves right, group 1
//! mirrored. Each group fills a band adjacent to its entrance, either on a
//! lattice or uniformly at random; row placement is symmetric about the
//! corridor midline with a half-spacing offset, so no particle starts exactly
//! on it.

use serde::{Deserialize, Serialize};

use crate::dynamics::{Domain, ExitSegment, Particle, Side, World};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::socialforce::{SfParticle, SfWorld};
use crate::vec2::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Seeding {
    Lattice,
    UniformRandom,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub width: f64,
    pub height: f64,
    pub exit_width: f64,
    pub count_per_group: Vec<usize>,
    pub initial_spacing: f64,
    pub seeding: Seeding,
    pub seed: u64,
    /// Depth of the seeded band along the walking direction; by default just
    /// deep enough to hold the requested count at the requested spacing.
    pub band_depth: Option<f64>,
    /// Uniform initial density; defaults to 1/spacing² (one pedestrian per cell).
    pub initial_rho: Option<f64>,
    /// No exits, walls all around (test box scenarios).
    #[serde(default)]
    pub closed: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            width: 50.0,
            height: 20.0,
            exit_width: 10.0,
            count_per_group: vec![40, 40],
            initial_spacing: 1.68,
            seeding: Seeding::Lattice,
            seed: 1,
            band_depth: None,
            initial_rho: None,
            closed: false,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.count_per_group.is_empty() || self.count_per_group.contains(&0) {
            return Err(Error::InvalidConfig("group counts must be positive".into()));
        }
        if self.count_per_group.len() > 2 {
            return Err(Error::InvalidConfig(
                "the corridor scenario supports one or two groups".into(),
            ));
        }
        if !(self.initial_spacing > 0.0) {
            return Err(Error::InvalidConfig("initial_spacing must be > 0".into()));
        }
        if !(self.exit_width > 0.0 && self.exit_width <= self.height) {
            return Err(Error::InvalidConfig(
                "exit_width must be positive and fit the wall".into(),
            ));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(Error::InvalidConfig(
                "domain must have positive size".into(),
            ));
        }
        Ok(())
    }

    pub fn n_groups(&self) -> usize {
        self.count_per_group.len()
    }

    pub fn domain(&self) -> Domain {
        let lo = (self.height - self.exit_width) / 2.0;
        let hi = lo + self.exit_width;
        let exits = if self.closed {
            Vec::new()
        } else {
            let mut v = vec![ExitSegment {
                group: 0,
                side: Side::Right,
                lo,
                hi,
            }];
            if self.n_groups() > 1 {
                v.push(ExitSegment {
                    group: 1,
                    side: Side::Left,
                    lo,
                    hi,
                });
            }
            v
        };
        Domain {
            width: self.width,
            height: self.height,
            exits,
            walls: true,
        }
    }

    /// Goal points: the middle of each group's exit, just like the classic
    /// corridor setup (50,10) and (0,10).
    pub fn goals(&self) -> Vec<Vec2> {
        let cy = self.height / 2.0;
        let mut g = vec![Vec2::new(self.width, cy)];
        if self.n_groups() > 1 {
            g.push(Vec2::new(0.0, cy));
        }
        g
    }

    pub fn rho0(&self) -> f64 {
        self.initial_rho
            .unwrap_or(1.0 / (self.initial_spacing * self.initial_spacing))
    }

    /// Even row count centered on the midline with a half-spacing offset.
    fn lattice_rows(&self) -> usize {
        let fit = (self.exit_width / self.initial_spacing).floor() as usize;
        (fit - fit % 2).max(2)
    }

    fn band_cols(&self, count: usize, rows: usize) -> usize {
        count.div_ceil(rows)
    }

    fn band_depth_for(&self, count: usize, rows: usize) -> f64 {
        self.band_depth
            .unwrap_or(self.band_cols(count, rows) as f64 * self.initial_spacing)
    }
}

/// Row y-coordinates: `rows` values symmetric about the midline, spaced by the
/// lattice constant, never exactly on the midline (even count, half offset).
fn row_ys(sc: &Scenario, rows: usize) -> Vec<f64> {
    let cy = sc.height / 2.0;
    (0..rows)
        .map(|r| cy + (r as f64 - (rows as f64 - 1.0) / 2.0) * sc.initial_spacing)
        .collect()
}

/// Deterministic initial state for the vision model.
pub fn seed_particles(sc: &Scenario) -> Result<World> {
    sc.validate()?;
    let rows = sc.lattice_rows();
    let rho = sc.rho0();
    let goals = sc.goals();
    let mut particles = Vec::new();
    let mut rng = SplitMix64::new(sc.seed);

    for (g, &count) in sc.count_per_group.iter().enumerate() {
        let depth = sc.band_depth_for(count, rows);
        let max_cols = (depth / sc.initial_spacing).floor() as usize;
        if rows * max_cols < count {
            return Err(Error::Overfull {
                requested: count,
                capacity: rows * max_cols,
                spacing: sc.initial_spacing,
            });
        }
        if depth > sc.width / 2.0 {
            return Err(Error::InvalidConfig(format!(
                "seed band depth {depth} reaches past the corridor middle"
            )));
        }
        let ys = row_ys(sc, rows);
        let place = |x_off: f64, y: f64| -> Vec2 {
            match g {
                0 => Vec2::new(x_off, y),
                _ => Vec2::new(sc.width - x_off, y),
            }
        };
        let mut placed = 0usize;
        match sc.seeding {
            Seeding::Lattice => {
                'cols: for col in 0..max_cols {
                    let x_off = (col as f64 + 0.5) * sc.initial_spacing;
                    for &y in &ys {
                        if placed == count {
                            break 'cols;
                        }
                        let pos = place(x_off, y);
                        let dir = (goals[g] - pos).normalized().unwrap();
                        particles.push(Particle {
                            pos,
                            dir,
                            rho,
                            group: g,
                            active: true,
                            degenerate_stencil: false,
                        });
                        placed += 1;
                    }
                }
            }
            Seeding::UniformRandom => {
                let y_lo = (sc.height - sc.exit_width) / 2.0;
                while placed < count {
                    let x_off = rng.f64_in(0.0, depth);
                    let y = rng.f64_in(y_lo, y_lo + sc.exit_width);
                    let pos = place(x_off, y);
                    let dir = match (goals[g] - pos).normalized() {
                        Some(d) => d,
                        None => continue,
                    };
                    particles.push(Particle {
                        pos,
                        dir,
                        rho,
                        group: g,
                        active: true,
                        degenerate_stencil: false,
                    });
                    placed += 1;
                }
            }
        }
    }
    Ok(World::new(particles))
}

/// Same seeding for the social-force baseline; particles start at rest.
pub fn seed_sf_particles(sc: &Scenario) -> Result<SfWorld> {
    let world = seed_particles(sc)?;
    Ok(SfWorld::new(
        world
            .particles
            .iter()
            .map(|p| SfParticle {
                pos: p.pos,
                vel: Vec2::ZERO,
                rho: p.rho,
                group: p.group,
                active: true,
            })
            .collect(),
    ))
}

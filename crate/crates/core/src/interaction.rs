//! Per-pair collision-risk indicators, the perception kernels, and the
//! angular-velocity decision rule.
//!
//! A pedestrian at `x` heading along the unit direction `u` senses, for each
//! partner at `y` heading along `v`, three quantities derived from the relative
//! velocity `W = c(v − u)`:
//!
//! * bearing rate `dba = (y−x)×W / |y−x|²`  — how fast the line of sight turns;
//!   near zero means a steady bearing, i.e. a collision course,
//! * time to interaction `tti = −(y−x)·W / |W|²` — time of closest approach,
//! * miss distance `md` — predicted separation at closest approach.
//!
//! Partners that are approaching (`tti > 0`), will pass close (`md < R`) and
//! whose bearing drifts slowly (`|dba| < σ(tti)`) form the danger sets, split
//! by the sign of the bearing rate. All functions here are pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// Model constants of the vision-based interaction rule.
///
/// `lambda = 0` selects the exact nonlocal evaluation; `lambda > 0` enables the
/// spatially local approximation with parameters rescaled by `lambda`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VisionParams {
    /// Walking speed c (m/s). Directions are stored as unit vectors; the speed
    /// multiplies them at every use site.
    pub speed_c: f64,
    /// Additive floor `a` of the perception threshold (1/s).
    pub sigma_a: f64,
    /// Scale `b` of the decaying part of the threshold.
    pub sigma_b: f64,
    /// Exponent of the threshold decay (kept independent of `speed_c` even
    /// though both default to 1.5).
    pub sigma_exp: f64,
    /// Time offset τ₀ (s) keeping the threshold finite at zero time-to-interaction.
    pub tau0: f64,
    /// Reaction intensity scale Φ₀.
    pub phi0: f64,
    /// Interaction radius R (m): partners with predicted miss distance below R count.
    pub radius_r: f64,
    /// Scale-separation parameter of the local approximation (dimensionless, ≥ 0).
    pub lambda: f64,
}

impl Default for VisionParams {
    fn default() -> Self {
        VisionParams {
            speed_c: 1.5,
            sigma_a: 0.0,
            sigma_b: 0.6,
            sigma_exp: 1.5,
            tau0: 1.0,
            phi0: 1.0,
            radius_r: 1.68,
            lambda: 0.0,
        }
    }
}

impl VisionParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.speed_c > 0.0) {
            problems.push("speed_c must be > 0");
        }
        if !(self.sigma_a >= 0.0) {
            problems.push("sigma_a must be >= 0");
        }
        if !(self.sigma_b > 0.0) {
            problems.push("sigma_b must be > 0");
        }
        if !(self.tau0 > 0.0) {
            problems.push("tau0 must be > 0");
        }
        if !(self.phi0 > 0.0) {
            problems.push("phi0 must be > 0");
        }
        if !(self.radius_r > 0.0) {
            problems.push("radius_r must be > 0");
        }
        if !(self.lambda >= 0.0) {
            problems.push("lambda must be >= 0");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

/// The (bearing rate, time to interaction, miss distance) triple of one pair.
///
/// Symmetric under exchange of the two partners: both the separation and the
/// relative velocity negate, and each formula is even in that joint negation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DangerIndicators {
    /// Bearing-angle rate (1/s).
    pub dba: f64,
    /// Time to interaction (s); positive while approaching.
    pub tti: f64,
    /// Predicted miss distance (m); `0 ≤ md ≤ |y − x|`.
    pub md: f64,
}

/// Compute the indicator triple for the pair `(x,u)`, `(y,v)`.
pub fn indicators(
    x: Vec2,
    u: Vec2,
    y: Vec2,
    v: Vec2,
    p: &VisionParams,
) -> Result<DangerIndicators> {
    let sep = y - x;
    let sep_sq = sep.norm_sq();
    if sep_sq == 0.0 {
        return Err(Error::CoincidentPositions);
    }
    let w = (v - u) * p.speed_c;
    let w_sq = w.norm_sq();
    if w_sq == 0.0 {
        return Err(Error::ZeroRelativeVelocity);
    }
    let dba = sep.cross(w) / sep_sq;
    let tti = -sep.dot(w) / w_sq;
    let proj = sep.dot(w) / w_sq.sqrt();
    // Clamp: for exactly collinear geometry sep_sq − proj² may round negative.
    let md = (sep_sq - proj * proj).max(0.0).sqrt();
    Ok(DangerIndicators { dba, tti, md })
}

/// Bearing rate of the goal point: negative when the heading is
/// counterclockwise of the goal, so following it turns the heading back.
pub fn goal_bearing_rate(x: Vec2, u: Vec2, goal: Vec2, p: &VisionParams) -> Result<f64> {
    let d = goal - x;
    let d_sq = d.norm_sq();
    if d_sq == 0.0 {
        return Err(Error::AtGoal);
    }
    Ok(-p.speed_c * d.cross(u) / d_sq)
}

/// Perception threshold σ(|τ|) = a + b/(|τ|+τ₀)^exp; strictly decreasing in τ
/// when b > 0. Slowly drifting bearings matter only for imminent interactions.
pub fn sigma(tau_abs: f64, p: &VisionParams) -> f64 {
    p.sigma_a + p.sigma_b / (tau_abs + p.tau0).powf(p.sigma_exp)
}

/// Reaction kernel Φ₀·max(σ(|τ|) − |dba|, 0); non-negative by construction.
pub fn phi_kernel(dba_abs: f64, tau_abs: f64, p: &VisionParams) -> f64 {
    p.phi0 * (sigma(tau_abs, p) - dba_abs).max(0.0)
}

/// Which danger set a pair belongs to, split by the sign of the bearing rate.
/// All four conditions are strict; `dba == 0` belongs to neither set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DangerClass {
    Plus,
    Minus,
    None,
}

pub fn danger_class(ind: &DangerIndicators, p: &VisionParams) -> DangerClass {
    if ind.tti <= 0.0 {
        return DangerClass::None;
    }
    if ind.md * ind.md >= p.radius_r * p.radius_r {
        return DangerClass::None;
    }
    if ind.dba.abs() >= sigma(ind.tti.abs(), p) {
        return DangerClass::None;
    }
    if ind.dba > 0.0 {
        DangerClass::Plus
    } else if ind.dba < 0.0 {
        DangerClass::Minus
    } else {
        DangerClass::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// The goal deviation exceeds the avoidance reactions; steer to the goal.
    GoalDominates,
    /// Turn clockwise at the plus-side reaction rate (ω = −Φ₊).
    AvoidPlus,
    /// Turn counterclockwise at the minus-side reaction rate (ω = +Φ₋).
    AvoidMinus,
    /// Both turning options deviate equally; hold course.
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnDecision {
    pub omega: f64,
    pub branch: Branch,
}

/// Angular-velocity decision rule.
///
/// If `alpha_g` lies outside `[−phi_minus, phi_plus]` the goal wins and
/// ω = alpha_g. Otherwise the turn direction is the one whose reaction rate
/// deviates least from the goal rate, with the Heaviside convention H(0) = 0:
/// an exact tie yields ω = 0 so a symmetric situation prefers no side.
pub fn angular_velocity(phi_plus: f64, phi_minus: f64, alpha_g: f64) -> TurnDecision {
    debug_assert!(phi_plus >= 0.0 && phi_minus >= 0.0);
    if alpha_g < -phi_minus || alpha_g > phi_plus {
        return TurnDecision {
            omega: alpha_g,
            branch: Branch::GoalDominates,
        };
    }
    let dev_minus = (phi_minus - alpha_g.abs()).abs();
    let dev_plus = (phi_plus - alpha_g.abs()).abs();
    if dev_minus > dev_plus {
        TurnDecision {
            omega: -phi_plus,
            branch: Branch::AvoidPlus,
        }
    } else if dev_plus > dev_minus {
        TurnDecision {
            omega: phi_minus,
            branch: Branch::AvoidMinus,
        }
    } else {
        TurnDecision {
            omega: 0.0,
            branch: Branch::Tie,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn p15() -> VisionParams {
        VisionParams::default()
    }

    #[test]
    fn indicators_head_on_collinear() {
        let ind = indicators(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(4.0, 0.0),
            Vec2::new(-1.0, 0.0),
            &p15(),
        )
        .unwrap();
        assert_eq!(ind.dba, 0.0);
        assert!((ind.tti - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(ind.md, 0.0);
    }

    #[test]
    fn indicators_constant_bearing_collision_course() {
        let ind = indicators(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, -1.0),
            &p15(),
        )
        .unwrap();
        assert!(ind.dba.abs() < 1e-15);
        assert!((ind.tti - 4.0 / 3.0).abs() < 1e-15);
        assert!(ind.md < 1e-7);
    }

    #[test]
    fn indicators_offset_pair() {
        // Hand evaluation: sep=(2,1), W=1.5·((-1,0)-(1,0))=(-3,0);
        // dba = (2·0 − 1·(−3))/5 = 0.6, tti = −(−6)/9 = 2/3, md = √(5−4) = 1.
        let ind = indicators(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 1.0),
            Vec2::new(-1.0, 0.0),
            &p15(),
        )
        .unwrap();
        assert!((ind.dba - 0.6).abs() < 1e-15);
        assert!((ind.tti - 2.0 / 3.0).abs() < 1e-15);
        assert!((ind.md - 1.0).abs() < 1e-12);
    }

    #[test]
    fn indicators_degenerate_pairs_error() {
        let p = p15();
        let e = indicators(
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            &p,
        );
        assert!(matches!(e, Err(Error::ZeroRelativeVelocity)));
        let e = indicators(
            Vec2::new(1.0, 1.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            &p,
        );
        assert!(matches!(e, Err(Error::CoincidentPositions)));
    }

    #[test]
    fn indicators_exchange_symmetry() {
        let p = p15();
        let mut rng = SplitMix64::new(0x5eed);
        for _ in 0..500 {
            let x = Vec2::new(rng.f64_in(-10.0, 10.0), rng.f64_in(-10.0, 10.0));
            let y = Vec2::new(rng.f64_in(-10.0, 10.0), rng.f64_in(-10.0, 10.0));
            let u = Vec2::new(1.0, 0.0).rotated(rng.f64_in(0.0, std::f64::consts::TAU));
            let v = Vec2::new(1.0, 0.0).rotated(rng.f64_in(0.0, std::f64::consts::TAU));
            let (a, b) = match (indicators(x, u, y, v, &p), indicators(y, v, x, u, &p)) {
                (Ok(a), Ok(b)) => (a, b),
                _ => continue,
            };
            assert!((a.dba - b.dba).abs() <= 1e-12 * (1.0 + a.dba.abs()));
            assert!((a.tti - b.tti).abs() <= 1e-12 * (1.0 + a.tti.abs()));
            assert!((a.md - b.md).abs() <= 1e-12 * (1.0 + a.md.abs()));
        }
    }

    #[test]
    fn indicators_rotation_and_translation_invariance() {
        // well-conditioned draws: separations and relative directions bounded
        // away from the degenerate configurations, so the exact invariance
        // shows through at 1e-12 relative
        let p = p15();
        let mut rng = SplitMix64::new(0xfeed);
        for _ in 0..500 {
            let x = Vec2::new(rng.f64_in(-5.0, 5.0), rng.f64_in(-5.0, 5.0));
            let y = x + Vec2::new(rng.f64_in(0.5, 6.0), 0.0)
                .rotated(rng.f64_in(0.0, std::f64::consts::TAU));
            let u = Vec2::new(1.0, 0.0).rotated(rng.f64_in(0.0, std::f64::consts::TAU));
            let v = u.rotated(rng.f64_in(0.1, std::f64::consts::PI));
            let ang = rng.f64_in(0.0, std::f64::consts::TAU);
            let shift = Vec2::new(rng.f64_in(-100.0, 100.0), rng.f64_in(-100.0, 100.0));
            let a = match indicators(x, u, y, v, &p) {
                Ok(a) => a,
                Err(_) => continue,
            };
            let b = indicators(
                x.rotated(ang) + shift,
                u.rotated(ang),
                y.rotated(ang) + shift,
                v.rotated(ang),
                &p,
            )
            .unwrap();
            let rel = |p: f64, q: f64| (p - q).abs() / (1.0 + p.abs());
            assert!(rel(a.dba, b.dba) < 1e-12);
            assert!(rel(a.tti, b.tti) < 1e-12);
            // near-collinear pairs: the miss distance is a square root on a
            // cancelling radicand, so compare its square there
            assert!(rel(a.md, b.md) < 1e-12 || rel(a.md * a.md, b.md * b.md) < 1e-12);

            // goal bearing rate: invariant under joint translation of x and goal
            let g = x + Vec2::new(rng.f64_in(0.5, 8.0), 0.0)
                .rotated(rng.f64_in(0.0, std::f64::consts::TAU));
            let r0 = goal_bearing_rate(x, u, g, &p).unwrap();
            let r1 = goal_bearing_rate(x + shift, u, g + shift, &p).unwrap();
            assert!(rel(r0, r1) < 1e-12);
        }
    }

    #[test]
    fn miss_distance_bounded_by_separation() {
        let p = p15();
        let mut rng = SplitMix64::new(0xd157);
        for _ in 0..500 {
            let x = Vec2::new(rng.f64_in(-5.0, 5.0), rng.f64_in(-5.0, 5.0));
            let y = Vec2::new(rng.f64_in(-5.0, 5.0), rng.f64_in(-5.0, 5.0));
            let u = Vec2::new(1.0, 0.0).rotated(rng.f64_in(0.0, std::f64::consts::TAU));
            let v = Vec2::new(1.0, 0.0).rotated(rng.f64_in(0.0, std::f64::consts::TAU));
            if let Ok(ind) = indicators(x, u, y, v, &p) {
                assert!(ind.md >= 0.0);
                assert!(ind.md <= (y - x).norm() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn goal_bearing_rate_examples() {
        let p = p15();
        let x = Vec2::new(0.0, 0.0);
        let goal = Vec2::new(10.0, 0.0);
        assert_eq!(
            goal_bearing_rate(x, Vec2::new(1.0, 0.0), goal, &p).unwrap(),
            0.0
        );
        let r = goal_bearing_rate(x, Vec2::new(0.0, 1.0), goal, &p).unwrap();
        assert!((r + 0.15).abs() < 1e-15);
        let r = goal_bearing_rate(x, Vec2::new(0.0, -1.0), goal, &p).unwrap();
        assert!((r - 0.15).abs() < 1e-15);
        assert!(matches!(
            goal_bearing_rate(goal, Vec2::new(1.0, 0.0), goal, &p),
            Err(Error::AtGoal)
        ));
    }

    #[test]
    fn sigma_values_and_monotonicity() {
        let p = p15();
        assert!((sigma(0.0, &p) - 0.6).abs() < 1e-15);
        assert!((sigma(3.0, &p) - 0.075).abs() < 1e-15);
        // monotone decreasing on sorted random inputs
        let mut rng = SplitMix64::new(3);
        let mut taus: Vec<f64> = (0..200).map(|_| rng.f64_in(0.0, 50.0)).collect();
        taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in taus.windows(2) {
            assert!(sigma(w[1], &p) <= sigma(w[0], &p));
            if w[1] > w[0] {
                assert!(sigma(w[1], &p) < sigma(w[0], &p));
            }
        }
    }

    #[test]
    fn phi_kernel_examples_and_clamp() {
        let p = p15();
        // σ(τ)=0.6 at τ=0
        assert!((phi_kernel(0.2, 0.0, &p) - 0.4).abs() < 1e-15);
        assert_eq!(phi_kernel(0.7, 0.0, &p), 0.0);
        assert!((phi_kernel(0.0, 0.0, &p) - sigma(0.0, &p)).abs() < 1e-15);
        // zero whenever dba >= sigma, non-negative always
        let mut rng = SplitMix64::new(11);
        for _ in 0..300 {
            let dba = rng.f64_in(0.0, 1.0);
            let tau = rng.f64_in(0.0, 10.0);
            let k = phi_kernel(dba, tau, &p);
            assert!(k >= 0.0);
            if dba >= sigma(tau, &p) {
                assert_eq!(k, 0.0);
            }
        }
    }

    #[test]
    fn danger_class_examples() {
        let p = p15();
        // σ(1) = 0.6/2^1.5 ≈ 0.2121
        let ind = DangerIndicators {
            dba: 0.3,
            tti: 1.0,
            md: 0.5,
        };
        assert_eq!(danger_class(&ind, &p), DangerClass::None);
        let ind = DangerIndicators {
            dba: 0.1,
            tti: 1.0,
            md: 0.5,
        };
        assert_eq!(danger_class(&ind, &p), DangerClass::Plus);
        let ind = DangerIndicators {
            dba: 0.0,
            tti: 1.0,
            md: 0.0,
        };
        assert_eq!(danger_class(&ind, &p), DangerClass::None);
    }

    #[test]
    fn danger_class_implies_positive_kernel() {
        let p = p15();
        let mut rng = SplitMix64::new(77);
        for _ in 0..2000 {
            let ind = DangerIndicators {
                dba: rng.f64_in(-0.8, 0.8),
                tti: rng.f64_in(-1.0, 5.0),
                md: rng.f64_in(0.0, 3.0),
            };
            if danger_class(&ind, &p) != DangerClass::None {
                assert!(phi_kernel(ind.dba.abs(), ind.tti.abs(), &p) > 0.0);
            }
        }
    }

    #[test]
    fn angular_velocity_examples() {
        let d = angular_velocity(0.5, 0.3, 0.1);
        assert_eq!(d.omega, 0.3);
        assert_eq!(d.branch, Branch::AvoidMinus);

        let d = angular_velocity(0.5, 0.3, 0.8);
        assert_eq!(d.omega, 0.8);
        assert_eq!(d.branch, Branch::GoalDominates);

        let d = angular_velocity(0.0, 0.0, 0.2);
        assert_eq!(d.omega, 0.2);
        assert_eq!(d.branch, Branch::GoalDominates);

        let d = angular_velocity(0.4, 0.4, 0.1);
        assert_eq!(d.omega, 0.0);
        assert_eq!(d.branch, Branch::Tie);
    }

    #[test]
    fn angular_velocity_bounded() {
        let mut rng = SplitMix64::new(99);
        for _ in 0..5000 {
            let pp = rng.f64_in(0.0, 1.0);
            let pm = rng.f64_in(0.0, 1.0);
            let ag = rng.f64_in(-2.0, 2.0);
            let d = angular_velocity(pp, pm, ag);
            assert!(d.omega.abs() <= pp.max(pm).max(ag.abs()) + 1e-15);
        }
    }
}

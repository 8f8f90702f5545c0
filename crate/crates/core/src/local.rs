//! Spatially local approximation of the reaction intensities.
//!
//! For small scale-separation λ the pair integral collapses to a one-point
//! formula: the reaction felt at `x` toward target group ξ is a density-
//! weighted average over groups η of a kernel Ψ±(|ΔU|) that depends only on
//! the relative speed between the group mean directions at `x`. Ψ± is the
//! average of the perception kernel over the admissible set of scaled
//! separations ζ and is precomputed on a 1D speed grid.
//!
//! The admissible set is unbounded along the approach direction (its area
//! diverges while the kernel integral converges), so a truncation is part of
//! the kernel's definition, not a numerical detail. We cut at |ζ| ≤ zeta_cap,
//! with zeta_cap chosen by callers as the neighbor-search radius mapped to
//! scaled units (h/λ); the cap is recorded in the table metadata.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::interaction::VisionParams;
use crate::meshfree::{weight, WeightParams};
use crate::nonlocal::PhiPair;
use crate::sha1::sha1_hex;
use crate::vec2::Vec2;

/// Model constants mapped to the scaled frame: R̂ = R/λ, Φ̂₀ = Φ₀/λ, â = λa,
/// τ̂₀ = τ₀/λ, b̂ = b/λ^(exp−1). Recombining with the same λ reproduces the
/// original parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledParams {
    pub r_hat: f64,
    pub phi0_hat: f64,
    pub a_hat: f64,
    pub tau0_hat: f64,
    pub b_hat: f64,
    pub sigma_exp: f64,
    pub speed_c: f64,
}

impl ScaledParams {
    /// Scaled perception threshold σ̂(t) = â + b̂/(t + τ̂₀)^exp = λ·σ(λt).
    pub fn sigma_hat(&self, tau_abs: f64) -> f64 {
        self.a_hat + self.b_hat / (tau_abs + self.tau0_hat).powf(self.sigma_exp)
    }
}

pub fn scale_params(p: &VisionParams) -> Result<ScaledParams> {
    if !(p.lambda > 0.0) {
        return Err(Error::LambdaZero);
    }
    Ok(ScaledParams {
        r_hat: p.radius_r / p.lambda,
        phi0_hat: p.phi0 / p.lambda,
        a_hat: p.lambda * p.sigma_a,
        tau0_hat: p.tau0 / p.lambda,
        b_hat: p.sigma_b / p.lambda.powf(p.sigma_exp - 1.0),
        sigma_exp: p.sigma_exp,
        speed_c: p.speed_c,
    })
}

/// Resolution and truncation of the Ψ quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiBuildSpec {
    /// Nodes of the relative-speed grid over [0, 2c].
    pub n_speeds: usize,
    /// Quadrature cells per axis of the ζ box (forced even to keep the
    /// mirror symmetry of the cell centers exact).
    pub n_cells: usize,
    /// Truncation radius of the ζ integral, in scaled units.
    pub zeta_cap: f64,
}

impl PsiBuildSpec {
    pub fn new(n_speeds: usize, n_cells: usize, zeta_cap: f64) -> Self {
        PsiBuildSpec {
            n_speeds: n_speeds.max(2),
            n_cells: (n_cells + n_cells % 2).max(2),
            zeta_cap,
        }
    }
}

/// Precomputed kernel averages on a relative-speed grid, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiTable {
    pub speeds: Vec<f64>,
    pub psi_plus: Vec<f64>,
    pub psi_minus: Vec<f64>,
    pub spec: PsiBuildSpec,
    pub params: ScaledParams,
}

/// Scaled indicator triple for one quadrature point: bearing rate, time to
/// interaction and squared miss distance of a fictitious partner at offset
/// `zeta` with relative velocity `w`.
fn hat_alpha(zeta: Vec2, w: Vec2) -> f64 {
    zeta.cross(w) / zeta.norm_sq()
}

/// Ψ± at one speed by midpoint quadrature over the ζ box.
///
/// The conditions carve the admissible region out of the box
/// [−cap, 0] × [−Q, Q] with Q = min(R̂, cap): approach requires ζ·W < 0 and
/// the squared miss distance reduces to the transverse coordinate. The
/// threshold σ̂ depends only on the along-track coordinate, so it is hoisted
/// out of the inner loop.
fn psi_at_speed(sp: &ScaledParams, spec: &PsiBuildSpec, s: f64) -> (f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    let cap = spec.zeta_cap;
    let q_max = sp.r_hat.min(cap);
    let n = spec.n_cells;
    let dp = cap / n as f64;
    let dq = 2.0 * q_max / n as f64;
    let cell_area = dp * dq;
    let w = Vec2::new(s, 0.0);
    let cap_sq = cap * cap;

    let (mut sum_p, mut area_p, mut sum_m, mut area_m) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..n {
        let p = -cap + (k as f64 + 0.5) * dp;
        // tau = −(ζ·W)/|W|² is q-independent for W along the axis
        let tau = -p / s;
        if tau <= 0.0 {
            continue;
        }
        let sig = sp.sigma_hat(tau);
        for l in 0..n {
            let q = -q_max + (l as f64 + 0.5) * dq;
            let zeta = Vec2::new(p, q);
            if zeta.norm_sq() > cap_sq {
                continue;
            }
            // miss distance: D̂² = |ζ|² − (ζ·Ŵ)² = q² here, but keep the form
            let d_sq = q * q;
            if d_sq >= sp.r_hat * sp.r_hat {
                continue;
            }
            let alpha = hat_alpha(zeta, w);
            if alpha.abs() >= sig {
                continue;
            }
            let kernel = sp.phi0_hat * (sig - alpha.abs());
            if alpha > 0.0 {
                sum_p += kernel * cell_area;
                area_p += cell_area;
            } else if alpha < 0.0 {
                sum_m += kernel * cell_area;
                area_m += cell_area;
            }
        }
    }
    // An empty admissible set means no reaction at this speed.
    let plus = if area_p > 0.0 { sum_p / area_p } else { 0.0 };
    let minus = if area_m > 0.0 { sum_m / area_m } else { 0.0 };
    (plus, minus)
}

/// Build the table over the speed range (0, 2c]. The plus/minus sides are
/// integrated independently and checked against each other: the admissible
/// sets are mirror images across the approach axis, so Ψ₊ = Ψ₋ must hold up
/// to quadrature rounding. The stored table is then symmetrized so the
/// decision rule sees exactly equal sides instead of last-ulp noise.
pub fn build_psi_table(sp: &ScaledParams, spec: &PsiBuildSpec) -> PsiTable {
    let n = spec.n_speeds;
    let s_max = 2.0 * sp.speed_c;
    let speeds: Vec<f64> = (0..n).map(|k| s_max * k as f64 / (n - 1) as f64).collect();
    let raw: Vec<(f64, f64)> = speeds
        .par_iter()
        .map(|&s| psi_at_speed(sp, spec, s))
        .collect();
    let mut psi_plus = Vec::with_capacity(n);
    let mut psi_minus = Vec::with_capacity(n);
    for (k, &(p, m)) in raw.iter().enumerate() {
        let scale = p.abs().max(m.abs());
        assert!(
            (p - m).abs() <= 1e-12 * scale.max(1e-300),
            "mirror symmetry violated at speed node {k}: {p} vs {m}"
        );
        let sym = 0.5 * (p + m);
        psi_plus.push(sym);
        psi_minus.push(sym);
    }
    PsiTable {
        speeds,
        psi_plus,
        psi_minus,
        spec: *spec,
        params: *sp,
    }
}

impl PsiTable {
    /// Linear interpolation, clamped to the table range.
    pub fn lookup(&self, speed: f64) -> (f64, f64) {
        let n = self.speeds.len();
        let s_max = self.speeds[n - 1];
        if speed <= 0.0 {
            return (self.psi_plus[0], self.psi_minus[0]);
        }
        if speed >= s_max {
            return (self.psi_plus[n - 1], self.psi_minus[n - 1]);
        }
        let ds = s_max / (n - 1) as f64;
        let k = ((speed / ds) as usize).min(n - 2);
        let t = (speed - self.speeds[k]) / ds;
        let lerp = |v: &[f64]| v[k] + t * (v[k + 1] - v[k]);
        (lerp(&self.psi_plus), lerp(&self.psi_minus))
    }

    /// Hash identifying the parameter set and resolution this table realizes.
    pub fn cache_key(&self) -> String {
        psi_cache_key(&self.params, &self.spec)
    }
}

pub fn psi_cache_key(sp: &ScaledParams, spec: &PsiBuildSpec) -> String {
    let mut buf = String::new();
    let _ = write!(
        buf,
        "{:x}:{:x}:{:x}:{:x}:{:x}:{:x}:{:x}|{}:{}:{:x}",
        sp.r_hat.to_bits(),
        sp.phi0_hat.to_bits(),
        sp.a_hat.to_bits(),
        sp.tau0_hat.to_bits(),
        sp.b_hat.to_bits(),
        sp.sigma_exp.to_bits(),
        sp.speed_c.to_bits(),
        spec.n_speeds,
        spec.n_cells,
        spec.zeta_cap.to_bits(),
    );
    sha1_hex(buf.as_bytes())[..16].to_string()
}

/// Reaction intensities in the local approximation for particle `i`.
///
/// Group fields at the particle position come from Gaussian Shepard
/// interpolation over the neighbor list (self included): ρ_g as the Shepard
/// density average, U_g as the ρ-weighted mean direction renormalized to unit
/// length. Groups with no nearby mass contribute nothing; a group whose mean
/// direction cancels to zero keeps its density in the denominator but carries
/// no coherent threat signal.
#[allow(clippy::too_many_arguments)]
pub fn phi_pm_local(
    i: usize,
    pos: &[Vec2],
    dir: &[Vec2],
    rho: &[f64],
    group: &[usize],
    nbrs: &[u32],
    wp: &WeightParams,
    table: &PsiTable,
    n_groups: usize,
) -> PhiPair {
    let mut sw = vec![0.0; n_groups];
    let mut swr = vec![0.0; n_groups];
    let mut svel = vec![Vec2::ZERO; n_groups];
    let mut accumulate = |j: usize| {
        let w = weight(pos[j] - pos[i], wp);
        let g = group[j];
        sw[g] += w;
        swr[g] += w * rho[j];
        svel[g] += dir[j] * (w * rho[j]);
    };
    accumulate(i);
    for &j in nbrs {
        accumulate(j as usize);
    }

    let c = table.params.speed_c;
    let (mut num_p, mut num_m, mut den) = (0.0, 0.0, 0.0);
    for g in 0..n_groups {
        if sw[g] <= 0.0 || swr[g] <= 0.0 {
            continue;
        }
        let rho_g = swr[g] / sw[g];
        den += rho_g;
        if let Some(u_g) = svel[g].normalized() {
            let speed = c * (u_g - dir[i]).norm();
            let (pp, pm) = table.lookup(speed);
            num_p += rho_g * pp;
            num_m += rho_g * pm;
        }
    }
    if den > 0.0 {
        PhiPair {
            plus: num_p / den,
            minus: num_m / den,
        }
    } else {
        PhiPair::default()
    }
}

const PSI_SCHEMA: u32 = 1;

/// Serialize to a small CSV cache. Floats are written with Rust's shortest
/// round-trip formatting, so a reload reproduces the table bit for bit.
pub fn save_psi_csv(table: &PsiTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    let sp = &table.params;
    let _ = writeln!(out, "# pedflow psi table schema {PSI_SCHEMA}");
    let _ = writeln!(out, "# key {}", table.cache_key());
    let _ = writeln!(
        out,
        "# n_speeds {} n_cells {} zeta_cap {}",
        table.spec.n_speeds, table.spec.n_cells, table.spec.zeta_cap
    );
    let _ = writeln!(
        out,
        "# r_hat {} phi0_hat {} a_hat {} tau0_hat {} b_hat {} sigma_exp {} speed_c {}",
        sp.r_hat, sp.phi0_hat, sp.a_hat, sp.tau0_hat, sp.b_hat, sp.sigma_exp, sp.speed_c
    );
    let _ = writeln!(out, "speed,psi_plus,psi_minus");
    for k in 0..table.speeds.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            table.speeds[k], table.psi_plus[k], table.psi_minus[k]
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_psi_csv(path: &Path) -> Result<PsiTable> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let bad = |what: &str| Error::PsiCache(format!("{what} in {}", path.display()));

    let header = lines.next().ok_or_else(|| bad("empty file"))?;
    if header != format!("# pedflow psi table schema {PSI_SCHEMA}") {
        return Err(bad("unsupported schema"));
    }
    let key_line = lines.next().ok_or_else(|| bad("missing key"))?;
    let key = key_line
        .strip_prefix("# key ")
        .ok_or_else(|| bad("malformed key line"))?
        .to_string();

    let res_line = lines.next().ok_or_else(|| bad("missing resolution"))?;
    let toks: Vec<&str> = res_line.split_whitespace().collect();
    if toks.len() != 7 {
        return Err(bad("malformed resolution line"));
    }
    let parse_f = |s: &str| s.parse::<f64>().map_err(|_| bad("bad float"));
    let spec = PsiBuildSpec {
        n_speeds: toks[2].parse().map_err(|_| bad("bad n_speeds"))?,
        n_cells: toks[4].parse().map_err(|_| bad("bad n_cells"))?,
        zeta_cap: parse_f(toks[6])?,
    };

    let par_line = lines.next().ok_or_else(|| bad("missing params"))?;
    let toks: Vec<&str> = par_line.split_whitespace().collect();
    if toks.len() != 15 {
        return Err(bad("malformed params line"));
    }
    let params = ScaledParams {
        r_hat: parse_f(toks[2])?,
        phi0_hat: parse_f(toks[4])?,
        a_hat: parse_f(toks[6])?,
        tau0_hat: parse_f(toks[8])?,
        b_hat: parse_f(toks[10])?,
        sigma_exp: parse_f(toks[12])?,
        speed_c: parse_f(toks[14])?,
    };

    let cols = lines.next().ok_or_else(|| bad("missing column header"))?;
    if cols != "speed,psi_plus,psi_minus" {
        return Err(bad("unexpected columns"));
    }
    let mut speeds = Vec::new();
    let mut psi_plus = Vec::new();
    let mut psi_minus = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let mut next = || it.next().ok_or_else(|| bad("short row")).and_then(parse_f);
        speeds.push(next()?);
        psi_plus.push(next()?);
        psi_minus.push(next()?);
    }
    if speeds.len() != spec.n_speeds {
        return Err(bad("row count does not match n_speeds"));
    }
    let table = PsiTable {
        speeds,
        psi_plus,
        psi_minus,
        spec,
        params,
    };
    if table.cache_key() != key {
        return Err(bad("key does not match parameters"));
    }
    Ok(table)
}

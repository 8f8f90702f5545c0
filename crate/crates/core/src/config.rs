//! Run configuration: a single TOML file with a `schema_version` field,
//! cross-field validation, and a git-style content hash for provenance.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Integrator, Mode, RepulsionParams};
use crate::error::{Error, Result};
use crate::interaction::VisionParams;
use crate::meshfree::WeightParams;
use crate::scenario::Scenario;
use crate::sha1::git_blob_hash;
use crate::socialforce::SocialForceParams;

pub const SCHEMA_VERSION: u32 = 1;

/// Which model the run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    NoDirectionControl,
    VisionNonlocal,
    VisionLocal,
    SocialForce,
}

impl RunMode {
    pub fn step_mode(self) -> Option<Mode> {
        match self {
            RunMode::NoDirectionControl => Some(Mode::NoDirectionControl),
            RunMode::VisionNonlocal => Some(Mode::VisionNonlocal),
            RunMode::VisionLocal => Some(Mode::VisionLocal),
            RunMode::SocialForce => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::NoDirectionControl => "no_direction_control",
            RunMode::VisionNonlocal => "vision_nonlocal",
            RunMode::VisionLocal => "vision_local",
            RunMode::SocialForce => "social_force",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotMode {
    /// One long CSV with a time column.
    Single,
    /// One CSV per snapshot instant.
    PerSnapshot,
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSection {
    pub dt: f64,
    pub t_end: f64,
    pub mode: RunMode,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: f64,
    #[serde(default = "default_integrator")]
    pub integrator: Integrator,
}

fn default_snapshot_every() -> f64 {
    1.0
}

fn default_integrator() -> Integrator {
    Integrator::Euler
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSection {
    /// Support radius; defaults to three initial spacings.
    pub h: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha_shape: f64,
}

fn default_alpha() -> f64 {
    6.0
}

impl Default for WeightsSection {
    fn default() -> Self {
        WeightsSection {
            h: None,
            alpha_shape: default_alpha(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiSection {
    #[serde(default = "default_n_speeds")]
    pub n_speeds: usize,
    #[serde(default = "default_n_cells")]
    pub n_cells: usize,
    /// Truncation radius of the kernel quadrature in scaled units; defaults
    /// to the neighbor-search radius mapped to the scaled frame, h/λ.
    pub zeta_cap: Option<f64>,
}

fn default_n_speeds() -> usize {
    256
}

fn default_n_cells() -> usize {
    400
}

impl Default for PsiSection {
    fn default() -> Self {
        PsiSection {
            n_speeds: default_n_speeds(),
            n_cells: default_n_cells(),
            zeta_cap: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_out_dir")]
    pub dir: String,
    #[serde(default = "default_snapshot_mode")]
    pub snapshots: SnapshotMode,
    #[serde(default)]
    pub density_grid: bool,
    #[serde(default = "default_density_dx")]
    pub density_grid_dx: f64,
    /// Social-force runs only: dump each group's travel-cost grid at every
    /// snapshot instant, in the density-grid text format.
    #[serde(default)]
    pub phi_grids: bool,
}

fn default_out_dir() -> String {
    "out".into()
}

fn default_snapshot_mode() -> SnapshotMode {
    SnapshotMode::Single
}

fn default_density_dx() -> f64 {
    0.5
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_out_dir(),
            snapshots: default_snapshot_mode(),
            density_grid: false,
            density_grid_dx: default_density_dx(),
            phi_grids: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub scenario: Scenario,
    pub vision: VisionParams,
    #[serde(default)]
    pub weights: WeightsSection,
    pub step: StepSection,
    pub repulsion: Option<RepulsionParams>,
    pub socialforce: Option<SocialForceParams>,
    #[serde(default)]
    pub psi: PsiSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn weight_params(&self) -> WeightParams {
        WeightParams {
            h: self
                .weights
                .h
                .unwrap_or(3.0 * self.scenario.initial_spacing),
            alpha_shape: self.weights.alpha_shape,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.scenario.validate()?;
        self.vision.validate()?;
        self.weight_params().validate()?;
        let wp = self.weight_params();

        if !(self.step.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be > 0".into()));
        }
        if !(self.step.t_end > 0.0) {
            return Err(Error::InvalidConfig("t_end must be > 0".into()));
        }
        if !(self.step.snapshot_every > 0.0) {
            return Err(Error::InvalidConfig("snapshot_every must be > 0".into()));
        }
        // advective stability bound
        let cfl = self.vision.speed_c * self.step.dt;
        if cfl >= 0.5 * self.scenario.initial_spacing {
            return Err(Error::InvalidConfig(format!(
                "c·dt = {cfl} violates the bound 0.5·Δx = {}",
                0.5 * self.scenario.initial_spacing
            )));
        }
        match self.step.mode {
            RunMode::VisionLocal => {
                if !(self.vision.lambda > 0.0) {
                    return Err(Error::InvalidConfig(
                        "vision_local requires lambda > 0".into(),
                    ));
                }
            }
            RunMode::SocialForce => {
                let sf = self.socialforce.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("social_force mode requires a [socialforce] block".into())
                })?;
                if !(sf.relaxation_t > 0.0 && sf.u_max > 0.0 && sf.rho_max > 0.0) {
                    return Err(Error::InvalidConfig(
                        "socialforce requires positive relaxation_t, u_max, rho_max".into(),
                    ));
                }
                if !(sf.grid_dx > 0.0) {
                    return Err(Error::InvalidConfig("grid_dx must be > 0".into()));
                }
                if sf.contact_radius > wp.h {
                    return Err(Error::InvalidConfig(
                        "socialforce contact_radius must not exceed the neighbor radius h".into(),
                    ));
                }
            }
            _ => {}
        }
        if let Some(rp) = &self.repulsion {
            if rp.k_n < 0.0 || rp.gamma_n < 0.0 || rp.gamma_t < 0.0 || rp.contact_radius < 0.0 {
                return Err(Error::InvalidConfig(
                    "repulsion parameters must be non-negative".into(),
                ));
            }
            if rp.contact_radius > wp.h {
                return Err(Error::InvalidConfig(
                    "repulsion contact_radius must not exceed the neighbor radius h".into(),
                ));
            }
        }
        if !(self.output.density_grid_dx > 0.0) {
            return Err(Error::InvalidConfig("density_grid_dx must be > 0".into()));
        }
        Ok(())
    }
}

/// Parse and validate a config file; returns the config and the git-style
/// hash of the file content.
pub fn load_config(path: &Path) -> Result<(RunConfig, String)> {
    let text = std::fs::read_to_string(path)?;
    let cfg: RunConfig = toml::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    let hash = git_blob_hash(text.as_bytes());
    Ok((cfg, hash))
}

pub fn save_config(cfg: &RunConfig, path: &Path) -> Result<()> {
    let text =
        toml::to_string_pretty(cfg).map_err(|e| Error::InvalidConfig(format!("serialize: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// The baseline corridor configuration: 80 particles on 1.68 m lattice sites.
pub fn corridor_config(mode: RunMode) -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION,
        scenario: Scenario::default(),
        vision: VisionParams::default(),
        weights: WeightsSection::default(),
        step: StepSection {
            dt: 0.00042,
            t_end: 45.0,
            mode,
            snapshot_every: 1.0,
            integrator: Integrator::Euler,
        },
        repulsion: None,
        socialforce: match mode {
            RunMode::SocialForce => Some(SocialForceParams::default()),
            _ => None,
        },
        psi: PsiSection::default(),
        output: OutputSection::default(),
    }
}

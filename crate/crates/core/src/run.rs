//! End-to-end experiment driver: seeds a scenario, advances it to the end
//! time or full evacuation, writes snapshots, density grids, the evacuation
//! series and a run report, and compares finished runs.
//!
//! Wall-clock timing covers the physics loop only — neighbor structures,
//! field evaluations and state updates — never file output or the pairwise
//! separation diagnostics, so runtime ratios between models reflect model
//! cost alone.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, RunMode, SnapshotMode, SCHEMA_VERSION};
use crate::dynamics::{evacuation_ratio, step, StepConfig, StepContext, World};
use crate::eikonal::GridSpec;
use crate::error::{Error, Result};
use crate::local::{
    build_psi_table, load_psi_csv, psi_cache_key, save_psi_csv, scale_params, PsiBuildSpec,
    PsiTable,
};
use crate::meshfree::{weight, WeightParams};
use crate::output::{
    ensure_dir, read_evacuation_series, sf_snapshot_rows, snapshot_file_name, snapshot_rows,
    write_density_grid, write_evacuation_series, SNAPSHOT_HEADER,
};
use crate::scenario::{seed_particles, seed_sf_particles};
use crate::socialforce::{sf_step, solve_fields};
use crate::vec2::Vec2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub mode: String,
    pub config_hash: String,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: f64,
    pub steps: u64,
    pub n_initial: usize,
    pub n_active_final: usize,
    /// True once every particle has left through its exit.
    pub completed: bool,
    /// Time the last particle left, when the run completed.
    pub completion_time: Option<f64>,
    /// Wall-clock seconds spent in the physics loop (output excluded).
    pub physics_seconds: f64,
    /// Smallest active pairwise distance observed over the whole run.
    pub min_separation: f64,
    pub evacuation_file: String,
    pub failed: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReportFile {
    report: RunReport,
    config: RunConfig,
}

pub fn write_report(report: &RunReport, config: &RunConfig, path: &Path) -> Result<()> {
    let file = ReportFile {
        report: report.clone(),
        config: config.clone(),
    };
    let text = toml::to_string_pretty(&file)
        .map_err(|e| Error::InvalidConfig(format!("serialize report: {e}")))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_report(path: &Path) -> Result<(RunReport, RunConfig)> {
    let text = std::fs::read_to_string(path)?;
    let file: ReportFile = toml::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    Ok((file.report, file.config))
}

/// Shepard interpolation of the particle density onto a regular grid; cells
/// with zero total weight stay zero.
pub fn density_grid(
    pos: &[Vec2],
    rho: &[f64],
    active: &[bool],
    grid: &GridSpec,
    wp: &WeightParams,
) -> Vec<f64> {
    let mut num = vec![0.0; grid.len()];
    let mut den = vec![0.0; grid.len()];
    for (k, p) in pos.iter().enumerate() {
        if !active[k] {
            continue;
        }
        let i_lo = (((p.x - grid.origin.x - wp.h) / grid.dx - 0.5).floor()).max(0.0) as usize;
        let j_lo = (((p.y - grid.origin.y - wp.h) / grid.dx - 0.5).floor()).max(0.0) as usize;
        let i_hi = ((((p.x - grid.origin.x + wp.h) / grid.dx - 0.5).ceil()) as usize)
            .min(grid.nx.saturating_sub(1));
        let j_hi = ((((p.y - grid.origin.y + wp.h) / grid.dx - 0.5).ceil()) as usize)
            .min(grid.ny.saturating_sub(1));
        for j in j_lo..=j_hi {
            for i in i_lo..=i_hi {
                let w = weight(grid.center(i, j) - *p, wp);
                if w > 0.0 {
                    let idx = grid.idx(i, j);
                    num[idx] += w * rho[k];
                    den[idx] += w;
                }
            }
        }
    }
    num.iter()
        .zip(&den)
        .map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 })
        .collect()
}

/// Kernel table for a local-mode run, cached next to the outputs. A cache hit
/// reproduces the fresh build bit for bit, which the loader verifies by key.
pub fn psi_table_for(cfg: &RunConfig, out_dir: &Path) -> Result<PsiTable> {
    let sp = scale_params(&cfg.vision)?;
    let wp = cfg.weight_params();
    let cap = cfg.psi.zeta_cap.unwrap_or(wp.h / cfg.vision.lambda);
    let spec = PsiBuildSpec::new(cfg.psi.n_speeds, cfg.psi.n_cells, cap);
    let key = psi_cache_key(&sp, &spec);
    let path = out_dir.join(format!("psi_{key}.csv"));
    if path.exists() {
        if let Ok(table) = load_psi_csv(&path) {
            if table.cache_key() == key {
                return Ok(table);
            }
        }
    }
    let table = build_psi_table(&sp, &spec);
    save_psi_csv(&table, &path)?;
    Ok(table)
}

struct SnapshotSink {
    mode: SnapshotMode,
    dir: PathBuf,
    single: String,
    files: Vec<String>,
    index: usize,
}

impl SnapshotSink {
    fn new(mode: SnapshotMode, dir: &Path) -> Self {
        SnapshotSink {
            mode,
            dir: dir.to_path_buf(),
            single: format!("{SNAPSHOT_HEADER}\n"),
            files: Vec::new(),
            index: 0,
        }
    }

    fn emit(&mut self, rows: impl FnOnce(&mut String)) -> Result<()> {
        match self.mode {
            SnapshotMode::None => {}
            SnapshotMode::Single => rows(&mut self.single),
            SnapshotMode::PerSnapshot => {
                let name = snapshot_file_name(self.index);
                let mut body = format!("{SNAPSHOT_HEADER}\n");
                rows(&mut body);
                std::fs::write(self.dir.join(&name), body)?;
                self.files.push(name);
            }
        }
        self.index += 1;
        Ok(())
    }

    fn finish(self) -> Result<()> {
        if matches!(self.mode, SnapshotMode::Single) {
            std::fs::write(self.dir.join("snapshots.csv"), self.single)?;
        }
        Ok(())
    }
}

fn min_active_separation(pos: &[Vec2], active: &[bool]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pos.len() {
        if !active[i] {
            continue;
        }
        for j in (i + 1)..pos.len() {
            if !active[j] {
                continue;
            }
            best = best.min((pos[i] - pos[j]).norm_sq());
        }
    }
    best.sqrt()
}

/// Execute one configured run, writing everything into `out_dir`.
pub fn run(cfg: &RunConfig, config_hash: &str, out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    ensure_dir(out_dir)?;
    match cfg.step.mode {
        RunMode::SocialForce => run_social_force(cfg, config_hash, out_dir),
        _ => run_vision(cfg, config_hash, out_dir),
    }
}

fn blank_report(cfg: &RunConfig, config_hash: &str, n_initial: usize) -> RunReport {
    RunReport {
        schema_version: SCHEMA_VERSION,
        mode: cfg.step.mode.as_str().into(),
        config_hash: config_hash.into(),
        dt: cfg.step.dt,
        t_end: cfg.step.t_end,
        snapshot_every: cfg.step.snapshot_every,
        steps: 0,
        n_initial,
        n_active_final: n_initial,
        completed: false,
        completion_time: None,
        physics_seconds: 0.0,
        min_separation: f64::INFINITY,
        evacuation_file: "evacuation.csv".into(),
        failed: None,
    }
}

fn density_spec(cfg: &RunConfig) -> GridSpec {
    GridSpec::covering(
        cfg.scenario.width,
        cfg.scenario.height,
        cfg.output.density_grid_dx,
    )
}

fn run_vision(cfg: &RunConfig, config_hash: &str, out_dir: &Path) -> Result<RunReport> {
    let mut world = seed_particles(&cfg.scenario)?;
    let goals = cfg.scenario.goals();
    let domain = cfg.scenario.domain();
    let wp = cfg.weight_params();
    let psi = match cfg.step.mode {
        RunMode::VisionLocal => Some(psi_table_for(cfg, out_dir)?),
        _ => None,
    };
    let step_cfg = StepConfig {
        dt: cfg.step.dt,
        mode: cfg.step.mode.step_mode().expect("vision run"),
        repulsion: cfg.repulsion,
        integrator: cfg.step.integrator,
    };
    let ctx = StepContext {
        vision: &cfg.vision,
        weights: &wp,
        isolated_cap: cfg.scenario.initial_spacing * cfg.scenario.initial_spacing,
        goals: &goals,
        domain: &domain,
        psi: psi.as_ref(),
    };

    let mut report = blank_report(cfg, config_hash, world.n_initial);
    let mut sink = SnapshotSink::new(cfg.output.snapshots, out_dir);
    let mut evac: Vec<(f64, f64)> = Vec::new();
    let dgrid = density_spec(cfg);
    let mut next_snap = 0usize;
    let mut physics = 0.0f64;

    let total_steps = (cfg.step.t_end / cfg.step.dt).round() as u64;
    let mut emit =
        |world: &World, snap_idx: &mut usize, evac: &mut Vec<(f64, f64)>| -> Result<()> {
            evac.push((world.t, evacuation_ratio(world)));
            let mut sink_rows = |out: &mut String| snapshot_rows(out, world);
            sinks_emit(&mut sink, &mut sink_rows)?;
            if cfg.output.density_grid {
                let pos: Vec<Vec2> = world.particles.iter().map(|p| p.pos).collect();
                let rho: Vec<f64> = world.particles.iter().map(|p| p.rho).collect();
                let act: Vec<bool> = world.particles.iter().map(|p| p.active).collect();
                let values = density_grid(&pos, &rho, &act, &dgrid, &wp);
                write_density_grid(
                    &out_dir.join(format!("density_{:06}.txt", *snap_idx)),
                    world.t,
                    &dgrid,
                    &values,
                )?;
            }
            *snap_idx += 1;
            Ok(())
        };

    emit(&world, &mut next_snap, &mut evac)?;
    let outcome: Result<()> = (|| {
        for k in 0..total_steps {
            let start = Instant::now();
            step(&mut world, &step_cfg, &ctx)?;
            physics += start.elapsed().as_secs_f64();

            {
                let pos: Vec<Vec2> = world.particles.iter().map(|p| p.pos).collect();
                let act: Vec<bool> = world.particles.iter().map(|p| p.active).collect();
                report.min_separation =
                    report.min_separation.min(min_active_separation(&pos, &act));
            }
            report.steps = k + 1;
            if world.t + 1e-9 >= next_snap as f64 * cfg.step.snapshot_every {
                emit(&world, &mut next_snap, &mut evac)?;
            }
            if world.active_count() == 0 {
                break;
            }
        }
        Ok(())
    })();

    report.physics_seconds = physics;
    report.n_active_final = world.active_count();
    report.completed = report.n_active_final == 0;
    report.completion_time = if report.completed {
        world
            .exit_times
            .iter()
            .flatten()
            .cloned()
            .fold(None, |m, t| Some(m.map_or(t, |m: f64| m.max(t))))
    } else {
        None
    };
    if let Err(e) = &outcome {
        report.failed = Some(e.to_string());
    }
    // final state of the series, then flush everything
    if evac.last().map(|&(t, _)| t) != Some(world.t) {
        evac.push((world.t, evacuation_ratio(&world)));
    }
    write_evacuation_series(&out_dir.join(&report.evacuation_file), &evac)?;
    sink.finish()?;
    write_report(&report, cfg, &out_dir.join("report.toml"))?;
    outcome?;
    Ok(report)
}

// indirection so the closure above can borrow the sink mutably
fn sinks_emit(sink: &mut SnapshotSink, rows: &mut dyn FnMut(&mut String)) -> Result<()> {
    sink.emit(|out| rows(out))
}

fn run_social_force(cfg: &RunConfig, config_hash: &str, out_dir: &Path) -> Result<RunReport> {
    let sf = cfg.socialforce.as_ref().expect("validated");
    let mut world = seed_sf_particles(&cfg.scenario)?;
    let domain = cfg.scenario.domain();
    let wp = cfg.weight_params();
    let n_groups = cfg.scenario.n_groups();
    let grid = GridSpec::covering(cfg.scenario.width, cfg.scenario.height, sf.grid_dx);
    let isolated_cap = cfg.scenario.initial_spacing * cfg.scenario.initial_spacing;

    let mut report = blank_report(cfg, config_hash, world.n_initial);
    let mut sink = SnapshotSink::new(cfg.output.snapshots, out_dir);
    let mut evac: Vec<(f64, f64)> = Vec::new();
    let dgrid = density_spec(cfg);
    let mut next_snap = 0usize;
    let mut physics = 0.0f64;
    let mut last_steering: Option<crate::socialforce::SteeringFields> = if cfg.output.phi_grids {
        Some(solve_fields(&world, sf, &domain, &grid, &wp, n_groups))
    } else {
        None
    };

    let ratio = |w: &crate::socialforce::SfWorld| {
        if w.n_initial == 0 {
            0.0
        } else {
            w.active_count() as f64 / w.n_initial as f64
        }
    };

    let total_steps = (cfg.step.t_end / cfg.step.dt).round() as u64;
    let mut emit = |world: &crate::socialforce::SfWorld,
                    steering: Option<&crate::socialforce::SteeringFields>,
                    snap_idx: &mut usize,
                    evac: &mut Vec<(f64, f64)>|
     -> Result<()> {
        evac.push((world.t, ratio(world)));
        let mut rows = |out: &mut String| sf_snapshot_rows(out, world);
        sinks_emit(&mut sink, &mut rows)?;
        if cfg.output.density_grid {
            let pos: Vec<Vec2> = world.particles.iter().map(|p| p.pos).collect();
            let rho: Vec<f64> = world.particles.iter().map(|p| p.rho).collect();
            let act: Vec<bool> = world.particles.iter().map(|p| p.active).collect();
            let values = density_grid(&pos, &rho, &act, &dgrid, &wp);
            write_density_grid(
                &out_dir.join(format!("density_{:06}.txt", *snap_idx)),
                world.t,
                &dgrid,
                &values,
            )?;
        }
        if let Some(steering) = steering {
            for (g, field) in steering.fields.iter().enumerate() {
                write_density_grid(
                    &out_dir.join(format!("phi_g{g}_{:06}.txt", *snap_idx)),
                    world.t,
                    &steering.grid,
                    &field.phi,
                )?;
            }
        }
        *snap_idx += 1;
        Ok(())
    };

    emit(&world, last_steering.as_ref(), &mut next_snap, &mut evac)?;
    let outcome: Result<()> = (|| {
        for k in 0..total_steps {
            let start = Instant::now();
            // the steering field depends on the density and is re-solved
            // every step; this is the dominant cost by design
            let steering = solve_fields(&world, sf, &domain, &grid, &wp, n_groups);
            sf_step(
                &mut world,
                sf,
                &steering,
                &wp,
                isolated_cap,
                cfg.step.dt,
                &domain,
            )?;
            physics += start.elapsed().as_secs_f64();
            if cfg.output.phi_grids {
                last_steering = Some(steering);
            }

            {
                let pos: Vec<Vec2> = world.particles.iter().map(|p| p.pos).collect();
                let act: Vec<bool> = world.particles.iter().map(|p| p.active).collect();
                report.min_separation =
                    report.min_separation.min(min_active_separation(&pos, &act));
            }
            report.steps = k + 1;
            if world.t + 1e-9 >= next_snap as f64 * cfg.step.snapshot_every {
                emit(&world, last_steering.as_ref(), &mut next_snap, &mut evac)?;
            }
            if world.active_count() == 0 {
                break;
            }
        }
        Ok(())
    })();

    report.physics_seconds = physics;
    report.n_active_final = world.active_count();
    report.completed = report.n_active_final == 0;
    report.completion_time = if report.completed {
        world
            .exit_times
            .iter()
            .flatten()
            .cloned()
            .fold(None, |m, t| Some(m.map_or(t, |m: f64| m.max(t))))
    } else {
        None
    };
    if let Err(e) = &outcome {
        report.failed = Some(e.to_string());
    }
    if evac.last().map(|&(t, _)| t) != Some(world.t) {
        evac.push((world.t, ratio(&world)));
    }
    write_evacuation_series(&out_dir.join(&report.evacuation_file), &evac)?;
    sink.finish()?;
    write_report(&report, cfg, &out_dir.join("report.toml"))?;
    outcome?;
    Ok(report)
}

/// A finished run loaded back for comparison.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub label: String,
    pub report: RunReport,
    pub evac: Vec<(f64, f64)>,
}

pub fn load_run(report_path: &Path) -> Result<LoadedRun> {
    let (report, _cfg) = read_report(report_path)?;
    let dir = report_path.parent().unwrap_or(Path::new("."));
    let evac = read_evacuation_series(&dir.join(&report.evacuation_file))?;
    let label = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| report.mode.clone());
    Ok(LoadedRun {
        label,
        report,
        evac,
    })
}

/// Aligned evacuation series, completion times and runtime ratios.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub times: Vec<f64>,
    /// ratios[run][time index]; early-completed runs hold their final value.
    pub ratios: Vec<Vec<f64>>,
    pub completion_times: Vec<Option<f64>>,
    pub physics_seconds: Vec<f64>,
    pub runtime_ratio_vs_first: Vec<f64>,
}

pub fn compare_runs(runs: &[LoadedRun]) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::MismatchedConfigs(
            "need at least two runs to compare".into(),
        ));
    }
    let t_end = runs[0].report.t_end;
    let cadence = runs[0].report.snapshot_every;
    for r in runs {
        if (r.report.t_end - t_end).abs() > 1e-12 {
            return Err(Error::MismatchedConfigs(format!(
                "t_end differs: {} vs {}",
                r.report.t_end, t_end
            )));
        }
        if (r.report.snapshot_every - cadence).abs() > 1e-12 {
            return Err(Error::MismatchedConfigs(format!(
                "snapshot cadence differs: {} vs {}",
                r.report.snapshot_every, cadence
            )));
        }
    }
    let n_times = runs.iter().map(|r| r.evac.len()).max().unwrap_or(0);
    let times: Vec<f64> = (0..n_times)
        .map(|k| {
            runs.iter()
                .find_map(|r| r.evac.get(k).map(|&(t, _)| t))
                .unwrap_or(k as f64 * cadence)
        })
        .collect();
    let ratios: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| {
            (0..n_times)
                .map(|k| {
                    r.evac
                        .get(k)
                        .map(|&(_, v)| v)
                        .unwrap_or_else(|| r.evac.last().map(|&(_, v)| v).unwrap_or(0.0))
                })
                .collect()
        })
        .collect();
    let base = runs[0].report.physics_seconds.max(1e-12);
    Ok(Comparison {
        labels: runs.iter().map(|r| r.label.clone()).collect(),
        times,
        ratios,
        completion_times: runs.iter().map(|r| r.report.completion_time).collect(),
        physics_seconds: runs.iter().map(|r| r.report.physics_seconds).collect(),
        runtime_ratio_vs_first: runs
            .iter()
            .map(|r| r.report.physics_seconds / base)
            .collect(),
    })
}

pub fn write_comparison(cmp: &Comparison, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let mut out = String::from("t");
    for l in &cmp.labels {
        let _ = write!(out, ",{l}");
    }
    out.push('\n');
    for (k, t) in cmp.times.iter().enumerate() {
        let _ = write!(out, "{t}");
        for r in &cmp.ratios {
            let _ = write!(out, ",{}", r[k]);
        }
        out.push('\n');
    }
    std::fs::write(dir.join("comparison.csv"), out)?;

    let mut out = String::from("run,completion_time,physics_seconds,runtime_ratio_vs_first\n");
    for k in 0..cmp.labels.len() {
        let ct = cmp.completion_times[k]
            .map(|t| t.to_string())
            .unwrap_or_else(|| "none".into());
        let _ = writeln!(
            out,
            "{},{},{},{}",
            cmp.labels[k], ct, cmp.physics_seconds[k], cmp.runtime_ratio_vs_first[k]
        );
    }
    std::fs::write(dir.join("comparison_summary.csv"), out)?;
    Ok(())
}

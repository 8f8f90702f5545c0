//! File writers. All numbers are written with Rust's shortest round-trip
//! float formatting, so identical runs produce byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dynamics::World;
use crate::eikonal::GridSpec;
use crate::error::{Error, Result};
use crate::socialforce::SfWorld;

pub const SNAPSHOT_HEADER: &str = "t,particle_id,group,x,y,ux,uy,rho,active";

/// Append snapshot rows for the vision model (ux, uy: unit heading).
pub fn snapshot_rows(out: &mut String, world: &World) {
    for (id, p) in world.particles.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            world.t,
            id,
            p.group,
            p.pos.x,
            p.pos.y,
            p.dir.x,
            p.dir.y,
            p.rho,
            u8::from(p.active)
        );
    }
}

/// Append snapshot rows for the social-force model (ux, uy: velocity).
pub fn sf_snapshot_rows(out: &mut String, world: &SfWorld) {
    for (id, p) in world.particles.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            world.t,
            id,
            p.group,
            p.pos.x,
            p.pos.y,
            p.vel.x,
            p.vel.y,
            p.rho,
            u8::from(p.active)
        );
    }
}

/// Plain-text matrix with a four-line header; loads directly into most
/// plotting tools.
pub fn write_density_grid(path: &Path, t: f64, grid: &GridSpec, values: &[f64]) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# t {t}");
    let _ = writeln!(out, "# nx {}", grid.nx);
    let _ = writeln!(out, "# ny {}", grid.ny);
    let _ = writeln!(out, "# dx {}", grid.dx);
    for j in 0..grid.ny {
        let mut line = String::new();
        for i in 0..grid.nx {
            if i > 0 {
                line.push(' ');
            }
            let _ = write!(line, "{}", values[grid.idx(i, j)]);
        }
        let _ = writeln!(out, "{line}");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_evacuation_series(path: &Path, series: &[(f64, f64)]) -> Result<()> {
    let mut out = String::from("t,ratio\n");
    for (t, r) in series {
        let _ = writeln!(out, "{t},{r}");
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_evacuation_series(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut series = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if k == 0 || line.is_empty() {
            continue;
        }
        let mut it = line.split(',');
        let t = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidConfig(format!("bad evacuation row: {line}")))?;
        let r = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::InvalidConfig(format!("bad evacuation row: {line}")))?;
        series.push((t, r));
    }
    Ok(series)
}

/// Naming for per-snapshot files: snap_000013.csv
pub fn snapshot_file_name(index: usize) -> String {
    format!("snap_{index:06}.csv")
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn join(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

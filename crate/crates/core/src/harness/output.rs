//! CSV series and atomic file emission.
//!
//! Every CSV starts with a `# kahler-flow <file> v<N>` comment line; the
//! column set of each file is fixed per version.

use crate::flow::{NodeRecord, StepRecord, StructureCheck};
use crate::oneill::CurvatureDiagnostics;
use crate::singularity::{RescaledPick, RescaledRow};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use std::path::Path;

pub const CSV_VERSION: u32 = 1;

/// One row of `flow.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub lower: f64,
    pub upper: f64,
    pub fiber_scale: f64,
    pub min_f: f64,
    pub max_f: f64,
    pub max_grad_sq: f64,
    pub heat_residual: f64,
    pub tail_slope_error: f64,
    pub argmax_node: usize,
    pub argmax_rho: f64,
    pub a_norm_sq: f64,
    pub grad_ln_f_norm_sq: f64,
    pub vertical_sectional: f64,
    pub horizontal_sectional: f64,
    pub mixed_sectional: f64,
    pub dominant_scalar: f64,
    pub rm_norm: f64,
    pub horizontal_sectional_max: f64,
    pub vertical_sectional_max: f64,
    pub fiber_area: f64,
    pub newton_iterations: usize,
}

impl From<&StepRecord> for FlowRow {
    fn from(s: &StepRecord) -> Self {
        let d = &s.at_max;
        Self {
            step: s.step,
            t: s.t,
            dt: s.dt,
            lower: s.lower,
            upper: s.upper,
            fiber_scale: s.fiber_scale,
            min_f: s.min_f,
            max_f: s.max_f,
            max_grad_sq: s.max_grad_sq,
            heat_residual: s.heat_residual,
            tail_slope_error: s.tail_slope_error,
            argmax_node: s.argmax_node,
            argmax_rho: s.argmax_rho,
            a_norm_sq: d.a_norm_sq,
            grad_ln_f_norm_sq: d.grad_ln_f_norm_sq,
            vertical_sectional: d.vertical_sectional,
            horizontal_sectional: d.horizontal_sectional,
            mixed_sectional: d.mixed_sectional,
            dominant_scalar: d.dominant_scalar,
            rm_norm: d.rm_norm,
            horizontal_sectional_max: s.horizontal_sectional_max,
            vertical_sectional_max: s.vertical_sectional_max,
            fiber_area: s.fiber_area,
            newton_iterations: s.newton_iterations,
        }
    }
}

impl From<&FlowRow> for StepRecord {
    fn from(r: &FlowRow) -> Self {
        Self {
            step: r.step,
            t: r.t,
            dt: r.dt,
            lower: r.lower,
            upper: r.upper,
            fiber_scale: r.fiber_scale,
            min_f: r.min_f,
            max_f: r.max_f,
            max_grad_sq: r.max_grad_sq,
            heat_residual: r.heat_residual,
            tail_slope_error: r.tail_slope_error,
            argmax_node: r.argmax_node,
            argmax_rho: r.argmax_rho,
            at_max: CurvatureDiagnostics {
                a_norm_sq: r.a_norm_sq,
                grad_ln_f_norm_sq: r.grad_ln_f_norm_sq,
                vertical_sectional: r.vertical_sectional,
                horizontal_sectional: r.horizontal_sectional,
                mixed_sectional: r.mixed_sectional,
                dominant_scalar: r.dominant_scalar,
                rm_norm: r.rm_norm,
            },
            horizontal_sectional_max: r.horizontal_sectional_max,
            vertical_sectional_max: r.vertical_sectional_max,
            fiber_area: r.fiber_area,
            newton_iterations: r.newton_iterations,
        }
    }
}

/// One row of `diagnostics.csv`: a tracked node at a recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRow {
    pub step: usize,
    pub t: f64,
    pub node: usize,
    pub rho: f64,
    pub f: f64,
    pub v: f64,
    pub a_norm_sq: f64,
    pub grad_ln_f_norm_sq: f64,
    pub vertical_sectional: f64,
    pub horizontal_sectional: f64,
    pub mixed_sectional: f64,
    pub dominant_scalar: f64,
    pub rm_norm: f64,
}

impl From<&NodeRecord> for NodeRow {
    fn from(r: &NodeRecord) -> Self {
        let d = &r.diag;
        Self {
            step: r.step,
            t: r.t,
            node: r.node,
            rho: r.rho,
            f: r.f,
            v: r.v,
            a_norm_sq: d.a_norm_sq,
            grad_ln_f_norm_sq: d.grad_ln_f_norm_sq,
            vertical_sectional: d.vertical_sectional,
            horizontal_sectional: d.horizontal_sectional,
            mixed_sectional: d.mixed_sectional,
            dominant_scalar: d.dominant_scalar,
            rm_norm: d.rm_norm,
        }
    }
}

fn csv_bytes<T: Serialize>(name: &str, comments: &[String], rows: &[T]) -> io::Result<Vec<u8>> {
    let mut out = Vec::new();
    writeln!(out, "# kahler-flow {name} v{CSV_VERSION}")?;
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(&mut out);
    for r in rows {
        w.serialize(r).map_err(io::Error::other)?;
    }
    w.flush()?;
    drop(w);
    Ok(out)
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, comments: &[String], rows: &[T]) -> io::Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("series.csv");
    write_atomic(path, &csv_bytes(name, comments, rows)?)
}

/// Reads a CSV written by [`write_csv`], checking the version line.
pub fn read_csv<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or_default();
    let expected = format!("v{CSV_VERSION}");
    if !(first.starts_with("# kahler-flow") && first.ends_with(&expected)) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("{}: missing or unsupported version header `{first}`", path.display()),
        ));
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())))
}

pub fn write_flow_csv(path: &Path, steps: &[StepRecord]) -> io::Result<()> {
    let rows: Vec<FlowRow> = steps.iter().map(FlowRow::from).collect();
    write_csv(path, &[], &rows)
}

pub fn read_flow_csv(path: &Path) -> io::Result<Vec<StepRecord>> {
    Ok(read_csv::<FlowRow>(path)?.iter().map(StepRecord::from).collect())
}

pub fn write_diagnostics_csv(path: &Path, nodes: &[NodeRecord]) -> io::Result<()> {
    let rows: Vec<NodeRow> = nodes.iter().map(NodeRow::from).collect();
    write_csv(path, &[], &rows)
}

pub fn write_structure_csv(path: &Path, checks: &[StructureCheck]) -> io::Result<()> {
    write_csv(path, &[], checks)
}

pub fn read_structure_csv(path: &Path) -> io::Result<Vec<StructureCheck>> {
    read_csv(path)
}

pub fn write_rescaled_csv(path: &Path, pick: &RescaledPick) -> io::Result<()> {
    let p = &pick.pick;
    let comments = vec![format!(
        "pick step={} t={} node={} rho={} K={} alpha={} beta={}",
        p.step, p.t, p.node, p.rho, p.curvature, pick.alpha, pick.beta
    )];
    let rows: Vec<RescaledRow> = pick.rows.clone();
    write_csv(path, &comments, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_rows_round_trip_exactly() {
        let s = StepRecord {
            step: 3,
            t: 0.1 + 0.2,
            dt: 1e-7,
            lower: 1.0 / 3.0,
            upper: 2.0,
            fiber_scale: 0.5,
            min_f: 1.0,
            max_f: 2.0,
            max_grad_sq: 0.25,
            heat_residual: f64::NAN,
            tail_slope_error: 5e-4,
            argmax_node: 138,
            argmax_rho: -9.197651663405,
            at_max: CurvatureDiagnostics {
                a_norm_sq: 1e-300,
                grad_ln_f_norm_sq: 2.0,
                vertical_sectional: -3.5,
                horizontal_sectional: 1.0,
                mixed_sectional: -0.5,
                dominant_scalar: 7.0,
                rm_norm: 6.9,
            },
            horizontal_sectional_max: 2.0,
            vertical_sectional_max: 2.0,
            fiber_area: std::f64::consts::TAU,
            newton_iterations: 6,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.csv");
        write_flow_csv(&path, &[s]).unwrap();
        let back = read_flow_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert!(back[0].heat_residual.is_nan());
        let mut a = back[0];
        a.heat_residual = 0.0;
        let mut b = s;
        b.heat_residual = 0.0;
        assert_eq!(a, b);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# kahler-flow flow.csv v1\nstep,t,dt,"));
    }

    #[test]
    fn unversioned_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("flow.csv");
        std::fs::write(&path, "step,t\n1,0.5\n").unwrap();
        assert!(read_flow_csv(&path).is_err());
    }
}

//! File formats: point clouds, couplings, configuration, reports,
//! transforms, and SVG figures.
//!
//! Point clouds are CSV with header `x,y[,z],cluster[,weight]`. Clusters are
//! ordered by first appearance. Cluster masses are proportional to the total
//! raw weight of each cluster unless `<file>.masses.json` (an object mapping
//! label to mass) sits next to the file. Couplings are CSV
//! `source_index,target_index,mass`, sorted, with zero entries omitted.
//! Reals are written with 17 significant digits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::align::TransformRecord;
use crate::error::{JgwError, Result};
use crate::solver::{SolveReport, SolverConfig};
use crate::space::{embed, ClusteredSpace, Coupling, PointCluster};

/// Entries at or below this mass are left out of coupling files by default.
pub const DEFAULT_COUPLING_THRESHOLD: f64 = 1e-12;

fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| JgwError::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| JgwError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> JgwError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => JgwError::io(path, source),
        kind => JgwError::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Path of the optional masses sidecar of a point-cloud file.
pub fn masses_sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".masses.json");
    PathBuf::from(name)
}

pub fn read_point_cloud(path: impl AsRef<Path>) -> Result<ClusteredSpace> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_owned)
        .collect();
    let schema = |message: String| JgwError::Schema {
        path: path.to_path_buf(),
        message,
    };
    let cluster_col = header
        .iter()
        .position(|h| h == "cluster")
        .ok_or_else(|| schema("missing \"cluster\" column".into()))?;
    let expected: &[&str] = match cluster_col {
        2 => &["x", "y"],
        3 => &["x", "y", "z"],
        _ => return Err(schema("header must be x,y[,z],cluster[,weight]".into())),
    };
    if header[..cluster_col] != *expected {
        return Err(schema("header must be x,y[,z],cluster[,weight]".into()));
    }
    let has_weight = match &header[cluster_col + 1..] {
        [] => false,
        [w] if w == "weight" => true,
        _ => return Err(schema("header must be x,y[,z],cluster[,weight]".into())),
    };
    let dim = cluster_col;
    let width = header.len();

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| JgwError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != width {
            return Err(parse_err(format!("expected {width} fields, found {}", record.len())));
        }
        let mut coords = Vec::with_capacity(dim);
        for field in record.iter().take(dim) {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("invalid coordinate {field:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite coordinate {field:?}")));
            }
            coords.push(v);
        }
        let label = record[cluster_col].to_owned();
        if label.is_empty() {
            return Err(parse_err("empty cluster label".into()));
        }
        let weight = if has_weight {
            let field = &record[cluster_col + 1];
            let w: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("invalid weight {field:?}")))?;
            if !(w > 0.0 && w.is_finite()) {
                return Err(parse_err(format!("weight must be positive, found {field}")));
            }
            w
        } else {
            1.0
        };
        let entry = groups.entry(label.clone()).or_insert_with(|| {
            order.push(label);
            (Vec::new(), Vec::new())
        });
        entry.0.extend(coords);
        entry.1.push(weight);
    }
    if order.is_empty() {
        return Err(schema("no data rows".into()));
    }

    let raw_masses: Vec<f64> = order.iter().map(|l| groups[l].1.iter().sum()).collect();
    let total: f64 = raw_masses.iter().sum();
    let masses = match read_masses_sidecar(path, &order)? {
        Some(m) => m,
        None => raw_masses.iter().map(|m| m / total).collect(),
    };
    let clusters = order
        .into_iter()
        .map(|label| {
            let (coords, weights) = groups.remove(&label).expect("grouped label");
            let n = weights.len();
            let points = Array2::from_shape_vec((n, dim), coords).expect("row-major coordinates");
            PointCluster::new(label, points).with_weights(weights)
        })
        .collect();
    crate::space::build_clustered_space(clusters, Some(masses))
}

fn read_masses_sidecar(path: &Path, order: &[String]) -> Result<Option<Vec<f64>>> {
    let sidecar = masses_sidecar(path);
    if !sidecar.exists() {
        return Ok(None);
    }
    let map: HashMap<String, f64> = read_json(&sidecar)?;
    let schema = |message: String| JgwError::Schema {
        path: sidecar.clone(),
        message,
    };
    if let Some(extra) = map.keys().find(|k| !order.contains(k)) {
        return Err(schema(format!("unknown cluster label {extra:?}")));
    }
    let masses = order
        .iter()
        .map(|l| map.get(l).copied().ok_or_else(|| schema(format!("no mass for cluster {l:?}"))))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Some(masses))
}

/// Writes a space with retained coordinates. Each point's weight is its
/// share of the total mass, so reading the file back restores both the
/// measures and the cluster masses.
pub fn write_point_cloud(path: impl AsRef<Path>, space: &ClusteredSpace) -> Result<()> {
    let path = path.as_ref();
    let dim = space
        .dim()
        .ok_or_else(|| JgwError::InvalidArgument("space has no consistent coordinates".into()))?;
    if !(dim == 2 || dim == 3) {
        return Err(JgwError::InvalidArgument(format!(
            "point clouds are 2D or 3D, found {dim}D"
        )));
    }
    let mut w = create(path)?;
    let axes = if dim == 2 { "x,y" } else { "x,y,z" };
    let io = |e| JgwError::io(path, e);
    writeln!(w, "{axes},cluster,weight").map_err(io)?;
    for (cluster, &mass) in space.clusters().iter().zip(space.masses()) {
        if cluster.label().contains([',', '"', '\n']) {
            return Err(JgwError::InvalidArgument(format!(
                "cluster label {:?} cannot be written unquoted",
                cluster.label()
            )));
        }
        let points = cluster.points().expect("checked by dim");
        for (row, &m) in points.rows().into_iter().zip(cluster.measure()) {
            let mut line = String::new();
            for x in row {
                line.push_str(&fmt_real(*x));
                line.push(',');
            }
            let _ = write!(line, "{},{}", cluster.label(), fmt_real(m * mass));
            writeln!(w, "{line}").map_err(io)?;
        }
    }
    finish(path, w)
}

/// Entries of `plan` above `threshold`, row-major.
pub fn write_coupling(path: impl AsRef<Path>, mu: &Coupling, threshold: f64) -> Result<()> {
    write_plan(path.as_ref(), mu.plan().view(), threshold)
}

fn write_plan(path: &Path, plan: ArrayView2<'_, f64>, threshold: f64) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| JgwError::io(path, e);
    writeln!(w, "source_index,target_index,mass").map_err(io)?;
    for ((i, j), &m) in plan.indexed_iter() {
        if m > threshold {
            writeln!(w, "{i},{j},{}", fmt_real(m)).map_err(io)?;
        }
    }
    finish(path, w)
}

/// Reads a coupling file into a zero-filled `shape` matrix.
pub fn read_coupling_plan(path: impl AsRef<Path>, shape: (usize, usize)) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().collect::<Vec<_>>() != ["source_index", "target_index", "mass"] {
        return Err(JgwError::Schema {
            path: path.to_path_buf(),
            message: "header must be source_index,target_index,mass".into(),
        });
    }
    let mut plan = Array2::zeros(shape);
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let parse_err = |message: String| JgwError::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", record.len())));
        }
        let i: usize = record[0].parse().map_err(|_| parse_err(format!("invalid index {:?}", &record[0])))?;
        let j: usize = record[1].parse().map_err(|_| parse_err(format!("invalid index {:?}", &record[1])))?;
        let m: f64 = record[2].parse().map_err(|_| parse_err(format!("invalid mass {:?}", &record[2])))?;
        if i >= shape.0 || j >= shape.1 {
            return Err(parse_err(format!("entry ({i}, {j}) outside {}x{}", shape.0, shape.1)));
        }
        if !(m >= 0.0 && m.is_finite()) {
            return Err(parse_err(format!("mass must be nonnegative, found {m}")));
        }
        plan[[i, j]] = m;
    }
    Ok(plan)
}

/// Reads a coupling between two spaces; marginals come from the spaces.
pub fn read_coupling(path: impl AsRef<Path>, source: &ClusteredSpace, target: &ClusteredSpace) -> Result<Coupling> {
    let ex = embed(source);
    let ey = embed(target);
    let plan = read_coupling_plan(path, (ex.len(), ey.len()))?;
    Coupling::new(plan, ex.marginal().to_vec(), ey.marginal().to_vec())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| JgwError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| JgwError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| JgwError::io(path, e.into()))?;
    writeln!(w).map_err(|e| JgwError::io(path, e))?;
    finish(path, w)
}

/// Reads and validates a configuration; missing keys take their defaults.
pub fn read_config(path: impl AsRef<Path>) -> Result<SolverConfig> {
    let path = path.as_ref();
    let config: SolverConfig = read_json(path)?;
    config.validate().map_err(|e| JgwError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(config)
}

pub fn write_config(path: impl AsRef<Path>, config: &SolverConfig) -> Result<()> {
    write_json(path, config)
}

pub fn write_report(path: impl AsRef<Path>, report: &SolveReport) -> Result<()> {
    write_json(path, report)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<SolveReport> {
    read_json(path)
}

pub fn write_transforms(path: impl AsRef<Path>, records: &[TransformRecord]) -> Result<()> {
    write_json(path, records)
}

pub fn read_transforms(path: impl AsRef<Path>) -> Result<Vec<TransformRecord>> {
    read_json(path)
}

/// Layout of [`render_svg`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvgOptions {
    /// Coupling edges drawn per source point, heaviest first.
    pub top_edges_per_point: usize,
    /// Coordinate axes shown horizontally and vertically; 3D inputs are
    /// projected orthographically onto them.
    pub axes: (usize, usize),
    pub width: f64,
    pub height: f64,
}

impl Default for SvgOptions {
    fn default() -> Self {
        SvgOptions {
            top_edges_per_point: 1,
            axes: (0, 1),
            width: 800.0,
            height: 600.0,
        }
    }
}

const SOURCE_COLOR: &str = "#1f77b4";
const TARGET_COLOR: &str = "#d62728";
const MARGIN: f64 = 20.0;

/// Scatter of both point sets with the heaviest coupling edges of every
/// source point; edge opacity is the mass over the largest entry.
pub fn render_svg(
    source: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    plan: Option<ArrayView2<'_, f64>>,
    options: &SvgOptions,
) -> Result<String> {
    let (ax, ay) = options.axes;
    for (name, pts) in [("source", &source), ("target", &target)] {
        if pts.nrows() > 0 && (ax >= pts.ncols() || ay >= pts.ncols()) {
            return Err(JgwError::InvalidArgument(format!(
                "{name} points have {} coordinates, axes {:?} requested",
                pts.ncols(),
                options.axes
            )));
        }
    }
    if let Some(p) = &plan {
        let expected = (source.nrows(), target.nrows());
        if p.dim() != expected {
            return Err(JgwError::ShapeMismatch {
                what: "plotted coupling",
                expected,
                found: p.dim(),
            });
        }
    }

    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for row in source.rows().into_iter().chain(target.rows()) {
        for (k, a) in [ax, ay].into_iter().enumerate() {
            lo[k] = lo[k].min(row[a]);
            hi[k] = hi[k].max(row[a]);
        }
    }
    let span = |k: usize| if hi[k] > lo[k] { hi[k] - lo[k] } else { 1.0 };
    let scale = ((options.width - 2.0 * MARGIN) / span(0)).min((options.height - 2.0 * MARGIN) / span(1));
    let project = |row: ndarray::ArrayView1<'_, f64>| {
        let x = MARGIN + (row[ax] - lo[0]) * scale;
        let y = options.height - MARGIN - (row[ay] - lo[1]) * scale;
        (x, y)
    };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = options.width,
        h = options.height
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    if let Some(p) = plan {
        let max = p.iter().copied().fold(0.0, f64::max);
        if max > 0.0 && options.top_edges_per_point > 0 {
            let _ = writeln!(svg, r##"<g stroke="#555555" stroke-width="1">"##);
            for (i, row) in p.rows().into_iter().enumerate() {
                let mut order: Vec<usize> = (0..row.len()).filter(|&j| row[j] > 0.0).collect();
                order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
                let (x1, y1) = project(source.row(i));
                for &j in order.iter().take(options.top_edges_per_point) {
                    let (x2, y2) = project(target.row(j));
                    let _ = writeln!(
                        svg,
                        r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke-opacity="{:.4}"/>"#,
                        (row[j] / max).clamp(0.0, 1.0)
                    );
                }
            }
            let _ = writeln!(svg, "</g>");
        }
    }
    for (pts, color) in [(&source, SOURCE_COLOR), (&target, TARGET_COLOR)] {
        let _ = writeln!(svg, r#"<g fill="{color}">"#);
        for row in pts.rows() {
            let (x, y) = project(row);
            let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="3"/>"#);
        }
        let _ = writeln!(svg, "</g>");
    }
    let _ = writeln!(svg, "</svg>");
    Ok(svg)
}

pub fn write_svg_scatter(
    path: impl AsRef<Path>,
    source: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    plan: Option<ArrayView2<'_, f64>>,
    options: &SvgOptions,
) -> Result<()> {
    let path = path.as_ref();
    let svg = render_svg(source, target, plan, options)?;
    std::fs::write(path, svg).map_err(|e| JgwError::io(path, e))
}

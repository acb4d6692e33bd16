//! Plain-text persistence.
//!
//! Field files hold a grid, named scalars and named arrays:
//!
//! ```text
//! vpflow-fields 1
//! grid <nx> <ny> <lx> <ly>
//! scalar <name> <value>
//! field <name>
//! <ny rows of nx values>
//! ```
//!
//! Trajectories are one `key=value` record per line. Tables are CSV with a
//! header row. Floats are written with 17 significant digits, which
//! round-trips every `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::flow::{FlowRecord, FlowStatus};
use crate::foliation::ReferenceSurfaceData;
use crate::grid::{Field, Grid};

const FIELD_MAGIC: &str = "vpflow-fields 1";

/// Round-trip safe decimal literal.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn parse_f64(s: &str, context: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| Error::Parse {
        context: context.into(),
        detail: format!("'{s}': {e}"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldFile {
    pub grid: Grid,
    pub scalars: Vec<(String, f64)>,
    pub fields: Vec<(String, Field)>,
}

impl FieldFile {
    pub fn new(grid: Grid) -> Self {
        FieldFile {
            grid,
            scalars: Vec::new(),
            fields: Vec::new(),
        }
    }

    pub fn with_scalar(mut self, name: &str, value: f64) -> Self {
        self.scalars.push((name.into(), value));
        self
    }

    pub fn with_field(mut self, name: &str, field: Field) -> Self {
        self.fields.push((name.into(), field));
        self
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        self.scalars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::Parse {
                context: "field file".into(),
                detail: format!("missing scalar '{name}'"),
            })
    }

    pub fn field(&self, name: &str) -> Result<&Field> {
        self.fields
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f)
            .ok_or_else(|| Error::Parse {
                context: "field file".into(),
                detail: format!("missing field '{name}'"),
            })
    }

    pub fn to_text(&self) -> String {
        let g = &self.grid;
        let mut out = String::new();
        writeln!(out, "{FIELD_MAGIC}").unwrap();
        writeln!(out, "grid {} {} {} {}", g.nx, g.ny, fmt_f64(g.lx), fmt_f64(g.ly)).unwrap();
        for (name, v) in &self.scalars {
            writeln!(out, "scalar {name} {}", fmt_f64(*v)).unwrap();
        }
        for (name, f) in &self.fields {
            writeln!(out, "field {name}").unwrap();
            for row in f.rows() {
                let line: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
                out.push_str(&line.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |detail: String| Error::Parse {
            context: "field file".into(),
            detail,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(FIELD_MAGIC) {
            return Err(err(format!("first line must be '{FIELD_MAGIC}'")));
        }
        let grid_line = lines.next().ok_or_else(|| err("missing grid line".into()))?;
        let parts: Vec<&str> = grid_line.split_whitespace().collect();
        if parts.len() != 5 || parts[0] != "grid" {
            return Err(err(format!("bad grid line '{grid_line}'")));
        }
        let nx: usize = parts[1].parse().map_err(|e| err(format!("nx: {e}")))?;
        let ny: usize = parts[2].parse().map_err(|e| err(format!("ny: {e}")))?;
        let grid = Grid::new(nx, ny, parse_f64(parts[3], "lx")?, parse_f64(parts[4], "ly")?)?;
        let mut file = FieldFile::new(grid);
        while let Some(line) = lines.next() {
            let mut it = line.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some("scalar"), Some(name), Some(value)) => {
                    file.scalars.push((name.into(), parse_f64(value, name)?));
                }
                (Some("field"), Some(name), None) => {
                    let mut data = Vec::with_capacity(nx * ny);
                    for iy in 0..ny {
                        let row = lines
                            .next()
                            .ok_or_else(|| err(format!("field '{name}' ends after {iy} rows")))?;
                        let before = data.len();
                        for tok in row.split_whitespace() {
                            data.push(parse_f64(tok, name)?);
                        }
                        if data.len() - before != nx {
                            return Err(err(format!(
                                "field '{name}' row {iy} has {} values, expected {nx}",
                                data.len() - before
                            )));
                        }
                    }
                    let f = Array2::from_shape_vec((ny, nx), data).map_err(|e| err(e.to_string()))?;
                    file.fields.push((name.into(), f));
                }
                _ => return Err(err(format!("unexpected line '{line}'"))),
            }
        }
        Ok(file)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        FieldFile::parse(&read_text(path)?)
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingArtifact(path.to_path_buf())
        } else {
            Error::io(path, e)
        }
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn reference_to_file(data: &ReferenceSurfaceData) -> FieldFile {
    FieldFile::new(data.grid)
        .with_field("v", data.v.clone())
        .with_field("lam1", data.lam1.clone())
        .with_field("lam2", data.lam2.clone())
}

pub fn reference_from_file(file: &FieldFile) -> Result<ReferenceSurfaceData> {
    ReferenceSurfaceData::new(
        file.grid,
        file.field("v")?.clone(),
        file.field("lam1")?.clone(),
        file.field("lam2")?.clone(),
    )
}

pub fn write_reference(path: &Path, data: &ReferenceSurfaceData) -> Result<()> {
    reference_to_file(data).write(path)
}

pub fn read_reference(path: &Path) -> Result<ReferenceSurfaceData> {
    reference_from_file(&FieldFile::read(path)?)
}

const RECORD_KEYS: [&str; 10] = [
    "t", "area", "volume", "h", "sup_dev", "min_theta", "max_a2", "dev_l2sq", "u_min", "u_max",
];

fn record_values(r: &FlowRecord) -> [f64; 10] {
    [
        r.t, r.area, r.volume, r.h, r.sup_dev, r.min_theta, r.max_a2, r.dev_l2sq, r.u_min, r.u_max,
    ]
}

pub fn record_line(r: &FlowRecord) -> String {
    RECORD_KEYS
        .iter()
        .zip(record_values(r))
        .map(|(k, v)| format!("{k}={}", fmt_f64(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_record_line(line: &str) -> Result<FlowRecord> {
    let mut vals = [f64::NAN; 10];
    let mut seen = [false; 10];
    for tok in line.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse {
            context: "trajectory".into(),
            detail: format!("token '{tok}' is not key=value"),
        })?;
        if let Some(i) = RECORD_KEYS.iter().position(|&x| x == k) {
            vals[i] = parse_f64(v, k)?;
            seen[i] = true;
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::Parse {
            context: "trajectory".into(),
            detail: format!("record lacks '{}'", RECORD_KEYS[i]),
        });
    }
    let [t, area, volume, h, sup_dev, min_theta, max_a2, dev_l2sq, u_min, u_max] = vals;
    Ok(FlowRecord {
        t,
        area,
        volume,
        h,
        sup_dev,
        min_theta,
        max_a2,
        dev_l2sq,
        u_min,
        u_max,
    })
}

pub fn trajectory_text(history: &[FlowRecord]) -> String {
    let mut out = String::new();
    for r in history {
        out.push_str(&record_line(r));
        out.push('\n');
    }
    out
}

pub fn parse_trajectory(text: &str) -> Result<Vec<FlowRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(parse_record_line)
        .collect()
}

pub fn write_trajectory(path: &Path, history: &[FlowRecord]) -> Result<()> {
    write_text(path, &trajectory_text(history))
}

pub fn read_trajectory(path: &Path) -> Result<Vec<FlowRecord>> {
    parse_trajectory(&read_text(path)?)
}

/// One row of the `c(r)` table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub r: f64,
    pub c: Option<f64>,
    pub lower: f64,
    pub upper: f64,
    pub status: String,
    pub lambda_min: Option<f64>,
    pub u_min: f64,
    pub u_max: f64,
}

pub const SWEEP_HEADER: &str = "r,c,lower,upper,status,lambda_min,u_min,u_max";

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn parse_opt(s: &str, context: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(s, context).map(Some)
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(r.r),
            opt(r.c),
            fmt_f64(r.lower),
            fmt_f64(r.upper),
            r.status,
            opt(r.lambda_min),
            fmt_f64(r.u_min),
            fmt_f64(r.u_max)
        )
        .unwrap();
    }
    out
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(SWEEP_HEADER) {
        return Err(Error::Parse {
            context: "sweep table".into(),
            detail: "unexpected header".into(),
        });
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 8 {
                return Err(Error::Parse {
                    context: "sweep table".into(),
                    detail: format!("row '{line}' has {} columns", cols.len()),
                });
            }
            Ok(SweepRow {
                r: parse_f64(cols[0], "r")?,
                c: parse_opt(cols[1], "c")?,
                lower: parse_f64(cols[2], "lower")?,
                upper: parse_f64(cols[3], "upper")?,
                status: cols[4].to_string(),
                lambda_min: parse_opt(cols[5], "lambda_min")?,
                u_min: parse_f64(cols[6], "u_min")?,
                u_max: parse_f64(cols[7], "u_max")?,
            })
        })
        .collect()
}

/// One row of the per-leaf report.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafRow {
    pub r: f64,
    pub area: f64,
    pub h_direct: f64,
    pub h_formula: Option<f64>,
    pub mu_min: f64,
    pub mu_max: f64,
}

pub const LEAF_HEADER: &str = "r,area,h_direct,h_formula,mu_min,mu_max";

pub fn leaf_csv(rows: &[LeafRow]) -> String {
    let mut out = String::from(LEAF_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_f64(r.r),
            fmt_f64(r.area),
            fmt_f64(r.h_direct),
            opt(r.h_formula),
            fmt_f64(r.mu_min),
            fmt_f64(r.mu_max)
        )
        .unwrap();
    }
    out
}

pub fn parse_leaf_csv(text: &str) -> Result<Vec<LeafRow>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(LEAF_HEADER) {
        return Err(Error::Parse {
            context: "leaf table".into(),
            detail: "unexpected header".into(),
        });
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 6 {
                return Err(Error::Parse {
                    context: "leaf table".into(),
                    detail: format!("row '{line}' has {} columns", c.len()),
                });
            }
            Ok(LeafRow {
                r: parse_f64(c[0], "r")?,
                area: parse_f64(c[1], "area")?,
                h_direct: parse_f64(c[2], "h_direct")?,
                h_formula: parse_opt(c[3], "h_formula")?,
                mu_min: parse_f64(c[4], "mu_min")?,
                mu_max: parse_f64(c[5], "mu_max")?,
            })
        })
        .collect()
}

/// Run outcome summary, `key=value` per line.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSummary {
    pub status: FlowStatus,
    pub c_limit: Option<f64>,
    pub t: f64,
    pub steps: usize,
    pub max_volume_drift: f64,
    pub detail: Option<String>,
}

impl OutcomeSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "status={}", self.status).unwrap();
        writeln!(out, "c_limit={}", opt(self.c_limit)).unwrap();
        writeln!(out, "t={}", fmt_f64(self.t)).unwrap();
        writeln!(out, "steps={}", self.steps).unwrap();
        writeln!(out, "max_volume_drift={}", fmt_f64(self.max_volume_drift)).unwrap();
        if let Some(d) = &self.detail {
            writeln!(out, "detail={}", d.replace('\n', " ")).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_key_values(text, "outcome")?;
        let get = |k: &str| {
            pairs.iter().find(|(a, _)| a == k).map(|(_, v)| v.as_str()).ok_or_else(|| Error::Parse {
                context: "outcome".into(),
                detail: format!("missing '{k}'"),
            })
        };
        Ok(OutcomeSummary {
            status: get("status")?.parse()?,
            c_limit: parse_opt(get("c_limit")?, "c_limit")?,
            t: parse_f64(get("t")?, "t")?,
            steps: get("steps")?.parse().map_err(|e| Error::Parse {
                context: "outcome".into(),
                detail: format!("steps: {e}"),
            })?,
            max_volume_drift: parse_f64(get("max_volume_drift")?, "max_volume_drift")?,
            detail: get("detail").ok().map(str::to_string),
        })
    }
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str, context: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            context: context.into(),
            detail: format!("line {}: expected key=value, got '{line}'", n + 1),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

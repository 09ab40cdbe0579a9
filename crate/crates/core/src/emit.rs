//! CSV and JSON writers for run artifacts.
//!
//! Trace CSV columns, with `i = 1..N`:
//!
//! ```text
//! time,
//! theta_i, theta_dot_i, p_x, p_y, p_dot_x, p_dot_y, u_i,
//! acc_x_i, acc_y_i, gyro_i,
//! est_theta_i, est_theta_dot_i, est_mass_i, est_inertia_i,
//! bound3_theta_i, bound3_theta_dot_i, bound3_mass_i, bound3_inertia_i,
//! nees, cond1_i, cond2_i, rank, observable
//! ```
//!
//! Each `_i` group lists all links before the next group starts. Filter
//! columns are empty when no filter was run. Reals are written in scientific
//! notation with 17 significant digits; `rank` is an integer and
//! `observable` is `0` or `1`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::run::{NeesTable, RunArtifacts};

/// Trace CSV header for an `n`-link chain, without the trailing newline.
pub fn csv_header(n: usize) -> String {
    let per_link = |prefix: &str| (1..=n).map(|i| format!("{prefix}_{i}")).collect::<Vec<_>>();
    let mut cols = vec!["time".to_string()];
    cols.extend(per_link("theta"));
    cols.extend(per_link("theta_dot"));
    cols.extend(["p_x", "p_y", "p_dot_x", "p_dot_y"].map(String::from));
    cols.extend(per_link("u"));
    for p in ["acc_x", "acc_y", "gyro"] {
        cols.extend(per_link(p));
    }
    for group in ["est", "bound3"] {
        for q in ["theta", "theta_dot", "mass", "inertia"] {
            cols.extend(per_link(&format!("{group}_{q}")));
        }
    }
    cols.push("nees".into());
    cols.extend(per_link("cond1"));
    cols.extend(per_link("cond2"));
    cols.push("rank".into());
    cols.push("observable".into());
    cols.join(",")
}

fn real(out: &mut String, v: f64) {
    write!(out, ",{v:.16e}").expect("writing to a String cannot fail");
}

fn reals(out: &mut String, values: &[f64]) {
    for &v in values {
        real(out, v);
    }
}

fn blanks(out: &mut String, count: usize) {
    for _ in 0..count {
        out.push(',');
    }
}

/// Full trace CSV including the header line.
pub fn trace_csv(artifacts: &RunArtifacts) -> Result<String> {
    let n = artifacts.n;
    let rows = artifacts.truth.len();
    if artifacts.measurements.len() != rows
        || artifacts.observability.len() != rows
        || artifacts.filter.as_ref().is_some_and(|f| f.len() != rows)
    {
        return Err(Error::invalid("artifacts", "traces are not aligned on a common time grid"));
    }
    let mut out = csv_header(n);
    out.push('\n');
    for k in 0..rows {
        let truth = &artifacts.truth[k];
        let meas = &artifacts.measurements[k];
        let obs = &artifacts.observability[k];
        write!(out, "{:.16e}", truth.time).expect("writing to a String cannot fail");
        reals(&mut out, &truth.theta);
        reals(&mut out, &truth.theta_dot);
        reals(&mut out, &truth.cm);
        reals(&mut out, &truth.cm_dot);
        reals(&mut out, &truth.thrust);
        reals(&mut out, &meas.acc_x);
        reals(&mut out, &meas.acc_y);
        reals(&mut out, &meas.gyro);
        match artifacts.filter.as_ref().map(|f| &f[k]) {
            Some(row) => {
                reals(&mut out, &row.mean);
                reals(&mut out, &row.bound3);
                match row.nees {
                    Some(v) => real(&mut out, v),
                    None => blanks(&mut out, 1),
                }
            }
            None => blanks(&mut out, 8 * n + 1),
        }
        reals(&mut out, &obs.cond1);
        reals(&mut out, &obs.cond2);
        writeln!(out, ",{},{}", obs.rank, u8::from(obs.observable)).expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub const SNAPSHOT_HEADER: &str = "time,point,x,y";

/// Link endpoint polylines, one row per point.
pub fn snapshots_csv(artifacts: &RunArtifacts) -> String {
    let mut out = format!("{SNAPSHOT_HEADER}\n");
    for s in &artifacts.snapshots {
        for (i, p) in s.points.iter().enumerate() {
            writeln!(out, "{:.16e},{i},{:.16e},{:.16e}", s.time, p[0], p[1]).expect("writing to a String cannot fail");
        }
    }
    out
}

pub const NEES_HEADER: &str = "time,mean_nees,mean_lower,mean_upper,fraction_in_band";

pub fn nees_csv(table: &NeesTable) -> String {
    let mut out = format!("{NEES_HEADER}\n");
    for r in &table.rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.time, r.mean_nees, r.mean_lower, r.mean_upper, r.fraction_in_band
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("artifacts serialize")
}

pub fn from_json<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|source| Error::Json {
        path: origin.to_string(),
        source,
    })
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json(&text, &path.display().to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// Writes one run's trace to `path`.
pub fn emit(artifacts: &RunArtifacts, format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Csv => trace_csv(artifacts)?,
        Format::Json => to_json(artifacts),
    };
    write_file(path, &text)
}

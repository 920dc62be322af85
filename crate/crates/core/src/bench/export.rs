//! Writing runs to disk: trajectory table, report and torque series.
//!
//! Floats use Rust's shortest round-trip formatting, so identical runs give
//! byte-identical files.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use super::{Run, Sample};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const REPORT_FILE: &str = "report.json";
pub const TORQUE_FILE: &str = "torques.csv";

fn join(values: impl IntoIterator<Item = f64>) -> String {
    let mut s = String::new();
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v}").expect("string write");
    }
    s
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|j| format!("{prefix}{j}")).collect()
}

/// Time, state, command and per-pair contact quantities, one row per sample.
pub fn trajectory_table(samples: &[Sample], dof: usize, pairs: usize) -> String {
    let mut header = vec!["t".to_string()];
    header.extend(names("q", dof));
    header.extend(names("qdot", dof));
    header.extend(names("u", dof));
    for p in 0..pairs {
        header.extend(["psi", "omega_n", "omega_t", "gamma_n", "gamma_t"].iter().map(|k| format!("{k}_{p}")));
    }
    let mut out = header.join(",");
    out.push('\n');
    for s in samples {
        let contact = s.pairs.iter().flat_map(|p| [p.psi, p.omega_n, p.omega_t, p.gamma_n, p.gamma_t]);
        let row = std::iter::once(s.t)
            .chain(s.state.q.iter().copied())
            .chain(s.state.qdot.iter().copied())
            .chain(s.u.iter().copied())
            .chain(contact);
        out.push_str(&join(row));
        out.push('\n');
    }
    out
}

/// Plot-ready torque columns: command, net torque with contact, torque without.
pub fn torque_table(samples: &[Sample], dof: usize) -> String {
    let mut header = vec!["t".to_string()];
    header.extend(names("u", dof));
    header.extend(names("tau_c", dof));
    header.extend(names("tau_wo", dof));
    let mut out = header.join(",");
    out.push('\n');
    for s in samples {
        let row = std::iter::once(s.t)
            .chain(s.u.iter().copied())
            .chain(s.tau_c.iter().copied())
            .chain(s.tau_wo.iter().copied());
        out.push_str(&join(row));
        out.push('\n');
    }
    out
}

/// Writes the report, plus the two tables when the run produced a trajectory.
pub fn export_run(run: &Run, out_dir: impl AsRef<Path>) -> io::Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let report = serde_json::to_string_pretty(&run.report).map_err(io::Error::other)?;
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, report + "\n")?;
    written.push(path);
    if let Some(samples) = &run.samples {
        let dof = run.scenario.arm.dof();
        let pairs = run.scenario.world.contact_pairs.len();
        for (name, text) in [
            (TRAJECTORY_FILE, trajectory_table(samples, dof, pairs)),
            (TORQUE_FILE, torque_table(samples, dof)),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text)?;
            written.push(path);
        }
    }
    Ok(written)
}

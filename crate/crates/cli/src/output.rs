//! Files written into the output directory:
//!
//! - `report.json`: the [`Report`](crate::Report), schema-versioned.
//! - `boxes_depth{d}.csv`: boxes of the DA graph at depth `d` with SCC labels.
//! - `edges_depth{d}.bin`: edge list, for `d ≤ edges_max_depth`. Layout
//!   (little endian): magic `DATEDGE1`, depth u32, seed u64, bloat f64,
//!   samples per box u32, box count u64, edge count u64, then one
//!   `(from, to)` pair of u64 linear box indices per edge.
//! - `orbits.csv`: Lyapunov diagnostics per orbit.
//! - `birkhoff.csv`: Birkhoff averages of the built-in observables per SRB start.
//!
//! CSV files open with one `#` comment line carrying the timestamp and the
//! config hash; the bodies depend only on the config.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use datorus::chain::write_box_csv;

use crate::run::RunArtifacts;
use crate::CliError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn csv_file(dir: &Path, name: &str, art: &RunArtifacts) -> Result<(PathBuf, BufWriter<File>), CliError> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    writeln!(
        w,
        "# datorus {} generated_unix={} config_hash={}",
        art.report.tool_version, art.report.generated_unix, art.report.config_hash
    )
    .map_err(io_err(&path))?;
    Ok((path, w))
}

/// Writes every artifact of the run; returns the paths written.
pub fn write_outputs(dir: &Path, art: &RunArtifacts) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    let cfg = &art.report.config;

    if art.report.chain.is_some() {
        for level in &art.da_levels {
            let d = level.graph.depth;
            let (path, mut w) = csv_file(dir, &format!("boxes_depth{d}.csv"), art)?;
            write_box_csv(level, &mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
            written.push(path);
            if d <= cfg.edges_max_depth {
                let path = dir.join(format!("edges_depth{d}.bin"));
                let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
                level.graph.write_edges(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))?;
                written.push(path);
            }
        }
    }

    if let Some(e) = &art.report.ergodic {
        let (path, mut w) = csv_file(dir, "orbits.csv", art)?;
        let mut body = String::from("map,orbit,seed,x,y,z,n_iters,lambda_1,lambda_2,lambda_3,exponent_sum,log_det_average\n");
        for (name, orbits) in [("linear", &e.linear_lyapunov), ("da", &e.da_lyapunov)] {
            for (i, o) in orbits.iter().enumerate() {
                let [x, y, z] = o.start.coords();
                body.push_str(&format!(
                    "{name},{i},{},{x},{y},{z},{},{},{},{},{},{}\n",
                    o.seed,
                    o.n_iters,
                    o.exponents[0],
                    o.exponents[1],
                    o.exponents[2],
                    o.exponent_sum(),
                    o.log_det_average
                ));
            }
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(&path))?;
        written.push(path);

        let (path, mut w) = csv_file(dir, "birkhoff.csv", art)?;
        let mut body = format!("start,x,y,z,n_iters,{}\n", e.srb.observable_ids.join(","));
        for (i, (p, avg)) in e.srb.starts.iter().zip(&e.srb.averages).enumerate() {
            let [x, y, z] = p.coords();
            let vals: Vec<String> = avg.iter().map(|v| v.to_string()).collect();
            body.push_str(&format!("{i},{x},{y},{z},{},{}\n", e.srb.n_iters, vals.join(",")));
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(io_err(&path))?;
        written.push(path);
    }

    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(&art.report).map_err(|e| CliError::internal("cli.serialize", e))?;
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

/// Drops the leading `#` header line of a CSV file.
pub fn csv_body(text: &str) -> &str {
    match text.strip_prefix('#') {
        Some(rest) => rest.split_once('\n').map_or("", |(_, b)| b),
        None => text,
    }
}

use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use super::{BenchmarkRecord, PerfError, ScalingSeries};
use crate::scalar::Scalar;

pub const BENCH_HEADER: [&str; 7] = [
    "system",
    "instance",
    "ranks",
    "threads",
    "pme_ranks",
    "phase",
    "ns_per_day",
];
pub const SCALING_HEADER: [&str; 4] = ["system", "instance", "n_instances", "ns_per_day"];

fn csv_err(path: &str, message: impl ToString) -> PerfError {
    PerfError::Csv {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str], path: &str) -> Result<(), PerfError> {
    let header = rdr.headers().map_err(|e| csv_err(path, e))?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(csv_err(
            path,
            format!("header must be `{}`, found `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

pub fn read_benchmarks<T: Scalar, R: Read>(reader: R, origin: &str) -> Result<Vec<BenchmarkRecord<T>>, PerfError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &BENCH_HEADER, origin)?;
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<BenchmarkRecord<T>>().enumerate() {
        let rec = row.map_err(|e| csv_err(origin, format!("row {}: {e}", i + 2)))?;
        if !(rec.ns_per_day > T::zero()) {
            return Err(csv_err(origin, format!("row {}: ns_per_day must be > 0", i + 2)));
        }
        if rec.ranks == 0 || rec.threads == 0 {
            return Err(csv_err(
                origin,
                format!("row {}: ranks and threads must be >= 1", i + 2),
            ));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_benchmarks<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<BenchmarkRecord<T>>, PerfError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| csv_err(&origin, e))?;
    read_benchmarks(file, &origin)
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct ScalingRow<T> {
    system: String,
    instance: String,
    n_instances: u32,
    ns_per_day: T,
}

/// Rows are grouped into one series per (system, instance) in order of first
/// appearance; each series must already be sorted by instance count.
pub fn read_scaling<T: Scalar, R: Read>(reader: R, origin: &str) -> Result<Vec<ScalingSeries<T>>, PerfError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    check_header(&mut rdr, &SCALING_HEADER, origin)?;
    let mut series: Vec<ScalingSeries<T>> = Vec::new();
    for (i, row) in rdr.deserialize::<ScalingRow<T>>().enumerate() {
        let row = row.map_err(|e| csv_err(origin, format!("row {}: {e}", i + 2)))?;
        match series
            .iter_mut()
            .find(|s| s.system == row.system && s.instance == row.instance)
        {
            Some(s) => s.points.push((row.n_instances, row.ns_per_day)),
            None => series.push(ScalingSeries {
                system: row.system,
                instance: row.instance,
                points: vec![(row.n_instances, row.ns_per_day)],
            }),
        }
    }
    for s in &series {
        s.validate()?;
    }
    Ok(series)
}

pub fn load_scaling<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<ScalingSeries<T>>, PerfError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|e| csv_err(&origin, e))?;
    read_scaling(file, &origin)
}

//! Trajectory files: a CSV of step records plus a `<stem>.meta.json` sidecar that holds
//! what the CSV cannot (the run config, trial index, `η` and `v̂₀`), so a checker can
//! regenerate the stream.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{byte_offset, InitKind, RunConfig};
use crate::error::{Error, Result};
use crate::linalg::DenseVector;
use crate::oja::{StepRecord, Trajectory};

const SCALAR_COLUMNS: [&str; 4] = ["step", "s", "phi_norm_sq", "log_ratio"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryMeta {
    pub config: RunConfig,
    pub trial: usize,
    pub eta: f64,
    pub init: InitKind,
    pub n: usize,
    pub feature_dim: usize,
    pub v_hat0: DenseVector,
}

impl TrajectoryMeta {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("meta serializes")
    }
}

/// `trial_000.csv` → `trial_000.meta.json`.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes the header and one row per step. Floats use the shortest round-trip form.
pub fn write_trajectory_csv<W: Write>(t: &Trajectory, mut w: W) -> Result<()> {
    let snapshots = !t.is_empty() && t.has_snapshots();
    let mut header = SCALAR_COLUMNS.join(",");
    if snapshots {
        for k in 0..t.feature_dim() {
            header.push_str(&format!(",vhat_{k}"));
        }
    }
    writeln!(w, "{header}")?;
    let mut line = String::new();
    for r in &t.records {
        line.clear();
        line.push_str(&format!("{},{},{},{}", r.step, r.s, r.phi_norm_sq, r.log_ratio));
        if let (true, Some(v)) = (snapshots, &r.v_hat) {
            for x in v.as_slice() {
                line.push_str(&format!(",{x}"));
            }
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn trajectory_csv_string(t: &Trajectory) -> String {
    let mut buf = Vec::new();
    write_trajectory_csv(t, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is ascii")
}

/// Step records parsed from CSV; `feature_dim` is set when snapshot columns are present.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTrajectory {
    pub records: Vec<StepRecord>,
    pub feature_dim: Option<usize>,
}

fn parse_err(offset: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn csv_err(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte());
    let message = match e.kind() {
        csv::ErrorKind::UnequalLengths {
            expected_len, len, ..
        } => format!("expected {expected_len} fields, found {len}"),
        _ => e.to_string(),
    };
    parse_err(offset, message)
}

pub fn parse_trajectory_csv(bytes: &[u8]) -> Result<ParsedTrajectory> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(bytes);
    let header = reader.headers().map_err(csv_err)?.clone();
    if header.len() < SCALAR_COLUMNS.len()
        || header.iter().take(4).ne(SCALAR_COLUMNS.iter().copied())
    {
        return Err(parse_err(
            0,
            format!("header must start with {}", SCALAR_COLUMNS.join(",")),
        ));
    }
    let m = header.len() - SCALAR_COLUMNS.len();
    for (k, name) in header.iter().skip(4).enumerate() {
        if name != format!("vhat_{k}") {
            return Err(parse_err(0, format!("column {} should be vhat_{k}, found `{name}`", k + 4)));
        }
    }

    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(csv_err)?;
        let offset = row.position().map_or(0, |p| p.byte());
        let field = |i: usize| -> Result<f64> {
            let raw = &row[i];
            let x: f64 = raw.trim().parse().map_err(|_| {
                parse_err(offset, format!("column `{}`: `{raw}` is not a number", &header[i]))
            })?;
            if !x.is_finite() {
                return Err(parse_err(offset, format!("column `{}` is not finite", &header[i])));
            }
            Ok(x)
        };
        let step: usize = row[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(offset, format!("step `{}` is not an integer", &row[0])))?;
        if step != records.len() + 1 {
            return Err(parse_err(
                offset,
                format!("expected step {}, found {step}", records.len() + 1),
            ));
        }
        let v_hat = if m > 0 {
            let v = (4..4 + m).map(field).collect::<Result<Vec<f64>>>()?;
            Some(DenseVector::new(v).map_err(|e| parse_err(offset, e.to_string()))?)
        } else {
            None
        };
        records.push(StepRecord {
            step,
            s: field(1)?,
            phi_norm_sq: field(2)?,
            log_ratio: field(3)?,
            v_hat,
        });
    }
    Ok(ParsedTrajectory {
        records,
        feature_dim: (m > 0).then_some(m),
    })
}

pub fn parse_trajectory_meta(text: &str) -> Result<TrajectoryMeta> {
    let meta: TrajectoryMeta = serde_json::from_str(text).map_err(|e| {
        parse_err(byte_offset(text, e.line(), e.column()), e.to_string())
    })?;
    meta.config.validate()?;
    if meta.v_hat0.len() != meta.feature_dim || meta.feature_dim != meta.config.feature_dim() {
        return Err(Error::Config(format!(
            "meta: v_hat0 has {} entries, feature_dim is {}, config implies {}",
            meta.v_hat0.len(),
            meta.feature_dim,
            meta.config.feature_dim()
        )));
    }
    if meta.n != meta.config.generator.n {
        return Err(Error::Config(format!(
            "meta: n = {} but the config streams {}",
            meta.n, meta.config.generator.n
        )));
    }
    if !(meta.eta > 0.0 && meta.eta < 0.1) {
        return Err(Error::Config(format!("meta: eta {} outside (0, 0.1)", meta.eta)));
    }
    if meta.trial >= meta.config.trials {
        return Err(Error::Config(format!(
            "meta: trial {} out of range for {} trials",
            meta.trial, meta.config.trials
        )));
    }
    Ok(meta)
}

/// Writes `path` and its sidecar.
pub fn save_trajectory(path: &Path, t: &Trajectory, meta: &TrajectoryMeta) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trajectory_csv(t, file)?;
    std::fs::write(meta_path(path), meta.to_json())?;
    Ok(())
}

/// Reads a trajectory file and its sidecar and checks that they agree.
pub fn load_trajectory(path: &Path) -> Result<(TrajectoryMeta, Trajectory)> {
    let bytes = std::fs::read(path)?;
    let parsed = parse_trajectory_csv(&bytes)?;
    let meta_file = meta_path(path);
    let text = std::fs::read_to_string(&meta_file).map_err(|e| {
        Error::Config(format!("cannot read sidecar {}: {e}", meta_file.display()))
    })?;
    let meta = parse_trajectory_meta(&text)?;
    if parsed.records.len() != meta.n {
        return Err(Error::Config(format!(
            "{} has {} steps, sidecar says {}",
            path.display(),
            parsed.records.len(),
            meta.n
        )));
    }
    match parsed.feature_dim {
        Some(m) if m != meta.feature_dim => {
            return Err(Error::Config(format!(
                "{} has {m} snapshot columns, sidecar says {}",
                path.display(),
                meta.feature_dim
            )))
        }
        None => {
            return Err(Error::Input(format!(
                "{} has no v̂ snapshot columns (re-run with --check)",
                path.display()
            )))
        }
        _ => {}
    }
    let t = Trajectory::from_parts(meta.eta, meta.v_hat0.clone(), parsed.records)?;
    Ok((meta, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oja::{init_state, run_features, Recording};

    fn trajectory(recording: Recording) -> Trajectory {
        let fs: Vec<DenseVector> = (0..6)
            .map(|i| DenseVector::new(vec![1.0 / (i + 1) as f64, 0.3, -0.7 * i as f64]).unwrap())
            .collect();
        run_features(&fs, 0.003, init_state(3, 4).unwrap(), recording)
            .unwrap()
            .1
            .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = trajectory(Recording::Snapshots);
        let text = trajectory_csv_string(&t);
        assert!(text.starts_with("step,s,phi_norm_sq,log_ratio,vhat_0,vhat_1,vhat_2\n"));
        let parsed = parse_trajectory_csv(text.as_bytes()).unwrap();
        assert_eq!(parsed.feature_dim, Some(3));
        assert_eq!(parsed.records, t.records);
        let back = Trajectory::from_parts(t.eta, t.v_hat0.clone(), parsed.records).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn scalar_only_csv() {
        let t = trajectory(Recording::Scalars);
        let text = trajectory_csv_string(&t);
        assert!(text.starts_with("step,s,phi_norm_sq,log_ratio\n"));
        let parsed = parse_trajectory_csv(text.as_bytes()).unwrap();
        assert_eq!(parsed.feature_dim, None);
        assert_eq!(parsed.records, t.records);
    }

    #[test]
    fn malformed_rows_name_their_offset() {
        let text = "step,s,phi_norm_sq,log_ratio\n1,0.5,1,0.1\n2,abc,1,0.1\n";
        match parse_trajectory_csv(text.as_bytes()) {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 41);
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
        let short = "step,s,phi_norm_sq,log_ratio\n1,0.5,1\n";
        assert!(matches!(
            parse_trajectory_csv(short.as_bytes()),
            Err(Error::Parse { offset: 29, .. })
        ));
        let skipped = "step,s,phi_norm_sq,log_ratio\n2,0.5,1,0.1\n";
        assert!(parse_trajectory_csv(skipped.as_bytes()).is_err());
        let bad_header = "step,s,log_ratio,phi_norm_sq\n";
        assert!(matches!(
            parse_trajectory_csv(bad_header.as_bytes()),
            Err(Error::Parse { offset: 0, .. })
        ));
        let nan = "step,s,phi_norm_sq,log_ratio\n1,NaN,1,0.1\n";
        assert!(parse_trajectory_csv(nan.as_bytes()).is_err());
        assert!(parse_trajectory_csv(b"\xff\xfe").is_err());
    }

    #[test]
    fn empty_input_fails_cleanly() {
        assert!(parse_trajectory_csv(b"").is_err());
        let header_only = parse_trajectory_csv(b"step,s,phi_norm_sq,log_ratio\n").unwrap();
        assert!(header_only.records.is_empty());
    }

    #[test]
    fn meta_errors_carry_offsets() {
        match parse_trajectory_meta("{\n  \"trial\": 0,\n  \"eta\": oops\n}") {
            Err(Error::Parse { offset, .. }) => assert!(offset > 10),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn meta_path_replaces_extension() {
        assert_eq!(
            meta_path(Path::new("out/trial_000.csv")),
            PathBuf::from("out/trial_000.meta.json")
        );
    }
}

//! Plain-text persistence of trajectories and accumulated curves.
//!
//! Trajectory files:
//!
//! ```text
//! # decoherence trajectories
//! # version=0.1.0
//! # config_hash=<sha256 of the snapshot lines>
//! # seed=42
//! params.omega_mw=26389.378290154264
//! ...                                   (full configuration snapshot)
//! 0110100...                            (one line per trajectory, N = 1..=n_max)
//! ```
//!
//! The line position among data lines is the trajectory index. Snapshot values
//! are JSON scalars, so floats round-trip exactly.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::{AccumulatedCurve, CurvePoint, Experiment, TrajectoryRecord};
use crate::error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Run metadata written at the top of every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Provenance {
            version: VERSION.to_string(),
            config_hash,
            seed,
        }
    }

    pub fn for_experiment(exp: &Experiment) -> Self {
        Provenance::new(experiment_hash(exp), exp.protocol.seed)
    }

    pub fn comment_lines(&self) -> Vec<String> {
        vec![
            format!("# version={}", self.version),
            format!("# config_hash={}", self.config_hash),
            format!("# seed={}", self.seed),
        ]
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn flatten_into(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten_into(&key, v, out);
            }
        }
        leaf => out.push((prefix.to_string(), leaf.to_string())),
    }
}

/// The experiment as sorted `key=value` pairs.
pub fn snapshot_pairs(exp: &Experiment) -> Vec<(String, String)> {
    let value = serde_json::to_value(exp).expect("experiment serializes");
    let mut out = Vec::new();
    flatten_into("", &value, &mut out);
    out.sort();
    out
}

pub fn experiment_hash(exp: &Experiment) -> String {
    let text: String = snapshot_pairs(exp)
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    sha256_hex(text.as_bytes())
}

fn insert_path(root: &mut Map<String, Value>, key: &str, value: Value) -> std::result::Result<(), String> {
    let mut parts = key.split('.').peekable();
    let mut node = root;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            node.insert(part.to_string(), value);
            return Ok(());
        }
        let child = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
        node = child
            .as_object_mut()
            .ok_or_else(|| format!("key `{key}` collides with a scalar"))?;
    }
    Err(format!("empty key `{key}`"))
}

/// Rebuild an experiment from snapshot pairs; `line` is the first line
/// number, used for error reporting.
pub fn experiment_from_pairs(pairs: &[(usize, String, String)]) -> Result<Experiment> {
    let mut root = Map::new();
    for (line, k, v) in pairs {
        let value: Value = serde_json::from_str(v).map_err(|e| Error::Parse {
            line: *line,
            message: format!("value of `{k}`: {e}"),
        })?;
        insert_path(&mut root, k, value).map_err(|message| Error::Parse {
            line: *line,
            message,
        })?;
    }
    let first = pairs.first().map_or(1, |p| p.0);
    serde_json::from_value(Value::Object(root)).map_err(|e| Error::Parse {
        line: first,
        message: format!("configuration snapshot: {e}"),
    })
}

pub fn write_trajectories<W: Write>(records: &[TrajectoryRecord], mut w: W) -> Result<()> {
    let exp = records
        .first()
        .map(|r| Arc::clone(&r.experiment))
        .ok_or_else(|| Error::InvalidParams("no trajectory records to write".into()))?;
    writeln!(w, "# decoherence trajectories")?;
    for line in Provenance::for_experiment(&exp).comment_lines() {
        writeln!(w, "{line}")?;
    }
    for (k, v) in snapshot_pairs(&exp) {
        writeln!(w, "{k}={v}")?;
    }
    for (i, rec) in records.iter().enumerate() {
        if rec.index != i as u64 || *rec.experiment != *exp {
            return Err(Error::ConfigMismatch { index: i });
        }
        writeln!(w, "{}", rec.bits())?;
    }
    Ok(())
}

/// Parsed trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub comments: BTreeMap<String, String>,
    pub experiment: Arc<Experiment>,
    pub records: Vec<TrajectoryRecord>,
}

pub fn read_trajectories<R: BufRead>(r: R) -> Result<TrajectoryFile> {
    let mut comments = BTreeMap::new();
    let mut pairs = Vec::new();
    let mut data: Vec<(usize, String)> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(c) = t.strip_prefix('#') {
            if let Some((k, v)) = c.trim().split_once('=') {
                comments.insert(k.trim().to_string(), v.trim().to_string());
            }
        } else if let Some((k, v)) = t.split_once('=') {
            if !data.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    message: "configuration line after trajectory data".into(),
                });
            }
            pairs.push((lineno, k.trim().to_string(), v.trim().to_string()));
        } else {
            data.push((lineno, t.to_string()));
        }
    }
    if pairs.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "missing configuration snapshot".into(),
        });
    }
    let experiment = Arc::new(experiment_from_pairs(&pairs)?);
    let n_max = experiment.protocol.n_max;
    let records = data
        .into_iter()
        .enumerate()
        .map(|(index, (lineno, bits))| {
            if bits.len() != n_max {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {n_max} outcomes, found {}", bits.len()),
                });
            }
            let outcomes = bits
                .chars()
                .map(|c| match c {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(Error::Parse {
                        line: lineno,
                        message: format!("unexpected character `{other}`"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TrajectoryRecord {
                index: index as u64,
                outcomes,
                experiment: Arc::clone(&experiment),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryFile {
        comments,
        experiment,
        records,
    })
}

pub const CURVE_COLUMNS: [&str; 6] = ["N", "theta_rad", "p1_mean", "ci_low", "ci_high", "n_samples"];

pub fn write_accumulated<W: Write>(curve: &AccumulatedCurve, mut w: W) -> Result<()> {
    writeln!(w, "# decoherence accumulated curve")?;
    for line in Provenance::for_experiment(&curve.experiment).comment_lines() {
        writeln!(w, "{line}")?;
    }
    writeln!(w, "# z={}", curve.z)?;
    for (k, v) in snapshot_pairs(&curve.experiment) {
        writeln!(w, "# {k}={v}")?;
    }
    let mut out = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(e.to_string());
    out.write_record(CURVE_COLUMNS).map_err(io)?;
    for p in &curve.points {
        out.write_record([
            p.n.to_string(),
            p.theta.to_string(),
            p.p1_mean.to_string(),
            p.ci_low.to_string(),
            p.ci_high.to_string(),
            p.n_samples.to_string(),
        ])
        .map_err(io)?;
    }
    out.flush()?;
    Ok(())
}

/// Accumulated curve read back from CSV. The experiment is present when the
/// file carries a snapshot in its comments.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub comments: BTreeMap<String, String>,
    pub experiment: Option<Experiment>,
    pub points: Vec<CurvePoint>,
}

impl CurveTable {
    pub fn z(&self) -> f64 {
        self.comments
            .get("z")
            .and_then(|z| z.parse().ok())
            .unwrap_or(super::Z_95)
    }
}

pub fn read_accumulated<R: BufRead>(r: R) -> Result<CurveTable> {
    let mut comments = BTreeMap::new();
    let mut snapshot = Vec::new();
    let mut body = String::new();
    let mut body_lines = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if let Some(c) = line.trim_start().strip_prefix('#') {
            if let Some((k, v)) = c.trim().split_once('=') {
                let (k, v) = (k.trim().to_string(), v.trim().to_string());
                if k.contains('.') {
                    snapshot.push((i + 1, k.clone(), v.clone()));
                }
                comments.insert(k, v);
            }
        } else if !line.trim().is_empty() {
            body.push_str(&line);
            body.push('\n');
            body_lines.push(i + 1);
        }
    }
    let experiment = if snapshot.is_empty() {
        None
    } else {
        Some(experiment_from_pairs(&snapshot)?)
    };
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let header_line = body_lines.first().copied().unwrap_or(1);
    let headers = rdr.headers().map_err(|e| Error::Parse {
        line: header_line,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != CURVE_COLUMNS {
        return Err(Error::Parse {
            line: header_line,
            message: format!("expected columns {}", CURVE_COLUMNS.join(",")),
        });
    }
    let mut points = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = body_lines.get(k + 1).copied().unwrap_or(0);
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |j: usize| -> Result<&str> {
            rec.get(j).ok_or(Error::Parse {
                line,
                message: format!("missing column {}", CURVE_COLUMNS[j]),
            })
        };
        let num = |j: usize| -> Result<f64> {
            field(j)?.trim().parse::<f64>().map_err(|e| Error::Parse {
                line,
                message: format!("{}: {e}", CURVE_COLUMNS[j]),
            })
        };
        let int = |j: usize| -> Result<usize> {
            field(j)?.trim().parse::<usize>().map_err(|e| Error::Parse {
                line,
                message: format!("{}: {e}", CURVE_COLUMNS[j]),
            })
        };
        points.push(CurvePoint {
            n: int(0)?,
            theta: num(1)?,
            p1_mean: num(2)?,
            ci_low: num(3)?,
            ci_high: num(4)?,
            n_samples: int(5)?,
        });
    }
    Ok(CurveTable {
        comments,
        experiment,
        points,
    })
}

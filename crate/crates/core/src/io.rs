//! Trajectory files and JSON helpers.
//!
//! Trajectory CSV has the header `label,t,rank[,jump_t]`; times are in hours.
//! Headerless files may have two (`t,rank`), three (`label,t,rank`) or four
//! columns. Lines starting with `#` are comments. Rows sharing a label form one
//! trajectory; trajectories keep the order in which labels first appear.
//! Numbers are written in shortest round-trip form, so writing a file produced
//! by [`write_trajectories`] back after [`read_trajectories`] reproduces it
//! byte for byte.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub label: String,
    pub observations: Vec<Observation>,
    /// Time of the jump to rank 1, when known.
    pub jump: Option<f64>,
    /// Declares that the jump time is unknown and must be fitted.
    #[serde(default)]
    pub offset_unknown: bool,
}

impl Trajectory {
    /// Checks finite values, ranks `>= 1` and strictly increasing times.
    pub fn validate(&self) -> Result<()> {
        if self.observations.is_empty() {
            return Err(Error::invalid(format!("trajectory '{}' is empty", self.label)));
        }
        for (k, o) in self.observations.iter().enumerate() {
            if !o.t.is_finite() || !o.rank.is_finite() {
                return Err(Error::invalid(format!(
                    "trajectory '{}', point {k}: non-finite value",
                    self.label
                )));
            }
            if o.rank < 1.0 {
                return Err(Error::invalid(format!(
                    "trajectory '{}', point {k}: rank {} < 1",
                    self.label, o.rank
                )));
            }
            if k > 0 && o.t <= self.observations[k - 1].t {
                return Err(Error::invalid(format!(
                    "trajectory '{}', point {k}: time {} does not increase",
                    self.label, o.t
                )));
            }
        }
        if let Some(j) = self.jump {
            if !j.is_finite() {
                return Err(Error::invalid(format!(
                    "trajectory '{}': jump time must be finite",
                    self.label
                )));
            }
        }
        Ok(())
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.t)
    }

    pub fn ranks(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.rank)
    }
}

#[derive(Clone, Copy)]
struct Columns {
    label: Option<usize>,
    t: usize,
    rank: usize,
    jump: Option<usize>,
}

fn header_columns(fields: &[&str]) -> std::result::Result<Columns, String> {
    let find = |name: &str| fields.iter().position(|f| f.eq_ignore_ascii_case(name));
    let t = find("t").ok_or("header lacks a 't' column")?;
    let rank = find("rank").ok_or("header lacks a 'rank' column")?;
    Ok(Columns {
        label: find("label"),
        t,
        rank,
        jump: find("jump_t"),
    })
}

fn positional_columns(width: usize) -> std::result::Result<Columns, String> {
    match width {
        2 => Ok(Columns { label: None, t: 0, rank: 1, jump: None }),
        3 => Ok(Columns { label: Some(0), t: 1, rank: 2, jump: None }),
        4 => Ok(Columns { label: Some(0), t: 1, rank: 2, jump: Some(3) }),
        w => Err(format!("expected 2 to 4 columns, found {w}")),
    }
}

/// Parses trajectory CSV from a reader; `source` names it in diagnostics.
pub fn parse_trajectories<R: Read>(reader: R, source: &str) -> Result<Vec<Trajectory>> {
    let data_err = |line: u64, msg: String| Error::Data {
        path: source.to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut columns: Option<Columns> = None;
    let mut out: Vec<Trajectory> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut last_line: HashMap<usize, u64> = HashMap::new();

    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            data_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let fields: Vec<&str> = record.iter().collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        let cols = match columns {
            Some(c) => c,
            None => {
                let numeric = fields.iter().filter(|f| f.parse::<f64>().is_ok()).count();
                let c = if numeric >= 2 {
                    positional_columns(fields.len())
                } else {
                    let parsed = header_columns(&fields).map_err(|m| data_err(line, m))?;
                    columns = Some(parsed);
                    continue;
                }
                .map_err(|m| data_err(line, m))?;
                columns = Some(c);
                c
            }
        };
        let get = |i: usize, name: &str| {
            fields
                .get(i)
                .copied()
                .ok_or_else(|| data_err(line, format!("missing '{name}' field")))
        };
        let number = |i: usize, name: &str| -> Result<f64> {
            let s = get(i, name)?;
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| data_err(line, format!("'{name}' = '{s}' is not a finite number")))
        };
        let label = match cols.label {
            Some(i) => get(i, "label")?.to_string(),
            None => String::new(),
        };
        let t = number(cols.t, "t")?;
        let rank = number(cols.rank, "rank")?;
        if rank < 1.0 {
            return Err(data_err(line, format!("rank {rank} must be >= 1")));
        }
        let jump = match cols.jump {
            Some(i) if fields.get(i).is_some_and(|s| !s.is_empty()) => Some(number(i, "jump_t")?),
            _ => None,
        };

        let slot = *index.entry(label.clone()).or_insert_with(|| {
            out.push(Trajectory {
                label: label.clone(),
                observations: Vec::new(),
                jump: None,
                offset_unknown: false,
            });
            out.len() - 1
        });
        let traj = &mut out[slot];
        if let Some(prev) = traj.observations.last() {
            if t <= prev.t {
                return Err(data_err(
                    line,
                    format!(
                        "time {t} does not increase after {} (line {}) in trajectory '{label}'",
                        prev.t, last_line[&slot]
                    ),
                ));
            }
        }
        if let Some(j) = jump {
            match traj.jump {
                Some(existing) if existing != j => {
                    return Err(data_err(
                        line,
                        format!("jump_t {j} conflicts with {existing} for trajectory '{label}'"),
                    ))
                }
                _ => traj.jump = Some(j),
            }
        }
        traj.observations.push(Observation { t, rank });
        last_line.insert(slot, line);
    }
    if out.is_empty() {
        return Err(data_err(0, "no observations found".into()));
    }
    Ok(out)
}

/// Reads and validates trajectories from a CSV file.
pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    parse_trajectories(file, &path.display().to_string())
}

/// Writes trajectories in canonical form: header `label,t,rank`, plus `jump_t`
/// when any trajectory has a marker.
pub fn write_trajectories<W: Write>(out: W, trajectories: &[Trajectory]) -> Result<()> {
    let with_jump = trajectories.iter().any(|t| t.jump.is_some());
    let mut w = csv::Writer::from_writer(out);
    if with_jump {
        w.write_record(["label", "t", "rank", "jump_t"])?;
    } else {
        w.write_record(["label", "t", "rank"])?;
    }
    for traj in trajectories {
        traj.validate()?;
        let jump = traj.jump.map(|j| j.to_string()).unwrap_or_default();
        for o in &traj.observations {
            let mut row = vec![traj.label.clone(), o.t.to_string(), o.rank.to_string()];
            if with_jump {
                row.push(jump.clone());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Data {
        path: path.display().to_string(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<W: Write, T: Serialize>(mut out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

//! CSV ingestion.
//!
//! Time-fixed files have one row per subject: covariate columns plus the
//! reserved columns `A` (treatment), `Y` (outcome) and optionally `D`
//! (1 = training row, 0 = test row). Sequential files are in long format
//! with `id` and `t` columns, one row per subject and time, and the
//! terminal `Y` repeated on every row of a subject.

use std::collections::HashMap;
use std::io::Read;

use crate::data::{Dataset, Observation, OutcomeKind, Split};
use crate::error::{Error, Result};
use crate::longitudinal::{SequentialDataset, SequentialObservation};

const RESERVED_STATIC: [&str; 3] = ["A", "Y", "D"];
const RESERVED_LONG: [&str; 5] = ["id", "t", "A", "Y", "D"];

/// A loaded time-fixed file.
#[derive(Debug, Clone)]
pub struct StaticTable {
    pub data: Dataset,
    /// True when the file carried a `D` column; otherwise every row is
    /// marked as test and the caller should split.
    pub has_split: bool,
}

/// A loaded long-format file.
#[derive(Debug, Clone)]
pub struct SequentialTable {
    pub data: SequentialDataset,
    pub covariates: Vec<String>,
    pub has_split: bool,
}

/// Position of `name` among `names`, or a schema error listing the choices.
pub fn column_index(names: &[String], name: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Schema(format!("unknown column '{name}'; available: {}", names.join(", "))))
}

struct Header {
    names: Vec<String>,
    covariates: Vec<usize>,
    reserved: HashMap<&'static str, usize>,
}

fn read_header(headers: &csv::StringRecord, reserved: &[&'static str], required: &[&str]) -> Result<Header> {
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    let mut seen = HashMap::new();
    for (j, n) in names.iter().enumerate() {
        if n.is_empty() {
            return Err(Error::Schema(format!("column {} has an empty name", j + 1)));
        }
        if seen.insert(n.as_str(), j).is_some() {
            return Err(Error::Schema(format!("duplicate column '{n}'")));
        }
    }
    let mut found = HashMap::new();
    for r in reserved {
        if let Some(&j) = seen.get(r) {
            found.insert(*r, j);
        }
    }
    for r in required {
        if !found.contains_key(r) {
            return Err(Error::Schema(format!("missing required column '{r}'; found: {}", names.join(", "))));
        }
    }
    let covariates = (0..names.len()).filter(|j| !reserved.contains(&names[*j].as_str())).collect();
    Ok(Header { names, covariates, reserved: found })
}

fn number(rec: &csv::StringRecord, j: usize, line: u64, col: &str) -> Result<f64> {
    let s = rec.get(j).unwrap_or("").trim();
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Data(format!("line {line}, column '{col}': '{s}' is not a finite number")))
}

fn binary(rec: &csv::StringRecord, j: usize, line: u64, col: &str) -> Result<u8> {
    match number(rec, j, line, col)? {
        0.0 => Ok(0),
        1.0 => Ok(1),
        v => Err(Error::Data(format!("line {line}, column '{col}': expected 0 or 1, got {v}"))),
    }
}

fn split_of(d: u8) -> Split {
    if d == 1 {
        Split::Train
    } else {
        Split::Test
    }
}

/// Reads a time-fixed table.
pub fn read_static_csv<R: Read>(reader: R, outcome: OutcomeKind) -> Result<StaticTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let h = read_header(rdr.headers()?, &RESERVED_STATIC, &["A", "Y"])?;
    let (ja, jy) = (h.reserved["A"], h.reserved["Y"]);
    let jd = h.reserved.get("D").copied();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let x = h.covariates.iter().map(|&j| number(&rec, j, line, &h.names[j])).collect::<Result<Vec<_>>>()?;
        let mut obs = Observation::new(x, binary(&rec, ja, line, "A")?, number(&rec, jy, line, "Y")?);
        if let Some(jd) = jd {
            obs.split = split_of(binary(&rec, jd, line, "D")?);
        }
        rows.push(obs);
    }
    if rows.is_empty() {
        return Err(Error::Data("input has no data rows".into()));
    }
    let names = h.covariates.iter().map(|&j| h.names[j].clone()).collect();
    Ok(StaticTable { data: Dataset::with_names(rows, outcome, names)?, has_split: jd.is_some() })
}

struct Subject {
    id: String,
    times: Vec<(i64, Vec<f64>, u8)>,
    y: f64,
    d: Option<u8>,
}

/// Reads a long-format sequential table. Subjects keep the order of their
/// first appearance; times must run 0..=K for every subject.
pub fn read_sequential_csv<R: Read>(reader: R, outcome: OutcomeKind) -> Result<SequentialTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let h = read_header(rdr.headers()?, &RESERVED_LONG, &["id", "t", "A", "Y"])?;
    let (jid, jt, ja, jy) = (h.reserved["id"], h.reserved["t"], h.reserved["A"], h.reserved["Y"]);
    let jd = h.reserved.get("D").copied();
    let mut subjects: Vec<Subject> = Vec::new();
    let mut lookup: HashMap<String, usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(jid).unwrap_or("").to_string();
        let t = number(&rec, jt, line, "t")?;
        if t.fract() != 0.0 || t < 0.0 {
            return Err(Error::Data(format!("line {line}: time '{t}' is not a non-negative integer")));
        }
        let x = h.covariates.iter().map(|&j| number(&rec, j, line, &h.names[j])).collect::<Result<Vec<_>>>()?;
        let a = binary(&rec, ja, line, "A")?;
        let y = number(&rec, jy, line, "Y")?;
        let d = jd.map(|j| binary(&rec, j, line, "D")).transpose()?;
        let k = *lookup.entry(id.clone()).or_insert_with(|| {
            subjects.push(Subject { id: id.clone(), times: Vec::new(), y, d });
            subjects.len() - 1
        });
        let s = &mut subjects[k];
        if s.y != y {
            return Err(Error::Data(format!("line {line}: subject '{id}' has more than one outcome value")));
        }
        if s.d != d {
            return Err(Error::Data(format!("line {line}: subject '{id}' has more than one split value")));
        }
        s.times.push((t as i64, x, a));
    }
    if subjects.is_empty() {
        return Err(Error::Data("input has no data rows".into()));
    }
    let mut rows = Vec::with_capacity(subjects.len());
    for mut s in subjects {
        s.times.sort_by_key(|(t, _, _)| *t);
        if s.times.iter().enumerate().any(|(i, (t, _, _))| *t != i as i64) {
            return Err(Error::Data(format!("subject '{}' does not have consecutive times starting at 0", s.id)));
        }
        let (x_hist, a_hist) = s.times.into_iter().map(|(_, x, a)| (x, a)).unzip();
        let mut obs = SequentialObservation::new(s.id, x_hist, a_hist, s.y);
        if let Some(d) = s.d {
            obs.split = split_of(d);
        }
        rows.push(obs);
    }
    let covariates = h.covariates.iter().map(|&j| h.names[j].clone()).collect();
    Ok(SequentialTable { data: SequentialDataset::new(rows, outcome)?, covariates, has_split: jd.is_some() })
}

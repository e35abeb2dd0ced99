use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::barrier::{BarrierEval, ConstraintClass};
use crate::filter::CertStatus;

/// Per-class arrays in row order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassValues<T> {
    pub sem: Vec<T>,
    pub env: Vec<T>,
    #[serde(rename = "self")]
    pub self_collision: Vec<T>,
    pub lim: Vec<T>,
}

impl<T: Clone> ClassValues<T> {
    /// Splits a stacked vector by the class of each row.
    pub fn split(values: impl IntoIterator<Item = T>, eval: &BarrierEval) -> Self {
        let mut out = Self {
            sem: Vec::new(),
            env: Vec::new(),
            self_collision: Vec::new(),
            lim: Vec::new(),
        };
        for (v, label) in values.into_iter().zip(&eval.labels) {
            out.get_mut(label.class).push(v);
        }
        out
    }

    pub fn get(&self, class: ConstraintClass) -> &[T] {
        match class {
            ConstraintClass::Sem => &self.sem,
            ConstraintClass::Env => &self.env,
            ConstraintClass::SelfCollision => &self.self_collision,
            ConstraintClass::Lim => &self.lim,
        }
    }

    fn get_mut(&mut self, class: ConstraintClass) -> &mut Vec<T> {
        match class {
            ConstraintClass::Sem => &mut self.sem,
            ConstraintClass::Env => &mut self.env,
            ConstraintClass::SelfCollision => &mut self.self_collision,
            ConstraintClass::Lim => &mut self.lim,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.sem.iter().chain(&self.env).chain(&self.self_collision).chain(&self.lim)
    }
}

impl ClassValues<f64> {
    pub fn min(&self) -> f64 {
        self.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn min_of(&self, class: ConstraintClass) -> f64 {
        self.get(class).iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// One simulation tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    /// Configuration at which the barriers were evaluated (before the step).
    pub q: Vec<f64>,
    pub x_ee: [f64; 3],
    pub u_cmd: Vec<f64>,
    pub u_cert: Vec<f64>,
    pub status: CertStatus,
    pub filtered: bool,
    pub h: ClassValues<f64>,
    /// `alpha(h)` per row.
    pub alpha: ClassValues<f64>,
    /// `A u_cert` per row.
    pub hdot: ClassValues<f64>,
    pub labels: ClassValues<String>,
    pub active_rows: Vec<String>,
    pub solve_time: f64,
}

impl TickRecord {
    pub fn min_h(&self) -> f64 {
        self.h.min()
    }
}

/// Appends tick records as JSON lines.
pub struct TickLogWriter {
    out: BufWriter<File>,
}

impl TickLogWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self {
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, record: &TickRecord) -> Result<(), IoError> {
        serde_json::to_writer(&mut self.out, record)?;
        self.out.write_all(b"\n").map_err(|source| IoError::File {
            path: "tick log".into(),
            source,
        })
    }

    pub fn flush(&mut self) -> Result<(), IoError> {
        self.out.flush().map_err(|source| IoError::File {
            path: "tick log".into(),
            source,
        })
    }
}

pub fn read_tick_log(path: impl AsRef<Path>) -> Result<Vec<TickRecord>, IoError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

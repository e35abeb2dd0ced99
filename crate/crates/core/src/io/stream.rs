use std::path::Path;

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use super::{read_file, write_file, IoError};

/// End effector twist command at time `t` (s): linear `v` (m/s), angular
/// `w` (rad/s), world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwistFrame {
    pub t: f64,
    pub v: [f64; 3],
    pub w: [f64; 3],
}

impl TwistFrame {
    pub fn zero(t: f64) -> Self {
        Self {
            t,
            v: [0.0; 3],
            w: [0.0; 3],
        }
    }

    pub fn twist(&self) -> Vector6<f64> {
        Vector6::new(self.v[0], self.v[1], self.v[2], self.w[0], self.w[1], self.w[2])
    }

    fn channels(&self) -> [f64; 6] {
        [self.v[0], self.v[1], self.v[2], self.w[0], self.w[1], self.w[2]]
    }

    fn from_channels(t: f64, c: [f64; 6]) -> Self {
        Self {
            t,
            v: [c[0], c[1], c[2]],
            w: [c[3], c[4], c[5]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandStream {
    pub rate_hz: f64,
    pub frames: Vec<TwistFrame>,
}

impl CommandStream {
    pub fn new(rate_hz: f64, frames: Vec<TwistFrame>) -> Result<Self, IoError> {
        let s = Self { rate_hz, frames };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), IoError> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(IoError::Stream(format!("rate must be positive, got {}", self.rate_hz)));
        }
        for w in self.frames.windows(2) {
            if w[1].t <= w[0].t {
                return Err(IoError::Stream(format!("timestamps not increasing at t = {}", w[1].t)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.frames.first(), self.frames.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Sample-and-hold resampling onto a uniform grid at `rate_hz`, starting
    /// at the first frame's time and covering the same span.
    pub fn resample(&self, rate_hz: f64) -> Result<Self, IoError> {
        if !(rate_hz > 0.0) {
            return Err(IoError::Stream(format!("rate must be positive, got {rate_hz}")));
        }
        let Some(first) = self.frames.first() else {
            return Self::new(rate_hz, Vec::new());
        };
        let span = self.duration() + 1.0 / self.rate_hz;
        let count = (span * rate_hz).round().max(1.0) as usize;
        let mut j = 0;
        let frames = (0..count)
            .map(|k| {
                let t = first.t + k as f64 / rate_hz;
                while j + 1 < self.frames.len() && self.frames[j + 1].t <= t + 1e-9 {
                    j += 1;
                }
                TwistFrame { t, ..self.frames[j] }
            })
            .collect();
        Self::new(rate_hz, frames)
    }

    /// Reads CSV (`t,vx,vy,vz,wx,wy,wz`, header optional) or JSONL (one
    /// frame object per line), chosen by extension. The rate is taken from
    /// the median timestamp spacing unless `rate_hz` is given.
    pub fn load(path: impl AsRef<Path>, rate_hz: Option<f64>) -> Result<Self, IoError> {
        let path = path.as_ref();
        let text = String::from_utf8(read_file(path)?).map_err(|_| IoError::Stream("not utf-8".into()))?;
        let frames = if path.extension().is_some_and(|e| e == "jsonl" || e == "json") {
            text.lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| serde_json::from_str::<TwistFrame>(l).map_err(IoError::from))
                .collect::<Result<Vec<_>, _>>()?
        } else {
            parse_csv(&text)?
        };
        let rate = match rate_hz {
            Some(r) => r,
            None => infer_rate(&frames),
        };
        Self::new(rate, frames)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IoError> {
        let path = path.as_ref();
        let text = if path.extension().is_some_and(|e| e == "jsonl") {
            let mut out = String::new();
            for f in &self.frames {
                out.push_str(&serde_json::to_string(f)?);
                out.push('\n');
            }
            out
        } else {
            let mut out = String::from("t,vx,vy,vz,wx,wy,wz\n");
            for f in &self.frames {
                let c = f.channels();
                out.push_str(&format!("{},{},{},{},{},{},{}\n", f.t, c[0], c[1], c[2], c[3], c[4], c[5]));
            }
            out
        };
        write_file(path, text.as_bytes())
    }
}

fn infer_rate(frames: &[TwistFrame]) -> f64 {
    let mut gaps: Vec<f64> = frames.windows(2).map(|w| w[1].t - w[0].t).collect();
    if gaps.is_empty() {
        return 45.0;
    }
    gaps.sort_by(f64::total_cmp);
    1.0 / gaps[gaps.len() / 2]
}

fn parse_csv(text: &str) -> Result<Vec<TwistFrame>, IoError> {
    let mut frames = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && fields.first().is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        if fields.len() != 7 {
            return Err(IoError::Stream(format!("line {}: expected 7 fields", i + 1)));
        }
        let mut v = [0.0; 7];
        for (k, f) in fields.iter().enumerate() {
            v[k] = f
                .parse()
                .map_err(|_| IoError::Stream(format!("line {}: bad number '{f}'", i + 1)))?;
        }
        frames.push(TwistFrame::from_channels(v[0], [v[1], v[2], v[3], v[4], v[5], v[6]]));
    }
    Ok(frames)
}

/// First-order low-pass on every channel, zero initial state. Discretized
/// exactly for piecewise-constant input: `y += (1 - exp(-2 pi fc dt)) (x - y)`.
pub fn smooth_stream(stream: &CommandStream, cutoff_hz: f64) -> Result<CommandStream, IoError> {
    if !(cutoff_hz > 0.0 && cutoff_hz < stream.rate_hz / 2.0) {
        return Err(IoError::Stream(format!(
            "cutoff {cutoff_hz} Hz must be in (0, {}) Hz",
            stream.rate_hz / 2.0
        )));
    }
    let mut y = [0.0; 6];
    let mut prev_t: Option<f64> = None;
    let frames = stream
        .frames
        .iter()
        .map(|f| {
            let dt = prev_t.map(|p| f.t - p).unwrap_or(1.0 / stream.rate_hz);
            prev_t = Some(f.t);
            let a = 1.0 - (-2.0 * std::f64::consts::PI * cutoff_hz * dt).exp();
            let x = f.channels();
            for k in 0..6 {
                y[k] += a * (x[k] - y[k]);
            }
            TwistFrame::from_channels(f.t, y)
        })
        .collect();
    Ok(CommandStream {
        rate_hz: stream.rate_hz,
        frames,
    })
}

//! Scripted command streams. Each generator follows a Cartesian path that
//! starts at the end effector's start position and drives through a target
//! point; the stream holds the path's finite-difference velocity, so it is
//! open loop and identical for filtered and unfiltered replays.

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::PointCloud;
use crate::io::{CommandStream, TwistFrame};

/// Default rate of generated streams (Hz).
pub const STREAM_RATE: f64 = 45.0;
/// Length of each adversarial stream (s); 540 ticks at 45 Hz.
pub const ADVERSARIAL_DURATION: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialKind {
    /// Back and forth along the line from the start through the target.
    StraightPierce,
    /// Circles around the target at its own height, radius below its size.
    Orbit,
    /// Shrinking spiral from above the target down into it.
    SpiralDescent,
    /// Side to side sweeps through the target.
    LateralSweep,
    /// Dives onto the target while spinning the wrist.
    RotateDive,
}

impl AdversarialKind {
    pub const ALL: [AdversarialKind; 5] = [
        AdversarialKind::StraightPierce,
        AdversarialKind::Orbit,
        AdversarialKind::SpiralDescent,
        AdversarialKind::LateralSweep,
        AdversarialKind::RotateDive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AdversarialKind::StraightPierce => "straight_pierce",
            AdversarialKind::Orbit => "orbit",
            AdversarialKind::SpiralDescent => "spiral_descent",
            AdversarialKind::LateralSweep => "lateral_sweep",
            AdversarialKind::RotateDive => "rotate_dive",
        }
    }
}

impl std::fmt::Display for AdversarialKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AdversarialKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown stream kind '{s}'"))
    }
}

/// Samples `pos` and `w` on a uniform grid. Linear velocity is the forward
/// difference of `pos`, so integrating the stream reproduces the path.
pub fn path_stream(
    rate_hz: f64,
    duration: f64,
    pos: impl Fn(f64) -> Vector3<f64>,
    w: impl Fn(f64) -> Vector3<f64>,
) -> CommandStream {
    let dt = 1.0 / rate_hz;
    let n = (duration * rate_hz).round() as usize;
    let frames = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            TwistFrame {
                t,
                v: ((pos(t + dt) - pos(t)) / dt).into(),
                w: w(t).into(),
            }
        })
        .collect();
    CommandStream { rate_hz, frames }
}

/// Smooth 0 to 1 ramp over `[0, 1]`.
fn ease(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

/// 0 to 1 and back, `periods` times over `[0, 1]`, eased at the turns.
fn shuttle(s: f64, periods: f64) -> f64 {
    let x = (s.clamp(0.0, 1.0) * periods).fract() * 2.0;
    if x <= 1.0 {
        ease(x)
    } else {
        ease(2.0 - x)
    }
}

/// One adversarial stream toward `target` (typically an object's center)
/// with half size `size` (largest horizontal half extent), seeded.
pub fn adversarial_stream(kind: AdversarialKind, start: Vector3<f64>, target: Vector3<f64>, size: f64, seed: u64) -> CommandStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (kind as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let jitter = Vector3::new(
        rng.random_range(-0.02..0.02),
        rng.random_range(-0.02..0.02),
        rng.random_range(-0.01..0.01),
    );
    let c = target + jitter;
    let phase = rng.random_range(0.0..TAU);
    let turn = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let duration = ADVERSARIAL_DURATION;
    let lead = 3.0;
    // move from the start to `p` in the first `lead` seconds, then follow it
    let approach = move |t: f64, p: &dyn Fn(f64) -> Vector3<f64>| {
        if t < lead {
            start + (p(0.0) - start) * ease(t / lead)
        } else {
            p(t - lead)
        }
    };
    let zero = |_: f64| Vector3::zeros();
    match kind {
        AdversarialKind::StraightPierce => {
            let through = c + (c - start) * rng.random_range(0.15..0.3);
            path_stream(STREAM_RATE, duration, move |t| start + (through - start) * shuttle(t / duration, 2.5), zero)
        }
        AdversarialKind::Orbit => {
            let radius = 0.6 * size;
            let omega = turn * TAU * 2.0 / (duration - lead);
            let circle = move |s: f64| c + Vector3::new(radius * (phase + omega * s).cos(), radius * (phase + omega * s).sin(), 0.0);
            path_stream(STREAM_RATE, duration, move |t| approach(t, &circle), zero)
        }
        AdversarialKind::SpiralDescent => {
            let height = 0.35;
            let span = duration - lead;
            let spiral = move |s: f64| {
                let u = (s / span).clamp(0.0, 1.0);
                let r = 0.15 * (1.0 - u);
                let a = phase + turn * 2.5 * TAU * u;
                c + Vector3::new(r * a.cos(), r * a.sin(), height * (1.0 - u))
            };
            path_stream(STREAM_RATE, duration, move |t| approach(t, &spiral), zero)
        }
        AdversarialKind::LateralSweep => {
            let reach = size + 0.2;
            let dir = Vector3::new(phase.cos() * 0.3, 1.0, 0.0).normalize();
            let span = duration - lead;
            let sweep = move |s: f64| c + dir * (reach * (turn * (PI * 3.0 * s / span - PI / 2.0)).sin());
            path_stream(STREAM_RATE, duration, move |t| approach(t, &sweep), zero)
        }
        AdversarialKind::RotateDive => {
            let above = c + Vector3::new(0.0, 0.0, 0.3);
            let spin = rng.random_range(0.6..0.9);
            path_stream(
                STREAM_RATE,
                duration,
                move |t| {
                    let s = t / duration;
                    if s < 0.3 {
                        start + (above - start) * ease(s / 0.3)
                    } else {
                        above + (c - above) * shuttle((s - 0.3) / 0.7, 2.0)
                    }
                },
                move |t| spin * Vector3::new((0.9 * t + phase).sin(), (1.3 * t).cos(), 0.5 * turn),
            )
        }
    }
}

/// Center of `cloud`'s bounding box and its largest horizontal half extent.
pub fn stream_target(cloud: &PointCloud) -> (Vector3<f64>, f64) {
    let bb = cloud.aabb();
    let half = (bb.max_v() - bb.min_v()) / 2.0;
    ((bb.min_v() + bb.max_v()) / 2.0, half.x.max(half.y))
}

/// Gentle translation with sustained wrist rotation about all three axes.
pub fn rotation_rich_stream(duration: f64, seed: u64) -> CommandStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f: [f64; 3] = [rng.random_range(0.4..0.7), rng.random_range(0.7..1.0), rng.random_range(0.3..0.5)];
    let p: [f64; 3] = [rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)];
    path_stream(
        STREAM_RATE,
        duration,
        move |t| Vector3::new(0.05 * (0.4 * t).sin(), 0.05 * (0.3 * t).sin(), 0.0),
        move |t| 0.8 * Vector3::new((f[0] * t + p[0]).sin(), (f[1] * t + p[1]).sin(), (f[2] * t + p[2]).sin()),
    )
}

/// Random smooth twist: a seeded sum of sinusoids per axis, zero mean, with
/// linear speed around `speed` (m/s) and angular speed around `2 * speed`.
pub fn random_stream(duration: f64, speed: f64, seed: u64) -> CommandStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    for axis in 0..6 {
        for _ in 0..3 {
            let gain = if axis < 3 { speed } else { 2.0 * speed };
            terms.push((axis, gain * rng.random_range(0.2..0.6), rng.random_range(0.3..1.5), rng.random_range(0.0..TAU)));
        }
    }
    let dt = 1.0 / STREAM_RATE;
    let n = (duration * STREAM_RATE).round() as usize;
    let frames = (0..n)
        .map(|k| {
            let t = k as f64 * dt;
            let mut twist = [0.0; 6];
            for &(axis, amp, omega, phase) in &terms {
                twist[axis] += amp * (omega * t + phase).sin();
            }
            TwistFrame {
                t,
                v: [twist[0], twist[1], twist[2]],
                w: [twist[3], twist[4], twist[5]],
            }
        })
        .collect();
    CommandStream { rate_hz: STREAM_RATE, frames }
}

/// Constant linear velocity `v` for `duration` seconds.
pub fn constant_stream(v: Vector3<f64>, duration: f64) -> CommandStream {
    path_stream(STREAM_RATE, duration, move |t| v * t, |_| Vector3::zeros())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrating_a_stream_reproduces_its_path() {
        let start = Vector3::new(0.3, 0.0, 0.5);
        let target = Vector3::new(0.5, 0.1, 0.1);
        for kind in AdversarialKind::ALL {
            let s = adversarial_stream(kind, start, target, 0.1, 3);
            assert!(s.len() >= 500, "{kind}: {}", s.len());
            let dt = 1.0 / s.rate_hz;
            let mut p = start;
            let mut closest = f64::INFINITY;
            for f in &s.frames {
                p += Vector3::from(f.v) * dt;
                closest = closest.min((p - target).norm());
            }
            assert!(closest < 0.06, "{kind} never gets near the target: {closest}");
            let top = s.frames.iter().map(|f| Vector3::from(f.v).norm()).fold(0.0, f64::max);
            assert!(top < 0.6, "{kind} too fast: {top}");
        }
    }

    #[test]
    fn seeded() {
        let a = adversarial_stream(AdversarialKind::Orbit, Vector3::zeros(), Vector3::x(), 0.1, 9);
        let b = adversarial_stream(AdversarialKind::Orbit, Vector3::zeros(), Vector3::x(), 0.1, 9);
        let c = adversarial_stream(AdversarialKind::Orbit, Vector3::zeros(), Vector3::x(), 0.1, 10);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in AdversarialKind::ALL {
            assert_eq!(k.as_str().parse::<AdversarialKind>().unwrap(), k);
        }
    }
}

//! A running session: one stepper task advancing the simulation at `dt`,
//! fed from a latest-command slot and publishing snapshots for any number
//! of connections.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use nalgebra::Vector6;
use tokio::sync::{broadcast, watch};
use tokio::time::MissedTickBehavior;

use semfilter::io::TickLogWriter;
use semfilter::sim::SimSession;

use crate::wire::{envelope_meshes, ContextUpdate, ErrorCode, Hello, ObjectInfo, Role, State, WireError, WIRE_SCHEMA};

#[derive(Debug, Clone)]
pub struct LiveConfig {
    /// Commands older than this are replaced by a zero twist.
    pub deadman_timeout: Duration,
    /// Cutoff of the first-order command smoother.
    pub smoothing_hz: f64,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            deadman_timeout: Duration::from_millis(250),
            smoothing_hz: 2.0,
        }
    }
}

/// Out-of-band messages fanned out to every connection.
#[derive(Debug, Clone)]
pub enum Event {
    Context(Arc<ContextUpdate>),
    Error(WireError),
}

struct Slot {
    twist: Vector6<f64>,
    deadman: bool,
    at: Instant,
}

pub struct LiveSession {
    pub id: String,
    pub scene_id: String,
    pub started: Instant,
    config: LiveConfig,
    sim: Mutex<SimSession>,
    command: Mutex<Option<Slot>>,
    driver: Mutex<Option<u64>>,
    next_conn: AtomicU64,
    state: watch::Sender<Option<Arc<State>>>,
    events: broadcast::Sender<Event>,
}

/// Resolves once the flag turns true, or its sender is gone.
pub async fn stopped(flag: &mut watch::Receiver<bool>) {
    let _ = flag.wait_for(|s| *s).await;
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl LiveSession {
    pub fn new(id: String, scene_id: String, sim: SimSession, config: LiveConfig) -> Arc<Self> {
        Arc::new(Self {
            id,
            scene_id,
            started: Instant::now(),
            config,
            sim: Mutex::new(sim),
            command: Mutex::new(None),
            driver: Mutex::new(None),
            next_conn: AtomicU64::new(1),
            state: watch::channel(None).0,
            events: broadcast::channel(64).0,
        })
    }

    pub fn t_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    pub fn sim(&self) -> MutexGuard<'_, SimSession> {
        lock(&self.sim)
    }

    /// Registers a connection. The first one without a live driver drives.
    pub fn connect(&self) -> (u64, Role) {
        let conn = self.next_conn.fetch_add(1, Ordering::Relaxed);
        let mut driver = lock(&self.driver);
        if driver.is_none() {
            *driver = Some(conn);
            (conn, Role::Driver)
        } else {
            (conn, Role::Observer)
        }
    }

    pub fn disconnect(&self, conn: u64) {
        let mut driver = lock(&self.driver);
        if *driver == Some(conn) {
            *driver = None;
            // nobody is steering any more
            *lock(&self.command) = None;
        }
    }

    /// Overwrites the command slot; only the latest command is ever used.
    pub fn command(&self, v: [f64; 3], w: [f64; 3], deadman: bool) {
        *lock(&self.command) = Some(Slot {
            twist: Vector6::new(v[0], v[1], v[2], w[0], w[1], w[2]),
            deadman,
            at: Instant::now(),
        });
    }

    pub fn stop(&self) {
        self.command([0.0; 3], [0.0; 3], false);
    }

    pub fn subscribe_state(&self) -> watch::Receiver<Option<Arc<State>>> {
        self.state.subscribe()
    }

    pub fn subscribe_events(&self) -> broadcast::Receiver<Event> {
        self.events.subscribe()
    }

    pub fn publish(&self, event: Event) {
        // no receivers is fine
        let _ = self.events.send(event);
    }

    pub fn hello(&self, role: Role) -> Hello {
        let sim = self.sim();
        Hello {
            schema: WIRE_SCHEMA.into(),
            session_id: self.id.clone(),
            scene_id: self.scene_id.clone(),
            role,
            n: sim.world.chain.n(),
            dt: sim.dt(),
            objects: sim
                .world
                .scene
                .clouds
                .iter()
                .map(|c| ObjectInfo {
                    object_id: c.object_id.clone(),
                    label: c.label.clone(),
                })
                .collect(),
            held_object: sim.held_object.clone(),
            context: sim.context.clone(),
            envelopes: envelope_meshes(&sim.envelopes, &sim.context),
        }
    }

    /// The twist to apply now, or `None` when the deadman has dropped.
    fn target(&self) -> Option<Vector6<f64>> {
        let slot = lock(&self.command);
        match &*slot {
            Some(s) if s.deadman && s.at.elapsed() <= self.config.deadman_timeout => Some(s.twist),
            _ => None,
        }
    }

    /// Runs the stepper until `shutdown` flips to true.
    pub async fn run(self: Arc<Self>, log: Option<PathBuf>, mut shutdown: watch::Receiver<bool>) {
        let dt = self.sim().dt();
        let gain = 1.0 - (-2.0 * std::f64::consts::PI * self.config.smoothing_hz * dt).exp();
        let mut writer = log.and_then(|p| match TickLogWriter::create(&p) {
            Ok(w) => Some(w),
            Err(e) => {
                tracing::error!(session = %self.id, "cannot open tick log {}: {e}", p.display());
                None
            }
        });
        let mut interval = tokio::time::interval(Duration::from_secs_f64(dt));
        interval.set_missed_tick_behavior(MissedTickBehavior::Delay);
        let mut smoothed = Vector6::zeros();
        let mut failing = false;
        loop {
            tokio::select! {
                _ = interval.tick() => {}
                _ = stopped(&mut shutdown) => break,
            }
            let target = self.target();
            // a released deadman stops at once instead of decaying
            smoothed = match target {
                Some(t) => smoothed + (t - smoothed) * gain,
                None => Vector6::zeros(),
            };
            let result = {
                let mut sim = self.sim();
                // orientation at the configuration the record describes
                let r_cur = sim.world.chain.frames(&sim.q).map(|f| f.ee.rotation);
                match r_cur {
                    Ok(r) => sim.step(&smoothed).map(|rec| (rec, r)),
                    Err(e) => Err(e.into()),
                }
            };
            match result {
                Ok((rec, r_cur)) => {
                    failing = false;
                    if let Some(w) = writer.as_mut() {
                        if let Err(e) = w.write(&rec) {
                            tracing::error!(session = %self.id, "tick log write failed: {e}");
                            writer = None;
                        }
                    }
                    self.state.send_replace(Some(Arc::new(State::from_record(rec, &r_cur, target.is_none()))));
                }
                Err(e) => {
                    // the robot holds still; report once per failure streak
                    if !failing {
                        tracing::error!(session = %self.id, "step failed: {e}");
                        self.publish(Event::Error(WireError::new(ErrorCode::StepFailed, e.to_string())));
                    }
                    failing = true;
                }
            }
        }
        if let Some(mut w) = writer {
            if let Err(e) = w.flush() {
                tracing::error!(session = %self.id, "tick log flush failed: {e}");
            }
        }
        tracing::debug!(session = %self.id, "stepper stopped");
    }
}

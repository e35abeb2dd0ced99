use std::collections::HashMap;
use std::sync::Mutex;

use crate::barrier::ObstacleSolids;
use crate::geometry::{build_envelope, fit_solids, Envelope, EnvelopeOptions, EnvelopeSet, Relationship, Superquadric};
use crate::io::Scene;
use crate::kinematics::KinematicChain;
use crate::semantic::SemanticContext;

use super::SimError;

/// A scene prepared for simulation: fitted collision solids plus a cache of
/// relationship envelopes. Shared read-only between sessions.
#[derive(Debug)]
pub struct World {
    pub chain: KinematicChain,
    pub scene: Scene,
    pub obstacles: Vec<ObstacleSolids>,
    pub envelope_options: EnvelopeOptions,
    cache: Mutex<HashMap<(String, Relationship), Vec<Superquadric>>>,
}

impl World {
    pub fn new(chain: KinematicChain, scene: Scene, envelope_options: EnvelopeOptions) -> Result<Self, SimError> {
        let mut obstacles = Vec::with_capacity(scene.clouds.len());
        for cloud in &scene.clouds {
            cloud.validate_for_fit()?;
            obstacles.push(ObstacleSolids {
                object_id: cloud.object_id.clone(),
                label: cloud.label.clone(),
                solids: fit_solids(cloud, &envelope_options)?,
            });
        }
        Ok(Self {
            chain,
            scene,
            obstacles,
            envelope_options,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for l in self.scene.labels() {
            if !out.contains(&l) {
                out.push(l);
            }
        }
        out
    }

    /// Envelope members for one object and relationship, fitted on first use.
    pub fn envelope(&self, object_id: &str, relationship: Relationship) -> Result<Vec<Superquadric>, SimError> {
        let key = (object_id.to_string(), relationship);
        if let Some(hit) = self.cache.lock().unwrap_or_else(|e| e.into_inner()).get(&key) {
            return Ok(hit.clone());
        }
        let cloud = self
            .scene
            .clouds
            .iter()
            .find(|c| c.object_id == object_id)
            .ok_or_else(|| SimError::InvalidConfig(format!("no object '{object_id}' in scene")))?;
        let members = build_envelope(cloud, relationship, &self.scene.workspace(), &self.envelope_options)?;
        self.cache
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key, members.clone());
        Ok(members)
    }

    /// One envelope per (scene object, relationship) named by the context.
    /// Constraints are given per label and apply to every object carrying
    /// that label.
    pub fn envelopes(&self, context: &SemanticContext) -> Result<EnvelopeSet, SimError> {
        let mut envelopes = Vec::new();
        for cloud in &self.scene.clouds {
            for relationship in context.relationships_for(&cloud.label) {
                envelopes.push(Envelope {
                    object_id: cloud.object_id.clone(),
                    label: cloud.label.clone(),
                    relationship,
                    members: self.envelope(&cloud.object_id, relationship)?,
                });
            }
        }
        Ok(EnvelopeSet { envelopes })
    }
}

//! The state of a flow with surgery: live components, their genealogy and
//! the event log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::profile::{monitor_constant, Profile};
use crate::surgery::{Cut, DiscardRecord, GlueReport};

/// A connected component of the evolving manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: usize,
    pub parent: Option<usize>,
    pub profile: Profile,
    /// Regrid monitor constant used while evolving this component.
    pub c_mon: f64,
    /// Declared extinct once max ψ drops below this (10 mean spacings at birth).
    pub extinction_psi: f64,
}

impl Component {
    pub fn new(id: usize, parent: Option<usize>, profile: Profile, c_mon: f64) -> Self {
        let extinction_psi = 10.0 * profile.total_length() / (profile.len() - 1) as f64;
        Component { id, parent, profile, c_mon, extinction_psi }
    }
}

/// Record of one component operated on by surgery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurgeryEvent {
    pub t: f64,
    pub component: usize,
    /// h·r, the cut scale.
    pub cut_scale: f64,
    pub cuts: Vec<Cut>,
    pub glue: Vec<GlueReport>,
    pub discarded: Vec<DiscardRecord>,
    pub children: Vec<usize>,
    pub bumps_before: usize,
    pub bumps_after: usize,
    pub diameter_before: f64,
    pub diameter_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowEvent {
    Surgery(SurgeryEvent),
    Extinction { t: f64, component: usize, psi_max: f64 },
    /// Evolution without surgery stalled: the step size fell below its floor.
    Singular { t: f64, component: usize, dt: f64 },
    /// The run stopped on a solver error while evolving or operating on this component.
    Aborted { t: f64, component: usize, at_trigger: bool, error: String },
}

impl FlowEvent {
    pub fn t(&self) -> f64 {
        match self {
            FlowEvent::Surgery(e) => e.t,
            FlowEvent::Extinction { t, .. } | FlowEvent::Singular { t, .. } | FlowEvent::Aborted { t, .. } => *t,
        }
    }

    /// The component whose lifetime this event ends.
    pub fn ends(&self) -> usize {
        match self {
            FlowEvent::Surgery(e) => e.component,
            FlowEvent::Extinction { component, .. } | FlowEvent::Singular { component, .. } | FlowEvent::Aborted { component, .. } => {
                *component
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub components: Vec<Component>,
    /// parent id → child ids
    pub genealogy: BTreeMap<usize, Vec<usize>>,
    pub events: Vec<FlowEvent>,
    pub next_id: usize,
}

impl FlowState {
    /// A state holding one component (id 0).
    pub fn new(p: Profile) -> Result<Self> {
        let c_mon = monitor_constant(&p)?;
        let t = p.t;
        Ok(FlowState { t, components: vec![Component::new(0, None, p, c_mon)], genealogy: BTreeMap::new(), events: vec![], next_id: 1 })
    }

    pub fn component(&self, id: usize) -> Option<&Component> {
        self.components.iter().find(|c| c.id == id)
    }

    /// Checks the structural invariants: unique ids, valid profiles, and a
    /// genealogy whose edges point from older to younger ids.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.components {
            if !seen.insert(c.id) || c.id >= self.next_id {
                return Err(FlowError::InvalidSpec(format!("component id {} duplicated or unissued", c.id)));
            }
            c.profile.validate()?;
        }
        for (parent, kids) in &self.genealogy {
            if kids.iter().any(|k| k <= parent) {
                return Err(FlowError::InvalidSpec(format!("genealogy edge from {parent} is not forward")));
            }
        }
        Ok(())
    }

    /// Remove a component and log its extinction.
    pub fn extinguish(&mut self, id: usize) {
        if let Some(pos) = self.components.iter().position(|c| c.id == id) {
            let c = self.components.remove(pos);
            self.events.push(FlowEvent::Extinction { t: c.profile.t, component: id, psi_max: c.profile.psi_max() });
        }
    }
}

//! Device catalog file: TOML with one entry per device/medium.
//!
//! Keys match the field names of [`ComputeDevice`] and [`StorageMedium`]
//! exactly; unknown keys are rejected. An optional `objects` section seeds
//! initial data-object placement for simulations.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ComputeDevice, StorageMedium};
use crate::error::{Result, SimError};

/// Initial placement of a named data object on a medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub id: String,
    pub size: u64,
    /// Medium id the object currently resides on.
    pub home: String,
}

/// The full hardware catalog for a simulation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    #[serde(default)]
    pub devices: Vec<ComputeDevice>,
    #[serde(default)]
    pub media: Vec<StorageMedium>,
    #[serde(default)]
    pub objects: Vec<ObjectEntry>,
}

impl Catalog {
    pub fn from_toml(text: &str) -> Result<Self> {
        let catalog: Catalog =
            toml::from_str(text).map_err(|e| SimError::Validation(format!("catalog: {e}")))?;
        let errs = catalog.validate();
        if errs.is_empty() {
            Ok(catalog)
        } else {
            Err(SimError::Validation(errs.join("; ")))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("catalog serialization cannot fail")
    }

    /// Every invariant violation in the catalog, not just the first.
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut device_ids = BTreeSet::new();
        for d in &self.devices {
            errs.extend(d.validate());
            if !device_ids.insert(d.id.clone()) {
                errs.push(format!("duplicate device id '{}'", d.id));
            }
        }
        let mut medium_ids = BTreeSet::new();
        for m in &self.media {
            errs.extend(m.validate());
            if !medium_ids.insert(m.id.clone()) {
                errs.push(format!("duplicate medium id '{}'", m.id));
            }
        }
        let mut object_ids = BTreeSet::new();
        for o in &self.objects {
            if o.size == 0 {
                errs.push(format!("object '{}': size must be > 0", o.id));
            }
            if !medium_ids.contains(&o.home) {
                errs.push(format!(
                    "object '{}': home medium '{}' not in catalog",
                    o.id, o.home
                ));
            }
            if !object_ids.insert(o.id.clone()) {
                errs.push(format!("duplicate object id '{}'", o.id));
            }
        }
        errs
    }

    pub fn device(&self, id: &str) -> Option<&ComputeDevice> {
        self.devices.iter().find(|d| d.id == id)
    }

    pub fn medium(&self, id: &str) -> Option<&StorageMedium> {
        self.media.iter().find(|m| m.id == id)
    }
}

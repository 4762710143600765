//! Ecosystem configuration: the trust anchors, their roles and the schemas
//! each one issues.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::agents::{Ecosystem, Role};
use crate::crypto::GroupParams;
use crate::registry::CredentialSchema;

pub const CONFIG_VERSION: &str = "cpx-ecosystem/1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaSpec {
    pub schema_id: String,
    pub attributes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityConfig {
    pub name: String,
    pub role: Role,
    #[serde(default)]
    pub schemas: Vec<SchemaSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EcosystemConfig {
    pub version: String,
    pub holder: String,
    pub entities: Vec<EntityConfig>,
}

fn schema(id: &str, attributes: &[&str]) -> SchemaSpec {
    SchemaSpec { schema_id: id.to_string(), attributes: attributes.iter().map(|s| s.to_string()).collect() }
}

fn entity(name: &str, role: Role, schemas: Vec<SchemaSpec>) -> EntityConfig {
    EntityConfig { name: name.to_string(), role, schemas }
}

pub const MEDICAL_SCHOOL: &str = "Medical School";
pub const GMC: &str = "General Medical Council";
pub const RCPE: &str = "Royal College of Edinburgh";
pub const EDINBURGH: &str = "Edinburgh Hospital";
pub const GLASGOW: &str = "Glasgow Hospital";
pub const HES: &str = "Health Education Scotland";
pub const DOCTOR: &str = "Doctor";

impl Default for EcosystemConfig {
    fn default() -> Self {
        EcosystemConfig {
            version: CONFIG_VERSION.to_string(),
            holder: DOCTOR.to_string(),
            entities: vec![
                entity(
                    MEDICAL_SCHOOL,
                    Role::Issuer,
                    vec![schema(
                        "medical_degree:1",
                        &["full_name", "date_of_birth", "degree", "university", "graduation_date"],
                    )],
                ),
                entity(
                    GMC,
                    Role::Mixed,
                    vec![
                        schema("gmc_license:1", &["full_name", "gmc_number", "license_status"]),
                        schema("good_standing:1", &["gmc_number", "status", "issued_on"]),
                    ],
                ),
                entity(
                    RCPE,
                    Role::Mixed,
                    vec![
                        schema("rcpe_accreditation:1", &["programme", "specialty", "accredited_on"]),
                        schema("qualified_physician:1", &["full_name", "specialty", "qualified_on"]),
                    ],
                ),
                entity(
                    EDINBURGH,
                    Role::Mixed,
                    vec![
                        schema("identity_verification:1", &["full_name", "date_of_birth", "check_level", "checked_on"]),
                        schema("employment:1", &["employer", "role", "start_date"]),
                    ],
                ),
                entity(GLASGOW, Role::Mixed, vec![schema("rotation_placement:1", &["hospital", "specialty", "start_date"])]),
                entity(HES, Role::Issuer, vec![schema("training_record:1", &["course_name", "provider", "completed_on"])]),
            ],
        }
    }
}

impl EcosystemConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let config: EcosystemConfig =
            serde_json::from_str(text).map_err(|e| ScenarioError::ConfigInvalid(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != CONFIG_VERSION {
            return Err(ScenarioError::ConfigInvalid(format!("unsupported config version `{}`", self.version)));
        }
        let mut names = BTreeSet::new();
        names.insert(self.holder.as_str());
        let mut schemas = BTreeSet::new();
        for e in &self.entities {
            if !names.insert(e.name.as_str()) {
                return Err(ScenarioError::ConfigInvalid(format!("duplicate entity name `{}`", e.name)));
            }
            if e.role == Role::Holder {
                return Err(ScenarioError::ConfigInvalid(format!("entity `{}` cannot be a holder", e.name)));
            }
            for s in &e.schemas {
                if !schemas.insert(s.schema_id.as_str()) {
                    return Err(ScenarioError::ConfigInvalid(format!(
                        "schema `{}` is issued by more than one entity",
                        s.schema_id
                    )));
                }
                let names: Vec<&str> = s.attributes.iter().map(String::as_str).collect();
                CredentialSchema::new(&s.schema_id, &names)
                    .validate()
                    .map_err(|err| ScenarioError::ConfigInvalid(err.to_string()))?;
            }
        }
        Ok(())
    }

    pub fn issuer_of(&self, schema_id: &str) -> Option<&str> {
        self.entities
            .iter()
            .find(|e| e.schemas.iter().any(|s| s.schema_id == schema_id))
            .map(|e| e.name.as_str())
    }

    pub fn entity(&self, name: &str) -> Option<&EntityConfig> {
        self.entities.iter().find(|e| e.name == name)
    }
}

/// Publishes every anchor DID and schema and adds the holder.
pub fn setup_ecosystem(config: &EcosystemConfig, params: &'static GroupParams, seed: u64) -> Result<Ecosystem, ScenarioError> {
    config.validate()?;
    let mut eco = Ecosystem::new(params, seed);
    for e in &config.entities {
        eco.add_anchor(&e.name, e.role).map_err(|err| ScenarioError::ConfigInvalid(err.to_string()))?;
    }
    for e in &config.entities {
        for s in &e.schemas {
            let names: Vec<&str> = s.attributes.iter().map(String::as_str).collect();
            eco.publish_schema(&e.name, CredentialSchema::new(&s.schema_id, &names))
                .map_err(|err| ScenarioError::ConfigInvalid(err.to_string()))?;
        }
    }
    eco.add_holder(&config.holder).map_err(|err| ScenarioError::ConfigInvalid(err.to_string()))?;
    Ok(eco)
}

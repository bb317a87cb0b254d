//! Ordered feature schema shared by every cohort.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    Demographic,
    Vital,
    Laboratory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub unit: String,
    pub group: FeatureGroup,
}

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("duplicate feature name `{0}`")]
    DuplicateName(String),
    #[error("schema has no features")]
    Empty,
}

/// Ordered, uniquely named feature list with a stable digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    features: Vec<Feature>,
    schema_hash: String,
}

const STANDARD: [(&str, &str, FeatureGroup); 27] = {
    use FeatureGroup::*;
    [
        ("Age", "years", Demographic),
        ("Gender", "0=female,1=male", Demographic),
        ("ICU_hours", "h", Demographic),
        ("HR", "beats/min", Vital),
        ("Temp", "degC", Vital),
        ("SBP", "mmHg", Vital),
        ("MAP", "mmHg", Vital),
        ("DBP", "mmHg", Vital),
        ("Resp", "breaths/min", Vital),
        ("FiO2", "fraction", Laboratory),
        ("SaO2", "%", Laboratory),
        ("pH", "pH", Laboratory),
        ("AST", "IU/L", Laboratory),
        ("BUN", "mg/dL", Laboratory),
        ("Calcium", "mg/dL", Laboratory),
        ("Chloride", "mmol/L", Laboratory),
        ("Creatinine", "mg/dL", Laboratory),
        ("Glucose", "mg/dL", Laboratory),
        ("Potassium", "mmol/L", Laboratory),
        ("TotalBilirubin", "mg/dL", Laboratory),
        ("Hct", "%", Laboratory),
        ("Hgb", "g/dL", Laboratory),
        ("PTT", "s", Laboratory),
        ("WBC", "10^3/uL", Laboratory),
        ("Platelets", "10^3/uL", Laboratory),
        ("BUN_CR", "ratio", Laboratory),
        ("SaO2_FiO2", "ratio", Laboratory),
    ]
};

/// Column names used by the public sepsis-challenge PSV files for features
/// whose canonical name differs.
const ALIASES: [(&str, &str); 4] = [
    ("ICULOS", "ICU_hours"),
    ("Bilirubin_total", "TotalBilirubin"),
    ("BUN/CR", "BUN_CR"),
    ("SaO2/FiO2", "SaO2_FiO2"),
];

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self, SchemaError> {
        if features.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut seen = std::collections::HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(SchemaError::DuplicateName(f.name.clone()));
            }
        }
        let mut hasher = Sha256::new();
        for f in &features {
            hasher.update(f.name.as_bytes());
            hasher.update([0x1f]);
            hasher.update(f.unit.as_bytes());
            hasher.update([0x1e]);
        }
        let schema_hash = hex::encode(hasher.finalize());
        Ok(Self {
            features,
            schema_hash,
        })
    }

    /// The 27-feature set: 3 demographic, 6 vital and 18 laboratory variables.
    pub fn standard() -> Self {
        let features = STANDARD
            .iter()
            .map(|(name, unit, group)| Feature {
                name: name.to_string(),
                unit: unit.to_string(),
                group: *group,
            })
            .collect();
        Self::new(features).expect("standard schema is valid")
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    pub fn schema_hash(&self) -> &str {
        &self.schema_hash
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Resolves a PSV header column to a schema index, accepting known aliases.
    pub fn resolve_column(&self, column: &str) -> Option<usize> {
        self.index_of(column).or_else(|| {
            ALIASES
                .iter()
                .find(|(alias, _)| *alias == column)
                .and_then(|(_, canonical)| self.index_of(canonical))
        })
    }

    pub fn count_group(&self, group: FeatureGroup) -> usize {
        self.features.iter().filter(|f| f.group == group).count()
    }

    /// Whether column `j` counts towards the missing-value ratio.
    pub fn is_clinical(&self, j: usize) -> bool {
        self.features[j].group != FeatureGroup::Demographic
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_partition() {
        let s = FeatureSchema::standard();
        assert_eq!(s.len(), 27);
        assert_eq!(s.count_group(FeatureGroup::Demographic), 3);
        assert_eq!(s.count_group(FeatureGroup::Vital), 6);
        assert_eq!(s.count_group(FeatureGroup::Laboratory), 18);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = FeatureSchema::standard();
        let b = FeatureSchema::standard();
        assert_eq!(a.schema_hash(), b.schema_hash());
        let mut feats = a.features().to_vec();
        feats.swap(3, 4);
        let c = FeatureSchema::new(feats).unwrap();
        assert_ne!(a.schema_hash(), c.schema_hash());
    }

    #[test]
    fn rejects_duplicates() {
        let f = Feature {
            name: "HR".into(),
            unit: "bpm".into(),
            group: FeatureGroup::Vital,
        };
        assert_eq!(
            FeatureSchema::new(vec![f.clone(), f]),
            Err(SchemaError::DuplicateName("HR".into()))
        );
    }

    #[test]
    fn aliases_resolve() {
        let s = FeatureSchema::standard();
        assert_eq!(s.resolve_column("ICULOS"), s.index_of("ICU_hours"));
        assert_eq!(
            s.resolve_column("Bilirubin_total"),
            s.index_of("TotalBilirubin")
        );
        assert_eq!(s.resolve_column("EtCO2"), None);
    }
}

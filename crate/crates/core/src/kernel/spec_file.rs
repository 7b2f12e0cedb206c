//! JSON kernel-spec files.
//!
//! ```json
//! {
//!   "schemaVersion": 1,
//!   "name": "copy",
//!   "fields": [{"name": "src", "elementSize": 8, "dims": [1024, 1, 1],
//!               "alignment": 0, "strides": [8, 8192, 8192]}],
//!   "accesses": [{"field": "src", "kind": "load",
//!                 "expr": "src + (tidx + bidx * BX) * 8"}],
//!   "launch": {"block": [256, 1, 1], "grid": [4, 1, 1], "workPerThread": 1},
//!   "flopsPerLup": 0
//! }
//! ```

use serde::{Deserialize, Serialize};

use super::{Access, AccessKind, Field, KernelDescriptor, KernelError, LaunchConfig};
use crate::expr;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct KernelSpecFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub fields: Vec<Field>,
    pub accesses: Vec<AccessSpec>,
    pub launch: LaunchConfig,
    #[serde(default)]
    pub flops_per_lup: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct AccessSpec {
    pub field: String,
    pub kind: AccessKind,
    pub expr: String,
    #[serde(default = "one")]
    pub multiplicity: u32,
}

fn one() -> u32 {
    1
}

impl KernelSpecFile {
    pub fn from_json(text: &str) -> Result<Self, KernelError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel spec serializes")
    }

    pub fn into_descriptor(self) -> Result<KernelDescriptor, KernelError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(KernelError::SchemaVersion(self.schema_version));
        }
        let names: Vec<&str> = self.fields.iter().map(|f| f.name.as_str()).collect();
        let accesses = self
            .accesses
            .iter()
            .map(|a| {
                let e = expr::parse(&a.expr, &names).map_err(|source| KernelError::Expr {
                    text: a.expr.clone(),
                    source,
                })?;
                Ok(Access {
                    field: a.field.clone(),
                    kind: a.kind,
                    expr: e,
                    multiplicity: a.multiplicity,
                })
            })
            .collect::<Result<Vec<_>, KernelError>>()?;
        let k = KernelDescriptor {
            name: self.name,
            fields: self.fields,
            accesses,
            launch: self.launch,
            flops_per_lup: self.flops_per_lup,
        };
        k.validate()?;
        Ok(k)
    }
}

impl From<&KernelDescriptor> for KernelSpecFile {
    fn from(k: &KernelDescriptor) -> Self {
        KernelSpecFile {
            schema_version: SCHEMA_VERSION,
            name: k.name.clone(),
            fields: k.fields.clone(),
            accesses: k
                .accesses
                .iter()
                .map(|a| AccessSpec {
                    field: a.field.clone(),
                    kind: a.kind,
                    expr: a.expr.to_string(),
                    multiplicity: a.multiplicity,
                })
                .collect(),
            launch: k.launch,
            flops_per_lup: k.flops_per_lup,
        }
    }
}

impl KernelDescriptor {
    pub fn from_spec_json(text: &str) -> Result<Self, KernelError> {
        KernelSpecFile::from_json(text)?.into_descriptor()
    }

    pub fn to_spec_json(&self) -> String {
        KernelSpecFile::from(self).to_json()
    }
}

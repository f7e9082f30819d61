//! Binary attribute schema.
//!
//! An [`AttributeSchema`] fixes the column order of every label, confidence and
//! prediction matrix in the toolkit. Schemas are data-driven: any number of
//! attributes grouped into any set of categories can be loaded from JSON. The
//! embedded UPAR default follows the published 40-attribute / 12-category
//! layout and can be replaced without code changes.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDef {
    pub name: String,
    pub category: String,
}

/// Ordered attribute definitions. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttributeSchema {
    categories: Vec<String>,
    attributes: Vec<AttributeDef>,
}

#[derive(Deserialize)]
struct RawSchema {
    categories: Vec<String>,
    attributes: Vec<AttributeDef>,
}

/// Colors shared by the upper- and lower-body color categories.
pub const UPAR_COLORS: [&str; 12] = [
    "Black", "White", "Grey", "Red", "Blue", "Yellow", "Orange", "Green", "Purple", "Pink",
    "Brown", "Other",
];

impl AttributeSchema {
    pub fn new(categories: Vec<String>, attributes: Vec<AttributeDef>) -> Result<Self> {
        let mut seen_categories = HashSet::new();
        for c in &categories {
            if c.is_empty() {
                return Err(Error::EmptyIdentifier("category list"));
            }
            if !seen_categories.insert(c.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate category `{c}`")));
            }
        }
        let mut names = HashSet::new();
        for a in &attributes {
            if a.name.is_empty() {
                return Err(Error::EmptyIdentifier("attribute name"));
            }
            if a.category.is_empty() {
                return Err(Error::EmptyIdentifier("attribute category"));
            }
            if !names.insert(a.name.as_str()) {
                return Err(Error::DuplicateName(a.name.clone()));
            }
            if !seen_categories.contains(a.category.as_str()) {
                return Err(Error::UnknownCategory {
                    attribute: a.name.clone(),
                    category: a.category.clone(),
                });
            }
        }
        Ok(Self {
            categories,
            attributes,
        })
    }

    /// Schema with one category `synthetic` and attributes `attr_00`, `attr_01`, ...
    pub fn synthetic(count: usize) -> Self {
        let attributes = (0..count)
            .map(|i| AttributeDef {
                name: format!("attr_{i:02}"),
                category: "synthetic".into(),
            })
            .collect();
        Self {
            categories: vec!["synthetic".into()],
            attributes,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawSchema = serde_json::from_str(text).map_err(|e| Error::parse("schema", e))?;
        Self::new(raw.categories, raw.attributes)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serialization cannot fail")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn attributes(&self) -> &[AttributeDef] {
        &self.attributes
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.attributes.iter().map(|a| a.name.as_str())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Attributes of one category, in schema order.
    pub fn category_members(&self, category: &str) -> Vec<&AttributeDef> {
        self.attributes
            .iter()
            .filter(|a| a.category == category)
            .collect()
    }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<AttributeSchema> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    AttributeSchema::from_json_str(&text)
}

/// The embedded UPAR attribute layout: 40 binary attributes over 12 categories.
///
/// Colors use 11 distinct named colors plus `Other`; the unused `mixture` flag
/// is not part of the schema.
pub fn default_upar_schema() -> AttributeSchema {
    let mut categories = Vec::new();
    let mut attributes = Vec::new();
    let mut push = |category: &str, names: &[String]| {
        categories.push(category.to_string());
        for n in names {
            attributes.push(AttributeDef {
                name: n.clone(),
                category: category.to_string(),
            });
        }
    };
    let prefixed = |prefix: &str, values: &[&str]| -> Vec<String> {
        values.iter().map(|v| format!("{prefix}-{v}")).collect()
    };

    push("Age", &prefixed("Age", &["Young", "Adult", "Old"]));
    push("Gender", &prefixed("Gender", &["Female"]));
    push("Hair-Length", &prefixed("Hair-Length", &["Short", "Long", "Bald"]));
    push("UpperBody-Length", &prefixed("UpperBody-Length", &["Short"]));
    push("UpperBody-Color", &prefixed("UpperBody-Color", &UPAR_COLORS));
    push("LowerBody-Length", &prefixed("LowerBody-Length", &["Short"]));
    push("LowerBody-Color", &prefixed("LowerBody-Color", &UPAR_COLORS));
    push(
        "LowerBody-Type",
        &prefixed("LowerBody-Type", &["Trousers&Shorts", "Skirt&Dress"]),
    );
    push("Accessory-Backpack", &prefixed("Accessory", &["Backpack"]));
    push("Accessory-Bag", &prefixed("Accessory", &["Bag"]));
    push(
        "Accessory-Glasses",
        &prefixed("Accessory-Glasses", &["Normal", "Sun"]),
    );
    push("Accessory-Hat", &prefixed("Accessory", &["Hat"]));

    AttributeSchema::new(categories, attributes).expect("embedded schema is valid")
}

//! HyperCat catalogue documents.

use serde::{Deserialize, Serialize};

pub const REL_CONTENT_TYPE: &str = "urn:X-hypercat:rels:isContentType";
pub const REL_DESCRIPTION: &str = "urn:X-hypercat:rels:hasDescription:en";
pub const CATALOGUE_TYPE: &str = "application/vnd.hypercat.catalogue+json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub rel: String,
    pub val: String,
}

impl Metadata {
    pub fn new(rel: impl Into<String>, val: impl Into<String>) -> Self {
        Metadata { rel: rel.into(), val: val.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub href: String,
    #[serde(rename = "item-metadata")]
    pub item_metadata: Vec<Metadata>,
}

impl Item {
    pub fn new(href: impl Into<String>) -> Self {
        Item { href: href.into(), item_metadata: Vec::new() }
    }

    pub fn with(mut self, rel: impl Into<String>, val: impl Into<String>) -> Self {
        self.item_metadata.push(Metadata::new(rel, val));
        self
    }

    /// First value for `rel`.
    pub fn get(&self, rel: &str) -> Option<&str> {
        self.item_metadata.iter().find(|m| m.rel == rel).map(|m| m.val.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Catalogue {
    #[serde(rename = "catalogue-metadata")]
    pub catalogue_metadata: Vec<Metadata>,
    pub items: Vec<Item>,
}

impl Catalogue {
    pub fn new(description: &str, items: Vec<Item>) -> Self {
        Catalogue {
            catalogue_metadata: vec![
                Metadata::new(REL_CONTENT_TYPE, CATALOGUE_TYPE),
                Metadata::new(REL_DESCRIPTION, description),
            ],
            items,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("catalogue serializes")
    }

    pub fn from_json(bytes: &[u8]) -> serde_json::Result<Catalogue> {
        serde_json::from_slice(bytes)
    }
}

//! Semantic category ontology and occlusion-aware keypoint filtering.
//!
//! Every semantic class resolves to one of three parent categories:
//!
//! * [`Category::Valid`]: drivable surface; the keypoint is kept.
//! * [`Category::OcclusionValid`]: on-road objects that still give context
//!   (vehicles, people); the keypoint is kept but counts as occluded.
//! * [`Category::Invalid`]: everything else; the keypoint is dropped and
//!   counts as occluded.
//!
//! A centerline's occlusion ratio is `n_occluded / n_total`, and the
//! centerline survives only while that ratio stays strictly below `t_occ`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{SemanticMask, UNLABELED};

const DEFAULT_ONTOLOGY: &str = include_str!("../ontology/default.ontology.json");

/// Class IDs of the default ontology that the synthetic generator paints.
pub mod classes {
    pub const ROAD: u8 = 13;
    pub const BUILDING: u8 = 17;
    pub const SKY: u8 = 27;
    pub const CAR: u8 = 55;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcclusionError {
    #[error("centerline {index}: {keypoints} keypoints but {labels} labels")]
    LengthMismatch {
        index: usize,
        keypoints: usize,
        labels: usize,
    },
    #[error("centerline {index} has no keypoints")]
    EmptyCenterline { index: usize },
    #[error("{0} centerlines but {1} label lists")]
    CountMismatch(usize, usize),
    #[error("occlusion threshold must be a non-negative number, got {0}")]
    InvalidThreshold(f64),
    #[error("keypoint pixel ({u}, {v}) is outside the mask")]
    PixelOutOfBounds { u: f64, v: f64 },
    #[error("ontology: {0}")]
    Ontology(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Valid,
    OcclusionValid,
    Invalid,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Valid, Category::OcclusionValid, Category::Invalid];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Valid => "valid",
            Category::OcclusionValid => "occlusion_valid",
            Category::Invalid => "invalid",
        }
    }

    pub fn is_occluded(self) -> bool {
        self != Category::Valid
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Serialize, Deserialize)]
struct OntologyFile {
    subcategories: BTreeMap<String, Vec<u8>>,
    parents: BTreeMap<Category, Vec<String>>,
}

/// Class → subcategory → parent category mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionOntology {
    class_to_subcategory: BTreeMap<u8, String>,
    subcategory_to_parent: BTreeMap<String, Category>,
}

impl OcclusionOntology {
    pub fn new(
        class_to_subcategory: BTreeMap<u8, String>,
        subcategory_to_parent: BTreeMap<String, Category>,
    ) -> Result<Self, OcclusionError> {
        for (class, sub) in &class_to_subcategory {
            let Some(parent) = subcategory_to_parent.get(sub) else {
                return Err(OcclusionError::Ontology(format!(
                    "class {class} maps to subcategory {sub:?} without a parent"
                )));
            };
            if *class == UNLABELED && *parent != Category::Invalid {
                return Err(OcclusionError::Ontology(format!(
                    "unlabeled class {UNLABELED} must resolve to invalid, not {parent}"
                )));
            }
        }
        Ok(Self {
            class_to_subcategory,
            subcategory_to_parent,
        })
    }

    /// The shipped default configuration.
    pub fn default_config() -> Self {
        Self::from_json(DEFAULT_ONTOLOGY.as_bytes()).expect("bundled ontology is valid")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, OcclusionError> {
        let file: OntologyFile = serde_json::from_slice(bytes)
            .map_err(|e| OcclusionError::Ontology(e.to_string()))?;
        let mut subcategory_to_parent = BTreeMap::new();
        for (parent, subs) in &file.parents {
            for sub in subs {
                if !file.subcategories.contains_key(sub) {
                    return Err(OcclusionError::Ontology(format!(
                        "parent {parent} lists unknown subcategory {sub:?}"
                    )));
                }
                if let Some(prev) = subcategory_to_parent.insert(sub.clone(), *parent) {
                    return Err(OcclusionError::Ontology(format!(
                        "subcategory {sub:?} assigned to both {prev} and {parent}"
                    )));
                }
            }
        }
        let mut class_to_subcategory = BTreeMap::new();
        for (sub, ids) in &file.subcategories {
            for id in ids {
                if let Some(prev) = class_to_subcategory.insert(*id, sub.clone()) {
                    return Err(OcclusionError::Ontology(format!(
                        "class {id} listed in both {prev:?} and {sub:?}"
                    )));
                }
            }
        }
        Self::new(class_to_subcategory, subcategory_to_parent)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut subcategories: BTreeMap<String, Vec<u8>> = self
            .subcategory_to_parent
            .keys()
            .map(|s| (s.clone(), Vec::new()))
            .collect();
        for (class, sub) in &self.class_to_subcategory {
            subcategories.entry(sub.clone()).or_default().push(*class);
        }
        let mut parents: BTreeMap<Category, Vec<String>> =
            Category::ALL.iter().map(|c| (*c, Vec::new())).collect();
        for (sub, parent) in &self.subcategory_to_parent {
            parents.entry(*parent).or_default().push(sub.clone());
        }
        let mut out = serde_json::to_vec_pretty(&OntologyFile {
            subcategories,
            parents,
        })
        .expect("ontology serialization");
        out.push(b'\n');
        out
    }

    pub fn subcategory(&self, class_id: u8) -> Option<&str> {
        self.class_to_subcategory.get(&class_id).map(String::as_str)
    }

    /// Parent category of a class; unmapped classes are invalid.
    pub fn categorize(&self, class_id: u8) -> Category {
        self.class_to_subcategory
            .get(&class_id)
            .and_then(|sub| self.subcategory_to_parent.get(sub))
            .copied()
            .unwrap_or(Category::Invalid)
    }

    /// Any class ID that resolves to `category`, lowest first.
    pub fn representative(&self, category: Category) -> Option<u8> {
        (0..=u8::MAX).find(|c| self.categorize(*c) == category)
    }
}

impl Default for OcclusionOntology {
    fn default() -> Self {
        Self::default_config()
    }
}

/// Per-centerline outcome of the filter.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionVerdict {
    /// Indices into the input centerline of the keypoints that survive.
    pub kept: Vec<usize>,
    pub n_total: usize,
    pub n_occluded: usize,
    pub ratio: f64,
    pub removed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome<T> {
    pub verdicts: Vec<OcclusionVerdict>,
    /// Surviving keypoints of every retained centerline, in input order.
    pub filtered: Vec<Vec<T>>,
}

pub fn check_threshold(t_occ: f64) -> Result<(), OcclusionError> {
    if t_occ.is_nan() || t_occ < 0.0 {
        return Err(OcclusionError::InvalidThreshold(t_occ));
    }
    Ok(())
}

/// `ratio >= t_occ` removes a centerline.
pub fn is_removed(ratio: f64, t_occ: f64) -> bool {
    ratio >= t_occ
}

/// Verdict for one centerline given the category of each keypoint.
pub fn judge(categories: &[Category], t_occ: f64) -> OcclusionVerdict {
    let mut kept = Vec::with_capacity(categories.len());
    let mut n_occluded = 0;
    for (j, cat) in categories.iter().enumerate() {
        match cat {
            Category::Invalid => n_occluded += 1,
            Category::OcclusionValid => {
                n_occluded += 1;
                kept.push(j);
            }
            Category::Valid => kept.push(j),
        }
    }
    let n_total = categories.len();
    let ratio = n_occluded as f64 / n_total as f64;
    OcclusionVerdict {
        kept,
        n_total,
        n_occluded,
        ratio,
        removed: is_removed(ratio, t_occ),
    }
}

/// Filters every centerline of a frame against the ontology.
pub fn filter_keypoints<T: Clone>(
    centerlines: &[Vec<T>],
    labels: &[Vec<u8>],
    ontology: &OcclusionOntology,
    t_occ: f64,
) -> Result<FilterOutcome<T>, OcclusionError> {
    check_threshold(t_occ)?;
    if centerlines.len() != labels.len() {
        return Err(OcclusionError::CountMismatch(centerlines.len(), labels.len()));
    }
    let mut verdicts = Vec::with_capacity(centerlines.len());
    let mut filtered = Vec::new();
    for (index, (points, ids)) in centerlines.iter().zip(labels).enumerate() {
        if points.len() != ids.len() {
            return Err(OcclusionError::LengthMismatch {
                index,
                keypoints: points.len(),
                labels: ids.len(),
            });
        }
        if points.is_empty() {
            return Err(OcclusionError::EmptyCenterline { index });
        }
        let categories: Vec<Category> = ids.iter().map(|c| ontology.categorize(*c)).collect();
        let verdict = judge(&categories, t_occ);
        if !verdict.removed {
            filtered.push(verdict.kept.iter().map(|&j| points[j].clone()).collect());
        }
        verdicts.push(verdict);
    }
    Ok(FilterOutcome { verdicts, filtered })
}

/// Class at the nearest integer pixel. Off-mask keypoints are an error.
pub fn lookup_class(mask: &SemanticMask, u: f64, v: f64) -> Result<u8, OcclusionError> {
    let (x, y) = (u.round(), v.round());
    if !(x.is_finite() && y.is_finite()) {
        return Err(OcclusionError::PixelOutOfBounds { u, v });
    }
    mask.get(x as i64, y as i64)
        .ok_or(OcclusionError::PixelOutOfBounds { u, v })
}

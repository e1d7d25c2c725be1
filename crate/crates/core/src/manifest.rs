//! Benchmark instances and manifests, plus structural validation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::compound::CompoundNoun;

/// Which constituent nouns are visible in the positive image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Category {
    /// One noun only modifies the look of the other.
    Either,
    /// Both constituents are visible.
    Both,
    /// Neither constituent is visible.
    None,
    Unlabeled,
}

impl Category {
    pub const ALL: [Category; 4] = [Category::Either, Category::Both, Category::None, Category::Unlabeled];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Either => "either",
            Category::Both => "both",
            Category::None => "none",
            Category::Unlabeled => "unlabeled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImageRef {
    pub id: String,
    pub uri: String,
    /// Hex SHA-256 of the image bytes, when known.
    pub content_hash: Option<String>,
}

impl ImageRef {
    pub fn new(id: impl Into<String>, uri: impl Into<String>) -> Self {
        Self { id: id.into(), uri: uri.into(), content_hash: None }
    }

    pub fn with_hash(mut self, hash: impl Into<String>) -> Self {
        self.content_hash = Some(hash.into());
        self
    }
}

/// One compound noun with its positive image and two distractors.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkInstance {
    pub id: String,
    pub compound_noun: CompoundNoun,
    pub positive: ImageRef,
    pub negatives: [ImageRef; 2],
    pub category: Category,
}

impl BenchmarkInstance {
    /// Positive first, then the two negatives.
    pub fn images(&self) -> [&ImageRef; 3] {
        [&self.positive, &self.negatives[0], &self.negatives[1]]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkManifest {
    pub name: String,
    pub version: String,
    pub instances: Vec<BenchmarkInstance>,
}

/// A single broken rule found by [`validate_manifest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub instance_id: Option<String>,
    pub rule: &'static str,
    /// The id at fault (instance or image), when there is one.
    pub subject: Option<String>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, instance_id: Option<&str>, rule: &'static str, subject: Option<&str>, detail: String) {
        self.violations.push(Violation {
            instance_id: instance_id.map(String::from),
            rule,
            subject: subject.map(String::from),
            detail,
        });
    }
}

pub const RULE_DUPLICATE_INSTANCE: &str = "duplicate-instance-id";
pub const RULE_POSITIVE_IN_NEGATIVES: &str = "positive-in-negatives";
pub const RULE_DUPLICATE_NEGATIVE: &str = "duplicate-negative";
pub const RULE_DUPLICATE_IMAGE: &str = "duplicate-image-id";
pub const RULE_EMPTY_FIELD: &str = "empty-field";

/// Reports every structural violation; never mutates.
///
/// Cross-instance image reuse is counted once per instance, so an id that
/// repeats inside one instance is reported only by the within-instance rule.
pub fn validate_manifest(m: &BenchmarkManifest) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut instance_ids = BTreeSet::new();
    let mut image_ids: BTreeSet<&str> = BTreeSet::new();

    for inst in &m.instances {
        let iid = Some(inst.id.as_str());
        if inst.id.trim().is_empty() {
            report.push(iid, RULE_EMPTY_FIELD, None, String::from("instance id is empty"));
        }
        if !instance_ids.insert(inst.id.as_str()) {
            report.push(iid, RULE_DUPLICATE_INSTANCE, iid, format!("instance id {:?} repeats", inst.id));
        }
        for img in inst.images() {
            if img.id.trim().is_empty() {
                report.push(iid, RULE_EMPTY_FIELD, None, String::from("image id is empty"));
            }
            if img.uri.trim().is_empty() {
                report.push(iid, RULE_EMPTY_FIELD, Some(&img.id), format!("image {:?} has an empty uri", img.id));
            }
        }

        let [n1, n2] = &inst.negatives;
        if inst.positive.id == n1.id || inst.positive.id == n2.id {
            report.push(iid, RULE_POSITIVE_IN_NEGATIVES, Some(&inst.positive.id), format!("positive {:?} reused as a negative", inst.positive.id));
        }
        if n1.id == n2.id {
            report.push(iid, RULE_DUPLICATE_NEGATIVE, Some(&n1.id), format!("negative {:?} listed twice", n1.id));
        }

        let local: BTreeSet<&str> = inst.images().iter().map(|i| i.id.as_str()).collect();
        for id in local {
            if !image_ids.insert(id) {
                report.push(iid, RULE_DUPLICATE_IMAGE, Some(id), format!("image id {id:?} also used by another instance"));
            }
        }
    }
    report
}

/// Published size of the benchmark and its category split.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfficialProfile {
    pub instances: usize,
    pub images: usize,
    pub either: usize,
    pub both: usize,
    pub none: usize,
}

pub const OFFICIAL_PROFILE: OfficialProfile =
    OfficialProfile { instances: 400, images: 1200, either: 199, both: 106, none: 95 };

pub const RULE_OFFICIAL_PROFILE: &str = "official-profile";

/// Structural validation plus the published instance, image and category counts.
pub fn check_official_profile(m: &BenchmarkManifest) -> ValidationReport {
    let mut report = validate_manifest(m);
    let want = OFFICIAL_PROFILE;
    let images: BTreeSet<&str> =
        m.instances.iter().flat_map(|i| i.images()).map(|img| img.id.as_str()).collect();
    let count = |c: Category| m.instances.iter().filter(|i| i.category == c).count();

    let checks = [
        ("instances", m.instances.len(), want.instances),
        ("distinct images", images.len(), want.images),
        ("either", count(Category::Either), want.either),
        ("both", count(Category::Both), want.both),
        ("none", count(Category::None), want.none),
    ];
    for (what, got, expected) in checks {
        if got != expected {
            report.push(None, RULE_OFFICIAL_PROFILE, None, format!("{what}: got {got}, expected {expected}"));
        }
    }
    report
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use alloc::format;

    pub fn instance(i: usize, cn: &str, category: Category) -> BenchmarkInstance {
        BenchmarkInstance {
            id: format!("inst-{i}"),
            compound_noun: CompoundNoun::new(cn).unwrap(),
            positive: ImageRef::new(format!("img-{i}-p"), format!("images/{i}-p.jpg")),
            negatives: [
                ImageRef::new(format!("img-{i}-n1"), format!("images/{i}-n1.jpg")),
                ImageRef::new(format!("img-{i}-n2"), format!("images/{i}-n2.jpg")),
            ],
            category,
        }
    }

    pub fn manifest(instances: Vec<BenchmarkInstance>) -> BenchmarkManifest {
        BenchmarkManifest { name: "fixture".into(), version: "1".into(), instances }
    }

    pub fn official_shaped() -> BenchmarkManifest {
        let mut v = Vec::new();
        for i in 0..400 {
            let cat = match i {
                0..=198 => Category::Either,
                199..=304 => Category::Both,
                _ => Category::None,
            };
            v.push(instance(i, &format!("noun{i} thing{i}"), cat));
        }
        manifest(v)
    }
}

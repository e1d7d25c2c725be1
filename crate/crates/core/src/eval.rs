//! Benchmark runners: three-image win accuracy, category analysis,
//! all-images retrieval, caption-count sweeps, zero-shot classification
//! and the random-chance baseline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::captions::CaptionSet;
use crate::compound::{CompoundError, CompoundNoun};
use crate::digest::{sha256_fields, to_hex};
use crate::manifest::{BenchmarkInstance, BenchmarkManifest, Category, ImageRef};
use crate::prompt::{base_prompt_set, build_example_prompts, reversed_prompt_set, PromptError, PromptSet, PromptStrategy};
use crate::score::{score_candidates, InstanceScore};
use crate::synthetic::{SyntheticEmbedder, SyntheticKind};
use crate::vector::{EmbeddingVector, VectorError};

/// A source of text and image embeddings from one model.
pub trait Embedder {
    type Error;

    fn provider_id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn dim(&self) -> usize;
    /// One vector per text, same order.
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, Self::Error>;
    /// One vector per image, same order.
    fn embed_images(&self, images: &[ImageRef]) -> Result<Vec<EmbeddingVector>, Self::Error>;
}

impl<T: Embedder + ?Sized> Embedder for &T {
    type Error = T::Error;

    fn provider_id(&self) -> &str {
        (**self).provider_id()
    }
    fn model_id(&self) -> &str {
        (**self).model_id()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, Self::Error> {
        (**self).embed_texts(texts)
    }
    fn embed_images(&self, images: &[ImageRef]) -> Result<Vec<EmbeddingVector>, Self::Error> {
        (**self).embed_images(images)
    }
}

/// Builds the prompt set for a compound noun under one strategy.
pub trait PromptSource {
    type Error;

    fn strategy(&self) -> PromptStrategy;
    fn prompt_set(&self, cn: &CompoundNoun) -> Result<PromptSet, Self::Error>;
}

impl<T: PromptSource + ?Sized> PromptSource for &T {
    type Error = T::Error;

    fn strategy(&self) -> PromptStrategy {
        (**self).strategy()
    }
    fn prompt_set(&self, cn: &CompoundNoun) -> Result<PromptSet, Self::Error> {
        (**self).prompt_set(cn)
    }
}

/// The single-template strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplatePrompts {
    Base,
    Reversed,
}

impl PromptSource for TemplatePrompts {
    type Error = CompoundError;

    fn strategy(&self) -> PromptStrategy {
        match self {
            TemplatePrompts::Base => PromptStrategy::BaseTemplate,
            TemplatePrompts::Reversed => PromptStrategy::ReversedTemplate,
        }
    }

    fn prompt_set(&self, cn: &CompoundNoun) -> Result<PromptSet, Self::Error> {
        match self {
            TemplatePrompts::Base => Ok(base_prompt_set(cn)),
            TemplatePrompts::Reversed => reversed_prompt_set(cn),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CaptionLookupError {
    #[error("no captions for {0:?}")]
    Missing(String),
    #[error("{cn:?} has {have} captions, need {need}")]
    InsufficientCaptions { cn: String, have: usize, need: usize },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

/// Caption-ensemble prompts from pre-generated caption sets, keyed by the
/// lower-cased compound noun and truncated to the first `k` captions.
#[derive(Debug, Clone)]
pub struct CachedCaptionPrompts<'a> {
    sets: &'a BTreeMap<String, CaptionSet>,
    k: usize,
}

impl<'a> CachedCaptionPrompts<'a> {
    pub fn new(sets: &'a BTreeMap<String, CaptionSet>, k: usize) -> Self {
        Self { sets, k }
    }

    pub fn key(cn: &CompoundNoun) -> String {
        cn.prompt_text()
    }
}

impl PromptSource for CachedCaptionPrompts<'_> {
    type Error = CaptionLookupError;

    fn strategy(&self) -> PromptStrategy {
        PromptStrategy::CaptionEnsemble { k: self.k }
    }

    fn prompt_set(&self, cn: &CompoundNoun) -> Result<PromptSet, Self::Error> {
        let set = self.sets.get(&Self::key(cn)).ok_or_else(|| CaptionLookupError::Missing(cn.text().into()))?;
        let set = set.truncated(self.k).map_err(|_| CaptionLookupError::InsufficientCaptions {
            cn: cn.text().into(),
            have: set.len(),
            need: self.k,
        })?;
        Ok(build_example_prompts(cn, &set)?)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError<PE, EE> {
    #[error("instance {instance_id}: building prompts failed: {source}")]
    Prompt { instance_id: String, source: PE },
    #[error("instance {instance_id}: embedding failed: {source}")]
    Embed { instance_id: String, source: EE },
    #[error("instance {instance_id}: scoring failed: {source}")]
    Score { instance_id: String, source: VectorError },
    #[error("instance {0}: non-finite similarity")]
    NonFinite(String),
    #[error("provider returned {got} vectors for {want} inputs")]
    CountMismatch { want: usize, got: usize },
    #[error("image id {0:?} appears more than once in the manifest")]
    DuplicateImageIds(String),
    #[error("manifest has no instances")]
    EmptyManifest,
}

impl<PE, EE> EvalError<PE, EE> {
    pub fn instance_id(&self) -> Option<&str> {
        match self {
            EvalError::Prompt { instance_id, .. }
            | EvalError::Embed { instance_id, .. }
            | EvalError::Score { instance_id, .. }
            | EvalError::NonFinite(instance_id) => Some(instance_id),
            _ => None,
        }
    }
}

/// Scores and prompts for one successfully evaluated instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceOutcome {
    pub score: InstanceScore,
    pub prompts: PromptSet,
}

/// Prompts -> embeddings -> mean similarities -> strict win.
pub fn evaluate_instance<P: PromptSource, E: Embedder>(
    instance: &BenchmarkInstance,
    prompts: &P,
    embedder: &E,
) -> Result<InstanceOutcome, EvalError<P::Error, E::Error>> {
    let id = || instance.id.clone();
    let set = prompts.prompt_set(&instance.compound_noun).map_err(|source| EvalError::Prompt { instance_id: id(), source })?;
    let text_vecs = embedder.embed_texts(set.prompts()).map_err(|source| EvalError::Embed { instance_id: id(), source })?;
    check_count(set.len(), text_vecs.len())?;
    let images: Vec<ImageRef> = instance.images().into_iter().cloned().collect();
    let image_vecs = embedder.embed_images(&images).map_err(|source| EvalError::Embed { instance_id: id(), source })?;
    check_count(3, image_vecs.len())?;
    let s = score_candidates(&text_vecs, &image_vecs).map_err(|source| EvalError::Score { instance_id: id(), source })?;
    let score = InstanceScore::new(id(), s[0], s[1], s[2]).map_err(|_| EvalError::NonFinite(id()))?;
    Ok(InstanceOutcome { score, prompts: set })
}

fn check_count<PE, EE>(want: usize, got: usize) -> Result<(), EvalError<PE, EE>> {
    if want != got {
        return Err(EvalError::CountMismatch { want, got });
    }
    Ok(())
}

pub fn accuracy_pct(wins: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * wins as f64 / total as f64
    }
}

/// Mean of values, summed in sorted order so the result does not depend on
/// input order.
fn order_free_mean(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    Some(values.into_iter().sum::<f64>() / n)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkInfo {
    pub name: String,
    pub version: String,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CategoryStats {
    pub category: Category,
    pub count: usize,
    pub errors: usize,
    /// `None` when the category is empty.
    pub accuracy: Option<f64>,
    pub mean_winning_similarity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstanceRecord {
    pub instance_id: String,
    pub compound_noun: String,
    pub category: Category,
    pub s_pos: f64,
    pub s_neg1: f64,
    pub s_neg2: f64,
    pub win: bool,
}

impl InstanceRecord {
    pub fn score(&self) -> InstanceScore {
        InstanceScore {
            instance_id: self.instance_id.clone(),
            s_pos: self.s_pos,
            s_neg1: self.s_neg1,
            s_neg2: self.s_neg2,
            win: self.win,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InstanceFailure {
    pub instance_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunMetadata {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    /// Total number of prompts embedded across all instances.
    pub prompt_count: usize,
    /// Digest over every instance's prompts, independent of instance order.
    pub prompt_digest: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvaluationReport {
    pub benchmark: BenchmarkInfo,
    pub strategy: String,
    pub provider_id: String,
    pub model_id: String,
    /// Percentage of evaluated instances won.
    pub accuracy: f64,
    pub evaluated: usize,
    pub wins: usize,
    /// One row per category, in [`Category::ALL`] order.
    pub per_category: Vec<CategoryStats>,
    /// Mean positive similarity over won instances (raw cosine).
    pub mean_winning_similarity: Option<f64>,
    pub per_instance: Vec<InstanceRecord>,
    /// Instances skipped in fail-soft mode. Non-empty means a partial run.
    pub failed: Vec<InstanceFailure>,
    pub metadata: RunMetadata,
}

impl EvaluationReport {
    pub fn is_partial(&self) -> bool {
        !self.failed.is_empty()
    }

    /// Accuracy recomputed from the per-instance records.
    pub fn recomputed_accuracy(&self) -> f64 {
        accuracy_pct(self.per_instance.iter().filter(|r| r.win).count(), self.per_instance.len())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Skip failing instances instead of aborting.
    pub fail_soft: bool,
}

/// Identifies what produced a set of outcomes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunContext {
    pub strategy: PromptStrategy,
    pub provider_id: String,
    pub model_id: String,
    pub options: RunOptions,
}

impl RunContext {
    pub fn new<P: PromptSource, E: Embedder>(prompts: &P, embedder: &E, options: RunOptions) -> Self {
        Self {
            strategy: prompts.strategy(),
            provider_id: embedder.provider_id().into(),
            model_id: embedder.model_id().into(),
            options,
        }
    }
}

/// Aggregates per-instance outcomes (in manifest order) into a report.
///
/// Without fail-soft the first error is returned. With it, failures are
/// listed in [`EvaluationReport::failed`] and accuracy covers the rest.
pub fn assemble_report<PE: ToString, EE: ToString>(
    manifest: &BenchmarkManifest,
    context: &RunContext,
    outcomes: Vec<Result<InstanceOutcome, EvalError<PE, EE>>>,
) -> Result<EvaluationReport, EvalError<PE, EE>>
where
    EvalError<PE, EE>: ToString,
{
    debug_assert_eq!(outcomes.len(), manifest.instances.len());
    let mut per_instance = Vec::with_capacity(outcomes.len());
    let mut failed = Vec::new();
    let mut digest_parts: Vec<(&str, PromptSet)> = Vec::new();

    for (inst, outcome) in manifest.instances.iter().zip(outcomes) {
        match outcome {
            Ok(InstanceOutcome { score, prompts }) => {
                per_instance.push(InstanceRecord {
                    instance_id: score.instance_id,
                    compound_noun: inst.compound_noun.text().into(),
                    category: inst.category,
                    s_pos: score.s_pos,
                    s_neg1: score.s_neg1,
                    s_neg2: score.s_neg2,
                    win: score.win,
                });
                digest_parts.push((inst.id.as_str(), prompts));
            }
            Err(e) if context.options.fail_soft => {
                failed.push(InstanceFailure { instance_id: inst.id.clone(), error: e.to_string() });
            }
            Err(e) => return Err(e),
        }
    }

    digest_parts.sort_by(|a, b| a.0.cmp(b.0));
    let prompt_count = digest_parts.iter().map(|(_, p)| p.len()).sum();
    let mut fields: Vec<&[u8]> = Vec::new();
    for (id, set) in &digest_parts {
        fields.push(id.as_bytes());
        fields.extend(set.prompts().iter().map(|p| p.as_bytes()));
    }
    let prompt_digest = to_hex(&sha256_fields(&fields));

    let wins = per_instance.iter().filter(|r| r.win).count();
    let per_category = Category::ALL.iter().map(|&c| category_stats(c, &per_instance)).collect();
    let mean_winning_similarity = order_free_mean(per_instance.iter().filter(|r| r.win).map(|r| r.s_pos).collect());
    let k = match context.strategy {
        PromptStrategy::CaptionEnsemble { k } => Some(k),
        _ => None,
    };

    Ok(EvaluationReport {
        benchmark: BenchmarkInfo {
            name: manifest.name.clone(),
            version: manifest.version.clone(),
            instances: manifest.instances.len(),
        },
        strategy: context.strategy.descriptor(),
        provider_id: context.provider_id.clone(),
        model_id: context.model_id.clone(),
        accuracy: accuracy_pct(wins, per_instance.len()),
        evaluated: per_instance.len(),
        wins,
        per_category,
        mean_winning_similarity,
        per_instance,
        failed,
        metadata: RunMetadata { seed: context.options.seed, k, prompt_count, prompt_digest },
    })
}

fn category_stats(category: Category, records: &[InstanceRecord]) -> CategoryStats {
    let rows: Vec<&InstanceRecord> = records.iter().filter(|r| r.category == category).collect();
    let wins = rows.iter().filter(|r| r.win).count();
    CategoryStats {
        category,
        count: rows.len(),
        errors: rows.len() - wins,
        accuracy: (!rows.is_empty()).then(|| accuracy_pct(wins, rows.len())),
        mean_winning_similarity: order_free_mean(rows.iter().filter(|r| r.win).map(|r| r.s_pos).collect()),
    }
}

/// Evaluates every instance in order and aggregates.
pub fn run_benchmark<P, E>(
    manifest: &BenchmarkManifest,
    prompts: &P,
    embedder: &E,
    options: RunOptions,
) -> Result<EvaluationReport, EvalError<P::Error, E::Error>>
where
    P: PromptSource,
    E: Embedder,
    P::Error: ToString,
    E::Error: ToString,
    EvalError<P::Error, E::Error>: ToString,
{
    if manifest.instances.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let context = RunContext::new(prompts, embedder, options);
    let mut outcomes = Vec::with_capacity(manifest.instances.len());
    for inst in &manifest.instances {
        let outcome = evaluate_instance(inst, prompts, embedder);
        let abort = outcome.is_err() && !options.fail_soft;
        outcomes.push(outcome);
        if abort {
            return Err(outcomes.pop().and_then(Result::err).expect("just pushed an error"));
        }
    }
    assemble_report(manifest, &context, outcomes)
}

/// Per-category errors with a reconciling total row.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryBreakdown {
    pub rows: Vec<CategoryStats>,
    pub total_count: usize,
    pub total_errors: usize,
}

pub fn category_breakdown(report: &EvaluationReport) -> CategoryBreakdown {
    let rows: Vec<CategoryStats> =
        Category::ALL.iter().map(|&c| category_stats(c, &report.per_instance)).collect();
    CategoryBreakdown {
        total_count: rows.iter().map(|r| r.count).sum(),
        total_errors: rows.iter().map(|r| r.errors).sum(),
        rows,
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RetrievalResult {
    pub correct: usize,
    pub total: usize,
    /// Percentage of compound nouns whose positive is the unique top-ranked
    /// image among all benchmark images.
    pub recall_at_1: f64,
}

/// Ranks every benchmark image against each compound noun's prompts.
pub fn all_negatives_retrieval<P: PromptSource, E: Embedder>(
    manifest: &BenchmarkManifest,
    prompts: &P,
    embedder: &E,
) -> Result<RetrievalResult, EvalError<P::Error, E::Error>> {
    if manifest.instances.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let mut seen = BTreeSet::new();
    let mut images: Vec<ImageRef> = Vec::with_capacity(manifest.instances.len() * 3);
    for img in manifest.instances.iter().flat_map(BenchmarkInstance::images) {
        if !seen.insert(img.id.as_str()) {
            return Err(EvalError::DuplicateImageIds(img.id.clone()));
        }
        images.push(img.clone());
    }
    let image_vecs = embedder
        .embed_images(&images)
        .map_err(|source| EvalError::Embed { instance_id: String::from("*"), source })?;
    check_count(images.len(), image_vecs.len())?;

    let mut correct = 0;
    for (idx, inst) in manifest.instances.iter().enumerate() {
        let id = || inst.id.clone();
        let set = prompts.prompt_set(&inst.compound_noun).map_err(|source| EvalError::Prompt { instance_id: id(), source })?;
        let text_vecs = embedder.embed_texts(set.prompts()).map_err(|source| EvalError::Embed { instance_id: id(), source })?;
        check_count(set.len(), text_vecs.len())?;
        let scores = score_candidates(&text_vecs, &image_vecs).map_err(|source| EvalError::Score { instance_id: id(), source })?;
        let positive = idx * 3;
        let s_pos = scores[positive];
        if !s_pos.is_finite() {
            return Err(EvalError::NonFinite(id()));
        }
        if scores.iter().enumerate().all(|(j, &s)| j == positive || s_pos > s) {
            correct += 1;
        }
    }
    let total = manifest.instances.len();
    Ok(RetrievalResult { correct, total, recall_at_1: accuracy_pct(correct, total) })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub k: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepReport {
    pub benchmark: BenchmarkInfo,
    pub provider_id: String,
    pub model_id: String,
    pub seed: Option<u64>,
    /// Ascending, unique `k`.
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError<EE> {
    #[error("invalid caption-count range {k_min}..={k_max}")]
    InvalidRange { k_min: usize, k_max: usize },
    #[error("{cn:?} has {have} captions, need {need}")]
    InsufficientCaptions { cn: String, have: usize, need: usize },
    #[error(transparent)]
    Eval(EvalError<CaptionLookupError, EE>),
}

/// One run per `k` in `k_min..=k_max`, each using the first `k` captions of
/// the same caption sets.
pub fn sweep_caption_count<E>(
    manifest: &BenchmarkManifest,
    caption_sets: &BTreeMap<String, CaptionSet>,
    k_min: usize,
    k_max: usize,
    embedder: &E,
    options: RunOptions,
) -> Result<SweepReport, SweepError<E::Error>>
where
    E: Embedder,
    E::Error: ToString,
    EvalError<CaptionLookupError, E::Error>: ToString,
{
    if k_min == 0 || k_min > k_max {
        return Err(SweepError::InvalidRange { k_min, k_max });
    }
    for inst in &manifest.instances {
        let have = caption_sets.get(&CachedCaptionPrompts::key(&inst.compound_noun)).map_or(0, CaptionSet::len);
        if have < k_max {
            return Err(SweepError::InsufficientCaptions { cn: inst.compound_noun.text().into(), have, need: k_max });
        }
    }
    let mut rows = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        let prompts = CachedCaptionPrompts::new(caption_sets, k);
        let report = run_benchmark(manifest, &prompts, embedder, options).map_err(SweepError::Eval)?;
        rows.push(SweepRow { k, accuracy: report.accuracy });
    }
    Ok(SweepReport {
        benchmark: BenchmarkInfo {
            name: manifest.name.clone(),
            version: manifest.version.clone(),
            instances: manifest.instances.len(),
        },
        provider_id: embedder.provider_id().into(),
        model_id: embedder.model_id().into(),
        seed: options.seed,
        rows,
    })
}

/// An image to classify, with its true class index when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    pub image: ImageRef,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prediction {
    pub image_id: String,
    pub predicted: usize,
    pub class_name: String,
    pub score: f64,
    /// Another class reached the same top score; the earlier class won.
    pub tie: bool,
    pub label: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassificationReport {
    pub classes: Vec<String>,
    pub predictions: Vec<Prediction>,
    /// Over labeled images only; 0 when none are labeled.
    pub top1_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError<PE, EE> {
    #[error("need at least 2 classes, got {0}")]
    EmptyClassList(usize),
    #[error("label {label} of image {image_id:?} is out of range")]
    BadLabel { image_id: String, label: usize },
    #[error("class {class:?}: building prompts failed: {source}")]
    Prompt { class: String, source: PE },
    #[error("embedding failed: {0}")]
    Embed(EE),
    #[error("scoring failed: {0}")]
    Score(VectorError),
    #[error("provider returned {got} vectors for {want} inputs")]
    CountMismatch { want: usize, got: usize },
}

/// Assigns each image the class with the highest mean prompt similarity.
/// Ties go to the class listed first and are flagged.
pub fn classify_zero_shot<P: PromptSource, E: Embedder>(
    classes: &[CompoundNoun],
    images: &[LabeledImage],
    prompts: &P,
    embedder: &E,
) -> Result<ClassificationReport, ClassifyError<P::Error, E::Error>> {
    if classes.len() < 2 {
        return Err(ClassifyError::EmptyClassList(classes.len()));
    }
    for img in images {
        if let Some(label) = img.label.filter(|&l| l >= classes.len()) {
            return Err(ClassifyError::BadLabel { image_id: img.image.id.clone(), label });
        }
    }
    let mut class_vecs = Vec::with_capacity(classes.len());
    for class in classes {
        let set = prompts
            .prompt_set(class)
            .map_err(|source| ClassifyError::Prompt { class: class.text().into(), source })?;
        let vecs = embedder.embed_texts(set.prompts()).map_err(ClassifyError::Embed)?;
        if vecs.len() != set.len() {
            return Err(ClassifyError::CountMismatch { want: set.len(), got: vecs.len() });
        }
        class_vecs.push(vecs);
    }
    let refs: Vec<ImageRef> = images.iter().map(|i| i.image.clone()).collect();
    let image_vecs = embedder.embed_images(&refs).map_err(ClassifyError::Embed)?;
    if image_vecs.len() != refs.len() {
        return Err(ClassifyError::CountMismatch { want: refs.len(), got: image_vecs.len() });
    }

    // scores[c][i]: class c against image i
    let mut scores = Vec::with_capacity(classes.len());
    for vecs in &class_vecs {
        scores.push(score_candidates(vecs, &image_vecs).map_err(ClassifyError::Score)?);
    }

    let mut predictions = Vec::with_capacity(images.len());
    let (mut labeled, mut correct) = (0usize, 0usize);
    for (i, img) in images.iter().enumerate() {
        let mut best = 0;
        let mut tie = false;
        for c in 1..classes.len() {
            if scores[c][i] > scores[best][i] {
                best = c;
                tie = false;
            } else if scores[c][i] == scores[best][i] {
                tie = true;
            }
        }
        if let Some(label) = img.label {
            labeled += 1;
            correct += usize::from(label == best);
        }
        predictions.push(Prediction {
            image_id: img.image.id.clone(),
            predicted: best,
            class_name: classes[best].text().into(),
            score: scores[best][i],
            tie,
            label: img.label,
        });
    }
    Ok(ClassificationReport {
        classes: classes.iter().map(|c| c.text().into()).collect(),
        predictions,
        top1_accuracy: accuracy_pct(correct, labeled),
    })
}

pub const RANDOM_BASELINE_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RandomBaseline {
    pub mean_accuracy: f64,
    /// Standard error of the mean over trials; 0 for a single trial.
    pub std_error: f64,
    pub trial_accuracies: Vec<f64>,
}

pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let d = sha256_fields(&[b"random-baseline", &seed.to_le_bytes(), &(trial as u64).to_le_bytes()]);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Chance accuracy: the base-template pipeline over random embeddings,
/// re-seeded for every trial.
pub fn random_baseline(manifest: &BenchmarkManifest, trials: usize, seed: u64) -> Result<RandomBaseline, EvalError<CompoundError, crate::synthetic::SyntheticError>> {
    let trials = trials.max(1);
    let mut accs = Vec::with_capacity(trials);
    for t in 0..trials {
        let embedder = SyntheticEmbedder::new(SyntheticKind::Random, trial_seed(seed, t), RANDOM_BASELINE_DIM, "random");
        let report = run_benchmark(manifest, &TemplatePrompts::Base, &embedder, RunOptions { seed: Some(seed), fail_soft: false })?;
        accs.push(report.accuracy);
    }
    let n = accs.len() as f64;
    let mean = accs.iter().sum::<f64>() / n;
    let std_error = if accs.len() < 2 {
        0.0
    } else {
        let var = accs.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (n - 1.0);
        libm::sqrt(var / n)
    };
    Ok(RandomBaseline { mean_accuracy: mean, std_error, trial_accuracies: accs })
}

//! Parallel evaluation over a fixed-size worker pool.
//!
//! Instances are scored independently and aggregated in manifest order, so
//! the report does not depend on the number of workers.

use capens_core::eval::{assemble_report, evaluate_instance, EvalError, EvaluationReport, Embedder, PromptSource, RunContext, RunOptions};
use capens_core::BenchmarkManifest;
use rayon::prelude::*;

pub fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().expect("worker pool")
}

pub fn run_parallel<P, E>(
    manifest: &BenchmarkManifest,
    prompts: &P,
    embedder: &E,
    options: RunOptions,
    jobs: usize,
) -> Result<EvaluationReport, EvalError<P::Error, E::Error>>
where
    P: PromptSource + Sync,
    E: Embedder + Sync,
    P::Error: ToString + Send,
    E::Error: ToString + Send,
    EvalError<P::Error, E::Error>: ToString,
{
    if manifest.instances.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let context = RunContext::new(prompts, embedder, options);
    let outcomes = pool(jobs).install(|| {
        manifest.instances.par_iter().map(|inst| evaluate_instance(inst, prompts, embedder)).collect::<Vec<_>>()
    });
    assemble_report(manifest, &context, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use capens_core::eval::{run_benchmark, TemplatePrompts};
    use capens_core::synthetic::{SyntheticEmbedder, SyntheticKind};
    use capens_core::{BenchmarkInstance, Category, CompoundNoun, ImageRef};

    fn manifest(n: usize) -> BenchmarkManifest {
        BenchmarkManifest {
            name: "par".into(),
            version: "1".into(),
            instances: (0..n)
                .map(|i| BenchmarkInstance {
                    id: format!("i{i}"),
                    compound_noun: CompoundNoun::new(&format!("noun{i} thing")).unwrap(),
                    positive: ImageRef::new(format!("p{i}"), "p"),
                    negatives: [ImageRef::new(format!("a{i}"), "a"), ImageRef::new(format!("b{i}"), "b")],
                    category: Category::ALL[i % 4],
                })
                .collect(),
        }
    }

    #[test]
    fn matches_sequential_for_any_job_count() {
        let m = manifest(40);
        let e = SyntheticEmbedder::new(SyntheticKind::Random, 3, 16, "toy");
        let opts = RunOptions { seed: Some(3), fail_soft: false };
        let seq = run_benchmark(&m, &TemplatePrompts::Base, &e, opts).unwrap();
        for jobs in [1, 2, 7] {
            assert_eq!(run_parallel(&m, &TemplatePrompts::Base, &e, opts, jobs).unwrap(), seq);
        }
    }
}

//! `kgeval eval ...`: runs the evaluation protocols and writes the report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Subcommand, ValueEnum};
use kgeval::io::load_dataset;
use kgeval::model::{load_checkpoint, CheckpointHeader};
use kgeval::pair_rank::{pair_rank_macro, write_pair_ranks, CandidateMode, DEFAULT_PAIR_BUDGET};
use kgeval::property::{build_property_testset, rank_properties, write_property_ranks, Aggregation};
use kgeval::rank::{self, RankSetting};
use kgeval::report::{
    ClosedWorldSection, DatasetFingerprint, EntityPairSection, EvalReport, LinkPredictionSection, ModelManifest,
    PropertySection, TripleClassSection,
};
use kgeval::transform::{read_relation_meta, RelationMeta};
use kgeval::triple_class::{
    classify, directional_check, generate_negatives, learn_thresholds, random_negatives, write_suite,
    write_thresholds, NegativeKind, NegativeSuite,
};
use kgeval::{KgError, KnowledgeGraph, ModelParams, Split, Triple};

use crate::{policy, CliResult, DataArgs, Failure};

#[derive(Subcommand)]
pub(crate) enum EvalCmd {
    /// Raw and filtered link prediction, with an optional closed-world comparison.
    Linkpred {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        lp: LinkpredArgs,
    },
    /// Entity-pair ranking (MAP@K, P@K).
    Pairrank {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        pr: PairrankArgs,
    },
    /// Property prediction.
    Property {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        prop: PropertyArgs,
    },
    /// Triple classification against type-constrained negatives.
    Tripleclass {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tc: TripleclassArgs,
    },
    /// Every protocol into one report.
    All {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        lp: LinkpredArgs,
        #[command(flatten)]
        pr: PairrankArgs,
        #[command(flatten)]
        prop: PropertyArgs,
        #[command(flatten)]
        tc: TripleclassArgs,
    },
}

#[derive(Args)]
pub(crate) struct Common {
    /// Checkpoint to evaluate.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Report file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub(crate) struct LinkpredArgs {
    /// Larger dataset used as the filter for a closed-world comparison.
    #[arg(long)]
    filter_data: Option<PathBuf>,
    /// Relation categories and domains (default: <data>/relation_meta.tsv when present).
    #[arg(long)]
    meta: Option<PathBuf>,
    /// Per-triple ranks TSV.
    #[arg(long)]
    ranks: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CandidatesArg {
    All,
    TypeCompatible,
}

#[derive(Args)]
pub(crate) struct PairrankArgs {
    #[arg(long, default_value_t = 100)]
    k: usize,
    #[arg(long, value_enum, default_value = "all")]
    candidates: CandidatesArg,
    /// Pair scores allowed per relation when scoring all pairs.
    #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
    pair_budget: u128,
    /// Per-relation TSV.
    #[arg(long)]
    pair_tsv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AggregationArg {
    Max,
    Mean,
}

#[derive(Args)]
pub(crate) struct PropertyArgs {
    #[arg(long, value_enum, default_value = "max")]
    aggregation: AggregationArg,
    /// Also report ranks with relations the entity already has removed.
    #[arg(long, action = ArgAction::Set, default_value_t = true)]
    filter_known_properties: bool,
    /// Per-case ranks TSV.
    #[arg(long)]
    property_ranks: Option<PathBuf>,
}

#[derive(Args)]
pub(crate) struct TripleclassArgs {
    /// Checkpoint whose rankings generate the negatives (default: the evaluated model).
    #[arg(long)]
    negatives_from: Option<PathBuf>,
    /// Add uniformly random corruption suites for contrast.
    #[arg(long)]
    random_baseline: bool,
    /// Seed of the random corruption suites.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for suite and threshold TSVs.
    #[arg(long)]
    suites_dir: Option<PathBuf>,
}

struct Ctx {
    data_dir: PathBuf,
    g: KnowledgeGraph,
    params: ModelParams,
    header: CheckpointHeader,
    model_path: PathBuf,
}

impl Ctx {
    fn load(common: &Common) -> CliResult<Self> {
        let g = common.data.load()?;
        let (header, params) = load_checkpoint(&common.model)?;
        header.check_vocab(&g)?;
        Ok(Ctx {
            data_dir: common.data.data.clone(),
            g,
            params,
            header,
            model_path: common.model.clone(),
        })
    }

    fn report(&self) -> EvalReport {
        EvalReport {
            toolkit_version: kgeval::VERSION.to_owned(),
            dataset: DatasetFingerprint::of(&self.data_dir.display().to_string(), &self.g),
            model: ModelManifest {
                family: self.header.family.name().to_owned(),
                dim: self.header.dim,
                gamma: (self.header.gamma as f64).into(),
                config_hash: self.header.config_hash.clone(),
                seed: self.header.seed,
                checkpoint: self.model_path.display().to_string(),
            },
            seeds: BTreeMap::from([("train".to_owned(), self.header.seed)]),
            config_hashes: BTreeMap::from([("train".to_owned(), self.header.config_hash.clone())]),
            link_prediction: None,
            entity_pair: None,
            property: None,
            triple_classification: None,
        }
    }
}

pub(crate) fn run(cmd: EvalCmd) -> CliResult<()> {
    let (common, out) = match &cmd {
        EvalCmd::Linkpred { common, .. }
        | EvalCmd::Pairrank { common, .. }
        | EvalCmd::Property { common, .. }
        | EvalCmd::Tripleclass { common, .. }
        | EvalCmd::All { common, .. } => (common, common.out.clone()),
    };
    let ctx = Ctx::load(common)?;
    let mut report = ctx.report();
    match &cmd {
        EvalCmd::Linkpred { lp, common } => report.link_prediction = Some(linkpred(&ctx, lp, common)?),
        EvalCmd::Pairrank { pr, .. } => report.entity_pair = Some(pairrank(&ctx, pr)?),
        EvalCmd::Property { prop, .. } => report.property = Some(property(&ctx, prop)?),
        EvalCmd::Tripleclass { tc, common } => {
            report.triple_classification = Some(tripleclass(&ctx, tc, common, &mut report.seeds, &mut report.config_hashes)?)
        }
        EvalCmd::All {
            common,
            lp,
            pr,
            prop,
            tc,
        } => {
            report.link_prediction = Some(linkpred(&ctx, lp, common)?);
            report.entity_pair = Some(pairrank(&ctx, pr)?);
            report.property = Some(property(&ctx, prop)?);
            if ctx.g.has_types() {
                report.triple_classification =
                    Some(tripleclass(&ctx, tc, common, &mut report.seeds, &mut report.config_hashes)?);
            } else {
                log::warn!("dataset has no entity types; skipping triple classification");
            }
        }
    }
    crate::emit(Some(&out), &report.to_json()?)?;
    println!("report written to {}", out.display());
    Ok(())
}

fn load_meta(ctx: &Ctx, explicit: Option<&Path>) -> CliResult<Option<Vec<RelationMeta>>> {
    let default = ctx.data_dir.join("relation_meta.tsv");
    let path = match explicit {
        Some(p) => p.to_owned(),
        None if default.is_file() => default,
        None => return Ok(None),
    };
    Ok(Some(read_relation_meta(&path, &ctx.g)?))
}

fn linkpred(ctx: &Ctx, a: &LinkpredArgs, common: &Common) -> CliResult<LinkPredictionSection> {
    let (p, g) = (&ctx.params, &ctx.g);
    let records = rank::rank_all(p, g, g)?;
    if records.is_empty() {
        return Err(KgError::Empty("test split").into());
    }
    if let Some(path) = &a.ranks {
        rank::write_ranks(path, g, &records)?;
    }
    let f = RankSetting::Filtered;
    let meta = load_meta(ctx, a.meta.as_deref())?;
    let (macro_by_domain, category_split) = match &meta {
        Some(m) => (
            Some((&rank::macro_by_domain(g, &records, m, f)?).into()),
            Some(
                rank::category_split(g, &records, m, f)?
                    .iter()
                    .map(|(k, b)| (k.clone(), b.into()))
                    .collect(),
            ),
        ),
        None => (None, None),
    };
    let closed_world = match &a.filter_data {
        Some(dir) => {
            let full = load_dataset(dir, policy(common.data.drop_unseen))?;
            let full_records = rank::rank_all(p, g, &full)?;
            let cw = rank::closed_world(&records, &full_records)?;
            Some(ClosedWorldSection::new(
                &ctx.data_dir.display().to_string(),
                &dir.display().to_string(),
                &cw,
            ))
        }
        None => None,
    };
    Ok(LinkPredictionSection {
        tie_policy: "average".to_owned(),
        micro_raw: (&rank::micro_metrics(&records, RankSetting::Raw)?).into(),
        micro: (&rank::micro_metrics(&records, f)?).into(),
        macro_by_relation: (&rank::macro_by_relation(&records, f)?).into(),
        macro_by_domain,
        direction_split: (&rank::direction_split(&records, f)?).into(),
        category_split,
        closed_world,
    })
}

fn pairrank(ctx: &Ctx, a: &PairrankArgs) -> CliResult<EntityPairSection> {
    if a.k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    let mode = match a.candidates {
        CandidatesArg::All => CandidateMode::All,
        CandidatesArg::TypeCompatible => CandidateMode::TypeCompatible,
    };
    let m = pair_rank_macro(&ctx.params, &ctx.g, a.k, mode, a.pair_budget)?;
    if let Some(path) = &a.pair_tsv {
        write_pair_ranks(path, &ctx.g, &m)?;
    }
    Ok(EntityPairSection::new(&ctx.g, mode, &m))
}

fn property(ctx: &Ctx, a: &PropertyArgs) -> CliResult<PropertySection> {
    let agg = match a.aggregation {
        AggregationArg::Max => Aggregation::Max,
        AggregationArg::Mean => Aggregation::Mean,
    };
    let cases = build_property_testset(&ctx.g);
    let e = rank_properties(&ctx.params, &ctx.g, &cases, agg)?;
    if let Some(path) = &a.property_ranks {
        write_property_ranks(path, &ctx.g, &e.ranks)?;
    }
    Ok(PropertySection::new(&e, a.filter_known_properties))
}

fn tripleclass(
    ctx: &Ctx,
    a: &TripleclassArgs,
    common: &Common,
    seeds: &mut BTreeMap<String, u64>,
    config_hashes: &mut BTreeMap<String, String>,
) -> CliResult<TripleClassSection> {
    let g = &ctx.g;
    let generator_params;
    let (gen_params, gen_header, gen_path) = match &a.negatives_from {
        Some(path) => {
            let (h, p) = load_checkpoint(path)?;
            h.check_vocab(g)?;
            generator_params = (h, p);
            (&generator_params.1, &generator_params.0, path.as_path())
        }
        None => (&ctx.params, &ctx.header, common.model.as_path()),
    };
    let generator = format!(
        "{} {} config {}",
        gen_header.family,
        gen_path.display(),
        &gen_header.config_hash[..gen_header.config_hash.len().min(12)]
    );
    config_hashes.insert("negative_generator".to_owned(), gen_header.config_hash.clone());
    seeds.insert("negative_generator".to_owned(), gen_header.seed);

    let valid: Vec<Triple> = g.split_triples(Split::Valid).collect();
    let test: Vec<Triple> = g.split_triples(Split::Test).collect();
    if valid.is_empty() || test.is_empty() {
        return Err(KgError::Empty("triple classification needs valid and test triples").into());
    }

    let mut suites: Vec<(NegativeKind, NegativeSuite, NegativeSuite)> = Vec::new();
    for kind in NegativeKind::TYPED {
        let v = generate_negatives(gen_params, g, kind, &valid, &generator)?;
        let t = generate_negatives(gen_params, g, kind, &test, &generator)?;
        suites.push((kind, v, t));
    }
    if a.random_baseline {
        seeds.insert("random_negatives".to_owned(), a.seed);
        for head in [true, false] {
            let v = random_negatives(g, head, &valid, a.seed)?;
            let t = random_negatives(g, head, &test, a.seed.wrapping_add(1))?;
            suites.push((v.kind, v, t));
        }
    }

    let mut results = BTreeMap::new();
    for (kind, valid_suite, test_suite) in suites {
        let neg: Vec<Triple> = valid_suite.negatives().collect();
        let thresholds = learn_thresholds(&ctx.params, &valid, &neg)?;
        let metrics = classify(&ctx.params, &thresholds, &test_suite)?;
        if let Some(dir) = &a.suites_dir {
            std::fs::create_dir_all(dir).map_err(|e| KgError::io(dir, e))?;
            write_suite(&dir.join(format!("{kind}.valid.tsv")), g, &valid_suite)?;
            write_suite(&dir.join(format!("{kind}.test.tsv")), g, &test_suite)?;
            write_thresholds(&dir.join(format!("{kind}.thresholds.tsv")), g, &thresholds)?;
        }
        results.insert(kind, (metrics, test_suite, thresholds));
    }
    let metrics_only = results.iter().map(|(k, (m, _, _))| (*k, *m)).collect();
    let check = directional_check(&metrics_only);
    if !check.holds {
        log::warn!(
            "inconsistent negatives were classified less accurately than consistent ones (head gap {:?}, tail gap {:?})",
            check.head_gap,
            check.tail_gap
        );
    }
    Ok(TripleClassSection::new(&generator, &results, &check))
}

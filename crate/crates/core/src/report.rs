//! The evaluation report.
//!
//! JSON is the source of truth. Keys appear in declaration order (maps are
//! sorted) and every real number is written in fixed point with six decimals,
//! so parsing and re-serializing a report reproduces it byte for byte. The
//! CSV and markdown renderings reuse the exact number strings of the JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{KgError, Result};
use crate::graph::{KnowledgeGraph, Split};
use crate::metrics::MetricBundle;
use crate::pair_rank::{CandidateMode, PairRankMacro};
use crate::property::PropertyEval;
use crate::rank::{ClosedWorld, DirectionSplit, DomainBreakdown};
use crate::triple_class::{ClassificationMetrics, DirectionalCheck, NegativeKind, NegativeSuite, ThresholdTable};

pub const SCHEMA: &str = include_str!("../schema/eval_report.schema.json");

/// A real number serialized as fixed point with six decimals. Non-finite
/// values are written as `null`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixed6(pub f64);

impl Fixed6 {
    pub fn text(self) -> String {
        if self.0.is_finite() {
            format!("{:.6}", self.0)
        } else {
            "null".to_owned()
        }
    }
}

impl From<f64> for Fixed6 {
    fn from(v: f64) -> Self {
        Fixed6(v)
    }
}

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawValue::from_string(self.text())
            .map_err(serde::ser::Error::custom)?
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Fixed6 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Fixed6(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub mrr: Fixed6,
    pub mr: Fixed6,
    pub hits_at_1: Fixed6,
    pub hits_at_3: Fixed6,
    pub hits_at_10: Fixed6,
    pub count: usize,
}

impl From<&MetricBundle> for Bundle {
    fn from(b: &MetricBundle) -> Self {
        Bundle {
            mrr: b.mrr.into(),
            mr: b.mr.into(),
            hits_at_1: b.hits_at_1.into(),
            hits_at_3: b.hits_at_3.into(),
            hits_at_10: b.hits_at_10.into(),
            count: b.count,
        }
    }
}

impl Bundle {
    fn cells(&self) -> [(&'static str, String); 5] {
        [
            ("mrr", self.mrr.text()),
            ("mr", self.mr.text()),
            ("hits_at_1", self.hits_at_1.text()),
            ("hits_at_3", self.hits_at_3.text()),
            ("hits_at_10", self.hits_at_10.text()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFingerprint {
    pub path: String,
    pub triples: usize,
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub entity_vocab_hash: String,
    pub relation_vocab_hash: String,
}

impl DatasetFingerprint {
    pub fn of(path: &str, g: &KnowledgeGraph) -> Self {
        DatasetFingerprint {
            path: path.to_owned(),
            triples: g.len(),
            entities: g.num_entities(),
            relations: g.num_relations(),
            train: g.split_len(Split::Train),
            valid: g.split_len(Split::Valid),
            test: g.split_len(Split::Test),
            entity_vocab_hash: g.entities().fingerprint(),
            relation_vocab_hash: g.relations().fingerprint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub family: String,
    pub dim: usize,
    pub gamma: Fixed6,
    pub config_hash: String,
    pub seed: u64,
    pub checkpoint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSection {
    pub per_domain: BTreeMap<String, Bundle>,
    pub macro_avg: Bundle,
}

impl From<&DomainBreakdown> for DomainSection {
    fn from(d: &DomainBreakdown) -> Self {
        DomainSection {
            per_domain: d.per_domain.iter().map(|(k, v)| (k.clone(), v.into())).collect(),
            macro_avg: (&d.macro_avg).into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionSection {
    pub left: Bundle,
    pub right: Bundle,
}

impl From<&DirectionSplit> for DirectionSection {
    fn from(d: &DirectionSplit) -> Self {
        DirectionSection {
            left: (&d.left).into(),
            right: (&d.right).into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedWorldSection {
    pub subset_filter: String,
    pub full_filter: String,
    pub subset_bundle: Bundle,
    pub full_bundle: Bundle,
    /// Percent, `(full - subset) / subset * 100` on filtered MRR.
    pub pct_improvement: Fixed6,
}

impl ClosedWorldSection {
    pub fn new(subset_filter: &str, full_filter: &str, cw: &ClosedWorld) -> Self {
        ClosedWorldSection {
            subset_filter: subset_filter.to_owned(),
            full_filter: full_filter.to_owned(),
            subset_bundle: (&cw.subset).into(),
            full_bundle: (&cw.full).into(),
            pct_improvement: cw.pct_improvement.into(),
        }
    }
}

/// All bundles use filtered ranks except `micro_raw`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkPredictionSection {
    pub tie_policy: String,
    pub micro_raw: Bundle,
    pub micro: Bundle,
    pub macro_by_relation: Bundle,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub macro_by_domain: Option<DomainSection>,
    pub direction_split: DirectionSection,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub category_split: Option<BTreeMap<String, Bundle>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub closed_world: Option<ClosedWorldSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRelation {
    pub relation: String,
    pub ap_at_k: Fixed6,
    pub p_at_k: Fixed6,
    pub num_test_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityPairSection {
    pub k: usize,
    pub candidate_mode: CandidateMode,
    pub map_at_k: Fixed6,
    pub p_at_k: Fixed6,
    /// `p_at_k` in percent.
    pub p_at_k_pct: Fixed6,
    pub per_relation: Vec<PairRelation>,
}

impl EntityPairSection {
    pub fn new(g: &KnowledgeGraph, mode: CandidateMode, m: &PairRankMacro) -> Self {
        EntityPairSection {
            k: m.k,
            candidate_mode: mode,
            map_at_k: m.map_at_k.into(),
            p_at_k: m.p_at_k.into(),
            p_at_k_pct: (m.p_at_k * 100.0).into(),
            per_relation: m
                .per_relation
                .iter()
                .map(|x| PairRelation {
                    relation: g.relation_name(x.relation).to_owned(),
                    ap_at_k: x.ap_at_k.into(),
                    p_at_k: x.p_at_k.into(),
                    num_test_pairs: x.num_test_pairs,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertySection {
    pub aggregation: String,
    pub num_cases: usize,
    pub unfiltered: Bundle,
    /// Candidates the entity already has in train are removed.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub filtered_variant: Option<Bundle>,
}

impl PropertySection {
    pub fn new(e: &PropertyEval, with_filtered: bool) -> Self {
        PropertySection {
            aggregation: e.aggregation.name().to_owned(),
            num_cases: e.ranks.len(),
            unfiltered: (&e.unfiltered).into(),
            filtered_variant: with_filtered.then(|| (&e.filtered).into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub precision: Fixed6,
    pub recall: Fixed6,
    pub accuracy: Fixed6,
    pub f1: Fixed6,
    pub coverage: Fixed6,
    pub positives: usize,
    pub negatives: usize,
    /// Thresholds fit on the validation suite of the same kind.
    pub thresholds: ThresholdSummary,
}

impl SuiteResult {
    pub fn new(m: &ClassificationMetrics, suite: &NegativeSuite, thresholds: &ThresholdTable) -> Self {
        SuiteResult {
            precision: m.precision.into(),
            recall: m.recall.into(),
            accuracy: m.accuracy.into(),
            f1: m.f1.into(),
            coverage: suite.coverage.into(),
            positives: suite.positives.len(),
            negatives: suite.pairs.len(),
            thresholds: thresholds.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub default_threshold: Fixed6,
    pub relations: usize,
    pub min: Fixed6,
    pub max: Fixed6,
}

impl From<&ThresholdTable> for ThresholdSummary {
    fn from(t: &ThresholdTable) -> Self {
        let vals = t.per_relation.values().copied();
        ThresholdSummary {
            default_threshold: t.default_threshold.into(),
            relations: t.per_relation.len(),
            min: vals.clone().fold(f64::INFINITY, f64::min).into(),
            max: vals.fold(f64::NEG_INFINITY, f64::max).into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalSection {
    pub head_gap: Option<Fixed6>,
    pub tail_gap: Option<Fixed6>,
    pub holds: bool,
}

impl From<&DirectionalCheck> for DirectionalSection {
    fn from(d: &DirectionalCheck) -> Self {
        DirectionalSection {
            head_gap: d.head_gap.map(Fixed6),
            tail_gap: d.tail_gap.map(Fixed6),
            holds: d.holds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleClassSection {
    pub generator: String,
    pub threshold_search: String,
    pub suites: BTreeMap<String, SuiteResult>,
    pub directional_check: DirectionalSection,
}

impl TripleClassSection {
    pub fn new(
        generator: &str,
        results: &BTreeMap<NegativeKind, (ClassificationMetrics, NegativeSuite, ThresholdTable)>,
        check: &DirectionalCheck,
    ) -> Self {
        TripleClassSection {
            generator: generator.to_owned(),
            threshold_search: "per relation, midpoints of adjacent validation scores maximizing accuracy, ties to the lowest"
                .to_owned(),
            suites: results
                .iter()
                .map(|(k, (m, s, t))| (k.name().to_owned(), SuiteResult::new(m, s, t)))
                .collect(),
            directional_check: check.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub toolkit_version: String,
    pub dataset: DatasetFingerprint,
    pub model: ModelManifest,
    pub seeds: BTreeMap<String, u64>,
    pub config_hashes: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub link_prediction: Option<LinkPredictionSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub entity_pair: Option<EntityPairSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub property: Option<PropertySection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub triple_classification: Option<TripleClassSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for Format {
    type Err = KgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(KgError::Invalid(format!("unknown format `{other}` (json, csv, markdown)"))),
        }
    }
}

impl EvalReport {
    /// Pretty-printed JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Every bundle in the report, labeled by its path.
    pub fn bundles(&self) -> Vec<(String, &Bundle)> {
        let mut out: Vec<(String, &Bundle)> = Vec::new();
        if let Some(lp) = &self.link_prediction {
            out.push(("link_prediction.micro_raw".into(), &lp.micro_raw));
            out.push(("link_prediction.micro".into(), &lp.micro));
            out.push(("link_prediction.macro_by_relation".into(), &lp.macro_by_relation));
            if let Some(d) = &lp.macro_by_domain {
                for (k, b) in &d.per_domain {
                    out.push((format!("link_prediction.macro_by_domain.per_domain.{k}"), b));
                }
                out.push(("link_prediction.macro_by_domain.macro_avg".into(), &d.macro_avg));
            }
            out.push(("link_prediction.direction_split.left".into(), &lp.direction_split.left));
            out.push(("link_prediction.direction_split.right".into(), &lp.direction_split.right));
            if let Some(c) = &lp.category_split {
                for (k, b) in c {
                    out.push((format!("link_prediction.category_split.{k}"), b));
                }
            }
            if let Some(cw) = &lp.closed_world {
                out.push(("link_prediction.closed_world.subset_bundle".into(), &cw.subset_bundle));
                out.push(("link_prediction.closed_world.full_bundle".into(), &cw.full_bundle));
            }
        }
        if let Some(p) = &self.property {
            out.push(("property.unfiltered".into(), &p.unfiltered));
            if let Some(f) = &p.filtered_variant {
                out.push(("property.filtered_variant".into(), f));
            }
        }
        out
    }
}

pub fn render_tables(report: &EvalReport, format: Format) -> Result<String> {
    match format {
        Format::Json => report.to_json(),
        Format::Csv => Ok(render_csv(report)),
        Format::Markdown => Ok(render_markdown(report)),
    }
}

/// Long-form CSV: `table,row,metric,value`, one line per reported number.
fn render_csv(r: &EvalReport) -> String {
    let mut out = String::from("table,row,metric,value\n");
    let mut line = |table: &str, row: &str, metric: &str, value: &str| {
        let _ = writeln!(out, "{},{},{},{}", csv_field(table), csv_field(row), csv_field(metric), value);
    };
    for (path, b) in r.bundles() {
        let (table, row) = path.rsplit_once('.').unwrap_or((path.as_str(), ""));
        for (m, v) in b.cells() {
            line(table, row, m, &v);
        }
        line(table, row, "count", &b.count.to_string());
    }
    if let Some(cw) = r.link_prediction.as_ref().and_then(|lp| lp.closed_world.as_ref()) {
        line("link_prediction", "closed_world", "pct_improvement", &cw.pct_improvement.text());
    }
    if let Some(ep) = &r.entity_pair {
        let k = ep.k;
        line("entity_pair", "macro", &format!("map_at_{k}"), &ep.map_at_k.text());
        line("entity_pair", "macro", &format!("p_at_{k}"), &ep.p_at_k.text());
        line("entity_pair", "macro", &format!("p_at_{k}_pct"), &ep.p_at_k_pct.text());
        for x in &ep.per_relation {
            line("entity_pair.per_relation", &x.relation, &format!("ap_at_{k}"), &x.ap_at_k.text());
            line("entity_pair.per_relation", &x.relation, &format!("p_at_{k}"), &x.p_at_k.text());
            line("entity_pair.per_relation", &x.relation, "num_test_pairs", &x.num_test_pairs.to_string());
        }
    }
    if let Some(tc) = &r.triple_classification {
        for (kind, s) in &tc.suites {
            for (m, v) in [
                ("precision", s.precision),
                ("recall", s.recall),
                ("accuracy", s.accuracy),
                ("f1", s.f1),
                ("coverage", s.coverage),
            ] {
                line("triple_classification", kind, m, &v.text());
            }
        }
        for (kind, s) in &tc.suites {
            line("triple_classification", kind, "default_threshold", &s.thresholds.default_threshold.text());
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

fn md_table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
    for row in rows {
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out.push('\n');
}

fn bundle_row(label: &str, b: &Bundle) -> Vec<String> {
    let mut row = vec![label.to_owned()];
    row.extend(b.cells().into_iter().map(|(_, v)| v));
    row.push(b.count.to_string());
    row
}

const BUNDLE_HEADER: [&str; 7] = ["", "MRR", "MR", "Hits@1", "Hits@3", "Hits@10", "count"];

fn render_markdown(r: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# Evaluation: {} d={} on {}\n",
        r.model.family, r.model.dim, r.dataset.path
    );
    if let Some(lp) = &r.link_prediction {
        out.push_str("## Link prediction\n\n");
        let mut rows = vec![
            bundle_row("micro (raw)", &lp.micro_raw),
            bundle_row("micro", &lp.micro),
            bundle_row("macro by relation", &lp.macro_by_relation),
        ];
        if let Some(d) = &lp.macro_by_domain {
            rows.push(bundle_row("macro by domain", &d.macro_avg));
        }
        md_table(&mut out, &BUNDLE_HEADER, &rows);

        if let Some(cw) = &lp.closed_world {
            out.push_str("### Closed-world filtering\n\n");
            let pct = cw.pct_improvement.text();
            let full = |v: Fixed6| format!("{} ({}%)", v.text(), pct);
            md_table(
                &mut out,
                &["filter", "MRR", "MR", "Hits@1", "Hits@3", "Hits@10"],
                &[
                    vec![
                        cw.subset_filter.clone(),
                        cw.subset_bundle.mrr.text(),
                        cw.subset_bundle.mr.text(),
                        cw.subset_bundle.hits_at_1.text(),
                        cw.subset_bundle.hits_at_3.text(),
                        cw.subset_bundle.hits_at_10.text(),
                    ],
                    vec![
                        cw.full_filter.clone(),
                        full(cw.full_bundle.mrr),
                        cw.full_bundle.mr.text(),
                        cw.full_bundle.hits_at_1.text(),
                        cw.full_bundle.hits_at_3.text(),
                        cw.full_bundle.hits_at_10.text(),
                    ],
                ],
            );
        }

        out.push_str("### Direction\n\n");
        md_table(
            &mut out,
            &BUNDLE_HEADER,
            &[
                bundle_row("left (?, r, t)", &lp.direction_split.left),
                bundle_row("right (h, r, ?)", &lp.direction_split.right),
            ],
        );

        if let Some(cats) = &lp.category_split {
            out.push_str("### Relation category\n\n");
            let names: Vec<&str> = ["binary", "nary", "concatenated", "all"]
                .into_iter()
                .filter(|c| cats.contains_key(*c))
                .collect();
            let mut header = vec!["metric"];
            header.extend(&names);
            let rows: Vec<Vec<String>> = ["mrr", "mr", "hits_at_1", "hits_at_3", "hits_at_10"]
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let mut row = vec![m.to_string()];
                    row.extend(names.iter().map(|c| cats[*c].cells()[i].1.clone()));
                    row
                })
                .collect();
            md_table(&mut out, &header, &rows);
        }

        if let Some(d) = &lp.macro_by_domain {
            out.push_str("### Domains\n\n");
            let rows: Vec<Vec<String>> = d.per_domain.iter().map(|(k, b)| bundle_row(k, b)).collect();
            md_table(&mut out, &BUNDLE_HEADER, &rows);
        }
    }
    if let Some(ep) = &r.entity_pair {
        let _ = writeln!(out, "## Entity-pair ranking (K = {})\n", ep.k);
        md_table(
            &mut out,
            &["", "MAP@K", "P@K", "P@K (%)"],
            &[vec![
                "macro".into(),
                ep.map_at_k.text(),
                ep.p_at_k.text(),
                ep.p_at_k_pct.text(),
            ]],
        );
        let rows: Vec<Vec<String>> = ep
            .per_relation
            .iter()
            .map(|x| {
                vec![
                    x.relation.clone(),
                    x.ap_at_k.text(),
                    x.p_at_k.text(),
                    x.num_test_pairs.to_string(),
                ]
            })
            .collect();
        md_table(&mut out, &["relation", "AP@K", "P@K", "test pairs"], &rows);
    }
    if let Some(p) = &r.property {
        let _ = writeln!(out, "## Property prediction ({} over tails, {} cases)\n", p.aggregation, p.num_cases);
        let mut rows = vec![bundle_row("unfiltered", &p.unfiltered)];
        if let Some(f) = &p.filtered_variant {
            rows.push(bundle_row("filtered", f));
        }
        md_table(&mut out, &BUNDLE_HEADER, &rows);
    }
    if let Some(tc) = &r.triple_classification {
        let _ = writeln!(out, "## Triple classification (negatives from {})\n", tc.generator);
        let rows: Vec<Vec<String>> = tc
            .suites
            .iter()
            .map(|(k, s)| {
                vec![
                    k.clone(),
                    s.precision.text(),
                    s.recall.text(),
                    s.accuracy.text(),
                    s.f1.text(),
                    s.coverage.text(),
                    s.thresholds.default_threshold.text(),
                ]
            })
            .collect();
        md_table(
            &mut out,
            &["suite", "precision", "recall", "accuracy", "F1", "coverage", "default threshold"],
            &rows,
        );
        if let Some(g) = tc.directional_check.head_gap {
            let _ = writeln!(out, "Head accuracy gap (inconsistent - consistent): {}", g.text());
        }
        if let Some(g) = tc.directional_check.tail_gap {
            let _ = writeln!(out, "Tail accuracy gap (inconsistent - consistent): {}", g.text());
        }
        if !tc.directional_check.holds {
            out.push_str("Note: an inconsistent suite scored below its consistent counterpart.\n");
        }
        out.push('\n');
    }
    out
}

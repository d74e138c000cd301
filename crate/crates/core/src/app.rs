//! Case-control expression data: CSV ingestion, preprocessing, sequential
//! replay and the fixed-sample BH / lfdr analyses.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::boundary::StopCriterion;
use crate::competitors::{adaptz_fixed, bh};
use crate::decision::{DecisionVector, Outcome, SequentialResult};
use crate::error::{Error, Result};
use crate::lfdr::data_driven_lfdr;
use crate::models::{pvalue, two_sample_t, zscore, ArmStats, NullDist, Side, StreamState};
use crate::runner::{run_sequential, Rule, RunConfig, StageSource};
use crate::sim::{substream, PURPOSE_REPLAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Case,
    Control,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Case => "case",
            Arm::Control => "control",
        }
    }
}

/// Maps a sample label to an arm. A trailing `.N` (duplicate-header suffix) is ignored.
pub fn parse_label(token: &str) -> Option<Arm> {
    let t = token.trim().to_ascii_lowercase();
    let base = match t.rsplit_once('.') {
        Some((head, tail)) if !head.is_empty() && tail.chars().all(|c| c.is_ascii_digit()) => head,
        _ => t.as_str(),
    };
    match base {
        "case" | "tumor" | "tumour" | "cancer" | "disease" | "1" => Some(Arm::Case),
        "control" | "normal" | "healthy" | "0" => Some(Arm::Control),
        _ => None,
    }
}

/// Genes × samples with per-sample arm labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseControlMatrix {
    pub gene_ids: Vec<String>,
    pub sample_names: Vec<String>,
    pub labels: Vec<Arm>,
    /// Row-major: `values[g][j]` is gene g in sample j.
    pub values: Vec<Vec<f64>>,
}

impl CaseControlMatrix {
    pub fn new(
        gene_ids: Vec<String>,
        sample_names: Vec<String>,
        labels: Vec<Arm>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let mat = CaseControlMatrix { gene_ids, sample_names, labels, values };
        mat.validate()?;
        Ok(mat)
    }

    fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.sample_names.len() != n {
            return Err(Error::Dimension { expected: n, got: self.sample_names.len() });
        }
        if self.gene_ids.len() != self.values.len() {
            return Err(Error::Dimension { expected: self.values.len(), got: self.gene_ids.len() });
        }
        if let Some(row) = self.values.iter().find(|r| r.len() != n) {
            return Err(Error::Dimension { expected: n, got: row.len() });
        }
        let (case, control) = self.arm_sizes();
        if case < 2 || control < 2 {
            return Err(Error::InsufficientData(format!(
                "need >= 2 samples per arm, got {case} case / {control} control"
            )));
        }
        if self.values.is_empty() {
            return Err(Error::InsufficientData("no genes".into()));
        }
        Ok(())
    }

    pub fn genes(&self) -> usize {
        self.values.len()
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn arm_sizes(&self) -> (usize, usize) {
        let case = self.labels.iter().filter(|&&a| a == Arm::Case).count();
        (case, self.labels.len() - case)
    }

    pub fn indices(&self, arm: Arm) -> Vec<usize> {
        (0..self.labels.len()).filter(|&j| self.labels[j] == arm).collect()
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim().to_ascii_lowercase().as_str(), "" | "na" | "nan" | "null" | "?")
}

/// Reads an expression CSV: header row of sample labels (first cell names the
/// gene column), then one row per gene. `labels_file`, when given, holds one
/// label per sample (comma- or line-separated) and overrides the header.
pub fn ingest_csv(path: &Path, labels_file: Option<&Path>) -> Result<CaseControlMatrix> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    let override_labels = match labels_file {
        Some(p) => Some(read_labels(p)?),
        None => None,
    };
    parse_csv(&text, override_labels)
}

fn read_labels(path: &Path) -> Result<Vec<Arm>> {
    let mut text = String::new();
    File::open(path)?.read_to_string(&mut text)?;
    text.split([',', '\n', '\r'])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(i, t)| {
            parse_label(t).ok_or_else(|| Error::Parse {
                row: 1,
                column: i + 1,
                message: format!("unknown label '{t}' in labels file"),
            })
        })
        .collect()
}

/// Parses CSV text (see [`ingest_csv`]).
pub fn parse_csv(text: &str, override_labels: Option<Vec<Arm>>) -> Result<CaseControlMatrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = records.next().ok_or_else(|| Error::Parse { row: 1, column: 1, message: "empty file".into() })??;
    if header.len() < 2 {
        return Err(Error::Parse { row: 1, column: 1, message: "header needs a gene column and samples".into() });
    }
    let sample_names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let n = sample_names.len();
    let labels = match override_labels {
        Some(l) if l.len() != n => {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: format!("labels file has {} entries for {n} samples", l.len()),
            })
        }
        Some(l) => l,
        None => sample_names
            .iter()
            .enumerate()
            .map(|(j, s)| {
                parse_label(s).ok_or_else(|| Error::Parse {
                    row: 1,
                    column: j + 2,
                    message: format!("unknown sample label '{s}'"),
                })
            })
            .collect::<Result<_>>()?,
    };

    let mut gene_ids = Vec::new();
    let mut values = Vec::new();
    for (k, rec) in records.enumerate() {
        let row = k + 2;
        let rec = rec?;
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue; // blank line
        }
        if rec.len() != n + 1 {
            return Err(Error::Parse {
                row,
                column: rec.len(),
                message: format!("expected {} fields, found {}", n + 1, rec.len()),
            });
        }
        let mut parsed = Vec::with_capacity(n);
        let mut missing = false;
        for (j, cell) in rec.iter().enumerate().skip(1) {
            if is_missing(cell) {
                missing = true;
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                row,
                column: j + 1,
                message: format!("non-numeric value '{cell}'"),
            })?;
            if !v.is_finite() {
                missing = true;
                continue;
            }
            parsed.push(v);
        }
        let id = rec.get(0).unwrap_or_default().trim().to_string();
        if missing {
            warn!("dropping gene '{id}' (row {row}): missing values");
            continue;
        }
        gene_ids.push(id);
        values.push(parsed);
    }
    CaseControlMatrix::new(gene_ids, sample_names, labels, values)
}

/// Writes the matrix in the format read by [`ingest_csv`].
pub fn write_csv<W: Write>(matrix: &CaseControlMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let names_ok = matrix.sample_names.iter().zip(&matrix.labels).all(|(s, &l)| parse_label(s) == Some(l));
    let mut header = vec!["gene".to_string()];
    if names_ok {
        header.extend(matrix.sample_names.iter().cloned());
    } else {
        header.extend(matrix.labels.iter().map(|l| l.as_str().to_string()));
    }
    w.write_record(&header)?;
    for (id, row) in matrix.gene_ids.iter().zip(&matrix.values) {
        let mut rec = Vec::with_capacity(row.len() + 1);
        rec.push(id.clone());
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-sample standardisation (mean 0, sd 1), then quantile normalisation.
pub fn preprocess(matrix: &CaseControlMatrix) -> Result<CaseControlMatrix> {
    let mut out = standardize(matrix)?;
    quantile_normalize(&mut out);
    Ok(out)
}

/// Centres and scales every sample (column).
pub fn standardize(matrix: &CaseControlMatrix) -> Result<CaseControlMatrix> {
    let g = matrix.genes();
    let mut out = matrix.clone();
    for j in 0..matrix.samples() {
        let col = ArmStats::from_slice(&matrix.values.iter().map(|r| r[j]).collect::<Vec<_>>());
        let sd = col.variance().sqrt();
        if !(sd > 0.0) || g < 2 {
            return Err(Error::DegenerateSample(format!(
                "sample '{}' (column {}) has zero variance",
                matrix.sample_names[j],
                j + 2
            )));
        }
        for row in out.values.iter_mut() {
            row[j] = (row[j] - col.mean) / sd;
        }
    }
    Ok(out)
}

/// Replaces each sample's k-th smallest value by the mean k-th smallest value across samples.
pub fn quantile_normalize(matrix: &mut CaseControlMatrix) {
    let g = matrix.genes();
    let s = matrix.samples();
    let mut orders = Vec::with_capacity(s);
    let mut reference = vec![0.0; g];
    for j in 0..s {
        let mut idx: Vec<usize> = (0..g).collect();
        idx.sort_by(|&a, &b| matrix.values[a][j].total_cmp(&matrix.values[b][j]));
        for (k, &i) in idx.iter().enumerate() {
            reference[k] += matrix.values[i][j];
        }
        orders.push(idx);
    }
    reference.iter_mut().for_each(|v| *v /= s as f64);
    for (j, idx) in orders.iter().enumerate() {
        for (k, &i) in idx.iter().enumerate() {
            matrix.values[i][j] = reference[k];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub pilot_case: usize,
    pub pilot_control: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub lambda: f64,
    pub welch: bool,
    pub criterion: StopCriterion,
    pub record_trace: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            pilot_case: 25,
            pilot_control: 25,
            alpha: 0.05,
            beta: 0.10,
            seed: 0,
            lambda: 0.1,
            welch: false,
            criterion: StopCriterion::default(),
            record_trace: false,
        }
    }
}

/// Reveals samples one at a time, each from a uniformly chosen arm.
pub struct ReplaySource<'a> {
    matrix: &'a CaseControlMatrix,
    case_queue: Vec<usize>,
    control_queue: Vec<usize>,
    states: Vec<StreamState>,
    rng: ChaCha8Rng,
    welch: bool,
    n: usize,
    /// Arm of each revealed sample, in order.
    pub arm_sequence: Vec<Arm>,
}

impl<'a> ReplaySource<'a> {
    pub fn new(matrix: &'a CaseControlMatrix, cfg: &ReplayConfig) -> Result<Self> {
        let (nc, nk) = matrix.arm_sizes();
        if cfg.pilot_case < 2 || cfg.pilot_control < 2 {
            return Err(Error::Config("pilot needs >= 2 samples per arm".into()));
        }
        if cfg.pilot_case > nc || cfg.pilot_control > nk {
            return Err(Error::Config(format!(
                "pilot {}+{} exceeds available {nc} case / {nk} control samples",
                cfg.pilot_case, cfg.pilot_control
            )));
        }
        let mut rng = substream(cfg.seed, PURPOSE_REPLAY, 0);
        let mut case_queue = matrix.indices(Arm::Case);
        let mut control_queue = matrix.indices(Arm::Control);
        case_queue.shuffle(&mut rng);
        control_queue.shuffle(&mut rng);
        // queues are consumed from the back
        case_queue.reverse();
        control_queue.reverse();
        let mut src = ReplaySource {
            matrix,
            case_queue,
            control_queue,
            states: (0..matrix.genes()).map(|i| StreamState::new(i, 1)).collect(),
            rng,
            welch: cfg.welch,
            n: 0,
            arm_sequence: Vec::new(),
        };
        for _ in 0..cfg.pilot_case {
            src.reveal(Arm::Case);
        }
        for _ in 0..cfg.pilot_control {
            src.reveal(Arm::Control);
        }
        Ok(src)
    }

    fn reveal(&mut self, arm: Arm) -> bool {
        let queue = match arm {
            Arm::Case => &mut self.case_queue,
            Arm::Control => &mut self.control_queue,
        };
        let Some(j) = queue.pop() else { return false };
        for (s, row) in self.states.iter_mut().zip(&self.matrix.values) {
            match arm {
                Arm::Case => s.case.push(row[j]),
                Arm::Control => s.control.push(row[j]),
            }
            s.n += 1;
        }
        self.arm_sequence.push(arm);
        self.n += 1;
        true
    }

    fn statistics(&self) -> Result<Vec<(f64, NullDist)>> {
        let pooled = NullDist::student_t(self.n as f64 - 2.0)?;
        self.states
            .iter()
            .map(|s| {
                let (t, df) = two_sample_t(&s.case, &s.control, self.welch).map_err(|e| {
                    Error::DegenerateSample(format!("gene '{}': {e}", self.matrix.gene_ids[s.stream_id]))
                })?;
                Ok((t, if self.welch { NullDist::student_t(df)? } else { pooled.clone() }))
            })
            .collect()
    }
}

impl StageSource for ReplaySource<'_> {
    fn m(&self) -> usize {
        self.states.len()
    }

    fn stage(&self) -> usize {
        self.n
    }

    fn advance(&mut self) -> Result<bool> {
        let first = if self.rng.random::<bool>() { Arm::Case } else { Arm::Control };
        let other = if first == Arm::Case { Arm::Control } else { Arm::Case };
        Ok(self.reveal(first) || self.reveal(other))
    }

    fn states(&self) -> &[StreamState] {
        &self.states
    }

    fn zscores(&self) -> Result<Vec<f64>> {
        self.statistics()?.iter().map(|(t, null)| zscore(*t, null)).collect()
    }

    fn pvalues(&self) -> Result<Vec<f64>> {
        Ok(self.statistics()?.iter().map(|(t, null)| pvalue(*t, null, Side::TwoSided)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub result: SequentialResult,
    pub discoveries: usize,
    pub case_used: usize,
    pub control_used: usize,
    pub total_samples: usize,
    /// Gene ids of the rejected hypotheses.
    pub discovered_genes: Vec<String>,
}

/// Runs the data-driven rule over a random reveal order of the samples.
pub fn replay(matrix: &CaseControlMatrix, cfg: &ReplayConfig) -> Result<ReplayReport> {
    let mut src = ReplaySource::new(matrix, cfg)?;
    let run_cfg = RunConfig {
        alpha: cfg.alpha,
        beta: cfg.beta,
        pilot_k: cfg.pilot_case + cfg.pilot_control,
        max_stages: matrix.samples(),
        criterion: cfg.criterion,
        record_trace: cfg.record_trace,
    };
    let mut result = run_sequential(&mut src, &Rule::DataDriven { lambda: cfg.lambda }, &run_cfg)?;
    // running out of samples and reaching the cap coincide here
    if result.outcome == Outcome::Truncated {
        result.outcome = Outcome::Exhausted;
    }
    let case_used = src.arm_sequence.iter().filter(|&&a| a == Arm::Case).count();
    let discovered_genes =
        result.decisions.0.iter().zip(&matrix.gene_ids).filter(|(d, _)| **d).map(|(_, id)| id.clone()).collect();
    Ok(ReplayReport {
        discoveries: result.discoveries(),
        case_used,
        control_used: src.arm_sequence.len() - case_used,
        total_samples: src.arm_sequence.len(),
        discovered_genes,
        result,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedSampleReport {
    pub bh: DecisionVector,
    pub adaptz: DecisionVector,
    pub bh_count: usize,
    pub adaptz_count: usize,
    pub pi0_hat: f64,
    pub tstats: Vec<f64>,
    pub pvalues: Vec<f64>,
    pub zscores: Vec<f64>,
}

/// Full-data two-sample t per gene; BH on two-sided p-values and the lfdr step-up on z-scores.
pub fn fixed_sample_analysis(matrix: &CaseControlMatrix, alpha: f64, lambda: f64) -> Result<FixedSampleReport> {
    let df = matrix.samples() as f64 - 2.0;
    let null = NullDist::student_t(df)?;
    let case = matrix.indices(Arm::Case);
    let control = matrix.indices(Arm::Control);
    let mut tstats = Vec::with_capacity(matrix.genes());
    for (g, row) in matrix.values.iter().enumerate() {
        let a = ArmStats::from_slice(&case.iter().map(|&j| row[j]).collect::<Vec<_>>());
        let b = ArmStats::from_slice(&control.iter().map(|&j| row[j]).collect::<Vec<_>>());
        let (t, _) = two_sample_t(&a, &b, false)
            .map_err(|e| Error::DegenerateSample(format!("gene '{}': {e}", matrix.gene_ids[g])))?;
        tstats.push(t);
    }
    let pvalues: Vec<f64> = tstats.iter().map(|&t| pvalue(t, &null, Side::TwoSided)).collect();
    let zscores: Vec<f64> = tstats.iter().map(|&t| zscore(t, &null)).collect::<Result<_>>()?;
    let bh_dec = bh(&pvalues, alpha);
    let (lfdr, pi0_hat) = data_driven_lfdr(&zscores, lambda, matrix.samples())?;
    let adaptz = adaptz_fixed(&lfdr, alpha);
    Ok(FixedSampleReport {
        bh_count: bh_dec.rejections(),
        adaptz_count: adaptz.rejections(),
        bh: bh_dec,
        adaptz,
        pi0_hat,
        tstats,
        pvalues,
        zscores,
    })
}

/// Shape and signal of a synthetic case-control expression set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSpec {
    pub genes: usize,
    pub cases: usize,
    pub controls: usize,
    /// Differentially expressed genes and their standardized mean shifts.
    pub effects: Vec<f64>,
    /// Sd of a small random case–control shift carried by every gene
    /// (widens the z-score distribution beyond N(0, 1)).
    pub heterogeneity_sd: f64,
    pub seed: u64,
}

impl SurrogateSpec {
    /// 6033 genes, 52 tumour / 50 normal samples. Shapes follow published
    /// summaries of the prostate study: about 21 BH discoveries at 5% on the
    /// full data, a z-score spread somewhat above 1, and roughly a dozen clear
    /// signals already after 25 + 25 samples.
    pub fn prostate_format(seed: u64) -> Self {
        let mut effects = Vec::new();
        for (count, size) in [(15, 1.2), (8, 0.8)] {
            // three up-regulated genes for every down-regulated one
            effects.extend((0..count).map(|k| if k % 4 == 3 { -size } else { size }));
        }
        SurrogateSpec { genes: 6033, cases: 52, controls: 50, effects, heterogeneity_sd: 0.1, seed }
    }
}

/// Generates a log-normal-ish expression matrix with per-sample scale/offset noise.
pub fn generate_surrogate(spec: &SurrogateSpec) -> Result<CaseControlMatrix> {
    if spec.effects.len() > spec.genes {
        return Err(Error::InvalidParameter("more effects than genes".into()));
    }
    let mut rng = substream(spec.seed, PURPOSE_REPLAY, 1);
    let n = spec.cases + spec.controls;
    let mut labels: Vec<Arm> =
        std::iter::repeat_n(Arm::Case, spec.cases).chain(std::iter::repeat_n(Arm::Control, spec.controls)).collect();
    labels.shuffle(&mut rng);
    let mut counts: BTreeMap<Arm, usize> = BTreeMap::new();
    let sample_names = labels
        .iter()
        .map(|&a| {
            let c = counts.entry(a).or_default();
            *c += 1;
            let base = if a == Arm::Case { "tumor" } else { "normal" };
            if *c == 1 {
                base.to_string()
            } else {
                format!("{base}.{}", *c - 1)
            }
        })
        .collect();
    // genes carrying a shift are scattered over the index range
    let mut gene_idx: Vec<usize> = (0..spec.genes).collect();
    gene_idx.shuffle(&mut rng);
    let mut shift: Vec<f64> =
        (0..spec.genes).map(|_| spec.heterogeneity_sd * rng.sample::<f64, _>(StandardNormal)).collect();
    for (k, &e) in spec.effects.iter().enumerate() {
        shift[gene_idx[k]] += e;
    }
    let offsets: Vec<f64> = (0..n).map(|_| Normal::new(0.0, 0.3).unwrap().sample(&mut rng)).collect();
    let scales: Vec<f64> = (0..n).map(|_| (0.15 * rng.sample::<f64, _>(StandardNormal)).exp()).collect();
    let baseline: Vec<f64> = (0..spec.genes).map(|_| 6.0 + 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let spread: Vec<f64> = (0..spec.genes).map(|_| (0.25 * rng.sample::<f64, _>(StandardNormal)).exp()).collect();

    let values = (0..spec.genes)
        .map(|g| {
            (0..n)
                .map(|j| {
                    let e: f64 = rng.sample(StandardNormal);
                    let mu = if labels[j] == Arm::Case { shift[g] } else { 0.0 };
                    offsets[j] + scales[j] * (baseline[g] + spread[g] * (mu + e))
                })
                .collect()
        })
        .collect();
    let gene_ids = (0..spec.genes).map(|g| format!("g{:04}", g + 1)).collect();
    CaseControlMatrix::new(gene_ids, sample_names, labels, values)
}

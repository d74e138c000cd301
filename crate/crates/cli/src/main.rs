use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use seqfdr::app::{
    fixed_sample_analysis, generate_surrogate, ingest_csv, preprocess, replay, write_csv, CaseControlMatrix,
    ReplayConfig, SurrogateSpec,
};
use seqfdr::report::{write_summary_csv, Report, SummaryRow};
use seqfdr::sim::{
    bh_matched_sample_size, calibrate_gap_sb, run_experiment, ExampleId, ExampleSpec, ExperimentConfig, McSummary,
    Procedure,
};
use seqfdr::{Error, Outcome, StopCriterion};

#[derive(Parser, Debug)]
#[command(name = "seqfdr", version, about = "Sequential multiple testing with local fdr stopping boundaries")]
struct Cli {
    /// Master seed for all random streams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Record per-stage boundary traces (replay) and log stage progress.
    #[arg(long, global = true)]
    trace: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RuleArg {
    Oracle,
    DataDriven,
    GapAo,
    GapSb,
    Bh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    /// stop once the lower cutoff exceeds the upper one
    Cutoff,
    /// stop once r + a ≥ m
    Count,
}

impl From<CriterionArg> for StopCriterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::Cutoff => StopCriterion::CutoffSeparation,
            CriterionArg::Count => StopCriterion::CountCover,
        }
    }
}

fn parse_pi1(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("pi1 must lie in [0, 1], got {v}"))
    }
}

fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("level must lie in (0, 1), got {v}"))
    }
}

#[derive(clap::Args, Debug, Clone)]
struct ExampleArgs {
    /// Simulation example, E1..E7.
    #[arg(long)]
    example: ExampleId,
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, default_value_t = 0.2, value_parser = parse_pi1)]
    pi1: f64,
    #[arg(long, default_value_t = 0.05, value_parser = parse_level)]
    alpha: f64,
    #[arg(long, default_value_t = 0.10, value_parser = parse_level)]
    beta: f64,
    #[arg(long, default_value_t = 200)]
    runs: usize,
    /// Replicates per grid point when calibrating GAPsb.
    #[arg(long, default_value_t = 50)]
    calibration_runs: usize,
    /// Stages before the first boundary check (default depends on the rule).
    #[arg(long)]
    pilot: Option<usize>,
    #[arg(long)]
    max_stages: Option<usize>,
    /// Stop rule (default: count for discrete examples, cutoff otherwise).
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    /// Unequal-variance two-sample statistic.
    #[arg(long)]
    welch: bool,
}

impl ExampleArgs {
    fn spec(&self) -> seqfdr::Result<ExampleSpec> {
        ExampleSpec::new(self.example, self.m, self.pi1)
    }

    fn config(&self, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            alpha: self.alpha,
            beta: self.beta,
            runs: self.runs,
            calibration_runs: self.calibration_runs,
            seed,
            pilot_k: self.pilot,
            max_stages: self.max_stages,
            criterion: self.criterion.map(Into::into),
            welch: self.welch,
            ..Default::default()
        }
    }
}

#[derive(clap::Args, Debug, Clone)]
struct DataArgs {
    /// Expression CSV (header = sample labels, first column = gene id).
    #[arg(long, required_unless_present = "surrogate")]
    csv: Option<PathBuf>,
    /// One label per sample (case/control), overriding the header.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Use the built-in prostate-format synthetic data set instead of a file.
    #[arg(long, conflicts_with = "csv")]
    surrogate: bool,
    /// Skip standardisation and quantile normalisation.
    #[arg(long)]
    raw: bool,
}

impl DataArgs {
    fn load(&self, seed: u64) -> seqfdr::Result<CaseControlMatrix> {
        let matrix = match &self.csv {
            Some(path) => ingest_csv(path, self.labels.as_deref())?,
            None => generate_surrogate(&SurrogateSpec::prostate_format(seed))?,
        };
        info!("loaded {} genes x {} samples", matrix.genes(), matrix.samples());
        if self.raw {
            Ok(matrix)
        } else {
            preprocess(&matrix)
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Monte Carlo summary (ASN, f̂dr, f̂nr) of one rule on one example.
    Simulate {
        #[command(flatten)]
        ex: ExampleArgs,
        #[arg(long, value_enum, default_value_t = RuleArg::Oracle)]
        rule: RuleArg,
        /// Fixed per-stream sample size for `--rule bh`.
        #[arg(long)]
        n: Option<usize>,
        /// GAPsb cutoff; calibrated when omitted.
        #[arg(long)]
        cutoff: Option<f64>,
        /// Also run this rule and report the percentage ASN saving against it.
        #[arg(long, value_enum)]
        compare: Option<RuleArg>,
    },
    /// Smallest GAPsb cutoff meeting both error targets.
    CalibrateGap {
        #[command(flatten)]
        ex: ExampleArgs,
    },
    /// Fixed sample size at which BH matches a target f̂nr.
    BhMatch {
        #[command(flatten)]
        ex: ExampleArgs,
        /// Target f̂nr in percent; defaults to the data-driven rule's f̂nr.
        #[arg(long)]
        target_fnr: Option<f64>,
    },
    /// Sequential replay of a case-control data set.
    Replay {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 25)]
        pilot_case: usize,
        #[arg(long, default_value_t = 25)]
        pilot_control: usize,
        #[arg(long, default_value_t = 0.05, value_parser = parse_level)]
        alpha: f64,
        #[arg(long, default_value_t = 0.10, value_parser = parse_level)]
        beta: f64,
        #[arg(long)]
        welch: bool,
    },
    /// Full-data BH and lfdr step-up discoveries.
    FixedSample {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 0.05, value_parser = parse_level)]
        alpha: f64,
    },
    /// ASN against the number of streams, one row per (m, rule).
    SweepM {
        #[command(flatten)]
        ex: ExampleArgs,
        #[arg(long, value_delimiter = ',', default_value = "100,500,1000")]
        m_list: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "oracle,data-driven,gap-ao")]
        rules: Vec<RuleArg>,
    },
    /// Write the prostate-format synthetic data set as CSV.
    Surrogate,
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::InvalidParameter(_) | Error::Config(_) | Error::InvalidK { .. } => 2,
        Error::CalibrationFailure(_) | Error::SearchFailure(_) => 4,
        Error::NotStopped { .. } => 5,
        _ => 3,
    }
}

fn procedure(
    rule: RuleArg,
    spec: &ExampleSpec,
    cfg: &ExperimentConfig,
    n: Option<usize>,
    cutoff: Option<f64>,
) -> seqfdr::Result<Procedure> {
    Ok(match rule {
        RuleArg::Oracle => Procedure::Oracle,
        RuleArg::DataDriven => Procedure::DataDriven,
        RuleArg::GapAo => Procedure::GapAo,
        RuleArg::GapSb => Procedure::GapSb {
            cutoff: match cutoff {
                Some(c) => c,
                None => calibrate_gap_sb(spec, cfg)?,
            },
        },
        RuleArg::Bh => {
            Procedure::BhFixed { n: n.ok_or_else(|| Error::InvalidParameter("--rule bh needs --n".into()))? }
        }
    })
}

fn row(spec: &ExampleSpec, proc_: &Procedure, summary: McSummary) -> SummaryRow {
    SummaryRow { example: spec.id.to_string(), m: spec.m, pi1: spec.pi1, procedure: proc_.label().to_string(), summary }
}

struct Output {
    text: String,
    truncated: bool,
}

fn csv_string(rows: &[SummaryRow]) -> seqfdr::Result<String> {
    let mut buf = Vec::new();
    write_summary_csv(rows, &mut buf)?;
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

fn key_value_csv(pairs: &[(&str, String)]) -> String {
    let head: Vec<&str> = pairs.iter().map(|(k, _)| *k).collect();
    let vals: Vec<&str> = pairs.iter().map(|(_, v)| v.as_str()).collect();
    format!("{}\n{}\n", head.join(","), vals.join(","))
}

fn run(cli: &Cli) -> seqfdr::Result<Output> {
    let seed = cli.seed;
    let format = cli.format;
    match &cli.command {
        Command::Simulate { ex, rule, n, cutoff, compare } => {
            let spec = ex.spec()?;
            let cfg = ex.config(seed);
            let proc_ = procedure(*rule, &spec, &cfg, *n, *cutoff)?;
            let mut summary = run_experiment(&spec, &proc_, &cfg)?;
            if let Some(other) = compare {
                let other = procedure(*other, &spec, &cfg, *n, *cutoff)?;
                let o = run_experiment(&spec, &other, &cfg)?;
                summary = summary.with_savings_against(o.asn);
            }
            let truncated = summary.truncated > 0;
            let r = row(&spec, &proc_, summary);
            let text = match format.unwrap_or(Format::Json) {
                Format::Csv => csv_string(&[r])?,
                Format::Json => {
                    let config = json!({"example": spec, "experiment": cfg, "procedure": proc_});
                    Report::new("simulate", &config, &r.summary, seed)?.to_json()?
                }
            };
            Ok(Output { text, truncated })
        }
        Command::CalibrateGap { ex } => {
            let spec = ex.spec()?;
            let cfg = ex.config(seed);
            let cutoff = calibrate_gap_sb(&spec, &cfg)?;
            let summary = run_experiment(&spec, &Procedure::GapSb { cutoff }, &cfg)?;
            let text = match format.unwrap_or(Format::Json) {
                Format::Csv => key_value_csv(&[
                    ("example", spec.id.to_string()),
                    ("m", spec.m.to_string()),
                    ("cutoff", format!("{cutoff:.1}")),
                    ("asn", format!("{:.4}", summary.asn)),
                    ("fdr_hat_pct", format!("{:.4}", summary.fdr_hat_pct)),
                    ("fnr_hat_pct", format!("{:.4}", summary.fnr_hat_pct)),
                ]),
                Format::Json => {
                    let mut results = serde_json::to_value(&summary)?;
                    results["cutoff"] = json!(cutoff);
                    Report::new("calibrate-gap", &json!({"example": spec, "experiment": cfg}), &results, seed)?
                        .to_json()?
                }
            };
            Ok(Output { text, truncated: false })
        }
        Command::BhMatch { ex, target_fnr } => {
            let spec = ex.spec()?;
            let cfg = ex.config(seed);
            let (target, dd) = match target_fnr {
                Some(t) => (*t, None),
                None => {
                    let s = run_experiment(&spec, &Procedure::DataDriven, &cfg)?;
                    (s.fnr_hat_pct, Some(s))
                }
            };
            let m = bh_matched_sample_size(&spec, target, &cfg)?;
            let text = match format.unwrap_or(Format::Json) {
                Format::Csv => key_value_csv(&[
                    ("example", spec.id.to_string()),
                    ("m", spec.m.to_string()),
                    ("target_fnr_pct", format!("{target:.4}")),
                    ("n_hat", m.n_hat.to_string()),
                    ("fdr_hat_pct", format!("{:.4}", m.summary.fdr_hat_pct)),
                    ("fnr_hat_pct", format!("{:.4}", m.summary.fnr_hat_pct)),
                    ("within_tolerance", m.within_tolerance.to_string()),
                ]),
                Format::Json => {
                    let mut results = serde_json::to_value(&m.summary)?;
                    results["n_hat"] = json!(m.n_hat);
                    results["target_fnr_pct"] = json!(target);
                    results["within_tolerance"] = json!(m.within_tolerance);
                    if let Some(dd) = dd {
                        results["data_driven"] = serde_json::to_value(dd)?;
                    }
                    Report::new("bh-match", &json!({"example": spec, "experiment": cfg}), &results, seed)?.to_json()?
                }
            };
            Ok(Output { text, truncated: false })
        }
        Command::Replay { data, pilot_case, pilot_control, alpha, beta, welch } => {
            let matrix = data.load(seed)?;
            let cfg = ReplayConfig {
                pilot_case: *pilot_case,
                pilot_control: *pilot_control,
                alpha: *alpha,
                beta: *beta,
                seed,
                welch: *welch,
                record_trace: cli.trace,
                ..Default::default()
            };
            let rep = replay(&matrix, &cfg)?;
            let text = match format.unwrap_or(Format::Json) {
                Format::Csv => key_value_csv(&[
                    ("stopping_time", rep.result.stopping_time.to_string()),
                    ("discoveries", rep.discoveries.to_string()),
                    ("outcome", format!("{:?}", rep.result.outcome).to_lowercase()),
                    ("exhausted", (rep.result.outcome == Outcome::Exhausted).to_string()),
                    ("case_used", rep.case_used.to_string()),
                    ("control_used", rep.control_used.to_string()),
                ]),
                Format::Json => {
                    let mut results = serde_json::to_value(&rep)?;
                    results["exhausted"] = json!(rep.result.outcome == Outcome::Exhausted);
                    Report::new("replay", &cfg, &results, seed)?.to_json()?
                }
            };
            Ok(Output { text, truncated: false })
        }
        Command::FixedSample { data, alpha } => {
            let matrix = data.load(seed)?;
            let rep = fixed_sample_analysis(&matrix, *alpha, 0.1)?;
            let text = match format.unwrap_or(Format::Json) {
                Format::Csv => {
                    let mut s = String::from("gene,t,pvalue,z,bh,adaptz\n");
                    for (g, id) in matrix.gene_ids.iter().enumerate() {
                        s.push_str(&format!(
                            "{id},{},{},{},{},{}\n",
                            rep.tstats[g], rep.pvalues[g], rep.zscores[g], rep.bh.0[g] as u8, rep.adaptz.0[g] as u8
                        ));
                    }
                    s
                }
                Format::Json => {
                    let pick = |d: &[bool]| -> Vec<&str> {
                        matrix.gene_ids.iter().zip(d).filter(|(_, &x)| x).map(|(g, _)| g.as_str()).collect()
                    };
                    let results = json!({
                        "bh_count": rep.bh_count,
                        "adaptz_count": rep.adaptz_count,
                        "pi0_hat": rep.pi0_hat,
                        "bh_genes": pick(&rep.bh.0),
                        "adaptz_genes": pick(&rep.adaptz.0),
                    });
                    Report::new("fixed-sample", &json!({"alpha": alpha, "genes": matrix.genes()}), &results, seed)?
                        .to_json()?
                }
            };
            Ok(Output { text, truncated: false })
        }
        Command::SweepM { ex, m_list, rules } => {
            let cfg = ex.config(seed);
            let mut rows = Vec::new();
            let mut truncated = false;
            for &m in m_list {
                let spec = ExampleSpec::new(ex.example, m, ex.pi1)?;
                for &rule in rules {
                    let proc_ = procedure(rule, &spec, &cfg, None, None)?;
                    let s = run_experiment(&spec, &proc_, &cfg)?;
                    info!("m={m} {}: ASN {:.1}", proc_.label(), s.asn);
                    truncated |= s.truncated > 0;
                    rows.push(row(&spec, &proc_, s));
                }
            }
            let text = match format.unwrap_or(Format::Csv) {
                Format::Csv => csv_string(&rows)?,
                Format::Json => {
                    let results: Vec<_> = rows.iter().map(SummaryRow::to_json).collect();
                    Report::new("sweep-m", &json!({"experiment": cfg, "m_list": m_list}), &results, seed)?.to_json()?
                }
            };
            Ok(Output { text, truncated })
        }
        Command::Surrogate => {
            let matrix = generate_surrogate(&SurrogateSpec::prostate_format(seed))?;
            let mut buf = Vec::new();
            write_csv(&matrix, &mut buf)?;
            Ok(Output { text: String::from_utf8_lossy(&buf).into_owned(), truncated: false })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.trace { "trace" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let out = match run(&cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let written = match &cli.out {
        Some(path) => File::create(path).and_then(|mut f| f.write_all(out.text.as_bytes())),
        None => io::stdout().write_all(out.text.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    if out.truncated {
        eprintln!("warning: some replicates hit the stage cap without stopping");
        return ExitCode::from(5);
    }
    ExitCode::SUCCESS
}

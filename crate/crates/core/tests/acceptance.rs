//! Acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so that the PASS/FAIL lines
//! always reach the terminal. Exits non-zero when an enforced criterion fails.
//!
//! Criterion 8 is measured on the real prostate matrix when `PROSTATE_CSV`
//! points at it (and is then enforced). Without it, the check runs on the
//! built-in synthetic stand-in: the line is printed, FAIL included, but it
//! does not fail the run, because the stand-in is not the data the tolerances
//! were written for.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seqfdr::app::{
    fixed_sample_analysis, generate_surrogate, ingest_csv, preprocess, replay, ReplayConfig, SurrogateSpec,
};
use seqfdr::boundary::{
    accept_count_sorted, cutoffs_sorted, qhat, qhat_prime, qhat_prime_inf_level, qhat_sup_level, reject_count_sorted,
    stop_check,
};
use seqfdr::competitors::bh;
use seqfdr::decision::{fdp, fnp};
use seqfdr::lfdr::{data_driven_lfdr, oracle_lfdr};
use seqfdr::sim::{
    bh_matched_sample_size, calibrate_gap_sb, generate_truth, run_experiment, run_replicate, run_replicates, substream,
    ExampleId, ExampleSpec, ExperimentConfig, McSummary, Procedure, SimStreams,
};
use seqfdr::{error_counts, DecisionVector, Outcome, StageSource, TruthVector};

const SEED: u64 = 7;

type Check = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
    enforced: bool,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail, enforced: true }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x - target).abs() <= rel * target
}

fn e1(m: usize) -> ExampleSpec {
    ExampleSpec::new(ExampleId::E1, m, 0.2).unwrap()
}

fn cfg() -> ExperimentConfig {
    ExperimentConfig { seed: SEED, ..Default::default() }
}

fn fmt(s: &McSummary) -> String {
    format!("ASN {:.1}, fdr {:.2}%, fnr {:.2}%", s.asn, s.fdr_hat_pct, s.fnr_hat_pct)
}

fn c1() -> Verdict {
    let start = Instant::now();
    let o = run_experiment(&e1(100), &Procedure::Oracle, &cfg()).unwrap();
    let d = run_experiment(&e1(100), &Procedure::DataDriven, &cfg()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = within(o.asn, 109.5, 0.10)
        && (2.5..=6.5).contains(&o.fdr_hat_pct)
        && (8.0..=12.5).contains(&o.fnr_hat_pct)
        && within(d.asn, 107.3, 0.15)
        && secs < 120.0;
    verdict(pass, format!("oracle {} | data-driven {} | {secs:.1}s", fmt(&o), fmt(&d)))
}

fn c2() -> Verdict {
    let spec = e1(100);
    let ao = run_replicates(&spec, &Procedure::GapAo, &cfg()).unwrap();
    let ao_s = McSummary::from_outcomes(&ao).unwrap();
    let perfect = ao.iter().all(|o| o.fdp == 0.0 && o.fnp == 0.0 && o.outcome == Outcome::Stopped);
    let cutoff = calibrate_gap_sb(&spec, &cfg()).unwrap();
    let sb = run_experiment(&spec, &Procedure::GapSb { cutoff }, &cfg()).unwrap();
    let pass = within(ao_s.asn, 563.7, 0.15)
        && perfect
        && within(sb.asn, 227.9, 0.20)
        && sb.fdr_hat_pct <= 5.0 + 3.0 * sb.se_fdr_pct;
    verdict(
        pass,
        format!(
            "GAPao ASN {:.1}, all runs error-free: {perfect} | GAPsb cutoff {cutoff:.1}: {} (SE fdr {:.2})",
            ao_s.asn,
            fmt(&sb),
            sb.se_fdr_pct
        ),
    )
}

fn c3() -> Verdict {
    let ms = [100, 500, 1000];
    let mut dd = Vec::new();
    let mut or = Vec::new();
    let mut gap = Vec::new();
    for &m in &ms {
        dd.push(run_experiment(&e1(m), &Procedure::DataDriven, &cfg()).unwrap().asn);
        or.push(run_experiment(&e1(m), &Procedure::Oracle, &cfg()).unwrap().asn);
        gap.push(run_experiment(&e1(m), &Procedure::GapAo, &cfg()).unwrap().asn);
    }
    let ratio: Vec<f64> = dd.iter().zip(&gap).map(|(d, g)| d / g).collect();
    let spread = |v: &[f64]| {
        let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(l, h), &x| (l.min(x), h.max(x)));
        (hi - lo) / lo
    };
    let decreasing = ratio.windows(2).all(|w| w[1] < w[0]);
    let growth = gap[2] / gap[0] - 1.0;
    let pass = decreasing && spread(&dd) < 0.10 && spread(&or) < 0.10 && growth > 0.50;
    verdict(
        pass,
        format!(
            "ratio {:.3}/{:.3}/{:.3} | data-driven ASN {:.1}/{:.1}/{:.1} | oracle ASN {:.1}/{:.1}/{:.1} | GAPao {:.1}/{:.1}/{:.1} (+{:.0}%)",
            ratio[0], ratio[1], ratio[2], dd[0], dd[1], dd[2], or[0], or[1], or[2], gap[0], gap[1], gap[2], 100.0 * growth
        ),
    )
}

fn c4() -> Verdict {
    let spec = ExampleSpec::new(ExampleId::E6, 2500, 0.2).unwrap();
    let d = run_experiment(&spec, &Procedure::DataDriven, &cfg()).unwrap();
    let m = bh_matched_sample_size(&spec, d.fnr_hat_pct, &cfg()).unwrap();
    let pass = within(d.asn, 121.72, 0.15) && within(m.n_hat as f64, 151.0, 0.15) && m.summary.fdr_hat_pct <= 5.0;
    verdict(
        pass,
        format!(
            "data-driven {} | BH n = {} at fnr {:.2}%, fdr {:.2}%",
            fmt(&d),
            m.n_hat,
            m.summary.fnr_hat_pct,
            m.summary.fdr_hat_pct
        ),
    )
}

fn distinct_vector(rng: &mut ChaCha8Rng, max_m: usize) -> Vec<f64> {
    loop {
        let m = rng.random_range(1..=max_m);
        let v: Vec<f64> = (0..m)
            .map(|_| match rng.random_range(0..3) {
                0 => rng.random_range(1e-9..0.1),
                1 => rng.random_range(0.9..1.0),
                _ => rng.random_range(1e-9..1.0),
            })
            .collect();
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        if s.windows(2).all(|w| w[1] - w[0] > 1e-8) {
            return v;
        }
    }
}

fn c5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();
    let mut regimes = [0usize; 2];
    for _ in 0..10_000 {
        let v = distinct_vector(&mut rng, 50);
        let (alpha, beta) = (rng.random_range(0.01..0.5), rng.random_range(0.01..0.5));
        let mut s = v.clone();
        s.sort_by(f64::total_cmp);
        let (r, a) = (reject_count_sorted(&s, alpha), accept_count_sorted(&s, beta));
        let (lower, upper) = cutoffs_sorted(&s, r, a);
        let stops = stop_check(r, a, s.len());
        regimes[stops as usize] += 1;
        if stops != (lower > upper) {
            failures.push("count/cutoff equivalence");
        }
        if qhat_sup_level(&v, alpha) != lower || qhat_prime_inf_level(&v, beta) != upper {
            failures.push("level-set cutoffs");
        }
        for &t in &v {
            let right = qhat(&v, t) == qhat(&v, t + 1e-9) && qhat(&v, t - 1e-9) <= qhat(&v, t);
            let left = qhat_prime(&v, t) == qhat_prime(&v, t - 1e-9) && qhat_prime(&v, t + 1e-9) <= qhat_prime(&v, t);
            if !(right && left) {
                failures.push("one-sided continuity/monotonicity");
            }
        }
    }
    for _ in 0..1_000 {
        let m = rng.random_range(1..=100);
        let alpha = rng.random_range(0.01..0.3);
        let p: Vec<f64> =
            (0..m).map(|_| if rng.random_bool(0.3) { rng.random_range(0.0..0.01) } else { rng.random() }).collect();
        let mut best = None;
        for k in 1..=m {
            let t = k as f64 * alpha / m as f64;
            if p.iter().filter(|&&x| x <= t).count() >= k {
                best = Some(t);
            }
        }
        let brute: Vec<bool> = p.iter().map(|&x| best.is_some_and(|t| x <= t)).collect();
        if bh(&p, alpha).0 != brute {
            failures.push("BH");
        }
    }
    for _ in 0..1_000 {
        let m = rng.random_range(1..=20);
        let truth: Vec<bool> = (0..m).map(|_| rng.random()).collect();
        let dec: Vec<bool> = (0..m).map(|_| rng.random()).collect();
        let c = error_counts(&TruthVector(truth.clone()), &DecisionVector(dec.clone())).unwrap();
        let v = (0..m).filter(|&i| dec[i] && !truth[i]).count();
        let r = dec.iter().filter(|&&d| d).count();
        let w = (0..m).filter(|&i| !dec[i] && truth[i]).count();
        let fd = v as f64 / r.max(1) as f64;
        let fn_ = w as f64 / (m - r).max(1) as f64;
        if (c.v, c.r, c.w) != (v, r, w) || fdp(&c) != fd || fnp(&c) != fn_ {
            failures.push("error metrics");
        }
    }
    let c = cfg();
    for (id, p) in [
        (ExampleId::E1, Procedure::Oracle),
        (ExampleId::E1, Procedure::DataDriven),
        (ExampleId::E6, Procedure::DataDriven),
    ] {
        let spec = ExampleSpec::new(id, 100, 0.2).unwrap();
        let a = run_replicate(&spec, &p, &c, 3).unwrap();
        let b = run_replicate(&spec, &p, &c, 3).unwrap();
        if a.stopping_time != b.stopping_time
            || a.fdp.to_bits() != b.fdp.to_bits()
            || a.fnp.to_bits() != b.fnp.to_bits()
        {
            failures.push("seed determinism");
        }
    }
    failures.dedup();
    verdict(
        failures.is_empty(),
        format!(
            "10^4 boundary vectors ({} stopping, {} continuing), 10^3 BH, 10^3 error-metric, determinism; failures: {:?}",
            regimes[1], regimes[0], failures
        ),
    )
}

fn c6() -> Verdict {
    let mut lines = Vec::new();
    let mut pass = true;
    for id in [ExampleId::E1, ExampleId::E2, ExampleId::E3, ExampleId::E4] {
        for m in [100, 500] {
            let spec = ExampleSpec::new(id, m, 0.2).unwrap();
            let s = run_experiment(&spec, &Procedure::Oracle, &cfg()).unwrap();
            let ok = s.fdr_hat_pct <= 5.0 + 3.0 * s.se_fdr_pct
                && s.fnr_hat_pct <= 10.0 + 3.0 * s.se_fnr_pct
                && s.truncated == 0
                && s.exhausted == 0;
            pass &= ok;
            lines.push(format!(
                "{id}/{m}: fdr {:.2} fnr {:.2}{}",
                s.fdr_hat_pct,
                s.fnr_hat_pct,
                if ok { "" } else { " ✗" }
            ));
        }
    }
    verdict(pass, lines.join(", "))
}

/// Mean |t̂ − t| and π̂₀ for E1 streams at stage n.
fn consistency(pi1: f64, m: usize, n: usize) -> (f64, f64) {
    let spec = ExampleSpec::new(ExampleId::E1, m, pi1).unwrap();
    let truth = generate_truth(m, pi1, &mut substream(SEED, 1, 0)).unwrap();
    let mut src = SimStreams::new(spec, truth, substream(SEED, 2, 0), substream(SEED, 4, 0)).unwrap();
    while src.stage() < n {
        src.advance().unwrap();
    }
    let oracle = oracle_lfdr(src.states(), &spec.model().unwrap());
    let (est, pi0) = data_driven_lfdr(&src.zscores().unwrap(), 0.1, n).unwrap();
    let mad = oracle.values.iter().zip(&est.values).map(|(a, b)| (a - b).abs()).sum::<f64>() / m as f64;
    (mad, pi0)
}

fn c7() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for pi0 in [0.8, 0.2] {
        let (mad, pi0_hat) = consistency(1.0 - pi0, 10_000, 100);
        let ok = mad < 0.05 && (pi0_hat - pi0).abs() <= 0.05;
        pass &= ok;
        parts.push(format!("π₀ {pi0}: mean |t̂−t| {mad:.4}, π̂₀ {pi0_hat:.4}"));
    }
    verdict(pass, format!("m = 10^4, n = 100 | {}", parts.join(" | ")))
}

fn c8() -> Verdict {
    let (matrix, real) = match std::env::var_os("PROSTATE_CSV") {
        Some(path) => (ingest_csv(path.as_ref(), None).unwrap(), true),
        None => (generate_surrogate(&SurrogateSpec::prostate_format(0)).unwrap(), false),
    };
    let data = preprocess(&matrix).unwrap();
    let fixed = fixed_sample_analysis(&data, 0.05, 0.1).unwrap();
    let base = ReplayConfig { seed: SEED, ..Default::default() };
    let r10 = replay(&data, &base).unwrap();
    let r07 = replay(&data, &ReplayConfig { beta: 0.07, ..base }).unwrap();
    let bh_ok = fixed.bh_count.abs_diff(21) <= 3;
    let az_ok = fixed.adaptz_count.abs_diff(29) <= 5;
    let t10 = r10.result.stopping_time;
    let stop_ok =
        r10.result.outcome == Outcome::Stopped && (55..=102).contains(&t10) && (6..=40).contains(&r10.discoveries);
    let order_ok = r07.result.stopping_time > t10;
    let pass = bh_ok && az_ok && stop_ok && order_ok;
    let mut detail = format!(
        "{} data: BH {} [{}], AdaptZ {} [{}], replay β=.10 T={} ({:?}) with {} discoveries [{}], β=.07 T={} [{}]",
        if real { "prostate" } else { "synthetic stand-in" },
        fixed.bh_count,
        mark(bh_ok),
        fixed.adaptz_count,
        mark(az_ok),
        t10,
        r10.result.outcome,
        r10.discoveries,
        mark(stop_ok),
        r07.result.stopping_time,
        mark(order_ok),
    );
    if !real {
        detail.push_str(
            "; not enforced: set PROSTATE_CSV to the 6033x102 matrix to check the real data \
             (see README, \"Data application\")",
        );
    }
    Verdict { pass, detail, enforced: real }
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "out of range"
    }
}

fn main() {
    // `cargo test -- --list` and friends pass flags; only run on a plain invocation
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let checks: [Check; 8] = [
        ("C1 E1 m=100 oracle and data-driven", c1),
        ("C2 E1 m=100 GAP rules", c2),
        ("C3 scaling in m", c3),
        ("C4 E6 m=2500 and BH-matched n", c4),
        ("C5 property suite", c5),
        ("C6 oracle error control E1-E4", c6),
        ("C7 estimator consistency", c7),
        ("C8 data application", c8),
    ];
    let mut enforced_failures = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {name}: {} ({:.0}s)", v.detail, start.elapsed().as_secs_f64());
        if !v.pass && v.enforced {
            enforced_failures += 1;
        }
    }
    if enforced_failures > 0 {
        eprintln!("{enforced_failures} enforced criteria failed");
        std::process::exit(1);
    }
}

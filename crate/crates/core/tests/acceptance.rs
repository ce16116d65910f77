//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Experiment tables are also written under the cargo target tmp
//! directory for inspection.

mod common;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use marginmix::eval::compute_eer;
use marginmix::experiments::{ExperimentConfig, Lab, ResultTable};
use marginmix::loss::{margin_mixup_loss, ClassCenters};
use marginmix::mixup::{sample_lambda, snr_mix, BetaParams};
use marginmix::signal::{generate_pool, synth_utterance, PoolConfig, SynthConfig};
use rand::Rng;
use statrs::distribution::{Beta, ContinuousCDF};

const SEEDS: [u64; 3] = [1, 2, 3];

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("[{}] {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn gradient_check() -> (bool, String) {
    let start = Instant::now();
    let loss_err = (0..60)
        .map(|i| {
            let (c, cfg) = common::gradient_case(i);
            common::loss_gradient_error(&c, cfg)
        })
        .fold(0.0f64, f64::max);
    let model_err = (0..50).map(common::model_gradient_error).fold(0.0f64, f64::max);
    let t = start.elapsed();
    let pass = loss_err < 1e-5 && model_err < 1e-5 && t < Duration::from_secs(10);
    (pass, format!("max rel err loss {loss_err:.2e} (60 cases), model {model_err:.2e} (50 cases), {t:.2?}"))
}

fn unit_lambda_check() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let cfg = marginmix::loss::MarginConfig::new(0.2, 30.0).unwrap();
    for seed in 0..100 {
        let c = common::loss_case(1000 + seed, 16, 10);
        let centers = ClassCenters::new(c.w.clone()).unwrap();
        let ours = margin_mixup_loss(c.e.view(), &centers, c.a, c.b, 1.0, cfg).unwrap().value;
        let reference = common::aam_reference(c.e.as_slice().unwrap(), &common::columns(&c.w), c.a, 0.2, 30.0);
        worst = worst.max((ours - reference).abs());
    }
    (worst < 1e-12, format!("max |diff| {worst:.2e} over 100 cases"))
}

fn symmetry_check() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let (c, cfg) = common::gradient_case(i);
        let c = common::LossCase { lambda: common::rng(i).gen_range(0.0..=1.0), ..c };
        let centers = ClassCenters::new(c.w.clone()).unwrap();
        let l1 = margin_mixup_loss(c.e.view(), &centers, c.a, c.b, c.lambda, cfg).unwrap().value;
        let l2 = margin_mixup_loss(c.e.view(), &centers, c.b, c.a, 1.0 - c.lambda, cfg).unwrap().value;
        worst = worst.max((l1 - l2).abs());
    }
    (worst < 1e-12, format!("max |diff| {worst:.2e} over 200 cases"))
}

fn snr_check() -> (bool, String) {
    let cfg = SynthConfig::default();
    let pool = generate_pool(20, 0, &PoolConfig::default(), cfg.sample_rate, 11).unwrap();
    let mut r = common::rng(3);
    let mut worst: f64 = 0.0;
    for pair in 0..100u64 {
        let i = r.gen_range(0..20);
        let j = (i + r.gen_range(1..20)) % 20;
        let target = synth_utterance(&pool[i], r.gen_range(0.3..1.5), 2 * pair, &cfg).unwrap();
        let interferer = synth_utterance(&pool[j], r.gen_range(0.3..1.5), 2 * pair + 1, &cfg).unwrap();
        for snr in [0.0, 2.0, 5.0, 10.0] {
            let mix = snr_mix(&target, &interferer, snr).unwrap();
            worst = worst.max((common::measured_snr_db(&target, &mix) - snr).abs());
        }
    }
    (worst < 0.1, format!("max deviation {worst:.2e} dB over 100 pairs x 4 SNRs"))
}

fn beta_check() -> (bool, String) {
    let n = 100_000;
    let critical = common::ks_critical_001(n);
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [0.2, 1.0] {
        let params = BetaParams::symmetric(alpha).unwrap();
        let draws: Vec<f64> = (0..n).map(|i| sample_lambda(params, i as u64)).collect();
        let dist = Beta::new(alpha, alpha).unwrap();
        let d = common::ks_statistic(draws, |x| dist.cdf(x));
        pass &= d < critical;
        parts.push(format!("Beta({alpha},{alpha}) D={d:.5}"));
    }
    (pass, format!("{} (critical {critical:.5})", parts.join(", ")))
}

fn eer_oracle_check() -> (bool, String) {
    let mut worst: f64 = 0.0;
    let mut tied = 0;
    for i in 0..1000u64 {
        let mut r = common::rng(i);
        let nt = r.gen_range(1..60);
        let nn = r.gen_range(1..60);
        let shift = r.gen_range(-1.0..2.0);
        let coarse = i % 2 == 0;
        let mut draw = |mu: f64| {
            let x: f64 = mu + r.gen_range(-1.0..1.0) + r.gen_range(-1.0..1.0);
            if coarse {
                (x * 3.0).round() / 3.0
            } else {
                x
            }
        };
        let tar: Vec<f64> = (0..nt).map(|_| draw(shift)).collect();
        let non: Vec<f64> = (0..nn).map(|_| draw(0.0)).collect();
        if tar.iter().any(|t| non.contains(t)) {
            tied += 1;
        }
        let ours = compute_eer(&tar, &non).unwrap().eer;
        worst = worst.max((ours - common::brute_force_eer(&tar, &non)).abs());
    }
    (worst < 1e-9, format!("max |diff| {worst:.2e} over 1000 sets ({tied} with cross-class ties)"))
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn rel_gain(base: f64, new: f64) -> f64 {
    if base > 0.0 {
        (base - new) / base
    } else {
        0.0
    }
}

/// Count of adjacent increases of EER as SNR rises.
fn inversions(eers: &[f64]) -> usize {
    eers.windows(2).filter(|w| w[1] > w[0]).count()
}

struct SeedTables {
    headline: ResultTable,
    ablation: ResultTable,
    beta: ResultTable,
    snr: ResultTable,
}

impl SeedTables {
    fn csvs(&self) -> [(&'static str, String); 4] {
        [
            ("headline.csv", self.headline.to_csv().unwrap()),
            ("ablation.csv", self.ablation.to_csv().unwrap()),
            ("beta_sweep.csv", self.beta.to_csv().unwrap()),
            ("snr_sweep.csv", self.snr.to_csv().unwrap()),
        ]
    }
}

fn run_rest(lab: &mut Lab, headline: ResultTable) -> marginmix::Result<SeedTables> {
    let cfg = lab.config().clone();
    Ok(SeedTables {
        headline,
        ablation: lab.ablation()?,
        beta: lab.beta_sweep(&cfg.beta_alphas)?,
        snr: lab.snr_sweep(&cfg.snr_grid)?,
    })
}

fn run_all(cfg: &ExperimentConfig, seed: u64) -> marginmix::Result<SeedTables> {
    let mut lab = Lab::new(cfg, seed)?;
    let h = lab.headline()?;
    run_rest(&mut lab, h)
}

fn out_dir(seed: u64) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(format!("seed{seed}"))
}

fn main() -> ExitCode {
    let mut report = Report { failures: 0 };
    let checks: [(u32, &str, fn() -> (bool, String)); 6] = [
        (1, "gradient correctness", gradient_check),
        (2, "unit-lambda reduction", unit_lambda_check),
        (3, "loss symmetry", symmetry_check),
        (4, "SNR fidelity", snr_check),
        (5, "beta sampling", beta_check),
        (6, "EER oracle", eer_oracle_check),
    ];
    for (id, name, check) in checks {
        let (pass, detail) = check();
        report.line(id, name, pass, detail);
    }

    let cfg = ExperimentConfig::default();
    let overlapped = format!("{}-{}dB", cfg.overlap_snr.lo, cfg.overlap_snr.hi);

    // Headline on all seeds first, timed on its own.
    let start = Instant::now();
    let mut labs = Vec::new();
    for &seed in &SEEDS {
        let mut lab = Lab::new(&cfg, seed).expect("lab");
        let h = lab.headline().expect("headline");
        labs.push((lab, h));
    }
    let headline_time = start.elapsed();

    let mut tables = Vec::new();
    for (mut lab, h) in labs {
        let seed = lab.seed();
        let t = run_rest(&mut lab, h).expect("experiments");
        let dir = out_dir(seed);
        fs::create_dir_all(&dir).expect("output dir");
        for (name, csv) in t.csvs() {
            fs::write(dir.join(name), csv).expect("write table");
        }
        tables.push((seed, t));
    }

    // 7: headline trend.
    let mut pass = headline_time <= Duration::from_secs(600);
    let mut parts = Vec::new();
    for (seed, t) in &tables {
        let g = |s: &str, set: &str| t.headline.get(s, set).unwrap();
        let over = rel_gain(g("baseline", "overlapped"), g("margin-mixup", "overlapped"));
        let (cb, cm) = (g("baseline", "clean"), g("margin-mixup", "clean"));
        let clean_ok = if cb > 0.0 { (cm - cb) / cb <= 0.30 } else { cm <= 0.0 };
        pass &= over >= 0.20 && clean_ok;
        parts.push(format!(
            "seed {seed}: overlapped {}->{} ({:+.1}%), clean {}->{}",
            pct(g("baseline", "overlapped")),
            pct(g("margin-mixup", "overlapped")),
            -100.0 * over,
            pct(cb),
            pct(cm)
        ));
    }
    report.line(7, "headline trend", pass, format!("{}; {headline_time:.1?}", parts.join("; ")));

    // 8: ablation ordering.
    let mut ok_seeds = 0;
    let mut parts = Vec::new();
    for (seed, t) in &tables {
        let g = |s: &str| t.ablation.get(s, "overlapped").unwrap();
        let (full, a, b, c, base) = (g("full"), g("A"), g("B"), g("C"), g("baseline"));
        let ok = full <= a && a < b && full < c && c < base;
        ok_seeds += usize::from(ok);
        parts.push(format!(
            "seed {seed}: full {} A {} B {} C {} base {}",
            pct(full),
            pct(a),
            pct(b),
            pct(c),
            pct(base)
        ));
    }
    report.line(8, "ablation ordering", ok_seeds >= 2, format!("{ok_seeds}/3 seeds; {}", parts.join("; ")));

    // 9: beta sweep.
    let mut ok_seeds = 0;
    let mut parts = Vec::new();
    for (seed, t) in &tables {
        let g = |a: &str, set: &str| t.beta.get(&format!("alpha={a}"), set).unwrap();
        let (c01, c1) = (g("0.1", "clean"), g("1", "clean"));
        let (o01, o1) = (g("0.1", "0dB"), g("1", "0dB"));
        let ok = c1 > c01 && o1 < o01;
        ok_seeds += usize::from(ok);
        parts.push(format!(
            "seed {seed}: clean {}->{} 0dB {}->{} ({overlapped} {}->{})",
            pct(c01),
            pct(c1),
            pct(o01),
            pct(o1),
            pct(g("0.1", &overlapped)),
            pct(g("1", &overlapped))
        ));
    }
    report.line(9, "beta-sweep trend", ok_seeds >= 2, format!("{ok_seeds}/3 seeds; {}", parts.join("; ")));

    // 10: SNR sweep.
    let mut monotone = true;
    let mut peak_seeds = 0;
    let mut parts = Vec::new();
    for (seed, t) in &tables {
        let curve = |s: &str| -> Vec<f64> {
            cfg.snr_grid.iter().map(|snr| t.snr.get(s, &format!("snr={snr}")).unwrap()).collect()
        };
        let (b, m) = (curve("baseline"), curve("margin-mixup"));
        monotone &= inversions(&b) <= 1 && inversions(&m) <= 1;
        let gains: Vec<f64> = b.iter().zip(&m).map(|(&x, &y)| rel_gain(x, y)).collect();
        let peak = gains.iter().skip(1).all(|g| gains[0] > *g);
        peak_seeds += usize::from(peak);
        let fmt = |v: &[f64]| v.iter().map(|x| pct(*x)).collect::<Vec<_>>().join(" ");
        parts.push(format!(
            "seed {seed}: base [{}] mm [{}] gain@0dB {:.1}%",
            fmt(&b),
            fmt(&m),
            100.0 * gains[0]
        ));
    }
    report.line(
        10,
        "SNR sweep",
        monotone && peak_seeds >= 2,
        format!("monotone {monotone}, 0 dB peak on {peak_seeds}/3 seeds; {}", parts.join("; ")),
    );

    // 11: determinism.
    let (seed, first) = &tables[0];
    let again = run_all(&cfg, *seed).expect("rerun");
    let same = first.csvs() == again.csvs();
    report.line(11, "determinism", same, format!("seed {seed}: four tables re-run from scratch, identical={same}"));

    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", report.failures);
        ExitCode::FAILURE
    }
}

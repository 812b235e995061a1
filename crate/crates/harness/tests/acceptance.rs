//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. The training criteria run at the default budget and take a
//! while on one core; `LABELAUG_WORKERS` sets the number of parallel runs.
//! `LABELAUG_CRITERIA=1,2,5` runs a subset and prints SKIP for the rest.

use std::process::ExitCode;
use std::time::Instant;

use labelaug_core::Method;
use labelaug_harness::config::{Dataset, DescentStart};
use labelaug_harness::descent::run_descent;
use labelaug_harness::sweep::{cmd_sweep, median, SweepReport, SweepSpec};
use labelaug_harness::verify::{gradient_check, run_verify, Status, VerifyOptions};
use labelaug_harness::RunConfig;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    failed: usize,
}

impl Outcome {
    fn line(&mut self, id: &str, ok: bool, what: &str, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{:<4} {id:<4} {what}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn workers() -> usize {
    std::env::var("LABELAUG_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn criterion_1(out: &mut Outcome) {
    let report = run_verify(&VerifyOptions {
        gradient_graphs: 0,
        ..Default::default()
    });
    let group = |prefixes: &[&str]| {
        let cs: Vec<_> = report
            .checks
            .iter()
            .filter(|c| prefixes.iter().any(|p| c.name.starts_with(p)))
            .collect();
        let ok = !cs.is_empty() && cs.iter().all(|c| c.status == Status::Pass);
        let worst = cs.iter().map(|c| c.max_error).fold(0.0, f64::max);
        let n: usize = cs.iter().map(|c| c.instances).sum();
        (ok, format!("{} checks, {n} instances, worst {worst:.3e}", cs.len()))
    };
    let (ok, d) = group(&["dla_closed_form"]);
    out.line("1a", ok, "closed-form optimum vs numeric maximisation (tol 1e-6)", d);
    let (ok, d) = group(&["la_reverse_kl_identity"]);
    out.line(
        "1b",
        ok,
        "generator value at optimum equals minus reverse KL (tol 1e-9)",
        d,
    );
    let (ok, d) = group(&["ssgan_classifier_plugin", "ms_classifier_plugin"]);
    out.line("1c", ok, "SSGAN and SSGAN-MS plug-in identities (tol 1e-9)", d);
    let (ok, d) = group(&["transform_expectation_forms"]);
    out.line("1d", ok, "three expectation forms agree (tol 1e-12)", d);
    let (gap_ok, gap) = group(&["leak_family_gap"]);
    let (tv_ok, tv) = group(&["leak_family_nonidentifiable"]);
    out.line(
        "1e",
        gap_ok && tv_ok,
        "mixture family gap (tol 1e-12) and TV > 0.01",
        format!("gap: {gap}; largest TV: {tv}"),
    );
}

fn criterion_2(out: &mut Outcome) {
    let c = gradient_check(200, 4, 0);
    out.line(
        "2",
        c.status == Status::Pass && c.instances == 200,
        "backward vs central differences on 200 graphs (rel 1e-5)",
        format!("worst violation ratio {:.3e}", c.max_error),
    );
}

fn sweep(dataset: Dataset, methods: &[Method], dir: &std::path::Path) -> SweepReport {
    let base = RunConfig {
        dataset,
        out_dir: dir.to_path_buf(),
        ..Default::default()
    };
    let spec = SweepSpec {
        key: Some("method".into()),
        values: methods.iter().map(|m| m.to_string()).collect(),
        seeds: SEEDS.to_vec(),
        workers: workers(),
    };
    cmd_sweep(&base, &spec).expect("sweep setup is valid")
}

fn per_seed(
    r: &SweepReport,
    m: Method,
    f: fn(&labelaug_harness::sweep::CellMetrics) -> Option<f64>,
) -> Vec<Option<f64>> {
    let name = m.to_string();
    SEEDS
        .iter()
        .map(|&s| {
            r.cells
                .iter()
                .find(|c| c.value == name && c.seed == s)
                .and_then(|c| c.outcome.as_ref().ok())
                .and_then(f)
        })
        .collect()
}

fn fmt(xs: &[Option<f64>]) -> String {
    let v: Vec<String> = xs
        .iter()
        .map(|x| x.map_or("failed".into(), |x| format!("{x:.4}")))
        .collect();
    format!("[{}]", v.join(", "))
}

fn med(xs: &[Option<f64>]) -> Option<f64> {
    // A failed run makes the median undefined.
    let v: Option<Vec<f64>> = xs.iter().copied().collect();
    v.map(|v| median(&v))
}

fn criterion_3(out: &mut Outcome, dir: &std::path::Path) {
    let r = sweep(
        Dataset::Gauss1dShift,
        &[Method::SsganLa, Method::SsganMs, Method::Ssgan],
        dir,
    );
    let mmd = |m| per_seed(&r, m, |c| c.final_mmd);
    let (la, ms, ss) = (mmd(Method::SsganLa), mmd(Method::SsganMs), mmd(Method::Ssgan));
    let la_med = med(&la);
    out.line(
        "3a",
        la_med.is_some_and(|v| v <= 0.05),
        "median MMD(SSGAN-LA) <= 0.05",
        format!("median {:?}, per seed {}", la_med, fmt(&la)),
    );
    let ss_med = med(&ss);
    out.line(
        "3b",
        ss_med.is_some_and(|v| v >= 0.2),
        "median MMD(SSGAN) >= 0.2",
        format!("median {:?}, per seed {}", ss_med, fmt(&ss)),
    );
    let ordered = (0..SEEDS.len())
        .filter(|&i| matches!((la[i], ms[i], ss[i]), (Some(a), Some(b), Some(c)) if a < b && b < c))
        .count();
    out.line(
        "3c",
        ordered >= 3,
        "MMD(SSGAN-LA) < MMD(SSGAN-MS) < MMD(SSGAN) on >= 3 of 5 seeds",
        format!("{ordered}/5; SSGAN-MS per seed {}", fmt(&ms)),
    );
}

fn criterion_4(out: &mut Outcome, dir: &std::path::Path) {
    let r = sweep(
        Dataset::Modes2dRot,
        &[Method::Dagan, Method::DaganPlus, Method::SsganLa],
        dir,
    );
    let leak = |m| per_seed(&r, m, |c| c.leaked_mass);
    let (dagan, plus, la) = (leak(Method::Dagan), leak(Method::DaganPlus), leak(Method::SsganLa));
    let count = |xs: &[Option<f64>], p: fn(f64) -> bool| xs.iter().filter(|x| x.is_some_and(p)).count();
    let n = count(&dagan, |v| v >= 0.3);
    out.line(
        "4a",
        n >= 3,
        "DAGAN leaked_mass >= 0.3 on >= 3 of 5 seeds",
        format!("{n}/5, per seed {}", fmt(&dagan)),
    );
    let n = count(&la, |v| v <= 0.05);
    out.line(
        "4b",
        n >= 4,
        "SSGAN-LA leaked_mass <= 0.05 on >= 4 of 5 seeds",
        format!("{n}/5, per seed {}", fmt(&la)),
    );
    let (md, mp) = (med(&dagan), med(&plus));
    out.line(
        "4c",
        matches!((mp, md), (Some(p), Some(d)) if p < d),
        "median leaked_mass(DAGAN+) < median leaked_mass(DAGAN)",
        format!("{mp:?} vs {md:?}, DAGAN+ per seed {}", fmt(&plus)),
    );
}

fn finite(method: Method) -> RunConfig {
    let mut cfg = RunConfig::for_method(method);
    cfg.dataset = Dataset::Finite;
    cfg
}

fn criterion_5(out: &mut Outcome) {
    let tvs: Vec<Option<f64>> = (0..10)
        .map(|seed| {
            let mut cfg = finite(Method::SsganLa);
            cfg.seed = seed;
            run_descent(&cfg).ok().map(|t| t.last().tv)
        })
        .collect();
    let worst = tvs.iter().map(|t| t.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    out.line(
        "5a",
        worst <= 1e-3,
        "SSGAN-LA descent reaches TV <= 1e-3 from 10 random inits",
        format!("worst {worst:.3e}"),
    );

    let mut cfg = finite(Method::Dagan);
    cfg.descent_init = DescentStart::Rotated;
    let (ok, d) = match run_descent(&cfg) {
        Ok(t) => (
            t.first().grad_norm <= 1e-9 && t.min_tv() >= 0.1,
            format!("step-0 grad norm {:.3e}, min TV {:.4}", t.first().grad_norm, t.min_tv()),
        ),
        Err(e) => (false, e.to_string()),
    };
    out.line(
        "5b",
        ok,
        "DAGAN at a rotated copy: grad norm <= 1e-9, TV never below 0.1",
        d,
    );

    cfg.set("method", "ssgan_la").expect("known method");
    let (ok, d) = match run_descent(&cfg) {
        Ok(t) => (t.last().tv <= 1e-3, format!("terminal TV {:.3e}", t.last().tv)),
        Err(e) => (false, e.to_string()),
    };
    out.line("5c", ok, "SSGAN-LA escapes the rotated copy to TV <= 1e-3", d);
}

fn selected(id: &str) -> bool {
    match std::env::var("LABELAUG_CRITERIA") {
        Ok(list) => list.split(',').any(|s| s.trim() == id),
        Err(_) => true,
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut out = Outcome { failed: 0 };
    let mut run = |id: &str, f: &dyn Fn(&mut Outcome)| {
        if selected(id) {
            f(&mut out);
        } else {
            println!("SKIP {id:<4} not selected");
        }
    };
    run("1", &criterion_1);
    run("2", &criterion_2);
    run("5", &criterion_5);
    run("3", &|o| criterion_3(o, &tmp.path().join("gauss1d")));
    run("4", &|o| criterion_4(o, &tmp.path().join("modes2d")));
    println!(
        "N/A  6    image-scale FID/IS and linear-probe tables: not reproducible at desk scale; covered by 1-5 instead"
    );
    println!(
        "acceptance: {} failed, {:.0}s",
        out.failed,
        start.elapsed().as_secs_f64()
    );
    if out.failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! Acceptance criteria, one PASS/FAIL line each.
//!
//! `cargo test --test acceptance` runs 1-9. Pass `--ignored` (or set
//! `PERIFRACT_LONG=1`) to add the full-size run of criterion 10.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use perifract::config::RunConfig;
use perifract::harness::{desk_scale_preset, run_convergence_study, ConvergenceReport, DESK_EPSILONS};
use perifract::material::MaterialModel;
use perifract::run::{run, run_dir, RunSummary};
use perifract::verify::{
    divergence_suite, energy_suite, local_limit_family, local_limit_suite, rigid_suite, toughness_suite,
    DIVERGENCE_PAIRS, ENERGY_STEPS,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Desk {
    report: ConvergenceReport,
    summaries: Vec<RunSummary>,
    tips: Vec<Vec<f64>>,
}

fn read_summary(dir: &Path) -> RunSummary {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn read_ell(dir: &Path) -> Vec<f64> {
    std::fs::read_to_string(dir.join("crack_tip.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

fn nondecreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

fn desk_study(root: &Path) -> Desk {
    let report = run_convergence_study(&desk_scale_preset(), &DESK_EPSILONS, root, false).unwrap();
    let dirs: Vec<_> = DESK_EPSILONS
        .iter()
        .enumerate()
        .map(|(k, &e)| run_dir(root, k, e))
        .collect();
    Desk {
        report,
        summaries: dirs.iter().map(|d| read_summary(d)).collect(),
        tips: dirs.iter().map(|d| read_ell(d)).collect(),
    }
}

fn c1_divergence(m: &MaterialModel) -> Outcome {
    let t = Instant::now();
    let s = divergence_suite(m, 20240601, DIVERGENCE_PAIRS).unwrap();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        s.pairs == 50 && s.max_relative_residual <= 1e-10 && secs < 10.0,
        format!(
            "{} pairs, residual {:.2e} (<= 1e-10), {secs:.2} s (< 10 s)",
            s.pairs, s.max_relative_residual
        ),
    )
}

fn c2_rigid(m: &MaterialModel) -> Outcome {
    let s = rigid_suite(m).unwrap();
    let rel = s.max_force / s.force_scale;
    outcome(
        s.nodes == 10_000 && rel <= 1e-12,
        format!("{} nodes, |f|inf / scale = {rel:.2e} (<= 1e-12)", s.nodes),
    )
}

fn c3_toughness(m: &MaterialModel, gauss: usize) -> Outcome {
    let s = toughness_suite(m, &[2.5e-3, 1.25e-3, 0.625e-3], gauss).unwrap();
    outcome(
        s.max_spread <= 1e-6 && s.max_closed_form_error <= 1e-5,
        format!(
            "Gc {:.6} J/m2, spread {:.2e} (<= 1e-6), vs closed form {:.2e} (<= 1e-5)",
            s.closed_form, s.max_spread, s.max_closed_form_error
        ),
    )
}

fn c4_local_limit(m: &MaterialModel, n_sub: u32) -> Outcome {
    let t = Instant::now();
    let s = local_limit_suite(m, &local_limit_family(8e-3, 2, 5), n_sub);
    let secs = t.elapsed().as_secs_f64();
    let errors: Vec<String> = s.rows.iter().map(|r| format!("{:.2e}", r.error)).collect();
    let decreasing = s.rows.windows(2).all(|w| w[1].error < w[0].error);
    outcome(
        decreasing && s.min_order >= 0.9 && secs < 60.0,
        format!(
            "errors [{}], min order {:.3} (>= 0.9), {secs:.1} s (< 60 s)",
            errors.join(", "),
            s.min_order
        ),
    )
}

fn c5_energy(m: &MaterialModel) -> Outcome {
    let s = energy_suite(m, ENERGY_STEPS).unwrap();
    outcome(
        s.steps == 2000 && s.failed_bonds == 0 && s.drift <= 1e-3,
        format!(
            "{} steps, drift {:.2e} (<= 1e-3), {} failed bonds",
            s.steps, s.drift, s.failed_bonds
        ),
    )
}

fn c6_power(desk: &Desk) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for s in &desk.summaries {
        let pre = s.precrack_power_residual_ratio;
        let adv = s.steady_advective_ratio;
        pass &= pre.is_some_and(|r| r <= 0.05);
        pass &= adv.is_some_and(|r| (r - 1.0).abs() <= 0.25);
        parts.push(format!(
            "eps {:.2} mm: precrack {} (<= 0.05), advective/(-Gc V) {} (1 +- 0.25)",
            s.epsilon * 1e3,
            fmt_opt(pre),
            fmt_opt(adv)
        ));
    }
    outcome(pass, parts.join("; "))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |v| format!("{v:.3e}"))
}

fn qualitative(s: &RunSummary, ell: &[f64]) -> (bool, String) {
    let grew = s.final_ell > s.ell0;
    let pass = s.symmetry_max_dev <= 1e-8 && nondecreasing(ell) && grew && s.opening_fraction >= 0.95;
    (
        pass,
        format!(
            "eps {:.2} mm: symmetry {:.1e} (<= 1e-8), ell {:.1} -> {:.1} mm nondecreasing {}, opening {:.3} of {} (>= 0.95)",
            s.epsilon * 1e3,
            s.symmetry_max_dev,
            s.ell0 * 1e3,
            s.final_ell * 1e3,
            nondecreasing(ell),
            s.opening_fraction,
            s.opening_nodes
        ),
    )
}

fn c7_qualitative(desk: &Desk) -> Outcome {
    let r = &desk.report;
    let mut pass =
        r.failures.is_empty() && r.tip_ordering_pass && r.sz_nesting_pass && r.tip_times > 0 && r.field_times > 0;
    let mut parts = vec![format!(
        "tip ordering {} over {} times, SZ nesting {} over {} fields",
        r.tip_ordering_pass, r.tip_times, r.sz_nesting_pass, r.field_times
    )];
    for (s, ell) in desk.summaries.iter().zip(&desk.tips) {
        let (p, d) = qualitative(s, ell);
        pass &= p;
        parts.push(d);
    }
    outcome(pass, parts.join("; "))
}

fn c8_kinetic(desk: &Desk) -> Outcome {
    let fine = desk.summaries.last().unwrap();
    let k = fine.kinetic_ratio_median;
    outcome(
        k.is_some_and(|k| (0.6..=1.4).contains(&k)),
        format!(
            "eps {:.2} mm: median J/(Gc V) {} in [0.6, 1.4]",
            fine.epsilon * 1e3,
            fmt_opt(k)
        ),
    )
}

/// Every output file keyed by relative path. The echoed config records the
/// thread count, so that one line is dropped.
fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let name = p.strip_prefix(dir).unwrap().display().to_string();
            let mut bytes = std::fs::read(&p).unwrap();
            if name == "config.ini" {
                let text = String::from_utf8(bytes).unwrap();
                bytes = text
                    .lines()
                    .filter(|l| !l.starts_with("threads"))
                    .collect::<Vec<_>>()
                    .join("\n")
                    .into_bytes();
            }
            out.push((name, bytes));
        }
    }
    out.sort();
    out
}

fn c9_determinism(root: &Path) -> Outcome {
    let mut cfg = desk_scale_preset();
    cfg.epsilon = DESK_EPSILONS[0];
    cfg.t_end = 80e-6;
    cfg.write_vtk = true;
    cfg.snapshot_every = 500;
    let ini = root.join("determinism.ini");
    std::fs::write(&ini, cfg.echo()).unwrap();
    let max = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut counts = vec![1, 2, max];
    counts.sort();
    counts.dedup();
    let mut trees = Vec::new();
    for &n in &counts {
        let out = root.join(format!("threads_{n}"));
        let status = Command::new(env!("CARGO_BIN_EXE_perifract"))
            .args(["run", "-c"])
            .arg(&ini)
            .arg("-o")
            .arg(&out)
            .args(["--threads", &n.to_string()])
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, format!("run with {n} threads failed"));
        }
        trees.push(tree(&out));
    }
    let same = trees.windows(2).all(|w| w[0] == w[1]);
    let failed = read_summary(&root.join("threads_1")).failed_bonds;
    outcome(
        same && failed > 0,
        format!(
            "threads {counts:?}: {} files identical {same}, {failed} failed bonds",
            trees[0].len()
        ),
    )
}

fn c10_full(root: &Path) -> Outcome {
    let mut cfg = RunConfig::default();
    // peak traction f0 * h(t_ramp) with the literal h(t) = t in seconds
    cfg.f0 = 1e10 * cfg.t_ramp;
    cfg.write_vtk = false;
    let out = root.join("full");
    let s = run(&cfg, &out).unwrap();
    let (pass, detail) = qualitative(&s, &read_ell(&out));
    outcome(
        pass && s.steps == 28_000,
        format!("{} nodes x {} steps; {detail}", s.nodes, s.steps),
    )
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    if args.iter().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let long = args.iter().any(|a| a == "--ignored" || a == "--include-ignored")
        || std::env::var("PERIFRACT_LONG").is_ok_and(|v| v == "1");

    let cfg = RunConfig::default();
    let model = cfg.material().unwrap();
    let root = tempfile::tempdir().unwrap();
    let desk = desk_study(&root.path().join("desk"));

    let mut results = vec![
        ("1 divergence identity", c1_divergence(&model)),
        ("2 rigid motion", c2_rigid(&model)),
        ("3 toughness", c3_toughness(&model, cfg.gauss_order)),
        ("4 local limit", c4_local_limit(&model, cfg.n_sub)),
        ("5 energy balance", c5_energy(&model)),
        ("6 power balance", c6_power(&desk)),
        ("7 qualitative desk", c7_qualitative(&desk)),
        ("8 kinetic relation", c8_kinetic(&desk)),
        ("9 determinism", c9_determinism(root.path())),
    ];
    if long {
        results.push(("10 full configuration", c10_full(root.path())));
    } else {
        println!("SKIP 10 full configuration: opt-in, pass --ignored or PERIFRACT_LONG=1");
    }

    let mut ok = true;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        ok &= o.pass;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

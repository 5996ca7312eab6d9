//! Multi-horizon runs of one physical problem and their comparison.
//!
//! The comparison step reads only the files each run wrote, so it can be
//! repeated on stored output.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::output::{create_dir, read_csv, write_json, CsvWriter};
use crate::run::{run, run_dir, RunSummary};

/// Horizons of the desk-scale study, coarse to fine.
pub const DESK_EPSILONS: [f64; 2] = [2.5e-3, 1.25e-3];

/// Reduced version of the full experiment that fractures within 140 us.
///
/// The load amplitude is tuned so the crack grows steadily by about 20 mm
/// at both desk horizons without branching.
pub fn desk_scale_preset() -> RunConfig {
    RunConfig {
        a: 0.05,
        b: 0.075,
        ell0: 0.0125,
        epsilon: DESK_EPSILONS[0],
        f0: 4e6,
        t_ramp: 40e-6,
        dt: 0.04e-6,
        t_end: 140e-6,
        output_every: 5,
        smoothing_window: 25,
        write_vtk: false,
        snapshot_every: 250,
        dir: PathBuf::from("desk"),
        ..RunConfig::default()
    }
}

/// One run of a study: where it lives and whether it finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubRun {
    pub epsilon: f64,
    pub dir: PathBuf,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Difference {
    pub epsilon_a: f64,
    pub epsilon_b: f64,
    /// `(t_us, sqrt(sum |u_a - u_b|^2 h_c^2))` on the coarsest lattice.
    pub series: Vec<(f64, f64)>,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub epsilons: Vec<f64>,
    pub tip_ordering_pass: bool,
    pub sz_nesting_pass: bool,
    pub symmetry_max_dev: f64,
    pub l2_differences: Vec<L2Difference>,
    /// From the finest horizon that finished.
    pub kinetic_ratio_median: Option<f64>,
    /// Matched output times checked for tip ordering.
    pub tip_times: usize,
    /// Matched field dumps checked for nesting.
    pub field_times: usize,
    pub failures: Vec<SubRun>,
}

/// Runs `base` once per horizon under `out`, then compares the results.
/// Sub-runs go one after another unless `parallel` is set.
pub fn run_convergence_study(
    base: &RunConfig,
    epsilons: &[f64],
    out: &Path,
    parallel: bool,
) -> Result<ConvergenceReport> {
    if epsilons.is_empty() {
        return Err(Error::config("epsilons", "need at least one horizon"));
    }
    if epsilons.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::config("epsilons", "horizons must be strictly decreasing"));
    }
    create_dir(out)?;
    let jobs: Vec<(RunConfig, PathBuf)> = epsilons
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let mut cfg = base.clone();
            cfg.epsilon = eps;
            let dir = run_dir(out, k, eps);
            cfg.dir = dir.clone();
            (cfg, dir)
        })
        .collect();
    let one = |cfg: &RunConfig, dir: &Path| -> SubRun {
        info!("horizon {:e} m -> {}", cfg.epsilon, dir.display());
        let error = run(cfg, dir).err().map(|e| {
            warn!("run at horizon {:e} failed: {e}", cfg.epsilon);
            e.to_string()
        });
        SubRun {
            epsilon: cfg.epsilon,
            dir: dir.to_path_buf(),
            error,
        }
    };
    let runs: Vec<SubRun> = if parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs.iter().map(|(c, d)| s.spawn(move || one(c, d))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sub-run panicked"))
                .collect()
        })
    } else {
        jobs.iter().map(|(c, d)| one(c, d)).collect()
    };
    compare_runs(&runs, out)
}

/// Field dump of one run at one step.
struct Field {
    cells: BTreeMap<(i64, i64), ([f64; 2], bool)>,
}

fn read_field_dump(path: &Path) -> Result<Field> {
    let t = read_csv(path)?;
    let (i, j) = (t.column("i")?, t.column("j")?);
    let (u1, u2, soft) = (t.column("u1_m")?, t.column("u2_m")?, t.column("soft")?);
    let cells = (0..t.rows.len())
        .map(|k| ((i[k] as i64, j[k] as i64), ([u1[k], u2[k]], soft[k] != 0.0)))
        .collect();
    Ok(Field { cells })
}

/// Averages `r x r` blocks of fine cells onto the coarse lattice. Cell
/// `(I, J)` covers fine cells `r I .. r I + r` by `r J .. r J + r`; a coarse
/// cell is soft when any of its fine cells is.
fn restrict(fine: &Field, r: i64) -> BTreeMap<(i64, i64), ([f64; 2], bool)> {
    let mut acc: BTreeMap<(i64, i64), ([f64; 2], usize, bool)> = BTreeMap::new();
    for (&(i, j), &(u, soft)) in &fine.cells {
        let e = acc
            .entry((i.div_euclid(r), j.div_euclid(r)))
            .or_insert(([0.0; 2], 0, false));
        e.0[0] += u[0];
        e.0[1] += u[1];
        e.1 += 1;
        e.2 |= soft;
    }
    acc.into_iter()
        .map(|(k, (s, n, soft))| (k, ([s[0] / n as f64, s[1] / n as f64], soft)))
        .collect()
}

/// Coarse cell index to restricted displacement and soft flag.
type CoarseField = BTreeMap<(i64, i64), ([f64; 2], bool)>;

struct Loaded {
    epsilon: f64,
    summary: RunSummary,
    /// `step -> ell` at output frames.
    tips: BTreeMap<u64, f64>,
    dir: PathBuf,
}

fn load(run: &SubRun) -> Result<Loaded> {
    let text = std::fs::read_to_string(run.dir.join("summary.json"))
        .map_err(|e| Error::io(run.dir.join("summary.json"), e))?;
    let summary: RunSummary = serde_json::from_str(&text)?;
    let t = read_csv(&run.dir.join("crack_tip.csv"))?;
    let tips = t
        .column("t_us")?
        .into_iter()
        .zip(t.column("ell_m")?)
        .map(|(t_us, ell)| ((t_us * 1e-6 / summary.dt).round() as u64, ell))
        .collect();
    Ok(Loaded {
        epsilon: run.epsilon,
        summary,
        tips,
        dir: run.dir.clone(),
    })
}

/// Integer multiples `k * step` of `dt` common to both runs, as times in s.
/// Only exact coincidences count: `k dt_a == m dt_b` within rounding.
fn matched(a: &Loaded, sa: &BTreeSet<u64>, b: &Loaded, sb: &BTreeSet<u64>) -> Vec<(u64, u64)> {
    sa.iter()
        .filter_map(|&na| {
            let t = na as f64 * a.summary.dt;
            let nb = (t / b.summary.dt).round() as u64;
            let tb = nb as f64 * b.summary.dt;
            (sb.contains(&nb) && (t - tb).abs() <= 1e-9 * t.max(b.summary.dt)).then_some((na, nb))
        })
        .collect()
}

/// Compares finished runs (coarse to fine) and writes `report.json` plus
/// `tips.csv`, `l2.csv` and `sz_nesting.csv` under `out`.
pub fn compare_runs(runs: &[SubRun], out: &Path) -> Result<ConvergenceReport> {
    create_dir(out)?;
    let mut failures: Vec<SubRun> = runs.iter().filter(|r| r.error.is_some()).cloned().collect();
    let mut loaded = Vec::new();
    for r in runs.iter().filter(|r| r.error.is_none()) {
        match load(r) {
            Ok(l) => loaded.push(l),
            Err(e) => failures.push(SubRun {
                error: Some(e.to_string()),
                ..r.clone()
            }),
        }
    }
    let partial = !failures.is_empty();

    let symmetry_max_dev = loaded.iter().map(|l| l.summary.symmetry_max_dev).fold(0.0, f64::max);
    let kinetic_ratio_median = loaded.last().and_then(|l| l.summary.kinetic_ratio_median);

    // tip ordering: the larger horizon stays ahead up to its own size
    let mut tip_ok = true;
    let mut tip_times = 0;
    let mut tips_csv = CsvWriter::create(
        &out.join("tips.csv"),
        "t_us,epsilon_coarse_m,epsilon_fine_m,ell_coarse_m,ell_fine_m",
    )?;
    for w in loaded.windows(2) {
        let (c, f) = (&w[0], &w[1]);
        let sc: BTreeSet<u64> = c.tips.keys().copied().collect();
        let sf: BTreeSet<u64> = f.tips.keys().copied().collect();
        for (nc, nf) in matched(c, &sc, f, &sf) {
            let (lc, lf) = (c.tips[&nc], f.tips[&nf]);
            tip_times += 1;
            tip_ok &= lc >= lf - c.epsilon;
            tips_csv.floats(&[nc as f64 * c.summary.dt * 1e6, c.epsilon, f.epsilon, lc, lf])?;
        }
    }
    tips_csv.finish()?;

    // softening zones and displacement differences on the coarsest lattice
    let mut sz_ok = true;
    let mut field_times = 0;
    let mut sz_csv = CsvWriter::create(
        &out.join("sz_nesting.csv"),
        "t_us,epsilon_coarse_m,epsilon_fine_m,fine_soft_cells,uncovered_cells",
    )?;
    let mut l2_csv = CsvWriter::create(&out.join("l2.csv"), "t_us,epsilon_a_m,epsilon_b_m,l2_m")?;
    let mut l2_differences = Vec::new();
    if let Some(coarsest) = loaded.first() {
        let h_c = coarsest.summary.h;
        let steps = |l: &Loaded| -> BTreeSet<u64> { l.summary.field_steps.iter().copied().collect() };
        let on_coarse = |l: &Loaded, step: u64| -> Result<CoarseField> {
            let r = (h_c / l.summary.h).round() as i64;
            if r < 1 || ((r as f64) * l.summary.h - h_c).abs() > 1e-9 * h_c {
                return Err(Error::Input(format!(
                    "lattice spacing {:e} m does not divide the coarsest {:e} m",
                    l.summary.h, h_c
                )));
            }
            let f = read_field_dump(&l.dir.join("fields").join(format!("f_{step:06}.csv")))?;
            Ok(restrict(&f, r))
        };
        for w in loaded.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let mut diff = L2Difference {
                epsilon_a: a.epsilon,
                epsilon_b: b.epsilon,
                series: Vec::new(),
                max: 0.0,
            };
            for (na, nb) in matched(a, &steps(a), b, &steps(b)) {
                let t_us = na as f64 * a.summary.dt * 1e6;
                let fa = on_coarse(a, na)?;
                let fb = on_coarse(b, nb)?;
                let mut sum = 0.0;
                for (k, (ua, _)) in &fa {
                    if let Some((ub, _)) = fb.get(k) {
                        sum += ((ua[0] - ub[0]).powi(2) + (ua[1] - ub[1]).powi(2)) * h_c * h_c;
                    }
                }
                let l2 = sum.sqrt();
                diff.series.push((t_us, l2));
                diff.max = diff.max.max(l2);
                l2_csv.floats(&[t_us, a.epsilon, b.epsilon, l2])?;

                // nesting: fine soft cells must lie within one coarse cell of
                // the coarse soft set, both on the coarsest lattice
                let coarse_soft: BTreeSet<(i64, i64)> = fa.iter().filter(|(_, v)| v.1).map(|(k, _)| *k).collect();
                let fine_soft: Vec<(i64, i64)> = fb.iter().filter(|(_, v)| v.1).map(|(k, _)| *k).collect();
                let uncovered = fine_soft
                    .iter()
                    .filter(|(i, j)| !(-1..=1).any(|di| (-1..=1).any(|dj| coarse_soft.contains(&(i + di, j + dj)))))
                    .count();
                field_times += 1;
                sz_ok &= uncovered == 0;
                sz_csv.floats(&[t_us, a.epsilon, b.epsilon, fine_soft.len() as f64, uncovered as f64])?;
            }
            l2_differences.push(diff);
        }
    }
    sz_csv.finish()?;
    l2_csv.finish()?;

    let report = ConvergenceReport {
        epsilons: runs.iter().map(|r| r.epsilon).collect(),
        tip_ordering_pass: tip_ok && !partial,
        sz_nesting_pass: sz_ok && !partial,
        symmetry_max_dev,
        l2_differences,
        kinetic_ratio_median,
        tip_times,
        field_times,
        failures,
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Ratio of successive maximum displacement differences; above 1 when the
/// fields draw together as the horizon shrinks.
pub fn contraction_factors(report: &ConvergenceReport) -> Vec<f64> {
    report.l2_differences.windows(2).map(|w| w[0].max / w[1].max).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restriction_averages_blocks() {
        let mut cells = BTreeMap::new();
        for i in 0..4 {
            for j in 0..2 {
                cells.insert((i, j), ([i as f64, j as f64], i == 3 && j == 0));
            }
        }
        let c = restrict(&Field { cells }, 2);
        assert_eq!(c.len(), 2);
        assert_eq!(c[&(0, 0)], ([0.5, 0.5], false));
        assert_eq!(c[&(1, 0)], ([2.5, 0.5], true));
    }

    #[test]
    fn preset_is_small() {
        let p = desk_scale_preset();
        p.validate().unwrap();
        let steps = p.stepper().num_steps();
        assert_eq!(steps, 3500);
        for eps in DESK_EPSILONS {
            let mut q = p.clone();
            q.epsilon = eps;
            let (nx, ny) = q.domain().cell_counts().unwrap();
            assert!(nx * ny <= 40_000, "{nx} x {ny}");
        }
    }
}

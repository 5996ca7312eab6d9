//! Drives one simulation and writes its output directory.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{read_field, InitialField, RunConfig};
use crate::diagnostics::{
    energy_ledger, kinetic_relation_report, median, opening_fraction, softening_outside_failure, softening_zone,
    strain_bound_violation, symmetry_deviation, tip_velocity, CrackTipSample, CrackTracker, PowerBalanceSample,
    PowerTracker,
};
use crate::dynamics::{Frame, Loading, Stepper};
use crate::error::{Error, Result};
use crate::geometry::{build_bonds, build_grid, BondState};
use crate::output::{
    create_dir, fmt_f64, write_json, write_vtk, CsvWriter, CONTOUR_HEADER, CRACK_TIP_HEADER, ENERGY_HEADER,
    FIELD_HEADER, POWER_HEADER,
};

/// Minimum run of output frames with a moving tip that counts as steady.
pub const STEADY_MIN_FRAMES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub epsilon: f64,
    pub h: f64,
    pub nodes: usize,
    pub bonds: usize,
    pub steps: u64,
    pub dt: f64,
    pub output_every: u64,
    pub calibration: String,
    pub c: f64,
    pub beta: f64,
    pub mu: f64,
    pub gc: f64,
    pub cs: f64,
    pub cl: f64,
    pub ell0: f64,
    pub final_ell: f64,
    pub failed_bonds: usize,
    pub first_failure_t: Option<f64>,
    /// Largest mode-I symmetry deviation over output frames.
    pub symmetry_max_dev: f64,
    /// Fraction of crack-face nodes behind the tip opening away from the
    /// centerline, pooled over propagation frames.
    pub opening_fraction: f64,
    pub opening_nodes: usize,
    /// Most softening-zone nodes outside the failure set and farther than
    /// two horizons from the tip, over frames.
    pub softening_outside_failure_max: usize,
    /// Largest fraction of same-side alive bonds at `|S| >= S_c`.
    pub strain_bound_violation_max: f64,
    /// `max |E(t) - E(0) - W_ext(t)| / max(E, W_ext)` with both maxima taken
    /// over frames before the first failure.
    pub prefailure_energy_drift: f64,
    pub max_displacement_l2: f64,
    /// `max |residual| / max(|flux terms|)` over power samples before the
    /// first failure.
    pub precrack_power_residual_ratio: Option<f64>,
    /// Output times bounding the longest stretch of positive tip speed.
    pub steady_window_t: Option<(f64, f64)>,
    /// Median of `flux_adv / (-G_c V)` over steady frames with a moving box.
    pub steady_advective_ratio: Option<f64>,
    /// Median of `-flux_nonlocal / (G_c V)` over the steady window.
    pub kinetic_ratio_median: Option<f64>,
    /// Steps with field dumps under `fields/`.
    pub field_steps: Vec<u64>,
}

fn initial(field: &InitialField, n: usize) -> Result<Vec<[f64; 2]>> {
    match field {
        InitialField::Zero => Ok(vec![[0.0; 2]; n]),
        InitialField::File(p) => read_field(p, n),
    }
}

/// Number of worker threads: explicit value, else `PERIFRACT_THREADS`, else all cores.
pub fn resolve_threads(requested: usize) -> usize {
    if requested > 0 {
        return requested;
    }
    std::env::var("PERIFRACT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
        .unwrap_or(0)
}

pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(resolve_threads(cfg.threads))
        .build()
        .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(cfg, out))
}

fn run_inner(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let spec = cfg.domain();
    let model = cfg.material()?;
    let grid = build_grid(&spec)?;
    let bonds = build_bonds(&grid, &spec);
    let n = grid.len();
    let n_bonds = bonds.len();
    let u0 = initial(&cfg.u0, n)?;
    let v0 = initial(&cfg.v0, n)?;
    let mut stepper = Stepper::new(
        grid,
        bonds,
        model,
        cfg.epsilon,
        Loading::Layers(cfg.load()),
        cfg.stepper(),
        u0,
        v0,
    )?;

    create_dir(out)?;
    std::fs::write(out.join("config.ini"), cfg.echo()).map_err(|e| Error::io(out.join("config.ini"), e))?;
    let snapshots = out.join("snapshots");
    let fields = out.join("fields");
    if cfg.write_vtk {
        create_dir(&snapshots)?;
    }
    create_dir(&fields)?;
    let mut energy_csv = CsvWriter::create(&out.join("energy.csv"), ENERGY_HEADER)?;
    let mut power_csv = CsvWriter::create(&out.join("power.csv"), POWER_HEADER)?;
    let mut contour_csv = CsvWriter::create(&out.join("contour.csv"), CONTOUR_HEADER)?;

    let steps = cfg.stepper().num_steps();
    info!(
        "{} nodes, {} bonds, {} steps of {:e} s, horizon {:e} m",
        n, n_bonds, steps, cfg.dt, cfg.epsilon
    );

    let mut crack = CrackTracker::new(spec.ell0);
    let mut power = PowerTracker::new(
        &spec,
        [cfg.half_width_x, cfg.half_width_y],
        cfg.contour_start(),
        cfg.smoothing_window,
    );
    let mut tips: Vec<CrackTipSample> = Vec::new();
    let mut power_samples: Vec<PowerBalanceSample> = Vec::new();
    let mut symmetry: f64 = 0.0;
    let (mut open, mut open_total) = (0.0, 0usize);
    let mut outside_max = 0usize;
    let mut bound_max: f64 = 0.0;
    let (mut drift_num, mut drift_den): (f64, f64) = (0.0, 0.0);
    let mut e0 = None;
    let mut first_failure: Option<f64> = None;
    let mut max_l2: f64 = 0.0;
    let mut field_steps = Vec::new();

    for _ in 0..steps {
        stepper.step_observed(|frame: &Frame| {
            if first_failure.is_none() && !frame.ledger.is_empty() {
                first_failure = Some(frame.t);
            }
            if !frame.step.is_multiple_of(cfg.output_every) {
                return Ok(());
            }
            let ledger = energy_ledger(frame);
            energy_csv.floats(&[
                frame.t * 1e6,
                ledger.kinetic,
                ledger.potential,
                ledger.external_work,
                ledger.dissipated,
                ledger.residual,
            ])?;
            let total = ledger.kinetic + ledger.potential;
            let e_ref = *e0.get_or_insert(total);
            if first_failure.is_none() {
                drift_num = drift_num.max(((total - e_ref) - ledger.external_work).abs());
                drift_den = drift_den.max(total.max(ledger.external_work));
            }

            let (soft, failed) = softening_zone(frame.bonds, frame.kernel, frame.u);
            let ell = crack.update(&frame.grid.positions, frame.ledger);
            tips.push(CrackTipSample {
                t: frame.t,
                ell,
                v: 0.0,
                n_soft: soft.iter().filter(|s| **s).count(),
                n_failed: failed.iter().filter(|s| **s).count(),
            });
            symmetry = symmetry.max(symmetry_deviation(frame.grid, frame.u));
            if ell > spec.ell0 {
                let (frac, count) = opening_fraction(&frame.grid.positions, &failed, frame.u, spec.ell0, ell);
                open += frac * count as f64;
                open_total += count;
            }
            outside_max = outside_max.max(softening_outside_failure(
                &frame.grid.positions,
                &soft,
                &failed,
                ell,
                2.0 * cfg.epsilon,
            ));
            bound_max = bound_max.max(strain_bound_violation(
                &frame.grid.positions,
                frame.bonds,
                frame.kernel,
                frame.u,
            ));
            let l2 = frame.u.iter().map(|u| u[0] * u[0] + u[1] * u[1]).sum::<f64>() * frame.grid.node_volume();
            max_l2 = max_l2.max(l2.sqrt());

            if let Some(p) = power.observe(frame, ell) {
                power_csv.floats(&[p.t * 1e6, p.d_e_dt, p.flux_advective, p.flux_nonlocal, p.residual])?;
                contour_csv.floats(&[p.t * 1e6, p.box_center, p.box_velocity])?;
                power_samples.push(p);
            }

            if frame.step.is_multiple_of(cfg.snapshot_every) {
                field_steps.push(frame.step);
                write_fields(&fields.join(format!("f_{:06}.csv", frame.step)), frame, &soft)?;
                if cfg.write_vtk {
                    write_vtk(
                        &snapshots.join(format!("u_{:06}.vtk", frame.step)),
                        &frame.grid.positions,
                        frame.u,
                        &frame.bonds.damage(),
                        frame.t,
                    )?;
                }
            }
            Ok(())
        })?;
    }

    energy_csv.finish()?;
    power_csv.finish()?;
    contour_csv.finish()?;

    let t: Vec<f64> = tips.iter().map(|s| s.t).collect();
    let ell: Vec<f64> = tips.iter().map(|s| s.ell).collect();
    for (s, v) in tips.iter_mut().zip(tip_velocity(&t, &ell, cfg.smoothing_window)) {
        s.v = v;
    }
    let mut tip_csv = CsvWriter::create(&out.join("crack_tip.csv"), CRACK_TIP_HEADER)?;
    for s in &tips {
        tip_csv.row(&[
            fmt_f64(s.t * 1e6),
            fmt_f64(s.ell),
            fmt_f64(s.v),
            s.n_soft.to_string(),
            s.n_failed.to_string(),
        ])?;
    }
    tip_csv.finish()?;

    let analysis = analyze(&tips, &power_samples, stepper.model.gc, first_failure);
    let failed_bonds = stepper.bonds.state.iter().filter(|s| **s == BondState::Failed).count() / 2;
    let summary = RunSummary {
        epsilon: cfg.epsilon,
        h: spec.h(),
        nodes: n,
        bonds: n_bonds,
        steps,
        dt: cfg.dt,
        output_every: cfg.output_every,
        calibration: stepper.model.calibration.name().to_string(),
        c: stepper.model.potential.c(),
        beta: stepper.model.potential.beta(),
        mu: stepper.model.mu,
        gc: stepper.model.gc,
        cs: stepper.model.cs,
        cl: stepper.model.cl,
        ell0: spec.ell0,
        final_ell: crack.ell(),
        failed_bonds,
        first_failure_t: first_failure,
        symmetry_max_dev: symmetry,
        opening_fraction: if open_total == 0 { 1.0 } else { open / open_total as f64 },
        opening_nodes: open_total,
        softening_outside_failure_max: outside_max,
        strain_bound_violation_max: bound_max,
        prefailure_energy_drift: if drift_den > 0.0 { drift_num / drift_den } else { 0.0 },
        max_displacement_l2: max_l2,
        precrack_power_residual_ratio: analysis.precrack_ratio,
        steady_window_t: analysis.steady_window_t,
        steady_advective_ratio: analysis.advective_ratio,
        kinetic_ratio_median: analysis.kinetic_median,
        field_steps,
    };
    write_json(&out.join("summary.json"), &summary)?;
    info!(
        "crack length {:.6e} m, {} failed bonds, symmetry deviation {:.3e}",
        summary.final_ell, failed_bonds, symmetry
    );
    Ok(summary)
}

fn write_fields(path: &Path, frame: &Frame, soft: &[bool]) -> Result<()> {
    let mut w = CsvWriter::create(path, FIELD_HEADER)?;
    for (i, &(ci, cj)) in frame.grid.cells.iter().enumerate() {
        w.row(&[
            ci.to_string(),
            cj.to_string(),
            fmt_f64(frame.u[i][0]),
            fmt_f64(frame.u[i][1]),
            (soft[i] as u8).to_string(),
        ])?;
    }
    w.finish()
}

/// Derived power-balance and kinetic-relation statistics of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunAnalysis {
    pub precrack_ratio: Option<f64>,
    pub steady_window_t: Option<(f64, f64)>,
    pub advective_ratio: Option<f64>,
    pub kinetic_median: Option<f64>,
}

pub fn analyze(
    tips: &[CrackTipSample],
    power: &[PowerBalanceSample],
    gc: f64,
    first_failure: Option<f64>,
) -> RunAnalysis {
    let pre: Vec<&PowerBalanceSample> = power.iter().filter(|p| first_failure.is_none_or(|t| p.t < t)).collect();
    let precrack_ratio = (!pre.is_empty()).then(|| {
        let res = pre.iter().map(|p| p.residual.abs()).fold(0.0, f64::max);
        let flux = pre
            .iter()
            .map(|p| p.flux_advective.abs().max(p.flux_nonlocal.abs()).max(p.d_e_dt.abs()))
            .fold(0.0, f64::max);
        if flux == 0.0 {
            0.0
        } else {
            res / flux
        }
    });
    let report = kinetic_relation_report(tips, power, gc, STEADY_MIN_FRAMES);
    let steady_window_t = report
        .steady_window
        .map(|(a, b)| (report.rows[a].t, report.rows[b - 1].t));
    let advective_ratio = report.steady_window.and_then(|(a, b)| {
        let mut r: Vec<f64> = report.rows[a..b]
            .iter()
            .filter_map(|row| {
                let p = power.iter().find(|p| p.t == row.t)?;
                // a parked box carries no advective flux
                (row.gc_v > 0.0 && p.box_velocity > 0.0).then(|| p.flux_advective / -row.gc_v)
            })
            .collect();
        median(&mut r)
    });
    RunAnalysis {
        precrack_ratio,
        steady_window_t,
        advective_ratio,
        kinetic_median: report.median_ratio,
    }
}

/// Path of run `k` of a study.
pub fn run_dir(root: &Path, k: usize, epsilon: f64) -> PathBuf {
    root.join(format!("eps_{k}_{:.4e}", epsilon))
}

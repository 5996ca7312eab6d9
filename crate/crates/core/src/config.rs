//! Flat `section.key = value` run configuration.
//!
//! `[section]` headers prefix the keys that follow them. Lines starting with
//! `#` or `;` are comments. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dynamics::StepperConfig;
use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, LoadSchedule};
use crate::material::{calibrate, Calibration, InfluenceFunction, MaterialModel, POISSON_RATIO};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialField {
    Zero,
    /// Whitespace or comma separated `c1 c2` per node, in node order.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationMode {
    SelfConsistent,
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    // material
    pub youngs_modulus: f64,
    pub gc: f64,
    pub rho: f64,
    pub nu: f64,
    pub calibration: CalibrationMode,
    pub c: Option<f64>,
    pub beta: Option<f64>,
    // domain
    pub a: f64,
    pub b: f64,
    pub ell0: f64,
    /// Notch half-width; `None` tracks the horizon.
    pub d: Option<f64>,
    pub epsilon: f64,
    pub h_ratio: u32,
    /// Loading layer thickness; `None` tracks the horizon.
    pub delta: Option<f64>,
    // load
    pub f0: f64,
    pub t_ramp: f64,
    // quadrature
    pub n_sub: u32,
    pub gauss_order: usize,
    // time
    pub dt: f64,
    pub t_end: f64,
    pub output_every: u64,
    pub stability_factor: f64,
    // init
    pub u0: InitialField,
    pub v0: InitialField,
    // diagnostics
    pub smoothing_window: usize,
    pub half_width_x: f64,
    pub half_width_y: f64,
    /// Initial box center; `None` puts the box one horizon ahead of the notch.
    pub start_x1: Option<f64>,
    // output
    pub dir: PathBuf,
    pub write_vtk: bool,
    /// Steps between snapshots and field dumps.
    pub snapshot_every: u64,
    pub seed: u64,
    /// 0 picks the number of available cores.
    pub threads: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            youngs_modulus: 3.24e9,
            gc: 500.0,
            rho: 1200.0,
            nu: POISSON_RATIO,
            calibration: CalibrationMode::SelfConsistent,
            c: None,
            beta: None,
            a: 0.1,
            b: 0.3,
            ell0: 0.025,
            d: None,
            epsilon: 2.5e-3,
            h_ratio: 4,
            delta: None,
            f0: 1e10,
            t_ramp: 350e-6,
            n_sub: 8,
            gauss_order: 64,
            dt: 0.02e-6,
            t_end: 560e-6,
            output_every: 50,
            stability_factor: 0.5,
            u0: InitialField::Zero,
            v0: InitialField::Zero,
            smoothing_window: 5,
            half_width_x: 0.005,
            half_width_y: 0.0075,
            start_x1: None,
            dir: PathBuf::from("out"),
            write_vtk: true,
            snapshot_every: 5000,
            seed: 0,
            threads: 0,
        }
    }
}

impl RunConfig {
    pub fn domain(&self) -> DomainSpec {
        DomainSpec {
            a: self.a,
            b: self.b,
            ell0: self.ell0,
            d: self.d.unwrap_or(self.epsilon),
            epsilon: self.epsilon,
            h_ratio: self.h_ratio,
            delta: self.delta.unwrap_or(self.epsilon),
            n_sub: self.n_sub,
        }
    }

    pub fn load(&self) -> LoadSchedule {
        LoadSchedule {
            f0: self.f0,
            t_ramp: self.t_ramp,
            delta: self.delta.unwrap_or(self.epsilon),
        }
    }

    pub fn stepper(&self) -> StepperConfig {
        StepperConfig {
            dt: self.dt,
            t_end: self.t_end,
            output_every: self.output_every,
            stability_factor: self.stability_factor,
        }
    }

    pub fn calibration(&self) -> Calibration {
        match self.calibration {
            CalibrationMode::SelfConsistent => Calibration::SelfConsistent,
            CalibrationMode::Printed => Calibration::Printed {
                c: self.c.unwrap_or(crate::material::PRINTED_C),
                beta: self.beta.unwrap_or(crate::material::PRINTED_BETA),
            },
        }
    }

    pub fn material(&self) -> Result<MaterialModel> {
        calibrate(
            self.youngs_modulus,
            self.gc,
            self.rho,
            InfluenceFunction::linear_decay(),
            &self.calibration(),
        )
    }

    /// Box center at the start of the run.
    pub fn contour_start(&self) -> f64 {
        self.start_x1.unwrap_or(self.ell0 + self.epsilon + self.half_width_x)
    }

    /// Non-fatal problems: a time step above the stability bound.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Ok(model) = self.material() {
            let h = self.epsilon / self.h_ratio as f64;
            let limit = self.stability_factor * h / model.cl;
            if self.dt > limit {
                out.push(format!(
                    "time.dt = {:e} s exceeds the stability factor bound {:e} s ({} * h / c_l)",
                    self.dt, limit, self.stability_factor
                ));
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive, got {v}")))
            }
        };
        positive("material.E", self.youngs_modulus)?;
        positive("material.Gc", self.gc)?;
        positive("material.rho", self.rho)?;
        if self.nu != POISSON_RATIO {
            return Err(Error::config("material.nu", "bond-based model requires nu=0.25"));
        }
        match self.calibration {
            CalibrationMode::Printed => {
                if self.c.is_none() || self.beta.is_none() {
                    return Err(Error::config(
                        "material.calibration",
                        "printed calibration requires material.c and material.beta",
                    ));
                }
                positive("material.c", self.c.unwrap_or(0.0))?;
                positive("material.beta", self.beta.unwrap_or(0.0))?;
            }
            CalibrationMode::SelfConsistent => {
                if self.c.is_some() || self.beta.is_some() {
                    return Err(Error::config(
                        "material.c",
                        "material.c and material.beta apply only to printed calibration",
                    ));
                }
            }
        }
        positive("domain.a", self.a)?;
        positive("domain.b", self.b)?;
        positive("domain.epsilon", self.epsilon)?;
        positive("load.t_ramp", self.t_ramp)?;
        if !(self.f0.is_finite() && self.f0 >= 0.0) {
            return Err(Error::config("load.f0", format!("must be >= 0, got {}", self.f0)));
        }
        if self.gauss_order < 2 {
            return Err(Error::config("quadrature.gauss_order", "must be at least 2"));
        }
        positive("time.dt", self.dt)?;
        positive("time.t_end", self.t_end)?;
        positive("time.stability_factor", self.stability_factor)?;
        if self.output_every == 0 {
            return Err(Error::config("time.output_every", "must be at least 1"));
        }
        if self.snapshot_every == 0 {
            return Err(Error::config("output.snapshot_every", "must be at least 1"));
        }
        if self.smoothing_window == 0 {
            return Err(Error::config("diagnostics.smoothing_window", "must be at least 1"));
        }
        positive("contour.half_width_x", self.half_width_x)?;
        positive("contour.half_width_y", self.half_width_y)?;
        self.domain()
            .validate()
            .map_err(|e| Error::config("domain", e.to_string()))?;
        let contour = crate::geometry::ContourSpec {
            center: [self.contour_start(), 0.0],
            half_widths: [self.half_width_x, self.half_width_y],
            velocity: [0.0, 0.0],
        };
        if !contour.fits(&self.domain(), self.epsilon) {
            return Err(Error::config(
                "contour",
                "box must stay one horizon inside the rectangle",
            ));
        }
        Ok(())
    }

    /// Fully resolved configuration in the input format.
    pub fn echo(&self) -> String {
        let f = |v: f64| format!("{v:.16e}");
        let opt = |v: Option<f64>| v.map_or("auto".to_string(), f);
        let field = |v: &InitialField| match v {
            InitialField::Zero => "zero".to_string(),
            InitialField::File(p) => p.display().to_string(),
        };
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("material.E", f(self.youngs_modulus));
        line("material.Gc", f(self.gc));
        line("material.rho", f(self.rho));
        line("material.nu", f(self.nu));
        line(
            "material.calibration",
            match self.calibration {
                CalibrationMode::SelfConsistent => "self_consistent".into(),
                CalibrationMode::Printed => "printed".into(),
            },
        );
        if let Some(c) = self.c {
            line("material.c", f(c));
        }
        if let Some(b) = self.beta {
            line("material.beta", f(b));
        }
        line("domain.a", f(self.a));
        line("domain.b", f(self.b));
        line("domain.ell0", f(self.ell0));
        line("domain.d", opt(self.d));
        line("domain.epsilon", f(self.epsilon));
        line("domain.h_ratio", self.h_ratio.to_string());
        line("domain.delta", opt(self.delta));
        line("load.f0", f(self.f0));
        line("load.t_ramp", f(self.t_ramp));
        line("quadrature.n_sub", self.n_sub.to_string());
        line("quadrature.gauss_order", self.gauss_order.to_string());
        line("time.dt", f(self.dt));
        line("time.t_end", f(self.t_end));
        line("time.output_every", self.output_every.to_string());
        line("time.stability_factor", f(self.stability_factor));
        line("init.u0", field(&self.u0));
        line("init.v0", field(&self.v0));
        line("diagnostics.smoothing_window", self.smoothing_window.to_string());
        line("contour.half_width_x", f(self.half_width_x));
        line("contour.half_width_y", f(self.half_width_y));
        line("contour.start_x1", opt(self.start_x1));
        line("output.dir", self.dir.display().to_string());
        line("output.write_vtk", self.write_vtk.to_string());
        line("output.snapshot_every", self.snapshot_every.to_string());
        line("output.seed", self.seed.to_string());
        line("threads", self.threads.to_string());
        s
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let float = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::config(key, format!("expected a number, got `{v}`")))
        };
        let auto = |v: &str| -> Result<Option<f64>> {
            if v == "auto" {
                Ok(None)
            } else {
                float(v).map(Some)
            }
        };
        fn int<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse::<T>()
                .map_err(|_| Error::config(key, format!("expected a non-negative integer, got `{v}`")))
        }
        let field = |v: &str| {
            if v == "zero" {
                InitialField::Zero
            } else {
                InitialField::File(PathBuf::from(v))
            }
        };
        match key {
            "material.E" => self.youngs_modulus = float(value)?,
            "material.Gc" => self.gc = float(value)?,
            "material.rho" => self.rho = float(value)?,
            "material.nu" => self.nu = float(value)?,
            "material.calibration" => {
                self.calibration = match value {
                    "self_consistent" => CalibrationMode::SelfConsistent,
                    "printed" => CalibrationMode::Printed,
                    _ => {
                        return Err(Error::config(
                            key,
                            format!("expected `self_consistent` or `printed`, got `{value}`"),
                        ))
                    }
                }
            }
            "material.c" => self.c = Some(float(value)?),
            "material.beta" => self.beta = Some(float(value)?),
            "domain.a" => self.a = float(value)?,
            "domain.b" => self.b = float(value)?,
            "domain.ell0" => self.ell0 = float(value)?,
            "domain.d" => self.d = auto(value)?,
            "domain.epsilon" => self.epsilon = float(value)?,
            "domain.h_ratio" => self.h_ratio = int(key, value)?,
            "domain.delta" => self.delta = auto(value)?,
            "load.f0" => self.f0 = float(value)?,
            "load.t_ramp" => self.t_ramp = float(value)?,
            "quadrature.n_sub" => self.n_sub = int(key, value)?,
            "quadrature.gauss_order" => self.gauss_order = int(key, value)?,
            "time.dt" => self.dt = float(value)?,
            "time.t_end" => self.t_end = float(value)?,
            "time.output_every" => self.output_every = int(key, value)?,
            "time.stability_factor" => self.stability_factor = float(value)?,
            "init.u0" => self.u0 = field(value),
            "init.v0" => self.v0 = field(value),
            "diagnostics.smoothing_window" => self.smoothing_window = int(key, value)?,
            "contour.half_width_x" => self.half_width_x = float(value)?,
            "contour.half_width_y" => self.half_width_y = float(value)?,
            "contour.start_x1" => self.start_x1 = auto(value)?,
            "output.dir" => self.dir = PathBuf::from(value),
            "output.write_vtk" => {
                self.write_vtk = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(Error::config(key, format!("expected a boolean, got `{value}`"))),
                }
            }
            "output.snapshot_every" => self.snapshot_every = int(key, value)?,
            "output.seed" => self.seed = int(key, value)?,
            "threads" => self.threads = int(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }
}

/// Parses configuration text over the defaults.
pub fn parse_str(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    let mut seen = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::config(
                format!("line {}", n + 1),
                format!("expected `key = value`, got `{line}`"),
            ));
        };
        let k = k.trim();
        let v = v.trim().trim_matches('"');
        let key = if section.is_empty() || k.contains('.') {
            k.to_string()
        } else {
            format!("{section}.{k}")
        };
        if seen.insert(key.clone(), n + 1).is_some() {
            return Err(Error::config(&key, "key given more than once"));
        }
        cfg.set(&key, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = parse_str(&text)?;
    for w in cfg.warnings() {
        warn!("{w}");
    }
    Ok(cfg)
}

/// Reads an initial field with one `c1 c2` pair per node.
pub fn read_field(path: &Path, nodes: usize) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let key = path.display().to_string();
    let mut out = Vec::with_capacity(nodes);
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::config(&key, format!("bad line `{line}`")))?;
        if vals.len() != 2 {
            return Err(Error::config(
                &key,
                format!("expected two values per line, got `{line}`"),
            ));
        }
        out.push([vals[0], vals[1]]);
    }
    if out.len() != nodes {
        return Err(Error::config(
            &key,
            format!("field has {} rows for {nodes} nodes", out.len()),
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.epsilon, 2.5e-3);
        assert_eq!(cfg.t_end, 560e-6);
        assert_eq!(cfg.dt, 0.02e-6);
        assert_eq!(cfg.f0, 1e10);
        assert_eq!(cfg.t_ramp, 350e-6);
        assert_eq!(cfg.domain().h(), 2.5e-3 / 4.0);
        assert!(cfg.warnings().is_empty());
    }

    #[test]
    fn nu_must_be_quarter() {
        let err = parse_str("material.nu = 0.3").unwrap_err();
        assert!(err.to_string().contains("bond-based model requires nu=0.25"));
        assert!(err.to_string().contains("material.nu"));
    }

    #[test]
    fn unknown_keys_are_errors() {
        let err = parse_str("material.foo = 1").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "material.foo"));
        assert!(parse_str("[time]\nbogus = 3").is_err());
        assert!(parse_str("time.dt = abc").is_err());
        assert!(parse_str("time.dt = 1e-8\ntime.dt = 2e-8").is_err());
    }

    #[test]
    fn sections_prefix_keys() {
        let cfg = parse_str("threads = 2\n[time]\ndt = 1e-8\n[domain]\nepsilon = 1.25e-3\n").unwrap();
        assert_eq!(cfg.threads, 2);
        assert_eq!(cfg.dt, 1e-8);
        assert_eq!(cfg.epsilon, 1.25e-3);
        assert!(parse_str("[time]\ndt = 1e-8\nthreads = 2").is_err());
        assert_eq!(parse_str("threads = 2").unwrap().threads, 2);
    }

    #[test]
    fn large_step_warns() {
        let cfg = parse_str("time.dt = 1e-6").unwrap();
        let w = cfg.warnings();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("stability factor"));
    }

    #[test]
    fn printed_mode_needs_constants() {
        assert!(parse_str("material.calibration = printed").is_err());
        let cfg = parse_str("material.calibration = printed\nmaterial.c = 392.7\nmaterial.beta = 1.3201e7").unwrap();
        let m = cfg.material().unwrap();
        assert_eq!(m.potential.c(), 392.7);
        assert!(parse_str("material.c = 392.7").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let text = "material.calibration = printed\nmaterial.c = 392.7\nmaterial.beta = 1.3201e7\n\
                    domain.d = 1e-3\ntime.dt = 0.013e-6\noutput.dir = some/where\ninit.v0 = v.txt\n";
        for cfg in [RunConfig::default(), parse_str(text).unwrap()] {
            let again = parse_str(&cfg.echo()).unwrap();
            assert_eq!(again, cfg);
            assert_eq!(again.echo(), cfg.echo());
        }
    }
}

//! Flat `key = value` experiment configuration and the named presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::coeff::{Family, PeriodicField};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Solve,
    Decay,
    Lorentz,
    Lift,
    Monotone,
    Adjoint,
    Uniform,
    Oracle,
    Ratio,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::Solve,
        Experiment::Decay,
        Experiment::Lorentz,
        Experiment::Lift,
        Experiment::Monotone,
        Experiment::Adjoint,
        Experiment::Uniform,
        Experiment::Oracle,
        Experiment::Ratio,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::Decay => "decay",
            Experiment::Lorentz => "lorentz",
            Experiment::Lift => "lift",
            Experiment::Monotone => "monotone",
            Experiment::Adjoint => "adjoint",
            Experiment::Uniform => "uniform",
            Experiment::Oracle => "oracle",
            Experiment::Ratio => "ratio",
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Field selector: one family or every built-in field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldChoice {
    One(Family),
    All,
}

impl fmt::Display for FieldChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldChoice::One(fam) => write!(f, "{fam}"),
            FieldChoice::All => write!(f, "all"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    /// `[4h, R/4]`, with the sign-change cut for planar log fits.
    Auto,
    Explicit(f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiments: Vec<Experiment>,
    pub field: FieldChoice,
    /// Family parameters; empty selects the defaults.
    pub params: Vec<f64>,
    pub dim: usize,
    /// Box half-width for single-box experiments.
    pub radius: f64,
    /// Nodes per axis for single-box experiments.
    pub n: usize,
    /// Half-widths and spacing for nested-box experiments.
    pub radii: Vec<f64>,
    pub spacing: f64,
    pub sources: Vec<Vec<f64>>,
    pub window: WindowPolicy,
    pub thickness: f64,
    /// Decay quantities: any of `g`, `grad`, `mixed`.
    pub quantities: Vec<String>,
    /// Remove the Dirichlet offset of `d >= 3` columns by combining the box
    /// of half-width R with the one of half-width R/2 at the same spacing.
    pub extrapolate: bool,
    /// Expected exponents; `None` uses the theoretical `2-d`, `1-d`, `-d`.
    pub expected_g_exponent: Option<f64>,
    pub expected_grad_exponent: Option<f64>,
    pub expected_mixed_exponent: Option<f64>,
    pub g_tol: f64,
    pub grad_tol: f64,
    pub mixed_tol: f64,
    /// Reference slope of the planar log fit and its relative tolerance.
    pub log_slope: Option<f64>,
    pub log_slope_tol: f64,
    pub log_rms_tol: f64,
    pub drift_tol: f64,
    pub match_tol: f64,
    pub spread_tol: f64,
    pub lift_tol: f64,
    pub lift_exponent_tol: f64,
    pub kappa: f64,
    pub trials: usize,
    pub disk_n: usize,
    pub disk_tol: f64,
    pub analytic_tol: f64,
    pub rel_tol: f64,
    pub max_iter: Option<usize>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiments: vec![Experiment::Solve],
            field: FieldChoice::One(Family::Identity),
            params: Vec::new(),
            dim: 2,
            radius: 1.0,
            n: 33,
            radii: vec![1.0, 2.0, 4.0],
            spacing: 1.0 / 16.0,
            sources: vec![vec![0.0, 0.0, 0.0]],
            window: WindowPolicy::Auto,
            thickness: 0.1,
            quantities: vec!["g".into(), "grad".into()],
            extrapolate: false,
            expected_g_exponent: None,
            expected_grad_exponent: None,
            expected_mixed_exponent: None,
            g_tol: 0.1,
            grad_tol: 0.15,
            mixed_tol: 0.2,
            log_slope: None,
            log_slope_tol: 0.15,
            log_rms_tol: 0.1,
            drift_tol: 0.1,
            match_tol: 1e-8,
            spread_tol: 0.25,
            lift_tol: 0.15,
            lift_exponent_tol: 0.2,
            kappa: 4.0,
            trials: 1000,
            disk_n: 257,
            disk_tol: 0.02,
            analytic_tol: 0.15,
            rel_tol: 1e-10,
            max_iter: None,
            seed: 7,
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::Config(format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: expected a non-negative integer, got '{v}'")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| parse_f64(key, x)).collect()
}

fn parse_opt(key: &str, v: &str) -> Result<Option<f64>> {
    match v.trim() {
        "" | "none" => Ok(None),
        x => parse_f64(key, x).map(Some),
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got '{v}'"))),
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

fn opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |x| format!("{x:?}"))
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "experiments" => {
                self.experiments = if v == "all" {
                    Experiment::ALL.to_vec()
                } else {
                    v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?
                }
            }
            "field" => {
                self.field = if v == "all" {
                    FieldChoice::All
                } else {
                    FieldChoice::One(v.parse()?)
                }
            }
            "params" => self.params = parse_list(key, v)?,
            "dim" => self.dim = parse_usize(key, v)?,
            "radius" => self.radius = parse_f64(key, v)?,
            "n" => self.n = parse_usize(key, v)?,
            "radii" => self.radii = parse_list(key, v)?,
            "spacing" => self.spacing = parse_f64(key, v)?,
            "sources" => {
                self.sources = v
                    .split(';')
                    .map(|p| parse_list(key, p))
                    .collect::<Result<_>>()?
            }
            "window" => {
                self.window = if v == "auto" {
                    WindowPolicy::Auto
                } else {
                    match parse_list(key, v)?.as_slice() {
                        &[a, b] => WindowPolicy::Explicit(a, b),
                        _ => return Err(Error::Config(format!("window: expected 'auto' or 'a,b', got '{v}'"))),
                    }
                }
            }
            "thickness" => self.thickness = parse_f64(key, v)?,
            "quantities" => self.quantities = v.split(',').map(|s| s.trim().to_string()).collect(),
            "extrapolate" => self.extrapolate = parse_bool(key, v)?,
            "expected_g_exponent" => self.expected_g_exponent = parse_opt(key, v)?,
            "expected_grad_exponent" => self.expected_grad_exponent = parse_opt(key, v)?,
            "expected_mixed_exponent" => self.expected_mixed_exponent = parse_opt(key, v)?,
            "g_tol" => self.g_tol = parse_f64(key, v)?,
            "grad_tol" => self.grad_tol = parse_f64(key, v)?,
            "mixed_tol" => self.mixed_tol = parse_f64(key, v)?,
            "log_slope" => self.log_slope = parse_opt(key, v)?,
            "log_slope_tol" => self.log_slope_tol = parse_f64(key, v)?,
            "log_rms_tol" => self.log_rms_tol = parse_f64(key, v)?,
            "drift_tol" => self.drift_tol = parse_f64(key, v)?,
            "match_tol" => self.match_tol = parse_f64(key, v)?,
            "spread_tol" => self.spread_tol = parse_f64(key, v)?,
            "lift_tol" => self.lift_tol = parse_f64(key, v)?,
            "lift_exponent_tol" => self.lift_exponent_tol = parse_f64(key, v)?,
            "kappa" => self.kappa = parse_f64(key, v)?,
            "trials" => self.trials = parse_usize(key, v)?,
            "disk_n" => self.disk_n = parse_usize(key, v)?,
            "disk_tol" => self.disk_tol = parse_f64(key, v)?,
            "analytic_tol" => self.analytic_tol = parse_f64(key, v)?,
            "rel_tol" => self.rel_tol = parse_f64(key, v)?,
            "max_iter" => {
                self.max_iter = match v {
                    "" | "none" => None,
                    x => Some(parse_usize(key, x)?),
                }
            }
            "seed" => self.seed = v.parse().map_err(|_| Error::Config(format!("seed: bad value '{v}'")))?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a config file body on top of `self`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", no + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Writes every key so that `parse(to_text())` reproduces `self`.
    pub fn to_text(&self) -> String {
        let exps: Vec<&str> = self.experiments.iter().map(|e| e.tag()).collect();
        let sources: Vec<String> = self.sources.iter().map(|s| join(s)).collect();
        let window = match self.window {
            WindowPolicy::Auto => "auto".to_string(),
            WindowPolicy::Explicit(a, b) => format!("{a:?},{b:?}"),
        };
        let lines = [
            ("experiments", exps.join(",")),
            ("field", self.field.to_string()),
            ("params", join(&self.params)),
            ("dim", self.dim.to_string()),
            ("radius", format!("{:?}", self.radius)),
            ("n", self.n.to_string()),
            ("radii", join(&self.radii)),
            ("spacing", format!("{:?}", self.spacing)),
            ("sources", sources.join(";")),
            ("window", window),
            ("thickness", format!("{:?}", self.thickness)),
            ("quantities", self.quantities.join(",")),
            ("extrapolate", self.extrapolate.to_string()),
            ("expected_g_exponent", opt(self.expected_g_exponent)),
            ("expected_grad_exponent", opt(self.expected_grad_exponent)),
            ("expected_mixed_exponent", opt(self.expected_mixed_exponent)),
            ("g_tol", format!("{:?}", self.g_tol)),
            ("grad_tol", format!("{:?}", self.grad_tol)),
            ("mixed_tol", format!("{:?}", self.mixed_tol)),
            ("log_slope", opt(self.log_slope)),
            ("log_slope_tol", format!("{:?}", self.log_slope_tol)),
            ("log_rms_tol", format!("{:?}", self.log_rms_tol)),
            ("drift_tol", format!("{:?}", self.drift_tol)),
            ("match_tol", format!("{:?}", self.match_tol)),
            ("spread_tol", format!("{:?}", self.spread_tol)),
            ("lift_tol", format!("{:?}", self.lift_tol)),
            ("lift_exponent_tol", format!("{:?}", self.lift_exponent_tol)),
            ("kappa", format!("{:?}", self.kappa)),
            ("trials", self.trials.to_string()),
            ("disk_n", self.disk_n.to_string()),
            ("disk_tol", format!("{:?}", self.disk_tol)),
            ("analytic_tol", format!("{:?}", self.analytic_tol)),
            ("rel_tol", format!("{:?}", self.rel_tol)),
            ("max_iter", self.max_iter.map_or("none".into(), |m| m.to_string())),
            ("seed", self.seed.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.experiments.is_empty() {
            return Err(Error::Config("no experiments selected".into()));
        }
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Config(format!("dim must be 2 or 3, got {}", self.dim)));
        }
        if self.n < 5 || self.n % 2 == 0 {
            return Err(Error::Config(format!("n must be odd and at least 5, got {}", self.n)));
        }
        if !(self.radius > 0.0) || !(self.spacing > 0.0) {
            return Err(Error::Config("radius and spacing must be positive".into()));
        }
        if self.radii.is_empty() || self.radii.iter().any(|&r| r <= 0.0) {
            return Err(Error::Config("radii must be a non-empty list of positive numbers".into()));
        }
        if self.sources.is_empty() || self.sources.iter().any(|s| s.len() < self.dim) {
            return Err(Error::Config(format!("every source needs {} coordinates", self.dim)));
        }
        if !(self.thickness > 0.0 && self.thickness < 0.5) {
            return Err(Error::Config("thickness must lie in (0, 0.5)".into()));
        }
        if let WindowPolicy::Explicit(a, b) = self.window {
            if !(a > 0.0 && b > a) {
                return Err(Error::Config(format!("window [{a}, {b}] is empty")));
            }
        }
        for q in &self.quantities {
            if !["g", "grad", "mixed"].contains(&q.as_str()) {
                return Err(Error::Config(format!("unknown quantity '{q}'")));
            }
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(Error::Config("rel_tol must lie in (0, 1)".into()));
        }
        if self.disk_n < 5 || self.disk_n % 2 == 0 {
            return Err(Error::Config("disk_n must be odd and at least 5".into()));
        }
        for f in self.fields()? {
            f.verify_coercivity(16)?;
        }
        Ok(())
    }

    /// The coefficient fields selected by `field` and `params`.
    pub fn fields(&self) -> Result<Vec<PeriodicField>> {
        match self.field {
            FieldChoice::All => PeriodicField::builtin(self.dim),
            FieldChoice::One(fam) => Ok(vec![PeriodicField::new(self.dim, fam, &self.params)?]),
        }
    }

    pub fn source_points(&self) -> Vec<[f64; 3]> {
        self.sources
            .iter()
            .map(|s| {
                let mut p = [0.0; 3];
                p[..self.dim].copy_from_slice(&s[..self.dim]);
                p
            })
            .collect()
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| Error::Config(format!("unknown preset '{name}'")))?;
        Self::parse(text)
    }
}

/// Named configurations, one or more per verification target.
pub const PRESETS: &[(&str, &str)] = &[
    (
        "laplace3d",
        "experiments = decay\nfield = identity\ndim = 3\nradius = 2\nn = 65\nquantities = g,grad\nextrapolate = true\n",
    ),
    (
        "trig3d",
        "experiments = decay\nfield = scalar_trig\ndim = 3\nradius = 2\nn = 65\nquantities = g,grad\nextrapolate = true\n",
    ),
    (
        "laplace2d",
        "experiments = decay\nfield = identity\ndim = 2\nradius = 4\nn = 129\nquantities = g,grad,mixed\nlog_slope = 0.15915494309189535\n",
    ),
    (
        "trig2d",
        "experiments = decay\nfield = scalar_trig\ndim = 2\nradius = 4\nn = 129\nquantities = g,grad,mixed\n",
    ),
    (
        "wrong_exponent",
        "experiments = decay\nfield = identity\ndim = 2\nradius = 4\nn = 65\nquantities = grad\nexpected_grad_exponent = -2\n",
    ),
    (
        "monotone2d",
        "experiments = monotone\nfield = all\ndim = 2\nradii = 1,2,4\nspacing = 0.0625\n",
    ),
    (
        "monotone3d",
        "experiments = monotone\nfield = all\ndim = 3\nradii = 1,2,4\nspacing = 0.25\n",
    ),
    (
        "adjoint",
        "experiments = adjoint\nfield = nonsym_skew\nparams = 0.3,0.5,1\ndim = 2\nradius = 1\nn = 17\n",
    ),
    ("oracle2d", "experiments = oracle\nfield = all\ndim = 2\nradius = 1\nn = 17\n"),
    ("oracle3d", "experiments = oracle\nfield = all\ndim = 3\nradius = 1\nn = 9\n"),
    ("lorentz", "experiments = lorentz\ntrials = 1000\ndisk_n = 257\n"),
    (
        "uniform2d",
        "experiments = uniform\nfield = all\ndim = 2\nradii = 1,2,4\nspacing = 0.03125\nsources = 0,0;0.5,0.5;0.25,0.25\n",
    ),
    (
        "uniform3d",
        "experiments = uniform\nfield = all\ndim = 3\nradii = 1,2,4\nspacing = 0.25\nsources = 0,0,0;0.5,0.5,0.5;0.25,0.25,0.25\n",
    ),
    (
        "lift_identity",
        "experiments = lift\nfield = identity\ndim = 2\nradius = 1\nn = 33\nkappa = 4\nwindow = 0.25,0.5\nlift_tol = 0.15\n",
    ),
    (
        "lift_trig",
        "experiments = lift\nfield = scalar_trig\ndim = 2\nradius = 1\nn = 33\nkappa = 4\nwindow = 0.25,0.5\nlift_tol = 0.2\n",
    ),
    ("ratio2d", "experiments = ratio\nfield = all\ndim = 2\nradius = 4\nn = 257\n"),
    ("ratio3d", "experiments = ratio\nfield = identity\ndim = 3\nradius = 2\nn = 65\n"),
];

//! Flat `key = value` model configuration.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Unknown or repeated keys are rejected with the offending line number.
//! Keys not present keep the defaults of [`ModelConfig::default_for`].

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{
    CollisionDensity, DephasingRoute, LaserModel, Schedule, SpinModel, DEFAULT_NODES, MIN_NODES,
};

pub const KEYS: &[&str] = &[
    "model", "delta", "omega", "lambda0", "density", "theta_b", "E", "T", "steps", "p", "schedule",
    "seed", "nodes", "route",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Emission,
    Dephasing,
    Spin,
}

impl ModelKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "emission" => Some(ModelKind::Emission),
            "dephasing" => Some(ModelKind::Dephasing),
            "spin" => Some(ModelKind::Spin),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Emission => "emission",
            ModelKind::Dephasing => "dephasing",
            ModelKind::Spin => "spin",
        }
    }
}

/// Named density shape; the overall scale comes from `lambda0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DensityShape {
    Constant,
    ShiftedSine,
    Gaussian { center: f64, width: f64 },
}

impl DensityShape {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "constant" => return Some(DensityShape::Constant),
            "shifted_sine" => return Some(DensityShape::ShiftedSine),
            _ => {}
        }
        let inner = s.strip_prefix("gaussian(")?.strip_suffix(')')?;
        let (c, w) = inner.split_once(',')?;
        Some(DensityShape::Gaussian { center: c.trim().parse().ok()?, width: w.trim().parse().ok()? })
    }

    pub fn render(&self) -> String {
        match self {
            DensityShape::Constant => "constant".into(),
            DensityShape::ShiftedSine => "shifted_sine".into(),
            DensityShape::Gaussian { center, width } => format!("gaussian({center}, {width})"),
        }
    }

    pub fn with_scale(&self, lambda0: f64) -> CollisionDensity {
        match *self {
            DensityShape::Constant => CollisionDensity::Constant { lambda0 },
            DensityShape::ShiftedSine => CollisionDensity::ShiftedSine { lambda0 },
            DensityShape::Gaussian { center, width } => CollisionDensity::NarrowGaussian { lambda0, center, width },
        }
    }
}

/// Fully resolved model configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: ModelKind,
    pub delta: f64,
    pub omega: f64,
    /// Emission rate, or dephasing density scale.
    pub lambda0: f64,
    pub density: DensityShape,
    pub theta_b: f64,
    #[serde(rename = "E")]
    pub energy: f64,
    #[serde(rename = "T")]
    pub period: f64,
    pub steps: usize,
    pub p: f64,
    pub schedule: Schedule,
    pub seed: u64,
    pub nodes: usize,
    pub route: DephasingRoute,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::default_for(ModelKind::Emission)
    }
}

impl ModelConfig {
    /// Emission and dephasing share the optical defaults; the spin model
    /// defaults to a slow smooth loop at `theta_b = pi/4`.
    pub fn default_for(model: ModelKind) -> Self {
        let mut c = ModelConfig {
            model,
            delta: 0.5,
            omega: 1.0,
            lambda0: 0.005,
            density: DensityShape::ShiftedSine,
            theta_b: PI / 4.0,
            energy: 1.0,
            period: 500.0,
            steps: 200_000,
            p: 0.5,
            schedule: Schedule::Linear,
            seed: 0,
            nodes: DEFAULT_NODES,
            route: DephasingRoute::Quadrature { nodes: DEFAULT_NODES },
        };
        if model == ModelKind::Spin {
            c.lambda0 = 0.001;
            c.density = DensityShape::Constant;
            c.period = 1600.0;
            c.steps = 160_000;
            c.schedule = Schedule::Smooth;
            c.route = DephasingRoute::Reduced;
        }
        c
    }

    /// Parses a config file body. The `model` key, wherever it appears,
    /// selects the defaults that the remaining keys override.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = tokenize(text)?;
        let model = match entries.iter().find(|(_, k, _)| k == "model") {
            Some((line, _, v)) => ModelKind::parse(v)
                .ok_or_else(|| config_err(*line, format!("unknown model '{v}' (emission | dephasing | spin)")))?,
            None => ModelKind::Emission,
        };
        let mut cfg = ModelConfig::default_for(model);
        for (line, key, value) in &entries {
            cfg.set(key, value).map_err(|m| config_err(*line, m))?;
        }
        Ok(cfg)
    }

    /// Applies `key=value` overrides (line 0 marks the command line).
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| config_err(0, format!("override '{o}' is not key=value")))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "model" {
                let kind = ModelKind::parse(v).ok_or_else(|| config_err(0, format!("unknown model '{v}'")))?;
                if kind != self.model {
                    let mut fresh = ModelConfig::default_for(kind);
                    fresh.steps = self.steps;
                    fresh.seed = self.seed;
                    *self = fresh;
                }
                continue;
            }
            self.set(k, v).map_err(|m| config_err(0, m))?;
        }
        Ok(())
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let num = || value.parse::<f64>().map_err(|_| format!("{key}: '{value}' is not a number"));
        let int = || value.parse::<u64>().map_err(|_| format!("{key}: '{value}' is not a nonnegative integer"));
        match key {
            "model" => {
                if ModelKind::parse(value) != Some(self.model) {
                    return Err(format!("model '{value}' conflicts with earlier selection"));
                }
            }
            "delta" => self.delta = num()?,
            "omega" => self.omega = num()?,
            "lambda0" => self.lambda0 = num()?,
            "density" => {
                self.density = DensityShape::parse(value).ok_or_else(|| {
                    format!("density '{value}' (constant | shifted_sine | gaussian(center, width))")
                })?
            }
            "theta_b" => self.theta_b = num()?,
            "E" => self.energy = num()?,
            "T" => self.period = num()?,
            "steps" => self.steps = int()? as usize,
            "p" => self.p = num()?,
            "schedule" => {
                self.schedule =
                    Schedule::parse(value).ok_or_else(|| format!("schedule '{value}' (linear | smooth)"))?
            }
            "seed" => self.seed = int()?,
            "nodes" => {
                self.nodes = int()? as usize;
                if let DephasingRoute::Quadrature { .. } = self.route {
                    self.route = DephasingRoute::Quadrature { nodes: self.nodes };
                }
            }
            "route" => {
                self.route = match value {
                    "quadrature" => DephasingRoute::Quadrature { nodes: self.nodes },
                    "reduced" => DephasingRoute::Reduced,
                    _ => return Err(format!("route '{value}' (quadrature | reduced)")),
                }
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Checks every physical parameter; nothing is integrated before this passes.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.steps >= 1) {
            return bad("steps must be at least 1".into());
        }
        if !(self.nodes >= MIN_NODES) {
            return bad(format!("nodes must be at least {MIN_NODES}"));
        }
        if !(self.lambda0 >= 0.0 && self.lambda0.is_finite()) {
            return Err(Error::NegativeRate(self.lambda0));
        }
        if !(self.p.abs() <= 0.5) {
            return bad(format!("|p| must be at most 1/2, got {}", self.p));
        }
        match self.model {
            ModelKind::Emission | ModelKind::Dephasing => self.laser_model().map(|_| ()),
            ModelKind::Spin => self.spin_model().map(|_| ()),
        }
    }

    pub fn collision_density(&self) -> CollisionDensity {
        self.density.with_scale(self.lambda0)
    }

    /// The optical model selected by `model = emission | dephasing`.
    pub fn laser_model(&self) -> Result<LaserModel> {
        let m = LaserModel::new(self.delta, self.omega, self.period)?.with_schedule(self.schedule);
        match self.model {
            ModelKind::Emission => m.with_emission(self.lambda0),
            ModelKind::Dephasing => m.with_dephasing(self.collision_density(), self.nodes),
            ModelKind::Spin => Err(Error::InvalidArgument("spin config has no optical model".into())),
        }
    }

    pub fn spin_model(&self) -> Result<SpinModel> {
        let m = SpinModel::new(self.energy, self.theta_b, self.period)?
            .with_schedule(self.schedule)
            .with_route(self.route);
        if self.lambda0 > 0.0 {
            m.with_dephasing(self.collision_density())
        } else {
            Ok(m)
        }
    }

    /// Text form that [`ModelConfig::parse`] reads back to an equal value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let route = match self.route {
            DephasingRoute::Quadrature { .. } => "quadrature",
            DephasingRoute::Reduced => "reduced",
        };
        let pairs: [(&str, String); 14] = [
            ("model", self.model.name().into()),
            ("delta", self.delta.to_string()),
            ("omega", self.omega.to_string()),
            ("lambda0", self.lambda0.to_string()),
            ("density", self.density.render()),
            ("theta_b", self.theta_b.to_string()),
            ("E", self.energy.to_string()),
            ("T", self.period.to_string()),
            ("steps", self.steps.to_string()),
            ("p", self.p.to_string()),
            ("schedule", self.schedule.name().into()),
            ("seed", self.seed.to_string()),
            ("nodes", self.nodes.to_string()),
            ("route", route.into()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

fn config_err(line: usize, message: String) -> Error {
    Error::Config { line, message }
}

fn tokenize(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| config_err(line, format!("expected 'key = value', found '{body}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(config_err(line, format!("unknown key '{k}'")));
        }
        if v.is_empty() {
            return Err(config_err(line, format!("missing value for '{k}'")));
        }
        if let Some((first, _, _)) = out.iter().find(|(_, key, _)| key == k) {
            return Err(config_err(line, format!("'{k}' already set on line {first}")));
        }
        out.push((line, k.to_string(), v.to_string()));
    }
    Ok(out)
}

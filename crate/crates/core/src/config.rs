//! Run configuration: `key=value` pairs whose keys are the long CLI flag
//! names. A config file is applied first and command-line flags on top.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::datagen::{generate, GeneratorKind, GeneratorSpec};
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, Scheme};
use crate::foliation::ReferenceSurfaceData;
use crate::grid::{Field, Grid};
use crate::io::{fmt_f64, parse_key_values, read_reference, read_text};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CheckName {
    AreaDissipation,
    AreaMonotone,
    EqH,
    HeightBand,
    ThetaIdentity,
    VolumeDrift,
}

impl CheckName {
    pub const ALL: [CheckName; 6] = [
        CheckName::AreaDissipation,
        CheckName::AreaMonotone,
        CheckName::EqH,
        CheckName::HeightBand,
        CheckName::ThetaIdentity,
        CheckName::VolumeDrift,
    ];
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CheckName::AreaDissipation => "area-dissipation",
            CheckName::AreaMonotone => "area-monotone",
            CheckName::EqH => "eq-h",
            CheckName::HeightBand => "height-band",
            CheckName::ThetaIdentity => "theta-identity",
            CheckName::VolumeDrift => "volume-drift",
        })
    }
}

impl FromStr for CheckName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        CheckName::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown check '{s}'")))
    }
}

/// Inclusive, evenly spaced sweep over `[r_min, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRange {
    pub r_min: f64,
    pub r_max: f64,
    pub count: usize,
}

impl SweepRange {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.r_min];
        }
        let step = (self.r_max - self.r_min) / (self.count - 1) as f64;
        (0..self.count).map(|k| self.r_min + step * k as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub generator: GeneratorSpec,
    /// Reference data file; takes precedence over the generator.
    pub data: Option<PathBuf>,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub r: f64,
    pub sweep: Option<SweepRange>,
    /// Amplitude of the `sin(2πx/lx)` perturbation added to the initial leaf.
    pub perturb: f64,
    pub flow: FlowConfig,
    pub out: PathBuf,
    pub checks: Vec<CheckName>,
    pub jobs: usize,
    /// Snapshot is rewritten every this many records.
    pub checkpoint_every: usize,
    pub dt_probe: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        RunConfig {
            generator: GeneratorSpec::fuchsian(),
            data: None,
            nx: 64,
            ny: 64,
            lx: two_pi,
            ly: two_pi,
            r: 0.0,
            sweep: None,
            perturb: 0.0,
            flow: FlowConfig::default(),
            out: PathBuf::from("out"),
            checks: CheckName::ALL.to_vec(),
            jobs: 1,
            checkpoint_every: 50,
            dt_probe: 1e-5,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::Config(format!("{key}: cannot parse '{value}': {e}")))
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!("{key}: expected a boolean, got '{other}'"))),
    }
}

impl RunConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let sweep = |c: &mut RunConfig| {
            *c.sweep.get_or_insert(SweepRange {
                r_min: c.r,
                r_max: c.r,
                count: 1,
            })
        };
        match key {
            "gen" => self.generator.kind = value.parse::<GeneratorKind>().map_err(|e| Error::Config(e.to_string()))?,
            "amp" => self.generator.amplitude = num(key, value)?,
            "seed" => self.generator.seed = num(key, value)?,
            "zero-mean-trace" => self.generator.zero_mean_trace = flag(key, value)?,
            "lam1" => self.generator.lam1 = num(key, value)?,
            "lam2" => self.generator.lam2 = num(key, value)?,
            "v-const" => self.generator.v_const = num(key, value)?,
            "v-amp" => self.generator.v_amplitude = num(key, value)?,
            "modes" => self.generator.modes = num(key, value)?,
            "max-wavenumber" => self.generator.max_wavenumber = num(key, value)?,
            "data" => self.data = (!value.is_empty()).then(|| PathBuf::from(value)),
            "nx" => self.nx = num(key, value)?,
            "ny" => self.ny = num(key, value)?,
            "lx" => self.lx = num(key, value)?,
            "ly" => self.ly = num(key, value)?,
            "r" => self.r = num(key, value)?,
            "r-min" => {
                let mut s = sweep(self);
                s.r_min = num(key, value)?;
                self.sweep = Some(s);
            }
            "r-max" => {
                let mut s = sweep(self);
                s.r_max = num(key, value)?;
                self.sweep = Some(s);
            }
            "r-count" => {
                let mut s = sweep(self);
                s.count = num(key, value)?;
                self.sweep = Some(s);
            }
            "perturb" => self.perturb = num(key, value)?,
            "dt-init" => self.flow.dt_init = num(key, value)?,
            "cfl-safety" => self.flow.cfl_safety = num(key, value)?,
            "t-max" => self.flow.t_max = num(key, value)?,
            "eps-converge" => self.flow.eps_converge = num(key, value)?,
            "eps-volume-drift" => self.flow.eps_volume_drift = num(key, value)?,
            "record-every" => self.flow.record_every = num(key, value)?,
            "scheme" => self.flow.scheme = value.parse::<Scheme>()?,
            "out" => self.out = PathBuf::from(value),
            "checks" => {
                self.checks = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(CheckName::from_str)
                    .collect::<Result<_>>()?;
                self.checks.sort();
                self.checks.dedup();
            }
            "jobs" => self.jobs = num(key, value)?,
            "checkpoint-every" => self.checkpoint_every = num(key, value)?,
            "dt-probe" => self.dt_probe = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn apply_pairs<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let pairs = parse_key_values(text, "config")?;
        cfg.apply_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        Ok(cfg)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        RunConfig::parse(&read_text(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        Grid::new(self.nx, self.ny, self.lx, self.ly).map_err(|e| Error::Config(e.to_string()))?;
        if !self.r.is_finite() || !self.perturb.is_finite() {
            return Err(Error::Config("r and perturb must be finite".into()));
        }
        if let Some(s) = self.sweep {
            if s.count == 0 {
                return Err(Error::Config("r-count must be at least 1".into()));
            }
            if !(s.r_min.is_finite() && s.r_max.is_finite()) || s.r_max < s.r_min {
                return Err(Error::Config(format!("invalid sweep range [{}, {}]", s.r_min, s.r_max)));
            }
        }
        if self.jobs == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config("jobs and checkpoint-every must be at least 1".into()));
        }
        if !(self.dt_probe.is_finite() && self.dt_probe > 0.0) {
            return Err(Error::Config(format!("dt-probe must be positive, got {}", self.dt_probe)));
        }
        Ok(())
    }

    /// Heights to run: the sweep if given, else the single `r`.
    pub fn r_values(&self) -> Vec<f64> {
        self.sweep.map(|s| s.values()).unwrap_or_else(|| vec![self.r])
    }

    pub fn reference_data(&self) -> Result<ReferenceSurfaceData> {
        match &self.data {
            Some(path) => read_reference(path),
            None => generate(&self.generator, self.nx, self.ny, self.lx, self.ly),
        }
    }

    /// `u₀ = r + perturb · sin(2πx/lx)`.
    pub fn initial_height(&self, grid: &Grid, r: f64) -> Field {
        let k = 2.0 * std::f64::consts::PI / grid.lx;
        let a = self.perturb;
        grid.sample(|x, _| r + a * (k * x).sin())
    }

    /// Every key with its effective value, sorted by key.
    pub fn canonical(&self) -> String {
        let g = &self.generator;
        let f = &self.flow;
        let mut pairs: Vec<(&str, String)> = vec![
            ("gen", g.kind.to_string()),
            ("amp", fmt_f64(g.amplitude)),
            ("seed", g.seed.to_string()),
            ("zero-mean-trace", g.zero_mean_trace.to_string()),
            ("lam1", fmt_f64(g.lam1)),
            ("lam2", fmt_f64(g.lam2)),
            ("v-const", fmt_f64(g.v_const)),
            ("v-amp", fmt_f64(g.v_amplitude)),
            ("modes", g.modes.to_string()),
            ("max-wavenumber", g.max_wavenumber.to_string()),
            ("data", self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("nx", self.nx.to_string()),
            ("ny", self.ny.to_string()),
            ("lx", fmt_f64(self.lx)),
            ("ly", fmt_f64(self.ly)),
            ("r", fmt_f64(self.r)),
            ("perturb", fmt_f64(self.perturb)),
            ("dt-init", fmt_f64(f.dt_init)),
            ("cfl-safety", fmt_f64(f.cfl_safety)),
            ("t-max", fmt_f64(f.t_max)),
            ("eps-converge", fmt_f64(f.eps_converge)),
            ("eps-volume-drift", fmt_f64(f.eps_volume_drift)),
            ("record-every", f.record_every.to_string()),
            ("scheme", f.scheme.to_string()),
            ("out", self.out.display().to_string()),
            (
                "checks",
                self.checks.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            ),
            ("jobs", self.jobs.to_string()),
            ("checkpoint-every", self.checkpoint_every.to_string()),
            ("dt-probe", fmt_f64(self.dt_probe)),
        ];
        if let Some(s) = self.sweep {
            pairs.push(("r-min", fmt_f64(s.r_min)));
            pairs.push(("r-max", fmt_f64(s.r_max)));
            pairs.push(("r-count", s.count.to_string()));
        }
        pairs.sort_by(|a, b| a.0.cmp(b.0));
        let mut out = String::new();
        for (k, v) in pairs {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip() {
        let mut c = RunConfig::default();
        c.apply_pairs([
            ("gen", "fourier-bump"),
            ("amp", "0.6"),
            ("seed", "7"),
            ("zero-mean-trace", "true"),
            ("r-min", "-1"),
            ("r-max", "2"),
            ("r-count", "4"),
            ("scheme", "semi-implicit"),
            ("checks", "volume-drift,eq-h"),
        ])
        .unwrap();
        let back = RunConfig::parse(&c.canonical()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.canonical(), c.canonical());
        assert_eq!(c.r_values(), vec![-1.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        let mut c = RunConfig::default();
        assert!(matches!(c.set("bogus", "1"), Err(Error::Config(_))));
        assert!(c.set("nx", "abc").is_err());
        c.set("cfl-safety", "1.5").unwrap();
        assert!(c.validate().is_err());
        assert!(RunConfig::parse("r-count=0").unwrap().validate().is_err());
    }

    #[test]
    fn later_settings_override() {
        let mut c = RunConfig::parse("r=1\nt-max=3\n").unwrap();
        c.apply_pairs([("t-max", "5")]).unwrap();
        assert_eq!(c.flow.t_max, 5.0);
        assert_eq!(c.r, 1.0);
    }
}

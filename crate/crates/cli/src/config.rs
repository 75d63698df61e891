//! Experiment configuration and parameter grids.
//!
//! A config file is TOML (or JSON) with shared keys at the top level and one
//! optional table per experiment whose keys override the shared ones:
//!
//! ```toml
//! seed = 7
//! trials = 50
//!
//! [dipe]
//! d = 64
//! q = [4, 16, 64]
//! ```
//!
//! Any of `d`, `q`, `k`, `epsilon`, `overlap` and `d_eps` may be a list; the
//! grid is their cartesian product in that nesting order.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use dipe_core::gdipe::DEFAULT_VARIANCE_CONSTANT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Dipe,
    Gdipe,
    Decision,
    Verify,
    Net,
}

impl Experiment {
    pub const ALL: [Experiment; 5] =
        [Experiment::Dipe, Experiment::Gdipe, Experiment::Decision, Experiment::Verify, Experiment::Net];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Dipe => "dipe",
            Experiment::Gdipe => "gdipe",
            Experiment::Decision => "decision",
            Experiment::Verify => "verify",
            Experiment::Net => "net",
        }
    }

    /// Stream label separating experiments that share a seed.
    pub fn stream_label(self) -> u64 {
        match self {
            Experiment::Dipe => 1,
            Experiment::Gdipe => 2,
            Experiment::Decision => 3,
            Experiment::Verify => 4,
            Experiment::Net => 5,
        }
    }
}

/// Protocol constants: copies `c`, pairs `c2`, block `c3`, variance bound.
/// `c3` defaults to 0, which turns the block requirement off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    pub c: f64,
    pub c2: f64,
    pub c3: f64,
    pub variance: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self { c: 4.0, c2: 2.0, c3: 0.0, variance: DEFAULT_VARIANCE_CONSTANT }
    }
}

/// One grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub d: usize,
    /// Block dimension for DIPE and the decision experiment.
    pub q: usize,
    /// Copies per party for GDIPE. DIPE derives its own from `c`.
    pub k: usize,
    pub epsilon: f64,
    /// Planted `|<psi|phi>|^2` for DIPE runs.
    pub overlap: f64,
    /// Support dimension of the random GDIPE observable; `None` draws a
    /// generic observable and lets truncation decide.
    pub d_eps: Option<usize>,
    /// DIPE pairs per run; `None` means `ceil(c2 / epsilon^2)` with the block
    /// requirement `q >= c3 log2(d) / epsilon^2` enforced.
    pub target_pairs: Option<usize>,
    pub max_rounds: usize,
    pub trials: usize,
    pub seed: u64,
    pub constants: Constants,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("d", self.d), ("q", self.q), ("k", self.k), ("trials", self.trials)] {
            if v == 0 {
                bail!("{name} must be positive");
            }
        }
        let blocked = matches!(self.experiment, Experiment::Dipe | Experiment::Decision | Experiment::Net);
        if blocked && self.q > self.d {
            bail!("q = {} exceeds d = {}", self.q, self.d);
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            bail!("epsilon = {} outside (0, 1]", self.epsilon);
        }
        if !(0.0..=1.0).contains(&self.overlap) {
            bail!("overlap = {} outside [0, 1]", self.overlap);
        }
        if let Some(de) = self.d_eps {
            if de == 0 || de > self.d {
                bail!("d_eps = {de} outside [1, d]");
            }
        }
        if self.target_pairs == Some(0) {
            bail!("target_pairs must be positive");
        }
        let c = &self.constants;
        if !(c.c > 0.0 && c.c2 > 0.0 && c.c3 >= 0.0 && c.variance > 0.0) {
            bail!("constants must be positive");
        }
        Ok(())
    }
}

/// A scalar or a list of values along one grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> Axis<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            Axis::One(v) => vec![v.clone()],
            Axis::Many(v) => v.clone(),
        }
    }
}

impl<T> From<T> for Axis<T> {
    fn from(v: T) -> Self {
        Axis::One(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub experiment: Experiment,
    pub d: Axis<usize>,
    pub q: Axis<usize>,
    pub k: Axis<usize>,
    pub epsilon: Axis<f64>,
    pub overlap: Axis<f64>,
    pub d_eps: Option<Axis<usize>>,
    pub target_pairs: Option<usize>,
    pub max_rounds: usize,
    pub trials: usize,
    pub seed: u64,
    pub constants: Constants,
    pub output: Option<PathBuf>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Dipe,
            d: Axis::One(64),
            q: Axis::One(16),
            k: Axis::One(40),
            epsilon: Axis::One(0.3),
            overlap: Axis::One(0.5),
            d_eps: None,
            target_pairs: None,
            max_rounds: 10_000,
            trials: 10,
            seed: 0,
            constants: Constants::default(),
            output: None,
        }
    }
}

impl GridConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self { experiment, ..Self::default() }
    }

    /// Expand to grid points, validating each.
    pub fn points(&self) -> Result<Vec<ExperimentConfig>> {
        let d_eps: Vec<Option<usize>> = match &self.d_eps {
            None => vec![None],
            Some(a) => a.values().into_iter().map(Some).collect(),
        };
        let mut out = Vec::new();
        for d in self.d.values() {
            for q in self.q.values() {
                for k in self.k.values() {
                    for epsilon in self.epsilon.values() {
                        for overlap in self.overlap.values() {
                            for &de in &d_eps {
                                let p = ExperimentConfig {
                                    experiment: self.experiment,
                                    d,
                                    q,
                                    k,
                                    epsilon,
                                    overlap,
                                    d_eps: de,
                                    target_pairs: self.target_pairs,
                                    max_rounds: self.max_rounds,
                                    trials: self.trials,
                                    seed: self.seed,
                                    constants: self.constants,
                                    output: self.output.clone(),
                                };
                                p.validate().with_context(|| format!("grid point {}", out.len()))?;
                                out.push(p);
                            }
                        }
                    }
                }
            }
        }
        if out.is_empty() {
            bail!("empty grid");
        }
        Ok(out)
    }

    /// Parse config text for `experiment`; `json` selects the JSON syntax.
    pub fn parse(text: &str, json: bool, experiment: Experiment) -> Result<Self> {
        let root: Value = if json {
            serde_json::from_str(text).context("invalid JSON config")?
        } else {
            toml::from_str(text).context("invalid TOML config")?
        };
        let Value::Object(mut top) = root else { bail!("config must be a table") };
        let section = top.remove(experiment.name());
        for e in Experiment::ALL {
            top.remove(e.name());
        }
        let mut merged: Map<String, Value> = top;
        match section {
            Some(Value::Object(s)) => merged.extend(s),
            Some(_) => bail!("[{}] must be a table", experiment.name()),
            None => {}
        }
        merged.insert("experiment".into(), Value::String(experiment.name().into()));
        serde_json::from_value(Value::Object(merged)).context("invalid config fields")
    }

    pub fn load(path: &Path, experiment: Experiment) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let json = path.extension().is_some_and(|e| e == "json");
        Self::parse(&text, json, experiment)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_override_shared_keys() {
        let text = "seed = 7\ntrials = 3\nd = 32\n\n[dipe]\nq = [4, 16]\ntrials = 5\n\n[gdipe]\nk = [10, 40]\n";
        let g = GridConfig::parse(text, false, Experiment::Dipe).unwrap();
        assert_eq!((g.seed, g.trials), (7, 5));
        let pts = g.points().unwrap();
        assert_eq!(pts.iter().map(|p| p.q).collect::<Vec<_>>(), vec![4, 16]);
        assert!(pts.iter().all(|p| p.d == 32 && p.k == 40));

        let g = GridConfig::parse(text, false, Experiment::Gdipe).unwrap();
        assert_eq!(g.trials, 3);
        assert_eq!(g.points().unwrap().iter().map(|p| p.k).collect::<Vec<_>>(), vec![10, 40]);
    }

    #[test]
    fn json_and_toml_agree() {
        let toml_text = "d = [8, 16]\nepsilon = 0.5\n[constants]\nc = 2.0\n";
        let json_text = r#"{"d": [8, 16], "epsilon": 0.5, "constants": {"c": 2.0}}"#;
        let a = GridConfig::parse(toml_text, false, Experiment::Gdipe).unwrap();
        let b = GridConfig::parse(json_text, true, Experiment::Gdipe).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.constants.c2, 2.0);
    }

    #[test]
    fn configs_round_trip() {
        let mut g = GridConfig::new(Experiment::Decision);
        g.d = Axis::Many(vec![8, 32]);
        g.q = Axis::One(4);
        g.d_eps = Some(Axis::One(4));
        let back: GridConfig = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
        let back: GridConfig = toml::from_str(&toml::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
        for p in g.points().unwrap() {
            let s = serde_json::to_string(&p).unwrap();
            assert_eq!(serde_json::from_str::<ExperimentConfig>(&s).unwrap(), p);
        }
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let mut g = GridConfig::default();
        g.epsilon = Axis::Many(vec![0.5, 1.5]);
        assert!(g.points().is_err());
        let mut g = GridConfig::default();
        g.q = Axis::One(128);
        assert!(g.points().is_err());
        let mut g = GridConfig::default();
        g.d = Axis::Many(vec![]);
        assert!(g.points().is_err());
        assert!(GridConfig::parse("bogus = 1", false, Experiment::Dipe).is_err());
    }
}

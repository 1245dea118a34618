//! TOML experiment files for the command-line front end.
//!
//! ```toml
//! task = "semigroup"
//! seed = 0
//! format = "csv"
//!
//! [model]
//! labels = ["a", "b"]
//! rates = [[-1.0, 1.0], [2.0, -2.0]]
//!
//! [params]
//! t = 1.0
//! f = [0.0, 0.6931471805599453]
//! ```
//!
//! The README lists every key.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ldp::{build_density_family, DensityModel, ScaledFamily};
use crate::markov::{Generator, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Option<String>,
    pub seed: Option<u64>,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
    pub model: Option<ModelConfig>,
    pub family: Option<FamilyConfig>,
    #[serde(default)]
    pub params: Params,
}

/// A generator given densely, by sparse triples, or drawn at random.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub labels: Option<Vec<String>>,
    pub rates: Option<Vec<Vec<f64>>>,
    pub transitions: Option<Vec<(String, String, f64)>>,
    pub random: Option<RandomModel>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomModel {
    pub states: usize,
    #[serde(default = "one")]
    pub max_rate: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    #[serde(default = "ehrenfest")]
    pub kind: String,
    pub n_list: Vec<usize>,
    pub birth: Option<Vec<f64>>,
    pub death: Option<Vec<f64>>,
}

fn ehrenfest() -> String {
    "ehrenfest".into()
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub lambda: Option<f64>,
    pub t: Option<f64>,
    pub r: Option<f64>,
    pub m: Option<Vec<usize>>,
    pub h: Option<Vec<f64>>,
    pub f: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub epsilons: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub functions: Option<Vec<String>>,
    pub interval: Option<[f64; 2]>,
    pub times: Option<Vec<f64>>,
    pub pairs: Option<Vec<[f64; 2]>>,
    pub n_ref: Option<usize>,
    pub depth: Option<u32>,
    pub path_times: Option<Vec<f64>>,
    pub path_points: Option<Vec<f64>>,
    pub initial_center: Option<f64>,
    pub initial_scale: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

impl ModelConfig {
    /// Builds the generator; `rng` is only consulted for `random` models.
    pub fn build<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Generator> {
        let given = [self.rates.is_some(), self.transitions.is_some(), self.random.is_some()];
        if given.iter().filter(|&&g| g).count() != 1 {
            return Err(Error::arg("model", "give exactly one of `rates`, `transitions` or `random`"));
        }
        if let Some(random) = &self.random {
            if self.labels.is_some() {
                return Err(Error::arg("model.labels", "not used with `random`"));
            }
            return Generator::random(rng, random.states, random.max_rate);
        }
        if let Some(rows) = &self.rates {
            let n = rows.len();
            let space = self.space(n)?;
            if let Some(i) = rows.iter().position(|r| r.len() != n) {
                return Err(Error::arg("model.rates", format!("row {i} has {} entries, expected {n}", rows[i].len())));
            }
            let rates = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            return Generator::new(space, rates);
        }
        let triples = self.transitions.as_deref().unwrap_or_default();
        let labels = self
            .labels
            .clone()
            .ok_or_else(|| Error::arg("model.labels", "required with `transitions`"))?;
        let space = StateSpace::new(labels)?;
        let indexed = triples
            .iter()
            .map(|(from, to, rate)| Ok((space.index_of(from)?, space.index_of(to)?, *rate)))
            .collect::<Result<Vec<_>>>()?;
        Generator::from_transitions(space, &indexed)
    }

    fn space(&self, n: usize) -> Result<StateSpace> {
        match &self.labels {
            Some(labels) if labels.len() != n => Err(Error::arg(
                "model.labels",
                format!("{} labels for {n} states", labels.len()),
            )),
            Some(labels) => StateSpace::new(labels.clone()),
            None => StateSpace::indexed(n),
        }
    }
}

impl FamilyConfig {
    pub fn build(&self) -> Result<ScaledFamily> {
        let model = match self.kind.as_str() {
            "ehrenfest" => {
                if self.birth.is_some() || self.death.is_some() {
                    return Err(Error::arg("family.birth", "not used with kind = \"ehrenfest\""));
                }
                DensityModel::ehrenfest()
            }
            "birth-death" => {
                let birth = self.birth.clone().ok_or_else(|| Error::arg("family.birth", "required"))?;
                let death = self.death.clone().ok_or_else(|| Error::arg("family.death", "required"))?;
                DensityModel::polynomial(birth, death)?
            }
            other => {
                return Err(Error::arg(
                    "family.kind",
                    format!("unknown kind `{other}` (expected \"ehrenfest\" or \"birth-death\")"),
                ))
            }
        };
        build_density_family(&model, &self.n_list)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn dense_sparse_and_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dense: ExperimentConfig = ExperimentConfig::from_toml(
            "[model]\nlabels = [\"a\", \"b\"]\nrates = [[-1.0, 1.0], [2.0, -2.0]]\n",
        )
        .unwrap();
        let sparse: ExperimentConfig = ExperimentConfig::from_toml(
            "[model]\nlabels = [\"a\", \"b\"]\ntransitions = [[\"a\", \"b\", 1.0], [\"b\", \"a\", 2.0]]\n",
        )
        .unwrap();
        let a = dense.model.unwrap().build(&mut rng).unwrap();
        let b = sparse.model.unwrap().build(&mut rng).unwrap();
        assert_eq!(a.rates(), b.rates());
        assert_eq!(b.space().labels(), &["a".to_string(), "b".to_string()]);
        let random: ExperimentConfig = ExperimentConfig::from_toml("[model.random]\nstates = 4\n").unwrap();
        let q1 = random.model.clone().unwrap().build(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let q2 = random.model.unwrap().build(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(q1.rates(), q2.rates());
    }

    #[test]
    fn rejects_bad_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let both = ModelConfig {
            rates: Some(vec![vec![0.0]]),
            transitions: Some(vec![]),
            ..Default::default()
        };
        assert!(both.build(&mut rng).is_err());
        let ragged = ModelConfig {
            rates: Some(vec![vec![-1.0, 1.0], vec![0.0]]),
            ..Default::default()
        };
        assert!(ragged.build(&mut rng).is_err());
        let unknown = ModelConfig {
            labels: Some(vec!["a".into()]),
            transitions: Some(vec![("a".into(), "z".into(), 1.0)]),
            ..Default::default()
        };
        assert!(matches!(unknown.build(&mut rng), Err(Error::UnknownState(_))));
        assert!(ExperimentConfig::from_toml("bogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[params]\nlambda = \"x\"\n").is_err());
    }

    #[test]
    fn families() {
        let cfg = ExperimentConfig::from_toml("[family]\nn_list = [2, 4]\n").unwrap();
        let fam = cfg.family.unwrap().build().unwrap();
        assert_eq!(fam.level_sizes(), vec![2, 4]);
        let poly = FamilyConfig {
            kind: "birth-death".into(),
            n_list: vec![4],
            birth: Some(vec![1.0, -1.0]),
            death: Some(vec![0.0, 1.0]),
        };
        assert_eq!(
            poly.build().unwrap().levels()[0].generator().rates(),
            fam.level(4).unwrap().generator().rates()
        );
        let bad = FamilyConfig {
            kind: "logistic".into(),
            ..poly
        };
        assert!(bad.build().is_err());
    }
}

//! Flat `key = value` run configuration shared by every subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gnp_core::{
    Activation, Coefficient, DatasetKind, DatasetSpec, GnpConfig, InitScheme, ModelSpec, ProbeConfig, Schedule, Scheme,
};
use sha2::{Digest, Sha256};

/// Environment variable selecting the output directory root.
pub const OUT_DIR_ENV: &str = "GNP_OUT_DIR";

pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Every setting of a training run. Parsed from flat key/value pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
    pub r: f64,
    pub p: u32,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub grad_floor: f64,

    pub dataset: String,
    pub size: usize,
    pub noise: f64,
    pub data_seed: u64,
    pub split: f64,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,

    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init: InitScheme,

    pub probe: bool,
    pub probe_rho: f64,
    pub probe_samples: usize,
    pub probe_ascent: usize,
    pub probe_iters: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Gnp,
            alpha: None,
            lambda: None,
            r: 0.05,
            p: 2,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            schedule: Schedule::Cosine,
            epochs: 30,
            batch_size: 64,
            seed: 0,
            grad_floor: 1e-12,
            dataset: "two_moons".into(),
            size: 2000,
            noise: 0.2,
            data_seed: 0,
            split: 0.5,
            idx_images: None,
            idx_labels: None,
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            init: InitScheme::Glorot,
            probe: true,
            probe_rho: 0.05,
            probe_samples: 64,
            probe_ascent: 10,
            probe_iters: 20,
        }
    }
}

/// Default balance coefficient when neither alpha nor lambda is given.
pub const DEFAULT_ALPHA: f64 = 0.8;

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| anyhow!("invalid value {value:?} for {key}: {e}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim().trim_matches('"');
        match key.trim() {
            "scheme" => {
                self.scheme = match v {
                    "standard" => Scheme::Standard,
                    "sam" => Scheme::Sam,
                    "gnp" => Scheme::Gnp,
                    _ => bail!("scheme must be standard, sam or gnp, got {v:?}"),
                }
            }
            "alpha" => self.alpha = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "lambda" => self.lambda = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "r" => self.r = parse(key, v)?,
            "p" => self.p = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "schedule" => {
                self.schedule = match v {
                    "constant" => Schedule::Constant,
                    "cosine" => Schedule::Cosine,
                    _ => bail!("schedule must be constant or cosine, got {v:?}"),
                }
            }
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "grad_floor" => self.grad_floor = parse(key, v)?,
            "dataset" => self.dataset = v.to_string(),
            "size" => self.size = parse(key, v)?,
            "noise" => self.noise = parse(key, v)?,
            "data_seed" => self.data_seed = parse(key, v)?,
            "split" => self.split = parse(key, v)?,
            "idx_images" => self.idx_images = (!v.is_empty()).then(|| PathBuf::from(v)),
            "idx_labels" => self.idx_labels = (!v.is_empty()).then(|| PathBuf::from(v)),
            "hidden" => self.hidden = parse_list(key, v)?,
            "activation" => {
                self.activation = match v {
                    "tanh" => Activation::Tanh,
                    "relu" => Activation::Relu,
                    _ => bail!("activation must be tanh or relu, got {v:?}"),
                }
            }
            "init" => {
                self.init = match v {
                    "he" => InitScheme::He,
                    "glorot" => InitScheme::Glorot,
                    _ => bail!("init must be he or glorot, got {v:?}"),
                }
            }
            "probe" => self.probe = parse(key, v)?,
            "probe_rho" => self.probe_rho = parse(key, v)?,
            "probe_samples" => self.probe_samples = parse(key, v)?,
            "probe_ascent" => self.probe_ascent = parse(key, v)?,
            "probe_iters" => self.probe_iters = parse(key, v)?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order; later entries win.
    pub fn apply<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Canonical key/value snapshot, sorted by key.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let scheme = match self.scheme {
            Scheme::Standard => "standard",
            Scheme::Sam => "sam",
            Scheme::Gnp => "gnp",
        };
        let schedule = match self.schedule {
            Schedule::Constant => "constant",
            Schedule::Cosine => "cosine",
        };
        let act = match self.activation {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        };
        let init = match self.init {
            InitScheme::He => "he",
            InitScheme::Glorot => "glorot",
        };
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        [
            ("scheme", scheme.to_string()),
            ("alpha", opt(self.alpha)),
            ("lambda", opt(self.lambda)),
            ("r", fmt_f64(self.r)),
            ("p", self.p.to_string()),
            ("lr", fmt_f64(self.lr)),
            ("momentum", fmt_f64(self.momentum)),
            ("weight_decay", fmt_f64(self.weight_decay)),
            ("schedule", schedule.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("grad_floor", fmt_f64(self.grad_floor)),
            ("dataset", self.dataset.clone()),
            ("size", self.size.to_string()),
            ("noise", fmt_f64(self.noise)),
            ("data_seed", self.data_seed.to_string()),
            ("split", fmt_f64(self.split)),
            ("idx_images", path(&self.idx_images)),
            ("idx_labels", path(&self.idx_labels)),
            ("hidden", hidden.join(",")),
            ("activation", act.to_string()),
            ("init", init.to_string()),
            ("probe", self.probe.to_string()),
            ("probe_rho", fmt_f64(self.probe_rho)),
            ("probe_samples", self.probe_samples.to_string()),
            ("probe_ascent", self.probe_ascent.to_string()),
            ("probe_iters", self.probe_iters.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply(map.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        Ok(cfg)
    }

    pub fn to_file_string(&self) -> String {
        self.to_map().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Hex SHA-256 of the canonical snapshot; identifies a run.
    pub fn hash(&self) -> String {
        hex_digest(self.to_file_string().as_bytes())
    }

    pub fn gnp_config(&self, total_steps: u64) -> Result<GnpConfig> {
        let coefficient = match self.scheme {
            Scheme::Gnp => GnpConfig::coefficient_from(self.alpha, self.lambda, DEFAULT_ALPHA)?,
            Scheme::Standard | Scheme::Sam => {
                if self.alpha.is_some() && self.lambda.is_some() {
                    bail!("specify either alpha or lambda, not both");
                }
                Coefficient::Alpha(if self.scheme == Scheme::Sam { 1.0 } else { 0.0 })
            }
        };
        let cfg = GnpConfig {
            scheme: self.scheme,
            coefficient,
            r: self.r,
            p: self.p,
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
            schedule: self.schedule,
            total_steps,
            grad_floor: self.grad_floor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let kind = match self.dataset.as_str() {
            "two_moons" => DatasetKind::TwoMoons,
            "gaussian_blobs" => DatasetKind::GaussianBlobs,
            "spirals" => DatasetKind::Spirals,
            "idx_files" => DatasetKind::IdxFiles {
                images: self.idx_images.clone().context("idx_files needs idx_images")?,
                labels: self.idx_labels.clone().context("idx_files needs idx_labels")?,
            },
            other => bail!("unknown dataset {other:?}"),
        };
        Ok(DatasetSpec {
            kind,
            size: self.size,
            noise: self.noise,
            seed: self.data_seed,
            split: self.split,
        })
    }

    pub fn model_spec(&self, input_dim: usize, classes: usize) -> ModelSpec {
        let mut sizes = vec![input_dim];
        sizes.extend(&self.hidden);
        sizes.push(classes);
        ModelSpec::mlp(sizes, self.activation, self.init, self.seed)
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            rho: self.probe_rho,
            n_samples: self.probe_samples,
            ascent_steps: self.probe_ascent,
            power_iters: self.probe_iters,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gnp_config(1)?;
        self.dataset_spec()?.validate()?;
        if self.epochs == 0 {
            bail!("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            bail!("batch_size must be >= 1");
        }
        Ok(())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses `key = value` lines. `#` starts a comment; blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value, got {raw:?}", lineno + 1))?;
        out.push((k.trim().to_string(), v.trim().trim_matches('"').to_string()));
    }
    Ok(out)
}

pub fn read_kv_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_kv(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Splits a `key=value` override.
pub fn split_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("expected key=value, got {s:?}"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_map() {
        let mut cfg = RunConfig::default();
        cfg.apply([("alpha", "0.3"), ("hidden", "8,4"), ("scheme", "sam")])
            .unwrap();
        let back = RunConfig::from_map(&cfg.to_map()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn both_alpha_and_lambda_is_an_error() {
        let mut cfg = RunConfig::default();
        cfg.apply([("alpha", "0.8"), ("lambda", "0.04")]).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lambda_derives_alpha() {
        let mut cfg = RunConfig::default();
        cfg.apply([("lambda", "0.04"), ("r", "0.05")]).unwrap();
        let g = cfg.gnp_config(10).unwrap();
        assert!((g.alpha() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("# comment\nalpha = 0.5  # trailing\n\nschedule=\"cosine\"\n").unwrap();
        assert_eq!(
            kv,
            vec![("alpha".into(), "0.5".into()), ("schedule".into(), "cosine".into())]
        );
        assert!(parse_kv("nonsense").is_err());
        let mut cfg = RunConfig::default();
        assert!(cfg.set("bogus", "1").is_err());
        assert!(cfg.set("scheme", "adam").is_err());
    }

    #[test]
    fn hash_changes_with_any_key() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.set("seed", "1").unwrap();
        assert_ne!(a.hash(), b.hash());
    }
}

//! Run configuration as flat `dotted.key = value` lines with `#` comments.
//!
//! Lists are space-separated; matrix rows are separated by `;`. Values may be
//! wrapped in double quotes. Unknown keys are an error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use iddm_core::data::{estimate_prior, generate, DatasetSpec, ToyDataset};
use iddm_core::schedule::{build_grid, GammaSchedule, LambdaSchedule, StepGrid};
use iddm_core::Simplex;

use crate::error::{io_at, CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorKind {
    Uniform,
    /// Token frequencies of the training set with add-one smoothing.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from `train.lr` at step 0 down to zero at the last step.
    Cosine,
}

impl LrSchedule {
    pub fn name(&self) -> &'static str {
        match self {
            LrSchedule::Constant => "constant",
            LrSchedule::Cosine => "cosine",
        }
    }

    pub fn rate(&self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let frac = step as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub dataset_samples: usize,
    pub dataset_seed: u64,
    pub prior: PriorKind,
    pub gamma: GammaSchedule,
    pub lambda: f64,
    pub rho: f64,
    pub steps: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub batch: usize,
    pub train_steps: usize,
    pub train_seed: u64,
    /// `s = t - dt` during training; 0 means `1 / steps`.
    pub train_dt: f64,
    /// Training draws times on the clock `u` with `t = u^rho`; `None` follows
    /// `sampler.rho`.
    pub train_rho: Option<f64>,
    pub log_every: usize,
    pub hidden: usize,
    pub time_dim: usize,
}

/// Four-state Markov chain over three tokens used when nothing else is given.
pub fn default_markov() -> DatasetSpec {
    let row = |v: [f64; 4]| Simplex::new(v.to_vec()).expect("valid row");
    DatasetSpec::MarkovChain {
        initial: row([0.4, 0.3, 0.2, 0.1]),
        transition: vec![
            row([0.1, 0.7, 0.1, 0.1]),
            row([0.1, 0.1, 0.7, 0.1]),
            row([0.1, 0.1, 0.1, 0.7]),
            row([0.7, 0.1, 0.1, 0.1]),
        ],
        length: 3,
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: default_markov(),
            dataset_samples: 16384,
            dataset_seed: 0,
            prior: PriorKind::Uniform,
            gamma: GammaSchedule::Linear,
            lambda: 0.0,
            rho: 4.0,
            steps: 64,
            optimizer: OptimizerKind::Adam,
            lr: 3e-3,
            lr_schedule: LrSchedule::Cosine,
            batch: 64,
            train_steps: 2000,
            train_seed: 0,
            train_dt: 0.0,
            train_rho: None,
            log_every: 100,
            hidden: 64,
            time_dim: 16,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    v.split_whitespace().map(|x| parse_num(key, x)).collect()
}

fn parse_simplex(key: &str, v: &str) -> std::result::Result<Simplex, String> {
    Simplex::new(parse_list(key, v)?).map_err(|e| format!("{key}: {e}"))
}

fn fmt_list<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| CliError::Config {
                line,
                message: "expected key = value".into(),
            })?;
            let key = key.trim();
            let mut value = value.trim();
            if value.len() >= 2 && value.starts_with('"') && value.ends_with('"') {
                value = &value[1..value.len() - 1];
            }
            if entries.insert(key.to_string(), (line, value.to_string())).is_some() {
                return Err(CliError::Config {
                    line,
                    message: format!("duplicate key {key}"),
                });
            }
        }
        Self::from_entries(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        Self::parse(&text)
    }

    fn from_entries(mut entries: BTreeMap<String, (usize, String)>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut take = |key: &str| entries.remove(key);
        let err = |line: usize| move |message: String| CliError::Config { line, message };

        let kind = take("dataset.kind");
        let mut dataset_keys = BTreeMap::new();
        for key in [
            "dataset.k",
            "dataset.length",
            "dataset.point",
            "dataset.probs",
            "dataset.initial",
            "dataset.transition",
            "dataset.nodes",
            "dataset.edge_types",
        ] {
            if let Some(v) = take(key) {
                dataset_keys.insert(key, v);
            }
        }
        if let Some((line, kind)) = kind {
            let get = |key: &str| {
                dataset_keys
                    .get(key)
                    .cloned()
                    .ok_or_else(|| CliError::Config {
                        line,
                        message: format!("dataset.kind = {kind} needs {key}"),
                    })
            };
            cfg.dataset = match kind.as_str() {
                "point_mass" => {
                    let (kl, k) = get("dataset.k")?;
                    let (pl, p) = get("dataset.point")?;
                    DatasetSpec::PointMass {
                        k: parse_num("dataset.k", &k).map_err(err(kl))?,
                        point: parse_list("dataset.point", &p).map_err(err(pl))?,
                    }
                }
                "iid" => {
                    let (pl, p) = get("dataset.probs")?;
                    let (ll, l) = get("dataset.length")?;
                    DatasetSpec::Iid {
                        probs: parse_simplex("dataset.probs", &p).map_err(err(pl))?,
                        length: parse_num("dataset.length", &l).map_err(err(ll))?,
                    }
                }
                "markov" => {
                    let (il, i) = get("dataset.initial")?;
                    let (tl, t) = get("dataset.transition")?;
                    let (ll, l) = get("dataset.length")?;
                    let transition = t
                        .split(';')
                        .map(|row| parse_simplex("dataset.transition", row))
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(err(tl))?;
                    DatasetSpec::MarkovChain {
                        initial: parse_simplex("dataset.initial", &i).map_err(err(il))?,
                        transition,
                        length: parse_num("dataset.length", &l).map_err(err(ll))?,
                    }
                }
                "tiny_graph" => {
                    let (nl, n) = get("dataset.nodes")?;
                    let (el, e) = get("dataset.edge_types")?;
                    DatasetSpec::TinyGraph {
                        nodes: parse_num("dataset.nodes", &n).map_err(err(nl))?,
                        edge_types: parse_num("dataset.edge_types", &e).map_err(err(el))?,
                    }
                }
                other => {
                    return Err(CliError::Config {
                        line,
                        message: format!("unknown dataset.kind {other}"),
                    })
                }
            };
        } else if let Some((key, (line, _))) = dataset_keys.iter().next() {
            return Err(CliError::Config {
                line: *line,
                message: format!("{key} given without dataset.kind"),
            });
        }

        macro_rules! num {
            ($key:literal, $field:expr) => {
                if let Some((line, v)) = take($key) {
                    $field = parse_num($key, &v).map_err(err(line))?;
                }
            };
        }
        num!("dataset.samples", cfg.dataset_samples);
        num!("dataset.seed", cfg.dataset_seed);
        num!("schedule.lambda", cfg.lambda);
        num!("sampler.rho", cfg.rho);
        num!("sampler.steps", cfg.steps);
        num!("train.lr", cfg.lr);
        num!("train.batch", cfg.batch);
        num!("train.steps", cfg.train_steps);
        num!("train.seed", cfg.train_seed);
        num!("train.dt", cfg.train_dt);
        num!("train.log_every", cfg.log_every);
        if let Some((line, v)) = take("train.rho") {
            cfg.train_rho = Some(parse_num("train.rho", &v).map_err(err(line))?);
        }
        num!("model.hidden", cfg.hidden);
        num!("model.time_dim", cfg.time_dim);

        if let Some((line, v)) = take("prior") {
            cfg.prior = match v.as_str() {
                "uniform" => PriorKind::Uniform,
                "marginal" => PriorKind::Marginal,
                _ => return Err(err(line)(format!("unknown prior {v}"))),
            };
        }
        if let Some((line, v)) = take("schedule.gamma") {
            cfg.gamma = GammaSchedule::from_name(&v)
                .ok_or_else(|| err(line)(format!("unknown gamma schedule {v}")))?;
        }
        if let Some((line, v)) = take("train.optimizer") {
            cfg.optimizer = match v.as_str() {
                "sgd" => OptimizerKind::Sgd,
                "adam" => OptimizerKind::Adam,
                _ => return Err(err(line)(format!("unknown optimizer {v}"))),
            };
        }
        if let Some((line, v)) = take("train.lr_schedule") {
            cfg.lr_schedule = match v.as_str() {
                "constant" => LrSchedule::Constant,
                "cosine" => LrSchedule::Cosine,
                _ => return Err(err(line)(format!("unknown learning-rate schedule {v}"))),
            };
        }
        if let Some((key, (line, _))) = entries.into_iter().next() {
            return Err(CliError::Config {
                line,
                message: format!("unknown key {key}"),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        LambdaSchedule::constant(self.lambda)?;
        build_grid(self.steps, self.rho)?;
        let bad = |m: &str| Err(CliError::Invalid(m.to_string()));
        if self.dataset_samples == 0 {
            return bad("dataset.samples must be positive");
        }
        if self.batch == 0 {
            return bad("train.batch must be positive");
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad("train.lr must be positive");
        }
        if !(self.train_dt.is_finite() && (0.0..=1.0).contains(&self.train_dt)) {
            return bad("train.dt must lie in [0, 1]");
        }
        if let Some(r) = self.train_rho {
            if !(r.is_finite() && r >= 1.0) {
                return bad("train.rho must be at least 1");
            }
        }
        if self.hidden == 0 {
            return bad("model.hidden must be positive");
        }
        if self.time_dim == 0 || self.time_dim % 2 != 0 {
            return bad("model.time_dim must be even and positive");
        }
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` returns an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        match &self.dataset {
            DatasetSpec::PointMass { k, point } => {
                put("dataset.kind", "point_mass".into());
                put("dataset.k", k.to_string());
                put("dataset.point", fmt_list(point));
            }
            DatasetSpec::Iid { probs, length } => {
                put("dataset.kind", "iid".into());
                put("dataset.probs", fmt_list(probs.probs()));
                put("dataset.length", length.to_string());
            }
            DatasetSpec::MarkovChain {
                initial,
                transition,
                length,
            } => {
                put("dataset.kind", "markov".into());
                put("dataset.initial", fmt_list(initial.probs()));
                let rows: Vec<String> = transition.iter().map(|r| fmt_list(r.probs())).collect();
                put("dataset.transition", rows.join("; "));
                put("dataset.length", length.to_string());
            }
            DatasetSpec::TinyGraph { nodes, edge_types } => {
                put("dataset.kind", "tiny_graph".into());
                put("dataset.nodes", nodes.to_string());
                put("dataset.edge_types", edge_types.to_string());
            }
        }
        put("dataset.samples", self.dataset_samples.to_string());
        put("dataset.seed", self.dataset_seed.to_string());
        put(
            "prior",
            match self.prior {
                PriorKind::Uniform => "uniform",
                PriorKind::Marginal => "marginal",
            }
            .into(),
        );
        put("schedule.gamma", self.gamma.name().into());
        put("schedule.lambda", format!("{:?}", self.lambda));
        put("sampler.rho", format!("{:?}", self.rho));
        put("sampler.steps", self.steps.to_string());
        put(
            "train.optimizer",
            match self.optimizer {
                OptimizerKind::Sgd => "sgd",
                OptimizerKind::Adam => "adam",
            }
            .into(),
        );
        put("train.lr", format!("{:?}", self.lr));
        put("train.lr_schedule", self.lr_schedule.name().into());
        put("train.batch", self.batch.to_string());
        put("train.steps", self.train_steps.to_string());
        put("train.seed", self.train_seed.to_string());
        put("train.dt", format!("{:?}", self.train_dt));
        if let Some(r) = self.train_rho {
            put("train.rho", format!("{r:?}"));
        }
        put("train.log_every", self.log_every.to_string());
        put("model.hidden", self.hidden.to_string());
        put("model.time_dim", self.time_dim.to_string());
        s
    }

    pub fn categories(&self) -> usize {
        self.dataset.categories()
    }

    pub fn length(&self) -> usize {
        self.dataset.length()
    }

    pub fn grid(&self) -> Result<StepGrid> {
        Ok(build_grid(self.steps, self.rho)?)
    }

    pub fn dt(&self) -> f64 {
        if self.train_dt > 0.0 {
            self.train_dt
        } else {
            1.0 / self.steps as f64
        }
    }

    pub fn time_warp(&self) -> f64 {
        self.train_rho.unwrap_or(self.rho)
    }

    /// The training set, regenerated from the dataset spec and seed.
    pub fn training_data(&self) -> Result<ToyDataset> {
        Ok(generate(&self.dataset, self.dataset_samples, self.dataset_seed)?)
    }

    pub fn prior_simplex(&self, data: &ToyDataset) -> Result<Simplex> {
        Ok(match self.prior {
            PriorKind::Uniform => Simplex::uniform(self.categories())?,
            PriorKind::Marginal => estimate_prior(data)?,
        })
    }
}

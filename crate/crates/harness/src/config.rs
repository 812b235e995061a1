//! Flat `key=value` run configuration.
//!
//! One pair per line, `#` starts a comment. Command-line `--set` pairs are
//! applied on top of the file. Unknown keys are rejected, and so are
//! trade-off weights on methods that have none.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use labelaug_core::objectives::MethodConfig;
use labelaug_core::oracle::DiscMode;
use labelaug_core::{AdamConfig, GenLoss, LossForm, Method};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key=value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("key `{0}` given twice")]
    Duplicate(String),
    #[error("`{key}={value}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataset {
    Gauss1dShift,
    Modes2dRot,
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    /// The dataset's natural family: shifts, quarter turns or cyclic shifts.
    Auto,
    Identity,
    Shift,
    Rotation,
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FinitePd {
    /// `p(i) ∝ 0.6^i`, not invariant under any non-trivial cyclic shift.
    Geometric,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentStart {
    Random,
    /// A transformed copy of `p_d` (see `descent_rotation`).
    Rotated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscSchedule {
    BestResponse,
    Ascent,
}

macro_rules! keyword_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    _ => Err(format!("expected one of: {}", [$($name),+].join(", "))),
                }
            }
        }
    };
}

keyword_enum!(Dataset { Gauss1dShift => "gauss1d_shift", Modes2dRot => "modes2d_rot", Finite => "finite" });
keyword_enum!(TransformKind {
    Auto => "auto",
    Identity => "identity",
    Shift => "shift",
    Rotation => "rotation",
    Cyclic => "cyclic",
});
keyword_enum!(FinitePd { Geometric => "geometric", Random => "random" });
keyword_enum!(DescentStart { Random => "random", Rotated => "rotated" });
keyword_enum!(DiscSchedule { BestResponse => "best_response", Ascent => "ascent" });

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub dataset: Dataset,
    pub k: usize,
    pub transform: TransformKind,
    /// Identity probability of the up-weighted set (dagan_plus only).
    pub identity_prob: f64,
    pub seed: u64,
    pub steps: usize,
    pub batch: usize,
    pub n_dis: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_d: Option<f64>,
    pub lambda_g: Option<f64>,
    pub loss_form: LossForm,
    pub gen_loss: GenLoss,
    pub hidden: usize,
    pub depth: usize,
    pub latent_dim: usize,
    pub mmd_samples: usize,
    /// Score MMD on transformed mixtures instead of raw samples.
    pub mmd_transformed: bool,
    pub finite_n: usize,
    pub finite_pd: FinitePd,
    pub descent_init: DescentStart,
    pub descent_rotation: usize,
    pub descent_steps: usize,
    pub descent_lr: f64,
    pub disc_mode: DiscSchedule,
    pub disc_lr: f64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_method(Method::SsganLa)
    }
}

/// Every key, in emission order.
pub const KEYS: &[&str] = &[
    "method",
    "dataset",
    "k",
    "transform",
    "identity_prob",
    "seed",
    "steps",
    "batch",
    "n_dis",
    "lr",
    "beta1",
    "beta2",
    "lambda_d",
    "lambda_g",
    "loss_form",
    "gen_loss",
    "hidden",
    "depth",
    "latent_dim",
    "mmd_samples",
    "mmd_transformed",
    "finite_n",
    "finite_pd",
    "descent_init",
    "descent_rotation",
    "descent_steps",
    "descent_lr",
    "disc_mode",
    "disc_lr",
    "out_dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    pub fn for_method(method: Method) -> Self {
        let lambda = method.has_tradeoff().then_some(1.0);
        Self {
            method,
            dataset: Dataset::Gauss1dShift,
            k: 4,
            transform: TransformKind::Auto,
            identity_prob: 0.5,
            seed: 0,
            steps: 20000,
            batch: 128,
            n_dis: 2,
            lr: 1e-3,
            beta1: 0.5,
            beta2: 0.999,
            lambda_d: lambda,
            lambda_g: lambda,
            loss_form: LossForm::Log,
            gen_loss: GenLoss::Minimax,
            hidden: 10,
            depth: 2,
            latent_dim: 4,
            mmd_samples: 10000,
            mmd_transformed: false,
            finite_n: 8,
            finite_pd: FinitePd::Geometric,
            descent_init: DescentStart::Random,
            descent_rotation: 2,
            descent_steps: 5000,
            descent_lr: 1.0,
            disc_mode: DiscSchedule::BestResponse,
            disc_lr: 1.0,
            out_dir: PathBuf::from("out"),
        }
    }

    /// Sets one key. `method` also resets absent trade-off weights so that
    /// switching method by flag keeps the config valid.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "method" => {
                let m: Method = parse(key, v)?;
                if m.has_tradeoff() != self.method.has_tradeoff() {
                    let lambda = m.has_tradeoff().then_some(1.0);
                    self.lambda_d = lambda;
                    self.lambda_g = lambda;
                }
                self.method = m;
            }
            "dataset" => self.dataset = parse(key, v)?,
            "k" => self.k = parse(key, v)?,
            "transform" => self.transform = parse(key, v)?,
            "identity_prob" => self.identity_prob = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "steps" => self.steps = parse(key, v)?,
            "batch" => self.batch = parse(key, v)?,
            "n_dis" => self.n_dis = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "beta1" => self.beta1 = parse(key, v)?,
            "beta2" => self.beta2 = parse(key, v)?,
            "lambda_d" => self.lambda_d = Some(parse(key, v)?),
            "lambda_g" => self.lambda_g = Some(parse(key, v)?),
            "loss_form" => self.loss_form = parse(key, v)?,
            "gen_loss" => self.gen_loss = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "depth" => self.depth = parse(key, v)?,
            "latent_dim" => self.latent_dim = parse(key, v)?,
            "mmd_samples" => self.mmd_samples = parse(key, v)?,
            "mmd_transformed" => self.mmd_transformed = parse(key, v)?,
            "finite_n" => self.finite_n = parse(key, v)?,
            "finite_pd" => self.finite_pd = parse(key, v)?,
            "descent_init" => self.descent_init = parse(key, v)?,
            "descent_rotation" => self.descent_rotation = parse(key, v)?,
            "descent_steps" => self.descent_steps = parse(key, v)?,
            "descent_lr" => self.descent_lr = parse(key, v)?,
            "disc_mode" => self.disc_mode = parse(key, v)?,
            "disc_lr" => self.disc_lr = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Value of one key as emitted; `None` for an absent trade-off weight.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "method" => self.method.to_string(),
            "dataset" => self.dataset.to_string(),
            "k" => self.k.to_string(),
            "transform" => self.transform.to_string(),
            "identity_prob" => self.identity_prob.to_string(),
            "seed" => self.seed.to_string(),
            "steps" => self.steps.to_string(),
            "batch" => self.batch.to_string(),
            "n_dis" => self.n_dis.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "lambda_d" => self.lambda_d?.to_string(),
            "lambda_g" => self.lambda_g?.to_string(),
            "loss_form" => self.loss_form.to_string(),
            "gen_loss" => self.gen_loss.to_string(),
            "hidden" => self.hidden.to_string(),
            "depth" => self.depth.to_string(),
            "latent_dim" => self.latent_dim.to_string(),
            "mmd_samples" => self.mmd_samples.to_string(),
            "mmd_transformed" => self.mmd_transformed.to_string(),
            "finite_n" => self.finite_n.to_string(),
            "finite_pd" => self.finite_pd.to_string(),
            "descent_init" => self.descent_init.to_string(),
            "descent_rotation" => self.descent_rotation.to_string(),
            "descent_steps" => self.descent_steps.to_string(),
            "descent_lr" => self.descent_lr.to_string(),
            "disc_mode" => self.disc_mode.to_string(),
            "disc_lr" => self.disc_lr.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            _ => return None,
        })
    }

    /// Pairs in emission order, skipping absent trade-off weights.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().filter_map(|&k| self.get(k).map(|v| (k, v))).collect()
    }

    pub fn emit(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs() {
            writeln!(s, "{k}={v}").expect("writing to a String");
        }
        s
    }

    /// Parses a config text on top of the defaults. The method is applied
    /// first so trade-off weights are checked against the final method.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut pairs = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let k = k.trim().to_string();
            if pairs.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(ConfigError::Duplicate(k));
            }
        }
        let mut cfg = Self::default();
        cfg.apply(&pairs.into_iter().collect::<Vec<_>>())?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text)
    }

    /// Applies overrides, `method` first, then validates.
    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (k, v) in pairs.iter().filter(|(k, _)| k == "method") {
            self.set(k, v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "method") {
            self.set(k, v)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        self.method_config()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.k == 0 {
            return invalid("k must be at least 1".into());
        }
        if self.steps == 0 || self.descent_steps == 0 {
            return invalid("steps and descent_steps must be at least 1".into());
        }
        if self.batch < 2 {
            return invalid("batch must be at least 2".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.descent_lr > 0.0 && self.descent_lr.is_finite()) {
            return invalid("learning rates must be positive and finite".into());
        }
        if !(self.disc_lr > 0.0 && self.disc_lr.is_finite()) {
            return invalid("disc_lr must be positive and finite".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return invalid(format!("{name} must lie in [0, 1)"));
            }
        }
        if !(self.identity_prob > 0.0 && self.identity_prob < 1.0) {
            return invalid("identity_prob must lie in (0, 1)".into());
        }
        if self.hidden == 0 || self.depth == 0 || self.latent_dim == 0 {
            return invalid("hidden, depth and latent_dim must be at least 1".into());
        }
        if self.mmd_samples < 2 {
            return invalid("mmd_samples must be at least 2".into());
        }
        if self.finite_n < 2 {
            return invalid("finite_n must be at least 2".into());
        }
        if self.method == Method::DaganPlus && self.k < 2 {
            return invalid("dagan_plus needs at least 2 transforms".into());
        }
        let kind = self.transform_kind();
        let ok = match (self.dataset, kind) {
            (_, TransformKind::Identity) => self.k == 1,
            (Dataset::Gauss1dShift, TransformKind::Shift) => true,
            (Dataset::Modes2dRot, TransformKind::Rotation) => self.k <= 4,
            (Dataset::Finite, TransformKind::Cyclic) => self.finite_n.is_multiple_of(self.k),
            _ => false,
        };
        if !ok {
            return invalid(format!(
                "transform `{kind}` with k={} does not fit dataset `{}`",
                self.k, self.dataset
            ));
        }
        if self.dataset == Dataset::Finite && self.descent_rotation >= self.k {
            return invalid("descent_rotation must index a transform (< k)".into());
        }
        Ok(())
    }

    /// The concrete family, resolving `auto` from the dataset.
    pub fn transform_kind(&self) -> TransformKind {
        match (self.transform, self.dataset) {
            (TransformKind::Auto, Dataset::Gauss1dShift) => TransformKind::Shift,
            (TransformKind::Auto, Dataset::Modes2dRot) => TransformKind::Rotation,
            (TransformKind::Auto, Dataset::Finite) => TransformKind::Cyclic,
            (t, _) => t,
        }
    }

    pub fn method_config(&self) -> MethodConfig {
        MethodConfig {
            method: self.method,
            lambda_d: self.lambda_d,
            lambda_g: self.lambda_g,
            loss_form: self.loss_form,
            gen_loss: self.gen_loss,
            n_dis: self.n_dis,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }

    pub fn disc_schedule(&self) -> DiscMode {
        match self.disc_mode {
            DiscSchedule::BestResponse => DiscMode::BestResponse,
            DiscSchedule::Ascent => DiscMode::Ascent {
                n_dis: self.n_dis,
                lr: self.disc_lr,
            },
        }
    }
}

/// Splits a `key=value` flag.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_every_method() {
        for m in Method::ALL {
            let mut cfg = RunConfig::for_method(m);
            cfg.seed = 17;
            cfg.lr = 2.5e-4;
            cfg.out_dir = PathBuf::from("runs/a b");
            let back = RunConfig::parse_str(&cfg.emit()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = RunConfig::parse_str("# header\n\nmethod = ssgan  # trailing\nlambda_g=0.2\n").unwrap();
        assert_eq!(cfg.method, Method::Ssgan);
        assert_eq!(cfg.lambda_g, Some(0.2));
        assert_eq!(cfg.lambda_d, Some(1.0));
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(matches!(
            RunConfig::parse_str("colour=red"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::parse_str("k=4\nk=2"),
            Err(ConfigError::Duplicate(_))
        ));
        assert!(matches!(
            RunConfig::parse_str("just text"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn rejects_lambda_without_tradeoff() {
        let err = RunConfig::parse_str("method=ssgan_la\nlambda_g=1").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid(_)), "{err}");
        // Switching to a trade-off-free method drops the default weights.
        let mut cfg = RunConfig::for_method(Method::Ssgan);
        cfg.apply(&[("method".into(), "dagan".into())]).unwrap();
        assert_eq!(cfg.lambda_d, None);
    }

    #[test]
    fn range_checks() {
        for bad in [
            "batch=1",
            "n_dis=0",
            "lr=-1",
            "beta1=1",
            "identity_prob=1",
            "k=5\ndataset=modes2d_rot",
            "transform=rotation",
        ] {
            assert!(RunConfig::parse_str(bad).is_err(), "{bad}");
        }
        assert!(RunConfig::parse_str("dataset=finite\nfinite_n=6\nk=4").is_err());
        assert!(RunConfig::parse_str("dataset=finite\nfinite_n=8\nk=4").is_ok());
    }
}

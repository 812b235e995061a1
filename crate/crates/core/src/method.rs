use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The training objectives under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Gan,
    Ssgan,
    SsganMs,
    Dagan,
    DaganPlus,
    DaganMd,
    SsganLa,
    SsganLaPlus,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Gan,
        Method::Ssgan,
        Method::SsganMs,
        Method::Dagan,
        Method::DaganPlus,
        Method::DaganMd,
        Method::SsganLa,
        Method::SsganLaPlus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gan => "gan",
            Method::Ssgan => "ssgan",
            Method::SsganMs => "ssgan_ms",
            Method::Dagan => "dagan",
            Method::DaganPlus => "dagan_plus",
            Method::DaganMd => "dagan_md",
            Method::SsganLa => "ssgan_la",
            Method::SsganLaPlus => "ssgan_la_plus",
        }
    }

    /// Whether the objective has a λ_d / λ_g trade-off.
    pub fn has_tradeoff(self) -> bool {
        matches!(self, Method::Ssgan | Method::SsganMs | Method::SsganLaPlus)
    }

    /// Whether every sample is seen under all transforms (as opposed to one
    /// sampled transform per sample).
    pub fn uses_all_transforms(self) -> bool {
        matches!(
            self,
            Method::Dagan | Method::DaganPlus | Method::DaganMd | Method::SsganLa | Method::SsganLaPlus
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

/// Log-loss (softmax cross-entropy) or hinge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossForm {
    #[default]
    Log,
    Hinge,
}

impl LossForm {
    pub fn as_str(self) -> &'static str {
        match self {
            LossForm::Log => "log",
            LossForm::Hinge => "hinge",
        }
    }
}

impl fmt::Display for LossForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossForm {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "log" => Ok(LossForm::Log),
            "hinge" => Ok(LossForm::Hinge),
            _ => Err(format!("unknown loss form `{s}` (expected log or hinge)")),
        }
    }
}

/// How the generator's binary adversarial term is written in the log form.
/// `Minimax` minimises `log(1 - D(G(z)))`; `NonSaturating` minimises
/// `-log D(G(z))` instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GenLoss {
    #[default]
    Minimax,
    NonSaturating,
}

impl GenLoss {
    pub fn as_str(self) -> &'static str {
        match self {
            GenLoss::Minimax => "minimax",
            GenLoss::NonSaturating => "non_saturating",
        }
    }
}

impl fmt::Display for GenLoss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GenLoss {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "minimax" => Ok(GenLoss::Minimax),
            "non_saturating" => Ok(GenLoss::NonSaturating),
            _ => Err(format!(
                "unknown generator loss `{s}` (expected minimax or non_saturating)"
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("wgan".parse::<Method>().is_err());
        for f in [LossForm::Log, LossForm::Hinge] {
            assert_eq!(f.as_str().parse::<LossForm>().unwrap(), f);
        }
        for g in [GenLoss::Minimax, GenLoss::NonSaturating] {
            assert_eq!(g.as_str().parse::<GenLoss>().unwrap(), g);
        }
    }
}

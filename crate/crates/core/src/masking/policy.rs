use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Matrix, ZScoreDenominator};

/// Masking strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropKind {
    NoDrop,
    Dropout,
    DropConnect,
    Standout,
    /// Gradient-driven DropConnect: edges with small gradients are dropped more often.
    Ddc,
    DropBigGradient,
    DropSmallParameter,
    DropBigParameter,
}

impl DropKind {
    pub const ALL: [DropKind; 8] = [
        DropKind::NoDrop,
        DropKind::Ddc,
        DropKind::Dropout,
        DropKind::DropConnect,
        DropKind::Standout,
        DropKind::DropSmallParameter,
        DropKind::DropBigParameter,
        DropKind::DropBigGradient,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DropKind::NoDrop => "no_drop",
            DropKind::Dropout => "dropout",
            DropKind::DropConnect => "drop_connect",
            DropKind::Standout => "standout",
            DropKind::Ddc => "ddc",
            DropKind::DropBigGradient => "drop_big_gradient",
            DropKind::DropSmallParameter => "drop_small_parameter",
            DropKind::DropBigParameter => "drop_big_parameter",
        }
    }

    /// Score source and direction for the score-driven edge strategies.
    pub fn score_rule(self) -> Option<(ScoreSource, Direction)> {
        match self {
            DropKind::Ddc => Some((ScoreSource::Gradient, Direction::DropSmall)),
            DropKind::DropBigGradient => Some((ScoreSource::Gradient, Direction::DropBig)),
            DropKind::DropSmallParameter => Some((ScoreSource::Parameter, Direction::DropSmall)),
            DropKind::DropBigParameter => Some((ScoreSource::Parameter, Direction::DropBig)),
            _ => None,
        }
    }

    /// Strategies that mask individual edges and rescale by the realized rate.
    pub fn is_edge_strategy(self) -> bool {
        self == DropKind::DropConnect || self.score_rule().is_some()
    }
}

impl fmt::Display for DropKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DropKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let kind = match norm.as_str() {
            "no_drop" | "nodrop" | "none" => DropKind::NoDrop,
            "dropout" => DropKind::Dropout,
            "drop_connect" | "dropconnect" => DropKind::DropConnect,
            "standout" => DropKind::Standout,
            "ddc" | "drop_small_gradient" => DropKind::Ddc,
            "drop_big_gradient" => DropKind::DropBigGradient,
            "drop_small_parameter" => DropKind::DropSmallParameter,
            "drop_big_parameter" => DropKind::DropBigParameter,
            _ => return Err(Error::Config(format!("unknown drop kind `{s}`"))),
        };
        Ok(kind)
    }
}

/// Which matrix the score-driven strategies normalize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreSource {
    Gradient,
    Parameter,
}

/// Whether low-score or high-score edges receive the extra drop probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    DropSmall,
    DropBig,
}

fn default_tau() -> f64 {
    0.5
}

fn default_alpha() -> f64 {
    1.0
}

/// One masking strategy and its hyperparameters.
///
/// `p` is the base drop probability, `p_g` the gradient-unit drop rate, `tau`
/// the candidate-probability threshold, `alpha`/`beta` the Standout affinity.
/// Fields a strategy does not use are still validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropPolicy {
    pub kind: DropKind,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub p_g: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub zscore_denominator: ZScoreDenominator,
}

impl Default for DropPolicy {
    fn default() -> Self {
        Self::no_drop()
    }
}

impl DropPolicy {
    pub fn new(kind: DropKind) -> Self {
        Self {
            kind,
            p: 0.0,
            p_g: 0.0,
            tau: default_tau(),
            alpha: default_alpha(),
            beta: 0.0,
            zscore_denominator: ZScoreDenominator::Stddev,
        }
    }

    pub fn no_drop() -> Self {
        Self::new(DropKind::NoDrop)
    }

    pub fn dropout(p: f64) -> Self {
        Self {
            p,
            ..Self::new(DropKind::Dropout)
        }
    }

    pub fn drop_connect(p: f64) -> Self {
        Self {
            p,
            ..Self::new(DropKind::DropConnect)
        }
    }

    pub fn standout(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            ..Self::new(DropKind::Standout)
        }
    }

    pub fn ddc(p: f64, p_g: f64) -> Self {
        Self::scored(DropKind::Ddc, p, p_g)
    }

    /// Any of the four score-driven kinds.
    pub fn scored(kind: DropKind, p: f64, p_g: f64) -> Self {
        Self {
            p,
            p_g,
            ..Self::new(kind)
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} = {v} outside [0, 1]")))
            }
        };
        unit("p", self.p)?;
        unit("tau", self.tau)?;
        if !(self.p_g >= 0.0 && self.p_g.is_finite()) {
            return Err(Error::Domain(format!("p_g = {} must be >= 0", self.p_g)));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::Domain("alpha and beta must be finite".into()));
        }
        Ok(())
    }

    /// Parses `kind[:key=value,...]`, e.g. `ddc:p=0.1,p_g=0.5,tau=0.5`.
    pub fn parse_shorthand(spec: &str) -> Result<Self> {
        let (kind, params) = match spec.split_once(':') {
            Some((k, rest)) => (k, rest),
            None => (spec, ""),
        };
        let mut policy = Self::new(kind.parse()?);
        for pair in params.split(',').filter(|s| !s.trim().is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got `{pair}`")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad number `{value}` for `{key}`")))?;
            match key.trim() {
                "p" => policy.p = v,
                "p_g" | "pg" => policy.p_g = v,
                "tau" => policy.tau = v,
                "alpha" => policy.alpha = v,
                "beta" => policy.beta = v,
                other => return Err(Error::Config(format!("unknown policy parameter `{other}`"))),
            }
        }
        policy.validate()?;
        Ok(policy)
    }
}

/// A sampled mask with its realized drop rate and the probabilities it was drawn from.
///
/// Polarity: `1` means the edge (or unit) is **dropped**.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskOutcome {
    pub mask: Matrix,
    pub drop_rate: f64,
    pub probs: Matrix,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation_ranges() {
        assert!(DropPolicy::ddc(0.1, 0.5).validate().is_ok());
        assert!(DropPolicy::ddc(1.1, 0.5).validate().is_err());
        assert!(DropPolicy::ddc(0.1, -0.5).validate().is_err());
        assert!(DropPolicy::ddc(0.1, 0.5).with_tau(1.5).validate().is_err());
        // irrelevant fields are still checked
        let mut p = DropPolicy::no_drop();
        p.tau = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn shorthand_parsing() {
        let p = DropPolicy::parse_shorthand("ddc:p=0.1,p_g=0.4").unwrap();
        assert_eq!(p.kind, DropKind::Ddc);
        assert_eq!((p.p, p.p_g, p.tau), (0.1, 0.4, 0.5));
        let p = DropPolicy::parse_shorthand("drop-big-gradient").unwrap();
        assert_eq!(p.kind, DropKind::DropBigGradient);
        assert!(DropPolicy::parse_shorthand("ddc:q=1").is_err());
        assert!(DropPolicy::parse_shorthand("magic").is_err());
        assert!(DropPolicy::parse_shorthand("dropout:p=2").is_err());
    }

    #[test]
    fn serde_defaults() {
        let p: DropPolicy = serde_json::from_str(r#"{"kind":"ddc","p":0.2}"#).unwrap();
        assert_eq!(p.tau, 0.5);
        assert_eq!(p.alpha, 1.0);
        assert_eq!(p.zscore_denominator, ZScoreDenominator::Stddev);
    }

    #[test]
    fn score_rules() {
        assert_eq!(
            DropKind::Ddc.score_rule(),
            Some((ScoreSource::Gradient, Direction::DropSmall))
        );
        assert_eq!(
            DropKind::DropBigParameter.score_rule(),
            Some((ScoreSource::Parameter, Direction::DropBig))
        );
        assert!(DropKind::DropConnect.is_edge_strategy());
        assert!(!DropKind::Dropout.is_edge_strategy());
    }
}

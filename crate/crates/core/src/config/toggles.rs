use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::training::RmaMode;

use super::run::RunConfig;

/// One ablation switch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Toggle {
    NoIt,
    NoSt,
    NoNt,
    NoEt,
    NoOt,
    NoMtc,
    NoRma,
    RmaAll,
    /// Intuition thinking and the base reward only.
    ItOnly,
}

impl Toggle {
    pub const ALL: [Toggle; 9] = [
        Toggle::NoIt,
        Toggle::NoSt,
        Toggle::NoNt,
        Toggle::NoEt,
        Toggle::NoOt,
        Toggle::NoMtc,
        Toggle::NoRma,
        Toggle::RmaAll,
        Toggle::ItOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Toggle::NoIt => "no_it",
            Toggle::NoSt => "no_st",
            Toggle::NoNt => "no_nt",
            Toggle::NoEt => "no_et",
            Toggle::NoOt => "no_ot",
            Toggle::NoMtc => "no_mtc",
            Toggle::NoRma => "no_rma",
            Toggle::RmaAll => "rma_all",
            Toggle::ItOnly => "it_only",
        }
    }
}

impl fmt::Display for Toggle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Toggle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Toggle> {
        Toggle::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation toggle {s:?}")))
    }
}

/// Parses `"no_et+no_ot"` style variant strings.
pub fn ablation_toggles(variant: &str) -> Result<Vec<Toggle>> {
    variant.split('+').map(|t| t.trim().parse()).collect()
}

/// Applies toggles to a copy of `base`. Removing a thinking also zeroes its
/// meta-ability reward (intuition has none).
pub fn apply_toggles(base: &RunConfig, toggles: &[Toggle]) -> Result<RunConfig> {
    let mut cfg = base.clone();
    let th = &mut cfg.variant.thinkings;
    for t in toggles {
        match t {
            Toggle::NoIt => th.it = false,
            Toggle::NoSt => {
                th.st = false;
                cfg.reward.r_s = 0.0;
            }
            Toggle::NoNt => {
                th.nt = false;
                cfg.reward.r_n = 0.0;
            }
            Toggle::NoEt => {
                th.et = false;
                cfg.reward.r_e = 0.0;
            }
            Toggle::NoOt => {
                th.ot = false;
                cfg.reward.r_o = 0.0;
            }
            Toggle::NoMtc => cfg.variant.mtc = false,
            Toggle::NoRma => cfg.reward.rma = RmaMode::Off,
            Toggle::RmaAll => cfg.reward.rma = RmaMode::Always,
            Toggle::ItOnly => {
                *th = crate::agent::Thinkings::IT_ONLY;
                cfg.variant.mtc = false;
                cfg.reward.rma = RmaMode::Off;
            }
        }
    }
    if cfg.variant.thinkings.count() == 0 {
        return Err(Error::Config("ablation disables every thinking".into()));
    }
    Ok(cfg)
}

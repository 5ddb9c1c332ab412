use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::eval::{MetricsReport, NA};

use super::experiment::Experiment;
use super::run::RunConfig;
use super::toggles::{ablation_toggles, apply_toggles};

/// Name of the untoggled configuration in ablation tables.
pub const BASE_VARIANT: &str = "base";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub seed: u64,
    pub report: MetricsReport,
    pub train_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationResult {
    /// Variant names in table order, the base first.
    pub variants: Vec<String>,
    pub rows: Vec<AblationRow>,
}

/// Mean of the all-episode metrics over the seeds of one variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariantMean {
    pub sr: f64,
    pub spl: f64,
    pub ssr: f64,
    pub nsnpl: Option<f64>,
    pub rep: f64,
    pub cp: f64,
}

impl AblationResult {
    pub fn rows_for<'a>(&'a self, variant: &'a str) -> impl Iterator<Item = &'a AblationRow> + 'a {
        self.rows.iter().filter(move |r| r.variant == variant)
    }

    pub fn mean(&self, variant: &str) -> Option<VariantMean> {
        let rows: Vec<_> = self.rows_for(variant).map(|r| r.report.all).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&crate::eval::SubsetMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let nav: Vec<f64> = rows.iter().filter_map(|m| m.nsnpl).collect();
        Some(VariantMean {
            sr: avg(|m| m.sr),
            spl: avg(|m| m.spl),
            ssr: avg(|m| m.ssr),
            nsnpl: (!nav.is_empty()).then(|| nav.iter().sum::<f64>() / nav.len() as f64),
            rep: avg(|m| m.rep),
            cp: avg(|m| m.cp),
        })
    }
}

impl fmt::Display for AblationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "variant", "seed", "SR", "SPL", "SSR", "NSNPL", "REP", "CP"
        )?;
        let nsnpl = |v: Option<f64>| v.map_or_else(|| NA.to_string(), |v| format!("{v:.2}"));
        for v in &self.variants {
            for r in self.rows_for(v) {
                let m = &r.report.all;
                writeln!(
                    f,
                    "{:<16} {:>6} {:>8.2} {:>8.2} {:>8.2} {:>8} {:>8.2} {:>8.2}",
                    v,
                    r.seed,
                    m.sr,
                    m.spl,
                    m.ssr,
                    nsnpl(m.nsnpl),
                    m.rep,
                    m.cp
                )?;
            }
            if let Some(m) = self.mean(v) {
                writeln!(
                    f,
                    "{:<16} {:>6} {:>8.2} {:>8.2} {:>8.2} {:>8} {:>8.2} {:>8.2}",
                    v,
                    "mean",
                    m.sr,
                    m.spl,
                    m.ssr,
                    nsnpl(m.nsnpl),
                    m.rep,
                    m.cp
                )?;
            }
        }
        Ok(())
    }
}

/// Trains the base configuration and every configured variant once per
/// ablation seed and evaluates all of them on the same held-out suite.
pub fn ablation_run(base: &RunConfig) -> Result<AblationResult> {
    base.validate()?;
    let mut configs = vec![(BASE_VARIANT.to_string(), base.clone())];
    for v in &base.ablation.variants {
        configs.push((v.clone(), apply_toggles(base, &ablation_toggles(v)?)?));
    }
    let reference = Experiment::new(base.clone())?;
    let plans = reference.plans()?;
    let suite = reference.eval_suite(&plans.heldout)?;
    let mut rows = Vec::new();
    for (name, cfg) in &configs {
        for &seed in &base.ablation.seeds {
            let mut cfg = cfg.clone();
            cfg.seed = seed;
            let exp = Experiment::new(cfg)?;
            let started = Instant::now();
            let (params, _) = exp.train(&plans.train, None, None)?;
            let train_seconds = started.elapsed().as_secs_f64();
            let (report, _) = exp.evaluate(&params, &suite)?;
            log::info!("ablation {name} seed {seed}: SR {:.2} in {train_seconds:.0}s", report.all.sr);
            rows.push(AblationRow {
                variant: name.clone(),
                seed,
                report,
                train_seconds,
            });
        }
    }
    Ok(AblationResult {
        variants: configs.into_iter().map(|(n, _)| n).collect(),
        rows,
    })
}

//! Experiment configuration: the JSON config document, the compact string
//! syntax for priors/channels/metrics/estimators, and the named presets.

use std::path::PathBuf;

use linmix_core::error::{Error, Result};
use linmix_core::estimators::EstimatorSpec;
use linmix_core::model::{ErrorMetric, OutputChannel, SignalPrior};
use serde::Deserialize;

/// Flat key/value experiment description (JSON). Unknown keys are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_preset")]
    pub preset: String,
    pub n: usize,
    /// Optional sweep over signal lengths (used by the fig6 preset); when
    /// present, every (n, ratio) pair becomes a sweep point.
    #[serde(default)]
    pub n_sweep: Option<Vec<usize>>,
    pub measurement_ratios: Vec<f64>,
    /// `sparse-gaussian:<s>:<sigma2>`, `sparse-weibull:<s>:<scale>:<shape>`,
    /// or `tabulated:<atom>:<x>=<w>,<x>=<w>,...`
    pub prior: String,
    /// `awgn:<variance>` or `poisson:<gain>`
    pub channel: String,
    pub estimators: Vec<String>,
    /// `squared`, `abs`, `pow:<p>`, `support`, `linf`
    pub metrics_reported: Vec<String>,
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
}

fn default_preset() -> String {
    "custom".into()
}

/// Estimators the harness can score: the core estimator family plus the
/// relaxed-BP posterior mean and the CoSaMP baseline (which consumes the raw
/// measurements rather than the scalar channel).
#[derive(Debug, Clone)]
pub enum HarnessEstimator {
    Core(EstimatorSpec),
    RelaxedBpMean,
    /// `cosamp` (sparsity defaults to round(s N)) or `cosamp:<K>`.
    Cosamp { k: Option<usize> },
}

impl HarnessEstimator {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relaxed-bp-mean" | "relaxed-bp" => return Ok(HarnessEstimator::RelaxedBpMean),
            "cosamp" => return Ok(HarnessEstimator::Cosamp { k: None }),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("cosamp:") {
            let k: usize = rest
                .parse()
                .map_err(|_| Error::Config(format!("bad sparsity in '{s}'")))?;
            return Ok(HarnessEstimator::Cosamp { k: Some(k) });
        }
        Ok(HarnessEstimator::Core(EstimatorSpec::parse(s)?))
    }

    pub fn name(&self) -> String {
        match self {
            HarnessEstimator::Core(spec) => spec.name(),
            HarnessEstimator::RelaxedBpMean => "relaxed-bp-mean".into(),
            HarnessEstimator::Cosamp { k: None } => "cosamp".into(),
            HarnessEstimator::Cosamp { k: Some(k) } => format!("cosamp:{k}"),
        }
    }
}

/// A metric column of the report: an additive metric or the ℓ∞ norm.
#[derive(Debug, Clone)]
pub enum ReportMetric {
    Additive { name: String, metric: ErrorMetric },
    Linf,
}

impl ReportMetric {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "linf" {
            return Ok(ReportMetric::Linf);
        }
        let metric = match s {
            "squared" => ErrorMetric::Squared,
            "abs" => ErrorMetric::Absolute,
            "support" => ErrorMetric::SupportXor,
            _ => {
                if let Some(p) = s.strip_prefix("pow:") {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| Error::Config(format!("bad exponent in metric '{s}'")))?;
                    ErrorMetric::pow(p)?
                } else {
                    return Err(Error::Config(format!("unknown metric '{s}'")));
                }
            }
        };
        Ok(ReportMetric::Additive {
            name: s.to_string(),
            metric,
        })
    }

    pub fn name(&self) -> &str {
        match self {
            ReportMetric::Additive { name, .. } => name,
            ReportMetric::Linf => "linf",
        }
    }
}

pub fn parse_prior(s: &str) -> Result<SignalPrior> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["sparse-gaussian", sp, var] => {
            SignalPrior::sparse_gaussian(parse_f64(sp)?, parse_f64(var)?)
        }
        ["sparse-weibull", sp, scale, shape] => {
            SignalPrior::sparse_weibull(parse_f64(sp)?, parse_f64(scale)?, parse_f64(shape)?)
        }
        ["tabulated", atom, table] => {
            let mut points = Vec::new();
            let mut weights = Vec::new();
            for entry in table.split(',') {
                let (x, w) = entry
                    .split_once('=')
                    .ok_or_else(|| Error::Config(format!("bad tabulated entry '{entry}'")))?;
                points.push(parse_f64(x)?);
                weights.push(parse_f64(w)?);
            }
            SignalPrior::tabulated(parse_f64(atom)?, points, weights)
        }
        _ => Err(Error::Config(format!("unknown prior '{s}'"))),
    }
}

pub fn parse_channel(s: &str) -> Result<OutputChannel> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["awgn", v] => OutputChannel::awgn(parse_f64(v)?),
        ["poisson", gain] => OutputChannel::poisson(parse_f64(gain)?),
        _ => Err(Error::Config(format!("unknown channel '{s}'"))),
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| Error::Config(format!("bad number '{s}'")))
}

/// Desk-scale defaults run in minutes on a laptop; `full_scale` restores the
/// published experiment sizes.
pub fn preset(name: &str, full_scale: bool) -> Result<ExperimentConfig> {
    let ratios_sweep: Vec<f64> = vec![0.2, 0.3, 0.4, 0.5, 0.6];
    let cfg = match name {
        "fig3" => ExperimentConfig {
            preset: "fig3".into(),
            n: if full_scale { 10_000 } else { 2_000 },
            n_sweep: None,
            measurement_ratios: ratios_sweep,
            prior: "sparse-gaussian:0.03:1.0".into(),
            channel: "awgn:3e-4".into(),
            estimators: vec![
                "metric-optimal:abs".into(),
                "metric-optimal:pow:0.5".into(),
                "metric-optimal:pow:1.5".into(),
                "relaxed-bp-mean".into(),
                "cosamp".into(),
            ],
            metrics_reported: vec!["abs".into(), "pow:0.5".into(), "pow:1.5".into()],
            trials: if full_scale { 100 } else { 50 },
            master_seed: 1,
            output_path: None,
        },
        "fig4" => ExperimentConfig {
            preset: "fig4".into(),
            n: if full_scale { 10_000 } else { 2_000 },
            n_sweep: None,
            measurement_ratios: ratios_sweep,
            prior: "sparse-weibull:0.03:1.0:0.5".into(),
            channel: "poisson:100".into(),
            estimators: vec![
                "metric-optimal:abs".into(),
                "metric-optimal:pow:0.5".into(),
                "metric-optimal:pow:1.5".into(),
                "relaxed-bp-mean".into(),
                "cosamp".into(),
            ],
            metrics_reported: vec!["abs".into(), "pow:0.5".into(), "pow:1.5".into()],
            trials: if full_scale { 100 } else { 50 },
            master_seed: 1,
            output_path: None,
        },
        "fig5a" => ExperimentConfig {
            preset: "fig5a".into(),
            n: if full_scale { 10_000 } else { 2_000 },
            n_sweep: None,
            measurement_ratios: ratios_sweep,
            prior: "sparse-gaussian:0.03:1.0".into(),
            channel: "awgn:3e-4".into(),
            estimators: vec!["metric-optimal:abs".into()],
            metrics_reported: vec!["abs".into()],
            trials: if full_scale { 40 } else { 20 },
            master_seed: 1,
            output_path: None,
        },
        "fig5b" => ExperimentConfig {
            preset: "fig5b".into(),
            n: if full_scale { 10_000 } else { 2_000 },
            n_sweep: None,
            measurement_ratios: ratios_sweep,
            prior: "sparse-gaussian:0.03:1.0".into(),
            channel: "awgn:3e-4".into(),
            estimators: vec!["metric-optimal:support".into()],
            metrics_reported: vec!["support".into()],
            trials: if full_scale { 40 } else { 20 },
            master_seed: 1,
            output_path: None,
        },
        "fig6" => ExperimentConfig {
            preset: "fig6".into(),
            n: 500,
            n_sweep: Some(if full_scale {
                vec![500, 1_000, 2_000, 5_000, 10_000, 20_000]
            } else {
                vec![500, 1_000, 2_000, 5_000]
            }),
            measurement_ratios: vec![0.3],
            prior: "sparse-gaussian:0.05:1.0".into(),
            // SNR stays at 20 dB: E[w^2] = s sigma^2 = 0.05 over unit-norm rows.
            channel: "awgn:5e-4".into(),
            estimators: vec![
                "wiener-linf".into(),
                "lp:5".into(),
                "lp:10".into(),
                "lp:15".into(),
            ],
            metrics_reported: vec!["linf".into()],
            trials: 50,
            master_seed: 1,
            output_path: None,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (expected fig3, fig4, fig5a, fig5b, fig6, or custom)"
            )))
        }
    };
    Ok(cfg)
}

/// Parse a JSON config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
    validate(&cfg)?;
    Ok(cfg)
}

pub fn validate(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.trials < 1 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    if cfg.measurement_ratios.is_empty()
        || cfg.measurement_ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0))
    {
        return Err(Error::Config("measurement ratios must lie in (0, 1]".into()));
    }
    if cfg.n < 1 {
        return Err(Error::Config("n must be at least 1".into()));
    }
    if let Some(sweep) = &cfg.n_sweep {
        if sweep.is_empty() || sweep.iter().any(|&n| n < 1) {
            return Err(Error::Config("n_sweep entries must be at least 1".into()));
        }
    }
    parse_prior(&cfg.prior)?;
    parse_channel(&cfg.channel)?;
    if cfg.estimators.is_empty() {
        return Err(Error::Config("at least one estimator is required".into()));
    }
    for e in &cfg.estimators {
        HarnessEstimator::parse(e)?;
    }
    if cfg.metrics_reported.is_empty() {
        return Err(Error::Config("at least one reported metric is required".into()));
    }
    for m in &cfg.metrics_reported {
        ReportMetric::parse(m)?;
    }
    Ok(())
}

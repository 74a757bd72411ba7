use std::path::PathBuf;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tweezerlab::fit::{fit_composite_gaussian, fit_poisson, CompositeGaussianParams};
use tweezerlab::imaging::{synth_histogram, CountHistogram, OccupancyLaw};

use super::{Context, Resolved};
use crate::config::{parse, read_input, to_value};
use crate::output::num;
use crate::{CliError, CliResult};

/// Composite-Gaussian parameters in camera counts.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct PeakParams {
    pub i_bg_counts: f64,
    pub w_bg_counts: f64,
    pub i_a_counts: f64,
    /// Atom-peak broadening; the width of peak `n` is `w·sqrt(n·I_a + I_bg)`.
    pub w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OccupancyConfig {
    /// Poisson mean atom number.
    pub poisson_mean: Option<f64>,
    /// Explicit `P(n)`, normalized on use.
    pub probabilities: Option<Vec<f64>>,
    /// Restricts a Poisson law to `0..=n` and renormalizes.
    pub truncate_n_max: Option<usize>,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self {
            poisson_mean: Some(0.45),
            probabilities: None,
            truncate_n_max: Some(3),
        }
    }
}

impl OccupancyConfig {
    fn law(&self) -> CliResult<OccupancyLaw> {
        match (self.poisson_mean, &self.probabilities) {
            (Some(m), None) => Ok(match self.truncate_n_max {
                Some(n) => OccupancyLaw::truncated_poisson(m, n),
                None => OccupancyLaw::Poisson { mean: m },
            }),
            (None, Some(p)) => Ok(OccupancyLaw::Probabilities(p.clone())),
            _ => Err(CliError::Config(
                "occupancy: give exactly one of poisson_mean and probabilities".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub params: PeakParams,
    pub occupancy: OccupancyConfig,
    pub n_shots: usize,
    pub bin_width_counts: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            params: PeakParams {
                i_bg_counts: 370.0,
                w_bg_counts: 134.0,
                i_a_counts: 1037.0,
                w: 11.0,
            },
            occupancy: OccupancyConfig::default(),
            n_shots: 800,
            bin_width_counts: 40.0,
            seed: 1,
        }
    }
}

pub fn synth(value: Value, ctx: &mut Context) -> CliResult<Resolved> {
    let cfg: SynthConfig = parse(value)?;
    let law = cfg.occupancy.law()?;
    let p = &cfg.params;
    let params = CompositeGaussianParams::new(vec![1.0], p.i_bg_counts, p.w_bg_counts, p.i_a_counts, p.w)?;
    let h = synth_histogram(&params, &law, cfg.n_shots, cfg.bin_width_counts, cfg.seed)?;
    write_histogram(ctx, &h)?;
    Ok(Resolved {
        config: to_value(&cfg),
        seed: Some(cfg.seed),
    })
}

fn write_histogram(ctx: &mut Context, h: &CountHistogram) -> CliResult<()> {
    ctx.out.csv(
        "histogram.csv",
        &["bin_center", "occurrence"],
        h.centers()
            .iter()
            .zip(&h.occurrences)
            .map(|(c, o)| vec![num(*c), o.to_string()]),
    )
}

/// Reads `bin_center,occurrence` rows on a uniform grid.
fn read_histogram(bytes: &[u8], path: &str) -> CliResult<CountHistogram> {
    let bad = |m: String| CliError::Config(format!("{path}: {m}"));
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (ci, oi) = (col("bin_center")?, col("occurrence")?);
    let mut centers = Vec::new();
    let mut occ = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> CliResult<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: unreadable number", line + 2)))
        };
        let o = field(oi)?;
        if !(o >= 0.0 && o.fract() == 0.0) {
            return Err(bad(format!(
                "row {}: occurrence must be a non-negative integer",
                line + 2
            )));
        }
        centers.push(field(ci)?);
        occ.push(o as u64);
    }
    if centers.len() < 2 {
        return Err(bad("need at least two bins".into()));
    }
    let width = centers[1] - centers[0];
    let uniform = centers
        .windows(2)
        .all(|w| ((w[1] - w[0]) - width).abs() <= 1e-6 * width.abs());
    if !(width > 0.0) || !uniform {
        return Err(bad("bin centers must be increasing and evenly spaced".into()));
    }
    let mut edges: Vec<f64> = centers.iter().map(|c| c - 0.5 * width).collect();
    edges.push(centers[centers.len() - 1] + 0.5 * width);
    Ok(CountHistogram::new(edges, occ)?)
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// CSV with `bin_center` and `occurrence` columns.
    pub histogram_csv: Option<PathBuf>,
    pub n_max: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            histogram_csv: None,
            n_max: 3,
        }
    }
}

pub fn fit(value: Value, ctx: &mut Context) -> CliResult<Resolved> {
    let cfg: FitConfig = parse(value)?;
    let path = cfg
        .histogram_csv
        .as_ref()
        .ok_or_else(|| CliError::Config("key `histogram_csv` is required".into()))?;
    let bytes = read_input(path, ctx.inputs)?;
    let h = read_histogram(&bytes, &path.display().to_string())?;
    let fit = fit_composite_gaussian(&h, cfg.n_max)?;
    let poisson = fit_poisson(&fit.occupancy)?;
    let edges = &h.bin_edges;
    ctx.out.csv(
        "model.csv",
        &["bin_center", "occurrence", "model"],
        h.centers().iter().enumerate().map(|(i, c)| {
            vec![
                num(*c),
                h.occurrences[i].to_string(),
                num(fit.params.bin_occurrence(edges[i], edges[i + 1])),
            ]
        }),
    )?;
    let p = &fit.params;
    ctx.out.json(
        "fit.json",
        &json!({
            "i_bg_counts": p.i_bg,
            "w_bg_counts": p.w_bg,
            "i_a_counts": p.i_a,
            "w": p.w,
            "occurrences": p.occurrences,
            "signal_to_background": p.i_a / p.i_bg,
            "standard_errors": fit.standard_errors,
            "covariance": fit.covariance,
            "occupancy": fit.occupancy,
            "poisson": poisson,
            "background": fit.background,
            "diagnostics": fit.diagnostics,
        }),
    )?;
    Ok(Resolved {
        config: to_value(&cfg),
        seed: None,
    })
}

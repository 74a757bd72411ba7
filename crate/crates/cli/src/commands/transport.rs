use std::path::PathBuf;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tweezerlab::fit::{
    fit_transport_ensemble, synth_transport_data, ExponentialModel, TransportFitOptions, TransportPoint,
};

use super::{linspace, Context, Resolved};
use crate::config::{parse, read_input, to_value};
use crate::output::{num, opt};
use crate::{CliError, CliResult};

/// Generates data instead of reading `data_csv`.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_bar: f64,
    pub z_max_um: f64,
    /// Transport distances run from `dz_start_um` down to `dz_end_um`.
    pub dz_start_um: f64,
    pub dz_end_um: f64,
    pub dz_count: usize,
    pub repetitions: usize,
    pub noise_counts: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_bar: 3.6,
            z_max_um: 10.3,
            dz_start_um: 0.0,
            dz_end_um: -12.0,
            dz_count: 25,
            repetitions: 200,
            noise_counts: 100.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    /// CSV with `dz_um`, `counts` and optional `error` columns.
    pub data_csv: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    /// Single-atom count model `A exp(-z/ζ)`.
    pub amplitude_counts: f64,
    pub decay_length_um: f64,
    pub background_counts: f64,
    pub lattice_wavelength_nm: f64,
    pub n_configs: usize,
    pub seed: u64,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            data_csv: None,
            synthetic: None,
            amplitude_counts: 900.0,
            decay_length_um: 5.0,
            background_counts: 220.0,
            lattice_wavelength_nm: 935.0,
            n_configs: 100,
            seed: 1,
        }
    }
}

fn read_points(bytes: &[u8], path: &str) -> CliResult<Vec<TransportPoint>> {
    let bad = |m: String| CliError::Config(format!("{path}: {m}"));
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let need = |name: &str| col(name).ok_or_else(|| bad(format!("missing column `{name}`")));
    let (zi, ci, ei) = (need("dz_um")?, need("counts")?, col("error"));
    let mut points = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let field = |i: usize| -> CliResult<Option<f64>> {
            match rec.get(i).map(str::trim) {
                None | Some("") => Ok(None),
                Some(s) => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| bad(format!("row {}: unreadable number `{s}`", line + 2))),
            }
        };
        let missing = || bad(format!("row {}: empty value", line + 2));
        points.push(TransportPoint {
            dz: field(zi)?.ok_or_else(missing)? * 1e-6,
            counts: field(ci)?.ok_or_else(missing)?,
            error: match ei {
                Some(i) => field(i)?,
                None => None,
            },
        });
    }
    Ok(points)
}

pub fn run(value: Value, ctx: &mut Context) -> CliResult<Resolved> {
    let cfg: TransportConfig = parse(value)?;
    let model = ExponentialModel {
        amplitude: cfg.amplitude_counts,
        decay_length: cfg.decay_length_um * 1e-6,
    };
    let lambda_t = cfg.lattice_wavelength_nm * 1e-9;
    let data = match (&cfg.data_csv, &cfg.synthetic) {
        (Some(path), None) => {
            let bytes = read_input(path, ctx.inputs)?;
            read_points(&bytes, &path.display().to_string())?
        }
        (None, Some(s)) => {
            if s.dz_count < 3 || s.repetitions < 2 || !(s.dz_start_um <= 0.0 && s.dz_end_um < s.dz_start_um) {
                return Err(CliError::Config(
                    "synthetic: need dz_end_um < dz_start_um <= 0, dz_count >= 3, repetitions >= 2".into(),
                ));
            }
            let dzs: Vec<f64> = linspace(s.dz_start_um, s.dz_end_um, s.dz_count)
                .iter()
                .map(|d| d * 1e-6)
                .collect();
            let pts = synth_transport_data(
                &model,
                cfg.background_counts,
                s.n_bar,
                s.z_max_um * 1e-6,
                lambda_t,
                &dzs,
                s.repetitions,
                s.noise_counts,
                cfg.seed,
            );
            ctx.out.csv(
                "data.csv",
                &["dz_um", "counts", "error"],
                pts.iter().map(|p| vec![num(p.dz * 1e6), num(p.counts), opt(p.error)]),
            )?;
            pts
        }
        _ => {
            return Err(CliError::Config(
                "give exactly one of `data_csv` and `synthetic`".into(),
            ));
        }
    };
    let options = TransportFitOptions {
        n_configs: cfg.n_configs,
        seed: cfg.seed,
        initial: None,
    };
    let fit = fit_transport_ensemble(&data, &model, cfg.background_counts, lambda_t, &options)?;
    ctx.out.csv(
        "model.csv",
        &["dz_um", "data", "model", "ensemble_mean", "ensemble_error"],
        fit.points.iter().map(|p| {
            vec![
                num(p.dz * 1e6),
                num(p.data),
                num(p.model),
                num(p.ensemble_mean),
                num(p.ensemble_error),
            ]
        }),
    )?;
    let se = |i: usize| fit.covariance.as_ref().map(|c| c[i][i].max(0.0).sqrt());
    ctx.out.json(
        "fit.json",
        &json!({
            "n_bar": fit.n_bar,
            "n_bar_error": se(0),
            "z_max_um": fit.z_max * 1e6,
            "z_max_error_um": se(1).map(|e| e * 1e6),
            "i_max": fit.i_max,
            "residual_norm": fit.residual_norm,
            "covariance": fit.covariance,
            "n_configs": fit.n_configs,
            "seed": fit.seed,
            "diagnostics": fit.diagnostics,
        }),
    )?;
    Ok(Resolved {
        config: to_value(&cfg),
        seed: Some(cfg.seed),
    })
}

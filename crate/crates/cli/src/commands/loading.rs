use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tweezerlab::loading::{run_loading, CoolingModel, LoadingPotential, MCConfig};

use super::{Context, Resolved, TrapSpec};
use crate::config::{parse, to_value};
use crate::output::num;
use crate::CliResult;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum CoolingKind {
    Doppler,
    None,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct CoolingConfig {
    pub model: CoolingKind,
    /// Damping rate `β/m`, overriding the model default.
    pub damping_rate_per_s: Option<f64>,
    /// Photon scattering rate, overriding the model default.
    pub scattering_rate_per_s: Option<f64>,
}

impl Default for CoolingConfig {
    fn default() -> Self {
        Self {
            model: CoolingKind::Doppler,
            damping_rate_per_s: None,
            scattering_rate_per_s: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct McLoadConfig {
    pub trap: TrapSpec,
    pub seed: u64,
    pub n_trajectories: usize,
    #[serde(rename = "temperature_uK")]
    pub temperature_uk: f64,
    pub duration_ms: f64,
    pub dt_us: f64,
    pub box_width_um: f64,
    pub box_height_um: f64,
    pub adsorption_height_nm: f64,
    pub cooling: CoolingConfig,
}

impl Default for McLoadConfig {
    fn default() -> Self {
        Self {
            trap: TrapSpec::default(),
            seed: 1,
            n_trajectories: 10_000,
            temperature_uk: 20.0,
            duration_ms: 1.0,
            dt_us: 0.5,
            box_width_um: 10.0,
            box_height_um: 20.0,
            adsorption_height_nm: 10.0,
            cooling: CoolingConfig::default(),
        }
    }
}

pub fn run(value: Value, ctx: &mut Context) -> CliResult<Resolved> {
    let cfg: McLoadConfig = parse(value)?;
    let potential = cfg.trap.potential()?;
    let constants = *potential.constants();
    let mut cooling = match cfg.cooling.model {
        CoolingKind::Doppler => CoolingModel::doppler(&constants),
        CoolingKind::None => CoolingModel::none(),
    };
    if let Some(g) = cfg.cooling.damping_rate_per_s {
        cooling.damping = g * constants.mass;
    }
    if let Some(r) = cfg.cooling.scattering_rate_per_s {
        cooling.scattering_rate = r;
    }
    let mc = MCConfig {
        box_width: cfg.box_width_um * 1e-6,
        box_height: cfg.box_height_um * 1e-6,
        n_trajectories: cfg.n_trajectories,
        temperature: cfg.temperature_uk * 1e-6,
        duration: cfg.duration_ms * 1e-3,
        dt: cfg.dt_us * 1e-6,
        cooling,
        seed: cfg.seed,
        adsorption_height: cfg.adsorption_height_nm * 1e-9,
    };
    mc.validate()?;
    let lp = LoadingPotential::build(&potential, &mc)?;
    let report = run_loading(&mc, &constants, &lp)?;
    ctx.out.csv(
        "outcomes.csv",
        &["trajectory", "outcome", "final_z_um", "site"],
        report.outcomes.iter().map(|o| {
            vec![
                o.index.to_string(),
                o.outcome.as_str().to_string(),
                num(o.final_z * 1e6),
                o.site.map(|s| s.to_string()).unwrap_or_default(),
            ]
        }),
    )?;
    ctx.out.csv(
        "sites.csv",
        &["index", "z_um", "count", "probability"],
        report.site_histogram.iter().map(|s| {
            vec![
                s.index.to_string(),
                num(s.z * 1e6),
                s.count.to_string(),
                num(s.probability),
            ]
        }),
    )?;
    ctx.out.json("report.json", &report)?;
    Ok(Resolved {
        config: to_value(&cfg),
        seed: Some(cfg.seed),
    })
}

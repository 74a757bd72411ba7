use std::path::PathBuf;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tweezerlab::assembly::{
    simulate_assembly_ensemble, survival_summary, AssemblyPlan, InitialOccupancy, ProbeModel, TransportModel,
};
use tweezerlab::loading::LoadingReport;

use super::{Context, Resolved};
use crate::config::{parse, parse_json, read_input, to_value};
use crate::output::{num, opt};
use crate::{CliError, CliResult};

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    /// Explicit tone list; otherwise `count` tones from `first_tone_MHz`.
    #[serde(rename = "tones_MHz")]
    pub tones_mhz: Option<Vec<f64>>,
    #[serde(rename = "first_tone_MHz")]
    pub first_tone_mhz: f64,
    #[serde(rename = "spacing_MHz")]
    pub spacing_mhz: f64,
    pub count: usize,
    #[serde(rename = "axial_frequency_kHz")]
    pub axial_frequency_khz: f64,
    pub transport_budget_ms: f64,
    pub probe_drop_threshold: f64,
    pub switch_time_us: f64,
    /// Trap lifetime; `null` for no loss.
    pub lifetime_ms: Option<f64>,
    pub detection_latency_us: f64,
    pub spacing_ratio: f64,
    pub resonance_ratio: f64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            tones_mhz: None,
            first_tone_mhz: 70.0,
            spacing_mhz: 6.0,
            count: 10,
            axial_frequency_khz: 500.0,
            transport_budget_ms: 5.0,
            probe_drop_threshold: 0.7,
            switch_time_us: 0.1,
            lifetime_ms: Some(900.0),
            detection_latency_us: 10.0,
            spacing_ratio: 10.0,
            resonance_ratio: 10.0,
        }
    }
}

impl PlanConfig {
    fn plan(&self) -> AssemblyPlan {
        let tones = match &self.tones_mhz {
            Some(t) => t.iter().map(|f| f * 1e6).collect(),
            None => (0..self.count)
                .map(|i| (self.first_tone_mhz + i as f64 * self.spacing_mhz) * 1e6)
                .collect(),
        };
        AssemblyPlan {
            tones,
            axial_frequency: self.axial_frequency_khz * 1e3,
            transport_budget: self.transport_budget_ms * 1e-3,
            probe_drop_threshold: self.probe_drop_threshold,
            switch_time: self.switch_time_us * 1e-6,
            lifetime: self.lifetime_ms.map(|l| l * 1e-3),
            detection_latency: self.detection_latency_us * 1e-6,
            spacing_ratio: self.spacing_ratio,
            resonance_ratio: self.resonance_ratio,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct TransportModelConfig {
    pub ramp_fraction: f64,
    /// Height the conveyor aims for; `null` uses the probe trigger height.
    pub target_height_nm: Option<f64>,
    pub wavelength_nm: f64,
}

impl Default for TransportModelConfig {
    fn default() -> Self {
        let t = TransportModel::default();
        Self {
            ramp_fraction: t.ramp_fraction,
            target_height_nm: Some(t.target_height * 1e9),
            wavelength_nm: t.wavelength * 1e9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub max_drop: f64,
    /// Evanescent decay length in units of `λ_a / 2π`.
    pub evanescent_scale: f64,
    pub wavelength_nm: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let p = ProbeModel::default();
        Self {
            max_drop: p.max_drop,
            evanescent_scale: p.evanescent_scale,
            wavelength_nm: p.wavelength * 1e9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SiteProbability {
    pub z_um: f64,
    pub probability: f64,
}

/// Exactly one source of initial atoms.
#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct OccupancyConfig {
    /// Height per tweezer; `null` marks an empty tweezer.
    pub explicit_z_um: Option<Vec<Option<f64>>>,
    pub sites: Option<Vec<SiteProbability>>,
    /// `report.json` written by `mc-load`.
    pub loading_report: Option<PathBuf>,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self {
            explicit_z_um: None,
            sites: Some(vec![SiteProbability {
                z_um: 10.0,
                probability: 0.9,
            }]),
            loading_report: None,
        }
    }
}

impl OccupancyConfig {
    fn resolve(&self, ctx: &mut Context) -> CliResult<InitialOccupancy> {
        match (&self.explicit_z_um, &self.sites, &self.loading_report) {
            (Some(z), None, None) => Ok(InitialOccupancy::Explicit(
                z.iter().map(|v| v.map(|z| z * 1e-6)).collect(),
            )),
            (None, Some(s), None) => Ok(InitialOccupancy::Sites(
                s.iter().map(|s| (s.z_um * 1e-6, s.probability)).collect(),
            )),
            (None, None, Some(path)) => {
                let bytes = read_input(path, ctx.inputs)?;
                let report: LoadingReport = parse(parse_json(&bytes, path)?)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                Ok(InitialOccupancy::from_loading(&report))
            }
            _ => Err(CliError::Config(
                "occupancy: give exactly one of explicit_z_um, sites and loading_report".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct AssembleConfig {
    pub plan: PlanConfig,
    pub transport: TransportModelConfig,
    pub probe: ProbeConfig,
    pub occupancy: OccupancyConfig,
    pub seed: u64,
    pub runs: u64,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        Self {
            plan: PlanConfig::default(),
            transport: TransportModelConfig::default(),
            probe: ProbeConfig::default(),
            occupancy: OccupancyConfig::default(),
            seed: 1,
            runs: 1,
        }
    }
}

pub fn run(value: Value, ctx: &mut Context) -> CliResult<Resolved> {
    let mut cfg: AssembleConfig = parse(value)?;
    if cfg.runs == 0 {
        return Err(CliError::Config("runs must be at least 1".into()));
    }
    let plan = cfg.plan.plan();
    let probe = ProbeModel {
        max_drop: cfg.probe.max_drop,
        evanescent_scale: cfg.probe.evanescent_scale,
        wavelength: cfg.probe.wavelength_nm * 1e-9,
    };
    let target = match cfg.transport.target_height_nm {
        Some(h) => h * 1e-9,
        None => probe.trigger_height(plan.probe_drop_threshold),
    };
    cfg.transport.target_height_nm = Some(target * 1e9);
    let transport = TransportModel {
        wavelength: cfg.transport.wavelength_nm * 1e-9,
        ramp_fraction: cfg.transport.ramp_fraction,
        target_height: target,
    };
    let occupancy = cfg.occupancy.resolve(ctx)?;
    let reports = simulate_assembly_ensemble(&plan, &occupancy, &transport, &probe, cfg.seed, cfg.runs)?;
    let first = &reports[0];
    ctx.out.json("report.json", first)?;
    ctx.out.csv(
        "events.csv",
        &["t_s", "tweezer", "event"],
        first
            .events
            .iter()
            .map(|e| vec![num(e.t), e.tweezer.to_string(), e.kind.as_str().to_string()]),
    )?;
    ctx.out.csv(
        "sites.csv",
        &[
            "tweezer",
            "outcome",
            "initial_z_um",
            "final_z_um",
            "detection_time_s",
            "park_time_s",
            "assembly_time_s",
            "survival_probability",
        ],
        first.sites.iter().map(|s| {
            vec![
                s.tweezer.to_string(),
                serde_json::to_value(s.outcome)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                opt(s.initial_z.map(|z| z * 1e6)),
                opt(s.final_z.map(|z| z * 1e6)),
                opt(s.detection_time),
                opt(s.park_time),
                opt(s.assembly_time),
                num(s.survival_probability),
            ]
        }),
    )?;
    if cfg.runs > 1 {
        let summary = survival_summary(&reports, &plan);
        let assembled: Vec<usize> = reports.iter().map(|r| r.assembled).collect();
        ctx.out.json(
            "summary.json",
            &json!({
                "survival": summary,
                "assembled_per_run": assembled,
                "max_duration_s": reports.iter().map(|r| r.duration).fold(0.0, f64::max),
            }),
        )?;
    }
    Ok(Resolved {
        config: to_value(&cfg),
        seed: Some(cfg.seed),
    })
}

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tweezerlab::beam::{ComplexField, TrapField};
use tweezerlab::conveyor::{transport_kinematics, DetuningProfile};
use tweezerlab::sites::{radial_sign_flip, SiteSearch};

use super::{linspace, Context, Resolved, TrapSpec};
use crate::config::{parse, to_value};
use crate::output::{num, opt};
use crate::{CliError, CliResult};

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub trap: TrapSpec,
    pub rho_um: Vec<f64>,
    pub z_start_um: f64,
    pub z_end_um: f64,
    pub z_count: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            trap: TrapSpec::default(),
            rho_um: vec![0.0],
            z_start_um: 0.0,
            z_end_um: 20.0,
            z_count: 401,
        }
    }
}

fn check_range(start: f64, end: f64, count: usize, what: &str) -> CliResult<()> {
    if !(end > start) || count < 2 {
        return Err(CliError::Config(format!(
            "{what}: need start < end and at least 2 samples"
        )));
    }
    Ok(())
}

pub fn field(value: Value, ctx: &mut Context) -> CliResult<Resolved> {
    let cfg: FieldConfig = parse(value)?;
    check_range(cfg.z_start_um, cfg.z_end_um, cfg.z_count, "z range")?;
    if cfg.rho_um.is_empty() {
        return Err(CliError::Config("rho_um must list at least one radius".into()));
    }
    let field = TrapField::new(&cfg.trap.configuration()?)?;
    let rho: Vec<f64> = cfg.rho_um.iter().map(|r| r * 1e-6).collect();
    let z: Vec<f64> = linspace(cfg.z_start_um, cfg.z_end_um, cfg.z_count)
        .iter()
        .map(|z| z * 1e-6)
        .collect();
    let grid = ComplexField::sample(&field, rho.clone(), z.clone())?;
    let mut rows = Vec::with_capacity(rho.len() * z.len());
    for (i, r) in rho.iter().enumerate() {
        for (j, zz) in z.iter().enumerate() {
            let e = grid.at(i, j);
            rows.push(vec![
                num(r * 1e6),
                num(zz * 1e6),
                num(e.re),
                num(e.im),
                num(e.norm_sqr()),
            ]);
        }
    }
    ctx.out
        .csv("field.csv", &["rho_um", "z_um", "re_E", "im_E", "intensity_W_m2"], rows)?;
    ctx.out.json(
        "summary.json",
        &json!({
            "reflectance_normal": field.reflectance_normal(),
            "has_bottom_beam": field.has_bottom_beam(),
        }),
    )?;
    Ok(Resolved {
        config: to_value(&cfg),
        seed: None,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    pub trap: TrapSpec,
    pub z_start_um: f64,
    pub z_end_um: f64,
    pub z_count: usize,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            trap: TrapSpec::default(),
            z_start_um: 0.02,
            z_end_um: 20.0,
            z_count: 2000,
        }
    }
}

pub fn potential(value: Value, ctx: &mut Context) -> CliResult<Resolved> {
    let cfg: PotentialConfig = parse(value)?;
    check_range(cfg.z_start_um, cfg.z_end_um, cfg.z_count, "z range")?;
    if !(cfg.z_start_um > 0.0) {
        return Err(CliError::Config("z_start_um must be above the surface".into()));
    }
    let pot = cfg.trap.potential()?;
    let c = *pot.constants();
    let (z, u) = pot.line_cut(cfg.z_start_um * 1e-6, cfg.z_end_um * 1e-6, cfg.z_count)?;
    let mk = |e: f64| c.joules_to_millikelvin(e);
    ctx.out.csv(
        "potential.csv",
        &["z_um", "total_mK", "dipole_mK", "surface_mK"],
        z.iter().zip(&u).map(|(&z, &u)| {
            let s = pot.surface(z);
            vec![num(z * 1e6), num(mk(u)), num(mk(u - s)), num(mk(s))]
        }),
    )?;
    let sites = pot.sites(cfg.z_start_um * 1e-6, cfg.z_end_um * 1e-6, &SiteSearch::default())?;
    ctx.out.csv(
        "sites.csv",
        &[
            "index",
            "z_um",
            "depth_mK",
            "f_axial_kHz",
            "f_radial_kHz",
            "eta_axial_sq",
            "eta_radial_sq",
        ],
        sites.iter().map(|s| {
            vec![
                s.index.to_string(),
                num(s.z * 1e6),
                num(s.depth_millikelvin(&c)),
                num(s.f_axial * 1e-3),
                opt(s.f_radial.map(|f| f * 1e-3)),
                num(s.eta_axial_sq),
                opt(s.eta_radial_sq),
            ]
        }),
    )?;
    let deepest = sites.iter().max_by(|a, b| a.depth.total_cmp(&b.depth));
    ctx.out.json(
        "summary.json",
        &json!({
            "polarizability_C_m2_per_V": c.polarizability,
            "site_count": sites.len(),
            "deepest_site": deepest.map(|s| json!({
                "index": s.index,
                "z_um": s.z * 1e6,
                "depth_mK": s.depth_millikelvin(&c),
                "f_axial_kHz": s.f_axial * 1e-3,
                "eta_axial_sq": s.eta_axial_sq,
            })),
            "radial_sign_flip_um": radial_sign_flip(&sites).map(|z| z * 1e6),
        }),
    )?;
    Ok(Resolved {
        config: to_value(&cfg),
        seed: None,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ConveyorConfig {
    pub wavelength_nm: f64,
    #[serde(rename = "peak_detuning_kHz")]
    pub peak_detuning_khz: f64,
    pub hold_ms: f64,
    pub ramp_ms: f64,
    pub samples: usize,
}

impl Default for ConveyorConfig {
    fn default() -> Self {
        Self {
            wavelength_nm: 935.0,
            peak_detuning_khz: 1.0,
            hold_ms: 1.0,
            ramp_ms: 1.0,
            samples: 201,
        }
    }
}

pub fn conveyor(value: Value, ctx: &mut Context) -> CliResult<Resolved> {
    let cfg: ConveyorConfig = parse(value)?;
    let profile = DetuningProfile::trapezoid(cfg.peak_detuning_khz * 1e3, cfg.hold_ms * 1e-3, cfg.ramp_ms * 1e-3)?;
    let k = transport_kinematics(&profile, cfg.wavelength_nm * 1e-9, cfg.samples)?;
    ctx.out.csv(
        "conveyor.csv",
        &["t_ms", "detuning_kHz", "displacement_um"],
        k.t.iter()
            .zip(&k.detuning)
            .zip(&k.displacement)
            .map(|((t, d), z)| vec![num(t * 1e3), num(d * 1e-3), num(z * 1e6)]),
    )?;
    ctx.out.json(
        "summary.json",
        &json!({
            "duration_ms": profile.end() * 1e3,
            "final_displacement_um": k.final_displacement * 1e6,
        }),
    )?;
    Ok(Resolved {
        config: to_value(&cfg),
        seed: None,
    })
}

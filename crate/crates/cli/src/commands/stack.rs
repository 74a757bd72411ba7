use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tweezerlab::optics::{materials, stack_response, Layer, LayerStack, Polarization};
use tweezerlab::Complex64;

use super::{linspace, Context, Resolved};
use crate::config::{parse, to_value};
use crate::output::num;
use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum StackPreset {
    /// 2 μm silica over 550 nm nitride.
    Membrane,
    /// Membrane capped by the 360 nm nitride layer.
    MembraneTopNitride,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Pol {
    S,
    P,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct FilmConfig {
    pub index: f64,
    #[serde(default)]
    pub index_imag: f64,
    pub thickness_nm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct StackConfig {
    /// Used when `films` is absent.
    pub preset: StackPreset,
    pub silica_index: f64,
    pub nitride_index: f64,
    /// Interior films from the incidence side, replacing the preset.
    pub films: Option<Vec<FilmConfig>>,
    pub incidence_index: f64,
    pub exit_index: f64,
    pub wavelength_nm: f64,
    pub angle_start_deg: f64,
    pub angle_stop_deg: f64,
    pub angle_count: usize,
    pub polarizations: Vec<Pol>,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            preset: StackPreset::Membrane,
            silica_index: materials::SILICA,
            nitride_index: materials::SILICON_NITRIDE,
            films: None,
            incidence_index: 1.0,
            exit_index: 1.0,
            wavelength_nm: 935.0,
            angle_start_deg: 0.0,
            angle_stop_deg: 89.0,
            angle_count: 90,
            polarizations: vec![Pol::S, Pol::P],
        }
    }
}

impl StackConfig {
    fn stack(&self) -> CliResult<LayerStack> {
        match &self.films {
            Some(films) => {
                let mut layers = vec![Layer::semi_infinite(self.incidence_index)];
                layers.extend(
                    films
                        .iter()
                        .map(|f| Layer::film(Complex64::new(f.index, f.index_imag), f.thickness_nm * 1e-9)),
                );
                layers.push(Layer::semi_infinite(self.exit_index));
                Ok(LayerStack::new(layers)?)
            }
            None => {
                if !(self.silica_index > 0.0 && self.nitride_index > 0.0) {
                    return Err(CliError::Config("preset indices must be positive".into()));
                }
                let top = matches!(self.preset, StackPreset::MembraneTopNitride);
                Ok(LayerStack::membrane_with(self.silica_index, self.nitride_index, top))
            }
        }
    }
}

pub fn run(value: Value, ctx: &mut Context) -> CliResult<Resolved> {
    let cfg: StackConfig = parse(value)?;
    if cfg.angle_count == 0 || cfg.polarizations.is_empty() {
        return Err(CliError::Config(
            "angle_count and polarizations must be non-empty".into(),
        ));
    }
    let stack = cfg.stack()?;
    let angles = linspace(cfg.angle_start_deg, cfg.angle_stop_deg, cfg.angle_count);
    let mut rows = Vec::new();
    for pol in &cfg.polarizations {
        let (p, label) = match pol {
            Pol::S => (Polarization::S, "s"),
            Pol::P => (Polarization::P, "p"),
        };
        for &deg in &angles {
            let r = stack_response(&stack, cfg.wavelength_nm * 1e-9, deg.to_radians(), p)?;
            rows.push(vec![
                num(deg),
                label.to_string(),
                num(r.reflectance),
                num(r.transmittance),
                num(1.0 - r.reflectance - r.transmittance),
            ]);
        }
    }
    ctx.out.csv(
        "reflectance.csv",
        &[
            "angle_deg",
            "polarization",
            "reflectance",
            "transmittance",
            "absorptance",
        ],
        rows,
    )?;
    Ok(Resolved {
        config: to_value(&cfg),
        seed: None,
    })
}

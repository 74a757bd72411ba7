//! Event-driven simulation of tone-multiplexed conveyor assembly with probe
//! feedback.
//!
//! One bottom-beam tone serves the tweezers in turn. While it sits on tweezer
//! `i` the conveyor lowers that atom toward the surface; a drop in probe
//! transmission stops transport and the atom is parked in a dark state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{LAMBDA_ATOM, LAMBDA_TRAP};
use crate::conveyor::DetuningProfile;
use crate::loading::{trajectory_rng, LoadingReport};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyPlan {
    /// Tweezer tones `ν_i` in Hz, served in order.
    pub tones: Vec<f64>,
    /// Axial trap frequency of the deepest site, Hz.
    pub axial_frequency: f64,
    /// Per-tweezer transport budget `τ_max`, s.
    pub transport_budget: f64,
    /// Detection fires once the drop reaches this fraction of its maximum.
    pub probe_drop_threshold: f64,
    /// Duration of a tone jump, s.
    pub switch_time: f64,
    /// Trap lifetime in s; `None` disables decay.
    pub lifetime: Option<f64>,
    /// Delay between the threshold crossing and the conveyor halt, s.
    pub detection_latency: f64,
    /// Minimum `Δν_i / f_a`.
    pub spacing_ratio: f64,
    /// Minimum `f_a / |ν_b - ν_i|` while the conveyor runs.
    pub resonance_ratio: f64,
}

impl AssemblyPlan {
    /// `m` tones from `first_tone` in steps of `spacing`, with default timing.
    pub fn uniform(m: usize, first_tone: f64, spacing: f64, axial_frequency: f64) -> Result<Self> {
        let plan = Self {
            tones: (0..m).map(|i| first_tone + i as f64 * spacing).collect(),
            axial_frequency,
            transport_budget: 5e-3,
            probe_drop_threshold: 0.7,
            switch_time: 1e-7,
            lifetime: Some(0.9),
            detection_latency: 10e-6,
            spacing_ratio: 10.0,
            resonance_ratio: 10.0,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidPlan(msg.into()));
        if self.tones.is_empty() {
            return bad("at least one tone is required");
        }
        if self.tones.iter().any(|t| !t.is_finite()) {
            return bad("tones must be finite");
        }
        if !(self.axial_frequency > 0.0 && self.axial_frequency.is_finite()) {
            return bad("axial frequency must be positive");
        }
        if !(self.transport_budget > 0.0 && self.transport_budget.is_finite()) {
            return bad("transport budget must be positive");
        }
        if !(self.probe_drop_threshold > 0.0 && self.probe_drop_threshold < 1.0) {
            return bad("probe drop threshold must lie in (0, 1)");
        }
        if !(self.switch_time >= 0.0 && self.switch_time.is_finite()) {
            return bad("switch time must be non-negative");
        }
        if let Some(l) = self.lifetime {
            if !(l >= 0.0) {
                return bad("lifetime must be non-negative");
            }
        }
        if !(self.detection_latency >= 0.0 && self.detection_latency.is_finite()) {
            return bad("detection latency must be non-negative");
        }
        if !(self.spacing_ratio > 0.0) || !(self.resonance_ratio > 0.0) {
            return bad("resonance ratios must be positive");
        }
        for (i, w) in self.tones.windows(2).enumerate() {
            let ratio = (w[1] - w[0]).abs() / self.axial_frequency;
            if !(ratio >= self.spacing_ratio) {
                return Err(Error::InvalidPlan(format!(
                    "tones {i} and {} are {:.3e} Hz apart, below {} x f_a",
                    i + 1,
                    (w[1] - w[0]).abs(),
                    self.spacing_ratio
                )));
            }
        }
        Ok(())
    }

    pub fn tone_spacings(&self) -> Vec<f64> {
        self.tones.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
    }

    /// Largest conveyor detuning allowed by the resonance condition.
    pub fn max_detuning(&self) -> f64 {
        self.axial_frequency / self.resonance_ratio
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub tweezer: usize,
    pub tone: f64,
    pub start: f64,
    pub end: f64,
}

/// Nominal bottom-beam frequency profile: one segment of `τ_max` per tone,
/// separated by jumps of `switch_time`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub segments: Vec<Segment>,
    pub switch_time: f64,
    pub total: f64,
}

impl Schedule {
    /// `ν_b(t)`: the segment tone, linear during jumps.
    pub fn bottom_frequency(&self, t: f64) -> f64 {
        let segs = &self.segments;
        for (k, s) in segs.iter().enumerate() {
            if t <= s.end {
                if t >= s.start || k == 0 {
                    return s.tone;
                }
                let prev = &segs[k - 1];
                let f = (t - prev.end) / (s.start - prev.end);
                return prev.tone + f * (s.tone - prev.tone);
            }
        }
        segs[segs.len() - 1].tone
    }

    /// `(t, ν_b)` corners of the profile.
    pub fn breakpoints(&self) -> Vec<(f64, f64)> {
        self.segments
            .iter()
            .flat_map(|s| [(s.start, s.tone), (s.end, s.tone)])
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ordered =
            self.segments.iter().all(|s| s.end >= s.start) && self.segments.windows(2).all(|w| w[1].start >= w[0].end);
        if ordered {
            Ok(())
        } else {
            Err(Error::InvalidPlan("segments overlap or are out of order".into()))
        }
    }
}

pub fn plan_schedule(plan: &AssemblyPlan) -> Result<Schedule> {
    plan.validate()?;
    let mut t = 0.0;
    let mut segments = Vec::with_capacity(plan.tones.len());
    for (i, &tone) in plan.tones.iter().enumerate() {
        if i > 0 {
            t += plan.switch_time;
        }
        segments.push(Segment {
            tweezer: i,
            tone,
            start: t,
            end: t + plan.transport_budget,
        });
        t += plan.transport_budget;
    }
    let s = Schedule {
        segments,
        switch_time: plan.switch_time,
        total: t,
    };
    s.validate()?;
    Ok(s)
}

/// Trapezoidal conveyor sized to bring the atom to `target_height` at the end
/// of the budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportModel {
    /// Lattice wavelength, m.
    pub wavelength: f64,
    /// Ramp duration as a fraction of `τ_max`, in `(0, 0.5]`.
    pub ramp_fraction: f64,
    /// Height the profile aims for, m; zero is the surface.
    pub target_height: f64,
}

impl Default for TransportModel {
    fn default() -> Self {
        Self {
            wavelength: LAMBDA_TRAP,
            ramp_fraction: 0.1,
            target_height: 0.0,
        }
    }
}

impl TransportModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.wavelength > 0.0)
            || !(self.ramp_fraction > 0.0 && self.ramp_fraction <= 0.5)
            || !(self.target_height >= 0.0)
        {
            return Err(Error::InvalidInput(
                "transport model needs wavelength > 0, ramp fraction in (0, 0.5] and target height >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Detuning profile moving a site down by `distance`, with the peak
    /// clipped to `max_detuning`.
    pub fn profile(&self, distance: f64, budget: f64, max_detuning: f64) -> Result<DetuningProfile> {
        let ramp = self.ramp_fraction * budget;
        let hold = budget - 2.0 * ramp;
        let peak = (distance.max(0.0) / (0.5 * self.wavelength * (hold + ramp))).min(max_detuning);
        DetuningProfile::trapezoid(peak, hold.max(0.0), ramp)
    }
}

/// Phenomenological transmission drop `D(z) = D_max e^{-2z/λ_evan}` with
/// `λ_evan = scale · λ_a / 2π`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeModel {
    pub max_drop: f64,
    pub evanescent_scale: f64,
    /// Probe wavelength `λ_a`, m.
    pub wavelength: f64,
}

impl Default for ProbeModel {
    fn default() -> Self {
        Self {
            max_drop: 0.7,
            evanescent_scale: 1.0,
            wavelength: LAMBDA_ATOM,
        }
    }
}

impl ProbeModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_drop > 0.0 && self.max_drop <= 1.0) || !(self.evanescent_scale > 0.0) || !(self.wavelength > 0.0)
        {
            return Err(Error::InvalidInput(
                "probe model needs 0 < D_max <= 1, scale > 0, wavelength > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn decay_length(&self) -> f64 {
        self.evanescent_scale * self.wavelength / (2.0 * std::f64::consts::PI)
    }

    pub fn drop(&self, z: f64) -> f64 {
        self.max_drop * (-2.0 * z.max(0.0) / self.decay_length()).exp()
    }

    /// Height below which `D ≥ threshold · D_max`; the probe only responds
    /// below `λ_a`.
    pub fn trigger_height(&self, threshold: f64) -> f64 {
        (-0.5 * self.decay_length() * threshold.ln()).min(self.wavelength)
    }
}

/// Where the atoms start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialOccupancy {
    /// Atom height per tweezer, `None` for empty.
    Explicit(Vec<Option<f64>>),
    /// Each tweezer independently holds an atom at `z` with `probability`.
    Sites(Vec<(f64, f64)>),
}

impl InitialOccupancy {
    pub fn from_loading(report: &LoadingReport) -> Self {
        Self::Sites(report.site_histogram.iter().map(|s| (s.z, s.probability)).collect())
    }

    fn sample(&self, m: usize, rng: &mut impl Rng) -> Result<Vec<Option<f64>>> {
        match self {
            Self::Explicit(v) => {
                if v.len() != m {
                    return Err(Error::InvalidPlan(format!(
                        "{} initial positions for {m} tweezers",
                        v.len()
                    )));
                }
                Ok(v.clone())
            }
            Self::Sites(sites) => {
                let total: f64 = sites.iter().map(|s| s.1).sum();
                if sites.iter().any(|s| !(s.1 >= 0.0) || !s.0.is_finite()) || total > 1.0 + 1e-9 {
                    return Err(Error::InvalidPlan(
                        "site probabilities must be non-negative and sum to <= 1".into(),
                    ));
                }
                Ok((0..m)
                    .map(|_| {
                        let mut x: f64 = rng.random();
                        for &(z, p) in sites {
                            if x < p {
                                return Some(z);
                            }
                            x -= p;
                        }
                        None
                    })
                    .collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SiteOutcome {
    Assembled,
    LostInTransport,
    /// Transport ended without a detection because the detuning limit kept
    /// the atom away from the surface.
    Undelivered,
    Decayed,
    InitiallyEmpty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    ToneSwitch,
    ConveyorStart,
    ProbeDetection,
    ConveyorStop,
    Parked,
    Lost,
    Decayed,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::ToneSwitch => "tone-switch",
            Self::ConveyorStart => "conveyor-start",
            Self::ProbeDetection => "probe-detection",
            Self::ConveyorStop => "conveyor-stop",
            Self::Parked => "parked",
            Self::Lost => "lost",
            Self::Decayed => "decayed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub tweezer: usize,
    pub kind: EventKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub tweezer: usize,
    pub outcome: SiteOutcome,
    pub initial_z: Option<f64>,
    /// Height when parked, lost or last seen alive.
    pub final_z: Option<f64>,
    pub detection_time: Option<f64>,
    pub park_time: Option<f64>,
    /// Park time minus the start of the tweezer's segment.
    pub assembly_time: Option<f64>,
    /// `exp(-(t_end - t_park) / lifetime)` for parked atoms, zero otherwise.
    pub survival_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub sites: Vec<SiteRecord>,
    /// Time-ordered event log.
    pub events: Vec<Event>,
    pub duration: f64,
    pub assembled: usize,
    pub seed: u64,
    pub run: u64,
}

impl AssemblyReport {
    pub fn count(&self, outcome: SiteOutcome) -> usize {
        self.sites.iter().filter(|s| s.outcome == outcome).count()
    }

    /// Largest number of simultaneously running conveyors in the event log.
    pub fn max_concurrent_conveyors(&self) -> usize {
        let mut active = 0usize;
        let mut peak = 0;
        for e in &self.events {
            match e.kind {
                EventKind::ConveyorStart => {
                    active += 1;
                    peak = peak.max(active);
                }
                EventKind::ConveyorStop => active = active.saturating_sub(1),
                _ => {}
            }
        }
        peak
    }
}

/// Heights below this count as surface contact, absorbing rounding in the
/// conveyor displacement.
const SURFACE_CONTACT: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Stationary,
    Conveyor,
    ParkedDark,
    Empty,
    Lost,
}

/// First `τ` in `[0, T]` with `z(τ) ≤ target`, for non-increasing `z`.
fn crossing(z: impl Fn(f64) -> f64, target: f64, duration: f64) -> Option<f64> {
    if z(0.0) <= target {
        return Some(0.0);
    }
    if z(duration) > target {
        return None;
    }
    let (mut lo, mut hi) = (0.0, duration);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if z(mid) <= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * duration {
            break;
        }
    }
    Some(hi)
}

/// One seeded run; `run` selects the random stream.
pub fn simulate_assembly(
    plan: &AssemblyPlan,
    occupancy: &InitialOccupancy,
    transport: &TransportModel,
    probe: &ProbeModel,
    seed: u64,
    run: u64,
) -> Result<AssemblyReport> {
    plan.validate()?;
    transport.validate()?;
    probe.validate()?;
    let mut rng: ChaCha8Rng = trajectory_rng(seed, run);
    let m = plan.tones.len();
    let positions = occupancy.sample(m, &mut rng)?;
    let death: Vec<f64> = (0..m)
        .map(|_| {
            let e: f64 = Exp1.sample(&mut rng);
            match plan.lifetime {
                Some(l) => e * l,
                None => f64::INFINITY,
            }
        })
        .collect();

    let budget = plan.transport_budget;
    let z_trigger = probe.trigger_height(plan.probe_drop_threshold);
    let mut modes: Vec<Mode> = positions
        .iter()
        .map(|p| if p.is_some() { Mode::Stationary } else { Mode::Empty })
        .collect();
    let mut events = Vec::new();
    let mut records: Vec<SiteRecord> = positions
        .iter()
        .enumerate()
        .map(|(i, p)| SiteRecord {
            tweezer: i,
            outcome: if p.is_some() {
                SiteOutcome::Undelivered
            } else {
                SiteOutcome::InitiallyEmpty
            },
            initial_z: *p,
            final_z: *p,
            detection_time: None,
            park_time: None,
            assembly_time: None,
            survival_probability: 0.0,
        })
        .collect();

    let mut t = 0.0;
    for i in 0..m {
        if i > 0 {
            t += plan.switch_time;
            events.push(Event {
                t,
                tweezer: i,
                kind: EventKind::ToneSwitch,
            });
        }
        let start = t;
        modes[i] = match modes[i] {
            Mode::Empty => Mode::Empty,
            _ => Mode::Conveyor,
        };
        events.push(Event {
            t: start,
            tweezer: i,
            kind: EventKind::ConveyorStart,
        });
        let mut length = budget;
        if let Some(z0) = positions[i] {
            let d = death[i] - start;
            if d <= 0.0 {
                records[i].outcome = SiteOutcome::Decayed;
                events.push(Event {
                    t: death[i],
                    tweezer: i,
                    kind: EventKind::Decayed,
                });
                modes[i] = Mode::Lost;
            } else {
                let profile = transport.profile(z0 - transport.target_height, budget, plan.max_detuning())?;
                let z = |tau: f64| z0 - 0.5 * transport.wavelength * profile.phase(tau);
                let t_det = crossing(z, z_trigger, budget);
                let t_zero = crossing(z, SURFACE_CONTACT, budget);
                let t_halt = t_det.map(|td| (td + plan.detection_latency).min(budget));
                let reaches_zero_first = match (t_zero, t_halt) {
                    (Some(tz), Some(th)) => tz <= th,
                    (Some(_), None) => true,
                    _ => false,
                };
                let first_end = [t_det, t_zero].into_iter().flatten().fold(budget, f64::min);
                if d < first_end {
                    records[i].outcome = SiteOutcome::Decayed;
                    records[i].final_z = Some(z(d));
                    events.push(Event {
                        t: death[i],
                        tweezer: i,
                        kind: EventKind::Decayed,
                    });
                    modes[i] = Mode::Lost;
                } else if let (Some(td), Some(th), false) = (t_det, t_halt, reaches_zero_first) {
                    records[i].detection_time = Some(start + td);
                    events.push(Event {
                        t: start + td,
                        tweezer: i,
                        kind: EventKind::ProbeDetection,
                    });
                    length = th;
                    records[i].final_z = Some(z(th));
                    if d <= th {
                        records[i].outcome = SiteOutcome::Decayed;
                        events.push(Event {
                            t: death[i],
                            tweezer: i,
                            kind: EventKind::Decayed,
                        });
                        modes[i] = Mode::Lost;
                    } else {
                        records[i].park_time = Some(start + th);
                        records[i].assembly_time = Some(th);
                        events.push(Event {
                            t: start + th,
                            tweezer: i,
                            kind: EventKind::Parked,
                        });
                        modes[i] = Mode::ParkedDark;
                    }
                } else if let Some(tz) = t_zero {
                    records[i].outcome = SiteOutcome::LostInTransport;
                    records[i].final_z = Some(0.0);
                    events.push(Event {
                        t: start + tz,
                        tweezer: i,
                        kind: EventKind::Lost,
                    });
                    modes[i] = Mode::Lost;
                } else {
                    records[i].final_z = Some(z(budget));
                    modes[i] = Mode::Stationary;
                }
            }
        }
        let conveyors = modes.iter().filter(|m| **m == Mode::Conveyor).count();
        assert!(conveyors <= 1, "{conveyors} conveyors active at t = {t}");
        if modes[i] == Mode::Conveyor {
            modes[i] = Mode::Stationary;
        }
        t = start + length;
        events.push(Event {
            t,
            tweezer: i,
            kind: EventKind::ConveyorStop,
        });
    }
    let t_end = t;

    let mut assembled = 0;
    for (i, rec) in records.iter_mut().enumerate() {
        let alive_at_end = death[i] > t_end;
        match modes[i] {
            Mode::ParkedDark => {
                let tp = rec.park_time.expect("parked atoms have a park time");
                rec.survival_probability = match plan.lifetime {
                    Some(l) if l > 0.0 => (-(t_end - tp) / l).exp(),
                    Some(_) if t_end > tp => 0.0,
                    Some(_) => 1.0,
                    None => 1.0,
                };
                if alive_at_end {
                    rec.outcome = SiteOutcome::Assembled;
                    assembled += 1;
                } else {
                    rec.outcome = SiteOutcome::Decayed;
                    events.push(Event {
                        t: death[i],
                        tweezer: i,
                        kind: EventKind::Decayed,
                    });
                }
            }
            Mode::Stationary if !alive_at_end => {
                rec.outcome = SiteOutcome::Decayed;
                events.push(Event {
                    t: death[i],
                    tweezer: i,
                    kind: EventKind::Decayed,
                });
            }
            _ => {}
        }
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t));

    Ok(AssemblyReport {
        sites: records,
        events,
        duration: t_end,
        assembled,
        seed,
        run,
    })
}

/// Runs `0..n_runs` in parallel; the result does not depend on thread count.
pub fn simulate_assembly_ensemble(
    plan: &AssemblyPlan,
    occupancy: &InitialOccupancy,
    transport: &TransportModel,
    probe: &ProbeModel,
    seed: u64,
    n_runs: u64,
) -> Result<Vec<AssemblyReport>> {
    (0..n_runs)
        .into_par_iter()
        .map(|run| simulate_assembly(plan, occupancy, transport, probe, seed, run))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteSurvival {
    pub tweezer: usize,
    /// Runs in which the atom was parked alive.
    pub parked: usize,
    /// Runs in which it was still trapped at the end.
    pub survived: usize,
    pub mc_survival: f64,
    /// Mean of `exp(-(t_end - t_park) / lifetime)` over the parked runs.
    pub closed_form: f64,
    /// Binomial standard error of `mc_survival` around `closed_form`.
    pub sigma: f64,
}

impl SiteSurvival {
    pub fn deviation_in_sigma(&self) -> f64 {
        if self.sigma > 0.0 {
            (self.mc_survival - self.closed_form) / self.sigma
        } else if self.mc_survival == self.closed_form {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSummary {
    pub runs: usize,
    pub per_site: Vec<SiteSurvival>,
    /// Mean number of assembled atoms per run.
    pub mean_assembled: f64,
    /// Mean closed-form survival per run, summed over parked atoms.
    pub expected_assembled: f64,
    /// Closed-form survival averaged over all parked atoms.
    pub mean_survival: f64,
}

pub fn survival_summary(reports: &[AssemblyReport], plan: &AssemblyPlan) -> SurvivalSummary {
    let m = plan.tones.len();
    let mut parked = vec![0usize; m];
    let mut survived = vec![0usize; m];
    let mut closed = vec![0.0; m];
    for r in reports {
        for s in &r.sites {
            if s.park_time.is_some() && s.tweezer < m {
                parked[s.tweezer] += 1;
                closed[s.tweezer] += s.survival_probability;
                if s.outcome == SiteOutcome::Assembled {
                    survived[s.tweezer] += 1;
                }
            }
        }
    }
    let per_site: Vec<SiteSurvival> = (0..m)
        .map(|i| {
            let n = parked[i];
            let (mc, cf) = if n > 0 {
                (survived[i] as f64 / n as f64, closed[i] / n as f64)
            } else {
                (0.0, 0.0)
            };
            SiteSurvival {
                tweezer: i,
                parked: n,
                survived: survived[i],
                mc_survival: mc,
                closed_form: cf,
                sigma: if n > 0 {
                    (cf * (1.0 - cf) / n as f64).sqrt()
                } else {
                    0.0
                },
            }
        })
        .collect();
    let runs = reports.len();
    let total_parked: usize = parked.iter().sum();
    let total_closed: f64 = closed.iter().sum();
    SurvivalSummary {
        runs,
        mean_assembled: if runs > 0 {
            reports.iter().map(|r| r.assembled).sum::<usize>() as f64 / runs as f64
        } else {
            0.0
        },
        expected_assembled: if runs > 0 { total_closed / runs as f64 } else { 0.0 },
        mean_survival: if total_parked > 0 {
            total_closed / total_parked as f64
        } else {
            0.0
        },
        per_site,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn plan(m: usize) -> AssemblyPlan {
        AssemblyPlan::uniform(m, 70e6, 6e6, 500e3).unwrap()
    }

    fn full(m: usize, z: f64) -> InitialOccupancy {
        InitialOccupancy::Explicit(vec![Some(z); m])
    }

    #[test]
    fn schedule_arithmetic() {
        let s = plan_schedule(&plan(1)).unwrap();
        assert_eq!(s.segments.len(), 1);
        assert!(s.total <= 5e-3 + 1e-7);
        let s = plan_schedule(&plan(10)).unwrap();
        assert!(s.total <= 50.001e-3);
        assert_relative_eq!(s.total, 10.0 * 5e-3 + 9.0 * 1e-7, max_relative = 1e-12);
        s.validate().unwrap();
        assert_eq!(s.bottom_frequency(1e-3), 70e6);
        let mid = 0.5 * (s.segments[0].end + s.segments[1].start);
        assert_relative_eq!(s.bottom_frequency(mid), 73e6, max_relative = 1e-9);
    }

    #[test]
    fn close_tones_are_rejected() {
        assert!(AssemblyPlan::uniform(3, 70e6, 1e6, 500e3).is_err());
        let mut p = plan(2);
        p.probe_drop_threshold = 1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn empty_occupancy_runs_the_full_schedule() {
        let p = plan(4);
        let r = simulate_assembly(
            &p,
            &InitialOccupancy::Explicit(vec![None; 4]),
            &TransportModel::default(),
            &ProbeModel::default(),
            1,
            0,
        )
        .unwrap();
        assert_eq!(r.count(SiteOutcome::InitiallyEmpty), 4);
        assert_relative_eq!(r.duration, plan_schedule(&p).unwrap().total, max_relative = 1e-12);
    }

    #[test]
    fn ideal_detection_assembles_every_atom() {
        let mut p = plan(6);
        p.lifetime = None;
        p.detection_latency = 0.0;
        let probe = ProbeModel::default();
        // Threshold met just below λ_a.
        p.probe_drop_threshold = (-2.0 * 0.99 * probe.wavelength / probe.decay_length()).exp();
        let r = simulate_assembly(&p, &full(6, 8e-6), &TransportModel::default(), &probe, 2, 0).unwrap();
        assert_eq!(r.assembled, 6);
        for s in &r.sites {
            assert_eq!(s.outcome, SiteOutcome::Assembled);
            let z = s.final_z.unwrap();
            assert!(z < probe.wavelength && z > 0.0, "{z}");
            assert_eq!(s.survival_probability, 1.0);
        }
    }

    #[test]
    fn default_probe_parks_above_the_surface() {
        let mut p = plan(3);
        p.lifetime = None;
        let probe = ProbeModel::default();
        let r = simulate_assembly(&p, &full(3, 10e-6), &TransportModel::default(), &probe, 3, 0).unwrap();
        let trig = probe.trigger_height(p.probe_drop_threshold);
        assert_relative_eq!(probe.drop(trig), 0.7 * probe.max_drop, max_relative = 1e-12);
        for s in &r.sites {
            assert_eq!(s.outcome, SiteOutcome::Assembled);
            let z = s.final_z.unwrap();
            assert!(z > 0.0 && z < trig);
        }
        assert!(r.duration < 3.0 * 5e-3);
    }

    #[test]
    fn slow_feedback_loses_the_atom() {
        let mut p = plan(1);
        p.detection_latency = 1e-3;
        p.lifetime = None;
        let r = simulate_assembly(
            &p,
            &full(1, 10e-6),
            &TransportModel::default(),
            &ProbeModel::default(),
            4,
            0,
        )
        .unwrap();
        assert_eq!(r.sites[0].outcome, SiteOutcome::LostInTransport);
        assert_relative_eq!(r.duration, 5e-3, max_relative = 1e-12);
    }

    #[test]
    fn detuning_limit_leaves_atoms_undelivered() {
        let mut p = plan(1);
        p.resonance_ratio = 1e6;
        p.lifetime = None;
        let r = simulate_assembly(
            &p,
            &full(1, 10e-6),
            &TransportModel::default(),
            &ProbeModel::default(),
            5,
            0,
        )
        .unwrap();
        assert_eq!(r.sites[0].outcome, SiteOutcome::Undelivered);
        assert!(r.sites[0].final_z.unwrap() < 10e-6);
    }

    #[test]
    fn first_atom_survival_closed_form() {
        // Park at the end of segment 1, then nine more 5 ms segments.
        assert_relative_eq!((-45e-3 / 0.9f64).exp(), 0.951, epsilon = 5e-4);
        let mut p = plan(10);
        p.detection_latency = 0.0;
        p.lifetime = None;
        let probe = ProbeModel::default();
        let transport = TransportModel {
            target_height: probe.trigger_height(p.probe_drop_threshold),
            ..TransportModel::default()
        };
        let r = simulate_assembly(&p, &full(10, 10e-6), &transport, &probe, 6, 0).unwrap();
        assert!(r.duration <= 50.001e-3);
        assert_relative_eq!(r.duration, plan_schedule(&p).unwrap().total, max_relative = 1e-8);
        let tp = r.sites[0].park_time.expect("first atom parked");
        assert_relative_eq!(tp, 5e-3, max_relative = 1e-8);
        p.lifetime = Some(0.9);
        let r = simulate_assembly(&p, &full(10, 10e-6), &transport, &probe, 6, 0).unwrap();
        if let Some(tp) = r.sites[0].park_time {
            let expected = (-(r.duration - tp) / 0.9f64).exp();
            assert_relative_eq!(r.sites[0].survival_probability, expected, max_relative = 1e-12);
            assert_relative_eq!(expected, 0.951, epsilon = 5e-4);
        }
    }

    #[test]
    fn zero_lifetime_assembles_nothing() {
        let mut p = plan(5);
        p.lifetime = Some(0.0);
        let reports = simulate_assembly_ensemble(
            &p,
            &full(5, 5e-6),
            &TransportModel::default(),
            &ProbeModel::default(),
            7,
            50,
        )
        .unwrap();
        assert!(reports.iter().all(|r| r.assembled == 0));
        assert_eq!(survival_summary(&reports, &p).mean_assembled, 0.0);
    }

    #[test]
    fn infinite_lifetime_survives() {
        let mut p = plan(5);
        p.lifetime = None;
        let reports = simulate_assembly_ensemble(
            &p,
            &full(5, 5e-6),
            &TransportModel::default(),
            &ProbeModel::default(),
            8,
            20,
        )
        .unwrap();
        let s = survival_summary(&reports, &p);
        for site in &s.per_site {
            assert_eq!(site.closed_form, 1.0);
            assert_eq!(site.mc_survival, 1.0);
        }
    }

    #[test]
    fn determinism() {
        let p = plan(8);
        let occ = InitialOccupancy::Sites(vec![(0.7e-6, 0.2), (5e-6, 0.3)]);
        let a = simulate_assembly(&p, &occ, &TransportModel::default(), &ProbeModel::default(), 9, 3).unwrap();
        let b = simulate_assembly(&p, &occ, &TransportModel::default(), &ProbeModel::default(), 9, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_assembly(&p, &occ, &TransportModel::default(), &ProbeModel::default(), 9, 4).unwrap();
        assert_ne!(a.sites, c.sites);
    }

    proptest! {
        #[test]
        fn outcomes_partition_and_one_conveyor(
            m in 1usize..12,
            seed in 0u64..1000,
            latency in 0.0f64..2e-4,
            budget in 1e-4f64..1e-2,
            lifetime in 1e-3f64..2.0,
        ) {
            let mut p = plan(m);
            p.detection_latency = latency;
            p.transport_budget = budget;
            p.lifetime = Some(lifetime);
            let occ = InitialOccupancy::Sites(vec![(0.3e-6, 0.2), (4e-6, 0.4)]);
            let r = simulate_assembly(&p, &occ, &TransportModel::default(), &ProbeModel::default(), seed, 0).unwrap();
            prop_assert_eq!(r.sites.len(), m);
            prop_assert!(r.max_concurrent_conveyors() <= 1);
            prop_assert!(r.events.windows(2).all(|w| w[0].t <= w[1].t));
            prop_assert!(r.duration <= plan_schedule(&p).unwrap().total + 1e-15);
            for s in &r.sites {
                prop_assert!((0.0..=1.0).contains(&s.survival_probability));
            }
        }
    }
}

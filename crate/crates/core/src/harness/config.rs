//! TOML scenario documents.
//!
//! Every field is optional; a document is merged key by key over a base
//! scenario (the estimation preset unless another base is given). Arrays
//! (`dg_buses`, `lines`, `loads`, `switching`) replace the base wholesale.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::DGParams;
use crate::observer::InputFeed;
use crate::plant::{InnerLoopGains, Line, Load, Switch, Topology};
use crate::secondary::SecondaryGains;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Simulated horizon after warm-up (s).
    pub duration: f64,
    /// Fixed integration step (s).
    pub step: f64,
    /// Plant-only pre-roll from the zero state (s); the scenario clock
    /// starts at 0 afterwards.
    pub warmup: f64,
    /// Keep one trace row every `decimate` steps.
    pub decimate: usize,
    /// Periodic-communication rate the event count is compared with (Hz).
    pub baseline_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Physical constants shared by every DG.
    pub dg: DGParams<f64>,
    pub inner: InnerLoopGains<f64>,
    pub network: NetworkConfig,
    pub switching: Vec<SwitchingConfig>,
    pub observer: ObserverConfig,
    pub secondary: SecondaryConfig,
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub buses: usize,
    /// One-based bus of each DG; its length is the DG count.
    pub dg_buses: Vec<usize>,
    /// Shunt capacitance per bus (F).
    pub c_bus: f64,
    pub lines: Vec<LineConfig>,
    pub loads: Vec<LoadConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineConfig {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadConfig {
    pub name: String,
    pub bus: usize,
    /// Rated active power at nominal voltage (W).
    pub p: f64,
    /// Rated reactive power at nominal voltage (VAr).
    pub q: f64,
    #[serde(default = "yes")]
    pub connected: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingConfig {
    pub time: f64,
    /// Load name.
    pub load: String,
    pub closed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialEstimate {
    /// Every replica starts from `x̂ = 0`.
    #[default]
    Zero,
    /// Replicas start from the true post-warm-up state.
    True,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverConfig {
    /// `W = w_scale · I`.
    pub w_scale: f64,
    /// Scalar measurement weight.
    pub v: f64,
    /// `Q̃ = q_tilde_scale · I`.
    pub q_tilde_scale: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub allow_psd_w: bool,
    pub input_feed: InputFeed,
    pub initial_estimate: InitialEstimate,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            w_scale: 1e7,
            v: 1.0,
            q_tilde_scale: 1.0,
            sigma: 0.5,
            epsilon: 0.5,
            allow_psd_w: false,
            input_feed: InputFeed::Live,
            initial_estimate: InitialEstimate::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecondaryConfig {
    pub enabled: bool,
    pub enable_time: f64,
    pub k_pv: f64,
    pub k_iv: f64,
    pub k_pq: f64,
    pub k_iq: f64,
    /// Integrators are clamped to `±clamp_factor · v* / k_i`.
    pub clamp_factor: f64,
}

impl Default for SecondaryConfig {
    fn default() -> Self {
        let g = SecondaryGains::<f64>::reference();
        Self {
            enabled: false,
            enable_time: 1.0,
            k_pv: g.k_pv,
            k_iv: g.k_iv,
            k_pq: g.k_pq,
            k_iq: g.k_iq,
            clamp_factor: 10.0,
        }
    }
}

impl SecondaryConfig {
    pub fn gains(&self) -> SecondaryGains<f64> {
        SecondaryGains {
            k_pv: self.k_pv,
            k_iv: self.k_iv,
            k_pq: self.k_pq,
            k_iq: self.k_iq,
        }
    }
}

/// Windows used by the run summary (all in seconds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Transient excluded after each switching instant before the
    /// estimation error is assessed.
    pub settle: f64,
    /// Observer start-up excluded at the beginning of the run.
    pub initial_settle: f64,
    /// Events this soon after a switching instant count as switch-driven.
    pub near_window: f64,
    /// Trailing window over which reactive sharing is assessed.
    pub sharing_window: f64,
    /// Time allowed after secondary activation to restore the voltage.
    pub restoration_deadline: f64,
    /// Relative band around `v*` for restoration.
    pub restoration_band: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            settle: 0.05,
            initial_settle: 0.1,
            near_window: 0.05,
            sharing_window: 0.5,
            restoration_deadline: 0.5,
            restoration_band: 0.01,
        }
    }
}

impl Default for NetworkConfig {
    /// Three buses in a chain with one DG each. Local loads on buses 1–3
    /// (the second is empty), two common loads on bus 2 behind switches.
    fn default() -> Self {
        let load = |name: &str, bus, p, q, connected| LoadConfig {
            name: name.into(),
            bus,
            p,
            q,
            connected,
        };
        Self {
            buses: 3,
            dg_buses: vec![1, 2, 3],
            c_bus: 1e-6,
            lines: vec![
                LineConfig {
                    from: 1,
                    to: 2,
                    r: 0.23,
                    l: 318.3e-6,
                },
                LineConfig {
                    from: 2,
                    to: 3,
                    r: 0.35,
                    l: 1.8e-3,
                },
            ],
            loads: vec![
                load("LL1", 1, 8000.0, 6900.0, true),
                load("LL2", 2, 0.0, 0.0, true),
                load("LL3", 3, 7500.0, 6000.0, true),
                load("CL1", 2, 5000.0, 4000.0, false),
                load("CL2", 2, 4000.0, 3000.0, false),
            ],
        }
    }
}

fn switching(time: f64, load: &str, closed: bool) -> SwitchingConfig {
    SwitchingConfig {
        time,
        load: load.into(),
        closed,
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::estimation()
    }
}

impl ScenarioConfig {
    /// Local loads only, then CL1 closes at 0.5 s, CL2 at 1.5 s and CL1
    /// opens at 2.0 s; no secondary control; 3 s horizon.
    pub fn estimation() -> Self {
        Self {
            duration: 3.0,
            step: 1e-5,
            warmup: 1.0,
            decimate: 100,
            baseline_rate: 1e4,
            out_dir: None,
            dg: DGParams::reference(),
            inner: InnerLoopGains::default(),
            network: NetworkConfig::default(),
            switching: vec![
                switching(0.5, "CL1", true),
                switching(1.5, "CL2", true),
                switching(2.0, "CL1", false),
            ],
            observer: ObserverConfig::default(),
            secondary: SecondaryConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }

    /// CL1 closes at 0.5 s and the secondary controller starts at 1.0 s.
    pub fn secondary() -> Self {
        Self {
            switching: vec![switching(0.5, "CL1", true)],
            secondary: SecondaryConfig {
                enabled: true,
                ..SecondaryConfig::default()
            },
            ..Self::estimation()
        }
    }

    /// Number of integration steps in the horizon (`duration / step`,
    /// rounded).
    pub fn steps(&self) -> usize {
        (self.duration / self.step).round() as usize
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let finite_pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(HarnessError::invalid(name, format!("must be finite and positive, got {v}")))
            }
        };
        finite_pos("step", self.step)?;
        finite_pos("duration", self.duration)?;
        if self.duration < self.step {
            return Err(HarnessError::invalid("duration", format!("is shorter than one step ({} s)", self.step)));
        }
        if !(self.warmup >= 0.0) || !self.warmup.is_finite() {
            return Err(HarnessError::invalid("warmup", "must be finite and non-negative"));
        }
        if self.decimate == 0 {
            return Err(HarnessError::invalid("decimate", "must be at least 1"));
        }
        finite_pos("baseline_rate", self.baseline_rate)?;
        if self.baseline_rate * self.step >= 1.0 {
            return Err(HarnessError::invalid(
                "baseline_rate",
                format!("must stay below the simulation rate 1/step = {} Hz", 1.0 / self.step),
            ));
        }
        if self.baseline_rate * self.duration < 1.0 {
            return Err(HarnessError::invalid("baseline_rate", "times duration must cover at least one packet"));
        }
        self.dg.validate().map_err(|e| HarnessError::invalid("dg", e.to_string()))?;
        for (name, v) in [
            ("inner.k_p", self.inner.k_p),
            ("inner.k_i", self.inner.k_i),
            ("inner.damping_resistance", self.inner.damping_resistance),
            ("inner.q_filter_cutoff", self.inner.q_filter_cutoff),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(HarnessError::invalid(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        let o = &self.observer;
        finite_pos("observer.w_scale", o.w_scale)?;
        finite_pos("observer.v", o.v)?;
        finite_pos("observer.q_tilde_scale", o.q_tilde_scale)?;
        finite_pos("observer.epsilon", o.epsilon)?;
        if !(o.sigma > 0.0 && o.sigma < 1.0) {
            return Err(HarnessError::invalid("observer.sigma", format!("must lie in (0, 1), got {}", o.sigma)));
        }
        let s = &self.secondary;
        self.secondary.gains().validate().map_err(|e| HarnessError::invalid("secondary", e.to_string()))?;
        if !s.enable_time.is_finite() {
            return Err(HarnessError::invalid("secondary.enable_time", "must be finite"));
        }
        finite_pos("secondary.clamp_factor", s.clamp_factor)?;
        let m = &self.metrics;
        for (name, v) in [
            ("metrics.settle", m.settle),
            ("metrics.initial_settle", m.initial_settle),
            ("metrics.near_window", m.near_window),
            ("metrics.sharing_window", m.sharing_window),
            ("metrics.restoration_deadline", m.restoration_deadline),
            ("metrics.restoration_band", m.restoration_band),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(HarnessError::invalid(name, format!("must be finite and non-negative, got {v}")));
            }
        }
        for sw in &self.switching {
            if !(sw.time >= 0.0) || !sw.time.is_finite() {
                return Err(HarnessError::invalid("switching.time", format!("must be finite and non-negative, got {}", sw.time)));
            }
            if !self.network.loads.iter().any(|l| l.name == sw.load) {
                return Err(HarnessError::invalid("switching.load", format!("names unknown load `{}`", sw.load)));
            }
        }
        let mut names: Vec<&str> = self.network.loads.iter().map(|l| l.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::invalid("network.loads", "load names must be unique"));
        }
        self.topology().map(|_| ())
    }

    /// Builds the electrical network (zero-based indices internally).
    pub fn topology(&self) -> Result<Topology<f64>, HarnessError> {
        let net = &self.network;
        let omega = self.dg.omega_nom;
        let bus = |field: &str, b: usize| {
            if b == 0 || b > net.buses {
                Err(HarnessError::invalid(field, format!("bus {b} is outside 1..={}", net.buses)))
            } else {
                Ok(b - 1)
            }
        };
        let dgs = net
            .dg_buses
            .iter()
            .map(|&b| Ok((self.dg, bus("network.dg_buses", b)?)))
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let lines = net
            .lines
            .iter()
            .map(|l| {
                Ok(Line {
                    from: bus("network.lines.from", l.from)?,
                    to: bus("network.lines.to", l.to)?,
                    r: l.r,
                    l: l.l,
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let loads = net
            .loads
            .iter()
            .map(|l| {
                Ok(Load::from_rating(
                    l.name.clone(),
                    bus("network.loads.bus", l.bus)?,
                    l.p,
                    l.q,
                    self.dg.v_star,
                    omega,
                    l.connected,
                )?)
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        let mut switches: Vec<Switch<f64>> = Vec::new();
        for sw in &self.switching {
            let idx = net
                .loads
                .iter()
                .position(|l| l.name == sw.load)
                .ok_or_else(|| HarnessError::invalid("switching.load", format!("names unknown load `{}`", sw.load)))?;
            match switches.iter_mut().find(|s| s.load == idx) {
                Some(s) => s.schedule.push((sw.time, sw.closed)),
                None => switches.push(Switch {
                    load: idx,
                    initial: net.loads[idx].connected,
                    schedule: vec![(sw.time, sw.closed)],
                }),
            }
        }
        Ok(Topology::new(dgs, net.buses, lines, loads, switches, net.c_bus, omega)?)
    }
}

/// Parses a document over the estimation preset and validates it.
pub fn load_scenario(text: &str) -> Result<ScenarioConfig, HarnessError> {
    load_scenario_over(&ScenarioConfig::default(), text)
}

/// Parses a document over `base`: keys present in the document replace the
/// base values, tables merge recursively.
pub fn load_scenario_over(base: &ScenarioConfig, text: &str) -> Result<ScenarioConfig, HarnessError> {
    let doc: toml::Table = toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))?;
    let mut merged = toml::Table::try_from(base).map_err(|e| HarnessError::Parse(e.to_string()))?;
    merge(&mut merged, doc);
    let cfg: ScenarioConfig = toml::Value::Table(merged)
        .try_into()
        .map_err(|e: toml::de::Error| HarnessError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

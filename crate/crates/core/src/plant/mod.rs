//! Electrical microgrid: DG average models with their voltage loops, RL
//! lines, constant-impedance loads behind switches, and capacitive buses,
//! all in one synchronous dq frame.
//!
//! Sign conventions: a DG's output current `i_c` flows into its bus; a line
//! current flows from its `from` bus to its `to` bus; load currents flow out
//! of the bus. Each bus carries a small shunt capacitance so that the whole
//! network is an ODE rather than a DAE.

mod inner;
mod rk4;

pub use inner::{inner_loop_control, inner_loop_error, inner_loop_output, InnerLoopGains};
pub use rk4::rk4_step;

use nalgebra::{DVector, Vector2};
use thiserror::Error;

use crate::model::{
    build_state_space, droop_voltage_ref, state_reactive_power, DGParams, DGState, ModelError, StateSpace,
    STATE_NAMES,
};
use crate::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("integration step h = {0} must be finite and positive")]
    InvalidStep(f64),
    #[error("state component {index} became non-finite")]
    Divergence { index: usize },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Switching instants within this distance of a step time count as reached.
pub const SWITCH_TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DgSite<T: Scalar> {
    pub params: DGParams<T>,
    /// Zero-based bus index.
    pub bus: usize,
    pub ss: StateSpace<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line<T> {
    pub from: usize,
    pub to: usize,
    pub r: T,
    pub l: T,
}

/// Parallel R‖L constant-impedance load.
#[derive(Debug, Clone, PartialEq)]
pub struct Load<T> {
    pub name: String,
    pub bus: usize,
    /// `1/R` (S); zero for a purely reactive load.
    pub conductance: T,
    /// `None` for a purely resistive load.
    pub inductance: Option<T>,
    pub connected: bool,
}

impl<T: Scalar> Load<T> {
    /// Impedance drawing `p` W and `q` VAr at voltage magnitude `v_nom` and
    /// angular frequency `omega`: `R = v²/p`, `X = v²/q`.
    pub fn from_rating(
        name: impl Into<String>,
        bus: usize,
        p: T,
        q: T,
        v_nom: T,
        omega: T,
        connected: bool,
    ) -> Result<Self, PlantError> {
        let name = name.into();
        if !(p >= T::zero()) || !(q >= T::zero()) || !p.is_finite() || !q.is_finite() {
            return Err(PlantError::Topology(format!(
                "load {name}: ratings must be finite and non-negative (p = {p}, q = {q})"
            )));
        }
        let v2 = v_nom * v_nom;
        Ok(Self {
            name,
            bus,
            conductance: p / v2,
            inductance: (q > T::zero()).then(|| v2 / (q * omega)),
            connected,
        })
    }
}

/// A breaker in series with one load.
#[derive(Debug, Clone, PartialEq)]
pub struct Switch<T> {
    pub load: usize,
    /// State before the first scheduled transition.
    pub initial: bool,
    /// `(time, closed)` sorted by time.
    pub schedule: Vec<(T, bool)>,
}

impl<T: Scalar> Switch<T> {
    /// Scheduled position at time `t`.
    pub fn closed_at(&self, t: T) -> bool {
        let tol = T::lit(SWITCH_TIME_TOL);
        self.schedule
            .iter()
            .take_while(|(ts, _)| *ts <= t + tol)
            .last()
            .map_or(self.initial, |&(_, closed)| closed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology<T: Scalar> {
    pub dgs: Vec<DgSite<T>>,
    pub bus_count: usize,
    pub lines: Vec<Line<T>>,
    pub loads: Vec<Load<T>>,
    pub switches: Vec<Switch<T>>,
    /// Shunt capacitance per bus (F).
    pub c_bus: T,
    /// Frame frequency (rad/s).
    pub omega: T,
}

impl<T: Scalar> Topology<T> {
    /// Builds and validates a topology; each DG's state space is built at
    /// `omega`. Switch initial states are applied to the loads.
    pub fn new(
        dgs: Vec<(DGParams<T>, usize)>,
        bus_count: usize,
        lines: Vec<Line<T>>,
        mut loads: Vec<Load<T>>,
        mut switches: Vec<Switch<T>>,
        c_bus: T,
        omega: T,
    ) -> Result<Self, PlantError> {
        let fail = |msg: String| Err(PlantError::Topology(msg));
        if bus_count == 0 {
            return fail("at least one bus is required".into());
        }
        if dgs.is_empty() {
            return fail("at least one DG is required".into());
        }
        if !(c_bus > T::zero()) || !c_bus.is_finite() {
            return fail(format!("bus capacitance must be positive, got {c_bus}"));
        }
        let mut sites = Vec::with_capacity(dgs.len());
        for (i, (params, bus)) in dgs.into_iter().enumerate() {
            if bus >= bus_count {
                return fail(format!("DG {} sits on missing bus {}", i + 1, bus + 1));
            }
            let ss = build_state_space(&params, omega)?;
            sites.push(DgSite { params, bus, ss });
        }
        for (k, line) in lines.iter().enumerate() {
            if line.from >= bus_count || line.to >= bus_count || line.from == line.to {
                return fail(format!("line {} has invalid end buses", k + 1));
            }
            if !(line.r >= T::zero()) || !(line.l > T::zero()) {
                return fail(format!("line {} needs r >= 0 and l > 0", k + 1));
            }
        }
        for load in &loads {
            if load.bus >= bus_count {
                return fail(format!("load {} sits on missing bus {}", load.name, load.bus + 1));
            }
            if load.inductance.is_some_and(|l| !(l > T::zero())) {
                return fail(format!("load {} needs a positive inductance", load.name));
            }
        }
        for sw in &mut switches {
            if sw.load >= loads.len() {
                return fail(format!("switch refers to missing load {}", sw.load + 1));
            }
            sw.schedule.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
            loads[sw.load].connected = sw.initial;
        }
        // Connectivity over lines.
        let mut parent: Vec<usize> = (0..bus_count).collect();
        fn root(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for line in &lines {
            let (a, b) = (root(&mut parent, line.from), root(&mut parent, line.to));
            parent[a] = b;
        }
        let r0 = root(&mut parent, 0);
        if (1..bus_count).any(|b| root(&mut parent, b) != r0) {
            return fail("buses are not connected by lines".into());
        }
        Ok(Self {
            dgs: sites,
            bus_count,
            lines,
            loads,
            switches,
            c_bus,
            omega,
        })
    }

    pub fn layout(&self) -> PlantLayout {
        PlantLayout {
            dgs: self.dgs.len(),
            buses: self.bus_count,
            lines: self.lines.len(),
            loads: self.loads.len(),
        }
    }

    /// Times at which any switch changes position, sorted and deduplicated.
    pub fn switching_times(&self) -> Vec<T> {
        let mut ts: Vec<T> = self.switches.iter().flat_map(|s| s.schedule.iter().map(|e| e.0)).collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ts.dedup();
        ts
    }
}

/// Offsets of every block in the flat plant state.
///
/// Per DG: the six model states, the two voltage-loop integrators and the
/// filtered reactive power (9 entries). Then two entries per bus voltage,
/// per line current and per load inductor current.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantLayout {
    pub dgs: usize,
    pub buses: usize,
    pub lines: usize,
    pub loads: usize,
}

const DG_BLOCK: usize = 9;

impl PlantLayout {
    pub fn dg(&self, i: usize) -> usize {
        DG_BLOCK * i
    }
    pub fn integ(&self, i: usize) -> usize {
        DG_BLOCK * i + 6
    }
    pub fn q_filter(&self, i: usize) -> usize {
        DG_BLOCK * i + 8
    }
    pub fn bus(&self, b: usize) -> usize {
        DG_BLOCK * self.dgs + 2 * b
    }
    pub fn line(&self, k: usize) -> usize {
        self.bus(self.buses) + 2 * k
    }
    pub fn load(&self, k: usize) -> usize {
        self.line(self.lines) + 2 * k
    }
    pub fn len(&self) -> usize {
        self.load(self.loads)
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Human-readable name of a flat index, e.g. `dg2_vcd` or `line1_iq`.
    pub fn component_name(&self, index: usize) -> String {
        let dq = |k: usize| if k.is_multiple_of(2) { "d" } else { "q" };
        if index < self.bus(0) {
            let (i, k) = (index / DG_BLOCK, index % DG_BLOCK);
            let name = match k {
                0..=5 => STATE_NAMES[k],
                6 => "zd",
                7 => "zq",
                _ => "qf",
            };
            format!("dg{}_{}", i + 1, name)
        } else if index < self.line(0) {
            let k = index - self.bus(0);
            format!("bus{}_v{}", k / 2 + 1, dq(k))
        } else if index < self.load(0) {
            let k = index - self.line(0);
            format!("line{}_i{}", k / 2 + 1, dq(k))
        } else if index < self.len() {
            let k = index - self.load(0);
            format!("load{}_i{}", k / 2 + 1, dq(k))
        } else {
            format!("component{index}")
        }
    }
}

/// Flat plant state together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState<T: Scalar> {
    pub layout: PlantLayout,
    pub x: DVector<T>,
}

impl<T: Scalar> PlantState<T> {
    pub fn zeros(layout: PlantLayout) -> Self {
        Self {
            layout,
            x: DVector::zeros(layout.len()),
        }
    }

    pub fn dg(&self, i: usize) -> DGState<T> {
        dg_of(&self.x, &self.layout, i)
    }

    pub fn integ(&self, i: usize) -> Vector2<T> {
        pair(&self.x, self.layout.integ(i))
    }

    pub fn q_filtered(&self, i: usize) -> T {
        self.x[self.layout.q_filter(i)]
    }

    pub fn bus_voltage(&self, b: usize) -> Vector2<T> {
        pair(&self.x, self.layout.bus(b))
    }

    pub fn line_current(&self, k: usize) -> Vector2<T> {
        pair(&self.x, self.layout.line(k))
    }

    pub fn load_current(&self, k: usize) -> Vector2<T> {
        pair(&self.x, self.layout.load(k))
    }
}

#[inline]
fn pair<T: Scalar>(x: &DVector<T>, at: usize) -> Vector2<T> {
    Vector2::new(x[at], x[at + 1])
}

#[inline]
fn set_pair<T: Scalar>(x: &mut DVector<T>, at: usize, v: Vector2<T>) {
    x[at] = v[0];
    x[at + 1] = v[1];
}

#[inline]
fn dg_of<T: Scalar>(x: &DVector<T>, layout: &PlantLayout, i: usize) -> DGState<T> {
    let o = layout.dg(i);
    DGState::from_column_slice(&x.as_slice()[o..o + 6])
}

/// `(d, q)` rotation term `ω J v = (ω v_q, −ω v_d)`.
#[inline]
fn rot<T: Scalar>(omega: T, v: Vector2<T>) -> Vector2<T> {
    Vector2::new(omega * v[1], -omega * v[0])
}

/// Net current injected into every bus by DGs, lines and loads.
pub fn bus_injections<T: Scalar>(x: &DVector<T>, topology: &Topology<T>) -> Vec<Vector2<T>> {
    let layout = topology.layout();
    let mut inj = vec![Vector2::zeros(); topology.bus_count];
    for (i, site) in topology.dgs.iter().enumerate() {
        let o = layout.dg(i);
        inj[site.bus] += Vector2::new(x[o + 4], x[o + 5]);
    }
    for (k, line) in topology.lines.iter().enumerate() {
        let i = pair(x, layout.line(k));
        inj[line.from] -= i;
        inj[line.to] += i;
    }
    for (k, load) in topology.loads.iter().enumerate() {
        if load.connected {
            let v = pair(x, layout.bus(load.bus));
            inj[load.bus] -= pair(x, layout.load(k)) + v * load.conductance;
        }
    }
    inj
}

/// Rate of the electrical states for given inverter voltages `controls`;
/// controller rows (integrators, reactive filter) are left at zero.
pub fn microgrid_derivative<T: Scalar>(x: &DVector<T>, topology: &Topology<T>, controls: &[Vector2<T>]) -> DVector<T> {
    let layout = topology.layout();
    let mut dx = DVector::zeros(layout.len());
    for (i, site) in topology.dgs.iter().enumerate() {
        let xi = dg_of(x, &layout, i);
        let vt = pair(x, layout.bus(site.bus));
        let rate = site.ss.derivative(&xi, &controls[i], &vt);
        dx.rows_mut(layout.dg(i), 6).copy_from(&rate);
    }
    let w = topology.omega;
    for (k, line) in topology.lines.iter().enumerate() {
        let i = pair(x, layout.line(k));
        let dv = pair(x, layout.bus(line.from)) - pair(x, layout.bus(line.to));
        set_pair(&mut dx, layout.line(k), (dv - i * line.r) / line.l + rot(w, i));
    }
    for (k, load) in topology.loads.iter().enumerate() {
        if let (true, Some(l)) = (load.connected, load.inductance) {
            let i = pair(x, layout.load(k));
            set_pair(&mut dx, layout.load(k), pair(x, layout.bus(load.bus)) / l + rot(w, i));
        }
    }
    for (b, inj) in bus_injections(x, topology).into_iter().enumerate() {
        let v = pair(x, layout.bus(b));
        set_pair(&mut dx, layout.bus(b), inj / topology.c_bus + rot(w, v));
    }
    dx
}

/// Droop reference of DG `i` from the filtered reactive power.
#[inline]
pub fn voltage_reference<T: Scalar>(x: &DVector<T>, topology: &Topology<T>, i: usize, delta_v: T) -> T {
    let p = &topology.dgs[i].params;
    droop_voltage_ref(p.v_star, p.n_d, x[topology.layout().q_filter(i)], delta_v)
}

/// Inverter voltages commanded by every voltage loop.
pub fn controls<T: Scalar>(
    x: &DVector<T>,
    topology: &Topology<T>,
    gains: &InnerLoopGains<T>,
    delta_v: &[T],
) -> Vec<Vector2<T>> {
    let layout = topology.layout();
    (0..topology.dgs.len())
        .map(|i| {
            let v_ref = voltage_reference(x, topology, i, delta_v[i]);
            inner_loop_output(&dg_of(x, &layout, i), v_ref, gains, &pair(x, layout.integ(i)))
        })
        .collect()
}

/// Full closed-loop rate with `δv` held; also returns the controls used.
pub fn closed_loop_derivative<T: Scalar>(
    x: &DVector<T>,
    topology: &Topology<T>,
    gains: &InnerLoopGains<T>,
    delta_v: &[T],
) -> (DVector<T>, Vec<Vector2<T>>) {
    let layout = topology.layout();
    let u = controls(x, topology, gains, delta_v);
    let mut dx = microgrid_derivative(x, topology, &u);
    for i in 0..topology.dgs.len() {
        let xi = dg_of(x, &layout, i);
        let v_ref = voltage_reference(x, topology, i, delta_v[i]);
        set_pair(&mut dx, layout.integ(i), inner_loop_error(&xi, v_ref));
        let qf = layout.q_filter(i);
        dx[qf] = gains.q_filter_cutoff * (state_reactive_power(&xi) - x[qf]);
    }
    (dx, u)
}

/// A switch position change applied at a step boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchChange {
    pub load: usize,
    pub closed: bool,
}

/// Brings every switched load to its scheduled position at time `t`; an
/// opened load has its inductor current zeroed.
pub fn apply_switch_events<T: Scalar>(
    topology: &mut Topology<T>,
    state: &mut PlantState<T>,
    t: T,
) -> Vec<SwitchChange> {
    let mut changes = Vec::new();
    for sw in &topology.switches {
        let closed = sw.closed_at(t);
        let load = &mut topology.loads[sw.load];
        if load.connected != closed {
            load.connected = closed;
            if !closed {
                set_pair(&mut state.x, state.layout.load(sw.load), Vector2::zeros());
            }
            changes.push(SwitchChange { load: sw.load, closed });
        }
    }
    changes
}

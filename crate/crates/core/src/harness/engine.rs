//! Fixed-step co-simulation loop.
//!
//! Order within step `n` (time `t = n·h`):
//! 1. scheduled switch transitions;
//! 2. secondary control: DG `b` computes its own `δv_b` from bank `b`;
//! 3. voltage-loop outputs `u`;
//! 4. trigger evaluation; an event delivers one packet to every bank;
//! 5. metrics and the decimated trace;
//! 6. one joint RK4 step of plant and all replicas with `δv` held.

use nalgebra::{DVector, SMatrix, SVector, Vector2};

use super::metrics::MetricsRecorder;
use super::output::{EventRecord, Trace};
use super::{HarnessError, InitialEstimate, Metrics, ScenarioConfig};
use crate::etm::{eta, should_trigger, PsiMatrix, TriggerLog};
use crate::mateq::{design_observer, ObserverDesign, RiccatiOptions};
use crate::model::{state_reactive_power, DGState, STATE_NAMES, V_CD};
use crate::observer::{estimation_error, observer_rate, EventPacket, InputFeed, ObserverReplica};
use crate::plant::{
    apply_switch_events, closed_loop_derivative, controls, rk4_step, PlantError, PlantLayout, PlantState, Topology,
};
use crate::secondary::{secondary_step, Estimate, SecondaryGains, SecondaryState};

type Vec6 = SVector<f64, 6>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep the decimated trace in memory.
    pub record_trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { record_trace: true }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Trace,
    /// Every packet, ordered by time then sender.
    pub events: Vec<EventRecord>,
    pub metrics: Metrics,
    pub final_state: PlantState<f64>,
    pub logs: Vec<TriggerLog<f64>>,
    pub designs: Vec<ObserverDesign<f64>>,
}

/// A scenario ready to run: observers designed, plant warmed up.
pub struct Simulation {
    cfg: ScenarioConfig,
    topology: Topology<f64>,
    designs: Vec<ObserverDesign<f64>>,
    gains: Vec<Vec6>,
    psis: Vec<PsiMatrix<f64, 6>>,
    state: PlantState<f64>,
    /// `replicas[b][j]`: bank `b`'s copy of DG `j`'s observer.
    replicas: Vec<Vec<ObserverReplica<f64>>>,
    logs: Vec<TriggerLog<f64>>,
    /// One controller per bank; DG `b` applies entry `b` of bank `b`'s output.
    secondary: Vec<SecondaryState<f64>>,
    secondary_gains: SecondaryGains<f64>,
}

fn to6x6(m: &nalgebra::DMatrix<f64>) -> SMatrix<f64, 6, 6> {
    SMatrix::from_iterator(m.iter().copied())
}

fn replica_component(dgs: usize, plant_len: usize, index: usize) -> String {
    let k = index - plant_len;
    let (bank, rest) = (k / (6 * dgs), k % (6 * dgs));
    format!("bank{}_dg{}_hat_{}", bank + 1, rest / 6 + 1, STATE_NAMES[rest % 6])
}

impl Simulation {
    /// Designs every observer (before any simulation) and runs the
    /// plant-only warm-up.
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, HarnessError> {
        cfg.validate()?;
        let topology = cfg.topology()?;
        let n = topology.dgs.len();
        let o = &cfg.observer;
        let options = RiccatiOptions {
            allow_psd_w: o.allow_psd_w,
            ..RiccatiOptions::default()
        };
        let mut designs = Vec::with_capacity(n);
        let mut psis = Vec::with_capacity(n);
        let mut gains = Vec::with_capacity(n);
        for (i, site) in topology.dgs.iter().enumerate() {
            let design = design_observer(
                &site.ss.a_dyn(),
                &site.ss.c_dyn(),
                &nalgebra::DMatrix::from_element(1, 1, o.v),
                &(nalgebra::DMatrix::identity(6, 6) * o.w_scale),
                &(nalgebra::DMatrix::identity(6, 6) * o.q_tilde_scale),
                o.sigma,
                o.epsilon,
                &options,
            )
            .map_err(|source| HarnessError::Design { dg: i + 1, source })?;
            psis.push(PsiMatrix::from_design(&design, &site.ss.c)?);
            gains.push(Vec6::from_iterator(design.l.iter().copied()));
            designs.push(design);
        }

        let mut sim = Self {
            state: PlantState::zeros(topology.layout()),
            replicas: Vec::new(),
            logs: (0..n).map(TriggerLog::new).collect(),
            secondary: (0..n)
                .map(|_| {
                    let mut s = SecondaryState::new(n, cfg.secondary.enabled, cfg.secondary.enable_time);
                    s.clamp_factor = cfg.secondary.clamp_factor;
                    s
                })
                .collect(),
            secondary_gains: cfg.secondary.gains(),
            cfg: cfg.clone(),
            topology,
            designs,
            gains,
            psis,
        };
        sim.warm_up()?;
        let initial: Vec<DGState<f64>> = (0..n)
            .map(|j| match cfg.observer.initial_estimate {
                InitialEstimate::Zero => DGState::zeros(),
                InitialEstimate::True => sim.state.dg(j),
            })
            .collect();
        sim.replicas = (0..n)
            .map(|_| initial.iter().map(|x| ObserverReplica::new(*x)).collect())
            .collect();
        Ok(sim)
    }

    pub fn designs(&self) -> &[ObserverDesign<f64>] {
        &self.designs
    }

    pub fn topology(&self) -> &Topology<f64> {
        &self.topology
    }

    pub fn state(&self) -> &PlantState<f64> {
        &self.state
    }

    fn divergence(&self, t: f64, err: PlantError) -> HarnessError {
        let layout = self.topology.layout();
        match err {
            PlantError::Divergence { index } => HarnessError::Divergence {
                t,
                component: if index < layout.len() {
                    layout.component_name(index)
                } else {
                    replica_component(self.topology.dgs.len(), layout.len(), index)
                },
            },
            other => other.into(),
        }
    }

    /// Closed-loop plant from the zero state with `δv = 0` and the switches
    /// in their initial positions.
    fn warm_up(&mut self) -> Result<(), HarnessError> {
        let h = self.cfg.step;
        let steps = (self.cfg.warmup / h).round() as usize;
        let dv = vec![0.0; self.topology.dgs.len()];
        for n in 0..steps {
            let topo = &self.topology;
            let inner = &self.cfg.inner;
            match rk4_step(|x: &DVector<f64>| closed_loop_derivative(x, topo, inner, &dv).0, &self.state.x, h) {
                Ok(x) => self.state.x = x,
                Err(e) => return Err(self.divergence((n + 1) as f64 * h - self.cfg.warmup, e)),
            }
        }
        Ok(())
    }

    /// Runs the scenario horizon. Consumes the simulation: the warm-up
    /// state is the run's initial condition.
    pub fn run(mut self, options: RunOptions) -> Result<RunOutput, HarnessError> {
        let cfg = self.cfg.clone();
        let h = cfg.step;
        let steps = cfg.steps();
        let n = self.topology.dgs.len();
        let layout: PlantLayout = self.topology.layout();
        let plant_len = layout.len();
        let v_star = cfg.dg.v_star;

        let mut recorder = MetricsRecorder::new(
            &cfg,
            self.topology.switching_times(),
            self.designs.iter().map(|d| to6x6(&d.p)).collect(),
            self.designs.iter().map(|d| to6x6(&d.q_tilde)).collect(),
        );
        let mut trace = Trace::with_layout(n, self.topology.bus_count);
        let mut events = Vec::new();
        let mut mismatches = 0usize;
        let mut dv = vec![0.0; n];
        let mut z = DVector::<f64>::zeros(plant_len + 6 * n * n);

        for step in 0..=steps {
            let t = step as f64 * h;
            apply_switch_events(&mut self.topology, &mut self.state, t);

            for (b, sec) in self.secondary.iter_mut().enumerate() {
                let estimates: Vec<Estimate<f64>> =
                    self.replicas[b].iter().map(|r| Estimate::from_state(&r.x_hat)).collect();
                dv[b] = secondary_step(&estimates, v_star, &self.secondary_gains, sec, t, h)?[b];
            }
            let u = controls(&self.state.x, &self.topology, &cfg.inner, &dv);

            let mut errors = Vec::with_capacity(n);
            let mut triggered = vec![false; n];
            let mut etas = vec![0.0; n];
            for i in 0..n {
                let x = self.state.dg(i);
                let e = estimation_error(&x, &self.replicas[i][i].x_hat);
                let e_tilde = self.logs[i].sampling_error(&x);
                etas[i] = eta(&e, &e_tilde, &self.psis[i]);
                if step == 0 || should_trigger(&e, &e_tilde, &self.psis[i], cfg.observer.epsilon) {
                    triggered[i] = true;
                    self.logs[i].record(t, &x)?;
                    let packet = EventPacket {
                        sender: i,
                        t_k: t,
                        y: self.topology.dgs[i].ss.output(&x),
                        u: u[i],
                        v_t: self.state.bus_voltage(self.topology.dgs[i].bus),
                    };
                    for bank in &mut self.replicas {
                        bank[i].apply_event(&packet)?;
                    }
                    events.push(EventRecord { t_k: t, dg: i });
                }
                errors.push(e);
            }

            let v_cd: Vec<f64> = (0..n).map(|i| self.state.dg(i)[V_CD]).collect();
            let q: Vec<f64> = (0..n).map(|i| state_reactive_power(&self.state.dg(i))).collect();
            let q_hat: Vec<f64> = (0..n).map(|i| state_reactive_power(&self.replicas[i][i].x_hat)).collect();
            recorder.observe(t, &errors, &triggered, &v_cd, &q_hat, &q);
            if options.record_trace && step % cfg.decimate == 0 {
                let mut row = Vec::with_capacity(trace.columns.len());
                row.push(t);
                for i in 0..n {
                    row.extend(self.state.dg(i).iter());
                    row.extend(self.replicas[i][i].x_hat.iter());
                    row.extend([etas[i], f64::from(u8::from(triggered[i])), dv[i], q[i], q_hat[i]]);
                }
                for b in 0..self.topology.bus_count {
                    row.extend(self.state.bus_voltage(b).iter());
                }
                trace.rows.push(row);
            }
            if step == steps {
                break;
            }

            z.rows_mut(0, plant_len).copy_from(&self.state.x);
            for (b, bank) in self.replicas.iter().enumerate() {
                for (j, r) in bank.iter().enumerate() {
                    z.rows_mut(plant_len + 6 * (n * b + j), 6).copy_from(&r.x_hat);
                }
            }
            let next = {
                let topo = &self.topology;
                let replicas = &self.replicas;
                let gains = &self.gains;
                let inner = &cfg.inner;
                let feed = cfg.observer.input_feed;
                let dv = &dv;
                rk4_step(
                    |s: &DVector<f64>| {
                        let xp = s.rows(0, plant_len).clone_owned();
                        let (dxp, us) = closed_loop_derivative(&xp, topo, inner, dv);
                        let mut ds = DVector::zeros(s.len());
                        ds.rows_mut(0, plant_len).copy_from(&dxp);
                        for (b, bank) in replicas.iter().enumerate() {
                            for (j, r) in bank.iter().enumerate() {
                                let site = &topo.dgs[j];
                                let (uj, vtj) = match feed {
                                    InputFeed::Live => {
                                        let at = layout.bus(site.bus);
                                        (us[j], Vector2::new(xp[at], xp[at + 1]))
                                    }
                                    InputFeed::Held => (r.u_held, r.vt_held),
                                };
                                let o = plant_len + 6 * (n * b + j);
                                let xh = Vec6::from_column_slice(&s.as_slice()[o..o + 6]);
                                let rate = observer_rate(&site.ss, &gains[j], &xh, r.y_held, &uj, &vtj);
                                ds.rows_mut(o, 6).copy_from(&rate);
                            }
                        }
                        ds
                    },
                    &z,
                    h,
                )
            };
            z = next.map_err(|e| self.divergence(t + h, e))?;
            self.state.x.copy_from(&z.rows(0, plant_len));
            for (b, bank) in self.replicas.iter_mut().enumerate() {
                for (j, r) in bank.iter_mut().enumerate() {
                    let o = plant_len + 6 * (n * b + j);
                    r.x_hat = Vec6::from_column_slice(&z.as_slice()[o..o + 6]);
                }
            }
            if (0..n).any(|j| self.replicas.iter().skip(1).any(|bank| bank[j] != self.replicas[0][j])) {
                mismatches += 1;
            }
        }

        let metrics = recorder.finish(&self.logs, mismatches, steps);
        Ok(RunOutput {
            trace,
            events,
            metrics,
            final_state: self.state,
            logs: self.logs,
            designs: self.designs,
        })
    }
}

/// Designs, warms up and runs `cfg`, keeping the trace.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, HarnessError> {
    run_scenario_with(cfg, RunOptions::default())
}

pub fn run_scenario_with(cfg: &ScenarioConfig, options: RunOptions) -> Result<RunOutput, HarnessError> {
    Simulation::new(cfg)?.run(options)
}

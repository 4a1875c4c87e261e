//! Run summary, accumulated at full rate while the engine steps.

use nalgebra::{SMatrix, SVector};
use serde::Serialize;

use super::{baseline_packet_count, communication_reduction, ScenarioConfig};
use crate::etm::{inter_event_stats, TriggerLog};

type Mat6 = SMatrix<f64, 6, 6>;
type Vec6 = SVector<f64, 6>;

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Metrics {
    pub duration: f64,
    pub step: f64,
    pub steps: usize,
    pub events_per_dg: Vec<usize>,
    pub total_events: usize,
    pub baseline_rate: f64,
    /// Packets a periodic scheme at `baseline_rate` sends over the run.
    pub baseline_packets: u64,
    pub reduction_ratio: f64,
    /// The event count exceeded the baseline and the ratio was clamped.
    pub reduction_anomalous: bool,
    /// Smallest gap between consecutive events of any one DG (s).
    pub min_gap: Option<f64>,
    pub min_gap_per_dg: Vec<Option<f64>>,
    pub mean_gap_per_dg: Vec<f64>,
    pub switching_times: Vec<f64>,
    /// Events within `near_window` after a switching instant.
    pub near_switch_events: usize,
    pub near_switch_fraction: Option<f64>,
    /// Per DG, max ‖e‖ from `initial_settle` to the first switching instant.
    pub initial_window_max_error: Vec<f64>,
    /// Per DG, max ‖e‖ over every post-switch window that starts `settle`
    /// after its switching instant.
    pub steady_max_error: Vec<f64>,
    /// Step intervals on which the Lyapunov decrease condition was checked.
    pub lyapunov_checks: usize,
    pub lyapunov_violations: usize,
    /// Largest `(ΔV/h + σ eᵀQ̃e) / eᵀQ̃e` seen; negative means every checked
    /// interval decreased faster than required.
    pub lyapunov_worst_margin: Option<f64>,
    /// Steps at which some replica differed from the same DG's replica in
    /// bank 1.
    pub replica_mismatches: usize,
    pub restoration: Option<Restoration>,
    pub sharing: Option<SharingSummary>,
    /// Cross-DG mean of the true `v_cd` at the end of the run (V).
    pub final_mean_vcd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Restoration {
    pub enable_time: f64,
    pub v_star: f64,
    pub band: f64,
    /// Time from which the cross-DG mean `v_cd` stays inside the band up to
    /// the end of the run; `None` if it is outside at the end.
    pub settle_time: Option<f64>,
    /// Largest `|mean v_cd − v*| / v*` after `enable_time + deadline`.
    pub max_deviation_after_deadline: f64,
    pub restored_within_deadline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SharingSummary {
    pub window_start: f64,
    /// Largest `max_i |Q̂_i − Q̄| / |Q̄|` over the window (estimates).
    pub max_spread_estimated: Option<f64>,
    /// Same from the true reactive powers.
    pub max_spread_true: Option<f64>,
    pub final_q_hat: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Previous {
    v: f64,
    qq: f64,
    norm: f64,
}

pub(crate) struct MetricsRecorder {
    h: f64,
    duration: f64,
    sigma: f64,
    epsilon: f64,
    p: Vec<Mat6>,
    q: Vec<Mat6>,
    switching_times: Vec<f64>,
    cfg: ScenarioConfig,
    initial_max: Vec<f64>,
    steady_max: Vec<f64>,
    prev: Vec<Option<Previous>>,
    lyap_checks: usize,
    lyap_violations: usize,
    lyap_worst: Option<f64>,
    last_outside: Option<f64>,
    max_dev_after_deadline: f64,
    spread_est: Option<f64>,
    spread_true: Option<f64>,
    final_q_hat: Vec<f64>,
    final_mean_vcd: f64,
    last_t: f64,
}

/// `max_i |x_i − mean| / |mean|`, `None` when the mean is zero.
fn spread(values: &[f64]) -> Option<f64> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        return None;
    }
    Some(values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max) / mean.abs())
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl MetricsRecorder {
    pub(crate) fn new(cfg: &ScenarioConfig, switching_times: Vec<f64>, p: Vec<Mat6>, q: Vec<Mat6>) -> Self {
        let n = p.len();
        Self {
            h: cfg.step,
            duration: cfg.duration,
            sigma: cfg.observer.sigma,
            epsilon: cfg.observer.epsilon,
            p,
            q,
            switching_times: switching_times.into_iter().filter(|&t| t <= cfg.duration).collect(),
            cfg: cfg.clone(),
            initial_max: vec![0.0; n],
            steady_max: vec![0.0; n],
            prev: vec![None; n],
            lyap_checks: 0,
            lyap_violations: 0,
            lyap_worst: None,
            last_outside: None,
            max_dev_after_deadline: 0.0,
            spread_est: None,
            spread_true: None,
            final_q_hat: vec![0.0; n],
            final_mean_vcd: 0.0,
            last_t: 0.0,
        }
    }

    /// `Some(true)` inside a post-switch steady window, `Some(false)` inside
    /// the initial window, `None` during excluded transients.
    fn window(&self, t: f64) -> Option<bool> {
        let m = &self.cfg.metrics;
        let tol = 1e-9;
        match self.switching_times.iter().rposition(|&ts| ts <= t + tol) {
            None => (t + tol >= m.initial_settle).then_some(false),
            Some(k) => (t + tol >= self.switching_times[k] + m.settle).then_some(true),
        }
    }

    /// Records one step: estimation errors of every DG (against the DG's own
    /// replica), which DGs transmitted at this step, and the quantities the
    /// secondary-control summary needs.
    pub(crate) fn observe(&mut self, t: f64, errors: &[Vec6], triggered: &[bool], v_cd: &[f64], q_hat: &[f64], q: &[f64]) {
        let window = self.window(t);
        for (i, e) in errors.iter().enumerate() {
            let norm = e.norm();
            match window {
                Some(true) => self.steady_max[i] = self.steady_max[i].max(norm),
                Some(false) => self.initial_max[i] = self.initial_max[i].max(norm),
                None => {}
            }
            let v = e.dot(&(self.p[i] * e));
            let qq = e.dot(&(self.q[i] * e));
            // The interval ending here is checked when no event fired at its
            // end (an event means η reached zero inside it) and the error is
            // outside the ε-ball at both ends.
            if let Some(prev) = self.prev[i] {
                if !triggered[i] && prev.norm > self.epsilon && norm > self.epsilon {
                    let rate = (v - prev.v) / self.h;
                    let qq_mid = 0.5 * (prev.qq + qq);
                    let bound = -self.sigma * qq_mid + 1e-3 * qq_mid.abs() + 1e-9;
                    self.lyap_checks += 1;
                    if rate > bound {
                        self.lyap_violations += 1;
                    }
                    let margin = (rate + self.sigma * qq_mid) / qq_mid.abs();
                    self.lyap_worst = max_opt(self.lyap_worst, Some(margin));
                }
            }
            self.prev[i] = Some(Previous { v, qq, norm });
        }

        let mean_v = v_cd.iter().sum::<f64>() / v_cd.len() as f64;
        self.final_mean_vcd = mean_v;
        self.final_q_hat = q_hat.to_vec();
        self.last_t = t;
        let sec = &self.cfg.secondary;
        if sec.enabled && t >= sec.enable_time {
            let v_star = self.cfg.dg.v_star;
            let dev = (mean_v - v_star).abs() / v_star;
            if dev > self.cfg.metrics.restoration_band {
                self.last_outside = Some(t);
            }
            if t >= sec.enable_time + self.cfg.metrics.restoration_deadline - 1e-9 {
                self.max_dev_after_deadline = self.max_dev_after_deadline.max(dev);
            }
            if t >= self.duration - self.cfg.metrics.sharing_window - 1e-9 {
                self.spread_est = max_opt(self.spread_est, spread(q_hat));
                self.spread_true = max_opt(self.spread_true, spread(q));
            }
        }
    }

    pub(crate) fn finish(self, logs: &[TriggerLog<f64>], replica_mismatches: usize, steps: usize) -> Metrics {
        let cfg = &self.cfg;
        let events_per_dg: Vec<usize> = logs.iter().map(|l| l.count()).collect();
        let total_events: usize = events_per_dg.iter().sum();
        let reduction = communication_reduction(total_events, cfg.baseline_rate, cfg.duration)
            .expect("validated configuration");
        let stats: Vec<_> = logs
            .iter()
            .map(|l| inter_event_stats(l.times()).expect("logs are strictly increasing"))
            .collect();
        let near = cfg.metrics.near_window;
        let near_switch_events = logs
            .iter()
            .flat_map(|l| l.times().iter())
            .filter(|&&t| self.switching_times.iter().any(|&ts| t >= ts - 1e-9 && t < ts + near))
            .count();
        let sec = &cfg.secondary;
        let restoration = sec.enabled.then(|| {
            let settle_time = match self.last_outside {
                None => Some(sec.enable_time),
                Some(t) if t >= self.last_t => None,
                Some(t) => Some(t + self.h),
            };
            Restoration {
                enable_time: sec.enable_time,
                v_star: cfg.dg.v_star,
                band: cfg.metrics.restoration_band,
                settle_time,
                max_deviation_after_deadline: self.max_dev_after_deadline,
                restored_within_deadline: settle_time
                    .is_some_and(|s| s <= sec.enable_time + cfg.metrics.restoration_deadline + 1e-9),
            }
        });
        let sharing = sec.enabled.then(|| SharingSummary {
            window_start: (cfg.duration - cfg.metrics.sharing_window).max(sec.enable_time),
            max_spread_estimated: self.spread_est,
            max_spread_true: self.spread_true,
            final_q_hat: self.final_q_hat.clone(),
        });
        Metrics {
            duration: cfg.duration,
            step: cfg.step,
            steps,
            total_events,
            baseline_rate: cfg.baseline_rate,
            baseline_packets: baseline_packet_count(cfg.baseline_rate, cfg.duration),
            reduction_ratio: reduction.ratio,
            reduction_anomalous: reduction.anomalous,
            min_gap: stats.iter().filter_map(|s| s.min_gap).reduce(f64::min),
            min_gap_per_dg: stats.iter().map(|s| s.min_gap).collect(),
            mean_gap_per_dg: stats.iter().map(|s| s.mean_gap).collect(),
            switching_times: self.switching_times.clone(),
            near_switch_events,
            near_switch_fraction: (total_events > 0).then(|| near_switch_events as f64 / total_events as f64),
            initial_window_max_error: self.initial_max,
            steady_max_error: self.steady_max,
            lyapunov_checks: self.lyap_checks,
            lyapunov_violations: self.lyap_violations,
            lyapunov_worst_margin: self.lyap_worst,
            replica_mismatches,
            restoration,
            sharing,
            final_mean_vcd: self.final_mean_vcd,
            events_per_dg,
        }
    }
}

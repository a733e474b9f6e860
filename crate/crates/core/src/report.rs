//! Run reports: the per-step metric stream, cost counters, evaluation rows,
//! instability flags, and resource instrumentation.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::pipeline::{CostCounters, TrainConfig};
use crate::repr::ReprReport;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One optimizer step in the metric stream. `margin` and `weight` are only
/// meaningful for preference losses and stay empty elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub step: u64,
    pub stage: String,
    pub loss: f64,
    pub margin: Option<f64>,
    pub weight: Option<f64>,
    pub grad_norm: f64,
}

/// Per-split oracle evaluation attached to a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRow {
    pub split: String,
    pub kl_to_teacher: f64,
    pub kl_std_err: Option<f64>,
    pub judge_score: f64,
    pub n_prompts: usize,
}

/// Everything a single training run leaves behind.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub n_prompts: usize,
    pub vocab_size: u32,
    pub architecture: String,
    pub metrics: Vec<MetricRow>,
    pub cost: CostCounters,
    pub eval: Vec<EvalRow>,
    #[serde(default)]
    pub repr: Vec<ReprReport>,
    pub instability_events: usize,
    pub notes: Vec<String>,
    pub wall_clock_seconds: f64,
    pub peak_mem_bytes: u64,
    next_step: u64,
    #[serde(skip)]
    detector: InstabilityDetector,
}

impl RunReport {
    pub fn new(method: &str, seed: u64, config: TrainConfig) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            run_id: format!("{method}_s{seed}"),
            method: method.to_string(),
            seed,
            config,
            n_prompts: 0,
            vocab_size: 0,
            architecture: String::new(),
            metrics: Vec::new(),
            cost: CostCounters::default(),
            eval: Vec::new(),
            repr: Vec::new(),
            instability_events: 0,
            notes: Vec::new(),
            wall_clock_seconds: 0.0,
            peak_mem_bytes: 0,
            next_step: 0,
            detector: InstabilityDetector::new(50, 10.0),
        }
    }

    /// Appends one metric row and feeds the instability detector.
    pub fn push_metric(
        &mut self,
        stage: &str,
        loss: f64,
        margin: Option<f64>,
        weight: Option<f64>,
        grad_norm: f64,
    ) {
        if self.detector.observe(loss) {
            self.instability_events += 1;
        }
        self.metrics.push(MetricRow {
            step: self.next_step,
            stage: stage.to_string(),
            loss,
            margin,
            weight,
            grad_norm,
        });
        self.next_step += 1;
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Deterministic CSV rendering of the metric stream. Two runs with the
    /// same config and seed produce byte-identical output.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("step,stage,loss,margin,weight,grad_norm\n");
        for row in &self.metrics {
            let margin = row.margin.map(|v| v.to_string()).unwrap_or_default();
            let weight = row.weight.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.step, row.stage, row.loss, margin, weight, row.grad_norm
            ));
        }
        out
    }
}

/// Flags losses that spike above `factor` times the rolling median of the
/// most recent `window` observations. Arms once ten losses have been seen.
#[derive(Debug, Clone)]
struct InstabilityDetector {
    window: usize,
    factor: f64,
    recent: VecDeque<f64>,
}

impl Default for InstabilityDetector {
    fn default() -> Self {
        Self::new(50, 10.0)
    }
}

impl InstabilityDetector {
    fn new(window: usize, factor: f64) -> Self {
        Self {
            window,
            factor,
            recent: VecDeque::with_capacity(window),
        }
    }

    /// Returns true if this loss counts as an instability event.
    fn observe(&mut self, loss: f64) -> bool {
        let spiked = if self.recent.len() >= 10 {
            let mut sorted: Vec<f64> = self.recent.iter().cloned().collect();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
            let mid = sorted.len() / 2;
            let median = if sorted.len().is_multiple_of(2) {
                0.5 * (sorted[mid - 1] + sorted[mid])
            } else {
                sorted[mid]
            };
            loss > self.factor * median
        } else {
            false
        };
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(loss);
        spiked
    }
}

/// Samples this process's resident set every 100 ms and remembers the peak.
/// Reading /proc never touches the metric path, so instrumented and
/// uninstrumented runs produce identical metric streams.
pub struct PeakMemSampler {
    stop: Arc<AtomicBool>,
    peak: Arc<AtomicU64>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl PeakMemSampler {
    pub fn start() -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let peak = Arc::new(AtomicU64::new(current_rss_bytes()));
        let stop2 = stop.clone();
        let peak2 = peak.clone();
        let handle = std::thread::spawn(move || {
            while !stop2.load(Ordering::Relaxed) {
                let rss = current_rss_bytes();
                peak2.fetch_max(rss, Ordering::Relaxed);
                std::thread::sleep(Duration::from_millis(100));
            }
        });
        Self {
            stop,
            peak,
            handle: Some(handle),
        }
    }

    /// Stops sampling and returns the peak resident set in bytes.
    pub fn finish(mut self) -> u64 {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
        self.peak.fetch_max(current_rss_bytes(), Ordering::Relaxed);
        self.peak.load(Ordering::Relaxed)
    }
}

/// Current resident set size in bytes, or 0 where /proc is unavailable.
fn current_rss_bytes() -> u64 {
    let Ok(statm) = std::fs::read_to_string("/proc/self/statm") else {
        return 0;
    };
    let pages: u64 = statm
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0);
    pages * 4096
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detector_needs_history_and_a_spike() {
        let mut d = InstabilityDetector::new(50, 10.0);
        for _ in 0..9 {
            assert!(!d.observe(1.0));
        }
        // armed from the 10th observation on
        assert!(!d.observe(1.0));
        assert!(!d.observe(5.0));
        assert!(d.observe(25.0));
    }

    #[test]
    fn metric_csv_is_stable() {
        let mut r = RunReport::new("soda", 7, TrainConfig::default());
        r.push_metric("warmup", 1.25, None, None, 0.5);
        r.push_metric("dpo", 0.693, Some(0.0), Some(0.5), 0.1);
        let a = r.metrics_csv();
        assert!(a.starts_with("step,stage,loss,margin,weight,grad_norm\n"));
        assert!(a.contains("0,warmup,1.25,,,0.5\n"));
        assert!(a.contains("1,dpo,0.693,0,0.5,0.1\n"));
    }

    #[test]
    fn peak_mem_sampler_reports_something() {
        let sampler = PeakMemSampler::start();
        let bytes = sampler.finish();
        // on Linux this is the real RSS; elsewhere it degrades to 0
        if std::path::Path::new("/proc/self/statm").exists() {
            assert!(bytes > 0);
        }
    }

    #[test]
    fn report_serializes_without_detector_state() {
        let mut r = RunReport::new("seqkd", 1, TrainConfig::default());
        r.push_metric("warmup", 2.0, None, None, 1.0);
        let json = serde_json::to_string(&r).unwrap();
        let back: RunReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.metrics.len(), 1);
        assert_eq!(back.run_id, "seqkd_s1");
    }
}

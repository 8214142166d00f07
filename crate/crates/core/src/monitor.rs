//! Sliding-window accuracy monitor.
//!
//! Calibration slides a window over a stream of per-sample correctness bits
//! from in-distribution data (stride 1) and records the mean `μ` and
//! population standard deviation `σ` of the window accuracies. In
//! deployment, once the window is full, the monitor is triggered whenever the
//! window accuracy falls strictly below `μ − 3σ`.

use std::collections::VecDeque;

use crate::error::{invalid, Result};

pub const DEFAULT_WINDOW: usize = 100;

/// Statistics of in-distribution window accuracy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Calibration {
    pub mu: f64,
    pub sigma: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorState {
    window_size: usize,
    window: VecDeque<bool>,
    hits: usize,
    calibration: Option<Calibration>,
    triggered: bool,
}

/// Computes `μ`, `σ` and the threshold over every window of `stream`.
pub fn calibrate(stream: &[bool], window_size: usize) -> Result<MonitorState> {
    let mut state = MonitorState::new(window_size)?;
    state.calibrate(stream)?;
    Ok(state)
}

impl MonitorState {
    /// An uncalibrated monitor.
    pub fn new(window_size: usize) -> Result<Self> {
        if window_size == 0 {
            return invalid("window size must be positive");
        }
        Ok(Self {
            window_size,
            window: VecDeque::with_capacity(window_size),
            hits: 0,
            calibration: None,
            triggered: false,
        })
    }

    /// (Re)calibrates from an in-distribution stream and clears the window.
    pub fn calibrate(&mut self, stream: &[bool]) -> Result<()> {
        let w = self.window_size;
        if stream.len() < w {
            return invalid(format!(
                "calibration stream of {} samples is shorter than the window ({w})",
                stream.len()
            ));
        }
        let mut hits = stream[..w].iter().filter(|&&b| b).count();
        let mut accs = Vec::with_capacity(stream.len() - w + 1);
        accs.push(hits as f64 / w as f64);
        for i in w..stream.len() {
            hits += stream[i] as usize;
            hits -= stream[i - w] as usize;
            accs.push(hits as f64 / w as f64);
        }
        let n = accs.len() as f64;
        let mu = accs.iter().sum::<f64>() / n;
        let sigma = (accs.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / n).sqrt();
        self.calibration = Some(Calibration {
            mu,
            sigma,
            threshold: mu - 3.0 * sigma,
        });
        self.reset();
        Ok(())
    }

    /// Empties the window and clears the trigger, keeping the calibration.
    pub fn reset(&mut self) {
        self.window.clear();
        self.hits = 0;
        self.triggered = false;
    }

    /// Pushes one correctness bit and re-evaluates the trigger.
    pub fn step(&mut self, correct: bool) -> Result<bool> {
        let Some(cal) = self.calibration else {
            return invalid("monitor must be calibrated before use");
        };
        if self.window.len() == self.window_size {
            if self.window.pop_front() == Some(true) {
                self.hits -= 1;
            }
        }
        self.window.push_back(correct);
        self.hits += correct as usize;
        self.triggered = self.is_full() && self.window_accuracy() < cal.threshold;
        Ok(self.triggered)
    }

    pub fn calibration(&self) -> Option<Calibration> {
        self.calibration
    }

    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn is_full(&self) -> bool {
        self.window.len() == self.window_size
    }

    pub fn triggered(&self) -> bool {
        self.triggered
    }

    /// Accuracy over the bits currently in the window (1.0 when empty).
    pub fn window_accuracy(&self) -> f64 {
        if self.window.is_empty() {
            1.0
        } else {
            self.hits as f64 / self.window.len() as f64
        }
    }
}

/// One row of a monitor trace.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub window_accuracy: f64,
    pub triggered: bool,
}

/// Runs `stream` through a calibrated monitor, recording every step.
pub fn trace(state: &mut MonitorState, stream: &[bool]) -> Result<Vec<TraceRow>> {
    stream
        .iter()
        .enumerate()
        .map(|(step, &c)| {
            let triggered = state.step(c)?;
            Ok(TraceRow {
                step,
                window_accuracy: state.window_accuracy(),
                triggered,
            })
        })
        .collect()
}

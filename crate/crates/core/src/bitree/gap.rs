//! Search for boundary measures whose `|Q|^2` embedding constant is large
//! compared with the one-box constant.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{bi_embedding_constant, one_box_constant, BiMeasure, BiTreeShape};
use crate::eigen::PowerIteration;
use crate::sampling::{random_bimeasure, trial_rng};

const PROBE_TOL: f64 = 1e-10;
const ZERO_PROBABILITY: f64 = 0.1;
const STEP_SCALE: f64 = 0.5;
const START_TEMPERATURE: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapOptimizer {
    /// Independent random measures, one per trial.
    Random,
    /// One annealing chain of `trials` single-cell moves.
    Anneal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapConfig {
    pub shape: BiTreeShape,
    pub trials: usize,
    pub seed: u64,
    pub optimizer: GapOptimizer,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStep {
    pub step: usize,
    pub gap: f64,
    pub one_box: f64,
    pub embedding: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub best_gap: f64,
    pub best_one_box: f64,
    pub best_embedding: f64,
    pub best_measure: Option<BiMeasure>,
    pub trajectory: Vec<GapStep>,
}

impl GapReport {
    fn empty() -> Self {
        Self {
            best_gap: 0.0,
            best_one_box: 0.0,
            best_embedding: 0.0,
            best_measure: None,
            trajectory: Vec::new(),
        }
    }
}

fn evaluate(mu: &BiMeasure, step: usize) -> GapStep {
    let one_box = one_box_constant(mu).value;
    let defaults = PowerIteration::default();
    let embedding = bi_embedding_constant(mu, PROBE_TOL, defaults.max_iter).value;
    GapStep {
        step,
        gap: if one_box > 0.0 { embedding / one_box } else { 0.0 },
        one_box,
        embedding,
    }
}

/// Maximizes `embedding / one_box` over boundary measures. Exploratory only.
pub fn gap_probe(config: &GapConfig) -> GapReport {
    if config.trials == 0 {
        return GapReport::empty();
    }
    match config.optimizer {
        GapOptimizer::Random => random_search(config),
        GapOptimizer::Anneal => anneal(config),
    }
}

fn random_search(config: &GapConfig) -> GapReport {
    let results: Vec<(GapStep, BiMeasure)> = (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(config.seed, t as u64);
            let mu = random_bimeasure(&mut rng, config.shape);
            (evaluate(&mu, t), mu)
        })
        .collect();
    let mut report = GapReport::empty();
    for (step, mu) in results {
        if step.gap > report.best_gap || report.best_measure.is_none() {
            report.record_best(&step, mu);
        }
        report.trajectory.push(step);
    }
    report
}

impl GapReport {
    fn record_best(&mut self, step: &GapStep, mu: BiMeasure) {
        self.best_gap = step.gap;
        self.best_one_box = step.one_box;
        self.best_embedding = step.embedding;
        self.best_measure = Some(mu);
    }
}

fn anneal(config: &GapConfig) -> GapReport {
    let mut rng = trial_rng(config.seed, 0);
    let mut current = random_bimeasure(&mut rng, config.shape);
    let mut current_step = evaluate(&current, 0);
    let mut report = GapReport::empty();
    report.record_best(&current_step, current.clone());
    report.trajectory.push(current_step);
    let cells = config.shape.cell_count();

    for k in 1..config.trials {
        let mut proposal = current.cells().to_vec();
        let i = rng.random_range(0..cells);
        if rng.random::<f64>() < ZERO_PROBABILITY {
            proposal[i] = 0.0;
        } else {
            let noise: f64 = rng.sample(StandardNormal);
            let base = if proposal[i] > 0.0 {
                proposal[i]
            } else {
                current.total_mass() / cells as f64
            };
            proposal[i] = base * (STEP_SCALE * noise).exp();
        }
        let candidate = match BiMeasure::new(config.shape, proposal) {
            Ok(mu) if !mu.is_zero() => mu,
            _ => {
                report.trajectory.push(GapStep { step: k, ..current_step });
                continue;
            }
        };
        let step = evaluate(&candidate, k);
        let temperature = START_TEMPERATURE * (1.0 - k as f64 / config.trials as f64);
        let delta = step.gap.ln() - current_step.gap.ln();
        let accept = delta >= 0.0
            || (temperature > 0.0 && rng.random::<f64>() < (delta / temperature).exp());
        if accept {
            current = candidate;
            current_step = step;
            if step.gap > report.best_gap {
                report.record_best(&step, current.clone());
            }
        }
        report.trajectory.push(GapStep { step: k, ..current_step });
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bitree::build_bitree;

    #[test]
    fn zero_trials() {
        let config = GapConfig {
            shape: build_bitree(2, 2).unwrap(),
            trials: 0,
            seed: 3,
            optimizer: GapOptimizer::Anneal,
        };
        let report = gap_probe(&config);
        assert!(report.trajectory.is_empty());
        assert!(report.best_measure.is_none());
    }

    #[test]
    fn gap_at_least_one() {
        let config = GapConfig {
            shape: build_bitree(1, 1).unwrap(),
            trials: 64,
            seed: 11,
            optimizer: GapOptimizer::Random,
        };
        let report = gap_probe(&config);
        assert_eq!(report.trajectory.len(), 64);
        assert!(report.trajectory.iter().all(|s| s.gap >= 1.0 - 1e-9));
    }

    #[test]
    fn anneal_is_reproducible_and_monotone_in_best() {
        let config = GapConfig {
            shape: build_bitree(2, 2).unwrap(),
            trials: 200,
            seed: 5,
            optimizer: GapOptimizer::Anneal,
        };
        let a = gap_probe(&config);
        let b = gap_probe(&config);
        assert_eq!(a, b);
        assert_eq!(a.trajectory.len(), 200);
        let max = a.trajectory.iter().map(|s| s.gap).fold(0.0, f64::max);
        assert_eq!(max, a.best_gap);
        assert!(a.best_gap >= a.trajectory[0].gap);
    }
}

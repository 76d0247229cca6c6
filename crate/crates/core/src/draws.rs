use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::model::StaticParams;

/// Which latent states a chain keeps in its draw matrix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateSelection {
    #[default]
    None,
    All,
    /// 1-based state indices.
    Indices(Vec<usize>),
}

impl StateSelection {
    pub(crate) fn resolve(&self, len: usize) -> Vec<usize> {
        match self {
            StateSelection::None => Vec::new(),
            StateSelection::All => (1..=len).collect(),
            StateSelection::Indices(ix) => ix.iter().copied().filter(|&i| i >= 1 && i <= len).collect(),
        }
    }
}

/// Retained post-warmup draws, one row per draw, on the constrained scale.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub param_names: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    /// Per-draw log importance weights (offset-mixture sampler only).
    pub log_weights: Option<Vec<f64>>,
    pub accept_rate: f64,
    pub divergence_count: usize,
    pub seed: u64,
    pub wall_time: Duration,
}

impl PosteriorDraws {
    pub(crate) fn new(state_indices: &[usize]) -> Self {
        let mut param_names = vec!["mu".to_string(), "phi".to_string(), "sigma2".to_string()];
        param_names.extend(state_indices.iter().map(|i| state_name(*i)));
        Self {
            param_names,
            draws: Vec::new(),
            log_weights: None,
            accept_rate: 0.0,
            divergence_count: 0,
            seed: 0,
            wall_time: Duration::ZERO,
        }
    }

    pub(crate) fn push(&mut self, params: &StaticParams, h: &[f64], state_indices: &[usize]) {
        let mut row = Vec::with_capacity(3 + state_indices.len());
        row.extend([params.mu(), params.phi(), params.sigma2()]);
        row.extend(state_indices.iter().map(|&i| h[i - 1]));
        self.draws.push(row);
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.column_index(name)?;
        Some(self.draws.iter().map(|row| row[j]).collect())
    }
}

/// Column name of the 1-based state index `i`.
pub fn state_name(i: usize) -> String {
    format!("h[{i}]")
}

/// Receives every retained draw as it is produced.
pub trait DrawObserver {
    fn observe(&mut self, params: &StaticParams, h: &[f64]);
}

impl DrawObserver for () {
    fn observe(&mut self, _: &StaticParams, _: &[f64]) {}
}

impl<F: FnMut(&StaticParams, &[f64])> DrawObserver for F {
    fn observe(&mut self, params: &StaticParams, h: &[f64]) {
        self(params, h)
    }
}

pub(crate) struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub(crate) fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub(crate) fn elapsed(&self) -> Duration {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed()
        }
        #[cfg(target_arch = "wasm32")]
        {
            Duration::ZERO
        }
    }
}

//! Grid search for the largest epsilon whose conditions all certify.

use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalRecord};
use crate::num::{q, qi, to_wire, Q};

use super::inequalities::{certify_conditions, InequalityReport};

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub grid_step: Q,
    /// Largest grid point tried.
    pub max_epsilon: Q,
    pub precision_bits: u32,
    /// Branch-and-bound boxes per inequality and grid point.
    pub box_budget: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { grid_step: q(1, 2048), max_epsilon: q(1, 64), precision_bits: 256, box_budget: 50_000 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub epsilon: String,
    pub certified: bool,
    pub inequalities: Vec<InequalityReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchReport {
    pub grid_step: String,
    pub precision_bits: u32,
    pub best_epsilon: String,
    pub best_epsilon_f64: f64,
    /// `-log2(1/sqrt 2 + eps/2)` at the best epsilon.
    pub beta: IntervalRecord,
    pub beta_below_half: bool,
    pub beta_at_most_0_4999: bool,
    pub beta_at_most_0_491: bool,
    /// Certified `beta` minus 0.491 (upper end).
    pub gap_to_0_491: f64,
    /// Smallest epsilon with `1/sqrt 2 + eps/2 >= 2^-0.491`, approximately.
    pub epsilon_needed_for_0_491: f64,
    pub points: Vec<GridPoint>,
}

/// `-log2(1/sqrt 2 + eps/2)`.
pub fn beta_of(eps: &Q, prec: u32) -> Interval {
    let alpha = Interval::point(q(1, 2)).sqrt(prec).add(&Interval::point(eps / qi(2)), prec);
    alpha.log2(prec, prec).neg()
}

pub fn certify_point(eps: &Q, config: &SearchConfig) -> GridPoint {
    let inequalities = certify_conditions(eps, config.precision_bits, config.box_budget);
    GridPoint { epsilon: to_wire(eps), certified: inequalities.iter().all(|r| r.holds()), inequalities }
}

pub fn epsilon_search(config: &SearchConfig) -> Result<SearchReport> {
    if config.grid_step <= Q::zero() || config.max_epsilon < config.grid_step {
        return Err(Error::BadParameter("grid step must be positive and at most the largest epsilon".into()));
    }
    let steps = (&config.max_epsilon / &config.grid_step).floor().to_integer().to_usize().unwrap_or(0);
    let grid: Vec<Q> = (1..=steps).map(|k| Q::from_integer(k.into()) * &config.grid_step).collect();
    let points: Vec<GridPoint> = grid.par_iter().map(|e| certify_point(e, config)).collect();
    let best = grid
        .iter()
        .zip(&points)
        .filter(|(_, p)| p.certified)
        .map(|(e, _)| e.clone())
        .max()
        .ok_or_else(|| Error::Certification("no grid point certified".into()))?;
    let prec = config.precision_bits;
    let beta = beta_of(&best, prec);
    let target = Interval::point(q(491, 1000));
    let gap = beta.sub(&target, prec).hi().to_f64().unwrap_or(f64::NAN);
    let needed = 2.0 * (2f64.powf(-0.491) - std::f64::consts::FRAC_1_SQRT_2);
    Ok(SearchReport {
        grid_step: to_wire(&config.grid_step),
        precision_bits: prec,
        best_epsilon: to_wire(&best),
        best_epsilon_f64: best.to_f64().unwrap_or(f64::NAN),
        beta: IntervalRecord::from(&beta),
        beta_below_half: beta.hi() < &q(1, 2),
        beta_at_most_0_4999: beta.hi() <= &q(4999, 10000),
        beta_at_most_0_491: beta.hi() <= &q(491, 1000),
        gap_to_0_491: gap,
        epsilon_needed_for_0_491: needed,
        points,
    })
}

/// Whether `eps` reaches a given `beta`: `1/sqrt 2 + eps/2 >= 2^-beta`.
pub fn reaches_beta(eps: &Q, beta: &Q, prec: u32) -> Option<bool> {
    let b = beta_of(eps, prec);
    b.le(&Interval::point(beta.clone()))
}

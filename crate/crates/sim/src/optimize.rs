//! Bounded derivative-free minimisation: a real-coded genetic algorithm for
//! the global search and Nelder-Mead for local refinement.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::{Result, SimError};

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population: usize,
    /// Evaluated populations, the random initial one included.
    pub generations: usize,
    pub tournament: usize,
    /// BLX-α blend width.
    pub blend_alpha: f64,
    pub crossover_rate: f64,
    /// Per-gene mutation probability.
    pub mutation_rate: f64,
    /// Mutation standard deviation as a fraction of each bound range.
    pub mutation_sigma: f64,
    /// Best individuals copied unchanged into the next generation.
    pub elites: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 40,
            generations: 60,
            tournament: 3,
            blend_alpha: 0.5,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            mutation_sigma: 0.05,
            elites: 2,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SimError::Params(format!("genetic algorithm: {m}")));
        if self.population < 2 || self.generations == 0 {
            return bad("needs a population of at least 2 and one generation");
        }
        if self.tournament == 0 || self.tournament > self.population {
            return bad("tournament size must lie in 1..=population");
        }
        if self.elites >= self.population {
            return bad("elites must be fewer than the population");
        }
        let probs = [self.crossover_rate, self.mutation_rate];
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("rates must lie in [0, 1]");
        }
        if !(self.blend_alpha >= 0.0 && self.mutation_sigma >= 0.0) {
            return bad("blend width and mutation sigma must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best: Vec<f64>,
    pub best_value: f64,
    /// Best value after each generation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
}

impl GaOutcome {
    /// The search ended better than the best random initial individual.
    pub fn improved(&self) -> bool {
        self.trace.last() < self.trace.first()
    }
}

fn check_bounds(bounds: &[(f64, f64)]) -> Result<()> {
    if bounds.is_empty() {
        return Err(SimError::Params("no parameters to optimise".into()));
    }
    if let Some(b) = bounds.iter().find(|(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(SimError::Params(format!("bad bound {b:?}")));
    }
    Ok(())
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Minimise `f` over the box `bounds`. The population is evaluated in
/// parallel; results are deterministic for a given seed.
pub fn genetic_minimize<F>(f: F, bounds: &[(f64, f64)], cfg: &GaConfig, seed: u64) -> Result<GaOutcome>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    cfg.validate()?;
    check_bounds(bounds)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clamp = |x: &mut Vec<f64>| {
        for (v, (lo, hi)) in x.iter_mut().zip(bounds) {
            *v = v.clamp(*lo, *hi);
        }
    };

    let mut pop: Vec<Vec<f64>> = (0..cfg.population)
        .map(|_| bounds.iter().map(|(lo, hi)| if lo < hi { rng.random_range(*lo..*hi) } else { *lo }).collect())
        .collect();
    let mut fit: Vec<f64> = pop.par_iter().map(|x| sanitize(f(x))).collect();
    let mut evaluations = pop.len();
    let mut trace = Vec::with_capacity(cfg.generations);

    let rank = |fit: &[f64]| {
        let mut idx: Vec<usize> = (0..fit.len()).collect();
        idx.sort_by(|&a, &b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)));
        idx
    };
    let mut order = rank(&fit);
    trace.push(fit[order[0]]);

    let indices: Vec<usize> = (0..cfg.population).collect();
    for _ in 1..cfg.generations {
        let tournament = |rng: &mut ChaCha8Rng| -> usize {
            *indices
                .choose_multiple(rng, cfg.tournament)
                .min_by(|&&a, &&b| fit[a].total_cmp(&fit[b]).then(a.cmp(&b)))
                .unwrap()
        };
        let mut next: Vec<Vec<f64>> = order[..cfg.elites].iter().map(|&i| pop[i].clone()).collect();
        let mut next_fit: Vec<Option<f64>> = order[..cfg.elites].iter().map(|&i| Some(fit[i])).collect();
        while next.len() < cfg.population {
            let p1 = &pop[tournament(&mut rng)];
            let p2 = &pop[tournament(&mut rng)];
            let mut child: Vec<f64> = if rng.random::<f64>() < cfg.crossover_rate {
                p1.iter()
                    .zip(p2)
                    .map(|(a, b)| {
                        let (lo, hi) = (a.min(*b), a.max(*b));
                        let ext = cfg.blend_alpha * (hi - lo);
                        if hi - lo > 0.0 || ext > 0.0 {
                            rng.random_range(lo - ext..=hi + ext)
                        } else {
                            lo
                        }
                    })
                    .collect()
            } else {
                p1.clone()
            };
            for (v, (lo, hi)) in child.iter_mut().zip(bounds) {
                if rng.random::<f64>() < cfg.mutation_rate {
                    let sigma = cfg.mutation_sigma * (hi - lo);
                    if sigma > 0.0 {
                        *v += Normal::new(0.0, sigma).unwrap().sample(&mut rng);
                    }
                }
            }
            clamp(&mut child);
            next.push(child);
            next_fit.push(None);
        }
        let fresh: Vec<f64> = next
            .par_iter()
            .zip(&next_fit)
            .map(|(x, known)| known.unwrap_or_else(|| sanitize(f(x))))
            .collect();
        evaluations += next_fit.iter().filter(|k| k.is_none()).count();
        pop = next;
        fit = fresh;
        order = rank(&fit);
        trace.push(fit[order[0]]);
    }
    Ok(GaOutcome { best: pop[order[0]].clone(), best_value: fit[order[0]], trace, evaluations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadConfig {
    pub max_evaluations: usize,
    /// Convergence requires every vertex within this fraction of each bound
    /// range from the best vertex.
    pub x_tolerance: f64,
    /// Convergence also requires vertex values within this much of each other.
    pub f_tolerance: f64,
    /// Initial simplex edge as a fraction of each bound range.
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        Self { max_evaluations: 400, x_tolerance: 1e-6, f_tolerance: 1e-9, initial_step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Nelder-Mead with the standard coefficients (reflection 1, expansion 2,
/// contraction and shrink 1/2). Trial points are projected onto the box.
/// The returned value never exceeds `f(x0)`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], bounds: &[(f64, f64)], cfg: &NelderMeadConfig) -> Result<NmOutcome>
where
    F: FnMut(&[f64]) -> f64,
{
    check_bounds(bounds)?;
    if x0.len() != bounds.len() {
        return Err(SimError::Params(format!("start has {} values for {} bounds", x0.len(), bounds.len())));
    }
    let n = x0.len();
    let project = |x: Vec<f64>| -> Vec<f64> {
        x.into_iter().zip(bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
    };
    let mut evaluations = 0;
    let mut eval = |x: &[f64], evaluations: &mut usize| {
        *evaluations += 1;
        sanitize(f(x))
    };

    let start = project(x0.to_vec());
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(&start, &mut evaluations);
    simplex.push((start.clone(), f0));
    for i in 0..n {
        let (lo, hi) = bounds[i];
        let step = cfg.initial_step * (hi - lo);
        let mut v = start.clone();
        v[i] = if v[i] + step <= hi { v[i] + step } else { v[i] - step };
        let fv = eval(&v, &mut evaluations);
        simplex.push((v, fv));
    }

    let mut converged = false;
    while evaluations < cfg.max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0];
        let spread_f = simplex[n].1 - best.1;
        let spread_x = simplex[1..].iter().all(|(v, _)| {
            v.iter().zip(&best.0).zip(bounds).all(|((a, b), (lo, hi))| (a - b).abs() <= cfg.x_tolerance * (hi - lo))
        });
        if spread_x && spread_f <= cfg.f_tolerance {
            converged = true;
            break;
        }

        let centroid: Vec<f64> =
            (0..n).map(|k| simplex[..n].iter().map(|(v, _)| v[k]).sum::<f64>() / n as f64).collect();
        let toward = |coef: f64, worst: &[f64]| -> Vec<f64> {
            project(centroid.iter().zip(worst).map(|(c, w)| c + coef * (c - w)).collect())
        };
        let worst = simplex[n].0.clone();
        let f_worst = simplex[n].1;
        let f_second = simplex[n - 1].1;
        let f_best = simplex[0].1;

        let xr = toward(1.0, &worst);
        let fr = eval(&xr, &mut evaluations);
        if fr < f_best {
            let xe = toward(2.0, &worst);
            let fe = eval(&xe, &mut evaluations);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < f_worst {
            let xc = toward(0.5, &worst);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        } else {
            let xc = toward(-0.5, &worst);
            let fc = eval(&xc, &mut evaluations);
            (xc, fc)
        };
        if fc < fr.min(f_worst) {
            simplex[n] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let v: Vec<f64> = anchor.iter().zip(&vertex.0).map(|(a, x)| a + 0.5 * (x - a)).collect();
            let fv = eval(&v, &mut evaluations);
            *vertex = (v, fv);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (mut x, mut value) = simplex.swap_remove(0);
    if value > f0 {
        x = start;
        value = f0;
    }
    Ok(NmOutcome { x, value, evaluations, converged })
}

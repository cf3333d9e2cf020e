//! Box-constrained differential evolution, `rand/1/bin` strategy with Latin
//! hypercube initialisation.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct DeOptions {
    pub population: usize,
    pub max_generations: usize,
    pub crossover_prob: f64,
    /// Mutation weight range; a fresh weight is drawn each generation.
    pub weight: [f64; 2],
    pub seed: u64,
    /// Stop once the best value improved by at most `tolerance · tolerance_scale`
    /// over the last `stagnation_generations` generations.
    pub tolerance: f64,
    pub tolerance_scale: f64,
    pub stagnation_generations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub generations: usize,
    pub evaluations: usize,
}

/// Stratified initial population: each coordinate axis is split into
/// `population` equal strata and every stratum is sampled exactly once.
pub fn latin_hypercube<R: Rng>(rng: &mut R, bounds: &[(f64, f64)], population: usize) -> Vec<Vec<f64>> {
    let mut pop = vec![vec![0.0; bounds.len()]; population];
    let mut strata: Vec<usize> = (0..population).collect();
    for (j, &(lo, hi)) in bounds.iter().enumerate() {
        strata.shuffle(rng);
        for (member, &s) in pop.iter_mut().zip(&strata) {
            let u = (s as f64 + rng.random::<f64>()) / population as f64;
            member[j] = lo + u * (hi - lo);
        }
    }
    pop
}

fn pick_distinct<R: Rng>(rng: &mut R, n: usize, exclude: usize) -> [usize; 3] {
    let mut out = [usize::MAX; 3];
    let mut k = 0;
    while k < 3 {
        let c = rng.random_range(0..n);
        if c != exclude && !out[..k].contains(&c) {
            out[k] = c;
            k += 1;
        }
    }
    out
}

/// Minimises `f` over the box `bounds`. Mutants leaving the box are clamped
/// onto it. Selection is greedy and immediate (`trial <= target` replaces).
pub fn minimize<F>(f: F, bounds: &[(f64, f64)], opts: &DeOptions) -> DeResult
where
    F: Fn(&[f64]) -> f64,
{
    assert!(opts.population >= 4, "rand/1/bin needs at least four members");
    let dim = bounds.len();
    let np = opts.population;
    let mut rng = seed::rng(opts.seed);

    let mut pop = latin_hypercube(&mut rng, bounds, np);
    let mut fit: Vec<f64> = pop.iter().map(|x| f(x)).collect();
    let mut evaluations = np;
    let best_of = |fit: &[f64]| {
        fit.iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v < fit[b] { i } else { b })
    };
    let mut best = best_of(&fit);
    let mut history = vec![fit[best]];

    let mut trial = vec![0.0; dim];
    let mut generations = 0;
    while generations < opts.max_generations {
        generations += 1;
        let w = if opts.weight[0] == opts.weight[1] {
            opts.weight[0]
        } else {
            rng.random_range(opts.weight[0]..opts.weight[1])
        };
        for i in 0..np {
            let [a, b, c] = pick_distinct(&mut rng, np, i);
            let forced = rng.random_range(0..dim);
            for j in 0..dim {
                trial[j] = if j == forced || rng.random::<f64>() < opts.crossover_prob {
                    let (lo, hi) = bounds[j];
                    (pop[a][j] + w * (pop[b][j] - pop[c][j])).clamp(lo, hi)
                } else {
                    pop[i][j]
                };
            }
            let v = f(&trial);
            evaluations += 1;
            if v <= fit[i] {
                pop[i].copy_from_slice(&trial);
                fit[i] = v;
                if v < fit[best] {
                    best = i;
                }
            }
        }
        history.push(fit[best]);
        let s = opts.stagnation_generations;
        if s > 0 && history.len() > s {
            let then = history[history.len() - 1 - s];
            if then - fit[best] <= opts.tolerance * opts.tolerance_scale {
                break;
            }
        }
    }
    DeResult {
        x: pop[best].clone(),
        value: fit[best],
        generations,
        evaluations,
    }
}

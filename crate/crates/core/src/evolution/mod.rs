//! Genetic algorithm over curricula.
//!
//! Operators: uniform per-step crossover, per-step resampling mutation,
//! elitism plus size-2 tournaments for selection. Each is a free function
//! so alternatives can be swapped in.

mod sobol;

pub use sobol::sobol_rate_grid;

use std::collections::HashSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::curriculum::{Curriculum, CurriculumStep};
use crate::error::{Error, Result};
use crate::gridworld::EnvSpec;
use crate::rng::Rng;

/// How the previous epoch's best curriculum seeds the next population.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Seeding {
    /// Drop the executed first step, append a fresh random one.
    #[default]
    Shift,
    /// Reuse it unchanged.
    Verbatim,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    /// Individuals per generation (curricCount).
    pub population_size: usize,
    /// Generations per epoch (nGen).
    pub generations: usize,
    /// Steps per curriculum (curricLength).
    pub curriculum_length: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    /// Maximum number of levels in one curriculum step.
    pub para_env: usize,
    pub elitism_count: usize,
    pub seeding: Seeding,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 3,
            generations: 2,
            curriculum_length: 2,
            mutation_rate: 0.56,
            crossover_rate: 0.54,
            para_env: 2,
            elitism_count: 1,
            seeding: Seeding::Shift,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.population_size == 0 {
            return fail("evolution.population_size must be at least 1".into());
        }
        if self.generations == 0 {
            return fail("evolution.generations must be at least 1".into());
        }
        if self.curriculum_length == 0 {
            return fail("evolution.curriculum_length must be at least 1".into());
        }
        if self.para_env == 0 {
            return fail("evolution.para_env must be at least 1".into());
        }
        for (name, r) in [
            ("mutation_rate", self.mutation_rate),
            ("crossover_rate", self.crossover_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return fail(format!("evolution.{name} = {r} must be in [0, 1]"));
            }
        }
        if self.elitism_count == 0 {
            return fail("evolution.elitism_count must be at least 1".into());
        }
        if self.population_size > 1 && self.elitism_count >= self.population_size {
            return fail(format!(
                "evolution.elitism_count = {} must be below population_size = {}",
                self.elitism_count, self.population_size
            ));
        }
        Ok(())
    }

    /// Elites actually kept; a population of one is its own elite.
    pub fn effective_elitism(&self) -> usize {
        self.elitism_count.min(self.population_size)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    pub individuals: Vec<Curriculum>,
    pub fitness: Option<Vec<f64>>,
}

impl Population {
    pub fn len(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.individuals.is_empty()
    }
}

const DISTINCT_TRIES: usize = 256;

/// Random individuals, kept distinct from each other (and from the seed)
/// while the curriculum space allows it. If `seed` is given, individual 0
/// is derived from it according to `cfg.seeding`.
pub fn init_population(
    cfg: &EvolutionConfig,
    roster: &[EnvSpec],
    rng: &mut Rng,
    seed: Option<&Curriculum>,
) -> Result<Population> {
    if roster.is_empty() {
        return Err(Error::config("roster is empty"));
    }
    let mut individuals = Vec::with_capacity(cfg.population_size);
    if let Some(seed) = seed {
        seed.validate(cfg.curriculum_length, roster, cfg.para_env)?;
        individuals.push(match cfg.seeding {
            Seeding::Verbatim => seed.clone(),
            Seeding::Shift => {
                let mut steps = seed.steps()[1..].to_vec();
                steps.push(CurriculumStep::random(roster, cfg.para_env, rng));
                Curriculum::new(steps)?
            }
        });
    }
    let mut seen: HashSet<Curriculum> = individuals.iter().cloned().collect();
    while individuals.len() < cfg.population_size {
        let mut c = Curriculum::random(cfg.curriculum_length, roster, cfg.para_env, rng);
        for _ in 0..DISTINCT_TRIES {
            if !seen.contains(&c) {
                break;
            }
            c = Curriculum::random(cfg.curriculum_length, roster, cfg.para_env, rng);
        }
        seen.insert(c.clone());
        individuals.push(c);
    }
    Ok(Population {
        individuals,
        fitness: None,
    })
}

/// Index order by descending fitness, lowest index first among equals.
pub fn ranking(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));
    order
}

/// Better of two uniformly drawn individuals.
pub fn tournament(fitness: &[f64], rng: &mut Rng) -> usize {
    let a = rng.gen_range(0..fitness.len());
    let b = rng.gen_range(0..fitness.len());
    if fitness[b] > fitness[a] || (fitness[b] == fitness[a] && b < a) {
        b
    } else {
        a
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    /// Survivors copied unchanged, best first.
    pub elites: Vec<usize>,
    /// Parent pairs for the remaining slots.
    pub parents: Vec<(usize, usize)>,
}

pub fn select(cfg: &EvolutionConfig, fitness: &[f64], rng: &mut Rng) -> Result<Selection> {
    if fitness.len() != cfg.population_size {
        return Err(Error::contract(format!(
            "{} fitness values for a population of {}",
            fitness.len(),
            cfg.population_size
        )));
    }
    let elites: Vec<usize> = ranking(fitness)
        .into_iter()
        .take(cfg.effective_elitism())
        .collect();
    let pairs = (cfg.population_size - elites.len()).div_ceil(2);
    let parents = (0..pairs)
        .map(|_| (tournament(fitness, rng), tournament(fitness, rng)))
        .collect();
    Ok(Selection { elites, parents })
}

/// With probability `rate`, swap each step index between the two parents
/// with probability one half; otherwise return the parents unchanged.
pub fn crossover(
    a: &Curriculum,
    b: &Curriculum,
    rate: f64,
    rng: &mut Rng,
) -> Result<(Curriculum, Curriculum)> {
    if a.len() != b.len() {
        return Err(Error::contract(format!(
            "crossover of curricula with {} and {} steps",
            a.len(),
            b.len()
        )));
    }
    let (mut x, mut y) = (a.clone(), b.clone());
    if rng.gen_bool(rate) {
        for j in 0..a.len() {
            if rng.gen_bool(0.5) {
                std::mem::swap(&mut x.steps_mut()[j], &mut y.steps_mut()[j]);
            }
        }
    }
    Ok((x, y))
}

/// Resample each step independently with probability `rate`.
pub fn mutate(
    c: &Curriculum,
    rate: f64,
    roster: &[EnvSpec],
    para_env: usize,
    rng: &mut Rng,
) -> Curriculum {
    let mut out = c.clone();
    for step in out.steps_mut() {
        if rng.gen_bool(rate) {
            *step = CurriculumStep::random(roster, para_env, rng);
        }
    }
    out
}

/// Elites, then crossed-over and mutated children of tournament winners.
pub fn next_generation(
    cfg: &EvolutionConfig,
    population: &[Curriculum],
    fitness: &[f64],
    roster: &[EnvSpec],
    rng: &mut Rng,
) -> Result<Vec<Curriculum>> {
    let sel = select(cfg, fitness, rng)?;
    let mut next: Vec<Curriculum> = sel.elites.iter().map(|&i| population[i].clone()).collect();
    for (pa, pb) in sel.parents {
        let (x, y) = crossover(&population[pa], &population[pb], cfg.crossover_rate, rng)?;
        for child in [x, y] {
            if next.len() < cfg.population_size {
                next.push(mutate(&child, cfg.mutation_rate, roster, cfg.para_env, rng));
            }
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn roster() -> Vec<EnvSpec> {
        [6, 8, 10, 12].map(EnvSpec::door_key).to_vec()
    }

    fn cfg(pop: usize) -> EvolutionConfig {
        EvolutionConfig {
            population_size: pop,
            curriculum_length: 3,
            ..Default::default()
        }
    }

    #[test]
    fn init_counts_and_shift() {
        let r = roster();
        let mut g = rng::seeded(0);
        let p = init_population(&cfg(3), &r, &mut g, None).unwrap();
        assert_eq!(p.len(), 3);
        let seed: Curriculum = "[(DoorKey-6), (DoorKey-8), (DoorKey-10)]".parse().unwrap();
        let p = init_population(&cfg(3), &r, &mut g, Some(&seed)).unwrap();
        assert_eq!(&p.individuals[0].steps()[..2], &seed.steps()[1..]);
        let verbatim = EvolutionConfig {
            seeding: Seeding::Verbatim,
            ..cfg(3)
        };
        let p = init_population(&verbatim, &r, &mut g, Some(&seed)).unwrap();
        assert_eq!(p.individuals[0], seed);
    }

    #[test]
    fn small_spaces_are_covered_exactly() {
        let r = &roster()[..3];
        let c = EvolutionConfig {
            population_size: 3,
            curriculum_length: 1,
            para_env: 1,
            ..Default::default()
        };
        for s in 0..50 {
            let p = init_population(&c, r, &mut rng::seeded(s), None).unwrap();
            let set: HashSet<_> = p.individuals.iter().map(|c| c.first().envs()[0]).collect();
            assert_eq!(set.len(), 3);
        }
    }

    #[test]
    fn elitism_keeps_the_best() {
        let c = EvolutionConfig {
            population_size: 2,
            ..cfg(2)
        };
        let sel = select(&c, &[0.1, 0.9], &mut rng::seeded(0)).unwrap();
        assert_eq!(sel.elites, vec![1]);
        assert_eq!(sel.parents.len(), 1);
        assert!(select(&c, &[0.1], &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn rate_zero_operators_are_identity() {
        let r = roster();
        let mut g = rng::seeded(3);
        let a = Curriculum::random(3, &r, 2, &mut g);
        let b = Curriculum::random(3, &r, 2, &mut g);
        assert_eq!(
            crossover(&a, &b, 0.0, &mut g).unwrap(),
            (a.clone(), b.clone())
        );
        assert_eq!(
            crossover(&a, &a, 1.0, &mut g).unwrap(),
            (a.clone(), a.clone())
        );
        assert_eq!(mutate(&a, 0.0, &r, 2, &mut g), a);
        let short = Curriculum::random(2, &r, 2, &mut g);
        assert!(crossover(&a, &short, 1.0, &mut g).is_err());
    }

    #[test]
    fn validation() {
        assert!(EvolutionConfig::default().validate().is_ok());
        let one = EvolutionConfig {
            population_size: 1,
            ..Default::default()
        };
        assert!(one.validate().is_ok());
        assert_eq!(one.effective_elitism(), 1);
        let bad = EvolutionConfig {
            elitism_count: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EvolutionConfig {
            mutation_rate: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}

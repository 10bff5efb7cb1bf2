//! Seeded random models.
//!
//! The generator uses the xorshift PRNG of `rand_xorshift` (Marsaglia's
//! 128-bit xorshift, seeded with `XorShiftRng::seed_from_u64`). Every draw
//! is `next_u64() % span`. Nodes are produced breadth first; for each node
//! the draws are, in order: mid price, spread coin, half-spread (only when
//! the coin says so), fixed cost, and finally the number of children (only
//! below the horizon). Values lie on the grid `k / denominator`.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};
use rand_core::{RngCore, SeedableRng};
use rand_xorshift::XorShiftRng;

use crate::market::CombinedCostModel;
use crate::rational::{rat, Rational};
use crate::tree::{AdaptedProcess, EventTree, NodeSpec};

pub const MAX_DENOMINATOR: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeneratorError {
    #[error("bad generator config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub depth: usize,
    /// Inclusive range of the number of children per node.
    pub branching: (usize, usize),
    /// Inclusive range of mid prices.
    pub price_range: (Rational, Rational),
    /// Probability that a node gets a bid/ask spread.
    pub spread_probability: Rational,
    /// Inclusive range of half-spreads.
    pub spread_range: (Rational, Rational),
    /// Inclusive range of fixed costs.
    pub fixed_range: (Rational, Rational),
    /// Grid denominator, at most [`MAX_DENOMINATOR`].
    pub denominator: u32,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            depth: 2,
            branching: (2, 3),
            price_range: (rat(1, 1), rat(3, 1)),
            spread_probability: rat(1, 2),
            spread_range: (rat(1, 4), rat(1, 2)),
            fixed_range: (rat(1, 4), rat(2, 1)),
            denominator: 4,
        }
    }
}

impl GeneratorConfig {
    fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: &str| Err(GeneratorError::BadConfig(m.to_string()));
        if self.denominator == 0 || self.denominator > MAX_DENOMINATOR {
            return bad("denominator must lie in 1..=64");
        }
        if self.branching.0 == 0 || self.branching.0 > self.branching.1 {
            return bad("branching range must be nonempty and start at 1 or more");
        }
        if self.spread_probability.is_negative() || self.spread_probability > rat(1, 1) {
            return bad("spread probability must lie in [0, 1]");
        }
        if self.spread_probability.denom().to_u64().is_none() {
            return bad("spread probability denominator too large");
        }
        for (name, (lo, hi)) in [
            ("price", &self.price_range),
            ("spread", &self.spread_range),
            ("fixed", &self.fixed_range),
        ] {
            if grid_points(lo, hi, self.denominator).is_none() {
                return bad(&format!("{name} range has no point on the grid"));
            }
        }
        if !self.fixed_range.0.is_positive() {
            return bad("fixed costs must be strictly positive");
        }
        if self.spread_range.0.is_negative() {
            return bad("half-spreads must be nonnegative");
        }
        let max_half = if self.spread_probability.is_zero() {
            Rational::zero()
        } else {
            self.spread_range.1.clone()
        };
        if self.price_range.0 <= max_half {
            return bad("smallest mid price must exceed the largest half-spread");
        }
        Ok(())
    }
}

/// First grid index and number of grid points `k/den` in `[lo, hi]`.
fn grid_points(lo: &Rational, hi: &Rational, den: u32) -> Option<(BigInt, u64)> {
    let d = Rational::from_integer(BigInt::from(den));
    let first = (lo * &d).ceil().to_integer();
    let last = (hi * &d).floor().to_integer();
    if last < first {
        return None;
    }
    let count = (&last - &first + 1u32).to_u64()?;
    Some((first, count))
}

struct Draws {
    rng: XorShiftRng,
    den: u32,
}

impl Draws {
    fn below(&mut self, span: u64) -> u64 {
        self.rng.next_u64() % span
    }

    fn in_range(&mut self, range: &(Rational, Rational)) -> Rational {
        let (first, count) = grid_points(&range.0, &range.1, self.den).expect("validated");
        let k = first + self.below(count);
        Rational::new(k, BigInt::from(self.den))
    }

    fn coin(&mut self, p: &Rational) -> bool {
        let den = p.denom().to_u64().expect("validated");
        let num = p.numer().to_u64().expect("validated");
        self.below(den) < num
    }
}

pub fn generate_model(cfg: &GeneratorConfig) -> Result<CombinedCostModel, GeneratorError> {
    cfg.validate()?;
    let mut draws = Draws {
        rng: XorShiftRng::seed_from_u64(cfg.seed),
        den: cfg.denominator,
    };
    let mut specs = vec![NodeSpec::new("r", 0, None)];
    let (mut ask, mut bid, mut fixed) = (Vec::new(), Vec::new(), Vec::new());
    let mut next = 0;
    while next < specs.len() {
        let mid = draws.in_range(&cfg.price_range);
        let half = if draws.coin(&cfg.spread_probability) {
            draws.in_range(&cfg.spread_range)
        } else {
            Rational::zero()
        };
        ask.push(&mid + &half);
        bid.push(&mid - &half);
        fixed.push(draws.in_range(&cfg.fixed_range));
        let spec = specs[next].clone();
        if spec.time < cfg.depth {
            let span = (cfg.branching.1 - cfg.branching.0 + 1) as u64;
            let k = cfg.branching.0 + draws.below(span) as usize;
            for i in 0..k {
                specs.push(NodeSpec::new(
                    format!("{}.{i}", spec.id),
                    spec.time + 1,
                    Some(&spec.id),
                ));
            }
        }
        next += 1;
    }
    let tree = EventTree::build(cfg.depth, &specs).expect("generated tree is valid");
    let process = |v: Vec<Rational>| AdaptedProcess::new(&tree, v).expect("one value per node");
    let (ask, bid, fixed) = (process(ask), process(bid), process(fixed));
    Ok(CombinedCostModel::new(tree, ask, bid, fixed).expect("generated model is valid"))
}

/// Deterministic mixed corpus: horizons 1 and 2, branching 2..3, fixed-cost
/// and spread regimes in rotation. Models with more than `max_nodes` nodes
/// are skipped, so seeds are consumed until `count` models are produced.
pub fn corpus(
    base_seed: u64,
    count: usize,
    max_nodes: usize,
) -> Vec<(GeneratorConfig, CombinedCostModel)> {
    let regimes = [rat(0, 1), rat(1, 2), rat(1, 1)];
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let cfg = GeneratorConfig {
            seed: base_seed.wrapping_add(i),
            depth: 1 + (i % 2) as usize,
            spread_probability: regimes[(i / 2 % 3) as usize].clone(),
            ..GeneratorConfig::default()
        };
        i += 1;
        let model = generate_model(&cfg).expect("corpus configs are valid");
        if model.tree().len() <= max_nodes {
            out.push((cfg, model));
        }
    }
    out
}

/// Fixed-cost corpus (ask equal to bid everywhere).
pub fn fixed_cost_corpus(base_seed: u64, count: usize, max_nodes: usize) -> Vec<CombinedCostModel> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let cfg = GeneratorConfig {
            seed: base_seed.wrapping_add(i),
            depth: 1 + (i % 2) as usize,
            spread_probability: rat(0, 1),
            ..GeneratorConfig::default()
        };
        i += 1;
        let model = generate_model(&cfg).expect("corpus configs are valid");
        if model.tree().len() <= max_nodes {
            out.push(model);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::serialize_model;

    #[test]
    fn deterministic() {
        let cfg = GeneratorConfig {
            seed: 42,
            ..GeneratorConfig::default()
        };
        assert_eq!(
            serialize_model(&generate_model(&cfg).unwrap()),
            serialize_model(&generate_model(&cfg).unwrap())
        );
        let other = GeneratorConfig {
            seed: 43,
            ..cfg.clone()
        };
        assert_ne!(
            generate_model(&cfg).unwrap(),
            generate_model(&other).unwrap()
        );
    }

    #[test]
    fn zero_spread_probability_gives_fixed_cost_model() {
        for seed in 0..20 {
            let cfg = GeneratorConfig {
                seed,
                spread_probability: rat(0, 1),
                ..GeneratorConfig::default()
            };
            assert!(generate_model(&cfg).unwrap().is_fixed_cost());
        }
    }

    #[test]
    fn two_hundred_models_satisfy_invariants() {
        for seed in 0..200 {
            let cfg = GeneratorConfig {
                seed,
                ..GeneratorConfig::default()
            };
            let m = generate_model(&cfg).unwrap();
            let tree = m.tree();
            assert_eq!(tree.horizon(), 2);
            for n in tree.node_ids() {
                assert!(m.bid()[n].is_positive() && m.bid()[n] <= m.ask()[n]);
                assert!(m.fixed()[n].is_positive());
                for v in [&m.ask()[n], &m.bid()[n], &m.fixed()[n]] {
                    assert!(v.denom() <= &BigInt::from(MAX_DENOMINATOR));
                }
                if !tree.is_terminal(n) {
                    assert!((2..=3).contains(&tree.children(n).len()));
                }
            }
            crate::market::CombinedCostModel::new(
                tree.clone(),
                m.ask().clone(),
                m.bid().clone(),
                m.fixed().clone(),
            )
            .unwrap();
        }
    }

    #[test]
    fn bad_configs() {
        let base = GeneratorConfig::default();
        for cfg in [
            GeneratorConfig {
                denominator: 65,
                ..base.clone()
            },
            GeneratorConfig {
                branching: (3, 2),
                ..base.clone()
            },
            GeneratorConfig {
                fixed_range: (rat(0, 1), rat(1, 1)),
                ..base.clone()
            },
            GeneratorConfig {
                price_range: (rat(2, 1), rat(1, 1)),
                ..base.clone()
            },
            GeneratorConfig {
                spread_probability: rat(3, 2),
                ..base.clone()
            },
            GeneratorConfig {
                spread_range: (rat(1, 4), rat(5, 1)),
                ..base.clone()
            },
        ] {
            assert!(
                matches!(generate_model(&cfg), Err(GeneratorError::BadConfig(_))),
                "{cfg:?}"
            );
        }
    }

    #[test]
    fn corpus_respects_node_limit_and_mixes_regimes() {
        let models = corpus(7, 30, 12);
        assert_eq!(models.len(), 30);
        assert!(models.iter().all(|(_, m)| m.tree().len() <= 12));
        assert!(models.iter().any(|(_, m)| m.is_fixed_cost()));
        assert!(models.iter().any(|(_, m)| !m.is_fixed_cost()));
        assert!(models.iter().any(|(_, m)| m.tree().horizon() == 1));
        assert!(models.iter().any(|(_, m)| m.tree().horizon() == 2));
    }
}

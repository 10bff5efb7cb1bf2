//! Expected liquidation values under terminal measures, and the one-step
//! falsifier showing that an arbitrage-free model may admit no fully
//! supported measure that makes every zero-endowment strategy's expected
//! liquidation value non-positive.

use num_traits::{Signed, Zero};

use crate::market::{
    is_self_financing, liquidation_value, CombinedCostModel, ModelError, Portfolio, Strategy,
};
use crate::rational::{int, one, Rational};
use crate::tree::{AdaptedProcess, EventTree, NodeId, NodeSpec};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EspmError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("strategy is not self-financing from the zero portfolio")]
    NotSelfFinancing,
    #[error("terminal measure is invalid: {0}")]
    BadMeasure(String),
    #[error("model has horizon {0}, a single-step model is required")]
    NotSingleStep(usize),
    #[error("terminal measure gives zero weight to node {0}")]
    MeasureNotEquivalent(NodeId),
}

/// Probability weights on the terminal nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TerminalMeasure {
    pub weights: Vec<(NodeId, Rational)>,
}

impl TerminalMeasure {
    pub fn new(weights: Vec<(NodeId, Rational)>) -> Self {
        Self { weights }
    }

    /// Weights listed in the tree's terminal order.
    pub fn from_weights(tree: &EventTree, weights: &[Rational]) -> Self {
        Self {
            weights: tree
                .terminals()
                .iter()
                .copied()
                .zip(weights.iter().cloned())
                .collect(),
        }
    }

    pub fn is_equivalent(&self) -> bool {
        self.weights.iter().all(|(_, w)| w.is_positive())
    }

    fn validate(&self, tree: &EventTree) -> Result<(), EspmError> {
        let terminals = tree.terminals();
        if self.weights.len() != terminals.len()
            || !terminals
                .iter()
                .all(|t| self.weights.iter().any(|(n, _)| n == t))
        {
            return Err(EspmError::BadMeasure(
                "weights must cover each terminal node exactly once".into(),
            ));
        }
        if self.weights.iter().any(|(_, w)| w.is_negative()) {
            return Err(EspmError::BadMeasure("negative weight".into()));
        }
        if self.weights.iter().map(|(_, w)| w).sum::<Rational>() != one() {
            return Err(EspmError::BadMeasure("weights do not sum to one".into()));
        }
        Ok(())
    }
}

/// `E_q[L_T(final holding)]` for a self-financing strategy started from zero.
pub fn expected_liquidation(
    model: &CombinedCostModel,
    q: &TerminalMeasure,
    s: &Strategy,
) -> Result<Rational, EspmError> {
    q.validate(model.tree())?;
    if !s.initial.is_zero() || !is_self_financing(model, s)?.ok {
        return Err(EspmError::NotSelfFinancing);
    }
    let mut total = Rational::zero();
    for (n, w) in &q.weights {
        total += w * liquidation_value(model, *n, &s.post_trade[n.0])?;
    }
    Ok(total)
}

/// Single-step strategy trading `shares` (positive to buy, negative to
/// sell) at the root, paying the fixed cost, then holding.
pub fn root_trade_and_hold(model: &CombinedCostModel, shares: &Rational) -> Strategy {
    let tree = model.tree();
    let root = tree.root();
    let fee = &model.fixed()[root];
    let cash = if shares.is_positive() {
        -(&model.ask()[root] * shares) - fee
    } else {
        -(&model.bid()[root] * shares) - fee
    };
    let held = Portfolio::new(cash, shares.clone());
    Strategy {
        initial: Portfolio::zero(),
        post_trade: vec![held; tree.len()],
    }
}

/// Powers of two from 1 up to and including the first one at or above
/// `2 * max(1/weight) + 4`.
pub fn falsification_grid(q: &TerminalMeasure) -> Vec<Rational> {
    let inverse_max = q
        .weights
        .iter()
        .filter(|(_, w)| w.is_positive())
        .map(|(_, w)| w.recip())
        .max()
        .unwrap_or_else(one);
    let cap = int(2) * inverse_max + int(4);
    let mut grid = vec![one()];
    while grid.last().expect("non-empty") < &cap {
        let next = grid.last().expect("non-empty") * int(2);
        grid.push(next);
    }
    grid
}

/// Searches root buy-and-hold and sell-and-hold strategies over
/// [`falsification_grid`] for one with strictly positive expected
/// liquidation value under `q`.
pub fn espm_falsify(
    model: &CombinedCostModel,
    q: &TerminalMeasure,
) -> Result<Option<Strategy>, EspmError> {
    let tree = model.tree();
    if tree.horizon() != 1 {
        return Err(EspmError::NotSingleStep(tree.horizon()));
    }
    q.validate(tree)?;
    if let Some((n, _)) = q.weights.iter().find(|(_, w)| !w.is_positive()) {
        return Err(EspmError::MeasureNotEquivalent(*n));
    }
    for y in falsification_grid(q) {
        for shares in [y.clone(), -y] {
            let s = root_trade_and_hold(model, &shares);
            if expected_liquidation(model, q, &s)?.is_positive() {
                return Ok(Some(s));
            }
        }
    }
    Ok(None)
}

/// One-step fixed-cost model: price 1 at the root, 2 (node `u`) or 1
/// (node `d`) at time 1, fixed cost 1 everywhere.
pub fn example1_model() -> CombinedCostModel {
    let tree = EventTree::build(
        1,
        &[
            NodeSpec::new("root", 0, None),
            NodeSpec::new("u", 1, Some("root")),
            NodeSpec::new("d", 1, Some("root")),
        ],
    )
    .expect("valid tree");
    let price = AdaptedProcess::new(&tree, vec![int(1), int(2), int(1)]).expect("three nodes");
    let fixed = AdaptedProcess::constant(&tree, int(1));
    CombinedCostModel::fixed_cost(tree, price, fixed).expect("valid model")
}

/// Measure on `example1_model` with weight `q_up` on `u`.
pub fn example1_measure(q_up: &Rational) -> TerminalMeasure {
    let model = example1_model();
    TerminalMeasure::from_weights(model.tree(), &[q_up.clone(), one() - q_up])
}

//! Combined-cost market model: bid/ask prices plus a fixed charge per trade.
//!
//! This module is the ground-truth verifier: solvency, liquidation values,
//! the self-financing condition and the arbitrage predicate are evaluated
//! literally, with no reference to the pricing theory in [`crate::ftap`].

use num_traits::{Signed, Zero};

use crate::rational::{negative_part, positive_part, zero, Rational};
use crate::tree::{AdaptedProcess, EventTree, NodeId, TreeError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("node {node:?}: {reason}")]
    InvariantViolation { node: String, reason: String },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("strategy has {got} post-trade portfolios, tree has {expected} nodes")]
    IncompleteStrategy { expected: usize, got: usize },
    #[error("strategy is not self-financing")]
    NotSelfFinancing,
    #[error("strategy does not start from the zero portfolio")]
    NonZeroEndowment,
}

/// Ask `A`, bid `B` and fixed cost `C` on an event tree, with
/// `0 < B <= A` and `0 < C` at every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CombinedCostModel {
    tree: EventTree,
    ask: AdaptedProcess,
    bid: AdaptedProcess,
    fixed: AdaptedProcess,
}

impl CombinedCostModel {
    pub fn new(
        tree: EventTree,
        ask: AdaptedProcess,
        bid: AdaptedProcess,
        fixed: AdaptedProcess,
    ) -> Result<Self, ModelError> {
        for process in [&ask, &bid, &fixed] {
            if process.len() != tree.len() {
                return Err(TreeError::LengthMismatch {
                    expected: tree.len(),
                    got: process.len(),
                }
                .into());
            }
        }
        for n in tree.node_ids() {
            let fail = |reason: &str| ModelError::InvariantViolation {
                node: tree.label(n).to_string(),
                reason: reason.to_string(),
            };
            if !bid[n].is_positive() {
                return Err(fail("bid must be strictly positive"));
            }
            if bid[n] > ask[n] {
                return Err(fail("bid exceeds ask"));
            }
            if !fixed[n].is_positive() {
                return Err(fail("fixed cost must be strictly positive"));
            }
        }
        Ok(Self {
            tree,
            ask,
            bid,
            fixed,
        })
    }

    /// Fixed-cost model: ask and bid both equal to `price`.
    pub fn fixed_cost(
        tree: EventTree,
        price: AdaptedProcess,
        fixed: AdaptedProcess,
    ) -> Result<Self, ModelError> {
        Self::new(tree, price.clone(), price, fixed)
    }

    pub fn tree(&self) -> &EventTree {
        &self.tree
    }

    pub fn ask(&self) -> &AdaptedProcess {
        &self.ask
    }

    pub fn bid(&self) -> &AdaptedProcess {
        &self.bid
    }

    pub fn fixed(&self) -> &AdaptedProcess {
        &self.fixed
    }

    pub fn is_fixed_cost(&self) -> bool {
        self.ask == self.bid
    }

    /// Same tree and prices, different fixed costs.
    pub fn with_fixed(&self, fixed: AdaptedProcess) -> Result<Self, ModelError> {
        Self::new(self.tree.clone(), self.ask.clone(), self.bid.clone(), fixed)
    }

    /// Multiplies ask, bid and fixed cost by `k > 0`.
    pub fn scaled(&self, k: &Rational) -> Result<Self, ModelError> {
        Self::new(
            self.tree.clone(),
            self.ask.map(|v| v * k),
            self.bid.map(|v| v * k),
            self.fixed.map(|v| v * k),
        )
    }

    fn check(&self, node: NodeId) -> Result<(), ModelError> {
        if self.tree.contains(node) {
            Ok(())
        } else {
            Err(ModelError::UnknownNode(node))
        }
    }
}

/// Cash and shares.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Portfolio {
    pub cash: Rational,
    pub shares: Rational,
}

impl Portfolio {
    pub fn new(cash: Rational, shares: Rational) -> Self {
        Self { cash, shares }
    }

    pub fn zero() -> Self {
        Self::new(zero(), zero())
    }

    pub fn is_zero(&self) -> bool {
        self.cash.is_zero() && self.shares.is_zero()
    }

    pub fn is_nonnegative(&self) -> bool {
        !self.cash.is_negative() && !self.shares.is_negative()
    }

    /// `self - other`, componentwise.
    pub fn minus(&self, other: &Portfolio) -> Portfolio {
        Portfolio::new(&self.cash - &other.cash, &self.shares - &other.shares)
    }
}

/// A predictable trading strategy. `post_trade[n]` is the portfolio held
/// after rebalancing at node `n`, i.e. the holding carried into the next
/// period; at terminal nodes it is the final holding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Strategy {
    pub initial: Portfolio,
    pub post_trade: Vec<Portfolio>,
}

impl Strategy {
    /// Strategy that never trades.
    pub fn idle(tree: &EventTree) -> Self {
        Self {
            initial: Portfolio::zero(),
            post_trade: vec![Portfolio::zero(); tree.len()],
        }
    }

    /// Holding entering node `n`: the parent's post-trade portfolio, or the
    /// initial endowment at the root.
    pub fn pre_trade<'a>(&'a self, tree: &EventTree, n: NodeId) -> &'a Portfolio {
        match tree.parent(n) {
            Some(p) => &self.post_trade[p.0],
            None => &self.initial,
        }
    }

    pub fn terminal<'a>(
        &'a self,
        tree: &'a EventTree,
    ) -> impl Iterator<Item = (NodeId, &'a Portfolio)> + 'a {
        tree.terminals()
            .iter()
            .map(move |&n| (n, &self.post_trade[n.0]))
    }

    fn check_complete(&self, tree: &EventTree) -> Result<(), ModelError> {
        if self.post_trade.len() != tree.len() {
            return Err(ModelError::IncompleteStrategy {
                expected: tree.len(),
                got: self.post_trade.len(),
            });
        }
        Ok(())
    }
}

/// Cash left after closing the stock position, where positions with
/// `y` in the closed interval `[0, C/B]` are kept rather than sold.
pub fn liquidation_value(
    model: &CombinedCostModel,
    node: NodeId,
    p: &Portfolio,
) -> Result<Rational, ModelError> {
    model.check(node)?;
    let (a, b, c) = (&model.ask[node], &model.bid[node], &model.fixed[node]);
    let y = &p.shares;
    let keep = !y.is_negative() && y <= &(c / b);
    if keep {
        Ok(p.cash.clone())
    } else {
        Ok(&p.cash + b * positive_part(y) - a * negative_part(y) - c)
    }
}

/// Solvency: liquidating leaves non-negative cash after the fixed cost, or
/// both positions are already non-negative.
pub fn is_solvent(
    model: &CombinedCostModel,
    node: NodeId,
    p: &Portfolio,
) -> Result<bool, ModelError> {
    model.check(node)?;
    let (a, b, c) = (&model.ask[node], &model.bid[node], &model.fixed[node]);
    let y = &p.shares;
    let after_trade = &p.cash + b * positive_part(y) - a * negative_part(y) - c;
    Ok(!after_trade.is_negative() || p.is_nonnegative())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfFinancingReport {
    pub ok: bool,
    /// Nodes where the discarded portfolio (pre-trade minus post-trade) is
    /// not solvent, with that portfolio.
    pub violations: Vec<(NodeId, Portfolio)>,
}

/// Every rebalancing must discard a solvent portfolio.
pub fn is_self_financing(
    model: &CombinedCostModel,
    s: &Strategy,
) -> Result<SelfFinancingReport, ModelError> {
    let tree = model.tree();
    s.check_complete(tree)?;
    let mut violations = Vec::new();
    for n in tree.node_ids() {
        let delta = s.pre_trade(tree, n).minus(&s.post_trade[n.0]);
        if !is_solvent(model, n, &delta)? {
            violations.push((n, delta));
        }
    }
    Ok(SelfFinancingReport {
        ok: violations.is_empty(),
        violations,
    })
}

/// Self-financing from zero, non-negative final holdings everywhere and
/// strictly positive final cash somewhere.
pub fn is_arbitrage(model: &CombinedCostModel, s: &Strategy) -> Result<bool, ModelError> {
    let tree = model.tree();
    if !is_self_financing(model, s)?.ok || !s.initial.is_zero() {
        return Ok(false);
    }
    let mut any_positive = false;
    for (_, p) in s.terminal(tree) {
        if !p.is_nonnegative() {
            return Ok(false);
        }
        any_positive |= p.cash.is_positive();
    }
    Ok(any_positive)
}

/// Minimum over terminal nodes of the liquidation value of the final
/// holding, for a self-financing strategy started from zero.
pub fn na_liquidation_characterisation(
    model: &CombinedCostModel,
    s: &Strategy,
) -> Result<Rational, ModelError> {
    if !is_self_financing(model, s)?.ok {
        return Err(ModelError::NotSelfFinancing);
    }
    if !s.initial.is_zero() {
        return Err(ModelError::NonZeroEndowment);
    }
    let tree = model.tree();
    let mut best: Option<Rational> = None;
    for (n, p) in s.terminal(tree) {
        let v = liquidation_value(model, n, p)?;
        best = Some(match best {
            Some(b) if b <= v => b,
            _ => v,
        });
    }
    Ok(best.expect("a tree has at least one terminal node"))
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use crate::espm::example1_model;
    use crate::rational::{int, rat};

    fn pf(x: Rational, y: Rational) -> Portfolio {
        Portfolio::new(x, y)
    }

    #[test]
    fn liquidation_examples() {
        let m = wide_spread();
        let r = m.tree().root();
        assert_eq!(
            liquidation_value(&m, r, &pf(int(1), int(0))).unwrap(),
            int(1)
        );
        assert_eq!(
            liquidation_value(&m, r, &pf(int(0), int(3))).unwrap(),
            rat(1, 2)
        );
        assert_eq!(
            liquidation_value(&m, r, &pf(int(0), int(-1))).unwrap(),
            rat(-5, 2)
        );
        // y = C/B sits inside the closed keep-interval.
        assert_eq!(
            liquidation_value(&m, r, &pf(int(0), int(2))).unwrap(),
            int(0)
        );
        assert_eq!(
            liquidation_value(&m, NodeId(7), &pf(int(0), int(0))),
            Err(ModelError::UnknownNode(NodeId(7)))
        );
    }

    #[test]
    fn solvency_examples() {
        let m = wide_spread();
        let r = m.tree().root();
        assert!(is_solvent(&m, r, &pf(int(0), int(0))).unwrap());
        assert!(is_solvent(&m, r, &pf(int(0), int(2))).unwrap());
        assert!(!is_solvent(&m, r, &pf(rat(-1, 100), int(0))).unwrap());
        assert!(is_solvent(&m, r, &pf(rat(-49, 100), int(3))).unwrap());
    }

    #[test]
    fn model_invariants_enforced() {
        let tree = crate::tree::fixtures::binary(0);
        let one = AdaptedProcess::constant(&tree, int(1));
        let err = CombinedCostModel::new(
            tree.clone(),
            one.clone(),
            AdaptedProcess::constant(&tree, rat(3, 2)),
            one.clone(),
        );
        assert!(matches!(err, Err(ModelError::InvariantViolation { .. })));
        let err = CombinedCostModel::new(
            tree.clone(),
            one.clone(),
            one.clone(),
            AdaptedProcess::constant(&tree, int(0)),
        );
        assert!(matches!(err, Err(ModelError::InvariantViolation { .. })));
    }

    #[test]
    fn self_financing_examples() {
        let m = example1_model();
        assert!(is_self_financing(&m, &Strategy::idle(m.tree())).unwrap().ok);

        let paid = buy_and_hold(&m, int(2), true);
        assert!(is_self_financing(&m, &paid).unwrap().ok);

        let unpaid = buy_and_hold(&m, int(2), false);
        let report = is_self_financing(&m, &unpaid).unwrap();
        assert!(!report.ok);
        assert_eq!(
            report.violations,
            vec![(m.tree().root(), pf(int(2), int(-2)))]
        );

        let short = Strategy {
            initial: Portfolio::zero(),
            post_trade: vec![Portfolio::zero(); 2],
        };
        assert!(matches!(
            is_self_financing(&m, &short),
            Err(ModelError::IncompleteStrategy { .. })
        ));
    }

    #[test]
    fn arbitrage_predicate_examples() {
        let m = example1_model();
        assert!(!is_arbitrage(&m, &Strategy::idle(m.tree())).unwrap());
        assert!(!is_arbitrage(&m, &buy_and_hold(&m, int(2), true)).unwrap());
    }

    #[test]
    fn liquidation_characterisation_examples() {
        let m = example1_model();
        assert_eq!(
            na_liquidation_characterisation(&m, &Strategy::idle(m.tree())).unwrap(),
            int(0)
        );
        assert_eq!(
            na_liquidation_characterisation(&m, &buy_and_hold(&m, int(5), true)).unwrap(),
            int(-2)
        );
        assert_eq!(
            na_liquidation_characterisation(&m, &buy_and_hold(&m, int(5), false)),
            Err(ModelError::NotSelfFinancing)
        );
    }
}

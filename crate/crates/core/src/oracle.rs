//! Exhaustive arbitrage search that does not rely on the pricing theory.
//!
//! The solvency set is the union of three polyhedra in the trade
//! `(dx, dy) = pre-trade - post-trade`:
//!
//! * `Throwaway`: `dx >= 0, dy >= 0`
//! * `SellSide`:  `dy >= 0, dx + B dy >= C`
//! * `BuySide`:   `dy <= 0, dx + A dy >= C`
//!
//! Fixing one region per node (a [`TradePattern`]) turns the search for an
//! arbitrage into a linear program: maximize total terminal cash subject to
//! the region constraints and non-negative final holdings. An arbitrage
//! exists iff some pattern's program is unbounded or has a positive optimum.
//!
//! Two enumerations are provided. [`Enumeration::Full`] solves [`build_lp`]
//! for every pattern. [`Enumeration::Reduced`] (the default) skips patterns
//! that are dominated by others:
//!
//! * a throwaway trade can be replaced by no trade, passing the surplus on
//!   to descendants, because the solvency set is closed under adding
//!   non-negative portfolios;
//! * at terminal nodes sharing a parent, the best final trade depends only
//!   on where the parent's share position `y` sits relative to `0` and each
//!   child's `C/B`: buy back everything if `y < 0`, otherwise sell out at
//!   exactly the children with `C/B <= y`. Only those `k + 2` sibling
//!   assignments are enumerated.
//!
//! The reduced programs use one non-negative trade size per trading node;
//! see [`trade_lp`]. The two enumerations are cross-checked in the tests.

use num_traits::Signed;
use rayon::prelude::*;

use crate::ftap::{round_trip_strategy, ViolationCase};
use crate::lp::{solve_lp, Domain, LinearExpr, LinearProgram, LpError, LpResult, Relation};
use crate::market::{is_arbitrage, is_solvent, CombinedCostModel, ModelError, Portfolio, Strategy};
use crate::rational::{int, one, zero, Rational};
use crate::tree::{enumerate_stopping_times, NodeId, TreeError, DEFAULT_MAX_STOP_DEPTH};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("model has {nodes} nodes, oracle limit is {limit}")]
    ModelTooLarge { nodes: usize, limit: usize },
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("oracle produced a strategy that is not an arbitrage: {0}")]
    Unsound(String),
}

/// Linear piece of the solvency set, ordered `Throwaway < SellSide < BuySide`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    Throwaway,
    SellSide,
    BuySide,
}

impl Region {
    pub const ALL: [Region; 3] = [Region::Throwaway, Region::SellSide, Region::BuySide];

    /// Whether the trade `delta = pre - post` lies in this region at `node`.
    pub fn contains(self, model: &CombinedCostModel, node: NodeId, delta: &Portfolio) -> bool {
        let (dx, dy) = (&delta.cash, &delta.shares);
        let c = &model.fixed()[node];
        match self {
            Region::Throwaway => !dx.is_negative() && !dy.is_negative(),
            Region::SellSide => !dy.is_negative() && &(dx + &model.bid()[node] * dy) >= c,
            Region::BuySide => !dy.is_positive() && &(dx + &model.ask()[node] * dy) >= c,
        }
    }
}

/// One region per node, indexed by node id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TradePattern {
    pub regions: Vec<Region>,
}

/// True iff membership in the union of the three regions agrees with
/// [`is_solvent`] for `sample` at `node`.
pub fn region_union_covers(model: &CombinedCostModel, node: NodeId, sample: &Portfolio) -> bool {
    let in_union = Region::ALL.iter().any(|r| r.contains(model, node, sample));
    match is_solvent(model, node, sample) {
        Ok(solvent) => solvent == in_union,
        Err(_) => false,
    }
}

/// Holdings-form program for a pattern: free variables `x[n]`, `y[n]` for
/// the post-trade holding at every node, region constraints on the trade
/// from the parent's holding (from `(0,0)` at the root), non-negative final
/// holdings, objective the sum of final cash.
pub fn build_lp(model: &CombinedCostModel, pattern: &TradePattern) -> LinearProgram {
    let tree = model.tree();
    let mut lp = LinearProgram::new();
    for n in tree.node_ids() {
        lp.add_variable(format!("x[{}]", tree.label(n)), Domain::Free);
        lp.add_variable(format!("y[{}]", tree.label(n)), Domain::Free);
    }
    let x = |n: NodeId| 2 * n.0;
    let y = |n: NodeId| 2 * n.0 + 1;

    for n in tree.node_ids() {
        // delta = pre - post, as expressions over the variables.
        let mut dx = LinearExpr::new().term(x(n), -one());
        let mut dy = LinearExpr::new().term(y(n), -one());
        if let Some(p) = tree.parent(n) {
            dx.add(x(p), one());
            dy.add(y(p), one());
        }
        let combo = |price: &Rational| {
            let mut e = dx.clone();
            for (v, c) in &dy.terms {
                e.add(*v, c * price);
            }
            e
        };
        let c = model.fixed()[n].clone();
        match pattern.regions[n.0] {
            Region::Throwaway => {
                lp.add_constraint(dx.clone(), Relation::Ge, zero());
                lp.add_constraint(dy.clone(), Relation::Ge, zero());
            }
            Region::SellSide => {
                lp.add_constraint(dy.clone(), Relation::Ge, zero());
                lp.add_constraint(combo(&model.bid()[n]), Relation::Ge, c);
            }
            Region::BuySide => {
                lp.add_constraint(dy.clone(), Relation::Le, zero());
                lp.add_constraint(combo(&model.ask()[n]), Relation::Ge, c);
            }
        }
    }
    for &leaf in tree.terminals() {
        lp.add_constraint(LinearExpr::new().term(x(leaf), one()), Relation::Ge, zero());
        lp.add_constraint(LinearExpr::new().term(y(leaf), one()), Relation::Ge, zero());
        lp.objective.add(x(leaf), one());
    }
    lp
}

/// Affine function `constant + expr` of the trade sizes.
#[derive(Debug, Clone, Default)]
struct Affine {
    expr: LinearExpr,
    constant: Rational,
}

/// Trade-size form of a pattern's program, used by the reduced search.
///
/// Each `SellSide` node gets a variable `q >= 0` (shares sold, cash
/// `B q - C` received); each `BuySide` node a variable `q >= 0` (shares
/// bought, cash `A q + C` paid); `Throwaway` nodes do not trade.
pub fn trade_lp(model: &CombinedCostModel, pattern: &TradePattern) -> LinearProgram {
    trade_program(model, pattern).0
}

fn trade_program(
    model: &CombinedCostModel,
    pattern: &TradePattern,
) -> (LinearProgram, Vec<(Affine, Affine)>) {
    let tree = model.tree();
    let mut lp = LinearProgram::new();
    let mut holdings: Vec<(Affine, Affine)> = vec![Default::default(); tree.len()];
    for t in 0..=tree.horizon() {
        for &n in tree.atoms_at(t).expect("t within horizon") {
            let (mut cash, mut shares) = match tree.parent(n) {
                Some(p) => holdings[p.0].clone(),
                None => Default::default(),
            };
            let c = &model.fixed()[n];
            match pattern.regions[n.0] {
                Region::Throwaway => {}
                Region::SellSide => {
                    let q =
                        lp.add_variable(format!("sell[{}]", tree.label(n)), Domain::NonNegative);
                    cash.expr.add(q, model.bid()[n].clone());
                    cash.constant -= c;
                    shares.expr.add(q, -one());
                }
                Region::BuySide => {
                    let q = lp.add_variable(format!("buy[{}]", tree.label(n)), Domain::NonNegative);
                    cash.expr.add(q, -model.ask()[n].clone());
                    cash.constant -= c;
                    shares.expr.add(q, one());
                }
            }
            holdings[n.0] = (cash, shares);
        }
    }
    for &leaf in tree.terminals() {
        let (cash, shares) = &holdings[leaf.0];
        lp.add_constraint(cash.expr.clone(), Relation::Ge, -cash.constant.clone());
        lp.add_constraint(shares.expr.clone(), Relation::Ge, -shares.constant.clone());
        for (v, coef) in &cash.expr.terms {
            lp.objective.add(*v, coef.clone());
        }
        lp.objective_offset += &cash.constant;
    }
    (lp, holdings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Enumeration {
    /// Every pattern, holdings-form programs.
    Full,
    /// Dominance-reduced patterns, trade-size programs.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub max_nodes: usize,
    pub enumeration: Enumeration,
}

pub const DEFAULT_MAX_NODES: usize = 12;

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            max_nodes: DEFAULT_MAX_NODES,
            enumeration: Enumeration::Reduced,
        }
    }
}

/// Patterns examined by an enumeration, in lexicographic order.
pub fn patterns(model: &CombinedCostModel, enumeration: Enumeration) -> Vec<TradePattern> {
    let tree = model.tree();
    // Per-slot alternatives: each slot assigns regions to a set of nodes.
    let mut slots: Vec<Vec<Vec<(NodeId, Region)>>> = Vec::new();
    match enumeration {
        Enumeration::Full => {
            for n in tree.node_ids() {
                slots.push(Region::ALL.iter().map(|&r| vec![(n, r)]).collect());
            }
        }
        Enumeration::Reduced => {
            for n in tree.node_ids() {
                let leaf_parent = tree
                    .children(n)
                    .first()
                    .is_some_and(|&c| tree.is_terminal(c));
                if !tree.is_terminal(n) || tree.parent(n).is_none() {
                    slots.push(Region::ALL.iter().map(|&r| vec![(n, r)]).collect());
                }
                if leaf_parent {
                    slots.push(sibling_assignments(model, n));
                }
            }
        }
    }

    let mut out: Vec<Vec<Region>> = vec![vec![Region::Throwaway; tree.len()]];
    for slot in &slots {
        out = out
            .iter()
            .flat_map(|base| {
                slot.iter().map(move |assignment| {
                    let mut regions = base.clone();
                    for &(n, r) in assignment {
                        regions[n.0] = r;
                    }
                    regions
                })
            })
            .collect();
    }
    out.sort();
    out.dedup();
    out.into_iter()
        .map(|regions| TradePattern { regions })
        .collect()
}

/// The `k + 2` undominated final-trade assignments for the terminal
/// children of `parent`.
fn sibling_assignments(model: &CombinedCostModel, parent: NodeId) -> Vec<Vec<(NodeId, Region)>> {
    let leaves = model.tree().children(parent);
    let mut by_threshold: Vec<NodeId> = leaves.to_vec();
    by_threshold.sort_by(|&a, &b| {
        let ta = &model.fixed()[a] / &model.bid()[a];
        let tb = &model.fixed()[b] / &model.bid()[b];
        ta.cmp(&tb)
    });
    let mut out = vec![leaves.iter().map(|&l| (l, Region::BuySide)).collect()];
    for sellers in 0..=leaves.len() {
        out.push(
            leaves
                .iter()
                .map(|&l| {
                    let sells = by_threshold[..sellers].contains(&l);
                    (
                        l,
                        if sells {
                            Region::SellSide
                        } else {
                            Region::Throwaway
                        },
                    )
                })
                .collect(),
        );
    }
    out
}

pub fn exhaustive_search(model: &CombinedCostModel) -> Result<Option<Strategy>, OracleError> {
    exhaustive_search_with(model, SearchOptions::default())
}

/// Returns the arbitrage from the lexicographically first successful
/// pattern, or `None` when no pattern admits one.
pub fn exhaustive_search_with(
    model: &CombinedCostModel,
    options: SearchOptions,
) -> Result<Option<Strategy>, OracleError> {
    let nodes = model.tree().len();
    if nodes > options.max_nodes {
        return Err(OracleError::ModelTooLarge {
            nodes,
            limit: options.max_nodes,
        });
    }
    let candidates = patterns(model, options.enumeration);
    let found = candidates
        .par_iter()
        .map(|pattern| solve_pattern(model, pattern, options.enumeration))
        .find_map_first(|r| match r {
            Ok(None) => None,
            other => Some(other),
        });
    match found {
        None => Ok(None),
        Some(result) => {
            let strategy = result?.expect("only successes are kept");
            if !is_arbitrage(model, &strategy)? {
                return Err(OracleError::Unsound(
                    "reconstructed strategy failed verification".into(),
                ));
            }
            Ok(Some(strategy))
        }
    }
}

/// Solves one pattern; `Some` when it yields an arbitrage.
pub fn solve_pattern(
    model: &CombinedCostModel,
    pattern: &TradePattern,
    enumeration: Enumeration,
) -> Result<Option<Strategy>, OracleError> {
    let tree = model.tree();
    let (lp, holdings) = match enumeration {
        Enumeration::Full => (build_lp(model, pattern), None),
        Enumeration::Reduced => {
            let (lp, h) = trade_program(model, pattern);
            (lp, Some(h))
        }
    };
    let to_strategy = |vars: &[Rational]| -> Strategy {
        let post_trade = tree
            .node_ids()
            .map(|n| match &holdings {
                None => Portfolio::new(vars[2 * n.0].clone(), vars[2 * n.0 + 1].clone()),
                Some(h) => Portfolio::new(
                    h[n.0].0.expr.eval(vars) + &h[n.0].0.constant,
                    h[n.0].1.expr.eval(vars) + &h[n.0].1.constant,
                ),
            })
            .collect();
        Strategy {
            initial: Portfolio::zero(),
            post_trade,
        }
    };

    match solve_lp(&lp)? {
        LpResult::Infeasible => Ok(None),
        LpResult::Optimal { value, assignment } => {
            if value.is_positive() {
                Ok(Some(to_strategy(&assignment)))
            } else {
                Ok(None)
            }
        }
        LpResult::Unbounded { point, ray } => {
            let base = to_strategy(&point);
            let linear = match &holdings {
                None => to_strategy(&ray),
                Some(h) => Strategy {
                    initial: Portfolio::zero(),
                    post_trade: tree
                        .node_ids()
                        .map(|n| Portfolio::new(h[n.0].0.expr.eval(&ray), h[n.0].1.expr.eval(&ray)))
                        .collect(),
                },
            };
            // Smallest power of two lifting every improving terminal cash
            // coordinate strictly above zero.
            let mut scale = one();
            loop {
                let lifted = tree.terminals().iter().all(|&l| {
                    let d = &linear.post_trade[l.0].cash;
                    !d.is_positive() || (&base.post_trade[l.0].cash + &scale * d).is_positive()
                });
                if lifted {
                    break;
                }
                scale *= int(2);
            }
            let post_trade = base
                .post_trade
                .iter()
                .zip(&linear.post_trade)
                .map(|(p, d)| {
                    Portfolio::new(&p.cash + &scale * &d.cash, &p.shares + &scale * &d.shares)
                })
                .collect();
            Ok(Some(Strategy {
                initial: Portfolio::zero(),
                post_trade,
            }))
        }
    }
}

/// Searches round trips only: open a position at some node, close it on a
/// stopping time strictly later, profitable on every exit node.
pub fn simple_search(model: &CombinedCostModel) -> Result<Option<Strategy>, OracleError> {
    simple_search_with(model, DEFAULT_MAX_STOP_DEPTH)
}

pub fn simple_search_with(
    model: &CombinedCostModel,
    max_depth: usize,
) -> Result<Option<Strategy>, OracleError> {
    let tree = model.tree();
    if tree.horizon() > max_depth {
        return Err(OracleError::ModelTooLarge {
            nodes: tree.len(),
            limit: max_depth,
        });
    }
    for t in 0..tree.horizon() {
        for &node in tree.atoms_at(t)? {
            for stop in enumerate_stopping_times(tree, t, node, max_depth)? {
                for case in [ViolationCase::BidAboveAsk, ViolationCase::AskBelowBid] {
                    if let Some(z) = profitable_size(model, node, stop.cut(), case) {
                        let strategy = round_trip_strategy(model, node, &stop, case, &z);
                        if !is_arbitrage(model, &strategy)? {
                            return Err(OracleError::Unsound(
                                "round trip failed verification".into(),
                            ));
                        }
                        return Ok(Some(strategy));
                    }
                }
            }
        }
    }
    Ok(None)
}

fn profitable_size(
    model: &CombinedCostModel,
    node: NodeId,
    cut: &[NodeId],
    case: ViolationCase,
) -> Option<Rational> {
    let mut bound = zero();
    for &exit in cut {
        let gap = match case {
            ViolationCase::BidAboveAsk => &model.bid()[exit] - &model.ask()[node],
            ViolationCase::AskBelowBid => &model.bid()[node] - &model.ask()[exit],
        };
        if !gap.is_positive() {
            return None;
        }
        let b = (&model.fixed()[node] + &model.fixed()[exit]) / gap;
        if b > bound {
            bound = b;
        }
    }
    Some(bound + one())
}

/// Number of programs an enumeration solves on this model (at most).
pub fn pattern_count(model: &CombinedCostModel, enumeration: Enumeration) -> usize {
    patterns(model, enumeration).len()
}

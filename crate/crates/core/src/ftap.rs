//! Arbitrage decision with certificates for combined-cost models.
//!
//! Two backward recursions bound the prices at which stock can be bought
//! back (`U`) or sold (`V`) later on:
//!
//! ```text
//! U_T = A_T,  U_{t-1} = max over children of min(U_t, A_t)
//! V_T = B_T,  V_{t-1} = min over children of max(V_t, B_t)
//! ```
//!
//! The model is free of arbitrage iff `max(V, B) <= min(U, A)` at every node.
//! When it holds, a price process `S` inside the spread and a family of
//! single-step measures making `S` a martingale are built forward from the
//! root. When it fails at the latest possible time, the failing node yields
//! an explicit buy-then-sell (or sell-then-cover) arbitrage.

use num_traits::{Signed, Zero};

use crate::market::{is_arbitrage, CombinedCostModel, ModelError, Portfolio, Strategy};
use crate::rational::{int, max, midpoint, min, one, zero, Rational};
use crate::tree::{
    is_probability_vector, is_stopping_time, AdaptedProcess, EventTree, NodeId,
    SingleStepMeasureFamily, StoppingTime,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FtapError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("time {time} outside 0..{horizon}")]
    TimeOutOfRange { time: usize, horizon: usize },
    #[error("interval condition fails at node {0}")]
    IntervalViolated(NodeId),
    #[error("interval failure at node {0} matches neither case")]
    ClassificationImpossible(NodeId),
    #[error("not a valid violation: {0}")]
    NotAViolation(String),
    #[error("internal inconsistency: {0}")]
    InternalInconsistency(String),
}

/// Upper (`U`) and lower (`V`) backward-induction bounds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UvProcesses {
    pub upper: AdaptedProcess,
    pub lower: AdaptedProcess,
}

impl UvProcesses {
    /// `[max(V, B), min(U, A)]` at `node`; empty when `lo > hi`.
    pub fn interval(&self, model: &CombinedCostModel, node: NodeId) -> (Rational, Rational) {
        (
            max(&self.lower[node], &model.bid()[node]),
            min(&self.upper[node], &model.ask()[node]),
        )
    }
}

pub fn compute_uv(model: &CombinedCostModel) -> UvProcesses {
    let tree = model.tree();
    let mut upper = model.ask().values().to_vec();
    let mut lower = model.bid().values().to_vec();
    for t in (0..tree.horizon()).rev() {
        for &n in tree.atoms_at(t).expect("t within horizon") {
            let children = tree.children(n);
            upper[n.0] = children
                .iter()
                .map(|&c| min(&upper[c.0], &model.ask()[c]))
                .max()
                .expect("non-terminal node has children");
            lower[n.0] = children
                .iter()
                .map(|&c| max(&lower[c.0], &model.bid()[c]))
                .min()
                .expect("non-terminal node has children");
        }
    }
    UvProcesses {
        upper: AdaptedProcess::new(tree, upper).expect("length matches"),
        lower: AdaptedProcess::new(tree, lower).expect("length matches"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationCase {
    /// `V_t > A_t`: buy now, sell later at a higher bid.
    BidAboveAsk,
    /// `U_t < B_t`: sell now, buy back later at a lower ask.
    AskBelowBid,
}

impl ViolationCase {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCase::BidAboveAsk => "bid_above_ask",
            ViolationCase::AskBelowBid => "ask_below_bid",
        }
    }
}

/// Location of the latest failure of the interval condition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntervalBreach {
    pub time: usize,
    pub node: NodeId,
    pub case: ViolationCase,
}

/// A breach together with the exit stopping time and trade size used to
/// exploit it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub time: usize,
    pub node: NodeId,
    pub case: ViolationCase,
    pub stop: StoppingTime,
    pub quantity: Rational,
}

/// Scans from the horizon backwards and reports the first failing node at
/// the largest failing time, or `None` when `max(V,B) <= min(U,A)` holds
/// everywhere.
pub fn interval_condition(
    model: &CombinedCostModel,
    uv: &UvProcesses,
) -> Result<Option<IntervalBreach>, FtapError> {
    let tree = model.tree();
    for t in (0..=tree.horizon()).rev() {
        for &n in tree.atoms_at(t).expect("t within horizon") {
            let (lo, hi) = uv.interval(model, n);
            if lo <= hi {
                continue;
            }
            let case = if uv.lower[n] > model.ask()[n] {
                ViolationCase::BidAboveAsk
            } else if uv.upper[n] < model.bid()[n] {
                ViolationCase::AskBelowBid
            } else {
                return Err(FtapError::ClassificationImpossible(n));
            };
            return Ok(Some(IntervalBreach {
                time: t,
                node: n,
                case,
            }));
        }
    }
    Ok(None)
}

/// Which exit rule a stopping time implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopKind {
    /// Exit where the ask is at most `U_t`: stop at a child `c` as soon as
    /// `A_c <= U_c`, otherwise continue below `c`.
    Cover,
    /// Exit where the bid is at least `V_t`: stop at `c` as soon as
    /// `B_c >= V_c`.
    Sell,
}

/// Stopping time strictly after the node, built below `node`.
pub fn stopping_time_below(
    model: &CombinedCostModel,
    uv: &UvProcesses,
    node: NodeId,
    kind: StopKind,
) -> StoppingTime {
    let mut cut = Vec::new();
    collect_stop(model, uv, node, kind, &mut cut);
    StoppingTime::new(cut)
}

fn collect_stop(
    model: &CombinedCostModel,
    uv: &UvProcesses,
    node: NodeId,
    kind: StopKind,
    cut: &mut Vec<NodeId>,
) {
    for &c in model.tree().children(node) {
        let stop_here = match kind {
            StopKind::Cover => model.ask()[c] <= uv.upper[c],
            StopKind::Sell => model.bid()[c] >= uv.lower[c],
        };
        if stop_here {
            cut.push(c);
        } else {
            collect_stop(model, uv, c, kind, cut);
        }
    }
}

/// Global stopping time after `t`: the union of the per-node cuts over all
/// nodes at time `t`.
pub fn construct_stopping_time(
    model: &CombinedCostModel,
    uv: &UvProcesses,
    t: usize,
    kind: StopKind,
) -> Result<StoppingTime, FtapError> {
    let tree = model.tree();
    if t >= tree.horizon() {
        return Err(FtapError::TimeOutOfRange {
            time: t,
            horizon: tree.horizon(),
        });
    }
    let mut cut = Vec::new();
    for &n in tree.atoms_at(t).expect("t within horizon") {
        collect_stop(model, uv, n, kind, &mut cut);
    }
    Ok(StoppingTime::new(cut))
}

/// Price process inside the spread plus single-step measures under which
/// it is a martingale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub price: AdaptedProcess,
    pub measures: SingleStepMeasureFamily,
}

pub fn construct_certificate(
    model: &CombinedCostModel,
    uv: &UvProcesses,
) -> Result<Certificate, FtapError> {
    let tree = model.tree();
    for n in tree.node_ids() {
        let (lo, hi) = uv.interval(model, n);
        if lo > hi {
            return Err(FtapError::IntervalViolated(n));
        }
    }

    let mut price = vec![zero(); tree.len()];
    let mut rows = vec![Vec::new(); tree.len()];
    let root = tree.root();
    let (lo, hi) = uv.interval(model, root);
    price[root.0] = midpoint(&lo, &hi);

    for t in 0..tree.horizon() {
        for &n in tree.atoms_at(t).expect("t within horizon") {
            let children = tree.children(n);
            let intervals: Vec<_> = children.iter().map(|&c| uv.interval(model, c)).collect();
            let mu = intervals
                .iter()
                .position(|(_, hi)| *hi == uv.upper[n])
                .expect("U attained by some child");
            let nu = intervals
                .iter()
                .position(|(lo, _)| *lo == uv.lower[n])
                .expect("V attained by some child");
            let current = price[n.0].clone();
            let mut row = vec![zero(); children.len()];

            for (i, &c) in children.iter().enumerate() {
                price[c.0] = midpoint(&intervals[i].0, &intervals[i].1);
            }
            if mu != nu {
                let s_mu = intervals[mu].1.clone();
                let s_nu = intervals[nu].0.clone();
                if s_mu == s_nu {
                    row[mu] = one();
                } else {
                    let w = (&current - &s_nu) / (&s_mu - &s_nu);
                    row[nu] = one() - &w;
                    row[mu] = w;
                }
                price[children[mu].0] = s_mu;
                price[children[nu].0] = s_nu;
            } else {
                // A degenerate row forces the child to carry the parent price.
                price[children[mu].0] = current;
                row[mu] = one();
            }
            rows[n.0] = row;
        }
    }

    Ok(Certificate {
        price: AdaptedProcess::new(tree, price).expect("length matches"),
        measures: SingleStepMeasureFamily::from_rows_unchecked(rows),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CertificateFailure {
    /// Price or row vector has the wrong shape for the tree.
    Shape(String),
    /// `B <= S <= A` fails.
    OutsideSpread { node: NodeId, price: Rational },
    /// Row is not a probability vector.
    BadRow { node: NodeId },
    /// `S_t` differs from the row-weighted average of the children.
    NotMartingale {
        node: NodeId,
        price: Rational,
        expectation: Rational,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertificateReport {
    pub ok: bool,
    pub failures: Vec<CertificateFailure>,
}

pub fn verify_certificate(model: &CombinedCostModel, cert: &Certificate) -> CertificateReport {
    let tree = model.tree();
    let mut failures = Vec::new();
    if cert.price.len() != tree.len() {
        failures.push(CertificateFailure::Shape(format!(
            "price has {} values for {} nodes",
            cert.price.len(),
            tree.len()
        )));
    }
    if cert.measures.rows().len() != tree.len() {
        failures.push(CertificateFailure::Shape(format!(
            "measure family has {} rows for {} nodes",
            cert.measures.rows().len(),
            tree.len()
        )));
    }
    if !failures.is_empty() {
        return CertificateReport {
            ok: false,
            failures,
        };
    }

    for n in tree.node_ids() {
        let s = &cert.price[n];
        if s < &model.bid()[n] || s > &model.ask()[n] {
            failures.push(CertificateFailure::OutsideSpread {
                node: n,
                price: s.clone(),
            });
        }
        let children = tree.children(n);
        if children.is_empty() {
            continue;
        }
        let row = cert.measures.row(n);
        if row.len() != children.len() || !is_probability_vector(row) {
            failures.push(CertificateFailure::BadRow { node: n });
            continue;
        }
        let expectation: Rational = row
            .iter()
            .zip(children)
            .map(|(w, &c)| w * &cert.price[c])
            .sum();
        if &expectation != s {
            failures.push(CertificateFailure::NotMartingale {
                node: n,
                price: s.clone(),
                expectation,
            });
        }
    }
    CertificateReport {
        ok: failures.is_empty(),
        failures,
    }
}

/// Smallest integer-offset trade size used for a round trip: one plus the
/// largest break-even size over the exit nodes.
fn round_trip_quantity(
    model: &CombinedCostModel,
    node: NodeId,
    cut: &[NodeId],
    case: ViolationCase,
) -> Option<Rational> {
    let mut bound = zero();
    for &exit in cut {
        let gap = round_trip_gap(model, node, exit, case);
        if !gap.is_positive() {
            return None;
        }
        let break_even = (&model.fixed()[node] + &model.fixed()[exit]) / gap;
        if break_even > bound {
            bound = break_even;
        }
    }
    Some(bound + one())
}

fn round_trip_gap(
    model: &CombinedCostModel,
    entry: NodeId,
    exit: NodeId,
    case: ViolationCase,
) -> Rational {
    match case {
        ViolationCase::BidAboveAsk => &model.bid()[exit] - &model.ask()[entry],
        ViolationCase::AskBelowBid => &model.bid()[entry] - &model.ask()[exit],
    }
}

/// Fills in the exit stopping time and trade size for a breach.
pub fn complete_violation(
    model: &CombinedCostModel,
    uv: &UvProcesses,
    breach: &IntervalBreach,
) -> Result<Violation, FtapError> {
    let kind = match breach.case {
        ViolationCase::BidAboveAsk => StopKind::Sell,
        ViolationCase::AskBelowBid => StopKind::Cover,
    };
    let stop = stopping_time_below(model, uv, breach.node, kind);
    let quantity =
        round_trip_quantity(model, breach.node, stop.cut(), breach.case).ok_or_else(|| {
            FtapError::InternalInconsistency(format!(
                "exit cut below {} has a non-positive price gap",
                breach.node
            ))
        })?;
    Ok(Violation {
        time: breach.time,
        node: breach.node,
        case: breach.case,
        stop,
        quantity,
    })
}

/// Round trip opened at `node` and closed on the exit cut; zero elsewhere.
pub fn round_trip_strategy(
    model: &CombinedCostModel,
    node: NodeId,
    cut: &StoppingTime,
    case: ViolationCase,
    z: &Rational,
) -> Strategy {
    let tree = model.tree();
    let fee = &model.fixed()[node];
    let open = match case {
        ViolationCase::BidAboveAsk => Portfolio::new(-(&model.ask()[node] * z) - fee, z.clone()),
        ViolationCase::AskBelowBid => Portfolio::new(&model.bid()[node] * z - fee, -z.clone()),
    };
    let mut strategy = Strategy::idle(tree);
    fill_round_trip(model, node, node, cut, case, z, &open, &mut strategy);
    strategy
}

#[allow(clippy::too_many_arguments)]
fn fill_round_trip(
    model: &CombinedCostModel,
    entry: NodeId,
    n: NodeId,
    cut: &StoppingTime,
    case: ViolationCase,
    z: &Rational,
    holding: &Portfolio,
    strategy: &mut Strategy,
) {
    let tree = model.tree();
    let here = if n != entry && cut.contains(n) {
        let gap = round_trip_gap(model, entry, n, case);
        Portfolio::new(&gap * z - &model.fixed()[entry] - &model.fixed()[n], zero())
    } else {
        holding.clone()
    };
    for &c in tree.children(n) {
        fill_round_trip(model, entry, c, cut, case, z, &here, strategy);
    }
    strategy.post_trade[n.0] = here;
}

/// The explicit arbitrage for a completed violation.
pub fn construct_arbitrage(
    model: &CombinedCostModel,
    v: &Violation,
) -> Result<Strategy, FtapError> {
    let tree = model.tree();
    if !tree.contains(v.node) || tree.time(v.node) != v.time {
        return Err(FtapError::NotAViolation(format!(
            "node {} is not at time {}",
            v.node, v.time
        )));
    }
    if !is_stopping_time(tree, v.stop.cut(), v.time, v.node) {
        return Err(FtapError::NotAViolation(
            "exit cut is not a stopping time strictly after the entry node".into(),
        ));
    }
    for &exit in v.stop.cut() {
        let gap = round_trip_gap(model, v.node, exit, v.case);
        let costs = &model.fixed()[v.node] + &model.fixed()[exit];
        if !gap.is_positive() || gap * &v.quantity <= costs {
            return Err(FtapError::NotAViolation(format!(
                "round trip exiting at {exit} is not profitable"
            )));
        }
    }
    Ok(round_trip_strategy(
        model,
        v.node,
        &v.stop,
        v.case,
        &v.quantity,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[allow(clippy::large_enum_variant)]
pub enum Verdict {
    NoArbitrage {
        certificate: Certificate,
    },
    Arbitrage {
        strategy: Strategy,
        witness: Violation,
    },
}

impl Verdict {
    pub fn is_arbitrage(&self) -> bool {
        matches!(self, Verdict::Arbitrage { .. })
    }
}

/// Decides arbitrage and self-checks the returned witness.
pub fn decide(model: &CombinedCostModel) -> Result<Verdict, FtapError> {
    let uv = compute_uv(model);
    match interval_condition(model, &uv)? {
        None => {
            let certificate = construct_certificate(model, &uv)?;
            let report = verify_certificate(model, &certificate);
            if !report.ok {
                return Err(FtapError::InternalInconsistency(format!(
                    "constructed certificate rejected: {:?}",
                    report.failures
                )));
            }
            Ok(Verdict::NoArbitrage { certificate })
        }
        Some(breach) => {
            let witness = complete_violation(model, &uv, &breach)?;
            let strategy = construct_arbitrage(model, &witness)?;
            if !is_arbitrage(model, &strategy)? {
                return Err(FtapError::InternalInconsistency(
                    "constructed strategy is not an arbitrage".into(),
                ));
            }
            Ok(Verdict::Arbitrage { strategy, witness })
        }
    }
}

/// Decides the fixed-cost model with ask = bid = `price`.
pub fn fixed_cost_decide(
    price: &AdaptedProcess,
    fixed: &AdaptedProcess,
    tree: &EventTree,
) -> Result<Verdict, FtapError> {
    let model = CombinedCostModel::fixed_cost(tree.clone(), price.clone(), fixed.clone())?;
    decide(&model)
}

/// For an arbitrage-free model, a price inside the spread whose fixed-cost
/// model (same fixed costs) is itself arbitrage-free.
pub fn embedded_fixed_cost(model: &CombinedCostModel) -> Result<Option<AdaptedProcess>, FtapError> {
    match decide(model)? {
        Verdict::NoArbitrage { certificate } => Ok(Some(certificate.price)),
        Verdict::Arbitrage { .. } => Ok(None),
    }
}

/// Deterministic alternative fixed costs: each node's cost replaced by
/// `1 + (index mod 3)` times `scale`. Used in invariance checks.
pub fn alternative_fixed_costs(tree: &EventTree, scale: &Rational) -> AdaptedProcess {
    AdaptedProcess::from_fn(tree, |n| int(1 + (n.0 % 3) as i64) * scale)
}

/// True when every terminal has probability mass and `S` is a martingale
/// under the product measure, checked via conditional expectations at
/// every node with positive mass.
pub fn is_product_martingale(tree: &EventTree, cert: &Certificate) -> bool {
    let mass = crate::tree::node_masses(tree, &cert.measures);
    tree.node_ids().filter(|&n| !tree.is_terminal(n)).all(|n| {
        if mass[n.0].is_zero() {
            return true;
        }
        let children = tree.children(n);
        let child_mass: Rational = children.iter().map(|&c| mass[c.0].clone()).sum();
        let weighted: Rational = children.iter().map(|&c| &mass[c.0] * &cert.price[c]).sum();
        child_mass == mass[n.0] && (weighted / &mass[n.0]) == cert.price[n]
    })
}

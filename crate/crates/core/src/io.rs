//! Model files and JSON forms of certificates, strategies and witnesses.
//!
//! A model file is JSON:
//!
//! ```json
//! {"horizon": 1,
//!  "nodes": [
//!    {"id": "root", "parent": null, "ask": "1", "bid": "1", "fixed": "1"},
//!    {"id": "u", "parent": "root", "ask": "2", "bid": "2", "fixed": "1"},
//!    {"id": "d", "parent": "root", "ask": "1", "bid": "1", "fixed": "1"}]}
//! ```
//!
//! Rationals are strings `"n"` or `"n/d"`; plain JSON integers are also
//! accepted on input. Node times follow from the parent chain and children
//! keep file order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ftap::{Certificate, Violation};
use crate::market::{CombinedCostModel, ModelError, Portfolio, Strategy};
use crate::rational::{format_rational, parse_rational, Rational};
use crate::tree::{
    AdaptedProcess, EventTree, NodeId, NodeSpec, SingleStepMeasureFamily, TreeError,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IoError {
    #[error("syntax error: {0}")]
    SyntaxError(String),
    #[error("node {node:?}: {reason}")]
    InvariantViolation { node: String, reason: String },
}

impl IoError {
    fn syntax(msg: impl Into<String>) -> Self {
        IoError::SyntaxError(msg.into())
    }
}

impl From<ModelError> for IoError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvariantViolation { node, reason } => {
                IoError::InvariantViolation { node, reason }
            }
            ModelError::Tree(t) => t.into(),
            other => IoError::InvariantViolation {
                node: String::new(),
                reason: other.to_string(),
            },
        }
    }
}

impl From<TreeError> for IoError {
    fn from(e: TreeError) -> Self {
        let node = match &e {
            TreeError::MultipleRoots(_, n)
            | TreeError::RootNotAtZero(n)
            | TreeError::DuplicateId(n) => n.clone(),
            TreeError::OrphanNode { node, .. }
            | TreeError::TimeSkip { node, .. }
            | TreeError::BeyondHorizon { node, .. }
            | TreeError::ShortBranch { node, .. } => node.clone(),
            _ => String::new(),
        };
        IoError::InvariantViolation {
            node,
            reason: e.to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    horizon: usize,
    nodes: Vec<RawNode>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: String,
    parent: Option<String>,
    ask: Value,
    bid: Value,
    fixed: Value,
}

#[derive(Debug, Serialize)]
struct OutModel<'a> {
    horizon: usize,
    nodes: Vec<OutNode<'a>>,
}

#[derive(Debug, Serialize)]
struct OutNode<'a> {
    id: &'a str,
    parent: Option<&'a str>,
    ask: String,
    bid: String,
    fixed: String,
}

fn rational_value(v: &Value, node: &str, field: &str) -> Result<Rational, IoError> {
    let text = match v {
        Value::String(s) => s.clone(),
        Value::Number(n) if n.is_i64() || n.is_u64() => n.to_string(),
        other => {
            return Err(IoError::syntax(format!(
                "node {node:?} field {field:?}: expected a rational string or integer, got {other}"
            )))
        }
    };
    parse_rational(&text)
        .map_err(|e| IoError::syntax(format!("node {node:?} field {field:?}: {e}")))
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::syntax(e.to_string()))
}

pub fn parse_model(text: &str) -> Result<CombinedCostModel, IoError> {
    let raw: RawModel = parse_json(text)?;
    let parents: HashMap<&str, Option<&str>> = raw
        .nodes
        .iter()
        .map(|n| (n.id.as_str(), n.parent.as_deref()))
        .collect();
    let mut specs = Vec::with_capacity(raw.nodes.len());
    for n in &raw.nodes {
        let mut time = 0;
        let mut cursor = n.parent.as_deref();
        while let Some(p) = cursor {
            time += 1;
            if time > raw.nodes.len() {
                return Err(IoError::InvariantViolation {
                    node: n.id.clone(),
                    reason: "parent chain contains a cycle".into(),
                });
            }
            cursor = match parents.get(p) {
                Some(next) => *next,
                None => {
                    return Err(IoError::InvariantViolation {
                        node: n.id.clone(),
                        reason: format!("unknown parent {p:?}"),
                    })
                }
            };
        }
        specs.push(NodeSpec::new(n.id.clone(), time, n.parent.as_deref()));
    }
    let tree = EventTree::build(raw.horizon, &specs)?;
    let mut ask = vec![Rational::default(); tree.len()];
    let mut bid = ask.clone();
    let mut fixed = ask.clone();
    for n in &raw.nodes {
        let id = tree.lookup(&n.id).expect("node was built").0;
        ask[id] = rational_value(&n.ask, &n.id, "ask")?;
        bid[id] = rational_value(&n.bid, &n.id, "bid")?;
        fixed[id] = rational_value(&n.fixed, &n.id, "fixed")?;
    }
    let ask = AdaptedProcess::new(&tree, ask)?;
    let bid = AdaptedProcess::new(&tree, bid)?;
    let fixed = AdaptedProcess::new(&tree, fixed)?;
    Ok(CombinedCostModel::new(tree, ask, bid, fixed)?)
}

/// Canonical model file: nodes in tree order, rationals in lowest terms.
pub fn serialize_model(model: &CombinedCostModel) -> String {
    let tree = model.tree();
    let nodes = tree
        .node_ids()
        .map(|n| OutNode {
            id: tree.label(n),
            parent: tree.parent(n).map(|p| tree.label(p)),
            ask: format_rational(&model.ask()[n]),
            bid: format_rational(&model.bid()[n]),
            fixed: format_rational(&model.fixed()[n]),
        })
        .collect();
    let out = OutModel {
        horizon: tree.horizon(),
        nodes,
    };
    serde_json::to_string_pretty(&out).expect("serializable")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeValue {
    node: String,
    value: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChildWeight {
    child: String,
    weight: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRow {
    node: String,
    weights: Vec<ChildWeight>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertificateJson {
    price: Vec<NodeValue>,
    measures: Vec<NodeRow>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PortfolioJson {
    cash: String,
    shares: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodePortfolio {
    node: String,
    cash: String,
    shares: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrategyJson {
    initial: PortfolioJson,
    post_trade: Vec<NodePortfolio>,
}

#[derive(Debug, Serialize)]
struct WitnessJson<'a> {
    time: usize,
    node: &'a str,
    case: &'static str,
    stop: Vec<&'a str>,
    quantity: String,
}

fn node_of(tree: &EventTree, label: &str) -> Result<NodeId, IoError> {
    tree.lookup(label)
        .ok_or_else(|| IoError::syntax(format!("unknown node {label:?}")))
}

fn parse_field(text: &str, what: &str) -> Result<Rational, IoError> {
    parse_rational(text).map_err(|e| IoError::syntax(format!("{what}: {e}")))
}

pub fn certificate_to_value(tree: &EventTree, cert: &Certificate) -> Value {
    let json = CertificateJson {
        price: tree
            .node_ids()
            .map(|n| NodeValue {
                node: tree.label(n).to_string(),
                value: format_rational(&cert.price[n]),
            })
            .collect(),
        measures: tree
            .node_ids()
            .filter(|&n| !tree.is_terminal(n))
            .map(|n| NodeRow {
                node: tree.label(n).to_string(),
                weights: tree
                    .children(n)
                    .iter()
                    .zip(cert.measures.row(n))
                    .map(|(&c, w)| ChildWeight {
                        child: tree.label(c).to_string(),
                        weight: format_rational(w),
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_value(json).expect("serializable")
}

pub fn certificate_to_json(tree: &EventTree, cert: &Certificate) -> String {
    serde_json::to_string_pretty(&certificate_to_value(tree, cert)).expect("serializable")
}

/// Reads a certificate without checking it; missing prices or rows are
/// reported, the martingale property is left to the verifier.
pub fn certificate_from_json(tree: &EventTree, text: &str) -> Result<Certificate, IoError> {
    let json: CertificateJson = parse_json(text)?;
    let mut price: Vec<Option<Rational>> = vec![None; tree.len()];
    for nv in &json.price {
        price[node_of(tree, &nv.node)?.0] = Some(parse_field(&nv.value, &nv.node)?);
    }
    let price = price
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| {
                IoError::syntax(format!("missing price at {:?}", tree.label(NodeId(i))))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<Vec<Rational>> = vec![Vec::new(); tree.len()];
    for row in &json.measures {
        let n = node_of(tree, &row.node)?;
        let children = tree.children(n);
        let mut weights: Vec<Option<Rational>> = vec![None; children.len()];
        for cw in &row.weights {
            let c = node_of(tree, &cw.child)?;
            let i = children.iter().position(|&x| x == c).ok_or_else(|| {
                IoError::syntax(format!("{:?} is not a child of {:?}", cw.child, row.node))
            })?;
            weights[i] = Some(parse_field(&cw.weight, &cw.child)?);
        }
        rows[n.0] = weights
            .into_iter()
            .map(|w| w.ok_or_else(|| IoError::syntax(format!("incomplete row at {:?}", row.node))))
            .collect::<Result<_, _>>()?;
    }
    Ok(Certificate {
        price: AdaptedProcess::new(tree, price)?,
        measures: SingleStepMeasureFamily::from_rows_unchecked(rows),
    })
}

pub fn strategy_to_value(tree: &EventTree, s: &Strategy) -> Value {
    let json = StrategyJson {
        initial: PortfolioJson {
            cash: format_rational(&s.initial.cash),
            shares: format_rational(&s.initial.shares),
        },
        post_trade: tree
            .node_ids()
            .zip(&s.post_trade)
            .map(|(n, p)| NodePortfolio {
                node: tree.label(n).to_string(),
                cash: format_rational(&p.cash),
                shares: format_rational(&p.shares),
            })
            .collect(),
    };
    serde_json::to_value(json).expect("serializable")
}

pub fn strategy_to_json(tree: &EventTree, s: &Strategy) -> String {
    serde_json::to_string_pretty(&strategy_to_value(tree, s)).expect("serializable")
}

pub fn strategy_from_json(tree: &EventTree, text: &str) -> Result<Strategy, IoError> {
    let json: StrategyJson = parse_json(text)?;
    let initial = Portfolio::new(
        parse_field(&json.initial.cash, "initial cash")?,
        parse_field(&json.initial.shares, "initial shares")?,
    );
    let mut post: Vec<Option<Portfolio>> = vec![None; tree.len()];
    for np in &json.post_trade {
        let n = node_of(tree, &np.node)?;
        post[n.0] = Some(Portfolio::new(
            parse_field(&np.cash, &np.node)?,
            parse_field(&np.shares, &np.node)?,
        ));
    }
    let post_trade = post
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            p.ok_or_else(|| {
                IoError::syntax(format!(
                    "missing post-trade portfolio at {:?}",
                    tree.label(NodeId(i))
                ))
            })
        })
        .collect::<Result<_, _>>()?;
    Ok(Strategy {
        initial,
        post_trade,
    })
}

pub fn witness_to_value(tree: &EventTree, v: &Violation) -> Value {
    let json = WitnessJson {
        time: v.time,
        node: tree.label(v.node),
        case: v.case.as_str(),
        stop: v.stop.cut().iter().map(|&n| tree.label(n)).collect(),
        quantity: format_rational(&v.quantity),
    };
    serde_json::to_value(json).expect("serializable")
}

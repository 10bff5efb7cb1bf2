//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ccarb_core::ftap::{alternative_fixed_costs, Certificate};
use ccarb_core::generator::{corpus, fixed_cost_corpus};
use ccarb_core::lp::{Domain, LinearExpr, Relation};
use ccarb_core::oracle::DEFAULT_MAX_NODES;
use ccarb_core::rational::{int, one, rat, zero};
use ccarb_core::tree::EventTree;
use ccarb_core::*;
use num_traits::Signed;

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

const CORPUS_SEED: u64 = 2024;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, budget: Duration, what: &str) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took <= budget, || {
        format!("{what} took {took:?}, budget {budget:?}")
    })
}

fn certificate_of(v: &Verdict) -> Option<&Certificate> {
    match v {
        Verdict::NoArbitrage { certificate } => Some(certificate),
        Verdict::Arbitrage { .. } => None,
    }
}

fn example1_criterion() -> Outcome {
    let start = Instant::now();
    let m = example1_model();
    let tree = m.tree();
    let verdict = decide(&m).map_err(|e| e.to_string())?;
    let cert = certificate_of(&verdict).ok_or("reference model reported as arbitrage")?;
    let (r, u, d) = (
        tree.root(),
        tree.lookup("u").unwrap(),
        tree.lookup("d").unwrap(),
    );
    let s = &cert.price;
    ensure((&s[r], &s[u], &s[d]) == (&int(1), &int(2), &int(1)), || {
        format!("S = ({}, {}, {})", s[r], s[u], s[d])
    })?;
    // weight on u solving w*S_u + (1-w)*S_d = S_0
    let w_u = (&s[r] - &s[d]) / (&s[u] - &s[d]);
    let row = cert.measures.row(r);
    ensure(row == [w_u.clone(), one() - &w_u].as_slice(), || {
        format!("row {row:?}")
    })?;
    ensure(row[1] == one() && tree.children(r)[1] == d, || {
        "weight 1 must sit on d".into()
    })?;
    let expectation = &row[0] * &s[u] + &row[1] * &s[d];
    ensure(expectation == s[r], || "martingale equation fails".into())?;
    let report = verify_certificate(&m, cert);
    ensure(report.ok, || format!("verifier: {:?}", report.failures))?;
    within(start, Duration::from_secs(1), "reference model")?;
    Ok(format!(
        "S=(1,2,1), Q_0(d)=1, verified in {:?}",
        start.elapsed()
    ))
}

fn espm_criterion() -> Outcome {
    let start = Instant::now();
    let m = example1_model();
    let tree = m.tree();
    let (u, d) = (tree.lookup("u").unwrap(), tree.lookup("d").unwrap());
    let mut ys = Vec::new();
    for k in 1..=9 {
        let q = rat(k, 10);
        let measure = TerminalMeasure::new(vec![(u, q.clone()), (d, one() - &q)]);
        let s = espm_falsify(&m, &measure)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("no falsifier for q = {q}"))?;
        ensure(
            is_self_financing(&m, &s).map_err(|e| e.to_string())?.ok,
            || format!("q = {q}: not self-financing"),
        )?;
        let y = s.post_trade[tree.root().0].shares.clone();
        let e = expected_liquidation(&m, &measure, &s).map_err(|e| e.to_string())?;
        let formula = &q * &y - int(2);
        ensure(e == formula && e.is_positive(), || {
            format!("q = {q}, y = {y}: E = {e}, q*y - 2 = {formula}")
        })?;
        ys.push(y.to_string());
    }
    within(start, Duration::from_secs(1), "ESPM separation")?;
    Ok(format!(
        "E = q*y - 2 > 0 for all nine q, y = [{}]",
        ys.join(", ")
    ))
}

fn agreement_criterion(models: &[CombinedCostModel]) -> Outcome {
    let start = Instant::now();
    let mut arbitrage = 0;
    for (i, m) in models.iter().enumerate() {
        let verdict = decide(m).map_err(|e| format!("model {i}: {e}"))?;
        let exhaustive = exhaustive_search(m).map_err(|e| format!("model {i}: {e}"))?;
        let simple = simple_search(m).map_err(|e| format!("model {i}: {e}"))?;
        ensure(
            verdict.is_arbitrage() == exhaustive.is_some()
                && exhaustive.is_some() == simple.is_some(),
            || {
                format!(
                    "model {i}: decide {}, exhaustive {}, simple {}\n{}",
                    verdict.is_arbitrage(),
                    exhaustive.is_some(),
                    simple.is_some(),
                    serialize_model(m)
                )
            },
        )?;
        match &verdict {
            Verdict::NoArbitrage { certificate } => {
                let report = verify_certificate(m, certificate);
                ensure(report.ok, || format!("model {i}: {:?}", report.failures))?;
            }
            Verdict::Arbitrage { strategy, .. } => {
                arbitrage += 1;
                ensure(
                    is_arbitrage(m, strategy).map_err(|e| e.to_string())?,
                    || format!("model {i}: decide strategy rejected"),
                )?;
            }
        }
        for s in exhaustive.iter().chain(simple.iter()) {
            ensure(is_arbitrage(m, s).map_err(|e| e.to_string())?, || {
                format!("model {i}: oracle strategy rejected")
            })?;
        }
    }
    within(start, Duration::from_secs(600), "agreement suite")?;
    Ok(format!(
        "{} models ({} arbitrage, {} no-arbitrage) agree, {:?}",
        models.len(),
        arbitrage,
        models.len() - arbitrage,
        start.elapsed()
    ))
}

fn solvency_grid(m: &CombinedCostModel, n: NodeId) -> Vec<Portfolio> {
    let steps: Vec<Rational> = (-20..=20).map(|k| rat(k, 4)).collect();
    let boundary = &m.fixed()[n] / &m.bid()[n];
    let mut grid = Vec::with_capacity(41 * 43);
    for x in &steps {
        for y in steps.iter().chain([&zero(), &boundary]) {
            grid.push(Portfolio::new(x.clone(), y.clone()));
        }
        grid.push(Portfolio::new(x.clone(), -&boundary));
    }
    grid
}

fn solvency_criterion(models: &[CombinedCostModel]) -> Outcome {
    let mut checked = 0usize;
    let mut min_per_node = usize::MAX;
    for (i, m) in models.iter().enumerate() {
        for n in m.tree().node_ids() {
            let grid = solvency_grid(m, n);
            min_per_node = min_per_node.min(grid.len());
            for p in &grid {
                let solvent = is_solvent(m, n, p).map_err(|e| e.to_string())?;
                let value = liquidation_value(m, n, p).map_err(|e| e.to_string())?;
                ensure(solvent == !value.is_negative(), || {
                    format!(
                        "model {i} node {n}: ({}, {}) solvent {solvent}, L = {value}",
                        p.cash, p.shares
                    )
                })?;
                checked += 1;
            }
        }
    }
    ensure(min_per_node >= 1600, || {
        format!("only {min_per_node} portfolios per node")
    })?;
    Ok(format!(
        "{checked} portfolio checks, at least {min_per_node} per node, zero exceptions"
    ))
}

fn geometry_criterion() -> Outcome {
    let tree = EventTree::build(0, &[NodeSpec::new("o", 0, None)]).map_err(|e| e.to_string())?;
    let constant = |v: Rational| AdaptedProcess::constant(&tree, v);
    let m = CombinedCostModel::new(
        tree.clone(),
        constant(rat(3, 2)),
        constant(rat(1, 2)),
        constant(int(1)),
    )
    .map_err(|e| e.to_string())?;
    let o = tree.root();
    let solvent = |x: Rational, y: Rational| is_solvent(&m, o, &Portfolio::new(x, y)).unwrap();
    let value = |x: Rational, y: Rational| liquidation_value(&m, o, &Portfolio::new(x, y)).unwrap();
    ensure(solvent(int(1), int(0)), || "(1,0) should be solvent".into())?;
    ensure(solvent(int(0), int(0)), || "(0,0) should be solvent".into())?;
    ensure(solvent(int(0), int(2)), || "(0,2) should be solvent".into())?;
    ensure(!solvent(rat(-1, 100), int(0)), || {
        "(-1/100,0) should be insolvent".into()
    })?;
    ensure(!solvent(int(-1), rat(-1, 100)), || {
        "(-1,-1/100) should be insolvent".into()
    })?;
    // 0 + (1/2)*2 - 1 and -1/2 + (1/2)*3 - 1
    ensure(value(int(0), int(2)) == zero(), || "L(0,2) != 0".into())?;
    ensure(value(rat(-1, 2), int(3)) == zero(), || {
        "L(-1/2,3) != 0".into()
    })?;
    Ok(
        "solvent: (1,0) (0,0) (0,2); insolvent: (-1/100,0) (-1,-1/100); L(0,2) = L(-1/2,3) = 0"
            .into(),
    )
}

fn resampled_fixed(m: &CombinedCostModel, salt: usize) -> AdaptedProcess {
    AdaptedProcess::from_fn(m.tree(), |n| rat(1 + ((n.0 * 7 + salt * 13) % 9) as i64, 4))
}

fn metamorphic_criterion(models: &[CombinedCostModel]) -> Outcome {
    let start = Instant::now();
    let mut runs = 0;
    for (i, m) in models.iter().enumerate() {
        let base = decide(m).map_err(|e| e.to_string())?;
        let base_oracle = exhaustive_search(m).map_err(|e| e.to_string())?.is_some();
        let fixed_variants = [
            resampled_fixed(m, i),
            alternative_fixed_costs(m.tree(), &rat(1, 3)),
            alternative_fixed_costs(m.tree(), &int(5)),
        ];
        for fixed in fixed_variants {
            let other = m.with_fixed(fixed).map_err(|e| e.to_string())?;
            let v = decide(&other).map_err(|e| e.to_string())?;
            let o = exhaustive_search(&other)
                .map_err(|e| e.to_string())?
                .is_some();
            ensure(
                v.is_arbitrage() == base.is_arbitrage() && o == base_oracle,
                || format!("model {i}: verdict changed after resampling C"),
            )?;
            runs += 1;
        }
        for k in [rat(1, 3), int(2), int(7)] {
            let scaled = m.scaled(&k).map_err(|e| e.to_string())?;
            let v = decide(&scaled).map_err(|e| e.to_string())?;
            let o = exhaustive_search(&scaled)
                .map_err(|e| e.to_string())?
                .is_some();
            ensure(
                v.is_arbitrage() == base.is_arbitrage() && o == base_oracle,
                || format!("model {i}: verdict changed after scaling by {k}"),
            )?;
            if let (Some(a), Some(b)) = (certificate_of(&base), certificate_of(&v)) {
                ensure(b.price == a.price.map(|s| s * &k), || {
                    format!("model {i}: certificate not scaled by {k}")
                })?;
            }
            runs += 1;
        }
    }
    Ok(format!(
        "{} models, {runs} variants, no verdict change, {:?}",
        models.len(),
        start.elapsed()
    ))
}

fn corollary_criterion(
    fixed_models: &[CombinedCostModel],
    combined: &[CombinedCostModel],
) -> Outcome {
    for (i, m) in fixed_models.iter().enumerate() {
        ensure(m.is_fixed_cost(), || {
            format!("fixed-cost model {i} has a spread")
        })?;
        let v = fixed_cost_decide(m.ask(), m.fixed(), m.tree()).map_err(|e| e.to_string())?;
        let o = exhaustive_search(m).map_err(|e| e.to_string())?;
        ensure(v.is_arbitrage() == o.is_some(), || {
            format!("fixed-cost model {i} disagrees")
        })?;
    }
    let mut embedded = 0;
    for (i, m) in combined.iter().enumerate() {
        if decide(m).map_err(|e| e.to_string())?.is_arbitrage() {
            continue;
        }
        let s = embedded_fixed_cost(m)
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("model {i}: no embedded price"))?;
        for n in m.tree().node_ids() {
            ensure(m.bid()[n] <= s[n] && s[n] <= m.ask()[n], || {
                format!("model {i}: S outside spread at {n}")
            })?;
        }
        let v = fixed_cost_decide(&s, m.fixed(), m.tree()).map_err(|e| e.to_string())?;
        ensure(!v.is_arbitrage(), || {
            format!("model {i}: embedded model has arbitrage")
        })?;
        embedded += 1;
    }
    Ok(format!(
        "{} fixed-cost models agree with the oracle; {embedded} embedded models arbitrage-free",
        fixed_models.len()
    ))
}

/// Checks optimality of `value` through a dual certificate for
/// `max c.x, Ax <= b, x >= 0`: `y >= 0`, `A^T y >= c`, `b.y = value`.
fn dual_certifies(
    a: &[Vec<Rational>],
    b: &[Rational],
    c: &[Rational],
    y: &[Rational],
    value: &Rational,
) -> bool {
    let nonneg = y.iter().all(|v| !v.is_negative());
    let feasible = (0..c.len()).all(|j| {
        a.iter()
            .zip(y)
            .map(|(row, yi)| &row[j] * yi)
            .sum::<Rational>()
            >= c[j]
    });
    let objective: Rational = b.iter().zip(y).map(|(bi, yi)| bi * yi).sum();
    nonneg && feasible && &objective == value
}

fn canonical_lp(a: &[Vec<Rational>], b: &[Rational], c: &[Rational]) -> LinearProgram {
    let mut lp = LinearProgram::new();
    let vars: Vec<usize> = (0..c.len())
        .map(|j| lp.add_variable(format!("x{j}"), Domain::NonNegative))
        .collect();
    for (row, bi) in a.iter().zip(b) {
        let mut e = LinearExpr::new();
        for (&v, coef) in vars.iter().zip(row) {
            e = e.term(v, coef.clone());
        }
        lp.add_constraint(e, Relation::Le, bi.clone());
    }
    let mut obj = LinearExpr::new();
    for (&v, cj) in vars.iter().zip(c) {
        obj = obj.term(v, cj.clone());
    }
    lp.objective = obj;
    lp
}

fn ints(v: &[i64]) -> Vec<Rational> {
    v.iter().map(|&x| int(x)).collect()
}

fn lp_criterion() -> Outcome {
    let mut cases = 0;
    let mut optimal = |a: Vec<Vec<Rational>>,
                       b: Vec<Rational>,
                       c: Vec<Rational>,
                       y: Vec<Rational>,
                       expect: Rational,
                       name: &str| {
        let lp = canonical_lp(&a, &b, &c);
        match solve_lp(&lp).map_err(|e| e.to_string())? {
            LpResult::Optimal { value, assignment } => {
                ensure(value == expect, || {
                    format!("{name}: value {value}, expected {expect}")
                })?;
                ensure(lp.is_feasible(&assignment), || {
                    format!("{name}: assignment infeasible")
                })?;
                ensure(lp.objective_value(&assignment) == value, || {
                    format!("{name}: value mismatch")
                })?;
                ensure(dual_certifies(&a, &b, &c, &y, &expect), || {
                    format!("{name}: dual certificate")
                })?;
                cases += 1;
                Ok(())
            }
            other => Err(format!("{name}: {other:?}")),
        }
    };
    // Beale's cycling example
    optimal(
        vec![
            vec![rat(1, 4), int(-8), int(-1), int(9)],
            vec![rat(1, 2), int(-12), rat(-1, 2), int(3)],
            ints(&[0, 0, 1, 0]),
        ],
        ints(&[0, 0, 1]),
        vec![rat(3, 4), int(-20), rat(1, 2), int(-6)],
        vec![zero(), rat(3, 2), rat(5, 4)],
        rat(5, 4),
        "beale",
    )?;
    // Klee-Minty cube, n = 3
    optimal(
        vec![ints(&[1, 0, 0]), ints(&[20, 1, 0]), ints(&[200, 20, 1])],
        ints(&[1, 100, 10000]),
        ints(&[100, 10, 1]),
        ints(&[0, 0, 1]),
        int(10000),
        "klee-minty",
    )?;
    // Degenerate vertex: five constraints through the optimum (1,1)
    optimal(
        vec![
            ints(&[1, 0]),
            ints(&[0, 1]),
            ints(&[1, 1]),
            ints(&[2, 1]),
            ints(&[1, 2]),
        ],
        ints(&[1, 1, 2, 3, 3]),
        ints(&[1, 1]),
        ints(&[0, 0, 1, 0, 0]),
        int(2),
        "degenerate",
    )?;
    // Origin degenerate with zero right-hand sides
    optimal(
        vec![ints(&[1, -1]), ints(&[-1, 1]), ints(&[1, 1])],
        ints(&[0, 0, 4]),
        ints(&[1, 2]),
        vec![zero(), rat(1, 2), rat(3, 2)],
        int(6),
        "zero-rhs",
    )?;

    // Infeasible: x + y <= 1, -x - y <= -3. Farkas: 1*(row1) + 1*(row2) gives 0 <= -2.
    let a = vec![ints(&[1, 1]), ints(&[-1, -1])];
    let b = ints(&[1, -3]);
    let lp = canonical_lp(&a, &b, &ints(&[1, 0]));
    let farkas = ints(&[1, 1]);
    let combo: Vec<Rational> = (0..2)
        .map(|j| a.iter().zip(&farkas).map(|(r, f)| &r[j] * f).sum())
        .collect();
    let rhs: Rational = b.iter().zip(&farkas).map(|(bi, f)| bi * f).sum();
    ensure(
        combo.iter().all(|v| !v.is_negative()) && rhs.is_negative(),
        || "farkas certificate".into(),
    )?;
    ensure(
        solve_lp(&lp).map_err(|e| e.to_string())? == LpResult::Infeasible,
        || "expected infeasible".into(),
    )?;
    cases += 1;

    // Unbounded: x - y <= 1, max x + y; ray (1,1).
    let lp = canonical_lp(&[ints(&[1, -1])], &ints(&[1]), &ints(&[1, 1]));
    ensure(lp.is_recession_direction(&ints(&[1, 1])), || {
        "hand ray".into()
    })?;
    match solve_lp(&lp).map_err(|e| e.to_string())? {
        LpResult::Unbounded { point, ray } => {
            ensure(lp.is_feasible(&point), || {
                "unbounded point infeasible".into()
            })?;
            ensure(lp.is_recession_direction(&ray), || {
                "returned ray not a recession direction".into()
            })?;
            ensure(lp.objective.eval(&ray).is_positive(), || {
                "returned ray does not improve".into()
            })?;
        }
        other => return Err(format!("expected unbounded, got {other:?}")),
    }
    cases += 1;

    // Trivial specification cases on a single free variable.
    let single = |rels: &[(Relation, i64)]| {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", Domain::Free);
        for &(rel, b) in rels {
            lp.add_constraint(LinearExpr::new().term(x, int(1)), rel, int(b));
        }
        lp.objective = LinearExpr::new().term(x, int(1));
        lp
    };
    ensure(
        matches!(solve_lp(&single(&[(Relation::Le, 3), (Relation::Ge, 0)])), Ok(LpResult::Optimal { value, .. }) if value == int(3)),
        || "max x, x <= 3".into(),
    )?;
    ensure(
        solve_lp(&single(&[(Relation::Ge, 1), (Relation::Le, 0)])) == Ok(LpResult::Infeasible),
        || "x >= 1, x <= 0".into(),
    )?;
    ensure(
        matches!(
            solve_lp(&single(&[(Relation::Ge, 0)])),
            Ok(LpResult::Unbounded { .. })
        ),
        || "x >= 0".into(),
    )?;
    cases += 3;
    Ok(format!(
        "{cases} LP cases, assignments re-validated exactly"
    ))
}

fn main() -> ExitCode {
    let corpus: Vec<CombinedCostModel> = corpus(CORPUS_SEED, 200, DEFAULT_MAX_NODES)
        .into_iter()
        .map(|(_, m)| m)
        .collect();
    let fixed = fixed_cost_corpus(CORPUS_SEED + 1_000_000, 50, DEFAULT_MAX_NODES);
    let criteria: Vec<Criterion> = vec![
        ("Reference model reproduction", Box::new(example1_criterion)),
        ("ESPM separation", Box::new(espm_criterion)),
        (
            "Verdict agreement suite",
            Box::new(|| agreement_criterion(&corpus)),
        ),
        (
            "Solvency/liquidation equivalence",
            Box::new(|| solvency_criterion(&corpus)),
        ),
        ("Solvency region geometry", Box::new(geometry_criterion)),
        (
            "Metamorphic invariances",
            Box::new(|| metamorphic_criterion(&corpus[..50])),
        ),
        (
            "Fixed-cost reduction suite",
            Box::new(|| corollary_criterion(&fixed, &corpus)),
        ),
        ("LP kernel", Box::new(lp_criterion)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL [{}] {name}: {reason}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

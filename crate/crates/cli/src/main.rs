use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ccarb_core::espm::{example1_measure, root_trade_and_hold};
use ccarb_core::io::{
    certificate_from_json, certificate_to_value, strategy_from_json, strategy_to_value,
    witness_to_value,
};
use ccarb_core::rational::{format_rational, parse_rational, rat};
use ccarb_core::{
    decide, espm_falsify, example1_model, exhaustive_search, expected_liquidation, generate_model,
    is_arbitrage, parse_model, serialize_model, simple_search, verify_certificate, Certificate,
    CombinedCostModel, Error, GeneratorConfig, Rational, Strategy, Verdict,
};

const EXIT_OK: u8 = 0;
const EXIT_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_ARBITRAGE: u8 = 10;

#[derive(Parser)]
#[command(
    name = "ccarb",
    version,
    about = "Arbitrage checks for bid/ask markets with fixed costs"
)]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Exhaustive,
    Simple,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Exhaustive => "exhaustive",
            Method::Simple => "simple",
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the verdict (exit 0: no arbitrage, 10: arbitrage).
    Check { model: PathBuf },
    /// Print the no-arbitrage certificate (price process and measures).
    Certificate { model: PathBuf },
    /// Print an arbitrage strategy and its witness.
    Arbitrage { model: PathBuf },
    /// Verify a certificate or a strategy against a model.
    Verify {
        model: PathBuf,
        #[arg(
            long,
            conflicts_with = "strategy",
            required_unless_present = "strategy"
        )]
        certificate: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<PathBuf>,
    },
    /// Independent verdict by search (exit codes as for `check`).
    Oracle {
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Exhaustive)]
        method: Method,
    },
    /// Run the decision procedure and both searches; exit 0 iff all agree.
    Agree { model: PathBuf },
    /// Emit a random model file.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        /// Children per node, as `min..max`.
        #[arg(long, default_value = "2..3")]
        branching: String,
        /// Mid prices, as `lo..hi`.
        #[arg(long, default_value = "1..3")]
        price_range: String,
        #[arg(long, default_value = "1/2")]
        spread_probability: String,
        /// Half-spreads, as `lo..hi`.
        #[arg(long, default_value = "1/4..1/2")]
        spread_range: String,
        /// Fixed costs, as `lo..hi`.
        #[arg(long, default_value = "1/4..2")]
        fixed_range: String,
        #[arg(long, default_value_t = 4)]
        denominator: u32,
        /// Write to a file instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Reference one-step model: arbitrage-free, yet every equivalent measure is falsified.
    EspmDemo {
        /// Weights on the up node (default 1/10 .. 9/10).
        #[arg(long = "q", value_delimiter = ',')]
        q: Vec<String>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Ftap(_) => EXIT_FAILED,
            Error::Oracle(ccarb_core::OracleError::Unsound(_)) => EXIT_FAILED,
            _ => EXIT_INVALID,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn fail<E: Into<Error>>(e: E) -> Failure {
    Failure::from(e.into())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<CombinedCostModel, Failure> {
    parse_model(&read(path)?).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn verdict_code(arbitrage: bool) -> u8 {
    if arbitrage {
        EXIT_ARBITRAGE
    } else {
        EXIT_OK
    }
}

fn verdict_name(arbitrage: bool) -> &'static str {
    if arbitrage {
        "arbitrage"
    } else {
        "no_arbitrage"
    }
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn print_certificate(model: &CombinedCostModel, cert: &Certificate) {
    let tree = model.tree();
    println!("price:");
    for n in tree.node_ids() {
        println!(
            "  S[{}] = {}",
            tree.label(n),
            format_rational(&cert.price[n])
        );
    }
    println!("measures:");
    for n in tree.node_ids().filter(|&n| !tree.is_terminal(n)) {
        let row: Vec<String> = tree
            .children(n)
            .iter()
            .zip(cert.measures.row(n))
            .map(|(&c, w)| format!("{}: {}", tree.label(c), format_rational(w)))
            .collect();
        println!("  Q[{}] = {{{}}}", tree.label(n), row.join(", "));
    }
}

fn print_strategy(model: &CombinedCostModel, s: &Strategy) {
    let tree = model.tree();
    println!(
        "initial: cash {}, shares {}",
        format_rational(&s.initial.cash),
        format_rational(&s.initial.shares)
    );
    for n in tree.node_ids() {
        let p = &s.post_trade[n.0];
        println!(
            "  after {}: cash {}, shares {}",
            tree.label(n),
            format_rational(&p.cash),
            format_rational(&p.shares)
        );
    }
}

fn check(model: &CombinedCostModel, format: Format) -> Result<u8, Failure> {
    let arbitrage = decide(model).map_err(fail)?.is_arbitrage();
    match format {
        Format::Json => print_json(&json!({ "verdict": verdict_name(arbitrage) })),
        Format::Text => println!(
            "{}",
            if arbitrage {
                "Arbitrage"
            } else {
                "NoArbitrage"
            }
        ),
    }
    Ok(verdict_code(arbitrage))
}

fn certificate(model: &CombinedCostModel, format: Format) -> Result<u8, Failure> {
    match decide(model).map_err(fail)? {
        Verdict::NoArbitrage { certificate } => {
            match format {
                Format::Json => print_json(&certificate_to_value(model.tree(), &certificate)),
                Format::Text => print_certificate(model, &certificate),
            }
            Ok(EXIT_OK)
        }
        Verdict::Arbitrage { .. } => {
            eprintln!("model admits arbitrage; no certificate exists");
            Ok(EXIT_ARBITRAGE)
        }
    }
}

fn arbitrage(model: &CombinedCostModel, format: Format) -> Result<u8, Failure> {
    let tree = model.tree();
    match decide(model).map_err(fail)? {
        Verdict::NoArbitrage { .. } => {
            match format {
                Format::Json => print_json(&json!({ "verdict": "no_arbitrage" })),
                Format::Text => println!("NoArbitrage"),
            }
            Ok(EXIT_OK)
        }
        Verdict::Arbitrage { strategy, witness } => {
            match format {
                Format::Json => print_json(&json!({
                    "verdict": "arbitrage",
                    "strategy": strategy_to_value(tree, &strategy),
                    "witness": witness_to_value(tree, &witness),
                })),
                Format::Text => {
                    let stop: Vec<&str> =
                        witness.stop.cut().iter().map(|&n| tree.label(n)).collect();
                    println!(
                        "witness: t = {}, node {}, case {}, stop {{{}}}, z = {}",
                        witness.time,
                        tree.label(witness.node),
                        witness.case.as_str(),
                        stop.join(", "),
                        format_rational(&witness.quantity)
                    );
                    print_strategy(model, &strategy);
                }
            }
            Ok(EXIT_ARBITRAGE)
        }
    }
}

fn verify(
    model: &CombinedCostModel,
    cert_path: Option<&Path>,
    strategy_path: Option<&Path>,
    format: Format,
) -> Result<u8, Failure> {
    let tree = model.tree();
    let (ok, detail) = if let Some(path) = cert_path {
        let cert = certificate_from_json(tree, &read(path)?).map_err(fail)?;
        let report = verify_certificate(model, &cert);
        let detail: Vec<String> = report.failures.iter().map(|f| format!("{f:?}")).collect();
        (report.ok, detail)
    } else {
        let path = strategy_path.expect("clap requires one of the two");
        let s = strategy_from_json(tree, &read(path)?).map_err(fail)?;
        let ok = is_arbitrage(model, &s).map_err(fail)?;
        let detail = if ok {
            Vec::new()
        } else {
            vec!["strategy is not an arbitrage".to_string()]
        };
        (ok, detail)
    };
    match format {
        Format::Json => print_json(&json!({ "ok": ok, "failures": detail })),
        Format::Text => {
            println!("{}", if ok { "verified" } else { "rejected" });
            for line in &detail {
                println!("  {line}");
            }
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

fn search(model: &CombinedCostModel, method: Method) -> Result<Option<Strategy>, Failure> {
    match method {
        Method::Exhaustive => exhaustive_search(model),
        Method::Simple => simple_search(model),
    }
    .map_err(fail)
}

fn oracle(model: &CombinedCostModel, method: Method, format: Format) -> Result<u8, Failure> {
    let found = search(model, method)?;
    match format {
        Format::Json => {
            let mut out =
                json!({ "method": method.name(), "verdict": verdict_name(found.is_some()) });
            if let Some(s) = &found {
                out["strategy"] = strategy_to_value(model.tree(), s);
            }
            print_json(&out);
        }
        Format::Text => {
            println!(
                "{}",
                if found.is_some() {
                    "Arbitrage"
                } else {
                    "NoArbitrage"
                }
            );
            if let Some(s) = &found {
                print_strategy(model, s);
            }
        }
    }
    Ok(verdict_code(found.is_some()))
}

fn agree(model: &CombinedCostModel, format: Format) -> Result<u8, Failure> {
    let decided = decide(model).map_err(fail)?.is_arbitrage();
    let exhaustive = search(model, Method::Exhaustive)?.is_some();
    let simple = search(model, Method::Simple)?.is_some();
    let agree = decided == exhaustive && exhaustive == simple;
    match format {
        Format::Json => print_json(&json!({
            "agree": agree,
            "decide": verdict_name(decided),
            "exhaustive": verdict_name(exhaustive),
            "simple": verdict_name(simple),
        })),
        Format::Text => {
            println!("decide:     {}", verdict_name(decided));
            println!("exhaustive: {}", verdict_name(exhaustive));
            println!("simple:     {}", verdict_name(simple));
            println!("{}", if agree { "agree" } else { "DISAGREE" });
        }
    }
    Ok(if agree { EXIT_OK } else { EXIT_FAILED })
}

fn rational_arg(text: &str, flag: &str) -> Result<Rational, Failure> {
    parse_rational(text).map_err(|e| Failure::invalid(format!("--{flag}: {e}")))
}

fn range_arg(text: &str, flag: &str) -> Result<(Rational, Rational), Failure> {
    let (lo, hi) = text
        .split_once("..")
        .ok_or_else(|| Failure::invalid(format!("--{flag}: expected lo..hi, got {text:?}")))?;
    Ok((rational_arg(lo, flag)?, rational_arg(hi, flag)?))
}

fn branching_arg(text: &str) -> Result<(usize, usize), Failure> {
    let bad = || Failure::invalid(format!("--branching: expected min..max, got {text:?}"));
    let (lo, hi) = text.split_once("..").ok_or_else(bad)?;
    Ok((
        lo.parse().map_err(|_| bad())?,
        hi.parse().map_err(|_| bad())?,
    ))
}

fn espm_demo(q_args: &[String], format: Format) -> Result<u8, Failure> {
    let model = example1_model();
    let tree = model.tree();
    let qs: Vec<Rational> = if q_args.is_empty() {
        (1..=9).map(|k| rat(k, 10)).collect()
    } else {
        q_args
            .iter()
            .map(|q| rational_arg(q, "q"))
            .collect::<Result<_, _>>()?
    };
    let certificate = match decide(&model).map_err(fail)? {
        Verdict::NoArbitrage { certificate } => certificate,
        Verdict::Arbitrage { .. } => {
            return Err(Failure {
                code: EXIT_FAILED,
                message: "reference model reported as arbitrage".into(),
            })
        }
    };
    let mut rows = Vec::new();
    for q in &qs {
        let measure = example1_measure(q);
        let found = espm_falsify(&model, &measure).map_err(fail)?;
        let row = match &found {
            Some(s) => {
                let e = expected_liquidation(&model, &measure, s).map_err(fail)?;
                Some((s.post_trade[tree.root().0].shares.clone(), e))
            }
            None => None,
        };
        rows.push((q.clone(), row));
    }
    match format {
        Format::Json => {
            let falsifiers: Vec<Value> = rows
                .iter()
                .map(|(q, row)| match row {
                    Some((y, e)) => json!({
                        "q": format_rational(q),
                        "shares": format_rational(y),
                        "expected_liquidation": format_rational(e),
                        "strategy": strategy_to_value(tree, &root_trade_and_hold(&model, y)),
                    }),
                    None => json!({ "q": format_rational(q), "shares": null }),
                })
                .collect();
            print_json(&json!({
                "model": serde_json::from_str::<Value>(&serialize_model(&model)).expect("valid json"),
                "certificate": certificate_to_value(tree, &certificate),
                "falsifiers": falsifiers,
            }));
        }
        Format::Text => {
            println!("reference model is arbitrage-free; certificate:");
            print_certificate(&model, &certificate);
            println!("falsifying strategies (hold y shares bought at the root):");
            for (q, row) in &rows {
                match row {
                    Some((y, e)) => println!(
                        "  q(u) = {}: y = {}, E[L] = {}",
                        format_rational(q),
                        format_rational(y),
                        format_rational(e)
                    ),
                    None => println!("  q(u) = {}: none found", format_rational(q)),
                }
            }
        }
    }
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    let format = cli.format;
    match cli.command {
        Command::Check { model } => check(&load_model(&model)?, format),
        Command::Certificate { model } => certificate(&load_model(&model)?, format),
        Command::Arbitrage { model } => arbitrage(&load_model(&model)?, format),
        Command::Verify {
            model,
            certificate,
            strategy,
        } => verify(
            &load_model(&model)?,
            certificate.as_deref(),
            strategy.as_deref(),
            format,
        ),
        Command::Oracle { model, method } => oracle(&load_model(&model)?, method, format),
        Command::Agree { model } => agree(&load_model(&model)?, format),
        Command::Gen {
            seed,
            depth,
            branching,
            price_range,
            spread_probability,
            spread_range,
            fixed_range,
            denominator,
            output,
        } => {
            let cfg = GeneratorConfig {
                seed,
                depth,
                branching: branching_arg(&branching)?,
                price_range: range_arg(&price_range, "price-range")?,
                spread_probability: rational_arg(&spread_probability, "spread-probability")?,
                spread_range: range_arg(&spread_range, "spread-range")?,
                fixed_range: range_arg(&fixed_range, "fixed-range")?,
                denominator,
            };
            let text = serialize_model(&generate_model(&cfg).map_err(fail)?);
            match output {
                Some(path) => fs::write(&path, text + "\n")
                    .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?,
                None => println!("{text}"),
            }
            Ok(EXIT_OK)
        }
        Command::EspmDemo { q } => espm_demo(&q, format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                EXIT_INVALID
            } else {
                EXIT_OK
            });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

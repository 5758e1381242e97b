//! Command-line front end. Data goes to stdout as JSON; failures print an
//! `{"error": {"kind", "detail"}}` document and exit with 2 for bad input or
//! 3 for solver failures.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use ramex::plan_polytope::{build_constraints, ConstraintSystem};
use ramex::{
    all_criteria, exchange_value, optimize_h, parse_economy, parse_graph, parse_plan, polytope_dimension_formula,
    polytope_dimension_rank, sigma_sweep, Economy, Error, HResult, Tolerances, TransportPath, TransportPlan,
};

#[derive(Parser)]
#[command(name = "ramex", version, about = "Exchange value and branched transport cost of transport networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Economy document.
    #[arg(long, global = true)]
    economy: Option<PathBuf>,
    /// Transport path document.
    #[arg(long, global = true)]
    graph: Option<PathBuf>,
    /// Plan document; defaults to the economy's normalized demand.
    #[arg(long, global = true)]
    plan: Option<PathBuf>,
    /// Cost exponent in [0, 1].
    #[arg(long, global = true, default_value_t = 0.5)]
    alpha: f64,
    /// Weight of the exchange value; repeat for a sweep.
    #[arg(long, global = true)]
    sigma: Vec<f64>,
    /// `F` sets every float tolerance; `key=value` sets one. Repeatable.
    #[arg(long, global = true)]
    tol: Vec<String>,
    /// Branching vertices allowed in the topology search.
    #[arg(long = "max-interior", global = true, default_value_t = 2)]
    max_interior: usize,
    /// Compact JSON (the default).
    #[arg(long, global = true, conflicts_with = "pretty")]
    json: bool,
    /// Indented JSON.
    #[arg(long, global = true)]
    pretty: bool,
    /// Emit a sigma sweep as CSV instead of JSON.
    #[arg(long, global = true)]
    csv: bool,
    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Normalized demand plan and the induced measures.
    Demand,
    /// Route matrix of a path.
    Routes,
    /// Feasible-polytope dimension by rank and by formula.
    Dims,
    /// Exchange value of a path for an economy.
    Value,
    /// Zero and positivity criteria.
    Criteria,
    /// Branched transport cost of a path.
    Cost,
    /// Minimize cost minus weighted exchange value over small topologies.
    Optimize,
    /// Graphviz rendering of a path.
    ExportDot,
}

enum Failure {
    Usage(String),
    Io(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn report(&self) -> (Value, u8) {
        let (kind, detail, code) = match self {
            Failure::Usage(d) => ("UsageError", d.clone(), 2),
            Failure::Io(d) => ("IoError", d.clone(), 2),
            Failure::Lib(e) => (e.kind(), e.to_string(), if e.is_input_error() { 2 } else { 3 }),
        };
        (json!({ "error": { "kind": kind, "detail": detail } }), code)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn tolerances(specs: &[String]) -> Outcome<Tolerances> {
    let mut tol = Tolerances::default();
    for spec in specs {
        let bad = |msg: String| Failure::Usage(format!("--tol {spec}: {msg}"));
        match spec.split_once('=') {
            Some((key, value)) => {
                let value: f64 = value.parse().map_err(|e| bad(format!("{e}")))?;
                tol.set(key.trim(), value).map_err(bad)?;
            }
            None => {
                let value: f64 = spec.parse().map_err(|e| bad(format!("{e}")))?;
                for key in ["balance", "rank", "interior", "opt", "numeric", "positive", "collinear", "geometry", "merge"] {
                    tol.set(key, value).map_err(bad)?;
                }
            }
        }
    }
    Ok(tol)
}

struct Context {
    cli: Cli,
    tol: Tolerances,
}

impl Context {
    fn economy(&self) -> Outcome<Economy> {
        let path = self.cli.economy.as_ref().ok_or_else(|| Failure::Usage("--economy is required".into()))?;
        Ok(parse_economy(&read(path)?)?)
    }

    fn graph(&self) -> Outcome<TransportPath> {
        let path = self.cli.graph.as_ref().ok_or_else(|| Failure::Usage("--graph is required".into()))?;
        Ok(parse_graph(&read(path)?, &self.tol)?)
    }

    /// The explicit plan, else the economy's demand, else none.
    fn plan(&self, economy: Option<&Economy>) -> Outcome<Option<TransportPlan>> {
        if let Some(path) = &self.cli.plan {
            return Ok(Some(parse_plan(&read(path)?)?));
        }
        match economy {
            Some(e) => Ok(Some(e.demand_profile()?.plan)),
            None if self.cli.economy.is_some() => Ok(Some(self.economy()?.demand_profile()?.plan)),
            None => Ok(None),
        }
    }

    fn with_meta(&self, value: impl Serialize) -> Outcome<Value> {
        let mut value = serde_json::to_value(value).map_err(|e| Failure::Io(e.to_string()))?;
        if let Value::Object(map) = &mut value {
            map.insert("tolerances".into(), json!(self.tol));
        }
        Ok(value)
    }
}

enum Output {
    Json(Value),
    Text(String),
}

fn run(ctx: &Context) -> Outcome<Output> {
    let json = |v: Value| Ok(Output::Json(v));
    match ctx.cli.command {
        Command::Demand => {
            let profile = ctx.economy()?.demand_profile()?;
            json(ctx.with_meta(json!({
                "q_bar": profile.plan,
                "floors": profile.floors,
                "scale": profile.scale,
                "sources": profile.sources,
                "sinks": profile.sinks,
            }))?)
        }
        Command::Routes => {
            let g = ctx.graph()?;
            let routes = g.route_matrix()?;
            let (k, l) = routes.shape();
            let ids = |vs: &[usize]| vs.iter().map(|&v| g.vertices()[v].id.clone()).collect::<Vec<_>>();
            let table: Vec<Vec<Value>> = (0..k)
                .map(|i| {
                    (0..l)
                        .map(|j| match routes.get(i, j) {
                            Some(r) => json!({ "vertices": ids(&r.vertices), "edges": r.edges }),
                            None => Value::Null,
                        })
                        .collect()
                })
                .collect();
            json(ctx.with_meta(json!({ "k": k, "l": l, "routes": table }))?)
        }
        Command::Dims => {
            let g = ctx.graph()?;
            let cs = match ctx.plan(None)? {
                Some(q) => build_constraints(&g, &q, None, &ctx.tol)?,
                None => ConstraintSystem::structural(&g)?,
            };
            let rank_dim = polytope_dimension_rank(&cs, &ctx.tol);
            let formula_dim = polytope_dimension_formula(&g)?;
            json(ctx.with_meta(json!({
                "rank_dim": rank_dim,
                "formula_dim": formula_dim,
                "agree": rank_dim as i64 == formula_dim,
            }))?)
        }
        Command::Value => {
            let e = ctx.economy()?;
            let g = ctx.graph()?;
            let q = ctx.plan(Some(&e))?.expect("economy supplies a plan");
            json(ctx.with_meta(exchange_value(&e, &g, &q, &ctx.tol)?)?)
        }
        Command::Criteria => {
            let e = ctx.economy()?;
            let g = ctx.graph()?;
            let q = ctx.plan(Some(&e))?.expect("economy supplies a plan");
            json(ctx.with_meta(json!({ "criteria": all_criteria(&e, &g, &q, &ctx.tol)? }))?)
        }
        Command::Cost => {
            let g = ctx.graph()?;
            if !(0.0..=1.0).contains(&ctx.cli.alpha) {
                return Err(Error::InvalidParameter(format!("alpha = {} is outside [0, 1]", ctx.cli.alpha)).into());
            }
            json(ctx.with_meta(json!({ "alpha": ctx.cli.alpha, "M_alpha": g.m_alpha_cost(ctx.cli.alpha) }))?)
        }
        Command::Optimize => {
            let e = ctx.economy()?;
            let (alpha, cap) = (ctx.cli.alpha, ctx.cli.max_interior);
            let results: Vec<HResult> = match ctx.cli.sigma.as_slice() {
                [] => vec![optimize_h(&e, alpha, 0.0, cap, &ctx.tol)?],
                [s] => vec![optimize_h(&e, alpha, *s, cap, &ctx.tol)?],
                many => sigma_sweep(&e, alpha, many, cap, &ctx.tol)?,
            };
            for r in &results {
                for c in r.candidates.iter().filter(|c| !c.converged) {
                    eprintln!("warning: geometry for {} stopped before convergence", c.signature.digest);
                }
            }
            if ctx.cli.csv {
                return Ok(Output::Text(sweep_csv(&results)));
            }
            match results.as_slice() {
                [one] => json(ctx.with_meta(one)?),
                many => json(ctx.with_meta(json!({ "sweep": many }))?),
            }
        }
        Command::ExportDot => Ok(Output::Text(ctx.graph()?.to_dot())),
    }
}

fn sweep_csv(results: &[HResult]) -> String {
    let mut out = String::from("sigma,rank,digest,M_alpha,V,H,argmin\n");
    for r in results {
        for (rank, c) in r.candidates.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.sigma,
                rank,
                c.signature.digest,
                c.m_alpha,
                c.value,
                c.h,
                rank == r.argmin
            ));
        }
    }
    out
}

fn emit(text: &str, out: Option<&Path>) -> Outcome<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let (doc, code) = Failure::Usage(e.kind().to_string() + ": " + &e.render().to_string()).report();
            println!("{doc}");
            return ExitCode::from(code);
        }
    };
    let pretty = cli.pretty;
    let result = tolerances(&cli.tol).and_then(|tol| {
        let ctx = Context { cli, tol };
        let text = match run(&ctx)? {
            Output::Json(v) if pretty => serde_json::to_string_pretty(&v).expect("finite JSON") + "\n",
            Output::Json(v) => v.to_string() + "\n",
            Output::Text(t) => t,
        };
        emit(&text, ctx.cli.out.as_deref())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (doc, code) = failure.report();
            println!("{doc}");
            ExitCode::from(code)
        }
    }
}

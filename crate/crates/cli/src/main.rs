use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use locvna::algebra::{
    commutant, dec_space, diag_space, span_closure, Closure, OperatorSubspace, DEFAULT_DIM_BUDGET,
};
use locvna::linalg::CMatrix;
use locvna::scenario::random::{random_scenario, Limits};
use locvna::scenario::run::{run_batch, Report, RunOptions};
use locvna::scenario::{emit, parse_scenario, BuiltScenario, Scenario};

#[derive(Parser)]
#[command(name = "locvna", version, about = "Direct integrals of locally Hilbert spaces: validation and operator-algebra checks")]
struct Cli {
    /// Machine-readable output
    #[arg(long, global = true)]
    json: bool,
    /// Exit with status 1 when a check fails
    #[arg(long, global = true)]
    strict: bool,
    /// Seed for random sampling and generation
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tolerance for subspace comparisons
    #[arg(long, global = true, default_value_t = 1e-9)]
    tol: f64,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Validate a scenario and summarize the space it describes
    Validate { file: PathBuf },
    /// Run every requested check on one or more scenarios
    Verify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Commutant and double commutant of an algebra of the scenario
    Commutant {
        file: PathBuf,
        /// dec, diag, scalars, or the name of an operator (its generated *-algebra)
        #[arg(long, default_value = "diag")]
        of: String,
    },
    /// Classify the named operators of a scenario
    Classify {
        file: PathBuf,
        #[arg(long)]
        operator: Option<String>,
    },
    /// Generate seeded random scenarios
    Random {
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 4)]
        atoms: usize,
        #[arg(long, default_value_t = 2)]
        fiber_dim: usize,
        #[arg(long, default_value_t = 1)]
        count: u64,
        /// Run the checks instead of printing the scenarios
        #[arg(long)]
        run: bool,
        /// Write scenarios to this directory as random-<seed>.toml
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Named {
    Dec,
    Diag,
    Scalars,
}

/// Outcome of a verb: either checks ran (pass or fail) or the input was
/// unusable.
enum Outcome {
    Checked(bool),
    Usage(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.verb {
        Verb::Validate { file } => validate(&cli, file),
        Verb::Verify { files } => verify(&cli, files),
        Verb::Commutant { file, of } => commutant_verb(&cli, file, of),
        Verb::Classify { file, operator } => classify(&cli, file, operator.as_deref()),
        Verb::Random { levels, atoms, fiber_dim, count, run, out } => {
            random(&cli, Limits::new(*levels, *atoms, *fiber_dim), *count, *run, out.as_deref())
        }
    };
    match outcome {
        Outcome::Checked(true) => ExitCode::SUCCESS,
        Outcome::Checked(false) => {
            if cli.strict {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Outcome::Usage(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn options(cli: &Cli) -> RunOptions {
    RunOptions { tol: cli.tol, budget: DEFAULT_DIM_BUDGET, seed: cli.seed }
}

fn load(path: &Path) -> Result<Scenario, Outcome> {
    parse_scenario(path).map_err(|e| Outcome::Usage(format!("{}: {e}", path.display())))
}

/// Builds a scenario; a semantic failure is reported as a failed check.
fn build(cli: &Cli, scenario: &Scenario) -> Result<BuiltScenario, Outcome> {
    scenario.build().map_err(|e| {
        if cli.json {
            println!("{}", json!({ "valid": false, "error": e.to_string() }));
        } else {
            println!("INVALID: {e}");
        }
        Outcome::Checked(false)
    })
}

fn validate(cli: &Cli, file: &Path) -> Outcome {
    let scenario = match load(file) {
        Ok(s) => s,
        Err(o) => return o,
    };
    let built = match build(cli, &scenario) {
        Ok(b) => b,
        Err(o) => return o,
    };
    let space = &built.space;
    let poset = space.poset();
    let sigma = space.measure().limit_sigma();
    let levels: Vec<Value> = space
        .level_summaries()
        .into_iter()
        .map(|s| json!({ "level": s.level, "dim": s.dim, "nontrivial": s.nontrivial }))
        .collect();
    let null: Vec<&str> = space.null_atoms().iter().map(|a| space.atom_name(a)).collect();
    if cli.json {
        let v = json!({
            "valid": true,
            "digest": scenario.digest(),
            "levels": poset.names(),
            "greatest": poset.name(poset.greatest()),
            "atoms": space.measure().system().atom_names(),
            "null_atoms": null,
            "dim": space.dim(),
            "level_dims": levels,
            "sigma_size": sigma.sigma.len(),
            "sigma0_size": sigma.sigma0.len(),
            "sigma0_equals_sigma": sigma.sigma0_equals_sigma,
            "operators": built.operators.iter().map(|(n, _)| n).collect::<Vec<_>>(),
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("json"));
    } else {
        println!("valid scenario {}", scenario.name.as_deref().unwrap_or("(unnamed)"));
        println!("levels    {} (greatest {})", poset.names().join(", "), poset.name(poset.greatest()));
        println!("atoms     {}", space.measure().system().atom_names().join(", "));
        if !null.is_empty() {
            println!("null      {}", null.join(", "));
        }
        println!("dimension {}", space.dim());
        for s in space.level_summaries() {
            println!("  H_{} has dimension {}", s.level, s.dim);
        }
        println!(
            "sigma     |Σ| = {}, |Σ_0| = {}, Σ_0 {} Σ",
            sigma.sigma.len(),
            sigma.sigma0.len(),
            if sigma.sigma0_equals_sigma { "=" } else { "≠" }
        );
    }
    Outcome::Checked(true)
}

fn print_reports(cli: &Cli, reports: &[Report]) {
    if cli.json {
        if reports.len() == 1 {
            println!("{}", reports[0].to_json());
        } else {
            println!("{}", serde_json::to_string_pretty(reports).expect("json"));
        }
    } else {
        for r in reports {
            print!("{}", r.render_text());
        }
    }
}

fn verify(cli: &Cli, files: &[PathBuf]) -> Outcome {
    let mut scenarios = Vec::with_capacity(files.len());
    for f in files {
        match load(f) {
            Ok(s) => scenarios.push(s),
            Err(o) => return o,
        }
    }
    let reports = run_batch(&scenarios, &options(cli));
    print_reports(cli, &reports);
    Outcome::Checked(reports.iter().all(|r| r.passed))
}

fn commutant_verb(cli: &Cli, file: &Path, of: &str) -> Outcome {
    let scenario = match load(file) {
        Ok(s) => s,
        Err(o) => return o,
    };
    let built = match build(cli, &scenario) {
        Ok(b) => b,
        Err(o) => return o,
    };
    let space: Arc<_> = built.space.clone();
    let algebra = match Named::from_str(of, true) {
        Ok(Named::Dec) => Ok(dec_space(space.clone())),
        Ok(Named::Diag) => Ok(diag_space(space.clone())),
        Ok(Named::Scalars) => span_closure(space.clone(), &[], Closure::ALGEBRA, DEFAULT_DIM_BUDGET),
        Err(_) => match built.operators.iter().find(|(n, _)| n == of) {
            Some((_, t)) => span_closure(space.clone(), std::slice::from_ref(t), Closure::ALGEBRA, DEFAULT_DIM_BUDGET),
            None => return Outcome::Usage(format!("no algebra or operator named `{of}`")),
        },
    };
    let result = algebra.and_then(|m| {
        let c1 = commutant(&m)?;
        let c2 = commutant(&c1)?;
        Ok((m, c1, c2))
    });
    let (m, c1, c2) = match result {
        Ok(x) => x,
        Err(e) => {
            println!("FAIL: {e}");
            return Outcome::Checked(false);
        }
    };
    let residual = m.span().distance_to(c2.span());
    let equal = residual <= cli.tol;
    let dec = dec_space(space.clone());
    let diag = diag_space(space);
    let eq = |a: &OperatorSubspace, b: &OperatorSubspace| a.span().distance_to(b.span()) <= cli.tol;
    if cli.json {
        let v = json!({
            "algebra": of,
            "dim": m.dim(),
            "commutant_dim": c1.dim(),
            "double_commutant_dim": c2.dim(),
            "double_commutant_equal": equal,
            "residual": if residual.is_finite() { residual } else { f64::MAX },
            "commutant_equals_dec": eq(&c1, &dec),
            "commutant_equals_diag": eq(&c1, &diag),
        });
        println!("{}", serde_json::to_string_pretty(&v).expect("json"));
    } else {
        println!("algebra   {of}: dim {}", m.dim());
        println!("commutant dim {}{}", c1.dim(), if eq(&c1, &dec) { " (= DEC)" } else if eq(&c1, &diag) { " (= DIAG)" } else { "" });
        println!("double    dim {}, M'' {} M", c2.dim(), if equal { "=" } else { "≠" });
    }
    Outcome::Checked(true)
}

fn matrix_json(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

fn classify(cli: &Cli, file: &Path, only: Option<&str>) -> Outcome {
    let scenario = match load(file) {
        Ok(s) => s,
        Err(o) => return o,
    };
    let built = match build(cli, &scenario) {
        Ok(b) => b,
        Err(o) => return o,
    };
    let selected: Vec<_> = built.operators.iter().filter(|(n, _)| only.is_none_or(|o| o == n)).collect();
    if selected.is_empty() {
        return Outcome::Usage(match only {
            Some(o) => format!("no operator named `{o}`"),
            None => "scenario declares no operators".into(),
        });
    }
    let space = &built.space;
    let mut out = Vec::new();
    for (name, t) in selected {
        let report = t.classify();
        let seminorms: Vec<Value> = space
            .poset()
            .levels()
            .map(|l| json!({ "level": space.poset().name(l), "value": t.seminorm(l) }))
            .collect();
        if cli.json {
            let family = report.decomposable.as_ref().map(|f| {
                f.blocks
                    .iter()
                    .enumerate()
                    .filter_map(|(a, b)| b.as_ref().map(|b| (space.atom_name(a).to_string(), matrix_json(b))))
                    .collect::<serde_json::Map<_, _>>()
            });
            let symbol = report.diagonalizable.as_ref().map(|s| {
                s.values
                    .iter()
                    .enumerate()
                    .filter_map(|(a, v)| v.map(|v| (space.atom_name(a).to_string(), json!([v.re, v.im]))))
                    .collect::<serde_json::Map<_, _>>()
            });
            out.push(json!({
                "operator": name,
                "locally_bounded": report.locally_bounded,
                "decomposable": report.decomposable.is_some(),
                "diagonalizable": report.diagonalizable.is_some(),
                "family": family,
                "symbol": symbol,
                "seminorms": seminorms,
                "witnesses": report.witnesses,
            }));
        } else {
            println!("operator {name}");
            println!("  locally bounded: yes");
            println!("  decomposable:    {}", if report.decomposable.is_some() { "yes" } else { "no" });
            println!("  diagonalizable:  {}", if report.diagonalizable.is_some() { "yes" } else { "no" });
            if let Some(symbol) = &report.diagonalizable {
                let parts: Vec<String> = symbol
                    .values
                    .iter()
                    .enumerate()
                    .filter_map(|(a, v)| v.map(|v| format!("{} ↦ {v}", space.atom_name(a))))
                    .collect();
                println!("  symbol:          {}", parts.join(", "));
            }
            for w in &report.witnesses {
                println!("  - {w}");
            }
            for l in space.poset().levels() {
                println!("  p_{} = {}", space.poset().name(l), t.seminorm(l));
            }
        }
    }
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&out).expect("json"));
    }
    Outcome::Checked(true)
}

fn random(cli: &Cli, limits: Limits, count: u64, run_checks: bool, out: Option<&Path>) -> Outcome {
    let mut scenarios = Vec::new();
    for seed in cli.seed..cli.seed.saturating_add(count) {
        match random_scenario(seed, limits) {
            Ok(s) => scenarios.push(s),
            Err(e) => return Outcome::Usage(e.to_string()),
        }
    }
    if let Some(dir) = out {
        if let Err(e) = std::fs::create_dir_all(dir) {
            return Outcome::Usage(format!("{}: {e}", dir.display()));
        }
        for (s, seed) in scenarios.iter().zip(cli.seed..) {
            let path = dir.join(format!("random-{seed}.toml"));
            if let Err(e) = std::fs::write(&path, emit(s)) {
                return Outcome::Usage(format!("{}: {e}", path.display()));
            }
        }
    }
    if run_checks {
        let reports = run_batch(&scenarios, &options(cli));
        if cli.json {
            print_reports(cli, &reports);
        } else {
            for r in &reports {
                let failed: Vec<&str> = r.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                println!(
                    "{} {}{}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.scenario.as_deref().unwrap_or(""),
                    if failed.is_empty() { String::new() } else { format!(": {}", failed.join("; ")) }
                );
            }
            let passed = reports.iter().filter(|r| r.passed).count();
            println!("{passed}/{} scenarios passed", reports.len());
        }
        return Outcome::Checked(reports.iter().all(|r| r.passed));
    }
    if out.is_none() {
        if scenarios.len() > 1 {
            return Outcome::Usage("--count > 1 needs --out or --run".into());
        }
        if cli.json {
            println!("{}", serde_json::to_string_pretty(&scenarios[0]).expect("json"));
        } else {
            print!("{}", emit(&scenarios[0]));
        }
    }
    Outcome::Checked(true)
}

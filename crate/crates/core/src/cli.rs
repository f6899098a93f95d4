//! Command-line front end. [`dispatch`] does all the work and returns the
//! exit status and both output streams, so it can be tested in-process.

use std::path::{Path, PathBuf};

use clap::error::{ContextKind, ContextValue, ErrorKind};
use clap::{Args, CommandFactory, Parser, Subcommand};
use num_complex::Complex64;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::coords::{self, CoordMap, Matrix};
use crate::covariant::{self, CovariantSpec, VectorField};
use crate::differint::{differint, DifferintSpec, Scheme};
use crate::error::Error;
use crate::expr::Expr;
use crate::exterior::{self, ExteriorSpec};
use crate::field::{self, FieldRef};
use crate::forms::{double_hodge_sign, FormJson, FracForm, OrderSignature};
use crate::identities::{self, fmt12, round12, Profile};
use crate::matrix::{self, CMat, Classification, MatrixOrder};
use crate::par::Execution;

/// Version of the JSON documents; see `schema/fracform-output.schema.json`.
pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Parser)]
#[command(name = "fracform", version, about = "Fractional exterior calculus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Riemann-Liouville differintegral of an expression
    Differint(DifferintArgs),
    /// Differintegral of matrix order
    MatrixDifferint(MatrixDifferintArgs),
    /// Fractional transformation matrices of a chart
    Jacobian(ChartArgs),
    /// Fractional metric of a chart
    Metric(ChartArgs),
    /// Wedge product of two forms
    Wedge(PairArgs),
    /// Hodge dual of a form
    Hodge(HodgeArgs),
    /// Inner product of two forms
    Inner(InnerArgs),
    /// Residual of d^nu d^nu on a form
    Poincare(PoincareArgs),
    /// Fractional covariant derivative of a vector field
    Covariant(CovariantArgs),
    /// Run the identity conformance suite
    Identities(IdentitiesArgs),
    /// Polar worked example at order -1
    PolarExample(PolarArgs),
}

#[derive(Debug, Args)]
struct PointArgs {
    /// point as comma-separated coordinates; repeatable
    #[arg(long, value_name = "X1,X2,..")]
    at: Vec<String>,
    /// CSV file with a header row, one point per row
    #[arg(long, value_name = "FILE")]
    points: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DifferintArgs {
    #[arg(long)]
    expr: String,
    #[arg(long, allow_hyphen_values = true)]
    order: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lower: f64,
    /// 1-based variable index
    #[arg(long, default_value_t = 1)]
    var: usize,
    #[arg(long, default_value = "quadrature", value_parser = ["quadrature", "grunwald", "auto"])]
    scheme: String,
    #[arg(long, default_value_t = 32)]
    grid: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[command(flatten)]
    points: PointArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct MatrixDifferintArgs {
    #[arg(long)]
    expr: String,
    /// JSON rows of [re, im] pairs, inline or a file path
    #[arg(long)]
    matrix: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    lower: f64,
    #[arg(long, default_value_t = 1)]
    var: usize,
    #[command(flatten)]
    points: PointArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ChartArgs {
    #[arg(long, value_parser = ["polar", "shear", "exp-radial", "identity"])]
    chart: String,
    #[arg(long, allow_hyphen_values = true)]
    order: Option<f64>,
    /// matrix order instead of --order (jacobian only)
    #[arg(long)]
    matrix: Option<String>,
    #[arg(long, value_name = "Y1,Y2,..", allow_hyphen_values = true)]
    at: String,
    #[arg(long, value_name = "A1,A2,..", allow_hyphen_values = true)]
    lower_x: Option<String>,
    #[arg(long, value_name = "A1,A2,..", allow_hyphen_values = true)]
    lower_y: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct PairArgs {
    /// form as JSON, inline or a file path
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct HodgeArgs {
    #[arg(long)]
    form: String,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct InnerArgs {
    #[arg(long)]
    a: String,
    #[arg(long)]
    b: String,
    /// contract with the inverse metric of this chart
    #[arg(long, value_parser = ["polar", "shear", "exp-radial", "identity"], requires = "at")]
    chart: Option<String>,
    #[arg(long, value_name = "Y1,Y2,..", allow_hyphen_values = true)]
    at: Option<String>,
    #[arg(long, value_name = "A1,A2,..", allow_hyphen_values = true)]
    lower_y: Option<String>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct PoincareArgs {
    /// 0-form coefficient; alternative to --form
    #[arg(long, conflicts_with = "form", requires = "n")]
    expr: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    /// form with expression or numeric coefficients
    #[arg(long)]
    form: Option<String>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "matrix")]
    order: Option<f64>,
    #[arg(long, conflicts_with = "order")]
    matrix: Option<String>,
    #[arg(long, value_name = "A1,A2,..", allow_hyphen_values = true)]
    lower: Option<String>,
    #[command(flatten)]
    points: PointArgs,
    #[arg(long)]
    sequential: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct CovariantArgs {
    #[arg(long, value_parser = ["polar", "shear", "exp-radial", "identity"])]
    chart: String,
    /// vector components as expressions in y, separated by ';'
    #[arg(long, value_delimiter = ';', required = true)]
    field: Vec<String>,
    #[arg(long, allow_hyphen_values = true, required_unless_present = "matrix")]
    order: Option<f64>,
    #[arg(long, conflicts_with_all = ["order", "decompose"])]
    matrix: Option<String>,
    /// 1-based differentiation direction
    #[arg(long)]
    direction: usize,
    #[arg(long, value_name = "Y1,Y2,..", allow_hyphen_values = true)]
    at: String,
    #[arg(long, value_name = "A1,A2,..", allow_hyphen_values = true)]
    lower_x: Option<String>,
    #[arg(long, value_name = "A1,A2,..", allow_hyphen_values = true)]
    lower_y: Option<String>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// also split into plain differintegral and connection
    #[arg(long)]
    decompose: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct IdentitiesArgs {
    /// equation ids, e.g. eq7,eq9-12
    #[arg(long)]
    filter: Option<String>,
    #[arg(long, default_value = "fast", value_parser = ["fast", "full"])]
    profile: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sequential: bool,
    /// JSON to standard output, or to PATH with the table on standard output
    #[arg(long, value_name = "PATH", num_args = 0..=1)]
    json: Option<Option<PathBuf>>,
}

#[derive(Debug, Args)]
struct PolarArgs {
    #[arg(long)]
    r: f64,
    #[arg(long, allow_hyphen_values = true)]
    theta: f64,
    #[arg(long)]
    json: bool,
}

/// Exit status and output of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

enum Failure {
    Usage { flag: String, message: String },
    Compute(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage_err<T>(flag: &str, message: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage {
        flag: flag.to_string(),
        message: message.into(),
    })
}

/// What a subcommand produced: a JSON document and its human rendering.
struct Rendered {
    json: Value,
    text: String,
    /// the computation completed but reports a failure (suite cases)
    failed: bool,
    /// write JSON here instead of standard output
    json_path: Option<PathBuf>,
}

impl Rendered {
    fn ok(json: Value, text: String) -> Self {
        Rendered {
            json,
            text,
            failed: false,
            json_path: None,
        }
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn dispatch<I, S>(argv: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => return clap_failure(e, &argv),
    };
    let (sub, json) = (subcommand_name(&cli.command), wants_json(&cli.command));
    let result = match cli.command {
        Command::Differint(a) => run_differint(a),
        Command::MatrixDifferint(a) => run_matrix_differint(a),
        Command::Jacobian(a) => run_jacobian(a),
        Command::Metric(a) => run_metric(a),
        Command::Wedge(a) => run_wedge(a),
        Command::Hodge(a) => run_hodge(a),
        Command::Inner(a) => run_inner(a),
        Command::Poincare(a) => run_poincare(a),
        Command::Covariant(a) => run_covariant(a),
        Command::Identities(a) => run_identities(a),
        Command::PolarExample(a) => run_polar(a),
    };
    match result {
        Ok(r) => {
            let mut doc = json!({ "schema_version": SCHEMA_VERSION, "command": sub });
            if let (Value::Object(d), Value::Object(body)) = (&mut doc, r.json) {
                d.extend(body);
            }
            let doc = round_json(doc);
            let code = if r.failed { 1 } else { 0 };
            let rendered = serde_json::to_string_pretty(&doc).expect("serializable") + "\n";
            if let Some(path) = r.json_path {
                if let Err(e) = std::fs::write(&path, &rendered) {
                    return Output {
                        code: 1,
                        stdout: String::new(),
                        stderr: format!("error: cannot write {}: {e}\n", path.display()),
                    };
                }
                return Output { code, stdout: r.text, stderr: String::new() };
            }
            let stdout = if json { rendered } else { r.text };
            Output { code, stdout, stderr: String::new() }
        }
        Err(Failure::Usage { flag, message }) => Output {
            code: 2,
            stdout: String::new(),
            stderr: format!("error: {flag}: {message}\n{}\n", usage_line(Some(sub))),
        },
        Err(Failure::Compute(e)) => {
            let stdout = if json {
                let doc = json!({
                    "schema_version": SCHEMA_VERSION,
                    "command": sub,
                    "error": { "kind": error_kind(&e), "message": e.to_string() },
                });
                serde_json::to_string_pretty(&doc).expect("serializable") + "\n"
            } else {
                String::new()
            };
            Output {
                code: 1,
                stdout,
                stderr: format!("error: {e}\n"),
            }
        }
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Differint(_) => "differint",
        Command::MatrixDifferint(_) => "matrix-differint",
        Command::Jacobian(_) => "jacobian",
        Command::Metric(_) => "metric",
        Command::Wedge(_) => "wedge",
        Command::Hodge(_) => "hodge",
        Command::Inner(_) => "inner",
        Command::Poincare(_) => "poincare",
        Command::Covariant(_) => "covariant",
        Command::Identities(_) => "identities",
        Command::PolarExample(_) => "polar-example",
    }
}

fn wants_json(c: &Command) -> bool {
    match c {
        Command::Differint(a) => a.json,
        Command::MatrixDifferint(a) => a.json,
        Command::Jacobian(a) | Command::Metric(a) => a.json,
        Command::Wedge(a) => a.json,
        Command::Hodge(a) => a.json,
        Command::Inner(a) => a.json,
        Command::Poincare(a) => a.json,
        Command::Covariant(a) => a.json,
        Command::Identities(a) => matches!(a.json, Some(None)),
        Command::PolarExample(a) => a.json,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::NonFiniteIntegrand { .. } => "non_finite_integrand",
        Error::Domain(_) => "domain",
        Error::StepUnderflow { .. } => "step_underflow",
        Error::UnsupportedOrder(_) => "unsupported_order",
        Error::SchemeDisagreement { .. } => "scheme_disagreement",
        Error::Pole(_) => "pole",
        Error::NonPolynomialWeight { .. } => "non_polynomial_weight",
        Error::DivergentBoundaryTerm { .. } => "divergent_boundary_term",
        Error::ZeroMatrix => "zero_matrix",
        Error::UndefinedAtEigenvalue(_) => "undefined_at_eigenvalue",
        Error::IllConditioned(_) => "ill_conditioned",
        Error::NotNormal => "not_normal",
        Error::NonDiagonalizableOrder => "non_diagonalizable_order",
        Error::NotPositiveDefinite => "not_positive_definite",
        Error::AmbientMismatch(..) => "ambient_mismatch",
        Error::SignatureMismatch => "signature_mismatch",
        Error::BlockTooLarge { .. } => "block_too_large",
        Error::SingularSystem { .. } => "singular_system",
        Error::SeriesNoConverge { .. } => "series_no_converge",
        Error::Parse { .. } => "parse",
        Error::Invalid(_) => "invalid",
    }
}

fn usage_line(sub: Option<&str>) -> String {
    let mut cmd = Cli::command();
    let usage = match sub.and_then(|s| cmd.find_subcommand_mut(s)) {
        Some(sc) => sc.clone().bin_name(format!("fracform {}", sc.get_name())).render_usage(),
        None => cmd.render_usage(),
    };
    usage.to_string().replace("Usage: ", "usage: ").lines().next().unwrap_or("").to_string()
}

fn clap_failure(e: clap::Error, argv: &[String]) -> Output {
    match e.kind() {
        ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
            return Output {
                code: 0,
                stdout: e.render().to_string(),
                stderr: String::new(),
            }
        }
        ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
            return Output {
                code: 2,
                stdout: String::new(),
                stderr: e.render().to_string(),
            }
        }
        _ => {}
    }
    let sub = argv.get(1).map(String::as_str).filter(|s| Cli::command().find_subcommand(s).is_some());
    let flag = match e.get(ContextKind::InvalidArg) {
        Some(ContextValue::String(s)) => s.clone(),
        Some(ContextValue::Strings(v)) => v.join(", "),
        _ => sub.unwrap_or("fracform").to_string(),
    };
    let detail = e.render().to_string();
    let first = detail
        .lines()
        .next()
        .unwrap_or("")
        .trim_start_matches("error: ")
        .to_string();
    Output {
        code: 2,
        stdout: String::new(),
        stderr: format!("error: {flag}: {first}\n{}\n", usage_line(sub)),
    }
}

/// Rounds every float to 12 significant digits.
fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round12(n.as_f64().unwrap_or(f64::NAN));
            serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

// ---------------------------------------------------------------------------
// input parsing

fn parse_list(flag: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .or_else(|_| usage_err(flag, format!("expected comma-separated numbers, got '{s}'")))
}

fn parse_expr(flag: &str, s: &str) -> CliResult<Expr> {
    Expr::parse(s).or_else(|e| usage_err(flag, e.to_string()))
}

fn read_points(flag: &str, path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut rdr = match csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path) {
        Ok(r) => r,
        Err(e) => return usage_err(flag, format!("cannot read {}: {e}", path.display())),
    };
    let width = match rdr.headers() {
        Ok(h) => h.len(),
        Err(e) => return usage_err(flag, e.to_string()),
    };
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => return usage_err(flag, e.to_string()),
        };
        if rec.len() != width {
            return usage_err(flag, format!("row {} has {} fields, header has {width}", row + 1, rec.len()));
        }
        let p: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match p {
            Ok(p) => out.push(p),
            Err(_) => return usage_err(flag, format!("row {} is not numeric", row + 1)),
        }
    }
    Ok(out)
}

fn points(args: &PointArgs) -> CliResult<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for a in &args.at {
        out.push(parse_list("--at", a)?);
    }
    if let Some(p) = &args.points {
        out.extend(read_points("--points", p)?);
    }
    if out.is_empty() {
        return usage_err("--at", "give at least one point with --at or --points");
    }
    Ok(out)
}

/// Inline JSON when the text starts with `[` or `{`, otherwise a file.
fn read_json_arg<T: for<'de> Deserialize<'de>>(flag: &str, s: &str) -> CliResult<T> {
    let text = if s.trim_start().starts_with(['[', '{']) {
        s.to_string()
    } else {
        match std::fs::read_to_string(s) {
            Ok(t) => t,
            Err(e) => return usage_err(flag, format!("cannot read {s}: {e}")),
        }
    };
    serde_json::from_str(&text).or_else(|e| usage_err(flag, format!("malformed JSON: {e}")))
}

fn read_matrix(flag: &str, s: &str) -> CliResult<MatrixOrder> {
    let rows: Vec<Vec<[f64; 2]>> = read_json_arg(flag, s)?;
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return usage_err(flag, "matrix must be square and non-empty");
    }
    let entries = CMat::from_fn(m, m, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1]));
    Ok(MatrixOrder::new(entries)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockInput {
    order: f64,
    multiplicity: usize,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CoefInput {
    Number(f64),
    Expr(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TermInput {
    indices: Vec<usize>,
    coefficient: CoefInput,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FormInput {
    n: usize,
    signature: Vec<BlockInput>,
    terms: Vec<TermInput>,
}

impl FormInput {
    fn signature(&self, flag: &str) -> CliResult<OrderSignature> {
        let blocks: Vec<(f64, usize)> = self.signature.iter().map(|b| (b.order, b.multiplicity)).collect();
        OrderSignature::new(&blocks, self.n).or_else(|e| usage_err(flag, e.to_string()))
    }

    fn key(&self, flag: &str, t: &TermInput) -> CliResult<Vec<usize>> {
        if t.indices.iter().any(|&i| i == 0 || i > self.n) {
            return usage_err(flag, format!("indices are 1-based and at most n = {}", self.n));
        }
        Ok(t.indices.iter().map(|i| i - 1).collect())
    }

    fn numeric(&self, flag: &str) -> CliResult<FracForm<f64>> {
        let mut f = FracForm::zero(self.signature(flag)?);
        for t in &self.terms {
            let CoefInput::Number(c) = t.coefficient else {
                return usage_err(flag, "this command needs numeric coefficients");
            };
            let key = self.key(flag, t)?;
            f.add_term(&key, c).or_else(|e| usage_err(flag, e.to_string()))?;
        }
        Ok(f)
    }

    fn fields(&self, flag: &str) -> CliResult<FracForm<FieldRef>> {
        let mut f = FracForm::zero(self.signature(flag)?);
        for t in &self.terms {
            let coef = match &t.coefficient {
                CoefInput::Number(c) => field::constant(*c),
                CoefInput::Expr(s) => field::expr(parse_expr(flag, s)?),
            };
            let key = self.key(flag, t)?;
            f.add_term(&key, coef).or_else(|e| usage_err(flag, e.to_string()))?;
        }
        Ok(f)
    }
}

fn chart(name: &str, lower_x: &Option<String>, lower_y: &Option<String>) -> CliResult<CoordMap> {
    let map = CoordMap::builtin(name)?;
    let n = map.dim();
    let lx = match lower_x {
        Some(s) => parse_list("--lower-x", s)?,
        None => map.lower_x.clone(),
    };
    let ly = match lower_y {
        Some(s) => parse_list("--lower-y", s)?,
        None => map.lower_y.clone(),
    };
    if lx.len() != n {
        return usage_err("--lower-x", format!("expected {n} values"));
    }
    if ly.len() != n {
        return usage_err("--lower-y", format!("expected {n} values"));
    }
    Ok(map.with_limits(lx, ly)?)
}

fn chart_point(map: &CoordMap, at: &str) -> CliResult<Vec<f64>> {
    let y = parse_list("--at", at)?;
    if y.len() != map.dim() {
        return usage_err("--at", format!("expected {} coordinates", map.dim()));
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// rendering helpers

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| fmt12(*x)).collect::<Vec<_>>().join(" ")
}

fn fmt_matrix(name: &str, m: &Matrix) -> String {
    m.iter()
        .enumerate()
        .map(|(i, r)| format!("{name}[{}] {}\n", i + 1, fmt_list(r)))
        .collect()
}

fn fmt_complex(z: Complex64) -> String {
    if z.im == 0.0 {
        fmt12(z.re)
    } else {
        format!("{}{}{}i", fmt12(z.re), if z.im < 0.0 { "-" } else { "+" }, fmt12(z.im.abs()))
    }
}

fn cmat_json(m: &CMat) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([m[(i, j)].re, m[(i, j)].im])).collect()))
            .collect(),
    )
}

fn fmt_cmat(name: &str, m: &CMat) -> String {
    (0..m.nrows())
        .map(|i| {
            let row: Vec<String> = (0..m.ncols()).map(|j| fmt_complex(m[(i, j)])).collect();
            format!("{name}[{}] {}\n", i + 1, row.join(" "))
        })
        .collect()
}

fn classification_name(c: Classification) -> &'static str {
    match c {
        Classification::Normal => "normal",
        Classification::Diagonalizable => "diagonalizable",
        Classification::JordanOnly => "jordan",
    }
}

fn form_json(f: &FracForm<f64>) -> Value {
    serde_json::to_value(FormJson::from(f)).expect("serializable")
}

fn fmt_form(f: &FracForm<f64>) -> String {
    let sig: Vec<String> = f
        .signature()
        .blocks
        .iter()
        .map(|b| format!("{}x{}", fmt12(b.order), b.multiplicity))
        .collect();
    let mut out = format!("signature [{}] n={}\n", sig.join(", "), f.signature().n);
    for (k, c) in f.terms() {
        let idx: Vec<String> = k.iter().map(|i| (i + 1).to_string()).collect();
        out.push_str(&format!("[{}] {}\n", idx.join(","), fmt12(*c)));
    }
    out
}

// ---------------------------------------------------------------------------
// subcommands

fn run_differint(a: DifferintArgs) -> CliResult<Rendered> {
    let e = parse_expr("--expr", &a.expr)?;
    let pts = points(&a.points)?;
    if a.var == 0 {
        return usage_err("--var", "variables are 1-based");
    }
    let scheme = match a.scheme.as_str() {
        "grunwald" => Scheme::Grunwald,
        "auto" => Scheme::Auto,
        _ => Scheme::Quadrature,
    };
    let spec = DifferintSpec::new(a.var - 1, a.order, a.lower)
        .with_scheme(scheme)
        .with_grid_size(a.grid)
        .with_tolerance(a.tol);
    let f = field::expr(e);
    let mut results = Vec::new();
    let mut text = String::from("point value scheme estimated_error\n");
    for p in &pts {
        let r = differint(f.as_ref(), &spec, p)?;
        text.push_str(&format!(
            "{} {} {} {}\n",
            fmt_list(p),
            fmt12(r.value),
            serde_json::to_value(r.scheme_used).expect("serializable").as_str().unwrap_or(""),
            fmt12(r.estimated_error)
        ));
        results.push(json!({
            "point": p,
            "value": r.value,
            "scheme_used": r.scheme_used,
            "estimated_error": r.estimated_error,
        }));
    }
    Ok(Rendered::ok(
        json!({
            "expr": a.expr,
            "order": a.order,
            "lower": a.lower,
            "variable": a.var,
            "results": results,
        }),
        text,
    ))
}

fn run_matrix_differint(a: MatrixDifferintArgs) -> CliResult<Rendered> {
    let f = field::expr(parse_expr("--expr", &a.expr)?);
    let order = read_matrix("--matrix", &a.matrix)?;
    let pts = points(&a.points)?;
    if a.var == 0 {
        return usage_err("--var", "variables are 1-based");
    }
    let spec = DifferintSpec::new(a.var - 1, 0.0, a.lower);
    let mut results = Vec::new();
    let mut text = format!("classification {}\n", classification_name(order.classification()));
    for (lam, k) in order.eigenvalues() {
        text.push_str(&format!("eigenvalue {} multiplicity {k}\n", fmt_complex(*lam)));
    }
    for p in &pts {
        let m = matrix::matrix_differint(&order, &f, &spec, p)?;
        text.push_str(&format!("point {}\n", fmt_list(p)));
        text.push_str(&fmt_cmat("D", &m));
        results.push(json!({ "point": p, "value": cmat_json(&m) }));
    }
    let eig: Vec<Value> = order
        .eigenvalues()
        .iter()
        .map(|(z, k)| json!({ "value": [z.re, z.im], "multiplicity": k }))
        .collect();
    Ok(Rendered::ok(
        json!({
            "expr": a.expr,
            "variable": a.var,
            "lower": a.lower,
            "matrix": cmat_json(order.entries()),
            "classification": classification_name(order.classification()),
            "eigenvalues": eig,
            "results": results,
        }),
        text,
    ))
}

fn run_jacobian(a: ChartArgs) -> CliResult<Rendered> {
    let map = chart(&a.chart, &a.lower_x, &a.lower_y)?;
    let y = chart_point(&map, &a.at)?;
    let base = json!({ "chart": a.chart, "point": y, "lower_x": map.lower_x, "lower_y": map.lower_y });
    let mut body = base.as_object().cloned().unwrap_or_default();
    match (&a.order, &a.matrix) {
        (Some(nu), None) => {
            let t = coords::jacobian(&map, *nu, &y)?;
            let text = format!(
                "order {}\n{}{}det_system {}\nresidual {}\n",
                fmt12(*nu),
                fmt_matrix("forward", &t.forward),
                fmt_matrix("reverse", &t.reverse),
                fmt12(t.det_system),
                fmt12(t.residual)
            );
            body.insert("order".into(), json!(nu));
            body.insert("transform".into(), serde_json::to_value(&t).expect("serializable"));
            Ok(Rendered::ok(Value::Object(body), text))
        }
        (None, Some(m)) => {
            let order = read_matrix("--matrix", m)?;
            let (slices, grid) = coords::matrix_order_jacobian(&map, &order, &y)?;
            let mut text = String::new();
            let mut js = Vec::new();
            for (lam, t) in &slices {
                text.push_str(&format!("eigenvalue {}\n{}", fmt12(*lam), fmt_matrix("forward", &t.forward)));
                js.push(json!({ "eigenvalue": lam, "transform": t }));
            }
            let assembled: Vec<Value> = grid.iter().map(|row| Value::Array(row.iter().map(cmat_json).collect())).collect();
            body.insert("matrix".into(), cmat_json(order.entries()));
            body.insert("slices".into(), Value::Array(js));
            body.insert("assembled".into(), Value::Array(assembled));
            Ok(Rendered::ok(Value::Object(body), text))
        }
        _ => usage_err("--order", "give exactly one of --order and --matrix"),
    }
}

fn run_metric(a: ChartArgs) -> CliResult<Rendered> {
    if a.matrix.is_some() {
        return usage_err("--matrix", "metric takes a scalar --order");
    }
    let Some(nu) = a.order else {
        return usage_err("--order", "required");
    };
    let map = chart(&a.chart, &a.lower_x, &a.lower_y)?;
    let y = chart_point(&map, &a.at)?;
    let g = coords::metric(&map, nu, &y)?;
    let text = format!("order {}\n{}{}", fmt12(nu), fmt_matrix("g", &g.g), fmt_matrix("g_inv", &g.g_inv));
    Ok(Rendered::ok(
        json!({ "chart": a.chart, "point": y, "order": nu, "g": g.g, "g_inv": g.g_inv }),
        text,
    ))
}

fn run_wedge(a: PairArgs) -> CliResult<Rendered> {
    let fa = read_json_arg::<FormInput>("--a", &a.a)?.numeric("--a")?;
    let fb = read_json_arg::<FormInput>("--b", &a.b)?.numeric("--b")?;
    let w = fa.wedge(&fb)?;
    Ok(Rendered::ok(
        json!({ "a": form_json(&fa), "b": form_json(&fb), "result": form_json(&w) }),
        fmt_form(&w),
    ))
}

fn run_hodge(a: HodgeArgs) -> CliResult<Rendered> {
    let f = read_json_arg::<FormInput>("--form", &a.form)?.numeric("--form")?;
    let h = f.hodge()?;
    let sign = double_hodge_sign(f.signature());
    Ok(Rendered::ok(
        json!({ "form": form_json(&f), "result": form_json(&h), "double_hodge_sign": sign }),
        format!("{}double_hodge_sign {sign}\n", fmt_form(&h)),
    ))
}

fn run_inner(a: InnerArgs) -> CliResult<Rendered> {
    let fa = read_json_arg::<FormInput>("--a", &a.a)?.numeric("--a")?;
    let fb = read_json_arg::<FormInput>("--b", &a.b)?.numeric("--b")?;
    let value = match &a.chart {
        None => fa.inner(&fb)?,
        Some(name) => {
            let map = chart(name, &None, &a.lower_y)?;
            let y = chart_point(&map, a.at.as_deref().unwrap_or(""))?;
            // one inverse metric per block order
            let mut metrics = Vec::new();
            for b in &fa.signature().blocks {
                metrics.push((b.order, coords::metric(&map, b.order, &y)?.g_inv));
            }
            let lookup = |o: f64| {
                metrics
                    .iter()
                    .find(|(v, _)| *v == o)
                    .map(|(_, g)| g.clone())
                    .unwrap_or_default()
            };
            fa.inner_with_metric(&fb, &lookup)?
        }
    };
    Ok(Rendered::ok(
        json!({ "a": form_json(&fa), "b": form_json(&fb), "chart": a.chart, "value": value }),
        format!("inner {}\n", fmt12(value)),
    ))
}

fn run_poincare(a: PoincareArgs) -> CliResult<Rendered> {
    let alpha = match (&a.expr, &a.form) {
        (Some(e), None) => exterior::zero_form(field::expr(parse_expr("--expr", e)?), a.n.unwrap_or(0))?,
        (None, Some(f)) => read_json_arg::<FormInput>("--form", f)?.fields("--form")?,
        _ => return usage_err("--form", "give exactly one of --expr and --form"),
    };
    let n = alpha.signature().n;
    let lower = match &a.lower {
        Some(s) => parse_list("--lower", s)?,
        None => vec![0.0; n],
    };
    let lower = if lower.len() == 1 { vec![lower[0]; n] } else { lower };
    if lower.len() != n {
        return usage_err("--lower", format!("expected 1 or {n} values"));
    }
    let pts = points(&a.points)?;
    if pts.iter().any(|p| p.len() != n) {
        return usage_err("--at", format!("points need {n} coordinates"));
    }
    let exec = if a.sequential { Execution::Sequential } else { Execution::Parallel };
    match (a.order, &a.matrix) {
        (Some(nu), _) => {
            let r = exterior::poincare_residual(&alpha, &ExteriorSpec::new(nu, lower.clone()), &pts, exec)?;
            Ok(Rendered::ok(
                json!({ "order": nu, "lower": lower, "points": pts, "residual": r }),
                format!("order {}\nresidual {}\n", fmt12(nu), fmt12(r)),
            ))
        }
        (None, Some(m)) => {
            let order = read_matrix("--matrix", m)?;
            let res = exterior::matrix_exterior_residual(&alpha, &order, &ExteriorSpec::new(0.0, lower.clone()), &pts, exec)?;
            let mut text = String::from("eigenvalue residual\n");
            let mut js = Vec::new();
            for (lam, r) in &res {
                text.push_str(&format!("{} {}\n", fmt12(*lam), fmt12(*r)));
                js.push(json!({ "eigenvalue": lam, "residual": r }));
            }
            Ok(Rendered::ok(
                json!({ "matrix": cmat_json(order.entries()), "lower": lower, "points": pts, "per_eigenvalue": js }),
                text,
            ))
        }
        (None, None) => usage_err("--order", "give --order or --matrix"),
    }
}

fn run_covariant(a: CovariantArgs) -> CliResult<Rendered> {
    let map = chart(&a.chart, &a.lower_x, &a.lower_y)?;
    let y = chart_point(&map, &a.at)?;
    let n = map.dim();
    if a.field.len() != n {
        return usage_err("--field", format!("expected {n} components separated by ';'"));
    }
    if a.direction == 0 || a.direction > n {
        return usage_err("--direction", format!("must be in 1..={n}"));
    }
    let mut comps = Vec::new();
    for s in &a.field {
        comps.push(field::expr(parse_expr("--field", s)?));
    }
    let v = VectorField::new(comps);
    let b = a.direction - 1;
    let base = json!({ "chart": a.chart, "point": y, "direction": a.direction, "field": a.field });
    let mut body = base.as_object().cloned().unwrap_or_default();
    if let Some(m) = &a.matrix {
        let order = read_matrix("--matrix", m)?;
        let spec = CovariantSpec::new(0.0).with_tolerance(a.tol);
        let mc = covariant::matrix_covariant(&v, &map, &order, &spec, b, &y)?;
        let mut text = String::new();
        for (lam, vals) in &mc.slices {
            text.push_str(&format!("eigenvalue {} nabla {}\n", fmt12(*lam), fmt_list(vals)));
        }
        for (l, m) in mc.assembled.iter().enumerate() {
            text.push_str(&fmt_cmat(&format!("nabla_{}", l + 1), m));
        }
        let slices: Vec<Value> = mc.slices.iter().map(|(l, v)| json!({ "eigenvalue": l, "covariant": v })).collect();
        body.insert("matrix".into(), cmat_json(order.entries()));
        body.insert("slices".into(), Value::Array(slices));
        body.insert("assembled".into(), Value::Array(mc.assembled.iter().map(cmat_json).collect()));
        return Ok(Rendered::ok(Value::Object(body), text));
    }
    let nu = a.order.unwrap_or(1.0);
    let spec = CovariantSpec::new(nu).with_tolerance(a.tol);
    let direct = covariant::covariant_direct(&v, &map, &spec, b, &y)?;
    let plain = covariant::plain_differint(&v, &map, &spec, b, &y)?;
    let mut text = format!("order {}\ncovariant {}\nplain {}\n", fmt12(nu), fmt_list(&direct), fmt_list(&plain));
    body.insert("order".into(), json!(nu));
    body.insert("covariant".into(), json!(direct));
    body.insert("plain".into(), json!(plain));
    if a.decompose {
        let d = covariant::decomposition(&v, &map, &spec, b, &y)?;
        text.push_str(&format!(
            "connection {}\nterms {}\nresidual {}\n",
            fmt_list(&d.connection.value),
            d.connection.terms,
            fmt12(d.residual)
        ));
        body.insert("decomposition".into(), serde_json::to_value(&d).expect("serializable"));
    }
    Ok(Rendered::ok(Value::Object(body), text))
}

fn run_identities(a: IdentitiesArgs) -> CliResult<Rendered> {
    let filter = match &a.filter {
        Some(s) => Some(identities::parse_filter(s).or_else(|e| usage_err("--filter", e.to_string()))?),
        None => None,
    };
    let profile: Profile = a.profile.parse().or_else(|e: Error| usage_err("--profile", e.to_string()))?;
    let seed = match a.seed {
        Some(s) => s,
        None => identities::seed_from_env().or_else(|e| usage_err(identities::SEED_ENV, e.to_string()))?,
    };
    let exec = if a.sequential { Execution::Sequential } else { Execution::Parallel };
    let report = identities::run_suite(filter.as_deref(), profile, seed, exec);
    if report.cases.is_empty() {
        return usage_err("--filter", "no case matches");
    }
    Ok(Rendered {
        failed: !report.success(),
        text: report.table(),
        json: serde_json::to_value(&report).expect("serializable"),
        json_path: a.json.flatten(),
    })
}

fn run_polar(a: PolarArgs) -> CliResult<Rendered> {
    let ex = coords::polar_example(a.r, a.theta)?;
    let mut text = format!("r {} theta {}\n", fmt12(a.r), fmt12(a.theta));
    text.push_str(&fmt_matrix("A", &ex.system_a));
    text.push_str(&fmt_matrix("B", &ex.system_b));
    text.push_str(&fmt_matrix("forward", &ex.transform.forward));
    text.push_str(&format!("residual {}\n", fmt12(ex.transform.residual)));
    text.push_str("component computed reference difference\n");
    for c in &ex.comparison {
        text.push_str(&format!(
            "{} {} {} {}\n",
            c.component,
            fmt12(c.computed),
            fmt12(c.reference),
            fmt12(c.difference)
        ));
    }
    Ok(Rendered::ok(serde_json::to_value(&ex).expect("serializable"), text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> Output {
        dispatch(std::iter::once("fracform").chain(args.iter().copied()))
    }

    #[test]
    fn differint_half_derivative_of_x() {
        let out = run(&["differint", "--expr", "x1", "--order", "0.5", "--lower", "0", "--at", "1"]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        assert!(out.stdout.contains("1.1283791671"), "{}", out.stdout);
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let out = run(&["differint", "--expr", "x1", "--order", "0.5", "--at", "1", "--bogus"]);
        assert_eq!(out.code, 2);
        assert!(out.stderr.contains("--bogus"), "{}", out.stderr);
        let lines: Vec<&str> = out.stderr.lines().collect();
        assert_eq!(lines.len(), 2, "{}", out.stderr);
        assert!(lines[1].starts_with("usage: fracform differint"), "{}", out.stderr);
    }

    #[test]
    fn bad_value_names_the_flag() {
        let out = run(&["jacobian", "--chart", "polar", "--order", "0.5", "--at", "1,x"]);
        assert_eq!(out.code, 2);
        assert!(out.stderr.starts_with("error: --at:"), "{}", out.stderr);
    }

    #[test]
    fn computation_error_exits_one() {
        let out = run(&["matrix-differint", "--expr", "x1", "--matrix", "[[[0,0],[0,0]],[[0,0],[0,0]]]", "--at", "1"]);
        assert_eq!(out.code, 1);
        assert!(out.stderr.contains("zero matrix"), "{}", out.stderr);
    }

    #[test]
    fn json_carries_the_schema_version() {
        let out = run(&["polar-example", "--r", "2", "--theta", "1.0471975512", "--json"]);
        assert_eq!(out.code, 0);
        let v: Value = serde_json::from_str(&out.stdout).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
        assert!(v["transform"]["residual"].as_f64().unwrap() <= 1e-9);
        assert_eq!(v["comparison"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn identities_filter_exits_zero() {
        let out = run(&["identities", "--filter", "eq7", "--profile", "fast"]);
        assert_eq!(out.code, 0, "{}{}", out.stdout, out.stderr);
    }

    #[test]
    fn json_numbers_have_twelve_digits() {
        let v = round_json(json!({ "x": 1.0 / 3.0 }));
        assert_eq!(v["x"].to_string(), "0.333333333333");
    }
}

//! `catp` command-line front end.
//!
//! Exit codes: 0 success, 1 validation failure, 2 usage error, 3 I/O or
//! format error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analysis::{self, Inputs, Method, MethodSpec};
use crate::attnio::{read_cross, read_embedding, read_self_attn, read_tensor, write_tensor};
use crate::error::CatpError;
use crate::layers::LayerSelection;
use crate::report::{ComparisonReport, Report, TOOL_VERSION};
use crate::selection::prune;
use crate::tensor::{validate_normalization, AnyTensor, RowViolation};
use crate::toymodel::{generate, generate_query_self_attention, ToyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Tolerance used by `--strict`.
pub const STRICT_TOLERANCE: f64 = 1e-4;

pub const CROSS_FILE: &str = "cross.attn";
pub const SELF_FILE: &str = "self.attn";
pub const EMB_FILE: &str = "emb.attn";
pub const QUERY_SELF_FILE: &str = "query_self.attn";

#[derive(Debug, Parser)]
#[command(name = "catp", version, about = "Cross-attention token pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic fixture (cross.attn, self.attn, emb.attn).
    GenFixture(GenFixtureArgs),
    /// Compute per-token importance.
    Importance(ImportanceArgs),
    /// Compute importance and prune at a ratio.
    Prune(PruneArgs),
    /// Compare several methods' kept sets.
    Compare(CompareArgs),
    /// Run CATP on every single layer and on all layers.
    Sweep(SweepArgs),
    /// Check that probability rows sum to 1.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct GenFixtureArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long, default_value_t = 4)]
    queries: usize,
    #[arg(long, default_value_t = 5)]
    images: usize,
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write query-token self-attention (query_self.attn) for the
    /// self-attention baseline.
    #[arg(long)]
    with_query_self_attn: bool,
}

#[derive(Debug, Args)]
struct ImportanceArgs {
    /// Tensor file matching the method: cross-attention for catp,
    /// embeddings for l2, query-token self-attention for selfattn.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "catp")]
    method: Method,
    /// all, first, single:K or subset:A,B,...
    #[arg(long, default_value = "all")]
    layers: LayerSelection,
    /// Weight each image token's votes (catp only).
    #[arg(long, requires = "weights_input")]
    weighted: bool,
    /// Image-token self-attention the vote weights come from.
    #[arg(long)]
    weights_input: Option<PathBuf>,
    /// Reject inputs whose rows do not sum to 1 within 1e-4.
    #[arg(long)]
    strict: bool,
    /// Seed label recorded in the report.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PruneArgs {
    #[command(flatten)]
    common: ImportanceArgs,
    /// Prune ratio p in [0, 1]; a fraction such as 1/3 is accepted.
    #[arg(long, value_parser = parse_ratio)]
    ratio: f64,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, value_parser = parse_ratio)]
    ratio: f64,
    /// Comma-separated methods: catp, catp-weighted, l2, selfattn, each
    /// optionally suffixed with @LAYERS.
    #[arg(long, value_delimiter = ',', default_value = "catp,l2,selfattn")]
    methods: Vec<String>,
    /// Default layer selection for methods without a suffix.
    #[arg(long, default_value = "all")]
    layers: LayerSelection,
    #[arg(long)]
    cross: Option<PathBuf>,
    /// Query-token self-attention (selfattn).
    #[arg(long = "self-attn")]
    self_attn: Option<PathBuf>,
    /// Image-token self-attention (catp-weighted).
    #[arg(long)]
    weights_input: Option<PathBuf>,
    /// Query embeddings (l2).
    #[arg(long)]
    emb: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = parse_ratio)]
    ratio: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = STRICT_TOLERANCE)]
    tol: f64,
}

fn parse_ratio(s: &str) -> Result<f64, String> {
    let value = match s.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| format!("bad ratio {s:?}"))?;
            let den: f64 = den.trim().parse().map_err(|_| format!("bad ratio {s:?}"))?;
            num / den
        }
        None => s.parse().map_err(|_| format!("bad ratio {s:?}"))?,
    };
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(format!("ratio {s} outside [0, 1]"))
    }
}

fn parse_method_item(item: &str, default_layers: &LayerSelection) -> Result<MethodSpec, CatpError> {
    let (name, layers) = match item.split_once('@') {
        Some((n, l)) => (n, l.parse()?),
        None => (item, default_layers.clone()),
    };
    let (method, weighted) = match name.trim() {
        "catp-weighted" => (Method::Catp, true),
        other => (other.parse().map_err(CatpError::InvalidSelection)?, false),
    };
    Ok(MethodSpec {
        method,
        layers,
        weighted,
    })
}

/// A failed command: exit code, message for stderr, and any report that
/// should still reach stdout.
struct Failure {
    code: i32,
    message: String,
    stdout: Option<String>,
}

impl From<CatpError> for Failure {
    fn from(e: CatpError) -> Self {
        let code = match e {
            CatpError::LayerOutOfRange { .. }
            | CatpError::InvalidSelection(_)
            | CatpError::RatioOutOfRange(_)
            | CatpError::KOutOfRange { .. }
            | CatpError::InvalidConfig(_) => EXIT_USAGE,
            _ => EXIT_IO,
        };
        Failure {
            code,
            message: e.to_string(),
            stdout: None,
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
        stdout: None,
    }
}

fn violations_failure(path: &Path, v: &[RowViolation]) -> Failure {
    let mut message = format!(
        "{}: {} row(s) not normalized within {STRICT_TOLERANCE}",
        path.display(),
        v.len()
    );
    for x in v.iter().take(10) {
        message.push_str(&format!(
            "\n  layer {} head {} row {} sums to {}",
            x.layer, x.head, x.row, x.sum
        ));
    }
    Failure {
        code: EXIT_VALIDATION,
        message,
        stdout: None,
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("cannot write {}: {e}", path.display()),
        stdout: None,
    }
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

type CmdResult = Result<String, Failure>;

fn cmd_gen_fixture(a: &GenFixtureArgs) -> CmdResult {
    let cfg = ToyConfig {
        seed: a.seed,
        layers: a.layers,
        heads: a.heads,
        n_query: a.queries,
        n_image: a.images,
        dim: a.dim,
        temperature: a.temperature,
    };
    let fx = generate(&cfg)?;
    let mut files = vec![
        (CROSS_FILE, AnyTensor::from(fx.cross)),
        (SELF_FILE, fx.self_attn.into()),
        (EMB_FILE, fx.embeddings.into()),
    ];
    if a.with_query_self_attn {
        files.push((QUERY_SELF_FILE, generate_query_self_attention(&cfg)?.into()));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| io_failure(&a.out_dir, e))?;
    let mut out = String::new();
    for (name, t) in files {
        let path = a.out_dir.join(name);
        write_tensor(&t, &path).map_err(|e| match e {
            CatpError::Io(io) => io_failure(&path, io),
            other => other.into(),
        })?;
        out.push_str(&path_string(&path));
        out.push('\n');
    }
    Ok(out)
}

fn build_report(a: &ImportanceArgs) -> Result<(Report, crate::voting::ImportanceVector), Failure> {
    if a.weighted && a.method != Method::Catp {
        return Err(usage("--weighted only applies to --method catp"));
    }
    let spec = MethodSpec {
        method: a.method,
        layers: a.layers.clone(),
        weighted: a.weighted,
    };
    let imp = match a.method {
        Method::Catp => {
            let cross = read_cross(&a.input)?;
            if a.strict {
                let v = validate_normalization(&cross, STRICT_TOLERANCE);
                if !v.is_empty() {
                    return Err(violations_failure(&a.input, &v));
                }
            }
            let sa = match (&a.weights_input, a.weighted) {
                (Some(p), true) => {
                    let sa = read_self_attn(p)?;
                    if a.strict {
                        let v = validate_normalization(&sa, STRICT_TOLERANCE);
                        if !v.is_empty() {
                            return Err(violations_failure(p, &v));
                        }
                    }
                    Some(sa)
                }
                _ => None,
            };
            let inputs = Inputs {
                cross: Some(&cross),
                image_self_attn: sa.as_ref(),
                ..Inputs::default()
            };
            analysis::run_method(&spec, &inputs)?
        }
        Method::L2 => {
            let emb = read_embedding(&a.input)?;
            let inputs = Inputs {
                embeddings: Some(&emb),
                ..Inputs::default()
            };
            analysis::run_method(&spec, &inputs)?
        }
        Method::SelfAttn => {
            let sa = read_self_attn(&a.input)?;
            if a.strict {
                let v = validate_normalization(&sa, STRICT_TOLERANCE);
                if !v.is_empty() {
                    return Err(violations_failure(&a.input, &v));
                }
            }
            let inputs = Inputs {
                query_self_attn: Some(&sa),
                ..Inputs::default()
            };
            analysis::run_method(&spec, &inputs)?
        }
    };
    let report = Report {
        method: a.method,
        layers: (a.method != Method::L2).then(|| a.layers.clone()),
        weighted: a.weighted,
        ratio: None,
        keep_count: None,
        importance: imp.scores().to_vec(),
        kept: vec![],
        pruned: vec![],
        input: path_string(&a.input),
        weights_input: a
            .weights_input
            .as_deref()
            .filter(|_| a.weighted)
            .map(path_string),
        seed: a.seed,
        tool_version: TOOL_VERSION.to_string(),
    };
    Ok((report, imp))
}

fn cmd_importance(a: &ImportanceArgs) -> CmdResult {
    Ok(build_report(a)?.0.to_string())
}

fn cmd_prune(a: &PruneArgs) -> CmdResult {
    let (mut report, imp) = build_report(&a.common)?;
    let d = prune(&imp, a.ratio)?;
    report.ratio = Some(a.ratio);
    report.keep_count = Some(d.keep_count);
    report.kept = d.kept;
    report.pruned = d.pruned;
    Ok(report.to_string())
}

fn cmd_compare(a: &CompareArgs) -> CmdResult {
    let specs = a
        .methods
        .iter()
        .map(|m| parse_method_item(m, &a.layers))
        .collect::<Result<Vec<_>, _>>()?;
    let cross = a.cross.as_deref().map(read_cross).transpose()?;
    let query_sa = a.self_attn.as_deref().map(read_self_attn).transpose()?;
    let image_sa = a.weights_input.as_deref().map(read_self_attn).transpose()?;
    let emb = a.emb.as_deref().map(read_embedding).transpose()?;
    let inputs = Inputs {
        cross: cross.as_ref(),
        image_self_attn: image_sa.as_ref(),
        query_self_attn: query_sa.as_ref(),
        embeddings: emb.as_ref(),
    };
    let c = analysis::compare(&specs, &inputs, a.ratio, 0)?;
    let mut report = ComparisonReport::from_comparison("compare", &c);
    report.cross_input = a.cross.as_deref().map(path_string);
    report.self_input = a.self_attn.as_deref().map(path_string);
    report.weights_input = a.weights_input.as_deref().map(path_string);
    report.emb_input = a.emb.as_deref().map(path_string);
    report.seed = a.seed;
    Ok(report.to_string())
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let cross = read_cross(&a.input)?;
    let c = analysis::sweep(&cross, a.ratio)?;
    let mut report = ComparisonReport::from_comparison("sweep", &c);
    report.cross_input = Some(path_string(&a.input));
    report.seed = a.seed;
    Ok(report.to_string())
}

fn cmd_validate(a: &ValidateArgs) -> CmdResult {
    if a.tol.is_nan() || a.tol <= 0.0 {
        return Err(usage(format!("--tol must be positive, got {}", a.tol)));
    }
    let (violations, rows) = match read_tensor(&a.input)? {
        AnyTensor::Cross(t) => {
            let [l, h, q, _] = t.dims();
            (validate_normalization(&t, a.tol), l * h * q)
        }
        AnyTensor::SelfAttn(t) => {
            let [l, h, n, _] = t.dims();
            (validate_normalization(&t, a.tol), l * h * n)
        }
        AnyTensor::Embedding(_) => {
            return Err(CatpError::KindMismatch {
                expected: crate::tensor::TensorKind::CrossAttention,
                found: crate::tensor::TensorKind::Embedding,
            }
            .into())
        }
    };
    let mut out = format!(
        "input: {}\ntolerance: {:e}\nrows: {}\nviolations: {}\n",
        a.input.display(),
        a.tol,
        rows,
        violations.len()
    );
    for v in &violations {
        out.push_str(&format!(
            "violation: {} {} {} {}\n",
            v.layer, v.head, v.row, v.sum
        ));
    }
    if violations.is_empty() {
        Ok(out)
    } else {
        Err(Failure {
            code: EXIT_VALIDATION,
            message: format!("{} row(s) not normalized", violations.len()),
            stdout: Some(out),
        })
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::GenFixture(a) => cmd_gen_fixture(a),
        Command::Importance(a) => cmd_importance(a),
        Command::Prune(a) => cmd_prune(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Validate(a) => cmd_validate(a),
    };
    let (out, code) = match result {
        Ok(out) => (Some(out), EXIT_OK),
        Err(f) => {
            eprintln!("catp: {}", f.message);
            (f.stdout, f.code)
        }
    };
    if let Some(out) = out {
        let mut stdout = std::io::stdout().lock();
        if stdout
            .write_all(out.as_bytes())
            .and_then(|_| stdout.flush())
            .is_err()
        {
            return EXIT_IO;
        }
    }
    code
}

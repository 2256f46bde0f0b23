//! Command-line surface. Exit codes: 0 success, 1 usage, 2 data or I/O
//! error, 3 numeric divergence.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{self, DEFAULT_VETO_QUANTILE};
use crate::em::{self, FitOptions, InitSpec};
use crate::error::{Error, Result};
use crate::identification::{procrustes_align, sign_anchor, AnchorSpec};
use crate::io::{self, FitConfig, FitDocument, Manifest, SimulationConfig};
use crate::model::{FitResult, LegislatorMeta, Penalty, VoteMatrix};
use crate::preprocess;
use crate::simulate;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

pub const THREADS_ENV: &str = "ROBUST_IRT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "robust-irt", version, about = "Robust ideal-point estimation with sparse protest-vote shifts")]
struct Cli {
    /// Worker threads (results do not depend on it). ROBUST_IRT_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Log progress; repeat for per-iteration detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter a roll-call matrix and report what was dropped.
    Preprocess(PreprocessArgs),
    /// Estimate ideal points, bill parameters and protest shifts.
    Fit(FitArgs),
    /// Generate roll calls from a known truth, optionally with protest votes.
    Simulate(SimulateArgs),
    /// Compare two fits: rank quantiles, chamber pivots, protest reports.
    Analyze(AnalyzeArgs),
    /// Item response curve of one bill.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    input: PathBuf,
    /// TOML preprocessing config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    input: PathBuf,
    /// Legislator metadata CSV (id,name,party,district).
    #[arg(long)]
    meta: Option<PathBuf>,
    /// TOML fit config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_penalty)]
    penalty: Option<Penalty>,
    /// Sparsity level; `inf` disables the shifts.
    #[arg(long)]
    lambda: Option<f64>,
    /// Latent dimension.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// `party:REP`, `legislator:<id>` or `none`.
    #[arg(long, value_parser = parse_anchor)]
    anchor: Option<AnchorSpec>,
    /// Start the l0 fit from a random state instead of a preliminary fit.
    #[arg(long)]
    no_prelim: bool,
    #[arg(long)]
    prelim_lambda: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    fit_a: PathBuf,
    fit_b: PathBuf,
    #[arg(long)]
    meta: PathBuf,
    /// Roll calls, to show the observed vote beside each protest flag.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Sign convention applied to both fits before comparing (one-dimensional fits).
    #[arg(long, value_parser = parse_anchor, default_value = "party:REP")]
    anchor: AnchorSpec,
    #[arg(long, default_value_t = DEFAULT_VETO_QUANTILE)]
    veto_quantile: f64,
    /// Dimension whose ranks are compared.
    #[arg(long, default_value_t = 0)]
    dim: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    fit: PathBuf,
    /// Bill id, or a 0-based column index when no bill has that id.
    #[arg(long)]
    bill: String,
    /// `lo:hi:n`
    #[arg(long, default_value = "-3:3:61", allow_hyphen_values = true)]
    grid: String,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_penalty(s: &str) -> std::result::Result<Penalty, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_anchor(s: &str) -> std::result::Result<AnchorSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_DATA,
    }
}

/// Resolved worker count: the env var, then `--threads`, then rayon's default.
fn thread_count(flag: Option<usize>) -> Option<usize> {
    let env = std::env::var(THREADS_ENV).ok().and_then(|v| match v.trim().parse::<usize>() {
        Ok(n) if n > 0 => Some(n),
        _ => {
            log::warn!("ignoring {THREADS_ENV}={v:?}");
            None
        }
    });
    env.or(flag.filter(|&n| n > 0))
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_count(cli.threads) {
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return EXIT_DATA;
        }
    };
    match pool.install(|| run(cli.command, &args)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Preprocess(a) => cmd_preprocess(a, argv),
        Command::Fit(a) => cmd_fit(a, argv),
        Command::Simulate(a) => cmd_simulate(a, argv),
        Command::Analyze(a) => cmd_analyze(a, argv),
        Command::Curves(a) => cmd_curves(a, argv),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn to_value<T: Serialize>(v: &T) -> Result<serde_json::Value> {
    serde_json::to_value(v).map_err(|e| Error::Format(e.to_string()))
}

fn write_csv_rows<T: Serialize>(rows: &[T], path: &Path, header: &[&str]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    let fail = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    // Serializing writes the header with the first row; an empty table still gets one.
    if rows.is_empty() {
        wtr.write_record(header).map_err(fail)?;
    }
    for row in rows {
        wtr.serialize(row).map_err(fail)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

fn finish(manifest: &mut Manifest, out: &Path, outputs: &[&str]) -> Result<()> {
    manifest.outputs = outputs.iter().map(|s| s.to_string()).collect();
    io::write_json(manifest, out.join("manifest.json"))
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_preprocess(a: PreprocessArgs, argv: &[String]) -> Result<()> {
    let config = io::read_preprocess_config(a.config.as_deref())?;
    let data = io::read_rollcall_csv(&a.input)?;
    let (out, report) = preprocess::pipeline(&data, &config)?;
    prepare_out(&a.out)?;
    io::write_rollcall_csv(&out, a.out.join("filtered.csv"))?;
    io::write_json(&report, a.out.join("report.json"))?;
    let mut manifest = Manifest::new("preprocess", argv, None, to_value(&config)?);
    manifest.inputs = vec![path_string(&a.input)];
    log::info!("{:?} -> {:?}", report.input_dims, report.output_dims);
    finish(&mut manifest, &a.out, &["filtered.csv", "report.json"])
}

fn resolve_fit_config(a: &FitArgs) -> Result<FitConfig> {
    let mut c: FitConfig = match &a.config {
        Some(p) => io::read_toml(p)?,
        None => FitConfig::default(),
    };
    if let Some(p) = a.penalty {
        c.penalty = p;
    }
    if let Some(l) = a.lambda {
        c.lambda = l;
    }
    if let Some(k) = a.k {
        c.dim = k;
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(anchor) = &a.anchor {
        c.anchor = anchor.to_string();
    }
    if a.no_prelim {
        c.preliminary = false;
    }
    if let Some(l) = a.prelim_lambda {
        c.preliminary_lambda = l;
    }
    if let Some(m) = a.max_iter {
        c.max_iter = m;
    }
    if let Some(e) = a.epsilon {
        c.epsilon = e;
    }
    Ok(c)
}

/// Fits `data` as described by `config`, then applies the sign anchor.
pub fn run_fit(data: &VoteMatrix, config: &FitConfig) -> Result<FitResult> {
    let hp = config.hyperparams()?;
    let anchor = config.anchor()?;
    let opts = FitOptions::default();
    let mut fit = if config.uses_preliminary() {
        em::preliminary_then_main_with(data, &hp, config.seed, config.preliminary_lambda, &opts)?
    } else {
        em::fit_with(data, &hp, &InitSpec::random(config.seed), &opts)?
    };
    if anchor != AnchorSpec::None {
        let state = sign_anchor(&fit.state, &anchor, data.legislators())?;
        fit = FitResult::new(state, fit.objective_trace, fit.iterations, fit.converged);
    }
    Ok(fit)
}

fn ids(data: &VoteMatrix) -> (Vec<String>, Vec<String>) {
    (
        data.legislators().iter().map(|l| l.id.clone()).collect(),
        data.bills().iter().map(|b| b.id.clone()).collect(),
    )
}

fn cmd_fit(a: FitArgs, argv: &[String]) -> Result<()> {
    let config = resolve_fit_config(&a)?;
    let mut data = io::read_rollcall_csv(&a.input)?;
    let mut inputs = vec![path_string(&a.input)];
    if let Some(meta) = &a.meta {
        io::apply_metadata(&mut data, &io::read_metadata_csv(meta)?);
        inputs.push(path_string(meta));
    }
    let fit = run_fit(&data, &config)?;
    log::info!(
        "{} iterations, converged = {}, {} shifts",
        fit.iterations,
        fit.converged,
        fit.state.gamma.nnz()
    );
    prepare_out(&a.out)?;
    let (leg_ids, bill_ids) = ids(&data);
    let doc = FitDocument::from_fit(&fit, &config.hyperparams()?, &leg_ids, &bill_ids)?;
    io::write_fit_json(&doc, a.out.join("fit.json"))?;
    let report = analysis::protest_report(&fit, &data)?;
    write_csv_rows(&report, &a.out.join("protests.csv"), PROTEST_HEADER)?;
    let mut manifest = Manifest::new("fit", argv, Some(config.seed), to_value(&config)?);
    manifest.inputs = inputs;
    finish(&mut manifest, &a.out, &["fit.json", "protests.csv"])
}

const PROTEST_HEADER: &[&str] = &["legislator", "bill", "i", "j", "gamma", "vote", "sincere_yea_probability"];

#[derive(Serialize)]
struct CellRow<'a> {
    legislator: &'a str,
    bill: &'a str,
    i: usize,
    j: usize,
}

fn cmd_simulate(a: SimulateArgs, argv: &[String]) -> Result<()> {
    let config: SimulationConfig = io::read_toml(&a.config)?;
    let base = a.config.parent().unwrap_or(Path::new("."));
    let spec = config.to_spec(base)?;
    let sim = simulate::simulate(&spec)?;
    prepare_out(&a.out)?;
    io::write_rollcall_csv(&sim.data, a.out.join("votes.csv"))?;
    io::write_metadata_csv(sim.data.legislators(), a.out.join("legislators.csv"))?;
    let (leg_ids, bill_ids) = ids(&sim.data);
    let truth = FitResult::new(sim.truth.clone(), Vec::new(), 0, true);
    let hp = crate::model::Hyperparams::defaults(sim.truth.dim).with_penalty(Penalty::None, f64::INFINITY);
    io::write_fit_json(&FitDocument::from_fit(&truth, &hp, &leg_ids, &bill_ids)?, a.out.join("truth.json"))?;
    let cells: Vec<CellRow> = sim
        .protest_cells
        .iter()
        .map(|&(i, j)| CellRow {
            legislator: &leg_ids[i],
            bill: &bill_ids[j],
            i,
            j,
        })
        .collect();
    write_csv_rows(&cells, &a.out.join("protest_cells.csv"), &["legislator", "bill", "i", "j"])?;
    let mut manifest = Manifest::new("simulate", argv, Some(config.seed), to_value(&config)?);
    manifest.inputs = vec![path_string(&a.config)];
    finish(
        &mut manifest,
        &a.out,
        &["votes.csv", "legislators.csv", "truth.json", "protest_cells.csv"],
    )
}

/// Votes for a fit's protest report: the supplied matrix reordered to the fit's
/// ids, or an all-missing matrix when none is given.
fn votes_for(doc: &FitDocument, data: Option<&Path>) -> Result<VoteMatrix> {
    let Some(path) = data else {
        return doc.empty_votes();
    };
    let data = io::read_rollcall_csv(path)?;
    let rows = doc
        .legislators
        .iter()
        .map(|id| data.legislator_index(id))
        .collect::<Option<Vec<_>>>();
    let cols = doc.bills.iter().map(|id| data.bill_index(id)).collect::<Option<Vec<_>>>();
    match (rows, cols) {
        (Some(r), Some(c)) => data.select(&r, &c),
        _ => Err(Error::Data(format!(
            "{} does not contain every legislator and bill of the fit",
            path.display()
        ))),
    }
}

#[derive(Serialize)]
struct PivotalReport {
    dim: usize,
    veto_quantile: f64,
    fit_a: analysis::PivotalSummary,
    fit_b: analysis::PivotalSummary,
}

fn align(fit: FitResult, reference: &FitResult, anchor: &AnchorSpec, legislators: &[LegislatorMeta]) -> Result<FitResult> {
    let state = if fit.state.dim == 1 {
        sign_anchor(&fit.state, anchor, legislators)?
    } else {
        procrustes_align(&fit.state, &reference.state.theta)?.0
    };
    Ok(FitResult::new(state, fit.objective_trace, fit.iterations, fit.converged))
}

fn cmd_analyze(a: AnalyzeArgs, argv: &[String]) -> Result<()> {
    let doc_a = io::read_fit_json(&a.fit_a)?;
    let doc_b = io::read_fit_json(&a.fit_b)?;
    if doc_a.legislators != doc_b.legislators {
        return Err(Error::Data("the two fits cover different legislators".into()));
    }
    let meta = io::metadata_for(&doc_a.legislators, &io::read_metadata_csv(&a.meta)?);
    let raw_a = doc_a.to_fit()?;
    let fit_a = if raw_a.state.dim == 1 {
        align(raw_a.clone(), &raw_a, &a.anchor, &meta)?
    } else {
        raw_a
    };
    let fit_b = align(doc_b.to_fit()?, &fit_a, &a.anchor, &meta)?;

    let quantiles = analysis::compare_fits(&fit_a, &fit_b, &meta, a.dim)?;
    let parties: Vec<_> = meta.iter().map(|m| m.party).collect();
    let pivots = PivotalReport {
        dim: a.dim,
        veto_quantile: a.veto_quantile,
        fit_a: analysis::pivotal_quantities(&fit_a.state.theta_column(a.dim), &parties, a.veto_quantile)?,
        fit_b: analysis::pivotal_quantities(&fit_b.state.theta_column(a.dim), &parties, a.veto_quantile)?,
    };
    let report_a = analysis::protest_report(&fit_a, &votes_for(&doc_a, a.data.as_deref())?)?;
    let report_b = analysis::protest_report(&fit_b, &votes_for(&doc_b, a.data.as_deref())?)?;

    prepare_out(&a.out)?;
    write_csv_rows(
        &quantiles,
        &a.out.join("quantiles.csv"),
        &["legislator", "quantile_a", "quantile_b", "abs_delta"],
    )?;
    io::write_json(&pivots, a.out.join("pivotal.json"))?;
    write_csv_rows(&report_a, &a.out.join("protests_a.csv"), PROTEST_HEADER)?;
    write_csv_rows(&report_b, &a.out.join("protests_b.csv"), PROTEST_HEADER)?;
    let config = serde_json::json!({
        "anchor": a.anchor.to_string(),
        "veto_quantile": a.veto_quantile,
        "dim": a.dim,
    });
    let mut manifest = Manifest::new("analyze", argv, None, config);
    manifest.inputs = [Some(&a.fit_a), Some(&a.fit_b), Some(&a.meta), a.data.as_ref()]
        .into_iter()
        .flatten()
        .map(|p| path_string(p))
        .collect();
    finish(
        &mut manifest,
        &a.out,
        &["quantiles.csv", "pivotal.json", "protests_a.csv", "protests_b.csv"],
    )
}

/// Parses `lo:hi:n`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::Format(format!("grid must look like lo:hi:n, got '{spec}'"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    analysis::linear_grid(lo, hi, n)
}

#[derive(Serialize)]
struct OverlayRow<'a> {
    legislator: &'a str,
    theta: f64,
    vote: &'static str,
    protest: bool,
}

fn cmd_curves(a: CurvesArgs, argv: &[String]) -> Result<()> {
    let grid = parse_grid(&a.grid)?;
    let doc = io::read_fit_json(&a.fit)?;
    let j = match doc.bills.iter().position(|b| *b == a.bill) {
        Some(j) => j,
        None => a
            .bill
            .parse::<usize>()
            .ok()
            .filter(|&j| j < doc.bills.len())
            .ok_or_else(|| Error::Data(format!("bill '{}' is not in the fit", a.bill)))?,
    };
    let fit = doc.to_fit()?;
    let votes = votes_for(&doc, a.data.as_deref())?;
    let curve = analysis::irc_points(&fit, &votes, j, &grid)?;
    prepare_out(&a.out)?;
    let bill = &doc.bills[j];
    let points_name = format!("curve_{bill}.csv");
    let overlay_name = format!("overlay_{bill}.csv");
    write_csv_rows(&curve.points, &a.out.join(&points_name), &["theta", "yea_probability"])?;
    let overlay: Vec<OverlayRow> = curve
        .overlay
        .iter()
        .map(|o| OverlayRow {
            legislator: &o.legislator,
            theta: o.theta,
            vote: match o.vote {
                crate::model::Vote::Yea => "1",
                crate::model::Vote::Nay => "0",
                crate::model::Vote::Missing => "NA",
            },
            protest: o.protest,
        })
        .collect();
    write_csv_rows(&overlay, &a.out.join(&overlay_name), &["legislator", "theta", "vote", "protest"])?;
    let config = serde_json::json!({ "bill": bill, "grid": a.grid });
    let mut manifest = Manifest::new("curves", argv, None, config);
    manifest.inputs = [Some(&a.fit), a.data.as_ref()].into_iter().flatten().map(|p| path_string(p)).collect();
    finish(&mut manifest, &a.out, &[&points_name, &overlay_name])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("-1:1:3").unwrap(), vec![-1.0, 0.0, 1.0]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a:1:3").is_err());
    }

    #[test]
    fn usage_errors() {
        assert_eq!(cli_main(["robust-irt", "frobnicate"]), EXIT_USAGE);
        assert_eq!(cli_main(["robust-irt", "fit", "x.csv", "--out", "o", "--bogus"]), EXIT_USAGE);
        assert_eq!(cli_main(["robust-irt", "fit", "x.csv", "--out", "o", "--penalty", "l2"]), EXIT_USAGE);
    }

    #[test]
    fn divergence_has_its_own_code() {
        let e = Error::Divergence {
            iteration: 3,
            detail: "nan".into(),
        };
        assert_eq!(exit_code(&e), EXIT_DIVERGENCE);
        assert_eq!(exit_code(&Error::Data("x".into())), EXIT_DATA);
    }
}

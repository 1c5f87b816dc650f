//! The `msfc` command line.
//!
//! Every JSON-consuming subcommand builds its configuration as a JSON
//! object: the `--config` file if given, then each explicit flag written
//! over it. The merged object is deserialised strictly and the fully
//! resolved result is echoed to stdout before any work starts.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use msfc_core::cavi::{fit_with, FitOptions};
use msfc_core::io::{
    self, import_csv, load_fit, read_json, read_msfc, save_fit, tensor_path, write_json, write_msfc_with, FitDocument,
    MsfcMeta, TENSOR_FILE, TRUTH_FILE,
};
use msfc_core::metrics::evaluate;
use msfc_core::replicate::{run_replicates, ReplicateConfig};
use msfc_core::selection::{select, Criterion, SelectOptions, DEFAULT_GRID_BUDGET};
use msfc_core::sim::{generate_with, GroundTruth, SimConfig};
use msfc_core::summary::summarize;
use msfc_core::tensor::Family;
use msfc_core::{par, Error, Exec, ModelConfig};
use serde::Serialize;
use serde_json::{Map, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "msfc", version, about = "Subtyping of multi-state network data by variational DP mixtures of block models")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run every kernel on the calling thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic data set with known truth.
    Simulate(SimulateArgs),
    /// Fit the model to a tensor.
    Fit(FitArgs),
    /// Choose block counts by information criterion.
    Select(SelectArgs),
    /// Score a fit against ground truth.
    Evaluate(EvaluateArgs),
    /// Print a fit as text tables.
    Summarize(SummarizeArgs),
    /// Run a simulation study and aggregate the metrics.
    ReplicateSim(ReplicateArgs),
    /// Build a tensor from CSV adjacency matrices.
    ImportCsv(ImportArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON simulation config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named setting used as the base config.
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    subjects: Option<usize>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Default)]
struct ModelArgs {
    /// JSON model config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    truncation: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ModelArgs {
    fn overrides(&self, out: &mut Map<String, Value>) {
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                out.insert(k.into(), v);
            }
        };
        put("truncation", self.truncation.map(Value::from));
        put("n_restarts", self.restarts.map(Value::from));
        put("max_iter", self.max_iter.map(Value::from));
        put("tol", self.tol.map(Value::from));
        put("seed", self.seed.map(Value::from));
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Data directory or MSFC file.
    #[arg(long)]
    data: PathBuf,
    /// Blocks per state, e.g. 3,3.
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    /// Per-state block grid: `2:4` for every state, or `2:4,3` per state.
    #[arg(long)]
    blocks_grid: String,
    #[arg(long, value_parser = parse_criterion, default_value = "kl")]
    criterion: Criterion,
    /// Largest full-factorial grid before coordinate-wise search.
    #[arg(long, default_value_t = DEFAULT_GRID_BUDGET)]
    budget: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    fit: PathBuf,
    /// Ground-truth file or data directory.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SummarizeArgs {
    #[arg(long)]
    fit: PathBuf,
}

#[derive(Debug, Args)]
struct ReplicateArgs {
    #[arg(long)]
    setting: String,
    #[arg(long, default_value_t = 50)]
    replicates: usize,
    /// Fixed block counts (default: the true ones).
    #[arg(long, value_delimiter = ',')]
    blocks: Option<Vec<usize>>,
    /// Choose block counts per replicate from this grid instead.
    #[arg(long)]
    blocks_grid: Option<String>,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// Text file with one line per subject: comma-separated CSV paths, one
    /// per state. Relative paths are taken from the manifest's directory.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_parser = parse_family, default_value = "continuous")]
    family: Family,
    /// Comma-separated state names.
    #[arg(long, value_delimiter = ',')]
    state_names: Option<Vec<String>>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_family(s: &str) -> Result<Family, String> {
    match s {
        "continuous" => Ok(Family::Continuous),
        "binary" => Ok(Family::Binary),
        _ => Err(format!("expected continuous or binary, got {s:?}")),
    }
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    match s {
        "kl" => Ok(Criterion::Kl),
        "entropy" => Ok(Criterion::Entropy),
        _ => Err(format!("expected kl or entropy, got {s:?}")),
    }
}

/// `a:b` is the inclusive range, `a` a single value; one spec applies to
/// every state, otherwise there must be one per state.
pub fn parse_grid(spec: &str, n_states: usize) -> Result<Vec<Vec<usize>>, Error> {
    let bad = || Error::Config(format!("bad block grid {spec:?}; expected e.g. 2:4 or 2:4,3:5"));
    let parse = |part: &str| -> Result<Vec<usize>, Error> {
        let num = |x: &str| x.trim().parse::<usize>().map_err(|_| bad());
        match part.split_once(':') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a == 0 || a > b {
                    return Err(bad());
                }
                Ok((a..=b).collect())
            }
            None => Ok(vec![num(part)?]).and_then(|v| if v[0] == 0 { Err(bad()) } else { Ok(v) }),
        }
    };
    let parts: Vec<Vec<usize>> = spec.split(',').map(parse).collect::<Result<_, _>>()?;
    match parts.len() {
        1 => Ok(vec![parts[0].clone(); n_states]),
        n if n == n_states => Ok(parts),
        n => Err(Error::Config(format!("block grid names {n} states but the data has {n_states}"))),
    }
}

fn load_object(path: Option<&Path>) -> Result<Map<String, Value>, Error> {
    match path {
        None => Ok(Map::new()),
        Some(p) => match read_json::<Value>(p)? {
            Value::Object(map) => Ok(map),
            _ => Err(Error::Schema {
                path: ".".into(),
                message: format!("{} must hold a JSON object", p.display()),
            }),
        },
    }
}

fn from_object<T: serde::de::DeserializeOwned>(map: Map<String, Value>) -> Result<T, Error> {
    io::parse_json(&serde_json::to_vec(&Value::Object(map))?)
}

fn model_config(args: &ModelArgs, blocks: Option<&[usize]>) -> Result<ModelConfig, Error> {
    let mut map = load_object(args.config.as_deref())?;
    if let Some(b) = blocks {
        map.insert("blocks_per_state".into(), serde_json::to_value(b)?);
    }
    args.overrides(&mut map);
    from_object(map)
}

fn echo<T: Serialize>(command: &str, config: &T) -> Result<(), Error> {
    let doc = serde_json::json!({ "command": command, "config": config });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

/// A result document together with the configuration that produced it.
#[derive(Serialize)]
struct Provenance<'a, C: Serialize, T: Serialize> {
    config: &'a C,
    #[serde(flatten)]
    body: &'a T,
}

fn ensure_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Format(format!("cannot create {}: {e}", dir.display())))
}

fn simulate(args: &SimulateArgs, exec: Exec) -> Result<(), Error> {
    let mut map = match &args.setting {
        Some(name) => match serde_json::to_value(SimConfig::setting(name)?)? {
            Value::Object(m) => m,
            _ => unreachable!("structs serialise to objects"),
        },
        None => Map::new(),
    };
    map.extend(load_object(args.config.as_deref())?);
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            map.insert(k.into(), v);
        }
    };
    put("seed", args.seed.map(Value::from));
    put("n_subjects", args.subjects.map(Value::from));
    put("n_nodes", args.nodes.map(Value::from));
    put("family", args.family.map(serde_json::to_value).transpose()?);
    let sim: SimConfig = from_object(map)?;
    sim.validate()?;
    echo("simulate", &sim)?;
    let (tensor, truth) = generate_with(&sim, exec)?;
    ensure_dir(&args.out)?;
    let mut meta = MsfcMeta::for_tensor(&tensor, None);
    meta.provenance = Some(serde_json::to_value(&sim)?);
    write_msfc_with(&tensor, &meta, &args.out.join(TENSOR_FILE))?;
    io::write_truth(&truth, &args.out.join(TRUTH_FILE))
}

fn fit(args: &FitArgs, exec: Exec) -> Result<(), Error> {
    let tensor = read_msfc(&tensor_path(&args.data))?;
    let config = model_config(&args.model, args.blocks.as_deref())?.resolve(&tensor)?;
    echo("fit", &config)?;
    let (state, diag) = fit_with(&tensor, &config, FitOptions { exec, monitor: false })?;
    let summary = summarize(&state, &config);
    save_fit(&FitDocument::new(config, state, summary, diag), &args.out)
}

fn select_cmd(args: &SelectArgs, exec: Exec) -> Result<(), Error> {
    let tensor = read_msfc(&tensor_path(&args.data))?;
    let grid = parse_grid(&args.blocks_grid, tensor.n_states())?;
    // The base config needs some block vector to validate; the smallest
    // grid point stands in for it.
    let smallest: Vec<usize> = grid.iter().map(|v| *v.iter().min().expect("non-empty")).collect();
    let mut map = load_object(args.model.config.as_deref())?;
    map.entry("blocks_per_state").or_insert(serde_json::to_value(&smallest)?);
    args.model.overrides(&mut map);
    let base: ModelConfig = from_object(map)?;
    base.resolve(&tensor)?;
    let options = SelectOptions {
        fit: FitOptions { exec, monitor: false },
        budget: args.budget,
        criterion: args.criterion,
    };
    let config = serde_json::json!({ "model": base, "grid": grid, "criterion": args.criterion, "budget": args.budget });
    echo("select", &config)?;
    let report = select(&tensor, &base, &grid, options)?;
    write_json(&Provenance { config: &config, body: &report }, &args.out)
}

fn truth_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(TRUTH_FILE)
    } else {
        p.to_path_buf()
    }
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<(), Error> {
    let doc = load_fit(&args.fit)?;
    let truth: GroundTruth = io::read_truth(&truth_path(&args.truth))?;
    echo("evaluate", &doc.config)?;
    let metrics = evaluate(&doc.summary, &truth, doc.diagnostics.wall_time_secs)?;
    write_json(&Provenance { config: &doc.config, body: &metrics }, &args.out)
}

fn fmt_row(cells: &[String], widths: &[usize]) -> String {
    let mut line = String::new();
    for (k, (c, w)) in cells.iter().zip(widths).enumerate() {
        if k > 0 {
            line.push_str("  ");
        }
        let _ = write!(line, "{c:>w$}");
    }
    line.trim_end().to_string()
}

/// Right-aligned table with a header row.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = fmt_row(&header.iter().map(|s| s.to_string()).collect::<Vec<_>>(), &widths);
    out.push('\n');
    for r in rows {
        out.push_str(&fmt_row(r, &widths));
        out.push('\n');
    }
    out
}

pub fn summary_text(doc: &FitDocument) -> String {
    let s = &doc.summary;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "subjects {}  states {}  occupied clusters {}  final ELBO {:.6}\n",
        s.cluster_of.len(),
        s.block_of.len(),
        s.occupied_clusters,
        doc.diagnostics.final_elbo
    );
    out.push_str("Clusters\n");
    let rows: Vec<Vec<String>> = s.profile.iter().map(|p| vec![p.cluster.to_string(), p.size.to_string()]).collect();
    out.push_str(&render_table(&["cluster", "size"], &rows));
    for m in 0..s.block_of.len() {
        let _ = writeln!(out, "\nState {} blocks", m + 1);
        let rows: Vec<Vec<String>> = (1..=s.n_blocks[m])
            .map(|b| vec![b.to_string(), s.block_of[m].iter().filter(|&&x| x == b).count().to_string()])
            .collect();
        out.push_str(&render_table(&["block", "nodes"], &rows));
        let _ = writeln!(out, "\nState {} block pairs", m + 1);
        let pairs = msfc_core::PairIndex::new(s.n_blocks[m]);
        let mut header = vec!["pair".to_string(), "selected".into(), "q(select)".into()];
        header.extend(s.profile.iter().map(|p| format!("mean c{}", p.cluster)));
        let rows: Vec<Vec<String>> = pairs
            .pairs()
            .iter()
            .enumerate()
            .map(|(p, &(a, b))| {
                let mut row = vec![
                    format!("({},{})", a + 1, b + 1),
                    if s.selected[m][p] { "yes" } else { "no" }.into(),
                    format!("{:.3}", s.selection_prob[m][p]),
                ];
                row.extend(s.profile.iter().map(|c| format!("{:.3}", c.means[m][p])));
                row
            })
            .collect();
        out.push_str(&render_table(&header.iter().map(String::as_str).collect::<Vec<_>>(), &rows));
    }
    out
}

fn replicate_cmd(args: &ReplicateArgs, exec: Exec) -> Result<(), Error> {
    let mut rc = ReplicateConfig::for_setting(&args.setting, args.replicates, 0)?;
    let blocks = args.blocks.clone().unwrap_or_else(|| rc.model.blocks_per_state.clone());
    rc.model = model_config(&args.model, Some(&blocks))?;
    rc.model.validate()?;
    rc.seed = rc.model.seed;
    if rc.model.blocks_per_state.len() != rc.sim.n_states {
        return Err(Error::Config(format!(
            "blocks given for {} states but the setting has {}",
            rc.model.blocks_per_state.len(),
            rc.sim.n_states
        )));
    }
    rc.select_grid = args.blocks_grid.as_deref().map(|g| parse_grid(g, rc.sim.n_states)).transpose()?;
    if rc.n_replicates == 0 {
        return Err(Error::Config("at least one replicate is required".into()));
    }
    echo("replicate-sim", &rc)?;
    let table = run_replicates(&rc, FitOptions { exec, monitor: false })?;
    // Wall times go to a sidecar so that the table itself is reproducible.
    write_json(&table.without_timing(), &args.out)?;
    let timing: Vec<f64> = table.records.iter().map(|r| r.metrics.runtime_seconds).collect();
    write_json(
        &serde_json::json!({ "runtime_seconds": table.runtime(), "per_replicate": timing }),
        &timing_path(&args.out),
    )?;
    print!("{}", table.render());
    Ok(())
}

/// `table.json` → `table.timing.json`.
pub fn timing_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "table".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.timing.json"))
}

fn import_cmd(args: &ImportArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", args.manifest.display())))?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let paths: Vec<Vec<PathBuf>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|p| base.join(p.trim())).collect())
        .collect();
    let tensor = import_csv(&paths, args.family)?;
    let meta = MsfcMeta::for_tensor(&tensor, args.state_names.clone());
    if meta.state_names.len() != tensor.n_states() {
        return Err(Error::Config(format!("{} state names for {} states", meta.state_names.len(), tensor.n_states())));
    }
    echo("import-csv", &meta)?;
    ensure_dir(&args.out)?;
    write_msfc_with(&tensor, &meta, &args.out.join(TENSOR_FILE))
}

fn dispatch(cli: &Cli) -> Result<(), Error> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match &cli.command {
        Command::Simulate(a) => simulate(a, exec),
        Command::Fit(a) => fit(a, exec),
        Command::Select(a) => select_cmd(a, exec),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Summarize(a) => {
            print!("{}", summary_text(&load_fit(&a.fit)?));
            Ok(())
        }
        Command::ReplicateSim(a) => replicate_cmd(a, exec),
        Command::ImportCsv(a) => import_cmd(a),
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let result = par::with_threads(cli.threads.unwrap_or(0), || dispatch(&cli));
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_VALIDATION
            }
        }
    }
}

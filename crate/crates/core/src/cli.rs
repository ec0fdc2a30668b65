//! Command-line front end. [`run`] maps argv to an exit code: 0 on
//! success, 1 on a usage error, 2 on a runtime error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{edge_attack, fit, generate_sbm, micro_f1, run_experiment, ExperimentSpec, SbmSpec, SCHEMA_VERSION};
use crate::error::{AguError, Result};
use crate::graph::{hop_distances, load_graph, load_request, write_graph, write_masks, write_request, Graph, NodeSet, UnlearnRequest};
use crate::model::{default_dims, load_checkpoint, save_checkpoint, Arch, Model, TrainConfig};
use crate::neighbors::{build_neighbor_report, FilterConfig, NeighborReport};
use crate::seed;
use crate::unlearn::{unlearn, Method, UnlearnConfig};

#[derive(Parser, Debug)]
#[command(name = "agu", version, about = "Train GNNs and unlearn nodes, edges or features from them")]
struct Cli {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Progress messages on stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a stochastic block model graph.
    Gen {
        /// n=..,c=..,pin=..,pout=..,d=..,s=..
        #[arg(long)]
        sbm: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model.
    Train {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Remove a request's elements from a trained model.
    Unlearn {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        request: PathBuf,
        #[arg(long)]
        model_in: PathBuf,
        #[arg(long)]
        model_out: PathBuf,
        /// Must match the checkpoint when given.
        #[arg(long)]
        arch: Option<Arch>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        k_ans: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        kl_cap: Option<f64>,
        /// agu, dec_baseline or reverse_ce
        #[arg(long, default_value = "agu", value_parser = parse_method)]
        method: Method,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train from scratch on the graph with the request removed.
    Retrain {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        request: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Report which nodes a request affects.
    Neighbors {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        request: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Trained model; one is trained with default settings when absent.
        #[arg(long)]
        model_in: Option<PathBuf>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        k_ans: Option<f64>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Inject cross-label edges.
    Attack {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        ratio: f64,
        /// Receives graph.tsv, masks.tsv and request.tsv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment spec.
    Bench {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// graph.tsv, or a directory holding graph.tsv and masks.tsv
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    masks: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, default_value = "gcn")]
    arch: Arch,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    match s {
        "agu" => Ok(Method::Agu),
        "dec_baseline" => Ok(Method::DecBaseline),
        "reverse_ce" => Ok(Method::ReverseCe),
        _ => Err(format!("unknown method {s:?} (agu, dec_baseline, reverse_ce)")),
    }
}

struct Ctx {
    seed: u64,
    verbose: bool,
}

impl Ctx {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[agu] {}", msg.as_ref());
        }
    }
}

impl GraphArgs {
    fn load(&self) -> Result<Graph> {
        let (graph, default_masks) = if self.graph.is_dir() {
            (self.graph.join("graph.tsv"), Some(self.graph.join("masks.tsv")))
        } else {
            (self.graph.clone(), None)
        };
        let masks = self
            .masks
            .clone()
            .or_else(|| default_masks.filter(|p| p.exists()));
        load_graph(&graph, masks.as_deref())
    }
}

impl ModelArgs {
    fn dims(&self, g: &Graph) -> Result<Vec<usize>> {
        if self.layers == 0 || self.hidden == 0 {
            return Err(AguError::Config("layers and hidden must be positive".into()));
        }
        let mut dims = default_dims(g.num_features(), g.num_classes(), self.layers);
        for d in &mut dims[1..self.layers] {
            *d = self.hidden;
        }
        Ok(dims)
    }
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            epochs: self.epochs,
            weight_decay: self.weight_decay,
            seed,
            dropout: self.dropout,
        }
    }
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| AguError::Config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| AguError::io(path, e))
}

fn test_f1(m: &Model, g: &Graph) -> Option<f64> {
    let pred = m.predict(g).ok()?;
    micro_f1(&pred.labels, g.labels(), g.test_mask()).ok()
}

fn histogram(dist: &[Option<usize>], set: &NodeSet) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for &v in set {
        if let Some(d) = dist[v] {
            *h.entry(d).or_insert(0) += 1;
        }
    }
    h
}

/// Set sizes and hop histograms (distances in the original graph from the
/// request's anchor nodes).
fn neighbor_summary(g: &Graph, request: &UnlearnRequest, r: &NeighborReport) -> Value {
    let dist = hop_distances(g, request.anchor_nodes());
    let sets = [
        ("n_aff", &r.n_aff),
        ("n_ac", &r.n_ac),
        ("marginal", &r.marginal),
        ("n_fmn", &r.n_fmn),
        ("pool", &r.pool),
        ("n_han", &r.n_han),
    ];
    let mut sizes = serde_json::Map::new();
    let mut hists = serde_json::Map::new();
    let mut max_hop = serde_json::Map::new();
    for (name, set) in sets {
        let h = histogram(&dist, set);
        sizes.insert(name.into(), json!(set.len()));
        max_hop.insert(name.into(), json!(h.keys().next_back()));
        hists.insert(name.into(), json!(h));
    }
    json!({
        "sizes": sizes,
        "hop_histograms": hists,
        "max_hop": max_hop,
        "probe_ambiguous": r.probe_ambiguous,
    })
}

fn cmd_gen(ctx: &Ctx, sbm: &str, out: &Path) -> Result<()> {
    let spec = SbmSpec::parse(sbm, ctx.seed)?;
    let g = generate_sbm(&spec)?;
    fs::create_dir_all(out).map_err(|e| AguError::io(out, e))?;
    write_graph(&out.join("graph.tsv"), &g)?;
    write_masks(&out.join("masks.tsv"), &g)?;
    ctx.log(format!("{} nodes, {} edges -> {}", g.num_nodes(), g.num_edges(), out.display()));
    Ok(())
}

fn cmd_train(ctx: &Ctx, graph: &GraphArgs, model: &ModelArgs, targs: &TrainArgs, out: &Path, report: Option<&Path>) -> Result<()> {
    let g = graph.load()?;
    let dims = model.dims(&g)?;
    let cfg = targs.config(seed::derive(ctx.seed, "train"));
    let start = Instant::now();
    let mut m = crate::model::init_model(model.arch, &dims, cfg.seed)?;
    let tr = crate::model::train(&mut m, &g, &cfg)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    save_checkpoint(out, &m)?;
    ctx.log(format!("trained {} in {ms:.0} ms, train acc {:.3}", model.arch, tr.train_accuracy));
    if let Some(p) = report {
        write_json(
            p,
            &json!({
                "schema_version": SCHEMA_VERSION,
                "created_unix": now_unix(),
                "command": "train",
                "config": {
                    "seed": ctx.seed,
                    "graph": graph.graph,
                    "arch": model.arch,
                    "dims": dims,
                    "train": cfg,
                },
                "loss_trace": tr.loss_trace,
                "train_accuracy": tr.train_accuracy,
                "test_f1": test_f1(&m, &g),
                "fingerprint": m.fingerprint(),
                "wall_time_ms": ms,
            }),
        )?;
    }
    Ok(())
}

fn cmd_unlearn(ctx: &Ctx, c: &Command) -> Result<()> {
    let Command::Unlearn {
        graph,
        request,
        model_in,
        model_out,
        arch,
        alpha,
        theta,
        k_ans,
        epochs,
        lr,
        kl_cap,
        method,
        report,
    } = c
    else {
        unreachable!()
    };
    let g = graph.load()?;
    let r = load_request(request, g.num_nodes())?;
    let f_g = load_checkpoint(model_in)?;
    if let Some(a) = arch {
        if *a != f_g.arch() {
            return Err(AguError::Config(format!("--arch {a} but checkpoint holds a {} model", f_g.arch())));
        }
    }
    let d = UnlearnConfig::default();
    let cfg = UnlearnConfig {
        alpha: alpha.unwrap_or(d.alpha),
        epochs: epochs.unwrap_or(d.epochs),
        lr: lr.unwrap_or(d.lr),
        kl_cap: kl_cap.unwrap_or(d.kl_cap),
        seed: seed::derive(ctx.seed, "unlearn"),
        method: *method,
        filter: FilterConfig {
            theta: theta.unwrap_or(d.filter.theta),
            k_ans_fraction: k_ans.unwrap_or(d.filter.k_ans_fraction),
            probe_seed: seed::derive(ctx.seed, "probe"),
            ..d.filter
        },
        ..d
    };
    let o = unlearn(&f_g, &g, &r, &cfg)?;
    save_checkpoint(model_out, &o.model)?;
    let ms = o.wall_time.as_secs_f64() * 1e3;
    ctx.log(format!("unlearned {} {} element(s) in {ms:.0} ms", r.len(), r.kind()));
    if let Some(p) = report {
        let neighbors = o.report.as_ref().map(|nr| neighbor_summary(&g, &r, nr));
        write_json(
            p,
            &json!({
                "schema_version": SCHEMA_VERSION,
                "created_unix": now_unix(),
                "command": "unlearn",
                "config": {
                    "seed": ctx.seed,
                    "graph": graph.graph,
                    "request": request,
                    "model_in": model_in,
                    "arch": f_g.arch(),
                    "request_kind": r.kind(),
                    "request_size": r.len(),
                    "unlearn": cfg,
                },
                "loss_traces": o.trace,
                "neighbors": neighbors,
                "test_f1": test_f1(&o.model, &o.delta.remaining),
                "fingerprint": o.model.fingerprint(),
                "wall_time_ms": ms,
            }),
        )?;
    }
    Ok(())
}

fn cmd_retrain(
    ctx: &Ctx,
    graph: &GraphArgs,
    request: &Path,
    model: &ModelArgs,
    targs: &TrainArgs,
    out: &Path,
    report: Option<&Path>,
) -> Result<()> {
    let g = graph.load()?;
    let r = load_request(request, g.num_nodes())?;
    let remaining = r.apply(&g)?.remaining;
    let dims = model.dims(&g)?;
    let cfg = targs.config(seed::derive(ctx.seed, "train"));
    let start = Instant::now();
    let m = fit(model.arch, &dims, &remaining, &cfg)?;
    let ms = start.elapsed().as_secs_f64() * 1e3;
    save_checkpoint(out, &m)?;
    if let Some(p) = report {
        write_json(
            p,
            &json!({
                "schema_version": SCHEMA_VERSION,
                "created_unix": now_unix(),
                "command": "retrain",
                "config": {
                    "seed": ctx.seed,
                    "graph": graph.graph,
                    "request": request,
                    "arch": model.arch,
                    "dims": dims,
                    "train": cfg,
                },
                "test_f1": test_f1(&m, &remaining),
                "fingerprint": m.fingerprint(),
                "wall_time_ms": ms,
            }),
        )?;
    }
    Ok(())
}

fn cmd_neighbors(ctx: &Ctx, c: &Command) -> Result<()> {
    let Command::Neighbors {
        graph,
        request,
        model,
        model_in,
        theta,
        k_ans,
        report,
    } = c
    else {
        unreachable!()
    };
    let g = graph.load()?;
    let r = load_request(request, g.num_nodes())?;
    let f_g = match model_in {
        Some(p) => load_checkpoint(p)?,
        None => {
            ctx.log(format!("no --model-in, training a {} model", model.arch));
            let cfg = TrainConfig {
                seed: seed::derive(ctx.seed, "train"),
                ..TrainConfig::default()
            };
            fit(model.arch, &model.dims(&g)?, &g, &cfg)?
        }
    };
    let d = FilterConfig::default();
    let cfg = FilterConfig {
        theta: theta.unwrap_or(d.theta),
        k_ans_fraction: k_ans.unwrap_or(d.k_ans_fraction),
        probe_seed: seed::derive(ctx.seed, "probe"),
        ..d
    };
    let delta = r.apply(&g)?;
    let nr = build_neighbor_report(&f_g, &g, &delta, &r, &cfg)?;
    let mut summary = neighbor_summary(&g, &r, &nr);
    summary["schema_version"] = json!(SCHEMA_VERSION);
    summary["command"] = json!("neighbors");
    summary["config"] = json!({
        "seed": ctx.seed,
        "graph": graph.graph,
        "request": request,
        "arch": f_g.arch(),
        "layers": f_g.layers(),
        "request_kind": r.kind(),
        "filter": cfg,
    });
    summary["sets"] = json!({
        "n_aff": nr.n_aff,
        "n_ac": nr.n_ac,
        "n_fmn": nr.n_fmn,
        "n_han": nr.n_han,
    });
    write_json(report, &summary)
}

fn cmd_attack(ctx: &Ctx, graph: &GraphArgs, ratio: f64, out: &Path) -> Result<()> {
    let g = graph.load()?;
    let (noisy, r) = edge_attack(&g, ratio, seed::derive(ctx.seed, "attack"))?;
    fs::create_dir_all(out).map_err(|e| AguError::io(out, e))?;
    write_graph(&out.join("graph.tsv"), &noisy)?;
    write_masks(&out.join("masks.tsv"), &noisy)?;
    write_request(&out.join("request.tsv"), &r)?;
    ctx.log(format!("injected {} edges -> {}", r.len(), out.display()));
    Ok(())
}

fn cmd_bench(ctx: &Ctx, spec_path: &Path, out: &Path, csv: Option<&Path>, jobs: usize) -> Result<()> {
    let text = fs::read_to_string(spec_path).map_err(|e| AguError::io(spec_path, e))?;
    let spec: ExperimentSpec =
        serde_json::from_str(&text).map_err(|e| AguError::Config(format!("{}: {e}", spec_path.display())))?;
    ctx.log(format!("{} trial(s) x {} arch(s) on {jobs} thread(s)", spec.trials, spec.archs.len()));
    let report = run_experiment(&spec, jobs)?;
    let mut v = serde_json::to_value(&report).map_err(|e| AguError::Config(e.to_string()))?;
    v["created_unix"] = json!(now_unix());
    write_json(out, &v)?;
    if let Some(p) = csv {
        fs::write(p, report.to_csv()).map_err(|e| AguError::io(p, e))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let ctx = Ctx {
        seed: cli.seed,
        verbose: cli.verbose,
    };
    match &cli.command {
        Command::Gen { sbm, out } => cmd_gen(&ctx, sbm, out),
        Command::Train {
            graph,
            model,
            train,
            out,
            report,
        } => cmd_train(&ctx, graph, model, train, out, report.as_deref()),
        c @ Command::Unlearn { .. } => cmd_unlearn(&ctx, c),
        Command::Retrain {
            graph,
            request,
            model,
            train,
            out,
            report,
        } => cmd_retrain(&ctx, graph, request, model, train, out, report.as_deref()),
        c @ Command::Neighbors { .. } => cmd_neighbors(&ctx, c),
        Command::Attack { graph, ratio, out } => cmd_attack(&ctx, graph, *ratio, out),
        Command::Bench { spec, out, csv, jobs } => cmd_bench(&ctx, spec, out, csv.as_deref(), *jobs),
    }
}

/// Prints the valid flags of the subcommand named in `args`.
fn list_flags(args: &[OsString]) {
    let mut cmd = Cli::command();
    cmd.build();
    let name = args
        .iter()
        .skip(1)
        .filter_map(|a| a.to_str())
        .find(|a| cmd.find_subcommand(a).is_some());
    let target = match name {
        Some(n) => cmd.find_subcommand_mut(n).expect("found above"),
        None => &mut cmd,
    };
    let flags: Vec<String> = target
        .get_arguments()
        .filter_map(|a| a.get_long().map(|l| format!("--{l}")))
        .collect();
    eprintln!("valid flags: {}", flags.join(" "));
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return 0;
            }
            if e.kind() == clap::error::ErrorKind::UnknownArgument {
                list_flags(&args);
            }
            return 1;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

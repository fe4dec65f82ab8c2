use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use roadsight_core::graph::{parse_graph_definition, FlowWindow, TrafficGraph};
use roadsight_ingest::{
    encode_event, replay_file, send_lines, simulate_cameras, write_simulation, IngestServer,
    ReplayOptions, ServerConfig, SimulationSummary, SimulatorConfig, DEFAULT_CONFIDENCE_CUTOFF,
};
use serde::Serialize;

use super::emit;
use crate::config::{graph_config, load_classes, resolve_seed};
use crate::error::{read_text, CliError, Result};
use crate::{Context, GraphArgs};

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("<runtime>", e))
}

fn cutoff(flag: Option<f64>, ctx: &Context) -> Result<f64> {
    let c = flag
        .or(ctx.file.cutoff)
        .unwrap_or(DEFAULT_CONFIDENCE_CUTOFF);
    if (0.0..=1.0).contains(&c) {
        Ok(c)
    } else {
        Err(CliError::Usage(format!(
            "--cutoff must be in [0, 1], got {c}"
        )))
    }
}

fn load_snapshot(path: &Path) -> Result<TrafficGraph> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    TrafficGraph::restore(BufReader::new(file)).map_err(|e| CliError::graph(path, e))
}

fn build_graph(ctx: &Context, args: &GraphArgs) -> Result<TrafficGraph> {
    if let Some(path) = &args.restore {
        if args.classes.is_some() || args.window_ms.is_some() || args.lateness_ms.is_some() {
            log::warn!("class list and window settings come from the snapshot; flags ignored");
        }
        return load_snapshot(path);
    }
    let path = args
        .graph
        .as_ref()
        .or(ctx.file.graph.as_ref())
        .ok_or_else(|| {
            CliError::Usage(
                "a graph definition (--graph) or a snapshot (--restore) is required".into(),
            )
        })?;
    let def = parse_graph_definition(&read_text(path)?).map_err(|e| CliError::graph(path, e))?;
    let classes = load_classes(args.classes.as_deref(), &ctx.file)?;
    let config = graph_config(args.window_ms, args.lateness_ms, &ctx.file)?;
    TrafficGraph::from_definition(&def, classes, config).map_err(|e| CliError::graph(path, e))
}

fn write_snapshot(graph: &TrafficGraph, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut out = BufWriter::new(file);
    graph
        .snapshot(&mut out)
        .map_err(|e| CliError::io(path, e))?;
    out.flush().map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Camera ids, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "graph")]
    pub cameras: Vec<String>,
    /// Take camera ids from the nodes of this graph definition.
    #[arg(long, env = "ROADSIGHT_GRAPH")]
    pub graph: Option<PathBuf>,
    #[arg(long, env = "ROADSIGHT_CLASSES")]
    pub classes: Option<PathBuf>,
    /// Mean vehicles per minute for every camera and class.
    #[arg(long, default_value_t = 6.0)]
    pub rate: f64,
    /// Override the rate of one class, `name=per_minute`; repeatable.
    #[arg(long = "class-rate", value_name = "NAME=RATE")]
    pub class_rates: Vec<String>,
    #[arg(long, default_value_t = 600_000)]
    pub duration_ms: i64,
    #[arg(long, default_value_t = 1_000)]
    pub interval_ms: i64,
    /// Timestamp of the first frame, ms since the Unix epoch.
    #[arg(long, default_value_t = 1_700_000_000_000)]
    pub start_ms: i64,
    #[arg(long, env = "ROADSIGHT_SEED")]
    pub seed: Option<u64>,
    /// Write events to this file.
    #[arg(
        long,
        required_unless_present = "endpoint",
        conflicts_with = "endpoint"
    )]
    pub out: Option<PathBuf>,
    /// Send events to a running server instead.
    #[arg(long)]
    pub endpoint: Option<String>,
}

#[derive(Debug, Serialize)]
struct SimulateOutput {
    seed: u64,
    emitted: SimulationSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    acknowledged: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rejected: Option<u64>,
}

pub fn simulate(ctx: &Context, args: SimulateArgs) -> Result<()> {
    let seed = resolve_seed(args.seed, &ctx.file)?;
    let classes = load_classes(args.classes.as_deref(), &ctx.file)?;
    let cameras = if !args.cameras.is_empty() {
        args.cameras.clone()
    } else if let Some(path) = args.graph.as_ref().or(ctx.file.graph.as_ref()) {
        let def =
            parse_graph_definition(&read_text(path)?).map_err(|e| CliError::graph(path, e))?;
        def.nodes.into_iter().map(|n| n.id).collect()
    } else {
        return Err(CliError::Usage("give --cameras or --graph".into()));
    };

    let mut per_class = vec![args.rate; classes.len()];
    for spec in &args.class_rates {
        let (name, rate) = spec.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--class-rate wants NAME=RATE, got {spec:?}"))
        })?;
        let rate: f64 = rate
            .parse()
            .map_err(|_| CliError::Usage(format!("bad rate in --class-rate {spec:?}")))?;
        let idx = classes
            .index_of(name)
            .ok_or_else(|| CliError::Usage(format!("unknown class {name:?} in --class-rate")))?;
        per_class[idx] = rate;
    }
    let config = SimulatorConfig {
        rates: vec![per_class; cameras.len()],
        cameras,
        duration_ms: args.duration_ms,
        frame_interval_ms: args.interval_ms,
        start_ms: args.start_ms,
        seed,
    };
    config.validate().map_err(CliError::Usage)?;

    let mut output = SimulateOutput {
        seed,
        emitted: SimulationSummary::new(classes.len()),
        acknowledged: None,
        rejected: None,
    };
    if let Some(path) = &args.out {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        output.emitted =
            write_simulation(&config, BufWriter::new(file)).map_err(|e| CliError::io(path, e))?;
    } else if let Some(endpoint) = &args.endpoint {
        for e in simulate_cameras(&config).map_err(CliError::Usage)? {
            output.emitted.add(&e);
        }
        let lines = simulate_cameras(&config)
            .map_err(CliError::Usage)?
            .map(|e| encode_event(&e));
        let report = runtime()?
            .block_on(send_lines(endpoint.clone(), lines))
            .map_err(|e| CliError::io(endpoint, e))?;
        if let Some(err) = report.errors.first() {
            return Err(CliError::Data(format!("server closed the stream: {err}")));
        }
        output.acknowledged = Some(report.ok);
        output.rejected = Some(report.rejected);
    }

    emit(ctx, &output, || {
        let e = &output.emitted;
        let mut s = format!(
            "emitted {} events, {} vehicles (seed {seed})\n",
            e.events, e.vehicles
        );
        for (i, n) in e.per_class.iter().enumerate().filter(|(_, n)| **n > 0) {
            let _ = writeln!(s, "  {:<12} {n}", classes.name(i).unwrap_or("?"));
        }
        if let (Some(ok), Some(rej)) = (output.acknowledged, output.rejected) {
            let _ = writeln!(s, "acknowledged {ok}, rejected {rej}");
        }
        s
    });
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Address to listen on [default: 127.0.0.1:7878].
    #[arg(long, env = "ROADSIGHT_LISTEN")]
    pub listen: Option<String>,
    /// Write a snapshot here on shutdown.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        if let Ok(mut term) = signal(SignalKind::terminate()) {
            tokio::select! {
                _ = tokio::signal::ctrl_c() => {}
                _ = term.recv() => {}
            }
            return;
        }
    }
    let _ = tokio::signal::ctrl_c().await;
}

pub fn serve(ctx: &Context, args: ServeArgs) -> Result<()> {
    let graph = Arc::new(build_graph(ctx, &args.graph)?);
    let config = ServerConfig {
        listen: args
            .listen
            .or(ctx.file.listen.clone())
            .unwrap_or_else(|| ServerConfig::default().listen),
        confidence_cutoff: cutoff(args.graph.cutoff, ctx)?,
    };
    let listen = config.listen.clone();
    let rt = runtime()?;
    let stats = rt.block_on(async {
        let server = IngestServer::start(config, graph.clone())
            .await
            .map_err(|e| CliError::io(&listen, e))?;
        println!("listening on {}", server.local_addr());
        let _ = std::io::stdout().flush();
        shutdown_signal().await;
        log::info!("shutting down");
        Ok::<_, CliError>(server.shutdown().await)
    })?;
    if let Some(path) = &args.snapshot {
        write_snapshot(&graph, path)?;
    }
    emit(ctx, &stats, || {
        format!(
            "applied {} events ({} vehicles), rejected {}, dead-lettered {}, connections {}\n",
            stats.applied,
            stats.vehicles,
            stats.rejects(),
            stats.dead_lettered,
            stats.connections
        )
    });
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Event file, one wire-format record per line.
    #[arg(long)]
    pub events: PathBuf,
    /// Speed-up over recorded time; 0 is as fast as possible.
    #[arg(long, default_value_t = 0.0)]
    pub speed: f64,
    /// Apply events in file order instead of sorting by timestamp.
    #[arg(long)]
    pub keep_order: bool,
    /// Write the resulting graph snapshot here.
    #[arg(long)]
    pub snapshot_out: Option<PathBuf>,
}

pub fn replay(ctx: &Context, args: ReplayArgs) -> Result<()> {
    if !(args.speed >= 0.0 && args.speed.is_finite()) {
        return Err(CliError::Usage(format!(
            "--speed must be >= 0, got {}",
            args.speed
        )));
    }
    let graph = build_graph(ctx, &args.graph)?;
    let options = ReplayOptions {
        speed: args.speed,
        confidence_cutoff: cutoff(args.graph.cutoff, ctx)?,
        sort: !args.keep_order,
    };
    let summary =
        replay_file(&args.events, &graph, options).map_err(|e| CliError::io(&args.events, e))?;
    if let Some(path) = &args.snapshot_out {
        write_snapshot(&graph, path)?;
    }
    emit(ctx, &summary, || {
        let mut s = format!(
            "applied {} events ({} vehicles), rejected {} (malformed {}, unknown camera {}, invalid {}), dead-lettered {}, {:.3}s\n",
            summary.applied,
            summary.vehicles,
            summary.rejects(),
            summary.malformed,
            summary.unknown_camera,
            summary.invalid,
            summary.dead_lettered,
            summary.duration.as_secs_f64()
        );
        for e in &summary.errors {
            let _ = writeln!(s, "  {e}");
        }
        s
    });
    Ok(())
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// Graph snapshot to read.
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Per-window counts for this node.
    #[arg(long, required_unless_present = "top", conflicts_with = "top")]
    pub node: Option<String>,
    /// Rank nodes by total flow and print the first N.
    #[arg(long)]
    pub top: Option<usize>,
    /// Range start, ms since the epoch [default: first stored window].
    #[arg(long)]
    pub from: Option<i64>,
    /// Range end, exclusive [default: end of the last stored window].
    #[arg(long)]
    pub to: Option<i64>,
    /// Only count these classes; repeatable.
    #[arg(long = "class")]
    pub classes: Vec<String>,
}

pub fn query(ctx: &Context, args: QueryArgs) -> Result<()> {
    let graph = load_snapshot(&args.snapshot)?;
    let names = graph.classes();
    let filter: Option<Vec<usize>> = if args.classes.is_empty() {
        None
    } else {
        Some(
            args.classes
                .iter()
                .map(|n| {
                    names
                        .index_of(n)
                        .ok_or_else(|| CliError::Data(format!("unknown class {n:?}")))
                })
                .collect::<Result<_>>()?,
        )
    };
    let stored = graph.all_windows();
    let from = args
        .from
        .or_else(|| stored.iter().map(|w| w.start_ms).min())
        .unwrap_or(0);
    let to = args
        .to
        .or_else(|| stored.iter().map(|w| w.start_ms + w.width_ms).max())
        .unwrap_or(from);
    let err = |e| CliError::graph(&args.snapshot, e);

    if let Some(node) = &args.node {
        let windows = graph
            .query_flow(node, from, to, filter.as_deref())
            .map_err(err)?;
        emit(ctx, &windows, || {
            flow_table(&graph, &windows, filter.as_deref())
        });
    } else {
        let limit = args.top.unwrap_or(10);
        let ranked = graph
            .top_nodes_by_flow(from, to, filter.as_deref(), limit)
            .map_err(err)?;
        emit(ctx, &ranked, || {
            let mut s = format!("{:>4} {:<16} {:>10}\n", "rank", "node", "total");
            for (i, (node, total)) in ranked.iter().enumerate() {
                let _ = writeln!(s, "{:>4} {node:<16} {total:>10}", i + 1);
            }
            s
        });
    }
    Ok(())
}

/// Window table; class columns are the filter, or every class seen.
fn flow_table(graph: &TrafficGraph, windows: &[FlowWindow], filter: Option<&[usize]>) -> String {
    let k = graph.num_classes();
    let columns: Vec<usize> = match filter {
        Some(f) => f.to_vec(),
        None => (0..k)
            .filter(|&c| windows.iter().any(|w| w.counts[c] > 0))
            .collect(),
    };
    let names = graph.classes();
    let mut s = format!("{:>15} {:>7}", "window_start_ms", "total");
    for &c in &columns {
        let _ = write!(s, " {:>11}", names.name(c).unwrap_or("?"));
    }
    s.push('\n');
    for w in windows {
        let _ = write!(s, "{:>15} {:>7}", w.start_ms, w.total());
        for &c in &columns {
            let _ = write!(s, " {:>11}", w.counts[c]);
        }
        s.push('\n');
    }
    s
}

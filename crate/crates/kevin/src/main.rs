//! Experiment runner CLI: simulations, forwarding-table and topology dumps,
//! route queries, and parallel parameter sweeps.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use kevin::config::ExperimentConfig;
use kevin::debruijn::KevinTopology;
use kevin::forwarding::{greedy_route, prefix_string, table_for};
use kevin::ip::IpAddressingScheme;
use kevin::sim::{self, SimOutput};
use kevin::workload::{self, Pattern};

#[derive(Parser)]
#[command(name = "kevin", version, about = "Hybrid de Bruijn network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and emit metrics.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for summary.json and optional CSVs; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Scenario file applied to the topology before the run.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Print the forwarding table of one ToR in canonical order.
    DumpTable {
        tor: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Append the IP prefix of each entry.
        #[arg(long)]
        ip: bool,
    },
    /// Print the greedy route between two ToRs.
    Route {
        src: String,
        dst: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Print every edge of the configured topology.
    DumpTopology {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Run the cartesian product of config overrides on parallel workers.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Repeatable `key=v1,v2,...` axis.
        #[arg(long = "vary", required = true)]
        vary: Vec<String>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

struct CliError {
    code: u8,
    source: anyhow::Error,
}

fn usage(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: 1,
        source: e.into(),
    }
}

fn runtime(e: impl Into<anyhow::Error>) -> CliError {
    CliError {
        code: 2,
        source: e.into(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.source);
            ExitCode::from(e.code)
        }
    }
}

fn load_config(path: &Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::from_file(p).map_err(usage),
        None => Ok(ExperimentConfig::default()),
    }
}

fn build_topology(
    config: &ExperimentConfig,
    scenario: &Option<PathBuf>,
) -> Result<KevinTopology, CliError> {
    let mut topo = config.build_topology().map_err(usage)?;
    if let Some(path) = scenario {
        apply_scenario(&mut topo, path)?;
    }
    Ok(topo)
}

/// Scenario files inject DA links before a command: `set-da <s> <r> <switch>`.
fn apply_scenario(topo: &mut KevinTopology, path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario {}", path.display()))
        .map_err(usage)?;
    let space = *topo.space();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |reason: String| usage(anyhow!("scenario line {}: {reason}", i + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.as_slice() {
            ["set-da", s, r, sw] => {
                let s = space.parse(s).map_err(|e| err(e.to_string()))?;
                let r = space.parse(r).map_err(|e| err(e.to_string()))?;
                let sw: usize = sw.parse().map_err(|_| err(format!("bad switch {sw:?}")))?;
                topo.set_da_link(s, r, sw).map_err(|e| err(e.to_string()))?;
            }
            _ => return Err(err(format!("expected `set-da <s> <r> <switch>`, got {line:?}"))),
        }
    }
    Ok(())
}

fn parse_tor(topo: &KevinTopology, s: &str) -> Result<usize, CliError> {
    topo.space()
        .parse(s)
        .map_err(|e| usage(anyhow!("bad ToR address {s:?}: {e}")))
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            seed,
            output,
            scenario,
        } => {
            let mut config = load_config(&config)?;
            if let Some(seed) = seed {
                config.set("seed", &seed.to_string()).map_err(usage)?;
            }
            let topo = build_topology(&config, &scenario)?;
            let out = run_one(&config, topo)?;
            write_outputs(&config, &out, output.as_deref())
        }
        Command::DumpTable {
            tor,
            config,
            scenario,
            ip,
        } => {
            let config = load_config(&config)?;
            let topo = build_topology(&config, &scenario)?;
            let v = parse_tor(&topo, &tor)?;
            let scheme = if ip {
                Some(config.ip_scheme().map_err(usage)?)
            } else {
                None
            };
            print!("{}", render_table(&topo, v, scheme.as_ref()).map_err(usage)?);
            Ok(())
        }
        Command::Route {
            src,
            dst,
            config,
            scenario,
        } => {
            let config = load_config(&config)?;
            let topo = build_topology(&config, &scenario)?;
            let s = parse_tor(&topo, &src)?;
            let t = parse_tor(&topo, &dst)?;
            let path = greedy_route(&topo, s, t, 0).map_err(runtime)?;
            let space = topo.space();
            let line: Vec<String> = path.iter().map(|&v| space.address_of(v).to_string()).collect();
            println!("{}", line.join(" "));
            println!("length {}", path.len() - 1);
            Ok(())
        }
        Command::DumpTopology { config, scenario } => {
            let config = load_config(&config)?;
            let topo = build_topology(&config, &scenario)?;
            print!("{}", topo.dump());
            Ok(())
        }
        Command::Sweep {
            config,
            vary,
            output,
            seed,
        } => run_sweep(&config, &vary, &output, seed),
    }
}

fn generate_workload(config: &ExperimentConfig, n: usize) -> Result<Vec<workload::FlowSpec>, CliError> {
    if config.workload.pattern == Pattern::Trace {
        let path = config
            .trace
            .as_ref()
            .ok_or_else(|| usage(anyhow!("workload.trace not set")))?;
        let space = kevin::debruijn::AddressSpace::new(config.k_s, config.d).map_err(usage)?;
        workload::load_trace(path, &space, config.trace_addressing).map_err(usage)
    } else {
        workload::generate(&config.workload, n).map_err(usage)
    }
}

fn run_one(config: &ExperimentConfig, topo: KevinTopology) -> Result<SimOutput, CliError> {
    let flows = generate_workload(config, topo.node_count())?;
    let params = config.sim_params();
    std::panic::catch_unwind(move || sim::run(topo, &params, &flows))
        .map_err(|_| runtime(anyhow!("simulation failed; see panic output above")))
}

fn digest(out: &SimOutput) -> String {
    let m = &out.metrics;
    format!(
        "flows {}/{} bytes {:.3e}/{:.3e} fct_mean {:.6} path_len {:.4} reconfigs {}",
        m.flows_completed,
        m.flows_total,
        m.bytes_delivered,
        m.bytes_total,
        m.fct_mean,
        m.byte_weighted_mean_path_length,
        m.reconfigurations
    )
}

fn write_outputs(
    config: &ExperimentConfig,
    out: &SimOutput,
    dir: Option<&Path>,
) -> Result<(), CliError> {
    match dir {
        None => println!("{}", out.metrics.to_json()),
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("cannot create {}", dir.display()))
                .map_err(runtime)?;
            let write = |name: &str, text: String| {
                std::fs::write(dir.join(name), text)
                    .with_context(|| format!("cannot write {name}"))
                    .map_err(runtime)
            };
            write("summary.json", out.metrics.to_json())?;
            if config.write_flow_csv {
                write("flows.csv", sim::metrics::flow_csv(&out.flow_records))?;
            }
            if config.write_scheduler_csv {
                write(
                    "scheduler.csv",
                    sim::metrics::scheduler_csv(&out.scheduler_records),
                )?;
            }
        }
    }
    println!("{}", digest(out));
    Ok(())
}

/// Canonical table dump, optionally with the IP prefix realizing each entry.
fn render_table(
    topo: &KevinTopology,
    v: usize,
    scheme: Option<&IpAddressingScheme>,
) -> anyhow::Result<String> {
    let table = table_for(topo, v);
    let d = topo.dimension();
    let mut out = String::new();
    for e in table.entries() {
        let ports: Vec<String> = e.ports.iter().map(|p| p.to_string()).collect();
        out.push_str(&format!(
            "{} {} {}",
            prefix_string(&e.prefix, d),
            ports.join(","),
            e.path_length
        ));
        if let Some(scheme) = scheme {
            let (net, len) = scheme.prefix_for(&e.prefix)?;
            out.push_str(&format!(" {net}/{len}"));
        }
        out.push('\n');
    }
    out.push_str(&format!("{} Local 0", table.owner()));
    if let Some(scheme) = scheme {
        let (net, len) = scheme.tor_prefix(table.owner())?;
        out.push_str(&format!(" {net}/{len}"));
    }
    out.push('\n');
    Ok(out)
}

/// Expand `key=v1,v2` axes into the cartesian product of overrides.
fn expand_axes(vary: &[String]) -> Result<Vec<Vec<(String, String)>>, CliError> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for spec in vary {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| usage(anyhow!("--vary expects key=v1,v2,..., got {spec:?}")))?;
        let values: Vec<String> = values.split(',').map(str::to_string).collect();
        if values.iter().any(String::is_empty) {
            return Err(usage(anyhow!("--vary {spec:?} has an empty value")));
        }
        axes.push((key.to_string(), values));
    }
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for (key, values) in axes {
        let mut expanded = Vec::with_capacity(combos.len() * values.len());
        for combo in &combos {
            for v in &values {
                let mut next = combo.clone();
                next.push((key.clone(), v.clone()));
                expanded.push(next);
            }
        }
        combos = expanded;
    }
    Ok(combos)
}

fn run_sweep(
    config: &Option<PathBuf>,
    vary: &[String],
    output: &Path,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let base = load_config(config)?;
    let combos = expand_axes(vary)?;
    // validate every variant before spending any simulation time
    let mut variants = Vec::new();
    for (i, combo) in combos.iter().enumerate() {
        let mut c = base.clone();
        for (key, value) in combo {
            c.set(key, value).map_err(usage)?;
        }
        if let Some(seed) = seed {
            c.set("seed", &seed.to_string()).map_err(usage)?;
        }
        c.validate().map_err(usage)?;
        let label: Vec<String> = combo
            .iter()
            .map(|(k, v)| format!("{}={v}", k.replace('.', "_")))
            .collect();
        let name = if label.is_empty() {
            format!("variant_{i}")
        } else {
            format!("{i}_{}", label.join("_"))
        };
        variants.push((name, c));
    }
    std::fs::create_dir_all(output)
        .with_context(|| format!("cannot create {}", output.display()))
        .map_err(runtime)?;

    let results: Vec<Result<String, CliError>> = variants
        .into_par_iter()
        .map(|(name, c)| {
            let topo = build_topology(&c, &None)?;
            let out = run_one(&c, topo)?;
            let dir = output.join(&name);
            std::fs::create_dir_all(&dir)
                .with_context(|| format!("cannot create {}", dir.display()))
                .map_err(runtime)?;
            std::fs::write(dir.join("summary.json"), out.metrics.to_json())
                .context("cannot write summary.json")
                .map_err(runtime)?;
            if c.write_flow_csv {
                std::fs::write(dir.join("flows.csv"), sim::metrics::flow_csv(&out.flow_records))
                    .context("cannot write flows.csv")
                    .map_err(runtime)?;
            }
            Ok(format!("{name}: {}", digest(&out)))
        })
        .collect();
    let mut failed = None;
    for r in results {
        match r {
            Ok(line) => println!("{line}"),
            Err(e) => {
                eprintln!("error: {:#}", e.source);
                failed = Some(e.code);
            }
        }
    }
    match failed {
        Some(code) => Err(CliError {
            code,
            source: anyhow!("one or more sweep variants failed"),
        }),
        None => Ok(()),
    }
}

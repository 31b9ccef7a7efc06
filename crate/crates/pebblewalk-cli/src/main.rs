use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pebblewalk::agent::{random_agent, random_pebble_machine, run_cooperative, run_pebble_machine, run_single, AgentDoc, MachineDoc, Trace};
use pebblewalk::corpus::{cubic_exhaustive_upto, general_corpus, manifest, sha256_hex, Manifest, NamedGraph};
use pebblewalk::graph::{self, GenKind, PortLabeledGraph};
use pebblewalk::pebble_sim::{explore_loglog, ExplorerWalks};
use pebblewalk::reductions::{compile_pebbles_to_agents, compile_pebbles_to_agents_staged, compile_states_to_pebbles};
use pebblewalk::sequences::{certificate_walk, search_certificate, verify_prefix, CorpusDescriptor, SearchStrategy, UxsCertificate, CACHE_ENV};
use pebblewalk::suite::{run_plan, run_suite, suite_bundle, ExperimentPlan, SuiteOptions};
use pebblewalk::traps::{build_rbarrier, build_trap, random_cooperative, verify_trap, CoopAgentsDoc, TrapConfig};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Exploration of port-labeled graphs by finite agents with pebbles.
#[derive(Parser)]
#[command(name = "pebblewalk", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct Global {
    /// Seed for every generator this run touches.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Work budget (steps, search nodes or simulator work, depending on the command).
    #[arg(long, global = true)]
    budget: Option<u64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, validate or draw graphs.
    #[command(subcommand)]
    Graph(GraphCmd),
    /// Universal sequences: search, verify and lift.
    #[command(subcommand)]
    Seq(SeqCmd),
    /// Run agents and pebble machines.
    #[command(subcommand)]
    Run(RunCmd),
    /// Compile agents between the memory, pebble and cooperative models.
    #[command(subcommand)]
    Compile(CompileCmd),
    /// Run the log-log space explorer on a graph.
    Explore {
        graph: PathBuf,
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
    /// Build r-barriers.
    #[command(subcommand)]
    Barrier(BarrierCmd),
    /// Build and verify traps.
    #[command(subcommand)]
    Trap(TrapCmd),
    /// Run the acceptance suite and write its report bundle.
    Suite {
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment plan (JSON) and write its report bundle.
    Plan {
        plan: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic graph corpora with pinned hashes.
    #[command(subcommand)]
    Corpus(CorpusCmd),
}

#[derive(Subcommand)]
enum GraphCmd {
    /// Print a generated graph.
    Gen {
        #[arg(value_enum)]
        kind: Kind,
        #[arg(long, default_value_t = 10)]
        n: usize,
        /// Chords beyond the Hamiltonian cycle, for `general`.
        #[arg(long, default_value_t = 0)]
        extra: usize,
    },
    /// Report every invariant violation; exits nonzero on any.
    Validate { graph: PathBuf },
    /// Emit DOT.
    Dot {
        graph: PathBuf,
        #[arg(long, value_delimiter = ',')]
        highlight: Vec<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    K4,
    Prism,
    Diamond,
    Cubic,
    General,
}

#[derive(Subcommand)]
enum SeqCmd {
    /// Search a certificate for a family.
    Search {
        #[arg(value_enum)]
        family: Family,
        /// Vertex count (cubic) or largest graph (lifted).
        #[arg(long)]
        n: usize,
        /// Coverage target for lifted families.
        #[arg(long, default_value_t = 2)]
        z: usize,
        #[arg(long)]
        shortest: bool,
    },
    /// Re-verify a certificate file against its family.
    Verify { certificate: PathBuf },
    /// Doubled walk of an offset list such as `0,1,2`, optionally lifted.
    Lift {
        #[arg(value_delimiter = ',')]
        offsets: Vec<u8>,
        /// Lift the doubled walk for graphs of any degree.
        #[arg(long)]
        general: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Cubic,
    Lifted,
}

#[derive(Subcommand)]
enum RunCmd {
    /// One agent from a document, or a seeded random one.
    Single {
        graph: PathBuf,
        #[arg(long)]
        agent: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = 3)]
        states: usize,
        #[arg(long, default_value_t = 1)]
        pebbles: usize,
    },
    /// Cooperative agents from a document, or seeded random ones.
    Coop {
        graph: PathBuf,
        #[arg(long)]
        agents: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        states: usize,
    },
    /// A pebble machine from a document, or a seeded random one.
    Machine {
        graph: PathBuf,
        #[arg(long)]
        machine: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        start: usize,
        #[arg(long, default_value_t = 8)]
        tape: usize,
    },
}

#[derive(Subcommand)]
enum CompileCmd {
    /// Finite memory to six states and extra pebbles.
    Mem2peb { agent: PathBuf, #[arg(long, default_value_t = 3)] max_degree: usize },
    /// Pebbles to cooperating agents.
    Peb2agents {
        agent: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_degree: usize,
        /// Use the variant that commits a pebble's move one step later.
        #[arg(long)]
        staged: bool,
    },
}

#[derive(Args)]
struct AgentSource {
    /// Cooperative agents document.
    #[arg(long)]
    agents: Option<PathBuf>,
    /// Without a document: this many seeded random agents.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    states: usize,
    #[arg(long)]
    max_alpha: Option<usize>,
}

#[derive(Subcommand)]
enum BarrierCmd {
    Build {
        #[command(flatten)]
        src: AgentSource,
        #[arg(long, default_value_t = 1)]
        rank: usize,
        /// Write the barrier graph here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TrapCmd {
    Build {
        #[command(flatten)]
        src: AgentSource,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the agents document, for `trap verify`.
        #[arg(long)]
        agents_out: Option<PathBuf>,
    },
    /// Exit 0 iff the agents are trapped.
    Verify {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        agents: PathBuf,
        #[arg(long, default_value_t = 0)]
        start: usize,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Write graphs and MANIFEST.json into a directory.
    Make {
        #[arg(value_enum)]
        family: CorpusFamily,
        #[arg(long, default_value_t = 10)]
        max_n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Counts per n from a manifest.
    List { dir: PathBuf },
    /// Check every file against its pinned hash; exits nonzero on a mismatch.
    Hash { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum CorpusFamily {
    Cubic,
    General,
}

fn read_graph(path: &Path) -> Result<PortLabeledGraph> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    graph::parse(&bytes).with_context(|| format!("{}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).with_context(|| format!("{}", path.display()))
}

fn say(s: &str) {
    // a closed pipe (e.g. `| head`) is not an error
    let _ = std::io::stdout().lock().write_all(s.as_bytes());
}

fn emit(v: &Value) {
    say(&(serde_json::to_string_pretty(v).expect("json") + "\n"));
}

fn emit_trace(t: &Trace, fmt: Format) {
    match fmt {
        Format::Csv => say(&t.to_csv()),
        _ => emit(&serde_json::to_value(t).expect("json")),
    }
}

fn load_agents(src: &AgentSource, seed: u64) -> Result<pebblewalk::agent::CooperativeAgentSpec> {
    match &src.agents {
        Some(p) => Ok(read_json::<CoopAgentsDoc>(p)?.load()?),
        None => Ok(random_cooperative(src.k, src.states, seed)),
    }
}

fn trap_config(g: &Global, src: &AgentSource) -> TrapConfig {
    let d = TrapConfig::default();
    TrapConfig { max_alpha: src.max_alpha.unwrap_or(d.max_alpha), step_cap: g.budget.unwrap_or(d.step_cap), ..d }
}

fn write_or_print(out: &Option<PathBuf>, g: &PortLabeledGraph, fmt: Format) -> Result<()> {
    let body = if fmt == Format::Dot { graph::to_dot(g, &[]) } else { graph::serialize(g) };
    match out {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            say(&body);
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    let g = cli.global;
    match cli.command {
        Command::Graph(GraphCmd::Gen { kind, n, extra }) => {
            let k = match kind {
                Kind::K4 => GenKind::K4,
                Kind::Prism => GenKind::Prism,
                Kind::Diamond => GenKind::DiamondGadget,
                Kind::Cubic => GenKind::Random3Regular { n },
                Kind::General => GenKind::RandomGeneral { n, extra },
            };
            let graph = graph::generate(k, g.seed)?;
            write_or_print(&None, &graph, g.format)?;
        }
        Command::Graph(GraphCmd::Validate { graph }) => {
            let r = graph::validate(&read_graph(&graph)?);
            emit(&json!({"valid": r.is_valid(), "report": r}));
            return Ok(r.is_valid());
        }
        Command::Graph(GraphCmd::Dot { graph, highlight }) => say(&graph::to_dot(&read_graph(&graph)?, &highlight)),
        Command::Seq(SeqCmd::Search { family, n, z, shortest }) => {
            let desc = match family {
                Family::Cubic => CorpusDescriptor::CubicExhaustive { n },
                Family::Lifted => CorpusDescriptor::GeneralLifted { max_n: n, z, seed: g.seed },
            };
            let strategy = if shortest { SearchStrategy::ShortestFirst } else { SearchStrategy::Greedy };
            let cert = search_certificate(n, 3, &desc, strategy, g.budget.unwrap_or(1 << 24))?;
            emit(&serde_json::to_value(&cert)?);
        }
        Command::Seq(SeqCmd::Verify { certificate }) => {
            let cert: UxsCertificate = read_json(&certificate)?;
            let rep = verify_prefix(&cert.offsets, &cert.descriptor, &cert.descriptor.graphs());
            emit(&serde_json::to_value(&rep)?);
            return Ok(rep.success);
        }
        Command::Seq(SeqCmd::Lift { offsets, general }) => {
            if offsets.iter().any(|&o| o > 2) {
                bail!("offsets must be 0, 1 or 2");
            }
            let walk = certificate_walk(&offsets, general);
            emit(&json!({"offsets": offsets, "walk": walk}));
        }
        Command::Run(cmd) => {
            let budget = g.budget.unwrap_or(100_000);
            match cmd {
                RunCmd::Single { graph, agent, start, states, pebbles } => {
                    let host = read_graph(&graph)?;
                    let a = match agent {
                        Some(p) => read_json::<AgentDoc>(&p)?.load(host.max_degree())?,
                        None => random_agent(states, pebbles, host.max_degree(), true, g.seed),
                    };
                    emit_trace(&run_single(&a, &host, start, budget)?, g.format);
                }
                RunCmd::Coop { graph, agents, start, k, states } => {
                    let host = read_graph(&graph)?;
                    let spec = match agents {
                        Some(p) => read_json::<CoopAgentsDoc>(&p)?.load()?,
                        None => random_cooperative(k, states, g.seed),
                    };
                    emit_trace(&run_cooperative(&spec, &host, start, budget)?, g.format);
                }
                RunCmd::Machine { graph, machine, start, tape } => {
                    let host = read_graph(&graph)?;
                    let t = match machine {
                        Some(p) => read_json::<MachineDoc>(&p)?.load(host.max_degree())?,
                        None => random_pebble_machine(2, 3, 1, tape, host.max_degree(), g.seed),
                    };
                    emit_trace(&run_pebble_machine(&t, &host, start, budget)?, g.format);
                }
            }
        }
        Command::Compile(CompileCmd::Mem2peb { agent, max_degree }) => {
            let a = read_json::<AgentDoc>(&agent)?.load(max_degree)?;
            emit(&serde_json::to_value(AgentDoc::from_spec(&compile_states_to_pebbles(&a)))?);
        }
        Command::Compile(CompileCmd::Peb2agents { agent, max_degree, staged }) => {
            let a = read_json::<AgentDoc>(&agent)?.load(max_degree)?;
            let c = if staged { compile_pebbles_to_agents_staged(&a) } else { compile_pebbles_to_agents(&a) };
            emit(&serde_json::to_value(CoopAgentsDoc::from_spec(&c))?);
        }
        Command::Explore { graph, start } => {
            let host = read_graph(&graph)?;
            let walks = ExplorerWalks::certify(&general_corpus(200, g.seed), "explore", 3)?;
            let rep = explore_loglog(&host, start, &walks, g.budget.unwrap_or(1_000_000_000));
            match g.format {
                Format::Csv => say(&format!(
                    "n,pebbles_used,traversals,r_final\n{},{},{},{}\n",
                    host.vertex_count(),
                    rep.pebbles_used,
                    rep.edge_traversals,
                    rep.terminating_r.map_or(String::new(), |r| r.to_string())
                )),
                _ => emit(&serde_json::to_value(&rep)?),
            }
            return Ok(rep.error.is_none());
        }
        Command::Barrier(BarrierCmd::Build { src, rank, out }) => {
            let agents = load_agents(&src, g.seed)?;
            let b = build_rbarrier(&agents, rank, &trap_config(&g, &src))?;
            if out.is_some() || g.format == Format::Dot {
                write_or_print(&out, &b.graph, g.format)?;
            }
            if g.format != Format::Dot {
                emit(&serde_json::to_value(&b)?);
            }
        }
        Command::Trap(TrapCmd::Build { src, out, agents_out }) => {
            let agents = load_agents(&src, g.seed)?;
            if let Some(p) = &agents_out {
                std::fs::write(p, serde_json::to_string_pretty(&CoopAgentsDoc::from_spec(&agents))? + "\n")?;
            }
            let t = build_trap(&agents, &trap_config(&g, &src))?;
            if out.is_some() || g.format == Format::Dot {
                write_or_print(&out, &t.graph, g.format)?;
            }
            if g.format != Format::Dot {
                emit(&serde_json::to_value(&t)?);
            }
        }
        Command::Trap(TrapCmd::Verify { graph, agents, start }) => {
            let host = read_graph(&graph)?;
            let spec = read_json::<CoopAgentsDoc>(&agents)?.load()?;
            let ev = verify_trap(&host, &spec, start, g.budget.unwrap_or(TrapConfig::default().step_cap))?;
            emit(&json!({"verdict": if ev.trapped { "trapped" } else { "explored" }, "evidence": ev}));
            return Ok(ev.trapped);
        }
        Command::Suite { out } => {
            let opts = SuiteOptions { seed: g.seed, explore_budget: g.budget.unwrap_or(SuiteOptions::default().explore_budget), ..SuiteOptions::default() };
            let bundle = suite_bundle(&run_suite(&opts));
            bundle.write_to(&out)?;
            say(&bundle.files["summary.txt"]);
            return Ok(bundle.ok);
        }
        Command::Plan { plan, out } => {
            let plan: ExperimentPlan = read_json(&plan)?;
            let bundle = run_plan(&plan).map_err(anyhow::Error::msg)?;
            bundle.write_to(&out)?;
            say(&format!("{} files, manifest {}\n", bundle.files.len(), bundle.digest()));
            return Ok(bundle.ok);
        }
        Command::Corpus(CorpusCmd::Make { family, max_n, out }) => {
            let (desc, graphs): (String, Vec<NamedGraph>) = match family {
                CorpusFamily::Cubic => (format!("edge-symmetric cubic graphs, n <= {max_n}"), cubic_exhaustive_upto(max_n)),
                CorpusFamily::General => (format!("general corpus, n <= {max_n}, seed {}", g.seed), general_corpus(max_n, g.seed)),
            };
            std::fs::create_dir_all(&out)?;
            for ng in &graphs {
                std::fs::write(out.join(format!("{}.json", ng.name)), graph::serialize(&ng.graph))?;
            }
            let m = manifest(&desc, &graphs);
            std::fs::write(out.join("MANIFEST.json"), serde_json::to_string_pretty(&m)? + "\n")?;
            emit(&json!({"graphs": graphs.len(), "counts_per_n": m.counts_per_n}));
        }
        Command::Corpus(CorpusCmd::List { dir }) => {
            let m: Manifest = read_json(&dir.join("MANIFEST.json"))?;
            match g.format {
                Format::Csv => {
                    let rows: String = m.counts_per_n.iter().map(|(n, c)| format!("{n},{c}\n")).collect();
                    say(&format!("n,count\n{rows}"));
                }
                _ => emit(&json!({"description": m.description, "counts_per_n": m.counts_per_n})),
            }
        }
        Command::Corpus(CorpusCmd::Hash { dir }) => {
            let m: Manifest = read_json(&dir.join("MANIFEST.json"))?;
            let mut mismatches = Vec::new();
            for e in &m.entries {
                match std::fs::read(dir.join(&e.file)) {
                    Ok(bytes) if sha256_hex(&bytes) == e.sha256 => {}
                    Ok(_) => mismatches.push(json!({"file": e.file, "problem": "hash mismatch"})),
                    Err(err) => mismatches.push(json!({"file": e.file, "problem": err.to_string()})),
                }
            }
            emit(&json!({"files": m.entries.len(), "mismatches": mismatches}));
            return Ok(mismatches.is_empty());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(dir) = std::env::var_os(CACHE_ENV) {
        eprintln!("certificate cache: {}", PathBuf::from(dir).display());
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

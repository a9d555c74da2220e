mod report;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use netquery::engine_fo::run_qe_fo;
use netquery::engine_fp::run_qe_fp;
use netquery::local_engine::{check_locally_consistent, local_query, run_qe_fo_loc, run_qe_fp_loc, LocalConfig};
use netquery::logic::rules::{parse_program, Dialect};
use netquery::logic::{parse_fixpoint, parse_formula, relativize, FixpointQuery, NodeId};
use netquery::netlog::run_netlog;
use netquery::oracle::fixtures::{all_connected, grid, local_labels, path, random_connected, ring, star};
use netquery::oracle::{eval_datalog, eval_fo, eval_fp, Graph, Interp};
use netquery::rewriter::{compile_with, CompileOptions, InformGuard};
use netquery::simnet::{Mode, Network, ReportFormat, RunConfig};
use report::Report;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "netquery", version, about = "Distributed query evaluation on simulated networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Args)]
struct NetArgs {
    /// Graph file: `n m`, m edge lines, optional `@facts` section.
    #[arg(long)]
    net: PathBuf,
    /// Extra unary fact, e.g. `dest:4` (repeatable).
    #[arg(long = "fact", value_name = "PRED:NODE")]
    facts: Vec<String>,
    /// global | local-consistent:<k> | anonymous
    #[arg(long, default_value = "global")]
    identity: String,
    /// Label map (`node label` lines) for locally consistent mode.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    port_seed: u64,
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
}

#[derive(Args)]
struct RunArgs {
    /// Requesting node.
    #[arg(long, default_value_t = 1)]
    req: NodeId,
    #[arg(long, default_value_t = 0)]
    order_seed: u64,
    #[arg(long, default_value_t = 100_000)]
    rounds_cap: u64,
    /// Compare with the oracle; exit 1 on mismatch.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Reference evaluation of an FO formula.
    OracleFo {
        #[command(flatten)]
        net: NetArgs,
        /// Formula text or a file holding it.
        #[arg(long)]
        query: String,
    },
    /// Reference evaluation of a fixpoint query.
    OracleFp {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        query: String,
        /// Relativize around the first variable first.
        #[arg(long)]
        radius: Option<u32>,
    },
    /// Distributed FO evaluation.
    QeFo {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        query: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Distributed fixpoint evaluation.
    QeFp {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        query: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Local FO evaluation; works without ids.
    QeFoLoc {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        query: String,
        /// Relativize around the first free variable first.
        #[arg(long)]
        radius: Option<u32>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Local fixpoint evaluation; works without ids.
    QeFpLoc {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        query: String,
        #[arg(long)]
        radius: u32,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a Netlog program.
    NetlogRun {
        #[command(flatten)]
        net: NetArgs,
        /// Program text or a file holding it.
        #[arg(long)]
        program: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Reference inflationary evaluation of a Datalog program.
    DatalogRun {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        program: String,
    },
    /// Compile Datalog to Netlog for graphs of a given diameter.
    Compile {
        #[arg(long)]
        program: String,
        #[arg(long, conflicts_with = "net")]
        delta: Option<u32>,
        /// Take the diameter from this graph.
        #[arg(long)]
        net: Option<PathBuf>,
        /// Forward informs while the clock is at least this value (default: the diameter).
        #[arg(long)]
        inform_at_least: Option<u32>,
    },
    /// Are the labels distinct inside every k-neighbourhood? Exit 1 if not.
    CheckConsistent {
        #[arg(long)]
        net: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        k: u32,
    },
    /// Emit test graphs: path, ring, star, grid, all (connected, degree <= 3, n <= 5) or random.
    Fixtures {
        family: String,
        size: usize,
        /// Write one file per graph here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn text_or_file(s: &str) -> Result<String> {
    let p = Path::new(s);
    if p.is_file() {
        std::fs::read_to_string(p).with_context(|| format!("reading {s}"))
    } else {
        Ok(s.to_string())
    }
}

fn load_graph(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Graph::parse(&text, None).with_context(|| format!("parsing {}", path.display()))
}

fn load_labels(path: &Path, n: usize) -> Result<Vec<NodeId>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut labels = vec![None; n];
    for (i, l) in text.lines().enumerate() {
        let l = l.split('#').next().unwrap().trim();
        if l.is_empty() {
            continue;
        }
        let nums: Vec<NodeId> = l
            .split_whitespace()
            .map(|t| t.parse())
            .collect::<Result<_, _>>()
            .map_err(|_| anyhow!("{}:{}: expected `node label`", path.display(), i + 1))?;
        let [a, lab] = nums[..] else { bail!("{}:{}: expected `node label`", path.display(), i + 1) };
        let slot = labels
            .get_mut((a as usize).wrapping_sub(1))
            .ok_or_else(|| anyhow!("{}:{}: node {a} is not in the graph", path.display(), i + 1))?;
        *slot = Some(lab);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| anyhow!("{}: no label for node {}", path.display(), i + 1)))
        .collect()
}

/// The graph with the extra facts and, unless given, `ReqNode(req)`.
fn graph_with_facts(a: &NetArgs, req: Option<NodeId>) -> Result<Graph> {
    let mut g = load_graph(&a.net)?;
    for f in &a.facts {
        let (p, node) = f.split_once(':').ok_or_else(|| anyhow!("--fact expects PRED:NODE, got {f}"))?;
        let node: NodeId = node.parse().map_err(|_| anyhow!("--fact {f}: bad node"))?;
        if !g.contains(node) {
            bail!("--fact {f}: node {node} is not in the graph");
        }
        g.add_fact(p, vec![node]);
    }
    if let Some(r) = req {
        if g.relation("ReqNode").is_none() && g.contains(r) {
            g.add_fact("ReqNode", vec![r]);
        }
    }
    Ok(g)
}

fn network(a: &NetArgs, g: Graph) -> Result<Network> {
    let mode = match a.identity.as_str() {
        "global" => Mode::Global,
        "anonymous" => Mode::Anonymous,
        s => {
            let k: u32 = s
                .strip_prefix("local-consistent:")
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| anyhow!("--identity must be global, local-consistent:<k> or anonymous"))?;
            let labels = match &a.labels {
                Some(p) => load_labels(p, g.n())?,
                None => local_labels(&g, k),
            };
            Mode::LocallyConsistent { k, labels }
        }
    };
    Ok(Network::new(g, mode, a.port_seed)?)
}

fn fmt(a: &NetArgs) -> ReportFormat {
    match a.format {
        Format::Table => ReportFormat::Table,
        Format::Csv => ReportFormat::Csv,
    }
}

fn cfg(r: &RunArgs) -> RunConfig {
    RunConfig { order_seed: r.order_seed, round_cap: r.rounds_cap }
}

fn verdict(rep: &mut Report, ok: bool) -> u8 {
    rep.line("check", if ok { "ok" } else { "MISMATCH" });
    u8::from(!ok)
}

fn fixpoint(text: &str, radius: Option<u32>) -> Result<FixpointQuery> {
    let q = parse_fixpoint(&text_or_file(text)?)?;
    Ok(match radius {
        Some(k) => q.localized(k)?,
        None => q,
    })
}

fn run(cmd: Cmd) -> Result<(String, u8)> {
    let mut code = 0;
    let out = match cmd {
        Cmd::OracleFo { net, query } => {
            let f = parse_formula(&text_or_file(&query)?)?;
            let g = graph_with_facts(&net, None)?;
            let mut rep = Report::new(fmt(&net));
            rep.relation("answer", &f.free_vars(), &eval_fo(&g, &f)?.tuples);
            rep.finish()
        }
        Cmd::OracleFp { net, query, radius } => {
            let q = fixpoint(&query, radius)?;
            let g = graph_with_facts(&net, None)?;
            let st = eval_fp(&g, &q)?;
            let mut rep = Report::new(fmt(&net));
            rep.relation(&q.name, &q.vars, st.final_stage());
            rep.line("stages", &st.productive_stages().to_string());
            rep.finish()
        }
        Cmd::QeFo { net, query, run } => {
            let f = parse_formula(&text_or_file(&query)?)?;
            let g = graph_with_facts(&net, Some(run.req))?;
            let nw = network(&net, g.clone())?;
            let r = run_qe_fo(&nw, &f, run.req, cfg(&run))?;
            let mut rep = Report::new(fmt(&net));
            rep.relation("answer", &f.free_vars(), &r.relation.tuples);
            rep.placement(&r.per_node);
            rep.metrics(&r.metrics);
            if run.check {
                code = verdict(&mut rep, eval_fo(&g, &f)?.tuples == r.relation.tuples);
            }
            rep.finish()
        }
        Cmd::QeFp { net, query, run } => {
            let q = fixpoint(&query, None)?;
            let g = graph_with_facts(&net, Some(run.req))?;
            let nw = network(&net, g.clone())?;
            let r = run_qe_fp(&nw, &q, run.req, cfg(&run))?;
            let mut rep = Report::new(fmt(&net));
            rep.relation(&q.name, &q.vars, &r.result.relation.tuples);
            rep.placement(&r.result.per_node);
            rep.line("iterations", &r.iterations.to_string());
            rep.metrics(&r.result.metrics);
            if run.check {
                code = verdict(&mut rep, eval_fp(&g, &q)?.final_stage() == &r.result.relation.tuples);
            }
            rep.finish()
        }
        Cmd::QeFoLoc { net, query, radius, run } => {
            let mut f = parse_formula(&text_or_file(&query)?)?;
            if let Some(k) = radius {
                let center = f.free_vars().into_iter().next().ok_or_else(|| anyhow!("formula has no free variable"))?;
                f = relativize(&f, &center, k)?;
            }
            let g = graph_with_facts(&net, Some(run.req))?;
            let nw = network(&net, g.clone())?;
            let vars = local_query(&nw, &f)?.vars;
            let lc = LocalConfig { run: cfg(&run), ..LocalConfig::default() };
            let r = run_qe_fo_loc(&nw, &f, run.req, lc)?;
            let got = r.resolve(&nw);
            let mut rep = Report::new(fmt(&net));
            rep.relation("answer", &vars, &got);
            rep.local_placement(&r.per_node);
            rep.metrics(&r.metrics);
            if run.check {
                code = verdict(&mut rep, Interp::new(&g).satisfying(&f, &vars) == got);
            }
            rep.finish()
        }
        Cmd::QeFpLoc { net, query, radius, run } => {
            let q = fixpoint(&query, Some(radius))?;
            let g = graph_with_facts(&net, Some(run.req))?;
            let nw = network(&net, g.clone())?;
            let lc = LocalConfig { run: cfg(&run), ..LocalConfig::default() };
            let r = run_qe_fp_loc(&nw, &q, run.req, lc)?;
            let got = r.resolve(&nw);
            let mut rep = Report::new(fmt(&net));
            rep.relation(&q.name, &q.vars, &got);
            rep.local_placement(&r.per_node);
            rep.line("iterations", &r.iterations.to_string());
            rep.metrics(&r.metrics);
            if run.check {
                code = verdict(&mut rep, eval_fp(&g, &q)?.final_stage() == &got);
            }
            rep.finish()
        }
        Cmd::NetlogRun { net, program, run } => {
            let p = parse_program(&text_or_file(&program)?, Dialect::Netlog)?;
            let g = graph_with_facts(&net, Some(run.req))?;
            let nw = network(&net, g)?;
            let r = run_netlog(&nw, &p, cfg(&run))?;
            let mut rep = Report::new(fmt(&net));
            let arities = p.arities()?;
            for rel in p.intentional() {
                let arity = arities.get(&rel).copied().unwrap_or(0);
                let vars: Vec<String> = (1..=arity).map(|i| format!("_{i}")).collect();
                rep.relation(&rel, &vars, &r.relation(&rel));
            }
            rep.metrics(&r.metrics);
            rep.finish()
        }
        Cmd::DatalogRun { net, program } => {
            let p = parse_program(&text_or_file(&program)?, Dialect::Datalog)?;
            let g = graph_with_facts(&net, None)?;
            let tr = eval_datalog(&p, &g)?;
            let mut rep = Report::new(fmt(&net));
            for (rel, ts) in tr.final_instance() {
                let arity = ts.iter().next().map_or(0, Vec::len);
                let vars: Vec<String> = (1..=arity).map(|i| format!("_{i}")).collect();
                rep.relation(rel, &vars, ts);
            }
            rep.line("stages", &(tr.stages.len() - 2).to_string());
            rep.finish()
        }
        Cmd::Compile { program, delta, net, inform_at_least } => {
            let p = parse_program(&text_or_file(&program)?, Dialect::Datalog)?;
            let delta = match (delta, net) {
                (Some(d), _) => d,
                (None, Some(n)) => load_graph(&n)?.diameter(),
                (None, None) => bail!("compile needs --delta or --net"),
            };
            let inform_guard = inform_at_least.map_or(InformGuard::Diameter, InformGuard::AtLeast);
            compile_with(&p, delta, CompileOptions { inform_guard })?.to_text()
        }
        Cmd::CheckConsistent { net, labels, k } => {
            let g = load_graph(&net)?;
            let labels = load_labels(&labels, g.n())?;
            let ok = check_locally_consistent(&g, &labels, k);
            code = u8::from(!ok);
            format!("{}\n", if ok { "consistent" } else { "inconsistent" })
        }
        Cmd::Fixtures { family, size, out, seed } => {
            let graphs: Vec<Graph> = match (family.as_str(), size) {
                ("path", n) if n >= 1 => vec![path(n)],
                ("ring", n) if n >= 3 => vec![ring(n)],
                ("star", n) if n >= 2 => vec![star(n)],
                ("grid", s) if s >= 1 && s * s <= 64 => vec![grid(s)],
                ("all", n) if (1..=5).contains(&n) => all_connected(n, 3),
                ("random", n) if n >= 1 => vec![random_connected(n, 3, seed)],
                ("path" | "ring" | "star" | "grid" | "all" | "random", n) => {
                    bail!("no {family} fixture of size {n}")
                }
                _ => bail!("unknown family {family}"),
            };
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    let mut names = String::new();
                    for (i, g) in graphs.iter().enumerate() {
                        let file = dir.join(format!("{family}{size}_{}.net", i + 1));
                        std::fs::write(&file, g.to_text())?;
                        names.push_str(&format!("{}\n", file.display()));
                    }
                    names
                }
                None => graphs
                    .iter()
                    .enumerate()
                    .map(|(i, g)| format!("# {family}{size}_{}\n{}", i + 1, g.to_text()))
                    .collect::<Vec<_>>()
                    .join("\n"),
            }
        }
    };
    Ok((out, code))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok((out, code)) => {
            print!("{out}");
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

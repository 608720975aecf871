use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use teamroute::bnp::{solve, solve_with_sampler, SolveOptions};
use teamroute::featgraph::{emit_sample, read_samples, FeatureStats, SampleRecord};
use teamroute::gnn::GnnModel;
use teamroute::instgen::{generate, GenParams};
use teamroute::metrics::benchmark;
use teamroute::model::Instance;
use teamroute::pcg::{parse_strategy, Full, Strategy};

#[derive(Parser)]
#[command(name = "teamroute", version, about = "Branch-and-price for stochastic team formation and routing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instances.
    Gen(GenArgs),
    /// Solve one instance.
    Solve(SolveArgs),
    /// Solve a set of instances with several strategies and print the table.
    Bench(BenchArgs),
    /// Solve instances with full pricing and log one sample per pricing solve.
    Collect(CollectArgs),
    /// Write a weight file with seeded random weights.
    InitWeights(InitArgs),
}

#[derive(Args, Clone)]
struct GenOpts {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    tasks: usize,
    #[arg(long, default_value_t = 2)]
    skills: usize,
    #[arg(long, default_value_t = 3)]
    profiles: usize,
    #[arg(long, default_value_t = 48)]
    horizon: i64,
    /// Worker strength in (0, 1].
    #[arg(long, default_value_t = 0.6)]
    ws: f64,
    #[arg(long, default_value_t = 3)]
    max_support: usize,
    #[arg(long, default_value_t = 1.5)]
    window_factor: f64,
    #[arg(long, default_value_t = 0.8)]
    service_level: f64,
    #[arg(long, default_value_t = 4)]
    padding_width: usize,
}

impl GenOpts {
    fn params(&self, seed: u64) -> GenParams {
        GenParams {
            seed,
            n_tasks: self.tasks,
            n_skills: self.skills,
            n_profiles: self.profiles,
            horizon: self.horizon,
            worker_strength: self.ws,
            max_support: self.max_support,
            window_factor: self.window_factor,
            service_level: self.service_level,
            padding_width: self.padding_width,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    gen: GenOpts,
    /// Number of instances; seeds run from --seed upwards.
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Output file for a single instance, or directory when --count > 1.
    /// Prints to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct LimitOpts {
    /// Search budget in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Budget in seconds for the integer fallback after a limit.
    #[arg(long, default_value_t = 15.0)]
    heuristic_budget: f64,
}

impl LimitOpts {
    fn solve_options(&self) -> Result<SolveOptions> {
        let secs = |v: f64, what: &str| {
            if !(v >= 0.0 && v.is_finite()) {
                bail!("{what} must be a non-negative number of seconds");
            }
            Ok(Duration::from_secs_f64(v))
        };
        Ok(SolveOptions {
            time_limit: self.time_limit.map(|t| secs(t, "--time-limit")).transpose()?,
            heuristic_budget: secs(self.heuristic_budget, "--heuristic-budget")?,
            ..Default::default()
        })
    }
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    /// full, gamache:N, rothenbaecher, random:P, gnn:WEIGHTS[:THRESHOLD] or stub.
    #[arg(long, default_value = "full")]
    strategy: String,
    /// Seed for randomized strategies.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    limits: LimitOpts,
    /// Write the full result, including the iteration trace, as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Instance files or directories of `.json` instances.
    #[arg(long = "instances", num_args = 1..)]
    instances: Vec<PathBuf>,
    /// Generate this many instances instead, cycling worker strength 0.4..0.9.
    /// `--seed` seeds both the generator and randomized strategies.
    #[arg(long)]
    generate: Option<u64>,
    #[command(flatten)]
    gen: GenOpts,
    /// Strategies to compare; repeat or separate with commas.
    #[arg(long = "strategy", value_delimiter = ',', default_values_t = default_strategies())]
    strategies: Vec<String>,
    #[command(flatten)]
    limits: LimitOpts,
    /// Machine-readable rows, one JSON object per strategy.
    #[arg(long)]
    rows: Option<PathBuf>,
    /// Every solve result as JSON lines.
    #[arg(long)]
    results: Option<PathBuf>,
}

fn default_strategies() -> Vec<String> {
    ["full", "rothenbaecher", "gamache:1", "gamache:2", "gamache:3", "random:0.5"].map(String::from).to_vec()
}

#[derive(Args)]
struct CollectArgs {
    /// Instance files or directories of `.json` instances.
    #[arg(num_args = 1..)]
    instances: Vec<PathBuf>,
    /// Sample log, appended to.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    limits: LimitOpts,
}

#[derive(Args)]
struct InitArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 64)]
    mlp_hidden: usize,
    #[arg(long, default_value_t = 4)]
    padding_width: usize,
    /// Fit the standardization statistics to this sample log.
    #[arg(long)]
    stats_from: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Collect(a) => cmd_collect(a),
        Command::InitWeights(a) => cmd_init(a),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    if a.count == 0 {
        bail!("--count must be positive");
    }
    if a.count == 1 {
        let inst = generate(&a.gen.params(a.gen.seed))?;
        match a.out {
            Some(path) => inst.save(&path).with_context(|| format!("writing {}", path.display()))?,
            None => println!("{}", inst.to_json()),
        }
        return Ok(());
    }
    let dir = a.out.context("--out DIR is required with --count")?;
    fs::create_dir_all(&dir)?;
    for seed in a.gen.seed..a.gen.seed + a.count {
        let inst = generate(&a.gen.params(seed))?;
        let path = dir.join(format!("{}.json", inst.name));
        inst.save(&path).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("wrote {} instances to {}", a.count, dir.display());
    Ok(())
}

fn strategy(spec: &str, seed: u64) -> Result<Box<dyn Strategy>> {
    parse_strategy(spec, seed).map_err(anyhow::Error::msg)
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let inst = Instance::load(&a.instance).with_context(|| format!("reading {}", a.instance.display()))?;
    let mut s = strategy(&a.strategy, a.seed)?;
    let res = solve(&inst, s.as_mut(), &a.limits.solve_options()?)?;
    println!("instance   {}", res.instance);
    println!("strategy   {}", res.strategy);
    println!("status     {}", res.status.as_str());
    match res.objective() {
        Some(v) => println!("objective  {v:.6}"),
        None => println!("objective  -"),
    }
    println!("bound      {:.6}", res.bound);
    let st = &res.stats;
    println!(
        "nodes {}  cg iterations {}  pricing solves {}  columns {}  cuts {}",
        st.nodes, st.cg_iterations, st.pricing_solves, st.columns, st.cuts
    );
    println!(
        "time {:.3}s  (selection {:.3}s, pricing {:.3}s, heuristic {:.3}s)",
        st.total_secs, st.select_secs, st.pricing_secs, st.heuristic_secs
    );
    if let Some(best) = &res.best {
        for c in &best.routes {
            println!(
                "  profile {} leave {} return {} route {:?} cost {:.4}",
                c.profile, c.leave, c.ret, c.route, c.cost
            );
        }
    }
    if let Some(path) = a.json {
        fs::write(&path, res.to_json()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn instance_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_all(paths: &[PathBuf]) -> Result<Vec<Instance>> {
    instance_files(paths)?
        .iter()
        .map(|f| Instance::load(f).with_context(|| format!("reading {}", f.display())))
        .collect()
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let instances = match a.generate {
        Some(n) => {
            let strengths = [0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
            (0..n)
                .map(|k| {
                    let mut p = a.gen.params(a.gen.seed + k);
                    p.worker_strength = strengths[k as usize % strengths.len()];
                    generate(&p).map_err(Into::into)
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => load_all(&a.instances)?,
    };
    if instances.is_empty() {
        bail!("no instances: pass --instances or --generate");
    }
    let mut strategies = a.strategies.iter().map(|s| strategy(s, a.gen.seed)).collect::<Result<Vec<_>>>()?;
    let (report, results) = benchmark(&instances, &mut strategies, &a.limits.solve_options()?)?;
    print!("{}", report.to_text());
    if let Some(path) = a.rows {
        fs::write(&path, report.to_json_lines()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = a.results {
        let mut w = BufWriter::new(File::create(&path)?);
        for r in &results {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_collect(a: CollectArgs) -> Result<()> {
    let instances = load_all(&a.instances)?;
    let file = fs::OpenOptions::new().create(true).append(true).open(&a.out)?;
    let mut w = BufWriter::new(file);
    let opts = a.limits.solve_options()?;
    let (mut count, mut positive) = (0usize, 0usize);
    let mut failure: Option<io::Error> = None;
    for inst in &instances {
        let mut sink = |rec: SampleRecord| {
            if failure.is_some() {
                return;
            }
            count += 1;
            positive += rec.label as usize;
            if let Err(e) = emit_sample(&rec, &mut w) {
                failure = Some(io::Error::other(e.to_string()));
            }
        };
        let res = solve_with_sampler(inst, &mut Full, &opts, Some(&mut sink))?;
        if let Some(e) = failure.take() {
            return Err(e).context("writing samples");
        }
        log::info!("{}: {}", inst.name, res.status.as_str());
    }
    w.flush()?;
    println!("{count} samples ({positive} positive) appended to {}", a.out.display());
    Ok(())
}

fn cmd_init(a: InitArgs) -> Result<()> {
    let mut model = GnnModel::seeded(a.seed, a.hidden, a.mlp_hidden, a.padding_width);
    if let Some(path) = &a.stats_from {
        let samples = read_samples(BufReader::new(File::open(path)?))
            .with_context(|| format!("reading samples from {}", path.display()))?;
        let graphs: Vec<_> = samples.into_iter().map(|s| s.graph).collect();
        if let Some(g) = graphs.iter().find(|g| g.meta.padding_width != a.padding_width) {
            bail!("sample padding width {} differs from --padding-width {}", g.meta.padding_width, a.padding_width);
        }
        model.manifest.stats = FeatureStats::fit(&graphs, a.padding_width);
    }
    model.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

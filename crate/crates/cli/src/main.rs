#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use cloudmd::catalog::{load_catalog, lookup_rate, Catalog, CatalogError, PaymentModel};
use cloudmd::costmodel::CostInput;
use cloudmd::orchestrator::{load_scenario, read_metrics_csv, run, write_outputs, SimError, SummaryReport};
use cloudmd::perfmodel::{
    load_benchmarks, load_scaling, parallel_efficiency, pareto_frontier, pp_ratio, recommend, BenchmarkRecord,
    Constraints, Objective, PerfPoint, Recommendation,
};
use cloudmd::workload::{load_workload, WorkloadError};

mod table;

use table::{Align, Table};

#[derive(Parser)]
#[command(
    name = "cloudmd",
    version,
    about = "Cost and capacity planning for cloud MD ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a catalog (and optionally a workload) against its load-time invariants.
    Validate {
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        workload: Option<PathBuf>,
    },
    /// Performance-to-price table, Pareto frontier and scaling efficiency.
    Bench {
        /// Benchmark CSV; may be repeated.
        #[arg(long, required = true)]
        bench: Vec<PathBuf>,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long, value_enum, default_value = "on_demand")]
        payment: PaymentArg,
        /// Price region; defaults to the catalog's first region.
        #[arg(long)]
        region: Option<String>,
        /// Restrict to one benchmark system.
        #[arg(long)]
        system: Option<String>,
        /// Show only the per-system Pareto frontier.
        #[arg(long)]
        pareto: bool,
        /// Scaling CSV; prints parallel efficiency per series.
        #[arg(long)]
        scaling: Option<PathBuf>,
    },
    /// Rank instance types for one system under a runtime limit.
    Recommend {
        #[arg(long)]
        bench: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        #[arg(long)]
        system: String,
        #[arg(long = "deadline-h")]
        deadline_h: Option<f64>,
        #[arg(long, value_enum, default_value = "cost")]
        objective: ObjectiveArg,
        #[arg(long, value_enum, default_value = "on_demand")]
        payment: PaymentArg,
    },
    /// Evaluate a cost input document.
    Cost {
        #[arg(long)]
        input: PathBuf,
        /// Print the rounded report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Run a scenario, or every scenario in a directory.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long = "event-log")]
        event_log: bool,
    },
    /// Summarize a finished run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Cost,
    Time,
}

#[derive(Clone, Copy, ValueEnum)]
enum PaymentArg {
    #[value(name = "on_demand")]
    OnDemand,
    Spot,
    Reserved,
}

impl From<PaymentArg> for PaymentModel {
    fn from(p: PaymentArg) -> Self {
        match p {
            PaymentArg::OnDemand => PaymentModel::OnDemand,
            PaymentArg::Spot => PaymentModel::Spot,
            PaymentArg::Reserved => PaymentModel::ReservedUpfront,
        }
    }
}

/// Exit 1 for invalid inputs or outcomes, exit 2 for usage problems.
enum Failure {
    Invalid(anyhow::Error),
    Usage(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Invalid(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn require(path: &Path) -> CmdResult {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(anyhow!("no such file or directory: {}", path.display())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { catalog, workload } => cmd_validate(&catalog, workload.as_deref()),
        Command::Bench {
            bench,
            catalog,
            payment,
            region,
            system,
            pareto,
            scaling,
        } => cmd_bench(
            &bench,
            &catalog,
            payment.into(),
            region,
            system,
            pareto,
            scaling.as_deref(),
        ),
        Command::Recommend {
            bench,
            catalog,
            system,
            deadline_h,
            objective,
            payment,
        } => cmd_recommend(&bench, &catalog, &system, deadline_h, objective, payment.into()),
        Command::Cost { input, json } => cmd_cost(&input, json),
        Command::Simulate {
            scenario,
            out,
            seed,
            event_log,
        } => cmd_simulate(&scenario, &out, seed, event_log),
        Command::Report { run } => cmd_report(&run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_validate(catalog: &Path, workload: Option<&Path>) -> CmdResult {
    require(catalog)?;
    if let Some(w) = workload {
        require(w)?;
    }
    let mut problems = Vec::new();
    match load_catalog(catalog) {
        Ok(_) => {}
        Err(CatalogError::Validation(violations)) => {
            problems.extend(violations.iter().map(|v| format!("{}: {v}", catalog.display())));
        }
        Err(CatalogError::Io { path, source }) => return Err(Failure::Usage(anyhow!("cannot read {path}: {source}"))),
        Err(e) => problems.push(format!("{}: {e}", catalog.display())),
    }
    if let Some(w) = workload {
        match load_workload(w) {
            Ok(_) => {}
            Err(WorkloadError::Io { path, message }) => {
                return Err(Failure::Usage(anyhow!("cannot read {path}: {message}")))
            }
            Err(e) => problems.push(format!("{}: {e}", w.display())),
        }
    }
    if problems.is_empty() {
        println!("OK");
        return Ok(());
    }
    for p in &problems {
        println!("{p}");
    }
    Err(Failure::Invalid(anyhow!("{} violation(s)", problems.len())))
}

fn load_records(paths: &[PathBuf]) -> Result<Vec<BenchmarkRecord>, Failure> {
    let mut records = Vec::new();
    for p in paths {
        require(p)?;
        records.extend(load_benchmarks(p)?);
    }
    Ok(records)
}

fn load_catalog_arg(path: &Path) -> Result<Catalog, Failure> {
    require(path)?;
    Ok(load_catalog(path)?)
}

fn cmd_bench(
    bench: &[PathBuf],
    catalog: &Path,
    payment: PaymentModel,
    region: Option<String>,
    system: Option<String>,
    pareto: bool,
    scaling: Option<&Path>,
) -> CmdResult {
    let records = load_records(bench)?;
    let catalog = load_catalog_arg(catalog)?;
    if let Some(s) = scaling {
        require(s)?;
    }
    let region = region.unwrap_or_else(|| catalog.regions()[0].name.clone());
    if catalog.region(&region).is_none() {
        return Err(Failure::Invalid(anyhow!("unknown region `{region}`")));
    }

    let mut systems: Vec<&str> = records.iter().map(|r| r.system.as_str()).collect();
    systems.sort_unstable();
    systems.dedup();
    if let Some(only) = &system {
        if !systems.contains(&only.as_str()) {
            return Err(Failure::Invalid(anyhow!("no benchmark records for system `{only}`")));
        }
        systems.retain(|s| s == only);
    }

    let mut t = Table::new(&[
        ("system", Align::Left),
        ("instance", Align::Left),
        ("config", Align::Left),
        ("phase", Align::Left),
        ("ns/day", Align::Right),
        ("$/h", Align::Right),
        ("ns/$", Align::Right),
    ]);
    for sys in systems {
        let mut rows: Vec<(&BenchmarkRecord, f64, f64)> = Vec::new();
        for r in records.iter().filter(|r| r.system == sys) {
            let Ok(price) = lookup_rate(&catalog, &r.instance, &region, payment) else {
                continue;
            };
            rows.push((r, price, pp_ratio(r.ns_per_day, price)?));
        }
        if pareto && !rows.is_empty() {
            let points: Vec<PerfPoint> = rows
                .iter()
                .map(|(r, price, _)| PerfPoint {
                    label: format!("{}|{}|{}", r.instance, r.config_label(), r.phase),
                    price_per_hour: *price,
                    ns_per_day: r.ns_per_day,
                })
                .collect();
            let front = pareto_frontier(&points)?;
            let order: Vec<usize> = front
                .iter()
                .filter_map(|p| points.iter().position(|q| q.label == p.label))
                .collect();
            rows = order.into_iter().map(|i| rows[i]).collect();
        } else {
            rows.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.instance.cmp(&b.0.instance)));
        }
        for (r, price, pp) in rows {
            t.push(vec![
                r.system.clone(),
                r.instance.clone(),
                r.config_label(),
                r.phase.to_string(),
                format!("{:.3}", r.ns_per_day),
                format!("{price:.4}"),
                format!("{pp:.4}"),
            ]);
        }
    }
    println!("prices: {payment}, region {region}");
    print!("{}", t.render());

    if let Some(path) = scaling {
        let series = load_scaling::<f64>(path)?;
        let mut t = Table::new(&[
            ("system", Align::Left),
            ("instance", Align::Left),
            ("n", Align::Right),
            ("ns/day", Align::Right),
            ("speedup", Align::Right),
            ("efficiency", Align::Right),
        ]);
        for s in series
            .iter()
            .filter(|s| system.as_ref().is_none_or(|only| &s.system == only))
        {
            let eff = parallel_efficiency(s)?;
            let p1 = s.points[0].1;
            for (&(n, pn), &(_, e)) in s.points.iter().zip(&eff) {
                t.push(vec![
                    s.system.clone(),
                    s.instance.clone(),
                    n.to_string(),
                    format!("{pn:.3}"),
                    format!("{:.2}", pn / p1),
                    format!("{e:.3}"),
                ]);
            }
        }
        println!();
        print!("{}", t.render());
    }
    Ok(())
}

fn cmd_recommend(
    bench: &Path,
    catalog: &Path,
    system: &str,
    deadline_h: Option<f64>,
    objective: ObjectiveArg,
    payment: PaymentModel,
) -> CmdResult {
    let records = load_records(&[bench.to_path_buf()])?;
    let catalog = load_catalog_arg(catalog)?;
    if let Some(d) = deadline_h {
        if !(d > 0.0) {
            return Err(Failure::Usage(anyhow!("--deadline-h must be positive")));
        }
    }
    let objective = match objective {
        ObjectiveArg::Cost => Objective::MinCost,
        ObjectiveArg::Time => Objective::MinTime,
    };
    let mut constraints = Constraints::standard(objective, payment);
    constraints.max_runtime_h = deadline_h;
    let outcome = recommend(&records, &catalog, system, &constraints)?;

    let mut t = Table::new(&[
        ("instance", Align::Left),
        ("config", Align::Left),
        ("runtime_h", Align::Right),
        ("cost_usd", Align::Right),
    ]);
    for c in outcome.candidates() {
        t.push(vec![
            c.instance.clone(),
            c.config.config_label(),
            format!("{:.2}", c.runtime_h),
            format!("{:.2}", c.cost),
        ]);
    }
    print!("{}", t.render());
    match outcome {
        Recommendation::Ranked(_) => Ok(()),
        Recommendation::Infeasible { considered } => {
            println!("no feasible instance ({considered} benchmarked type(s) exceed the runtime limit)");
            Err(Failure::Invalid(anyhow!("no feasible instance")))
        }
    }
}

fn cmd_cost(input: &Path, json: bool) -> CmdResult {
    require(input)?;
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let doc: CostInput = serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display()))?;
    let report = doc.evaluate()?.rounded();
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    let mut t = Table::new(&[
        ("label", Align::Left),
        ("cost", Align::Right),
        ("currency", Align::Left),
        ("basis", Align::Left),
    ]);
    for e in &report.entries {
        let basis: Vec<String> = e.basis.iter().map(|(k, v)| format!("{k}={v:.2}")).collect();
        t.push(vec![
            e.label.clone(),
            format!("{:.2}", e.cost),
            e.currency.clone(),
            basis.join(" "),
        ]);
    }
    print!("{}", t.render());
    Ok(())
}

fn scenario_files(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    require(path)?;
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .with_context(|| format!("listing {}", path.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::Usage(anyhow!("no *.json scenarios in {}", path.display())));
    }
    Ok(files)
}

fn simulate_one(scenario: &Path, out: &Path, seed: Option<u64>, event_log: bool) -> Result<SummaryReport, SimError> {
    let mut sc = load_scenario(scenario)?;
    if let Some(s) = seed {
        sc.config.seed = s;
    }
    let output = run(sc.into_input()?, event_log)?;
    write_outputs(out, &output, event_log).map_err(|e| SimError::Io {
        path: out.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(output.summary)
}

fn cmd_simulate(scenario: &Path, out: &Path, seed: Option<u64>, event_log: bool) -> CmdResult {
    let files = scenario_files(scenario)?;
    let batch = scenario.is_dir();
    let jobs: Vec<(PathBuf, PathBuf)> = files
        .into_iter()
        .map(|f| {
            let dir = if batch {
                out.join(f.file_stem().expect("json file has a stem"))
            } else {
                out.to_path_buf()
            };
            (f, dir)
        })
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|(f, dir)| simulate_one(f, dir, seed, event_log))
        .collect();

    let mut failed = 0;
    for ((file, dir), res) in jobs.iter().zip(results) {
        let name = file.file_stem().unwrap_or_default().to_string_lossy();
        match res {
            Ok(s) => {
                let per_ddg = s.cost_per_ddg.map_or("n/a".to_string(), |c| format!("{c:.2}"));
                println!(
                    "{name}: seed {} makespan {:.2} h cost per ddG {per_ddg} {} ({} of {} jobs completed) -> {}",
                    s.seed,
                    s.makespan_h,
                    s.currency,
                    s.jobs_completed,
                    s.jobs_submitted,
                    dir.display()
                );
                if s.jobs_failed > 0 {
                    eprintln!("{name}: {} job(s) failed: no allowed instance type fits", s.jobs_failed);
                    failed += 1;
                }
            }
            Err(e) => {
                eprintln!("{name}: {e}");
                failed += 1;
            }
        }
    }
    if failed > 0 {
        return Err(Failure::Invalid(anyhow!("{failed} scenario(s) did not complete")));
    }
    Ok(())
}

fn cmd_report(dir: &Path) -> CmdResult {
    require(dir)?;
    let summary_path = dir.join("summary.json");
    let metrics_path = dir.join("metrics.csv");
    require(&summary_path)?;
    require(&metrics_path)?;
    let text = std::fs::read_to_string(&summary_path)?;
    let s: SummaryReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", summary_path.display()))?;
    let metrics = read_metrics_csv(std::fs::File::open(&metrics_path)?)
        .with_context(|| format!("parsing {}", metrics_path.display()))?;

    let per_ddg = s.cost_per_ddg.map_or("n/a".to_string(), |c| format!("{c:.2}"));
    let mut t = Table::new(&[("field", Align::Left), ("value", Align::Right)]);
    let rows = [
        ("seed", s.seed.to_string()),
        ("makespan_h", format!("{:.2}", s.makespan_h)),
        ("total_cost", format!("{:.2} {}", s.total_cost, s.currency)),
        ("productive_cost", format!("{:.2} {}", s.productive_cost, s.currency)),
        ("cost_per_ddg", per_ddg),
        ("n_ddg", s.n_ddg.to_string()),
        ("productive_core_hours", format!("{:.2}", s.productive_core_hours)),
        ("wasted_core_hours", format!("{:.2}", s.wasted_core_hours)),
        ("jobs_submitted", s.jobs_submitted.to_string()),
        ("jobs_completed", s.jobs_completed.to_string()),
        ("jobs_failed", s.jobs_failed.to_string()),
        ("preemptions", s.preemptions.to_string()),
        ("instances_acquired", s.instances_acquired.to_string()),
        ("peak_active_instances", s.peak_active_instances.to_string()),
        ("peak_vcpus_in_use", s.peak_vcpus_in_use.to_string()),
        ("peak_gpus_in_use", s.peak_gpus_in_use.to_string()),
    ];
    for (k, v) in rows {
        t.push(vec![k.to_string(), v]);
    }
    print!("{}", t.render());

    // Per-region peaks from the sampled metrics.
    let mut peaks: std::collections::BTreeMap<(String, u64), (u64, u64, u64)> = Default::default();
    for m in &metrics {
        let e = peaks.entry((m.region.clone(), m.time_s.to_bits())).or_default();
        e.0 += u64::from(m.active_instances);
        e.1 += m.vcpus_in_use;
        e.2 += m.gpus_in_use;
    }
    let mut by_region: std::collections::BTreeMap<String, (u64, u64, u64)> = Default::default();
    for ((region, _), (n, v, g)) in peaks {
        let e = by_region.entry(region).or_default();
        e.0 = e.0.max(n);
        e.1 = e.1.max(v);
        e.2 = e.2.max(g);
    }
    let mut t = Table::new(&[
        ("region", Align::Left),
        ("peak_instances", Align::Right),
        ("peak_vcpus", Align::Right),
        ("peak_gpus", Align::Right),
    ]);
    for (region, (n, v, g)) in by_region {
        t.push(vec![region, n.to_string(), v.to_string(), g.to_string()]);
    }
    if !t.is_empty() {
        println!();
        print!("{}", t.render());
    }
    Ok(())
}

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use leh::em::{em_fit, EmConfig, FitResult};
use leh::eval::config::{StudyConfig, StudyKind};
use leh::eval::systems::{builtin_system, BUILTIN_NAMES};
use leh::eval::{run_comparison, run_timing, write_comparison_csv, write_timing_csv};
use leh::gillespie::{observe, simulate_with, subsample_by_jump, StopRule};
use leh::io::{ingest_compartments, read_fit, read_trajectory, write_events, write_fit, write_trajectory, DateWindow};
use leh::lla::{lla_fit, LlaConfig};
use leh::rng::stream;
use leh::network::build_sir_named;
use leh::{parse_network, LogRates, ReactionNetwork, Trajectory};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path, RunManifest};
use crate::{FitArgs, IngestArgs, SelectArgs, SimulateArgs, StudyArgs, SystemsArgs};

/// A network given as a file, `builtin:<name>`, or `sir-tied` /
/// `sir-untied` (regions taken from the trajectory's `I_<region>` columns).
struct NetworkSource {
    network: ReactionNetwork,
    file: Option<PathBuf>,
}

fn sir_regions(traj: &Trajectory) -> CliResult<Vec<String>> {
    let regions: Vec<String> = traj
        .species()
        .iter()
        .filter_map(|s| s.strip_prefix("I_").map(str::to_string))
        .collect();
    if regions.is_empty() {
        return Err(CliError::Usage("data has no I_<region> columns for an SIR model".into()));
    }
    Ok(regions)
}

fn load_network(spec: &str, traj: Option<&Trajectory>) -> CliResult<NetworkSource> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return Ok(NetworkSource {
            network: builtin_system(name)?.network,
            file: None,
        });
    }
    if spec == "sir-tied" || spec == "sir-untied" {
        let traj = traj.ok_or_else(|| CliError::Usage(format!("'{spec}' needs observed data")))?;
        return Ok(NetworkSource {
            network: build_sir_named(&sir_regions(traj)?, spec == "sir-tied")?,
            file: None,
        });
    }
    let path = PathBuf::from(spec);
    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read network file {}: {e}", path.display())))?;
    Ok(NetworkSource {
        network: parse_network(&text)?,
        file: Some(path),
    })
}

fn read_data(path: &Path) -> CliResult<Trajectory> {
    let file = File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(read_trajectory(file)?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn print_ignoring_closed_pipe(text: &str) -> CliResult<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let src = load_network(&args.network, None)?;
    let net = &src.network;
    let rates = LogRates::new(args.beta.clone())?;
    if rates.len() != net.n_params() {
        return Err(CliError::Usage(format!(
            "--beta has {} values, network has {} parameters ({})",
            rates.len(),
            net.n_params(),
            net.param_names().join(", ")
        )));
    }
    if args.jump == Some(0) {
        return Err(CliError::Usage("--jump must be at least 1".into()));
    }
    let max_events = match (args.events, args.jump, args.n_intervals) {
        (Some(e), _, _) => Some(e),
        (None, Some(j), Some(n)) => Some(j * n),
        _ => None,
    };
    let stop = StopRule {
        horizon: args.horizon.unwrap_or(f64::INFINITY),
        max_events,
    };
    if stop.horizon.is_infinite() && stop.max_events.is_none() {
        return Err(CliError::Usage("give --horizon, --events, or --jump with --n-intervals".into()));
    }
    let mut rng = stream(args.seed, 0);
    let rec = simulate_with(net, &rates, &args.y0, stop, &mut rng)?;
    let traj = match args.jump {
        Some(j) => {
            let n = args.n_intervals.unwrap_or(rec.events.len() / j);
            subsample_by_jump(net, &rec, j, n)?
        }
        None => {
            let grid = match args.n_intervals {
                Some(n) if n > 0 => (0..=n).map(|i| rec.horizon * i as f64 / n as f64).collect(),
                Some(_) => return Err(CliError::Usage("--n-intervals must be at least 1".into())),
                None => {
                    if args.dt.is_nan() || args.dt <= 0.0 {
                        return Err(CliError::Usage("--dt must be positive".into()));
                    }
                    let steps = (rec.horizon / args.dt + 1e-9).floor() as usize;
                    (0..=steps).map(|i| i as f64 * args.dt).collect::<Vec<f64>>()
                }
            };
            observe(net, &rec, &grid)?
        }
    };

    fs::create_dir_all(&args.out)?;
    let traj_path = args.out.join("trajectory.csv");
    let events_path = args.out.join("events.csv");
    write_trajectory(&traj, create(&traj_path)?)?;
    write_events(&rec, create(&events_path)?)?;

    let mut m = RunManifest::new("simulate", Some(args.seed), serde_json::to_value(args)?);
    if let Some(f) = &src.file {
        m.input(f)?;
    }
    m.output(&traj_path)?;
    m.output(&events_path)?;
    m.write(&manifest_path(&args.out, true))?;
    eprintln!(
        "{} events, {} observations written to {}",
        rec.events.len(),
        traj.times().len(),
        args.out.display()
    );
    Ok(())
}

fn em_config(sigma2: f64, tol: f64, maxit: usize) -> EmConfig {
    let mut cfg = EmConfig {
        tol,
        maxit,
        ..EmConfig::default()
    };
    cfg.filter.sigma2 = sigma2;
    cfg
}

pub fn fit(args: &FitArgs) -> CliResult<()> {
    let data = read_data(&args.data)?;
    let src = load_network(&args.network, Some(&data))?;
    let net = &src.network;
    let traj = data.aligned_to(net)?;
    let mut m = RunManifest::new("fit", None, serde_json::to_value(args)?);
    m.input(&args.data)?;
    if let Some(f) = &src.file {
        m.input(f)?;
    }
    let lla_cfg = LlaConfig::default();
    let fit = match args.estimator.as_str() {
        "lla" => lla_fit(net, &traj, &lla_cfg)?,
        "em" => {
            let init = if args.init == "lla" {
                lla_fit(net, &traj, &lla_cfg)?.rates()?
            } else {
                let path = PathBuf::from(&args.init);
                let start = read_fit(File::open(&path).map_err(|e| {
                    CliError::Usage(format!("cannot open --init file {}: {e}", path.display()))
                })?)?;
                m.input(&path)?;
                start.rates()?
            };
            em_fit(net, &traj, &init, &em_config(args.sigma2, args.tol, args.maxit))?
        }
        other => return Err(CliError::Usage(format!("unknown estimator '{other}' (em or lla)"))),
    };
    write_fit(&fit, create(&args.out)?)?;
    m.output(&args.out)?;
    m.write(&manifest_path(&args.out, false))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ModelScore {
    model: String,
    n_params: usize,
    q_value: f64,
    bic: f64,
    converged: bool,
    param_names: Vec<String>,
    beta_hat: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct Selection {
    n_intervals: usize,
    winner: String,
    models: Vec<ModelScore>,
}

pub fn select(args: &SelectArgs) -> CliResult<()> {
    let data = read_data(&args.data)?;
    let mut m = RunManifest::new("select", None, serde_json::to_value(args)?);
    m.input(&args.data)?;
    let cfg = em_config(args.sigma2, args.tol, args.maxit);
    let mut models = Vec::new();
    for spec in &args.network {
        let src = load_network(spec, Some(&data))?;
        if let Some(f) = &src.file {
            m.input(f)?;
        }
        let traj = data.aligned_to(&src.network)?;
        let start = lla_fit(&src.network, &traj, &LlaConfig::default())?;
        let fit: FitResult = em_fit(&src.network, &traj, &start.rates()?, &cfg)?;
        models.push(ModelScore {
            model: spec.clone(),
            n_params: fit.n_params,
            q_value: fit.q_value,
            bic: fit.bic.unwrap_or(f64::NAN),
            converged: fit.converged,
            param_names: fit.param_names,
            beta_hat: fit.beta_hat,
        });
    }
    let winner = models
        .iter()
        .filter(|s| s.bic.is_finite())
        .min_by(|a, b| a.bic.total_cmp(&b.bic))
        .map(|s| s.model.clone())
        .ok_or_else(|| CliError::Core(leh::Error::NonFinite("no model has a finite BIC".into())))?;
    let out = Selection {
        n_intervals: data.n_intervals(),
        winner,
        models,
    };
    let mut w = create(&args.out)?;
    serde_json::to_writer_pretty(&mut w, &out)?;
    drop(w);
    m.output(&args.out)?;
    m.write(&manifest_path(&args.out, false))?;
    println!("{}", out.winner);
    Ok(())
}

pub fn study(args: &StudyArgs) -> CliResult<()> {
    if !args.config.is_file() {
        return Err(CliError::Usage(format!("config file {} not found", args.config.display())));
    }
    let mut cfg = StudyConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    cfg.validate()?;
    if args.dry_run {
        let mut plan = String::from("scenario,system,N,jump,replicates\n");
        for c in cfg.plan() {
            plan.push_str(&format!("{},{},{},{},{}\n", c.scenario, c.system, c.n_intervals, c.jump, c.replicates));
        }
        return print_ignoring_closed_pipe(&plan);
    }
    let out = args
        .out
        .as_ref()
        .ok_or_else(|| CliError::Usage("--out is required unless --dry-run".into()))?;
    fs::create_dir_all(out)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = args.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {} worker threads: {e}", args.threads.unwrap_or(0))))?;

    let mut m = RunManifest::new(
        "study",
        Some(cfg.seed),
        json!({ "config_file": args.config, "threads": args.threads, "study": cfg }),
    );
    m.input(&args.config)?;
    if let Some(c) = &cfg.custom {
        m.input(&c.network_file)?;
    }
    let csv_path = match cfg.kind {
        StudyKind::Comparison => {
            let rows = pool.install(|| run_comparison(&cfg))?;
            let d = cfg.resolve_system(&cfg.system)?.network.n_params();
            let path = out.join("comparison.csv");
            write_comparison_csv(&rows, d, create(&path)?)?;
            let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
            eprintln!("{} rows ({failed} with errors) written to {}", rows.len(), path.display());
            path
        }
        StudyKind::Timing => {
            let rows = pool.install(|| run_timing(&cfg))?;
            let path = out.join("timing.csv");
            write_timing_csv(&rows, create(&path)?)?;
            eprintln!("{} rows written to {}", rows.len(), path.display());
            path
        }
    };
    m.output(&csv_path)?;
    m.write(&manifest_path(out, true))?;
    Ok(())
}

pub fn ingest(args: &IngestArgs) -> CliResult<()> {
    let window = DateWindow::parse(args.from.as_deref(), args.to.as_deref())?;
    let file = File::open(&args.input)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", args.input.display())))?;
    let c = ingest_compartments(file, window)?;
    write_trajectory(&c.trajectory, create(&args.out)?)?;
    let mut m = RunManifest::new(
        "ingest",
        None,
        json!({
            "args": args,
            "regions": c.regions,
            "first_date": c.dates.first().map(|d| d.to_string()),
            "last_date": c.dates.last().map(|d| d.to_string()),
        }),
    );
    m.input(&args.input)?;
    m.output(&args.out)?;
    m.write(&manifest_path(&args.out, false))?;
    eprintln!(
        "{} regions x {} days written to {}",
        c.regions.len(),
        c.dates.len(),
        args.out.display()
    );
    Ok(())
}

pub fn systems(args: &SystemsArgs) -> CliResult<()> {
    match &args.name {
        None => {
            for n in BUILTIN_NAMES {
                println!("{n}");
            }
        }
        Some(name) => {
            let sys = builtin_system(name)?;
            let fmt = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
            println!("# beta_true: {}", fmt(sys.beta_true.as_slice()));
            println!("# y0: {}", fmt(&sys.y0));
            print!("{}", sys.network.to_text());
        }
    }
    Ok(())
}

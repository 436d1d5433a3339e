use std::io::Write;
use std::path::Path;
use std::time::Instant;

use lldpm_core::decide::{compound_loss, summarize, CompoundLoss, PosteriorSummary};
use lldpm_core::partition::partition_entropy;
use lldpm_core::sampler::{ChainOutput, ChainRunner, Checkpoint, ModelSpec};
use lldpm_core::DataMatrix;
use serde::{Deserialize, Serialize};

use super::{apply_model, apply_sampler, emit, load_config, mean_sd};
use crate::config::{RunConfig, ThetaDefault};
use crate::error::{usage, CliResult};
use crate::io::{create_dir, read_data, write_csv, write_json, Header, FORMAT_VERSION};
use crate::FitArgs;

pub const SUMMARY_FORMAT: &str = "lldpm-fit-summary";

/// Theta used when neither it nor an expected cluster count is configured.
pub const DEFAULT_THETA: f64 = 1.0;

/// Resolved model values, after theta calibration and any pre-phase.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolvedModel {
    pub theta: f64,
    pub sigma: f64,
    pub tau2: f64,
    pub sigma02: f64,
    pub mu0: f64,
    pub eta_a: f64,
    pub eta_b: f64,
}

impl From<&ModelSpec> for ResolvedModel {
    fn from(s: &ModelSpec) -> Self {
        Self {
            theta: s.base.theta(),
            sigma: s.base.sigma(),
            tau2: s.hyper.tau2(),
            sigma02: s.hyper.sigma02(),
            mu0: s.hyper.mu0(),
            eta_a: s.eta_prior.a,
            eta_b: s.eta_prior.b,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitSummary {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub n: usize,
    pub horizon: usize,
    pub retained_draws: usize,
    pub model: ResolvedModel,
    /// PPC threshold `h*`.
    pub threshold: f64,
    /// 1-based changepoint times.
    pub flagged: Vec<usize>,
    pub compound_loss: CompoundLoss,
    pub ln_g: Vec<f64>,
    pub config: RunConfig,
}

/// Merge defaults, config file and flags.
pub fn resolve_config(args: &FitArgs) -> CliResult<RunConfig> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    apply_model(&mut cfg, &args.model);
    apply_sampler(&mut cfg, &args.sampler);
    let d = &mut cfg.decision;
    if let Some(z) = args.zeta {
        d.zeta = z;
    }
    if args.marginal {
        d.nonmarginal = false;
    }
    if let Some(k) = args.kappa {
        d.kappa = k;
    }
    d.similarity |= args.similarity;
    if args.no_trace {
        d.trace = false;
    }
    let io = &mut cfg.io;
    if args.data.is_some() {
        io.data.clone_from(&args.data);
    }
    if args.out.is_some() {
        io.out.clone_from(&args.out);
    }
    io.long |= args.long;
    if args.checkpoint.is_some() {
        io.checkpoint.clone_from(&args.checkpoint);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run the chain, resuming from and writing checkpoints when configured.
pub fn run_sampler(data: &DataMatrix, spec: &ModelSpec, cfg: &RunConfig) -> CliResult<ChainOutput> {
    let sc = cfg.sampler.clone();
    let block = sc.block_iterations.unwrap_or(sc.iterations);
    let cp_path = cfg.io.checkpoint.as_deref();
    let mut runner = match cp_path.filter(|p| p.exists()) {
        Some(p) => {
            log::info!("resuming from {}", p.display());
            ChainRunner::resume(data, *spec, sc, Checkpoint::load(p)?)?
        }
        None => ChainRunner::new(data, *spec, sc, cfg.seed)?,
    };
    while !runner.is_finished() {
        runner.run(block);
        log::info!("completed {} of {} sweeps", runner.completed(), cfg.sampler.iterations);
        if let Some(p) = cp_path {
            runner.checkpoint().save(p)?;
        }
    }
    Ok(runner.finish())
}

pub fn run(args: FitArgs, out: &mut dyn Write) -> CliResult<()> {
    let started = Instant::now();
    let cfg = resolve_config(&args)?;
    let data_path = cfg.io.data.clone().ok_or_else(|| usage("missing --data"))?;
    let out_dir = cfg.io.out.clone().ok_or_else(|| usage("missing --out"))?;
    let data = read_data(&data_path, cfg.io.long)?;
    let spec = cfg.model.spec(&data, ThetaDefault::Theta(DEFAULT_THETA), cfg.seed)?;
    let chain = run_sampler(&data, &spec, &cfg)?;
    let summary = summarize(&chain, cfg.decision.zeta, cfg.decision.nonmarginal)?;
    create_dir(&out_dir)?;
    let fit = write_outputs(&out_dir, &cfg, &spec, &chain, &summary)?;
    let runtime = serde_json::json!({
        "seconds": started.elapsed().as_secs_f64(),
        "threads": rayon::current_num_threads(),
    });
    write_json(&out_dir.join("runtime.json"), &runtime)?;
    emit(
        out,
        &format!(
            "threshold {}\nflagged {:?}\n",
            fit.threshold, fit.flagged
        ),
    )
}

fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    spec: &ModelSpec,
    chain: &ChainOutput,
    s: &PosteriorSummary,
) -> CliResult<FitSummary> {
    let header = Header::new(cfg.seed, cfg.echo());
    let horizon = chain.horizon();
    let draws = chain.num_draws();
    let flagged: Vec<bool> = (2..=horizon).map(|t| s.flagged.contains(&t)).collect();

    let rows = s.ppc.iter().enumerate().map(|(i, p)| {
        vec![(i + 2).to_string(), p.to_string(), u8::from(flagged[i]).to_string()]
    });
    write_csv(&dir.join("ppc.csv"), &header, "ppc", &["t", "ppc", "flagged"], rows)?;

    let rows = s.point_partitions.iter().enumerate().flat_map(|(t, p)| {
        (0..p.n()).map(move |i| vec![(t + 1).to_string(), (i + 1).to_string(), (p.label(i) + 1).to_string()])
    });
    write_csv(&dir.join("partitions.csv"), &header, "partitions", &["t", "unit", "cluster"], rows)?;

    let rows = (1..horizon).map(|t| {
        let etas: Vec<f64> = (0..draws).map(|d| chain.eta(d, t)).collect();
        let (m, sd) = mean_sd(&etas);
        let g = (0..draws).filter(|&d| chain.gamma(d, t)).count() as f64 / draws as f64;
        vec![(t + 1).to_string(), m.to_string(), sd.to_string(), g.to_string()]
    });
    write_csv(&dir.join("etas.csv"), &header, "etas", &["t", "eta_mean", "eta_sd", "gamma_mean"], rows)?;

    if cfg.decision.trace {
        let rows = (0..draws).flat_map(|d| {
            (0..horizon).map(move |t| {
                let p = chain.partition(d, t);
                let (g, e) = if t == 0 {
                    (String::new(), String::new())
                } else {
                    (u8::from(chain.gamma(d, t)).to_string(), chain.eta(d, t).to_string())
                };
                vec![
                    chain.iterations()[d].to_string(),
                    (t + 1).to_string(),
                    g,
                    e,
                    p.num_blocks().to_string(),
                    partition_entropy(p).to_string(),
                ]
            })
        });
        let cols = ["iteration", "t", "gamma", "eta", "clusters", "entropy"];
        write_csv(&dir.join("trace.csv"), &header, "trace", &cols, rows)?;
    }

    if cfg.decision.similarity {
        let sim_dir = dir.join("similarity");
        create_dir(&sim_dir)?;
        for (t, m) in s.similarity.iter().enumerate() {
            let names: Vec<String> = (1..=m.n()).map(|j| format!("u{j}")).collect();
            let cols: Vec<&str> = names.iter().map(String::as_str).collect();
            let rows = (0..m.n()).map(|i| m.row(i).iter().map(|v| v.to_string()).collect::<Vec<_>>());
            write_csv(&sim_dir.join(format!("t{:03}.csv", t + 1)), &header, "similarity", &cols, rows)?;
        }
    }

    let summary = FitSummary {
        format: SUMMARY_FORMAT.into(),
        version: FORMAT_VERSION,
        seed: cfg.seed,
        n: chain.n(),
        horizon,
        retained_draws: draws,
        model: ResolvedModel::from(spec),
        threshold: s.threshold,
        flagged: s.flagged.clone(),
        compound_loss: compound_loss(&flagged, &s.ppc, cfg.decision.kappa)?,
        ln_g: chain.ln_g().to_vec(),
        config: cfg.clone(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

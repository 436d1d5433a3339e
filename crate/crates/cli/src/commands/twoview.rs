use std::io::Write;
use std::path::Path;

use lldpm_core::decide::{similarity_matrix, vi_point_estimate};
use lldpm_core::partition::Partition;
use lldpm_core::sampler::run_two_view;
use lldpm_core::DataMatrix;

use super::{apply_model, apply_sampler, emit, load_config};
use crate::config::{RunConfig, ThetaDefault};
use crate::error::{usage, CliResult};
use crate::io::{create_dir, is_header, parse_cell, records, write_csv, Header};
use crate::TwoviewArgs;

/// Prior expected clusters per view when the config sets no theta.
pub const DEFAULT_EXPECTED_CLUSTERS: f64 = 2.0;

/// Label used for the single stratum of unstratified input.
const ALL: &str = "all";

struct Stratum {
    label: String,
    view1: Vec<f64>,
    view2: Vec<f64>,
}

fn read_views(path: &Path, stratified: bool) -> CliResult<Vec<Stratum>> {
    let mut recs = records(path)?;
    let skip = usize::from(stratified);
    if recs.first().is_some_and(|(_, c)| is_header(&c[skip.min(c.len())..])) {
        recs.remove(0);
    }
    if recs.is_empty() {
        return Err(usage(format!("{}: no data rows", path.display())));
    }
    let width = 2 + skip;
    let mut strata: Vec<Stratum> = Vec::new();
    for (line, rec) in &recs {
        if rec.len() != width {
            return Err(usage(format!(
                "{}: line {line}: expected {width} columns, found {}",
                path.display(),
                rec.len()
            )));
        }
        let label = if stratified { rec[0].as_str() } else { ALL };
        let a = parse_cell(path, *line, skip, &rec[skip])?;
        let b = parse_cell(path, *line, skip + 1, &rec[skip + 1])?;
        let k = match strata.iter().position(|s| s.label == label) {
            Some(k) => k,
            None => {
                strata.push(Stratum {
                    label: label.to_owned(),
                    view1: Vec::new(),
                    view2: Vec::new(),
                });
                strata.len() - 1
            }
        };
        strata[k].view1.push(a);
        strata[k].view2.push(b);
    }
    Ok(strata)
}

struct StratumResult {
    row: Vec<String>,
    points: [Partition; 2],
}

fn analyse(s: &Stratum, cfg: &RunConfig) -> CliResult<StratumResult> {
    let data = DataMatrix::from_columns(&[s.view1.clone(), s.view2.clone()])?;
    let fallback = ThetaDefault::ExpectedClusters(DEFAULT_EXPECTED_CLUSTERS);
    let spec = cfg.model.spec(&data, fallback, cfg.seed)?;
    let out = run_two_view(&s.view1, &s.view2, &spec, &cfg.sampler, cfg.seed)?;
    let chain = &out.chain;
    let d = chain.num_draws();
    let differ = (0..d).filter(|&k| chain.partition_id(k, 0) != chain.partition_id(k, 1)).count() as f64 / d as f64;
    let point = |t: usize| -> CliResult<Partition> {
        let sim = similarity_matrix(chain.partitions_at(t))?;
        Ok(vi_point_estimate(chain.partitions_at(t), &sim)?)
    };
    Ok(StratumResult {
        row: vec![
            s.label.clone(),
            s.view1.len().to_string(),
            spec.base.theta().to_string(),
            differ.to_string(),
            out.change_probability().to_string(),
            out.eta_mean().to_string(),
            out.eta_tilde_mean().to_string(),
        ],
        points: [point(0)?, point(1)?],
    })
}

pub fn run(args: TwoviewArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    apply_model(&mut cfg, &args.model);
    apply_sampler(&mut cfg, &args.sampler);
    if args.data.is_some() {
        cfg.io.data.clone_from(&args.data);
    }
    if args.out.is_some() {
        cfg.io.out.clone_from(&args.out);
    }
    cfg.validate()?;
    let data_path = cfg.io.data.clone().ok_or_else(|| usage("missing --data"))?;
    let strata = read_views(&data_path, args.stratified)?;
    let results = strata
        .iter()
        .map(|s| analyse(s, &cfg))
        .collect::<CliResult<Vec<_>>>()?;

    let cols = ["stratum", "n", "theta", "eta_hat", "change_prob", "eta_mean", "eta_tilde_mean"];
    let mut text = cols.join(",") + "\n";
    for r in &results {
        text.push_str(&r.row.join(","));
        text.push('\n');
    }
    emit(out, &text)?;

    if let Some(dir) = &cfg.io.out {
        create_dir(dir)?;
        let header = Header::new(cfg.seed, cfg.echo());
        write_csv(&dir.join("twoview.csv"), &header, "twoview", &cols, results.iter().map(|r| r.row.clone()))?;
        let rows = results.iter().flat_map(|r| {
            r.points.iter().enumerate().flat_map(move |(v, p)| {
                (0..p.n()).map(move |i| {
                    vec![r.row[0].clone(), (i + 1).to_string(), (v + 1).to_string(), (p.label(i) + 1).to_string()]
                })
            })
        });
        write_csv(&dir.join("partitions.csv"), &header, "twoview-partitions", &["stratum", "unit", "view", "cluster"], rows)?;
    }
    Ok(())
}

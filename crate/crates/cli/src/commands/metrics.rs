use std::io::Write;
use std::path::Path;

use lldpm_core::decide::{changepoint_metrics_with_ppc, ChangepointMetrics};
use lldpm_core::partition::{adjusted_rand_index, Partition};

use super::simulate::TruthFile;
use super::{emit, mean_sd};
use crate::error::{usage, CliResult};
use crate::io::{create_dir, read_rows, write_csv, Header};
use crate::MetricsArgs;

/// What `fit` wrote that the metrics need.
struct FitResult {
    ppc: Vec<f64>,
    flagged: Vec<usize>,
    /// Point partitions per time, when partitions.csv is present.
    partitions: Option<Vec<Partition>>,
}

fn as_index(path: &Path, v: f64, what: &str) -> CliResult<usize> {
    if v >= 1.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(usage(format!("{}: {what} {v} is not a positive integer", path.display())))
    }
}

fn load_fit(dir: &Path, n: usize, horizon: usize) -> CliResult<FitResult> {
    let path = dir.join("ppc.csv");
    let rows = read_rows(&path)?;
    if rows.len() + 1 != horizon {
        return Err(usage(format!(
            "{}: {} decision times, but the truth has horizon {horizon}",
            path.display(),
            rows.len()
        )));
    }
    let mut ppc = Vec::with_capacity(rows.len());
    let mut flagged = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        if r.len() != 3 || as_index(&path, r[0], "time")? != k + 2 {
            return Err(usage(format!("{}: row {} is not (t, ppc, flagged) for t = {}", path.display(), k + 1, k + 2)));
        }
        ppc.push(r[1]);
        if r[2] != 0.0 {
            flagged.push(k + 2);
        }
    }

    let path = dir.join("partitions.csv");
    let partitions = if path.exists() {
        let rows = read_rows(&path)?;
        let mut labels = vec![vec![None; n]; horizon];
        for r in &rows {
            if r.len() != 3 {
                return Err(usage(format!("{}: expected (t, unit, cluster) rows", path.display())));
            }
            let (t, i) = (as_index(&path, r[0], "time")?, as_index(&path, r[1], "unit")?);
            let c = as_index(&path, r[2], "cluster")?;
            if t > horizon || i > n {
                return Err(usage(format!("{}: time {t} or unit {i} outside the truth's {horizon} x {n}", path.display())));
            }
            labels[t - 1][i - 1] = Some(c);
        }
        let parts = labels
            .into_iter()
            .map(|ls| {
                let ls: Option<Vec<usize>> = ls.into_iter().collect();
                let ls = ls.ok_or_else(|| usage(format!("{}: missing units", path.display())))?;
                Ok(Partition::canonicalize(&ls)?)
            })
            .collect::<CliResult<Vec<_>>>()?;
        Some(parts)
    } else {
        None
    };
    Ok(FitResult {
        ppc,
        flagged,
        partitions,
    })
}

/// Metrics of one replicate and its per-time ARI.
pub struct Scored {
    pub metrics: ChangepointMetrics,
    pub ari: Option<Vec<f64>>,
}

fn score(truth_path: &Path, fit_dir: &Path) -> CliResult<Scored> {
    let sc = TruthFile::load(truth_path)?.scenario;
    let fit = load_fit(fit_dir, sc.n, sc.horizon)?;
    let metrics = changepoint_metrics_with_ppc(&fit.flagged, &sc.true_changepoints, &fit.ppc)?;
    let ari = match fit.partitions {
        Some(ps) => Some(
            ps.iter()
                .zip(&sc.true_partitions)
                .map(|(p, q)| adjusted_rand_index(p, q))
                .collect::<lldpm_core::Result<Vec<_>>>()?,
        ),
        None => None,
    };
    Ok(Scored { metrics, ari })
}

pub fn run(args: MetricsArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.truth.len() != args.fit.len() {
        return Err(usage(format!(
            "{} --truth files but {} --fit directories",
            args.truth.len(),
            args.fit.len()
        )));
    }
    let scored = args
        .truth
        .iter()
        .zip(&args.fit)
        .map(|(t, f)| score(t, f))
        .collect::<CliResult<Vec<_>>>()?;

    let mut table: Vec<(&str, Vec<f64>)> = vec![
        ("specificity", scored.iter().map(|s| s.metrics.specificity).collect()),
        ("accuracy", scored.iter().map(|s| s.metrics.accuracy).collect()),
        ("recall", scored.iter().map(|s| s.metrics.recall).collect()),
        ("precision", scored.iter().map(|s| s.metrics.precision).collect()),
        ("f1", scored.iter().map(|s| s.metrics.f1).collect()),
    ];
    let aucs: Vec<f64> = scored.iter().filter_map(|s| s.metrics.auc).collect();
    if !aucs.is_empty() {
        table.push(("auc", aucs));
    }
    let aris: Option<Vec<Vec<f64>>> = scored.iter().map(|s| s.ari.clone()).collect();
    if let Some(a) = &aris {
        table.push(("ari", a.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect()));
    }

    let mut text = String::from("measure,mean,sd\n");
    let rows: Vec<Vec<String>> = table
        .iter()
        .map(|(name, xs)| {
            let (m, sd) = mean_sd(xs);
            vec![name.to_string(), format!("{m:.4}"), format!("{sd:.4}")]
        })
        .collect();
    for r in &rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    emit(out, &text)?;

    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let echo = serde_json::json!({
            "truth": args.truth,
            "fit": args.fit,
        });
        let header = Header::new(0, echo.to_string());
        write_csv(&dir.join("metrics.csv"), &header, "metrics", &["measure", "mean", "sd"], rows)?;
        if let Some(a) = &aris {
            let horizon = a[0].len();
            if a.iter().any(|v| v.len() != horizon) {
                return Err(usage("per-time ARI needs replicates with a common horizon"));
            }
            let rows = (0..horizon).map(|t| {
                let xs: Vec<f64> = a.iter().map(|v| v[t]).collect();
                let (m, sd) = mean_sd(&xs);
                vec![(t + 1).to_string(), m.to_string(), sd.to_string()]
            });
            write_csv(&dir.join("ari.csv"), &header, "ari", &["t", "ari_mean", "ari_sd"], rows)?;
        }
    }
    Ok(())
}

use std::io::Write;

use lldpm_core::partition::GibbsParams;
use lldpm_core::psm::{eri_closed_form, eri_monte_carlo, lagged_ari_matrix, PsmPrior};
use lldpm_core::rng::{substream, STREAM_SIMULATE};

use super::emit;
use crate::error::{usage, CliResult};
use crate::io::{write_csv, Header};
use crate::EriArgs;

pub fn run(args: EriArgs, out: &mut dyn Write) -> CliResult<()> {
    let g = GibbsParams::new(args.theta, args.sigma)?;
    let prior = PsmPrior::shared(g, args.eta)?;
    if args.lags.contains(&0) {
        return Err(usage("lags must be at least 1"));
    }
    let mut rng = substream(args.seed, STREAM_SIMULATE);
    let mut rows = Vec::with_capacity(args.lags.len());
    for &lag in &args.lags {
        let closed = eri_closed_form(&g, args.eta, lag)?;
        let (mc, se) = if args.draws > 0 {
            let e = eri_monte_carlo(args.n, lag + 1, &prior, 0, lag, args.draws, &mut rng)?;
            (e.mean.to_string(), e.std_error.to_string())
        } else {
            (String::new(), String::new())
        };
        rows.push(vec![lag.to_string(), closed.to_string(), mc, se]);
    }
    let cols = ["lag", "closed_form", "monte_carlo", "std_error"];
    let mut text = cols.join(",") + "\n";
    for r in &rows {
        text.push_str(&r.join(","));
        text.push('\n');
    }
    emit(out, &text)?;

    let echo = serde_json::json!({
        "theta": args.theta,
        "sigma": args.sigma,
        "eta": args.eta,
        "n": args.n,
        "draws": args.draws,
    });
    let header = Header::new(args.seed, echo.to_string());
    if let Some(p) = &args.out {
        write_csv(p, &header, "eri", &cols, rows)?;
    }
    if let (Some(p), Some(horizon)) = (&args.matrix, args.horizon) {
        if horizon < 2 || args.draws == 0 {
            return Err(usage("the lagged-ARI matrix needs T >= 2 and a positive draw count"));
        }
        let m = lagged_ari_matrix(args.n, horizon, &prior, args.draws, &mut rng)?;
        let names: Vec<String> = (1..=horizon).map(|t| format!("t{t}")).collect();
        let cols: Vec<&str> = names.iter().map(String::as_str).collect();
        let rows = m.iter().map(|r| r.iter().map(|v| v.to_string()).collect::<Vec<_>>());
        write_csv(p, &header, "lagged-ari", &cols, rows)?;
    }
    Ok(())
}

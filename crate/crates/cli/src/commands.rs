use std::io::Read;
use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::DVector;

use graphsee::enf::{
    classify, embed, fit_model, m_smooth, misclassification, probabilities, sample_study,
    trw_study, Link, XiScore,
};
use graphsee::graph::load_labels;
use graphsee::sampling::{srs_inclusion_weights, stationarity_test, trw_stationary, WalkConfig};
use graphsee::see::sbs_variance_approx;
use graphsee::snle::{
    lambda_grid, rank_sweep, separation_margin, snle_expected, snle_full, SnleConfig,
};
use graphsee::spectral::{best_correlated_eigenvector, correlation, EigenSystem, Variant};
use graphsee::{zkc, Graph, NodeValues};

use crate::report::{emit, num, opt_num, Report, Table};
use crate::{Cli, Command, Input, Usage};

pub fn run(cli: &Cli) -> Result<()> {
    let (table, report) = match &cli.command {
        Command::GraphInfo { input } => graph_info(input)?,
        Command::Enf {
            input,
            link,
            normalize,
            sample,
            replicates,
        } => enf(input, *link, *normalize, sample.map(|n| (n, *replicates)), cli.seed)?,
        Command::Snle {
            input,
            lambda,
            gamma,
            variant,
            sample,
            replicates,
            sweep,
        } => {
            let cfg = SnleConfig::new(*lambda, *gamma, *variant)?;
            match (sweep, sample) {
                (Some(grid), _) => snle_sweep(input, grid, *gamma, *variant)?,
                (None, Some(n)) => snle_sample(input, &cfg, *n, *replicates, cli.seed)?,
                (None, None) => snle_graph(input, &cfg)?,
            }
        }
        Command::Trw {
            input,
            r,
            states,
            burnin,
            spacing,
            walks,
            seed_stride,
        } => {
            let g = load_graph(input)?;
            let mut cfg = WalkConfig::for_graph(&g, *r, *states, cli.seed);
            if let Some(b) = burnin {
                cfg.burn_in = *b;
            }
            if let Some(s) = spacing {
                cfg.spacing = *s;
            }
            trw(input, g, cfg, *walks, *seed_stride)?
        }
    };
    emit(&table, &report, cli.out.as_deref(), cli.summary.as_deref())
}

fn load_graph(input: &Input) -> Result<Graph> {
    match input.edge_list.as_str() {
        "zkc" => Ok(zkc::graph()),
        "-" => {
            let mut text = String::new();
            std::io::stdin().read_to_string(&mut text).context("reading stdin")?;
            Ok(Graph::parse_edge_list(&text).context("parsing edge list from stdin")?)
        }
        path => Ok(Graph::load_edge_list(path).with_context(|| format!("loading {path}"))?),
    }
}

fn load_optional_labels(input: &Input, g: &Graph) -> Result<Option<NodeValues>> {
    match (&input.labels, input.edge_list.as_str()) {
        (Some(path), _) => Ok(Some(read_labels(path, g)?)),
        (None, "zkc") => Ok(Some(zkc::labels())),
        (None, _) => Ok(None),
    }
}

fn read_labels(path: &Path, g: &Graph) -> Result<NodeValues> {
    Ok(load_labels(path, g.n_nodes()).with_context(|| format!("loading {}", path.display()))?)
}

fn require_labels(input: &Input, g: &Graph) -> Result<NodeValues> {
    load_optional_labels(input, g)?
        .ok_or_else(|| Usage("--labels is required unless EDGE_LIST is `zkc`".into()).into())
}

/// Fiedler vector of the normalized Laplacian, re-signed so corr(z₀, y) ≥ 0
/// when labels are known.
fn fiedler(es: &EigenSystem, y: Option<&NodeValues>) -> Option<NodeValues> {
    let z0 = es.fiedler_vector()?;
    match y.and_then(|y| correlation(&z0, y)) {
        Some(c) if c < 0.0 => Some(-z0),
        _ => Some(z0),
    }
}

fn graph_info(input: &Input) -> Result<(Table, Report)> {
    let g = load_graph(input)?;
    let y = load_optional_labels(input, &g)?;
    let es = EigenSystem::of_graph(&g)?;
    let z0 = fiedler(&es, y.as_ref());
    let degrees = g.degrees();

    let mut table = Table::new(if y.is_some() {
        &["node_id", "y", "degree", "z0"]
    } else {
        &["node_id", "degree", "z0"]
    });
    for i in 0..g.n_nodes() {
        let mut row = vec![(i + 1).to_string()];
        if let Some(y) = &y {
            row.push(format!("{}", y[i]));
        }
        row.push(degrees[i].to_string());
        row.push(opt_num(z0.as_ref().map(|z| z[i])));
        table.push(row);
    }

    let mut report = Report::new("graph-info", None);
    report.param("edge_list", &input.edge_list);
    report.set("n_nodes", g.n_nodes());
    report.set("n_edges", g.n_edges());
    report.set("degree_min", degrees.iter().min());
    report.set("degree_max", degrees.iter().max());
    report.set("degree_mean", degrees.iter().sum::<usize>() as f64 / g.n_nodes() as f64);
    report.set("connected", g.is_connected());
    report.set("zero_eigenvalues", es.zero_count());
    report.set("lambda0", es.fiedler_value());
    if let (Some(z0), Some(y)) = (&z0, &y) {
        report.set("corr_z0_y", correlation(z0, y));
    }
    Ok((table, report))
}

fn enf(
    input: &Input,
    link: Link,
    normalize: bool,
    sample: Option<(usize, usize)>,
    seed: u64,
) -> Result<(Table, Report)> {
    let g = load_graph(input)?;
    let y = require_labels(input, &g)?;
    let model = fit_model(&g, &y, link, normalize)?;
    let ydot = m_smooth(&g, &y)?;
    let x = embed(&g, &y, model.xi, normalize)?;
    let p = probabilities(&x, &model.psi, link);
    let predicted = classify(&x, &model.psi, link);
    let errors = misclassification(&predicted, &y);

    let mut report = Report::new("enf", sample.map(|_| seed));
    report.param("edge_list", &input.edge_list);
    report.param("link", link.to_string());
    report.param("normalize", normalize);
    report.set("xi0", model.xi);
    report.set("psi0", [model.psi[0], model.psi[1]]);
    report.set("misclassified_ones", errors.ones);
    report.set("misclassified_zeros", errors.zeros);
    report.set("misclassified", errors.total());

    let n = g.n_nodes();
    let Some((seed_size, replicates)) = sample else {
        let mut table = Table::new(&["node_id", "y", "x0", "ydot", "p", "predicted"]);
        for i in 0..n {
            table.push(vec![
                (i + 1).to_string(),
                format!("{}", y[i]),
                num(x[i]),
                num(ydot[i]),
                num(p[i]),
                format!("{}", predicted[i]),
            ]);
        }
        return Ok((table, report));
    };

    report.param("sample", seed_size);
    report.param("replicates", replicates);
    let study = sample_study(&g, &y, seed_size, replicates, seed, link)?;
    let (xi_mean, xi_se) = study.xi_mean_se();
    let (score_mean, score_se) = study.score_mean_se();
    let iw = srs_inclusion_weights(&g, seed_size, 1)?;
    let sandwich = sbs_variance_approx(
        &XiScore::new(&g, &y)?,
        &iw,
        &DVector::from_element(1, model.xi),
    )?;
    report.set("xi_hat_mean", xi_mean);
    report.set("xi_hat_se", xi_se);
    report.set("xi_hat_variance", study.xi_variance());
    report.set("xi_hat_variance_linearised", sandwich[(0, 0)]);
    report.set("xi_failures", study.xi_failures);
    report.set("score_at_xi0_mean", score_mean);
    report.set("score_at_xi0_se", score_se);
    if let Some(psi) = &study.psi {
        report.set("psi_hat_mean", psi.combined.as_slice());
        report.set("psi_hat_se", psi.standard_errors().ok().map(|s| s.as_slice().to_vec()));
    }
    report.set("psi_failures", study.psi_failures);

    // x̂ is ξ̂₀ ẏ; under --normalize it is put on the scale of the x0 column
    let scale = if normalize {
        let raw = &ydot * model.xi;
        x.dot(&raw) / raw.norm_squared()
    } else {
        1.0
    };
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    let mut count = vec![0usize; n];
    for rep in &study.replicates {
        for &(k, v) in &rep.seed_xhat {
            let v = v * scale;
            sum[k] += v;
            sum_sq[k] += v * v;
            count[k] += 1;
        }
    }
    let mut table = Table::new(&[
        "node_id",
        "y",
        "x0",
        "xhat_mean",
        "inclusion_count",
        "xhat_se",
        "ydot",
        "p",
        "predicted",
    ]);
    for i in 0..n {
        let (mean, se) = conditional_mean(sum[i], sum_sq[i], count[i]);
        table.push(vec![
            (i + 1).to_string(),
            format!("{}", y[i]),
            num(x[i]),
            opt_num(mean),
            count[i].to_string(),
            opt_num(se),
            num(ydot[i]),
            num(p[i]),
            format!("{}", predicted[i]),
        ]);
    }
    Ok((table, report))
}

fn conditional_mean(sum: f64, sum_sq: f64, count: usize) -> (Option<f64>, Option<f64>) {
    if count == 0 {
        return (None, None);
    }
    let c = count as f64;
    let mean = sum / c;
    if count < 2 {
        return (Some(mean), None);
    }
    let var = ((sum_sq - c * mean * mean) / (c - 1.0)).max(0.0);
    (Some(mean), Some((var / c).sqrt()))
}

fn snle_report(input: &Input, cfg: &SnleConfig, seed: Option<u64>) -> Report {
    let mut report = Report::new("snle", seed);
    report.param("edge_list", &input.edge_list);
    report.param("lambda", cfg.lambda);
    report.param("gamma", cfg.gamma);
    report.param("variant", cfg.variant.to_string());
    report
}

fn snle_graph(input: &Input, cfg: &SnleConfig) -> Result<(Table, Report)> {
    let g = load_graph(input)?;
    let y = require_labels(input, &g)?;
    let x0 = snle_full(&g, &y, cfg)?;
    let es = EigenSystem::of_graph(&g)?;
    let z0 = fiedler(&es, Some(&y));
    let (rank, best_corr) = best_correlated_eigenvector(&x0, &es)?;

    let mut report = snle_report(input, cfg, None);
    report.set("lambda0", es.fiedler_value());
    report.set("corr_x0_z0", z0.as_ref().and_then(|z| correlation(&x0, z)));
    report.set("best_rank", rank);
    report.set("best_correlation", best_corr);
    report.set("margin_x0", separation_margin(&x0, &y).ok());

    let mut table = Table::new(&["node_id", "y", "x0", "z0"]);
    for i in 0..g.n_nodes() {
        table.push(vec![
            (i + 1).to_string(),
            format!("{}", y[i]),
            num(x0[i]),
            opt_num(z0.as_ref().map(|z| z[i])),
        ]);
    }
    Ok((table, report))
}

fn snle_sample(
    input: &Input,
    cfg: &SnleConfig,
    seed_size: usize,
    replicates: usize,
    seed: u64,
) -> Result<(Table, Report)> {
    let g = load_graph(input)?;
    let y = require_labels(input, &g)?;
    let x0 = snle_full(&g, &y, cfg)?;
    let expected = snle_expected(&g, &y, cfg, seed_size, replicates, seed)?;
    let means = expected.mean();

    let mut report = snle_report(input, cfg, Some(seed));
    report.param("sample", seed_size);
    report.param("replicates", replicates);
    report.set("margin_x0", separation_margin(&x0, &y).ok());
    report.set(
        "margin_xhat_mean",
        expected.mean_vector().ok().and_then(|m| separation_margin(&m, &y).ok()),
    );
    report.set(
        "never_sampled",
        expected.missing().iter().map(|i| i + 1).collect::<Vec<_>>(),
    );

    let mut table = Table::new(&["node_id", "y", "x0", "xhat_mean", "inclusion_count", "xhat_se"]);
    for i in 0..g.n_nodes() {
        table.push(vec![
            (i + 1).to_string(),
            format!("{}", y[i]),
            num(x0[i]),
            opt_num(means[i]),
            expected.inclusion_count[i].to_string(),
            opt_num(expected.standard_error(i)),
        ]);
    }
    Ok((table, report))
}

fn parse_grid(grid: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = grid.split(':').collect();
    let bad = || Usage(format!("--sweep expects lo:hi:step, got `{grid}`"));
    if parts.len() != 3 {
        return Err(bad().into());
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(&parts) {
        *slot = part.trim().parse().map_err(|_| bad())?;
    }
    Ok((v[0], v[1], v[2]))
}

fn snle_sweep(input: &Input, grid: &str, gamma: f64, variant: Variant) -> Result<(Table, Report)> {
    let g = load_graph(input)?;
    let y = require_labels(input, &g)?;
    let (lo, hi, step) = parse_grid(grid)?;
    let lambdas = lambda_grid(lo, hi, step)?;
    let rows = rank_sweep(&g, &y, &lambdas, gamma, variant)?;

    let mut report = Report::new("snle", None);
    report.param("edge_list", &input.edge_list);
    report.param("sweep", grid);
    report.param("gamma", gamma);
    report.param("variant", variant.to_string());
    report.set("points", rows.len());
    report.set("max_rank", rows.iter().map(|r| r.rank).max());
    report.set("min_rank", rows.iter().map(|r| r.rank).min());

    let mut table = Table::new(&["lambda", "rank", "correlation"]);
    for row in rows {
        table.push(vec![num(row.lambda), row.rank.to_string(), num(row.correlation)]);
    }
    Ok((table, report))
}

fn trw(
    input: &Input,
    g: Graph,
    cfg: WalkConfig,
    walks: usize,
    seed_stride: u64,
) -> Result<(Table, Report)> {
    let y = require_labels(input, &g)?;
    let study = trw_study(&g, &y, &cfg, walks, seed_stride)?;
    let pi = trw_stationary(&g, cfg.r);
    let visits = study.pooled_visits();
    let total: usize = visits.iter().sum();
    let p_values = study
        .traces
        .iter()
        .map(|t| stationarity_test(&g, t).map(|c| c.p_value))
        .collect::<graphsee::Result<Vec<_>>>()?;

    let mut report = Report::new("trw", Some(cfg.rng_seed));
    report.param("edge_list", &input.edge_list);
    report.param("r", cfg.r);
    report.param("states", cfg.n_states);
    report.param("burnin", cfg.burn_in);
    report.param("spacing", cfg.spacing);
    report.param("walks", walks);
    report.param("seed_stride", seed_stride);
    report.set("xi0", study.xi0);
    report.set(
        "xi_hat",
        study.xi.estimates.iter().map(|e| e[0]).collect::<Vec<_>>(),
    );
    report.set("xi_hat_combined", study.xi.combined[0]);
    report.set("xi_hat_variance", study.xi.variance().ok().map(|v| v[(0, 0)]));
    if walks > 1 {
        let (mean, se) = study.score_mean_se();
        report.set("score_at_xi0_mean", mean);
        report.set("score_at_xi0_se", se);
    }
    report.set("stationarity_p_values", p_values);

    let mut table = Table::new(&[
        "node_id",
        "degree",
        "stationary",
        "visit_freq",
        "visits",
        "rel_error",
    ]);
    let mut worst: f64 = 0.0;
    for i in 0..g.n_nodes() {
        let freq = visits[i] as f64 / total as f64;
        let rel = (freq - pi[i]) / pi[i];
        worst = worst.max(rel.abs());
        table.push(vec![
            (i + 1).to_string(),
            g.degree(i).to_string(),
            num(pi[i]),
            num(freq),
            visits[i].to_string(),
            num(rel),
        ]);
    }
    report.set("max_rel_error", worst);
    Ok((table, report))
}

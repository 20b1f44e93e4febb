//! Command implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use condopt::{
    fit, independence_test, log_predictive_score, simulate, Dim, HmapNode, PosteriorTree,
    SampleSpace, Scenario, ScenarioKind, TestDirection,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::csvio;
use crate::errors::{CliError, CliResult};
use crate::{atomic_write, svg};

fn init_threads(n: usize) {
    if n > 0 {
        // Ignore the error if a global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Resident set size of this process, in MB. getrusage is unusable here:
/// Linux carries ru_maxrss across fork/exec, so a spawned process would
/// report its parent's peak.
fn current_rss_mb() -> f64 {
    std::fs::read_to_string("/proc/self/status")
        .ok()
        .and_then(|s| {
            s.lines().find(|l| l.starts_with("VmRSS")).and_then(|l| {
                l.split_whitespace().nth(1).and_then(|v| v.parse::<f64>().ok())
            })
        })
        .map(|kb| kb / 1024.0)
        .unwrap_or(f64::NAN)
}

fn load_model(path: &Path) -> CliResult<PosteriorTree> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::io(&format!("opening model {}", path.display()), e))?;
    PosteriorTree::read_json(std::io::BufReader::new(file)).map_err(CliError::from)
}

pub fn cmd_fit(
    config: &Path,
    input: &Path,
    output: &Path,
    overrides: &[String],
    threads: Option<usize>,
) -> CliResult<()> {
    let cfg = RunConfig::load(config, overrides)?;
    init_threads(threads.unwrap_or(cfg.threads));
    let data = csvio::read_dataset(input, &cfg.predictors, &cfg.responses)?;
    let space_x = RunConfig::space(&cfg.predictors, data.x.ranges().as_deref())?;
    let space_y = RunConfig::space(&cfg.responses, data.y.ranges().as_deref())?;
    let mut rss = current_rss_mb();

    let start = Instant::now();
    let tree = fit(&space_x, &space_y, &cfg.prior(), data)?;
    let wall = start.elapsed().as_secs_f64();
    rss = rss.max(current_rss_mb());

    let doc = tree.to_json_string().map_err(CliError::from)?;
    atomic_write(output, doc.as_bytes())?;
    rss = rss.max(current_rss_mb());

    println!(
        "{}",
        json!({
            "n": tree.n(),
            "root_rho_post": tree.root_rho_post(),
            "log_phi_root": tree.root_log_phi(),
            "wall_time_s": wall,
            "peak_nodes": tree.node_count(),
            "peak_rss_mb": rss,
        })
    );
    Ok(())
}

/// Cell centers of a regular grid over one dimension.
fn dim_centers(dim: &Dim, resolution: usize) -> Vec<f64> {
    match dim {
        Dim::Continuous { lo, hi } => {
            let w = (hi - lo) / resolution as f64;
            (0..resolution).map(|i| lo + (i as f64 + 0.5) * w).collect()
        }
        Dim::Binary => vec![0.0, 1.0],
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut row = prefix.clone();
                row.push(v);
                next.push(row);
            }
        }
        out = next;
    }
    out
}

pub fn cmd_grid(
    model: &Path,
    output: &Path,
    x_values: &[String],
    x_grid: Option<usize>,
    y_grid: usize,
) -> CliResult<()> {
    let tree = load_model(model)?;
    let space_x = tree.space_x().clone();
    let space_y = tree.space_y().clone();

    let mut xs: Vec<Vec<f64>> = Vec::new();
    for raw in x_values {
        let coords: Vec<f64> = raw
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| CliError::Config(format!("--x value {t:?} is not a number")))
            })
            .collect::<CliResult<_>>()?;
        if coords.len() != space_x.n_dims() {
            return Err(CliError::Config(format!(
                "--x {raw:?} has {} coordinates, model predictors have {}",
                coords.len(),
                space_x.n_dims()
            )));
        }
        xs.push(coords);
    }
    if let Some(res) = x_grid {
        if res == 0 {
            return Err(CliError::Config("--x-grid must be positive".into()));
        }
        let axes: Vec<Vec<f64>> =
            space_x.dims().iter().map(|d| dim_centers(d, res)).collect();
        xs.extend(cartesian(&axes));
    }
    if xs.is_empty() {
        return Err(CliError::Config("grid needs --x points and/or --x-grid".into()));
    }
    for x in &xs {
        space_x
            .check_point(x)
            .map_err(|e| CliError::Data(format!("grid predictor point {x:?}: {e}")))?;
    }
    if y_grid == 0 {
        return Err(CliError::Config("--y-grid must be positive".into()));
    }

    let y_axes: Vec<Vec<f64>> = space_y.dims().iter().map(|d| dim_centers(d, y_grid)).collect();
    let y_cells = cartesian(&y_axes);

    let mut header: Vec<String> =
        (1..=space_x.n_dims()).map(|i| format!("x{i}")).collect();
    header.extend((1..=space_y.n_dims()).map(|i| format!("y{i}")));
    header.push("density".to_string());

    let mut rows = Vec::with_capacity(xs.len() * y_cells.len());
    for x in &xs {
        for y in &y_cells {
            let d = tree.predict_density(x, y).map_err(CliError::from)?;
            let mut row = x.clone();
            row.extend_from_slice(y);
            row.push(d);
            rows.push(row);
        }
    }
    csvio::write_csv(output, &header, rows.into_iter())?;
    println!(
        "{}",
        json!({"x_points": xs.len(), "y_cells": y_cells.len(), "rows": xs.len() * y_cells.len()})
    );
    Ok(())
}

fn hmap_node_json(space: &SampleSpace, node: &HmapNode) -> serde_json::Value {
    match node {
        HmapNode::Stop { region, rho_post, n, node } => {
            let bounds: Vec<[f64; 2]> = (0..space.n_dims())
                .map(|d| {
                    let (lo, hi) = region.bounds(space, d);
                    [lo, hi]
                })
                .collect();
            json!({
                "kind": "stop",
                "rho_post": rho_post,
                "n": n,
                "node": node,
                "depth": region.depth(),
                "bounds": bounds,
            })
        }
        HmapNode::Split { region, rho_post, n, split, children } => {
            let bounds: Vec<[f64; 2]> = (0..space.n_dims())
                .map(|d| {
                    let (lo, hi) = region.bounds(space, d);
                    [lo, hi]
                })
                .collect();
            json!({
                "kind": "split",
                "rho_post": rho_post,
                "n": n,
                "split_dim": split.dim,
                "depth": region.depth(),
                "bounds": bounds,
                "children": [
                    hmap_node_json(space, &children[0]),
                    hmap_node_json(space, &children[1]),
                ],
            })
        }
    }
}

pub fn cmd_hmap(model: &Path, output: &Path, svg_path: Option<&PathBuf>) -> CliResult<()> {
    let tree = load_model(model)?;
    let h = tree.hmap();
    let doc = json!({
        "kind": "hmap",
        "n": tree.n(),
        "leaves": h.leaves().len(),
        "split_dims": h.split_dims(),
        "root": hmap_node_json(tree.space_x(), &h.root),
    });
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    atomic_write(output, text.as_bytes())?;

    if let Some(path) = svg_path {
        if tree.space_x().n_dims() <= 2 {
            let image = svg::render(tree.space_x(), &h);
            atomic_write(path, image.as_bytes())?;
        } else {
            eprintln!(
                "skipping svg: schematic drawn only for 1-D/2-D predictor spaces, model has {}",
                tree.space_x().n_dims()
            );
        }
    }
    println!("{}", json!({"leaves": h.leaves().len(), "split_dims": h.split_dims()}));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_test(
    config: &Path,
    input: &Path,
    output: &Path,
    overrides: &[String],
    permutations: Option<usize>,
    seed: Option<u64>,
    direction: Option<TestDirection>,
    threads: Option<usize>,
) -> CliResult<()> {
    let cfg = RunConfig::load(config, overrides)?;
    init_threads(threads.unwrap_or(cfg.threads));
    let data = csvio::read_dataset(input, &cfg.predictors, &cfg.responses)?;
    let space_x = RunConfig::space(&cfg.predictors, data.x.ranges().as_deref())?;
    let space_y = RunConfig::space(&cfg.responses, data.y.ranges().as_deref())?;

    let permutations = permutations.unwrap_or(cfg.permutations);
    let seed = seed.unwrap_or(cfg.seed);
    let direction = direction.unwrap_or(cfg.direction);

    let result = independence_test(
        &space_x,
        &space_y,
        &cfg.prior(),
        &data,
        permutations,
        seed,
        direction,
    )
    .map_err(CliError::from)?;

    // 20-bin histogram of the null statistics over [0, 1].
    let bins = 20usize;
    let mut counts = vec![0usize; bins];
    for &s in &result.null_stats {
        let b = ((s * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let breaks: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();

    let doc = json!({
        "statistic": result.stat_observed,
        "p_value": result.p_value,
        "bayes_factor": result.bayes_factor,
        "direction": result.direction,
        "degenerate_x": result.degenerate_x,
        "permutations": permutations,
        "seed": seed,
        "null_stats": result.null_stats,
        "histogram": {"breaks": breaks, "counts": counts},
    });
    let text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    atomic_write(output, text.as_bytes())?;
    println!(
        "{}",
        json!({
            "statistic": result.stat_observed,
            "p_value": result.p_value,
            "bayes_factor": result.bayes_factor,
        })
    );
    Ok(())
}

pub fn cmd_simulate(scenario: &str, n: usize, seed: u64, output: &Path) -> CliResult<()> {
    let kind = ScenarioKind::parse(scenario)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let sc = Scenario::new(kind, n, seed);
    let data = simulate(&sc);
    let mut header = kind.predictor_names();
    header.extend(kind.response_names());
    let rows = (0..data.len() as u32).map(|i| {
        let mut row = data.x.row(i).to_vec();
        row.extend_from_slice(data.y.row(i));
        row
    });
    csvio::write_csv(output, &header, rows)?;
    println!("{}", json!({"scenario": kind.name(), "n": n, "seed": seed}));
    Ok(())
}

pub fn cmd_logp(model: &Path, config: &Path, input: &Path, overrides: &[String]) -> CliResult<()> {
    let cfg = RunConfig::load(config, overrides)?;
    let tree = load_model(model)?;
    if cfg.predictors.len() != tree.space_x().n_dims()
        || cfg.responses.len() != tree.space_y().n_dims()
    {
        return Err(CliError::Config(format!(
            "config lists {} predictor / {} response columns, model has {} / {}",
            cfg.predictors.len(),
            cfg.responses.len(),
            tree.space_x().n_dims(),
            tree.space_y().n_dims()
        )));
    }
    let test = csvio::read_dataset(input, &cfg.predictors, &cfg.responses)?;
    let n_test = test.len();
    let score = log_predictive_score(&tree, &test).map_err(CliError::from)?;
    println!("{}", json!({"n_test": n_test, "log_predictive_score": score}));
    Ok(())
}


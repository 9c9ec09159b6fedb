use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Parser;
use netorder_core::assign::{assign_ordered, AssignedSolution, AssignMetrics, AssignMode};
use netorder_core::datagen::{
    gen_dataset, gen_problem, paper_matrix, stored_solution, DataGroup, Dataset, DatasetParams, GridSize, Problem,
};
use netorder_core::features::feature_vector;
use netorder_core::grid::{Capacities, GridGraph};
use netorder_core::learn::{
    self, search_space, split_indices, Checkpoint, MlpModel, ModelKind, TrainConfig, TrainedArtifact,
};
use netorder_core::ordering::{
    factorial, heuristic_order, optimal_index, random_order_in_stream, rank_orderings, NetOrdering, ScoreWeights,
};
use netorder_core::route::{route_all, Router};
use netorder_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::manifest::{self, sha256_file, ManifestBuilder};
use crate::{
    Cli, Command, CompareArgs, EvalSet, GenArgs, ProblemArgs, ReplayArgs, RouteArgs, TrainArgs, TransferArgs,
};

fn params_of(p: &ProblemArgs, feature_mode: netorder_core::features::FeatureMode, groups: usize) -> DatasetParams {
    DatasetParams {
        router: p.router.into(),
        layers: p.layers,
        n_nets: p.nets,
        feature_mode,
        groups,
        grid: GridSize { width: p.width, height: p.height },
        pins_per_layer: p.pins_per_layer,
        capacities: Capacities {
            boundary: p.boundary_cap,
            via: p.via_cap.unwrap_or((p.width * p.height) as u32),
        },
        seed: p.seed,
    }
}

fn dataset_name(p: &DatasetParams) -> String {
    format!("{}_k{}_n{}_{}_s{}.jsonl", p.router, p.layers, p.n_nets, p.feature_mode, p.seed)
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    Dataset::read_jsonl(BufReader::new(File::open(path)?))
}

fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    create_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    ds.write_jsonl(&mut w)
}

pub fn gen(a: GenArgs, argv: Vec<String>) -> Result<()> {
    let base = params_of(&a.problem, a.features.into(), a.groups);
    let jobs: Vec<(DatasetParams, PathBuf)> = if a.paper_matrix {
        if a.out.is_some() {
            return Err(Error::InvalidArgument("--paper-matrix writes several files; use --out-dir".into()));
        }
        paper_matrix(a.groups, a.problem.seed)
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let p = DatasetParams { grid: base.grid, pins_per_layer: base.pins_per_layer, capacities: base.capacities, ..p };
                let path = a.out_dir.join(format!("data{:02}_{}", i + 1, dataset_name(&p)));
                (p, path)
            })
            .collect()
    } else {
        let path = a.out.clone().unwrap_or_else(|| a.out_dir.join(dataset_name(&base)));
        vec![(base, path)]
    };
    for (p, path) in jobs {
        p.validate()?;
        let builder = ManifestBuilder::new("gen", &argv, serde_json::to_value(p.header())?, vec![p.seed]);
        let ds = gen_dataset(&p)?;
        write_dataset(&path, &ds)?;
        builder.write(&[&path])?;
        println!("wrote {} ({} groups)", path.display(), ds.groups.len());
    }
    Ok(())
}

fn loss_csv(curve: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, l);
    }
    s
}

fn default_loss_path(out: &Path) -> PathBuf {
    out.with_extension("loss.csv")
}

fn checkpoint_of(art: &TrainedArtifact, ds: &Dataset) -> Checkpoint {
    let mut ck = Checkpoint::from_model(&art.model);
    ck.config = Some(art.config);
    ck.test_accuracy = Some(art.test_accuracy);
    ck.dataset = Some(ds.header);
    ck
}

fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    create_parent(path)?;
    let mut w = BufWriter::new(File::create(path)?);
    ck.write(&mut w)?;
    w.flush()?;
    Ok(())
}

fn train_params(a: &TrainArgs, config: &TrainConfig, test_accuracy: f64) -> serde_json::Value {
    json!({ "model": a.model, "config": config, "grid": a.grid, "test_accuracy": test_accuracy })
}

pub fn train(a: TrainArgs, argv: Vec<String>) -> Result<()> {
    let kind = ModelKind::try_from(a.model)?;
    let ds = read_dataset(&a.data)?;
    let examples = ds.examples();
    let (n_nets, mode) = (ds.header.n_nets, ds.header.feature_mode);
    let base = TrainConfig {
        epochs: a.epochs,
        hidden_units: a.hidden,
        learning_rate: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
        split_fraction: a.split,
    };
    let loss_path = a.loss_csv.clone().unwrap_or_else(|| default_loss_path(&a.out));

    let best = match a.grid {
        None => learn::train(&examples, n_nets, mode, kind, base)?,
        Some(budget) => {
            let points = search_space(budget, a.seed);
            let results = points
                .par_iter()
                .map(|&(epochs, hidden_units, learning_rate)| {
                    learn::train(&examples, n_nets, mode, kind, TrainConfig { epochs, hidden_units, learning_rate, ..base })
                })
                .collect::<Result<Vec<_>>>()?;
            let grid_dir = PathBuf::from(format!("{}.grid", a.out.display()));
            fs::create_dir_all(&grid_dir)?;
            let mut best = 0;
            for (i, art) in results.iter().enumerate() {
                let path = grid_dir.join(format!("point{i:03}.loss.csv"));
                fs::write(&path, loss_csv(&art.loss_curve))?;
                ManifestBuilder::new("train", &argv, train_params(&a, &art.config, art.test_accuracy), vec![a.seed])
                    .input(&a.data)
                    .write(&[&path])?;
                println!(
                    "point {i:3}: epochs {:5} hidden {:3} lr {:<7} train {:6.2}% test {:6.2}%",
                    art.config.epochs, art.config.hidden_units, art.config.learning_rate, art.train_accuracy, art.test_accuracy
                );
                if art.test_accuracy > results[best].test_accuracy {
                    best = i;
                }
            }
            results.into_iter().nth(best).ok_or_else(|| Error::InvalidArgument("--grid needs a budget of at least 1".into()))?
        }
    };

    write_checkpoint(&a.out, &checkpoint_of(&best, &ds))?;
    create_parent(&loss_path)?;
    fs::write(&loss_path, loss_csv(&best.loss_curve))?;
    ManifestBuilder::new("train", &argv, train_params(&a, &best.config, best.test_accuracy), vec![a.seed])
        .input(&a.data)
        .write(&[&a.out, &loss_path])?;
    println!(
        "{kind}: epochs {} hidden {} lr {}: train {:.2}% test {:.2}% -> {}",
        best.config.epochs,
        best.config.hidden_units,
        best.config.learning_rate,
        best.train_accuracy,
        best.test_accuracy,
        a.out.display()
    );
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(Checkpoint, MlpModel)> {
    let ck = Checkpoint::read(BufReader::new(File::open(path)?))?;
    let model = ck.to_model()?;
    Ok((ck, model))
}

/// Rebuilds a group's full grid and stored 2D solution and returns the
/// heuristic ordering's permutation index.
pub fn heuristic_index(group: &DataGroup, capacities: Capacities, weights: ScoreWeights) -> Result<usize> {
    let grid = group.problem.grid(capacities)?;
    let solution = stored_solution(group, &grid);
    Ok(heuristic_order(&solution, &grid.compress(), weights)?.index())
}

pub fn accuracy_of(hits: impl IntoIterator<Item = bool>) -> (f64, usize) {
    let (mut n, mut k) = (0usize, 0usize);
    for h in hits {
        n += 1;
        k += h as usize;
    }
    (if n == 0 { 0.0 } else { 100.0 * k as f64 / n as f64 }, n)
}

/// Half-width of the normal-approximation 95% interval, in percent.
fn ci95(pct: f64, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pct / 100.0;
    100.0 * 1.96 * (p * (1.0 - p) / n as f64).sqrt()
}

struct Column {
    label: String,
    cells: Vec<Option<(f64, usize)>>,
}

pub fn compare(a: CompareArgs, argv: Vec<String>) -> Result<()> {
    let models = a.checkpoint.iter().map(|p| load_model(p)).collect::<Result<Vec<_>>>()?;
    let first_config = models.iter().find_map(|(ck, _)| ck.config);
    let split_seed = a.split_seed.or(first_config.map(|c| c.seed)).unwrap_or(0);
    let split = a.split.or(first_config.map(|c| c.split_fraction)).unwrap_or(0.8);
    let weights = ScoreWeights { alpha: a.alpha, beta: a.beta, gamma: a.gamma };

    let mut columns: Vec<Column> = models
        .iter()
        .map(|(ck, _)| Column { label: format!("model {}", u8::from(ck.model_id)), cells: Vec::new() })
        .collect();
    columns.push(Column { label: "heuristic".into(), cells: Vec::new() });
    columns.push(Column { label: "random".into(), cells: Vec::new() });
    let mut names = Vec::new();

    for path in &a.data {
        let ds = read_dataset(path)?;
        let eval: Vec<usize> = match a.eval {
            EvalSet::All => (0..ds.groups.len()).collect(),
            EvalSet::Test => split_indices(ds.groups.len(), split_seed, split).1,
        };
        let h = ds.header;
        for (c, (_, model)) in models.iter().enumerate() {
            let cell = if model.n_nets == h.n_nets && model.feature_mode == h.feature_mode {
                let hits = eval
                    .par_iter()
                    .map(|&i| Ok(model.predict_index(&ds.groups[i].features)? == ds.groups[i].optimal_index))
                    .collect::<Result<Vec<_>>>()?;
                Some(accuracy_of(hits))
            } else {
                None
            };
            columns[c].cells.push(cell);
        }
        let hits = eval
            .par_iter()
            .map(|&i| Ok(heuristic_index(&ds.groups[i], h.capacities, weights)? == ds.groups[i].optimal_index))
            .collect::<Result<Vec<_>>>()?;
        let n = columns.len();
        columns[n - 2].cells.push(Some(accuracy_of(hits)));
        let hits = eval
            .iter()
            .map(|&i| random_order_in_stream(h.n_nets, a.seed, i as u64).index() == ds.groups[i].optimal_index);
        columns[n - 1].cells.push(Some(accuracy_of(hits)));
        names.push(path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
    }

    let width = names.iter().map(String::len).max().unwrap_or(7).max(7);
    let mut table = format!("{:width$}", "dataset");
    for c in &columns {
        let _ = write!(table, " | {:>10}", c.label);
    }
    table.push('\n');
    for (d, name) in names.iter().enumerate() {
        let _ = write!(table, "{name:width$}");
        for c in &columns {
            match c.cells[d] {
                Some((pct, _)) => {
                    let _ = write!(table, " | {pct:>10.2}");
                }
                None => table.push_str(" |          -"),
            }
        }
        table.push('\n');
    }
    print!("{table}");

    if let Some(csv_path) = &a.csv {
        let mut csv = String::from("dataset,method,accuracy_pct,n_groups,ci95_pct\n");
        for (d, name) in names.iter().enumerate() {
            for c in &columns {
                if let Some((pct, n)) = c.cells[d] {
                    let _ = writeln!(csv, "{name},{},{pct},{n},{}", c.label, ci95(pct, n));
                }
            }
        }
        create_parent(csv_path)?;
        fs::write(csv_path, csv)?;
        let params = json!({
            "eval": format!("{:?}", a.eval).to_lowercase(),
            "split_seed": split_seed,
            "split": split,
            "weights": weights,
        });
        let mut builder = ManifestBuilder::new("compare", &argv, params, vec![a.seed, split_seed]);
        for p in a.data.iter().chain(&a.checkpoint) {
            builder = builder.input(p);
        }
        builder.write(&[csv_path])?;
    }
    Ok(())
}

pub fn transfer(a: TransferArgs, argv: Vec<String>) -> Result<()> {
    let (ck, model) = load_model(&a.checkpoint)?;
    if a.min_layers == 0 || a.min_layers > a.max_layers {
        return Err(Error::InvalidArgument(format!("bad layer range {}..={}", a.min_layers, a.max_layers)));
    }
    let router: Router = match (a.router, ck.dataset) {
        (Some(r), _) => r.into(),
        (None, Some(h)) => h.router,
        (None, None) => Router::Ka,
    };
    let mut csv = String::from("k,accuracy_pct,n_groups,seed\n");
    println!("{:>3} | {:>9} | {:>9}", "k", "model", "random");
    for k in a.min_layers..=a.max_layers {
        let mut p = DatasetParams::new(router, k, model.n_nets, model.feature_mode, a.groups, a.seed);
        if let Some(h) = ck.dataset {
            p.grid = h.grid;
            p.pins_per_layer = h.pins_per_layer;
            p.capacities = h.capacities;
        }
        let ds = gen_dataset(&p)?;
        if ds.header.n_nets != model.n_nets {
            return Err(Error::DimensionMismatch { expected: model.n_nets, actual: ds.header.n_nets });
        }
        let hits = ds
            .groups
            .par_iter()
            .map(|g| Ok(model.predict_index(&g.features)? == g.optimal_index))
            .collect::<Result<Vec<_>>>()?;
        let (pct, n) = accuracy_of(hits);
        let (rnd, _) = accuracy_of(
            ds.groups
                .iter()
                .enumerate()
                .map(|(i, g)| random_order_in_stream(model.n_nets, a.seed, i as u64).index() == g.optimal_index),
        );
        println!("{k:>3} | {pct:>8.2}% | {rnd:>8.2}%");
        let _ = writeln!(csv, "{k},{pct},{n},{}", a.seed);
    }
    create_parent(&a.out)?;
    fs::write(&a.out, csv)?;
    let params = json!({
        "router": router,
        "min_layers": a.min_layers,
        "max_layers": a.max_layers,
        "groups": a.groups,
    });
    ManifestBuilder::new("transfer", &argv, params, vec![a.seed]).input(&a.checkpoint).write(&[&a.out])?;
    Ok(())
}

#[derive(Serialize)]
struct RouteDump<'a> {
    problem: &'a Problem,
    order: &'a NetOrdering,
    mode: AssignMode,
    metrics: AssignMetrics,
    solution: &'a AssignedSolution,
}

fn parse_explicit(order: &str, n: usize) -> Result<NetOrdering> {
    let ids = order
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| Error::InvalidArgument(format!("bad ordering `{order}`"))))
        .collect::<Result<Vec<_>>>()?;
    if ids.len() != n {
        return Err(Error::InvalidArgument(format!("ordering `{order}` must list all {n} nets")));
    }
    NetOrdering::new(ids)
}

fn layer_usage(grid: &GridGraph, solution: &AssignedSolution) -> Vec<(usize, usize)> {
    let mut usage = vec![(0usize, 0usize); grid.layers()];
    for e in grid.edge_ids() {
        let d = solution.demand.get(e) as usize;
        let (a, b) = grid.endpoints(e);
        let (a, b) = (grid.vertex(a), grid.vertex(b));
        if a.layer == b.layer && d > 0 {
            usage[a.layer].0 += 1;
            usage[a.layer].1 += d;
        }
    }
    usage
}

pub fn route(a: RouteArgs, argv: Vec<String>) -> Result<()> {
    let params = params_of(&a.problem, netorder_core::features::FeatureMode::Full, 1);
    let problem = gen_problem(&params, 0)?;
    let grid = problem.grid(params.capacities)?;
    let flat = grid.compress();
    let solution = route_all(&flat, &flat.nets(), params.router)?;
    let n = solution.trees.len();
    let weights = ScoreWeights { alpha: a.alpha, beta: a.beta, gamma: a.gamma };
    let order = match a.order.as_str() {
        "oracle" => {
            let table = rank_orderings(&grid, &solution, true)?;
            let best = optimal_index(&table).ok_or_else(|| Error::Data("empty ordering table".into()))?;
            table[best].ordering.clone()
        }
        "heuristic" => heuristic_order(&solution, &flat, weights)?,
        "random" => random_order_in_stream(n, params.seed, 0),
        "model" => {
            let path = a
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--order model needs --checkpoint".into()))?;
            let (_, model) = load_model(path)?;
            if model.n_nets != n {
                return Err(Error::DimensionMismatch { expected: model.n_nets, actual: n });
            }
            let features = feature_vector(&grid, &flat, &solution, model.feature_mode)?.to_vec();
            model.predict_order(&features)?
        }
        explicit => parse_explicit(explicit, n)?,
    };
    let mode: AssignMode = a.mode.into();
    let (assigned, metrics) = assign_ordered(&grid, &solution, order.as_slice(), mode)?;

    println!(
        "problem: {}x{}, {} layers, {} nets, router {}, seed {}",
        params.grid.width, params.grid.height, params.layers, n, params.router, params.seed
    );
    println!("order: {order} (index {} of {})", order.index(), factorial(n));
    for (layer, (edges, demand)) in layer_usage(&grid, &assigned).into_iter().enumerate() {
        println!("layer {layer}: {edges} boundary edges used, demand {demand}");
    }
    println!(
        "total_overflow={} max_overflow={} wirelength={} vias={}",
        metrics.total_overflow, metrics.max_overflow, metrics.wirelength, metrics.vias
    );

    if let Some(path) = &a.emit_json {
        // Wall time would make the dump irreproducible.
        let metrics = AssignMetrics { runtime: 0.0, ..metrics };
        let dump = RouteDump { problem: &problem, order: &order, mode, metrics, solution: &assigned };
        create_parent(path)?;
        fs::write(path, serde_json::to_string_pretty(&dump)? + "\n")?;
        let params = json!({ "problem": params.header(), "order": a.order, "mode": mode });
        let mut builder = ManifestBuilder::new("route", &argv, params, vec![a.problem.seed]);
        if let Some(ck) = &a.checkpoint {
            builder = builder.input(ck);
        }
        builder.write(&[path])?;
    }
    Ok(())
}

pub fn replay(a: ReplayArgs) -> Result<()> {
    let m = manifest::read(&a.manifest)?;
    let cli = Cli::try_parse_from(&m.argv).map_err(|e| Error::Data(format!("manifest argv does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::Data("manifest records a replay".into()));
    }
    let here = std::env::current_dir()?;
    std::env::set_current_dir(&m.cwd)?;
    let outcome = crate::run(cli, m.argv.clone()).and_then(|()| {
        let mut differing = Vec::new();
        for out in &m.outputs {
            if sha256_file(&out.path)? == out.sha256 {
                println!("identical: {}", out.path.display());
            } else {
                println!("DIFFERS: {}", out.path.display());
                differing.push(out.path.display().to_string());
            }
        }
        if differing.is_empty() {
            Ok(())
        } else {
            Err(Error::Data(format!("not reproduced: {}", differing.join(", "))))
        }
    });
    std::env::set_current_dir(here)?;
    outcome
}

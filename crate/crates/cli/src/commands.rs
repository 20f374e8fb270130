use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pinnflow::autodiff::{parameter_gradient_check, Activation, FdCheck, Mlp};
use pinnflow::evaluation::{
    error_report, nearest_reference_interpolation, predict_field, save_field, FieldValues,
};
use pinnflow::network::{init_params_with_rng, Checkpoint, NetworkShape};
use pinnflow::physics::{PhysicsLoss, PointRole};
use pinnflow::sampling::domains::{Channel2d, Cylinder3d, Tjunction3d};
use pinnflow::sampling::{load_point_sets, load_reference, save_point_sets, save_reference};
use pinnflow::training::{resume, train_with, Termination, TrainConfig, TrainOptions, TrainOutcome};

use crate::{Command, Geometry, NumericalAbort};

const FD_STEP_INPUT: f64 = 1e-4;
const FD_STEP_PARAM: f64 = 1e-6;
const TOL_INPUT: f64 = 1e-5;
const TOL_PARAM: f64 = 1e-6;
const TOL_LINEAR: f64 = 1e-12;

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Train { config, out, seed, deterministic, resume, overwrite } => {
            train_cmd(&config, out, seed, deterministic, resume, overwrite)
        }
        Command::Evaluate { checkpoint, reference, points, k, out, overwrite } => {
            evaluate_cmd(&checkpoint, &reference, points.as_deref(), k, out.as_deref(), overwrite)
        }
        Command::Predict { checkpoint, points, k, output, overwrite } => {
            predict_cmd(&checkpoint, &points, k, &output, overwrite)
        }
        Command::Checkgrad { config, order, points, linear, corrupt } => checkgrad_cmd(&config, order, points, linear, corrupt),
        Command::Gridsearch { config, widths, depths, out, seed, overwrite } => {
            gridsearch_cmd(&config, &widths, &depths, &out, seed, overwrite)
        }
        Command::Generate { geometry, output, seed, parametric, full, volume, overwrite } => {
            generate_cmd(geometry, &output, seed, parametric, full, volume, overwrite)
        }
        Command::Reference { output, n, seed, overwrite } => {
            check_file(&output, overwrite)?;
            save_reference(&output, &Channel2d::default().reference(n, seed))?;
            println!("wrote {n} reference points to {}", output.display());
            Ok(())
        }
    }
}

/// Creates `dir`, refusing to touch a non-empty one unless `overwrite`.
fn fresh_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let empty = fs::read_dir(dir).with_context(|| format!("cannot read {}", dir.display()))?.next().is_none();
        if !empty {
            ensure!(overwrite, "{} already exists; pass --overwrite to replace it", dir.display());
            fs::remove_dir_all(dir).with_context(|| format!("cannot clear {}", dir.display()))?;
        }
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn check_file(path: &Path, overwrite: bool) -> Result<()> {
    ensure!(overwrite || !path.exists(), "{} already exists; pass --overwrite to replace it", path.display());
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::load(path)?;
    if let Some(s) = seed {
        cfg.network.seed = s;
    }
    Ok(cfg)
}

fn run_training(cfg: &TrainConfig, dir: &Path, resume_from: Option<&Path>) -> Result<TrainOutcome> {
    let points = cfg.data.points.as_ref().context("[data] points must name a point-set file")?;
    let set = load_point_sets(points)?;
    let reference = cfg.data.reference.as_deref().map(load_reference).transpose()?;
    fs::write(dir.join("config.toml"), cfg.to_toml()).context("cannot write config copy")?;
    let outcome = match resume_from {
        Some(ckpt) => {
            let ckpt = Checkpoint::read(ckpt).with_context(|| format!("cannot read checkpoint {}", ckpt.display()))?;
            resume(&ckpt, cfg, &set, reference.as_ref(), Some(dir))?
        }
        None => {
            let opts = TrainOptions { out_dir: Some(dir.to_path_buf()), ..Default::default() };
            train_with(cfg, &set, reference.as_ref(), &opts)?
        }
    };
    Ok(outcome)
}

fn train_cmd(
    config: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    deterministic: bool,
    resume_from: Option<PathBuf>,
    overwrite: bool,
) -> Result<()> {
    let mut cfg = load_config(config, seed)?;
    if deterministic {
        cfg.optim.deterministic = true;
    }
    let dir = out.or_else(|| cfg.output.dir.clone()).context("no run directory: pass --out or set [output] dir")?;
    if resume_from.is_some() {
        fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    } else {
        fresh_dir(&dir, overwrite)?;
    }
    let outcome = run_training(&cfg, &dir, resume_from.as_deref())?;
    let s = &outcome.summary;
    println!(
        "{}: {} iterations ({} Adam, {} L-BFGS), final L_total {:.6e}, {} {}",
        s.termination.name(),
        s.iterations,
        s.adam_iterations,
        s.lbfgs_iterations,
        s.final_loss.l_total,
        s.test_metric,
        s.final_test_loss.map_or("n/a".to_string(), |v| format!("{v:.6e}"))
    );
    println!("run directory {}", dir.display());
    if s.termination == Termination::NonFiniteAbort {
        return Err(NumericalAbort("training aborted on a non-finite loss; last good checkpoint kept".into()).into());
    }
    Ok(())
}

/// Positions from any CSV with `x,y[,z]` columns, and the dimension found.
fn read_positions(path: &Path) -> Result<(Vec<[f64; 3]>, usize)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = vec![col("x").context("missing column 'x'")?, col("y").context("missing column 'y'")?];
    if let Some(z) = col("z") {
        idx.push(z);
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut x = [0.0; 3];
        for (d, &i) in idx.iter().enumerate() {
            let s = rec.get(i).unwrap_or("");
            x[d] = s.parse().with_context(|| format!("{} row {}: bad coordinate '{s}'", path.display(), row + 1))?;
        }
        out.push(x);
    }
    Ok((out, idx.len()))
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::read(path).with_context(|| format!("cannot read checkpoint {}", path.display()))
}

fn evaluate_cmd(
    checkpoint: &Path,
    reference: &Path,
    points: Option<&Path>,
    k: Option<f64>,
    out: Option<&Path>,
    overwrite: bool,
) -> Result<()> {
    let ckpt = read_checkpoint(checkpoint)?;
    let reference = load_reference(reference).with_context(|| format!("cannot load reference {}", reference.display()))?;
    ensure!(
        reference.n_sd == ckpt.params.n_sd,
        "reference is {}D but the checkpoint is {}D",
        reference.n_sd,
        ckpt.params.n_sd
    );
    let k = k.unwrap_or(ckpt.k_ref);
    let (positions, values) = match points {
        Some(p) => {
            let (q, n_sd) = read_positions(p)?;
            ensure!(n_sd == ckpt.params.n_sd, "points are {n_sd}D but the checkpoint is {}D", ckpt.params.n_sd);
            let interp = nearest_reference_interpolation(&reference, &q)?;
            log::info!("reference matched with mean distance {:.3e} m, max {:.3e} m", interp.mean_distance, interp.max_distance);
            (q, interp.values)
        }
        None => (reference.positions.clone(), FieldValues::from(&reference)),
    };
    let pred = predict_field(&ckpt, &positions, k)?;
    let report = error_report(&pred, &values)?;
    print!("{}", report.to_text());
    if let Some(dir) = out {
        fresh_dir(dir, overwrite)?;
        fs::write(dir.join("report.txt"), report.to_text())?;
        fs::write(dir.join("report.csv"), format!("{}\n{}\n", report.csv_header(), report.csv_row()))?;
    }
    Ok(())
}

fn predict_cmd(checkpoint: &Path, points: &Path, k: Option<f64>, output: &Path, overwrite: bool) -> Result<()> {
    check_file(output, overwrite)?;
    let ckpt = read_checkpoint(checkpoint)?;
    let (q, n_sd) = read_positions(points)?;
    ensure!(n_sd == ckpt.params.n_sd, "points are {n_sd}D but the checkpoint is {}D", ckpt.params.n_sd);
    let pred = predict_field(&ckpt, &q, k.unwrap_or(ckpt.k_ref))?;
    save_field(output, &pred)?;
    println!(
        "wrote {} points to {}{}",
        q.len(),
        output.display(),
        if pred.extrapolated { " (k outside the trained range)" } else { "" }
    );
    Ok(())
}

fn checkgrad_cmd(config: &Path, order: usize, n_points: usize, linear: bool, corrupt: bool) -> Result<()> {
    let cfg = load_config(config, None)?;
    ensure!((1..=3).contains(&order), "--order must be 1, 2 or 3");
    ensure!(n_points > 0, "--points must be positive");
    let n_sd = cfg.network.n_sd;
    let shape = NetworkShape {
        hidden_layers: cfg.network.hidden_layers,
        width: cfg.network.width,
        n_sd,
        parametric: cfg.parametric()?,
        mode: cfg.network.mode,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.network.seed);
    let mut params = init_params_with_rng(shape, cfg.network.seed, &mut rng)?;
    if linear {
        params.mlp = Mlp::from_params(params.mlp.widths().to_vec(), Activation::Linear, params.mlp.params().to_vec())?;
    }
    let n_in = params.n_inputs();
    let pts: Vec<f64> = (0..n_points * n_in).map(|_| rng.random_range(-1.0..1.0)).collect();

    let report = FdCheck::new(FD_STEP_INPUT).order(order).dims(n_sd).corrupt(corrupt).run(&params.mlp, &pts)?;
    println!("input jacobian   max relative error {:.3e}", report.jacobian);
    if let Some(h) = report.hessian {
        println!("input hessian    max relative error {h:.3e}");
    }
    if let Some(t) = report.third {
        println!("third derivative max relative error {t:.3e}");
    }

    let roles: Vec<PointRole> = (0..n_points)
        .map(|i| match i % 4 {
            0 => PointRole::Dirichlet([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0]),
            1 => PointRole::Neumann(rng.random_range(-1.0..1.0)),
            _ => PointRole::Volume,
        })
        .collect();
    let layout = params.layout();
    let loss = PhysicsLoss::new(&layout, &roles, cfg.scales.reynolds(), cfg.loss.f_bc, cfg.loss.f_sigma)?;
    let param_err = parameter_gradient_check(&params.mlp, &loss, &pts, loss.spec(), FD_STEP_PARAM)?;
    println!("loss gradient    max relative error {param_err:.3e}");

    let hessian_tol = if linear { TOL_LINEAR } else { TOL_INPUT };
    let input_ok = report.jacobian <= TOL_INPUT
        && report.hessian.is_none_or(|h| h <= hessian_tol)
        && report.third.is_none_or(|t| t <= TOL_INPUT);
    let param_ok = param_err <= TOL_PARAM;
    if input_ok && param_ok {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        Err(NumericalAbort(format!(
            "derivative check failed (tolerances {TOL_INPUT:e} on inputs, {hessian_tol:e} on the hessian, {TOL_PARAM:e} on parameters)"
        ))
        .into())
    }
}

fn gridsearch_cmd(config: &Path, widths: &[usize], depths: &[usize], out: &Path, seed: Option<u64>, overwrite: bool) -> Result<()> {
    let base = load_config(config, seed)?;
    ensure!(widths.iter().chain(depths).all(|&v| v > 0), "widths and depths must be positive");
    fresh_dir(out, overwrite)?;
    let table_path = out.join("gridsearch.csv");
    let mut table = fs::File::create(&table_path)?;
    writeln!(table, "n,m,final_l_test,iterations,mean_step_time_s")?;
    for &n in depths {
        for &m in widths {
            let mut cfg = base.clone();
            cfg.network.hidden_layers = n;
            cfg.network.width = m;
            let dir = out.join(format!("n{n}_m{m}"));
            fs::create_dir_all(&dir)?;
            log::info!("grid point n = {n}, m = {m}");
            let outcome = run_training(&cfg, &dir, None)?;
            let s = &outcome.summary;
            let test = s.final_test_loss.map_or(String::new(), |v| v.to_string());
            writeln!(table, "{n},{m},{test},{},{}", s.iterations, s.mean_step_time_s)?;
            table.flush()?;
        }
    }
    println!("wrote {}", table_path.display());
    Ok(())
}

fn generate_cmd(
    geometry: Geometry,
    output: &Path,
    seed: u64,
    parametric: bool,
    full: bool,
    volume: Option<usize>,
    overwrite: bool,
) -> Result<()> {
    check_file(output, overwrite)?;
    let set = match geometry {
        Geometry::Channel2d => {
            if parametric || full {
                bail!("channel2d has neither a parametric nor a full-size variant");
            }
            let mut g = Channel2d::default();
            if let Some(n) = volume {
                g.n_volume = n;
            }
            g.generate(seed)
        }
        Geometry::Cylinder3d => {
            let mut g = match (full, parametric) {
                (true, false) => Cylinder3d::paper_static(),
                (true, true) => Cylinder3d::paper_parametric(),
                (false, p) => Cylinder3d { parametric: p, ..Cylinder3d::default() },
            };
            if let Some(n) = volume {
                g.n_volume = n;
            }
            g.generate(seed)
        }
        Geometry::Tjunction3d => {
            let mut g = if full { Tjunction3d::paper() } else { Tjunction3d::default() };
            if let Some(n) = volume {
                g.n_volume = n;
            }
            g.generate(seed)
        }
    };
    save_point_sets(output, &set)?;
    let (f, d, n, m) = set.counts();
    println!("wrote {} (N_f = {f}, N_D = {d} incl. N_M = {m}, N_N = {n})", output.display());
    Ok(())
}

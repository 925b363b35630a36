use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use pixelpde_core::datagen::{
    generate_dataset, load_dataset, random_ic_advection, random_ic_heat, save_dataset, write_sidecar, Dataset,
    GenConfig, PdeKind,
};
use pixelpde_core::integrators::{local_error_diagnostic, Scheme, StepperConfig};
use pixelpde_core::metrics::eval_metrics;
use pixelpde_core::network::{construct_linear, construct_quadratic, Activation, TwoLayerNetParams};
use pixelpde_core::stencils::{advection_spec, fisher_spec, heat_spec, Interaction, PdeSpec, Stencil};
use pixelpde_core::tensor::Field;
use pixelpde_core::train::{history_csv, loss, train_curriculum_with, LossConfig, TrainConfig};
use pixelpde_core::Error;

use crate::study::{run_advection_study, StudyOptions};
use crate::{
    config, ArchArg, CliResult, DiagnoseArgs, EvalArgs, Failure, GenArgs, IcArg, PdeArg, SchemeArg, StudyArgs,
    TheoremArg, TrainArgs, VerifyArgs, VerifyPde, EXIT_DIVERGENCE, EXIT_TOLERANCE,
};

fn resolve<T: Serialize + DeserializeOwned>(args: &T, path: &Option<PathBuf>, section: &str) -> CliResult<T> {
    let cfg = match path {
        Some(p) => Some(config::load(p).map_err(|e| match e {
            Error::Io(_) => Failure::input(p, e),
            other => other.into(),
        })?),
        None => None,
    };
    Ok(config::merge(args, cfg.as_ref(), section)?)
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| Failure::config(format!("missing required option --{flag}")))
}

fn velocity(b: Option<Vec<f64>>) -> CliResult<[f64; 2]> {
    match b.as_deref() {
        None => Ok([1.0, 1.0]),
        Some([b1, b2]) => Ok([*b1, *b2]),
        Some(other) => Err(Failure::config(format!("--b takes two values, got {}", other.len()))),
    }
}

fn write_output(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| Failure::new(crate::EXIT_IO, format!("{}: {e}", path.display())))
}

fn open_dataset(path: &Path) -> CliResult<Dataset> {
    load_dataset(path).map_err(|e| Failure::input(path, e))
}

fn open_checkpoint(path: &Path) -> CliResult<TwoLayerNetParams> {
    TwoLayerNetParams::load(path).map_err(|e| Failure::input(path, e))
}

fn stepper(dt: f64, substeps: Option<usize>, scheme: Option<SchemeArg>) -> CliResult<StepperConfig> {
    Ok(StepperConfig::new(
        dt,
        substeps.unwrap_or(5),
        scheme.unwrap_or(SchemeArg::Euler).into(),
    )?)
}

pub fn gen(a: GenArgs) -> CliResult<()> {
    let a = resolve(&a, &a.config, "gen")?;
    let pde: PdeKind = required(a.pde, "pde")?.into();
    let out = required(a.out, "out")?;
    let mut cfg = GenConfig::new(pde, a.n.unwrap_or(64), a.m.unwrap_or(40), a.p.unwrap_or(32), a.seed.unwrap_or(0));
    cfg.dt = a.dt;
    cfg.alpha = a.alpha.unwrap_or(cfg.alpha);
    cfg.b = velocity(a.b)?;
    cfg.min_norm = a.min_norm;
    cfg.refine = a.refine.unwrap_or(1);
    let ds = generate_dataset(&cfg)?;
    save_dataset(&ds, &out).map_err(|e| Failure::new(crate::EXIT_IO, format!("{}: {e}", out.display())))?;
    write_sidecar(&out, &cfg, &ds).map_err(|e| Failure::new(crate::EXIT_IO, format!("{}: {e}", out.display())))?;

    let norms: Vec<f64> = ds.sequences().iter().map(|s| s[0].norm()).collect();
    let min = norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = norms.iter().cloned().fold(0.0, f64::max);
    let mean = norms.iter().sum::<f64>() / norms.len() as f64;
    println!(
        "wrote {}: pde={} N={} M={} p={} dt={:e} |U0|: min={:.6e} mean={:.6e} max={:.6e}",
        out.display(),
        ds.pde_tag,
        ds.n_sequences(),
        ds.m(),
        ds.p,
        ds.dt,
        min,
        mean,
        max
    );
    Ok(())
}

pub fn train(a: TrainArgs) -> CliResult<()> {
    let a = resolve(&a, &a.config, "train")?;
    let data_path = required(a.data, "data")?;
    let out = required(a.out_checkpoint, "out-checkpoint")?;
    let ds = open_dataset(&data_path)?;
    let fisher = ds.pde_tag == PdeKind::Fisher.tag();
    let arch = a.arch.unwrap_or(if fisher { ArchArg::QuadraticRelu2 } else { ArchArg::LinearRelu });
    let (activation, default_channels) = match arch {
        ArchArg::LinearRelu => (Activation::Relu, 2),
        ArchArg::LinearLeaky => (Activation::leaky(a.leaky_slope.unwrap_or(0.3))?, 2),
        ArchArg::QuadraticRelu2 => (Activation::Relu2, 10),
    };
    let channels = a.channels.unwrap_or(default_channels);
    let ksize = a.ksize.unwrap_or(5);
    let seed = a.seed.unwrap_or(0);
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let theta0 = TwoLayerNetParams::random(channels, ksize, ksize, activation, &mut init_rng)?;
    let cfg = stepper(ds.dt, a.substeps, a.scheme)?;
    let mut tc = TrainConfig::scaled(a.epochs.unwrap_or(300));
    tc.seed = seed;
    tc.batch_size = a.batch_size.unwrap_or(tc.batch_size);
    tc.lr0 = a.lr.unwrap_or(tc.lr0);
    if let Some(stages) = a.stages {
        tc.stage_rollouts = stages;
    }
    let noise = a.noise_eps.unwrap_or(0.0);
    let every = a.checkpoint_every.unwrap_or(0);

    let mut last_good = theta0.clone();
    let result = train_curriculum_with(&theta0, &ds, &tc, &cfg, noise, |rec, theta| {
        last_good = theta.clone();
        let done = rec.stage * tc.epochs_per_stage + rec.epoch + 1;
        if every > 0 && done % every == 0 {
            theta.save(&out)?;
        }
        Ok(())
    });
    let (theta, history) = match result {
        Ok(r) => r,
        Err(e @ Error::Divergence { .. }) => {
            last_good.save(&out)?;
            return Err(Failure::new(
                EXIT_DIVERGENCE,
                format!("training diverged ({e}); last good checkpoint saved to {}", out.display()),
            ));
        }
        Err(e) => return Err(e.into()),
    };
    theta.save(&out)?;
    if let Some(h) = a.history_csv {
        write_output(&h, &history_csv(&history))?;
    }
    let q = *tc.stage_rollouts.last().expect("validated non-empty");
    let final_loss = loss(&theta, &cfg, &ds, LossConfig::new(q, 0.0)?, &mut init_rng)?;
    println!(
        "trained {} parameters for {} epochs; clean loss at Q={q}: {:e}; checkpoint {}",
        theta.count_params(),
        history.len(),
        final_loss,
        out.display()
    );
    Ok(())
}

pub fn eval(a: EvalArgs) -> CliResult<()> {
    let a = resolve(&a, &a.config, "eval")?;
    let ds = open_dataset(&required(a.data, "data")?)?;
    let theta = open_checkpoint(&required(a.checkpoint, "checkpoint")?)?;
    let cfg = stepper(ds.dt, a.substeps, a.scheme)?;
    let series = eval_metrics(&theta, &cfg, &ds, a.horizon.unwrap_or(40))?;
    match a.out_csv {
        Some(p) => write_output(&p, &series.to_csv()),
        None => {
            print!("{}", series.to_csv());
            Ok(())
        }
    }
}

fn random_stencil<R: Rng>(rng: &mut R, scale: f64) -> Stencil {
    let v: Vec<f64> = (0..9).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
    Stencil::from_slice(&v).expect("nine finite coefficients")
}

fn random_field<R: Rng>(rng: &mut R, p: usize, lo: f64, hi: f64) -> Field {
    Field::from_vec(p, 1.0 / p as f64, (0..p * p).map(|_| rng.random_range(lo..hi)).collect())
        .expect("valid grid")
}

fn pde_spec(pde: PdeKind, alpha: f64, b: [f64; 2], dx: f64) -> CliResult<PdeSpec> {
    Ok(match pde {
        PdeKind::Advection => advection_spec(b[0], b[1], dx)?,
        PdeKind::Heat => heat_spec(alpha, dx)?,
        PdeKind::Fisher => fisher_spec(alpha, dx)?,
    })
}

pub fn verify(a: VerifyArgs) -> CliResult<()> {
    let a = resolve(&a, &a.config, "verify")?;
    let theorem = required(a.theorem, "theorem")?;
    let pde = a.pde.unwrap_or(VerifyPde::Heat);
    let quadratic = theorem == TheoremArg::Quadratic;
    let trials = a.trials.unwrap_or(if quadratic { 100 } else { 200 });
    let tol = a.tol.unwrap_or(if quadratic { 1e-10 } else { 1e-12 });
    let p = a.p.unwrap_or(32);
    let dx = 1.0 / p as f64;
    let ksize = a.ksize.unwrap_or(5);
    let alpha = a.alpha.unwrap_or(0.01);
    let b = velocity(a.b)?;
    let activation = match theorem {
        TheoremArg::Linear => Activation::Relu,
        TheoremArg::Leaky => Activation::leaky(a.slope.unwrap_or(0.3))?,
        TheoremArg::Quadratic => Activation::Relu2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed.unwrap_or(0));
    let fixed = match pde {
        VerifyPde::Advection => Some(pde_spec(PdeKind::Advection, alpha, b, dx)?),
        VerifyPde::Heat => Some(pde_spec(PdeKind::Heat, alpha, b, dx)?),
        VerifyPde::Fisher => Some(pde_spec(PdeKind::Fisher, alpha, b, dx)?),
        VerifyPde::Random => None,
    };
    if let Some(spec) = &fixed {
        if !quadratic && spec.num_interactions() > 0 {
            return Err(Failure::config(
                "the linear construction only represents PDEs without quadratic terms; use --theorem 1",
            ));
        }
    }

    let mut worst = (0.0f64, 0usize);
    for trial in 0..trials {
        let spec = match &fixed {
            Some(s) => s.clone(),
            None => {
                let linear = random_stencil(&mut rng, 1.0 / (dx * dx));
                let n_terms = if quadratic { a.interactions.unwrap_or(1 + trial % 3) } else { 0 };
                let interactions = (0..n_terms)
                    .map(|_| Interaction {
                        beta: rng.random_range(-1.0..1.0),
                        d_a: random_stencil(&mut rng, 1.0 / dx),
                        d_b: random_stencil(&mut rng, 1.0 / dx),
                    })
                    .collect();
                PdeSpec {
                    linear,
                    interactions,
                    dx,
                }
            }
        };
        let theta = if quadratic {
            construct_quadratic(&spec, ksize)?
        } else {
            construct_linear(&spec.linear, ksize, activation)?
        };
        let u = if quadratic {
            random_field(&mut rng, p, 0.0, 2.0)
        } else {
            random_field(&mut rng, p, -1.0, 1.0)
        };
        let exact = pixelpde_core::stencils::eval_rhs(&spec, &u);
        let dev = theta.eval(&u).sub(&exact).max_abs() / (1.0 + exact.max_abs());
        if dev > worst.0 || trial == 0 {
            worst = (dev, trial);
        }
    }
    println!("max deviation: {:e} (trial {} of {trials})", worst.0, worst.1);
    if !(worst.0 <= tol) {
        return Err(Failure::new(
            EXIT_TOLERANCE,
            format!("tolerance breach: max deviation {:e} > {:e} at trial {}", worst.0, tol, worst.1),
        ));
    }
    Ok(())
}

/// Least-squares slope of `ln err` against `ln dt`.
pub fn fitted_order(dts: &[f64], errs: &[f64]) -> Option<f64> {
    if dts.len() < 2 || errs.iter().any(|&e| !(e > 0.0)) {
        return None;
    }
    let xs: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

pub fn diagnose(a: DiagnoseArgs) -> CliResult<()> {
    let a = resolve(&a, &a.config, "diagnose")?;
    let pde: PdeKind = a.pde.unwrap_or(PdeArg::Heat).into();
    let p = a.p.unwrap_or(32);
    let dx = 1.0 / p as f64;
    let spec = pde_spec(pde, a.alpha.unwrap_or(0.01), velocity(a.b)?, dx)?;
    let ksize = a.ksize.unwrap_or(5);
    let theta = match &a.checkpoint {
        Some(path) => open_checkpoint(path)?,
        None if spec.num_interactions() == 0 => construct_linear(&spec.linear, ksize, Activation::Relu)?,
        None => construct_quadratic(&spec, ksize)?,
    };
    let u0 = match a.ic.unwrap_or(IcArg::Mode) {
        IcArg::Mode => {
            let mode = |x: f64, y: f64| (2.0 * PI * x).sin() * (2.0 * PI * y).sin();
            match pde {
                PdeKind::Advection => Field::sample(p, |x, y| 1.0 + mode(x, y))?,
                PdeKind::Heat => Field::sample(p, mode)?,
                PdeKind::Fisher => Field::sample(p, |x, y| 0.5 + 0.25 * mode(x, y))?,
            }
        }
        IcArg::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed.unwrap_or(0));
            match pde {
                PdeKind::Advection => random_ic_advection(p, &mut rng)?,
                _ => random_ic_heat(p, &mut rng)?,
            }
        }
    };
    let dts = a.dt_sweep.unwrap_or_else(|| vec![0.08, 0.04, 0.02, 0.01]);
    if dts.is_empty() {
        return Err(Failure::config("--dt-sweep needs at least one value"));
    }
    let substeps = a.substeps.unwrap_or(1);
    let scheme: Scheme = a.scheme.unwrap_or(SchemeArg::Euler).into();
    let proxy = a.proxy_steps.unwrap_or(200);
    let mut csv = String::from("dt,flow_error,vf_mismatch,lipschitz_estimate\n");
    let mut errs = Vec::with_capacity(dts.len());
    for &dt in &dts {
        let cfg = StepperConfig::new(dt, substeps, scheme)?;
        let r = local_error_diagnostic(&spec, &theta, &cfg, &u0, proxy)?;
        csv.push_str(&format!(
            "{:e},{:e},{:e},{:e}\n",
            r.dt, r.flow_error, r.vf_mismatch_sup, r.lipschitz_estimate
        ));
        errs.push(r.flow_error);
    }
    let order = fitted_order(&dts, &errs).map_or(String::new(), |o| format!("{o:.4}"));
    match a.out_csv {
        Some(path) => {
            write_output(&path, &csv)?;
            println!("order: {order}");
        }
        None => {
            print!("{csv}");
            eprintln!("order: {order}");
        }
    }
    Ok(())
}

pub fn study_advection(a: StudyArgs) -> CliResult<()> {
    let a = resolve(&a, &a.config, "study")?;
    let train = open_dataset(&required(a.data, "data")?)?;
    let test = open_dataset(&required(a.test_data, "test-data")?)?;
    let out_dir = required(a.out_dir, "out-dir")?;
    let d = StudyOptions::default();
    let opts = StudyOptions {
        epochs: a.epochs.unwrap_or(d.epochs),
        seed: a.seed.unwrap_or(d.seed),
        channels: a.channels.unwrap_or(d.channels),
        ksize: a.ksize.unwrap_or(d.ksize),
        substeps: a.substeps.unwrap_or(d.substeps),
        noise_eps: a.noise_eps.unwrap_or(d.noise_eps),
        horizon: a.horizon.unwrap_or(d.horizon),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
    };
    if opts.horizon == 0 || opts.horizon > test.m() {
        return Err(Failure::config(format!(
            "horizon {} must be between 1 and the test set's M = {}",
            opts.horizon,
            test.m()
        )));
    }
    fs::create_dir_all(&out_dir).map_err(|e| Failure::new(crate::EXIT_IO, format!("{}: {e}", out_dir.display())))?;
    let report = run_advection_study(&train, &test, &opts)?;
    for v in &report.variants {
        let stem = v.name.replace('+', "_");
        v.theta.save(out_dir.join(format!("{stem}.json")))?;
        write_output(&out_dir.join(format!("{stem}_history.csv")), &history_csv(&v.history))?;
        if let Some(m) = &v.metrics {
            write_output(&out_dir.join(format!("{stem}_metrics.csv")), &m.to_csv())?;
        }
    }
    write_output(&out_dir.join("summary.csv"), &report.summary_csv())?;
    print!("{}", report.summary_csv());
    println!("projected <= noise: {}", report.projected_vs_noise);
    println!("noise <= plain: {}", report.noise_vs_plain);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_fit() {
        let dts = [0.1, 0.05, 0.025];
        let errs: Vec<f64> = dts.iter().map(|d| 3.0 * d * d).collect();
        assert!((fitted_order(&dts, &errs).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(fitted_order(&dts[..1], &errs[..1]), None);
        assert_eq!(fitted_order(&dts, &[0.0, 1.0, 2.0]), None);
    }
}

//! `evaprank` command-line tool.
//!
//! Exit status: 0 on success, 1 when inputs fail validation, 2 when a
//! numerical method does not converge.

mod args;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::Parser;

use evaprank_core::fit::{fit, FitOptions, FitProblem, NModel};
use evaprank_core::pareto::{pareto_check, pareto_rates, rank_trajectory, ExponentBranch};
use evaprank_core::simulate::{run, track_with_events, write_event_log, InitialOrder, SimConfig};
use evaprank_core::solution::{
    admissible_points, verify_conservation, verify_generator_ode, verify_pde_residual, VerifyReport,
};
use evaprank_core::{io as data, InitialProfile, ParetoParams, RateMixture, SolutionField};

use args::{
    BRange, Cli, Command, EvaluateArgs, FitArgs, FrontArgs, MissingJump, OrderArg, ParetoArgs,
    SimulateArgs, VerifyArgs,
};

/// Raised when a fit stops without meeting its convergence test.
#[derive(Debug)]
struct NotConverged;

impl std::fmt::Display for NotConverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("fit did not converge within the iteration cap")
    }
}

impl std::error::Error for NotConverged {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<NotConverged>() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<evaprank_core::Error>() {
            return if core.is_numerical() { 2 } else { 1 };
        }
    }
    1
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Evaluate(a) => evaluate(a),
        Command::Front(a) => front(a),
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit_command(a),
        Command::Verify(a) => verify(a),
        Command::ParetoCheck(a) => pareto(a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_field(mixture: &Path, profile: Option<&PathBuf>) -> Result<SolutionField> {
    let m: RateMixture = data::read_json(mixture)?;
    Ok(match profile {
        Some(p) => SolutionField::new(m, data::read_json::<InitialProfile>(p)?)?,
        None => SolutionField::uniform(m),
    })
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let field = load_field(&args.mixture, args.profile.as_ref())?;
    let k = field.mixture().len();
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    let mut header = vec!["y".to_string(), "t".into(), "branch".into(), "v".into()];
    header.extend((0..k).map(|i| format!("u{i}")));
    w.write_record(&header)?;
    for &t in &args.ts {
        for &y in &args.ys {
            let s = field.sample_state(y, t)?;
            let mut row = vec![y.to_string(), t.to_string(), s.branch.to_string(), s.v.to_string()];
            row.extend(s.u.iter().map(|u| u.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn time_grid(t_max: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        bail!(evaprank_core::Error::InvalidInput(format!("--dt {dt} must be positive")));
    }
    if !(t_max >= 0.0 && t_max.is_finite()) {
        bail!(evaprank_core::Error::InvalidInput(format!("--t-max {t_max} must be >= 0")));
    }
    let steps = (t_max / dt * (1.0 + 1e-12)).floor() as usize;
    Ok((0..=steps).map(|k| k as f64 * dt).collect())
}

fn pareto_params(n: f64, a: f64, b: f64) -> Result<ParetoParams> {
    Ok(ParetoParams::new(n, a, b)?)
}

fn front(args: FrontArgs) -> Result<()> {
    let grid = time_grid(args.t_max, args.dt)?;
    let mut w = csv::Writer::from_writer(output(args.out.as_deref())?);
    match (&args.mixture, args.n, args.a, args.b) {
        (Some(path), ..) => {
            let m: RateMixture = data::read_json(path)?;
            w.write_record(["t", "y_c"])?;
            for t in grid {
                w.write_record([t.to_string(), m.front_position(t)?.to_string()])?;
            }
        }
        (None, Some(n), Some(a), Some(b)) => {
            let p = pareto_params(n, a, b)?;
            w.write_record(["t", "x_c"])?;
            for t in grid {
                w.write_record([t.to_string(), rank_trajectory(&p, t)?.to_string()])?;
            }
        }
        _ => bail!(evaprank_core::Error::InvalidInput(
            "give either --mixture or all of --N, --a, --b".into()
        )),
    }
    w.flush()?;
    Ok(())
}

fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| evaprank_core::Error::Data {
            path: path.display().to_string(),
            line: i as u64 + 1,
            msg: format!("'{line}' is not a number"),
        })?;
        out.push(v);
    }
    Ok(out)
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let rates: Vec<f64> = match (&args.rates, args.n, args.a, args.b) {
        (Some(path), ..) => read_numbers(path)?,
        (None, Some(n), Some(a), Some(b)) => pareto_rates(&pareto_params(n, a, b)?)?.rates().collect(),
        _ => bail!(evaprank_core::Error::InvalidInput(
            "give either --rates or all of --N, --a, --b".into()
        )),
    };
    let config = SimConfig {
        horizon: args.horizon,
        seed: args.seed,
        replica: args.replica,
        order: match args.order {
            OrderArg::UniformRandom => InitialOrder::UniformRandom,
            OrderArg::ByRate => InitialOrder::ByRate,
        },
    };
    let (events, tracked) = if args.track.is_empty() {
        (run(&rates, &config)?.events, Vec::new())
    } else {
        let (tracked, events) = track_with_events(&rates, &config, args.interval, &args.track)?;
        (events, tracked)
    };
    if args.events.is_some() || args.trajectories.is_none() {
        let mut out = output(args.events.as_deref())?;
        write_event_log(&mut out, &events, &config)?;
        out.flush()?;
    }
    if let Some(path) = &args.trajectories {
        let trajectories: Vec<_> = tracked.iter().flat_map(|t| t.to_trajectories()).collect();
        let mut out = output(Some(path))?;
        data::write_trajectories(&mut out, &trajectories)?;
        out.flush()?;
    }
    eprintln!(
        "simulated {} particles to T = {}: {} events",
        rates.len(),
        args.horizon,
        events.len()
    );
    Ok(())
}

fn parse_mask(spec: &str) -> Result<(f64, f64)> {
    let invalid = || evaprank_core::Error::InvalidInput(format!("--mask '{spec}' must be LO:HI"));
    let (lo, hi) = spec.split_once(':').ok_or_else(invalid)?;
    let lo: f64 = lo.trim().parse().map_err(|_| invalid())?;
    let hi: f64 = hi.trim().parse().map_err(|_| invalid())?;
    Ok((lo, hi))
}

fn fit_command(args: FitArgs) -> Result<()> {
    let mut trajectories = data::read_trajectories(&args.data)?;
    for tr in trajectories.iter_mut().filter(|t| t.jump.is_none()) {
        match args.missing_jump {
            MissingJump::Error => {}
            MissingJump::Zero => tr.jump = Some(0.0),
            MissingJump::Unknown => tr.offset_unknown = true,
        }
    }
    let weights = match &args.weights {
        None => None,
        Some(path) => {
            let flat = read_numbers(path)?;
            let total: usize = trajectories.iter().map(|t| t.observations.len()).sum();
            if flat.len() != total {
                bail!(evaprank_core::Error::InvalidInput(format!(
                    "{} weights for {total} observations",
                    flat.len()
                )));
            }
            let mut rest = flat.as_slice();
            let mut per = Vec::new();
            for t in &trajectories {
                let (head, tail) = rest.split_at(t.observations.len());
                per.push(head.to_vec());
                rest = tail;
            }
            Some(per)
        }
    };
    let options = FitOptions {
        a_guess: args.a_guess,
        b_guess: args.b_guess,
        b_branch: match args.b_range {
            BRange::Below1 => ExponentBranch::Below1,
            BRange::Between1And2 => ExponentBranch::Between1And2,
        },
        weights,
        mask: args.mask.iter().map(|m| parse_mask(m)).collect::<Result<_>>()?,
        max_iterations: args.max_iterations,
        multistart: !args.single_start,
    };
    let model = match args.fix_n {
        Some(n) => NModel::Fixed(n),
        None => NModel::Free { guess: args.n_guess },
    };
    let problem = FitProblem::new(trajectories, model, options)?;
    let result = fit(&problem)?;

    let mut out = output(args.out.as_deref())?;
    data::write_json(&mut out, &result)?;
    out.flush()?;
    if let Some(path) = &args.residuals {
        let mut w = csv::Writer::from_writer(output(Some(path))?);
        w.write_record(["label", "t", "residual"])?;
        let points = problem
            .trajectories()
            .iter()
            .flat_map(|t| t.times().map(move |s| (t.label.as_str(), s)));
        for ((label, t), r) in points.zip(&result.residuals) {
            w.write_record([label.to_string(), t.to_string(), r.to_string()])?;
        }
        w.flush()?;
    }
    eprintln!(
        "n_d = {}, parameters = {}, iterations = {}",
        result.n_d, result.n_params, result.iterations
    );
    if !result.converged {
        return Err(NotConverged.into());
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<()> {
    let field = load_field(&args.mixture, args.profile.as_ref())?;
    let ys: Vec<f64> = (1..=args.ny).map(|i| i as f64 / (args.ny + 1) as f64).collect();
    let points = admissible_points(&field, &ys, &args.ts, args.h);
    if points.is_empty() {
        bail!(evaprank_core::Error::InvalidInput(
            "no grid point is far enough from the front and breakpoint images".into()
        ));
    }
    let residual = verify_pde_residual(&field, &points, args.h)?;
    let mut conservation = vec![0.0f64; field.mixture().len()];
    for &t in &args.ts {
        for (c, d) in conservation.iter_mut().zip(verify_conservation(&field, t, args.quad_tol)?) {
            *c = c.max(d);
        }
    }
    let report = VerifyReport {
        residual_max: residual.max,
        conservation,
        generator_deviation: verify_generator_ode(field.mixture(), args.horizon, args.ode_tol)?,
    };
    let mut out = output(args.out.as_deref())?;
    data::write_json(&mut out, &report)?;
    out.flush()?;
    Ok(())
}

fn pareto(args: ParetoArgs) -> Result<()> {
    let report = pareto_check(&pareto_params(args.n, args.a, args.b)?)?;
    let mut out = output(None)?;
    data::write_json(&mut out, &report)?;
    out.flush()?;
    Ok(())
}

//! Acceptance suite. Runs every criterion in sequence (timings are part of
//! several criteria, so nothing runs concurrently) and prints one line each.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use evaprank_core::fit::fit;
use evaprank_core::mixture::lagrangian_inverse;
use evaprank_core::pareto::{
    pareto_rates, rank_trajectory, relative_front_pareto, relative_front_pareto_unintegrated,
    short_time_coefficient, time_to_reach,
};
use evaprank_core::simulate::{
    empirical_front, relative_curves, replica_rng, track_ensemble, track_with_events, SimConfig,
};
use evaprank_core::solution::{
    admissible_points, generator_apply, verify_conservation, verify_generator_ode,
    verify_pde_residual,
};
use evaprank_core::special::upper_incomplete_gamma;
use evaprank_core::{
    quadrature, Branch, Component, FitOptions, FitProblem, InitialOrder, InitialProfile, NModel,
    Observation, ParetoParams, RankingState, RateMixture, SolutionField, Trajectory,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------

fn example_one() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let f = rng.random_range(0.01..10.0);
        let t = rng.random_range(0.0..10.0);
        let field = SolutionField::uniform(RateMixture::from_pairs(&[(f, 1.0)]).map_err(err)?);
        let front = field.front_position(t).map_err(err)?;
        worst = worst.max((front - (-(-f * t).exp_m1())).abs());
        let y = rng.random_range(0.001..0.999);
        let u = field.density(y, t).map_err(err)?;
        worst = worst.max((u[0] - 1.0).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e}"))
}

fn example_two() -> Outcome {
    let (rho1, f1) = (0.6, 1.3);
    let rho2 = 1.0 - rho1;
    let field = SolutionField::uniform(
        RateMixture::new(vec![Component::new(f1, rho1), Component::new(0.0, rho2)]).map_err(err)?,
    );
    let mut worst: f64 = 0.0;
    let mut seen = [0usize; 2];
    let mut note = |got: f64, want: f64, scale: f64| {
        worst = worst.max((got - want).abs() / scale.max(1.0));
    };
    for j in 0..50 {
        let t = 0.1 * (j + 1) as f64;
        let decay = (-f1 * t).exp();
        let front = rho1 * (1.0 - decay);
        note(field.front_position(t).map_err(err)?, front, 1.0);
        for i in 0..50 {
            let y = (i as f64 + 0.5) / 50.0;
            if (y - front).abs() < 1e-9 {
                continue;
            }
            let s = field.sample_state(y, t).map_err(err)?;
            if y < front {
                seen[0] += 1;
                let t0 = -(1.0 - y / rho1).ln() / f1;
                note(field.mixture().front_inverse(y).map_err(err)?, t0, t0);
                ensure(s.branch == Branch::Stationary, || format!("branch at ({y}, {t})"))?;
                note(s.v, f1 * (rho1 - y), 1.0);
                note(s.u[0], 1.0, 1.0);
                note(s.u[1], 0.0, 1.0);
            } else {
                seen[1] += 1;
                let d = rho1 * decay + rho2;
                ensure(s.branch == Branch::Wave, || format!("branch at ({y}, {t})"))?;
                let yhat = lagrangian_inverse(field.profile(), field.mixture(), y, t).map_err(err)?;
                note(yhat, 1.0 - (1.0 - y) / d, 1.0);
                note(s.v, (1.0 - y) * f1 * rho1 * decay / d, 1.0);
                note(s.u[0], rho1 * decay / d, 1.0);
                note(s.u[1], rho2 / d, 1.0);
            }
        }
    }
    ensure(seen[0] > 0 && seen[1] > 0, || format!("branch coverage {seen:?}"))?;
    ensure(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!(
        "max deviation {worst:.1e} ({} stationary, {} wave points)",
        seen[0], seen[1]
    ))
}

/// Three components, one smooth cubic cell.
fn smooth_field() -> SolutionField {
    let cells = vec![vec![
        [0.2, 0.3, -0.1, 0.0],
        [0.5, -0.2, 0.0, 0.05],
        [0.3, -0.1, 0.1, -0.05],
    ]];
    let profile = InitialProfile::new(vec![0.0, 1.0], cells).unwrap();
    let rates = [0.5, 1.5, 3.0];
    let components = rates
        .iter()
        .enumerate()
        .map(|(i, &f)| Component::new(f, profile.total(i)))
        .collect();
    let mixture = RateMixture::new(components).unwrap();
    SolutionField::new(mixture, profile).unwrap()
}

fn residual_convergence() -> Outcome {
    let field = smooth_field();
    let steps = [1e-3, 5e-4, 2.5e-4];
    let ys: Vec<f64> = (1..200).map(|i| i as f64 / 200.0).collect();
    let ts = [0.2, 0.5, 1.0, 2.0];
    let candidates = admissible_points(&field, &ys, &ts, steps[0]);
    let mut report = Vec::new();
    for branch in [Branch::Stationary, Branch::Wave] {
        let points: Vec<(f64, f64)> = candidates
            .iter()
            .copied()
            .filter(|&(y, t)| field.branch(y, t).unwrap() == branch)
            .take(100)
            .collect();
        ensure(points.len() == 100, || format!("{branch}: only {} points", points.len()))?;
        let maxima: Vec<f64> = steps
            .iter()
            .map(|&h| verify_pde_residual(&field, &points, h).map(|r| r.max))
            .collect::<Result<_, _>>()
            .map_err(err)?;
        let ratios = [maxima[1] / maxima[0], maxima[2] / maxima[1]];
        ensure(ratios.iter().all(|&r| r <= 0.3), || {
            format!("{branch}: residuals {maxima:?}, ratios {ratios:.3?}")
        })?;
        report.push(format!("{branch} ratios {:.3}/{:.3}", ratios[0], ratios[1]));
    }
    Ok(format!("200 points; {}", report.join(", ")))
}

fn conservation() -> Outcome {
    let field = smooth_field();
    let mut worst: f64 = 0.0;
    for t in [0.1, 1.0, 10.0] {
        for d in verify_conservation(&field, t, 1e-12).map_err(err)? {
            worst = worst.max(d);
        }
    }
    ensure(worst <= 1e-8, || format!("max mass defect {worst:e}"))?;
    Ok(format!("max mass defect {worst:.1e}"))
}

fn generator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut algebraic, mut ode): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let k = rng.random_range(2..=6);
        let components = (0..k)
            .map(|_| Component::new(rng.random_range(0.1..5.0), rng.random_range(0.05..1.0)))
            .collect();
        let m = RateMixture::normalized(components).map_err(err)?;
        let rho: Vec<f64> = m.fractions().collect();
        let scale = m.rates().fold(0.0f64, f64::max);
        for x in generator_apply(&m, &rho) {
            algebraic = algebraic.max(x.abs() / scale);
        }
        ode = ode.max(verify_generator_ode(&m, 10.0, 1e-10).map_err(err)?);
    }
    ensure(algebraic <= 1e-14, || format!("|Aρ| = {algebraic:e}"))?;
    ensure(ode <= 1e-9, || format!("ODE deviation {ode:e}"))?;
    Ok(format!("|Aρ|/max f {algebraic:.1e}, ODE deviation {ode:.1e}"))
}

/// `Γ(z, p)` by quadrature of `∫ exp(−e^s + z s) ds` over `s ≥ ln p`.
fn gamma_oracle(z: f64, p: f64) -> f64 {
    quadrature::integrate(|s| (z * s - s.exp()).exp(), p.ln(), 800f64.ln(), 0.0, 1e-14)
        .unwrap()
        .value
}

fn gamma_identities() -> Outcome {
    let (mut recurrence, mut oracle): (f64, f64) = (0.0, 0.0);
    let ps: Vec<f64> = (0..=60)
        .map(|k| (1e-6f64.ln() + (50f64.ln() - 1e-6f64.ln()) * k as f64 / 60.0).exp())
        .collect();
    for k in -9..=9 {
        let z = k as f64 / 10.0;
        for &p in &ps {
            let g = upper_incomplete_gamma(z, p).map_err(err)?;
            let next = upper_incomplete_gamma(z + 1.0, p).map_err(err)?;
            let rhs = z * g + p.powf(z) * (-p).exp();
            recurrence = recurrence.max((next - rhs).abs() / next.abs());
            let q = gamma_oracle(z, p);
            oracle = oracle.max((g - q).abs() / q.abs());
        }
    }
    ensure(recurrence <= 1e-10, || format!("recurrence {recurrence:e}"))?;
    ensure(oracle <= 1e-10, || format!("quadrature {oracle:e}"))?;
    Ok(format!("recurrence {recurrence:.1e}, quadrature {oracle:.1e}"))
}

fn partial_integration() -> Outcome {
    let mut worst: f64 = 0.0;
    for &b in &[0.1, 0.25, 0.4, 0.5, 0.6145, 0.75, 0.9, 0.95] {
        for &a in &[1.0, 3.3425e-4] {
            let params = ParetoParams::new(795.0, a, b).map_err(err)?;
            for k in 0..=50 {
                let p = (1e-6f64.ln() + (10f64.ln() - 1e-6f64.ln()) * k as f64 / 50.0).exp();
                let t = p / a;
                let x = relative_front_pareto(&params, t).map_err(err)?;
                let y = relative_front_pareto_unintegrated(&params, t).map_err(err)?;
                worst = worst.max((x - y).abs() / x.abs());
            }
        }
    }
    ensure(worst <= 1e-9, || format!("max relative difference {worst:e}"))?;
    Ok(format!("max relative difference {worst:.1e}"))
}

fn discrete_gap() -> Outcome {
    let params = ParetoParams::new(1e5, 3.3425e-4, 0.6145).map_err(err)?;
    let mixture = pareto_rates(&params).map_err(err)?;
    let t_end = time_to_reach(&params, 0.99).map_err(err)?;
    let t_start = 1e-6 / params.a;
    let mut worst: f64 = 0.0;
    let mut at = 0.0;
    for k in 0..=300 {
        let t = (t_start.ln() + (t_end.ln() - t_start.ln()) * k as f64 / 300.0).exp();
        let gap = params.n
            * (relative_front_pareto(&params, t).map_err(err)? - mixture.front_position(t).map_err(err)?)
                .abs();
        if gap > worst {
            (worst, at) = (gap, t);
        }
    }
    // Direct sum over the rates as an independent check at the end point.
    let direct = 1.0
        - (1..=100_000)
            .map(|i| (-params.a * (params.n / i as f64).powf(1.0 / params.b) * t_end).exp())
            .sum::<f64>()
            / params.n;
    let library = mixture.front_position(t_end).map_err(err)?;
    ensure((direct - library).abs() * params.n < 1e-6, || {
        format!("discrete front {library} vs direct sum {direct}")
    })?;
    ensure(worst <= 1.0, || format!("gap {worst:.3} ranks at t = {at:.4e}"))?;
    Ok(format!("max gap {worst:.3} ranks at t = {at:.3e} h (y = 0.99 at {t_end:.0} h)"))
}

fn short_time() -> Outcome {
    let cases = [
        (795.0, 3.3425e-4, 0.6145, 2.303891257083911),
        (8.57e5, 3.939e-4, 0.6312, 2.4116404785311425),
    ];
    let mut worst: f64 = 0.0;
    for (n, a, b, gamma_1mb) in cases {
        let params = ParetoParams::new(n, a, b).map_err(err)?;
        let c = n * a.powf(b) * gamma_1mb;
        let library = short_time_coefficient(&params).map_err(err)?;
        ensure((library / c - 1.0).abs() < 1e-12, || format!("coefficient {library} vs {c}"))?;
        let t = 1e-6 / a;
        let ratio = (rank_trajectory(&params, t).map_err(err)? - 1.0) / t.powf(b);
        worst = worst.max((ratio / c - 1.0).abs());
    }
    ensure(worst <= 0.01, || format!("relative deviation {worst:e}"))?;
    Ok(format!("relative deviation {:.3}%", 100.0 * worst))
}

fn simulator_limit() -> Outcome {
    const N: usize = 10_000;
    let params = ParetoParams::new(N as f64, 3.3425e-4, 0.6145).map_err(err)?;
    let mixture = pareto_rates(&params).map_err(err)?;
    let rates: Vec<f64> = mixture.rates().collect();
    let (horizon, window, interval) = (1000.0, 500.0, 10.0);
    let points = (window / interval) as usize + 1;
    let tracked: Vec<usize> = (0..N).filter(|&i| rates[i] < 2.0 / window).collect();
    let config = SimConfig::new(horizon, 2024);
    let runs = track_ensemble(&rates, &config, interval, &tracked, 20).map_err(err)?;
    let curves: Vec<Vec<(f64, f64)>> = runs
        .iter()
        .flat_map(|run| relative_curves(run, N, points))
        .map(|mut c| {
            c.truncate(points);
            c
        })
        .collect();
    let front = empirical_front(&curves).map_err(err)?;
    let mut sup: f64 = 0.0;
    for (&t, &m) in front.t.iter().zip(&front.mean) {
        sup = sup.max((m - mixture.front_position(t).map_err(err)?).abs());
    }
    ensure(sup <= 0.05, || format!("sup distance {sup:.4}"))?;
    Ok(format!(
        "sup distance {sup:.4} over {window} h from {} jump segments in 20 replicas",
        curves.len()
    ))
}

fn synthetic(params: &ParetoParams, threads: usize, per: usize, sigma: f64, seed: u64) -> Vec<Trajectory> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).unwrap();
    (0..threads)
        .map(|k| {
            let jump = 10.0 * k as f64;
            let observations = (0..per)
                .map(|i| {
                    let s = 3000.0 * (i as f64 + 0.5 + 0.1 * k as f64) / per as f64;
                    let x = rank_trajectory(params, s).unwrap() + normal.sample(&mut rng);
                    Observation { t: jump + s, rank: x.max(1.0) }
                })
                .collect();
            Trajectory {
                label: format!("thread{k}"),
                observations,
                jump: Some(jump),
                offset_unknown: false,
            }
        })
        .collect()
}

fn fit_recovery() -> Outcome {
    let truth = ParetoParams::new(795.0, 3.3425e-4, 0.6145).map_err(err)?;
    let sigma = 0.01 * truth.n;
    let mut data = synthetic(&truth, 12, 10, sigma, 17);
    for t in data.iter_mut().skip(9) {
        t.observations.pop();
    }
    let problem = FitProblem::new(data, NModel::Fixed(truth.n), FitOptions::default()).map_err(err)?;
    ensure(problem.n_data() == 117, || format!("n_d = {}", problem.n_data()))?;
    let r = fit(&problem).map_err(err)?;
    let (da, db) = (r.a / truth.a - 1.0, r.b / truth.b - 1.0);
    ensure(r.converged && da.abs() <= 0.05 && db.abs() <= 0.05, || {
        format!("fixed N: a {:.4e}, b {:.4}, converged {}", r.a, r.b, r.converged)
    })?;
    ensure(r.rms >= 0.5 * sigma && r.rms <= 2.0 * sigma, || format!("rms {:.3} vs σ {sigma}", r.rms))?;

    let truth = ParetoParams::new(8.57e5, 3.939e-4, 0.6312).map_err(err)?;
    let tau = 6.5;
    let normal = Normal::new(0.0, 0.001 * truth.n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let observations = (0..77)
        .map(|i| {
            let t = 10.0 + 1890.0 * i as f64 / 76.0;
            let x = rank_trajectory(&truth, t - tau).unwrap() + normal.sample(&mut rng);
            Observation { t, rank: x.round().max(1.0) }
        })
        .collect();
    let data = vec![Trajectory {
        label: "item".into(),
        observations,
        jump: None,
        offset_unknown: true,
    }];
    let problem = FitProblem::new(data, NModel::Free { guess: None }, FitOptions::default()).map_err(err)?;
    let q = fit(&problem).map_err(err)?;
    let rel = [q.a / truth.a - 1.0, q.b / truth.b - 1.0, q.n / truth.n - 1.0];
    ensure(q.converged && rel.iter().all(|d| d.abs() <= 0.05), || {
        format!("free N: relative errors {rel:.4?}, converged {}", q.converged)
    })?;
    Ok(format!(
        "fixed N: a {:+.2}%, b {:+.2}%, rms/σ {:.2}; free N: a {:+.2}%, b {:+.2}%, N {:+.2}%",
        100.0 * da,
        100.0 * db,
        r.rms / sigma,
        100.0 * rel[0],
        100.0 * rel[1],
        100.0 * rel[2]
    ))
}

/// Best of three timings of 10⁶ events on `n` unit-rate particles.
fn time_events(n: usize) -> Duration {
    let rates = vec![1.0; n];
    (0..3)
        .map(|r| {
            let mut rng = replica_rng(99, r);
            let mut state = RankingState::new(&rates, InitialOrder::UniformRandom, &mut rng).unwrap();
            let start = Instant::now();
            state.advance_events(&mut rng, 1_000_000);
            let elapsed = start.elapsed();
            assert!(state.check_permutation());
            elapsed
        })
        .min()
        .unwrap()
}

fn performance() -> Outcome {
    let large = time_events(100_000);
    let small = time_events(10_000);
    let ratio = large.as_secs_f64() / small.as_secs_f64();
    ensure(large.as_secs_f64() < 10.0, || format!("10^6 events on n = 10^5 took {large:.2?}"))?;
    ensure(ratio < 3.0, || format!("timing ratio {ratio:.2}"))?;
    Ok(format!(
        "10^6 events: n=10^5 {large:.2?}, n=10^4 {small:.2?}, ratio {ratio:.2}"
    ))
}

fn no_overtaking() -> Outcome {
    let params = ParetoParams::new(100.0, 0.01, 0.7).map_err(err)?;
    let rates: Vec<f64> = pareto_rates(&params).map_err(err)?.rates().collect();
    let particles: Vec<usize> = (0..100).step_by(9).collect();
    let mut comparisons = 0u64;
    for seed in 0..50 {
        let config = SimConfig::new(300.0, seed);
        let (tracked, events) = track_with_events(&rates, &config, 1.0, &particles).map_err(err)?;

        // Replay the tracked ranks through the event log.
        let mut rank: Vec<usize> = tracked.iter().map(|tr| tr.segments[0].samples[0].rank).collect();
        let mut last_jump: Vec<Option<f64>> = vec![None; particles.len()];
        let mut history: Vec<Vec<(f64, usize)>> = rank.iter().map(|&r| vec![(0.0, r)]).collect();
        for e in &events {
            for (k, &p) in particles.iter().enumerate() {
                if e.particle == p {
                    rank[k] = 1;
                    last_jump[k] = Some(e.t);
                } else if e.old_rank > rank[k] {
                    rank[k] += 1;
                } else {
                    continue;
                }
                history[k].push((e.t, rank[k]));
            }
            // Whoever jumped later is ahead.
            let mut order: Vec<usize> = (0..particles.len()).filter(|&k| last_jump[k].is_some()).collect();
            order.sort_by(|&x, &y| last_jump[y].unwrap().total_cmp(&last_jump[x].unwrap()));
            for w in order.windows(2) {
                comparisons += 1;
                ensure(rank[w[0]] < rank[w[1]], || {
                    format!("seed {seed}: particles {} and {} crossed at t = {}", particles[w[0]], particles[w[1]], e.t)
                })?;
            }
        }

        // The tracked samples follow the replay, and sampled pairs never cross.
        let rank_at = |k: usize, t: f64| {
            let h = &history[k];
            h[h.partition_point(|&(s, _)| s <= t) - 1].1
        };
        for (k, tr) in tracked.iter().enumerate() {
            for seg in &tr.segments {
                for s in &seg.samples {
                    let t = seg.start + s.t;
                    ensure(rank_at(k, t) == s.rank, || {
                        format!("seed {seed}: particle {} sampled rank {} at t = {t}", tr.particle, s.rank)
                    })?;
                }
            }
        }
        let jump_segments: Vec<(usize, f64, f64, &[_])> = tracked
            .iter()
            .enumerate()
            .flat_map(|(k, tr)| {
                let ends: Vec<f64> = tr.segments.iter().skip(1).map(|s| s.start).chain([config.horizon]).collect();
                tr.segments
                    .iter()
                    .zip(ends)
                    .filter(|(s, _)| s.from_jump)
                    .map(move |(s, end)| (k, s.start, end, s.samples.as_slice()))
            })
            .collect();
        for &(ka, ta, end_a, samples_a) in &jump_segments {
            for &(kb, tb, end_b, samples_b) in &jump_segments {
                if kb == ka || tb <= ta {
                    continue;
                }
                // B jumped after A: B's rank at τ_B ≤ τ_A is below A's at τ_A.
                for sa in samples_a {
                    let tau_a = ta + sa.t;
                    if tau_a < tb || tau_a >= end_b || tau_a >= end_a {
                        continue;
                    }
                    for sb in samples_b.iter().take_while(|s| tb + s.t <= tau_a) {
                        comparisons += 1;
                        ensure(sb.rank < sa.rank, || {
                            format!("seed {seed}: sampled trajectories of {} and {} cross", particles[kb], particles[ka])
                        })?;
                    }
                }
            }
        }
    }
    Ok(format!("50 runs, {comparisons} ordered comparisons"))
}

// ---------------------------------------------------------------------------

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<f64>,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "single-component oracle", budget: Some(1.0), run: example_one },
        Criterion { id: 2, name: "two-component oracle", budget: Some(5.0), run: example_two },
        Criterion { id: 3, name: "PDE residual convergence", budget: Some(30.0), run: residual_convergence },
        Criterion { id: 4, name: "conservation", budget: Some(10.0), run: conservation },
        Criterion { id: 5, name: "generator", budget: Some(5.0), run: generator },
        Criterion { id: 6, name: "incomplete gamma", budget: Some(10.0), run: gamma_identities },
        Criterion { id: 7, name: "partial integration", budget: Some(5.0), run: partial_integration },
        Criterion { id: 8, name: "discrete vs continuum", budget: Some(30.0), run: discrete_gap },
        Criterion { id: 9, name: "short-time law", budget: Some(1.0), run: short_time },
        Criterion { id: 10, name: "simulator limit", budget: Some(60.0), run: simulator_limit },
        Criterion { id: 11, name: "fit recovery", budget: Some(60.0), run: fit_recovery },
        Criterion { id: 12, name: "simulator performance", budget: None, run: performance },
        Criterion { id: 13, name: "no overtaking", budget: None, run: no_overtaking },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let secs = start.elapsed().as_secs_f64();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if secs >= b => Err(format!("took {secs:.2} s, budget {b} s")),
            (o, _) => o,
        };
        let timing = match c.budget {
            Some(b) => format!("{secs:.2} s / {b} s"),
            None => format!("{secs:.2} s"),
        };
        match outcome {
            Ok(detail) => println!("criterion {:2}: PASS  {} [{timing}]: {detail}", c.id, c.name),
            Err(detail) => {
                failed += 1;
                println!("criterion {:2}: FAIL  {} [{timing}]: {detail}", c.id, c.name);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

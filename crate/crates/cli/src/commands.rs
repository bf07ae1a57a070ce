use std::path::Path;

use anyhow::{bail, Context, Result};

use tvlearn_core::bilevel::{
    grid_search, log_grid, ngd_learn, DenoiseTask, LambdaObjective, NgdConfig, ReconTask,
};
use tvlearn_core::data::{add_noise, make_phantom, NoiseSpec, PhantomKind, PhantomSpec};
use tvlearn_core::field::uniform_angles;
use tvlearn_core::io::{
    export_png, read_image, read_sinogram, write_image, write_objective, write_sinogram, write_trace,
};
use tvlearn_core::linops::{adjoint_check, Diagonal, Gradient2d, Identity};
use tvlearn_core::solvers::{fista_reconstruct, DenoiseSolver, FistaInner, StepMode};
use tvlearn_core::unroll::{grad_lambda_denoise, grad_lambda_recon, memory_report, record_denoise};
use tvlearn_core::{
    DenoiseProblem, Image, LinearMap, Radon2d, ReconConfig, ReconProblem, Sinogram, Strategy,
    VectorSpace,
};

use crate::{
    AdjointcheckArgs, Command, DenoiseArgs, GradcheckArgs, InnerArg, Kind, LearnArgs,
    MemreportArgs, PhantomArgs, ReconstructArgs, SinogramArgs, SolverArg, StepModeArg,
    StrategyArg, SynthArgs, TaskArg,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    ToleranceViolated,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::ToleranceViolated
        }
    }
}

pub fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Phantom(a) => phantom(a),
        Command::Sinogram(a) => sinogram(a),
        Command::Denoise(a) => denoise(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Learn(a) => learn(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Memreport(a) => memreport(a),
        Command::Adjointcheck(a) => adjointcheck(a),
    }
}

fn phantom_kind(k: Kind) -> PhantomKind {
    match k {
        Kind::Disk => PhantomKind::Disk,
        Kind::Blocks => PhantomKind::Blocks,
        Kind::SheppLogan => PhantomKind::SheppLogan,
    }
}

fn strategy(s: StrategyArg) -> Strategy {
    match s {
        StrategyArg::Gp => Strategy::GpTape,
        StrategyArg::Cv => Strategy::CvTape,
        StrategyArg::Acv => Strategy::Acv,
        StrategyArg::Forward => Strategy::Forward,
    }
}

fn synth(s: &SynthArgs) -> Result<Image> {
    Ok(make_phantom(&PhantomSpec::square(phantom_kind(s.kind), s.size, s.phantom_seed))?)
}

fn noise(sigma: f64, seed: u64) -> Result<NoiseSpec> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        bail!("noise level must be finite and >= 0, got {sigma}");
    }
    Ok(NoiseSpec::gaussian(sigma, seed))
}

fn load_image(path: &Path) -> Result<Image> {
    read_image(path).with_context(|| format!("cannot read image {}", path.display()))
}

fn save_image(path: &Path, png: Option<&Path>, img: &Image) -> Result<()> {
    write_image(path, img).with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {} ({}x{})", path.display(), img.rows(), img.cols());
    if let Some(p) = png {
        export_png(p, img).with_context(|| format!("cannot write {}", p.display()))?;
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn save_objective(path: Option<&Path>, rows: &[(usize, f64)]) -> Result<()> {
    if let Some(p) = path {
        write_objective(p, rows).with_context(|| format!("cannot write {}", p.display()))?;
        println!("wrote {} ({} rows)", p.display(), rows.len());
    }
    Ok(())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn phantom(a: PhantomArgs) -> Result<Outcome> {
    let img = make_phantom(&PhantomSpec::square(phantom_kind(a.kind), a.size, a.seed))?;
    save_image(&a.out, a.png.as_deref(), &img)?;
    Ok(Outcome::Pass)
}

fn projector(rows: usize, cols: usize, angles: Vec<f64>, n_det: Option<usize>) -> Result<Radon2d> {
    Ok(match n_det {
        Some(n) => Radon2d::new(rows, cols, angles, n)?,
        None => Radon2d::with_default_detector(rows, cols, angles)?,
    })
}

fn n_angles(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        bail!("at least one projection angle is required");
    }
    Ok(uniform_angles(n))
}

fn sinogram(a: SinogramArgs) -> Result<Outcome> {
    let img = match &a.input {
        Some(p) => load_image(p)?,
        None => synth(&a.synth)?,
    };
    let spec = noise(a.sigma, a.seed)?;
    let op = projector(img.rows(), img.cols(), n_angles(a.angles)?, a.n_det)?;
    let s = add_noise(&op.apply(&img), &spec);
    write_sinogram(&a.out, &s).with_context(|| format!("cannot write {}", a.out.display()))?;
    println!("wrote {} ({} angles x {} bins)", a.out.display(), s.n_angles(), s.n_det());
    Ok(Outcome::Pass)
}

fn denoise(a: DenoiseArgs) -> Result<Outcome> {
    let noisy = match &a.input {
        Some(p) => load_image(p)?,
        None => add_noise(&synth(&a.synth)?, &noise(a.sigma, a.seed)?),
    };
    let p = DenoiseProblem::new(noisy, a.lambda)?;
    let solver = match a.solver {
        SolverArg::Gp => DenoiseSolver::Gp,
        SolverArg::Fgp => DenoiseSolver::Fgp,
        SolverArg::Cv => DenoiseSolver::Cv(match a.step_mode {
            StepModeArg::Gp => StepMode::Gp,
            StepModeArg::Cv => StepMode::Cv,
        }),
    };
    let mut objective = Vec::with_capacity(a.iters);
    let u = solver.run(&p, a.iters, |k, u| objective.push((k, p.objective(u))))?;
    println!("final objective {:.12e}", p.objective(&u));
    save_image(&a.out, a.png.as_deref(), &u)?;
    save_objective(a.objective_csv.as_deref(), &objective)?;
    Ok(Outcome::Pass)
}

fn simulate_sinogram(synth_args: &SynthArgs, angles: usize, rel_sigma: f64, seed: u64) -> Result<(Image, Sinogram)> {
    let clean = synth(synth_args)?;
    let op = projector(clean.rows(), clean.cols(), n_angles(angles)?, None)?;
    let s = op.apply(&clean);
    let sigma = rel_sigma * s.max_abs();
    Ok((clean, add_noise(&s, &noise(sigma, seed)?)))
}

fn load_sinogram(path: &Path) -> Result<Sinogram> {
    read_sinogram(path).with_context(|| format!("cannot read sinogram {}", path.display()))
}

fn recon_problem(s: Sinogram, size: usize, lambda: f64, power_seed: u64) -> Result<ReconProblem<Radon2d>> {
    let op = Radon2d::new(size, size, s.angles().to_vec(), s.n_det())?;
    Ok(ReconProblem::with_power_method(op, s, lambda, power_seed)?)
}

fn reconstruct(a: ReconstructArgs) -> Result<Outcome> {
    let (s, size) = match &a.input {
        Some(p) => {
            let Some(size) = a.image_size else {
                bail!("--image-size is required with --in");
            };
            (load_sinogram(p)?, size)
        }
        None => (simulate_sinogram(&a.synth, a.angles, a.rel_sigma, a.seed)?.1, a.synth.size),
    };
    let p = recon_problem(s, size, a.lambda, a.power_seed)?;
    let mut cfg = ReconConfig::new(a.outer, a.inner);
    cfg.warm_start = a.warm_start;
    cfg.inner = match a.inner_solver {
        InnerArg::Cv => FistaInner::Cv,
        InnerArg::Gp => FistaInner::Gp,
    };
    let mut objective = Vec::with_capacity(a.outer);
    let u = fista_reconstruct(&p, &cfg, |k, u| objective.push((k, p.objective(u))))?;
    println!("beta {:.6e}; final objective {:.12e}", p.beta, p.objective(&u));
    save_image(&a.out, a.png.as_deref(), &u)?;
    save_objective(a.objective_csv.as_deref(), &objective)?;
    Ok(Outcome::Pass)
}

fn learn(a: LearnArgs) -> Result<Outcome> {
    let strat = strategy(a.strategy);
    let ngd = NgdConfig {
        outer_iters: a.ngd_iters,
        ..Default::default()
    };
    match a.task {
        TaskArg::Denoise => {
            let (noisy, clean) = match (&a.noisy, &a.clean) {
                (Some(n), Some(c)) => (load_image(n)?, load_image(c)?),
                _ => {
                    let clean = synth(&a.synth)?;
                    (add_noise(&clean, &noise(a.sigma, a.seed)?), clean)
                }
            };
            let task = DenoiseTask::new(noisy, clean, a.iters, strat)?;
            learn_with(&task, |l| Ok(task.solve(l)?), &a, &ngd)
        }
        TaskArg::Reconstruct => {
            let (s, clean) = match (&a.noisy, &a.clean) {
                (Some(n), Some(c)) => (load_sinogram(n)?, load_image(c)?),
                _ => {
                    let (clean, s) = simulate_sinogram(&a.synth, a.angles, a.sigma, a.seed)?;
                    (s, clean)
                }
            };
            if clean.rows() != clean.cols() {
                bail!("reconstruction expects a square ground truth");
            }
            let template = recon_problem(s, clean.rows(), a.lambda0, 0)?;
            let task = ReconTask::new(template, clean, ReconConfig::new(a.outer, a.inner), strat)?;
            learn_with(&task, |l| Ok(task.solve(l)?), &a, &ngd)
        }
    }
}

fn learn_with<O: LambdaObjective>(
    task: &O,
    solve: impl Fn(f64) -> Result<Image>,
    a: &LearnArgs,
    ngd: &NgdConfig,
) -> Result<Outcome> {
    let (lambda_star, trace) = ngd_learn(task, a.lambda0, ngd)?;
    write_trace(&a.trace, &trace.rows()).with_context(|| format!("cannot write {}", a.trace.display()))?;
    println!(
        "lambda* {lambda_star:.8e} after {} iterations (converged: {})",
        trace.records.len(),
        trace.converged
    );
    println!("wrote {} ({} rows)", a.trace.display(), trace.records.len());
    save_image(&a.out, a.png.as_deref(), &solve(lambda_star)?)?;
    if a.grid == 0 {
        return Ok(Outcome::Pass);
    }
    let grid = log_grid(a.grid_min, a.grid_max, a.grid)?;
    let (best, losses) = grid_search(task, &grid)?;
    let cell = (grid[1] / grid[0]).log10();
    let cells = (lambda_star.log10() - grid[best].log10()).abs() / cell;
    println!(
        "grid minimiser {:.8e} (loss {:.8e}); learned weight is {cells:.3} cells away",
        grid[best], losses[best]
    );
    Ok(Outcome::from_pass(cells <= 1.0))
}

fn pairwise(grads: &[(Strategy, f64)]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, (_, a)) in grads.iter().enumerate() {
        for (_, b) in &grads[i + 1..] {
            worst = worst.max(rel(*a, *b));
        }
    }
    worst
}

fn central_difference(f: impl Fn(f64) -> Result<f64>, lambda: f64) -> Result<f64> {
    let h = 1e-5 * lambda;
    Ok((f(lambda + h)? - f(lambda - h)?) / (2.0 * h))
}

fn gradcheck(a: GradcheckArgs) -> Result<Outcome> {
    let mut grads = Vec::new();
    let mut fd_errs = Vec::new();
    match a.task {
        TaskArg::Denoise => {
            let clean = make_phantom(&PhantomSpec::square(PhantomKind::Blocks, a.size, a.seed))?;
            let noisy = add_noise(&clean, &NoiseSpec::gaussian(0.1, a.seed));
            let p = DenoiseProblem::new(noisy.clone(), a.lambda)?;
            for s in Strategy::ALL {
                let g = grad_lambda_denoise(&p, &clean, a.iters, s)?.grad;
                let task = DenoiseTask::new(noisy.clone(), clean.clone(), a.iters, s)?;
                let fd = central_difference(|l| Ok(task.value(l)?), a.lambda)?;
                grads.push((s, g));
                fd_errs.push(rel(g, fd));
            }
        }
        TaskArg::Reconstruct => {
            let synth_args = SynthArgs {
                kind: Kind::SheppLogan,
                size: a.size,
                phantom_seed: a.seed,
            };
            let (clean, s) = simulate_sinogram(&synth_args, 12, 0.02, a.seed)?;
            let p = recon_problem(s, a.size, a.lambda, 0)?;
            let cfg = ReconConfig::new(a.outer, a.inner);
            for st in Strategy::ALL {
                let g = grad_lambda_recon(&p, &clean, &cfg, st)?.grad;
                let task = ReconTask::new(p.clone(), clean.clone(), cfg, st)?;
                let fd = central_difference(|l| Ok(task.value(l)?), a.lambda)?;
                grads.push((st, g));
                fd_errs.push(rel(g, fd));
            }
        }
    }
    for ((s, g), e) in grads.iter().zip(&fd_errs) {
        println!("{:<8} grad {g:+.12e}  rel err vs FD {e:.2e}", s.to_string());
    }
    let worst_pair = pairwise(&grads);
    let worst_fd = fd_errs.iter().copied().fold(0.0, f64::max);
    println!("max pairwise strategy disagreement {worst_pair:.2e} (tol {:.0e})", a.tol);
    println!("max finite-difference error {worst_fd:.2e} (tol {:.0e})", a.fd_tol);
    Ok(Outcome::from_pass(worst_pair <= a.tol && worst_fd <= a.fd_tol))
}

fn memreport(a: MemreportArgs) -> Result<Outcome> {
    let clean = make_phantom(&PhantomSpec::square(PhantomKind::Blocks, a.size, 7))?;
    let p = DenoiseProblem::new(add_noise(&clean, &NoiseSpec::gaussian(0.1, 7)), a.lambda)?;
    let mut bytes = Vec::new();
    for s in Strategy::TAPED {
        let report = memory_report(&record_denoise(&p, a.iters, s)?)?;
        if a.detail {
            println!("{report}");
        }
        println!(
            "{:<4} bytes/iteration {:>10}  total {:>12}",
            s.to_string(),
            report.steady_iteration_bytes(),
            report.total_bytes
        );
        bytes.push(report.steady_iteration_bytes() as f64);
    }
    let (gp, cv, acv) = (bytes[0], bytes[1], bytes[2]);
    println!("ratio CV/GP  {:.3}", cv / gp);
    println!("ratio ACV/GP {:.3}", acv / gp);
    println!("ratio ACV/CV {:.3}", acv / cv);
    let ordered = acv < cv && cv < gp;
    println!("ordering ACV < CV < GP: {ordered}");
    Ok(Outcome::from_pass(ordered))
}

fn adjointcheck(a: AdjointcheckArgs) -> Result<Outcome> {
    if a.trials == 0 {
        bail!("at least one trial is required");
    }
    let n = a.size;
    let weights = make_phantom(&PhantomSpec::square(PhantomKind::Blocks, n, a.seed))?;
    let results = [
        ("grad/div", adjoint_check(&Gradient2d { rows: n, cols: n }, a.trials, a.seed)),
        (
            "radon/backproject",
            adjoint_check(&projector(n, n, n_angles(a.angles)?, None)?, a.trials, a.seed),
        ),
        ("identity", adjoint_check(&Identity { rows: n, cols: n }, a.trials, a.seed)),
        ("diagonal", adjoint_check(&Diagonal::new(weights), a.trials, a.seed)),
    ];
    let mut pass = true;
    for (name, r) in results {
        let ok = r <= a.tol;
        pass &= ok;
        println!("{name:<18} worst relative residual {r:.2e} {}", if ok { "ok" } else { "FAIL" });
    }
    Ok(Outcome::from_pass(pass))
}

//! Time integration of the divergence-form equation driven by the sampled
//! Levy paths.
//!
//! The scheme is theta-implicit in the principal part only and explicit in
//! the lower-order and noise terms, with coefficients and integrands
//! frozen at the left endpoint of each step (the predictable-evaluation
//! surrogate):
//!
//! ```text
//! (I - theta dt P) u_{n+1} = u_n + dt [ (1-theta) P u_n + R u_n + f_n ]
//!                            + sum_k (Lambda^k u_n + g^k_n) dZ^k_n
//! ```
//!
//! with `P u = div(a grad u)` and `R u = div(bbar u) + b.grad u + c u`.
//! The implicit solve is preconditioned BiCGStab with the exact
//! constant-coefficient spectral inverse as the preconditioner, so the
//! pure heat case converges in a single application.
//!
//! Alongside the scheme live an exact per-mode mild-solution oracle for
//! the constant-coefficient additive-noise case, Picard iteration for
//! semilinear forcings with a split Lipschitz certificate, the localized
//! solve that truncates heavy channels at a jump level, and the
//! continuity-method homotopy iteration.

use std::ops::Range;
use std::sync::Arc;

use crate::coeff::{
    check_partial_moment, node_times, CoeffContext, CoeffError, CoefficientField,
    CoefficientSet, EvaluatedCoefficients,
};
use crate::field::{Field, FieldError, SobolevIndex, TorusGrid};
use crate::levy::{LevyError, NoiseFamily, PathRealization, TimeGrid};
use crate::Real;
use num_complex::Complex;
use thiserror::Error;

/// Deterministic space-time forcing specification (`f`, `g^k`, `u_0`
/// profiles reuse the coefficient evaluation machinery).
pub type FieldSpec<T> = CoefficientField<T>;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Levy(#[from] LevyError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("mismatch between solver inputs: {0}")]
    Mismatch(String),
    #[error(
        "linear solve at step {step} stalled after {iters} iterations (relative residual {residual:e})"
    )]
    LinearSolve {
        step: usize,
        iters: usize,
        residual: f64,
    },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("oracle requires the constant-coefficient additive form: {0}")]
    NonQualifying(String),
    #[error(
        "Picard iteration failed to contract (ratio {ratio} over {window_steps} steps); reduce the window length"
    )]
    ContractionFailure { ratio: f64, window_steps: usize },
    #[error("homotopy iteration diverged at |lambda - lambda0| = {gap}")]
    HomotopyDivergence { gap: f64 },
}

/// Discretization parameters of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T: Real> {
    pub time: TimeGrid<T>,
    pub grid: TorusGrid<T>,
    /// Implicitness of the principal part, in `[0, 1]`.
    pub theta: T,
    /// Relative residual target of the inner linear solve.
    pub lin_tol: T,
    pub max_lin_iters: usize,
}

impl<T: Real> SolverConfig<T> {
    pub fn new(time: TimeGrid<T>, grid: TorusGrid<T>, theta: T) -> Self {
        Self {
            time,
            grid,
            theta,
            lin_tol: T::lit(1e-12),
            max_lin_iters: 400,
        }
    }

    /// Stability budget `theta dt max|xi|^2 K` of the implicit part;
    /// reported alongside solves for diagnostics.
    pub fn stability_budget(&self, k_max: T) -> T {
        self.theta * self.time.dt() * self.grid.max_freq_sq() * k_max
    }
}

/// Per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepMeta {
    pub lin_iters: usize,
    pub jumps: usize,
}

/// Discrete trajectory: one field per time node. Node `n` holds the
/// post-jump state of the step ending at `t_n` (the cadlag surrogate).
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPath<T: Real> {
    times: Vec<T>,
    fields: Vec<Field<T>>,
    meta: Vec<StepMeta>,
}

impl<T: Real> SolutionPath<T> {
    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn fields(&self) -> &[Field<T>] {
        &self.fields
    }

    pub fn field(&self, node: usize) -> &Field<T> {
        &self.fields[node]
    }

    pub fn terminal(&self) -> &Field<T> {
        self.fields.last().expect("at least the initial node")
    }

    pub fn meta(&self) -> &[StepMeta] {
        &self.meta
    }

    pub fn num_nodes(&self) -> usize {
        self.fields.len()
    }

    fn dt(&self) -> T {
        self.times[1] - self.times[0]
    }

    /// Left-endpoint discrete time integral of the squared `H^n` norm,
    /// `sum_{n < N} dt ||u_n||^2`.
    pub fn bh_sq(&self, index: SobolevIndex<T>) -> T {
        self.bh_sq_window(index, 0..self.fields.len() - 1)
    }

    /// Window variant over node range `nodes` (left endpoints).
    pub fn bh_sq_window(&self, index: SobolevIndex<T>, nodes: Range<usize>) -> T {
        let dt = self.dt();
        nodes.fold(T::zero(), |s, n| {
            s + dt * self.fields[n].sobolev_norm_sq(index)
        })
    }

    /// `max_n ||u_n||_{L^2}^2` over all nodes.
    pub fn sup_l2_sq(&self) -> T {
        self.fields
            .iter()
            .map(|f| {
                let v = f.l2_norm();
                v * v
            })
            .fold(T::zero(), T::max)
    }

    /// Discrete distance `(sum_nodes dt ||u_n - v_n||_{H^1}^2)^{1/2}`.
    pub fn h1_distance(&self, other: &Self, nodes: Range<usize>) -> T {
        let dt = self.dt();
        let h1 = SobolevIndex::h(1);
        nodes
            .fold(T::zero(), |s, n| {
                let d = self.fields[n].sub(&other.fields[n]);
                s + dt * d.sobolev_norm_sq(h1)
            })
            .sqrt()
    }

    /// Summary CSV: `time,l2_norm,h1_norm,jump_count` per node.
    pub fn write_summary_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "# levypde solution v1")?;
        writeln!(out, "time,l2_norm,h1_norm,jump_count")?;
        let h1 = SobolevIndex::h(1);
        for (n, f) in self.fields.iter().enumerate() {
            let jumps = if n == 0 { 0 } else { self.meta[n - 1].jumps };
            writeln!(
                out,
                "{:e},{:e},{:e},{}",
                self.times[n],
                f.l2_norm(),
                f.sobolev_norm(h1),
                jumps
            )?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Operator actions
// ---------------------------------------------------------------------------

/// Principal part `P u = div(a grad u)`.
pub fn apply_principal<T: Real>(eval: &EvaluatedCoefficients<T>, u: &Field<T>) -> Field<T> {
    let d = eval.dim;
    let grad = u.gradient();
    let flux: Vec<Field<T>> = (0..d)
        .map(|i| {
            let mut acc = eval.a[i * d].mul_pointwise(&grad[0]);
            for j in 1..d {
                acc.axpy(T::one(), &eval.a[i * d + j].mul_pointwise(&grad[j]));
            }
            acc
        })
        .collect();
    Field::divergence(&flux)
}

/// Lower-order part `R u = div(bbar u) + b . grad u + c u`.
pub fn apply_rest<T: Real>(eval: &EvaluatedCoefficients<T>, u: &Field<T>) -> Field<T> {
    let d = eval.dim;
    let flux: Vec<Field<T>> = (0..d).map(|i| eval.b_bar[i].mul_pointwise(u)).collect();
    let mut out = Field::divergence(&flux);
    let grad = u.gradient();
    for i in 0..d {
        out.axpy(T::one(), &eval.b[i].mul_pointwise(&grad[i]));
    }
    out.axpy(T::one(), &eval.c.mul_pointwise(u));
    out
}

/// Full drift operator `L u = P u + R u` of the equation, with the
/// coefficients evaluated at the context's time node.
pub fn apply_l<T: Real>(
    set: &CoefficientSet<T>,
    u: &Field<T>,
    ctx: &CoeffContext<T>,
) -> Result<Field<T>, SolverError> {
    let eval = set.evaluate(ctx)?;
    let mut out = apply_principal(&eval, u);
    out.axpy(T::one(), &apply_rest(&eval, u));
    Ok(out)
}

/// Noise operator of channel `k`: `Lambda^k u + g^k = sigma^{.k} . grad u
/// + mu^k u + g^k`.
pub fn apply_lambda<T: Real>(
    set: &CoefficientSet<T>,
    u: &Field<T>,
    g_k: &Field<T>,
    ctx: &CoeffContext<T>,
    k: usize,
) -> Result<Field<T>, SolverError> {
    let eval = set.evaluate(ctx)?;
    Ok(apply_lambda_eval(&eval, u, &u.gradient(), g_k, k))
}

fn apply_lambda_eval<T: Real>(
    eval: &EvaluatedCoefficients<T>,
    u: &Field<T>,
    grad_u: &[Field<T>],
    g_k: &Field<T>,
    k: usize,
) -> Field<T> {
    let mut out = g_k.clone();
    for i in 0..eval.dim {
        out.axpy(T::one(), &eval.sigma_at(i, k).mul_pointwise(&grad_u[i]));
    }
    out.axpy(T::one(), &eval.mu[k].mul_pointwise(u));
    out
}

// ---------------------------------------------------------------------------
// Implicit solve
// ---------------------------------------------------------------------------

/// Spectral preconditioner `(I + theta dt abar |xi|^2)^{-1}` where `abar`
/// is the mean diagonal of `a` at the current node; exact when `a` is that
/// constant multiple of the identity.
struct SpectralPreconditioner<T: Real> {
    grid: TorusGrid<T>,
    factor: T,
}

impl<T: Real> SpectralPreconditioner<T> {
    fn new(grid: TorusGrid<T>, eval: &EvaluatedCoefficients<T>, theta_dt: T) -> Self {
        let d = eval.dim;
        let cells = T::of_usize(grid.num_cells());
        let mut mean_diag = T::zero();
        for i in 0..d {
            mean_diag += eval.a[i * d + i]
                .values()
                .iter()
                .fold(T::zero(), |s, &v| s + v)
                / cells;
        }
        mean_diag /= T::of_usize(d);
        Self {
            grid,
            factor: theta_dt * mean_diag,
        }
    }

    fn apply(&self, f: &Field<T>) -> Field<T> {
        let mut hat = f.to_spectral();
        for (flat, c) in hat.coeffs_mut().iter_mut().enumerate() {
            let q = self.grid.diff_freq_sq(flat);
            *c = *c / (T::one() + self.factor * q);
        }
        hat.to_real()
    }
}

/// Preconditioned BiCGStab for `A x = b` with `A = I - theta dt P`.
/// Deterministic, homogeneous of degree one in `b`, and exact in one
/// sweep when the preconditioner equals `A^{-1}`.
fn bicgstab<T: Real>(
    apply_a: impl Fn(&Field<T>) -> Field<T>,
    precond: &SpectralPreconditioner<T>,
    b: &Field<T>,
    tol: T,
    max_iters: usize,
) -> Result<(Field<T>, usize), (f64, usize)> {
    let b_norm = b.l2_norm();
    if b_norm == T::zero() {
        return Ok((Field::zero(*b.grid()), 0));
    }
    let mut x = precond.apply(b);
    let mut r = b.sub(&apply_a(&x));
    if r.l2_norm() <= tol * b_norm {
        return Ok((x, 0));
    }
    let r_hat = r.clone();
    let mut rho = T::one();
    let mut alpha = T::one();
    let mut omega = T::one();
    let mut v = Field::zero(*b.grid());
    let mut p = Field::zero(*b.grid());
    for it in 1..=max_iters {
        let rho1 = r_hat.inner_product(&r).expect("same grid");
        if rho1 == T::zero() {
            return Err(((r.l2_norm() / b_norm).to_f64().unwrap_or(f64::NAN), it));
        }
        let beta = (rho1 / rho) * (alpha / omega);
        // p = r + beta (p - omega v)
        p = {
            let mut t = p.clone();
            t.axpy(-omega, &v);
            let mut t = t.scaled(beta);
            t.axpy(T::one(), &r);
            t
        };
        let p_hat = precond.apply(&p);
        v = apply_a(&p_hat);
        let denom = r_hat.inner_product(&v).expect("same grid");
        if denom == T::zero() {
            return Err(((r.l2_norm() / b_norm).to_f64().unwrap_or(f64::NAN), it));
        }
        alpha = rho1 / denom;
        let mut s = r.clone();
        s.axpy(-alpha, &v);
        if s.l2_norm() <= tol * b_norm {
            x.axpy(alpha, &p_hat);
            return Ok((x, it));
        }
        let s_hat = precond.apply(&s);
        let t = apply_a(&s_hat);
        let tt = t.inner_product(&t).expect("same grid");
        if tt == T::zero() {
            return Err(((s.l2_norm() / b_norm).to_f64().unwrap_or(f64::NAN), it));
        }
        omega = t.inner_product(&s).expect("same grid") / tt;
        x.axpy(alpha, &p_hat);
        x.axpy(omega, &s_hat);
        r = s;
        r.axpy(-omega, &t);
        if r.l2_norm() <= tol * b_norm {
            return Ok((x, it));
        }
        rho = rho1;
    }
    Err((
        (r.l2_norm() / b_norm).to_f64().unwrap_or(f64::NAN),
        max_iters,
    ))
}

/// One semi-implicit step from `u_n`; `f_n`, `g_n` and the coefficients
/// are evaluated at the left endpoint, `dz` holds this bin's increments.
pub fn step_semi_implicit<T: Real>(
    u_n: &Field<T>,
    eval: &EvaluatedCoefficients<T>,
    f_n: &Field<T>,
    g_n: &[Field<T>],
    dz: &[T],
    cfg: &SolverConfig<T>,
) -> Result<(Field<T>, usize), SolverError> {
    let (u, iters, _) = step_inner(u_n, eval, f_n, g_n, dz, cfg, None, 0)?;
    Ok((u, iters))
}

#[allow(clippy::too_many_arguments)]
fn step_inner<T: Real>(
    u_n: &Field<T>,
    eval: &EvaluatedCoefficients<T>,
    f_n: &Field<T>,
    g_n: &[Field<T>],
    dz: &[T],
    cfg: &SolverConfig<T>,
    extra_rhs: Option<&Field<T>>,
    step: usize,
) -> Result<(Field<T>, usize, ()), SolverError> {
    let dt = cfg.time.dt();
    let theta = cfg.theta;
    let grad_u = u_n.gradient();

    let mut rhs = u_n.clone();
    let p_u = apply_principal(eval, u_n);
    if theta < T::one() {
        rhs.axpy(dt * (T::one() - theta), &p_u);
    }
    rhs.axpy(dt, &apply_rest(eval, u_n));
    rhs.axpy(dt, f_n);
    for (k, &inc) in dz.iter().enumerate() {
        let h = apply_lambda_eval(eval, u_n, &grad_u, &g_n[k], k);
        rhs.axpy(inc, &h);
    }
    if let Some(extra) = extra_rhs {
        rhs.axpy(T::one(), extra);
    }

    if theta == T::zero() {
        return Ok((rhs, 0, ()));
    }

    let theta_dt = theta * dt;
    let precond = SpectralPreconditioner::new(cfg.grid, eval, theta_dt);
    let apply_a = |v: &Field<T>| {
        let mut out = v.clone();
        out.axpy(-theta_dt, &apply_principal(eval, v));
        out
    };
    match bicgstab(apply_a, &precond, &rhs, cfg.lin_tol, cfg.max_lin_iters) {
        Ok((u, iters)) => Ok((u, iters, ())),
        Err((residual, iters)) => Err(SolverError::LinearSolve {
            step,
            iters,
            residual,
        }),
    }
}

// ---------------------------------------------------------------------------
// Linear solve
// ---------------------------------------------------------------------------

struct PathData<T> {
    incs: Vec<Vec<T>>,
    jumps_per_bin: Vec<usize>,
}

fn prepare_path<T: Real>(
    path: &PathRealization<T>,
    cfg: &SolverConfig<T>,
    channels: usize,
) -> Result<PathData<T>, SolverError> {
    if *path.grid() != cfg.time {
        return Err(SolverError::Mismatch(
            "noise path and solver config use different time grids".into(),
        ));
    }
    if path.num_channels() != channels {
        return Err(SolverError::Mismatch(format!(
            "noise path has {} channels, coefficient set {}",
            path.num_channels(),
            channels
        )));
    }
    let incs = (0..channels)
        .map(|k| path.increments(k))
        .collect::<Result<Vec<_>, _>>()?;
    let mut jumps_per_bin = vec![0usize; cfg.time.steps()];
    for j in path.jumps() {
        jumps_per_bin[cfg.time.bin_of(j.time)] += 1;
    }
    Ok(PathData {
        incs,
        jumps_per_bin,
    })
}

/// Core stepping loop over a node window `[window.start, window.end]`,
/// with per-node forcing providers (absolute node indices). Returns the
/// fields at every node of the window, starting with `u_start`.
#[allow(clippy::too_many_arguments)]
fn integrate_window<T: Real>(
    cfg: &SolverConfig<T>,
    set: &CoefficientSet<T>,
    path: &PathRealization<T>,
    data: &PathData<T>,
    window: Range<usize>,
    u_start: &Field<T>,
    mut f_at: impl FnMut(usize) -> Result<Field<T>, SolverError>,
    mut g_at: impl FnMut(usize, usize) -> Result<Field<T>, SolverError>,
    mut extra_rhs: impl FnMut(usize) -> Result<Option<Field<T>>, SolverError>,
) -> Result<(Vec<Field<T>>, Vec<StepMeta>), SolverError> {
    let channels = set.channels();
    let mut fields = Vec::with_capacity(window.end - window.start + 1);
    let mut meta = Vec::with_capacity(window.end - window.start);
    fields.push(u_start.clone());
    let mut u = u_start.clone();
    for n in window.clone() {
        let ctx = CoeffContext {
            grid: cfg.grid,
            node: n,
            time: cfg.time.node_time(n),
            noise: Some(path),
        };
        let eval = set.evaluate(&ctx)?;
        let f_n = f_at(n)?;
        let g_n: Vec<Field<T>> = (0..channels)
            .map(|k| g_at(k, n))
            .collect::<Result<_, _>>()?;
        let dz: Vec<T> = (0..channels).map(|k| data.incs[k][n]).collect();
        let extra = extra_rhs(n)?;
        let (next, iters, ()) =
            step_inner(&u, &eval, &f_n, &g_n, &dz, cfg, extra.as_ref(), n)?;
        if !next.is_finite() {
            return Err(SolverError::NonFinite { step: n });
        }
        meta.push(StepMeta {
            lin_iters: iters,
            jumps: data.jumps_per_bin[n],
        });
        u = next.clone();
        fields.push(next);
    }
    Ok((fields, meta))
}

/// Integrate the linear equation over the whole horizon for one noise
/// realization. Jumps act through the bin increments with left-point
/// evaluation of the integrands.
pub fn solve_linear<T: Real>(
    cfg: &SolverConfig<T>,
    set: &CoefficientSet<T>,
    f: &FieldSpec<T>,
    g: &[FieldSpec<T>],
    u0: &Field<T>,
    path: &PathRealization<T>,
) -> Result<SolutionPath<T>, SolverError> {
    if g.len() != set.channels() {
        return Err(SolverError::Mismatch(format!(
            "{} g-components for {} channels",
            g.len(),
            set.channels()
        )));
    }
    if *u0.grid() != cfg.grid {
        return Err(SolverError::Mismatch("u0 on the wrong grid".into()));
    }
    let data = prepare_path(path, cfg, set.channels())?;
    let eval_spec = |spec: &FieldSpec<T>, n: usize| -> Result<Field<T>, SolverError> {
        Ok(spec.eval(&CoeffContext {
            grid: cfg.grid,
            node: n,
            time: cfg.time.node_time(n),
            noise: Some(path),
        })?)
    };
    let (fields, meta) = integrate_window(
        cfg,
        set,
        path,
        &data,
        0..cfg.time.steps(),
        u0,
        |n| eval_spec(f, n),
        |k, n| eval_spec(&g[k], n),
        |_| Ok(None),
    )?;
    Ok(SolutionPath {
        times: (0..cfg.time.num_nodes())
            .map(|n| cfg.time.node_time(n))
            .collect(),
        fields,
        meta,
    })
}

// ---------------------------------------------------------------------------
// Mild-solution oracle
// ---------------------------------------------------------------------------

/// Exact per-mode solution of `du = (Lap u + f) dt + g^k dZ^k` with
/// time-constant `f`, `g`: heat decay of the initial data, closed-form
/// convolution of `f`, bin-resolved convolution of the Brownian and
/// compensator parts (kernel anchored at each bin's left endpoint), and
/// exactly-timed jump contributions. Used as the reference in convergence
/// studies; returns the state at every node of the path's grid.
pub fn mild_solution_oracle<T: Real>(
    set: &CoefficientSet<T>,
    u0: &Field<T>,
    f: &Field<T>,
    g: &[Field<T>],
    path: &PathRealization<T>,
) -> Result<Vec<Field<T>>, SolverError> {
    // qualification: a = I, everything else structurally zero
    let d = set.dim();
    for i in 0..d {
        for j in 0..d {
            let want = if i == j { T::one() } else { T::zero() };
            if set.a_entry(i, j).as_constant() != Some(want) {
                return Err(SolverError::NonQualifying("a must be the identity".into()));
            }
        }
    }
    let zeros = set.b_bar.iter().chain(&set.b).chain(&set.sigma).chain(&set.mu);
    for z in zeros {
        if !z.is_zero() {
            return Err(SolverError::NonQualifying(
                "bbar, b, sigma, mu must vanish".into(),
            ));
        }
    }
    if !set.c.is_zero() {
        return Err(SolverError::NonQualifying("c must vanish".into()));
    }
    if g.len() != path.num_channels() {
        return Err(SolverError::Mismatch(
            "one g component per noise channel".into(),
        ));
    }

    let grid = *u0.grid();
    let tg = *path.grid();
    let dt = tg.dt();
    let cells = grid.num_cells();

    let u0_hat = u0.to_spectral();
    let f_hat = f.to_spectral();
    let g_hat: Vec<_> = g.iter().map(|gk| gk.to_spectral()).collect();
    let incs: Vec<Vec<T>> = (0..path.num_channels())
        .map(|k| path.increments(k))
        .collect::<Result<_, _>>()?;
    // continuous part of the increments: remove this bin's jump sum
    let mut cont = incs;
    for j in path.jumps() {
        cont[j.channel][tg.bin_of(j.time)] -= j.size;
    }

    let kappa: Vec<T> = (0..cells).map(|p| grid.diff_freq_sq(p)).collect();
    let decay: Vec<T> = kappa.iter().map(|&q| (-q * dt).exp()).collect();

    // running noise convolution per mode, advanced bin by bin
    let mut conv = vec![Complex::new(T::zero(), T::zero()); cells];
    let mut out = Vec::with_capacity(tg.num_nodes());
    out.push(u0.clone());

    // jumps grouped by bin for exact-kernel accumulation
    let mut jumps_by_bin: Vec<Vec<(usize, T, T)>> = vec![Vec::new(); tg.steps()];
    for j in path.jumps() {
        jumps_by_bin[tg.bin_of(j.time)].push((j.channel, j.time, j.size));
    }

    for n in 0..tg.steps() {
        let t_next = tg.node_time(n + 1);
        for p in 0..cells {
            // left-endpoint kernel for the continuous part
            let mut add = Complex::new(T::zero(), T::zero());
            for (k, g_k) in g_hat.iter().enumerate() {
                add += g_k.coeffs()[p] * cont[k][n];
            }
            conv[p] = (conv[p] + add) * decay[p];
        }
        for &(k, s, z) in &jumps_by_bin[n] {
            let off: T = t_next - s;
            for p in 0..cells {
                conv[p] += g_hat[k].coeffs()[p] * (z * (-kappa[p] * off).exp());
            }
        }
        // assemble u(t_{n+1}) per mode
        let mut hat = u0_hat.clone();
        let t = t_next;
        for p in 0..cells {
            let q = kappa[p];
            let heat = (-q * t).exp();
            let drive = if q == T::zero() {
                t
            } else {
                (T::one() - heat) / q
            };
            hat.coeffs_mut()[p] = u0_hat.coeffs()[p] * heat + f_hat.coeffs()[p] * drive + conv[p];
        }
        out.push(hat.to_real());
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Picard iteration
// ---------------------------------------------------------------------------

/// Split Lipschitz certificate `(epsilon, K1)` of a semilinear forcing:
/// `||f(u)-f(v)||_{H^-1}^2 + sum_k w_k ||g^k(u)-g^k(v)||_{L^2}^2
///  <= epsilon ||u-v||_{H^1}^2 + K1 ||u-v||_{L^2}^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitLipschitz<T> {
    pub epsilon: T,
    pub k1: T,
}

type FieldMap<T> = Arc<dyn Fn(&Field<T>, usize) -> Field<T> + Send + Sync>;

/// Solution-dependent forcing `(f(u), g^k(u))` with its declared split
/// Lipschitz certificate.
#[derive(Clone)]
pub struct NonlinearForcing<T: Real> {
    pub f: FieldMap<T>,
    pub g: Vec<FieldMap<T>>,
    pub certificate: SplitLipschitz<T>,
}

impl<T: Real> NonlinearForcing<T> {
    /// `f = 0`, `g = 0` on every channel.
    pub fn zero(channels: usize) -> Self {
        let z: FieldMap<T> = Arc::new(|u: &Field<T>, _| Field::zero(*u.grid()));
        Self {
            f: z.clone(),
            g: vec![z; channels],
            certificate: SplitLipschitz {
                epsilon: T::zero(),
                k1: T::zero(),
            },
        }
    }

    /// Dissipative fractional pair: `f(u) = -(-Lap)^{alpha/2} u` on the
    /// drift side and `g^1(u) = (-Lap)^{beta/2} u` on the first channel
    /// (zero on the others), `alpha < 2`, `beta < 1`.
    pub fn fractional(alpha: T, beta: T, channels: usize, certificate: SplitLipschitz<T>) -> Self {
        let f: FieldMap<T> =
            Arc::new(move |u: &Field<T>, _| u.fractional_laplacian(alpha).scaled(-T::one()));
        let mut g: Vec<FieldMap<T>> = Vec::with_capacity(channels);
        g.push(Arc::new(move |u: &Field<T>, _| u.fractional_laplacian(beta)));
        for _ in 1..channels {
            g.push(Arc::new(|u: &Field<T>, _| Field::zero(*u.grid())));
        }
        Self { f, g, certificate }
    }

    /// Linear reaction `f(u) = rate * u`, noise-free.
    pub fn linear_reaction(rate: T, channels: usize, certificate: SplitLipschitz<T>) -> Self {
        let f: FieldMap<T> = Arc::new(move |u: &Field<T>, _| u.scaled(rate));
        let z: FieldMap<T> = Arc::new(|u: &Field<T>, _| Field::zero(*u.grid()));
        Self {
            f,
            g: vec![z; channels],
            certificate,
        }
    }

    /// Empirically validate the certificate on random probe pairs.
    /// Returns the worst ratio `lhs / rhs` observed (must stay <= 1).
    pub fn validate_certificate(
        &self,
        grid: TorusGrid<T>,
        weights: &[T],
        probes: usize,
        seed: u64,
    ) -> T {
        let h1 = SobolevIndex::h(1);
        let hm1 = SobolevIndex::h(-1);
        let mut worst = T::zero();
        for p in 0..probes {
            let u = Field::random_smooth(grid, seed.wrapping_add(2 * p as u64), T::half());
            let v = Field::random_smooth(grid, seed.wrapping_add(2 * p as u64 + 1), T::half());
            let fu = (self.f)(&u, 0);
            let fv = (self.f)(&v, 0);
            let mut lhs = fu.sub(&fv).sobolev_norm_sq(hm1);
            for (k, gk) in self.g.iter().enumerate() {
                let du = gk(&u, 0).sub(&gk(&v, 0));
                let n2 = du.l2_norm();
                if n2 != T::zero() {
                    lhs += weights[k] * n2 * n2;
                }
            }
            let diff = u.sub(&v);
            let l2 = diff.l2_norm();
            let rhs = self.certificate.epsilon * diff.sobolev_norm_sq(h1)
                + self.certificate.k1 * l2 * l2;
            if rhs > T::zero() {
                worst = worst.max(lhs / rhs);
            }
        }
        worst
    }
}

/// Options of the Picard fixed-point loop.
#[derive(Debug, Clone, Copy)]
pub struct PicardOptions<T> {
    /// Successive-iterate distance (discrete window H^1 norm) below which
    /// a window has converged.
    pub tol: T,
    pub max_iters: usize,
    /// Windows are halved until the measured per-iterate ratio is below
    /// this target.
    pub target_ratio: T,
    pub min_window_steps: usize,
    /// Cap on the first window length in steps (whole horizon by default).
    pub initial_window_steps: usize,
}

impl<T: Real> Default for PicardOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-10),
            max_iters: 80,
            target_ratio: T::lit(0.9),
            min_window_steps: 2,
            initial_window_steps: usize::MAX,
        }
    }
}

/// Distances of the successive iterates per window.
#[derive(Debug, Clone)]
pub struct WindowTrace<T> {
    pub start_node: usize,
    pub steps: usize,
    pub distances: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct PicardTrace<T> {
    pub windows: Vec<WindowTrace<T>>,
}

impl<T: Real> PicardTrace<T> {
    /// Largest consecutive-distance ratio observed after the first
    /// iterate, across all windows.
    pub fn worst_ratio(&self) -> Option<T> {
        let mut worst: Option<T> = None;
        for w in &self.windows {
            for pair in w.distances.windows(2) {
                if pair[0] > T::zero() {
                    let r = pair[1] / pair[0];
                    worst = Some(worst.map_or(r, |w| w.max(r)));
                }
            }
        }
        worst
    }
}

/// Fixed-point iteration `u^{m+1} = R(f(u^m), g(u^m))` on time windows
/// short enough to contract, chained with the previous terminal value as
/// initial data. The window length adapts: starting from the whole
/// horizon it halves whenever the measured ratio exceeds the target.
pub fn solve_picard<T: Real>(
    cfg: &SolverConfig<T>,
    set: &CoefficientSet<T>,
    nl: &NonlinearForcing<T>,
    u0: &Field<T>,
    path: &PathRealization<T>,
    opts: &PicardOptions<T>,
) -> Result<(SolutionPath<T>, PicardTrace<T>), SolverError> {
    if nl.g.len() != set.channels() {
        return Err(SolverError::Mismatch(
            "one nonlinear g component per channel".into(),
        ));
    }
    let data = prepare_path(path, cfg, set.channels())?;
    let total = cfg.time.steps();
    let mut window_steps = opts.initial_window_steps.min(total);
    let mut start = 0usize;
    let mut u_start = u0.clone();
    let mut fields: Vec<Field<T>> = vec![u0.clone()];
    let mut meta: Vec<StepMeta> = Vec::new();
    let mut trace = PicardTrace {
        windows: Vec::new(),
    };

    while start < total {
        let steps = window_steps.min(total - start);
        let window = start..start + steps;
        match run_picard_window(cfg, set, nl, &u_start, path, &data, window.clone(), opts)? {
            PicardWindow::Converged {
                fields: wf,
                meta: wm,
                distances,
            } => {
                trace.windows.push(WindowTrace {
                    start_node: start,
                    steps,
                    distances,
                });
                fields.extend(wf.into_iter().skip(1));
                meta.extend(wm);
                u_start = fields.last().unwrap().clone();
                start += steps;
            }
            PicardWindow::NotContracting { ratio } => {
                if steps <= opts.min_window_steps {
                    return Err(SolverError::ContractionFailure {
                        ratio: ratio.to_f64().unwrap_or(f64::NAN),
                        window_steps: steps,
                    });
                }
                window_steps = (steps / 2).max(opts.min_window_steps);
            }
        }
    }

    Ok((
        SolutionPath {
            times: (0..cfg.time.num_nodes())
                .map(|n| cfg.time.node_time(n))
                .collect(),
            fields,
            meta,
        },
        trace,
    ))
}

enum PicardWindow<T: Real> {
    Converged {
        fields: Vec<Field<T>>,
        meta: Vec<StepMeta>,
        distances: Vec<T>,
    },
    NotContracting {
        ratio: T,
    },
}

#[allow(clippy::too_many_arguments)]
fn run_picard_window<T: Real>(
    cfg: &SolverConfig<T>,
    set: &CoefficientSet<T>,
    nl: &NonlinearForcing<T>,
    u_start: &Field<T>,
    path: &PathRealization<T>,
    data: &PathData<T>,
    window: Range<usize>,
    opts: &PicardOptions<T>,
) -> Result<PicardWindow<T>, SolverError> {
    let offset = window.start;
    let solve_with = |prev: &[Field<T>]| -> Result<(Vec<Field<T>>, Vec<StepMeta>), SolverError> {
        integrate_window(
            cfg,
            set,
            path,
            data,
            window.clone(),
            u_start,
            |n| Ok((nl.f)(&prev[n - offset], n)),
            |k, n| Ok((nl.g[k])(&prev[n - offset], n)),
            |_| Ok(None),
        )
    };

    // paper-style start: u^0 = R(f(0), g(0))
    let zero_state = vec![Field::zero(cfg.grid); window.len() + 1];
    #[allow(unused_assignments)]
    let (mut current, mut meta) = solve_with(&zero_state)?;
    let mut distances: Vec<T> = Vec::new();
    let mut bad_streak = 0usize;
    let dt = cfg.time.dt();
    let h1 = SobolevIndex::h(1);
    let window_dist = |a: &[Field<T>], b: &[Field<T>]| {
        a.iter()
            .zip(b)
            .fold(T::zero(), |s, (x, y)| {
                s + dt * x.sub(y).sobolev_norm_sq(h1)
            })
            .sqrt()
    };

    for _ in 0..opts.max_iters {
        let (next, next_meta) = solve_with(&current)?;
        let d = window_dist(&next, &current);
        let prev_d = distances.last().copied();
        distances.push(d);
        current = next;
        meta = next_meta;
        if d <= opts.tol {
            return Ok(PicardWindow::Converged {
                fields: current,
                meta,
                distances,
            });
        }
        if let Some(pd) = prev_d {
            if pd > T::zero() {
                let ratio = d / pd;
                if ratio >= T::one() {
                    bad_streak += 1;
                    if bad_streak >= 3 {
                        return Ok(PicardWindow::NotContracting { ratio });
                    }
                } else {
                    bad_streak = 0;
                }
                if distances.len() >= 4 && ratio >= opts.target_ratio {
                    return Ok(PicardWindow::NotContracting { ratio });
                }
            }
        }
    }
    Ok(PicardWindow::NotContracting {
        ratio: T::one(),
    })
}

// ---------------------------------------------------------------------------
// Localized solve
// ---------------------------------------------------------------------------

/// A jump removed by the localization truncation, with the norm of the
/// deferred noise contribution `(mu^k u(t-) + g^k(t)) z` it would have
/// injected.
#[derive(Debug, Clone, PartialEq)]
pub struct RemovedJump<T> {
    pub time: T,
    pub channel: usize,
    pub size: T,
    pub deferred_g_norm: T,
}

/// Record of one localized solve: exemption count, truncation level, and
/// the removed jumps (the segment boundaries of the patched solution).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationPlan<T: Real> {
    pub n0: usize,
    pub level: T,
    pub removed: Vec<RemovedJump<T>>,
    /// First removed-jump time over the exempted channels (`T_n`), or
    /// `+inf` when the realization has none.
    pub first_large_jump: T,
}

/// Localized solve: jumps of the exempted channels `k < n0` larger than
/// `level` are removed from the path (their compensators do not change,
/// the exempted channels being symmetric by hypothesis check), the
/// equation is solved with the truncated noise, and each removed jump is
/// reported with its deferred `g`-contribution. With `level = +inf`, or
/// on realizations without large jumps, the output is bit-identical to
/// [`solve_linear`] on the same path.
#[allow(clippy::too_many_arguments)]
pub fn solve_localized<T: Real>(
    cfg: &SolverConfig<T>,
    set: &CoefficientSet<T>,
    family: &NoiseFamily<T>,
    f: &FieldSpec<T>,
    g: &[FieldSpec<T>],
    u0: &Field<T>,
    path: &PathRealization<T>,
    n0: usize,
    level: T,
) -> Result<(SolutionPath<T>, LocalizationPlan<T>), SolverError> {
    let times = node_times(&cfg.time);
    // the delta/kbound thresholds of the hypothesis check are not part of
    // this call; only the structural sigma = 0 and finite-weight
    // requirements matter here, so check against the weakest bounds
    check_partial_moment(
        set,
        family,
        T::zero(),
        T::infinity(),
        n0,
        cfg.grid,
        &times[..1.min(times.len())],
        Some(path),
    )?;

    let truncated = path.truncate_jumps_on(level, |k| k < n0)?;
    let solution = solve_linear(cfg, set, f, g, u0, &truncated)?;

    let mut removed = Vec::new();
    for j in path.jumps() {
        if j.channel < n0 && j.size.abs() > level {
            let bin = cfg.time.bin_of(j.time);
            let ctx = CoeffContext {
                grid: cfg.grid,
                node: bin,
                time: cfg.time.node_time(bin),
                noise: Some(path),
            };
            let mu_k = set.mu[j.channel].eval(&ctx)?;
            let g_k = g[j.channel].eval(&ctx)?;
            let mut h = mu_k.mul_pointwise(solution.field(bin));
            h.axpy(T::one(), &g_k);
            removed.push(RemovedJump {
                time: j.time,
                channel: j.channel,
                size: j.size,
                deferred_g_norm: h.l2_norm() * j.size.abs(),
            });
        }
    }
    let first_large_jump = path.first_large_jump_time(level, n0);
    Ok((
        solution,
        LocalizationPlan {
            n0,
            level,
            removed,
            first_large_jump,
        },
    ))
}

// ---------------------------------------------------------------------------
// Continuity-method homotopy
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct HomotopyOptions<T> {
    pub tol: T,
    pub max_iters: usize,
}

impl<T: Real> Default for HomotopyOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-11),
            max_iters: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct HomotopyTrace<T> {
    pub distances: Vec<T>,
}

impl<T: Real> HomotopyTrace<T> {
    pub fn ratios(&self) -> Vec<T> {
        self.distances
            .windows(2)
            .filter(|w| w[0] > T::zero())
            .map(|w| w[1] / w[0])
            .collect()
    }
}

/// Continuity-method iteration: solve at `lambda0` with the operator
/// difference `(lambda - lambda0)(L - Lap, Lambda)` of the previous
/// iterate frozen into the right-hand side, at the discrete-step level,
/// so the fixed point is exactly the direct discrete solution at
/// `lambda`. Records the successive-iterate distances.
#[allow(clippy::too_many_arguments)]
pub fn homotopy_demo<T: Real>(
    cfg: &SolverConfig<T>,
    set: &CoefficientSet<T>,
    f: &FieldSpec<T>,
    g: &[FieldSpec<T>],
    u0: &Field<T>,
    path: &PathRealization<T>,
    lambda: T,
    lambda0: T,
    opts: &HomotopyOptions<T>,
) -> Result<(SolutionPath<T>, HomotopyTrace<T>), SolverError> {
    let set_base = crate::coeff::lambda_homotopy(set, lambda0)?;
    crate::coeff::lambda_homotopy(set, lambda)?; // validate range
    let gap = lambda - lambda0;
    let data = prepare_path(path, cfg, set.channels())?;
    let heat = CoefficientSet::heat(set.dim(), set.channels());

    let eval_spec = |spec: &FieldSpec<T>, n: usize| -> Result<Field<T>, SolverError> {
        Ok(spec.eval(&CoeffContext {
            grid: cfg.grid,
            node: n,
            time: cfg.time.node_time(n),
            noise: Some(path),
        })?)
    };

    // u^0: direct solve at lambda0 (zero correction)
    let mut current = solve_linear(cfg, &set_base, f, g, u0, path)?;
    let mut distances = Vec::new();
    let dt = cfg.time.dt();
    let theta = cfg.theta;
    let mut bad_streak = 0usize;

    for _ in 0..opts.max_iters {
        let prev = current.clone();
        // correction at step n from the previous iterate:
        //   theta dt D_P u_{n+1} + (1-theta) dt D_P u_n + dt D_R u_n
        //   + sum_k D_Lambda^k u_n dZ^k_n,
        // all scaled by (lambda - lambda0), where D_P = P - Lap,
        // D_R = R and D_Lambda = Lambda of the original set.
        let correction = |n: usize| -> Result<Option<Field<T>>, SolverError> {
            if gap == T::zero() {
                return Ok(None);
            }
            let ctx = CoeffContext {
                grid: cfg.grid,
                node: n,
                time: cfg.time.node_time(n),
                noise: Some(path),
            };
            let eval = set.evaluate(&ctx)?;
            let heat_eval = heat.evaluate(&ctx)?;
            let u_n = prev.field(n);
            let u_next = prev.field(n + 1);
            let mut corr = Field::zero(cfg.grid);
            let dp = |v: &Field<T>| {
                let mut w = apply_principal(&eval, v);
                w.axpy(-T::one(), &apply_principal(&heat_eval, v));
                w
            };
            corr.axpy(theta * dt, &dp(u_next));
            if theta < T::one() {
                corr.axpy((T::one() - theta) * dt, &dp(u_n));
            }
            corr.axpy(dt, &apply_rest(&eval, u_n));
            let grad_u = u_n.gradient();
            let zero = Field::zero(cfg.grid);
            for k in 0..set.channels() {
                let lam = apply_lambda_eval(&eval, u_n, &grad_u, &zero, k);
                corr.axpy(data.incs[k][n], &lam);
            }
            Ok(Some(corr.scaled(gap)))
        };

        let (fields, meta) = integrate_window(
            cfg,
            &set_base,
            path,
            &data,
            0..cfg.time.steps(),
            u0,
            |n| eval_spec(f, n),
            |k, n| eval_spec(&g[k], n),
            correction,
        )?;
        let next = SolutionPath {
            times: prev.times.clone(),
            fields,
            meta,
        };
        let d = next.h1_distance(&prev, 0..cfg.time.steps());
        let prev_d = distances.last().copied();
        distances.push(d);
        current = next;
        if d <= opts.tol {
            return Ok((current, HomotopyTrace { distances }));
        }
        if let Some(pd) = prev_d {
            if pd > T::zero() && d / pd >= T::one() {
                bad_streak += 1;
                if bad_streak >= 3 {
                    return Err(SolverError::HomotopyDivergence {
                        gap: gap.to_f64().unwrap_or(f64::NAN).abs(),
                    });
                }
            } else {
                bad_streak = 0;
            }
        }
    }
    Err(SolverError::HomotopyDivergence {
        gap: gap.to_f64().unwrap_or(f64::NAN).abs(),
    })
}

//! Assembly and certified solution of the yield and phase-error SDPs.
//!
//! Both families share one shape: optimise Tr[C X] over 0 <= X <= I subject
//! to two-sided trace constraints lo_k <= Tr[A_k X] <= hi_k. The solver
//! backend is a conic interior-point method, but no bound is ever taken
//! from its primal (or even its reported dual) iterate. Instead the
//! returned inequality multipliers are clamped to the dual cone and the
//! dual objective is re-evaluated here against the original matrices:
//!
//!     d(a, b) = sum_k a_k lo_k - sum_k b_k hi_k + sum_i min(eig_i(W), 0),
//!     W = C - sum_k (a_k - b_k) A_k,
//!
//! which is a valid bound for any a, b >= 0 (the PSD dual blocks are
//! eliminated analytically, taking the optimal slack split for the box).
//! Early termination or solver inaccuracy therefore can only loosen the
//! certificate, never flip its direction.
//!
//! The two-mode problems carry their data inside a low-dimensional
//! invariant subspace (four encoded images per photon-number sector); the
//! solver runs on that subspace while the certificate is still evaluated at
//! full dimension, so the reduction does not participate in the security
//! claim.

use std::sync::Once;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::DMatrix;

use crate::channel::{IntensityObservations, ObservationSet};
use crate::error::{Error, Result};
use crate::fidelity::{constraint_interval, expectation_lower, expectation_upper, ConstraintInterval};
use crate::fock::{apply_encoding, Encoding, FockOperator, FockVector, ModeCount};
use crate::spectral::SpectralModel;

/// Largest matrix dimension the solver adapter accepts.
pub const DIMENSION_CAP: usize = 128;

/// Optimisation direction of a bound problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// One Hermitian-variable SDP: optimise Tr[C X] under interval trace
/// constraints and the implicit box 0 <= X <= I.
#[derive(Debug, Clone)]
pub struct BoundProblem {
    pub sense: Sense,
    pub objective: FockOperator,
    pub constraints: Vec<(FockOperator, ConstraintInterval)>,
}

impl BoundProblem {
    pub fn dimension(&self) -> usize {
        self.objective.dimension()
    }

    fn validate(&self) -> Result<()> {
        let d = self.dimension();
        if d > DIMENSION_CAP {
            return Err(Error::Usage(format!(
                "SDP dimension {d} exceeds the configured cap {DIMENSION_CAP}"
            )));
        }
        for (a, _) in &self.constraints {
            if a.dimension() != d {
                return Err(Error::Usage(
                    "constraint dimension does not match objective".into(),
                ));
            }
        }
        Ok(())
    }

    /// Plain-text dump of the assembled problem for external cross-checks.
    /// Format: a `sense`/`dimension`/`constraints` header, the objective
    /// matrix in row-major order, then one `interval lo hi` line and matrix
    /// per constraint.
    pub fn write_text(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            out,
            "sense {}",
            match self.sense {
                Sense::Minimize => "minimize",
                Sense::Maximize => "maximize",
            }
        )?;
        writeln!(out, "dimension {}", self.dimension())?;
        writeln!(out, "constraints {}", self.constraints.len())?;
        writeln!(out, "objective")?;
        write_matrix(out, self.objective.matrix())?;
        for (a, interval) in &self.constraints {
            writeln!(out, "interval {} {}", interval.lo(), interval.hi())?;
            write_matrix(out, a.matrix())?;
        }
        Ok(())
    }
}

fn write_matrix(out: &mut impl std::io::Write, m: &DMatrix<f64>) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{}", m[(r, c)])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

/// Certificate quality. An infeasible problem is reported as an error, not
/// a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertStatus {
    Optimal,
    Inaccurate,
}

/// Certified optimum of a bound problem with duality-gap metadata.
///
/// `certified_bound` is the re-evaluated dual objective: a true lower bound
/// for minimisation, a true upper bound for maximisation.
#[derive(Debug, Clone, Copy)]
pub struct BoundCertificate {
    pub primal_value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub status: CertStatus,
    pub certified_bound: f64,
    pub iterations: u32,
}

impl BoundCertificate {
    fn require_optimal(&self, what: &str) -> Result<()> {
        if self.status != CertStatus::Optimal {
            return Err(Error::SolverAccuracy(format!(
                "{what}: relative duality gap {:.3e} above tolerance",
                self.gap
            )));
        }
        Ok(())
    }
}

/// svec: upper triangle stacked column-wise with off-diagonals scaled by
/// sqrt(2), so that Tr[A B] = svec(A) . svec(B).
fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let sq2 = 2f64.sqrt();
    let mut out = Vec::with_capacity(d * (d + 1) / 2);
    for j in 0..d {
        for i in 0..=j {
            out.push(if i == j { m[(i, j)] } else { m[(i, j)] * sq2 });
        }
    }
    out
}

fn svec_identity(d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * (d + 1) / 2];
    let mut idx = 0;
    for j in 0..d {
        for i in 0..=j {
            if i == j {
                out[idx] = 1.0;
            }
            idx += 1;
        }
    }
    out
}

fn blas_single_thread() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| {
        if std::env::var_os("OPENBLAS_NUM_THREADS").is_none() {
            std::env::set_var("OPENBLAS_NUM_THREADS", "1");
        }
    });
}

/// Orthonormal basis of the joint column space of the given symmetric
/// matrices, via SVD of their stacked columns. Returns None when the span
/// is (numerically) the whole space.
fn joint_column_space(mats: &[&DMatrix<f64>]) -> Option<DMatrix<f64>> {
    let d = mats[0].nrows();
    let mut stacked = DMatrix::zeros(d, d * mats.len());
    for (k, m) in mats.iter().enumerate() {
        stacked.view_mut((0, k * d), (d, d)).copy_from(*m);
    }
    let svd = stacked.svd(true, false);
    let u = svd.u.as_ref()?;
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return None;
    }
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-12 * smax).count();
    if rank >= d {
        None
    } else {
        Some(u.columns(0, rank).into_owned())
    }
}

/// Solve a bound problem to the given relative-gap tolerance.
///
/// The certified bound comes from the re-evaluated dual (see module docs),
/// and `Optimal` status requires the recomputed relative gap to be within
/// `tol` — the raw solver status only matters for infeasibility detection.
/// The solver runs on a deterministic tolerance ladder: the dual iterate
/// must be nearly feasible for its clamped repair to stay cheap, so if the
/// first solve leaves too wide a recomputed gap it is retried tighter.
/// Infeasibility is reported as an error: it signals inconsistent
/// observations or a projection fidelity too small for the intervals to
/// overlap.
pub fn solve(problem: &BoundProblem, tol: f64) -> Result<BoundCertificate> {
    problem.validate()?;
    blas_single_thread();
    let assembled = Assembled::build(problem)?;

    let first = (tol * 1e-2).clamp(1e-12, 1e-6);
    let mut best: Option<BoundCertificate> = None;
    let reg = std::env::var("PHASEKEY_REG")
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .unwrap_or(1e-8);
    for (solver_tol, equilibrate) in [(first, true), (1e-12, true), (1e-12, false)] {
        let cert = assembled.solve_once(solver_tol, equilibrate, reg, tol)?;
        let better = match &best {
            None => true,
            Some(b) => cert.gap < b.gap,
        };
        if better {
            best = Some(cert);
        }
        if best.as_ref().is_some_and(|b| b.status == CertStatus::Optimal) {
            break;
        }
    }
    Ok(best.expect("at least one solver attempt"))
}

// Problem data in solver form. The solver works on the LAGRANGIAN DUAL:
//
//     max  sum_k nu_k Q_k + sum_k (a_k lo_k - b_k hi_k) - Tr[T]
//     s.t. C - sum_k net_k A_k + T >= 0,  T >= 0,  a, b >= 0,
//
// (net_k = nu_k for equality rows, a_k - b_k for interval rows). Solving
// this side has two advantages for certification: the multipliers come back
// as cone-exact solver variables rather than dual iterates, and the
// interval endpoints (which span many decades) appear only in the
// objective, where they cannot wreck the conditioning of the constraint
// rows. The dual is also always strictly feasible (take multipliers 0 and
// T slightly above the negative part of C), so the solver reporting
// dual-side infeasibility maps cleanly to inconsistent observations.
//
// Bit-identical (matrix, interval) constraints are merged first: the four
// encoded images of a vacuum state coincide exactly and duplicate rows
// leave the multipliers non-unique. The optional subspace restriction
// applies on top. Certificates are always re-evaluated against the full
// matrices, so neither the dualisation nor the reduction participates in
// the security claim.
struct Assembled {
    c_full: DMatrix<f64>,
    flip: f64,
    c_solve_vec: Vec<f64>,
    amat: CscMatrix<f64>,
    b: Vec<f64>,
    q: Vec<f64>,
    cones: [SupportedConeT<f64>; 3],
    n_vars: usize,
    n_svec: usize,
    /// Deduplicated constraints: (full matrix, interval), equalities first.
    unique: Vec<(DMatrix<f64>, ConstraintInterval)>,
    n_eq: usize,
}

impl Assembled {
    fn build(problem: &BoundProblem) -> Result<Self> {
        let flip = match problem.sense {
            Sense::Minimize => 1.0,
            Sense::Maximize => -1.0,
        };
        let c_full = problem.objective.matrix() * flip;

        let mut eqs: Vec<(DMatrix<f64>, ConstraintInterval)> = Vec::new();
        let mut ineqs: Vec<(DMatrix<f64>, ConstraintInterval)> = Vec::new();
        'outer: for (a, interval) in &problem.constraints {
            let bucket = if interval.width() == 0.0 { &mut eqs } else { &mut ineqs };
            for (seen, seen_interval) in bucket.iter() {
                if seen_interval == interval && seen == a.matrix() {
                    continue 'outer;
                }
            }
            bucket.push((a.matrix().clone(), *interval));
        }
        let n_eq = eqs.len();
        let mut unique = eqs;
        unique.append(&mut ineqs);
        let k = unique.len();
        let n_in = k - n_eq;

        let mut span_inputs: Vec<&DMatrix<f64>> = vec![problem.objective.matrix()];
        span_inputs.extend(unique.iter().map(|(a, _)| a));
        let basis = joint_column_space(&span_inputs);
        let (c_solve, a_solve): (DMatrix<f64>, Vec<DMatrix<f64>>) = match &basis {
            Some(b) => (
                b.transpose() * &c_full * b,
                unique.iter().map(|(a, _)| b.transpose() * a * b).collect(),
            ),
            None => (c_full.clone(), unique.iter().map(|(a, _)| a.clone()).collect()),
        };
        let ds = c_solve.nrows();
        let n_svec = ds * (ds + 1) / 2;
        let c_solve_vec = svec(&c_solve);
        let a_vecs: Vec<Vec<f64>> = a_solve.iter().map(svec).collect();

        // variables: nu (n_eq, free), a (n_in), b (n_in), t = svec(T)
        // rows: a >= 0 and b >= 0 (nonneg), S block (PSD), T block (PSD)
        let n_vars = n_eq + 2 * n_in + n_svec;
        let m_rows = 2 * n_in + 2 * n_svec;
        let mut colptr = Vec::with_capacity(n_vars + 1);
        let mut rowval: Vec<usize> = Vec::new();
        let mut nzval: Vec<f64> = Vec::new();
        colptr.push(0);
        let s_block = 2 * n_in;
        // nu_k columns: svec(A_k) into the S block
        for av in a_vecs.iter().take(n_eq) {
            for (j, &v) in av.iter().enumerate() {
                if v != 0.0 {
                    rowval.push(s_block + j);
                    nzval.push(v);
                }
            }
            colptr.push(rowval.len());
        }
        // a_k columns: -1 in its own nonneg row, svec(A_k) into S
        for (i, av) in a_vecs.iter().skip(n_eq).enumerate() {
            rowval.push(i);
            nzval.push(-1.0);
            for (j, &v) in av.iter().enumerate() {
                if v != 0.0 {
                    rowval.push(s_block + j);
                    nzval.push(v);
                }
            }
            colptr.push(rowval.len());
        }
        // b_k columns: -1 in its own nonneg row, -svec(A_k) into S
        for (i, av) in a_vecs.iter().skip(n_eq).enumerate() {
            rowval.push(n_in + i);
            nzval.push(-1.0);
            for (j, &v) in av.iter().enumerate() {
                if v != 0.0 {
                    rowval.push(s_block + j);
                    nzval.push(-v);
                }
            }
            colptr.push(rowval.len());
        }
        // t_j columns: -1 into S row j and into the T block row j
        for j in 0..n_svec {
            rowval.push(s_block + j);
            nzval.push(-1.0);
            rowval.push(s_block + n_svec + j);
            nzval.push(-1.0);
            colptr.push(rowval.len());
        }
        let amat = CscMatrix::new(m_rows, n_vars, colptr, rowval, nzval);

        let mut b = vec![0.0; 2 * n_in];
        b.extend(c_solve_vec.iter());
        b.extend(vec![0.0; n_svec]);

        // minimise the negated dual objective
        let mut q = Vec::with_capacity(n_vars);
        for (_, interval) in unique.iter().take(n_eq) {
            q.push(-interval.lo());
        }
        for (_, interval) in unique.iter().skip(n_eq) {
            q.push(-interval.lo());
        }
        for (_, interval) in unique.iter().skip(n_eq) {
            q.push(interval.hi());
        }
        q.extend(svec_identity(ds));

        let cones = [
            SupportedConeT::NonnegativeConeT(2 * n_in),
            SupportedConeT::PSDTriangleConeT(ds),
            SupportedConeT::PSDTriangleConeT(ds),
        ];
        Ok(Self {
            c_full,
            flip,
            c_solve_vec,
            amat,
            b,
            q,
            cones,
            n_vars,
            n_svec,
            unique,
            n_eq,
        })
    }

    fn solve_once(
        &self,
        solver_tol: f64,
        equilibrate: bool,
        static_reg: f64,
        tol: f64,
    ) -> Result<BoundCertificate> {
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .tol_gap_abs(solver_tol)
            .tol_gap_rel(solver_tol)
            .tol_feas(solver_tol)
            .static_regularization_constant(static_reg)
            .equilibrate_enable(equilibrate)
            .direct_solve_method("faer".to_string())
            .build()
            .map_err(|e| Error::Usage(format!("solver settings: {e}")))?;
        let p = CscMatrix::zeros((self.n_vars, self.n_vars));
        let mut solver =
            DefaultSolver::new(&p, &self.q, &self.amat, &self.b, &self.cones, settings)
                .map_err(|e| Error::Usage(format!("solver setup: {e}")))?;
        solver.solve();
        let solution = &solver.solution;

        // the solver works on the dual, so dual-side unboundedness there
        // (reported as dual infeasibility) means the original constraints
        // admit no state at all
        if matches!(
            solution.status,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible
        ) {
            return Err(Error::Infeasible(
                "SDP constraints are inconsistent (observations incompatible with the \
                 model states at this projection fidelity)"
                    .into(),
            ));
        }

        // multipliers: nu from the free variables, (a, b) from the exact
        // nonnegative slacks
        let k = self.unique.len();
        let n_in = k - self.n_eq;
        let mut mults = DualPoint { alpha: vec![0.0; k], beta: vec![0.0; k] };
        for ci in 0..k {
            if ci < self.n_eq {
                mults.alpha[ci] = solution.x[ci];
            } else {
                mults.alpha[ci] = solution.s[ci - self.n_eq].max(0.0);
                mults.beta[ci] = solution.s[n_in + ci - self.n_eq].max(0.0);
            }
        }

        // the original primal variable is the dual iterate of the S block;
        // its objective value is only used for gap metadata
        let s_block = 2 * n_in;
        let primal_reduced: f64 = self
            .c_solve_vec
            .iter()
            .zip(&solution.z[s_block..s_block + self.n_svec])
            .map(|(c, z)| c * z)
            .sum();
        let primal = self.flip * primal_reduced;

        // ascend the concave dual from the solver's multipliers until the
        // certificate is tight
        let dual = self.polish_dual(&mut mults, primal_reduced, tol);
        let certified = self.flip * dual;
        let gap = (primal - certified).abs();
        let rel_gap = gap / primal.abs().max(1.0);
        let converged = matches!(
            solution.status,
            SolverStatus::Solved | SolverStatus::AlmostSolved
        );
        let status = if converged && rel_gap <= tol {
            CertStatus::Optimal
        } else {
            CertStatus::Inaccurate
        };

        Ok(BoundCertificate {
            primal_value: primal,
            dual_value: certified,
            gap,
            status,
            certified_bound: certified,
            iterations: solver.info.iterations,
        })
    }

    /// Value of the analytically-repaired dual objective at a multiplier
    /// point, and its supergradient. Equality multipliers (the first n_eq)
    /// live in alpha and are free; interval multipliers are constrained
    /// nonnegative.
    fn dual_value_grad(&self, p: &DualPoint) -> (f64, DualPoint) {
        let k = self.unique.len();
        let mut w = self.c_full.clone();
        for (ci, (a, _)) in self.unique.iter().enumerate() {
            w -= a * (p.alpha[ci] - p.beta[ci]);
        }
        let d = w.nrows();
        let eig = w.symmetric_eigen();
        let mut value = 0.0;
        // projector onto the negative eigenspace, the derivative of the
        // negative-part penalty
        let mut proj = DMatrix::zeros(d, d);
        for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda < 0.0 {
                value += lambda;
                let v = eig.eigenvectors.column(i);
                proj += v * v.transpose();
            }
        }
        let mut grad = DualPoint { alpha: vec![0.0; k], beta: vec![0.0; k] };
        for (ci, (a, interval)) in self.unique.iter().enumerate() {
            let overlap = proj.iter().zip(a.iter()).map(|(x, y)| x * y).sum::<f64>();
            value += p.alpha[ci] * interval.lo() - p.beta[ci] * interval.hi();
            grad.alpha[ci] = interval.lo() - overlap;
            // equality rows carry one free multiplier (alpha); their beta
            // component stays frozen at zero
            grad.beta[ci] = if ci < self.n_eq { 0.0 } else { -interval.hi() + overlap };
        }
        (value, grad)
    }

    /// Ascend the dual from the solver's multipliers. Every iterate is a
    /// valid dual bound, so this can only tighten the certificate; the best
    /// visited point wins. A Polyak supergradient phase does the bulk of the
    /// work; if the target gap is still open (degenerate dual faces make
    /// supergradients zigzag), cyclic exact line searches finish the job.
    fn polish_dual(&self, start: &mut DualPoint, primal_min_space: f64, tol: f64) -> f64 {
        let target = primal_min_space;
        let threshold = 0.25 * tol * target.abs().max(1.0);
        let mut point = start.clone();
        let mut best_value = f64::NEG_INFINITY;
        let mut best_point = point.clone();
        for _ in 0..400 {
            let (value, grad) = self.dual_value_grad(&point);
            if value > best_value {
                best_value = value;
                best_point = point.clone();
            }
            if target - best_value <= threshold {
                return best_value;
            }
            let norm2: f64 = grad
                .alpha
                .iter()
                .chain(grad.beta.iter())
                .map(|g| g * g)
                .sum();
            if norm2 <= 1e-30 {
                break;
            }
            let step = (target - value) / norm2;
            for ci in 0..point.alpha.len() {
                point.alpha[ci] += step * grad.alpha[ci];
                point.beta[ci] += step * grad.beta[ci];
                if ci >= self.n_eq {
                    point.alpha[ci] = point.alpha[ci].max(0.0);
                }
                point.beta[ci] = point.beta[ci].max(0.0);
            }
        }

        // coordinate refinement only pays off near the optimum; a gap this
        // wide means the solve itself failed and will be reported as such
        if target - best_value > 400.0 * threshold {
            return best_value;
        }
        point = best_point;
        let k = self.unique.len();
        for _sweep in 0..2 {
            for coord in 0..2 * k {
                let (ci, is_beta) = (coord % k, coord >= k);
                if is_beta && ci < self.n_eq {
                    continue; // equality rows have one free multiplier
                }
                let current = if is_beta { point.beta[ci] } else { point.alpha[ci] };
                let lower_cap = if !is_beta && ci < self.n_eq { f64::NEG_INFINITY } else { 0.0 };
                let eval = |t: f64| {
                    let mut p = point.clone();
                    if is_beta {
                        p.beta[ci] = t;
                    } else {
                        p.alpha[ci] = t;
                    }
                    self.dual_value_grad(&p).0
                };
                if let Some((t, value)) = line_max(eval, current, lower_cap) {
                    if value > best_value {
                        best_value = value;
                        if is_beta {
                            point.beta[ci] = t;
                        } else {
                            point.alpha[ci] = t;
                        }
                    }
                }
                if target - best_value <= threshold {
                    return best_value;
                }
            }
        }
        best_value
    }
}

#[derive(Clone)]
struct DualPoint {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

/// Maximise a concave 1-D function by bracket expansion plus golden-section
/// search. Returns the best (argument, value) found, or None if no move
/// beats the starting point.
fn line_max(eval: impl Fn(f64) -> f64, start: f64, lower_cap: f64) -> Option<(f64, f64)> {
    let f0 = eval(start);
    // expand a bracket around the start
    let mut h = 0.5 * start.abs().max(1e-3);
    let (mut lo, mut hi) = (start, start);
    let (mut flo, mut fhi) = (f0, f0);
    for _ in 0..40 {
        let mut moved = false;
        let cand = (lo - h).max(lower_cap);
        if cand < lo {
            let f = eval(cand);
            if f > flo {
                lo = cand;
                flo = f;
                moved = true;
            }
        }
        let cand = hi + h;
        let f = eval(cand);
        if f > fhi {
            hi = cand;
            fhi = f;
            moved = true;
        }
        if !moved {
            break;
        }
        h *= 2.0;
    }
    let (mut a, mut b) = (lo - h, hi + h);
    a = a.max(lower_cap);
    // golden-section contraction
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..80 {
        if (b - a).abs() < 1e-14 * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = eval(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = eval(x1);
        }
    }
    let (t, value) = if f1 >= f2 { (x1, f1) } else { (x2, f2) };
    if value > f0 {
        Some((t, value))
    } else {
        None
    }
}

/// The spectral models of the three decoy intensities.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub signal: SpectralModel,
    pub weak: SpectralModel,
    pub vacuum: SpectralModel,
}

impl ModelSet {
    pub fn build(mu_s: f64, mu_w: f64, mu_v: f64, q: f64, truncation: usize) -> Result<Self> {
        Ok(Self {
            signal: SpectralModel::build(mu_s, q, truncation)?,
            weak: SpectralModel::build(mu_w, q, truncation)?,
            vacuum: SpectralModel::build(mu_v, q, truncation)?,
        })
    }

    fn paired<'a>(
        &'a self,
        obs: &'a ObservationSet,
    ) -> Result<[(&'a SpectralModel, &'a IntensityObservations); 3]> {
        let pairs = [
            (&self.signal, &obs.signal),
            (&self.weak, &obs.weak),
            (&self.vacuum, &obs.vacuum),
        ];
        for (model, o) in &pairs {
            if (model.mu() - o.mu).abs() > 1e-12 {
                return Err(Error::Usage(format!(
                    "model intensity {} does not match observed intensity {}",
                    model.mu(),
                    o.mu
                )));
            }
        }
        Ok(pairs)
    }
}

/// Assemble the yield SDP: minimise the tag-1 response over operators
/// consistent with the Z-basis gains of all three intensities.
pub fn build_yield_problem(models: &ModelSet, obs: &ObservationSet) -> Result<BoundProblem> {
    models.signal.tag1_vector_fidelity()?;
    let mut constraints = Vec::with_capacity(3);
    for (model, o) in models.paired(obs)? {
        constraints.push((
            model.renormalized(),
            constraint_interval(o.gain_z, model.f_proj())?,
        ));
    }
    Ok(BoundProblem {
        sense: Sense::Minimize,
        objective: models.signal.eigenvector(1).outer(),
        constraints,
    })
}

/// Transfer the certified SDP minimum back to the untruncated tag-1 yield.
pub fn yield_lower_bound(cert: &BoundCertificate, signal: &SpectralModel) -> Result<f64> {
    cert.require_optimal("yield bound")?;
    let y_prime = cert.certified_bound.clamp(0.0, 1.0);
    expectation_lower(y_prime, signal.tag1_vector_fidelity()?)
}

/// The two unnormalised virtual states of the phase-error estimation and
/// their emission probabilities.
#[derive(Debug, Clone)]
pub struct VirtualStatePair {
    pub states: [FockVector; 2],
    pub probs: [f64; 2],
}

/// Build the virtual states (V_Z0 +- V_Z1)|v>/2 from a unit-norm single-mode
/// state. Their squared norms sum to one.
pub fn virtual_states(v: &FockVector) -> Result<VirtualStatePair> {
    if v.modes() != ModeCount::One {
        return Err(Error::Usage("virtual states take a single-mode input".into()));
    }
    if (v.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Usage(format!(
            "virtual states take a unit-norm input, got norm {}",
            v.norm()
        )));
    }
    let enc0 = apply_encoding(Encoding::Z0, v)?;
    let enc1 = apply_encoding(Encoding::Z1, v)?;
    let s0 = enc0.add(&enc1)?.scale(0.5);
    let s1 = enc0.sub(&enc1)?.scale(0.5);
    let probs = [s0.norm_squared(), s1.norm_squared()];
    Ok(VirtualStatePair { states: [s0, s1], probs })
}

/// Assemble the phase-error SDP for virtual bit beta: maximise the virtual
/// state's response to Bob's (beta xor 1)_X outcome over operators
/// consistent with the observed X rates of every (intensity, setting) pair.
pub fn build_phase_error_problem(
    beta: usize,
    models: &ModelSet,
    obs: &ObservationSet,
    vsp: &VirtualStatePair,
) -> Result<BoundProblem> {
    assert!(beta < 2, "beta is a bit");
    let outcome = 1 - beta;
    let mut constraints = Vec::with_capacity(12);
    for (model, o) in models.paired(obs)? {
        let renorm = model.renormalized();
        for e in Encoding::ALL {
            constraints.push((
                crate::fock::conjugate_by_encoding(e, &renorm)?,
                constraint_interval(o.x_rates[e.index()][outcome], model.f_proj())?,
            ));
        }
    }
    Ok(BoundProblem {
        sense: Sense::Maximize,
        objective: vsp.states[beta].outer(),
        constraints,
    })
}

/// Combine the two phase SDP certificates into the upper bound on the tag-1
/// phase-error rate. Requires a strictly positive yield lower bound; rate
/// evaluation handles the zero-yield case before calling this.
pub fn phase_error_upper_bound(
    certs: [&BoundCertificate; 2],
    signal: &SpectralModel,
    yield_lower: f64,
) -> Result<f64> {
    for (i, cert) in certs.iter().enumerate() {
        cert.require_optimal(&format!("phase-error bound (beta={i})"))?;
    }
    if yield_lower <= 0.0 {
        return Err(Error::Usage(
            "phase-error bound needs a positive yield lower bound".into(),
        ));
    }
    let numerator: f64 = certs
        .iter()
        .map(|c| c.certified_bound.clamp(0.0, 1.0))
        .sum::<f64>()
        .min(1.0);
    let transferred = expectation_upper(numerator, signal.tag1_vector_fidelity()?)?;
    Ok(transferred / yield_lower)
}

//! Primal-dual path-following interior-point engine.
//!
//! Solves min c̄ᵀf subject to A_f f + ⟨A_r, X⟩ = b_r, lb ≤ f ≤ ub, X ⪰ 0
//! (the public surface states the objective in maximization form; c̄ is its
//! negation). The method is an infeasible-start Mehrotra predictor-corrector
//! with Nesterov-Todd scaling: with W the scaling point (W S W = X), the
//! complementarity linearization is ΔX + W ΔS W = R, and eliminating ΔS and
//! the bound multipliers reduces each step to one factorization of the
//! bordered Schur system
//!
//! ```text
//! [ M    A_f ] [Δy]   [rhs₁]          M_{rr'} = ⟨A_r, W A_{r'} W⟩
//! [ A_fᵀ −D_f ] [Δf] = [rhs₂]          D_f = diag(z_l/w_l + z_u/w_u)
//! ```
//!
//! Box-bounded scalars are kept in the KKT system natively rather than
//! embedded in the PSD block. NT scaling matters here: transform-based
//! assemblies have iterates spanning ten orders of magnitude, and the
//! one-sided HKM kernel X A S⁻¹ amplifies roundoff by cond(S), stalling the
//! primal residual around 1e−6 on larger Gram blocks.
//!
//! Numerical structure around the core iteration:
//! - facial-reduction presolve: a constraint `c·X_ii = 0` pins the whole
//!   i-th row and column, eliminating the index from the block. Transform
//!   targets always produce such rows (the constant coefficient vanishes
//!   identically), and without the reduction the primal has no interior
//!   point at all;
//! - rows are normalized to unit max coefficient, LU solves run one round
//!   of iterative refinement, and the best iterate by merit is kept in case
//!   endgame roundoff degrades later steps;
//! - failed attempts are retried (up to three) with the PSD variable
//!   rescaled by the previous solution diagonal, which turns the iterate
//!   correlation-like with entries of order one;
//! - σ is floored once primal infeasibility dominates complementarity, so
//!   the barrier cannot outrun feasibility.
//!
//! When every constraint touches only diagonal PSD entries the whole
//! iteration runs on the diagonal vectors, and if additionally no diagonal
//! entry is shared between rows, M is diagonal and the Schur solve drops to
//! a small bordered system over the rows without matrix entries. That path
//! carries the discretized-LP baseline at grid sizes in the thousands.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, LU};

use super::{EqualityRow, SdpProblem, SdpSolution, SolveOptions, SolveStatus};

/// Fraction-to-boundary step damping.
const TAU: f64 = 0.98;
/// Iterations without merit improvement before giving up.
const STAGNATION_WINDOW: usize = 30;
/// Primal objective magnitude treated as divergence to an unbounded ray.
const OBJ_DIVERGENCE: f64 = 1e10;
/// Dual iterate magnitude that triggers the Farkas certificate test.
const DUAL_DIVERGENCE: f64 = 1e7;

#[derive(Clone)]
enum ConeVal {
    Dense(DMatrix<f64>),
    Diag(DVector<f64>),
}

impl ConeVal {
    fn scaled_identity(n: usize, scale: f64, diag: bool) -> Self {
        if diag {
            ConeVal::Diag(DVector::from_element(n, scale))
        } else {
            ConeVal::Dense(DMatrix::identity(n, n) * scale)
        }
    }

    fn inner(&self, other: &ConeVal) -> f64 {
        match (self, other) {
            (ConeVal::Dense(a), ConeVal::Dense(b)) => a.dot(b),
            (ConeVal::Diag(a), ConeVal::Diag(b)) => a.dot(b),
            _ => unreachable!("cone representation mismatch"),
        }
    }

    fn max_abs(&self) -> f64 {
        match self {
            ConeVal::Dense(a) => a.amax(),
            ConeVal::Diag(a) => {
                if a.is_empty() {
                    0.0
                } else {
                    a.amax()
                }
            }
        }
    }

    fn add_scaled(&mut self, alpha: f64, other: &ConeVal) {
        match (self, other) {
            (ConeVal::Dense(a), ConeVal::Dense(b)) => *a += b * alpha,
            (ConeVal::Diag(a), ConeVal::Diag(b)) => *a += b * alpha,
            _ => unreachable!("cone representation mismatch"),
        }
    }

    fn symmetrize(&mut self) {
        if let ConeVal::Dense(a) = self {
            let t = a.transpose();
            *a += t;
            *a *= 0.5;
        }
    }

    fn all_finite(&self) -> bool {
        match self {
            ConeVal::Dense(a) => a.iter().all(|v| v.is_finite()),
            ConeVal::Diag(a) => a.iter().all(|v| v.is_finite()),
        }
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            ConeVal::Dense(a) => a.clone(),
            ConeVal::Diag(a) => DMatrix::from_diagonal(a),
        }
    }
}

/// ⟨A_r, V⟩ for the symmetric constraint matrix of `row` and a general
/// (not necessarily symmetric) V.
fn row_inner(row: &EqualityRow, v: &ConeVal) -> f64 {
    match v {
        ConeVal::Dense(m) => row
            .psd
            .iter()
            .map(|&(i, j, c)| {
                if i == j {
                    c * m[(i, i)]
                } else {
                    c * (m[(i, j)] + m[(j, i)])
                }
            })
            .sum(),
        ConeVal::Diag(d) => row
            .psd
            .iter()
            .filter(|&&(i, j, _)| i == j)
            .map(|&(i, _, c)| c * d[i])
            .sum(),
    }
}

/// Σ_r w_r A_r as a cone element.
fn combine_rows(rows: &[EqualityRow], w: &DVector<f64>, n: usize, diag: bool) -> ConeVal {
    if diag {
        let mut out = DVector::zeros(n);
        for (r, row) in rows.iter().enumerate() {
            for &(i, _, c) in &row.psd {
                out[i] += w[r] * c;
            }
        }
        ConeVal::Diag(out)
    } else {
        let mut out = DMatrix::zeros(n, n);
        for (r, row) in rows.iter().enumerate() {
            for &(i, j, c) in &row.psd {
                out[(i, j)] += w[r] * c;
                if i != j {
                    out[(j, i)] += w[r] * c;
                }
            }
        }
        ConeVal::Dense(out)
    }
}

struct Data {
    m: usize,
    n: usize,
    k: usize,
    rows: Vec<EqualityRow>,
    rhs: DVector<f64>,
    cbar: DVector<f64>,
    obj: DVector<f64>,
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
    a_free: DMatrix<f64>,
    diag: bool,
    /// Diagonal mode: rows referencing each diagonal index.
    touch: Vec<Vec<(usize, f64)>>,
    /// Diagonal mode with every diagonal index touched by at most one row.
    fast: bool,
    /// Congruence scaling of the PSD block: X_problem = D X̂ D.
    idx_scale: Vec<f64>,
    bnorm: f64,
    cnorm: f64,
    nu_total: f64,
}

impl Data {
    /// Prepares solver data. `idx_scale` applies a congruence X = D X̂ D so
    /// the iterate is solved in balanced units; rows are then normalized to
    /// unit max coefficient. The scaling is taken from an earlier attempt's
    /// solution diagonal rather than from coefficient equilibration:
    /// balancing coefficients can inflate the iterate, and the residual
    /// evaluation floor is ε·max|coefficient·entry|.
    fn build(problem: &SdpProblem, idx_scale: Vec<f64>) -> Self {
        let m = problem.num_free();
        let n = problem.psd_dim();
        let k = problem.num_equalities();

        let mut rows = Vec::with_capacity(k);
        let mut rhs = DVector::zeros(k);
        for (r, row) in problem.equalities().iter().enumerate() {
            let mut row_max = 0.0f64;
            for &(_, c) in &row.free {
                row_max = row_max.max(c.abs());
            }
            for &(i, j, c) in &row.psd {
                row_max = row_max.max((c * idx_scale[i] * idx_scale[j]).abs());
            }
            let s = if row_max > 0.0 { 1.0 / row_max } else { 1.0 };
            rows.push(EqualityRow {
                free: row.free.iter().map(|&(i, c)| (i, c * s)).collect(),
                psd: row
                    .psd
                    .iter()
                    .map(|&(i, j, c)| (i, j, c * s * idx_scale[i] * idx_scale[j]))
                    .collect(),
                rhs: row.rhs * s,
            });
            rhs[r] = row.rhs * s;
        }

        let diag = rows
            .iter()
            .all(|row| row.psd.iter().all(|&(i, j, _)| i == j));
        let mut touch = vec![Vec::new(); if diag { n } else { 0 }];
        if diag {
            for (r, row) in rows.iter().enumerate() {
                for &(i, _, c) in &row.psd {
                    touch[i].push((r, c));
                }
            }
        }
        let fast = diag && touch.iter().all(|t| t.len() <= 1);

        let mut a_free = DMatrix::zeros(k, m);
        for (r, row) in rows.iter().enumerate() {
            for &(i, c) in &row.free {
                a_free[(r, i)] += c;
            }
        }

        let obj = DVector::from_column_slice(problem.objective());
        let cbar = -obj.clone();
        let lower: Vec<_> = problem.bounds().iter().map(|b| b.lower).collect();
        let upper: Vec<_> = problem.bounds().iter().map(|b| b.upper).collect();
        let bnorm = if k == 0 { 0.0 } else { rhs.amax() };
        let cnorm = if m == 0 { 0.0 } else { cbar.amax() };
        let n_l = lower.iter().flatten().count();
        let n_u = upper.iter().flatten().count();
        Data {
            m,
            n,
            k,
            rows,
            rhs,
            cbar,
            obj,
            lower,
            upper,
            a_free,
            diag,
            touch,
            fast,
            idx_scale,
            bnorm,
            cnorm,
            nu_total: (n + n_l + n_u) as f64,
        }
    }

    fn rows_apply(&self, v: &ConeVal) -> DVector<f64> {
        DVector::from_iterator(self.k, self.rows.iter().map(|row| row_inner(row, v)))
    }
}

struct State {
    f: DVector<f64>,
    y: DVector<f64>,
    zl: DVector<f64>,
    zu: DVector<f64>,
    x: ConeVal,
    s: ConeVal,
}

impl State {
    fn initial(data: &Data) -> Self {
        // Size the PSD start from the ratio of right-hand sides to the
        // Frobenius norms of the constraint matrices, which bounds the
        // magnitude a feasible X̂ must reach.
        let mut xscale: f64 = 1.0;
        for row in &data.rows {
            let frob: f64 = row
                .psd
                .iter()
                .map(|&(i, j, c)| if i == j { c * c } else { 2.0 * c * c })
                .sum::<f64>()
                .sqrt();
            if frob > 0.0 {
                xscale = xscale.max(row.rhs.abs() / frob);
            }
        }
        xscale = xscale.min(1e9);
        let sscale = data.cnorm.max(1.0);

        let f = DVector::from_iterator(
            data.m,
            data.lower
                .iter()
                .zip(&data.upper)
                .map(|(l, u)| match (l, u) {
                    (Some(l), Some(u)) => 0.5 * (l + u),
                    (Some(l), None) => l + 1.0,
                    (None, Some(u)) => u - 1.0,
                    (None, None) => 0.0,
                }),
        );
        let zl = DVector::from_iterator(
            data.m,
            data.lower
                .iter()
                .map(|l| if l.is_some() { sscale } else { 0.0 }),
        );
        let zu = DVector::from_iterator(
            data.m,
            data.upper
                .iter()
                .map(|u| if u.is_some() { sscale } else { 0.0 }),
        );
        State {
            f,
            y: DVector::zeros(data.k),
            zl,
            zu,
            x: ConeVal::scaled_identity(data.n, xscale, data.diag),
            s: ConeVal::scaled_identity(data.n, sscale, data.diag),
        }
    }

    fn wl(&self, data: &Data, i: usize) -> f64 {
        self.f[i] - data.lower[i].unwrap_or(f64::NEG_INFINITY)
    }

    fn wu(&self, data: &Data, i: usize) -> f64 {
        data.upper[i].unwrap_or(f64::INFINITY) - self.f[i]
    }

    fn all_finite(&self) -> bool {
        self.f.iter().all(|v| v.is_finite())
            && self.y.iter().all(|v| v.is_finite())
            && self.zl.iter().all(|v| v.is_finite())
            && self.zu.iter().all(|v| v.is_finite())
            && self.x.all_finite()
            && self.s.all_finite()
    }
}

struct Residuals {
    rp: DVector<f64>,
    rd: DVector<f64>,
    rcone: ConeVal,
    pres: f64,
    dres: f64,
    gap_rel: f64,
    mu: f64,
}

fn residuals(data: &Data, st: &State) -> Residuals {
    let rp = &data.rhs - &data.a_free * &st.f - data.rows_apply(&st.x);
    let mut rd = &data.cbar - data.a_free.tr_mul(&st.y);
    for i in 0..data.m {
        rd[i] -= st.zl[i];
        rd[i] += st.zu[i];
    }
    let mut rcone = combine_rows(&data.rows, &st.y, data.n, data.diag);
    match (&mut rcone, &st.s) {
        (ConeVal::Dense(a), ConeVal::Dense(s)) => {
            *a = -&*a - s;
        }
        (ConeVal::Diag(a), ConeVal::Diag(s)) => {
            *a = -&*a - s;
        }
        _ => unreachable!(),
    }

    let pres = if data.k == 0 { 0.0 } else { rp.amax() } / (1.0 + data.bnorm);
    let rd_max = if data.m == 0 { 0.0 } else { rd.amax() };
    let dres = rd_max.max(rcone.max_abs()) / (1.0 + data.cnorm);

    let pobj = data.cbar.dot(&st.f);
    let mut dobj = data.rhs.dot(&st.y);
    for i in 0..data.m {
        if let Some(l) = data.lower[i] {
            dobj += l * st.zl[i];
        }
        if let Some(u) = data.upper[i] {
            dobj -= u * st.zu[i];
        }
    }
    let gap_rel = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());

    let mut compl = st.x.inner(&st.s);
    for i in 0..data.m {
        if data.lower[i].is_some() {
            compl += st.zl[i] * st.wl(data, i);
        }
        if data.upper[i].is_some() {
            compl += st.zu[i] * st.wu(data, i);
        }
    }
    let mu = compl / data.nu_total;

    Residuals {
        rp,
        rd,
        rcone,
        pres,
        dres,
        gap_rel,
        mu,
    }
}

enum Factor {
    Dense {
        chol_x: Cholesky<f64, Dyn>,
        chol_s: Cholesky<f64, Dyn>,
        /// Nesterov-Todd scaling point (W S W = X) and its frame: W = G Gᵀ,
        /// G⁻¹ X G⁻ᵀ = Gᵀ S G = diag(lambda).
        w: DMatrix<f64>,
        g: DMatrix<f64>,
        g_inv: DMatrix<f64>,
        lambda: DVector<f64>,
        system: RefinedLu,
    },
    Diag {
        /// Full bordered system over (Δy, Δf); used when M is not diagonal.
        system: RefinedLu,
    },
    Fast {
        mdiag: Vec<f64>,
        p_rows: Vec<usize>,
        q_rows: Vec<usize>,
        system: RefinedLu,
    },
}

/// LU factorization that keeps its matrix so solves can run one step of
/// iterative refinement; the bordered systems get ill-conditioned as μ → 0
/// and a plain solve loses enough digits to stall the outer iteration.
struct RefinedLu {
    matrix: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

impl RefinedLu {
    fn new(matrix: DMatrix<f64>) -> Self {
        let lu = LU::new(matrix.clone());
        Self { matrix, lu }
    }

    fn solve(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let mut sol = self.lu.solve(rhs)?;
        for _ in 0..2 {
            let residual = rhs - &self.matrix * &sol;
            let correction = self.lu.solve(&residual)?;
            sol += correction;
        }
        Some(sol)
    }
}

/// W A W for the sparse symmetric constraint matrix of `row`.
fn congruence(w: &DMatrix<f64>, row: &EqualityRow, n: usize) -> DMatrix<f64> {
    // U = W A built column-sparse (A has c at (i, j) and (j, i)), then U W.
    let mut u = DMatrix::zeros(n, n);
    for &(i, j, c) in &row.psd {
        let wi = w.column(i).into_owned();
        let wj = w.column(j).into_owned();
        u.column_mut(j).axpy(c, &wi, 1.0);
        if i != j {
            u.column_mut(i).axpy(c, &wj, 1.0);
        }
    }
    u * w
}

/// Diagonal of D_f = z_l/w_l + z_u/w_u.
fn bound_scaling(data: &Data, st: &State) -> DVector<f64> {
    DVector::from_iterator(
        data.m,
        (0..data.m).map(|i| {
            let mut d = 0.0;
            if data.lower[i].is_some() {
                d += st.zl[i] / st.wl(data, i);
            }
            if data.upper[i].is_some() {
                d += st.zu[i] / st.wu(data, i);
            }
            d
        }),
    )
}

fn factorize(data: &Data, st: &State, dfree: &DVector<f64>) -> Option<Factor> {
    match (&st.x, &st.s) {
        (ConeVal::Dense(x), ConeVal::Dense(s)) => {
            let chol_x = Cholesky::new(x.clone())?;
            let chol_s = Cholesky::new(s.clone())?;
            // Nesterov-Todd scaling point: W S W = X, from the SVD of
            // L_sᵀ L_x. In the NT frame X and S share the spectrum Σ, which
            // keeps the products below numerically balanced; the HKM kernel
            // X A S⁻¹ amplifies roundoff by cond(S) instead and loses the
            // last digits of primal feasibility on larger Gram blocks.
            let k_mat = chol_s.l().transpose() * chol_x.l();
            let svd = nalgebra::SVD::new(k_mat, false, true);
            let v_t = svd.v_t.as_ref()?;
            let mut g = chol_x.l() * v_t.transpose();
            for (c, sv) in svd.singular_values.iter().enumerate() {
                if *sv <= 0.0 {
                    return None;
                }
                g.column_mut(c).scale_mut(1.0 / sv.sqrt());
            }
            let w = &g * g.transpose();
            // G⁻¹ = Σ^{1/2} Vᵀ L_x⁻¹.
            let lx_inv = chol_x
                .l()
                .solve_lower_triangular(&DMatrix::identity(data.n, data.n))?;
            let mut g_inv = v_t * lx_inv;
            for (r, sv) in svd.singular_values.iter().enumerate() {
                g_inv.row_mut(r).scale_mut(sv.sqrt());
            }
            let lambda = svd.singular_values.clone();

            // M_{rr'} = ⟨A_r, W A_r' W⟩: symmetric by construction.
            let mut msym = DMatrix::zeros(data.k, data.k);
            for r in 0..data.k {
                let t = congruence(&w, &data.rows[r], data.n);
                let tv = ConeVal::Dense(t);
                for rp in 0..=r {
                    let v = row_inner(&data.rows[rp], &tv);
                    msym[(rp, r)] = v;
                    msym[(r, rp)] = v;
                }
            }
            let system = RefinedLu::new(assemble_bordered(data, &msym, dfree));
            Some(Factor::Dense {
                chol_x,
                chol_s,
                w,
                g,
                g_inv,
                lambda,
                system,
            })
        }
        (ConeVal::Diag(x), ConeVal::Diag(s)) => {
            if data.fast {
                let mut mdiag = vec![0.0; data.k];
                for (r, row) in data.rows.iter().enumerate() {
                    for &(i, _, c) in &row.psd {
                        mdiag[r] += c * c * x[i] / s[i];
                    }
                }
                let (p_rows, q_rows): (Vec<usize>, Vec<usize>) =
                    (0..data.k).partition(|&r| mdiag[r] > 0.0);
                let t = q_rows.len() + data.m;
                let mut small = DMatrix::zeros(t, t);
                for (qi, &r) in q_rows.iter().enumerate() {
                    for &(i, c) in &data.rows[r].free {
                        small[(qi, q_rows.len() + i)] += c;
                        small[(q_rows.len() + i, qi)] += c;
                    }
                }
                // Bottom-right: −(D_f + Σ_P a_r a_rᵀ / M_rr).
                for i in 0..data.m {
                    small[(q_rows.len() + i, q_rows.len() + i)] -= dfree[i];
                }
                for &r in &p_rows {
                    let inv = 1.0 / mdiag[r];
                    for &(i, ci) in &data.rows[r].free {
                        for &(j, cj) in &data.rows[r].free {
                            small[(q_rows.len() + i, q_rows.len() + j)] -= ci * cj * inv;
                        }
                    }
                }
                let system = RefinedLu::new(small);
                Some(Factor::Fast {
                    mdiag,
                    p_rows,
                    q_rows,
                    system,
                })
            } else {
                let mut msym = DMatrix::zeros(data.k, data.k);
                for (d, rows_here) in data.touch.iter().enumerate() {
                    let w = x[d] / s[d];
                    for &(r, c) in rows_here {
                        for &(r2, c2) in rows_here {
                            msym[(r, r2)] += c * c2 * w;
                        }
                    }
                }
                let system = RefinedLu::new(assemble_bordered(data, &msym, dfree));
                Some(Factor::Diag { system })
            }
        }
        _ => unreachable!(),
    }
}

fn assemble_bordered(data: &Data, msym: &DMatrix<f64>, dfree: &DVector<f64>) -> DMatrix<f64> {
    let t = data.k + data.m;
    let mut g = DMatrix::zeros(t, t);
    g.view_mut((0, 0), (data.k, data.k)).copy_from(msym);
    g.view_mut((0, data.k), (data.k, data.m))
        .copy_from(&data.a_free);
    g.view_mut((data.k, 0), (data.m, data.k))
        .copy_from(&data.a_free.transpose());
    for i in 0..data.m {
        g[(data.k + i, data.k + i)] = -dfree[i];
    }
    g
}

struct Direction {
    df: DVector<f64>,
    dy: DVector<f64>,
    dzl: DVector<f64>,
    dzu: DVector<f64>,
    dx: ConeVal,
    ds: ConeVal,
}

/// Complementarity targets for one Newton solve: `r_cone` is the right-hand
/// side R of the NT-scaled equation ΔX + W ΔS W = R (σμ S⁻¹ − X minus the
/// Mehrotra correction), `rcl`/`rcu` the bound targets.
struct Targets {
    r_cone: ConeVal,
    rcl: DVector<f64>,
    rcu: DVector<f64>,
}

fn newton_direction(
    data: &Data,
    st: &State,
    res: &Residuals,
    factor: &Factor,
    tg: &Targets,
) -> Option<Direction> {
    // The NT complementarity linearization is ΔX + W ΔS W = R, so after
    // substituting ΔS = R_D − Σ Δy_r A_r the Schur right-hand side is
    // rhs₁ = r_p − A(R − W R_D W); rhs₂ = r_d − rcl/w_l + rcu/w_u.
    let rhs1 = match (factor, &tg.r_cone, &res.rcone) {
        (Factor::Dense { w, .. }, ConeVal::Dense(r), ConeVal::Dense(rd_cone)) => {
            let term = r - w * rd_cone * w;
            &res.rp - data.rows_apply(&ConeVal::Dense(term))
        }
        (_, ConeVal::Diag(r), ConeVal::Diag(rd_cone)) => {
            let (x, s) = match (&st.x, &st.s) {
                (ConeVal::Diag(x), ConeVal::Diag(s)) => (x, s),
                _ => unreachable!(),
            };
            let term = DVector::from_iterator(
                data.n,
                (0..data.n).map(|d| r[d] - x[d] / s[d] * rd_cone[d]),
            );
            &res.rp - data.rows_apply(&ConeVal::Diag(term))
        }
        _ => unreachable!(),
    };

    let mut rhs2 = res.rd.clone();
    for i in 0..data.m {
        if data.lower[i].is_some() {
            rhs2[i] -= tg.rcl[i] / st.wl(data, i);
        }
        if data.upper[i].is_some() {
            rhs2[i] += tg.rcu[i] / st.wu(data, i);
        }
    }

    let (dy, df) = match factor {
        Factor::Dense { system, .. } | Factor::Diag { system } => {
            let mut rhs = DVector::zeros(data.k + data.m);
            rhs.rows_mut(0, data.k).copy_from(&rhs1);
            rhs.rows_mut(data.k, data.m).copy_from(&rhs2);
            let sol = system.solve(&rhs)?;
            (
                sol.rows(0, data.k).into_owned(),
                sol.rows(data.k, data.m).into_owned(),
            )
        }
        Factor::Fast {
            mdiag,
            p_rows,
            q_rows,
            system,
        } => {
            let t = q_rows.len() + data.m;
            let (sol, df) = if t == 0 {
                // No free variables and every row eliminated against its
                // own diagonal entry; nothing to factor.
                (DVector::zeros(0), DVector::zeros(0))
            } else {
                let mut rhs = DVector::zeros(t);
                for (qi, &r) in q_rows.iter().enumerate() {
                    rhs[qi] = rhs1[r];
                }
                for i in 0..data.m {
                    rhs[q_rows.len() + i] = rhs2[i];
                }
                for &r in p_rows {
                    let scale = rhs1[r] / mdiag[r];
                    for &(i, c) in &data.rows[r].free {
                        rhs[q_rows.len() + i] -= c * scale;
                    }
                }
                let sol = system.solve(&rhs)?;
                let df = sol.rows(q_rows.len(), data.m).into_owned();
                (sol, df)
            };
            let mut dy = DVector::zeros(data.k);
            for (qi, &r) in q_rows.iter().enumerate() {
                dy[r] = sol[qi];
            }
            for &r in p_rows {
                let mut dot = 0.0;
                for &(i, c) in &data.rows[r].free {
                    dot += c * df[i];
                }
                dy[r] = (rhs1[r] - dot) / mdiag[r];
            }
            (dy, df)
        }
    };

    // ΔS = R_D − Σ Δy_r A_r; ΔX = R − W ΔS W.
    let mut ds = combine_rows(&data.rows, &dy, data.n, data.diag);
    match (&mut ds, &res.rcone) {
        (ConeVal::Dense(a), ConeVal::Dense(r)) => *a = r - &*a,
        (ConeVal::Diag(a), ConeVal::Diag(r)) => *a = r - &*a,
        _ => unreachable!(),
    }
    let dx = match (factor, &ds, &tg.r_cone) {
        (Factor::Dense { w, .. }, ConeVal::Dense(dsm), ConeVal::Dense(r)) => {
            let mut v = ConeVal::Dense(r - w * dsm * w);
            v.symmetrize();
            v
        }
        (_, ConeVal::Diag(dsv), ConeVal::Diag(r)) => {
            let (x, s) = match (&st.x, &st.s) {
                (ConeVal::Diag(x), ConeVal::Diag(s)) => (x, s),
                _ => unreachable!(),
            };
            ConeVal::Diag(DVector::from_iterator(
                data.n,
                (0..data.n).map(|d| r[d] - x[d] / s[d] * dsv[d]),
            ))
        }
        _ => unreachable!(),
    };

    let mut dzl = DVector::zeros(data.m);
    let mut dzu = DVector::zeros(data.m);
    for i in 0..data.m {
        if data.lower[i].is_some() {
            dzl[i] = (tg.rcl[i] - st.zl[i] * df[i]) / st.wl(data, i);
        }
        if data.upper[i].is_some() {
            dzu[i] = (tg.rcu[i] + st.zu[i] * df[i]) / st.wu(data, i);
        }
    }

    Some(Direction {
        df,
        dy,
        dzl,
        dzu,
        dx,
        ds,
    })
}

/// Largest α with V + αΔ staying in the cone, via the minimum eigenvalue of
/// L⁻¹ Δ L⁻ᵀ in the dense case.
fn cone_max_step(val: &ConeVal, delta: &ConeVal, chol: Option<&Cholesky<f64, Dyn>>) -> f64 {
    match (val, delta) {
        (ConeVal::Diag(v), ConeVal::Diag(d)) => {
            let mut alpha = f64::INFINITY;
            for i in 0..v.len() {
                if d[i] < 0.0 {
                    alpha = alpha.min(-v[i] / d[i]);
                }
            }
            alpha
        }
        (ConeVal::Dense(_), ConeVal::Dense(d)) => {
            let chol = chol.expect("dense step needs a factorization");
            let l = chol.l();
            let t = match l.solve_lower_triangular(d) {
                Some(t) => t,
                None => return 0.0,
            };
            let h = match l.solve_lower_triangular(&t.transpose()) {
                Some(h) => h,
                None => return 0.0,
            };
            let hsym = (&h + h.transpose()).scale(0.5);
            let min_eig = SymmetricEigen::new(hsym).eigenvalues.min();
            if min_eig >= 0.0 {
                f64::INFINITY
            } else {
                -1.0 / min_eig
            }
        }
        _ => unreachable!(),
    }
}

fn bound_max_steps(data: &Data, st: &State, dir: &Direction) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for i in 0..data.m {
        if data.lower[i].is_some() {
            if dir.df[i] < 0.0 {
                ap = ap.min(-st.wl(data, i) / dir.df[i]);
            }
            if dir.dzl[i] < 0.0 {
                ad = ad.min(-st.zl[i] / dir.dzl[i]);
            }
        }
        if data.upper[i].is_some() {
            if dir.df[i] > 0.0 {
                ap = ap.min(st.wu(data, i) / dir.df[i]);
            }
            if dir.dzu[i] < 0.0 {
                ad = ad.min(-st.zu[i] / dir.dzu[i]);
            }
        }
    }
    (ap, ad)
}

/// Complementarity after hypothetical steps (α_p, α_d), for the Mehrotra
/// centering exponent.
fn trial_complementarity(data: &Data, st: &State, dir: &Direction, ap: f64, ad: f64) -> f64 {
    let mut compl = st.x.inner(&st.s)
        + ap * dir.dx.inner(&st.s)
        + ad * st.x.inner(&dir.ds)
        + ap * ad * dir.dx.inner(&dir.ds);
    for i in 0..data.m {
        if data.lower[i].is_some() {
            compl += (st.wl(data, i) + ap * dir.df[i]) * (st.zl[i] + ad * dir.dzl[i]);
        }
        if data.upper[i].is_some() {
            compl += (st.wu(data, i) - ap * dir.df[i]) * (st.zu[i] + ad * dir.dzu[i]);
        }
    }
    compl
}

/// Predictor targets: drive complementarity to zero (R = −X).
fn affine_targets(data: &Data, st: &State) -> Targets {
    let r_cone = match &st.x {
        ConeVal::Dense(x) => ConeVal::Dense(-x.clone()),
        ConeVal::Diag(x) => ConeVal::Diag(-x.clone()),
    };
    let mut rcl = DVector::zeros(data.m);
    let mut rcu = DVector::zeros(data.m);
    for i in 0..data.m {
        if data.lower[i].is_some() {
            rcl[i] = -st.zl[i] * st.wl(data, i);
        }
        if data.upper[i].is_some() {
            rcu[i] = -st.zu[i] * st.wu(data, i);
        }
    }
    Targets { r_cone, rcl, rcu }
}

/// Corrector targets: recenter toward σμ and subtract the second-order
/// predictor cross terms; R = σμ S⁻¹ − X − sym(ΔX_aff ΔS_aff S⁻¹).
fn corrector_targets(
    data: &Data,
    st: &State,
    factor: &Factor,
    aff: &Direction,
    sigma_mu: f64,
) -> Targets {
    let r_cone = match (&st.x, &st.s, &aff.dx, &aff.ds, factor) {
        (
            ConeVal::Dense(_),
            ConeVal::Dense(_),
            ConeVal::Dense(dx),
            ConeVal::Dense(ds),
            Factor::Dense {
                g, g_inv, lambda, ..
            },
        ) => {
            // Work in the NT frame where X and S are both diag(λ): the
            // second-order cross term divides entrywise by (λ_i + λ_j)/2.
            let dx_s = g_inv * dx * g_inv.transpose();
            let ds_s = g.transpose() * ds * g;
            let cross = &dx_s * &ds_s;
            let mut target_s = DMatrix::zeros(data.n, data.n);
            for i in 0..data.n {
                for j in 0..data.n {
                    let sym_cross = 0.5 * (cross[(i, j)] + cross[(j, i)]);
                    target_s[(i, j)] = -2.0 * sym_cross / (lambda[i] + lambda[j]);
                }
                target_s[(i, i)] += sigma_mu / lambda[i] - lambda[i];
            }
            ConeVal::Dense(g * target_s * g.transpose())
        }
        (ConeVal::Diag(x), ConeVal::Diag(s), ConeVal::Diag(dx), ConeVal::Diag(ds), _) => {
            ConeVal::Diag(DVector::from_iterator(
                data.n,
                (0..data.n).map(|d| (sigma_mu - dx[d] * ds[d]) / s[d] - x[d]),
            ))
        }
        _ => unreachable!(),
    };
    let mut rcl = DVector::zeros(data.m);
    let mut rcu = DVector::zeros(data.m);
    for i in 0..data.m {
        if data.lower[i].is_some() {
            rcl[i] = sigma_mu - st.zl[i] * st.wl(data, i) - aff.dzl[i] * aff.df[i];
        }
        if data.upper[i].is_some() {
            rcu[i] = sigma_mu - st.zu[i] * st.wu(data, i) + aff.dzu[i] * aff.df[i];
        }
    }
    Targets { r_cone, rcl, rcu }
}

/// Normalized Farkas test for primal infeasibility: a dual ray with
/// Σ y_r A_r ⪯ 0, A_fᵀy + z_l − z_u = 0, and positive dual objective.
fn farkas_infeasible(data: &Data, st: &State) -> bool {
    let scale = st
        .y
        .amax()
        .max(if data.m == 0 { 0.0 } else { st.zl.amax().max(st.zu.amax()) });
    if !scale.is_finite() || scale <= DUAL_DIVERGENCE {
        return false;
    }
    let inv = 1.0 / scale;
    let yhat = &st.y * inv;

    let mut free_res = 0.0f64;
    for i in 0..data.m {
        let mut v = 0.0;
        for r in 0..data.k {
            v += data.a_free[(r, i)] * yhat[r];
        }
        v += st.zl[i] * inv - st.zu[i] * inv;
        free_res = free_res.max(v.abs());
    }
    if free_res > 1e-6 {
        return false;
    }

    let combined = combine_rows(&data.rows, &yhat, data.n, data.diag);
    let min_eig_neg = match &combined {
        ConeVal::Diag(v) => -v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)),
        ConeVal::Dense(mat) => {
            let sym = (mat + mat.transpose()).scale(0.5);
            -SymmetricEigen::new(sym).eigenvalues.max()
        }
    };
    // S_ray = −Σ ŷ_r A_r must be PSD.
    if min_eig_neg < -1e-6 {
        return false;
    }

    let mut farkas_obj = data.rhs.dot(&yhat);
    for i in 0..data.m {
        if let Some(l) = data.lower[i] {
            farkas_obj += l * st.zl[i] * inv;
        }
        if let Some(u) = data.upper[i] {
            farkas_obj -= u * st.zu[i] * inv;
        }
    }
    farkas_obj > 1e-6
}

fn finish(
    data: &Data,
    pre: &Presolved,
    best: Option<&BestIterate>,
    st: &State,
    res: &Residuals,
    status: SolveStatus,
    iters: usize,
) -> SdpSolution {
    // Prefer the best iterate on non-terminal statuses; late iterations can
    // be strictly worse once roundoff dominates the steps.
    let (f, x, pres, gap_rel, obj) = match best {
        Some(b) if b.merit < res.pres.max(res.dres).max(res.gap_rel) => {
            (&b.f, &b.x, b.pres, b.gap_rel, b.obj)
        }
        _ => (&st.f, &st.x, res.pres, res.gap_rel, data.obj.dot(&st.f)),
    };
    // Undo the congruence scaling (X = D X̂ D) and re-embed the reduced block
    // into the original index set; eliminated rows and columns are zero.
    let small = x.to_matrix();
    let mut psd_matrix = DMatrix::zeros(pre.orig_psd_dim, pre.orig_psd_dim);
    for (a, &ia) in pre.kept.iter().enumerate() {
        for (b, &ib) in pre.kept.iter().enumerate() {
            psd_matrix[(ia, ib)] = small[(a, b)] * data.idx_scale[a] * data.idx_scale[b];
        }
    }
    SdpSolution {
        status,
        free_values: f.iter().copied().collect(),
        psd_matrix,
        objective_value: obj,
        primal_residual: pres,
        dual_gap_estimate: gap_rel,
        iterations: iters,
    }
}

/// Facial reduction: rows `c·X_ii = 0` (no free part) force the whole i-th
/// row and column of X to zero, so those indices are dropped from the block.
/// Rows left empty by the elimination are dropped when trivially satisfied.
struct Presolved {
    reduced: SdpProblem,
    /// Original index of each kept PSD index.
    kept: Vec<usize>,
    orig_psd_dim: usize,
}

enum PresolveOutcome {
    Reduced(Presolved),
    /// A constraint is unsatisfiable on its own (e.g. X_ii < 0).
    TriviallyInfeasible,
}

fn presolve(problem: &SdpProblem) -> PresolveOutcome {
    let n = problem.psd_dim();
    let mut pinned = vec![false; n];
    loop {
        let mut changed = false;
        for row in problem.equalities() {
            if !row.free.is_empty() {
                continue;
            }
            let live: Vec<&(usize, usize, f64)> = row
                .psd
                .iter()
                .filter(|&&(i, j, _)| !pinned[i] && !pinned[j])
                .collect();
            if let [&(i, j, c)] = live.as_slice() {
                if i == j && c.abs() > 1e-12 {
                    let value = row.rhs / c;
                    if value < -1e-12 {
                        return PresolveOutcome::TriviallyInfeasible;
                    }
                    if value.abs() <= 1e-12 && !pinned[i] {
                        pinned[i] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }

    let kept: Vec<usize> = (0..n).filter(|&i| !pinned[i]).collect();
    if kept.len() == n {
        return PresolveOutcome::Reduced(Presolved {
            reduced: problem.clone(),
            kept,
            orig_psd_dim: n,
        });
    }
    // Keep at least one index so the block stays non-empty.
    let kept = if kept.is_empty() { vec![0] } else { kept };
    let mut new_index = vec![usize::MAX; n];
    for (new, &old) in kept.iter().enumerate() {
        new_index[old] = new;
    }

    let mut reduced = SdpProblem::new(
        problem.num_free(),
        kept.len(),
        problem.objective().to_vec(),
    );
    for (v, b) in problem.bounds().iter().enumerate() {
        reduced.set_bound(v, *b);
    }
    for row in problem.equalities() {
        let psd: Vec<(usize, usize, f64)> = row
            .psd
            .iter()
            .filter(|&&(i, j, _)| new_index[i] != usize::MAX && new_index[j] != usize::MAX)
            .map(|&(i, j, c)| (new_index[i], new_index[j], c))
            .collect();
        if psd.is_empty() && row.free.is_empty() {
            if row.rhs.abs() > 1e-9 {
                return PresolveOutcome::TriviallyInfeasible;
            }
            continue;
        }
        reduced.add_equality(row.free.clone(), psd, row.rhs);
    }
    PresolveOutcome::Reduced(Presolved {
        reduced,
        kept,
        orig_psd_dim: n,
    })
}

/// Snapshot of the best iterate seen, returned instead of a later iterate
/// that endgame roundoff has degraded.
struct BestIterate {
    merit: f64,
    f: DVector<f64>,
    x: ConeVal,
    pres: f64,
    gap_rel: f64,
    obj: f64,
}

pub(super) fn run(problem: &SdpProblem, options: &SolveOptions) -> SdpSolution {
    let pre = match presolve(problem) {
        PresolveOutcome::Reduced(p) => p,
        PresolveOutcome::TriviallyInfeasible => {
            return SdpSolution {
                status: SolveStatus::Infeasible,
                free_values: vec![0.0; problem.num_free()],
                psd_matrix: DMatrix::zeros(problem.psd_dim(), problem.psd_dim()),
                objective_value: f64::NAN,
                primal_residual: f64::INFINITY,
                dual_gap_estimate: f64::INFINITY,
                iterations: 0,
            }
        }
    };
    // The Gram blocks of transform-based problems carry entries spanning
    // ten orders of magnitude, which the endgame cannot survive in raw
    // units. After a failed attempt, rescale by that attempt's solution
    // diagonal (the scaled iterate becomes correlation-like with entries
    // of order one) and solve again, up to three attempts, keeping the best.
    let n_red = pre.reduced.psd_dim();
    let mut delta = vec![1.0f64; n_red];
    let mut result: Option<SdpSolution> = None;
    let mut total_iterations = 0usize;
    for _attempt in 0..3 {
        let data = Data::build(&pre.reduced, delta.clone());
        let mut sol = attempt(&data, &pre, options);
        total_iterations += sol.iterations;
        sol.iterations = total_iterations;

        let terminal = matches!(
            sol.status,
            SolveStatus::Optimal | SolveStatus::Infeasible | SolveStatus::Unbounded
        );
        let mut max_diag: f64 = 0.0;
        for &ia in &pre.kept {
            max_diag = max_diag.max(sol.psd_matrix[(ia, ia)]);
        }
        let merit = sol.primal_residual.max(sol.dual_gap_estimate);
        let improved = result
            .as_ref()
            .is_none_or(|best: &SdpSolution| {
                merit < best.primal_residual.max(best.dual_gap_estimate)
            });
        if improved {
            result = Some(sol.clone());
        }
        if terminal {
            return sol;
        }
        if !max_diag.is_finite() || max_diag <= 0.0 {
            break;
        }
        delta = pre
            .kept
            .iter()
            .map(|&ia| sol.psd_matrix[(ia, ia)].max(1e-10 * max_diag).sqrt())
            .collect();
    }
    let mut out = result.expect("at least one attempt ran");
    out.iterations = total_iterations;
    out
}

fn attempt(data: &Data, pre: &Presolved, options: &SolveOptions) -> SdpSolution {
    let mut st = State::initial(data);

    let mut best_merit = f64::INFINITY;
    let mut stagnant = 0usize;
    let mut obj_at_reset = 0.0f64;
    let mut dres_at_reset = f64::INFINITY;
    let mut best: Option<BestIterate> = None;

    let mut res = residuals(data, &st);
    for iter in 0..options.max_iter {
        if !st.all_finite() {
            return finish(data, pre, best.as_ref(), &st, &res, SolveStatus::NumericalFailure, iter);
        }
        res = residuals(data, &st);

        let iterate_merit = res.pres.max(res.dres).max(res.gap_rel);
        if best.as_ref().is_none_or(|b| iterate_merit < b.merit) {
            best = Some(BestIterate {
                merit: iterate_merit,
                f: st.f.clone(),
                x: st.x.clone(),
                pres: res.pres,
                gap_rel: res.gap_rel,
                obj: data.obj.dot(&st.f),
            });
        }

        if res.pres <= options.tol_feas
            && res.dres <= options.tol_feas
            && res.gap_rel <= options.tol_gap
        {
            return finish(data, pre, None, &st, &res, SolveStatus::Optimal, iter);
        }
        let pobj_max = data.obj.dot(&st.f);
        if pobj_max.abs() > OBJ_DIVERGENCE && res.pres <= options.tol_feas.max(1e-6) {
            // Feasible iterates with exploding objective: an improving ray.
            let status = if pobj_max > 0.0 {
                SolveStatus::Unbounded
            } else {
                SolveStatus::NumericalFailure
            };
            return finish(data, pre, None, &st, &res, status, iter);
        }
        if farkas_infeasible(data, &st) {
            return finish(data, pre, None, &st, &res, SolveStatus::Infeasible, iter);
        }

        // Stagnation: require at least 10% merit reduction per window. When
        // it fires, a dual residual frozen away from zero together with an
        // escaping objective is the signature of dual infeasibility, i.e. an
        // unbounded primal that never trips the absolute divergence bound.
        let merit = res.pres.max(res.dres).max(res.gap_rel);
        if merit < best_merit * 0.9 {
            best_merit = best_merit.min(merit);
            stagnant = 0;
            obj_at_reset = pobj_max;
            dres_at_reset = res.dres;
        } else {
            best_merit = best_merit.min(merit);
            stagnant += 1;
            if stagnant >= STAGNATION_WINDOW {
                let dual_stuck = res.dres >= 1e-6 && res.dres >= 0.5 * dres_at_reset;
                let escaped = pobj_max > 5.0 * obj_at_reset.abs().max(0.1);
                let status = if dual_stuck && escaped {
                    SolveStatus::Unbounded
                } else {
                    SolveStatus::NumericalFailure
                };
                return finish(data, pre, best.as_ref(), &st, &res, status, iter);
            }
        }

        let dfree = bound_scaling(data, &st);
        let factor = match factorize(data, &st, &dfree) {
            Some(f) => f,
            None => return finish(data, pre, best.as_ref(), &st, &res, SolveStatus::NumericalFailure, iter),
        };

        // Predictor.
        let aff_tg = affine_targets(data, &st);
        let aff = match newton_direction(data, &st, &res, &factor, &aff_tg) {
            Some(d) => d,
            None => return finish(data, pre, best.as_ref(), &st, &res, SolveStatus::NumericalFailure, iter),
        };
        let chol_x = match &factor {
            Factor::Dense { chol_x, .. } => Some(chol_x),
            _ => None,
        };
        let chol_s = match &factor {
            Factor::Dense { chol_s, .. } => Some(chol_s),
            _ => None,
        };
        let (bp, bd) = bound_max_steps(data, &st, &aff);
        let ap_max = cone_max_step(&st.x, &aff.dx, chol_x).min(bp);
        let ad_max = cone_max_step(&st.s, &aff.ds, chol_s).min(bd);
        let ap_aff = ap_max.min(1.0);
        let ad_aff = ad_max.min(1.0);
        let mu_aff = trial_complementarity(data, &st, &aff, ap_aff, ad_aff) / data.nu_total;
        let mut sigma = (mu_aff / res.mu).max(0.0).powi(3).min(1.0);
        // Keep the barrier from outrunning feasibility: once primal
        // infeasibility dominates the complementarity measure, recenter
        // instead of diving, or the Newton directions turn into noise long
        // before the residual has caught up.
        let compl_measure = res.mu.max(res.gap_rel);
        if res.pres > 100.0 * compl_measure {
            sigma = sigma.max(0.9);
        } else if res.pres > 10.0 * compl_measure {
            sigma = sigma.max(0.5);
        }

        // Corrector, reusing the factorization.
        let corr_tg = corrector_targets(data, &st, &factor, &aff, sigma * res.mu);
        let dir = match newton_direction(data, &st, &res, &factor, &corr_tg) {
            Some(d) => d,
            None => return finish(data, pre, best.as_ref(), &st, &res, SolveStatus::NumericalFailure, iter),
        };
        let (bp, bd) = bound_max_steps(data, &st, &dir);
        let ap = (TAU * cone_max_step(&st.x, &dir.dx, chol_x).min(bp)).min(1.0);
        let ad = (TAU * cone_max_step(&st.s, &dir.ds, chol_s).min(bd)).min(1.0);

        st.f += &dir.df * ap;
        st.x.add_scaled(ap, &dir.dx);
        st.x.symmetrize();
        st.y += &dir.dy * ad;
        st.s.add_scaled(ad, &dir.ds);
        st.s.symmetrize();
        for i in 0..data.m {
            st.zl[i] += ad * dir.dzl[i];
            st.zu[i] += ad * dir.dzu[i];
        }

        if std::env::var_os("RATEOPT_IPM_TRACE").is_some() {
            eprintln!(
                "iter {iter:3} pres {:9.2e} dres {:9.2e} gap {:9.2e} mu {:9.2e} sigma {sigma:6.3} ap {ap:6.4} ad {ad:6.4} |X| {:8.1e} |S| {:8.1e}",
                res.pres, res.dres, res.gap_rel, res.mu, st.x.max_abs(), st.s.max_abs()
            );
        }
    }

    res = residuals(data, &st);
    finish(data, pre, best.as_ref(), &st, &res, SolveStatus::MaxIterations, options.max_iter)
}

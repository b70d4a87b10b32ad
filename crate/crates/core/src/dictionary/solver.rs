use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::prox::{restrict_columns, top_columns};
use crate::config::{DictionaryInit, LearnConfig};
use crate::error::{Error, Result};
use crate::linalg::{
    frob_sq, gaussian, gram_logdet, gram_pseudo_gradient, solve_spd_left, solve_spd_right, Mat,
};
use crate::model::{stack, Dictionary, SparseCodes, StackedEmbeddings};

/// `½‖X − DS‖²_F − γ·log det(DᵀD)`.
pub fn objective_p2(d: &Mat, s: &Mat, x: &Mat, gamma: f64) -> Result<f64> {
    if d.ncols() != s.nrows() || d.nrows() != x.nrows() || s.ncols() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "D {:?}, S {:?}, X {:?}",
            d.shape(),
            s.shape(),
            x.shape()
        )));
    }
    let fit = 0.5 * frob_sq(&(x - d * s));
    if gamma == 0.0 {
        return Ok(fit);
    }
    Ok(fit - gamma * gram_logdet(d)?)
}

/// Convex surrogate of [`objective_p2`] around `(d_q, s_q)`: the bilinear fit
/// is split into its two partial fits and `−γ·log det` is linearised. Value
/// and gradient coincide with the objective's at `(d_q, s_q)` in both blocks.
pub fn surrogate_objective(
    d: &Mat,
    s: &Mat,
    d_q: &Mat,
    s_q: &Mat,
    x: &Mat,
    gamma: f64,
) -> Result<f64> {
    let mut value = 0.5 * frob_sq(&(x - d * s_q)) + 0.5 * frob_sq(&(x - d_q * s));
    if gamma != 0.0 {
        // ∇ log det(DᵀD) = 2·D(DᵀD)⁻¹
        let grad = gram_pseudo_gradient(d_q)? * 2.0;
        value -= gamma * grad.dot(&(d - d_q));
    }
    Ok(value)
}

/// Residual norms of one iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `‖D − P‖_F`
    pub primal_dict: f64,
    /// `‖Sᵢᵀ − Zᵢ‖_F` per agent.
    pub primal_codes: Vec<f64>,
    /// `ρ‖P⁺ − P‖_F`
    pub dual_dict: f64,
    /// `ρ‖Zᵢ⁺ − Zᵢ‖_F` per agent.
    pub dual_codes: Vec<f64>,
}

impl Residuals {
    pub fn max_primal(&self) -> f64 {
        self.primal_codes.iter().copied().fold(self.primal_dict, f64::max)
    }

    pub fn max_dual(&self) -> f64 {
        self.dual_codes.iter().copied().fold(self.dual_dict, f64::max)
    }
}

/// All variables of the ADMM recursion at iteration `step`.
///
/// `codes[i]` is `Sᵢ` (`d × n`); `consensus[i]` is `Zᵢ` and `duals[i]` is
/// `Uᵢ`, both `n × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub dict: Mat,
    pub codes: Vec<Mat>,
    pub oblique: Mat,
    pub consensus: Vec<Mat>,
    pub dict_dual: Mat,
    pub duals: Vec<Mat>,
    pub rho: f64,
    pub step: usize,
    pub alpha: f64,
    pub residuals: Residuals,
}

impl SolverState {
    pub fn stacked_codes(&self) -> Mat {
        stack(self.codes.iter())
    }
}

/// Closed-form minimiser of the dictionary block of the augmented Lagrangian
/// with the log-det penalty linearised at the current iterate:
/// `D̃ = (X Sᵀ + ρ(P − R) + γ D(DᵀD)⁻¹)(S Sᵀ + ρI)⁻¹`.
pub fn update_dictionary(state: &SolverState, x: &StackedEmbeddings, gamma: f64) -> Result<Mat> {
    let d = x.dim();
    let s = state.stacked_codes();
    let a = &s * s.transpose() + Mat::identity(d, d) * state.rho;
    let mut rhs = x.stacked() * s.transpose() + (&state.oblique - &state.dict_dual) * state.rho;
    if gamma != 0.0 {
        rhs += gram_pseudo_gradient(&state.dict)? * gamma;
    }
    solve_spd_right(&rhs, &a)
}

/// Value and gradient of the dictionary block solved by [`update_dictionary`],
/// evaluated at `d`.
pub fn dictionary_subproblem(
    d: &Mat,
    state: &SolverState,
    x: &StackedEmbeddings,
    gamma: f64,
) -> Result<(f64, Mat)> {
    let s = state.stacked_codes();
    let fit = x.stacked() - d * &s;
    let pen = d - &state.oblique + &state.dict_dual;
    let mut value = 0.5 * frob_sq(&fit) + 0.5 * state.rho * frob_sq(&pen);
    let mut grad = -(&fit * s.transpose()) + &pen * state.rho;
    if gamma != 0.0 {
        let lin = gram_pseudo_gradient(&state.dict)?;
        value -= gamma * lin.dot(d);
        grad -= lin * gamma;
    }
    Ok((value, grad))
}

fn codes_rhs(state: &SolverState, x: &StackedEmbeddings, agent: usize) -> Mat {
    state.dict.transpose() * x.agent(agent)
        + (&state.consensus[agent] - &state.duals[agent]).transpose() * state.rho
}

/// `S̃ᵢ = (DᵀD + ρI)⁻¹ (Dᵀ Xᵢ + ρ(Zᵢᵀ − Uᵢᵀ))`.
pub fn update_codes(state: &SolverState, x: &StackedEmbeddings, agent: usize) -> Result<Mat> {
    if agent >= x.num_agents() {
        return Err(Error::DimensionMismatch(format!(
            "agent {agent} out of range for {} agents",
            x.num_agents()
        )));
    }
    let d = x.dim();
    let b = state.dict.transpose() * &state.dict + Mat::identity(d, d) * state.rho;
    solve_spd_left(&b, &codes_rhs(state, x, agent))
}

/// Column-wise normalisation of `m + dual`. A zero column is replaced by the
/// first canonical basis vector.
pub fn project_oblique(m: &Mat, dual: &Mat) -> Mat {
    let mut out = m + dual;
    for (k, mut col) in out.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm > 0.0 && norm.is_finite() {
            col /= norm;
        } else {
            warn!("oblique projection: column {k} vanished, resetting to e_1");
            col.fill(0.0);
            col[0] = 1.0;
        }
    }
    out
}

fn consensus_prox(y: &Mat, agent: usize, config: &LearnConfig) -> Result<Mat> {
    match &config.fixed_supports {
        Some(supports) => Ok(restrict_columns(y, &supports[agent])),
        None => {
            let keep = top_columns(y, config.budgets.for_agent(agent).min(y.ncols()))?;
            Ok(restrict_columns(y, &keep))
        }
    }
}

/// One pass of the recursion: smoothed dictionary and code updates, oblique
/// projection, consensus prox, then dual ascent.
pub fn sca_admm_step(
    state: &SolverState,
    x: &StackedEmbeddings,
    config: &LearnConfig,
) -> Result<SolverState> {
    let alpha = state.alpha;
    let rho = state.rho;
    let dim = x.dim();

    let d_tilde = update_dictionary(state, x, config.gamma)?;
    let dict = &state.dict * (1.0 - alpha) + d_tilde * alpha;

    let b = state.dict.transpose() * &state.dict + Mat::identity(dim, dim) * rho;
    let b_chol = b
        .cholesky()
        .ok_or_else(|| Error::SingularGramian("DᵀD + ρI is not positive definite".into()))?;

    let per_agent: Vec<Result<(Mat, Mat, Mat, f64, f64)>> = (0..x.num_agents())
        .into_par_iter()
        .map(|i| {
            let s_tilde = b_chol.solve(&codes_rhs(state, x, i));
            let s_new = &state.codes[i] * (1.0 - alpha) + s_tilde * alpha;
            let s_t = s_new.transpose();
            let z_new = consensus_prox(&(&s_t + &state.duals[i]), i, config)?;
            let u_new = &state.duals[i] + &s_t - &z_new;
            let primal = (&s_t - &z_new).norm();
            let dual = rho * (&z_new - &state.consensus[i]).norm();
            Ok((s_new, z_new, u_new, primal, dual))
        })
        .collect();

    let oblique = project_oblique(&dict, &state.dict_dual);
    let dict_dual = &state.dict_dual + &dict - &oblique;

    let mut residuals = Residuals {
        primal_dict: (&dict - &oblique).norm(),
        dual_dict: rho * (&oblique - &state.oblique).norm(),
        ..Residuals::default()
    };
    let mut codes = Vec::with_capacity(per_agent.len());
    let mut consensus = Vec::with_capacity(per_agent.len());
    let mut duals = Vec::with_capacity(per_agent.len());
    for item in per_agent {
        let (s, z, u, primal, dual) = item?;
        codes.push(s);
        consensus.push(z);
        duals.push(u);
        residuals.primal_codes.push(primal);
        residuals.dual_codes.push(dual);
    }

    let step = state.step + 1;
    Ok(SolverState {
        dict,
        codes,
        oblique,
        consensus,
        dict_dual,
        duals,
        rho,
        step,
        alpha: config.alpha(step),
        residuals,
    })
}

const NEW_DIRECTION_FRACTION: f64 = 0.25;

/// Greedy column-pivoted pick of up to `d` data columns: each round takes the
/// column with the largest residual after projecting out the earlier picks.
/// Picking stops once that residual is below a quarter of the column's norm;
/// the remaining atoms are an orthonormal basis of the complement of the
/// picked span, built from Gaussian draws.
fn data_column_atoms(x: &Mat, rng: &mut ChaCha8Rng) -> Mat {
    let d = x.nrows();
    let mut residual = x.clone();
    let floor = 1e-8 * x.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut atoms = Mat::zeros(d, d);
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let (j, norm) = residual
            .column_iter()
            .map(|c| c.norm())
            .enumerate()
            .fold((0, 0.0), |best, (j, r)| if r > best.1 { (j, r) } else { best });
        // A column mostly explained by earlier picks would enter as a
        // near-duplicate atom.
        if norm <= floor || norm < NEW_DIRECTION_FRACTION * x.column(j).norm() {
            break;
        }
        atoms.set_column(k, &x.column(j));
        let q = residual.column(j) / norm;
        let coeffs = q.transpose() * &residual;
        residual -= &q * coeffs;
        basis.push(q);
    }
    while basis.len() < d {
        let mut v = gaussian(rng, d, 1).column(0).into_owned();
        for _ in 0..2 {
            for q in &basis {
                v -= q * q.dot(&v);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            v /= norm;
            atoms.set_column(basis.len(), &v);
            basis.push(v);
        }
    }
    atoms
}

/// Seeded warm start: unit-norm dictionary, codes `DᵀXᵢ` (least-squares
/// codes for a data-column start), feasible splitting variables and zero
/// duals.
pub fn initial_state(x: &StackedEmbeddings, config: &LearnConfig) -> Result<SolverState> {
    let dim = x.dim();
    let n = x.samples();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = match config.init {
        DictionaryInit::Gaussian => gaussian(&mut rng, dim, dim),
        DictionaryInit::DataColumns => data_column_atoms(x.stacked(), &mut rng),
    };
    let dict = project_oblique(&start, &Mat::zeros(dim, dim));
    let codes: Vec<Mat> = match config.init {
        DictionaryInit::Gaussian => (0..x.num_agents())
            .map(|i| dict.transpose() * x.agent(i))
            .collect(),
        // Data atoms are far from orthogonal, so correlations would credit
        // atoms of other subspaces; least-squares codes do not.
        DictionaryInit::DataColumns => {
            let gram = dict.transpose() * &dict;
            (0..x.num_agents())
                .map(|i| solve_spd_left(&gram, &(dict.transpose() * x.agent(i))))
                .collect::<Result<_>>()?
        }
    };
    let consensus = codes
        .iter()
        .enumerate()
        .map(|(i, s)| consensus_prox(&s.transpose(), i, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(SolverState {
        oblique: dict.clone(),
        dict,
        codes,
        consensus,
        dict_dual: Mat::zeros(dim, dim),
        duals: vec![Mat::zeros(n, dim); x.num_agents()],
        rho: config.rho,
        step: 0,
        alpha: config.alpha(0),
        residuals: Residuals::default(),
    })
}

/// Per-iteration traces and the stopping outcome of [`learn_dictionary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub converged: bool,
    /// Set when the loop stopped at `max_iters` without meeting the residual test.
    pub max_iters_exceeded: bool,
    pub primal_residual: Vec<f64>,
    pub dual_residual: Vec<f64>,
    pub primal_tolerance: Vec<f64>,
    pub dual_tolerance: Vec<f64>,
    pub objective: Vec<f64>,
    pub stepsize: Vec<f64>,
    /// `‖X − DS‖²_F` of the returned dictionary and codes.
    pub final_fit: f64,
    pub final_objective: f64,
    pub data_energy: f64,
}

#[derive(Debug, Clone)]
pub struct DictionaryFit {
    pub dictionary: Dictionary,
    pub codes: Vec<SparseCodes>,
    pub report: ConvergenceReport,
    pub state: SolverState,
}

fn residual_tolerances(state: &SolverState, config: &LearnConfig) -> (bool, f64, f64) {
    let tol = |scale: f64| config.eps_abs + config.eps_rel * scale;
    let dict_tol = tol(state.dict.norm().max(state.oblique.norm()));
    let mut ok = state.residuals.primal_dict <= dict_tol && state.residuals.dual_dict <= dict_tol;
    let mut loosest = dict_tol;
    let mut tightest = dict_tol;
    for i in 0..state.codes.len() {
        let t = tol(state.codes[i].norm().max(state.consensus[i].norm()));
        ok &= state.residuals.primal_codes[i] <= t && state.residuals.dual_codes[i] <= t;
        loosest = loosest.max(t);
        tightest = tightest.min(t);
    }
    (ok, tightest, loosest)
}

/// Runs the recursion until the primal and dual residuals pass their
/// tolerances or `max_iters` is reached. The returned dictionary is the
/// oblique iterate `P` and each agent's codes are zeroed outside the support
/// of its consensus variable. Hitting `max_iters` is reported, not raised.
pub fn learn_dictionary(x: &StackedEmbeddings, config: &LearnConfig) -> Result<DictionaryFit> {
    let mut config = config.clone();
    config.resolve_budgets(x.dim());
    config.validate(x.num_agents(), x.dim())?;

    let mut state = initial_state(x, &config)?;
    let mut report = ConvergenceReport {
        iterations: 0,
        converged: false,
        max_iters_exceeded: false,
        primal_residual: Vec::new(),
        dual_residual: Vec::new(),
        primal_tolerance: Vec::new(),
        dual_tolerance: Vec::new(),
        objective: Vec::new(),
        stepsize: Vec::new(),
        final_fit: 0.0,
        final_objective: 0.0,
        data_energy: frob_sq(x.stacked()),
    };

    while state.step < config.max_iters {
        let alpha = state.alpha;
        state = sca_admm_step(&state, x, &config)?;
        let (ok, tightest, _) = residual_tolerances(&state, &config);
        report.primal_residual.push(state.residuals.max_primal());
        report.dual_residual.push(state.residuals.max_dual());
        report.primal_tolerance.push(tightest);
        report.dual_tolerance.push(tightest);
        report.stepsize.push(alpha);
        report.objective.push(
            objective_p2(&state.dict, &state.stacked_codes(), x.stacked(), config.gamma)
                .unwrap_or(f64::NAN),
        );
        if ok {
            report.converged = true;
            break;
        }
    }
    report.iterations = state.step;
    report.max_iters_exceeded = !report.converged;
    if !report.converged {
        warn!(
            "dictionary learning stopped at max_iters = {} without meeting residual tolerances",
            config.max_iters
        );
    }

    let atoms = state.oblique.clone();
    let codes: Vec<SparseCodes> = state
        .codes
        .iter()
        .zip(&state.consensus)
        .enumerate()
        .map(|(i, (s, z))| {
            let mut masked = Mat::zeros(s.nrows(), s.ncols());
            for (k, col) in z.column_iter().enumerate() {
                if col.iter().any(|v| *v != 0.0) {
                    masked.set_row(k, &s.row(k));
                }
            }
            SparseCodes {
                agent_id: x.blocks()[i].agent_id,
                codes: masked,
                budget: config.budgets.for_agent(i),
            }
        })
        .collect();

    let stacked = stack(codes.iter().map(|c| &c.codes));
    report.final_fit = frob_sq(&(x.stacked() - &atoms * &stacked));
    report.final_objective =
        objective_p2(&atoms, &stacked, x.stacked(), config.gamma).unwrap_or(f64::NAN);

    Ok(DictionaryFit {
        dictionary: Dictionary {
            atoms,
            gamma: config.gamma,
        },
        codes,
        report,
        state,
    })
}

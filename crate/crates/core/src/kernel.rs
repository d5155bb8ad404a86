//! Transition kernels: component-wise Metropolis-Hastings (local), the
//! hyperspherical exploration step and their beta-mixture.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    log_sin_jacobian, log_volume_jacobian, to_cartesian, to_hyperspherical, GeometryError, Point, PolarVector,
};
use crate::parent::{ParentModel, RtfClass, RtfError};
use crate::proposal::{
    default_angular, AngularProposal, ComponentProposal, ProposalError, RadialProposal,
};
use crate::rng::{substream, RandomStream};
use crate::targets::TargetModel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("starting point has zero target density")]
    InvalidStart,
    #[error("invalid kernel configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Rtf(#[from] RtfError),
    #[error(transparent)]
    Proposal(#[from] ProposalError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub beta: f64,
    pub angular: Vec<AngularProposal>,
    pub radial: RadialProposal,
    pub component: ComponentProposal,
    angular_symmetric: bool,
}

impl KernelConfig {
    pub fn new(
        beta: f64,
        angular: Vec<AngularProposal>,
        radial: RadialProposal,
        component: ComponentProposal,
    ) -> Result<Self, KernelError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(KernelError::InvalidConfig(format!("beta = {beta} is outside [0, 1]")));
        }
        let d = component.dim();
        if d >= 2 && angular.len() != d - 1 {
            return Err(KernelError::InvalidConfig(format!(
                "{} angular proposals for dimension {d}",
                angular.len()
            )));
        }
        for (j, a) in angular.iter().enumerate() {
            if a.index != j || a.dim != d {
                return Err(KernelError::InvalidConfig(format!("angular proposal {j} is for ({}, {})", a.index, a.dim)));
            }
        }
        let angular_symmetric = angular.iter().all(AngularProposal::verify_symmetry);
        Ok(KernelConfig { beta, angular, radial, component, angular_symmetric })
    }

    /// Truncated-normal angles, uniform `gamma` on `[1/2, 2]`, unit CMH scales.
    pub fn with_defaults(dim: usize, beta: f64) -> Result<Self, KernelError> {
        Self::new(beta, default_angular(dim)?, RadialProposal::default(), ComponentProposal::isotropic(1.0, dim)?)
    }

    pub fn with_beta(mut self, beta: f64) -> Result<Self, KernelError> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(KernelError::InvalidConfig(format!("beta = {beta} is outside [0, 1]")));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.component.dim()
    }

    /// True when every angular proposal is symmetric, so the angular density
    /// ratio is identically one and is skipped.
    pub fn angular_symmetric(&self) -> bool {
        self.angular_symmetric
    }

    fn check_target(&self, target: &TargetModel) -> Result<(), KernelError> {
        if target.dim() != self.dim() {
            return Err(KernelError::InvalidConfig(format!(
                "kernel dimension {} does not match target dimension {}",
                self.dim(),
                target.dim()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Local,
    Intrepid,
}

/// Current point with its cached log-target.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub x: Point,
    pub log_target: f64,
}

impl ChainState {
    /// Evaluates the target once; fails if the point has zero density.
    pub fn new(target: &TargetModel, x: Point) -> Result<Self, KernelError> {
        let log_target = target.log_target(&x);
        if log_target == f64::NEG_INFINITY || log_target.is_nan() {
            return Err(KernelError::InvalidStart);
        }
        Ok(ChainState { x, log_target })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionOutcome {
    pub next_state: Point,
    pub next_log_target: f64,
    pub accepted: bool,
    pub kernel_used: KernelKind,
    /// `ln rho` for an exploration step; net log-target change for a local sweep.
    pub log_rho: f64,
    /// Exploration candidate, or the per-component proposals of a local sweep.
    pub candidate: Point,
    pub components_proposed: usize,
    pub components_accepted: usize,
    pub target_evals: u64,
}

impl TransitionOutcome {
    pub fn into_state(self) -> ChainState {
        ChainState { x: self.next_state, log_target: self.next_log_target }
    }

    fn rejected_exploration(state: &ChainState, candidate: Point, target_evals: u64) -> Self {
        TransitionOutcome {
            next_state: state.x.clone(),
            next_log_target: state.log_target,
            accepted: false,
            kernel_used: KernelKind::Intrepid,
            log_rho: f64::NEG_INFINITY,
            candidate,
            components_proposed: 0,
            components_accepted: 0,
            target_evals,
        }
    }
}

/// `ln R_{x,0}(r_x)` towards the reference direction, and `ln R'_{0,x}` at
/// that image (equal to `-ln R'_{x,0}(r_x)`). Depends only on the point.
fn reference_radius_terms(parent: &ParentModel, v: &PolarVector) -> Result<(f64, f64), KernelError> {
    let theta0 = parent.reference_direction();
    let e = parent.rtf_apply(&v.angles, &theta0, v.r)?;
    Ok((e.r_out.ln(), -e.log_derivative))
}

fn extent_ratio(parent: &ParentModel, theta_c: &[f64], theta_s: &[f64]) -> Result<f64, KernelError> {
    Ok(parent.radial_extent(theta_c)? / parent.radial_extent(theta_s)?)
}

/// Candidate radius for perturbation `gamma` from `v_s` into direction `theta_c`.
pub fn candidate_radius(parent: &ParentModel, v_s: &PolarVector, theta_c: &[f64], gamma: f64) -> Result<f64, KernelError> {
    match parent.rtf_class() {
        RtfClass::Identity | RtfClass::None => Ok(gamma * v_s.r),
        RtfClass::UniformScaling => Ok(gamma * v_s.r * extent_ratio(parent, theta_c, &v_s.angles)?),
        RtfClass::MonotoneRadialConditional | RtfClass::PiecewiseMatched => {
            let theta0 = parent.reference_direction();
            let rho_s = parent.rtf_apply(&v_s.angles, &theta0, v_s.r)?.r_out;
            Ok(parent.rtf_apply(&theta0, theta_c, gamma * rho_s)?.r_out)
        }
    }
}

fn log_angular_forward(cfg: &KernelConfig, theta_s: &[f64], phis: &[f64]) -> f64 {
    cfg.angular.iter().zip(theta_s).zip(phis).map(|((q, t), p)| q.log_density(*p, *t)).sum()
}

/// `ln q(x_c | x_s)` of the exploration proposal, for a candidate reached
/// with perturbation `gamma` and angle increments `phis`.
pub fn intrepid_log_proposal(
    cfg: &KernelConfig,
    parent: &ParentModel,
    v_s: &PolarVector,
    v_c: &PolarVector,
    gamma: f64,
    phis: &[f64],
) -> Result<f64, KernelError> {
    let base = cfg.radial.log_density(gamma) + log_angular_forward(cfg, &v_s.angles, phis);
    if base == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let lq = base - log_volume_jacobian(v_c)?;
    Ok(match parent.rtf_class() {
        RtfClass::Identity | RtfClass::None => lq - v_s.r.ln(),
        RtfClass::UniformScaling => lq - v_s.r.ln() - extent_ratio(parent, &v_c.angles, &v_s.angles)?.ln(),
        RtfClass::MonotoneRadialConditional | RtfClass::PiecewiseMatched => {
            let (_, slope_c) = reference_radius_terms(parent, v_c)?;
            let (log_rho_s, _) = reference_radius_terms(parent, v_s)?;
            lq - slope_c - log_rho_s
        }
    })
}

/// `ln rho` for a move `v_s -> v_c` given both log-targets.
pub fn intrepid_log_rho_given(
    cfg: &KernelConfig,
    parent: &ParentModel,
    v_s: &PolarVector,
    v_c: &PolarVector,
    gamma: f64,
    phis: &[f64],
    log_target_s: f64,
    log_target_c: f64,
) -> Result<f64, KernelError> {
    if log_target_c == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let d = v_s.dim() as f64;
    let radial_ratio = cfg.radial.log_density(1.0 / gamma) - cfg.radial.log_density(gamma);
    let log_gamma_factor = match parent.rtf_class() {
        RtfClass::Identity | RtfClass::None => (d - 2.0) * gamma.ln() + radial_ratio,
        RtfClass::UniformScaling => {
            (d - 2.0) * gamma.ln() + d * extent_ratio(parent, &v_c.angles, &v_s.angles)?.ln() + radial_ratio
        }
        RtfClass::MonotoneRadialConditional | RtfClass::PiecewiseMatched => {
            let (_, slope_c) = reference_radius_terms(parent, v_c)?;
            let (_, slope_s) = reference_radius_terms(parent, v_s)?;
            -gamma.ln() + radial_ratio + (d - 1.0) * (v_c.r.ln() - v_s.r.ln()) + slope_c - slope_s
        }
    };
    let angular = if cfg.angular_symmetric() {
        0.0
    } else {
        let neg: Vec<f64> = phis.iter().map(|p| -p).collect();
        log_angular_forward(cfg, &v_c.angles, &neg) - log_angular_forward(cfg, &v_s.angles, phis)
    };
    let sin_ratio = log_sin_jacobian(&v_c.angles)? - log_sin_jacobian(&v_s.angles)?;
    Ok(log_gamma_factor + log_target_c - log_target_s + angular + sin_ratio)
}

/// `ln rho` for the move `x_s -> x_c`; evaluates the target at both points.
pub fn intrepid_log_rho(
    cfg: &KernelConfig,
    target: &TargetModel,
    x_s: &[f64],
    x_c: &[f64],
    gamma: f64,
    phis: &[f64],
) -> Result<f64, KernelError> {
    let parent = target.parent();
    let v_s = to_hyperspherical(x_s, parent.anchor())?;
    let v_c = to_hyperspherical(x_c, parent.anchor())?;
    let lp_s = target.log_target(x_s);
    let lp_c = target.log_target(x_c);
    intrepid_log_rho_given(cfg, parent, &v_s, &v_c, gamma, phis, lp_s, lp_c)
}

/// The random inputs of one exploration step.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationDraw {
    pub angle_uniforms: Vec<f64>,
    pub gamma_uniform: f64,
    pub accept_uniform: f64,
}

impl ExplorationDraw {
    /// Angles first, then `gamma`, then the acceptance variate.
    pub fn draw<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let angle_uniforms = (0..dim.saturating_sub(1)).map(|_| rng.random()).collect();
        let gamma_uniform = rng.random();
        let accept_uniform = rng.random();
        ExplorationDraw { angle_uniforms, gamma_uniform, accept_uniform }
    }
}

/// Exploration proposal built from fixed uniforms: `(v_s, v_c, gamma, phis)`.
pub fn intrepid_propose(
    cfg: &KernelConfig,
    parent: &ParentModel,
    x_s: &[f64],
    draw: &ExplorationDraw,
) -> Result<(PolarVector, PolarVector, f64, Vec<f64>), KernelError> {
    let v_s = to_hyperspherical(x_s, parent.anchor())?;
    let mut phis = Vec::with_capacity(v_s.angles.len());
    let mut theta_c = Vec::with_capacity(v_s.angles.len());
    for ((q, &t), &u) in cfg.angular.iter().zip(&v_s.angles).zip(&draw.angle_uniforms) {
        let phi = q.sample_from_uniform(t, u);
        phis.push(phi);
        theta_c.push(q.apply(t, phi));
    }
    let gamma = cfg.radial.sample_from_uniform(draw.gamma_uniform);
    let r_c = candidate_radius(parent, &v_s, &theta_c, gamma)?;
    Ok((v_s, PolarVector::new(r_c, theta_c), gamma, phis))
}

/// One exploration step with a single target evaluation at the candidate.
/// Singular geometry or RTF failures reject without evaluating the target.
pub fn intrepid_step<R: Rng + ?Sized>(
    cfg: &KernelConfig,
    target: &TargetModel,
    state: &ChainState,
    rng: &mut R,
) -> TransitionOutcome {
    let draw = ExplorationDraw::draw(target.dim(), rng);
    intrepid_step_with(cfg, target, state, &draw)
}

pub fn intrepid_step_with(
    cfg: &KernelConfig,
    target: &TargetModel,
    state: &ChainState,
    draw: &ExplorationDraw,
) -> TransitionOutcome {
    debug_assert!(state.log_target.is_finite(), "chain state must have positive density");
    let parent = target.parent();
    let Ok((v_s, v_c, gamma, phis)) = intrepid_propose(cfg, parent, &state.x, draw) else {
        return TransitionOutcome::rejected_exploration(state, state.x.clone(), 0);
    };
    if log_sin_jacobian(&v_s.angles).is_err() || log_volume_jacobian(&v_c).is_err() {
        return TransitionOutcome::rejected_exploration(state, state.x.clone(), 0);
    }
    let Ok(x_c) = to_cartesian(&v_c, parent.anchor()) else {
        return TransitionOutcome::rejected_exploration(state, state.x.clone(), 0);
    };
    let lp_c = target.log_target(&x_c);
    let log_rho = intrepid_log_rho_given(cfg, parent, &v_s, &v_c, gamma, &phis, state.log_target, lp_c)
        .unwrap_or(f64::NEG_INFINITY);
    let accepted = draw.accept_uniform < log_rho.exp();
    let (next_state, next_log_target) = if accepted { (x_c.clone(), lp_c) } else { (state.x.clone(), state.log_target) };
    TransitionOutcome {
        next_state,
        next_log_target,
        accepted,
        kernel_used: KernelKind::Intrepid,
        log_rho,
        candidate: x_c,
        components_proposed: 0,
        components_accepted: 0,
        target_evals: 1,
    }
}

/// One sweep of component-wise Metropolis-Hastings in ascending order. Each
/// component draws a normal increment, then a uniform.
pub fn cmh_step<R: Rng + ?Sized>(
    cfg: &KernelConfig,
    target: &TargetModel,
    state: &ChainState,
    rng: &mut R,
) -> TransitionOutcome {
    debug_assert!(state.log_target.is_finite(), "chain state must have positive density");
    let d = state.x.dim();
    let mut x = state.x.clone();
    let mut lp = state.log_target;
    let mut proposals = Vec::with_capacity(d);
    let mut accepted = 0;
    for i in 0..d {
        let old = x[i];
        let y = cfg.component.sample(i, old, rng);
        let u: f64 = rng.random();
        proposals.push(y);
        x.as_mut_slice()[i] = y;
        let lp_y = target.log_target(&x);
        if u < (lp_y - lp).exp() {
            lp = lp_y;
            accepted += 1;
        } else {
            x.as_mut_slice()[i] = old;
        }
    }
    TransitionOutcome {
        log_rho: lp - state.log_target,
        next_state: x,
        next_log_target: lp,
        accepted: accepted > 0,
        kernel_used: KernelKind::Local,
        candidate: Point::new(proposals),
        components_proposed: d,
        components_accepted: accepted,
        target_evals: d as u64,
    }
}

/// Exploration with probability `beta`, otherwise a local sweep. The
/// selection variate is only drawn when `0 < beta < 1`.
pub fn mixture_step<R: Rng + ?Sized>(
    cfg: &KernelConfig,
    target: &TargetModel,
    state: &ChainState,
    rng: &mut R,
) -> TransitionOutcome {
    let explore = if cfg.beta <= 0.0 {
        false
    } else if cfg.beta >= 1.0 {
        true
    } else {
        rng.random::<f64>() <= cfg.beta
    };
    if explore {
        intrepid_step(cfg, target, state, rng)
    } else {
        cmh_step(cfg, target, state, rng)
    }
}

/// Acceptance and evaluation counts of a chain. Acceptance counts cover the
/// recorded window only; `target_evals` covers the whole run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainCounts {
    pub intrepid_proposed: u64,
    pub intrepid_accepted: u64,
    pub local_proposed: u64,
    pub local_accepted: u64,
    pub local_components_proposed: u64,
    pub local_components_accepted: u64,
    pub target_evals: u64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

impl ChainCounts {
    fn record(&mut self, o: &TransitionOutcome) {
        match o.kernel_used {
            KernelKind::Intrepid => {
                self.intrepid_proposed += 1;
                self.intrepid_accepted += o.accepted as u64;
            }
            KernelKind::Local => {
                self.local_proposed += 1;
                self.local_accepted += o.accepted as u64;
                self.local_components_proposed += o.components_proposed as u64;
                self.local_components_accepted += o.components_accepted as u64;
            }
        }
    }

    /// Fraction of transitions that moved the chain.
    pub fn acceptance_total(&self) -> f64 {
        ratio(self.intrepid_accepted + self.local_accepted, self.intrepid_proposed + self.local_proposed)
    }

    pub fn acceptance_intrepid(&self) -> f64 {
        ratio(self.intrepid_accepted, self.intrepid_proposed)
    }

    /// Fraction of local sweeps that moved at least one component.
    pub fn acceptance_local(&self) -> f64 {
        ratio(self.local_accepted, self.local_proposed)
    }

    pub fn acceptance_local_components(&self) -> f64 {
        ratio(self.local_components_accepted, self.local_components_proposed)
    }
}

/// Post-burn-in trajectory, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub dim: usize,
    pub states: Vec<f64>,
    pub counts: ChainCounts,
}

impl ChainRecord {
    pub fn from_states(dim: usize, states: Vec<f64>) -> Self {
        assert!(dim > 0 && states.len() % dim == 0);
        ChainRecord { dim, states, counts: ChainCounts::default() }
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks_exact(self.dim)
    }
}

/// Runs `burn_in + length` transitions from `x0`, calling `visit` with each
/// of the last `length` states. Returns the counts and the final state.
pub fn run_chain_with<R: Rng + ?Sized>(
    cfg: &KernelConfig,
    target: &TargetModel,
    x0: Point,
    length: usize,
    burn_in: usize,
    rng: &mut R,
    mut visit: impl FnMut(&[f64]),
) -> Result<(ChainCounts, ChainState), KernelError> {
    cfg.check_target(target)?;
    if length == 0 {
        return Err(KernelError::InvalidConfig("chain length must be positive".into()));
    }
    let mut state = ChainState::new(target, x0)?;
    let mut counts = ChainCounts { target_evals: 1, ..ChainCounts::default() };
    for t in 0..burn_in + length {
        let outcome = mixture_step(cfg, target, &state, rng);
        counts.target_evals += outcome.target_evals;
        if t >= burn_in {
            counts.record(&outcome);
        }
        state = outcome.into_state();
        if t >= burn_in {
            visit(&state.x);
        }
    }
    Ok((counts, state))
}

pub fn run_chain<R: Rng + ?Sized>(
    cfg: &KernelConfig,
    target: &TargetModel,
    x0: Point,
    length: usize,
    burn_in: usize,
    rng: &mut R,
) -> Result<ChainRecord, KernelError> {
    let dim = target.dim();
    let mut states = Vec::with_capacity(length * dim);
    let (counts, _) = run_chain_with(cfg, target, x0, length, burn_in, rng, |x| states.extend_from_slice(x))?;
    Ok(ChainRecord { dim, states, counts })
}

/// Advances independent ensemble members in parallel and returns, for each
/// requested step index `l`, every member's state after `l` transitions.
/// Member `i` uses `substream(seed, label, i)`.
pub fn ensemble_snapshots(
    cfg: &KernelConfig,
    target: &TargetModel,
    starts: &[Point],
    snapshot_at: &[usize],
    seed: u64,
) -> Result<Vec<Vec<Point>>, KernelError> {
    const LABEL: u64 = 0xE45E;
    cfg.check_target(target)?;
    let steps = snapshot_at.iter().copied().max().unwrap_or(0);
    let per_member: Vec<Result<Vec<Point>, KernelError>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, x0)| {
            let local = target.clone();
            let mut rng: RandomStream = substream(seed, LABEL, i as u64);
            let mut state = ChainState::new(&local, x0.clone())?;
            let mut snaps = vec![Point::zeros(0); snapshot_at.len()];
            for l in 0..=steps {
                for (k, &at) in snapshot_at.iter().enumerate() {
                    if at == l {
                        snaps[k] = state.x.clone();
                    }
                }
                if l < steps {
                    state = mixture_step(cfg, &local, &state, &mut rng).into_state();
                }
            }
            Ok(snaps)
        })
        .collect();
    let mut out = vec![Vec::with_capacity(starts.len()); snapshot_at.len()];
    for member in per_member {
        for (k, p) in member?.into_iter().enumerate() {
            out[k].push(p);
        }
    }
    Ok(out)
}

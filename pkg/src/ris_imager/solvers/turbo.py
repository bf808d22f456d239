"""Joint multi-view estimator: per-view GAMP exchanging extrinsic messages
with forward-backward smoothers over the binary-Markov support chain and the
AR(1) amplitude chain, plus closed-form EM updates of the model parameters.

Messages passed back to each view are extrinsic: the smoothed prior for view
t combines the chain with every other view's evidence but not view t's own.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..scene import PriorParams
from .gamp import GampConfig, GampResult, LLR_MAX, PROB_MIN, _expit, gamp_single

GATE_MIN = 1e-6
VAR_MIN = 1e-12


@dataclass(frozen=True)
class StructureResult:
    """Extrinsic per-view priors plus the posterior statistics EM consumes."""

    activity: np.ndarray          # (T, N) extrinsic P{s_tn = 1}
    amp_mean: np.ndarray          # (T, N) extrinsic amplitude prior mean
    amp_var: np.ndarray           # (T, N) extrinsic amplitude prior variance
    support_post: np.ndarray      # (T, N) smoothed P{s_tn = 1 | all views}
    trans_on_off: np.ndarray      # (T-1, N) P{s_{t-1}=1, s_t=0 | all views}
    occupied_prev: np.ndarray     # (T-1, N) P{s_{t-1}=1 | all views}
    amp_post_mean: np.ndarray     # (T, N) smoothed E[a]
    amp_post_m2: np.ndarray       # (T, N) smoothed E[a^2]
    amp_cross: np.ndarray         # (T-1, N) smoothed E[a_t a_{t+1}]


@dataclass(frozen=True)
class SolverOutput:
    """Multi-view reconstruction with learned parameters and diagnostics."""

    x_hat: np.ndarray             # (T, N)
    support_prob: np.ndarray      # (T, N)
    params: PriorParams
    params_trace: tuple
    view_converged: np.ndarray    # (I, T) bool
    view_iterations: np.ndarray   # (I, T)
    history: np.ndarray | None = None   # (I, T, N) per-outer-iteration estimates

    @property
    def converged(self) -> bool:
        return bool(np.all(self.view_converged[-1]))


def steady_state_priors(prior: PriorParams, n_views: int, n_voxels: int) -> tuple:
    act = np.full((n_views, n_voxels), prior.alpha)
    mean = np.full((n_views, n_voxels), prior.eta)
    var = np.full((n_views, n_voxels), prior.sigma2)
    return act, mean, var


def _support_smoother(llr: np.ndarray, prior: PriorParams):
    """Forward-backward over the binary Markov chain with evidence LLRs.

    Works per voxel (vectorized across columns). Backward messages are kept
    as normalized log-pairs so confident evidence cannot overflow.
    """
    n_views, n = llr.shape
    lam = np.clip(llr, -LLR_MAX, LLR_MAX)
    p01, p10, alpha = prior.p01, prior.p10, prior.alpha

    pred = np.empty((n_views, n))
    filt = np.empty((n_views, n))
    pred[0] = alpha
    for t in range(n_views):
        p = np.clip(pred[t], PROB_MIN, 1.0 - PROB_MIN)
        filt[t] = _expit(np.log(p / (1.0 - p)) + lam[t])
        if t + 1 < n_views:
            pred[t + 1] = filt[t] * (1.0 - p01) + (1.0 - filt[t]) * p10

    lb1 = np.zeros((n_views, n))
    lb0 = np.zeros((n_views, n))
    with np.errstate(divide="ignore"):
        l_stay_on, l_off = np.log(1.0 - p01), np.log(p01)
        l_on, l_stay_off = np.log(p10), np.log(1.0 - p10)
    for t in range(n_views - 2, -1, -1):
        ev_on = lam[t + 1] + lb1[t + 1]
        ev_off = lb0[t + 1]
        lb1[t] = np.logaddexp(l_stay_on + ev_on, l_off + ev_off)
        lb0[t] = np.logaddexp(l_on + ev_on, l_stay_off + ev_off)
        shift = np.maximum(lb1[t], lb0[t])
        lb1[t] -= shift
        lb0[t] -= shift

    pred_c = np.clip(pred, PROB_MIN, 1.0 - PROB_MIN)
    ext_log_odds = np.log(pred_c / (1.0 - pred_c)) + (lb1 - lb0)
    activity = np.clip(_expit(ext_log_odds), PROB_MIN, 1.0 - PROB_MIN)
    support_post = _expit(ext_log_odds + lam)

    # Two-slice marginals for the EM transition update.
    trans_on_off = np.zeros((max(n_views - 1, 0), n))
    occupied_prev = np.zeros((max(n_views - 1, 0), n))
    for t in range(1, n_views):
        q = np.clip(filt[t - 1], PROB_MIN, 1.0 - PROB_MIN)
        lw11 = np.log(q) + l_stay_on + lam[t] + lb1[t]
        lw10 = np.log(q) + l_off + lb0[t]
        lw01 = np.log(1.0 - q) + l_on + lam[t] + lb1[t]
        lw00 = np.log(1.0 - q) + l_stay_off + lb0[t]
        shift = np.maximum.reduce([lw11, lw10, lw01, lw00])
        w11, w10 = np.exp(lw11 - shift), np.exp(lw10 - shift)
        w01, w00 = np.exp(lw01 - shift), np.exp(lw00 - shift)
        total = w11 + w10 + w01 + w00
        trans_on_off[t - 1] = w10 / total
        occupied_prev[t - 1] = (w11 + w10) / total
    return activity, support_post, trans_on_off, occupied_prev


def _amplitude_smoother(ev_mean: np.ndarray, ev_prec: np.ndarray, prior: PriorParams):
    """Gaussian chain smoothing of the AR(1) amplitudes under gated evidence.

    Evidence at view t is N(ev_mean_t; a_t, 1/ev_prec_t); ev_prec = 0 means no
    information. Returns the extrinsic prior per view (forward prediction
    combined with the backward message, excluding the local evidence) and the
    smoothed posterior moments (RTS pass) used by EM.
    """
    n_views, n = ev_mean.shape
    rho = prior.rho
    drift = (1.0 - rho) * prior.eta_e
    q_innov = (1.0 - rho) ** 2 * prior.sigma2_e

    pred_m = np.empty((n_views, n))
    pred_v = np.empty((n_views, n))
    filt_m = np.empty((n_views, n))
    filt_v = np.empty((n_views, n))
    pred_m[0] = prior.eta
    pred_v[0] = prior.sigma2
    for t in range(n_views):
        j = 1.0 / pred_v[t] + ev_prec[t]
        filt_v[t] = 1.0 / j
        filt_m[t] = filt_v[t] * (pred_m[t] / pred_v[t] + ev_prec[t] * ev_mean[t])
        if t + 1 < n_views:
            pred_m[t + 1] = rho * filt_m[t] + drift
            pred_v[t + 1] = rho**2 * filt_v[t] + q_innov

    # Backward information-form messages into a_t from views t+1..T.
    back_j = np.zeros((n_views, n))
    back_h = np.zeros((n_views, n))
    if rho > 0.0:
        for t in range(n_views - 2, -1, -1):
            j_next = back_j[t + 1] + ev_prec[t + 1]
            h_next = back_h[t + 1] + ev_prec[t + 1] * ev_mean[t + 1]
            has_info = j_next > VAR_MIN
            v_next = np.where(has_info, 1.0 / np.maximum(j_next, VAR_MIN), np.inf)
            m_next = np.where(has_info, h_next / np.maximum(j_next, VAR_MIN), 0.0)
            back_j[t] = np.where(has_info, rho**2 / (v_next + q_innov), 0.0)
            back_h[t] = np.where(has_info, back_j[t] * (m_next - drift) / rho, 0.0)

    j_ext = 1.0 / pred_v + back_j
    amp_var = 1.0 / j_ext
    amp_mean = amp_var * (pred_m / pred_v + back_h)

    # RTS smoother for posterior moments and lag-1 cross-moments (EM).
    post_m = np.empty((n_views, n))
    post_v = np.empty((n_views, n))
    post_m[-1] = filt_m[-1]
    post_v[-1] = filt_v[-1]
    cross = np.zeros((max(n_views - 1, 0), n))
    for t in range(n_views - 2, -1, -1):
        gain = filt_v[t] * rho / pred_v[t + 1]
        post_m[t] = filt_m[t] + gain * (post_m[t + 1] - pred_m[t + 1])
        post_v[t] = filt_v[t] + gain**2 * (post_v[t + 1] - pred_v[t + 1])
        cross[t] = post_m[t] * post_m[t + 1] + gain * post_v[t + 1]
    post_m2 = post_v + post_m**2
    return amp_mean, np.maximum(amp_var, VAR_MIN), post_m, post_m2, cross


def structure_pass(support_llr: np.ndarray, amp_ev_mean: np.ndarray, amp_ev_prec: np.ndarray, prior: PriorParams) -> StructureResult:
    """One smoothing sweep over both chains given the per-view extrinsic evidence."""
    if support_llr.shape != amp_ev_mean.shape or support_llr.shape != amp_ev_prec.shape:
        raise ValueError("evidence arrays must share shape (T, N)")
    activity, support_post, trans_on_off, occupied_prev = _support_smoother(support_llr, prior)
    amp_mean, amp_var, post_m, post_m2, cross = _amplitude_smoother(amp_ev_mean, amp_ev_prec, prior)
    return StructureResult(
        activity=activity,
        amp_mean=amp_mean,
        amp_var=amp_var,
        support_post=support_post,
        trans_on_off=trans_on_off,
        occupied_prev=occupied_prev,
        amp_post_mean=post_m,
        amp_post_m2=post_m2,
        amp_cross=cross,
    )


def em_update(sr: StructureResult, chi2_hat: float, prior: PriorParams) -> PriorParams:
    """Moment-matching M-step for {chi2, alpha, eta, sigma2, p01, rho}, clamped to valid domains."""
    alpha = float(np.clip(np.mean(sr.support_post), 1e-6, 1.0 - 1e-6))

    if sr.trans_on_off.size > 0:
        occ = float(np.sum(sr.occupied_prev))
        p01 = float(np.sum(sr.trans_on_off)) / occ if occ > 1e-9 else prior.p01
    else:
        p01 = prior.p01
    # Keep the implied steady-state birth probability feasible.
    p01 = float(np.clip(p01, 0.0, min(1.0, (1.0 - alpha) / max(alpha, 1e-12))))

    eta = float(np.mean(sr.amp_post_mean))
    sigma2 = float(np.mean(sr.amp_post_m2) - 2.0 * eta * np.mean(sr.amp_post_mean) + eta**2)
    sigma2 = max(sigma2, VAR_MIN)

    if sr.amp_cross.size > 0:
        prev_m = sr.amp_post_mean[:-1]
        next_m = sr.amp_post_mean[1:]
        num = float(np.mean(sr.amp_cross - eta * (prev_m + next_m) + eta**2))
        den = float(np.mean(sr.amp_post_m2[:-1] - 2.0 * eta * prev_m + eta**2))
        rho = num / den if den > VAR_MIN else prior.rho
    else:
        rho = prior.rho
    rho = float(np.clip(rho, 0.0, 1.0 - 1e-6))

    chi2 = max(float(chi2_hat), VAR_MIN)
    return PriorParams(alpha=alpha, eta=eta, sigma2=sigma2, p01=p01, rho=rho, chi2=chi2)


def em_turbo_gamp(
    a_list,
    y_list,
    prior: PriorParams,
    cfg: GampConfig = GampConfig(),
    outer_iters: int = 5,
    learn: bool = True,
    keep_history: bool = False,
) -> SolverOutput:
    """Outer loop: per-view GAMP, structure pass, EM parameter update.

    With T = 1 and learn=False this reproduces gamp_single exactly. The
    reconstruction returned is the one produced by the final GAMP sweep.
    Support refinement (cfg.refine) runs only on that final sweep: refined
    beliefs from early sweeps overcommit when the per-view evidence is weak,
    while the final refined sweep keeps the output consistent with the
    single-view engine when the views carry no shared structure.
    """
    n_views = len(a_list)
    if n_views < 1 or len(y_list) != n_views:
        raise ValueError("need matching nonempty measurement and matrix lists")
    if outer_iters < 1:
        raise ValueError("outer_iters must be positive")
    n = a_list[0].shape[1]

    act, amean, avar = steady_state_priors(prior, n_views, n)
    params = prior
    trace = [params]
    hist = [] if keep_history else None
    conv = np.zeros((outer_iters, n_views), dtype=bool)
    iters = np.zeros((outer_iters, n_views), dtype=int)
    results: list[GampResult] = []
    inner_cfg = replace(cfg, refine="off")

    for i in range(outer_iters):
        sweep_cfg = cfg if i == outer_iters - 1 else inner_cfg
        results = [
            gamp_single(
                a_list[t],
                y_list[t],
                params,
                sweep_cfg,
                chi2=params.chi2,
                activity=act[t],
                amp_mean=amean[t],
                amp_var=avar[t],
            )
            for t in range(n_views)
        ]
        conv[i] = [res.converged for res in results]
        iters[i] = [res.iterations for res in results]
        if hist is not None:
            hist.append(np.stack([res.x_hat for res in results]))

        llr = np.stack([res.llr for res in results])
        ev_mean = np.stack([res.r for res in results])
        gate = np.clip(np.stack([res.support_prob for res in results]), GATE_MIN, 1.0)
        ev_prec = gate / np.stack([res.tau_r for res in results])
        sr = structure_pass(llr, ev_mean, ev_prec, params)
        act, amean, avar = sr.activity, sr.amp_mean, sr.amp_var
        if learn:
            params = em_update(sr, float(np.mean([res.chi2_hat for res in results])), params)
            trace.append(params)

    return SolverOutput(
        x_hat=np.stack([res.x_hat for res in results]),
        support_prob=np.stack([res.support_prob for res in results]),
        params=params,
        params_trace=tuple(trace),
        view_converged=conv,
        view_iterations=iters,
        history=np.stack(hist) if hist else None,
    )

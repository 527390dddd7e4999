"""Post-fit behavioral quantities, bootstrap uncertainty, and association
screening.

Engagement summaries turn smoothed posteriors into per-subject scores,
thresholded states, and state-conditional response times. The bootstrap
resamples whole subjects with replacement and refits warm-started at the
point estimate. Association screening runs per-variable simple linear
regressions with Benjamini-Hochberg q-values.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import stats
from scipy.special import expit, logit

from . import fit as fitmod
from . import wfpt
from .data import Dataset
from .fit import FitConfig, FitResult, ModelParams, RlDdmParams, RlHmmParams
from .rl import DataError

GAMMA_CLIP = 1e-8


class BootstrapError(RuntimeError):
    """Raised when too many bootstrap replicates fail to converge."""


# ------------------------------------------------------------------
# engagement summaries
# ------------------------------------------------------------------

@dataclass
class EngagementSummary:
    """Per-subject and per-trial engagement quantities.

    gamma1: list of per-subject engaged-posterior arrays; group_rate[j] is
    the mean of gamma1 over subjects observed at trial j; score is the mean
    logit-transformed engaged posterior; u_hat thresholds gamma1 at 0.5
    (ties engaged); rt_engaged/rt_lapsed are mean response times over
    trials classified to each state (NaN when a subject has none).
    """

    gamma1: list
    group_rate: np.ndarray
    score: np.ndarray
    u_hat: list
    rt_engaged: np.ndarray
    rt_lapsed: np.ndarray


def engagement_summary(fit_result: FitResult, dataset: Dataset) -> EngagementSummary:
    if fit_result.posteriors is None:
        raise DataError("fit result carries no posteriors")
    gamma1 = [g[:, 1].copy() for g in fit_result.posteriors.gamma]
    n = len(gamma1)
    if n != dataset.n:
        raise DataError("posteriors and dataset have different subject counts")
    max_j = max(g.shape[0] for g in gamma1)
    sums = np.zeros(max_j)
    counts = np.zeros(max_j)
    for g in gamma1:
        sums[: g.shape[0]] += g
        counts[: g.shape[0]] += 1
    group_rate = sums / counts

    score = np.empty(n)
    u_hat = []
    rt_engaged = np.empty(n)
    rt_lapsed = np.empty(n)
    for i, (g, sub) in enumerate(zip(gamma1, dataset.subjects)):
        clipped = np.clip(g, GAMMA_CLIP, 1.0 - GAMMA_CLIP)
        score[i] = float(np.mean(logit(clipped)))
        u = (g >= 0.5).astype(np.int64)
        u_hat.append(u)
        rt_engaged[i] = sub.t[u == 1].mean() if np.any(u == 1) else np.nan
        rt_lapsed[i] = sub.t[u == 0].mean() if np.any(u == 0) else np.nan
    return EngagementSummary(
        gamma1=gamma1,
        group_rate=group_rate,
        score=score,
        u_hat=u_hat,
        rt_engaged=rt_engaged,
        rt_lapsed=rt_lapsed,
    )


def classification_accuracy(pred, truth, window=None, mask=None):
    """Per-trial and aggregate agreement between predictions and truth.

    pred/truth/mask: per-subject sequences (lists of arrays or 2-d arrays).
    With a mask, only positions where the mask is 1 enter the average; a
    trial with no unmasked subjects gets NaN. The aggregate is the mean of
    per-trial accuracies over the first `window` trials (all by default).
    """
    pred = [np.asarray(p) for p in pred]
    truth = [np.asarray(t) for t in truth]
    if len(pred) != len(truth) or any(p.shape != t.shape for p, t in zip(pred, truth)):
        raise DataError("pred and truth must align subject by subject")
    if mask is not None:
        mask = [np.asarray(m).astype(bool) for m in mask]
        if any(m.shape != p.shape for m, p in zip(mask, pred)):
            raise DataError("mask must align with predictions")
    max_j = max(p.shape[0] for p in pred)
    agree = np.zeros(max_j)
    counts = np.zeros(max_j)
    for i, (p, t) in enumerate(zip(pred, truth)):
        ok = np.ones(p.shape[0], dtype=bool) if mask is None else mask[i]
        idx = np.nonzero(ok)[0]
        agree[idx] += (p[idx] == t[idx]).astype(float)
        counts[idx] += 1
    with np.errstate(invalid="ignore"):
        per_trial = np.where(counts > 0, agree / np.maximum(counts, 1), np.nan)
    w = max_j if window is None else min(window, max_j)
    head = per_trial[:w]
    aggregate = float(np.nanmean(head)) if np.any(~np.isnan(head)) else np.nan
    return per_trial, aggregate


# ------------------------------------------------------------------
# model-based action prediction
# ------------------------------------------------------------------

def predicted_actions(fit_result: FitResult, dataset: Dataset):
    """Most-probable action per trial given the response time (diffusion
    models) or the contrast path (softmax model), using each model's own
    estimated latent state. Ties predict a = 1."""
    params = fit_result.params
    out = []
    if isinstance(params, RlHmmParams):
        for sub in dataset.subjects:
            z = fitmod.rl.trajectory_contrasts(sub, params.beta)
            out.append((params.rho * z >= 0.0).astype(np.int64))
        return out
    if isinstance(params, RlDdmParams):
        alpha1, b, c, tau, beta = params.alpha1, params.b, params.c, params.tau, params.beta
        u_hat = None
    else:
        alpha1, b, c, tau, beta = params.alpha1, params.b, params.c, params.tau, params.beta
        u_hat = [(g[:, 1] >= 0.5) for g in fit_result.posteriors.gamma]
    for i, sub in enumerate(dataset.subjects):
        z = fitmod.rl.trajectory_contrasts(sub, beta)
        lf1_up = wfpt._log_joint(sub.t, np.ones_like(sub.a), alpha1, b, c * z, tau)
        lf1_dn = wfpt._log_joint(sub.t, np.zeros_like(sub.a), alpha1, b, c * z, tau)
        a_hat = (lf1_up >= lf1_dn).astype(np.int64)
        if u_hat is not None and isinstance(params, ModelParams):
            # lapsed trials have a symmetric density: posterior is 1/2, tie -> 1
            a_hat = np.where(u_hat[i], a_hat, 1)
        out.append(a_hat)
    return out


# ------------------------------------------------------------------
# bootstrap
# ------------------------------------------------------------------

def param_names(params) -> list:
    if isinstance(params, ModelParams):
        names = ["alpha0", "alpha1", "b", "c", "tau", "beta"]
        if params.chain is not None:
            p = params.chain.n_covariates
            names += ["pi1"]
            names += [f"zeta0_{k}" for k in range(p + 1)]
            names += [f"zeta1_{k}" for k in range(p + 1)]
        return names
    if isinstance(params, RlDdmParams):
        return ["alpha1", "b", "c", "tau", "beta"]
    if isinstance(params, RlHmmParams):
        names = ["rho", "beta"]
        if params.chain is not None:
            p = params.chain.n_covariates
            names += ["pi1"]
            names += [f"zeta0_{k}" for k in range(p + 1)]
            names += [f"zeta1_{k}" for k in range(p + 1)]
        return names
    raise DataError(f"unknown parameter container {type(params)!r}")


def param_vector(params) -> np.ndarray:
    if isinstance(params, ModelParams):
        vec = [params.alpha0, params.alpha1, params.b, params.c, params.tau, params.beta]
        if params.chain is not None:
            vec += [params.chain.pi1, *params.chain.zeta0, *params.chain.zeta1]
        return np.array(vec)
    if isinstance(params, RlDdmParams):
        return np.array([params.alpha1, params.b, params.c, params.tau, params.beta])
    if isinstance(params, RlHmmParams):
        vec = [params.rho, params.beta]
        if params.chain is not None:
            vec += [params.chain.pi1, *params.chain.zeta0, *params.chain.zeta1]
        return np.array(vec)
    raise DataError(f"unknown parameter container {type(params)!r}")


FITTERS = {
    "rl-hmm-ddm": fitmod.fit_rl_hmm_ddm,
    "rl-ddm": fitmod.fit_rl_ddm,
    "rl-hmm": fitmod.fit_rl_hmm,
}


@dataclass
class BootstrapResult:
    """Replicate estimates with normal-approximation intervals.

    ci follows est +/- 1.96 * BSE for every parameter except pi1, whose
    interval is formed on the logit scale and back-transformed.
    """

    names: list
    estimate: np.ndarray
    bse: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    replicates: np.ndarray
    n_dropped: int


def bootstrap(dataset: Dataset, fit_result: FitResult, B, config: FitConfig, rng) -> BootstrapResult:
    """Resample subjects with replacement B times and refit each replicate
    warm-started at the point estimate."""
    if B < 2:
        raise DataError("bootstrap needs at least 2 replicates")
    fitter = FITTERS[fit_result.model]
    names = param_names(fit_result.params)
    est = param_vector(fit_result.params)
    warm = replace(
        config, restarts=1, init=fit_result.params, seed=config.seed,
    )
    rows = []
    n_dropped = 0
    for b in range(B):
        idx = rng.integers(0, dataset.n, size=dataset.n)
        resampled = Dataset([dataset.subjects[i] for i in idx])
        res = fitter(resampled, warm)
        if res.converged:
            rows.append(param_vector(res.params))
        else:
            n_dropped += 1
    if n_dropped > 0.2 * B:
        raise BootstrapError(f"{n_dropped} of {B} bootstrap replicates failed to converge")
    reps = np.array(rows)
    bse = reps.std(axis=0, ddof=1)
    ci_lo = est - 1.96 * bse
    ci_hi = est + 1.96 * bse
    if "pi1" in names:
        k = names.index("pi1")
        lz = logit(np.clip(reps[:, k], GAMMA_CLIP, 1 - GAMMA_CLIP))
        se_z = lz.std(ddof=1)
        center = logit(np.clip(est[k], GAMMA_CLIP, 1 - GAMMA_CLIP))
        ci_lo[k] = expit(center - 1.96 * se_z)
        ci_hi[k] = expit(center + 1.96 * se_z)
    return BootstrapResult(
        names=names,
        estimate=est,
        bse=bse,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        replicates=reps,
        n_dropped=n_dropped,
    )


# ------------------------------------------------------------------
# association screening
# ------------------------------------------------------------------

def bh_qvalues(p) -> np.ndarray:
    """Benjamini-Hochberg step-up q-values: q_(i) = min_{j >= i} p_(j) m / j."""
    p = np.asarray(p, dtype=float)
    m = p.shape[0]
    order = np.argsort(p, kind="stable")
    scaled = p[order] * m / np.arange(1, m + 1)
    q_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    q = np.empty(m)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


@dataclass
class AssocResult:
    labels: list
    n: np.ndarray
    r: np.ndarray
    p: np.ndarray
    q: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    skipped: list  # labels dropped for zero variance or too few pairs


def assoc(scores, variables, labels=None) -> AssocResult:
    """Screen per-subject variables against a behavioral measure.

    For each variable: listwise deletion of missing pairs, Pearson
    correlation (equivalent to simple linear regression), two-sided t-test
    p-value, Fisher-z 95% CI, and BH q-values across the tested set.
    Variables with zero variance (or fewer than 3 complete pairs) are
    skipped and flagged.
    """
    scores = np.asarray(scores, dtype=float)
    variables = np.asarray(variables, dtype=float)
    if variables.ndim == 1:
        variables = variables[:, None]
    if variables.ndim != 2 or variables.shape[0] != scores.shape[0]:
        raise DataError("variables must be (n_subjects, k) with rows matching scores")
    k = variables.shape[1]
    if labels is None:
        labels = [f"v{j + 1}" for j in range(k)]

    kept, skipped = [], []
    stats_rows = []
    for j in range(k):
        v = variables[:, j]
        ok = ~(np.isnan(v) | np.isnan(scores))
        n_ok = int(ok.sum())
        if n_ok < 3 or np.std(v[ok]) == 0.0 or np.std(scores[ok]) == 0.0:
            skipped.append(labels[j])
            continue
        r = float(np.corrcoef(scores[ok], v[ok])[0, 1])
        r = min(1.0, max(-1.0, r))
        df = n_ok - 2
        if abs(r) == 1.0:
            pval = 0.0
        else:
            tstat = r * np.sqrt(df / (1.0 - r * r))
            pval = float(2.0 * stats.t.sf(abs(tstat), df))
        if n_ok > 3 and abs(r) < 1.0:
            z = np.arctanh(r)
            zse = 1.0 / np.sqrt(n_ok - 3)
            lo, hi = np.tanh(z - 1.96 * zse), np.tanh(z + 1.96 * zse)
        else:
            lo, hi = np.nan, np.nan
        kept.append(labels[j])
        stats_rows.append((n_ok, r, pval, lo, hi))

    arr = np.array(stats_rows) if stats_rows else np.empty((0, 5))
    q = bh_qvalues(arr[:, 2]) if arr.shape[0] else np.empty(0)
    return AssocResult(
        labels=kept,
        n=arr[:, 0].astype(int) if arr.shape[0] else np.empty(0, dtype=int),
        r=arr[:, 1] if arr.shape[0] else np.empty(0),
        p=arr[:, 2] if arr.shape[0] else np.empty(0),
        q=q,
        ci_lo=arr[:, 3] if arr.shape[0] else np.empty(0),
        ci_hi=arr[:, 4] if arr.shape[0] else np.empty(0),
        skipped=skipped,
    )

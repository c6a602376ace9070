"""Metrics, classical baselines, ablation orchestration, and sweeps.

All metrics are computed in raw demand units after inverting the training
scaler. MAPE skips zero-demand targets and reports how many entries were
excluded. Baselines only ever see the training split during fit; the
``TrainView`` handed to them physically contains nothing newer than the
end of the train range.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import model as m
from . import training as tr
from .autodiff import Tape, Tensor
from .data.windows import Calendar, Window, WindowedDataset
from .errors import ConfigError, FlowgatError, SolverError

DAY_NAMES = ("mon", "tue", "wed", "thu", "fri", "sat", "sun")


@dataclass
class MetricReport:
    rmse: float
    mape: float
    mae: float
    n_samples: int
    n_excluded_mape: int
    by_day_of_week: dict[str, "MetricReport"] | None = None
    by_day_type: dict[str, "MetricReport"] | None = None

    def as_dict(self) -> dict:
        out = {
            "rmse": self.rmse,
            "mape": self.mape,
            "mae": self.mae,
            "n_samples": self.n_samples,
            "n_excluded_mape": self.n_excluded_mape,
        }
        if self.by_day_of_week is not None:
            out["by_day_of_week"] = {k: v.as_dict() for k, v in self.by_day_of_week.items()}
        if self.by_day_type is not None:
            out["by_day_type"] = {k: v.as_dict() for k, v in self.by_day_type.items()}
        return out


def compute_metrics(preds, targets) -> MetricReport:
    """RMSE, MAPE (zero targets excluded), and MAE over all scalar entries."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape:
        raise FlowgatError(f"prediction shape {preds.shape} != target shape {targets.shape}")
    if preds.size == 0:
        raise FlowgatError("compute_metrics needs at least one sample")
    err = preds - targets
    rmse = float(np.sqrt(np.mean(err**2)))
    mae = float(np.mean(np.abs(err)))
    nonzero = targets != 0
    n_excluded = int(targets.size - nonzero.sum())
    mape = float(np.mean(np.abs(err[nonzero]) / targets[nonzero])) if nonzero.any() else 0.0
    assert rmse >= mae - 1e-12, "power-mean inequality violated"
    return MetricReport(rmse=rmse, mape=mape, mae=mae, n_samples=int(preds.shape[0]), n_excluded_mape=n_excluded)


def compute_metrics_with_breakdown(preds, targets, target_ts, calendar: Calendar | None) -> MetricReport:
    """Overall metrics plus per-day-of-week and weekday/weekend sub-reports."""
    report = compute_metrics(preds, targets)
    if calendar is None:
        return report
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    days = np.asarray(calendar.day_of_week(np.asarray(target_ts)))
    by_day = {}
    for d in range(7):
        sel = days == d
        if sel.any():
            by_day[DAY_NAMES[d]] = compute_metrics(preds[sel], targets[sel])
    by_type = {}
    for name, sel in (("weekday", days < 5), ("weekend", days >= 5)):
        if sel.any():
            by_type[name] = compute_metrics(preds[sel], targets[sel])
    report.by_day_of_week = by_day
    report.by_day_type = by_type
    return report


# ---------------------------------------------------------------------------
# forecaster interface and the classical baselines


@dataclass
class TrainView:
    """What a baseline is allowed to see: the train split and nothing newer."""

    demand: np.ndarray            # (N, train_end) raw counts as float64
    window_ts: np.ndarray         # train window keys
    seq_len: int
    n_regions: int
    scale: float
    calendar: Calendar | None

    @classmethod
    def of(cls, dataset: WindowedDataset) -> "TrainView":
        train_end = dataset.split_ranges["train"][1]
        return cls(
            demand=dataset.demand.values[:, :train_end].astype(np.float64),
            window_ts=dataset.splits["train"].copy(),
            seq_len=dataset.seq_len,
            n_regions=dataset.n_regions,
            scale=dataset.scaler.scale,
            calendar=dataset.calendar,
        )

    def lags(self, t: int) -> np.ndarray:
        return self.demand[:, t - self.seq_len + 1 : t + 1].T

    def target(self, t: int) -> np.ndarray:
        return self.demand[:, t + 1]


class Forecaster(ABC):
    """fit() sees only train windows; predict() maps one window to raw demand."""

    @abstractmethod
    def fit(self, view: TrainView) -> None: ...

    @abstractmethod
    def predict(self, window: Window) -> np.ndarray: ...


class HistoricalAverage(Forecaster):
    """Per-region mean of train demand at the target's time-of-day slot."""

    def fit(self, view: TrainView) -> None:
        if view.calendar is None:
            raise FlowgatError("historical average needs calendar metadata")
        self.slots = view.calendar.intervals_per_day
        train_len = view.demand.shape[1]
        sums = np.zeros((view.n_regions, self.slots))
        counts = np.zeros(self.slots)
        slot_of = np.arange(train_len) % self.slots
        for s in range(self.slots):
            sel = slot_of == s
            counts[s] = sel.sum()
            sums[:, s] = view.demand[:, sel].sum(axis=1)
        if (counts == 0).any():
            raise FlowgatError("a time-of-day slot has no training history")
        self.means = sums / counts

    def predict(self, window: Window) -> np.ndarray:
        return self.means[:, (window.t + 1) % self.slots].copy()


def _design_pooled(view: TrainView, ts: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Rows per (window, region): [L lags, region one-hot, 1]; last column is intercept."""
    n, seq_len = view.n_regions, view.seq_len
    rows, ys = [], []
    eye = np.eye(n)
    for t in ts:
        lags = view.lags(t)  # (L, N)
        ys.append(view.target(t))
        rows.append(np.hstack([lags.T, eye, np.ones((n, 1))]))
    return np.vstack(rows), np.concatenate(ys)


def _feature_row_pooled(window: Window, region: int, n: int) -> np.ndarray:
    onehot = np.zeros(n)
    onehot[region] = 1.0
    return np.concatenate([window.x_raw[:, region], onehot, [1.0]])


def _solve_ridge(x: np.ndarray, y: np.ndarray, lam: float, penalize: np.ndarray) -> np.ndarray:
    gram = x.T @ x + np.diag(lam * penalize)
    try:
        return np.linalg.solve(gram, x.T @ y)
    except np.linalg.LinAlgError:
        raise SolverError(
            "normal equations are singular; set a regularization strength > 0"
        ) from None


class RidgeBaseline(Forecaster):
    """Closed-form L2-regularized linear model on lag features (intercept unpenalized)."""

    def __init__(self, lam: float = 1.0, per_region: bool = False):
        if lam < 0:
            raise ConfigError("ridge lambda must be >= 0")
        self.lam = lam
        self.per_region = per_region

    def fit(self, view: TrainView) -> None:
        self.n = view.n_regions
        ts = view.window_ts
        if self.per_region:
            self.coefs = []
            for r in range(self.n):
                x = np.column_stack(
                    [np.stack([view.lags(t)[:, r] for t in ts]), np.ones(len(ts))]
                )
                y = np.array([view.target(t)[r] for t in ts])
                penalize = np.ones(x.shape[1])
                penalize[-1] = 0.0
                self.coefs.append(_solve_ridge(x, y, self.lam, penalize))
        else:
            x, y = _design_pooled(view, ts)
            penalize = np.ones(x.shape[1])
            penalize[-1] = 0.0
            self.coef = _solve_ridge(x, y, self.lam, penalize)

    def predict(self, window: Window) -> np.ndarray:
        if self.per_region:
            return np.array(
                [
                    float(np.concatenate([window.x_raw[:, r], [1.0]]) @ self.coefs[r])
                    for r in range(self.n)
                ]
            )
        return np.array(
            [float(_feature_row_pooled(window, r, self.n) @ self.coef) for r in range(self.n)]
        )


def _lasso_cd(x: np.ndarray, y: np.ndarray, lam: float, gap_tol: float = 1e-6, max_iter: int = 10_000):
    """Coordinate descent for (1/2n)||y - Xw - b||^2 + lam*||w||_1 with free intercept.

    The intercept is handled by centering; convergence is declared when the
    duality gap of the centered problem drops below ``gap_tol`` (for lam=0,
    when the gradient norm does).
    """
    n_samples, n_feat = x.shape
    x_mean = x.mean(axis=0)
    y_mean = y.mean()
    xc = x - x_mean
    yc = y - y_mean
    w = np.zeros(n_feat)
    col_sq = (xc**2).sum(axis=0) / n_samples
    resid = yc.copy()
    for _ in range(max_iter):
        for j in range(n_feat):
            if col_sq[j] == 0.0:
                continue
            rho = (xc[:, j] @ resid) / n_samples + col_sq[j] * w[j]
            new_w = np.sign(rho) * max(abs(rho) - lam, 0.0) / col_sq[j] if lam > 0 else rho / col_sq[j]
            if new_w != w[j]:
                resid -= xc[:, j] * (new_w - w[j])
                w[j] = new_w
        grad_inf = np.abs(xc.T @ resid).max() / n_samples if n_feat else 0.0
        if lam == 0.0:
            if grad_inf <= gap_tol:
                break
        else:
            primal = 0.5 * (resid @ resid) / n_samples + lam * np.abs(w).sum()
            s = min(1.0, lam / grad_inf) if grad_inf > 0 else 1.0
            theta_scale = s / n_samples
            dual = theta_scale * (resid @ yc) - 0.5 * n_samples * theta_scale**2 * (resid @ resid)
            if primal - dual <= gap_tol:
                break
    intercept = y_mean - x_mean @ w
    return w, intercept


class LassoBaseline(Forecaster):
    """L1-regularized linear model on lag features, solved by coordinate descent."""

    def __init__(self, lam: float = 0.1, per_region: bool = False, gap_tol: float = 1e-6):
        if lam < 0:
            raise ConfigError("lasso lambda must be >= 0")
        self.lam = lam
        self.per_region = per_region
        self.gap_tol = gap_tol

    def fit(self, view: TrainView) -> None:
        self.n = view.n_regions
        ts = view.window_ts
        if self.per_region:
            self.coefs = []
            for r in range(self.n):
                x = np.stack([view.lags(t)[:, r] for t in ts])
                y = np.array([view.target(t)[r] for t in ts])
                self.coefs.append(_lasso_cd(x, y, self.lam, self.gap_tol))
        else:
            x, y = _design_pooled(view, ts)
            x = x[:, :-1]  # drop explicit intercept column; centering supplies it
            self.coef = _lasso_cd(x, y, self.lam, self.gap_tol)

    def predict(self, window: Window) -> np.ndarray:
        if self.per_region:
            return np.array(
                [float(window.x_raw[:, r] @ self.coefs[r][0] + self.coefs[r][1]) for r in range(self.n)]
            )
        w, b = self.coef
        return np.array(
            [float(_feature_row_pooled(window, r, self.n)[:-1] @ w + b) for r in range(self.n)]
        )


class MlpBaseline(Forecaster):
    """Feed-forward net on the flattened scaled window, trained with Adam + MSE."""

    def __init__(self, widths=(128, 128, 64, 64), epochs: int = 100, lr: float = 1e-3,
                 batch_size: int = 32, seed: int = 0, weight_decay: float = 0.0):
        self.widths = tuple(widths)
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.seed = seed
        self.weight_decay = weight_decay

    def fit(self, view: TrainView) -> None:
        self.scale = view.scale
        rng = np.random.default_rng(np.random.SeedSequence(self.seed).spawn(2)[0])
        n_in = view.seq_len * view.n_regions
        dims = [n_in, *self.widths, view.n_regions]
        self.layers = []
        for d_in, d_out in zip(dims[:-1], dims[1:]):
            w = Tensor(m._glorot(rng, (d_in, d_out), d_in, d_out), requires_grad=True)
            b = Tensor(np.zeros(d_out), requires_grad=True)
            self.layers.append((w, b))
        x_all = np.stack([view.lags(t).ravel() for t in view.window_ts]) / view.scale
        y_all = np.stack([view.target(t) for t in view.window_ts]) / view.scale
        named = {f"l{i}.{nm}": t for i, (w, b) in enumerate(self.layers) for nm, t in (("w", w), ("b", b))}
        state = tr.AdamState.init(named)
        cfg = tr.TrainConfig(
            learning_rate=self.lr, weight_decay=self.weight_decay,
            epochs=self.epochs, batch_size=self.batch_size, seed=self.seed,
        )
        for batches in tr.batch_schedule(len(x_all), self.batch_size, self.epochs, self.seed):
            for sel in batches:
                with Tape() as tape:
                    pred = self._forward(Tensor(x_all[sel]))
                    loss = tr.mse_loss(pred, Tensor(y_all[sel]))
                    for t in named.values():
                        t.zero_grad()
                    tape.backward(loss)
                tr.adam_step(named, {k: t.grad for k, t in named.items()}, state, cfg)

    def _forward(self, x: Tensor) -> Tensor:
        h = x
        last = len(self.layers) - 1
        for i, (w, b) in enumerate(self.layers):
            h = ad.add(ad.matmul(h, w), b)
            if i != last:
                h = ad.relu(h)
        return h

    def predict(self, window: Window) -> np.ndarray:
        pred = self._forward(Tensor(window.x_raw.ravel()[None, :] / self.scale))
        return pred.data[0] * self.scale


BASELINE_NAMES = ("ha", "ridge", "lasso", "mlp")


def make_baseline(name: str, seed: int = 0, per_region: bool = False,
                  ridge_lambda: float = 1.0, lasso_lambda: float = 0.1,
                  mlp_epochs: int = 100, mlp_lr: float = 1e-3) -> Forecaster:
    if name == "ha":
        return HistoricalAverage()
    if name == "ridge":
        return RidgeBaseline(lam=ridge_lambda, per_region=per_region)
    if name == "lasso":
        return LassoBaseline(lam=lasso_lambda, per_region=per_region)
    if name == "mlp":
        return MlpBaseline(epochs=mlp_epochs, lr=mlp_lr, seed=seed)
    raise ConfigError(f"unknown baseline {name!r}")


# ---------------------------------------------------------------------------
# model evaluation, ablations, sweeps


def predict_model(
    dataset: WindowedDataset,
    split: str,
    variant: str,
    params: m.ModelParams,
    cfg: m.ModelConfig,
    batch_size: int = 256,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Raw-space (preds, targets, target_ts) for one split."""
    ts = dataset.splits[split]
    if len(ts) == 0:
        raise ConfigError(f"split {split!r} has no windows")
    preds = []
    for i in range(0, len(ts), batch_size):
        batch = m.build_batch(dataset, ts[i : i + batch_size], variant)
        preds.append(m.forward_batch(batch, variant, params, cfg).data)
    preds_raw = dataset.scaler.inverse(np.vstack(preds))
    targets_raw = np.stack([dataset.target_raw(int(t)) for t in ts])
    return preds_raw, targets_raw, ts + 1


def evaluate_forecaster(dataset: WindowedDataset, forecaster: Forecaster, split: str = "test"):
    forecaster.fit(TrainView.of(dataset))
    ts = dataset.splits[split]
    preds = np.stack([forecaster.predict(dataset.window(int(t))) for t in ts])
    targets = np.stack([dataset.target_raw(int(t)) for t in ts])
    return preds, targets, ts + 1


def evaluate_checkpoint(dataset: WindowedDataset, ckpt: tr.Checkpoint, split: str = "test") -> MetricReport:
    params, cfg = tr.params_from_checkpoint(ckpt, dataset.n_regions)
    preds, targets, target_ts = predict_model(dataset, split, ckpt.config["variant"], params, cfg)
    return compute_metrics_with_breakdown(preds, targets, target_ts, dataset.calendar)


def run_ablation_suite(
    dataset: WindowedDataset,
    train_config: tr.TrainConfig,
    model_config: m.ModelConfig | None = None,
    variants: Sequence[str] = m.VARIANTS,
    baselines: Sequence[str] = BASELINE_NAMES,
    baseline_kwargs: dict | None = None,
) -> list[dict]:
    """Train every learned variant with identical seed/config, fit the baselines,
    and report test metrics for each, one row per method."""
    cfg = model_config or m.ModelConfig()
    rows = []
    for variant in variants:
        ckpt = tr.train(dataset, variant, train_config, cfg)
        report = evaluate_checkpoint(dataset, ckpt)
        rows.append(_row(variant, report, ckpt.config))
    kw = baseline_kwargs or {}
    for name in baselines:
        forecaster = make_baseline(name, seed=train_config.seed, **kw)
        preds, targets, target_ts = evaluate_forecaster(dataset, forecaster)
        report = compute_metrics_with_breakdown(preds, targets, target_ts, dataset.calendar)
        rows.append(_row(name, report, {"baseline": name, "seed": train_config.seed, **kw}))
    return rows


def run_sweeps(
    dataset: WindowedDataset,
    axis: str,
    values: Sequence[int],
    train_config: tr.TrainConfig,
    model_config: m.ModelConfig | None = None,
    variant: str = "full",
) -> list[dict]:
    """Retrain per grid point with a fixed seed; one report row per point."""
    base_cfg = model_config or m.ModelConfig()
    rows = []
    for value in values:
        if axis == "sequence_length":
            ds = dataset.with_seq_len(int(value))
            cfg = base_cfg
        elif axis == "gat_layers":
            ds = dataset
            gat = m.GatBlockConfig(int(value), base_cfg.gat.hidden_units, base_cfg.gat.negative_slope)
            cfg = m.ModelConfig(gat=gat, lstm_units=base_cfg.lstm_units)
        else:
            raise ConfigError(f"unknown sweep axis {axis!r}")
        ckpt = tr.train(ds, variant, train_config, cfg)
        report = evaluate_checkpoint(ds, ckpt)
        row = _row(f"{axis}={value}", report, ckpt.config)
        row["axis"] = axis
        row["value"] = int(value)
        rows.append(row)
    return rows


def _row(name: str, report: MetricReport, config_echo: dict) -> dict:
    return {
        "name": name,
        "rmse": report.rmse,
        "mape": report.mape,
        "mae": report.mae,
        "n_samples": report.n_samples,
        "n_excluded_mape": report.n_excluded_mape,
        "report": report.as_dict(),
        "config": config_echo,
    }

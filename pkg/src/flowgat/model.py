"""The demand forecasting network and its ablation variants.

Architecture: per input interval, a block of graph attention layers
(weights shared across the whole input sequence) transforms the scaled
demand vector under that interval's commuting graph; the per-interval
outputs are flattened and fed, oldest first, to an LSTM; a fully
connected ReLU head maps the final hidden state to next-interval demand
for every region.

Variants:
    full           dynamic per-interval graphs (the default model)
    fixed_graph    every interval uses the geographic 8-neighborhood graph
    spatial_only   attention block of the last interval straight into the head
    temporal_only  LSTM over raw demand vectors, no attention block

Graph attention math for node i with in-neighbor j at one interval:
score e_ij = leaky(a_src·Wh_i + a_dst·Wh_j), attention = softmax over i's
neighbor set, output h'_i = leaky(sum_j alpha_ij Wh_j). The heavy lifting
runs in the fused kernels under :mod:`flowgat.kernels`; forward and
backward are registered on the autodiff tape as one op.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from . import kernels
from .autodiff import Tensor
from .data.graphs import pad_neighbor_lists, stack_padded
from .data.windows import Window, WindowedDataset
from .errors import DimensionError, FlowgatError

VARIANTS = ("full", "fixed_graph", "spatial_only", "temporal_only")
GATE_NAMES = ("i", "f", "g", "o")


@dataclass
class GatBlockConfig:
    n_layers: int = 3
    hidden_units: int = 32
    negative_slope: float = 0.2

    def widths(self) -> list[int]:
        """Feature width entering each layer; layer 0 consumes scalar demand."""
        return [1] + [self.hidden_units] * self.n_layers


@dataclass
class ModelConfig:
    gat: GatBlockConfig = field(default_factory=GatBlockConfig)
    lstm_units: int = 512

    def as_dict(self) -> dict:
        return {
            "gat_layers": self.gat.n_layers,
            "gat_units": self.gat.hidden_units,
            "negative_slope": self.gat.negative_slope,
            "lstm_units": self.lstm_units,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            gat=GatBlockConfig(d["gat_layers"], d["gat_units"], d["negative_slope"]),
            lstm_units=d["lstm_units"],
        )


@dataclass
class GatLayerParams:
    w: Tensor  # (d_out, d_in)
    a: Tensor  # (2 * d_out,)


@dataclass
class LstmParams:
    """One gate group per (input|hidden, gate); weights stored input-major."""

    w_i: dict[str, Tensor]  # gate -> (input_size, k)
    w_h: dict[str, Tensor]  # gate -> (k, k)
    b_i: dict[str, Tensor]  # gate -> (k,)
    b_h: dict[str, Tensor]  # gate -> (k,)

    @property
    def hidden_size(self) -> int:
        return self.w_i["i"].shape[1]

    @property
    def input_size(self) -> int:
        return self.w_i["i"].shape[0]


@dataclass
class PredictionParams:
    w: Tensor  # (n_regions, k_in)
    b: Tensor  # (n_regions,)


@dataclass
class ModelParams:
    variant: str
    gat: list[GatLayerParams] | None
    lstm: LstmParams | None
    head: PredictionParams

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        if self.gat is not None:
            for i, layer in enumerate(self.gat):
                out[f"gat.{i}.w"] = layer.w
                out[f"gat.{i}.a"] = layer.a
        if self.lstm is not None:
            for gate in GATE_NAMES:
                out[f"lstm.w_i{gate}"] = self.lstm.w_i[gate]
                out[f"lstm.w_h{gate}"] = self.lstm.w_h[gate]
                out[f"lstm.b_i{gate}"] = self.lstm.b_i[gate]
                out[f"lstm.b_h{gate}"] = self.lstm.b_h[gate]
        out["head.w"] = self.head.w
        out["head.b"] = self.head.b
        return out

    def zero_grad(self) -> None:
        for t in self.named().values():
            t.zero_grad()

    def copy_values(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named().items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for k, v in self.named().items():
            v.data = values[k].copy()


def _glorot(rng: np.random.Generator, shape, fan_in, fan_out) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_gat_layers(cfg: GatBlockConfig, rng: np.random.Generator) -> list[GatLayerParams]:
    layers = []
    widths = cfg.widths()
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        w = Tensor(_glorot(rng, (d_out, d_in), d_in, d_out), requires_grad=True)
        a = Tensor(_glorot(rng, (2 * d_out,), 2 * d_out, 1), requires_grad=True)
        layers.append(GatLayerParams(w=w, a=a))
    return layers


def init_lstm(input_size: int, k: int, rng: np.random.Generator) -> LstmParams:
    w_i, w_h, b_i, b_h = {}, {}, {}, {}
    for gate in GATE_NAMES:
        w_i[gate] = Tensor(_glorot(rng, (input_size, k), input_size, k), requires_grad=True)
        w_h[gate] = Tensor(_glorot(rng, (k, k), k, k), requires_grad=True)
        # forget-gate bias starts at +1 so early training does not wipe the cell state
        b_i[gate] = Tensor(np.full(k, 1.0 if gate == "f" else 0.0), requires_grad=True)
        b_h[gate] = Tensor(np.zeros(k), requires_grad=True)
    return LstmParams(w_i=w_i, w_h=w_h, b_i=b_i, b_h=b_h)


def init_head(k_in: int, n_out: int, rng: np.random.Generator) -> PredictionParams:
    return PredictionParams(
        w=Tensor(_glorot(rng, (n_out, k_in), k_in, n_out), requires_grad=True),
        b=Tensor(np.zeros(n_out), requires_grad=True),
    )


def init_params(
    variant: str, n_regions: int, cfg: ModelConfig, rng: np.random.Generator
) -> ModelParams:
    if variant not in VARIANTS:
        raise FlowgatError(f"unknown variant {variant!r}, expected one of {VARIANTS}")
    d = cfg.gat.widths()[-1]
    gat = lstm = None
    if variant in ("full", "fixed_graph", "spatial_only"):
        gat = init_gat_layers(cfg.gat, rng)
    if variant in ("full", "fixed_graph"):
        lstm = init_lstm(n_regions * d, cfg.lstm_units, rng)
        head_in = cfg.lstm_units
    elif variant == "temporal_only":
        lstm = init_lstm(n_regions, cfg.lstm_units, rng)
        head_in = cfg.lstm_units
    else:  # spatial_only
        head_in = n_regions * d
    head = init_head(head_in, n_regions, rng)
    return ModelParams(variant=variant, gat=gat, lstm=lstm, head=head)


# ---------------------------------------------------------------------------
# forward pieces


def _as_padded(neighbors, n_inst=None):
    """Accepts per-node neighbor lists or an (idx, mask) pair; returns 3-D (idx, mask)."""
    if isinstance(neighbors, tuple) and len(neighbors) == 2 and isinstance(neighbors[0], np.ndarray):
        idx, mask = neighbors
    else:
        idx, mask = pad_neighbor_lists(neighbors)
    if idx.ndim == 2:
        idx, mask = idx[None], mask[None]
    return idx, mask


def gat_attention(h: Tensor, params: GatLayerParams, idx, mask, slope: float) -> tuple[Tensor, np.ndarray]:
    """Fused attention layer on (I, N, d_in) features; returns output and alpha."""
    if h.data.ndim != 3:
        raise DimensionError(f"gat_attention expects (instances, nodes, features), got {h.data.shape}")
    if params.w.data.shape[1] != h.data.shape[2]:
        raise DimensionError(
            f"layer expects width {params.w.data.shape[1]}, features have {h.data.shape[2]}"
        )
    h_arr = np.ascontiguousarray(h.data)
    out_arr, p, u, alpha, z = kernels.gat_forward(
        h_arr, params.w.data, params.a.data, idx, mask, slope
    )
    out = Tensor(out_arr)

    def vjp(g):
        return kernels.gat_backward(
            np.ascontiguousarray(g), h_arr, params.w.data, params.a.data, idx, mask, slope, p, u, alpha, z
        )

    ad.record_op(out, (h, params.w, params.a), vjp)
    return out, alpha


def gat_layer_forward(
    h: Tensor,
    neighbors,
    params: GatLayerParams,
    slope: float = 0.2,
    return_attention: bool = False,
):
    """Single attention layer on (N, d_in) node features under one graph."""
    single = h.data.ndim == 2
    hx = ad.reshape(h, (1, *h.data.shape)) if single else h
    idx, mask = _as_padded(neighbors)
    out, alpha = gat_attention(hx, params, idx, mask, slope)
    if single:
        out = ad.reshape(out, out.data.shape[1:])
        alpha = alpha[0]
    if return_attention:
        return out, (alpha, idx, mask)
    return out


def attention_matrix(h: Tensor, neighbors, params: GatLayerParams, slope: float = 0.2) -> np.ndarray:
    """Dense (N, N) matrix of attention coefficients; zeros outside neighbor sets."""
    _, (alpha, idx, mask) = gat_layer_forward(h, neighbors, params, slope, return_attention=True)
    n = h.data.shape[0]
    dense = np.zeros((n, n))
    m2, i2 = mask[0], idx[0]
    for i in range(n):
        dense[i, i2[i, m2[i]]] = alpha[i, m2[i]]
    return dense


def gat_block_forward(x: Tensor, neighbors, cfg: GatBlockConfig, layers: Sequence[GatLayerParams]) -> Tensor:
    """Stack of attention layers sharing one interval's graph; 0 layers = identity."""
    if len(layers) != cfg.n_layers:
        raise DimensionError(f"expected {cfg.n_layers} layer params, got {len(layers)}")
    single = x.data.ndim == 2
    h = ad.reshape(x, (1, *x.data.shape)) if single else x
    idx, mask = _as_padded(neighbors)
    for layer in layers:
        h, _ = gat_attention(h, layer, idx, mask, cfg.negative_slope)
    if single:
        h = ad.reshape(h, h.data.shape[1:])
    return h


def spatial_forward(window_x, graphs, cfg: GatBlockConfig, layers) -> Tensor:
    """Per-interval attention features flattened into S with rows oldest first.

    ``window_x``: (L, N) scaled demand; ``graphs``: per-interval neighbor lists.
    """
    window_x = np.asarray(window_x, dtype=np.float64)
    seq_len, n = window_x.shape
    rows = []
    for l in range(seq_len):
        x_t = Tensor(window_x[l][:, None])
        feat = gat_block_forward(x_t, graphs[l], cfg, layers)
        rows.append(ad.reshape(feat, (1, feat.data.size)))
    return ad.concat(rows, axis=0)


def lstm_forward(s: Tensor, params: LstmParams) -> Tensor:
    """Run the gate system over rows of S (oldest first); returns the final hidden state.

    Accepts (L, M) for one sample or (L, B, M) for a batch; the batched form
    returns (B, k).
    """
    single = s.data.ndim == 2
    sx = ad.reshape(s, (s.data.shape[0], 1, s.data.shape[1])) if single else s
    seq_len, n_batch, width = sx.data.shape
    if width != params.input_size:
        raise DimensionError(f"LSTM expects input width {params.input_size}, got {width}")
    k = params.hidden_size
    h = Tensor(np.zeros((n_batch, k)))
    c = Tensor(np.zeros((n_batch, k)))
    for l in range(seq_len):
        x = ad.reshape(ad.slice_rows(sx, l, l + 1), (n_batch, width))
        pre = {}
        for gate in GATE_NAMES:
            xa = ad.add(ad.matmul(x, params.w_i[gate]), params.b_i[gate])
            ha = ad.add(ad.matmul(h, params.w_h[gate]), params.b_h[gate])
            pre[gate] = ad.add(xa, ha)
        i_g = ad.sigmoid(pre["i"])
        f_g = ad.sigmoid(pre["f"])
        g_g = ad.tanh(pre["g"])
        o_g = ad.sigmoid(pre["o"])
        c = ad.add(ad.mul(f_g, c), ad.mul(i_g, g_g))
        h = ad.mul(o_g, ad.tanh(c))
    if single:
        h = ad.reshape(h, (k,))
    return h


def predict(beta: Tensor, params: PredictionParams) -> Tensor:
    """ReLU fully connected head; outputs are non-negative demand estimates."""
    single = beta.data.ndim == 1
    bx = ad.reshape(beta, (1, beta.data.size)) if single else beta
    if bx.data.shape[1] != params.w.data.shape[1]:
        raise DimensionError(
            f"prediction head expects width {params.w.data.shape[1]}, got {bx.data.shape[1]}"
        )
    out = ad.relu(ad.add(ad.matmul(bx, ad.transpose(params.w)), params.b))
    if single:
        out = ad.reshape(out, (out.data.size,))
    return out


def stdgat_forward(window: Window, variant: str, params: ModelParams, cfg: ModelConfig, fixed_neighbors=None) -> Tensor:
    """Full forward pass for one window under the given variant.

    ``fixed_neighbors`` (per-node arrays) is required for the fixed_graph
    variant and ignored otherwise.
    """
    if variant not in VARIANTS:
        raise FlowgatError(f"unknown variant {variant!r}")
    seq_len = window.x.shape[0]
    if variant == "temporal_only":
        s = Tensor(window.x)
        return predict(lstm_forward(s, params.lstm), params.head)
    graphs = window.neighbors
    if variant == "fixed_graph":
        if fixed_neighbors is None:
            raise FlowgatError("fixed_graph variant needs the fixed neighbor lists")
        graphs = [fixed_neighbors] * seq_len
    if variant == "spatial_only":
        x_t = Tensor(window.x[-1][:, None])
        feat = gat_block_forward(x_t, graphs[-1], cfg.gat, params.gat)
        theta = ad.reshape(feat, (feat.data.size,))
        return predict(theta, params.head)
    s = spatial_forward(window.x, graphs, cfg.gat, params.gat)
    return predict(lstm_forward(s, params.lstm), params.head)


# ---------------------------------------------------------------------------
# batched path used by training and evaluation


@dataclass
class WindowBatch:
    x: np.ndarray                 # (B, L, N) scaled inputs
    graphs: list[tuple[np.ndarray, np.ndarray]] | None  # per position: (B, N, D) idx/mask
    target: np.ndarray | None     # (B, N) scaled targets


def build_batch(dataset: WindowedDataset, ts: Sequence[int], variant: str) -> WindowBatch:
    """Collate windows for ``ts``, selecting graphs per the variant."""
    windows = [dataset.window(int(t)) for t in ts]
    x = np.stack([w.x for w in windows])
    target = np.stack([w.target for w in windows])
    seq_len = dataset.seq_len
    if variant == "temporal_only":
        graphs = None
    elif variant == "fixed_graph":
        idx, mask = dataset.fixed.padded()
        n_b = len(windows)
        graphs = [(np.broadcast_to(idx, (n_b, *idx.shape)), np.broadcast_to(mask, (n_b, *mask.shape)))] * seq_len
    else:
        graphs = [stack_padded([w.padded[l] for w in windows]) for l in range(seq_len)]
    return WindowBatch(x=x, graphs=graphs, target=target)


def forward_batch(batch: WindowBatch, variant: str, params: ModelParams, cfg: ModelConfig) -> Tensor:
    """Batched forward pass; returns (B, N) predictions."""
    n_b, seq_len, n = batch.x.shape
    if variant == "temporal_only":
        s = Tensor(np.ascontiguousarray(batch.x.transpose(1, 0, 2)))
        return predict(lstm_forward(s, params.lstm), params.head)
    if variant == "spatial_only":
        h = Tensor(batch.x[:, -1, :, None])
        idx, mask = batch.graphs[-1]
        for layer in params.gat:
            h, _ = gat_attention(h, layer, np.ascontiguousarray(idx), np.ascontiguousarray(mask), cfg.gat.negative_slope)
        return predict(ad.reshape(h, (n_b, h.data.shape[1] * h.data.shape[2])), params.head)
    rows = []
    for l in range(seq_len):
        h = Tensor(batch.x[:, l, :, None])
        idx, mask = batch.graphs[l]
        idx = np.ascontiguousarray(idx)
        mask = np.ascontiguousarray(mask)
        for layer in params.gat:
            h, _ = gat_attention(h, layer, idx, mask, cfg.gat.negative_slope)
        flat = ad.reshape(h, (n_b, h.data.shape[1] * h.data.shape[2]))
        rows.append(ad.reshape(flat, (1, *flat.data.shape)))
    s = ad.concat(rows, axis=0)
    return predict(lstm_forward(s, params.lstm), params.head)

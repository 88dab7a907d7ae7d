"""Bipartite graph attention model and the learned baselines.

Every model ends in the same pair of feasibility readouts: a ReLU keeps the
slack intervals and powers nonnegative, a budget scaling caps their sums,
and the placement recurrence turns intervals into antenna coordinates. The
output is therefore feasible for any parameter setting, which is what makes
unsupervised training on the negated objective possible.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from . import graph as graph_mod
from .diffkit import (
    ParamSet,
    ParamSpec,
    Tensor,
    he_init,
    gat_block_forward,
    gat_layer,
    linear,
    log2,
    mlp_forward,
    stack,
)
from .diffkit.layers import HeadParams, MlpLayer
from .diffkit.tensor import NonFiniteError
from .projection import positions_from_deltas, scale_to_budget
from .system import (
    AntennaPlacement,
    PowerAllocation,
    Solution,
    SystemConfig,
    UserLayout,
    energy_efficiency,
    user_rate,
)

MODEL_CHECKPOINT_VERSION = 1


class ShapeMismatchError(ValueError):
    """Input size is incompatible with the trained parameter shapes."""


class CheckpointMismatchError(ValueError):
    """A stored model does not match the requested configuration."""


# ---------------------------------------------------------------------------
# architectures
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BgatArchitecture:
    """Block structure of the bipartite attention model.

    Defaults give five identical blocks: 4 heads of width 8 (GAT out 32),
    a 32-16-2 per-node MLP, and N-2N-N readout networks per block.
    """

    n_blocks: int = 5
    n_heads: int = 4
    head_dim: int = 8
    node_dim: int = 2
    mlp_hidden: tuple[int, ...] = (16,)
    leaky_slope: float = 0.01
    shared_attention: bool = True      # one attention set for both directions
    carry_mlp_features: bool = False   # feed per-node MLP outputs to next block
    normalized_features: bool = True
    readout_bias: bool = True          # readouts are MLPs; biases start at 0

    @property
    def gat_out_dim(self) -> int:
        return self.n_heads * self.head_dim


@dataclass(frozen=True)
class MlpArchitecture:
    """Flat feed-forward baseline; fixed to the user count it was built for."""

    n_users_train: int
    hidden: tuple[int, ...] = (64, 64)
    normalized_features: bool = True


@dataclass(frozen=True)
class GatPoolArchitecture:
    """User-graph attention baseline with global max pooling.

    Users form a complete graph with self-loops (so a single user attends to
    itself) and featureless edges; pooling makes the model size-invariant.
    """

    n_layers: int = 2
    n_heads: int = 4
    head_dim: int = 8
    node_dim: int = 2
    mlp_hidden: tuple[int, ...] = (16,)
    leaky_slope: float = 0.01
    normalized_features: bool = True
    readout_bias: bool = True

    @property
    def gat_out_dim(self) -> int:
        return self.n_heads * self.head_dim


def _readout_specs(prefix: str, n_antennas: int,
                   bias: bool = True) -> list[ParamSpec]:
    n = n_antennas
    specs = [ParamSpec(f"{prefix}.l1.weight", (2 * n, n), n)]
    if bias:
        specs.append(ParamSpec(f"{prefix}.l1.bias", (2 * n,), None))
    specs.append(ParamSpec(f"{prefix}.l2.weight", (n, 2 * n), 2 * n))
    if bias:
        specs.append(ParamSpec(f"{prefix}.l2.bias", (n,), None))
    return specs


def _head_specs(prefix: str, n_heads: int, head_dim: int, in_dim: int,
                with_edge: bool) -> list[ParamSpec]:
    specs: list[ParamSpec] = []
    for k in range(1, n_heads + 1):
        specs += [
            ParamSpec(f"{prefix}.head{k}.attn", (head_dim,), head_dim),
            ParamSpec(f"{prefix}.head{k}.w_src", (head_dim, in_dim), in_dim),
            ParamSpec(f"{prefix}.head{k}.w_tgt", (head_dim, in_dim), in_dim),
        ]
        if with_edge:
            specs.append(ParamSpec(f"{prefix}.head{k}.w_edge", (head_dim,), 1))
    return specs


def bgat_param_specs(arch: BgatArchitecture, n_antennas: int) -> list[ParamSpec]:
    """Flat parameter layout: blocks ascending; per block the attention heads
    (vector, source, target, edge) in head order, the residual transform, the
    MLP layers, then the interval and power readouts."""
    specs: list[ParamSpec] = []
    for d in range(1, arch.n_blocks + 1):
        if arch.shared_attention:
            prefixes = [f"block{d}"]
        else:
            prefixes = [f"block{d}.u", f"block{d}.a"]
        for pre in prefixes:
            specs += _head_specs(pre, arch.n_heads, arch.head_dim,
                                 arch.node_dim, with_edge=True)
        specs.append(ParamSpec(f"block{d}.w_res",
                               (arch.gat_out_dim, arch.node_dim), arch.node_dim))
        dims = (arch.gat_out_dim,) + arch.mlp_hidden + (arch.node_dim,)
        for t, (din, dout) in enumerate(zip(dims[:-1], dims[1:]), start=1):
            specs += [
                ParamSpec(f"block{d}.mlp.l{t}.weight", (dout, din), din),
                ParamSpec(f"block{d}.mlp.l{t}.bias", (dout,), None),
            ]
        specs += _readout_specs(f"block{d}.readout_delta", n_antennas,
                                arch.readout_bias)
        specs += _readout_specs(f"block{d}.readout_power", n_antennas,
                                arch.readout_bias)
    return specs


def mlp_param_specs(arch: MlpArchitecture, n_antennas: int) -> list[ParamSpec]:
    dims = (2 * arch.n_users_train,) + arch.hidden + (2 * n_antennas,)
    specs: list[ParamSpec] = []
    for t, (din, dout) in enumerate(zip(dims[:-1], dims[1:]), start=1):
        specs += [
            ParamSpec(f"mlp.l{t}.weight", (dout, din), din),
            ParamSpec(f"mlp.l{t}.bias", (dout,), None),
        ]
    return specs


def gatpool_param_specs(arch: GatPoolArchitecture,
                        n_antennas: int) -> list[ParamSpec]:
    specs: list[ParamSpec] = []
    in_dim = arch.node_dim
    for ell in range(1, arch.n_layers + 1):
        pre = f"gat.l{ell}"
        specs += _head_specs(pre, arch.n_heads, arch.head_dim, in_dim,
                             with_edge=False)
        specs.append(ParamSpec(f"{pre}.w_res", (arch.gat_out_dim, in_dim), in_dim))
        in_dim = arch.gat_out_dim
    dims = (arch.gat_out_dim,) + arch.mlp_hidden + (2 * n_antennas,)
    for t, (din, dout) in enumerate(zip(dims[:-1], dims[1:]), start=1):
        specs += [
            ParamSpec(f"mlp.l{t}.weight", (dout, din), din),
            ParamSpec(f"mlp.l{t}.bias", (dout,), None),
        ]
    specs += _readout_specs("readout_delta", n_antennas, arch.readout_bias)
    specs += _readout_specs("readout_power", n_antennas, arch.readout_bias)
    return specs


# ---------------------------------------------------------------------------
# differentiable projections and physics
# ---------------------------------------------------------------------------

def scale_to_budget_t(v: Tensor, budget: float) -> Tensor:
    """Differentiable budget scaling: v * budget / max(budget, sum(v)).

    Identity (with identity gradient) when the sum is within budget; the tie
    follows the identity branch.
    """
    total = v.sum(axis=-1, keepdims=True)
    return v * (budget / total.clamp_min(budget))


def position_offsets(cfg: SystemConfig) -> np.ndarray:
    """Constant part of the placement recurrence: -D + guard * (n - 1)."""
    return (-cfg.waveguide_half_length
            + cfg.guard_distance * np.arange(cfg.n_antennas))


def positions_from_deltas_t(delta_m: Tensor, cfg: SystemConfig) -> Tensor:
    """Tensor twin of the placement recurrence (deltas in meters)."""
    return delta_m.cumsum(axis=-1) + position_offsets(cfg)


def pair_distances_t(x: Tensor, users_xy: np.ndarray,
                     cfg: SystemConfig) -> Tensor:
    """User-antenna distances (..., M, N) from coordinates x (..., N)."""
    ux = users_xy[..., 0:1]                       # (..., M, 1)
    base = users_xy[..., 1:2] ** 2 + cfg.height ** 2
    dx = x.expand_dims(-2) - ux
    return (dx * dx + base).sqrt()


def objective_t(cfg: SystemConfig, users_xy: np.ndarray, x: Tensor,
                p: Tensor) -> Tensor:
    """Per-sample sum rate over total consumed power, differentiably.

    Mirrors the exact complex-arithmetic rate: amplitude sqrt(p * eta)/dist
    and phase (free-space plus in-waveguide) per antenna, coherently summed.
    """
    dist = pair_distances_t(x, users_xy, cfg)
    amp = (p.sqrt() * math.sqrt(cfg.path_gain)).expand_dims(-2) / dist
    phase = dist * (2.0 * math.pi / cfg.wavelength) + (
        (x + cfg.waveguide_half_length)
        * (2.0 * math.pi / cfg.guided_wavelength)).expand_dims(-2)
    # wrap to [0, 2pi): a constant shift, so gradients are untouched, but the
    # small phase magnitude keeps finite-difference noise at the ulp level
    two_pi = 2.0 * math.pi
    phase = phase - np.floor(phase.data / two_pi) * two_pi
    re = (amp * phase.cos()).sum(axis=-1)
    im = (amp * phase.sin()).sum(axis=-1)
    snr = (re * re + im * im) * (1.0 / cfg.noise_power)
    rates = log2(snr + 1.0)
    return rates.sum(axis=-1) / (p.sum(axis=-1) + cfg.static_power)


def ee_t(cfg: SystemConfig, users_xy: np.ndarray, x: Tensor, p: Tensor) -> Tensor:
    """Differentiable energy efficiency (slot-length weighted objective)."""
    return objective_t(cfg, users_xy, x, p) * cfg.slot_length


def unsupervised_loss(cfg: SystemConfig, layout: UserLayout,
                      sol: Solution) -> float:
    """Negated objective of one solution, evaluated by the exact model."""
    rates = sum(user_rate(cfg, u, sol) for u in layout.positions)
    return -rates / (sol.power.total + cfg.static_power)


# ---------------------------------------------------------------------------
# BGAT forward
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockRecord:
    """Intermediate state emitted by one block (single-sample view)."""

    user_embeddings: np.ndarray
    antenna_embeddings: np.ndarray
    deltas: np.ndarray      # meters
    x_coords: np.ndarray    # meters
    powers: np.ndarray      # watts
    edge_matrix: np.ndarray  # meters


def _heads(params: ParamSet, prefix: str, n_heads: int,
           with_edge: bool = True) -> list[HeadParams]:
    return [HeadParams(
        attn=params[f"{prefix}.head{k}.attn"],
        w_src=params[f"{prefix}.head{k}.w_src"],
        w_tgt=params[f"{prefix}.head{k}.w_tgt"],
        w_edge=params[f"{prefix}.head{k}.w_edge"] if with_edge else None,
    ) for k in range(1, n_heads + 1)]


def _mlp_layers(params: ParamSet, prefix: str, n_layers: int,
                relu_last: bool = True) -> list[MlpLayer]:
    layers = []
    for t in range(1, n_layers + 1):
        layers.append(MlpLayer(
            weight=params[f"{prefix}.l{t}.weight"],
            bias=params[f"{prefix}.l{t}.bias"],
            relu=relu_last or t < n_layers,
        ))
    return layers


def _readout(params: ParamSet, prefix: str, col: Tensor) -> Tensor:
    """N-2N-N readout with a final ReLU guaranteeing nonnegativity."""
    b1 = params[f"{prefix}.l1.bias"] if f"{prefix}.l1.bias" in params else None
    b2 = params[f"{prefix}.l2.bias"] if f"{prefix}.l2.bias" in params else None
    hidden = linear(col, params[f"{prefix}.l1.weight"], b1).relu()
    return linear(hidden, params[f"{prefix}.l2.weight"], b2).relu()


def _initial_state(cfg: SystemConfig, users_xy: np.ndarray, l_scale: float,
                   p_scale: float):
    """Initial node and edge features plus the implied starting placement."""
    deltas0 = scale_to_budget(graph_mod.initial_deltas(cfg),
                              cfg.placement_budget)
    place0 = positions_from_deltas(deltas0, cfg).x_coords
    powers0 = np.full(cfg.n_antennas, cfg.power_budget / cfg.n_antennas)

    batch = users_xy.shape[:-2]
    ant0 = np.column_stack([deltas0 / l_scale, powers0 / p_scale])
    ant = np.broadcast_to(ant0, batch + ant0.shape).copy()
    dx = place0 - users_xy[..., 0:1]
    dist0 = np.sqrt(dx * dx + users_xy[..., 1:2] ** 2 + cfg.height ** 2)
    return Tensor(users_xy / l_scale), Tensor(ant), Tensor(dist0 / l_scale)


def bgat_forward_batch(params: ParamSet, arch: BgatArchitecture,
                       cfg: SystemConfig, users_xy: np.ndarray,
                       record_trace: bool = False):
    """Run the block stack on a batch of user layouts.

    users_xy: (..., M, 2) raw coordinates in meters. Returns the final
    coordinate tensor (..., N), power tensor (..., N), and (optionally) the
    per-block trace with raw-unit numpy snapshots.
    """
    users_xy = np.asarray(users_xy, dtype=np.float64)
    l_scale = cfg.half_range if arch.normalized_features else 1.0
    p_scale = cfg.power_budget if arch.normalized_features else 1.0
    delta_budget = cfg.placement_budget / l_scale
    power_budget = cfg.power_budget / p_scale

    user_feat, ant_feat, edge_feat = _initial_state(cfg, users_xy,
                                                    l_scale, p_scale)
    trace: list[BlockRecord] = []
    x = p_w = None
    for d in range(1, arch.n_blocks + 1):
        if arch.shared_attention:
            u_heads = a_heads = _heads(params, f"block{d}", arch.n_heads)
        else:
            u_heads = _heads(params, f"block{d}.u", arch.n_heads)
            a_heads = _heads(params, f"block{d}.a", arch.n_heads)
        user_emb, ant_emb = gat_block_forward(
            u_heads, a_heads, params[f"block{d}.w_res"],
            user_feat, ant_feat, edge_feat, arch.leaky_slope)

        mlp = _mlp_layers(params, f"block{d}.mlp", len(arch.mlp_hidden) + 1)
        ant_nodes = mlp_forward(ant_emb, mlp)

        delta_norm = scale_to_budget_t(
            _readout(params, f"block{d}.readout_delta", ant_nodes[..., 0]),
            delta_budget)
        p_norm = scale_to_budget_t(
            _readout(params, f"block{d}.readout_power", ant_nodes[..., 1]),
            power_budget)
        delta_m = delta_norm * l_scale
        p_w = p_norm * p_scale
        x = positions_from_deltas_t(delta_m, cfg)
        if not (np.all(np.isfinite(x.data)) and np.all(np.isfinite(p_w.data))):
            raise NonFiniteError(f"block{d}")

        dist = pair_distances_t(x, users_xy, cfg)
        edge_feat = dist * (1.0 / l_scale)
        if arch.carry_mlp_features:
            user_feat = mlp_forward(user_emb, mlp)
            ant_feat = ant_nodes
        else:
            ant_feat = stack([delta_norm, p_norm], axis=-1)

        if record_trace:
            trace.append(BlockRecord(
                user_embeddings=user_emb.data.copy(),
                antenna_embeddings=ant_emb.data.copy(),
                deltas=delta_m.data.copy(),
                x_coords=x.data.copy(),
                powers=p_w.data.copy(),
                edge_matrix=dist.data.copy(),
            ))
    return x, p_w, trace


def bgat_forward(params: ParamSet, arch: BgatArchitecture, cfg: SystemConfig,
                 layout: UserLayout) -> tuple[Solution, list[BlockRecord]]:
    """Single-layout forward pass returning the solution and block trace."""
    users_xy = layout.positions[None, :, :2]
    x, p, trace = bgat_forward_batch(params, arch, cfg, users_xy,
                                     record_trace=True)
    sol = Solution(AntennaPlacement(x.data[0].copy()),
                   PowerAllocation(p.data[0].copy()))
    squeezed = [BlockRecord(*(arr[0].copy() for arr in
                              (r.user_embeddings, r.antenna_embeddings,
                               r.deltas, r.x_coords, r.powers, r.edge_matrix)))
                for r in trace]
    return sol, squeezed


# ---------------------------------------------------------------------------
# baselines
# ---------------------------------------------------------------------------

def mlp_baseline_forward_batch(params: ParamSet, arch: MlpArchitecture,
                               cfg: SystemConfig, users_xy: np.ndarray):
    users_xy = np.asarray(users_xy, dtype=np.float64)
    m = users_xy.shape[-2]
    if m != arch.n_users_train:
        raise ShapeMismatchError(
            f"model was built for {arch.n_users_train} users, got {m}")
    l_scale = cfg.half_range if arch.normalized_features else 1.0
    p_scale = cfg.power_budget if arch.normalized_features else 1.0
    n = cfg.n_antennas

    flat = Tensor(users_xy.reshape(users_xy.shape[:-2] + (2 * m,)) / l_scale)
    layers = _mlp_layers(params, "mlp", len(arch.hidden) + 1, relu_last=False)
    out = mlp_forward(flat, layers)

    delta_norm = scale_to_budget_t(out[..., :n].relu(),
                                   cfg.placement_budget / l_scale)
    p_norm = scale_to_budget_t(out[..., n:].relu(),
                               cfg.power_budget / p_scale)
    x = positions_from_deltas_t(delta_norm * l_scale, cfg)
    return x, p_norm * p_scale


def mlp_baseline_forward(params: ParamSet, arch: MlpArchitecture,
                         cfg: SystemConfig, layout: UserLayout) -> Solution:
    x, p = mlp_baseline_forward_batch(params, arch, cfg,
                                      layout.positions[None, :, :2])
    return Solution(AntennaPlacement(x.data[0].copy()),
                    PowerAllocation(p.data[0].copy()))


def gatpool_baseline_forward_batch(params: ParamSet, arch: GatPoolArchitecture,
                                   cfg: SystemConfig, users_xy: np.ndarray):
    users_xy = np.asarray(users_xy, dtype=np.float64)
    l_scale = cfg.half_range if arch.normalized_features else 1.0
    p_scale = cfg.power_budget if arch.normalized_features else 1.0
    n = cfg.n_antennas

    node = Tensor(users_xy / l_scale)
    for ell in range(1, arch.n_layers + 1):
        heads = _heads(params, f"gat.l{ell}", arch.n_heads, with_edge=False)
        node = gat_layer(heads, params[f"gat.l{ell}.w_res"], node, node,
                         edge=None, slope=arch.leaky_slope)
    pooled = node.amax(axis=-2)

    layers = _mlp_layers(params, "mlp", len(arch.mlp_hidden) + 1)
    out = mlp_forward(pooled, layers)

    delta_norm = scale_to_budget_t(
        _readout(params, "readout_delta", out[..., :n]),
        cfg.placement_budget / l_scale)
    p_norm = scale_to_budget_t(
        _readout(params, "readout_power", out[..., n:]),
        cfg.power_budget / p_scale)
    x = positions_from_deltas_t(delta_norm * l_scale, cfg)
    return x, p_norm * p_scale


def gatpool_baseline_forward(params: ParamSet, arch: GatPoolArchitecture,
                             cfg: SystemConfig, layout: UserLayout) -> Solution:
    x, p = gatpool_baseline_forward_batch(params, arch, cfg,
                                          layout.positions[None, :, :2])
    return Solution(AntennaPlacement(x.data[0].copy()),
                    PowerAllocation(p.data[0].copy()))


# ---------------------------------------------------------------------------
# model bundle
# ---------------------------------------------------------------------------

MODEL_KINDS = ("bgat", "mlp", "gat_pool")

_ARCH_TYPES = {"bgat": BgatArchitecture, "mlp": MlpArchitecture,
               "gat_pool": GatPoolArchitecture}


@dataclass
class Model:
    """A model kind, its architecture, the system it was built for, and
    the current parameters."""

    kind: str
    cfg: SystemConfig
    arch: BgatArchitecture | MlpArchitecture | GatPoolArchitecture
    params: ParamSet

    @property
    def n_antennas(self) -> int:
        return self.cfg.n_antennas

    @property
    def n_users_train(self) -> int | None:
        return self.arch.n_users_train if self.kind == "mlp" else None

    def forward_batch(self, users_xy: np.ndarray) -> tuple[Tensor, Tensor]:
        if self.kind == "bgat":
            x, p, _ = bgat_forward_batch(self.params, self.arch, self.cfg,
                                         users_xy)
            return x, p
        if self.kind == "mlp":
            return mlp_baseline_forward_batch(self.params, self.arch,
                                              self.cfg, users_xy)
        return gatpool_baseline_forward_batch(self.params, self.arch,
                                              self.cfg, users_xy)

    def solve(self, layout: UserLayout) -> Solution:
        x, p = self.forward_batch(layout.positions[None, :, :2])
        return Solution(AntennaPlacement(x.data[0].copy()),
                        PowerAllocation(p.data[0].copy()))

    def batch_loss(self, users_xy: np.ndarray) -> Tensor:
        """Mean negated objective over a batch (the training loss)."""
        x, p = self.forward_batch(users_xy)
        return -objective_t(self.cfg, np.asarray(users_xy, dtype=np.float64),
                            x, p).mean()

    def save(self, path: str, seed: int | None = None):
        doc = {
            "format_version": MODEL_CHECKPOINT_VERSION,
            "kind": self.kind,
            "system": json.loads(self.cfg.to_json()),
            "architecture": asdict(self.arch),
            "params": self.params.to_checkpoint(seed),
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path: str,
             expected_cfg: SystemConfig | None = None) -> "Model":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format_version") != MODEL_CHECKPOINT_VERSION:
            raise CheckpointMismatchError(
                f"unsupported model checkpoint version {doc.get('format_version')}")
        kind = doc["kind"]
        if kind not in MODEL_KINDS:
            raise CheckpointMismatchError(f"unknown model kind {kind!r}")
        cfg = SystemConfig.from_json(json.dumps(doc["system"]))
        arch_dict = dict(doc["architecture"])
        for key, val in arch_dict.items():
            if isinstance(val, list):
                arch_dict[key] = tuple(val)
        arch = _ARCH_TYPES[kind](**arch_dict)
        if expected_cfg is not None and expected_cfg.n_antennas != cfg.n_antennas:
            raise CheckpointMismatchError(
                f"model was trained for N={cfg.n_antennas} antennas but the "
                f"requested configuration has N={expected_cfg.n_antennas}")
        return cls(kind=kind, cfg=cfg, arch=arch,
                   params=ParamSet.from_checkpoint(doc["params"]))


def param_specs_for(kind: str, cfg: SystemConfig, arch=None) -> tuple:
    if kind == "bgat":
        arch = arch or BgatArchitecture()
        return arch, bgat_param_specs(arch, cfg.n_antennas)
    if kind == "mlp":
        arch = arch or MlpArchitecture(n_users_train=cfg.n_users)
        return arch, mlp_param_specs(arch, cfg.n_antennas)
    if kind == "gat_pool":
        arch = arch or GatPoolArchitecture()
        return arch, gatpool_param_specs(arch, cfg.n_antennas)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def create_model(kind: str, cfg: SystemConfig, seed: int, arch=None) -> Model:
    """Fresh He-initialized model of the given kind."""
    arch, specs = param_specs_for(kind, cfg, arch)
    return Model(kind=kind, cfg=cfg, arch=arch, params=he_init(specs, seed))

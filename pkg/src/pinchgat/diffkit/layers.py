"""Layer primitives: linear maps, MLP stacks, and edge-aware graph attention."""

from __future__ import annotations

from typing import NamedTuple, Sequence

from .tensor import Tensor, concat, softmax


class HeadParams(NamedTuple):
    """Parameters of one attention head."""

    attn: Tensor    # (F~,)   attention vector
    w_src: Tensor   # (F~, F) transform of the attending node
    w_tgt: Tensor   # (F~, F) transform of the neighbor node
    w_edge: Tensor  # (F~,)   transform of the scalar edge feature


class MlpLayer(NamedTuple):
    weight: Tensor          # (out, in)
    bias: Tensor | None
    relu: bool


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x @ weight.T (+ bias), broadcasting over leading axes."""
    out = x @ weight.T
    if bias is not None:
        out = out + bias
    return out


def mlp_forward(x: Tensor, layers: Sequence[MlpLayer]) -> Tensor:
    """Stack of fully connected layers with optional per-layer ReLU."""
    for layer in layers:
        x = linear(x, layer.weight, layer.bias)
        if layer.relu:
            x = x.relu()
    return x


def attention_scores(head: HeadParams, x_self: Tensor, x_neigh: Tensor,
                     edge: Tensor | None, slope: float = 0.01) -> Tensor:
    """Attention weights of each attending node over its neighbor set.

    x_self: (..., P, F) features of the attending nodes.
    x_neigh: (..., Q, F) features of the neighbors (all P share the set).
    edge: (..., P, Q) scalar edge features, or None for featureless edges.
    Returns (..., P, Q) weights, positive and summing to 1 over the last axis.
    """
    s = linear(x_self, head.w_src).expand_dims(-2)    # (..., P, 1, F~)
    t = linear(x_neigh, head.w_tgt).expand_dims(-3)   # (..., 1, Q, F~)
    pre = s + t
    if edge is not None:
        pre = pre + edge.expand_dims(-1) * head.w_edge
    logits = (pre.leaky_relu(slope) * head.attn).sum(axis=-1)  # (..., P, Q)
    return softmax(logits, axis=-1)


def gat_layer(heads: Sequence[HeadParams], w_res: Tensor, x_self: Tensor,
              x_neigh: Tensor, edge: Tensor | None,
              slope: float = 0.01) -> Tensor:
    """One multi-head attention pass for the attending node set.

    Per head: weights over neighbors, then the attention-weighted sum of
    transformed neighbor features. Heads are concatenated, a shared residual
    transform of the node's own features is added, and ReLU is applied.
    Output width is len(heads) * F~.
    """
    per_head = []
    for head in heads:
        alpha = attention_scores(head, x_self, x_neigh, edge, slope)
        per_head.append(alpha @ linear(x_neigh, head.w_tgt))
    combined = concat(per_head, axis=-1) + linear(x_self, w_res)
    return combined.relu()


def gat_block_forward(self_heads: Sequence[HeadParams],
                      neigh_heads: Sequence[HeadParams], w_res: Tensor,
                      user_x: Tensor, ant_x: Tensor, edge: Tensor,
                      slope: float = 0.01) -> tuple[Tensor, Tensor]:
    """Bipartite attention block: users attend over antennas and vice versa.

    ``self_heads`` score user-side attention, ``neigh_heads`` the antenna
    side; pass the same sequence twice to share parameters across the two
    directions. ``edge`` is the (..., M, N) user-antenna feature matrix.
    """
    user_out = gat_layer(self_heads, w_res, user_x, ant_x, edge, slope)
    ant_out = gat_layer(neigh_heads, w_res, ant_x, user_x,
                        edge.swapaxes(-1, -2), slope)
    return user_out, ant_out

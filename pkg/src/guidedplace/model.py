"""Dual-branch noise predictor.

The topological branch is a bipartite macro/net GNN whose aggregation is
GATv2 attention (time and pin offset enter the attention score additively).
The geometric branch is a flat stack of transformer blocks over movable-macro
tokens: time-conditioned self-attention, cross-attention onto the projected
macro sizes, and a feed-forward layer, each post-normalized with a residual.

The two branches meet in :func:`fuse_noise`: per-net scalars ``eps_net`` are
pushed through the transposed smoothed-HPWL Jacobian (evaluated at ``x_t`` and
held constant), normalized to unit RMS per design, and added to ``eps_cell``.

Several designs are processed at once as a disjoint union; attention over
macro tokens is masked to tokens of the same design.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from .errors import ShapeMismatch
from .graph import build_graph
from .objectives import per_net_hpwl_smooth

VARIANTS = ("full", "no_eps_net", "no_gnn", "no_transformer")


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    heads: int = 4
    gnn_layers: int = 2
    transformer_blocks: int = 2
    ffn_mult: int = 2
    lambda_cell: float = 1.0
    lambda_net: float = 0.1
    gamma: float = 0.01
    variant: str = "full"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown model variant {self.variant!r}")
        if self.hidden % self.heads:
            raise ValueError("hidden size must be divisible by the number of heads")

    def to_dict(self):
        return asdict(self)


def timestep_embed(t, dim):
    """Sinusoidal embedding ``[sin(t f_k), cos(t f_k)]`` with geometric f_k."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    ang = float(t) * freqs
    out = np.concatenate([np.sin(ang), np.cos(ang)])
    if dim % 2:
        out = np.concatenate([out, [0.0]])
    return out


def _timestep_embed_torch(t, dim, dtype):
    half = dim // 2
    freqs = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float64) / max(half, 1))
    ang = t.to(torch.float64)[:, None] * freqs[None, :]
    out = torch.cat([torch.sin(ang), torch.cos(ang)], dim=1)
    if dim % 2:
        out = F.pad(out, (0, 1))
    return out.to(dtype)


@dataclass
class GraphBatch:
    """Disjoint union of designs, as tensors ready for the network."""

    node_x: torch.Tensor        # (V, 5) size, position, pad flag
    net_x: torch.Tensor         # (N, 3) hpwl, log1p degrees
    edge_net: torch.Tensor      # (E,)
    edge_node: torch.Tensor     # (E,)
    edge_x: torch.Tensor        # (E, 2) pin offsets
    edge_dpin: torch.Tensor     # (E, 2) d smooth_hpwl_net / d pin, constant
    node_graph: torch.Tensor    # (V,)
    net_graph: torch.Tensor     # (N,)
    token_node: torch.Tensor    # (S,) node index of each movable-macro token
    token_graph: torch.Tensor   # (S,)
    node_token: torch.Tensor    # (V,) token index or -1 for pads
    cond: torch.Tensor          # (S, 2) normalized macro sizes
    t: torch.Tensor             # (B,) model timesteps
    glob: torch.Tensor          # (B, 2)
    n_movable: list

    @property
    def n_graphs(self):
        return len(self.n_movable)

    def split(self, tokens):
        """Split a per-token array back into one array per design."""
        out, start = [], 0
        for m in self.n_movable:
            out.append(tokens[start:start + m])
            start += m
        return out


def make_batch(netlists, placements, timesteps, gamma=0.01, graphs=None, dtype=torch.float32):
    """Assemble a :class:`GraphBatch`; placements are normalized ``x_t`` arrays.

    ``graphs`` may supply prebuilt :class:`HeteroGraph` objects (same order).
    """
    node_x, net_x, e_net, e_node, e_x, e_d = [], [], [], [], [], []
    node_graph, net_graph, token_node, token_graph, node_token, cond, glob = [], [], [], [], [], [], []
    n_mov = []
    v_off = n_off = s_off = 0
    for b, (nl, x) in enumerate(zip(netlists, placements)):
        g = graphs[b] if graphs is not None else build_graph(nl, x, int(timesteps[b]))
        _, dpin = per_net_hpwl_smooth(nl.normalized, x, gamma)
        m, v, n = g.n_movable, g.n_nodes, g.n_nets
        node_x.append(g.macro_feat)
        nf = g.net_feat.copy()
        nf[:, 1:] = np.log1p(nf[:, 1:])
        net_x.append(nf)
        e_net.append(g.edge_index[:, 0] + n_off)
        e_node.append(g.edge_index[:, 1] + v_off)
        e_x.append(g.edge_feat)
        e_d.append(dpin)
        node_graph.append(np.full(v, b))
        net_graph.append(np.full(n, b))
        token_node.append(np.arange(m) + v_off)
        token_graph.append(np.full(m, b))
        tok = np.full(v, -1)
        tok[:m] = np.arange(m) + s_off
        node_token.append(tok)
        cond.append(g.size_feat)
        w, h = g.global_feat
        glob.append([math.log(w / h), 0.1 * math.log(w * h)])
        n_mov.append(m)
        v_off, n_off, s_off = v_off + v, n_off + n, s_off + m

    def f(parts, cols):
        arr = np.concatenate(parts, axis=0) if parts else np.zeros((0, cols))
        return torch.as_tensor(arr.reshape(-1, cols), dtype=dtype)

    def i(parts):
        return torch.as_tensor(np.concatenate(parts).astype(np.int64))

    return GraphBatch(
        node_x=f(node_x, 5), net_x=f(net_x, 3),
        edge_net=i(e_net), edge_node=i(e_node), edge_x=f(e_x, 2), edge_dpin=f(e_d, 2),
        node_graph=i(node_graph), net_graph=i(net_graph),
        token_node=i(token_node), token_graph=i(token_graph), node_token=i(node_token),
        cond=f(cond, 2),
        t=torch.as_tensor(np.asarray(timesteps, dtype=np.int64)),
        glob=torch.as_tensor(np.asarray(glob), dtype=dtype),
        n_movable=n_mov,
    )


def segment_softmax(scores, index, n_segments):
    """Softmax of ``scores`` (E, H) within groups given by ``index`` (E,)."""
    h = scores.shape[1]
    idx = index[:, None].expand(-1, h)
    smax = torch.full((n_segments, h), -torch.inf, dtype=scores.dtype)
    smax = smax.scatter_reduce(0, idx, scores, reduce="amax", include_self=True)
    ex = torch.exp(scores - smax[index])
    denom = torch.zeros((n_segments, h), dtype=scores.dtype).index_add(0, index, ex)
    return ex / denom[index]


class GATv2Relation(nn.Module):
    """One direction of bipartite message passing (source type -> target type)."""

    def __init__(self, d, heads):
        super().__init__()
        self.heads, self.dh = heads, d // heads
        self.w_src = nn.Linear(d, d, bias=False)
        self.w_dst = nn.Linear(d, d, bias=False)
        self.w_edge = nn.Linear(2, d, bias=False)
        self.w_time = nn.Linear(d, d, bias=False)
        self.att = nn.Parameter(torch.empty(heads, self.dh))
        self.upd_in = nn.Linear(2 * d, d)
        self.upd_out = nn.Linear(d, d)
        nn.init.xavier_uniform_(self.att)

    def forward(self, h_src, h_dst, src, dst, edge_x, temb_dst):
        n_dst = h_dst.shape[0]
        msg = self.w_src(h_src)[src]
        pre = msg + self.w_dst(h_dst)[dst] + self.w_edge(edge_x) + self.w_time(temb_dst)[dst]
        pre = F.leaky_relu(pre, 0.2).view(-1, self.heads, self.dh)
        score = (pre * self.att).sum(-1)
        alpha = segment_softmax(score, dst, n_dst)
        weighted = (alpha[:, :, None] * msg.view(-1, self.heads, self.dh)).reshape(-1, self.heads * self.dh)
        agg = torch.zeros_like(h_dst).index_add(0, dst, weighted)
        has_nb = torch.zeros(n_dst, dtype=h_dst.dtype).index_add(0, dst, torch.ones_like(dst, dtype=h_dst.dtype))
        mask = (has_nb > 0).to(h_dst.dtype)[:, None]
        return h_dst + mask * self.upd_out(F.silu(self.upd_in(torch.cat([h_dst, agg], dim=1))))


class HeteroGNN(nn.Module):
    def __init__(self, d, heads, layers):
        super().__init__()
        self.node_in = nn.Linear(5, d)
        self.net_in = nn.Linear(3, d)
        self.n2m = nn.ModuleList(GATv2Relation(d, heads) for _ in range(layers))
        self.m2n = nn.ModuleList(GATv2Relation(d, heads) for _ in range(layers))

    def embed_inputs(self, batch):
        return self.node_in(batch.node_x), self.net_in(batch.net_x)

    def forward(self, batch, temb):
        h_node, h_net = self.embed_inputs(batch)
        t_node, t_net = temb[batch.node_graph], temb[batch.net_graph]
        for n2m, m2n in zip(self.n2m, self.m2n):
            h_node = n2m(h_net, h_node, batch.edge_net, batch.edge_node, batch.edge_x, t_node)
            h_net = m2n(h_node, h_net, batch.edge_node, batch.edge_net, batch.edge_x, t_net)
        return h_node, h_net


class MultiHeadAttention(nn.Module):
    def __init__(self, d, heads):
        super().__init__()
        self.heads, self.dh = heads, d // heads
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)

    def forward(self, q_in, kv_in, v_in, mask):
        s = q_in.shape[0]
        q = self.q(q_in).view(s, self.heads, self.dh).transpose(0, 1)
        k = self.k(kv_in).view(-1, self.heads, self.dh).transpose(0, 1)
        v = self.v(v_in).view(-1, self.heads, self.dh).transpose(0, 1)
        att = q @ k.transpose(1, 2) / math.sqrt(self.dh)
        att = att.masked_fill(~mask[None], -torch.inf).softmax(-1)
        return self.o((att @ v).transpose(0, 1).reshape(s, -1))


class TransformerBlock(nn.Module):
    def __init__(self, d, heads, ffn_mult):
        super().__init__()
        self.self_attn = MultiHeadAttention(d, heads)
        self.cross_attn = MultiHeadAttention(d, heads)
        self.ffn_in = nn.Linear(d, ffn_mult * d)
        self.ffn_out = nn.Linear(ffn_mult * d, d)
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.norm3 = nn.LayerNorm(d)

    def forward(self, z, cond, temb_tok, mask):
        zt = z + temb_tok
        z = self.norm1(z + self.self_attn(zt, zt, z, mask))
        z = self.norm2(z + self.cross_attn(z, cond, cond, mask))
        return self.norm3(z + self.ffn_out(F.silu(self.ffn_in(z))))


class GeometricTransformer(nn.Module):
    def __init__(self, d, heads, blocks, ffn_mult):
        super().__init__()
        self.cond_in = nn.Sequential(nn.Linear(2, d), nn.SiLU(), nn.Linear(d, d))
        self.blocks = nn.ModuleList(TransformerBlock(d, heads, ffn_mult) for _ in range(blocks))

    def forward(self, z, cond, temb_tok, token_graph):
        mask = token_graph[:, None] == token_graph[None, :]
        c = self.cond_in(cond)
        for block in self.blocks:
            z = block(z, c, temb_tok, mask)
        return z


def project_net_noise(eps_net, batch):
    """``J^T eps_net`` per movable token, with J the per-net HPWL Jacobian at x_t."""
    weights = eps_net[batch.edge_net][:, None] * batch.edge_dpin
    tok = batch.node_token[batch.edge_node]
    keep = tok >= 0
    out = torch.zeros((batch.token_node.shape[0], 2), dtype=eps_net.dtype)
    return out.index_add(0, tok[keep], weights[keep])


def rms_normalize(proj, token_graph, n_graphs, eps=1e-8):
    sq = torch.zeros(n_graphs, dtype=proj.dtype).index_add(0, token_graph, (proj ** 2).sum(1))
    count = torch.zeros(n_graphs, dtype=proj.dtype).index_add(
        0, token_graph, torch.full_like(token_graph, 2, dtype=proj.dtype))
    rms = torch.sqrt(sq / count.clamp(min=1.0))
    return proj / (rms[token_graph][:, None] + eps)


def fuse_noise(eps_cell, eps_net, batch, lambda_cell, lambda_net):
    """``lambda_cell * eps_cell + lambda_net * rms_normalized(J^T eps_net)``."""
    out = lambda_cell * eps_cell
    if lambda_net:
        proj = rms_normalize(project_net_noise(eps_net, batch), batch.token_graph, batch.n_graphs)
        out = out + lambda_net * proj
    return out


class Denoiser(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = config
        d = config.hidden
        self.time_mlp = nn.Sequential(nn.Linear(d, d), nn.SiLU(), nn.Linear(d, d))
        self.glob_in = nn.Linear(2, d)
        self.gnn = HeteroGNN(d, config.heads, config.gnn_layers)
        self.net_head = nn.Linear(d, 1)
        self.transformer = GeometricTransformer(d, config.heads, config.transformer_blocks, config.ffn_mult)
        self.cell_head = nn.Linear(d, 2)
        nn.init.zeros_(self.cell_head.weight)
        nn.init.zeros_(self.cell_head.bias)

    @property
    def dtype(self):
        return self.cell_head.weight.dtype

    def parameter_count(self):
        return sum(p.numel() for p in self.parameters())

    def time_embedding(self, batch):
        raw = _timestep_embed_torch(batch.t, self.config.hidden, self.dtype)
        return self.time_mlp(raw) + self.glob_in(batch.glob)

    def branches(self, batch):
        """Return ``(h_node, h_net, eps_net, eps_cell)`` before fusion."""
        cfg = self.config
        temb = self.time_embedding(batch)
        if cfg.variant == "no_gnn":
            h_node, h_net = self.gnn.embed_inputs(batch)
            eps_net = torch.zeros(h_net.shape[0], dtype=h_net.dtype)
        else:
            h_node, h_net = self.gnn(batch, temb)
            eps_net = self.net_head(h_net).squeeze(-1)
        tokens = h_node[batch.token_node]
        if cfg.variant == "no_transformer":
            eps_cell = self.cell_head(tokens)
        else:
            z = self.transformer(tokens, batch.cond, temb[batch.token_graph], batch.token_graph)
            eps_cell = self.cell_head(z)
        return h_node, h_net, eps_net, eps_cell

    def forward(self, batch):
        cfg = self.config
        _, _, eps_net, eps_cell = self.branches(batch)
        lam_net = 0.0 if cfg.variant in ("no_eps_net", "no_gnn") else cfg.lambda_net
        return fuse_noise(eps_cell, eps_net, batch, cfg.lambda_cell, lam_net)

    @torch.no_grad()
    def predict(self, netlist, x_t, t, graph=None):
        """Noise prediction for one design as a float64 (M, 2) array."""
        x_t = np.asarray(x_t, dtype=np.float64)
        if x_t.shape != (netlist.n_movable, 2):
            raise ShapeMismatch(f"x_t has shape {x_t.shape}, expected ({netlist.n_movable}, 2)")
        batch = make_batch([netlist], [x_t], [t], self.config.gamma,
                           graphs=None if graph is None else [graph], dtype=self.dtype)
        return self(batch).to(torch.float64).numpy()

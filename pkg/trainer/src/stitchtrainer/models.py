"""A small self-contained latent diffusion stack for desk-scale runs.

The base model is procedural: ``tiny-latent-v1`` builds its frozen weights
from a fixed generator seed, so "loading" it is reproducible across processes
without shipping checkpoint files. The latent codec is an exact
space-to-depth transform (perfect decode(encode(x)) round-trip on [0, 1]
data), which keeps preservation checks tight.
"""

import math

import torch
from torch import nn

from .errors import ModelLoadError

LATENT_FACTOR = 2
LATENT_CHANNELS = 3 * LATENT_FACTOR * LATENT_FACTOR
TEXT_DIM = 32
TEXT_MAX_LEN = 77
_BASE_WEIGHT_SEED = 0x5EED


class PixelShuffleCodec:
    """Exact latent codec: space-to-depth on [0,1] images scaled to [-1,1]."""

    factor = LATENT_FACTOR
    channels = LATENT_CHANNELS

    def encode(self, img: torch.Tensor) -> torch.Tensor:
        f = self.factor
        b, c, h, w = img.shape
        if h % f or w % f:
            raise ValueError(f"image size {h}x{w} not divisible by {f}")
        x = img * 2.0 - 1.0
        x = x.reshape(b, c, h // f, f, w // f, f)
        return x.permute(0, 1, 3, 5, 2, 4).reshape(b, c * f * f, h // f, w // f)

    def decode(self, latent: torch.Tensor) -> torch.Tensor:
        f = self.factor
        b, cff, hh, ww = latent.shape
        c = cff // (f * f)
        x = latent.reshape(b, c, f, f, hh, ww)
        x = x.permute(0, 1, 4, 2, 5, 3).reshape(b, c, hh * f, ww * f)
        return ((x + 1.0) / 2.0).clamp(0.0, 1.0)


def timestep_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(
        -math.log(10_000.0) * torch.arange(half, dtype=torch.float32) / half
    ).to(t.device)
    args = t.float()[:, None] * freqs[None, :]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


class ResBlock(nn.Module):
    """Channel-only (1x1) residual block with timestep injection.

    Spatial mixing is left entirely to the attention blocks: keeping the conv
    path per-token preserves the adapters' per-pixel influence on the output,
    which rank-limited fine-tuning needs.
    """

    def __init__(self, ch: int, t_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(8, ch)
        self.conv1 = nn.Conv2d(ch, ch, 1)
        self.t_proj = nn.Linear(t_dim, ch)
        self.norm2 = nn.GroupNorm(8, ch)
        self.conv2 = nn.Conv2d(ch, ch, 1)

    def forward(self, x, t_emb):
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        h = h + self.t_proj(t_emb)[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return x + h


class Attention(nn.Module):
    """Multi-head attention with a residual; cross-attention when ctx_dim set.

    Self-attention queries and keys start from the same weights, making the
    attention matrix diagonal-dominant out of the box (each token attends
    mostly to itself), which is the useful regime for rank-limited adapters.
    """

    def __init__(self, ch: int, heads: int = 4, ctx_dim: int | None = None):
        super().__init__()
        self.heads = heads
        self.norm = nn.LayerNorm(ch)
        kv_dim = ctx_dim if ctx_dim is not None else ch
        self.to_q = nn.Linear(ch, ch, bias=False)
        self.to_k = nn.Linear(kv_dim, ch, bias=False)
        self.to_v = nn.Linear(kv_dim, ch, bias=False)
        self.to_out = nn.Linear(ch, ch, bias=False)
        self.is_cross = ctx_dim is not None
        if not self.is_cross:
            with torch.no_grad():
                self.to_k.weight.copy_(self.to_q.weight)

    def forward(self, x, ctx=None):
        b, n, c = x.shape
        h = self.heads
        source = ctx if self.is_cross else self.norm(x)
        q = self.to_q(self.norm(x)).reshape(b, n, h, c // h).transpose(1, 2)
        k = self.to_k(source).reshape(b, -1, h, c // h).transpose(1, 2)
        v = self.to_v(source).reshape(b, -1, h, c // h).transpose(1, 2)
        attn = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(c // h), dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return x + self.to_out(out)


class TransformerBlock(nn.Module):
    def __init__(self, ch: int, ctx_dim: int):
        super().__init__()
        self.self_attn = Attention(ch)
        self.cross_attn = Attention(ch, ctx_dim=ctx_dim)

    def forward(self, x, ctx):
        b, c, hh, ww = x.shape
        tokens = x.reshape(b, c, hh * ww).transpose(1, 2)
        tokens = self.self_attn(tokens)
        tokens = self.cross_attn(tokens, ctx)
        return tokens.transpose(1, 2).reshape(b, c, hh, ww)


class TinyUNet(nn.Module):
    """Conditioned noise predictor over (x_t, mask, masked-latent) stacks.

    Single-resolution: every transformer block sees full-resolution latent
    tokens, so rank-limited adapters on the attention projections retain
    per-pixel influence on the output. Token count grows with package size;
    this stack targets desk-scale packages, not production resolutions.
    """

    def __init__(self, base: int = 48, ctx_dim: int = TEXT_DIM):
        super().__init__()
        in_ch = LATENT_CHANNELS * 2 + 1
        self.conv_in = nn.Conv2d(in_ch, base, 1)
        self.t_mlp = nn.Sequential(nn.Linear(base, base), nn.SiLU(), nn.Linear(base, base))
        self.base = base
        self.res_in = ResBlock(base, base)
        self.tx1 = TransformerBlock(base, ctx_dim)
        self.mid = ResBlock(base, base)
        self.tx2 = TransformerBlock(base, ctx_dim)
        self.res_out = ResBlock(base, base)
        self.conv_out = nn.Conv2d(base, LATENT_CHANNELS, 1)
        with torch.no_grad():
            self.conv_out.weight.mul_(0.1)
            self.conv_out.bias.zero_()

    def forward(self, x, t, ctx):
        t_emb = self.t_mlp(timestep_embedding(t, self.base))
        h = self.conv_in(x)
        h = self.res_in(h, t_emb)
        h = self.tx1(h, ctx)
        h = self.mid(h, t_emb)
        h = self.tx2(h, ctx)
        h = self.res_out(h, t_emb)
        return self.conv_out(h)


class ByteTextEncoder(nn.Module):
    """UTF-8 byte tokens -> embeddings -> one self-attention layer."""

    def __init__(self, dim: int = TEXT_DIM, max_len: int = TEXT_MAX_LEN):
        super().__init__()
        self.max_len = max_len
        self.embed = nn.Embedding(257, dim)  # 256 byte values + padding token
        self.pos = nn.Embedding(max_len, dim)
        self.attn = Attention(dim, heads=4)

    def tokenize(self, text: str) -> torch.Tensor:
        raw = list(text.encode("utf-8"))[: self.max_len]
        tokens = raw + [256] * (self.max_len - len(raw))
        return torch.tensor(tokens, dtype=torch.long)

    def forward(self, tokens: torch.Tensor) -> torch.Tensor:
        pos = torch.arange(tokens.shape[1], device=tokens.device)
        x = self.embed(tokens) + self.pos(pos)[None]
        return self.attn(x)


class BaseModel:
    def __init__(self, codec, text_encoder, unet):
        self.codec = codec
        self.text_encoder = text_encoder
        self.unet = unet

    def freeze(self):
        for p in self.unet.parameters():
            p.requires_grad_(False)
        for p in self.text_encoder.parameters():
            p.requires_grad_(False)
        return self


def build_base_model(model_id: str) -> BaseModel:
    """Construct the named base model with reproducible frozen weights."""
    if model_id != "tiny-latent-v1":
        raise ModelLoadError(f"unknown base model id {model_id!r}")
    saved_state = torch.random.get_rng_state()
    try:
        torch.manual_seed(_BASE_WEIGHT_SEED)
        unet = TinyUNet()
        text_encoder = ByteTextEncoder()
    finally:
        torch.random.set_rng_state(saved_state)
    return BaseModel(PixelShuffleCodec(), text_encoder, unet).freeze()

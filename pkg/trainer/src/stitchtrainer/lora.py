"""Low-rank adapters over frozen linear projections.

The B matrix starts at zero so a freshly adapted model computes exactly what
the base model computes; only the adapter parameters train.
"""

import torch
from torch import nn

from .errors import ModelLoadError


class LoRALinear(nn.Module):
    def __init__(self, base: nn.Linear, rank: int, alpha: float, dropout: float):
        super().__init__()
        self.base = base
        for p in self.base.parameters():
            p.requires_grad_(False)
        self.lora_a = nn.Linear(base.in_features, rank, bias=False)
        self.lora_b = nn.Linear(rank, base.out_features, bias=False)
        nn.init.normal_(self.lora_a.weight, std=1.0 / rank)
        nn.init.zeros_(self.lora_b.weight)
        self.scaling = alpha / rank
        self.dropout = nn.Dropout(dropout)

    def forward(self, x):
        return self.base(x) + self.lora_b(self.lora_a(self.dropout(x))) * self.scaling


ATTENTION_PROJECTIONS = ("to_q", "to_k", "to_v", "to_out")


def apply_lora(
    model: nn.Module,
    rank: int,
    alpha: float,
    dropout: float,
    targets=ATTENTION_PROJECTIONS,
) -> list:
    """Wrap the named attention projections; returns the wrapped names."""
    wrapped = []
    for name, module in model.named_modules():
        for proj in targets:
            child = getattr(module, proj, None)
            if isinstance(child, nn.Linear):
                setattr(module, proj, LoRALinear(child, rank, alpha, dropout))
                wrapped.append(f"{name}.{proj}" if name else proj)
    return wrapped


def lora_parameters(model: nn.Module):
    for module in model.modules():
        if isinstance(module, LoRALinear):
            yield from module.lora_a.parameters()
            yield from module.lora_b.parameters()


def lora_state_dict(model: nn.Module) -> dict:
    state = {}
    for name, module in model.named_modules():
        if isinstance(module, LoRALinear):
            state[f"{name}.lora_a"] = module.lora_a.weight.detach().clone()
            state[f"{name}.lora_b"] = module.lora_b.weight.detach().clone()
    return state


def load_lora_state(model: nn.Module, state: dict) -> None:
    own = {name: m for name, m in model.named_modules() if isinstance(m, LoRALinear)}
    expected = set()
    for name in own:
        expected.add(f"{name}.lora_a")
        expected.add(f"{name}.lora_b")
    if expected != set(state):
        missing = sorted(expected - set(state))[:4]
        extra = sorted(set(state) - expected)[:4]
        raise ModelLoadError(
            f"adapter state does not match model: missing {missing}, extra {extra}"
        )
    with torch.no_grad():
        for name, module in own.items():
            a = state[f"{name}.lora_a"]
            b = state[f"{name}.lora_b"]
            if a.shape != module.lora_a.weight.shape or b.shape != module.lora_b.weight.shape:
                raise ModelLoadError(
                    f"{name}: adapter shape {tuple(a.shape)}/{tuple(b.shape)} "
                    "does not match the configured rank"
                )
            module.lora_a.weight.copy_(a)
            module.lora_b.weight.copy_(b)

"""DDPM noise schedule and a deterministic DDIM sampler.

Timesteps are 1-based on the public surface (t in [1, T]); internally the
cumulative-product tables are 0-indexed.
"""

from dataclasses import dataclass

import torch


@dataclass
class DiffusionSchedule:
    steps: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    kind: str = "linear"

    def __post_init__(self):
        if not 1 <= self.steps:
            raise ValueError("steps must be >= 1")
        if self.kind != "linear":
            raise ValueError(f"unsupported schedule kind {self.kind!r}")
        betas = torch.linspace(
            self.beta_start, self.beta_end, self.steps, dtype=torch.float64
        )
        alphas = 1.0 - betas
        self.alpha_bar = torch.cumprod(alphas, dim=0).float()

    def check_t(self, t: torch.Tensor) -> None:
        if torch.any(t < 1) or torch.any(t > self.steps):
            raise ValueError(f"timestep outside [1, {self.steps}]")

    def add_noise(self, x0: torch.Tensor, noise: torch.Tensor, t: torch.Tensor):
        """x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise."""
        self.check_t(t)
        abar = self.alpha_bar[t - 1].to(x0.dtype)
        while abar.dim() < x0.dim():
            abar = abar[..., None]
        return abar.sqrt() * x0 + (1.0 - abar).sqrt() * noise

    def ddim_timesteps(self, num_steps: int) -> torch.Tensor:
        """Descending subset of [1, T] with ``num_steps`` entries."""
        num_steps = min(num_steps, self.steps)
        ts = torch.linspace(self.steps, 1, num_steps).round().long()
        return torch.unique(ts, sorted=True).flip(0)

    def ddim_step(
        self,
        x_t: torch.Tensor,
        eps_pred: torch.Tensor,
        t: int,
        t_prev: int,
        clip_range: float = 1.0,
    ) -> torch.Tensor:
        """Deterministic (eta = 0) update from t to t_prev (0 means done)."""
        abar_t = self.alpha_bar[t - 1].to(x_t.dtype)
        x0_pred = (x_t - (1.0 - abar_t).sqrt() * eps_pred) / abar_t.sqrt()
        x0_pred = x0_pred.clamp(-clip_range, clip_range)
        if t_prev <= 0:
            return x0_pred
        abar_prev = self.alpha_bar[t_prev - 1].to(x_t.dtype)
        return abar_prev.sqrt() * x0_pred + (1.0 - abar_prev).sqrt() * eps_pred

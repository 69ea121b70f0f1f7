"""Pipeline stage-count calculator.

Answers "how many pipeline stages does this model need on this device?"
from a per-block memory model:

    block bytes = 16 W + 34 s b h + 5 b a s^2

(16 W for fp16 params + grads + fp32 master/moment states, the rest for
activations). A device of m bytes holds n_max = floor(m / block bytes)
blocks; a model of L blocks then needs P = ceil(L / n_max) stages, or at
least 2 L stages when not even one block fits (lower bound, starred in the
emitted table).

All arithmetic is exact Python integer arithmetic; device capacities are
decimal bytes (8 GB = 8 * 10^9), the convention the shipped reference
table is built on.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

__all__ = [
    "PipelineConfig",
    "StageResult",
    "block_memory",
    "required_stages",
    "emit_stage_table",
    "GB",
    "LLAMA_MODELS",
    "REFERENCE_DEVICES",
    "llama_reference_table",
]

GB = 10**9  # decimal gigabyte


@dataclass(frozen=True)
class PipelineConfig:
    """Model/hardware pair for the stage calculator.

    embed_dim (h), n_heads (a), seq_len (s), batch_size (b) describe one
    Transformer block's activation footprint; block_params (W) its parameter
    count; n_blocks (L) the model depth; device_bytes (m) device memory in
    decimal bytes.
    """

    embed_dim: int
    n_heads: int
    seq_len: int
    batch_size: int
    block_params: int
    n_blocks: int
    device_bytes: int

    def __post_init__(self):
        for name in ("embed_dim", "n_heads", "seq_len", "batch_size", "n_blocks", "device_bytes"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.block_params < 0:
            raise ValueError("block_params must be >= 0")


@dataclass(frozen=True)
class StageResult:
    p: int
    n_max: int
    lower_bound_only: bool  # True: not even one block fits, p = 2 L is a lower bound

    def cell(self) -> str:
        return f"{self.p}*" if self.lower_bound_only else str(self.p)


def block_memory(cfg: PipelineConfig) -> int:
    """Bytes for one block: 16 W + 34 s b h + 5 b a s^2, exact integers."""
    w, s, b, h, a = cfg.block_params, cfg.seq_len, cfg.batch_size, cfg.embed_dim, cfg.n_heads
    return 16 * w + 34 * s * b * h + 5 * b * a * s * s


def required_stages(cfg: PipelineConfig) -> StageResult:
    mem = block_memory(cfg)
    n_max = cfg.device_bytes // mem if mem > 0 else cfg.n_blocks
    if n_max >= 1:
        return StageResult(p=-(-cfg.n_blocks // n_max), n_max=n_max, lower_bound_only=False)
    return StageResult(p=2 * cfg.n_blocks, n_max=0, lower_bound_only=True)


def emit_stage_table(rows, devices) -> str:
    """CSV stage table: one row per (name, PipelineConfig), one column per
    (device name, bytes). Lower-bound cells get a '*' suffix."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["model", "h", "a", "W", "L"] + [name for name, _ in devices])
    for name, cfg in rows:
        cells = []
        for _, device_bytes in devices:
            result = required_stages(replace(cfg, device_bytes=device_bytes))
            cells.append(result.cell())
        writer.writerow([name, cfg.embed_dim, cfg.n_heads, cfg.block_params, cfg.n_blocks] + cells)
    return out.getvalue()


# Reference inputs: LLaMA-family models at s = 4096, b = 1 across common
# training GPUs. block_params values are the published rounded figures.
_M = 10**6
LLAMA_MODELS: tuple[tuple[str, PipelineConfig], ...] = (
    ("Llama 3.2 1B", PipelineConfig(2048, 32, 4096, 1, 67 * _M, 16, GB)),
    ("Llama 3.2 3B", PipelineConfig(3072, 24, 4096, 1, 113 * _M, 28, GB)),
    ("LLaMA 1-7B", PipelineConfig(4096, 32, 4096, 1, 202 * _M, 32, GB)),
    ("LLaMA 1-13B", PipelineConfig(5120, 40, 4096, 1, 317 * _M, 40, GB)),
    ("LLaMA 1-33B", PipelineConfig(6656, 52, 4096, 1, 535 * _M, 60, GB)),
    ("LLaMA 1-65B", PipelineConfig(8192, 64, 4096, 1, 810 * _M, 80, GB)),
    ("Llama 3.1 405B", PipelineConfig(16384, 128, 4096, 1, 3190 * _M, 126, GB)),
)

REFERENCE_DEVICES: tuple[tuple[str, int], ...] = (
    ("RTX3070 (8GB)", 8 * GB),
    ("RTX3080 (16GB)", 16 * GB),
    ("RTX3090 (24GB)", 24 * GB),
    ("A6000 (48GB)", 48 * GB),
    ("A100 (80GB)", 80 * GB),
)


def llama_reference_table() -> str:
    """The shipped reference table (35 cells) as CSV."""
    return emit_stage_table(list(LLAMA_MODELS), list(REFERENCE_DEVICES))

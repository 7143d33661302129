"""Service configuration."""

from __future__ import annotations

from dataclasses import dataclass

MAX_PAYLOAD_BYTES = 16 * 1024 * 1024

ENGINES = ("procedural", "diffusers")


@dataclass(frozen=True)
class ServiceConfig:
    """Startup configuration; every request handler reads from this.

    The service refuses to report healthy until the configured models
    are loaded; inference runs one request at a time per process
    (max batch 1).
    """

    host: str = "127.0.0.1"
    port: int = 8000
    engine: str = "procedural"
    inpaint_model: str = "procedural-inpaint-v1"
    edge_conditioned_model: str = "procedural-edge-v1"
    conditioning_weights: str | None = None
    device: str = "cpu"
    max_payload_bytes: int = MAX_PAYLOAD_BYTES

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if not 0 < self.port < 65536:
            raise ValueError(f"port must be in (0, 65536), got {self.port}")
        if self.max_payload_bytes < 1024:
            raise ValueError(f"max_payload_bytes too small: {self.max_payload_bytes}")
        if not self.inpaint_model or not self.edge_conditioned_model:
            raise ValueError("model identifiers must be non-empty")

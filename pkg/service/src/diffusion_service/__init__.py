"""HTTP inference service for image generation.

Exposes masked inpainting, edge-conditioned generation, and edge
extraction over a JSON/base64-PNG wire protocol. The default engine is
a fast deterministic procedural renderer with the exact request/response
contract a real diffusion deployment would have; a diffusers-backed
engine can be selected where its heavyweight dependencies are
installed.
"""

from .app import create_app
from .config import ServiceConfig

__version__ = "0.1.0"

__all__ = ["ServiceConfig", "create_app", "__version__"]

"""Command-line entry point: configure and run the HTTP service."""

from __future__ import annotations

import argparse
import sys

from .config import ENGINES, ServiceConfig


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffusion-service",
        description="HTTP inference service for inpainting and edge-conditioned "
        "image generation.",
    )
    parser.add_argument("--host", default="127.0.0.1", help="bind address")
    parser.add_argument("--port", type=int, default=8000, help="bind port")
    parser.add_argument(
        "--engine",
        choices=ENGINES,
        default="procedural",
        help="inference engine: 'procedural' is deterministic and CPU-only; "
        "'diffusers' loads real model weights",
    )
    parser.add_argument(
        "--inpaint-model",
        default="procedural-inpaint-v1",
        help="inpainting model identifier",
    )
    parser.add_argument(
        "--edge-model",
        default="procedural-edge-v1",
        help="edge-conditioned generation model identifier",
    )
    parser.add_argument(
        "--conditioning-weights",
        default=None,
        help="optional path or identifier of fine-tuned edge-conditioning weights",
    )
    parser.add_argument(
        "--device", default="cpu", help="compute device selector (e.g. cpu, cuda:0)"
    )
    parser.add_argument(
        "--log-level", default="info", help="uvicorn log level"
    )
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        config = ServiceConfig(
            host=args.host,
            port=args.port,
            engine=args.engine,
            inpaint_model=args.inpaint_model,
            edge_conditioned_model=args.edge_model,
            conditioning_weights=args.conditioning_weights,
            device=args.device,
        )
    except ValueError as exc:
        parser.error(str(exc))

    import uvicorn

    from .app import create_app

    uvicorn.run(
        create_app(config),
        host=config.host,
        port=config.port,
        log_level=args.log_level,
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())

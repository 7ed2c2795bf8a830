"""FastAPI application exposing the four backend-protocol endpoints.

Request bodies are parsed by hand so 4xx errors always carry the
``{"error", "field"}`` shape the protocol promises.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .adapters import (
    ClassifyAdapter,
    EntailAdapter,
    ExtractAdapter,
    ModelLoadError,
    NerAdapter,
    load_pipeline,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_SEQUENCE_CHARS = 4000


@dataclass
class ShimConfig:
    classify_model: str = "dummy:classifier"
    ner_model: str = "dummy:ner"
    extract_model: str = "dummy:extract"
    entail_model: str = "dummy:nli"
    device: str = "cpu"
    max_sequence_chars: int = DEFAULT_MAX_SEQUENCE_CHARS
    port: int = 8822
    label_map: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: str) -> "ShimConfig":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))

    @classmethod
    def from_env(cls) -> "ShimConfig":
        cfg = cls()
        for name in ("classify_model", "ner_model", "extract_model", "entail_model",
                     "device"):
            value = os.environ.get(f"KG2I_SHIM_{name.upper()}")
            if value:
                setattr(cfg, name, value)
        return cfg


def _bad_request(message: str, fieldname: str, status: int = 400) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, "field": fieldname})


async def _parse_body(request: Request, fields: tuple[str, ...], max_chars: int,
                      length_checked: tuple[str, ...]):
    try:
        body = await request.json()
    except Exception:
        return None, _bad_request("body must be a JSON object", ".")
    if not isinstance(body, dict):
        return None, _bad_request("body must be a JSON object", ".")
    for name in fields:
        if name not in body:
            return None, _bad_request("missing request field", name)
        if not isinstance(body[name], str):
            return None, _bad_request("request field must be a string", name)
    for name in length_checked:
        if len(body[name]) > max_chars:
            return None, _bad_request(
                f"request field exceeds max sequence length ({max_chars} chars)", name, 413
            )
    return body, None


def create_app(config: ShimConfig | None = None) -> FastAPI:
    """Build the service; model load failures surface per endpoint at startup."""
    config = config or ShimConfig()
    app = FastAPI(title="kg2i-shim")

    adapters = {}
    failures = {}
    loaders = {
        "classify": lambda: ClassifyAdapter(
            load_pipeline("classify", config.classify_model, config.device), config.label_map
        ),
        "ner": lambda: NerAdapter(load_pipeline("ner", config.ner_model, config.device)),
        "extract": lambda: ExtractAdapter(
            load_pipeline("extract", config.extract_model, config.device)
        ),
        "entail": lambda: EntailAdapter(
            load_pipeline("entail", config.entail_model, config.device)
        ),
    }
    for name, loader in loaders.items():
        try:
            adapters[name] = loader()
        except ModelLoadError as exc:
            logger.error("endpoint %s disabled: %s", name, exc)
            failures[name] = str(exc)

    def _unavailable(name):
        return _bad_request(f"model for {name} failed to load: {failures[name]}", ".", 503)

    @app.get("/v1/health")
    async def health():
        return {"ok": not failures, "endpoints": sorted(adapters)}

    @app.post("/v1/classify")
    async def classify(request: Request):
        body, err = await _parse_body(request, ("text", "lang"),
                                      config.max_sequence_chars, ("text",))
        if err:
            return err
        if "classify" not in adapters:
            return _unavailable("classify")
        return adapters["classify"].run(body["text"], body["lang"])

    @app.post("/v1/ner")
    async def ner(request: Request):
        body, err = await _parse_body(request, ("text", "lang"),
                                      config.max_sequence_chars, ("text",))
        if err:
            return err
        if "ner" not in adapters:
            return _unavailable("ner")
        return adapters["ner"].run(body["text"], body["lang"])

    @app.post("/v1/extract")
    async def extract(request: Request):
        body, err = await _parse_body(request, ("instruction", "input", "lang"),
                                      config.max_sequence_chars, ("input",))
        if err:
            return err
        if "extract" not in adapters:
            return _unavailable("extract")
        return adapters["extract"].run(body["instruction"], body["input"], body["lang"])

    @app.post("/v1/entail")
    async def entail(request: Request):
        body, err = await _parse_body(request, ("premise", "hypothesis", "lang"),
                                      config.max_sequence_chars, ("premise",))
        if err:
            return err
        if "entail" not in adapters:
            return _unavailable("entail")
        return adapters["entail"].run(body["premise"], body["hypothesis"], body["lang"])

    return app


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="kg2i-shim")
    parser.add_argument("--config", default=None, help="ShimConfig JSON file")
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--host", default="127.0.0.1")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO)
    config = ShimConfig.from_file(args.config) if args.config else ShimConfig.from_env()
    if args.port is not None:
        config.port = args.port

    import uvicorn

    uvicorn.run(create_app(config), host=args.host, port=config.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

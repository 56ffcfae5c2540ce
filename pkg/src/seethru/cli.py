"""Thin command-line client of the seethru service.

Batch verbs (run, sweep, fixtures) talk to the FastAPI app over HTTP; by
default an in-process ASGI transport is used so no server needs to be
running, and --url targets a live instance instead. `serve` starts the
service itself (wall-clock bridge included).

Exit codes: 0 success, 2 configuration error, 3 pipeline error.
"""

from __future__ import annotations

import json
import logging
import os
import sys

import click
import httpx

from .scenario import ConfigError

EXIT_CONFIG = 2
EXIT_PIPELINE = 3


def _setup_logging():
    level = os.environ.get("SEETHRU_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


class ServiceClient:
    """POSTs to a running service, or in-process through the ASGI app."""

    def __init__(self, url: str | None):
        self.url = url

    def post(self, path: str, body: dict):
        if self.url:
            with httpx.Client(base_url=self.url, timeout=None) as c:
                return c.post(path, json=body)
        import asyncio

        from httpx import ASGITransport, AsyncClient

        from .service import create_app

        async def go():
            transport = ASGITransport(app=create_app())
            async with AsyncClient(transport=transport, timeout=None,
                                   base_url="http://seethru.local") as c:
                return await c.post(path, json=body)

        return asyncio.run(go())


def _request_body(config, preset, seed, out, parallel):
    body: dict = {"parallel": parallel}
    if config:
        body["config_path"] = config
    if preset:
        body["preset"] = preset
    if seed:
        body["seeds"] = list(seed)
    if out:
        body["out_dir"] = out
    return body


class ServiceError(RuntimeError):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


def _post(client: ServiceClient, path, body):
    resp = client.post(path, body)
    if resp.status_code >= 400:
        detail = resp.json().get("detail", resp.text) if resp.headers.get(
            "content-type", "").startswith("application/json") else resp.text
        raise ServiceError(resp.status_code, f"{path} failed ({resp.status_code}): {detail}")
    return resp.json()


@click.group()
def main():
    _setup_logging()


_shared = [
    click.option("--config", type=click.Path(exists=True, dir_okay=False),
                 help="scenario config file (YAML)"),
    click.option("--preset", type=str, help="scenario preset override"),
    click.option("--seed", type=int, multiple=True, help="seed override (repeatable)"),
    click.option("--out", type=click.Path(file_okay=False), help="report output directory"),
    click.option("--parallel", type=int, default=0, help="seed-sharding workers"),
    click.option("--url", type=str, default=None,
                 help="target a running service instead of in-process"),
]


def shared_options(fn):
    for opt in reversed(_shared):
        fn = opt(fn)
    return fn


@main.command()
@shared_options
def run(config, preset, seed, out, parallel, url):
    """Run a scenario and print its summary table."""
    try:
        data = _post(ServiceClient(url), "/run",
                     _request_body(config, preset, seed, out, parallel))
    except httpx.HTTPError as err:
        click.echo(f"connection error: {err}", err=True)
        sys.exit(EXIT_PIPELINE)
    except ServiceError as err:
        code = EXIT_CONFIG if err.status in (400, 422) else EXIT_PIPELINE
        click.echo(f"error: {err}", err=True)
        sys.exit(code)
    click.echo(data["table"], nl=False)
    if data["paths"]:
        click.echo(json.dumps(data["paths"], indent=2, sort_keys=True))


@main.command()
@shared_options
@click.option("--path", "param_path", required=True, help="dotted config parameter path")
@click.option("--values", required=True, help="comma-separated values")
def sweep(config, preset, seed, out, parallel, url, param_path, values):
    """Sweep one config parameter across values."""
    try:
        vals = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        click.echo("values must be numeric", err=True)
        sys.exit(EXIT_CONFIG)
    body = _request_body(config, preset, seed, out, parallel)
    body.update({"path": param_path, "values": vals})
    try:
        data = _post(ServiceClient(url), "/sweep", body)
    except ServiceError as err:
        code = EXIT_CONFIG if err.status in (400, 422) else EXIT_PIPELINE
        click.echo(f"error: {err}", err=True)
        sys.exit(code)
    click.echo(data["table"], nl=False)


@main.command()
@click.option("--out", type=click.Path(file_okay=False), default="fixtures",
              show_default=True)
@click.option("--frames", type=int, default=4, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--url", type=str, default=None)
def fixtures(out, frames, seed, url):
    """Write golden wire-format fixtures (shared with the console tests)."""
    try:
        data = _post(ServiceClient(url), "/fixtures",
                     {"out_dir": out, "n_frames": frames, "seed": seed})
    except ServiceError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(EXIT_PIPELINE)
    click.echo(json.dumps(data["paths"], indent=2, sort_keys=True))


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False))
@click.option("--preset", type=str, default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8473, show_default=True)
def serve(config, preset, host, port):
    """Start the service with the live console bridge."""
    import uvicorn

    from .scenario import ScenarioConfig, load_config, to_dict, _from_dict
    from .service import create_app

    try:
        cfg = load_config(config) if config else ScenarioConfig(duration=3600.0)
        if preset:
            cfg = _from_dict(ScenarioConfig, {**to_dict(cfg), "preset": preset})
    except ConfigError as err:
        click.echo(f"config error: {err}", err=True)
        sys.exit(EXIT_CONFIG)
    app = create_app(serve_config=cfg)
    uvicorn.run(app, host=host, port=port, log_level=os.environ.get("SEETHRU_LOG", "warning").lower())


if __name__ == "__main__":
    main()

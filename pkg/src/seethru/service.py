"""FastAPI service wrapping the scenario engine.

REST endpoints run batch scenarios and sweeps; the /bridge websocket exposes
the live wire protocol (binary frames both directions) for the operator
console. The CLI is a thin client of this service.
"""

from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, Field

from . import engine, report as report_mod
from .bridge import LiveSession
from .scenario import ConfigError, ScenarioConfig, _from_dict, load_config, to_dict
from .worldsim import PRESETS


class RunRequest(BaseModel):
    config: dict | None = None
    config_path: str | None = None
    preset: str | None = None
    seeds: list[int] | None = None
    out_dir: str | None = None
    parallel: int = 0


class SummaryModel(BaseModel):
    scenario: str
    n_seeds: int
    n_frames: int
    inlier_pct_mean: float
    inlier_pct_std: float
    outlier_pct_mean: float
    outlier_pct_std: float
    l_tot_ms_mean: float
    l_tot_ms_std: float
    align_accept_rate: float
    realign_count: int


class RunResponse(BaseModel):
    summary: SummaryModel
    table: str
    paths: dict[str, str] = Field(default_factory=dict)


class SweepRequest(RunRequest):
    path: str
    values: list[float]


class SweepResponse(BaseModel):
    results: list[RunResponse]
    table: str


class FixturesRequest(BaseModel):
    out_dir: str
    n_frames: int = 4
    seed: int = 0


def _resolve_config(req: RunRequest) -> ScenarioConfig:
    if req.config is not None and req.config_path is not None:
        raise ConfigError("give either an inline config or a path, not both")
    if req.config_path is not None:
        cfg = load_config(req.config_path)
    elif req.config is not None:
        cfg = _from_dict(ScenarioConfig, req.config)
    else:
        cfg = ScenarioConfig()
    if req.preset is not None:
        cfg = _from_dict(ScenarioConfig, {**to_dict(cfg), "preset": req.preset})
    if req.seeds is not None:
        cfg = _from_dict(ScenarioConfig, {**to_dict(cfg), "seeds": req.seeds})
    return cfg


def _summary_model(rep) -> SummaryModel:
    s = rep.summary
    return SummaryModel(
        scenario=s.scenario, n_seeds=s.n_seeds, n_frames=s.n_frames,
        inlier_pct_mean=s.inlier_mean, inlier_pct_std=s.inlier_std,
        outlier_pct_mean=s.outlier_mean, outlier_pct_std=s.outlier_std,
        l_tot_ms_mean=s.l_tot_mean, l_tot_ms_std=s.l_tot_std,
        align_accept_rate=s.align_accept_rate, realign_count=s.realign_count)


def create_app(serve_config: ScenarioConfig | None = None,
               autostart_bridge: bool = True) -> FastAPI:
    app = FastAPI(title="seethru", version="0.1.0")
    app.state.session = None
    app.state.serve_config = serve_config

    @app.exception_handler(ConfigError)
    async def config_error_handler(request, exc):
        from fastapi.responses import JSONResponse

        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/presets")
    def presets():
        return {"presets": sorted(PRESETS)}

    @app.post("/run", response_model=RunResponse)
    def run(req: RunRequest):
        cfg = _resolve_config(req)
        rep = engine.run(cfg, parallel=req.parallel)
        paths = report_mod.write_report(rep, req.out_dir) if req.out_dir else {}
        return RunResponse(summary=_summary_model(rep),
                           table=report_mod.summary_table([rep]), paths=paths)

    @app.post("/sweep", response_model=SweepResponse)
    def sweep(req: SweepRequest):
        cfg = _resolve_config(req)
        results = []
        reports = []
        for value, rep in engine.sweep(cfg, req.path, req.values, parallel=req.parallel):
            paths = {}
            if req.out_dir:
                paths = report_mod.write_report(
                    rep, Path(req.out_dir) / f"{req.path.replace('.', '_')}={value:g}")
            reports.append(rep)
            results.append(RunResponse(summary=_summary_model(rep),
                                       table=report_mod.summary_table([rep]),
                                       paths=paths))
        return SweepResponse(results=results, table=report_mod.summary_table(reports))

    @app.post("/fixtures")
    def fixtures(req: FixturesRequest):
        from .fixtures import write_fixtures

        return {"paths": write_fixtures(req.out_dir, n_frames=req.n_frames, seed=req.seed)}

    @app.websocket("/bridge")
    async def bridge(ws: WebSocket):
        import anyio

        await ws.accept()
        if app.state.session is None:
            cfg = app.state.serve_config or ScenarioConfig(duration=3600.0)
            app.state.session = LiveSession(cfg)
            if autostart_bridge:
                app.state.session.start()
        session: LiveSession = app.state.session
        queue = session.subscribe()

        async def pump_out():
            import queue as qmod

            while True:
                try:
                    frame = queue.get_nowait()
                except qmod.Empty:
                    await anyio.sleep(0.02)
                    continue
                await ws.send_bytes(frame)

        try:
            async with anyio.create_task_group() as tg:
                tg.start_soon(pump_out)
                try:
                    while True:
                        data = await ws.receive_bytes()
                        session.handle_client_frame(data)
                except WebSocketDisconnect:
                    pass
                finally:
                    tg.cancel_scope.cancel()
        finally:
            session.unsubscribe(queue)

    return app


app = create_app()

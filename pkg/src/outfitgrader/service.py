"""HTTP API and persistence for the closet assistant.

Closets, scoring, recommendation, training jobs and reports over
JSON/HTTP. Scoring and recommendation are synchronous; training runs as
a background job with polling, and at most one training job runs at a
time. State lives in plain files under the store directory (atomic
write-then-rename), so the service survives restarts.
"""

from __future__ import annotations

import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from pydantic import BaseModel, Field

from . import catalog, dataset, features, grader, recommender
from .catalog import CategoryLexicon, Outfit, OutfitPart
from .dataset import Corpus
from .evaluation import evaluate_model

ENV_PREFIX = "CLOSET_"


class ServiceError(Exception):
    pass


class IoError(ServiceError):
    pass


@dataclass
class ServiceConfig:
    corpus_dir: str
    store_dir: str
    lexicon_path: Optional[str] = None
    model_path: Optional[str] = None
    features: str = "composite"
    host: str = "127.0.0.1"
    port: int = 8787
    default_seed: int = 0

    @classmethod
    def load(cls, path: Union[str, Path, None] = None, env: Optional[dict] = None) -> "ServiceConfig":
        """JSON config file with CLOSET_* environment overrides."""
        doc: dict = {}
        if path is not None:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        env = os.environ if env is None else env
        for key in ("corpus_dir", "store_dir", "lexicon_path", "model_path",
                    "features", "host", "port", "default_seed"):
            override = env.get(ENV_PREFIX + key.upper())
            if override is not None:
                doc[key] = int(override) if key in ("port", "default_seed") else override
        if "corpus_dir" not in doc or "store_dir" not in doc:
            raise ServiceError("config requires corpus_dir and store_dir")
        return cls(**doc)


def _atomic_write(path: Path, text: str) -> None:
    try:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)
    except OSError as e:
        raise IoError(f"writing {path}: {e}") from e


class Store:
    """File-backed persistence: closets.ndjson, jobs/*.json, reports/*.json,
    models/*.ckpt. Single writer; reads see complete files only."""

    def __init__(self, root: Union[str, Path]):
        self.root = Path(root)
        try:
            for sub in ("jobs", "reports", "models"):
                (self.root / sub).mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise IoError(f"creating store at {self.root}: {e}") from e
        self._lock = threading.RLock()
        self._clock = 0.0

    def timestamp(self) -> float:
        """Wall clock forced monotone so last-writer-wins is well ordered."""
        with self._lock:
            now = time.time()
            self._clock = max(now, np.nextafter(self._clock, np.inf))
            return self._clock

    # closets

    def load_closets(self) -> dict[str, dict]:
        path = self.root / "closets.ndjson"
        closets: dict[str, dict] = {}
        if path.exists():
            for d in catalog.read_ndjson(path):
                prev = closets.get(d["id"])
                if prev is None or d["updated_at"] >= prev["updated_at"]:
                    closets[d["id"]] = d
        return closets

    def save_closets(self, closets: dict[str, dict]) -> None:
        with self._lock:
            lines = [catalog.dumps_ndjson_line(closets[k]) for k in sorted(closets)]
            _atomic_write(self.root / "closets.ndjson", "".join(lines))

    # jobs

    def save_job(self, job: dict) -> None:
        with self._lock:
            _atomic_write(self.root / "jobs" / f"{job['id']}.json",
                          json.dumps(job, sort_keys=True, indent=2) + "\n")

    def load_jobs(self) -> dict[str, dict]:
        jobs: dict[str, dict] = {}
        for path in sorted((self.root / "jobs").glob("*.json")):
            try:
                job = json.loads(path.read_text(encoding="utf-8"))
                if job.get("status") in ("queued", "running"):
                    # a queued/running job cannot survive a restart
                    job["status"] = "failed"
                    job["error"] = "interrupted by service restart"
            except (json.JSONDecodeError, OSError):
                job = {
                    "id": path.stem,
                    "kind": "unknown",
                    "status": "failed",
                    "progress": 0.0,
                    "error": "corrupt job file",
                    "created_at": 0.0,
                    "updated_at": 0.0,
                    "result": None,
                }
            jobs[job["id"]] = job
        return jobs

    # reports

    def save_report(self, report_id: str, doc: dict) -> None:
        with self._lock:
            _atomic_write(self.root / "reports" / f"{report_id}.json",
                          json.dumps(doc, sort_keys=True, indent=2) + "\n")

    def load_report(self, report_id: str) -> Optional[dict]:
        path = self.root / "reports" / f"{report_id}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def model_path(self, job_id: str) -> Path:
        return self.root / "models" / f"{job_id}.ckpt"


def build_extractor(spec: str, lexicon: CategoryLexicon) -> features.FeatureExtractor:
    """Extractor from a CLI/config spec string."""
    if spec == "type":
        return features.TypeOneHotExtractor(lexicon)
    if spec == "palette":
        return features.PaletteExtractor()
    if spec == "palette_gray":
        return features.PaletteExtractor(grayscale=True)
    if spec == "composite":
        return features.composite_extractor(lexicon)
    if spec.startswith("embedding:"):
        table = features.load_embeddings(spec.split(":", 1)[1])
        return features.EmbeddingExtractor(table)
    raise ServiceError(
        f"unknown features spec {spec!r}; use type|palette|palette_gray|composite|embedding:PATH"
    )


# ---------------------------------------------------------------------------
# Request/response bodies
# ---------------------------------------------------------------------------


class ClosetCreate(BaseModel):
    name: str
    item_ids: list[str] = Field(default_factory=list)


class ClosetItemsUpdate(BaseModel):
    add: list[str] = Field(default_factory=list)
    remove: list[str] = Field(default_factory=list)


class ClosetBody(BaseModel):
    id: str
    name: str
    item_ids: list[str]
    created_at: float
    updated_at: float


class OutfitBody(BaseModel):
    slots: dict[str, str] = Field(default_factory=dict)
    accessories: list[str] = Field(default_factory=list)
    # the score probe grades work-in-progress assemblies; the grader
    # zero-pads missing slots anyway, so only the coverage rule is waived
    allow_partial: bool = False


class ScoreBody(BaseModel):
    positive_probability: float
    predicted_label: bool


class RecommendBody(BaseModel):
    pool: list[str]
    method: str = "partial_bs"
    beam_width: int = 3
    top_k: int = 10
    seed: int = 0


class RecommendedOutfitBody(BaseModel):
    rank: int
    score: float
    configuration: int
    slots: dict[str, str]
    accessories: list[str]


class RecommendResponse(BaseModel):
    method: str
    seed: int
    outfits: list[RecommendedOutfitBody]


class TrainBody(BaseModel):
    iterations: int = 2000
    batch_size: int = 64
    learning_rate: float = 1e-4
    momentum: float = 0.9
    seed: int = 0
    model_name: str = "one_fc128"


class JobBody(BaseModel):
    id: str
    kind: str
    status: str
    progress: float
    result: Optional[dict] = None
    error: Optional[str] = None
    created_at: float
    updated_at: float


class ItemBody(BaseModel):
    id: str
    category: str
    part: str
    hybrid: bool
    name: str
    colors: Optional[list[list[int]]] = None


# ---------------------------------------------------------------------------
# Application state and app factory
# ---------------------------------------------------------------------------


class AppState:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.lexicon = (
            CategoryLexicon.from_file(config.lexicon_path)
            if config.lexicon_path
            else CategoryLexicon.default()
        )
        self.corpus = Corpus.load(config.corpus_dir)
        self.extractor = build_extractor(config.features, self.lexicon)
        self.store = Store(config.store_dir)
        self.closets = self.store.load_closets()
        self.jobs = self.store.load_jobs()
        for job in self.jobs.values():
            self.store.save_job(job)
        self.lock = threading.RLock()
        if config.model_path:
            self.model = grader.load_checkpoint(config.model_path)
        else:
            input_dim = features.N_SLOTS * self.extractor.dim
            self.model = grader.build_model(
                grader.MLPConfig.named("one_fc128", input_dim=input_dim),
                seed=config.default_seed,
            )

    def resolve_outfit(self, body: OutfitBody) -> Outfit:
        slots = {}
        for part_name, item_id in body.slots.items():
            try:
                part = OutfitPart(part_name)
            except ValueError:
                raise HTTPException(400, f"unknown slot {part_name!r}") from None
            if part is OutfitPart.ACCESSORY:
                raise HTTPException(400, "accessories belong in the accessories list")
            item = self.corpus.items.get(item_id)
            if item is None:
                raise HTTPException(400, f"unknown item {item_id!r}")
            slots[part] = item
        accessories = []
        for item_id in body.accessories:
            item = self.corpus.items.get(item_id)
            if item is None:
                raise HTTPException(400, f"unknown item {item_id!r}")
            accessories.append(item)
        return Outfit(slots=slots, accessories=accessories)

    def resolve_pool(self, ids: list[str]) -> list:
        items = []
        for item_id in ids:
            item = self.corpus.items.get(item_id)
            if item is None:
                raise HTTPException(400, f"unknown item {item_id!r}")
            items.append(item)
        return items


def _run_training(state: AppState, job: dict, body: TrainBody) -> None:
    try:
        split = dataset.disjoint_split(state.corpus.outfits)
        labeled = dataset.build_labeled_dataset(state.corpus, split, seed=body.seed)
        x = features.outfit_matrix(labeled.train, state.extractor)
        y = np.array([bool(o.label) for o in labeled.train], dtype=int)
        config = grader.MLPConfig.named(body.model_name, input_dim=x.shape[1])
        model = grader.build_model(config, seed=body.seed)
        train_config = grader.TrainConfig(
            learning_rate=body.learning_rate,
            momentum=body.momentum,
            iterations=body.iterations,
            batch_size=body.batch_size,
            seed=body.seed,
        )

        def progress(it: int, total: int) -> None:
            job["progress"] = it / total
            job["updated_at"] = state.store.timestamp()
            state.store.save_job(job)

        model, _ = grader.train(model, x, y, train_config, progress_cb=progress)
        ckpt = state.store.model_path(job["id"])
        grader.save_checkpoint(model, ckpt)
        report = evaluate_model(model, labeled.test, state.extractor)
        report_id = job["id"]
        state.store.save_report(report_id, report.to_dict())
        with state.lock:
            state.model = model
        job["status"] = "done"
        job["progress"] = 1.0
        job["result"] = {"checkpoint": str(ckpt), "report_id": report_id,
                         "test_accuracy": report.accuracy}
    except Exception as e:  # job errors surface via the job record
        job["status"] = "failed"
        job["error"] = f"{type(e).__name__}: {e}"
    job["updated_at"] = state.store.timestamp()
    state.store.save_job(job)


def create_app(config: ServiceConfig) -> FastAPI:
    state = AppState(config)
    app = FastAPI(title="outfitgrader", version="0.1.0")
    app.state.graderstate = state

    # the web UI is served from a different origin at desk scale
    from fastapi.middleware.cors import CORSMiddleware

    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/closets", response_model=list[ClosetBody])
    def list_closets():
        with state.lock:
            return [state.closets[k] for k in sorted(state.closets)]

    @app.post("/closets", response_model=ClosetBody, status_code=201)
    def create_closet(body: ClosetCreate):
        unknown = [i for i in body.item_ids if i not in state.corpus.items]
        if unknown:
            raise HTTPException(400, f"unknown items: {unknown}")
        with state.lock:
            now = state.store.timestamp()
            closet = {
                "id": uuid.uuid4().hex[:12],
                "name": body.name,
                "item_ids": sorted(set(body.item_ids)),
                "created_at": now,
                "updated_at": now,
            }
            state.closets[closet["id"]] = closet
            state.store.save_closets(state.closets)
        return closet

    @app.delete("/closets/{closet_id}", status_code=204)
    def delete_closet(closet_id: str):
        with state.lock:
            if closet_id not in state.closets:
                raise HTTPException(404, f"unknown closet {closet_id!r}")
            del state.closets[closet_id]
            state.store.save_closets(state.closets)

    @app.post("/closets/{closet_id}/items", response_model=ClosetBody)
    def update_closet_items(closet_id: str, body: ClosetItemsUpdate):
        unknown = [i for i in body.add if i not in state.corpus.items]
        if unknown:
            raise HTTPException(400, f"unknown items: {unknown}")
        with state.lock:
            closet = state.closets.get(closet_id)
            if closet is None:
                raise HTTPException(404, f"unknown closet {closet_id!r}")
            ids = (set(closet["item_ids"]) | set(body.add)) - set(body.remove)
            closet["item_ids"] = sorted(ids)
            closet["updated_at"] = state.store.timestamp()
            state.store.save_closets(state.closets)
        return closet

    @app.get("/items", response_model=list[ItemBody])
    def list_items(part: Optional[str] = Query(default=None)):
        items = [state.corpus.items[k] for k in sorted(state.corpus.items)]
        if part is not None:
            try:
                wanted = OutfitPart(part)
            except ValueError:
                raise HTTPException(400, f"unknown part {part!r}") from None
            items = [it for it in items if it.part is wanted]
        out = []
        for it in items:
            colors = None
            if it.palette_source is not None and not isinstance(it.palette_source, str):
                colors = [list(c) for c in it.palette_source]
            out.append(ItemBody(id=it.id, category=it.category, part=it.part.value,
                                hybrid=it.hybrid, name=it.name, colors=colors))
        return out

    @app.post("/score", response_model=ScoreBody)
    def score(body: OutfitBody):
        outfit = state.resolve_outfit(body)
        outfit = catalog.resolve_hybrids(outfit)
        report = catalog.validate_outfit(outfit)
        violations = report.violations
        if body.allow_partial:
            violations = tuple(v for v in violations if not v.startswith("coverage"))
        if violations:
            raise HTTPException(400, f"invalid outfit: {'; '.join(violations)}")
        with state.lock:
            model = state.model
        result = grader.score_outfit(model, outfit, state.extractor)
        return ScoreBody(
            positive_probability=result.positive_probability,
            predicted_label=result.predicted_label,
        )

    @app.post("/recommend", response_model=RecommendResponse)
    def recommend_endpoint(body: RecommendBody):
        if not body.pool:
            raise HTTPException(400, "pool is empty")
        try:
            request = recommender.RecommendRequest(
                pool=body.pool, method=body.method,
                beam_width=body.beam_width, top_k=body.top_k, seed=body.seed,
            )
        except ValueError as e:
            raise HTTPException(400, str(e)) from None
        pool = state.resolve_pool(request.pool)
        with state.lock:
            model = state.model
        try:
            recs = recommender.recommend(
                pool, model, state.extractor, method=request.method,
                width=request.beam_width, top_k=request.top_k, seed=request.seed,
            )
        except recommender.RecommenderError as e:
            raise HTTPException(400, str(e)) from None
        return RecommendResponse(
            method=request.method,
            seed=request.seed,
            outfits=[RecommendedOutfitBody(**r.to_dict()) for r in recs],
        )

    @app.post("/train", response_model=JobBody, status_code=202)
    def start_training(body: TrainBody):
        with state.lock:
            running = [
                j for j in state.jobs.values()
                if j["kind"] == "train" and j["status"] in ("queued", "running")
            ]
            if running:
                raise HTTPException(409, f"training job {running[0]['id']} already running")
            now = state.store.timestamp()
            job = {
                "id": uuid.uuid4().hex[:12],
                "kind": "train",
                "status": "running",
                "progress": 0.0,
                "result": None,
                "error": None,
                "created_at": now,
                "updated_at": now,
            }
            state.jobs[job["id"]] = job
            state.store.save_job(job)
        thread = threading.Thread(target=_run_training, args=(state, job, body), daemon=True)
        thread.start()
        return job

    @app.get("/jobs/{job_id}", response_model=JobBody)
    def get_job(job_id: str):
        job = state.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id!r}")
        return job

    @app.get("/reports/{report_id}")
    def get_report(report_id: str):
        report = state.store.load_report(report_id)
        if report is None:
            raise HTTPException(404, f"unknown report {report_id!r}")
        return report

    return app


def serve(config: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=config.host, port=config.port, log_level="warning")

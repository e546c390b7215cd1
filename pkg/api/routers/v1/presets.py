# api/routers/v1/presets.py
from __future__ import annotations

from typing import List

from fastapi import APIRouter, Query

from api.models.schemas import PresetInfo
from vocoder.complexity import analyze
from vocoder.graphs import build_discriminator, build_preset, dump_graph, preset_names

router = APIRouter(prefix="/presets", tags=["Presets"])


@router.get("", response_model=List[str], summary="List generator presets")
def list_presets():
    return preset_names()


@router.get("/{name}", response_model=PresetInfo, summary="Graph dump of a preset")
def get_preset(name: str):
    # unknown names raise ConfigError -> 404 via the app handler
    graph = build_preset(name)
    return PresetInfo(
        name=graph.preset,
        basis=graph.is_basis,
        upsampling_factors=graph.upsampling_factors,
        reference=graph.reference.model_dump(),
        graph=dump_graph(graph),
    )


@router.get("/{name}/flops", summary="Complexity report (generator preset, msd or mfd)")
def get_flops(name: str, length: int | None = Query(None, ge=1, description="mel frames or samples")):
    graph = build_discriminator(name) if name in ("msd", "mfd") else build_preset(name)
    report = analyze(graph, length)
    return {**report.summary(), "layers": [row.model_dump() for row in report.layers]}

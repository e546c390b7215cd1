import csv
from io import StringIO

import pytest

from api.models.bench import BenchRun, record_result
from core.db import SessionLocal
from core.worker import claim_next, process_run
from vocoder.bench import RtfResult


def _result(preset="basis-melgan-large", reps=(0.5, 0.6, 0.7)):
    return RtfResult(
        preset=preset,
        platform="test-box",
        threads=1,
        audio_seconds=1.0,
        wall_seconds=sorted(reps)[len(reps) // 2],
        rtf=sorted(reps)[len(reps) // 2],
        reps=len(reps),
        rep_seconds=list(reps),
    )


def _recorded(result):
    with SessionLocal() as db:
        return record_result(db, result, seed=7).id


def test_health_and_version(client):
    assert client.get("/api/v1/healthz").json() == {"ok": True}
    assert client.get("/api/v1/ready").json() == {"ready": True}
    assert client.get("/api/v1/version").json()["name"] == "Basis-MelGAN Bench API"


def test_presets_listing_and_dump(client):
    names = client.get("/api/v1/presets").json()
    assert "basis-melgan-large" in names and len(names) == 7
    info = client.get("/api/v1/presets/basis-melgan-large").json()
    assert info["basis"] is True
    assert info["upsampling_factors"] == [4, 4]
    assert info["reference"]["params_m"] == 15.90
    assert "basis synthesis" in info["graph"]


def test_unknown_preset_is_404_with_code(client):
    r = client.get("/api/v1/presets/wavenet")
    assert r.status_code == 404
    assert r.json()["code"] == "config"
    assert client.get("/api/v1/presets/wavenet/flops").status_code == 404


def test_flops_endpoint(client):
    body = client.get("/api/v1/presets/hifigan-v1-reference/flops").json()
    assert 52.0 <= body["gflops_per_second"] <= 54.0
    assert sum(row["flops"] for row in body["layers"]) == body["total_flops"]
    msd = client.get("/api/v1/presets/msd/flops", params={"length": 4096}).json()
    assert msd["preset"] == "msd"
    assert client.get("/api/v1/presets/msd/flops", params={"length": 0}).status_code == 422


def test_queue_list_get_and_cancel(client):
    r = client.post("/api/v1/runs", json={"preset": "basis-melgan-light", "seconds": 2.0, "seed": 4})
    assert r.status_code == 201
    run = r.json()
    assert run["status"] == "queued" and run["reps"] == 3 and run["seed"] == 4

    listing = client.get("/api/v1/runs", params={"status": "queued"}).json()
    assert listing["total"] == 1
    assert listing["items"][0]["id"] == run["id"]
    assert client.get("/api/v1/runs", params={"preset": "melgan-reference"}).json()["total"] == 0

    assert client.get(f"/api/v1/runs/{run['id']}").json()["preset"] == "basis-melgan-light"
    canceled = client.post(f"/api/v1/runs/{run['id']}/cancel").json()
    assert canceled["status"] == "canceled"
    assert client.post(f"/api/v1/runs/{run['id']}/cancel").status_code == 409


def test_queue_validation(client):
    assert client.post("/api/v1/runs", json={"preset": "wavenet"}).status_code == 422
    assert client.post("/api/v1/runs", json={"preset": "basis-melgan-large", "reps": 2}).status_code == 422
    assert client.post("/api/v1/runs", json={"preset": "basis-melgan-large", "seconds": 0.5}).status_code == 422
    assert client.get("/api/v1/runs/does-not-exist").status_code == 404


def test_report_for_recorded_run(client):
    run_id = _recorded(_result())
    body = client.get(f"/api/v1/reports/runs/{run_id}").json()
    assert body["reps"] == 3
    assert body["median_rtf"] == pytest.approx(0.6)
    assert body["min_rtf"] == pytest.approx(0.5) and body["max_rtf"] == pytest.approx(0.7)
    assert body["spread"] == pytest.approx(1.4)
    assert body["published_rtf_low"] == 0.6668
    run = client.get(f"/api/v1/runs/{run_id}").json()
    assert run["status"] == "succeeded" and run["median_rtf"] == pytest.approx(0.6)


def test_compare_and_missing_runs(client):
    a = _recorded(_result())
    b = _recorded(_result("hifigan-v1-reference", (1.8, 1.9, 2.0)))
    items = client.get("/api/v1/reports/compare", params=[("run_ids", a), ("run_ids", b)]).json()["items"]
    assert [i["preset"] for i in items] == ["basis-melgan-large", "hifigan-v1-reference"]
    assert items[1]["median_rtf"] / items[0]["median_rtf"] == pytest.approx(1.9 / 0.6)
    r = client.get("/api/v1/reports/compare", params=[("run_ids", a), ("run_ids", "nope")])
    assert r.status_code == 404


def test_csv_export(client):
    run_id = _recorded(_result())
    r = client.get(f"/api/v1/reports/runs/{run_id}/export.csv")
    assert r.status_code == 200
    assert r.headers["content-type"].startswith("text/csv")
    rows = list(csv.reader(StringIO(r.text)))
    assert rows[0] == ["rep", "ts", "wall_seconds", "audio_seconds", "rtf", "preset", "threads"]
    assert [row[0] for row in rows[1:]] == ["0", "1", "2"]
    assert rows[1][4] == "0.500000"


def test_worker_runs_a_queued_benchmark(client):
    # short clip queued below the HTTP floor to keep the run fast
    with SessionLocal() as db:
        run = BenchRun(preset="basis-melgan-light", seconds=0.05, status="queued")
        db.add(run)
        db.commit()
        queued_id = run.id
    run_id = claim_next()
    assert run_id == queued_id
    assert client.get(f"/api/v1/runs/{run_id}").json()["status"] == "running"
    assert client.post(f"/api/v1/runs/{run_id}/cancel").status_code == 409
    process_run(run_id)
    run = client.get(f"/api/v1/runs/{run_id}").json()
    assert run["status"] == "succeeded"
    assert run["median_rtf"] > 0
    assert client.get(f"/api/v1/reports/runs/{run_id}").json()["reps"] == 3
    assert claim_next() is None


def test_worker_marks_failures(client):
    with SessionLocal() as db:
        run = BenchRun(preset="not-a-preset", seconds=0.05, status="queued")
        db.add(run)
        db.commit()
        run_id = run.id
    assert claim_next() == run_id
    process_run(run_id)
    body = client.get(f"/api/v1/runs/{run_id}").json()
    assert body["status"] == "failed"
    assert body["error"].startswith("error code=config")

import json
import threading
import time
import urllib.request

import pytest

from adashift.config import ExperimentConfig, GridCell
from adashift.data import DomainFamily, DomainSpec, Shift
from adashift.dino import SslConfig
from adashift.labelers import LabelerTimeout, ServiceLabeler
from adashift.service import AnnotationService, RoundInProgress, serve_in_background


def queries(n=3, round_index=0):
    return [{"sample_id": f"q-{i}", "domain": "t1", "round": round_index,
             "features": [0.5 * i, -0.25 * i]} for i in range(n)]


def http(method, url, body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(url, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(req) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as err:
        return err.code, json.loads(err.read())


# ---------------------------------------------------------------------------
# state machine


def test_fresh_round_status():
    service = AnnotationService()
    service.start_round("t1", 0, queries(10))
    status = service.status()
    assert status["pending"] == 10 and status["labeled"] == 0
    assert status["budget"] == 10 and status["phase"] == "labeling"


def test_status_counts_track_submissions():
    service = AnnotationService()
    service.start_round("t1", 0, queries(10))
    for i in range(3):
        code, _ = service.submit_label(f"q-{i}", 1, "tester")
        assert code == 200
    status = service.status()
    assert status["pending"] == 7 and status["labeled"] == 3
    assert status["pending"] + status["labeled"] == status["budget"]


def test_all_labeled_completes_round():
    service = AnnotationService()
    service.start_round("t1", 0, queries(2))
    service.submit_label("q-0", 1)
    service.submit_label("q-1", 0)
    status = service.status()
    assert status["pending"] == 0 and status["phase"] == "complete"
    assert service.wait_complete(timeout=0.1) == {"q-0": 1, "q-1": 0}


def test_duplicate_label_rejected_with_stored_value():
    service = AnnotationService()
    service.start_round("t1", 0, queries(2))
    assert service.submit_label("q-0", 1)[0] == 200
    code, body = service.submit_label("q-0", 0)
    assert code == 409
    assert body["label"] == 1  # first write wins
    assert service.queries()[0]["label"] == 1


def test_invalid_submissions():
    service = AnnotationService()
    service.start_round("t1", 0, queries(1))
    assert service.submit_label("q-0", 2)[0] == 422
    assert service.submit_label("nope", 1)[0] == 422
    service2 = AnnotationService()
    assert service2.submit_label("q-0", 1)[0] == 404


def test_queries_preserve_order_and_payload():
    service = AnnotationService()
    sent = queries(4)
    service.start_round("t1", 2, sent)
    got = service.queries()
    assert [q["sample_id"] for q in got] == [q["sample_id"] for q in sent]
    assert all(got[i]["features"] == sent[i]["features"] for i in range(4))
    assert all(q["status"] == "pending" for q in got)


def test_second_round_blocked_until_first_completes():
    service = AnnotationService()
    service.start_round("t1", 0, queries(1))
    with pytest.raises(RoundInProgress):
        service.start_round("t2", 0, queries(1))
    service.submit_label("q-0", 1)
    service.start_round("t2", 1, queries(2, round_index=1))
    assert service.status()["round"] == 1


# ---------------------------------------------------------------------------
# durability


def test_labels_survive_restart(tmp_path):
    journal = str(tmp_path / "labels.journal")
    service = AnnotationService(journal_path=journal)
    service.start_round("t1", 0, queries(3))
    service.submit_label("q-0", 1, "alice")
    service.submit_label("q-2", 0, "alice")

    recovered = AnnotationService(journal_path=journal)
    status = recovered.status()
    assert status["pending"] == 1 and status["labeled"] == 2
    rec = {q["sample_id"]: q for q in recovered.queries()}
    assert rec["q-0"]["label"] == 1 and rec["q-2"]["label"] == 0
    assert rec["q-1"]["status"] == "pending"
    recovered.submit_label("q-1", 1)
    assert recovered.wait_complete(timeout=0.1) == {"q-0": 1, "q-1": 1, "q-2": 0}


def test_journal_is_written_before_ack(tmp_path):
    journal = str(tmp_path / "labels.journal")
    service = AnnotationService(journal_path=journal)
    service.start_round("t1", 0, queries(1))
    service.submit_label("q-0", 1, "bob")
    lines = [json.loads(l) for l in open(journal)]
    assert lines[-1] == {"type": "label", "round": 0, "sample_id": "q-0",
                         "label": 1, "annotator": "bob"}


def test_completed_round_labels_equal_accepted_posts(tmp_path):
    service = AnnotationService(journal_path=str(tmp_path / "j"))
    service.start_round("t1", 0, queries(5))
    accepted = {}
    attempts = [("q-0", 1), ("q-1", 0), ("q-0", 0), ("q-2", 1), ("q-5", 1),
                ("q-3", 1), ("q-4", 0), ("q-2", 1)]
    for sid, label in attempts:
        code, _ = service.submit_label(sid, label)
        if code == 200:
            accepted[sid] = label
    assert service.wait_complete(timeout=0.1) == accepted


# ---------------------------------------------------------------------------
# HTTP layer


@pytest.fixture()
def live_service():
    service = AnnotationService()
    server, _ = serve_in_background(service, port=0)
    yield service, f"http://127.0.0.1:{server.server_port}"
    server.shutdown()


def test_http_endpoints(live_service):
    service, base = live_service
    code, body = http("GET", f"{base}/rounds/current")
    assert code == 404

    service.start_round("t1", 0, queries(3))
    code, body = http("GET", f"{base}/rounds/current")
    assert code == 200 and body["pending"] == 3 and body["schema"] == "annotate/v1"

    code, body = http("GET", f"{base}/rounds/current/queries")
    assert code == 200 and len(body["queries"]) == 3

    code, body = http("POST", f"{base}/labels",
                      {"sample_id": "q-0", "label": 1, "annotator": "web"})
    assert code == 200 and body["pending"] == 2

    code, body = http("POST", f"{base}/labels", {"sample_id": "q-0", "label": 0})
    assert code == 409 and body["label"] == 1

    code, body = http("POST", f"{base}/labels", {"sample_id": "q-0", "label": 2})
    assert code in (409, 422)
    code, body = http("POST", f"{base}/labels", {"sample_id": "zz", "label": 1})
    assert code == 422


def test_service_labeler_blocks_until_complete(live_service):
    service, base = live_service
    labeler = ServiceLabeler(service, timeout=5.0, poll_interval=0.01)

    def annotate():
        while True:
            code, body = http("GET", f"{base}/rounds/current")
            if code == 200:
                break
            time.sleep(0.01)
        for q in http("GET", f"{base}/rounds/current/queries")[1]["queries"]:
            http("POST", f"{base}/labels",
                 {"sample_id": q["sample_id"], "label": 1, "annotator": "thread"})

    worker = threading.Thread(target=annotate)
    worker.start()
    labels = labeler.request_labels("t1", 0, queries(4))
    worker.join()
    assert labels == {f"q-{i}": 1 for i in range(4)}


def test_service_labeler_timeout_aborts_cleanly():
    service = AnnotationService()
    labeler = ServiceLabeler(service, timeout=0.05)
    with pytest.raises(LabelerTimeout):
        labeler.request_labels("t1", 0, queries(2))
    assert service.status() is None  # aborted, nothing half-committed


# ---------------------------------------------------------------------------
# scripted-client equivalence with the oracle


def tiny_config():
    family = DomainFamily(domains=[
        DomainSpec("src", 200, 0.25, role="source"),
        DomainSpec("t1", 120, 0.4, shift=Shift(rotation=0.5, translation=(0.4, 0.0))),
    ], seed=0)
    return ExperimentConfig(family=family, seeds=(0,),
                            ssl=SslConfig(stage1_epochs=1, stage2_epochs=1,
                                          max_pool_size=320),
                            grid=(GridCell("uniform", "finetune"),),
                            budget=4)


def test_scripted_client_reproduces_oracle_run(tmp_path):
    from dataclasses import replace

    from adashift.harness import emit_results, load_pools, run_workflow

    cfg = tiny_config()
    oracle_report = run_workflow(cfg)
    emit_results(oracle_report, tmp_path / "oracle")

    pools = load_pools(cfg)
    truth = {}
    for pool in pools.values():
        for i, sid in enumerate(pool.ids):
            truth[sid] = int(pool.y[i])

    service = AnnotationService()
    server, _ = serve_in_background(service, port=0)
    base = f"http://127.0.0.1:{server.server_port}"
    stop = threading.Event()

    def scripted_client():
        seen_rounds = set()
        while not stop.is_set():
            code, body = http("GET", f"{base}/rounds/current")
            if code != 200 or body["phase"] == "complete":
                time.sleep(0.005)
                continue
            key = (body["domain"], body["round"])
            code, payload = http("GET", f"{base}/rounds/current/queries")
            for q in payload["queries"]:
                if q["status"] == "pending":
                    http("POST", f"{base}/labels",
                         {"sample_id": q["sample_id"], "label": truth[q["sample_id"]],
                          "annotator": "script"})
            seen_rounds.add(key)

    worker = threading.Thread(target=scripted_client, daemon=True)
    worker.start()
    try:
        service_cfg = replace(cfg, labeler="service")
        service_report = run_workflow(service_cfg,
                                      labeler=ServiceLabeler(service, timeout=30.0))
    finally:
        stop.set()
        worker.join(timeout=2)
        server.shutdown()
    emit_results(service_report, tmp_path / "service")

    for name in ("results_grid.json", "results_table.txt", "deltas.csv", "curves.csv"):
        assert (tmp_path / "oracle" / name).read_bytes() == \
            (tmp_path / "service" / name).read_bytes(), name

import pytest

from sentinel.canon import canonical_json
from sentinel.harness import report_from_pipeline, report_from_replay
from sentinel.incidents import InvalidAction
from sentinel.pipeline import NotInProgress, Pipeline, UnknownTarget, replay_journal
from tests.conftest import line_scenario


def run_pipeline(tmp_path, **overrides):
    cfg = line_scenario(**overrides)
    pipeline = Pipeline(cfg, journal_path=tmp_path / "j.jsonl")
    pipeline.drive(cfg.duration_ms)
    pipeline.finalize()
    pipeline.journal.close()
    return cfg, pipeline


def test_bootstrap_registers_fleet_in_cmdb(tmp_path):
    _, pl = run_pipeline(tmp_path)
    assert pl.cmdb.ci_for_source("n1") is not None
    assert pl.cmdb.ci_for_source("sink").ci_class == "BaseStation"
    imports = pl.journal.records_after(0, {"import"})
    assert imports and imports[0]["body"]["table"] == "asset_feed"


def test_quiet_run_has_no_events(tmp_path):
    _, pl = run_pipeline(tmp_path)
    assert pl.events_by_type == {}
    assert pl.alerts.alerts == {}
    assert pl.incidents.incidents == {}


def test_replay_reproduces_state_digest_and_report(tmp_path):
    cfg, pl = run_pipeline(
        tmp_path,
        duration_s=600,
        attacks=[
            {"kind": "flood", "target": "n1", "start_s": 200, "duration_s": 200, "multiplier": 20},
            {"kind": "rogue_join", "source_id": "rogue-1", "start_s": 100, "duration_s": 300},
        ],
        auto_response=[
            {"on_event": "dos_flood", "action": "quarantine", "delay_s": 20},
            {"on_event": "unauthorized_access", "action": "add_exception", "delay_s": 50},
        ],
    )
    live_report = report_from_pipeline(pl)
    state, info = replay_journal(tmp_path / "j.jsonl")
    assert not info["truncated"]
    assert canonical_json(state.state_view()) == canonical_json(pl.state_view())
    replay_report = report_from_replay(state)
    assert canonical_json(replay_report) == canonical_json(live_report)


def test_external_telemetry_import_feeds_detectors(tmp_path):
    cfg = line_scenario()
    pl = Pipeline(cfg, journal_path=tmp_path / "j.jsonl")
    pl.drive(30_000)
    result = pl.handle_import(
        "sensor_feed",
        [
            {"node_id": "n1", "value": "95.0", "kind": "temperature"},
            {"node_id": "intruder", "value": "20.0", "kind": "temperature"},
        ],
    )
    assert result["inserted"] == 2
    assert pl.events_by_type["overheat"] == 1
    assert pl.events_by_type["unauthorized_access"] == 1
    telemetry = [r["body"] for r in pl.journal.records_after(0, {"telemetry"})]
    external = [r for r in telemetry if r["source_id"] == "intruder"]
    assert external and external[0]["sink_arrival_ms"] == 30_000


def test_unknown_import_table_raises_keyerror(tmp_path):
    cfg = line_scenario()
    pl = Pipeline(cfg, journal_path=tmp_path / "j.jsonl")
    with pytest.raises(KeyError):
        pl.handle_import("nope", [])


def test_action_requires_in_progress_incident(tmp_path):
    cfg = line_scenario(
        duration_s=400,
        attacks=[{"kind": "flood", "target": "n1", "start_s": 100, "duration_s": 200, "multiplier": 20}],
    )
    pl = Pipeline(cfg, journal_path=tmp_path / "j.jsonl")
    pl.drive(200_000)
    ref = next(iter(pl.incidents.incidents))
    action = {"action": "quarantine", "target": "n1", "incident_ref": ref, "requested_by": "tester"}
    with pytest.raises(NotInProgress):
        pl.execute_response(action)
    pl.transition_incident(ref, "InProgress", "tester", "triage")
    receipt = pl.execute_response(action)
    assert receipt["status"] == "applied"
    incident = pl.incidents.get(ref)
    assert incident.work_notes[-1]["note"] == "response quarantine on n1 dispatched"


def test_patch_on_healthy_node_invalid(tmp_path):
    cfg = line_scenario(
        duration_s=400,
        attacks=[{"kind": "flood", "target": "n1", "start_s": 100, "duration_s": 200, "multiplier": 20}],
    )
    pl = Pipeline(cfg, journal_path=tmp_path / "j.jsonl")
    pl.drive(200_000)
    ref = next(iter(pl.incidents.incidents))
    pl.transition_incident(ref, "InProgress", "t", "")
    with pytest.raises(InvalidAction):
        pl.execute_response({"action": "patch", "target": "n2", "incident_ref": ref})
    with pytest.raises(UnknownTarget):
        pl.execute_response({"action": "power_off", "target": "ghost", "incident_ref": ref})


def test_add_exception_suppresses_future_events(tmp_path):
    cfg, pl = run_pipeline(
        tmp_path,
        duration_s=400,
        attacks=[{"kind": "rogue_join", "source_id": "contractor-7", "start_s": 50, "duration_s": 350}],
        auto_response=[
            {"on_event": "unauthorized_access", "action": "add_exception", "delay_s": 30,
             "params": {"reason": "approved vendor"}}
        ],
    )
    events = [r["body"] for r in pl.journal.records_after(0, {"event"})]
    unauthorized = [e for e in events if e["type"] == "unauthorized_access"]
    exception_ts = next(
        r["ts_ms"] for r in pl.journal.records_after(0, {"action"}) if r["body"]["action"] == "add_exception"
    )
    assert unauthorized
    assert all(e["created_ms"] <= exception_ts for e in unauthorized)
    assert pl.source_detector.suppressed_count > 0
    assert len({e["dedup_key"] for e in unauthorized}) == 1


def test_sla_breach_emitted_for_untriaged_incident(tmp_path):
    # P2 incident (unauthorized_access) with nobody responding: response SLA 900 s
    cfg, pl = run_pipeline(
        tmp_path,
        duration_s=1200,
        attacks=[{"kind": "rogue_join", "source_id": "rogue-9", "start_s": 10, "duration_s": 1100}],
    )
    assert pl.events_by_type["sla_breach"] >= 1
    breach_events = [
        r["body"] for r in pl.journal.records_after(0, {"event"}) if r["body"]["type"] == "sla_breach"
    ]
    assert breach_events[0]["payload"]["breach"] == "response"
    ref = breach_events[0]["payload"]["reference"]
    assert pl.incidents.get(ref).response_breached
    # single shot: exactly one response breach for that incident
    response_breaches = [
        e for e in breach_events if e["payload"]["reference"] == ref and e["payload"]["breach"] == "response"
    ]
    assert len(response_breaches) == 1


def test_second_run_identical_journal_bytes(tmp_path):
    overrides = dict(
        duration_s=300,
        jitter=0.1,
        attacks=[{"kind": "flood", "target": "n1", "start_s": 100, "duration_s": 100, "multiplier": 15}],
        auto_response=[{"on_event": "dos_flood", "action": "quarantine", "delay_s": 10}],
    )
    texts = []
    for sub in ("a", "b"):
        cfg = line_scenario(**overrides)
        path = tmp_path / f"{sub}.jsonl"
        pl = Pipeline(cfg, journal_path=path)
        pl.drive(cfg.duration_ms)
        pl.finalize()
        pl.journal.close()
        texts.append(path.read_bytes())
    assert texts[0] == texts[1]

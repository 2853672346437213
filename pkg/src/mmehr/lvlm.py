"""Yes/no clinical question harness for chat-style multimodal endpoints.

A stay is rendered into a deterministic text prompt (demographics, then
per-variable vital entries with timestamp tags, then timestamped
radiology reports, then the fixed task question). Answers are parsed to
yes/no/refusal with a total rule, scored over answered instances, and
every exchange is logged as a JSON line. A scripted in-process mock
endpoint supports fully offline tests.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import ExternalFailure
from .cohort import LabeledStay
from .metrics import classification_metrics

MORTALITY_QUESTION = (
    "Question: Will the patient die during current hospital admission? "
    "Answer the question using only yes or no."
)
LOS_QUESTION = (
    "Question: Will the ICU stay exceed 3 days? "
    "Answer the question using only yes or no."
)
PROLOGUE = "Based on the information collected during current ICU stay,"


class EndpointUnavailable(ExternalFailure):
    pass


class Timeout(ExternalFailure):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str = "mock"
    auth_env: str = ""
    timeout_s: float = 30.0
    max_retries: int = 3
    backoff_base_s: float = 1.0
    concurrency: int = 1
    max_images: int = 4
    redact_prompts: bool = False
    refusal_policy: str = "exclude"  # exclude | count_wrong

    def __post_init__(self):
        if self.refusal_policy not in ("exclude", "count_wrong"):
            raise ValueError(f"unknown refusal policy: {self.refusal_policy}")


@dataclass
class PromptInstance:
    stay_id: int
    task: str
    text: str
    image_refs: list[str]
    ground_truth: int


@dataclass
class ModelAnswer:
    raw: str
    parsed: str  # yes | no | refusal
    latency_ms: float
    endpoint: dict = field(default_factory=dict)


def _fmt_t(offset_hours: float) -> str:
    return f"[t=+{offset_hours:.2f}h]"


def render_prompt(labeled: LabeledStay, task: str, max_images: int = 4) -> PromptInstance:
    """Deterministic table-to-text conversion of one windowed stay.

    Identical stays render byte-identical prompts: section order is
    fixed, vitals are grouped per variable in time order, notes carry
    timestamp headers, and empty sections say "None recorded".
    """
    if task not in ("mortality", "los"):
        raise ValueError(f"unknown task: {task}")
    stay = labeled.stay
    lines = [f"{PROLOGUE} the patient presents as follows.", ""]
    lines.append("Demographics:")
    lines.append(f"age: {stay.demographics.age_years:.1f}")
    lines.append(f"gender: {stay.demographics.gender}")
    lines.append(f"race: {stay.demographics.race}")
    lines.append("")

    if stay.vitals:
        lines.append("Vital signs:")
        by_var: dict[str, list] = {}
        for e in stay.vitals:
            by_var.setdefault(e.variable_id, []).append(e)
        for var in sorted(by_var):
            entries = sorted(by_var[var], key=lambda e: e.offset_hours)
            rendered = ", ".join(f"{_fmt_t(e.offset_hours)} {e.value!r}" for e in entries)
            lines.append(f"{var}: {rendered}")
    else:
        lines.append("Vital signs: None recorded")
    lines.append("")

    if stay.notes:
        lines.append("Radiology reports:")
        for note in sorted(stay.notes, key=lambda n: (n.offset_hours, n.seq)):
            lines.append(f"{_fmt_t(note.offset_hours)}")
            lines.append(note.text)
    else:
        lines.append("Radiology reports: None recorded")
    lines.append("")

    lines.append(MORTALITY_QUESTION if task == "mortality" else LOS_QUESTION)

    images = sorted(stay.images, key=lambda i: i.offset_hours)
    if max_images >= 0:
        images = images[-max_images:] if max_images else []
    truth = labeled.mortality_label if task == "mortality" else labeled.los_label
    return PromptInstance(
        stay_id=stay.stay_id,
        task=task,
        text="\n".join(lines),
        image_refs=[i.path for i in images],
        ground_truth=truth,
    )


def parse_answer(raw: str) -> str:
    """Total mapping of any reply to yes, no, or refusal.

    The leading word decides when it is literally yes or no; otherwise
    the first sentence must contain exactly one of the two words.
    """
    text = raw.lower()
    tokens = re.findall(r"[a-z]+", text)
    if tokens and tokens[0] in ("yes", "no"):
        return tokens[0]
    first_sentence = re.split(r"[.!?]", text, maxsplit=1)[0]
    sentence_tokens = set(re.findall(r"[a-z]+", first_sentence))
    has_yes = "yes" in sentence_tokens
    has_no = "no" in sentence_tokens
    if has_yes != has_no:
        return "yes" if has_yes else "no"
    return "refusal"


def _post_json(url: str, payload: dict, timeout_s: float, headers: dict) -> dict:
    body = json.dumps(payload).encode("utf-8")
    req = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json", **headers}
    )
    try:
        with urllib.request.urlopen(req, timeout=timeout_s) as resp:
            return json.loads(resp.read().decode("utf-8"))
    except TimeoutError as exc:
        raise Timeout(f"request to {url} timed out after {timeout_s}s") from exc
    except urllib.error.URLError as exc:
        if isinstance(getattr(exc, "reason", None), TimeoutError):
            raise Timeout(f"request to {url} timed out after {timeout_s}s") from exc
        raise EndpointUnavailable(f"request to {url} failed: {exc}") from exc
    except (json.JSONDecodeError, OSError) as exc:
        raise EndpointUnavailable(f"bad reply from {url}: {exc}") from exc


def query_endpoint(instance: PromptInstance, config: EndpointConfig) -> ModelAnswer:
    """One text segment plus image attachments out, one text reply back.

    Transport failures are retried up to max_retries with exponential
    backoff; the reply is captured verbatim.
    """
    headers = {}
    if config.auth_env:
        token = os.environ.get(config.auth_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
    payload = {
        "model": config.model,
        "temperature": 0,
        "stay_id": instance.stay_id,
        "text": instance.text,
        "images": list(instance.image_refs),
    }
    start = time.monotonic()
    last_exc: Exception | None = None
    for attempt in range(1, config.max_retries + 1):
        try:
            reply = _post_json(config.base_url, payload, config.timeout_s, headers)
            raw = str(reply.get("text", ""))
            latency_ms = (time.monotonic() - start) * 1000.0
            return ModelAnswer(
                raw=raw,
                parsed=parse_answer(raw),
                latency_ms=latency_ms,
                endpoint={
                    "base_url": config.base_url,
                    "model": config.model,
                    "attempts": attempt,
                },
            )
        except (EndpointUnavailable, Timeout) as exc:
            last_exc = exc
            if attempt < config.max_retries:
                time.sleep(config.backoff_base_s * 2 ** (attempt - 1))
    raise EndpointUnavailable(
        f"endpoint failed after {config.max_retries} attempts: {last_exc}"
    ) from last_exc


def run_instances(
    instances: list[PromptInstance],
    config: EndpointConfig,
    log_path: str | Path | None = None,
) -> list[ModelAnswer]:
    """Query every instance (optionally concurrently), log, keep order."""
    answers: list[ModelAnswer | None] = [None] * len(instances)
    if config.concurrency > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            futures = {
                pool.submit(query_endpoint, inst, config): i
                for i, inst in enumerate(instances)
            }
            for fut, i in futures.items():
                answers[i] = fut.result()
    else:
        for i, inst in enumerate(instances):
            answers[i] = query_endpoint(inst, config)
    if log_path is not None:
        import hashlib

        with Path(log_path).open("w", encoding="utf-8") as fh:
            for inst, ans in zip(instances, answers):
                prompt = inst.text
                if config.redact_prompts:
                    prompt = "sha256:" + hashlib.sha256(inst.text.encode()).hexdigest()
                fh.write(
                    json.dumps(
                        {
                            "stay_id": inst.stay_id,
                            "task": inst.task,
                            "request": {"text": prompt, "images": inst.image_refs},
                            "response": {"text": ans.raw},
                            "parsed": ans.parsed,
                            "latency_ms": round(ans.latency_ms, 3),
                            "attempts": ans.endpoint.get("attempts"),
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    return answers  # type: ignore[return-value]


def score_lvlm(
    answers: list[ModelAnswer],
    ground_truths: list[int],
    refusal_policy: str = "exclude",
) -> dict:
    """Answerable share plus confusion metrics.

    Default policy computes metrics over answered instances only; the
    count_wrong policy scores a refusal as an incorrect prediction.
    Either way answered + refused equals the instance count.
    """
    if len(answers) != len(ground_truths):
        raise ValueError("answers and ground truths must align")
    total = len(answers)
    parsed = [a.parsed for a in answers]
    n_refused = sum(1 for p in parsed if p == "refusal")
    n_answered = total - n_refused
    y, y_hat = [], []
    for p, truth in zip(parsed, ground_truths):
        if p == "refusal":
            if refusal_policy == "count_wrong":
                y.append(truth)
                y_hat.append(1 - truth)
            continue
        y.append(truth)
        y_hat.append(1 if p == "yes" else 0)
    metrics = classification_metrics(y, y_hat) if y else {
        "accuracy": None,
        "precision": None,
        "recall": None,
        "specificity": None,
        "f1": None,
    }
    return {
        "total": total,
        "answered": n_answered,
        "refused": n_refused,
        "answerable_pct": 100.0 * n_answered / total if total else 0.0,
        "refusal_policy": refusal_policy,
        "metrics": metrics,
    }


class _MockHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        server: MockEndpoint = self.server.mock  # type: ignore[attr-defined]
        with server.lock:
            server.request_count += 1
            n = server.request_count
        if server.script.get("fail_first", 0) >= n:
            self.send_error(503, "scripted failure")
            return
        delay = server.script.get("delay_s", 0)
        if delay:
            time.sleep(delay)
        length = int(self.headers.get("Content-Length", "0"))
        payload = json.loads(self.rfile.read(length).decode("utf-8"))
        by_stay = server.script.get("by_stay", {})
        text = by_stay.get(str(payload.get("stay_id")), server.script.get("default", "Yes"))
        body = json.dumps({"text": text}).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


class MockEndpoint:
    """In-process scripted endpoint for offline harness tests.

    The script maps stay ids to reply texts, with an optional default,
    a number of initial requests to fail, and a per-request delay.
    """

    def __init__(self, script: dict | str | Path | None = None):
        if isinstance(script, (str, Path)):
            script = json.loads(Path(script).read_text(encoding="utf-8"))
        self.script = script or {}
        self.request_count = 0
        self.lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def __enter__(self) -> str:
        self._server = ThreadingHTTPServer(("127.0.0.1", 0), _MockHandler)
        self._server.mock = self  # type: ignore[attr-defined]
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}/"

    def __exit__(self, *exc):
        if self._server:
            self._server.shutdown()
            self._server.server_close()
        if self._thread:
            self._thread.join(timeout=5)
        return False

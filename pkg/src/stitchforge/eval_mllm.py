"""Multimodal-LLM quality metrics for stitched images.

Two protocols: a single-image rubric score over five aspects (seam,
brightness transition, distortion, clear, abnormal content; 0-2 points each,
0-10 total) and a pairwise better-of-two comparison. Both talk to an
OpenAI-compatible chat-vision endpoint with bounded retries, plus SRCC/PLCC
for checking machine scores against human opinion scores.
"""

import base64
import io
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .errors import (
    AuthError,
    ConstantInput,
    ExhaustedRetries,
    IdMismatch,
    LengthMismatch,
    TransportError,
    Unparseable,
)

ASPECTS = ("seam", "brightness transition", "distortion", "clear", "abnormal content")

SIQS_RUBRIC = """\
I need you to become a stitched image quality assessment evaluator. The \
evaluation process should be as objective and impartial as possible, giving \
specific ratings and reasons, including seam, brightness transition, \
distortion, clear and abnormal content, each aspect 2 points.
1. Whether there are seams in the image (2 points).
score 2: the image is smooth without obvious boundaries or misalignment;
score 1: there are slightly visible boundaries in the image, but overall look well;
score 0: there are obvious borders or dislocations in the image, affecting the overall look and feel.
2. Whether there are brightness transitions in the image (2 points).
score 2: the brightness transition of image is smooth;
score 1: the light and shade changes in the image are a bit unnatural;
score 0: the light and shade changes in the image are very abrupt.
3. Whether there are distortions in the image (2 points).
score 2: no distortion in the image;
score 1: there are a few structural anomalies of straight lines in the image;
score 0: there are noticeably distortions, such as distorted pillar, brick, and building construction.
4. Whether the image is clear and blurred (2 points).
score 2: the image is clear, the details are visible, and there is no blur;
score 1: the resolution of the image is good, but slightly blurred;
score 0: the image is blurred and the details are not clear.
5. Whether the image is natural (2 points).
score 2: the image is natural with out abnormal content;
score 1: there are some places in the image that is not in harmony with the main content;
score 0: There are a lot of abnormal content in the image such as strange texture and non-semantic image.
"""

MICQS_RUBRIC = """\
I need you to become a stitched image quality assessment evaluator. Compare \
the input two stitched images, includes seam, brightness transition, \
distortion, clear and abnormal content. Choose which one you think is \
better. There are two choices: image 1 (left) is better, or image 2 (right) \
is better.
"""


@dataclass(frozen=True)
class RubricPrompt:
    text: str
    kind: str = "siqs"

    def __post_init__(self):
        low = self.text.lower()
        missing = [name for name in ASPECTS if name not in low]
        if missing:
            raise ValueError(f"rubric prompt missing aspects: {missing}")
        if self.kind == "siqs":
            for anchor in ("2 points", "score 2", "score 1", "score 0"):
                if anchor not in low:
                    raise ValueError(f"rubric prompt missing anchor {anchor!r}")


def build_siqs_prompt(override_path=None) -> RubricPrompt:
    """Five-aspect single-image rubric; an override file replaces the text."""
    if override_path is not None:
        return RubricPrompt(text=Path(override_path).read_text(), kind="siqs")
    return RubricPrompt(text=SIQS_RUBRIC, kind="siqs")


def build_micqs_prompt(override_path=None) -> RubricPrompt:
    """Two-choice comparison prompt over the same five aspects.

    Deliberately no "both" option: forced choice keeps votes informative.
    """
    if override_path is not None:
        return RubricPrompt(text=Path(override_path).read_text(), kind="micqs")
    return RubricPrompt(text=MICQS_RUBRIC, kind="micqs")


@dataclass
class SIQSResult:
    aspect_scores: list
    total: int
    reasons: dict
    raw_response: str
    evaluator_model: str = ""
    attempts: int = 1
    partial: bool = False
    total_discrepancy: bool = False


@dataclass
class MICQSResult:
    choice: str
    reasons: str
    raw_response: str
    evaluator_model: str = ""
    attempts: int = 1


_POINTS_RE = re.compile(r"\(?\s*(\d+)\s*points?\b\s*\)?", re.IGNORECASE)


def parse_siqs_response(text: str) -> SIQSResult:
    """Extract the five per-aspect "(N points)" markers plus the final total.

    When the stated total disagrees with the aspect sum, the sum wins and a
    discrepancy flag is set. Raises Unparseable when no score markers exist.
    """
    clean = text.replace("*", "")
    low = clean.lower()
    positions = []
    cursor = 0
    for name in ASPECTS:
        match = re.search(rf"\b{re.escape(name)}\b", low[cursor:])
        if match is None:
            positions.append(None)
        else:
            positions.append(cursor + match.start())
            cursor = cursor + match.start() + len(name)

    found = [p for p in positions if p is not None]
    scores: list = [None] * len(ASPECTS)
    reasons: dict = {}
    last_aspect_mark_end = 0
    for idx, pos in enumerate(positions):
        if pos is None:
            continue
        later = [p for p in positions[idx + 1:] if p is not None]
        end = later[0] if later else len(clean)
        section = clean[pos:end]
        mark = _POINTS_RE.search(section)
        if mark is not None:
            value = int(mark.group(1))
            if 0 <= value <= 2:
                scores[idx] = value
                last_aspect_mark_end = pos + mark.end()
        reasons[ASPECTS[idx]] = section.strip()

    stated_total = None
    for mark in _POINTS_RE.finditer(clean, last_aspect_mark_end):
        value = int(mark.group(1))
        if 0 <= value <= 10:
            stated_total = value

    parsed = [s for s in scores if s is not None]
    if not parsed and stated_total is None:
        raise Unparseable("no score markers found in response")

    if len(parsed) == len(ASPECTS):
        total = sum(parsed)
        return SIQSResult(
            aspect_scores=scores,
            total=total,
            reasons=reasons,
            raw_response=text,
            total_discrepancy=stated_total is not None and stated_total != total,
        )
    total = stated_total if stated_total is not None else sum(parsed)
    return SIQSResult(
        aspect_scores=scores,
        total=total,
        reasons=reasons,
        raw_response=text,
        partial=True,
    )


_CHOICE_RE = re.compile(
    r"image\s*([12])\s*(?:\((?:left|right)\))?\s*(?:is|was|looks)?\s*better",
    re.IGNORECASE,
)


def parse_micqs_response(text: str) -> MICQSResult:
    """Extract the better-of-two verdict; the last stated choice wins."""
    clean = text.replace("*", "")
    matches = list(_CHOICE_RE.finditer(clean))
    if not matches:
        raise Unparseable("no better-of-two verdict found in response")
    choice = f"image{matches[-1].group(1)}"
    return MICQSResult(choice=choice, reasons=clean.strip(), raw_response=text)


@dataclass(frozen=True)
class EvaluatorEndpoint:
    """Where to send requests and how hard to retry."""

    base_url: str
    model: str
    auth_env: str = "STITCHFORGE_MLLM_API_KEY"
    max_attempts: int = 3
    backoff_ms: tuple = (500, 1000, 2000)

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


def encode_image_b64(image) -> str:
    """Base64 PNG for an array in [0,1] or an image file path."""
    if isinstance(image, (str, Path)):
        return base64.b64encode(Path(image).read_bytes()).decode("ascii")
    from .imageio import to_uint8
    from PIL import Image

    data = to_uint8(np.asarray(image))
    mode = "L" if data.ndim == 2 else "RGB"
    buf = io.BytesIO()
    Image.fromarray(data, mode=mode).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _default_transport(endpoint: EvaluatorEndpoint, timeout: float):
    def post(payload: dict) -> dict:
        key = os.environ.get(endpoint.auth_env)
        if not key:
            raise AuthError(f"credential env var {endpoint.auth_env} is not set")
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        try:
            resp = requests.post(
                url,
                json=payload,
                headers={"Authorization": f"Bearer {key}"},
                timeout=timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"endpoint rejected credential ({resp.status_code})")
        if resp.status_code != 200:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise TransportError("endpoint returned non-JSON body") from exc

    return post


class ChatVisionClient:
    """Chat-with-vision client with deterministic payloads and bounded retries.

    ``transport`` takes the request payload dict and returns the decoded
    response dict; tests inject fakes here. Unparseable responses and
    transport failures are retried up to ``max_attempts`` with the configured
    backoff; auth failures are not retried.
    """

    def __init__(
        self,
        endpoint: EvaluatorEndpoint,
        temperature: float = 0.0,
        max_tokens: int = 1024,
        timeout: float = 120.0,
        transport=None,
        siqs_prompt: RubricPrompt | None = None,
        micqs_prompt: RubricPrompt | None = None,
    ):
        self.endpoint = endpoint
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.transport = transport or _default_transport(endpoint, timeout)
        self.siqs_prompt = siqs_prompt or build_siqs_prompt()
        self.micqs_prompt = micqs_prompt or build_micqs_prompt()

    def _payload(self, prompt_text: str, images) -> dict:
        content = [{"type": "text", "text": prompt_text}]
        for image in images:
            content.append(
                {
                    "type": "image_url",
                    "image_url": {
                        "url": "data:image/png;base64," + encode_image_b64(image)
                    },
                }
            )
        return {
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }

    @staticmethod
    def _extract_text(data: dict) -> str:
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise Unparseable(f"response body missing message content: {exc}") from exc

    def _request(self, prompt_text: str, images, parser):
        payload = self._payload(prompt_text, images)
        last_error = None
        for attempt in range(1, self.endpoint.max_attempts + 1):
            try:
                text = self._extract_text(self.transport(payload))
                result = parser(text)
                result.attempts = attempt
                result.evaluator_model = self.endpoint.model
                return result
            except AuthError:
                raise
            except (TransportError, Unparseable) as exc:
                last_error = exc
                if attempt < self.endpoint.max_attempts:
                    schedule = self.endpoint.backoff_ms
                    delay = schedule[min(attempt - 1, len(schedule) - 1)]
                    if delay:
                        time.sleep(delay / 1000.0)
        raise ExhaustedRetries(
            f"{self.endpoint.max_attempts} attempts failed; last: {last_error}"
        ) from last_error

    def siqs(self, image) -> SIQSResult:
        return self._request(self.siqs_prompt.text, [image], parse_siqs_response)

    def micqs(self, img1, img2) -> MICQSResult:
        return self._request(self.micqs_prompt.text, [img1, img2], parse_micqs_response)


def evaluate_siqs(image, endpoint: EvaluatorEndpoint, **client_kwargs) -> SIQSResult:
    return ChatVisionClient(endpoint, **client_kwargs).siqs(image)


def evaluate_micqs(img1, img2, endpoint: EvaluatorEndpoint, **client_kwargs) -> MICQSResult:
    return ChatVisionClient(endpoint, **client_kwargs).micqs(img1, img2)


def _run_batch(tasks: dict, worker, concurrency: int) -> dict:
    results = {}
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        futures = {key: pool.submit(worker, args) for key, args in tasks.items()}
        for key, future in futures.items():
            try:
                results[key] = future.result()
            except (ExhaustedRetries, AuthError, TransportError) as exc:
                results[key] = {"error": str(exc), "type": type(exc).__name__}
    return results


def evaluate_siqs_batch(
    images: dict, client: ChatVisionClient, concurrency: int = 4
) -> dict:
    """Score many images with bounded in-flight requests, keyed by sample id."""
    return _run_batch(images, lambda img: client.siqs(img), concurrency)


def evaluate_micqs_batch(
    pairs: dict,
    client: ChatVisionClient,
    concurrency: int = 4,
    swap_and_revote: bool = False,
) -> dict:
    """Compare many image pairs; optional swap mode reruns each pair reversed
    and reports whether the two verdicts agree (position-bias probe)."""

    def worker(pair):
        img1, img2 = pair
        forward = client.micqs(img1, img2)
        if not swap_and_revote:
            return forward
        reverse = client.micqs(img2, img1)
        agree = {("image1", "image2"), ("image2", "image1")}
        return {
            "forward": forward,
            "reversed": reverse,
            "agree": (forward.choice, reverse.choice) in agree,
        }

    return _run_batch(pairs, worker, concurrency)


def aggregate_micqs_votes(results: dict) -> dict:
    """Tally a batch: image1 votes + image2 votes + failures == pairs."""
    votes = {"image1": 0, "image2": 0, "failures": 0}
    for outcome in results.values():
        if isinstance(outcome, MICQSResult):
            votes[outcome.choice] += 1
        elif isinstance(outcome, dict) and isinstance(outcome.get("forward"), MICQSResult):
            votes[outcome["forward"].choice] += 1
        else:
            votes["failures"] += 1
    return votes


def _midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged (mid-ranks)."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.shape[0], dtype=np.float64)
    sorted_x = x[order]
    i = 0
    n = x.shape[0]
    while i < n:
        j = i
        while j < n and sorted_x[j] == sorted_x[i]:
            j += 1
        ranks[order[i:j]] = (i + j - 1) / 2.0 + 1.0
        i = j
    return ranks


def plcc(x, y) -> float:
    """Pearson linear correlation coefficient."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"score lists differ: {x.shape} vs {y.shape}")
    if x.shape[0] < 2:
        raise LengthMismatch("need at least two paired scores")
    cx = x - x.mean()
    cy = y - y.mean()
    denom = np.sqrt(np.dot(cx, cx) * np.dot(cy, cy))
    if denom == 0.0:
        raise ConstantInput("correlation undefined for constant input")
    return float(np.clip(np.dot(cx, cy) / denom, -1.0, 1.0))


def srcc(x, y) -> float:
    """Spearman rank correlation: Pearson correlation of mid-ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"score lists differ: {x.shape} vs {y.shape}")
    return plcc(_midranks(x), _midranks(y))


def read_score_file(path) -> dict:
    """Parse ``id,score`` lines into a dict."""
    scores = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        sid, _, value = line.partition(",")
        scores[sid.strip()] = float(value)
    return scores


def metric_accuracy(machine_path, human_path) -> dict:
    """Join machine and human score files on id; return both coefficients."""
    machine = read_score_file(machine_path)
    human = read_score_file(human_path)
    if set(machine) != set(human):
        only_m = sorted(set(machine) - set(human))[:5]
        only_h = sorted(set(human) - set(machine))[:5]
        raise IdMismatch(
            f"id sets differ; machine-only {only_m}, human-only {only_h}"
        )
    ids = sorted(machine)
    x = np.array([machine[i] for i in ids])
    y = np.array([human[i] for i in ids])
    return {"srcc": srcc(x, y), "plcc": plcc(x, y), "n": len(ids)}

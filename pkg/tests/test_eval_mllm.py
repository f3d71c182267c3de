import threading
import time

import numpy as np
import pytest

from stitchforge.errors import (
    AuthError,
    ConstantInput,
    ExhaustedRetries,
    IdMismatch,
    LengthMismatch,
    TransportError,
    Unparseable,
)
from stitchforge.eval_mllm import (
    ChatVisionClient,
    EvaluatorEndpoint,
    aggregate_micqs_votes,
    build_micqs_prompt,
    build_siqs_prompt,
    evaluate_micqs_batch,
    evaluate_siqs_batch,
    metric_accuracy,
    parse_micqs_response,
    parse_siqs_response,
    plcc,
    srcc,
)

# Canned single-image evaluation in the documented response shape.
SIQS_CANNED = """\
Reason
- **Seam** The image shows slightly visible boundaries, particularly \
noticeable in the sky and along the edges of the buildings. (**1 points**).
- **Brightness transition** The brightness transition in the image is \
relatively smooth. (**2 points**).
- **Distortion** There are no noticeable distortions in the image. The \
straight lines of the buildings and the street appear to be accurate. \
(**2 points**).
- **Clear** The buildings, palm trees, and streets are all distinguishable, \
and the details are visible. (**2 points**).
- **Abnormal content** The image contains some unnatural elements, such as \
the seams. (**1 points**).
Score
The overall impression is that the image is a stitched panorama with \
noticeable flaws. (**8 points**).
"""

MICQS_CANNED = """\
Reason
- **Seam** Image 2 has a smoother transition between the stitched sections \
compared to image 1, where the seam is more noticeable.
- **Brightness transition** Image 2 has a more consistent brightness level \
across the entire image.
- **Distortion** There are no noticeable distortions in the both images.
- **Clear** Image 2 appears clearer overall.
- **Abnormal content** Image 2 has less noticeable artifacts.
Conclusion
**Image 2 (right)** is better.
"""


class TestPrompts:
    def test_siqs_default_contents(self):
        text = build_siqs_prompt().text.lower()
        assert "seam, brightness transition, distortion" in text
        assert "each aspect 2 points" in text
        for anchor in ("score 2", "score 1", "score 0"):
            assert anchor in text

    def test_micqs_default_contents(self):
        text = build_micqs_prompt().text
        assert "image 1 (left) is better, or image 2 (right) is better" in text
        assert "both" not in text.lower()

    def test_override_files(self, tmp_path):
        override = tmp_path / "prompt.txt"
        override.write_text(
            "Rate seam, brightness transition, distortion, clear and abnormal "
            "content, each aspect 2 points. score 2 best, score 1 middling, "
            "score 0 worst."
        )
        assert build_siqs_prompt(override).text.startswith("Rate seam")
        bad = tmp_path / "bad.txt"
        bad.write_text("just vibes")
        with pytest.raises(ValueError):
            build_siqs_prompt(bad)


class TestParseSiqs:
    def test_canned_response(self):
        result = parse_siqs_response(SIQS_CANNED)
        assert result.aspect_scores == [1, 2, 2, 2, 1]
        assert result.total == 8
        assert not result.partial
        assert not result.total_discrepancy

    def test_maximum_rubric(self):
        text = (
            "Seam great (2 points). Brightness transition fine (2 points). "
            "Distortion none (2 points). Clear yes (2 points). "
            "Abnormal content none (2 points). Overall (10 points)."
        )
        result = parse_siqs_response(text)
        assert result.aspect_scores == [2, 2, 2, 2, 2]
        assert result.total == 10

    def test_garbage_unparseable(self):
        with pytest.raises(Unparseable):
            parse_siqs_response("the weather is nice today")

    def test_aspect_sum_wins_over_stated_total(self):
        text = (
            "Seam (1 points). Brightness transition (1 points). "
            "Distortion (1 points). Clear (1 points). "
            "Abnormal content (1 points). Score (9 points)."
        )
        result = parse_siqs_response(text)
        assert result.total == 5
        assert result.total_discrepancy

    def test_partial_parse(self):
        text = "Seam (1 points). Distortion (2 points). Score (7 points)."
        result = parse_siqs_response(text)
        assert result.partial
        assert result.total == 7
        assert result.aspect_scores[0] == 1
        assert result.aspect_scores[1] is None


class TestParseMicqs:
    def test_canned_response(self):
        result = parse_micqs_response(MICQS_CANNED)
        assert result.choice == "image2"

    def test_image1_choice(self):
        assert parse_micqs_response("Image 1 (left) is better.").choice == "image1"

    def test_no_verdict(self):
        with pytest.raises(Unparseable):
            parse_micqs_response("both are lovely")


def _endpoint(max_attempts=3):
    return EvaluatorEndpoint(
        base_url="http://mock.invalid/v1",
        model="mock-vl",
        max_attempts=max_attempts,
        backoff_ms=(0,),
    )


def _response(text):
    return {"choices": [{"message": {"content": text}}]}


class FlakyTransport:
    """Fails the first ``failures`` calls, then returns the canned body."""

    def __init__(self, failures, text=SIQS_CANNED, exc=TransportError("boom")):
        self.failures = failures
        self.text = text
        self.exc = exc
        self.calls = 0
        self.lock = threading.Lock()
        self.in_flight = 0
        self.max_in_flight = 0

    def __call__(self, payload):
        with self.lock:
            self.calls += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            call_index = self.calls
        try:
            time.sleep(0.01)
            if call_index <= self.failures:
                raise self.exc
            return _response(self.text)
        finally:
            with self.lock:
                self.in_flight -= 1


class TestClient:
    def test_first_try_success(self):
        transport = FlakyTransport(failures=0)
        client = ChatVisionClient(_endpoint(), transport=transport)
        result = client.siqs(np.zeros((8, 8, 3)))
        assert result.total == 8
        assert result.attempts == 1
        assert transport.calls == 1
        assert result.evaluator_model == "mock-vl"

    def test_retries_then_succeeds(self):
        for failures in (1, 2):
            transport = FlakyTransport(failures=failures)
            client = ChatVisionClient(_endpoint(max_attempts=3), transport=transport)
            result = client.siqs(np.zeros((4, 4, 3)))
            assert result.attempts == failures + 1
            assert transport.calls == failures + 1

    def test_exhausted_retries(self):
        transport = FlakyTransport(failures=99)
        client = ChatVisionClient(_endpoint(max_attempts=3), transport=transport)
        with pytest.raises(ExhaustedRetries):
            client.siqs(np.zeros((4, 4, 3)))
        assert transport.calls == 3

    def test_unparseable_retries_too(self):
        transport = FlakyTransport(failures=0, text="garbage with no scores")
        client = ChatVisionClient(_endpoint(max_attempts=2), transport=transport)
        with pytest.raises(ExhaustedRetries):
            client.siqs(np.zeros((4, 4, 3)))
        assert transport.calls == 2

    def test_auth_error_not_retried(self):
        transport = FlakyTransport(failures=99, exc=AuthError("denied"))
        client = ChatVisionClient(_endpoint(max_attempts=5), transport=transport)
        with pytest.raises(AuthError):
            client.siqs(np.zeros((4, 4, 3)))
        assert transport.calls == 1

    def test_payload_is_deterministic(self):
        client = ChatVisionClient(_endpoint(), transport=lambda p: _response(SIQS_CANNED))
        img = np.random.default_rng(0).random((6, 6, 3))
        assert client._payload("prompt", [img]) == client._payload("prompt", [img])

    def test_micqs_two_images(self):
        transport = FlakyTransport(failures=0, text=MICQS_CANNED)
        client = ChatVisionClient(_endpoint(), transport=transport)
        result = client.micqs(np.zeros((4, 4, 3)), np.ones((4, 4, 3)))
        assert result.choice == "image2"


class TestBatch:
    def test_concurrency_bound_respected(self):
        transport = FlakyTransport(failures=0)
        client = ChatVisionClient(_endpoint(), transport=transport)
        images = {f"s{i}": np.zeros((4, 4, 3)) for i in range(12)}
        results = evaluate_siqs_batch(images, client, concurrency=3)
        assert len(results) == 12
        assert transport.max_in_flight <= 3
        assert all(r.total == 8 for r in results.values())

    def test_votes_account_for_failures(self):
        calls = {"n": 0}

        def transport(payload):
            calls["n"] += 1
            if calls["n"] % 3 == 0:
                raise TransportError("every third call dies")
            return _response(MICQS_CANNED)

        client = ChatVisionClient(_endpoint(max_attempts=1), transport=transport)
        pairs = {
            f"p{i}": (np.zeros((4, 4, 3)), np.ones((4, 4, 3))) for i in range(9)
        }
        results = evaluate_micqs_batch(pairs, client, concurrency=1)
        votes = aggregate_micqs_votes(results)
        assert votes["image1"] + votes["image2"] + votes["failures"] == 9
        assert votes["failures"] == 3

    def test_swap_and_revote_agreement(self):
        def transport(payload):
            return _response(MICQS_CANNED)  # always "image 2 is better"

        client = ChatVisionClient(_endpoint(), transport=transport)
        results = evaluate_micqs_batch(
            {"p0": (np.zeros((4, 4, 3)), np.ones((4, 4, 3)))},
            client,
            swap_and_revote=True,
        )
        outcome = results["p0"]
        # a fixed "image2" answer flips meaning under swap: no agreement
        assert outcome["forward"].choice == "image2"
        assert outcome["reversed"].choice == "image2"
        assert outcome["agree"] is False


def rank_oracle(x):
    """Mid-ranks by definition: 1 + #smaller + (#equal - 1) / 2."""
    x = np.asarray(x, dtype=float)
    return np.array(
        [1.0 + np.sum(x < v) + (np.sum(x == v) - 1) / 2.0 for v in x]
    )


def pearson_oracle(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    cx, cy = x - x.mean(), y - y.mean()
    return float(np.sum(cx * cy) / np.sqrt(np.sum(cx**2) * np.sum(cy**2)))


class TestCorrelations:
    def test_identity_is_one(self, rng):
        x = rng.random(50)
        assert srcc(x, x) == pytest.approx(1.0, abs=1e-12)
        assert plcc(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_reversal_is_minus_one(self):
        x = np.arange(20.0)
        assert srcc(x, x[::-1]) == pytest.approx(-1.0, abs=1e-12)

    def test_ties_match_bruteforce_oracle(self, rng):
        for _ in range(10):
            x = rng.integers(0, 5, size=30).astype(float)
            y = rng.integers(0, 5, size=30).astype(float)
            if np.all(x == x[0]) or np.all(y == y[0]):
                continue
            expected = pearson_oracle(rank_oracle(x), rank_oracle(y))
            assert srcc(x, y) == pytest.approx(expected, abs=1e-9)

    def test_srcc_monotone_invariance(self, rng):
        x = rng.random(40)
        y = rng.random(40)
        base = srcc(x, y)
        assert srcc(np.exp(3 * x), y) == pytest.approx(base, abs=1e-12)
        assert srcc(x, y**3 + 5) == pytest.approx(base, abs=1e-12)

    def test_plcc_affine_invariance(self, rng):
        x = rng.random(40)
        y = rng.random(40)
        base = plcc(x, y)
        assert plcc(2.5 * x + 1, y) == pytest.approx(base, abs=1e-12)

    def test_constant_input_rejected(self):
        with pytest.raises(ConstantInput):
            plcc(np.ones(10), np.arange(10.0))
        with pytest.raises(ConstantInput):
            srcc(np.ones(10), np.arange(10.0))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            plcc(np.arange(5.0), np.arange(6.0))


class TestMetricAccuracy:
    def test_identical_files(self, tmp_path):
        lines = "".join(f"s{i},{i * 1.5}\n" for i in range(12))
        (tmp_path / "m.csv").write_text(lines)
        (tmp_path / "h.csv").write_text(lines)
        result = metric_accuracy(tmp_path / "m.csv", tmp_path / "h.csv")
        assert result["srcc"] == pytest.approx(1.0, abs=1e-12)
        assert result["plcc"] == pytest.approx(1.0, abs=1e-12)
        assert result["n"] == 12

    def test_anticorrelated(self, tmp_path):
        machine = "".join(f"s{i},{i}\n" for i in range(10))
        human = "".join(f"s{i},{10 - i}\n" for i in range(10))
        (tmp_path / "m.csv").write_text(machine)
        (tmp_path / "h.csv").write_text(human)
        result = metric_accuracy(tmp_path / "m.csv", tmp_path / "h.csv")
        assert result["srcc"] == pytest.approx(-1.0, abs=1e-12)
        assert result["plcc"] == pytest.approx(-1.0, abs=1e-12)

    def test_id_mismatch(self, tmp_path):
        (tmp_path / "m.csv").write_text("a,1\nb,2\n")
        (tmp_path / "h.csv").write_text("a,1\nc,2\n")
        with pytest.raises(IdMismatch):
            metric_accuracy(tmp_path / "m.csv", tmp_path / "h.csv")

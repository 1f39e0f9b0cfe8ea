"""Carbon-intensity sources: trace replay and a live HTTP client.

Intensity is piecewise constant over hourly (left-closed) steps; a live
provider refreshes at most once per interval and serves the cached value in
between. The HTTP transport is injectable so tests never touch the network.
"""

from __future__ import annotations

import json
import logging
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from datetime import datetime, timedelta

from .traces import CarbonSample, CarbonTrace, parse_timestamp

log = logging.getLogger(__name__)


class CarbonFetchError(RuntimeError):
    """Live fetch failed (network, HTTP status, or response schema)."""


class StaleCarbonError(RuntimeError):
    """No fresh value within the configured maximum staleness."""


@dataclass(frozen=True)
class CarbonProviderConfig:
    mode: str  # "trace" | "live"
    region: str = ""
    trace: CarbonTrace | None = None
    endpoint_url: str | None = None
    auth_token: str | None = None
    refresh: timedelta = timedelta(hours=1)
    max_staleness: timedelta = timedelta(hours=3)

    def __post_init__(self) -> None:
        if self.mode == "trace":
            if self.trace is None:
                raise ValueError("trace mode requires a carbon trace")
        elif self.mode == "live":
            if not self.endpoint_url or not self.auth_token:
                raise ValueError("live mode requires endpoint_url and auth_token")
        else:
            raise ValueError(f"unknown provider mode {self.mode!r}")


class TraceCarbonProvider:
    """Replays a carbon trace; every instant maps to the hour containing it."""

    def __init__(self, trace: CarbonTrace):
        self.trace = trace

    def intensity_at(self, t: datetime) -> float:
        trace = self.trace
        if t < trace.start or t >= trace.end:
            raise ValueError(
                f"{t.isoformat()} outside trace span "
                f"[{trace.start.isoformat()}, {trace.end.isoformat()})"
            )
        index = (t - trace.start) // trace.resolution
        return trace.samples[index].intensity


def _urllib_transport(url: str, headers: dict[str, str],
                      timeout: float = 10.0) -> tuple[int, bytes]:
    request = urllib.request.Request(url, headers=headers)
    try:
        with urllib.request.urlopen(request, timeout=timeout) as response:
            return response.status, response.read()
    except urllib.error.HTTPError as exc:
        return exc.code, exc.read()
    except OSError as exc:
        raise CarbonFetchError(f"request to {url} failed: {exc}") from exc


def parse_live_response(body: bytes) -> CarbonSample:
    """Validate a ``{"carbonIntensity": ..., "datetime": ...}`` payload."""
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise CarbonFetchError(f"response is not JSON: {exc}") from None
    if not isinstance(doc, dict) or "carbonIntensity" not in doc or "datetime" not in doc:
        raise CarbonFetchError(
            "response must contain 'carbonIntensity' and 'datetime'"
        )
    value = doc["carbonIntensity"]
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise CarbonFetchError(f"carbonIntensity must be a number, got {value!r}")
    if value < 0:
        raise CarbonFetchError(f"carbonIntensity must be >= 0, got {value}")
    timestamp = parse_timestamp(str(doc["datetime"]), 1)
    return CarbonSample(timestamp=timestamp, intensity=float(value))


class LiveCarbonProvider:
    """Polls a carbon-information HTTP endpoint, caching one value per interval.

    Thread-safe: fetches are serialized under a lock and the cache is
    last-writer-wins. After a failed refresh the cached value is served with a
    staleness warning until ``max_staleness`` elapses, then reads hard-fail.
    """

    def __init__(self, config: CarbonProviderConfig, transport=None, clock=None):
        if config.mode != "live":
            raise ValueError("LiveCarbonProvider requires a live-mode config")
        self.config = config
        self._transport = transport or _urllib_transport
        self._clock = clock or time.monotonic
        self._lock = threading.Lock()
        self._cached: CarbonSample | None = None
        self._fetched_at: float | None = None  # last successful fetch, clock units
        self._attempted_at: float | None = None

    def fetch_live(self) -> CarbonSample:
        """Fetch and validate one sample from the endpoint (no caching)."""
        status, body = self._transport(
            self.config.endpoint_url, {"auth-token": self.config.auth_token}
        )
        if not (200 <= status < 300):
            raise CarbonFetchError(f"endpoint returned HTTP {status}")
        return parse_live_response(body)

    def intensity_at(self, t: datetime | None = None) -> float:
        """Most recent intensity; refetches at most once per refresh interval.

        The instant argument is accepted for interface parity with the trace
        provider and ignored: a live feed only knows the present.
        """
        with self._lock:
            now = self._clock()
            refresh_s = self.config.refresh.total_seconds()
            max_stale_s = self.config.max_staleness.total_seconds()
            attempt_due = (
                self._attempted_at is None or now - self._attempted_at >= refresh_s
            )
            if attempt_due:
                self._attempted_at = now
                try:
                    self._cached = self.fetch_live()
                    self._fetched_at = now
                except CarbonFetchError as exc:
                    if self._cached is None:
                        raise
                    staleness = now - self._fetched_at
                    if staleness > max_stale_s:
                        raise StaleCarbonError(
                            f"carbon intensity stale for {staleness:.0f}s "
                            f"(max {max_stale_s:.0f}s)"
                        ) from exc
                    log.warning(
                        "carbon fetch failed (%s); serving value %.0fs old",
                        exc, staleness,
                    )
            elif self._cached is None:
                raise CarbonFetchError(
                    "no carbon intensity cached and the refresh interval has "
                    "not elapsed since the last failed fetch"
                )
            else:
                staleness = now - self._fetched_at
                if staleness > max_stale_s:
                    raise StaleCarbonError(
                        f"carbon intensity stale for {staleness:.0f}s "
                        f"(max {max_stale_s:.0f}s)"
                    )
            return self._cached.intensity


def make_provider(config: CarbonProviderConfig, transport=None, clock=None):
    if config.mode == "trace":
        return TraceCarbonProvider(config.trace)
    return LiveCarbonProvider(config, transport=transport, clock=clock)

"""JSON-over-HTTP plumbing for the sidecar scorer service.

Retry policy: `max_retries` attempts with exponential backoff starting at
0.5 s. Requests are idempotent (pure functions of the body), so retries are
safe. Client errors (4xx) are not retried; transport failures and 5xx are.
"""

from __future__ import annotations

import json
import time
import urllib.error
import urllib.parse
import urllib.request

from .errors import ScorerUnavailable

BACKOFF_START_S = 0.5


def check_absolute_url(url: str) -> str:
    parts = urllib.parse.urlparse(url)
    if not parts.scheme or not parts.netloc:
        raise ValueError(f"endpoint must be an absolute URL, got {url!r}")
    return url.rstrip("/")


def _error_detail(body: bytes) -> str:
    try:
        obj = json.loads(body.decode("utf-8"))
        err = obj.get("error", {})
        return f"{err.get('code', '?')}: {err.get('message', '')}"
    except Exception:
        return body[:200].decode("utf-8", errors="replace")


def post_json(url: str, payload: dict, *, timeout: float, max_retries: int) -> dict:
    """POST a JSON body, return the parsed JSON response."""
    data = json.dumps(payload).encode("utf-8")
    last_err: str = ""
    for attempt in range(max_retries):
        if attempt:
            time.sleep(BACKOFF_START_S * (2 ** (attempt - 1)))
        req = urllib.request.Request(
            url, data=data, headers={"Content-Type": "application/json"}, method="POST"
        )
        try:
            with urllib.request.urlopen(req, timeout=timeout) as resp:
                return json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as e:
            detail = _error_detail(e.read())
            last_err = f"HTTP {e.code} from {url}: {detail}"
            if 400 <= e.code < 500:
                raise ScorerUnavailable(last_err) from e
        except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as e:
            last_err = f"{url}: {e}"
        except json.JSONDecodeError as e:
            last_err = f"{url}: non-JSON response ({e})"
    raise ScorerUnavailable(f"gave up after {max_retries} attempts: {last_err}")

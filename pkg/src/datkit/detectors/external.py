"""Adapter for an external detector process.

The process speaks newline-delimited JSON (UTF-8) over its standard
streams, strictly request-response with one call in flight:

    -> {"op": "hello", "version": 1}
    <- {"ok": true, "name": "my-detector"}
    -> {"op": "detect", "frame": 17, "path": ".../frame_000017.pgm", "category": "L"}
    <- {"detections": [{"category": "L", "x": 100, "y": 50, "w": 40, "h": 40, "conf": 0.92}]}
    -> {"op": "bye"}            (process must exit 0)

Coordinates are pixels with the origin top-left; conf is in [0, 1].
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from pathlib import Path
from typing import List, Optional, Sequence

from ..dataio import FRAME_FILE_PATTERN
from ..geometry import BoundingBox, Category, Detection
from .replay import DetectorResult

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 10.0


class DetectorUnavailableError(RuntimeError):
    """The external process did not answer within the timeout."""


class ProtocolError(RuntimeError):
    """The external process sent a line that violates the protocol."""

    def __init__(self, message: str, line: str = ""):
        super().__init__(f"{message}: {line!r}" if line else message)
        self.line = line


class ChannelClosedError(RuntimeError):
    """The external process exited while a response was pending."""


class ExternalDetector:
    def __init__(
        self,
        command: Sequence[str],
        sequence_dir: Optional[str | Path] = None,
        timeout: float = DEFAULT_TIMEOUT,
    ):
        self._timeout = timeout
        self._dir = Path(sequence_dir) if sequence_dir is not None else None
        self._proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        self.name = self._handshake()

    def _read_loop(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def _send(self, message: dict) -> None:
        if self._proc.poll() is not None:
            raise ChannelClosedError(
                f"detector process exited with code {self._proc.returncode}"
            )
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ChannelClosedError(f"detector process closed its input: {exc}") from exc

    def _receive(self) -> dict:
        try:
            line = self._lines.get(timeout=self._timeout)
        except queue.Empty:
            raise DetectorUnavailableError(
                f"no response from detector within {self._timeout} s"
            ) from None
        if line is None:
            raise ChannelClosedError(
                f"detector process exited with code {self._proc.poll()}"
            )
        try:
            doc = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError("response is not valid JSON", line.rstrip("\n")) from None
        if not isinstance(doc, dict):
            raise ProtocolError("response is not a JSON object", line.rstrip("\n"))
        return doc

    def _handshake(self) -> str:
        self._send({"op": "hello", "version": PROTOCOL_VERSION})
        reply = self._receive()
        if reply.get("ok") is not True or "name" not in reply:
            raise ProtocolError("bad handshake reply", json.dumps(reply))
        return str(reply["name"])

    def detect(self, frame_index: int, category: Category, frame=None) -> DetectorResult:
        path = ""
        if self._dir is not None:
            path = str(self._dir / (FRAME_FILE_PATTERN % frame_index))
        self._send(
            {
                "op": "detect",
                "frame": frame_index,
                "path": path,
                "category": category.value,
            }
        )
        reply = self._receive()
        if "detections" not in reply or not isinstance(reply["detections"], list):
            raise ProtocolError("response missing 'detections' list", json.dumps(reply))
        detections: List[Detection] = []
        for entry in reply["detections"]:
            try:
                detections.append(
                    Detection(
                        box=BoundingBox(
                            float(entry["x"]),
                            float(entry["y"]),
                            float(entry["w"]),
                            float(entry["h"]),
                        ),
                        category=Category(entry["category"]),
                        confidence=float(entry["conf"]),
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ProtocolError(
                    f"bad detection entry ({exc})", json.dumps(entry)
                ) from None
        return DetectorResult(detections=tuple(detections), cost_units=1.0)

    def close(self) -> int:
        """Send the shutdown message and wait for a clean exit."""
        if self._proc.poll() is None:
            try:
                self._send({"op": "bye"})
            except ChannelClosedError:
                pass
        try:
            code = self._proc.wait(timeout=self._timeout)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            raise DetectorUnavailableError("detector did not exit after bye") from None
        if code != 0:
            raise ProtocolError(f"detector exited with nonzero status {code}")
        return code

    def __enter__(self) -> "ExternalDetector":
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if exc_type is None:
            self.close()
        else:
            self._proc.kill()

"""Minimal HTTP render service backing the browser viewer.

JSON over HTTP/1.1 via the stdlib threading server: GET /api/meta
describes the loaded splat set, POST /api/render returns a PNG rendered
at a client-supplied camera-to-world pose, and anything else is served
from the static viewer directory. Renders are capped by a semaphore so
concurrent requests queue instead of ballooning memory.
"""

from __future__ import annotations

import io
import json
import signal
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import numpy as np
from PIL import Image

from .gaussians import SplatSet
from .renderer import PinholeCamera, rasterize, render_panorama
from .sphere_geom import ErpGrid, Pose

_FALLBACK_PAGE = b"""<!doctype html>
<html><head><title>panosplat</title></head>
<body><h1>panosplat render service</h1>
<p>No viewer assets configured (pass --static-dir). API:</p>
<ul><li>GET /api/meta</li>
<li>POST /api/render {"c2w": [16 floats], "width": 512, "mode": "erp"}</li></ul>
</body></html>
"""

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".svg": "image/svg+xml",
}


class RequestError(ValueError):
    """Client error carrying an HTTP status."""

    def __init__(self, message: str, status: int = 400):
        super().__init__(message)
        self.status = status


@dataclass
class RenderService:
    splats: SplatSet
    near: float
    far: float
    suggested_pose: Pose
    workers: int = 2
    supersample: int = 2
    _gate: threading.Semaphore = field(init=False)

    def __post_init__(self):
        self._gate = threading.Semaphore(max(1, self.workers))

    def meta(self) -> dict:
        return {
            "splat_count": len(self.splats),
            "near": self.near,
            "far": self.far,
            "suggested_pose": [float(x) for x in self.suggested_pose.to_matrix().reshape(-1)],
        }

    def render_png(self, payload: dict) -> bytes:
        c2w = payload.get("c2w")
        if not isinstance(c2w, list) or len(c2w) != 16:
            raise RequestError("c2w must be a list of 16 numbers (row-major 4x4)")
        try:
            pose = Pose.from_matrix(np.asarray(c2w, dtype=np.float64).reshape(4, 4))
        except (TypeError, ValueError) as e:
            raise RequestError(f"invalid pose: {e}")
        width = payload.get("width", 512)
        if not isinstance(width, int) or not (64 <= width <= 2048) or width % 4:
            raise RequestError("width must be an integer in [64, 2048] divisible by 4")
        mode = payload.get("mode", "erp")

        with self._gate:
            if mode == "erp":
                grid = ErpGrid(width=width, height=width // 2)
                image, _ = render_panorama(
                    self.splats, pose, grid, supersample=self.supersample
                )
                arr = image.data
            elif mode == "pinhole":
                fov = float(payload.get("fov_deg", 90.0))
                if not (0.0 < fov < 180.0):
                    raise RequestError("fov_deg must be in (0, 180)")
                from .renderer import _face_pose

                cam = PinholeCamera.from_fov(fov, width, width, _face_pose(pose, 0))
                arr = np.clip(rasterize(self.splats, cam).color, 0.0, 1.0)
            else:
                raise RequestError("mode must be 'erp' or 'pinhole'")

        buf = io.BytesIO()
        Image.fromarray(np.round(arr * 255).astype(np.uint8), "RGB").save(buf, format="PNG")
        return buf.getvalue()


def _make_handler(service: RenderService, static_dir: Path | None):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _send(self, status: int, body: bytes, content_type: str):
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_json(self, status: int, obj) -> None:
            self._send(status, json.dumps(obj).encode(), "application/json")

        def do_GET(self):
            path = self.path.split("?", 1)[0]
            if path == "/api/meta":
                self._send_json(200, service.meta())
                return
            self._serve_static(path)

        def _serve_static(self, path: str) -> None:
            if static_dir is None:
                if path in ("/", "/index.html"):
                    self._send(200, _FALLBACK_PAGE, "text/html; charset=utf-8")
                else:
                    self._send_json(404, {"error": f"not found: {path}"})
                return
            rel = path.lstrip("/") or "index.html"
            target = (static_dir / rel).resolve()
            if not str(target).startswith(str(static_dir.resolve())) or not target.is_file():
                self._send_json(404, {"error": f"not found: {path}"})
                return
            ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            self._send(200, target.read_bytes(), ctype)

        def do_POST(self):
            path = self.path.split("?", 1)[0]
            if path != "/api/render":
                self._send_json(404, {"error": f"not found: {path}"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length) or b"{}")
                if not isinstance(payload, dict):
                    raise RequestError("request body must be a JSON object")
                png = service.render_png(payload)
            except RequestError as e:
                self._send_json(e.status, {"error": str(e)})
                return
            except json.JSONDecodeError as e:
                self._send_json(400, {"error": f"bad JSON: {e}"})
                return
            except Exception as e:  # pragma: no cover - defensive
                self._send_json(500, {"error": f"render failed: {e}"})
                return
            self._send(200, png, "image/png")

    return Handler


def run_server(service: RenderService, host: str, port: int, static_dir=None) -> None:
    """Serve until SIGINT/SIGTERM."""
    static = Path(static_dir) if static_dir is not None else None
    httpd = ThreadingHTTPServer((host, port), _make_handler(service, static))
    signal.signal(signal.SIGTERM, lambda *_: threading.Thread(target=httpd.shutdown).start())
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()

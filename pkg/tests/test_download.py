import os
import threading
from functools import partial
from http.server import SimpleHTTPRequestHandler, ThreadingHTTPServer

import pytest
import requests

from smokeynet.download import (
    CHECKSUM_FILE,
    fetch,
    list_links,
    mirror,
    read_checksums,
    sha256_file,
    verify_checksums,
)


class RangeHandler(SimpleHTTPRequestHandler):
    """Static file server with single-range ``bytes=N-`` support."""

    requests_seen: list = []

    def log_message(self, *args):
        pass

    def do_GET(self):
        self.requests_seen.append((self.path, self.headers.get("Range")))
        rng = self.headers.get("Range")
        path = self.translate_path(self.path)
        if not rng or not os.path.isfile(path):
            return super().do_GET()
        start = int(rng.split("=")[1].rstrip("-"))
        data = open(path, "rb").read()
        if start >= len(data):
            self.send_response(416)
            self.send_header("Content-Length", "0")
            self.end_headers()
            return
        body = data[start:]
        self.send_response(206)
        self.send_header("Content-Range", f"bytes {start}-{len(data) - 1}/{len(data)}")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


@pytest.fixture
def server(tmp_path):
    site = tmp_path / "site"
    for fire, files in {"fireA": ["1_+00060.jpg", "2_-00060.jpg", "annotations.json", "readme.txt"],
                        "fireB": ["3_+00000.png"]}.items():
        (site / fire).mkdir(parents=True)
        for i, name in enumerate(files):
            (site / fire / name).write_bytes(f"{fire}/{name}".encode() * (100 + i))
    RangeHandler.requests_seen = []
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), partial(RangeHandler, directory=str(site)))
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{httpd.server_address[1]}/", site
    httpd.shutdown()
    httpd.server_close()


def test_list_links_direct_children(server):
    url, _ = server
    with requests.Session() as s:
        assert list_links(url, s) == [url + "fireA/", url + "fireB/"]
        files = list_links(url + "fireA/", s)
    assert url + "fireA/readme.txt" in files and len(files) == 4


def test_mirror_copies_images_and_annotations(server, tmp_path):
    url, site = server
    out = tmp_path / "mirror"
    result = mirror(url, out)
    assert (result.fetched, result.skipped, result.failed) == (4, 0, 0)
    assert not (out / "fireA" / "readme.txt").exists()
    assert (out / "fireA" / "annotations.json").read_bytes() == (site / "fireA" / "annotations.json").read_bytes()
    sums = read_checksums(out)
    assert sums["fireB/3_+00000.png"] == sha256_file(site / "fireB" / "3_+00000.png")
    assert verify_checksums(out) == []
    again = mirror(url, out)
    assert (again.fetched, again.skipped) == (0, 4)


def test_mirror_selected_fires(server, tmp_path):
    url, _ = server
    result = mirror(url, tmp_path / "m", fires=["fireB"])
    assert result.fetched == 1 and not (tmp_path / "m" / "fireA").exists()


def test_fetch_resumes_partial_download(server, tmp_path):
    url, site = server
    full = (site / "fireA" / "1_+00060.jpg").read_bytes()
    dest = tmp_path / "x.jpg"
    (tmp_path / "x.jpg.part").write_bytes(full[:123])
    with requests.Session() as s:
        assert fetch(url + "fireA/1_+00060.jpg", dest, s)
    assert dest.read_bytes() == full
    assert RangeHandler.requests_seen[-1][1] == "bytes=123-"


def test_fetch_complete_part_file(server, tmp_path):
    url, site = server
    full = (site / "fireB" / "3_+00000.png").read_bytes()
    dest = tmp_path / "y.png"
    (tmp_path / "y.png.part").write_bytes(full)
    with requests.Session() as s:
        assert fetch(url + "fireB/3_+00000.png", dest, s)
        assert dest.read_bytes() == full
        assert not fetch(url + "fireB/3_+00000.png", dest, s)


def test_verify_detects_corruption(server, tmp_path):
    url, _ = server
    out = tmp_path / "m"
    mirror(url, out)
    (out / "fireA" / "2_-00060.jpg").write_bytes(b"corrupt")
    assert verify_checksums(out) == ["fireA/2_-00060.jpg"]
    assert (out / CHECKSUM_FILE).exists()


def test_missing_file_counts_as_failure(server, tmp_path):
    url, site = server
    (site / "fireB" / "3_+00000.png").unlink()
    (site / "fireB" / "4_+00060.png").symlink_to(site / "nowhere.png")
    result = mirror(url, tmp_path / "m", fires=["fireB"])
    assert result.failed == 1

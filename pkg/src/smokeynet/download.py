"""Mirror an HTTP directory-listing archive into ``<root>/<fire_id>/<files>``.

The server is expected to expose one listing page per fire directory, as
Apache/nginx autoindex pages do.  Downloads resume from a ``.part`` file
with a Range request, and every finished file's SHA-256 is appended to
``<root>/checksums.tsv``.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass
from html.parser import HTMLParser
from pathlib import Path
from urllib.parse import unquote, urljoin

import requests

from smokeynet.data import ANNOTATION_FILE, IMAGE_SUFFIXES

logger = logging.getLogger(__name__)

CHECKSUM_FILE = "checksums.tsv"
CHUNK = 1 << 16


class _Links(HTMLParser):
    def __init__(self):
        super().__init__()
        self.links: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag == "a":
            href = dict(attrs).get("href")
            if href:
                self.links.append(href)


def list_links(url: str, session: requests.Session, timeout: float = 30.0) -> list[str]:
    """Absolute URLs of the entries directly below ``url``."""
    resp = session.get(url, timeout=timeout)
    resp.raise_for_status()
    parser = _Links()
    parser.feed(resp.text)
    base = url if url.endswith("/") else url + "/"
    out = []
    for href in parser.links:
        if href.startswith(("?", "#")):  # column-sort links
            continue
        full = urljoin(base, href)
        rest = full[len(base):] if full.startswith(base) else ""
        # direct children only: skips parent links and anything off-site
        if rest and "/" not in rest.rstrip("/"):
            out.append(full)
    return sorted(set(out))


def _wanted(name: str) -> bool:
    return name == ANNOTATION_FILE or Path(name).suffix.lower() in IMAGE_SUFFIXES


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(CHUNK), b""):
            h.update(chunk)
    return h.hexdigest()


def fetch(url: str, dest: Path, session: requests.Session, timeout: float = 60.0) -> bool:
    """Download ``url`` to ``dest``, resuming a partial ``dest.part``.

    Returns False when ``dest`` already exists (nothing fetched).
    """
    if dest.exists():
        return False
    dest.parent.mkdir(parents=True, exist_ok=True)
    part = dest.with_name(dest.name + ".part")
    have = part.stat().st_size if part.exists() else 0
    headers = {"Range": f"bytes={have}-"} if have else {}
    with session.get(url, headers=headers, stream=True, timeout=timeout) as resp:
        if resp.status_code == 416:  # partial file already complete
            part.rename(dest)
            return True
        resp.raise_for_status()
        mode = "ab" if have and resp.status_code == 206 else "wb"
        if have and mode == "wb":
            logger.info("%s: server ignored Range; restarting", url)
        with open(part, mode) as fh:
            for chunk in resp.iter_content(CHUNK):
                fh.write(chunk)
    part.rename(dest)
    return True


@dataclass
class MirrorResult:
    fetched: int = 0
    skipped: int = 0
    failed: int = 0


def mirror(base_url: str, root: str | Path, fires: list[str] | None = None,
           session: requests.Session | None = None) -> MirrorResult:
    """Copy every fire directory under ``base_url`` (or only ``fires``) into ``root``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    session = session or requests.Session()
    base = base_url if base_url.endswith("/") else base_url + "/"
    result = MirrorResult()
    fire_urls = [u for u in list_links(base, session) if u.endswith("/")]
    wanted = set(fires) if fires is not None else None
    with open(root / CHECKSUM_FILE, "a", newline="") as log:
        writer = csv.writer(log, delimiter="\t", lineterminator="\n")
        for fire_url in fire_urls:
            fire_id = unquote(fire_url[len(base):].strip("/"))
            if wanted is not None and fire_id not in wanted:
                continue
            for file_url in list_links(fire_url, session):
                name = unquote(file_url.rsplit("/", 1)[-1])
                if file_url.endswith("/") or not _wanted(name):
                    continue
                dest = root / fire_id / name
                try:
                    if fetch(file_url, dest, session):
                        writer.writerow((f"{fire_id}/{name}", sha256_file(dest)))
                        log.flush()
                        result.fetched += 1
                    else:
                        result.skipped += 1
                except (requests.RequestException, OSError) as exc:
                    logger.warning("failed to fetch %s: %s", file_url, exc)
                    result.failed += 1
    return result


def read_checksums(root: str | Path) -> dict[str, str]:
    """Latest recorded digest per relative path."""
    path = Path(root) / CHECKSUM_FILE
    if not path.exists():
        return {}
    with open(path, newline="") as fh:
        return {row[0]: row[1] for row in csv.reader(fh, delimiter="\t") if len(row) == 2}


def verify_checksums(root: str | Path) -> list[str]:
    """Relative paths whose current digest differs from the logged one."""
    root = Path(root)
    return [rel for rel, digest in read_checksums(root).items()
            if not (root / rel).exists() or sha256_file(root / rel) != digest]

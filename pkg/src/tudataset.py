#!/usr/bin/env python3
"""
TUDataset flat-file corpus reader, writer and HTTP fetcher.

A corpus `NAME` lives in one directory:
  NAME_A.txt               "i, j" per line, 1-based node ids (edge list)
  NAME_graph_indicator.txt one 1-based graph id per node
  NAME_graph_labels.txt    one label per graph
  NAME_node_labels.txt     optional, one label per node
  NAME_node_attributes.txt optional, comma-separated reals per node
"""

from __future__ import annotations

import io
import logging
import os
import shutil
import tempfile
import time
import zipfile
from dataclasses import dataclass
from typing import Any

import numpy as np
import requests
from requests.adapters import HTTPAdapter
from urllib3.util.retry import Retry

from .graph import Dataset, Graph

logger = logging.getLogger(__name__)

# Module-level constants
DEFAULT_BASE_URL = "https://www.chrsmrrs.com/graphkerneldatasets"
DEFAULT_USER_AGENT = "graphssl/1.0"
REQUEST_TIMEOUT = (30, 120)  # (connect_timeout, read_timeout)
LOCK_TIMEOUT = 600
LOCK_POLL_INTERVAL = 0.5

MANDATORY_SUFFIXES = ("_A.txt", "_graph_indicator.txt", "_graph_labels.txt")
OPTIONAL_SUFFIXES = ("_node_labels.txt", "_node_attributes.txt")


class TuFormatError(ValueError):
    """A corpus file violates the flat-file format."""


class DatasetNotFoundError(FileNotFoundError):
    """A mandatory corpus file is missing."""


class FetchError(RuntimeError):
    """Downloading or unpacking a corpus failed."""


@dataclass(frozen=True)
class TuSourceConfig:
    root_dir: str
    dataset_name: str
    base_url: str = DEFAULT_BASE_URL

    def __post_init__(self):
        name = self.dataset_name.strip()
        if not name or any(c in name for c in "/\\ ") or name.startswith("."):
            msg = f"invalid dataset name {self.dataset_name!r}"
            raise ValueError(msg)

    @property
    def dataset_dir(self) -> str:
        return os.path.join(self.root_dir, self.dataset_name)

    def path(self, suffix: str) -> str:
        return os.path.join(self.dataset_dir, f"{self.dataset_name}{suffix}")

    @property
    def archive_url(self) -> str:
        return f"{self.base_url.rstrip('/')}/{self.dataset_name}.zip"


def _read_rows(path: str) -> list[list[str]]:
    """Comma-separated rows; whitespace around commas and trailing blank lines are ignored."""
    with open(path, encoding="utf-8") as handle:
        lines = [line.strip() for line in handle]
    while lines and not lines[-1]:
        lines.pop()
    rows = []
    for index, line in enumerate(lines, start=1):
        if not line:
            msg = f"{os.path.basename(path)} line {index}: blank line inside data"
            raise TuFormatError(msg)
        rows.append([field.strip() for field in line.split(",")])
    return rows


def _read_ints(path: str) -> np.ndarray:
    values = []
    for index, row in enumerate(_read_rows(path), start=1):
        if len(row) != 1:
            msg = f"{os.path.basename(path)} line {index}: expected one value, got {len(row)}"
            raise TuFormatError(msg)
        try:
            values.append(int(float(row[0])))
        except ValueError:
            msg = f"{os.path.basename(path)} line {index}: not an integer: {row[0]!r}"
            raise TuFormatError(msg) from None
    return np.array(values, dtype=np.int64)


def _read_edges(path: str, num_nodes: int) -> np.ndarray:
    edges = []
    for index, row in enumerate(_read_rows(path), start=1):
        if len(row) != 2:
            msg = f"{os.path.basename(path)} line {index}: expected 'i, j', got {len(row)} fields"
            raise TuFormatError(msg)
        try:
            u, v = int(row[0]), int(row[1])
        except ValueError:
            msg = f"{os.path.basename(path)} line {index}: node ids must be integers"
            raise TuFormatError(msg) from None
        if not (1 <= u <= num_nodes and 1 <= v <= num_nodes):
            msg = f"{os.path.basename(path)} line {index}: node id out of range [1, {num_nodes}]: ({u}, {v})"
            raise TuFormatError(msg)
        edges.append((u - 1, v - 1))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def _read_attributes(path: str, num_nodes: int) -> np.ndarray:
    rows = _read_rows(path)
    if len(rows) != num_nodes:
        msg = f"{os.path.basename(path)} has {len(rows)} rows for {num_nodes} nodes"
        raise TuFormatError(msg)
    width = len(rows[0]) if rows else 0
    values = []
    for index, row in enumerate(rows, start=1):
        if len(row) != width:
            msg = f"{os.path.basename(path)} line {index}: ragged attribute row ({len(row)} values, expected {width})"
            raise TuFormatError(msg)
        try:
            values.append([float(v) for v in row])
        except ValueError:
            msg = f"{os.path.basename(path)} line {index}: attributes must be real numbers"
            raise TuFormatError(msg) from None
    return np.array(values, dtype=np.float64).reshape(num_nodes, width)


def _one_hot(indices: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((len(indices), width))
    out[np.arange(len(indices)), indices] = 1.0
    return out


def load_tudataset(cfg: TuSourceConfig) -> Dataset:
    """
    Parse a TU corpus directory into a Dataset.

    Node features: one-hot node labels (+ node attributes when present); with
    neither file, a one-hot of node degree up to the corpus maximum degree.
    Graph labels are remapped to 0..C-1 by ascending original value.
    """
    for suffix in MANDATORY_SUFFIXES:
        if not os.path.isfile(cfg.path(suffix)):
            msg = (
                f"missing {os.path.basename(cfg.path(suffix))} under {cfg.dataset_dir}; "
                f"run `fetch --dataset {cfg.dataset_name}` first"
            )
            raise DatasetNotFoundError(msg)

    indicator = _read_ints(cfg.path("_graph_indicator.txt"))
    raw_graph_labels = _read_ints(cfg.path("_graph_labels.txt"))
    num_nodes = len(indicator)
    num_graphs = len(raw_graph_labels)

    if num_nodes == 0 or num_graphs == 0:
        msg = f"{cfg.dataset_name}: corpus has no nodes or no graphs"
        raise TuFormatError(msg)
    if np.any(np.diff(indicator) < 0):
        line = int(np.flatnonzero(np.diff(indicator) < 0)[0]) + 2
        msg = f"{cfg.dataset_name}_graph_indicator.txt line {line}: graph ids are not non-decreasing"
        raise TuFormatError(msg)
    if indicator[0] < 1 or indicator[-1] > num_graphs:
        msg = f"{cfg.dataset_name}_graph_indicator.txt: graph ids outside [1, {num_graphs}]"
        raise TuFormatError(msg)
    counts = np.bincount(indicator - 1, minlength=num_graphs)
    if np.any(counts == 0):
        msg = f"{cfg.dataset_name}: graph {int(np.flatnonzero(counts == 0)[0]) + 1} has no nodes"
        raise TuFormatError(msg)

    edges = _read_edges(cfg.path("_A.txt"), num_nodes)
    graph_of_node = indicator - 1
    if len(edges) and np.any(graph_of_node[edges[:, 0]] != graph_of_node[edges[:, 1]]):
        msg = f"{cfg.dataset_name}_A.txt: an edge connects nodes of different graphs"
        raise TuFormatError(msg)

    self_loops = edges[:, 0] == edges[:, 1] if len(edges) else np.zeros(0, dtype=bool)
    if np.any(self_loops):
        logger.warning(f"{cfg.dataset_name}: dropping {int(self_loops.sum())} self-loop(s)")
        edges = edges[~self_loops]
    undirected = np.unique(np.sort(edges, axis=1), axis=0) if len(edges) else edges

    features, node_label_dim, source = _node_features(cfg, num_nodes, undirected)

    classes = np.unique(raw_graph_labels)
    dense_labels = np.searchsorted(classes, raw_graph_labels)

    offsets = np.concatenate([[0], np.cumsum(counts)])
    edge_graph = graph_of_node[undirected[:, 0]] if len(undirected) else np.zeros(0, dtype=np.int64)
    graphs = []
    for g in range(num_graphs):
        start, end = offsets[g], offsets[g + 1]
        local_edges = undirected[edge_graph == g] - start
        graphs.append(Graph(int(end - start), local_edges, features[start:end], int(dense_labels[g])))

    dataset = Dataset(
        graphs=tuple(graphs),
        num_classes=len(classes),
        feature_dim=features.shape[1],
        name=cfg.dataset_name,
        node_label_dim=node_label_dim,
        feature_source=source,
    )
    logger.info(
        f"Loaded {cfg.dataset_name}: {num_graphs} graphs, {num_nodes} nodes, {len(undirected)} edges, "
        f"{dataset.num_classes} classes, feature_dim {dataset.feature_dim} ({source})"
    )
    return dataset


def _node_features(cfg: TuSourceConfig, num_nodes: int, undirected: np.ndarray) -> tuple[np.ndarray, int, str]:
    blocks = []
    sources = []
    node_label_dim = 0
    if os.path.isfile(cfg.path("_node_labels.txt")):
        node_labels = _read_ints(cfg.path("_node_labels.txt"))
        if len(node_labels) != num_nodes:
            msg = f"{cfg.dataset_name}_node_labels.txt has {len(node_labels)} rows for {num_nodes} nodes"
            raise TuFormatError(msg)
        values = np.unique(node_labels)
        node_label_dim = len(values)
        blocks.append(_one_hot(np.searchsorted(values, node_labels), node_label_dim))
        sources.append("labels")
    if os.path.isfile(cfg.path("_node_attributes.txt")):
        blocks.append(_read_attributes(cfg.path("_node_attributes.txt"), num_nodes))
        sources.append("attributes")
    if blocks:
        return np.concatenate(blocks, axis=1), node_label_dim, "+".join(sources)

    degree = np.bincount(undirected.reshape(-1), minlength=num_nodes) if len(undirected) else np.zeros(num_nodes, int)
    return _one_hot(degree, int(degree.max()) + 1), 0, "degree"


def write_tudataset(dataset: Dataset, root_dir: str) -> TuSourceConfig:
    """Serialize `dataset` in the flat-file format under root_dir/name (inverse of load_tudataset)."""
    cfg = TuSourceConfig(root_dir=root_dir, dataset_name=dataset.name)
    os.makedirs(cfg.dataset_dir, exist_ok=True)

    edge_lines, indicator_lines, label_lines, attribute_lines = [], [], [], []
    offset = 0
    for graph_id, g in enumerate(dataset.graphs, start=1):
        for u, v in g.edges:
            edge_lines.append(f"{u + offset + 1}, {v + offset + 1}")
            edge_lines.append(f"{v + offset + 1}, {u + offset + 1}")
        indicator_lines.extend([str(graph_id)] * g.num_nodes)
        offset += g.num_nodes

    features = np.concatenate([g.node_features for g in dataset.graphs])
    if "labels" in dataset.feature_source:
        label_lines = [str(int(i)) for i in features[:, : dataset.node_label_dim].argmax(axis=1)]
    if "attributes" in dataset.feature_source:
        attributes = features[:, dataset.node_label_dim :]
        attribute_lines = [", ".join(repr(float(v)) for v in row) for row in attributes]

    _write_lines(cfg.path("_A.txt"), edge_lines)
    _write_lines(cfg.path("_graph_indicator.txt"), indicator_lines)
    _write_lines(cfg.path("_graph_labels.txt"), [str(g.graph_label) for g in dataset.graphs])
    if label_lines:
        _write_lines(cfg.path("_node_labels.txt"), label_lines)
    if attribute_lines:
        _write_lines(cfg.path("_node_attributes.txt"), attribute_lines)
    return cfg


def _write_lines(path: str, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.writelines(f"{line}\n" for line in lines)


def is_unpacked(cfg: TuSourceConfig) -> bool:
    return all(os.path.isfile(cfg.path(suffix)) for suffix in MANDATORY_SUFFIXES)


class TuDatasetClient:
    """Downloads TU corpus archives over HTTP."""

    def __init__(self, base_url: str = DEFAULT_BASE_URL, session: requests.Session | None = None, retries: int = 3):
        """
        Initialize the client.

        Args:
            base_url: Archive base URL; `{base_url}/{name}.zip` is fetched
            session: Optional preconfigured session (tests inject mocks)
            retries: Retries for connection errors and 5xx responses
        """
        self.base_url = base_url
        self.session = session or requests.Session()
        if session is None:
            retry = Retry(total=retries, backoff_factor=1.0, status_forcelist=(500, 502, 503, 504))
            self.session.mount("https://", HTTPAdapter(max_retries=retry))
            self.session.mount("http://", HTTPAdapter(max_retries=retry))
        self.session.headers.update({"User-Agent": DEFAULT_USER_AGENT})

    def download(self, url: str) -> bytes:
        """GET `url` and return the body; raises FetchError naming the URL on failure."""
        logger.debug(f"TU archive request: GET {url}")
        start_time = time.time()
        try:
            response = self.session.get(url, timeout=REQUEST_TIMEOUT)
            duration = time.time() - start_time
            status_code = getattr(response, "status_code", "<?>")
            logger.info(f"TU archive response: {status_code} (Duration: {duration:.2f}s)")
            response.raise_for_status()
        except requests.exceptions.RequestException as e:
            msg = f"failed to download {url}: {type(e).__name__}: {e}"
            raise FetchError(msg) from e
        return response.content

    def fetch(self, cfg: TuSourceConfig) -> str:
        """
        Download and unpack a corpus into root_dir/name; idempotent.

        Returns:
            The dataset directory
        """
        if is_unpacked(cfg):
            logger.info(f"{cfg.dataset_name} already present at {cfg.dataset_dir}")
            return cfg.dataset_dir

        os.makedirs(cfg.root_dir, exist_ok=True)
        with DownloadLock(os.path.join(cfg.root_dir, f".{cfg.dataset_name}.lock")):
            # Another process may have finished while we waited for the lock
            if is_unpacked(cfg):
                return cfg.dataset_dir
            payload = self.download(cfg.archive_url)
            _unpack(payload, cfg)

        logger.info(f"Fetched {cfg.dataset_name} into {cfg.dataset_dir}")
        return cfg.dataset_dir


def _unpack(payload: bytes, cfg: TuSourceConfig) -> None:
    """
    Extract the corpus files of `payload` into `cfg.dataset_dir`.

    Members are written to a scratch directory under root_dir first and moved
    into place only once all of them are complete; mandatory files move last,
    so `is_unpacked` never sees a partial corpus.
    """
    try:
        archive = zipfile.ZipFile(io.BytesIO(payload))
    except zipfile.BadZipFile as e:
        msg = f"malformed archive from {cfg.archive_url}: {e}"
        raise FetchError(msg) from e

    with archive:
        members: dict[str, Any] = {}
        wanted = [cfg.dataset_name + s for s in MANDATORY_SUFFIXES + OPTIONAL_SUFFIXES]
        for info in archive.infolist():
            base = os.path.basename(info.filename)
            if base in wanted and not info.is_dir():
                members[base] = info
        missing = [cfg.dataset_name + s for s in MANDATORY_SUFFIXES if cfg.dataset_name + s not in members]
        if missing:
            msg = f"malformed archive from {cfg.archive_url}: missing {', '.join(missing)}"
            raise FetchError(msg)

        scratch = tempfile.mkdtemp(prefix=f".{cfg.dataset_name}.", dir=cfg.root_dir)
        try:
            for base, info in members.items():
                with archive.open(info) as source, open(os.path.join(scratch, base), "wb") as target:
                    shutil.copyfileobj(source, target)
            _move_into_place(scratch, cfg, list(members))
        except (OSError, zipfile.BadZipFile) as e:
            msg = f"failed to unpack {cfg.archive_url}: {type(e).__name__}: {e}"
            raise FetchError(msg) from e
        finally:
            shutil.rmtree(scratch, ignore_errors=True)


def _move_into_place(scratch: str, cfg: TuSourceConfig, names: list[str]) -> None:
    if not os.path.isdir(cfg.dataset_dir):
        os.replace(scratch, cfg.dataset_dir)
        return
    mandatory = {cfg.dataset_name + s for s in MANDATORY_SUFFIXES}
    # Optional files first: once the last mandatory file lands the corpus counts as present
    for base in sorted(names, key=lambda name: name in mandatory):
        os.replace(os.path.join(scratch, base), os.path.join(cfg.dataset_dir, base))


class DownloadLock:
    """
    Exclusive lock file guarding one corpus download across processes.

    The file holds the owner's PID. A lock whose owner no longer runs, or
    whose file is older than `stale_after` seconds, is stale and gets broken.
    """

    def __init__(
        self,
        path: str,
        timeout: float = LOCK_TIMEOUT,
        poll_interval: float = LOCK_POLL_INTERVAL,
        stale_after: float = LOCK_TIMEOUT,
    ):
        self.path = path
        self.timeout = timeout
        self.stale_after = stale_after
        self.poll_interval = poll_interval
        self._fd: int | None = None

    def __enter__(self):
        start_time = time.time()
        while True:
            try:
                self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
                os.write(self._fd, str(os.getpid()).encode())
                return self
            except FileExistsError:
                if self._break_if_stale():
                    continue
                if time.time() - start_time >= self.timeout:
                    msg = f"timed out after {self.timeout}s waiting for lock {self.path}"
                    raise FetchError(msg) from None
                logger.debug(f"Waiting for download lock {self.path}")
                time.sleep(self.poll_interval)

    def _break_if_stale(self) -> bool:
        try:
            age = time.time() - os.path.getmtime(self.path)
            with open(self.path, encoding="utf-8") as handle:
                owner = handle.read().strip()
        except FileNotFoundError:
            # Released between our open attempt and the check
            return True

        stale = age > self.stale_after or (owner.isdigit() and not _process_alive(int(owner)))
        if not stale:
            return False
        logger.warning(f"Breaking stale download lock {self.path} (owner {owner or '?'}, age {age:.0f}s)")
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass
        return True

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self._fd is not None:
            os.close(self._fd)
            self._fd = None
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass


def _process_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


def fetch_dataset(cfg: TuSourceConfig, client: TuDatasetClient | None = None) -> str:
    """Download and unpack `cfg.dataset_name` unless already present; returns the dataset directory."""
    if is_unpacked(cfg):
        logger.info(f"{cfg.dataset_name} already present at {cfg.dataset_dir}")
        return cfg.dataset_dir
    return (client or TuDatasetClient(cfg.base_url)).fetch(cfg)

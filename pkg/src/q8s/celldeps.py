"""Dependency detection and container image specification for cell payloads.

Images are keyed by a content hash over (base image, requirements manifest)
so a rebuild happens only when the dependency set actually changes. The
detection is a line-oriented lexical scan of import statements; dynamic
imports (``__import__``, importlib) are not detected.
"""

from __future__ import annotations

import hashlib
import logging
import re
import shlex
import subprocess
import sys
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

NAME_HINT_RE = re.compile(r"^[a-z0-9-]{1,40}$")

# Pinned requirement per known root module; everything else falls back to
# the bare module name.
DEFAULT_MODULE_REQUIREMENTS: dict[str, str] = {
    "qiskit": "qiskit==1.0.0",
    "qiskit_aer": "qiskit-aer==0.13.3",
    "qiskit_ibm_runtime": "qiskit-ibm-runtime==0.20.0",
}

DEFAULT_BUILTIN_MODULES: frozenset[str] = frozenset(sys.stdlib_module_names)

_IMPORT_LINE_RE = re.compile(r"^\s*(import|from)\s+(.*)$")
_FROM_RE = re.compile(r"^\s*from\s+([A-Za-z_][\w.]*)\s+import\s+.+$")
_IMPORT_RE = re.compile(r"^\s*import\s+([A-Za-z_][\w.]*(?:\s+as\s+\w+)?(?:\s*,\s*[A-Za-z_][\w.]*(?:\s+as\s+\w+)?)*)\s*$")


class BuildError(Exception):
    """Image build failed; carries the builder's diagnostics."""


class RegistryError(Exception):
    """Image push failed."""


@dataclass(frozen=True)
class CellTask:
    """A payload to execute: source text, target device class, name hint."""

    source: str
    target: str = "cpu"
    name_hint: str = "cell"

    def __post_init__(self) -> None:
        if not self.source:
            raise ValueError("payload source must be non-empty")
        if self.target not in ("cpu", "gpu", "qpu"):
            raise ValueError(f"target must be cpu|gpu|qpu, got {self.target!r}")
        if not NAME_HINT_RE.match(self.name_hint):
            raise ValueError(f"name_hint must match [a-z0-9-]{{1,40}}: {self.name_hint!r}")


@dataclass(frozen=True)
class DependencySet:
    """Sorted, duplicate-free (module, pinned requirement) pairs."""

    entries: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        names = [m for m, _ in self.entries]
        if names != sorted(names):
            raise ValueError("entries must be sorted by module name")
        if len(set(names)) != len(names):
            raise ValueError("duplicate module names")

    @classmethod
    def from_pairs(cls, pairs: dict[str, str]) -> "DependencySet":
        return cls(tuple(sorted(pairs.items())))

    def requirements_text(self) -> str:
        return "".join(req + "\n" for _, req in self.entries)


@dataclass(frozen=True)
class ImageSpec:
    base_image: str
    requirements_text: str
    build_file_text: str
    content_hash: str


def detect_dependencies(
    source: str,
    mapping: dict[str, str] | None = None,
    builtin_modules: frozenset[str] | set[str] | None = None,
) -> DependencySet:
    """Scan import statements and resolve root modules to requirements.

    Builtin/stdlib modules are dropped; known modules map through the pin
    table; unknown ones keep their bare name. Lines that look like imports
    but do not parse are skipped with a warning, never fatally.
    """
    if mapping is None:
        mapping = DEFAULT_MODULE_REQUIREMENTS
    if builtin_modules is None:
        builtin_modules = DEFAULT_BUILTIN_MODULES

    roots: set[str] = set()
    for lineno, line in enumerate(source.splitlines(), start=1):
        if not _IMPORT_LINE_RE.match(line):
            continue
        m = _FROM_RE.match(line)
        if m is not None:
            roots.add(m.group(1).split(".")[0])
            continue
        m = _IMPORT_RE.match(line)
        if m is not None:
            for clause in m.group(1).split(","):
                roots.add(clause.strip().split()[0].split(".")[0])
            continue
        logger.warning("skipping unparseable import on line %d: %s", lineno, line.strip())

    pairs = {
        root: mapping.get(root, root)
        for root in roots
        if root not in builtin_modules
    }
    return DependencySet.from_pairs(pairs)


def content_hash(base_image: str, requirements_text: str) -> str:
    digest = hashlib.sha256()
    digest.update(base_image.encode("utf-8"))
    digest.update(b"\x00")
    digest.update(requirements_text.encode("utf-8"))
    return digest.hexdigest()


def render_image_spec(deps: DependencySet, base_image: str) -> ImageSpec:
    """Produce the canonical Dockerfile/requirements pair and its hash."""
    if not base_image:
        raise ValueError("base_image must be non-empty")
    requirements = deps.requirements_text()
    lines = [f"FROM {base_image}\n"]
    if deps.entries:
        lines.append("COPY requirements.txt /tmp/requirements.txt\n")
        lines.append("RUN pip install -r /tmp/requirements.txt\n")
    return ImageSpec(
        base_image=base_image,
        requirements_text=requirements,
        build_file_text="".join(lines),
        content_hash=content_hash(base_image, requirements),
    )


class ImageCache:
    """Thread-safe content-hash to image-tag store."""

    def __init__(self) -> None:
        self._tags: dict[str, str] = {}
        self._lock = threading.Lock()

    def get(self, digest: str) -> str | None:
        with self._lock:
            return self._tags.get(digest)

    def put(self, digest: str, tag: str) -> None:
        with self._lock:
            self._tags[digest] = tag


class ImageBuilder:
    """Port for building and pushing a payload image."""

    def build_and_push(self, spec: ImageSpec, tag: str) -> None:
        raise NotImplementedError


class RecordingBuilder(ImageBuilder):
    """Test double: records every invocation, optionally failing or stalling."""

    def __init__(self, fail_with: Exception | None = None, delay_s: float = 0.0) -> None:
        self.invocations: list[tuple[ImageSpec, str]] = []
        self.fail_with = fail_with
        self.delay_s = delay_s
        self._lock = threading.Lock()

    def build_and_push(self, spec: ImageSpec, tag: str) -> None:
        if self.delay_s:
            import time

            time.sleep(self.delay_s)
        with self._lock:
            self.invocations.append((spec, tag))
        if self.fail_with is not None:
            raise self.fail_with


class NullBuilder(ImageBuilder):
    """No-op builder for clusters that do not pull images for real."""

    def build_and_push(self, spec: ImageSpec, tag: str) -> None:  # noqa: ARG002
        return


class ShellBuilder(ImageBuilder):
    """Shell out to a container build tool.

    The command templates are split with shlex and support {context} and
    {tag} placeholders; the Dockerfile and requirements.txt are written
    byte-exact into a temporary context directory first.
    """

    def __init__(
        self,
        build_command: str = "docker build -t {tag} {context}",
        push_command: str = "docker push {tag}",
    ) -> None:
        self.build_command = build_command
        self.push_command = push_command

    def build_and_push(self, spec: ImageSpec, tag: str) -> None:
        with tempfile.TemporaryDirectory(prefix="q8s-image-") as ctx:
            context = Path(ctx)
            (context / "Dockerfile").write_text(spec.build_file_text)
            (context / "requirements.txt").write_text(spec.requirements_text)
            self._run(self.build_command, context, tag, BuildError)
        self._run(self.push_command, None, tag, RegistryError)

    @staticmethod
    def _run(template: str, context: Path | None, tag: str, error: type[Exception]) -> None:
        argv = [
            part.format(context=str(context), tag=tag) for part in shlex.split(template)
        ]
        proc = subprocess.run(argv, capture_output=True, text=True)
        if proc.returncode != 0:
            raise error(
                f"command {' '.join(argv)} exited {proc.returncode}:\n"
                f"{proc.stdout}{proc.stderr}"
            )


_singleflight_lock = threading.Lock()
_inflight: dict[str, threading.Lock] = {}


def ensure_image(
    spec: ImageSpec,
    cache: ImageCache,
    builder: ImageBuilder,
    registry_prefix: str = "registry.example.com/q8s",
) -> str:
    """Return the image tag for the spec, building only on a cache miss.

    Concurrent calls for the same content hash are single-flighted so the
    builder runs at most once per distinct dependency set.
    """
    tag = f"{registry_prefix}/job-dependencies:{spec.content_hash[:12]}"
    cached = cache.get(spec.content_hash)
    if cached is not None:
        return cached

    with _singleflight_lock:
        gate = _inflight.setdefault(spec.content_hash, threading.Lock())
    with gate:
        cached = cache.get(spec.content_hash)
        if cached is not None:
            return cached
        builder.build_and_push(spec, tag)
        cache.put(spec.content_hash, tag)
    return tag

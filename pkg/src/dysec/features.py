"""Feature extraction: TraceBundle -> 62-slot candidate feature vector.

The candidate catalog spans six trace categories (9 filetop, 6 install,
12 directory-access, 8 tcp, 17 syscall, 10 pattern features).  Syscall
streams additionally support n-gram profiles and behavioral pattern
matching against a catalog of named call sequences grouped into the ten
``Pattern_1`` .. ``Pattern_10`` categories.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from dysec.trace_model import (
    BehaviorClass,
    BehaviorGroup,
    Label,
    PackageRef,
    SyscallEvent,
    TraceBundle,
    LoadedBundle,
    bundle_to_json,
    validate_bundle,
)


class ExtractionError(ValueError):
    """Raised when a bundle violates its invariants and cannot be featurized."""


# ---------------------------------------------------------------------------
# Candidate feature catalog
# ---------------------------------------------------------------------------

CATEGORY_FILETOP = "FiletopTraces"
CATEGORY_INSTALL = "InstallTraces"
CATEGORY_OPENSNOOP = "OpensnoopTraces"
CATEGORY_TCP = "TCPTraces"
CATEGORY_SYSCALL = "SystemCallTraces"
CATEGORY_PATTERN = "PatternTraces"

TRACE_CATEGORIES = (
    CATEGORY_FILETOP,
    CATEGORY_INSTALL,
    CATEGORY_OPENSNOOP,
    CATEGORY_TCP,
    CATEGORY_SYSCALL,
    CATEGORY_PATTERN,
)

_DIRECTORY_FEATURES = (
    ("Root_DIR_Access", "/root"),
    ("Usr_DIR_Access", "/usr"),
    ("Tmp_DIR_Access", "/tmp"),
    ("Sys_DIR_Access", "/sys"),
    ("Etc_DIR_Access", "/etc"),
    ("Home_DIR_Access", "/home"),
    ("Proc_DIR_Access", "/proc"),
    ("Var_DIR_Access", "/var"),
)

# name -> (category, kind) where kind is "numerical" or "categorical-derived"
_CATALOG_SPEC: tuple[tuple[str, str, str], ...] = (
    ("read_process_count", CATEGORY_FILETOP, "numerical"),
    ("write_process_count", CATEGORY_FILETOP, "numerical"),
    ("total_read_kb", CATEGORY_FILETOP, "numerical"),
    ("total_write_kb", CATEGORY_FILETOP, "numerical"),
    ("distinct_files", CATEGORY_FILETOP, "numerical"),
    ("max_read_kb_one_file", CATEGORY_FILETOP, "numerical"),
    ("max_write_kb_one_file", CATEGORY_FILETOP, "numerical"),
    ("read_write_kb_ratio", CATEGORY_FILETOP, "numerical"),
    ("mean_kb_per_process", CATEGORY_FILETOP, "numerical"),
    ("direct_deps", CATEGORY_INSTALL, "numerical"),
    ("indirect_deps", CATEGORY_INSTALL, "numerical"),
    ("install_success", CATEGORY_INSTALL, "categorical-derived"),
    ("behavior_group_code", CATEGORY_INSTALL, "categorical-derived"),
    ("duration_ms", CATEGORY_INSTALL, "numerical"),
    ("auth_request_flag", CATEGORY_INSTALL, "categorical-derived"),
    *((name, CATEGORY_OPENSNOOP, "numerical") for name, _ in _DIRECTORY_FEATURES),
    ("failed_open_count", CATEGORY_OPENSNOOP, "numerical"),
    ("enoent_open_count", CATEGORY_OPENSNOOP, "numerical"),
    ("distinct_paths", CATEGORY_OPENSNOOP, "numerical"),
    ("hidden_path_access", CATEGORY_OPENSNOOP, "numerical"),
    ("distinct_remote_ips", CATEGORY_TCP, "numerical"),
    ("distinct_remote_ports", CATEGORY_TCP, "numerical"),
    ("total_connections", CATEGORY_TCP, "numerical"),
    ("established_connections", CATEGORY_TCP, "numerical"),
    ("failed_connections", CATEGORY_TCP, "numerical"),
    ("non_standard_port_connections", CATEGORY_TCP, "numerical"),
    ("max_connections_per_ip", CATEGORY_TCP, "numerical"),
    ("outbound_rate_per_s", CATEGORY_TCP, "numerical"),
    ("file_io", CATEGORY_SYSCALL, "numerical"),
    ("network", CATEGORY_SYSCALL, "numerical"),
    ("process_mgmt", CATEGORY_SYSCALL, "numerical"),
    ("security", CATEGORY_SYSCALL, "numerical"),
    ("memory", CATEGORY_SYSCALL, "numerical"),
    ("ipc", CATEGORY_SYSCALL, "numerical"),
    ("time", CATEGORY_SYSCALL, "numerical"),
    ("error_total", CATEGORY_SYSCALL, "numerical"),
    ("total_syscalls", CATEGORY_SYSCALL, "numerical"),
    ("distinct_syscalls", CATEGORY_SYSCALL, "numerical"),
    ("error_ratio", CATEGORY_SYSCALL, "numerical"),
    ("execve_count", CATEGORY_SYSCALL, "numerical"),
    ("fork_count", CATEGORY_SYSCALL, "numerical"),
    ("ptrace_count", CATEGORY_SYSCALL, "numerical"),
    ("setuid_family_count", CATEGORY_SYSCALL, "numerical"),
    ("socket_count", CATEGORY_SYSCALL, "numerical"),
    ("mmap_count", CATEGORY_SYSCALL, "numerical"),
    *((f"Pattern_{i}", CATEGORY_PATTERN, "numerical") for i in range(1, 11)),
)


@dataclass(frozen=True)
class FeatureCatalog:
    names: tuple[str, ...]
    categories: dict[str, str]  # feature -> trace category
    kinds: dict[str, str]  # feature -> numerical | categorical-derived

    def by_category(self, category: str) -> tuple[str, ...]:
        return tuple(n for n in self.names if self.categories[n] == category)


def default_feature_catalog() -> FeatureCatalog:
    names = tuple(name for name, _, _ in _CATALOG_SPEC)
    assert len(names) == 62 and len(set(names)) == 62
    return FeatureCatalog(
        names=names,
        categories={name: cat for name, cat, _ in _CATALOG_SPEC},
        kinds={name: kind for name, _, kind in _CATALOG_SPEC},
    )


@dataclass(frozen=True)
class FeatureVector:
    values: dict[str, float]
    package: PackageRef
    label: Label


# Ports considered ordinary for an installer; anything else counts as
# non-standard.  Extend via extract_candidates(standard_ports=...).
STANDARD_PORTS = frozenset({80, 443, 22, 53, 3128, 8080})

_SYSCALL_CATEGORIES: dict[str, str] = {}
for _cat, _names in {
    "file_io": (
        "open", "openat", "openat2", "read", "write", "close", "fstat", "newfstatat",
        "stat", "lstat", "statx", "lseek", "ioctl", "fcntl", "rename", "renameat",
        "unlink", "unlinkat", "mkdir", "rmdir", "getdents64", "readlink", "readlinkat",
        "chmod", "fchmod", "chown", "fchown", "dup", "dup2", "dup3", "access",
        "faccessat", "faccessat2", "pread64", "pwrite64", "readv", "writev",
        "ftruncate", "fsync", "fdatasync", "utimensat", "flock", "encrypt",
    ),
    "network": (
        "socket", "bind", "listen", "accept", "accept4", "connect", "sendto",
        "recvfrom", "sendmsg", "recvmsg", "sendmmsg", "recvmmsg", "getsockname",
        "getpeername", "setsockopt", "getsockopt", "shutdown",
    ),
    "process_mgmt": (
        "fork", "vfork", "clone", "clone3", "execve", "execveat", "wait4", "waitid",
        "exit", "exit_group", "kill", "tgkill", "getpid", "getppid", "gettid",
        "sched_yield", "prctl",
    ),
    "security": (
        "setuid", "setgid", "seteuid", "setegid", "setreuid", "setregid",
        "setresuid", "setresgid", "setfsuid", "setfsgid", "setgroups", "capset",
        "capget", "ptrace", "seccomp",
    ),
    "memory": (
        "mmap", "munmap", "mprotect", "brk", "mremap", "madvise", "msync",
        "mlock", "munlock",
    ),
    "ipc": (
        "pipe", "pipe2", "socketpair", "shmget", "shmat", "shmdt", "shmctl",
        "semget", "semop", "msgget", "msgsnd", "msgrcv", "eventfd", "eventfd2",
        "signalfd4", "epoll_create1", "epoll_ctl", "epoll_wait", "poll", "ppoll",
        "select", "pselect6", "futex",
    ),
    "time": (
        "nanosleep", "clock_nanosleep", "clock_gettime", "gettimeofday",
        "timer_create", "timerfd_create", "timerfd_settime", "alarm", "setitimer",
    ),
}.items():
    for _n in _names:
        _SYSCALL_CATEGORIES[_n] = _cat

_FORK_FAMILY = frozenset({"fork", "vfork", "clone", "clone3"})
_EXEC_FAMILY = frozenset({"execve", "execveat"})
_SETUID_FAMILY = frozenset(
    {"setuid", "setgid", "seteuid", "setegid", "setreuid", "setregid",
     "setresuid", "setresgid", "setfsuid", "setfsgid"}
)

_BEHAVIOR_GROUP_CODES = {
    BehaviorGroup.NORMAL: 0.0,
    BehaviorGroup.COMPATIBILITY: 1.0,
    BehaviorGroup.SYSTEM: 2.0,
}


# ---------------------------------------------------------------------------
# Syscall event tokens, n-grams, and the behavioral pattern catalog
# ---------------------------------------------------------------------------

def event_token(event: SyscallEvent) -> str:
    """Token for one event: the name plus any errno/fd qualifiers."""
    token = event.name
    if event.errno_name:
        token += f"|errno={event.errno_name}"
    if event.fd_note:
        token += f"|{event.fd_note}"
    return token


GRAM_SEPARATOR = "->"
DEFAULT_NGRAM_RANGE = (3, 4, 5)


@dataclass(frozen=True)
class NGramProfile:
    n_range: tuple[int, ...]
    counts: dict[str, int]


def extract_ngrams(
    events: Sequence[SyscallEvent], n_range: Iterable[int] = DEFAULT_NGRAM_RANGE
) -> NGramProfile:
    """Count every contiguous window of n event tokens, for each n in range."""
    sizes = tuple(sorted(set(n_range)))
    if not sizes or not set(sizes) <= set(range(2, 7)):
        raise ValueError(f"n_range must be within 2..6, got {sizes}")
    tokens = [event_token(e) for e in events]
    counts: Counter[str] = Counter()
    for n in sizes:
        for i in range(len(tokens) - n + 1):
            counts[GRAM_SEPARATOR.join(tokens[i : i + n])] += 1
    return NGramProfile(n_range=sizes, counts=dict(counts))


_TOKEN_RE = re.compile(r"^(?P<name>[a-z0-9_]+)(?P<quals>(\|[^|]+)*)$")


@dataclass(frozen=True)
class PatternTemplate:
    pattern_id: str
    category: str  # Pattern_1 .. Pattern_10
    sequence: tuple[str, ...]  # tokens: name with optional |errno=X / |fd=N / |no-fd

    def __post_init__(self):
        if not self.sequence:
            raise ValueError(f"{self.pattern_id}: empty sequence")
        for token in self.sequence:
            if not _TOKEN_RE.match(token):
                raise ValueError(f"{self.pattern_id}: bad token {token!r}")


@dataclass(frozen=True)
class PatternCatalog:
    entries: tuple[PatternTemplate, ...]

    def categories(self) -> tuple[str, ...]:
        return tuple(f"Pattern_{i}" for i in range(1, 11))


def _match_token(template_token: str, event: SyscallEvent) -> bool:
    # A bare name matches regardless of the event's qualifiers; a qualifier in
    # the template must be carried by the event exactly.
    name, _, quals = template_token.partition("|")
    if event.name != name:
        return False
    for qual in quals.split("|") if quals else ():
        if qual.startswith("errno="):
            if event.errno_name != qual[6:]:
                return False
        elif qual in ("no-fd",) or qual.startswith("fd="):
            if event.fd_note != qual:
                return False
        else:
            return False
    return True


def _count_template(events: Sequence[SyscallEvent], template: PatternTemplate) -> int:
    # Non-overlapping, left-to-right.
    seq = template.sequence
    count = 0
    i = 0
    limit = len(events) - len(seq)
    while i <= limit:
        for k, token in enumerate(seq):
            if not _match_token(token, events[i + k]):
                i += 1
                break
        else:
            count += 1
            i += len(seq)
    return count


def match_patterns(
    events: Sequence[SyscallEvent], catalog: PatternCatalog
) -> dict[str, int]:
    """Per-category counts of non-overlapping template occurrences."""
    totals = {cat: 0 for cat in catalog.categories()}
    for template in catalog.entries:
        hits = _count_template(events, template)
        if hits:
            totals[template.category] += hits
    return totals


_DEFAULT_PATTERNS: tuple[tuple[str, str, tuple[str, ...]], ...] = (
    # File metadata retrieval (benign install workflow)
    ("metadata_full_stat_chain", "Pattern_1",
     ("newfstatat", "openat", "fstat", "lseek", "ioctl")),
    ("metadata_short_stat_chain", "Pattern_1", ("openat", "fstat", "ioctl")),
    ("metadata_close_recheck", "Pattern_1", ("close", "newfstatat|no-fd")),
    ("metadata_io_routine", "Pattern_1", ("fstat", "ioctl", "lseek")),
    # Sequential file reads (benign)
    ("sequential_reads", "Pattern_2", ("read", "read", "read", "newfstatat")),
    ("sequential_reads_recheck", "Pattern_2",
     ("read", "read", "read", "newfstatat", "newfstatat")),
    # Writing data to file (category otherwise unnamed; ships a
    # rewrite-in-place chain typical of file-encrypting payloads)
    ("rewrite_in_place_chain", "Pattern_3",
     ("openat", "read", "encrypt", "write", "rename")),
    # Network socket creation ending in exec (C2 listener)
    ("socket_bind_listen_accept_execve", "Pattern_4",
     ("socket", "bind", "listen", "accept", "execve")),
    # New process creation with privilege changes
    ("privilege_switch_exec", "Pattern_5",
     ("ioctl", "setresuid", "setresgid", "execve")),
    ("injection_fork_ptrace", "Pattern_5", ("mmap", "fork", "ptrace", "execve")),
    # Memory mapping for dependency loading (benign)
    ("mmap_dependency_load", "Pattern_6",
     ("openat", "mmap", "ioctl", "prctl|no-fd")),
    # File descriptor manipulation on stdout
    ("fd_manipulation_stdout", "Pattern_7", ("fcntl", "fcntl", "close|fd=1")),
    # Network data transfer (category otherwise unnamed; ships an
    # open-read-send exfiltration chain)
    ("read_and_transmit", "Pattern_8", ("socket", "connect", "sendto", "sendto")),
    # File locking without a descriptor (ransomware-style)
    ("lock_without_fd", "Pattern_9", ("openat", "fstat", "fcntl|no-fd")),
    # Error-probe loop: stat/open chains ending in ENOENT
    ("enoent_probe", "Pattern_10", ("newfstatat", "openat", "fstat|errno=ENOENT")),
)


def default_pattern_catalog() -> PatternCatalog:
    return PatternCatalog(
        entries=tuple(
            PatternTemplate(pattern_id=pid, category=cat, sequence=seq)
            for pid, cat, seq in _DEFAULT_PATTERNS
        )
    )


def pattern_catalog_to_json(catalog: PatternCatalog) -> str:
    return json.dumps(
        [
            {"id": e.pattern_id, "category": e.category, "sequence": list(e.sequence)}
            for e in catalog.entries
        ],
        indent=2,
    )


def pattern_catalog_from_json(text: str) -> PatternCatalog:
    entries = tuple(
        PatternTemplate(
            pattern_id=doc["id"], category=doc["category"], sequence=tuple(doc["sequence"])
        )
        for doc in json.loads(text)
    )
    return PatternCatalog(entries=entries)


def load_pattern_catalog(path: str | Path) -> PatternCatalog:
    return pattern_catalog_from_json(Path(path).read_text())


# ---------------------------------------------------------------------------
# Candidate extraction
# ---------------------------------------------------------------------------

def _has_hidden_component(path: str) -> bool:
    return any(part.startswith(".") for part in path.split("/") if part)


def _under(path: str, directory: str) -> bool:
    return path == directory or path.startswith(directory + "/")


def extract_candidates(
    bundle: TraceBundle,
    feature_catalog: FeatureCatalog | None = None,
    pattern_catalog: PatternCatalog | None = None,
    standard_ports: frozenset[int] = STANDARD_PORTS,
) -> FeatureVector:
    """Compute all 62 candidate features for a validated bundle.

    Features are plain counts, sums, distinct counts, and per-category
    tallies over the bundle's records; the non-obvious conventions are:

    * ``read_write_kb_ratio`` is 0 when nothing was written, and
      ``error_ratio`` is 0 for an empty syscall stream (never NaN/inf);
    * ``mean_kb_per_process`` divides total kb moved by distinct processes;
    * directory counters match whole path components (``/root`` does not
      match ``/rootkit``), ``hidden_path_access`` counts paths with a
      dot-prefixed component;
    * ``non_standard_port_connections`` counts ports outside
      ``standard_ports``; ``outbound_rate_per_s`` divides connection count
      by the capture window;
    * ``fork_count``/``execve_count``/``setuid_family_count`` cover the
      whole call family (clone variants, execveat, set*uid/gid);
    * ``behavior_group_code`` is ordinal (normal 0, compatibility 1,
      system 2) and ``Pattern_k`` are non-overlapping template match
      counts summed per category.
    """
    problems = validate_bundle(bundle)
    if problems:
        raise ExtractionError(f"bundle invalid: {problems[0]} (+{len(problems) - 1} more)")
    feature_catalog = feature_catalog or default_feature_catalog()
    pattern_catalog = pattern_catalog or default_pattern_catalog()

    v: dict[str, float] = {}

    # FiletopTraces
    read_procs = {r.process for r in bundle.filetop if r.reads > 0}
    write_procs = {r.process for r in bundle.filetop if r.writes > 0}
    all_procs = {r.process for r in bundle.filetop}
    total_read = sum(r.read_kb for r in bundle.filetop)
    total_write = sum(r.write_kb for r in bundle.filetop)
    per_file_read: Counter[str] = Counter()
    per_file_write: Counter[str] = Counter()
    for r in bundle.filetop:
        per_file_read[r.file_path] += r.read_kb
        per_file_write[r.file_path] += r.write_kb
    v["read_process_count"] = float(len(read_procs))
    v["write_process_count"] = float(len(write_procs))
    v["total_read_kb"] = total_read
    v["total_write_kb"] = total_write
    v["distinct_files"] = float(len(per_file_read))
    v["max_read_kb_one_file"] = max(per_file_read.values(), default=0.0)
    v["max_write_kb_one_file"] = max(per_file_write.values(), default=0.0)
    v["read_write_kb_ratio"] = total_read / total_write if total_write > 0 else 0.0
    v["mean_kb_per_process"] = (
        (total_read + total_write) / len(all_procs) if all_procs else 0.0
    )

    # InstallTraces
    v["direct_deps"] = float(bundle.direct_deps)
    v["indirect_deps"] = float(bundle.indirect_deps)
    v["install_success"] = 1.0 if bundle.outcome.success else 0.0
    v["behavior_group_code"] = _BEHAVIOR_GROUP_CODES[bundle.outcome.behavior_group]
    v["duration_ms"] = float(bundle.outcome.duration_ms)
    v["auth_request_flag"] = (
        1.0 if bundle.outcome.behavior_class is BehaviorClass.UNEXPECTED_AUTH_REQUEST else 0.0
    )

    # OpensnoopTraces
    for feature, directory in _DIRECTORY_FEATURES:
        v[feature] = float(sum(1 for r in bundle.opens if _under(r.path, directory)))
    v["failed_open_count"] = float(sum(1 for r in bundle.opens if r.fd == -1))
    v["enoent_open_count"] = float(
        sum(1 for r in bundle.opens if r.errno_name == "ENOENT")
    )
    v["distinct_paths"] = float(len({r.path for r in bundle.opens}))
    v["hidden_path_access"] = float(
        sum(1 for r in bundle.opens if _has_hidden_component(r.path))
    )

    # TCPTraces
    per_ip: Counter[str] = Counter(r.remote_ip for r in bundle.tcp)
    v["distinct_remote_ips"] = float(len(per_ip))
    v["distinct_remote_ports"] = float(len({r.remote_port for r in bundle.tcp}))
    v["total_connections"] = float(len(bundle.tcp))
    v["established_connections"] = float(
        sum(1 for r in bundle.tcp if r.state.value == "established")
    )
    v["failed_connections"] = float(sum(1 for r in bundle.tcp if r.state.value == "failed"))
    v["non_standard_port_connections"] = float(
        sum(1 for r in bundle.tcp if r.remote_port not in standard_ports)
    )
    v["max_connections_per_ip"] = float(max(per_ip.values(), default=0))
    v["outbound_rate_per_s"] = len(bundle.tcp) / bundle.capture_window_s

    # SystemCallTraces
    cat_counts = {c: 0 for c in
                  ("file_io", "network", "process_mgmt", "security", "memory", "ipc", "time")}
    errors = 0
    names: Counter[str] = Counter()
    for e in bundle.syscalls:
        names[e.name] += 1
        cat = _SYSCALL_CATEGORIES.get(e.name)
        if cat:
            cat_counts[cat] += 1
        if e.errno_name:
            errors += 1
    for cat, count in cat_counts.items():
        v[cat] = float(count)
    total_calls = len(bundle.syscalls)
    v["error_total"] = float(errors)
    v["total_syscalls"] = float(total_calls)
    v["distinct_syscalls"] = float(len(names))
    v["error_ratio"] = errors / total_calls if total_calls else 0.0
    v["execve_count"] = float(sum(names[n] for n in _EXEC_FAMILY))
    v["fork_count"] = float(sum(names[n] for n in _FORK_FAMILY))
    v["ptrace_count"] = float(names["ptrace"])
    v["setuid_family_count"] = float(sum(names[n] for n in _SETUID_FAMILY))
    v["socket_count"] = float(names["socket"])
    v["mmap_count"] = float(names["mmap"])

    # PatternTraces
    for category, count in match_patterns(bundle.syscalls, pattern_catalog).items():
        v[category] = float(count)

    if set(v) != set(feature_catalog.names):
        missing = set(feature_catalog.names) - set(v)
        extra = set(v) - set(feature_catalog.names)
        raise ExtractionError(f"catalog mismatch: missing={missing} extra={extra}")
    ordered = {name: v[name] for name in feature_catalog.names}
    return FeatureVector(values=ordered, package=bundle.package, label=bundle.package.label)


# ---------------------------------------------------------------------------
# Min-max normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MinMaxBounds:
    feature_names: tuple[str, ...]
    mins: np.ndarray
    maxs: np.ndarray

    def as_dict(self) -> dict[str, tuple[float, float]]:
        return {
            name: (float(self.mins[i]), float(self.maxs[i]))
            for i, name in enumerate(self.feature_names)
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Sequence[float]]) -> "MinMaxBounds":
        names = tuple(doc)
        return cls(
            feature_names=names,
            mins=np.array([doc[n][0] for n in names], dtype=np.float64),
            maxs=np.array([doc[n][1] for n in names], dtype=np.float64),
        )


def minmax_normalize(
    matrix: np.ndarray, feature_names: Sequence[str]
) -> tuple[np.ndarray, MinMaxBounds]:
    """Scale each column to [0, 1]; constant columns map to 0.

    Returns the per-feature (min, max) so the identical transform can be
    applied to unseen rows.
    """
    X = np.asarray(matrix, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("need a 2-D matrix with at least one row")
    if not np.isfinite(X).all():
        raise ValueError("matrix contains non-finite values")
    mins = X.min(axis=0)
    maxs = X.max(axis=0)
    bounds = MinMaxBounds(tuple(feature_names), mins, maxs)
    return apply_minmax(X, bounds), bounds


def apply_minmax(matrix: np.ndarray, bounds: MinMaxBounds) -> np.ndarray:
    """Apply stored bounds; unseen values outside them are not clipped."""
    X = np.asarray(matrix, dtype=np.float64)
    span = bounds.maxs - bounds.mins
    safe = np.where(span > 0, span, 1.0)
    out = (X - bounds.mins) / safe
    out[:, span == 0] = 0.0
    return out


def vectors_to_matrix(
    vectors: Sequence[FeatureVector], catalog: FeatureCatalog | None = None
) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    """Stack feature vectors into (X, y, names); y is 1 for malicious."""
    catalog = catalog or default_feature_catalog()
    X = np.array(
        [[vec.values[name] for name in catalog.names] for vec in vectors],
        dtype=np.float64,
    )
    y = np.array(
        [1 if vec.label is Label.MALICIOUS else 0 for vec in vectors], dtype=np.int64
    )
    return X, y, catalog.names


def write_feature_matrix_csv(
    path: str | Path, vectors: Sequence[FeatureVector], catalog: FeatureCatalog | None = None
) -> None:
    catalog = catalog or default_feature_catalog()
    lines = [",".join(catalog.names) + ",label"]
    for vec in vectors:
        row = ",".join(repr(vec.values[name]) for name in catalog.names)
        lines.append(f"{row},{vec.label.value}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Corpus cleaning
# ---------------------------------------------------------------------------

_NAME_SEPARATORS = re.compile(r"[-_.]+")
_HOME_PREFIX = re.compile(r"^/home/[^/]+")
CANONICAL_ROOT = "/work"


def normalize_package_name(name: str) -> str:
    """Collapse the interchangeable separators and lowercase."""
    return _NAME_SEPARATORS.sub("-", name.strip().lower())


def standardize_path(path: str) -> str:
    return _HOME_PREFIX.sub(CANONICAL_ROOT, path)


def _trace_digest(bundle: TraceBundle) -> str:
    doc = json.loads(bundle_to_json(bundle))
    doc.pop("package", None)
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


@dataclass(frozen=True)
class CleanReport:
    kept: int
    dropped_duplicates: tuple[tuple[str, str], ...]  # (dropped, kept counterpart)
    dropped_incomplete: tuple[str, ...]
    paths_rewritten: int


def _rewrite_paths(bundle: TraceBundle) -> tuple[TraceBundle, int]:
    rewrites = 0
    filetop = []
    for r in bundle.filetop:
        new_path = standardize_path(r.file_path)
        if new_path != r.file_path:
            rewrites += 1
            r = type(r)(
                timestamp_ms=r.timestamp_ms,
                process=r.process,
                reads=r.reads,
                writes=r.writes,
                read_kb=r.read_kb,
                write_kb=r.write_kb,
                file_path=new_path,
            )
        filetop.append(r)
    opens = []
    for r in bundle.opens:
        new_path = standardize_path(r.path)
        if new_path != r.path:
            rewrites += 1
            r = type(r)(
                timestamp_ms=r.timestamp_ms,
                process=r.process,
                fd=r.fd,
                errno_name=r.errno_name,
                path=new_path,
            )
        opens.append(r)
    if rewrites:
        bundle = TraceBundle(
            package=bundle.package,
            outcome=bundle.outcome,
            filetop=tuple(filetop),
            opens=tuple(opens),
            tcp=bundle.tcp,
            syscalls=bundle.syscalls,
            direct_deps=bundle.direct_deps,
            indirect_deps=bundle.indirect_deps,
            capture_window_s=bundle.capture_window_s,
        )
    return bundle, rewrites


def clean_corpus(
    items: Sequence[TraceBundle | LoadedBundle],
) -> tuple[list[TraceBundle], CleanReport]:
    """Deduplicate, drop incomplete captures, and standardize paths.

    Duplicates are pairs with the same separator-collapsed name and an
    identical trace digest; the first occurrence is retained.  Bundles whose
    source document lacked a trace section are incomplete.
    """
    seen: dict[tuple[str, str], str] = {}
    kept: list[TraceBundle] = []
    duplicates: list[tuple[str, str]] = []
    incomplete: list[str] = []
    total_rewrites = 0

    for item in items:
        if isinstance(item, LoadedBundle):
            bundle, missing = item.bundle, item.missing_sections
        else:
            bundle, missing = item, ()
        if missing:
            incomplete.append(bundle.package.name)
            continue
        bundle, rewrites = _rewrite_paths(bundle)
        total_rewrites += rewrites
        key = (normalize_package_name(bundle.package.name), _trace_digest(bundle))
        if key in seen:
            duplicates.append((bundle.package.name, seen[key]))
            continue
        seen[key] = bundle.package.name
        kept.append(bundle)

    report = CleanReport(
        kept=len(kept),
        dropped_duplicates=tuple(duplicates),
        dropped_incomplete=tuple(incomplete),
        paths_rewritten=total_rewrites,
    )
    return kept, report

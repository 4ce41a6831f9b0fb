"""Canonical domain types for packages, install outcomes, and trace records.

Everything here is immutable after construction and safe to share across
workers.  Construction never validates; :func:`validate_bundle` reports every
invariant violation without raising.
"""

from __future__ import annotations

import ipaddress
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

SYSCALL_NAME_RE = re.compile(r"^[a-z0-9_]+$")

DEFAULT_CAPTURE_WINDOW_S = 120


class ArchiveKind(str, Enum):
    ZIP = "zip"
    TAR_GZ = "tar_gz"
    WHEEL = "wheel"
    UNKNOWN = "unknown"


# Only source archives are accepted for install-time capture.
ACCEPTED_ARCHIVE_KINDS = frozenset({ArchiveKind.ZIP, ArchiveKind.TAR_GZ})


class Label(str, Enum):
    MALICIOUS = "malicious"
    BENIGN = "benign"
    UNKNOWN = "unknown"


class BehaviorClass(str, Enum):
    SUCCESSFULLY_INSTALLED = "successfully_installed"
    NO_METADATA = "no_metadata"
    MISSING_SETUP_FILES = "missing_setup_files"
    FAILED_BUILD_WHEELS = "failed_build_wheels"
    MISMATCH_DISTRIBUTION = "mismatch_distribution"
    REQUIRES_DIFFERENT_VERSION = "requires_different_version"
    MISSING_PACKAGE_VERSION = "missing_package_version"
    UNEXPECTED_AUTH_REQUEST = "unexpected_auth_request"
    MISSING_INSTALL_MODULE = "missing_install_module"
    UNICODE_FILE_NAMING = "unicode_file_naming"
    SYSTEM_FREEZING = "system_freezing"
    INFINITE_WAITING = "infinite_waiting"
    SYSTEM_SHUTDOWN = "system_shutdown"
    VERSION_LOOPING = "version_looping"
    SYSTEM_PREREQUISITES_REQUIRED = "system_prerequisites_required"


class BehaviorGroup(str, Enum):
    NORMAL = "normal"
    COMPATIBILITY = "compatibility"
    SYSTEM = "system"


# Total mapping: every behavior class belongs to exactly one group.
BEHAVIOR_GROUPS: dict[BehaviorClass, BehaviorGroup] = {
    BehaviorClass.SUCCESSFULLY_INSTALLED: BehaviorGroup.NORMAL,
    BehaviorClass.NO_METADATA: BehaviorGroup.NORMAL,
    BehaviorClass.MISSING_SETUP_FILES: BehaviorGroup.NORMAL,
    BehaviorClass.FAILED_BUILD_WHEELS: BehaviorGroup.NORMAL,
    BehaviorClass.MISMATCH_DISTRIBUTION: BehaviorGroup.COMPATIBILITY,
    BehaviorClass.REQUIRES_DIFFERENT_VERSION: BehaviorGroup.COMPATIBILITY,
    BehaviorClass.MISSING_PACKAGE_VERSION: BehaviorGroup.COMPATIBILITY,
    BehaviorClass.UNEXPECTED_AUTH_REQUEST: BehaviorGroup.COMPATIBILITY,
    BehaviorClass.MISSING_INSTALL_MODULE: BehaviorGroup.COMPATIBILITY,
    BehaviorClass.UNICODE_FILE_NAMING: BehaviorGroup.COMPATIBILITY,
    BehaviorClass.SYSTEM_FREEZING: BehaviorGroup.SYSTEM,
    BehaviorClass.INFINITE_WAITING: BehaviorGroup.SYSTEM,
    BehaviorClass.SYSTEM_SHUTDOWN: BehaviorGroup.SYSTEM,
    BehaviorClass.VERSION_LOOPING: BehaviorGroup.SYSTEM,
    BehaviorClass.SYSTEM_PREREQUISITES_REQUIRED: BehaviorGroup.SYSTEM,
}


@dataclass(frozen=True)
class PackageRef:
    name: str
    version: str
    archive_kind: ArchiveKind = ArchiveKind.TAR_GZ
    label: Label = Label.UNKNOWN


@dataclass(frozen=True)
class InstallOutcome:
    behavior_class: BehaviorClass
    behavior_group: BehaviorGroup
    success: bool
    duration_ms: int = 0


@dataclass(frozen=True)
class FiletopRecord:
    timestamp_ms: int
    process: str
    reads: int
    writes: int
    read_kb: float
    write_kb: float
    file_path: str


@dataclass(frozen=True)
class OpenRecord:
    timestamp_ms: int
    process: str
    fd: int  # -1 on failure
    errno_name: str  # "" when the open succeeded
    path: str


class TcpState(str, Enum):
    ATTEMPTED = "attempted"
    ESTABLISHED = "established"
    FAILED = "failed"


@dataclass(frozen=True)
class TcpRecord:
    timestamp_ms: int
    process: str
    remote_ip: str
    remote_port: int
    state: TcpState


@dataclass(frozen=True)
class SyscallEvent:
    timestamp_ms: int
    name: str
    errno_name: str = ""  # "" on success
    fd_note: str = ""  # "" | "no-fd" | "fd=<n>"


@dataclass(frozen=True)
class TraceBundle:
    """All parsed install-time records for one package."""

    package: PackageRef
    outcome: InstallOutcome
    filetop: tuple[FiletopRecord, ...] = ()
    opens: tuple[OpenRecord, ...] = ()
    tcp: tuple[TcpRecord, ...] = ()
    syscalls: tuple[SyscallEvent, ...] = ()
    direct_deps: int = 0
    indirect_deps: int = 0
    capture_window_s: int = DEFAULT_CAPTURE_WINDOW_S


def outcome_for(behavior_class: BehaviorClass, duration_ms: int = 0) -> InstallOutcome:
    """Build a consistent InstallOutcome for a behavior class."""
    return InstallOutcome(
        behavior_class=behavior_class,
        behavior_group=BEHAVIOR_GROUPS[behavior_class],
        success=behavior_class is BehaviorClass.SUCCESSFULLY_INSTALLED,
        duration_ms=duration_ms,
    )


def _ip_ok(value: str) -> bool:
    try:
        ipaddress.ip_address(value)
    except ValueError:
        return False
    return True


def _finite(value: float) -> bool:
    return value == value and value not in (float("inf"), float("-inf"))


def validate_bundle(bundle: TraceBundle) -> list[str]:
    """Check every type invariant; returns one message per violation.

    Never raises: a malformed bundle yields messages, a well-formed one an
    empty list.
    """
    problems: list[str] = []

    if not bundle.package.name:
        problems.append("package.name empty")
    if bundle.package.archive_kind not in ACCEPTED_ARCHIVE_KINDS:
        problems.append("package.archive_kind outside accepted set {zip, tar_gz}")

    out = bundle.outcome
    if BEHAVIOR_GROUPS[out.behavior_class] is not out.behavior_group:
        problems.append(
            f"outcome.behavior_group {out.behavior_group.value} does not match "
            f"class {out.behavior_class.value}"
        )
    if out.success and out.behavior_class is not BehaviorClass.SUCCESSFULLY_INSTALLED:
        problems.append("outcome.success true for non-successful behavior_class")
    if out.duration_ms < 0:
        problems.append("outcome.duration_ms negative")

    for i, rec in enumerate(bundle.filetop):
        if rec.reads < 0 or rec.writes < 0:
            problems.append(f"filetop[{i}] negative read/write count")
        if not (_finite(rec.read_kb) and _finite(rec.write_kb)):
            problems.append(f"filetop[{i}] non-finite kb value")
        if rec.read_kb < 0 or rec.write_kb < 0:
            problems.append(f"filetop[{i}] negative kb value")

    for i, rec in enumerate(bundle.opens):
        if (rec.fd == -1) != bool(rec.errno_name):
            problems.append(f"opens[{i}].fd/errno inconsistent (fd=-1 iff errno set)")

    for i, rec in enumerate(bundle.tcp):
        if not 0 <= rec.remote_port <= 65535:
            problems.append(f"tcp[{i}].remote_port out of range")
        if not _ip_ok(rec.remote_ip):
            problems.append(f"tcp[{i}].remote_ip not an IPv4/IPv6 literal")

    prev_ts = None
    for i, ev in enumerate(bundle.syscalls):
        if not SYSCALL_NAME_RE.match(ev.name):
            problems.append(f"syscalls[{i}].name not a lowercase mnemonic")
        if prev_ts is not None and ev.timestamp_ms < prev_ts:
            problems.append(f"syscalls[{i}] out of timestamp order")
        prev_ts = ev.timestamp_ms

    if bundle.direct_deps < 0 or bundle.indirect_deps < 0:
        problems.append("deps negative")
    if bundle.capture_window_s <= 0:
        problems.append("capture_window_s not positive")

    return problems


# ---------------------------------------------------------------------------
# JSON interchange: one document per package, field names fixed.
# ---------------------------------------------------------------------------

def bundle_to_dict(bundle: TraceBundle) -> dict[str, Any]:
    return {
        "package": {
            "name": bundle.package.name,
            "version": bundle.package.version,
            "archive_kind": bundle.package.archive_kind.value,
            "label": bundle.package.label.value,
        },
        "outcome": {
            "behavior_class": bundle.outcome.behavior_class.value,
            "behavior_group": bundle.outcome.behavior_group.value,
            "success": bundle.outcome.success,
            "duration_ms": bundle.outcome.duration_ms,
        },
        "filetop": [
            {
                "timestamp_ms": r.timestamp_ms,
                "process": r.process,
                "reads": r.reads,
                "writes": r.writes,
                "read_kb": r.read_kb,
                "write_kb": r.write_kb,
                "file_path": r.file_path,
            }
            for r in bundle.filetop
        ],
        "opens": [
            {
                "timestamp_ms": r.timestamp_ms,
                "process": r.process,
                "fd": r.fd,
                "errno_name": r.errno_name,
                "path": r.path,
            }
            for r in bundle.opens
        ],
        "tcp": [
            {
                "timestamp_ms": r.timestamp_ms,
                "process": r.process,
                "remote_ip": r.remote_ip,
                "remote_port": r.remote_port,
                "state": r.state.value,
            }
            for r in bundle.tcp
        ],
        "syscalls": [
            {
                "timestamp_ms": e.timestamp_ms,
                "name": e.name,
                "errno_name": e.errno_name,
                "fd_note": e.fd_note,
            }
            for e in bundle.syscalls
        ],
        "deps": {"direct": bundle.direct_deps, "indirect": bundle.indirect_deps},
        "capture_window_s": bundle.capture_window_s,
    }


def bundle_from_dict(doc: dict[str, Any]) -> TraceBundle:
    pkg = doc["package"]
    out = doc["outcome"]
    return TraceBundle(
        package=PackageRef(
            name=pkg["name"],
            version=pkg["version"],
            archive_kind=ArchiveKind(pkg["archive_kind"]),
            label=Label(pkg["label"]),
        ),
        outcome=InstallOutcome(
            behavior_class=BehaviorClass(out["behavior_class"]),
            behavior_group=BehaviorGroup(out["behavior_group"]),
            success=bool(out["success"]),
            duration_ms=int(out["duration_ms"]),
        ),
        filetop=tuple(
            FiletopRecord(
                timestamp_ms=int(r["timestamp_ms"]),
                process=r["process"],
                reads=int(r["reads"]),
                writes=int(r["writes"]),
                read_kb=float(r["read_kb"]),
                write_kb=float(r["write_kb"]),
                file_path=r["file_path"],
            )
            for r in doc.get("filetop") or ()
        ),
        opens=tuple(
            OpenRecord(
                timestamp_ms=int(r["timestamp_ms"]),
                process=r["process"],
                fd=int(r["fd"]),
                errno_name=r["errno_name"],
                path=r["path"],
            )
            for r in doc.get("opens") or ()
        ),
        tcp=tuple(
            TcpRecord(
                timestamp_ms=int(r["timestamp_ms"]),
                process=r["process"],
                remote_ip=r["remote_ip"],
                remote_port=int(r["remote_port"]),
                state=TcpState(r["state"]),
            )
            for r in doc.get("tcp") or ()
        ),
        syscalls=tuple(
            SyscallEvent(
                timestamp_ms=int(e["timestamp_ms"]),
                name=e["name"],
                errno_name=e.get("errno_name", ""),
                fd_note=e.get("fd_note", ""),
            )
            for e in doc.get("syscalls") or ()
        ),
        direct_deps=int(doc.get("deps", {}).get("direct", 0)),
        indirect_deps=int(doc.get("deps", {}).get("indirect", 0)),
        capture_window_s=int(doc.get("capture_window_s", DEFAULT_CAPTURE_WINDOW_S)),
    )


def bundle_to_json(bundle: TraceBundle) -> str:
    return json.dumps(bundle_to_dict(bundle), indent=2, sort_keys=False)


def bundle_from_json(text: str) -> TraceBundle:
    return bundle_from_dict(json.loads(text))


_TRACE_SECTIONS = ("filetop", "opens", "tcp", "syscalls")


@dataclass(frozen=True)
class LoadedBundle:
    """A bundle read from disk plus which trace sections its document lacked.

    A missing section marks a truncated capture; corpus cleaning filters such
    bundles as incomplete.
    """

    bundle: TraceBundle
    source: str = ""
    missing_sections: tuple[str, ...] = field(default=())


def read_bundle_document(text: str, source: str = "") -> LoadedBundle:
    doc = json.loads(text)
    missing = tuple(s for s in _TRACE_SECTIONS if s not in doc)
    return LoadedBundle(bundle=bundle_from_dict(doc), source=source, missing_sections=missing)

"""Parsers for the line-oriented logs written by the tracing subsystems.

Log grammar (UTF-8, LF line endings, ``#`` starts a comment line):

========== =====================================================
kind       columns
========== =====================================================
filetop    ``ts process reads writes read_kb write_kb path``
opensnoop  ``ts process fd errno path``   (errno ``-`` = none)
tcpconnect ``ts process ip port state``
syscall    ``ts name errno fdnote``       (``-`` = empty field)
install    free-form pip transcript, classified by phrase rules
========== =====================================================

Paths sit in the final column so they may contain internal spaces.  Malformed
data lines are collected, never silently dropped; a parser raises
:class:`FormatError` only when more than half the data lines fail, which
signals the wrong log kind rather than a truncated capture.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Generic, TypeVar

from dysec.trace_model import (
    BehaviorClass,
    FiletopRecord,
    InstallOutcome,
    OpenRecord,
    SyscallEvent,
    TcpRecord,
    TcpState,
    outcome_for,
)

R = TypeVar("R")


class FormatError(ValueError):
    """More than half of the data lines failed to parse."""


class LogKind(str, Enum):
    FILETOP = "filetop"
    OPENSNOOP = "opensnoop"
    TCPCONNECT = "tcpconnect"
    SYSCALL = "syscall"
    INSTALL = "install"


@dataclass(frozen=True)
class LogGrammar:
    kind: LogKind
    column_spec: tuple[str, ...]


GRAMMARS: dict[LogKind, LogGrammar] = {
    LogKind.FILETOP: LogGrammar(
        LogKind.FILETOP,
        ("ts", "process", "reads", "writes", "read_kb", "write_kb", "path"),
    ),
    LogKind.OPENSNOOP: LogGrammar(LogKind.OPENSNOOP, ("ts", "process", "fd", "errno", "path")),
    LogKind.TCPCONNECT: LogGrammar(LogKind.TCPCONNECT, ("ts", "process", "ip", "port", "state")),
    LogKind.SYSCALL: LogGrammar(LogKind.SYSCALL, ("ts", "name", "errno", "fdnote")),
    LogKind.INSTALL: LogGrammar(LogKind.INSTALL, ("text",)),
}

# Log file name suffix per kind, `<package>_<suffix>` under the trace dir.
LOG_FILE_SUFFIXES: dict[LogKind, str] = {
    LogKind.FILETOP: "filetop.log",
    LogKind.OPENSNOOP: "opens.log",
    LogKind.TCPCONNECT: "tcps.log",
    LogKind.SYSCALL: "syscall.log",
    LogKind.INSTALL: "inst.log",
}


@dataclass(frozen=True)
class MalformedLine:
    line_no: int
    line: str
    reason: str


@dataclass(frozen=True)
class ParseResult(Generic[R]):
    records: tuple[R, ...]
    malformed: tuple[MalformedLine, ...]


def _data_lines(text: str):
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield i, line


def _run_parser(text: str, parse_line: Callable[[str], R]) -> ParseResult[R]:
    records: list[R] = []
    malformed: list[MalformedLine] = []
    total = 0
    for line_no, line in _data_lines(text):
        total += 1
        try:
            records.append(parse_line(line))
        except (ValueError, IndexError) as exc:
            malformed.append(MalformedLine(line_no, line, str(exc)))
    if total and len(malformed) * 2 > total:
        raise FormatError(
            f"{len(malformed)} of {total} data lines malformed; wrong log kind?"
        )
    return ParseResult(tuple(records), tuple(malformed))


def _filetop_line(line: str) -> FiletopRecord:
    parts = line.split(None, 6)
    if len(parts) != 7:
        raise ValueError(f"expected 7 columns, got {len(parts)}")
    ts, process, reads, writes, read_kb, write_kb, path = parts
    rec = FiletopRecord(
        timestamp_ms=int(ts),
        process=process,
        reads=int(reads),
        writes=int(writes),
        read_kb=float(read_kb),
        write_kb=float(write_kb),
        file_path=path,
    )
    if rec.reads < 0 or rec.writes < 0 or rec.read_kb < 0 or rec.write_kb < 0:
        raise ValueError("negative activity count")
    return rec


def _opensnoop_line(line: str) -> OpenRecord:
    parts = line.split(None, 4)
    if len(parts) == 4:
        # Success form without an errno column.
        ts, process, fd, path = parts
        errno = ""
    elif len(parts) == 5:
        ts, process, fd, errno, path = parts
        if errno == "-":
            errno = ""
    else:
        raise ValueError(f"expected 4 or 5 columns, got {len(parts)}")
    return OpenRecord(
        timestamp_ms=int(ts), process=process, fd=int(fd), errno_name=errno, path=path
    )


def _tcpconnect_line(line: str) -> TcpRecord:
    parts = line.split()
    if len(parts) != 5:
        raise ValueError(f"expected 5 columns, got {len(parts)}")
    ts, process, ip, port, state = parts
    return TcpRecord(
        timestamp_ms=int(ts),
        process=process,
        remote_ip=ip,
        remote_port=int(port),
        state=TcpState(state),
    )


def _syscall_line(line: str) -> SyscallEvent:
    parts = line.split()
    if len(parts) != 4:
        raise ValueError(f"expected 4 columns, got {len(parts)}")
    ts, name, errno, fdnote = parts
    return SyscallEvent(
        timestamp_ms=int(ts),
        name=name,
        errno_name="" if errno == "-" else errno,
        fd_note="" if fdnote == "-" else fdnote,
    )


def parse_filetop(text: str) -> ParseResult[FiletopRecord]:
    return _run_parser(text, _filetop_line)


def parse_opensnoop(text: str) -> ParseResult[OpenRecord]:
    return _run_parser(text, _opensnoop_line)


def parse_tcpconnect(text: str) -> ParseResult[TcpRecord]:
    return _run_parser(text, _tcpconnect_line)


def parse_syscalls(text: str) -> ParseResult[SyscallEvent]:
    """Parse the syscall log; output order equals input order, not timestamp order."""
    return _run_parser(text, _syscall_line)


# ---------------------------------------------------------------------------
# Serialization back to the grammar (round-trip support for fixtures).
# ---------------------------------------------------------------------------

def render_filetop(records) -> str:
    return "".join(
        f"{r.timestamp_ms} {r.process} {r.reads} {r.writes} {r.read_kb} {r.write_kb} {r.file_path}\n"
        for r in records
    )


def render_opensnoop(records) -> str:
    return "".join(
        f"{r.timestamp_ms} {r.process} {r.fd} {r.errno_name or '-'} {r.path}\n" for r in records
    )


def render_tcpconnect(records) -> str:
    return "".join(
        f"{r.timestamp_ms} {r.process} {r.remote_ip} {r.remote_port} {r.state.value}\n"
        for r in records
    )


def render_syscalls(events) -> str:
    return "".join(
        f"{e.timestamp_ms} {e.name} {e.errno_name or '-'} {e.fd_note or '-'}\n" for e in events
    )


# ---------------------------------------------------------------------------
# Install transcript classification.
#
# First matching rule wins; rules are ordered so system behaviors dominate
# compatibility ones, which dominate normal ones, because a freeze or
# shutdown outranks whatever else the transcript happened to print.
# Matching is case-insensitive substring search.
# ---------------------------------------------------------------------------

INSTALL_PHRASE_RULES: tuple[tuple[str, BehaviorClass], ...] = (
    # system
    ("system shutdown", BehaviorClass.SYSTEM_SHUTDOWN),
    ("the system is going down", BehaviorClass.SYSTEM_SHUTDOWN),
    ("system freeze", BehaviorClass.SYSTEM_FREEZING),
    ("install timed out", BehaviorClass.INFINITE_WAITING),
    ("dependency resolution loop", BehaviorClass.VERSION_LOOPING),
    ("system prerequisites required", BehaviorClass.SYSTEM_PREREQUISITES_REQUIRED),
    # compatibility
    ("no matching distribution", BehaviorClass.MISMATCH_DISTRIBUTION),
    ("requires a different python", BehaviorClass.REQUIRES_DIFFERENT_VERSION),
    ("requires a different version", BehaviorClass.REQUIRES_DIFFERENT_VERSION),
    ("could not find a version that satisfies", BehaviorClass.MISSING_PACKAGE_VERSION),
    ("authentication required", BehaviorClass.UNEXPECTED_AUTH_REQUEST),
    ("user for ", BehaviorClass.UNEXPECTED_AUTH_REQUEST),
    ("no module named", BehaviorClass.MISSING_INSTALL_MODULE),
    ("unicodedecodeerror", BehaviorClass.UNICODE_FILE_NAMING),
    ("unicodeencodeerror", BehaviorClass.UNICODE_FILE_NAMING),
    # normal
    ("neither 'setup.py' nor 'pyproject.toml'", BehaviorClass.MISSING_SETUP_FILES),
    ("failed building wheel", BehaviorClass.FAILED_BUILD_WHEELS),
    ("metadata-generation-failed", BehaviorClass.NO_METADATA),
    ("successfully installed", BehaviorClass.SUCCESSFULLY_INSTALLED),
)


def classify_install_log(text: str, duration_ms: int = 0) -> InstallOutcome:
    """Classify a pip install transcript into a behavior class.

    Unknown transcripts default to ``no_metadata``: the install finished
    without the success phrase and produced nothing we can name.
    """
    lowered = text.lower()
    for phrase, behavior in INSTALL_PHRASE_RULES:
        if phrase in lowered:
            return outcome_for(behavior, duration_ms=duration_ms)
    return outcome_for(BehaviorClass.NO_METADATA, duration_ms=duration_ms)

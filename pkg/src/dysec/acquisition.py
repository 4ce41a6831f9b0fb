"""Per-package isolated capture campaigns behind a pluggable executor.

A campaign gives every accepted package a fresh working directory, runs the
executor for the capture window, validates the install transcript, aggregates
the five log files under ``Traces/<name>/`` and appends one manifest row per
attempted package to ``Traces/data.csv``.

Executors:

* ``ReplayFixtureExecutor`` — replays canned logs; what tests and desk-scale
  runs use.
* ``LocalProcessExecutor`` — venv + ``pip install`` with tracing tools shelled
  out per log kind.  Linux-only, exercised manually, not in CI.
* ``RemoteShellExecutor`` — placeholder for a fleet transport; raises
  ``TargetUnreachable`` unless a connect callable is injected.

Transient failures retry once: an unreachable target re-queues the package a
single time, and a corrupted capture (missing log file) is re-run in a fresh
environment.  A second failure is final.
"""

from __future__ import annotations

import csv
import shutil
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from dysec.trace_model import ACCEPTED_ARCHIVE_KINDS, PackageRef, TraceBundle
from dysec import trace_parsers
from dysec.trace_parsers import INSTALL_PHRASE_RULES, LOG_FILE_SUFFIXES, LogKind

WINDOW_GRACE_S = 2.0


class AcquisitionError(Exception):
    pass


class TargetUnreachable(AcquisitionError):
    pass


class CaptureIncomplete(AcquisitionError):
    pass


class Transport(str, Enum):
    LOCAL_PROCESS = "local_process"
    REMOTE_SHELL = "remote_shell"
    REPLAY_FIXTURE = "replay_fixture"


@dataclass(frozen=True)
class ExecutorTarget:
    id: str
    transport: Transport
    credentials: str = ""

    def __post_init__(self):
        if self.transport is Transport.REMOTE_SHELL and not self.credentials:
            raise ValueError(f"target {self.id}: remote_shell requires credentials")


class SessionStatus(str, Enum):
    PENDING = "pending"
    SUCCESS = "success"
    FAILED = "failed"


@dataclass
class CaptureSession:
    package: PackageRef
    target: ExecutorTarget
    window_s: int = 120
    workdir: Path | None = None
    log_paths: dict[str, Path] = field(default_factory=dict)
    status: SessionStatus = SessionStatus.PENDING
    failure_kind: str = ""  # "" | unreachable | corrupted | install
    capture_duration_s: float = 0.0
    attempts: int = 0


@dataclass(frozen=True)
class ManifestRow:
    name: str
    version: str
    status: str
    target_id: str


class CampaignManifest:
    """Append-only record of attempted packages."""

    def __init__(self):
        self._rows: list[ManifestRow] = []

    def append(self, row: ManifestRow) -> None:
        self._rows.append(row)

    @property
    def rows(self) -> tuple[ManifestRow, ...]:
        return tuple(self._rows)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["name", "version", "status", "target"])
            for row in self._rows:
                writer.writerow([row.name, row.version, row.status, row.target_id])


class Executor(Protocol):
    def capture(
        self, package: PackageRef, target: ExecutorTarget, window_s: int, workdir: Path
    ) -> CaptureSession: ...


def target_select(
    targets: Sequence[ExecutorTarget], index_source: np.random.Generator | int
) -> ExecutorTarget:
    """Uniform target choice from a seedable source; reproducible per seed."""
    if not targets:
        raise ValueError("targets must be non-empty")
    rng = (
        index_source
        if isinstance(index_source, np.random.Generator)
        else np.random.default_rng(index_source)
    )
    return targets[int(rng.integers(0, len(targets)))]


# ---------------------------------------------------------------------------
# Replay executor + fixtures
# ---------------------------------------------------------------------------

# Deps are not visible in any trace log, so the capture harness annotates
# them as comments in the install transcript.
_DEPS_DIRECT_MARKER = "# direct-deps:"
_DEPS_INDIRECT_MARKER = "# indirect-deps:"


def render_install_log(bundle: TraceBundle) -> str:
    """Install transcript for a fixture bundle, classifiable back to its outcome."""
    pkg = bundle.package
    lines = [
        f"Collecting {pkg.name}=={pkg.version}",
        f"{_DEPS_DIRECT_MARKER} {bundle.direct_deps}",
        f"{_DEPS_INDIRECT_MARKER} {bundle.indirect_deps}",
    ]
    if bundle.outcome.success:
        lines.append(f"Successfully installed {pkg.name}-{pkg.version}")
    else:
        for phrase, behavior in INSTALL_PHRASE_RULES:
            if behavior is bundle.outcome.behavior_class:
                lines.append(f"ERROR: {phrase} ({pkg.name})")
                break
    return "\n".join(lines) + "\n"


def render_fixture_logs(bundle: TraceBundle) -> dict[str, str]:
    """The five log texts for one bundle, keyed by file suffix."""
    return {
        LOG_FILE_SUFFIXES[LogKind.FILETOP]: trace_parsers.render_filetop(bundle.filetop),
        LOG_FILE_SUFFIXES[LogKind.OPENSNOOP]: trace_parsers.render_opensnoop(bundle.opens),
        LOG_FILE_SUFFIXES[LogKind.TCPCONNECT]: trace_parsers.render_tcpconnect(bundle.tcp),
        LOG_FILE_SUFFIXES[LogKind.SYSCALL]: trace_parsers.render_syscalls(bundle.syscalls),
        LOG_FILE_SUFFIXES[LogKind.INSTALL]: render_install_log(bundle),
    }


class ReplayFixtureExecutor:
    """Serve canned logs per package, with optional simulated faults."""

    def __init__(
        self,
        logs_by_package: dict[str, dict[str, str]],
        fail_once: Iterable[str] = (),
        fail_always: Iterable[str] = (),
        unreachable_once: Iterable[str] = (),
    ):
        self._logs = logs_by_package
        self._fail_once = set(fail_once)
        self._fail_always = set(fail_always)
        self._unreachable_once = set(unreachable_once)
        # Per-package counters; campaign workers never share a package.
        self._attempts: dict[str, int] = {}

    @classmethod
    def from_bundles(cls, bundles: Sequence[TraceBundle], **kwargs) -> "ReplayFixtureExecutor":
        return cls(
            {b.package.name: render_fixture_logs(b) for b in bundles}, **kwargs
        )

    def capture(
        self, package: PackageRef, target: ExecutorTarget, window_s: int, workdir: Path
    ) -> CaptureSession:
        name = package.name
        attempt = self._attempts.get(name, 0) + 1
        self._attempts[name] = attempt
        if name in self._unreachable_once and attempt == 1:
            raise TargetUnreachable(f"{target.id}: simulated transport failure for {name}")
        if name not in self._logs:
            raise CaptureIncomplete(f"no fixture logs for {name}")

        workdir.mkdir(parents=True, exist_ok=True)
        drop_syscall_log = name in self._fail_always or (
            name in self._fail_once and attempt == 1
        )
        session = CaptureSession(
            package=package,
            target=target,
            window_s=window_s,
            workdir=workdir,
            attempts=attempt,
            capture_duration_s=window_s + 0.5,  # simulated stop overhead < grace
        )
        for suffix, text in self._logs[name].items():
            if drop_syscall_log and suffix == LOG_FILE_SUFFIXES[LogKind.SYSCALL]:
                continue
            path = workdir / f"{name}_{suffix}"
            path.write_text(text)
            session.log_paths[suffix] = path
        session.status = SessionStatus.SUCCESS
        return session


class RemoteShellExecutor:
    """Fleet transport seam; the actual shell channel must be injected."""

    def __init__(self, connect: Callable[[ExecutorTarget], Executor] | None = None):
        self._connect = connect

    def capture(self, package, target, window_s, workdir):
        if self._connect is None:
            raise TargetUnreachable(f"{target.id}: no remote transport configured")
        return self._connect(target).capture(package, target, window_s, workdir)


class LocalProcessExecutor:
    """Real venv + pip install capture with tracing tools shelled out.

    Linux-only and exercised manually: the tracing commands default to the
    bcc tool names and need root.  Kept behind the executor seam so the rest
    of the pipeline stays testable everywhere.
    """

    def __init__(
        self,
        tracer_commands: dict[str, str] | None = None,
        pip_args: Sequence[str] = ("--no-index",),
    ):
        self._tracers = tracer_commands or {
            LOG_FILE_SUFFIXES[LogKind.FILETOP]: "filetop",
            LOG_FILE_SUFFIXES[LogKind.OPENSNOOP]: "opensnoop",
            LOG_FILE_SUFFIXES[LogKind.TCPCONNECT]: "tcpconnect",
            LOG_FILE_SUFFIXES[LogKind.SYSCALL]: "syscall",
        }
        self._pip_args = tuple(pip_args)

    def capture(self, package, target, window_s, workdir):
        workdir.mkdir(parents=True, exist_ok=True)
        session = CaptureSession(
            package=package, target=target, window_s=window_s, workdir=workdir, attempts=1
        )
        started = time.monotonic()
        procs = []
        try:
            for suffix, command in self._tracers.items():
                log_path = workdir / f"{package.name}_{suffix}"
                session.log_paths[suffix] = log_path
                with open(log_path, "w") as sink:
                    procs.append(
                        subprocess.Popen(
                            command.split(), stdout=sink, stderr=subprocess.STDOUT
                        )
                    )
            # Per-package environment name; the attempt-numbered workdir
            # already resolves collisions between retries.
            venv_dir = workdir / package.name
            subprocess.run(
                ["python3", "-m", "venv", str(venv_dir)], check=True, capture_output=True
            )
            install_log = workdir / f"{package.name}_{LOG_FILE_SUFFIXES[LogKind.INSTALL]}"
            session.log_paths[LOG_FILE_SUFFIXES[LogKind.INSTALL]] = install_log
            with open(install_log, "w") as sink:
                subprocess.run(
                    [str(venv_dir / "bin" / "pip"), "install", *self._pip_args,
                     f"{package.name}=={package.version}"],
                    stdout=sink, stderr=subprocess.STDOUT, timeout=window_s,
                )
            remaining = window_s - (time.monotonic() - started)
            if remaining > 0:
                time.sleep(remaining)
        except subprocess.TimeoutExpired:
            pass
        except (OSError, subprocess.SubprocessError) as exc:
            raise CaptureIncomplete(f"local capture failed: {exc}") from exc
        finally:
            for proc in procs:
                proc.terminate()
        session.capture_duration_s = time.monotonic() - started
        session.status = SessionStatus.SUCCESS
        return session


def executors_for(
    targets: Sequence[ExecutorTarget], replay: ReplayFixtureExecutor | None = None
) -> dict[Transport, Executor]:
    table: dict[Transport, Executor] = {
        Transport.LOCAL_PROCESS: LocalProcessExecutor(),
        Transport.REMOTE_SHELL: RemoteShellExecutor(),
    }
    if replay is not None:
        table[Transport.REPLAY_FIXTURE] = replay
    return table


# ---------------------------------------------------------------------------
# Campaign
# ---------------------------------------------------------------------------

def _session_logs_complete(session: CaptureSession) -> bool:
    for suffix in LOG_FILE_SUFFIXES.values():
        path = session.log_paths.get(suffix)
        if path is None or not path.exists():
            return False
    return True


def _read_deps(install_text: str) -> tuple[int, int]:
    direct = indirect = 0
    for line in install_text.splitlines():
        if line.startswith(_DEPS_DIRECT_MARKER):
            direct = int(line.split(":", 1)[1])
        elif line.startswith(_DEPS_INDIRECT_MARKER):
            indirect = int(line.split(":", 1)[1])
    return direct, indirect


def bundle_from_session(session: CaptureSession) -> TraceBundle:
    """Parse a completed session's logs into a bundle."""
    texts = {suffix: session.log_paths[suffix].read_text() for suffix in LOG_FILE_SUFFIXES.values()}
    install_text = texts[LOG_FILE_SUFFIXES[LogKind.INSTALL]]
    outcome = trace_parsers.classify_install_log(install_text)
    direct, indirect = _read_deps(install_text)
    syscalls = trace_parsers.parse_syscalls(texts[LOG_FILE_SUFFIXES[LogKind.SYSCALL]]).records
    # Bundles are timestamp-ordered; a stable sort keeps log order on ties.
    syscalls = tuple(sorted(syscalls, key=lambda e: e.timestamp_ms))
    return TraceBundle(
        package=session.package,
        outcome=outcome,
        filetop=trace_parsers.parse_filetop(texts[LOG_FILE_SUFFIXES[LogKind.FILETOP]]).records,
        opens=trace_parsers.parse_opensnoop(texts[LOG_FILE_SUFFIXES[LogKind.OPENSNOOP]]).records,
        tcp=trace_parsers.parse_tcpconnect(texts[LOG_FILE_SUFFIXES[LogKind.TCPCONNECT]]).records,
        syscalls=syscalls,
        direct_deps=direct,
        indirect_deps=indirect,
        capture_window_s=session.window_s,
    )


@dataclass
class CampaignResult:
    bundles: list[TraceBundle]
    manifest: CampaignManifest
    sessions: list[CaptureSession]


def _capture_with_retry(
    package: PackageRef,
    target: ExecutorTarget,
    executor: Executor,
    window_s: int,
    sessions_root: Path,
) -> CaptureSession:
    """One capture attempt plus a single retry on transient failure."""
    session: CaptureSession | None = None
    for attempt in (1, 2):
        workdir = sessions_root / f"{package.name}-a{attempt}"
        try:
            session = executor.capture(package, target, window_s, workdir)
            session.attempts = attempt
        except TargetUnreachable:
            session = CaptureSession(
                package=package, target=target, window_s=window_s,
                workdir=workdir, status=SessionStatus.FAILED,
                failure_kind="unreachable", attempts=attempt,
            )
            continue  # re-queue once
        except CaptureIncomplete:
            session = CaptureSession(
                package=package, target=target, window_s=window_s,
                workdir=workdir, status=SessionStatus.FAILED,
                failure_kind="corrupted", attempts=attempt,
            )
            continue
        if not _session_logs_complete(session):
            session.status = SessionStatus.FAILED
            session.failure_kind = "corrupted"
            continue  # corrupted capture: one fresh-environment retry
        break
    return session


def run_campaign(
    packages: Sequence[PackageRef],
    targets: Sequence[ExecutorTarget],
    executors: dict[Transport, Executor],
    out_dir: str | Path,
    window_s: int = 120,
    seed: int = 0,
    cleanup_sessions: bool = True,
    parallel: bool = True,
) -> CampaignResult:
    """Capture traces for every accepted package.

    Packages outside the accepted archive kinds are skipped without a
    manifest row.  Every attempted package lands in the manifest exactly
    once, success or not.

    Targets are assigned up front in input order (so a seed fixes the
    assignment), captures run in parallel across targets with at most one
    session per target at a time, and aggregation plus the manifest happen
    on the calling thread in input order — output is identical either way.
    """
    if not packages:
        raise ValueError("packages must be non-empty")
    out_dir = Path(out_dir)
    traces_dir = out_dir / "Traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    sessions_root = out_dir / ".sessions"
    rng = np.random.default_rng(seed)

    assignments: list[tuple[int, PackageRef, ExecutorTarget]] = []
    for index, package in enumerate(packages):
        if package.archive_kind not in ACCEPTED_ARCHIVE_KINDS:
            continue
        assignments.append((index, package, target_select(targets, rng)))

    per_target: dict[str, list[tuple[int, PackageRef, ExecutorTarget]]] = {}
    for item in assignments:
        per_target.setdefault(item[2].id, []).append(item)

    def drain(queue: list[tuple[int, PackageRef, ExecutorTarget]]):
        out = []
        for index, package, target in queue:
            executor = executors[target.transport]
            out.append(
                (index, _capture_with_retry(package, target, executor, window_s, sessions_root))
            )
        return out

    captured: dict[int, CaptureSession] = {}
    if parallel and len(per_target) > 1:
        with ThreadPoolExecutor(max_workers=len(per_target)) as pool:
            for chunk in pool.map(drain, per_target.values()):
                for index, session in chunk:
                    captured[index] = session
    else:
        for queue in per_target.values():
            for index, session in drain(queue):
                captured[index] = session

    manifest = CampaignManifest()
    bundles: list[TraceBundle] = []
    sessions: list[CaptureSession] = []
    for index, package, target in assignments:
        session = captured[index]
        sessions.append(session)
        status = "failed"
        if session.status is SessionStatus.SUCCESS:
            bundle = bundle_from_session(session)
            package_dir = traces_dir / package.name
            package_dir.mkdir(parents=True, exist_ok=True)
            for suffix, src in session.log_paths.items():
                shutil.copyfile(src, package_dir / f"{package.name}_{suffix}")
            if bundle.outcome.success:
                status = "success"
            else:
                # Failed installs keep their transcript under the err log too.
                err_path = package_dir / f"{package.name}_err.log"
                shutil.copyfile(
                    session.log_paths[LOG_FILE_SUFFIXES[LogKind.INSTALL]], err_path
                )
                session.log_paths["err.log"] = err_path
                session.failure_kind = "install"
            bundles.append(bundle)
        manifest.append(
            ManifestRow(package.name, package.version, status, target.id)
        )
        if cleanup_sessions and session.workdir and session.workdir.exists():
            shutil.rmtree(session.workdir)
            for earlier in range(1, session.attempts):
                stale = sessions_root / f"{package.name}-a{earlier}"
                if stale.exists():
                    shutil.rmtree(stale)

    manifest.write_csv(traces_dir / "data.csv")
    return CampaignResult(bundles=bundles, manifest=manifest, sessions=sessions)


def retrace_failed(
    sessions: Sequence[CaptureSession],
    executors: dict[Transport, Executor],
    sessions_root: str | Path,
    window_s: int = 120,
) -> list[CaptureSession]:
    """Re-run corrupted sessions once in a fresh environment.

    Sessions already retried (attempts >= 2), successful ones, and plain
    install failures pass through unchanged.
    """
    sessions_root = Path(sessions_root)
    updated: list[CaptureSession] = []
    for session in sessions:
        retryable = (
            session.status is SessionStatus.FAILED
            and session.failure_kind == "corrupted"
            and session.attempts < 2
        )
        if not retryable:
            updated.append(session)
            continue
        attempt = session.attempts + 1
        workdir = sessions_root / f"{session.package.name}-a{attempt}"
        executor = executors[session.target.transport]
        try:
            fresh = executor.capture(session.package, session.target, window_s, workdir)
            fresh.attempts = attempt
            if not _session_logs_complete(fresh):
                fresh.status = SessionStatus.FAILED
                fresh.failure_kind = "corrupted"
        except (TargetUnreachable, CaptureIncomplete):
            fresh = CaptureSession(
                package=session.package, target=session.target, window_s=window_s,
                workdir=workdir, status=SessionStatus.FAILED,
                failure_kind="corrupted", attempts=attempt,
            )
        updated.append(fresh)
    return updated

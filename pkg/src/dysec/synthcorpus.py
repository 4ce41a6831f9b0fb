"""Synthetic labeled trace bundles for desk-scale end-to-end testing.

Benign bundles mix routine install motifs (metadata stat chains, sequential
reads, mmap loading) with neutral noise syscalls.  Malicious bundles keep
that baseline and additionally carry injected behavioral signatures: the
pattern-catalog sequences plus network/directory motifs (IRC-port
connections, probes of /root/.ssh).  Generation is fully determined by the
profile seed.

``noise_level`` widens event counts, lets benign bundles show mild
anomalies (stray failed opens, occasional odd ports) without ever emitting
a malicious signature, and corrupts extra copies of injected signatures;
the first copy of each requested signature always stays intact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from dysec.features import PatternTemplate, default_pattern_catalog
from dysec.trace_model import (
    ArchiveKind,
    BehaviorClass,
    FiletopRecord,
    Label,
    OpenRecord,
    PackageRef,
    SyscallEvent,
    TcpRecord,
    TcpState,
    TraceBundle,
    outcome_for,
)


class InvalidProfile(ValueError):
    pass


BENIGN_PATTERN_CATEGORIES = frozenset({"Pattern_1", "Pattern_2", "Pattern_6"})

# Network/directory motifs that are not syscall-sequence templates.
SIGNATURE_PORT_6667 = "port_6667_connect"
SIGNATURE_ROOT_SSH = "root_ssh_probe"
EXTRA_MALICIOUS_SIGNATURES = (SIGNATURE_PORT_6667, SIGNATURE_ROOT_SSH)

# The probe signature every malicious corpus bundle carries; a single
# class-exclusive marker keeps a zero-noise corpus separable by one split.
CANONICAL_MALICIOUS_SIGNATURE = "enoent_probe"

_CATALOG = default_pattern_catalog()
_TEMPLATES: dict[str, PatternTemplate] = {t.pattern_id: t for t in _CATALOG.entries}

MALICIOUS_SIGNATURES: tuple[str, ...] = tuple(
    t.pattern_id
    for t in _CATALOG.entries
    if t.category not in BENIGN_PATTERN_CATEGORIES
) + EXTRA_MALICIOUS_SIGNATURES

BENIGN_MOTIFS: tuple[str, ...] = tuple(
    t.pattern_id for t in _CATALOG.entries if t.category in BENIGN_PATTERN_CATEGORIES
)

# Syscalls that cannot extend or complete any catalog template.
_NOISE_SYSCALLS = (
    "getpid", "brk", "futex", "gettimeofday", "epoll_wait", "sched_yield",
    "munmap", "getcwd", "getuid",
)

_BENIGN_OPEN_PATHS = (
    "/usr/lib/python3/os.py",
    "/usr/lib/python3/site.py",
    "/tmp/build/setup.py",
    "/tmp/build/pyproject.toml",
    "/etc/ld.so.cache",
    "/work/pkg/__init__.py",
)


@dataclass(frozen=True)
class SynthProfile:
    label: Label
    seed: int
    base_event_rate: float = 3.0  # syscall events per second of capture
    injected_signatures: tuple[str, ...] = ()
    noise_level: float = 0.2
    package_name: str = ""  # derived from the seed when empty

    def __post_init__(self):
        if not 0.0 <= self.noise_level <= 1.0:
            raise InvalidProfile(f"noise_level out of [0,1]: {self.noise_level}")
        unknown = [
            s
            for s in self.injected_signatures
            if s not in _TEMPLATES and s not in EXTRA_MALICIOUS_SIGNATURES
        ]
        if unknown:
            raise InvalidProfile(f"unknown signature ids: {unknown}")
        if self.label is Label.BENIGN:
            bad = [s for s in self.injected_signatures if s in MALICIOUS_SIGNATURES]
            if bad:
                raise InvalidProfile(f"benign profile requests malicious-only: {bad}")


def _events_for_template(template: PatternTemplate) -> list[SyscallEvent]:
    events = []
    for token in template.sequence:
        name, _, quals = token.partition("|")
        errno = ""
        fd_note = ""
        for qual in quals.split("|") if quals else ():
            if qual.startswith("errno="):
                errno = qual[6:]
            else:
                fd_note = qual
        events.append(SyscallEvent(timestamp_ms=0, name=name, errno_name=errno, fd_note=fd_note))
    return events


def _noise_block(rng: np.random.Generator, size: int) -> list[SyscallEvent]:
    picks = rng.integers(0, len(_NOISE_SYSCALLS), size=size)
    return [SyscallEvent(0, _NOISE_SYSCALLS[i]) for i in picks]


def _corrupt(rng: np.random.Generator, block: list[SyscallEvent]) -> list[SyscallEvent]:
    if len(block) <= 1:
        return block
    drop = int(rng.integers(0, len(block)))
    return block[:drop] + block[drop + 1 :]


def synth_bundle(profile: SynthProfile) -> TraceBundle:
    """Generate one bundle; identical profiles yield byte-identical bundles."""
    rng = np.random.default_rng(profile.seed)
    window_s = 120
    noise = profile.noise_level

    n_target = int(profile.base_event_rate * window_s)
    n_target = max(60, min(2000, int(n_target * (1.0 + noise * (rng.random() - 0.5)))))

    blocks: list[list[SyscallEvent]] = []

    # Benign baseline: both classes install something that mostly works.
    # At least one motif per benign category, then extra random draws.
    for category in sorted(BENIGN_PATTERN_CATEGORIES):
        choices = [t for t in _CATALOG.entries if t.category == category]
        blocks.append(_events_for_template(choices[int(rng.integers(0, len(choices)))]))
    for _ in range(int(rng.integers(0, 4))):
        motif = BENIGN_MOTIFS[int(rng.integers(0, len(BENIGN_MOTIFS)))]
        blocks.append(_events_for_template(_TEMPLATES[motif]))

    syscall_signatures = [s for s in profile.injected_signatures if s in _TEMPLATES]
    for sig in syscall_signatures:
        template = _TEMPLATES[sig]
        copies = 2 + int(rng.integers(0, 3))
        for copy_index in range(copies):
            block = _events_for_template(template)
            if copy_index > 0 and rng.random() < noise:
                block = _corrupt(rng, block)
            blocks.append(block)

    used = sum(len(b) for b in blocks)
    n_noise_events = max(0, n_target - used)
    # Split the noise budget into separators so blocks never touch.
    n_gaps = len(blocks) + 1
    share = max(1, n_noise_events // n_gaps)
    order = rng.permutation(len(blocks))
    stream: list[SyscallEvent] = []
    stream.extend(_noise_block(rng, share))
    for b_idx in order:
        stream.extend(blocks[b_idx])
        stream.extend(_noise_block(rng, share))

    ts = 0
    events: list[SyscallEvent] = []
    for e in stream:
        ts += int(rng.integers(1, 30))
        events.append(SyscallEvent(ts, e.name, e.errno_name, e.fd_note))

    # Opensnoop records
    opens: list[OpenRecord] = []
    t = 10
    for _ in range(4 + int(rng.integers(0, 5))):
        path = _BENIGN_OPEN_PATHS[int(rng.integers(0, len(_BENIGN_OPEN_PATHS)))]
        opens.append(OpenRecord(t, "pip", 3 + int(rng.integers(0, 40)), "", path))
        t += int(rng.integers(5, 400))
    if noise > 0:
        for _ in range(int(rng.binomial(3, noise * 0.5))):
            opens.append(OpenRecord(t, "python3", -1, "ENOENT", "/tmp/build/missing.cfg"))
            t += int(rng.integers(5, 200))
    if SIGNATURE_ROOT_SSH in profile.injected_signatures:
        for target in ("/root/.ssh/id_rsa", "/root/.ssh/known_hosts", "/root/.bash_history"):
            opens.append(OpenRecord(t, "python3", -1, "EACCES", target))
            t += int(rng.integers(2, 40))

    # TCP records
    tcp: list[TcpRecord] = []
    t = 50
    for _ in range(1 + int(rng.integers(0, 3))):
        ip = f"151.101.{int(rng.integers(0, 64))}.{int(rng.integers(1, 254))}"
        tcp.append(TcpRecord(t, "pip", ip, 443, TcpState.ESTABLISHED))
        t += int(rng.integers(10, 800))
    if noise > 0 and rng.random() < noise * 0.3:
        tcp.append(
            TcpRecord(t, "pip", f"10.0.0.{int(rng.integers(1, 254))}",
                      int(rng.integers(1024, 9000)), TcpState.ATTEMPTED)
        )
    if SIGNATURE_PORT_6667 in profile.injected_signatures:
        c2 = f"203.0.113.{int(rng.integers(1, 254))}"
        for _ in range(1 + int(rng.integers(0, 3))):
            tcp.append(TcpRecord(t, "python3", c2, 6667, TcpState.ESTABLISHED))
            t += int(rng.integers(5, 120))

    # Filetop records
    filetop: list[FiletopRecord] = []
    t = 20
    for _ in range(3 + int(rng.integers(0, 6))):
        filetop.append(
            FiletopRecord(
                t,
                "pip" if rng.random() < 0.7 else "python3",
                reads=int(rng.integers(1, 120)),
                writes=int(rng.integers(0, 40)),
                read_kb=float(np.round(rng.uniform(1, 900), 1)),
                write_kb=float(np.round(rng.uniform(0, 300), 1)),
                file_path=_BENIGN_OPEN_PATHS[int(rng.integers(0, len(_BENIGN_OPEN_PATHS)))],
            )
        )
        t += int(rng.integers(10, 500))

    if profile.label is Label.MALICIOUS and rng.random() < 0.08:
        behavior = BehaviorClass.UNEXPECTED_AUTH_REQUEST if rng.random() < 0.5 \
            else BehaviorClass.SYSTEM_FREEZING
    elif rng.random() < 0.06:
        behavior = BehaviorClass.FAILED_BUILD_WHEELS
    else:
        behavior = BehaviorClass.SUCCESSFULLY_INSTALLED
    duration = int(rng.integers(900, 45000))

    index = int(rng.integers(0, 10_000_000))
    prefix = "mal" if profile.label is Label.MALICIOUS else "ben"
    package = PackageRef(
        name=profile.package_name or f"synth-{prefix}-{index:07d}",
        version=f"{int(rng.integers(0, 4))}.{int(rng.integers(0, 10))}.{int(rng.integers(0, 10))}",
        archive_kind=ArchiveKind.TAR_GZ if rng.random() < 0.8 else ArchiveKind.ZIP,
        label=profile.label,
    )
    return TraceBundle(
        package=package,
        outcome=outcome_for(behavior, duration_ms=duration),
        filetop=tuple(filetop),
        opens=tuple(opens),
        tcp=tuple(tcp),
        syscalls=tuple(events),
        direct_deps=int(rng.integers(0, 6)),
        indirect_deps=int(rng.integers(0, 14)),
        capture_window_s=window_s,
    )


@dataclass(frozen=True)
class SynthCorpus:
    bundles: tuple[TraceBundle, ...]
    profiles: tuple[SynthProfile, ...]
    metadata: dict = field(default_factory=dict)


def synth_corpus(
    n_benign: int,
    n_malicious: int,
    seed: int = 0,
    noise_level: float = 0.2,
    base_event_rate: float = 3.0,
) -> SynthCorpus:
    """Labeled corpus of ``n_benign + n_malicious`` bundles.

    Every malicious profile carries the canonical probe signature plus a
    random draw of additional malicious signatures, so signature presence
    stays class-exclusive while individual bundles vary.
    """
    if n_benign < 1 or n_malicious < 1:
        raise ValueError("need at least one bundle per class")
    rng = np.random.default_rng(seed)
    profiles: list[SynthProfile] = []
    for i in range(n_benign):
        profiles.append(
            SynthProfile(
                label=Label.BENIGN,
                seed=int(rng.integers(0, 2**63 - 1)),
                base_event_rate=base_event_rate,
                noise_level=noise_level,
                package_name=f"synth-ben-{i:05d}",
            )
        )
    pool = [s for s in MALICIOUS_SIGNATURES if s != CANONICAL_MALICIOUS_SIGNATURE]
    for i in range(n_malicious):
        k = 2 + int(rng.integers(0, 3))
        picks = rng.choice(len(pool), size=min(k, len(pool)), replace=False)
        signatures = (CANONICAL_MALICIOUS_SIGNATURE,) + tuple(pool[i] for i in sorted(picks))
        profiles.append(
            SynthProfile(
                label=Label.MALICIOUS,
                seed=int(rng.integers(0, 2**63 - 1)),
                base_event_rate=base_event_rate,
                injected_signatures=signatures,
                noise_level=noise_level,
                package_name=f"synth-mal-{i:05d}",
            )
        )

    bundles = tuple(synth_bundle(p) for p in profiles)

    signature_rates: dict[str, float] = {}
    for sig in MALICIOUS_SIGNATURES:
        hits = sum(1 for p in profiles if sig in p.injected_signatures)
        signature_rates[sig] = hits / n_malicious
    metadata = {
        "seed": seed,
        "n_benign": n_benign,
        "n_malicious": n_malicious,
        "noise_level": noise_level,
        "base_event_rate": base_event_rate,
        "bundle_seeds": [p.seed for p in profiles],
        "malicious_signature_rates": signature_rates,
        "benign_motifs": list(BENIGN_MOTIFS),
    }
    return SynthCorpus(bundles=bundles, profiles=tuple(profiles), metadata=metadata)

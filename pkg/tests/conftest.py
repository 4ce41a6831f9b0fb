from __future__ import annotations

import numpy as np
import pytest

from dysec.synthcorpus import synth_corpus
from dysec.trace_model import (
    BehaviorClass,
    FiletopRecord,
    OpenRecord,
    PackageRef,
    SyscallEvent,
    TcpRecord,
    TcpState,
    TraceBundle,
    outcome_for,
)


def make_bundle(**overrides) -> TraceBundle:
    """A small well-formed bundle; any field overridable."""
    defaults = dict(
        package=PackageRef(name="demo", version="1.0"),
        outcome=outcome_for(BehaviorClass.SUCCESSFULLY_INSTALLED, duration_ms=1200),
        filetop=(
            FiletopRecord(100, "pip", 12, 3, 340.0, 16.5, "/tmp/pkg/setup.py"),
        ),
        opens=(
            OpenRecord(150, "pip", 3, "", "/usr/lib/python3/os.py"),
        ),
        tcp=(
            TcpRecord(200, "pip", "151.101.0.1", 443, TcpState.ESTABLISHED),
        ),
        syscalls=(
            SyscallEvent(5, "openat"),
            SyscallEvent(9, "fstat"),
            SyscallEvent(12, "read"),
        ),
        direct_deps=1,
        indirect_deps=2,
    )
    defaults.update(overrides)
    return TraceBundle(**defaults)


@pytest.fixture(scope="session")
def small_corpus():
    """60 benign + 60 malicious deterministic bundles shared across tests."""
    return synth_corpus(60, 60, seed=11, noise_level=0.2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)

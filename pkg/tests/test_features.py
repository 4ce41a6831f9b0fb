from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_bundle

from dysec.features import (
    ExtractionError,
    MinMaxBounds,
    apply_minmax,
    clean_corpus,
    default_feature_catalog,
    default_pattern_catalog,
    event_token,
    extract_candidates,
    extract_ngrams,
    load_pattern_catalog,
    match_patterns,
    minmax_normalize,
    normalize_package_name,
    pattern_catalog_from_json,
    pattern_catalog_to_json,
    standardize_path,
    vectors_to_matrix,
)
from dysec.trace_model import (
    LoadedBundle,
    OpenRecord,
    SyscallEvent,
    TcpRecord,
    TcpState,
)


def ev(name, errno="", fd=""):
    return SyscallEvent(0, name, errno, fd)


def seq(*names):
    return tuple(ev(n) for n in names)


# --- catalog shape -----------------------------------------------------------

def test_catalog_counts_per_category():
    catalog = default_feature_catalog()
    assert len(catalog.names) == 62
    assert len(set(catalog.names)) == 62
    expected = {
        "FiletopTraces": 9,
        "InstallTraces": 6,
        "OpensnoopTraces": 12,
        "TCPTraces": 8,
        "SystemCallTraces": 17,
        "PatternTraces": 10,
    }
    for category, count in expected.items():
        assert len(catalog.by_category(category)) == count
    assert all(k in ("numerical", "categorical-derived") for k in catalog.kinds.values())


# --- n-grams -----------------------------------------------------------------

def test_ngram_single_window():
    profile = extract_ngrams(seq("newfstatat", "openat", "fstat"), n_range=(3,))
    assert profile.counts == {"newfstatat->openat->fstat": 1}


def test_ngram_empty_events():
    assert extract_ngrams((), n_range=(3, 4, 5)).counts == {}


def naive_ngrams(tokens, sizes):
    counts = {}
    for n in sizes:
        for i in range(len(tokens) - n + 1):
            key = "->".join(tokens[i : i + n])
            counts[key] = counts.get(key, 0) + 1
    return counts


def test_ngram_matches_sliding_window_oracle(rng):
    names = ["openat", "read", "close", "fstat", "mmap", "ioctl"]
    events = tuple(ev(names[i]) for i in rng.integers(0, len(names), size=200))
    profile = extract_ngrams(events, n_range=(4,))
    tokens = [event_token(e) for e in events]
    assert profile.counts == naive_ngrams(tokens, [4])


@given(st.lists(st.sampled_from(["a", "b", "c"]), max_size=60), st.sets(st.integers(2, 6), min_size=1))
@settings(max_examples=100, deadline=None)
def test_gram_count_conservation(names, sizes):
    events = tuple(ev(n) for n in names)
    profile = extract_ngrams(events, n_range=sizes)
    for n in sizes:
        total = sum(c for g, c in profile.counts.items() if g.count("->") == n - 1)
        assert total == max(0, len(events) - n + 1)


def test_ngram_rejects_out_of_range_sizes():
    with pytest.raises(ValueError):
        extract_ngrams((), n_range=(1,))
    with pytest.raises(ValueError):
        extract_ngrams((), n_range=(7,))


def test_qualifiers_appear_in_tokens():
    token = event_token(ev("fstat", errno="ENOENT"))
    assert token == "fstat|errno=ENOENT"
    assert event_token(ev("close", fd="fd=1")) == "close|fd=1"
    assert event_token(ev("prctl", fd="no-fd")) == "prctl|no-fd"


# --- pattern matching ---------------------------------------------------------

def test_enoent_chain_counts_as_pattern_10():
    events = seq("getpid") + (
        ev("newfstatat"), ev("openat"), ev("fstat", errno="ENOENT"),
    ) + seq("brk")
    counts = match_patterns(events, default_pattern_catalog())
    assert counts["Pattern_10"] == 1


def test_socket_chain_absent_in_benign_stream(small_corpus):
    benign = next(b for b in small_corpus.bundles if b.package.label.value == "benign")
    counts = match_patterns(benign.syscalls, default_pattern_catalog())
    assert counts["Pattern_4"] == 0


def test_back_to_back_repetition_counts_each():
    chain = ("socket", "bind", "listen", "accept", "execve")
    events = seq(*(chain * 3))
    counts = match_patterns(events, default_pattern_catalog())
    assert counts["Pattern_4"] == 3


def test_overlapping_occurrences_count_non_overlapping():
    # read read read newfstatat | read read read newfstatat: windows overlap
    # at the boundary but matching is left-to-right non-overlapping.
    events = seq("read", "read", "read", "read", "newfstatat")
    counts = match_patterns(events, default_pattern_catalog())
    assert counts["Pattern_2"] == 1


def test_template_qualifiers_must_match_exactly():
    catalog = default_pattern_catalog()
    no_errno = seq("newfstatat", "openat", "fstat")
    assert match_patterns(no_errno, catalog)["Pattern_10"] == 0
    wrong_fd = (ev("fcntl"), ev("fcntl"), ev("close", fd="fd=2"))
    assert match_patterns(wrong_fd, catalog)["Pattern_7"] == 0


def test_pattern_ngram_consistency(small_corpus):
    from dysec.features import PatternCatalog

    catalog = default_pattern_catalog()
    for bundle in small_corpus.bundles[:10]:
        profile = extract_ngrams(bundle.syscalls, n_range=(2, 3, 4, 5))
        for template in catalog.entries:
            solo = PatternCatalog(entries=(template,))
            hits = match_patterns(bundle.syscalls, solo)[template.category]
            gram = "->".join(template.sequence)
            assert profile.counts.get(gram, 0) >= hits


def test_pattern_catalog_json_round_trip(tmp_path):
    catalog = default_pattern_catalog()
    text = pattern_catalog_to_json(catalog)
    assert pattern_catalog_from_json(text) == catalog
    path = tmp_path / "patterns.json"
    path.write_text(text)
    assert load_pattern_catalog(path) == catalog


def test_catalog_has_all_ten_categories():
    catalog = default_pattern_catalog()
    assert {t.category for t in catalog.entries} == {f"Pattern_{i}" for i in range(1, 11)}


# --- candidate extraction ------------------------------------------------------

def test_root_dir_access_counts_opens():
    bundle = make_bundle(
        opens=(
            OpenRecord(1, "python3", -1, "EACCES", "/root/.ssh/id_rsa"),
            OpenRecord(2, "python3", 3, "", "/root/notes.txt"),
            OpenRecord(3, "pip", 4, "", "/usr/lib/python3/os.py"),
        )
    )
    vec = extract_candidates(bundle)
    assert vec.values["Root_DIR_Access"] == 2
    assert vec.values["Usr_DIR_Access"] == 1
    assert vec.values["hidden_path_access"] == 1
    assert vec.values["failed_open_count"] == 1


def test_tcp_port_features():
    bundle = make_bundle(
        tcp=(
            TcpRecord(1, "pip", "1.2.3.4", 443, TcpState.ESTABLISHED),
            TcpRecord(2, "python3", "5.6.7.8", 6667, TcpState.ESTABLISHED),
        )
    )
    vec = extract_candidates(bundle)
    assert vec.values["distinct_remote_ports"] == 2
    assert vec.values["non_standard_port_connections"] == 1
    assert vec.values["distinct_remote_ips"] == 2
    assert vec.values["established_connections"] == 2


def test_empty_activity_bundle_zeroes_activity_features():
    bundle = make_bundle(filetop=(), opens=(), tcp=(), syscalls=())
    vec = extract_candidates(bundle)
    for name, value in vec.values.items():
        if name in ("install_success",):
            assert value == 1.0
        elif name in ("direct_deps", "indirect_deps", "duration_ms"):
            continue
        else:
            assert value == 0.0, name


def test_extraction_requires_valid_bundle():
    bad = make_bundle(tcp=(TcpRecord(1, "p", "10.0.0.1", 99999, TcpState.FAILED),))
    with pytest.raises(ExtractionError):
        extract_candidates(bad)


def test_extraction_deterministic(small_corpus):
    bundle = small_corpus.bundles[0]
    assert extract_candidates(bundle) == extract_candidates(bundle)


def test_vector_keys_exactly_match_catalog(small_corpus):
    catalog = default_feature_catalog()
    vec = extract_candidates(small_corpus.bundles[0])
    assert tuple(vec.values) == catalog.names
    assert all(np.isfinite(v) for v in vec.values.values())


def test_syscall_category_tallies():
    bundle = make_bundle(
        syscalls=(
            ev("openat"), ev("read"), ev("socket"), ev("mmap"),
            ev("setresuid"), ev("fork"), ev("execve"), ev("ptrace"),
            ev("nanosleep"), ev("pipe2"), ev("unknown_call_xyz"),
            ev("read", errno="EIO"),
        )
    )
    vec = extract_candidates(bundle)
    assert vec.values["file_io"] == 3  # openat + 2 reads
    assert vec.values["network"] == 1
    assert vec.values["security"] == 2  # setresuid + ptrace
    assert vec.values["process_mgmt"] == 2  # fork + execve
    assert vec.values["memory"] == 1
    assert vec.values["ipc"] == 1
    assert vec.values["time"] == 1
    assert vec.values["error_total"] == 1
    assert vec.values["total_syscalls"] == 12
    assert vec.values["distinct_syscalls"] == 11
    assert vec.values["error_ratio"] == pytest.approx(1 / 12)
    assert vec.values["setuid_family_count"] == 1
    assert vec.values["fork_count"] == 1
    assert vec.values["execve_count"] == 1
    assert vec.values["ptrace_count"] == 1
    assert vec.values["socket_count"] == 1
    assert vec.values["mmap_count"] == 1


# --- min-max normalization -----------------------------------------------------

def test_minmax_simple_column():
    X = np.array([[0.0], [5.0], [10.0]])
    out, bounds = minmax_normalize(X, ("a",))
    assert out[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert bounds.as_dict() == {"a": (0.0, 10.0)}


def test_minmax_constant_column_maps_to_zero():
    X = np.array([[7.0], [7.0], [7.0]])
    out, _ = minmax_normalize(X, ("a",))
    assert np.all(out == 0.0)


def test_minmax_property_random_matrix(rng):
    X = rng.normal(size=(50, 10)) * rng.uniform(0.1, 100, size=10)
    out, bounds = minmax_normalize(X, tuple(f"f{i}" for i in range(10)))
    assert out.min() >= 0.0 and out.max() <= 1.0
    assert np.allclose(out.min(axis=0), 0.0)
    assert np.allclose(out.max(axis=0), 1.0)
    # identical transform on the same data
    assert np.array_equal(apply_minmax(X, bounds), out)
    # renormalizing normalized data is the identity
    out2, _ = minmax_normalize(out, bounds.feature_names)
    assert np.array_equal(out2, out)


def test_minmax_rejects_non_finite():
    with pytest.raises(ValueError):
        minmax_normalize(np.array([[1.0], [np.inf]]), ("a",))


def test_bounds_round_trip_dict():
    bounds = MinMaxBounds(("a", "b"), np.array([0.0, -1.0]), np.array([2.0, 4.0]))
    assert MinMaxBounds.from_dict(bounds.as_dict()).as_dict() == bounds.as_dict()


# --- corpus cleaning -------------------------------------------------------------

def test_duplicate_names_with_identical_traces_deduplicated():
    a = make_bundle()
    b = make_bundle()
    a = a.__class__(**{**a.__dict__, "package": a.package.__class__("reverse-shell", "1.0")})
    b = b.__class__(**{**b.__dict__, "package": b.package.__class__("reverse_shell", "1.0")})
    kept, report = clean_corpus([a, b])
    assert len(kept) == 1
    assert report.dropped_duplicates == (("reverse_shell", "reverse-shell"),)


def test_same_normalized_name_different_traces_both_kept():
    a = make_bundle()
    b = make_bundle(syscalls=seq("socket", "bind", "listen"))
    a = a.__class__(**{**a.__dict__, "package": a.package.__class__("demo-pkg", "1.0")})
    b = b.__class__(**{**b.__dict__, "package": b.package.__class__("demo_pkg", "1.0")})
    kept, _ = clean_corpus([a, b])
    assert len(kept) == 2


def test_incomplete_bundle_filtered():
    loaded = LoadedBundle(bundle=make_bundle(), source="x", missing_sections=("syscalls",))
    kept, report = clean_corpus([loaded])
    assert kept == []
    assert report.dropped_incomplete == ("demo",)


def test_device_paths_rewritten_to_canonical_root():
    assert standardize_path("/home/pi3/traces/x.log") == "/work/traces/x.log"
    assert standardize_path("/home/pi9/traces/x.log") == "/work/traces/x.log"
    assert standardize_path("/usr/lib/python3/os.py") == "/usr/lib/python3/os.py"
    bundle = make_bundle(
        opens=(OpenRecord(1, "pip", 3, "", "/home/pi3/pkg/setup.py"),)
    )
    kept, report = clean_corpus([bundle])
    assert kept[0].opens[0].path == "/work/pkg/setup.py"
    assert report.paths_rewritten == 1


def test_normalize_package_name_collapses_separators():
    assert normalize_package_name("Reverse-Shell") == "reverse-shell"
    assert normalize_package_name("reverse_shell") == "reverse-shell"
    assert normalize_package_name("reverse..shell") == "reverse-shell"


def test_vectors_to_matrix_labels(small_corpus):
    vectors = [extract_candidates(b) for b in small_corpus.bundles[:8]]
    X, y, names = vectors_to_matrix(vectors)
    assert X.shape == (8, 62)
    assert set(y) <= {0, 1}
    assert len(names) == 62
